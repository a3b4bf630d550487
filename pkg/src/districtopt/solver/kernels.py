"""Select the compiled simplex kernels when available, else the numpy fallback.

Set ``DISTRICTOPT_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("DISTRICTOPT_PURE_PYTHON", "") not in ("", "0"):
    from ._kernels_py import eta_btran, eta_ftran, price, ratio_test
    COMPILED = False
else:
    try:
        from ._kernels import eta_btran, eta_ftran, price, ratio_test
        COMPILED = True
    except ImportError:  # extension not built
        from ._kernels_py import eta_btran, eta_ftran, price, ratio_test
        COMPILED = False

__all__ = ["eta_ftran", "eta_btran", "price", "ratio_test", "COMPILED"]
