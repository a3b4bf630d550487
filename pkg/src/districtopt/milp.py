"""Solver-agnostic mixed-integer linear model container and MPS export."""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

#: coefficients smaller than this are dropped on normalization
COEF_EPS = 1e-12

LE, EQ, GE = "<=", "==", ">="
SENSES = (LE, EQ, GE)

Number = Union[int, float]


class ModelError(ValueError):
    """Raised on structurally invalid model input."""


class LinExpr:
    """Sparse affine expression ``sum(coef * var) + const`` over variable ids."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Mapping[int, float] | Iterable[tuple[int, float]] | None = None,
                 const: float = 0.0):
        self.terms: dict[int, float] = {}
        if terms is not None:
            items = terms.items() if isinstance(terms, Mapping) else terms
            for v, c in items:
                self.terms[v] = self.terms.get(v, 0.0) + float(c)
        self.const = float(const)

    @classmethod
    def var(cls, vid: int, coef: float = 1.0) -> "LinExpr":
        e = cls()
        e.terms[vid] = float(coef)
        return e

    def copy(self) -> "LinExpr":
        e = LinExpr()
        e.terms = dict(self.terms)
        e.const = self.const
        return e

    def add_term(self, vid: int, coef: float) -> "LinExpr":
        """In-place ``self += coef * var``; returns self."""
        self.terms[vid] = self.terms.get(vid, 0.0) + coef
        return self

    def iadd(self, other: "LinExpr", scale: float = 1.0) -> "LinExpr":
        for v, c in other.terms.items():
            self.terms[v] = self.terms.get(v, 0.0) + scale * c
        self.const += scale * other.const
        return self

    def normalized(self) -> "LinExpr":
        """Drop near-zero coefficients and order terms by variable id."""
        e = LinExpr()
        e.terms = {v: c for v, c in sorted(self.terms.items()) if abs(c) >= COEF_EPS}
        e.const = self.const
        return e

    def value(self, x) -> float:
        return self.const + sum(c * x[v] for v, c in self.terms.items())

    def shifted(self, offset: int) -> "LinExpr":
        e = LinExpr()
        e.terms = {v + offset: c for v, c in self.terms.items()}
        e.const = self.const
        return e

    def __add__(self, other):
        e = self.copy()
        if isinstance(other, LinExpr):
            return e.iadd(other)
        e.const += float(other)
        return e

    __radd__ = __add__

    def __sub__(self, other):
        e = self.copy()
        if isinstance(other, LinExpr):
            return e.iadd(other, -1.0)
        e.const -= float(other)
        return e

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self * -1.0

    def __mul__(self, k):
        if isinstance(k, LinExpr):
            raise TypeError("products of expressions are not linear")
        k = float(k)
        e = LinExpr()
        e.terms = {v: c * k for v, c in self.terms.items()}
        e.const = self.const * k
        return e

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def __eq__(self, other):  # structural equality, used by tests
        if not isinstance(other, LinExpr):
            return NotImplemented
        a, b = self.normalized(), other.normalized()
        return a.terms == b.terms and a.const == b.const

    __hash__ = None

    def __repr__(self):
        body = " + ".join(f"{c:g}*x{v}" for v, c in sorted(self.terms.items()))
        return f"LinExpr({body or '0'} + {self.const:g})"


@dataclass(frozen=True)
class Constraint:
    expr: LinExpr
    sense: str
    rhs: float
    name: str = ""


@dataclass
class Variable:
    name: str
    lb: float
    ub: float
    binary: bool


@dataclass
class MilpModel:
    """Minimization model: variables, linear rows and a linear objective."""

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    _names: set = field(default_factory=set, repr=False)

    @property
    def num_vars(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def add_variable(self, name: str, lb: float = 0.0, ub: float = math.inf,
                     binary: bool = False) -> int:
        lb, ub = float(lb), float(ub)
        if math.isnan(lb) or math.isnan(ub) or lb > ub:
            raise ModelError(f"variable {name!r}: invalid bounds [{lb}, {ub}]")
        if binary and (lb < 0.0 or ub > 1.0):
            raise ModelError(f"binary variable {name!r} must have bounds within [0, 1]")
        self.variables.append(Variable(name, lb, ub, bool(binary)))
        return len(self.variables) - 1

    def add_constraint(self, expr: LinExpr, sense: str, rhs: Number = 0.0,
                       name: str = "") -> int:
        """Add ``expr (sense) rhs``; a constant in ``expr`` is moved to the right-hand side."""
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        e = expr.normalized()
        if not e.terms:
            raise ModelError(f"constraint {name!r} has an empty expression")
        n = self.num_vars
        for v in e.terms:
            if not 0 <= v < n:
                raise ModelError(f"constraint {name!r} references unknown variable {v}")
        rhs = float(rhs) - e.const
        e.const = 0.0
        if not math.isfinite(rhs):
            raise ModelError(f"constraint {name!r} has non-finite right-hand side")
        if name:
            if name in self._names:
                logger.warning("duplicate constraint name %r", name)
            self._names.add(name)
        self.constraints.append(Constraint(e, sense, rhs, name))
        return len(self.constraints) - 1

    def set_objective(self, expr: LinExpr) -> None:
        e = expr.normalized()
        for v in e.terms:
            if not 0 <= v < self.num_vars:
                raise ModelError(f"objective references unknown variable {v}")
        self.objective = e

    def binaries(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.binary]

    def append(self, other: "MilpModel") -> int:
        """Merge ``other`` into this model; returns the variable offset applied."""
        off = self.num_vars
        self.variables.extend(Variable(v.name, v.lb, v.ub, v.binary) for v in other.variables)
        for c in other.constraints:
            self.constraints.append(Constraint(c.expr.shifted(off), c.sense, c.rhs, c.name))
        self._names |= other._names
        self.objective = self.objective + other.objective.shifted(off)
        return off

    def arrays(self):
        """Return ``(c, c0, A, row_lo, row_hi, lb, ub, is_binary)`` with ``A`` in CSR form."""
        n, m = self.num_vars, self.num_constraints
        c = np.zeros(n)
        for v, k in self.objective.terms.items():
            c[v] += k
        rows, cols, vals = [], [], []
        lo = np.empty(m)
        hi = np.empty(m)
        for i, con in enumerate(self.constraints):
            for v, k in con.expr.terms.items():
                rows.append(i)
                cols.append(v)
                vals.append(k)
            lo[i] = con.rhs if con.sense in (EQ, GE) else -np.inf
            hi[i] = con.rhs if con.sense in (EQ, LE) else np.inf
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(m, n))
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        isbin = np.array([v.binary for v in self.variables], dtype=bool)
        return c, self.objective.const, A, lo, hi, lb, ub, isbin


def check_feasibility(model: MilpModel, x, feas_tol: float = 1e-7, int_tol: float = 1e-6):
    """List violated bounds, rows and integrality conditions of ``x``.

    Evaluates the model rows directly from their expressions; shares no code
    with the solver.
    """
    out = []
    for i, v in enumerate(model.variables):
        xi = float(x[i])
        if xi < v.lb - feas_tol or xi > v.ub + feas_tol:
            out.append(f"bound {v.name}: {xi} not in [{v.lb}, {v.ub}]")
        if v.binary and min(abs(xi), abs(xi - 1.0)) > int_tol:
            out.append(f"integrality {v.name}: {xi}")
    for i, con in enumerate(model.constraints):
        act = sum(k * float(x[v]) for v, k in con.expr.terms.items())
        tol = feas_tol * max(1.0, abs(con.rhs))
        bad = ((con.sense == LE and act > con.rhs + tol)
               or (con.sense == GE and act < con.rhs - tol)
               or (con.sense == EQ and abs(act - con.rhs) > tol))
        if bad:
            out.append(f"row {con.name or i}: {act} {con.sense} {con.rhs}")
    return out


# --- MPS -------------------------------------------------------------------

def _num(x: float) -> str:
    """Shortest decimal text for ``x`` that fits the 12-character MPS field."""
    if not math.isfinite(x):
        raise ModelError(f"non-finite coefficient {x!r}")
    if x == 0:
        return "0"
    s = repr(float(x))
    if len(s) <= 12:
        return s
    for p in range(12, 0, -1):
        s = f"{x:.{p}g}"
        if len(s) <= 12:
            return s
    raise ModelError(f"cannot format {x!r}")  # pragma: no cover


def _line(f1: str, f2: str, f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    # fixed-format fields start at columns 2, 5, 15, 25, 40, 50
    s = f" {f1:<2} {f2:<8}"
    if f3 or f4:
        s += f"  {f3:<8}  {f4:>12}"
    if f5 or f6:
        s += f"   {f5:<8}  {f6:>12}"
    return s.rstrip()


def _marker(k: int, kind: str) -> str:
    return f"    MRK{k:05d}  'MARKER'{' ' * 17}{kind}"


def column_name(j: int) -> str:
    return f"C{j:07d}"


def row_name(i: int) -> str:
    return f"R{i:07d}"


def write_mps(model: MilpModel) -> bytes:
    """Serialize ``model`` as fixed-format MPS.

    Columns and rows get positional 8-character names (``C0000000``,
    ``R0000000``) so the output is valid under strict fixed-format readers.
    """
    if model.num_vars > 10_000_000 or model.num_constraints > 10_000_000:
        raise ModelError("model too large for 8-character MPS names")
    for k in model.objective.terms.values():
        _num(k)
    buf = io.StringIO()
    w = lambda s: buf.write(s + "\n")  # noqa: E731
    w(f"NAME          {model.name[:8] if model.name else 'MODEL'}")
    w("ROWS")
    w(" N  COST")
    for i, con in enumerate(model.constraints):
        w(f" {'L' if con.sense == LE else 'G' if con.sense == GE else 'E'}  {row_name(i)}")

    if model.num_vars:
        cols: list[list[tuple[str, float]]] = [[] for _ in range(model.num_vars)]
        for v, k in sorted(model.objective.terms.items()):
            cols[v].append(("COST", k))
        for i, con in enumerate(model.constraints):
            for v, k in sorted(con.expr.terms.items()):
                cols[v].append((row_name(i), k))
        w("COLUMNS")
        in_int = False
        marker = 0
        for j, var in enumerate(model.variables):
            if var.binary != in_int:
                kind = "'INTORG'" if var.binary else "'INTEND'"
                w(_marker(marker, kind))
                marker += 1
                in_int = var.binary
            entries = cols[j] or [("COST", 0.0)]
            for rname, k in entries:
                w(_line("", column_name(j), rname, _num(k)))
        if in_int:
            w(_marker(marker, "'INTEND'"))
    else:
        w("COLUMNS")

    w("RHS")
    if model.objective.const != 0:
        w(_line("", "RHS", "COST", _num(-model.objective.const)))
    for i, con in enumerate(model.constraints):
        if con.rhs != 0:
            w(_line("", "RHS", row_name(i), _num(con.rhs)))
    w("RANGES")
    w("BOUNDS")
    for j, var in enumerate(model.variables):
        name = column_name(j)
        lb, ub = var.lb, var.ub
        if var.binary and lb == 0 and ub == 1:
            w(_line("BV", "BND", name, "1"))
        elif lb == ub:
            w(_line("FX", "BND", name, _num(lb)))
        elif lb == -math.inf and ub == math.inf:
            w(_line("FR", "BND", name))
        else:
            if lb == -math.inf:
                w(_line("MI", "BND", name))
            elif lb != 0 or var.binary or ub < 0:
                w(_line("LO", "BND", name, _num(lb)))
            if ub != math.inf:
                w(_line("UP", "BND", name, _num(ub)))
    w("ENDATA")
    return buf.getvalue().encode("ascii")
