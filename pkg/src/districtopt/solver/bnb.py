"""Best-first branch-and-bound over binary variables."""
from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from scipy import sparse

from ..milp import MilpModel, check_feasibility
from .cuts import gmi_cuts
from .simplex import BASIC, INFEASIBLE, OPTIMAL, UNBOUNDED, Basis, LpEngine, LpResult

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-7
    int_tol: float = 1e-6
    rel_gap: float = 1e-4
    time_limit_s: float | None = None
    node_limit: int | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("feas_tol", "int_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rel_gap < 0:
            raise ValueError("rel_gap must be non-negative")


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class MilpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT = "time_limit"
    NODE_LIMIT = "node_limit"


@dataclass
class LpSolution:
    status: LpStatus
    values: np.ndarray | None
    objective: float
    iterations: int = 0


@dataclass
class MilpSolution:
    status: MilpStatus
    values: np.ndarray | None
    objective: float
    bound: float
    gap: float
    node_count: int
    lp_iterations: int = 0
    wall_time_s: float = 0.0
    bound_trace: list[float] = field(default_factory=list, repr=False)

    @property
    def has_incumbent(self) -> bool:
        return self.values is not None


def relative_gap(objective: float, bound: float) -> float:
    return (objective - bound) / max(abs(objective), 1.0)


def _engine(model: MilpModel, config: SolverConfig):
    c, c0, A, lo, hi, lb, ub, isbin = model.arrays()
    eng = LpEngine(c, A, lo, hi, feas_tol=min(config.feas_tol, 1e-9))
    return eng, c0, lb, ub, isbin


def solve_lp(model: MilpModel, config: SolverConfig | None = None) -> LpSolution:
    """Solve the continuous relaxation of ``model`` (binaries relaxed to [0, 1])."""
    config = config or SolverConfig()
    eng, c0, lb, ub, _ = _engine(model, config)
    res = eng.solve(lb, ub)
    if res.status == OPTIMAL:
        return LpSolution(LpStatus.OPTIMAL, res.x, res.objective + c0, res.iterations)
    status = LpStatus.INFEASIBLE if res.status == INFEASIBLE else LpStatus.UNBOUNDED
    obj = np.inf if status == LpStatus.INFEASIBLE else -np.inf
    return LpSolution(status, None, obj, res.iterations)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    basis: object = field(compare=False)


class _Search:
    def __init__(self, model: MilpModel, config: SolverConfig):
        self.model = model
        self.config = config
        c, self.c0, A, self.row_lo, self.row_hi, self.lb0, self.ub0, self.isbin = model.arrays()
        self.c = c
        self.A = A
        self.eng = LpEngine(c, A, self.row_lo, self.row_hi, feas_tol=min(config.feas_tol, 1e-9))
        self.bins = np.flatnonzero(self.isbin)
        self.lp_iters = 0
        self.inc_x: np.ndarray | None = None
        self.inc_obj = np.inf
        self.cut_count = 0

    def add_cuts(self, cuts, basis: Basis) -> Basis:
        """Append ``coef @ x >= rhs`` rows; returns ``basis`` extended with the new slacks."""
        k = len(cuts)
        rows = sparse.csr_matrix(np.array([c.coef for c in cuts]))
        self.A = sparse.vstack([self.A, rows], format="csr")
        self.row_lo = np.concatenate([self.row_lo, [c.rhs for c in cuts]])
        self.row_hi = np.concatenate([self.row_hi, np.full(k, np.inf)])
        old_m = self.eng.m
        n = self.eng.n
        self.eng = LpEngine(self.c, self.A, self.row_lo, self.row_hi, feas_tol=self.eng.tol)
        self.cut_count += k
        head = np.concatenate([basis.head, np.arange(n + old_m, n + old_m + k)])
        status = np.concatenate([basis.status, np.full(k, BASIC, dtype=basis.status.dtype)])
        return Basis(head, status)

    def lp(self, lb, ub, basis=None) -> LpResult:
        res = self.eng.solve(lb, ub, basis)
        self.lp_iters += res.iterations
        return res

    def fractional(self, x):
        xb = x[self.bins]
        frac = np.abs(xb - np.round(xb))
        return frac > self.config.int_tol, xb

    def try_incumbent(self, x, lb, ub, basis) -> bool:
        """Fix rounded binaries, re-solve the LP and accept if feasible and better."""
        lb = lb.copy()
        ub = ub.copy()
        r = np.round(x[self.bins])
        lb[self.bins] = r
        ub[self.bins] = r
        res = self.lp(lb, ub, basis)
        candidates = []
        if res.status == OPTIMAL:
            xp = res.x.copy()
            xp[self.bins] = r
            candidates.append(xp)
        xr = x.copy()
        xr[self.bins] = r
        candidates.append(xr)
        cfg = self.config
        for xc in candidates:
            obj = float(self.c @ xc) + self.c0
            if obj >= self.inc_obj:
                continue
            if check_feasibility(self.model, xc, cfg.feas_tol, cfg.int_tol):
                logger.debug("rejected numerically infeasible candidate")
                continue
            self.inc_x, self.inc_obj = xc, obj
            return True
        return False

    def prunable(self, bound: float) -> bool:
        if self.inc_x is None:
            return False
        return self.inc_obj - bound <= self.config.rel_gap * max(abs(self.inc_obj), 1.0)


def solve_milp(model: MilpModel, config: SolverConfig | None = None,
               hint: Mapping[int, float] | np.ndarray | None = None) -> MilpSolution:
    """Branch-and-bound with most-fractional branching and best-first node order.

    ``hint`` (values for some or all variables) is rounded on the binaries;
    if the resulting fixing is LP-feasible and integral it seeds the incumbent.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    s = _Search(model, config)
    bins = s.bins
    trace: list[float] = []

    def finish(status, bound, nodes):
        if s.inc_x is None:
            obj, gap = (np.inf, np.inf)
        else:
            obj = s.inc_obj
            bound = min(bound, obj)
            gap = relative_gap(obj, bound)
        return MilpSolution(status, s.inc_x, obj, bound, gap, nodes, s.lp_iters,
                            time.perf_counter() - t0, trace)

    root = s.lp(s.lb0, s.ub0)
    if root.status == INFEASIBLE:
        return finish(MilpStatus.INFEASIBLE, np.inf, 1)
    if root.status == UNBOUNDED:
        return MilpSolution(MilpStatus.UNBOUNDED, None, -np.inf, -np.inf, np.inf, 1,
                            s.lp_iters, time.perf_counter() - t0, trace)

    if hint is not None and bins.size:
        _apply_hint(s, hint, root)
    if bins.size:
        root = _root_cuts(s, root)
        if root.status == OPTIMAL and s.fractional(root.x)[0].any():
            _dive(s, s.lb0, s.ub0, root)

    heap: list[_Node] = []
    seq = 0
    nodes = 0
    gap_pruned = np.inf  # lowest bound among nodes dropped by the gap test only
    pending: tuple | None = (s.lb0, s.ub0, root, -np.inf)

    while True:
        if pending is not None:
            lb, ub, res, parent_bound = pending
            pending = None
            nodes += 1
            if res.status == OPTIMAL:
                # a child LP cannot be below its parent; clamp round-off
                obj = max(res.objective + s.c0, parent_bound)
                if s.inc_x is None or obj < s.inc_obj:
                    fr, xb = s.fractional(res.x)
                    if not fr.any():
                        s.try_incumbent(res.x, lb, ub, res.basis)
                    elif s.prunable(obj):
                        gap_pruned = min(gap_pruned, obj)
                    else:
                        dist = np.abs(xb - np.floor(xb) - 0.5)
                        dist[~fr] = np.inf
                        k = int(np.argmin(dist))  # ties resolve to the lowest id
                        v = bins[k]
                        for val in (0.0, 1.0):
                            clb, cub = lb.copy(), ub.copy()
                            clb[v] = cub[v] = val
                            heapq.heappush(heap, _Node(obj, seq, clb, cub, res.basis))
                            seq += 1
        # global bound and termination
        open_bound = heap[0].bound if heap else np.inf
        glob = min(open_bound, gap_pruned)
        if s.inc_x is not None:
            glob = min(glob, s.inc_obj)
        trace.append(glob)
        if not heap:
            break
        if s.inc_x is not None and s.prunable(open_bound):
            gap_pruned = min(gap_pruned, open_bound)
            break
        if config.time_limit_s is not None and time.perf_counter() - t0 > config.time_limit_s:
            return finish(MilpStatus.TIME_LIMIT, glob, nodes)
        if config.node_limit is not None and nodes >= config.node_limit:
            return finish(MilpStatus.NODE_LIMIT, glob, nodes)
        node = heapq.heappop(heap)
        if s.inc_x is not None and node.bound >= s.inc_obj:
            continue
        if s.prunable(node.bound):
            gap_pruned = min(gap_pruned, node.bound)
            continue
        pending = (node.lb, node.ub, s.lp(node.lb, node.ub, node.basis), node.bound)

    if s.inc_x is None:
        return finish(MilpStatus.INFEASIBLE, np.inf, nodes)
    return finish(MilpStatus.OPTIMAL, gap_pruned, nodes)


CUT_ROUNDS = 20
CUTS_PER_ROUND = 50


def _root_cuts(s: _Search, root: LpResult) -> LpResult:
    """Strengthen the root relaxation with rounds of Gomory cuts."""
    stalls = 0
    limit = max(20, 2 * s.eng.m)
    for _ in range(CUT_ROUNDS):
        if root.status != OPTIMAL or s.cut_count >= limit:
            break
        obj = root.objective + s.c0
        if not s.fractional(root.x)[0].any() or s.prunable(obj):
            break
        cuts = gmi_cuts(s.eng, root.basis, s.A, s.row_lo, s.row_hi, s.lb0, s.ub0, s.isbin,
                        root.x, s.config.int_tol, CUTS_PER_ROUND)
        if not cuts:
            break
        basis = s.add_cuts(cuts, root.basis)
        new = s.lp(s.lb0, s.ub0, basis)
        if new.status != OPTIMAL:
            return new
        gain = new.objective + s.c0 - obj
        root = new
        stalls = stalls + 1 if gain < 1e-4 * max(1.0, abs(obj)) else 0
        if stalls >= 2:
            break
    return root


def _dive(s: _Search, lb, ub, res: LpResult, max_lps: int | None = None) -> bool:
    """Fix near-integral binaries step by step until the LP turns integral."""
    lb, ub = lb.copy(), ub.copy()
    max_lps = max_lps or 2 * s.bins.size + 10
    for _ in range(max_lps):
        fr, xb = s.fractional(res.x)
        if not fr.any():
            return s.try_incumbent(res.x, lb, ub, res.basis)
        if res.objective + s.c0 >= s.inc_obj:
            return False
        dist = np.abs(xb - np.round(xb))
        # fix everything already integral plus the least fractional binary
        pick = np.flatnonzero(fr)
        k = pick[np.argmin(dist[pick])]
        v = s.bins[k]
        val = float(np.round(xb[k]))
        for trial in (val, 1.0 - val):
            tlb, tub = lb.copy(), ub.copy()
            tlb[v] = tub[v] = trial
            nxt = s.lp(tlb, tub, res.basis)
            if nxt.status == OPTIMAL:
                lb, ub, res = tlb, tub, nxt
                break
        else:
            return False
    return False


def _apply_hint(s: _Search, hint, root: LpResult) -> None:
    if isinstance(hint, Mapping):
        items = hint.items()
    else:
        arr = np.asarray(hint, float)
        items = ((i, arr[i]) for i in range(arr.size) if np.isfinite(arr[i]))
    lb, ub = s.lb0.copy(), s.ub0.copy()
    binset = set(s.bins.tolist())
    any_fixed = False
    for v, val in items:
        v = int(v)
        if v in binset and val is not None and np.isfinite(val):
            r = float(round(min(max(val, 0.0), 1.0)))
            if r < s.lb0[v] or r > s.ub0[v]:
                return
            lb[v] = ub[v] = r
            any_fixed = True
    if not any_fixed:
        return
    res = s.lp(lb, ub, root.basis)
    if res.status != OPTIMAL:
        logger.debug("hint infeasible, ignored")
        return
    fr, _ = s.fractional(res.x)
    if fr.any():
        return
    s.try_incumbent(res.x, lb, ub, res.basis)


def warm_start(model: MilpModel, hint, config: SolverConfig | None = None) -> MilpSolution:
    """``solve_milp`` seeded with ``hint``; the optimality contract is unchanged."""
    return solve_milp(model, config, hint)
