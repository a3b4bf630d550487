"""District graph: carrier-typed nodes, components wired to them, and validation."""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Optional


class Carrier(str, enum.Enum):
    ELECTRICITY = "electricity"
    HEAT = "heat"
    GAS = "gas"


@dataclass(frozen=True)
class Node:
    id: str
    carrier: Carrier


@dataclass(frozen=True)
class ComponentRef:
    id: str
    spec: Any  # one of the ``components.params`` dataclasses
    input_nodes: tuple[str, ...] = ()
    output_nodes: tuple[str, ...] = ()
    owner: Optional[str] = None

    @property
    def category(self) -> str:
        return self.spec.category


@dataclass(frozen=True)
class Network:
    nodes: tuple[Node, ...] = ()
    components: tuple[ComponentRef, ...] = ()

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def component(self, cid: str) -> ComponentRef:
        for c in self.components:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def without(self, *cids: str) -> "Network":
        """Copy of the network with the named components removed."""
        return Network(self.nodes, tuple(c for c in self.components if c.id not in cids))


@dataclass(frozen=True)
class HorizonSpec:
    steps: int
    dt_hours: float

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"horizon steps must be a positive integer, got {self.steps!r}")
        if not self.dt_hours > 0:
            raise ValueError(f"dt_hours must be positive, got {self.dt_hours!r}")


FATAL, WARNING = "fatal", "warning"


@dataclass(frozen=True)
class Issue:
    severity: str
    subject: str
    message: str

    def __str__(self):
        return f"[{self.severity}] {self.subject}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def fatal(self) -> bool:
        return any(i.severity == FATAL for i in self.issues)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __iter__(self):
        return iter(self.issues)

    def __len__(self):
        return len(self.issues)


class InvalidNetworkError(ValueError):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(str(i) for i in report.issues if i.severity == FATAL))


# categories whose output can feed a node (directly or by discharging)
_SUPPLIERS = {"res", "converter", "cogen", "p2g", "battery", "thermal_storage", "ev",
              "generator", "grid_tie"}


def validate_network(net: Network) -> ValidationReport:
    """Check structure and carrier signatures; never raises."""
    issues: list[Issue] = []
    ids: dict[str, Node] = {}
    for n in net.nodes:
        if n.id in ids:
            issues.append(Issue(FATAL, n.id, "duplicate node id"))
        ids[n.id] = n
        if not isinstance(n.carrier, Carrier):
            issues.append(Issue(FATAL, n.id, f"unknown carrier {n.carrier!r}"))
    seen: set[str] = set()
    touched: set[str] = set()
    consumers_at: dict[str, list[str]] = defaultdict(list)
    suppliers_at: dict[str, list[str]] = defaultdict(list)
    for comp in net.components:
        if comp.id in seen:
            issues.append(Issue(FATAL, comp.id, "duplicate component id"))
        seen.add(comp.id)
        dangling = False
        for direction, refs in (("input", comp.input_nodes), ("output", comp.output_nodes)):
            if len(set(refs)) != len(refs):
                issues.append(Issue(FATAL, comp.id, f"parallel {direction} edges to the same node"))
            for nid in refs:
                if nid not in ids:
                    issues.append(Issue(FATAL, comp.id, f"{direction} node {nid!r} does not exist"))
                    dangling = True
                else:
                    touched.add(nid)
        try:
            sig_in, sig_out = comp.spec.signature()
        except AttributeError:
            issues.append(Issue(FATAL, comp.id, f"unknown component spec {type(comp.spec).__name__}"))
            continue
        try:
            comp.spec.check()
        except ValueError as exc:
            issues.append(Issue(FATAL, comp.id, str(exc)))
        if dangling:
            continue
        for direction, refs, sig in (("input", comp.input_nodes, sig_in),
                                     ("output", comp.output_nodes, sig_out)):
            got = [ids[r].carrier for r in refs]
            if sorted(got) != sorted(sig):
                want = ", ".join(c.value for c in sig) or "none"
                have = ", ".join(c.value for c in got) or "none"
                issues.append(Issue(FATAL, comp.id,
                                    f"carrier mismatch on {direction} nodes: expected [{want}], got [{have}]"))
        if comp.category in ("consumer", "ev"):
            for nid in comp.input_nodes:
                consumers_at[nid].append(comp.id)
        if comp.category in _SUPPLIERS:
            for nid in comp.output_nodes:
                suppliers_at[nid].append(comp.id)
    for nid in ids:
        if nid not in touched:
            issues.append(Issue(FATAL, nid, "node is not connected to any component"))
    for nid, cons in consumers_at.items():
        if not suppliers_at.get(nid):
            issues.append(Issue(FATAL, nid, f"consumers {sorted(cons)} have no potential supplier"))
    return ValidationReport(tuple(issues))


@dataclass(frozen=True)
class NodeIncidence:
    inputs: dict = field(default_factory=dict)   # node id -> component ids drawing from it
    outputs: dict = field(default_factory=dict)  # node id -> component ids injecting into it


def incidence(net: Network) -> NodeIncidence:
    """Per node, the components that list it as input and as output node."""
    report = validate_network(net)
    if report.fatal:
        raise InvalidNetworkError(report)
    ins: dict[str, list[str]] = {n.id: [] for n in net.nodes}
    outs: dict[str, list[str]] = {n.id: [] for n in net.nodes}
    for comp in net.components:
        for nid in comp.input_nodes:
            ins[nid].append(comp.id)
        for nid in comp.output_nodes:
            outs[nid].append(comp.id)
    return NodeIncidence(ins, outs)
