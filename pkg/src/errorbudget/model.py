"""Hierarchical cost/error model for approximation-tolerance budgeting.

A compiled program is represented as a tree of subroutine sets.  A composite
node decomposes into children, where each child edge carries a multiplicity:
how many instances of the child one instance of the parent invokes, possibly
as a function of the parent's own decomposition tolerance (e.g. a phase
estimation loop running ``c / eps`` times).  Leaves are batches of identical
primitive gates whose synthesis cost grows like ``log2(1/eps)`` and whose
error contribution is ``count * eps``.

Evaluating the tree at a tolerance assignment yields the total primitive gate
count (:func:`total_cost`) and a composable upper bound on the overall
operator-norm error (:func:`total_error`).  :func:`expand_flat` materialises
the fully unrolled instance list and serves as the brute-force oracle for the
recursive evaluators.  :class:`CompiledModel` is an array-form evaluator for
the hot loops of the optimizer.

Tolerance slots are plain string identifiers.  A :class:`ParameterBinding`
partitions the slots appearing in a tree into named groups; the optimization
variable assigns one value per group, so the binding controls the granularity
of the optimization problem without changing the tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

#: Hard floor for tolerances; far below any physically relevant value, it only
#: guards log2(1/eps) and 1/eps evaluations against overflow.
EPSILON_FLOOR = 1e-30

#: Largest representable tolerance strictly below 1.
EPSILON_CEILING = math.nextafter(1.0, 0.0)


class ModelError(ValueError):
    """Base class for model construction and evaluation failures."""


class EvaluationError(ModelError):
    """Raised when a model cannot be evaluated at the given tolerances."""


class ExpansionLimitError(ModelError):
    """Raised when a flat expansion would exceed the instance budget."""


class Rounding(Enum):
    """How a multiplicity value is turned into an instance count."""

    CONTINUOUS = "continuous"
    CEIL = "ceil"


@dataclass(frozen=True)
class Multiplicity:
    """Instance count of a child set, ``coefficient * eps**(-exponent)``.

    ``eps`` is the parent node's own decomposition tolerance.  With
    ``exponent == 0`` the count is constant and the parent tolerance is not
    consulted.  ``CEIL`` rounding yields integer counts (>= 1 for positive
    coefficients) and is required for flat expansions and reported costs;
    ``CONTINUOUS`` keeps the optimization landscape smooth.
    """

    coefficient: float
    exponent: float = 0.0
    rounding: Rounding = Rounding.CONTINUOUS

    def __call__(self, eps: float | None) -> float:
        if self.exponent == 0.0:
            value = float(self.coefficient)
        else:
            if eps is None:
                raise EvaluationError(
                    "multiplicity depends on a parent tolerance but none is bound"
                )
            if eps <= 0.0:
                raise EvaluationError(f"tolerance must be positive, got {eps}")
            value = self.coefficient * eps ** -self.exponent
        if self.rounding is Rounding.CEIL:
            value = float(math.ceil(value))
        return value


@dataclass(frozen=True)
class LeafCost:
    """Cost/error law of a batch of ``count`` identical primitive gates.

    Each primitive synthesised to tolerance ``eps`` costs
    ``gates_per_unit_logeps * log2(1/eps) + additive_offset`` gates (clamped
    at zero, so tolerances >= 1 synthesise for free) and contributes ``eps``
    to the composed error.
    """

    count: float
    gates_per_unit_logeps: float
    additive_offset: float = 0.0

    def unit_cost(self, eps: float) -> float:
        if eps <= 0.0:
            raise EvaluationError(f"tolerance must be positive, got {eps}")
        return max(
            0.0, self.gates_per_unit_logeps * math.log2(1.0 / eps) + self.additive_offset
        )

    def cost(self, eps: float) -> float:
        return self.count * self.unit_cost(eps)

    def error(self, eps: float) -> float:
        return self.count * eps


class NodeKind(Enum):
    COMPOSITE = "composite"
    LEAF = "leaf"


@dataclass(frozen=True)
class ChildEdge:
    """A child node together with the multiplicity of its invocation."""

    multiplicity: Multiplicity
    node: "BudgetNode"


@dataclass(frozen=True)
class BudgetNode:
    """One subroutine set in the decomposition tree.

    ``self_error_slot`` names the tolerance this node consumes for its own
    decomposition step: for a composite, the error incurred even if all
    children were implemented exactly; for a leaf, the synthesis tolerance of
    its primitives.  Constant-multiplicity composites that introduce no error
    of their own may leave it unset.
    """

    name: str
    kind: NodeKind
    self_error_slot: str | None = None
    children: tuple[ChildEdge, ...] = ()
    leaf_cost: LeafCost | None = None

    @staticmethod
    def leaf(name: str, slot: str | None, cost: LeafCost) -> "BudgetNode":
        return BudgetNode(name=name, kind=NodeKind.LEAF, self_error_slot=slot, leaf_cost=cost)

    @staticmethod
    def composite(
        name: str,
        self_error_slot: str | None,
        children: Iterable[tuple[Multiplicity, "BudgetNode"]],
    ) -> "BudgetNode":
        edges = tuple(ChildEdge(mult, node) for mult, node in children)
        return BudgetNode(
            name=name, kind=NodeKind.COMPOSITE, self_error_slot=self_error_slot, children=edges
        )

    def walk(self) -> Iterator["BudgetNode"]:
        """Yield this node and all descendants, depth first."""
        yield self
        for edge in self.children:
            yield from edge.node.walk()


@dataclass(frozen=True)
class ParameterBinding:
    """Partition of a tree's tolerance slots into named groups.

    The optimization variable has one entry per group, in group order; every
    slot of group ``k`` receives entry ``k``.  Merging groups coarsens the
    optimization problem without touching the tree.
    """

    groups: tuple[tuple[str, tuple[str, ...]], ...]

    @classmethod
    def from_dict(cls, groups: dict[str, Sequence[str]]) -> "ParameterBinding":
        return cls(tuple((name, tuple(slots)) for name, slots in groups.items()))

    @property
    def dimension(self) -> int:
        return len(self.groups)

    @property
    def group_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.groups)

    def slot_index(self) -> dict[str, int]:
        """Map each bound slot to the index of its group.

        Raises :class:`ModelError` if a slot appears in more than one group.
        """
        index: dict[str, int] = {}
        for k, (name, slots) in enumerate(self.groups):
            for slot in slots:
                if slot in index:
                    raise ModelError(f"slot {slot!r} bound by more than one group")
                index[slot] = k
        return index

    def merged(self, first: str, second: str, name: str | None = None) -> "ParameterBinding":
        """Return a coarser binding with groups ``first`` and ``second`` merged."""
        merged_name = name or first
        out: list[tuple[str, tuple[str, ...]]] = []
        collected: tuple[str, ...] = ()
        for gname, slots in self.groups:
            if gname in (first, second):
                collected = collected + slots
            else:
                out.append((gname, slots))
        if not collected:
            raise ModelError(f"no such groups: {first!r}, {second!r}")
        out.insert(min(self.group_names.index(first), self.group_names.index(second)),
                   (merged_name, collected))
        return ParameterBinding(tuple(out))


@dataclass(frozen=True)
class ToleranceVector:
    """Strictly positive tolerances, one per binding group, each in (0, 1)."""

    values: tuple[float, ...]
    floor: float = EPSILON_FLOOR

    def __post_init__(self) -> None:
        if self.floor <= 0.0:
            raise ModelError(f"tolerance floor must be positive, got {self.floor}")
        for v in self.values:
            if not (self.floor <= v < 1.0):
                raise ModelError(
                    f"tolerance entries must lie in [{self.floor}, 1), got {v}"
                )

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_model`; ``ok`` iff no violations."""

    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _theta_array(theta: Sequence[float] | ToleranceVector | np.ndarray) -> np.ndarray:
    values = getattr(theta, "values", theta)
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise EvaluationError(f"tolerance vector must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise EvaluationError("tolerance vector contains non-finite entries")
    if np.any(arr <= 0.0):
        raise EvaluationError("tolerance entries must be strictly positive")
    if np.any(arr >= 1.0):
        raise EvaluationError("tolerance entries must be strictly below 1")
    return arr


def _slot_values(binding: ParameterBinding, theta: np.ndarray) -> dict[str, float]:
    if len(theta) != binding.dimension:
        raise EvaluationError(
            f"tolerance vector has {len(theta)} entries, binding has {binding.dimension} groups"
        )
    index = binding.slot_index()
    return {slot: float(theta[k]) for slot, k in index.items()}


def validate_model(tree: BudgetNode, binding: ParameterBinding) -> ValidationReport:
    """Structural well-formedness check of a tree/binding pair.

    Never raises; all problems are reported as human-readable violations so
    callers (and the CLI) can surface them together.
    """
    violations: list[str] = []
    referenced: set[str] = set()
    seen: set[int] = set()

    def visit(node: BudgetNode, path: str, stack: tuple[int, ...]) -> None:
        if id(node) in stack:
            violations.append(f"{path}: cycle detected")
            return
        seen.add(id(node))
        if node.self_error_slot is not None:
            referenced.add(node.self_error_slot)
        if node.kind is NodeKind.LEAF:
            if node.leaf_cost is None:
                violations.append(f"{path}: leaf without a cost form")
            else:
                lc = node.leaf_cost
                if lc.count < 0:
                    violations.append(f"{path}: negative leaf count {lc.count}")
                if lc.gates_per_unit_logeps < 0:
                    violations.append(f"{path}: negative gates-per-log factor")
                if lc.additive_offset < 0:
                    violations.append(f"{path}: negative additive offset")
                if lc.count > 0 and node.self_error_slot is None:
                    violations.append(f"{path}: leaf with gates but no tolerance slot")
            if node.children:
                violations.append(f"{path}: leaf with children")
            return
        if node.leaf_cost is not None:
            violations.append(f"{path}: composite with a leaf cost form")
        if not node.children:
            violations.append(f"{path}: empty composite")
        for edge in node.children:
            mult = edge.multiplicity
            if mult.coefficient <= 0:
                violations.append(
                    f"{path}/{edge.node.name}: non-positive multiplicity coefficient"
                )
            if mult.exponent < 0:
                violations.append(f"{path}/{edge.node.name}: negative multiplicity exponent")
            if mult.exponent != 0 and node.self_error_slot is None:
                violations.append(
                    f"{path}/{edge.node.name}: multiplicity depends on the tolerance of "
                    f"{node.name!r}, which has no slot"
                )
            visit(edge.node, f"{path}/{edge.node.name}", stack + (id(node),))

    visit(tree, tree.name, ())

    names = [name for name, _ in binding.groups]
    for name in names:
        if names.count(name) > 1:
            violations.append(f"binding: duplicate group name {name!r}")
            break
    bound: set[str] = set()
    for name, slots in binding.groups:
        for slot in slots:
            if slot in bound:
                violations.append(f"binding: slot {slot!r} doubly bound")
            bound.add(slot)
            if slot not in referenced:
                violations.append(f"binding: group {name!r} binds unknown slot {slot!r}")
    for slot in sorted(referenced - bound):
        violations.append(f"binding: slot {slot!r} unbound")

    return ValidationReport(tuple(violations))


def _node_cost(node: BudgetNode, slots: dict[str, float]) -> float:
    eps = slots.get(node.self_error_slot) if node.self_error_slot else None
    if node.kind is NodeKind.LEAF:
        if node.leaf_cost is None:
            raise EvaluationError(f"leaf {node.name!r} has no cost form")
        if node.leaf_cost.count == 0:
            return 0.0
        if eps is None:
            raise EvaluationError(f"leaf {node.name!r} has no bound tolerance slot")
        return node.leaf_cost.cost(eps)
    total = 0.0
    for edge in node.children:
        total += edge.multiplicity(eps) * _node_cost(edge.node, slots)
    return total


def _node_error(node: BudgetNode, slots: dict[str, float]) -> float:
    eps = slots.get(node.self_error_slot) if node.self_error_slot else None
    if node.kind is NodeKind.LEAF:
        if node.leaf_cost is None or node.leaf_cost.count == 0:
            return 0.0
        if eps is None:
            raise EvaluationError(f"leaf {node.name!r} has no bound tolerance slot")
        return node.leaf_cost.error(eps)
    total = eps if eps is not None else 0.0
    for edge in node.children:
        total += edge.multiplicity(eps) * _node_error(edge.node, slots)
    return total


def total_cost(
    tree: BudgetNode, binding: ParameterBinding, theta: Sequence[float] | ToleranceVector
) -> float:
    """Total primitive gate count of the tree at tolerance assignment ``theta``."""
    arr = _theta_array(theta)
    return _node_cost(tree, _slot_values(binding, arr))


def total_error(
    tree: BudgetNode, binding: ParameterBinding, theta: Sequence[float] | ToleranceVector
) -> float:
    """Composed operator-norm error bound of the tree at ``theta``."""
    arr = _theta_array(theta)
    return _node_error(tree, _slot_values(binding, arr))


def is_feasible(
    tree: BudgetNode,
    binding: ParameterBinding,
    theta: Sequence[float] | ToleranceVector,
    eps_target: float,
) -> bool:
    """Whether the composed error at ``theta`` stays within ``eps_target``."""
    if eps_target <= 0:
        raise EvaluationError(f"error target must be positive, got {eps_target}")
    return total_error(tree, binding, theta) <= eps_target


def as_ceiled(tree: BudgetNode) -> BudgetNode:
    """Copy of the tree with every multiplicity switched to CEIL rounding."""
    if tree.kind is NodeKind.LEAF:
        return tree
    edges = tuple(
        ChildEdge(replace(edge.multiplicity, rounding=Rounding.CEIL), as_ceiled(edge.node))
        for edge in tree.children
    )
    return replace(tree, children=edges)


@dataclass(frozen=True)
class FlatInstance:
    """One row of a flat expansion: ``count`` identical units at ``tolerance``.

    For leaves, a unit is a single primitive gate with cost ``unit_cost``.
    Non-root composites appear as zero-cost rows carrying their per-instance
    decomposition error, so that summing ``count * tolerance`` over all rows
    (plus the root's own tolerance) reproduces the recursive error exactly.
    """

    name: str
    count: int
    tolerance: float
    unit_cost: float


def expand_flat(
    tree: BudgetNode,
    binding: ParameterBinding,
    theta: Sequence[float] | ToleranceVector,
    max_instances: int,
) -> list[FlatInstance]:
    """Fully unroll the tree into individual gate instances.

    Requires CEIL rounding on every multiplicity and integral leaf counts so
    that instance counts are exact integers.  This is the desk-scale oracle
    against which the recursive evaluators are checked; the total instance
    count must not exceed ``max_instances``.
    """
    arr = _theta_array(theta)
    slots = _slot_values(binding, arr)

    for node in tree.walk():
        for edge in node.children:
            if edge.multiplicity.rounding is not Rounding.CEIL:
                raise EvaluationError(
                    f"flat expansion requires CEIL rounding on all multiplicities "
                    f"(edge into {edge.node.name!r} is continuous)"
                )
        if node.kind is NodeKind.LEAF and node.leaf_cost is not None:
            if abs(node.leaf_cost.count - round(node.leaf_cost.count)) > 1e-9:
                raise EvaluationError(
                    f"flat expansion requires integral leaf counts "
                    f"({node.name!r} has count {node.leaf_cost.count})"
                )

    entries: list[FlatInstance] = []
    total = 0

    def add(name: str, count: int, tolerance: float, unit_cost: float) -> None:
        nonlocal total
        total += count
        if total > max_instances:
            raise ExpansionLimitError(
                f"flat expansion exceeds {max_instances} instances"
            )
        entries.append(FlatInstance(name, count, tolerance, unit_cost))

    def visit(node: BudgetNode, inherited: int, is_root: bool) -> None:
        eps = slots.get(node.self_error_slot) if node.self_error_slot else None
        if node.kind is NodeKind.LEAF:
            if node.leaf_cost is None or node.leaf_cost.count == 0:
                return
            assert eps is not None  # leaves with gates always carry a slot
            add(node.name, inherited * round(node.leaf_cost.count), eps,
                node.leaf_cost.unit_cost(eps))
            return
        if not is_root and eps is not None:
            add(node.name, inherited, eps, 0.0)
        for edge in node.children:
            count = edge.multiplicity(eps)
            visit(edge.node, inherited * int(count), False)

    visit(tree, 1, True)
    return entries


class CompiledModel:
    """Array-form evaluator of a validated tree/binding pair.

    Node data is flattened into numpy arrays grouped by depth so that a full
    cost/error evaluation is a handful of vectorised operations.  ``theta``
    may be a single vector of shape ``(P,)`` or a batch of shape ``(B, P)``;
    single vectors return floats, batches return arrays.
    """

    def __init__(self, tree: BudgetNode, binding: ParameterBinding) -> None:
        self.tree = tree
        self.binding = binding
        slot_to_group = binding.slot_index()
        self.dimension = binding.dimension
        dummy = self.dimension  # virtual theta column, used where no slot applies

        nodes: list[BudgetNode] = []
        parent: list[int] = []
        coeff: list[float] = []
        nexp: list[float] = []
        ceil_mask: list[bool] = []
        parent_slot: list[int] = []
        self_slot: list[int] = []
        depth: list[int] = []

        def slot_of(node: BudgetNode) -> int:
            if node.self_error_slot is None:
                return -1
            if node.self_error_slot not in slot_to_group:
                raise ModelError(f"slot {node.self_error_slot!r} unbound in binding")
            return slot_to_group[node.self_error_slot]

        def visit(node: BudgetNode, parent_idx: int, mult: Multiplicity | None, d: int) -> None:
            idx = len(nodes)
            nodes.append(node)
            parent.append(parent_idx)
            depth.append(d)
            self_slot.append(slot_of(node))
            if mult is None:
                coeff.append(1.0)
                nexp.append(0.0)
                ceil_mask.append(False)
                parent_slot.append(dummy)
            else:
                coeff.append(float(mult.coefficient))
                nexp.append(-float(mult.exponent))
                ceil_mask.append(mult.rounding is Rounding.CEIL)
                if mult.exponent != 0:
                    ps = self_slot[parent_idx]
                    if ps < 0:
                        raise ModelError(
                            f"multiplicity into {node.name!r} depends on the tolerance "
                            f"of its parent, which has no slot"
                        )
                    parent_slot.append(ps)
                else:
                    parent_slot.append(dummy)
            if node.kind is NodeKind.LEAF:
                if node.leaf_cost is None:
                    raise ModelError(f"leaf {node.name!r} has no cost form")
                if node.leaf_cost.count > 0 and self_slot[idx] < 0:
                    raise ModelError(f"leaf {node.name!r} has no bound tolerance slot")
            for edge in node.children:
                visit(edge.node, idx, edge.multiplicity, d + 1)

        visit(tree, -1, None, 0)

        n = len(nodes)
        self._parent = np.asarray(parent, dtype=np.intp)
        self._coeff = np.asarray(coeff, dtype=float)
        self._nexp = np.asarray(nexp, dtype=float)
        self._ceil = np.asarray(ceil_mask, dtype=bool)
        self._parent_slot = np.asarray(parent_slot, dtype=np.intp)
        depth_arr = np.asarray(depth, dtype=np.intp)
        self._levels = [
            np.flatnonzero(depth_arr == d) for d in range(1, int(depth_arr.max()) + 1)
        ] if n > 1 else []
        self._n_nodes = n

        # Leaf slots are synthesis tolerances, accounted in the leaf block below;
        # only composite self-errors enter as decomposition error terms.
        selferr_idx = [
            i for i in range(n) if self_slot[i] >= 0 and nodes[i].kind is NodeKind.COMPOSITE
        ]
        self._selferr_nodes = np.asarray(selferr_idx, dtype=np.intp)
        self._selferr_slots = np.asarray([self_slot[i] for i in selferr_idx], dtype=np.intp)

        leaf_idx = [
            i for i in range(n)
            if nodes[i].kind is NodeKind.LEAF and nodes[i].leaf_cost is not None
            and nodes[i].leaf_cost.count > 0
        ]
        self._leaf_nodes = np.asarray(leaf_idx, dtype=np.intp)
        self._leaf_slots = np.asarray([self_slot[i] for i in leaf_idx], dtype=np.intp)
        self._leaf_count = np.asarray([nodes[i].leaf_cost.count for i in leaf_idx], dtype=float)
        self._leaf_gpl = np.asarray(
            [nodes[i].leaf_cost.gates_per_unit_logeps for i in leaf_idx], dtype=float
        )
        self._leaf_off = np.asarray(
            [nodes[i].leaf_cost.additive_offset for i in leaf_idx], dtype=float
        )

    def evaluate(self, theta: Sequence[float] | ToleranceVector | np.ndarray):
        """Return ``(cost, error)`` at one tolerance vector or a batch of them."""
        values = getattr(theta, "values", theta)
        arr = np.asarray(values, dtype=float)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.dimension:
            raise EvaluationError(
                f"expected tolerance vectors of dimension {self.dimension}, "
                f"got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise EvaluationError("tolerance vector contains non-finite entries")
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise EvaluationError("tolerance entries must lie strictly inside (0, 1)")

        b = arr.shape[0]
        padded = np.concatenate([arr, np.full((b, 1), 0.5)], axis=1)
        counts = np.empty((b, self._n_nodes))
        counts[:, 0] = 1.0
        for idx in self._levels:
            m = self._coeff[idx] * padded[:, self._parent_slot[idx]] ** self._nexp[idx]
            ceil = self._ceil[idx]
            if ceil.any():
                m = np.where(ceil, np.ceil(m), m)
            counts[:, idx] = counts[:, self._parent[idx]] * m

        error = np.zeros(b)
        if self._selferr_nodes.size:
            error += np.einsum(
                "bi,bi->b", counts[:, self._selferr_nodes], padded[:, self._selferr_slots]
            )
        cost = np.zeros(b)
        if self._leaf_nodes.size:
            eps = padded[:, self._leaf_slots]
            unit = np.maximum(0.0, self._leaf_gpl * np.log2(1.0 / eps) + self._leaf_off)
            inst = counts[:, self._leaf_nodes] * self._leaf_count
            cost += np.einsum("bi,bi->b", inst, unit)
            error += np.einsum("bi,bi->b", inst, eps)
        if single:
            return float(cost[0]), float(error[0])
        return cost, error


def compile_model(tree: BudgetNode, binding: ParameterBinding) -> CompiledModel:
    """Compile a tree/binding pair for fast repeated evaluation."""
    return CompiledModel(tree, binding)


class ChainEvaluator:
    """Stateful evaluator for single-coordinate update chains.

    Caches per-subtree cost/error aggregates; changing one tolerance entry
    recomputes only the nodes bound to that slot and their ancestors, each
    from its children's cached aggregates.  Because every touched node is
    recomputed from scratch (never delta-adjusted), the cached totals are
    always exactly what a fresh recursive evaluation would produce, and
    reverting an update restores bit-identical state.
    """

    def __init__(self, compiled: CompiledModel) -> None:
        self._compiled = compiled
        self.dimension = compiled.dimension
        n = compiled._n_nodes
        self._n_nodes = n
        parent = compiled._parent
        self._children: list[np.ndarray] = [
            np.flatnonzero(parent == i) for i in range(n)
        ]
        self._edge_coeff = [compiled._coeff[c] for c in self._children]
        self._edge_nexp = [compiled._nexp[c] for c in self._children]
        self._edge_ceil = [compiled._ceil[c] for c in self._children]
        self._edge_needs_eps = [np.any(x != 0.0) for x in self._edge_nexp]

        self._self_slot = np.full(n, -1, dtype=np.intp)
        self._self_slot[compiled._selferr_nodes] = compiled._selferr_slots
        self._is_leaf = np.zeros(n, dtype=bool)
        self._leaf_slot = np.full(n, -1, dtype=np.intp)
        self._leaf_count = np.zeros(n)
        self._leaf_gpl = np.zeros(n)
        self._leaf_off = np.zeros(n)
        for pos, node in enumerate(compiled._leaf_nodes):
            self._is_leaf[node] = True
            self._leaf_slot[node] = compiled._leaf_slots[pos]
            self._leaf_count[node] = compiled._leaf_count[pos]
            self._leaf_gpl[node] = compiled._leaf_gpl[pos]
            self._leaf_off[node] = compiled._leaf_off[pos]

        depth = np.zeros(n, dtype=np.intp)
        for i in range(1, n):
            depth[i] = depth[parent[i]] + 1
        self._recompute_order: list[np.ndarray] = []
        for k in range(self.dimension):
            dirty: set[int] = set()
            for i in range(n):
                if self._self_slot[i] == k or self._leaf_slot[i] == k:
                    j = i
                    while j >= 0 and j not in dirty:
                        dirty.add(j)
                        j = int(parent[j]) if j > 0 else -1
            order = sorted(dirty, key=lambda i: -depth[i])
            self._recompute_order.append(np.asarray(order, dtype=np.intp))

        self._theta = np.full(self.dimension, math.nan)
        self._agg_cost = np.zeros(n)
        self._agg_err = np.zeros(n)
        self._full_order = [int(i) for i in np.argsort(-depth, kind="stable")]
        self._order_lists = [[int(i) for i in order] for order in self._recompute_order]
        # multiplicity vectors are functions of the node's own slot only;
        # cache them so updates of other slots skip the power evaluation
        self._m_cache: list[np.ndarray | None] = [None] * n
        for i in range(n):
            if self._children[i].size and not self._edge_needs_eps[i]:
                m = self._edge_coeff[i].copy()
                ceil = self._edge_ceil[i]
                if ceil.any():
                    m = np.where(ceil, np.ceil(m), m)
                self._m_cache[i] = m

    def _recompute(self, i: int, changed_slot: int) -> None:
        children = self._children[i]
        if children.size == 0:
            if self._is_leaf[i]:
                eps = self._theta[self._leaf_slot[i]]
                unit = max(0.0, self._leaf_gpl[i] * math.log2(1.0 / eps) + self._leaf_off[i])
                self._agg_cost[i] = self._leaf_count[i] * unit
                self._agg_err[i] = self._leaf_count[i] * eps
            else:
                # zero-count leaf or childless composite: cost-free, only a
                # possible decomposition error of its own
                slot = self._self_slot[i]
                self._agg_cost[i] = 0.0
                self._agg_err[i] = self._theta[slot] if slot >= 0 else 0.0
            return
        slot = self._self_slot[i]
        m = self._m_cache[i]
        if self._edge_needs_eps[i] and (m is None or slot == changed_slot):
            m = self._edge_coeff[i] * self._theta[slot] ** self._edge_nexp[i]
            ceil = self._edge_ceil[i]
            if ceil.any():
                m = np.where(ceil, np.ceil(m), m)
            self._m_cache[i] = m
        if children.size == 1:
            child = int(children[0])
            m0 = float(m[0])
            self._agg_cost[i] = m0 * self._agg_cost[child]
            err = m0 * self._agg_err[child]
        else:
            self._agg_cost[i] = float(m @ self._agg_cost[children])
            err = float(m @ self._agg_err[children])
        if slot >= 0:
            err += self._theta[slot]
        self._agg_err[i] = err

    def reset(self, theta: np.ndarray) -> tuple[float, float]:
        """Set the full tolerance vector and recompute everything."""
        if np.any(theta <= 0.0) or np.any(theta >= 1.0):
            raise EvaluationError("tolerance entries must lie strictly inside (0, 1)")
        self._theta = np.asarray(theta, dtype=float).copy()
        for i in range(self._n_nodes):
            if self._edge_needs_eps[i]:
                self._m_cache[i] = None
        for i in self._full_order:
            self._recompute(i, -1)
        return self.totals()

    def update(self, index: int, value: float) -> tuple[float, float]:
        """Change one tolerance entry and return the new ``(cost, error)``."""
        if not 0.0 < value < 1.0:
            raise EvaluationError("tolerance entries must lie strictly inside (0, 1)")
        self._theta[index] = value
        for i in self._order_lists[index]:
            self._recompute(i, index)
        return self.totals()

    def totals(self) -> tuple[float, float]:
        return float(self._agg_cost[0]), float(self._agg_err[0])

    def theta(self) -> np.ndarray:
        return self._theta.copy()
