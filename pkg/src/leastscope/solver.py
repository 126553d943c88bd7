"""Exact weighted cover solving over hierarchy nodes.

A plan's methods become requirement sets (the nodes holding each method);
selecting a node satisfies every requirement set its descendant-inclusive
closure touches. ``solve`` minimizes total node cost with an exact
branch-and-bound; ``brute_force_optimum`` is a deliberately independent
exhaustive enumerator used as the test oracle. Both break objective ties
by the lexicographically smallest sorted selected-node sequence, so their
answers are comparable set-for-set.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .errors import (
    ConfigurationError,
    InstanceValidationError,
    OracleCapacityError,
    UnknownMethodError,
)
from .scopes import PermissionForest

ORACLE_MAX_NODES = 20

CostModel = Callable[[PermissionForest, str], int]

_COST_MODELS: dict[str, CostModel] = {}


def register_cost_model(name: str, fn: CostModel) -> None:
    """Register a pure cost function under a model name."""
    _COST_MODELS[name] = fn


def node_cost(forest: PermissionForest, node_id: str, model: str) -> int:
    """Cost of one node under a named model; unknown names are rejected."""
    try:
        fn = _COST_MODELS[model]
    except KeyError:
        raise ConfigurationError(f"unknown cost model {model!r}") from None
    value = fn(forest, node_id)
    if not isinstance(value, int) or value < 0:
        raise ConfigurationError(
            f"cost model {model!r} returned {value!r} for {node_id!r}; "
            "costs must be non-negative integers"
        )
    return value


register_cost_model("method-count", lambda forest, nid: len(forest.node(nid).methods))


@dataclass(frozen=True)
class CoverInstance:
    """One cover problem: requirement sets plus already-granted nodes."""

    forest: PermissionForest
    requirement_sets: tuple[frozenset[str], ...]
    fixed_selected: frozenset[str] = frozenset()
    cost_fn: str = "method-count"


@dataclass(frozen=True)
class CoverSolution:
    """Selected nodes (fixed included), total objective, and the new delta."""

    selected: frozenset[str]
    objective: int
    delta: frozenset[str]
    optimal: bool = True

    def sorted_selected(self) -> tuple[str, ...]:
        return tuple(sorted(self.selected))

    def to_dict(self) -> dict:
        return {
            "selected": sorted(self.selected),
            "objective": self.objective,
            "delta": sorted(self.delta),
            "optimal": self.optimal,
        }


def _validate(instance: CoverInstance) -> None:
    nodes = instance.forest.nodes
    for i, req in enumerate(instance.requirement_sets):
        if not req:
            raise InstanceValidationError(f"requirement set {i} is empty")
        for nid in req:
            if nid not in nodes:
                raise InstanceValidationError(
                    f"requirement set {i} references unknown node {nid!r}"
                )
    for nid in instance.fixed_selected:
        if nid not in nodes:
            raise InstanceValidationError(f"fixed selection references unknown node {nid!r}")


def _coverage_masks(
    instance: CoverInstance, sets: list[frozenset[str]]
) -> dict[str, int]:
    """Bit i set on node v when descendants(v) intersects requirement set i."""
    masks: dict[str, int] = {}
    for nid in instance.forest.nodes:
        closure = instance.forest.descendants[nid]
        mask = 0
        for i, req in enumerate(sets):
            if closure & req:
                mask |= 1 << i
        masks[nid] = mask
    return masks


def solve(instance: CoverInstance) -> CoverSolution:
    """Exact branch-and-bound minimizing total cost of selected nodes.

    Fixed nodes count toward the objective but never toward the delta.
    Deterministic: equal-objective optima resolve to the lexicographically
    smallest sorted node-id sequence.
    """
    _validate(instance)
    forest = instance.forest
    costs = {nid: node_cost(forest, nid, instance.cost_fn) for nid in forest.nodes}

    sets = list(dict.fromkeys(instance.requirement_sets))
    masks = _coverage_masks(instance, sets)
    full = (1 << len(sets)) - 1

    fixed = instance.fixed_selected
    fixed_cost = sum(costs[nid] for nid in fixed)
    fixed_mask = 0
    for nid in fixed:
        fixed_mask |= masks[nid]

    if fixed_mask == full:
        return CoverSolution(selected=fixed, objective=fixed_cost, delta=frozenset())

    free = [nid for nid in sorted(forest.nodes) if nid not in fixed]
    # Zero-cost nodes can win the lexicographic tie-break without paying for
    # it, so only the positive-cost case may drop useless candidates.
    if any(costs[nid] == 0 for nid in free):
        order = free
    else:
        order = [nid for nid in free if masks[nid] & ~fixed_mask & full]

    best_obj, best_sel = _greedy_incumbent(order, masks, costs, fixed, fixed_cost, fixed_mask, full)

    suffix_union = [0] * (len(order) + 1)
    for i in range(len(order) - 1, -1, -1):
        suffix_union[i] = suffix_union[i + 1] | masks[order[i]]

    def lower_bound(mask: int, start: int) -> Fraction | None:
        """Admissible bound: each uncovered set charged its cheapest share."""
        uncovered = ~mask & full
        if uncovered & ~suffix_union[start]:
            return None
        total = Fraction(0)
        for i in range(len(sets)):
            bit = 1 << i
            if not uncovered & bit:
                continue
            cheapest: Fraction | None = None
            for j in range(start, len(order)):
                m = masks[order[j]] & uncovered
                if m & bit:
                    share = Fraction(costs[order[j]], bin(m).count("1"))
                    if cheapest is None or share < cheapest:
                        cheapest = share
            if cheapest is None:
                return None
            total += cheapest
        return total

    def consider(chosen: tuple[str, ...], obj: int) -> None:
        nonlocal best_obj, best_sel
        key = (obj, tuple(sorted(fixed | set(chosen))))
        if key < (best_obj, best_sel):
            best_obj, best_sel = key

    def dfs(i: int, mask: int, chosen: tuple[str, ...], obj: int) -> None:
        if mask == full:
            consider(chosen, obj)
            # Remaining zero-cost nodes can still improve the tie-break.
            for j in range(i, len(order)):
                if costs[order[j]] == 0:
                    dfs(j + 1, mask, chosen + (order[j],), obj)
            return
        if i == len(order):
            return
        bound = lower_bound(mask, i)
        if bound is None or obj + bound > best_obj:
            return
        nid = order[i]
        gain = masks[nid] & ~mask & full
        if gain or costs[nid] == 0:
            dfs(i + 1, mask | masks[nid], chosen + (nid,), obj + costs[nid])
        dfs(i + 1, mask, chosen, obj)

    dfs(0, fixed_mask, (), fixed_cost)

    selected = frozenset(best_sel)
    return CoverSolution(selected=selected, objective=best_obj, delta=selected - fixed)


def _greedy_incumbent(
    order: list[str],
    masks: dict[str, int],
    costs: dict[str, int],
    fixed: frozenset[str],
    fixed_cost: int,
    fixed_mask: int,
    full: int,
) -> tuple[int, tuple[str, ...]]:
    """Cheapest-share greedy cover used as the initial incumbent."""
    mask = fixed_mask
    chosen: list[str] = []
    obj = fixed_cost
    while mask != full:
        best_nid = None
        best_share: Fraction | None = None
        for nid in order:
            if nid in chosen:
                continue
            gain = masks[nid] & ~mask & full
            if not gain:
                continue
            share = Fraction(costs[nid], bin(gain).count("1"))
            if best_share is None or share < best_share:
                best_nid, best_share = nid, share
        if best_nid is None:
            # Requirement sets always contain their own nodes, so the full
            # candidate pool covers everything; reaching here means the
            # caller excluded them all.
            break
        chosen.append(best_nid)
        mask |= masks[best_nid]
        obj += costs[best_nid]
    if mask != full:
        return (sum(costs.values()) + fixed_cost + 1, tuple(sorted(fixed | set(order))))
    return (obj, tuple(sorted(fixed | set(chosen))))


def brute_force_optimum(instance: CoverInstance) -> CoverSolution:
    """Exhaustive oracle: enumerate every superset of the fixed selection.

    Capped at 20 forest nodes. Shares nothing with ``solve`` beyond the
    instance validation and cost lookup.
    """
    _validate(instance)
    forest = instance.forest
    if len(forest.nodes) > ORACLE_MAX_NODES:
        raise OracleCapacityError(
            f"{len(forest.nodes)} nodes exceeds oracle cap of {ORACLE_MAX_NODES}"
        )
    costs = {nid: node_cost(forest, nid, instance.cost_fn) for nid in forest.nodes}
    free = [nid for nid in sorted(forest.nodes) if nid not in instance.fixed_selected]

    best_key: tuple[int, tuple[str, ...]] | None = None
    for bits in range(1 << len(free)):
        selected = set(instance.fixed_selected)
        for i, nid in enumerate(free):
            if bits >> i & 1:
                selected.add(nid)
        covered = set()
        for nid in selected:
            covered |= forest.descendants[nid]
        if any(not (req & covered) for req in instance.requirement_sets):
            continue
        key = (sum(costs[nid] for nid in selected), tuple(sorted(selected)))
        if best_key is None or key < best_key:
            best_key = key
    if best_key is None:
        raise InstanceValidationError("no selection covers every requirement set")
    selected_set = frozenset(best_key[1])
    return CoverSolution(
        selected=selected_set,
        objective=best_key[0],
        delta=selected_set - instance.fixed_selected,
    )


def solve_plan(
    forest: PermissionForest,
    plan_methods: list[str] | tuple[str, ...],
    granted: frozenset[str] | set[str] = frozenset(),
    cost_fn: str = "method-count",
) -> CoverSolution:
    """Minimal additional nodes needed to run ``plan_methods``.

    Duplicate methods collapse into one requirement set. Unknown methods
    propagate with the offending call index.
    """
    sets: list[frozenset[str]] = []
    seen: set[str] = set()
    for index, method in enumerate(plan_methods):
        if method in seen:
            continue
        seen.add(method)
        try:
            sets.append(forest.scopes_for_method(method))
        except UnknownMethodError as exc:
            raise UnknownMethodError(forest.app_id, method, call_index=index) from None
    instance = CoverInstance(
        forest=forest,
        requirement_sets=tuple(sets),
        fixed_selected=frozenset(granted),
        cost_fn=cost_fn,
    )
    return solve(instance)
