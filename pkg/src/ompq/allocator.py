"""Bit-width allocation under a model-size budget.

The budgeted assignment problem is a linear program: maximize the sum of
coefficient * bit-width over layers, subject to the weight storage staying
under a megabyte target, with each bit-width inside a candidate range and
pinned layers fixed. One constraint plus box bounds means the relaxation is a
fractional knapsack, solved exactly by a ratio greedy with no external solver.
Two integerizers sit on top: rounding with budget repair, and an exact
depth-first branch-and-bound.

All megabyte figures are decimal (10^6 bytes) and count weights only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import AllocationResult, ModelDescriptor, OrmMatrix
from .errors import (
    DimMismatch,
    Infeasible,
    MixedPinInGroup,
    OmpqError,
    ValidationError,
)
from .orm import coupling_sums, importance

GRANULARITIES = ("layer", "block", "stage", "net")

# Auto method: exact search up to this many free layers, rounding beyond.
DFS_FREE_LAYER_LIMIT = 25

# Strictly positive importance factors whose relative spread falls below this
# are numerical noise around a constant vector; they collapse to exactly 1 so
# a vanishing-beta run reproduces an explicit uniform-importance run bit for
# bit (the argmax is invariant under positive scaling of the factors).
UNIFORM_COLLAPSE_TOL = 1e-6

SIZE_SLACK_MB = 1e-9


def objective_coefficients(factors: np.ndarray) -> np.ndarray:
    """Rescaled objective coefficients: c_i is the mean of factors i..L.

    Suffix means weight early layers by the whole tail of the network, which
    counters the tendency of a plain weighted objective to starve the front
    of the net. Computed with one reversed cumulative sum, O(L).
    """
    factors = np.asarray(factors, dtype=np.float64)
    if factors.ndim != 1 or factors.size < 1:
        raise ValidationError(
            f"factors must be a nonempty vector, got shape {factors.shape}"
        )
    if not np.isfinite(factors).all():
        raise ValidationError("factors must be finite")
    suffix = np.cumsum(factors[::-1])[::-1]
    lengths = np.arange(factors.size, 0, -1, dtype=np.float64)
    return suffix / lengths


def layer_size_mb(param_count: int, bit: int | float) -> float:
    """Weight storage of one layer in decimal megabytes."""
    if param_count < 0:
        raise ValidationError(f"param_count must be nonnegative, got {param_count}")
    if bit <= 0:
        raise ValidationError(f"bit-width must be positive, got {bit}")
    return param_count * bit / 8.0 / 1e6


def bops_g(
    weight_bits, activation_bits, model: ModelDescriptor
) -> float:
    """Billions of bit operations for one input: sum of mac * wbit * abit.

    Reported for context only; the budget constrains storage, not compute.
    """
    wb = np.asarray(weight_bits, dtype=np.float64)
    ab = np.asarray(activation_bits, dtype=np.float64)
    macs = np.array([layer.mac_count for layer in model.layers], dtype=np.float64)
    if wb.shape != macs.shape or ab.shape != macs.shape:
        raise DimMismatch(
            f"expected {macs.size} weight and activation bit-widths, got "
            f"{wb.size} and {ab.size}"
        )
    if wb.min(initial=1) < 1 or ab.min(initial=1) < 1:
        raise ValidationError("bit-widths must be >= 1")
    return float(np.dot(macs * wb, ab) / 1e9)


@dataclass(frozen=True)
class AllocationProblem:
    """One decision variable per entry; a variable covers the layers in its
    group (singletons at layer granularity).

    bit_costs_mb is megabytes per unit of bit-width, so a variable's storage
    is cost * bit. Pins fix a variable outside the [bit_min, bit_max] search
    box and may legitimately lie outside it.
    """

    coefficients: np.ndarray
    bit_costs_mb: np.ndarray
    target_mb: float
    bit_min: int
    bit_max: int
    pins: tuple[int | None, ...]
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        cost = np.asarray(self.bit_costs_mb, dtype=np.float64)
        if c.ndim != 1 or c.size < 1:
            raise ValidationError("problem needs at least one variable")
        if cost.shape != c.shape:
            raise ValidationError(
                f"coefficients and costs disagree: {c.shape} vs {cost.shape}"
            )
        if not np.isfinite(c).all():
            raise ValidationError("coefficients must be finite")
        if not np.isfinite(cost).all() or float(cost.min()) < 0.0:
            raise ValidationError("bit costs must be finite and nonnegative")
        if not (np.isfinite(self.target_mb) and self.target_mb > 0.0):
            raise ValidationError(
                f"target_mb must be a positive real, got {self.target_mb!r}"
            )
        for label in ("bit_min", "bit_max"):
            value = getattr(self, label)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValidationError(f"{label} must be a positive integer")
        if self.bit_min > self.bit_max:
            raise ValidationError(
                f"bit_min {self.bit_min} exceeds bit_max {self.bit_max}"
            )
        pins = tuple(self.pins)
        if len(pins) != c.size:
            raise ValidationError(f"expected {c.size} pins, got {len(pins)}")
        for pin in pins:
            if pin is not None and (
                not isinstance(pin, int) or isinstance(pin, bool) or not 1 <= pin <= 32
            ):
                raise ValidationError(f"pins must be in [1, 32] or None, got {pin!r}")
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        if len(groups) != c.size:
            raise ValidationError(f"expected {c.size} groups, got {len(groups)}")
        covered: list[int] = []
        for g in groups:
            if not g:
                raise ValidationError("every group must contain at least one layer")
            covered.extend(g)
        if sorted(covered) != list(range(len(covered))):
            raise ValidationError("groups must partition the layer indices")
        object.__setattr__(self, "coefficients", _freeze(c))
        object.__setattr__(self, "bit_costs_mb", _freeze(cost))
        object.__setattr__(self, "target_mb", float(self.target_mb))
        object.__setattr__(self, "pins", pins)
        object.__setattr__(self, "groups", groups)

    @property
    def n_variables(self) -> int:
        return self.coefficients.size

    @property
    def n_layers(self) -> int:
        return sum(len(g) for g in self.groups)

    def expand_bits(self, variable_bits) -> tuple:
        """Map per-variable bits onto per-layer bits in layer order."""
        layers = [0] * self.n_layers
        for g, b in zip(self.groups, variable_bits):
            for idx in g:
                layers[idx] = b
        return tuple(layers)


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_problem(
    coefficients: np.ndarray,
    model: ModelDescriptor,
    target_mb: float,
) -> AllocationProblem:
    """Layer-granularity problem from a descriptor: one variable per layer."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.size != len(model):
        raise DimMismatch(
            f"{coefficients.size} coefficients for {len(model)} layers"
        )
    costs = np.array(
        [layer_size_mb(layer.param_count, 1) for layer in model.layers],
        dtype=np.float64,
    )
    return AllocationProblem(
        coefficients=coefficients,
        bit_costs_mb=costs,
        target_mb=float(target_mb),
        bit_min=model.bit_min,
        bit_max=model.bit_max,
        pins=tuple(layer.fixed_weight_bit for layer in model.layers),
        groups=tuple((i,) for i in range(len(model))),
    )


def group_problem(
    problem: AllocationProblem, granularity: str, model: ModelDescriptor
) -> AllocationProblem:
    """Collapse a layer-granularity problem to block, stage or net variables.

    A grouped variable sums its members' coefficients and costs, so the
    grouped objective and budget agree with the layer-space ones whenever all
    members share a bit-width. Pins must be uniform inside a group.
    """
    if granularity not in GRANULARITIES:
        raise ValidationError(
            f"unknown granularity {granularity!r}; expected one of {GRANULARITIES}"
        )
    if problem.n_variables != len(model) or any(
        g != (i,) for i, g in enumerate(problem.groups)
    ):
        raise ValidationError("group_problem expects a layer-granularity problem")
    if granularity == "layer":
        return problem

    def key(i: int) -> object:
        layer = model.layers[i]
        if granularity == "block":
            return (layer.stage_id, layer.block_id)
        if granularity == "stage":
            return layer.stage_id
        return 0

    members: dict[object, list[int]] = {}
    for i in range(len(model)):
        members.setdefault(key(i), []).append(i)
    # Variables keep layer order: sort groups by their first member.
    grouped = sorted(members.values(), key=lambda g: g[0])

    coefficients = []
    costs = []
    pins: list[int | None] = []
    for g in grouped:
        coefficients.append(float(problem.coefficients[g].sum()))
        costs.append(float(problem.bit_costs_mb[g].sum()))
        group_pins = {problem.pins[i] for i in g}
        if group_pins == {None}:
            pins.append(None)
        elif len(group_pins) == 1:
            pins.append(group_pins.pop())
        else:
            names = [model.layers[i].name for i in g]
            raise MixedPinInGroup(
                f"group {names} mixes pinned and free layers (pins {sorted(group_pins, key=str)})"
            )
    return AllocationProblem(
        coefficients=np.array(coefficients),
        bit_costs_mb=np.array(costs),
        target_mb=problem.target_mb,
        bit_min=problem.bit_min,
        bit_max=problem.bit_max,
        pins=tuple(pins),
        groups=tuple(tuple(g) for g in grouped),
    )


def _base_assignment(problem: AllocationProblem) -> tuple[np.ndarray, list[int], float]:
    """Pins applied, free variables at bit_min; checks budget feasibility."""
    bits = np.empty(problem.n_variables, dtype=np.float64)
    free: list[int] = []
    for i, pin in enumerate(problem.pins):
        if pin is None:
            bits[i] = problem.bit_min
            free.append(i)
        else:
            bits[i] = pin
    floor_mb = float(np.dot(problem.bit_costs_mb, bits))
    if floor_mb > problem.target_mb:
        raise Infeasible(
            f"budget {problem.target_mb:.6f} MB is below the minimal achievable "
            f"size {floor_mb:.6f} MB (all free layers at {problem.bit_min} bit)",
            min_size_mb=floor_mb,
        )
    return bits, free, floor_mb


def _raise_order(problem: AllocationProblem, free: list[int]) -> list[int]:
    """Positive-coefficient free variables, best objective-per-MB first.

    Zero-cost variables raise for free and sort ahead of everything; ratio
    ties break toward the lower variable index. Variables with c <= 0 are
    excluded: raising them cannot improve the objective.
    """
    def ratio(i: int) -> float:
        cost = problem.bit_costs_mb[i]
        return math.inf if cost == 0.0 else problem.coefficients[i] / cost

    candidates = [i for i in free if problem.coefficients[i] > 0.0]
    return sorted(candidates, key=lambda i: (-ratio(i), i))


def solve_continuous(problem: AllocationProblem) -> tuple[np.ndarray, float]:
    """Exact optimum of the continuous relaxation.

    Ratio greedy: start every free variable at bit_min, raise them toward
    bit_max in decreasing objective-per-megabyte order until the budget
    binds. At most one variable ends fractional. Returns the per-variable
    bit vector and the objective (pinned terms included).
    """
    bits, free, floor_mb = _base_assignment(problem)
    remaining = problem.target_mb - floor_mb
    span = float(problem.bit_max - problem.bit_min)
    for i in _raise_order(problem, free):
        cost = float(problem.bit_costs_mb[i])
        if cost == 0.0:
            bits[i] = problem.bit_max
            continue
        afford = max(remaining, 0.0) / cost
        delta = min(span, afford)
        bits[i] = problem.bit_min + delta
        remaining -= delta * cost
        if delta < span:
            break
    objective = float(np.dot(problem.coefficients, bits))
    return bits, objective


def integerize_round(
    fractional: np.ndarray, problem: AllocationProblem
) -> AllocationResult:
    """Round half-up, then decrement until the budget holds again.

    Each repair step takes the free variable losing the least objective per
    megabyte freed (ties toward the lower index), one bit at a time. bops_g
    is filled by allocate(), which has the mac counts; here it is 0.
    """
    fractional = np.asarray(fractional, dtype=np.float64)
    if fractional.shape != (problem.n_variables,):
        raise DimMismatch(
            f"expected {problem.n_variables} fractional bits, got {fractional.shape}"
        )
    bits = np.empty(problem.n_variables, dtype=np.float64)
    for i, pin in enumerate(problem.pins):
        if pin is None:
            # floor(x + 0.5) is round half-up; Python's round() is half-even.
            bits[i] = min(
                float(problem.bit_max),
                max(float(problem.bit_min), math.floor(fractional[i] + 0.5)),
            )
        else:
            bits[i] = pin

    def size() -> float:
        return float(np.dot(problem.bit_costs_mb, bits))

    while size() > problem.target_mb:
        candidates = [
            i
            for i, pin in enumerate(problem.pins)
            if pin is None
            and bits[i] > problem.bit_min
            and problem.bit_costs_mb[i] > 0.0
        ]
        if not candidates:
            raise Infeasible(
                f"budget {problem.target_mb:.6f} MB is below the minimal "
                f"achievable size {size():.6f} MB",
                min_size_mb=size(),
            )
        best = min(
            candidates,
            key=lambda i: (problem.coefficients[i] / problem.bit_costs_mb[i], i),
        )
        bits[best] -= 1.0
    return _result_from_bits(bits, problem, "round")


def integerize_dfs(problem: AllocationProblem) -> AllocationResult:
    """Exact integer optimum by depth-first branch-and-bound.

    Variables are assigned in layer order with bit values descending, so
    configurations are visited in strictly lexicographically decreasing
    order; the first incumbent at any objective value is therefore the
    lexicographically largest, which is the documented tie-break. Subtrees
    are pruned against the continuous relaxation of their remaining suffix
    (pruning on bound <= incumbent is safe: a later equal-objective
    configuration can only be lex-smaller).
    """
    bits, free, floor_mb = _base_assignment(problem)
    nfree = len(free)
    if nfree == 0:
        return _result_from_bits(bits, problem, "dfs")

    costs = problem.bit_costs_mb
    coeffs = problem.coefficients
    lo, hi = problem.bit_min, problem.bit_max
    span = float(hi - lo)

    # Suffix floors over free variables k..end: cost and objective with
    # everything at bit_min.
    cost_floor = np.zeros(nfree + 1)
    obj_floor = np.zeros(nfree + 1)
    for k in range(nfree - 1, -1, -1):
        i = free[k]
        cost_floor[k] = cost_floor[k + 1] + costs[i] * lo
        obj_floor[k] = obj_floor[k + 1] + coeffs[i] * lo

    # Raise order restricted to each suffix, for the relaxation bound.
    order = _raise_order(problem, free)
    pos = {i: k for k, i in enumerate(free)}

    def suffix_bound(k: int, budget: float) -> float:
        """Exact continuous optimum of free variables k..end under budget."""
        gain = 0.0
        left = budget - cost_floor[k]
        for i in order:
            if pos[i] < k:
                continue
            cost = float(costs[i])
            if cost == 0.0:
                gain += coeffs[i] * span
                continue
            delta = min(span, max(left, 0.0) / cost)
            gain += coeffs[i] * delta
            left -= delta * cost
            if delta < span:
                break
        return obj_floor[k] + gain

    # Pinned spending summed directly; deriving it as floor_mb minus
    # cost_floor[0] subtracts two different summation orders of the same
    # quantity and the ulp of noise can flip a floor-tight budget infeasible.
    free_set = set(free)
    pinned_cost = float(
        sum(costs[i] * bits[i] for i in range(problem.n_variables) if i not in free_set)
    )
    budget0 = problem.target_mb - pinned_cost
    # Path sums accumulate left to right while cost_floor accumulates right
    # to left, so an exactly tight budget can miss by an ulp. Half the final
    # size slack absorbs that and keeps any admitted leaf inside the other
    # half checked by allocate().
    path_slack = 0.5 * SIZE_SLACK_MB

    # With integer coefficients every leaf objective is an integer, so the
    # continuous bound can be floored (1e-9 cushions float noise below the
    # integer boundary). Without this, a tie plateau such as uniform
    # importance keeps every bound a fraction above the incumbent and the
    # search degenerates to full enumeration.
    integral = all(float(coeffs[i]).is_integer() for i in free)

    best_obj = -math.inf
    best: list[int] | None = None
    chosen = [0] * nfree

    def descend(k: int, spent: float, value: float) -> None:
        nonlocal best_obj, best
        if k == nfree:
            if value > best_obj:
                best_obj = value
                best = chosen.copy()
            return
        bound = value + suffix_bound(k, budget0 - spent)
        if integral:
            bound = math.floor(bound + 1e-9)
        if bound <= best_obj:
            return
        i = free[k]
        cost = float(costs[i])
        for b in range(hi, lo - 1, -1):
            spent_b = spent + cost * b
            if spent_b + cost_floor[k + 1] > budget0 + path_slack:
                continue
            chosen[k] = b
            descend(k + 1, spent_b, value + coeffs[i] * b)
        return

    descend(0, 0.0, 0.0)
    if best is None:
        # _base_assignment proved all-bit_min feasible, so a leaf always exists.
        raise OmpqError("branch-and-bound found no feasible leaf")
    for k, i in enumerate(free):
        bits[i] = best[k]
    return _result_from_bits(bits, problem, "dfs")


def _result_from_bits(
    bits: np.ndarray, problem: AllocationProblem, method: str
) -> AllocationResult:
    return AllocationResult(
        bits=problem.expand_bits(int(b) for b in bits),
        objective_value=float(np.dot(problem.coefficients, bits)),
        model_size_mb=float(np.dot(problem.bit_costs_mb, bits)),
        bops_g=0.0,
        method=method,
    )


def choose_method(free_layer_count: int) -> str:
    """Auto rule: exact search on small nets, rounding on large ones."""
    return "dfs" if free_layer_count <= DFS_FREE_LAYER_LIMIT else "round"


def allocate(
    matrix: OrmMatrix,
    model: ModelDescriptor,
    target_mb: float,
    beta: float = 1.0,
    function_id: str = "exp-neg",
    granularity: str = "layer",
    method: str = "auto",
    factors: np.ndarray | None = None,
) -> AllocationResult:
    """Full pipeline from an orthogonality matrix to an integer bit profile.

    Coupling sums become importance factors (unless explicit `factors` are
    passed, e.g. a uniform baseline), those become suffix-mean coefficients,
    the relaxation is solved, and the chosen integerizer produces the final
    configuration. `method` auto picks dfs when at most 25 layers are free
    and round otherwise. The result carries the spec-formula model size and
    bops for the descriptor's activation bit-widths.
    """
    if matrix.order != len(model):
        raise DimMismatch(
            f"orthogonality matrix covers {matrix.order} layers, "
            f"descriptor has {len(model)}"
        )
    if factors is None:
        vector = importance(coupling_sums(matrix), beta, function_id)
        th = np.asarray(vector.factors, dtype=np.float64)
    else:
        th = np.asarray(factors, dtype=np.float64)
        if th.shape != (len(model),):
            raise DimMismatch(
                f"expected {len(model)} factors, got shape {th.shape}"
            )
        if not np.isfinite(th).all():
            raise ValidationError("factors must be finite")
    th = _collapse_near_uniform(th)
    coefficients = objective_coefficients(th)

    problem = group_problem(
        build_problem(coefficients, model, target_mb), granularity, model
    )
    fractional, _ = solve_continuous(problem)

    if method == "auto":
        free_layers = sum(1 for layer in model.layers if layer.fixed_weight_bit is None)
        method = choose_method(free_layers)
    if method == "round":
        result = integerize_round(fractional, problem)
    elif method == "dfs":
        result = integerize_dfs(problem)
    else:
        raise ValidationError(
            f"unknown method {method!r}; expected auto, round or dfs"
        )

    size = sum(
        layer_size_mb(layer.param_count, bit)
        for layer, bit in zip(model.layers, result.bits)
    )
    if size > target_mb + SIZE_SLACK_MB:
        raise OmpqError(
            f"integerization exceeded the budget: {size:.9f} > {target_mb:.9f} MB"
        )
    activation_bits = [layer.activation_bit for layer in model.layers]
    return replace(
        result,
        model_size_mb=size,
        bops_g=bops_g(result.bits, activation_bits, model),
    )


def _collapse_near_uniform(factors: np.ndarray) -> np.ndarray:
    lo = float(factors.min())
    hi = float(factors.max())
    if lo > 0.0 and (hi - lo) <= UNIFORM_COLLAPSE_TOL * hi:
        return np.ones_like(factors)
    return factors
