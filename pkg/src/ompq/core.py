"""Core value types shared across the pipeline.

All types validate their invariants at construction and are immutable
afterwards; arrays are stored read-only. Numeric policy: activation data may
live in memory as float32 (the on-disk precision) or float64, but every
reduction downstream accumulates in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DuplicateName,
    MissingLayer,
    SampleMismatch,
    UnknownLayer,
    ValidationError,
    ZeroFeature,
)

IMPORTANCE_FUNCTIONS = ("exp-neg", "neg-log", "neg", "neg-cube", "neg-exp")

ALLOCATION_METHODS = ("continuous", "round", "dfs")

# Tolerances for accepting a raw square matrix as an orthogonality matrix.
ORM_RANGE_TOL = 1e-9
ORM_SYMMETRY_TOL = 1e-9
ORM_DIAGONAL_TOL = 1e-6

GRAM_SYMMETRY_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureMatrix:
    """Activations of one layer: one row per input sample, flattened features.

    :param layer_name: unique name of the producing layer.
    :param data: N x p real matrix, N >= 1, p >= 1, all values finite,
        not identically zero. float32 and float64 are both accepted.
    """

    layer_name: str
    data: np.ndarray

    def __post_init__(self):
        if not self.layer_name:
            raise ValidationError("feature matrix needs a nonempty layer name")
        data = np.asarray(self.data)
        if data.dtype not in (np.float32, np.float64):
            raise ValidationError(
                f"layer {self.layer_name!r}: dtype must be float32 or float64, "
                f"got {data.dtype}"
            )
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(
                f"layer {self.layer_name!r}: expected a 2-d matrix with at "
                f"least one sample and one feature, got shape {data.shape}"
            )
        if not np.isfinite(data).all():
            raise ValidationError(
                f"layer {self.layer_name!r}: feature data contains non-finite values"
            )
        if not data.any():
            raise ZeroFeature(
                f"layer {self.layer_name!r}: feature matrix is identically zero"
            )
        object.__setattr__(self, "data", _readonly(data))

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_features(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GramMatrix:
    """Sample-space Gram matrix F @ F.T of one layer's features.

    values is N x N float64; symmetry holds to 1e-9 (BLAS products are not
    bitwise symmetric).
    """

    layer_name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise ValidationError(
                f"layer {self.layer_name!r}: Gram matrix must be square, "
                f"got shape {v.shape}"
            )
        if not np.isfinite(v).all():
            raise ValidationError(
                f"layer {self.layer_name!r}: Gram matrix contains non-finite values"
            )
        asym = float(np.abs(v - v.T).max())
        if asym > GRAM_SYMMETRY_TOL:
            raise ValidationError(
                f"layer {self.layer_name!r}: Gram matrix asymmetry {asym:.3e} "
                f"exceeds {GRAM_SYMMETRY_TOL:.0e}"
            )
        object.__setattr__(self, "values", _readonly(v))

    @property
    def order(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class OrmMatrix:
    """Pairwise orthogonality matrix over L layers.

    Raw input values must lie in [-1e-9, 1 + 1e-9]; they are clamped to [0, 1]
    after the tolerance check. Symmetry is required to 1e-9 and the diagonal
    must equal 1 within 1e-6. Values are never mean-centered.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise ValidationError(
                f"orthogonality matrix must be square and nonempty, got shape {v.shape}"
            )
        if not np.isfinite(v).all():
            raise ValidationError("orthogonality matrix contains non-finite values")
        lo = float(v.min())
        hi = float(v.max())
        if lo < -ORM_RANGE_TOL or hi > 1.0 + ORM_RANGE_TOL:
            raise ValidationError(
                f"orthogonality values must lie in [-{ORM_RANGE_TOL:.0e}, "
                f"1+{ORM_RANGE_TOL:.0e}]; saw range [{lo:.17g}, {hi:.17g}]"
            )
        asym = float(np.abs(v - v.T).max())
        if asym > ORM_SYMMETRY_TOL:
            raise ValidationError(
                f"orthogonality matrix asymmetry {asym:.3e} exceeds "
                f"{ORM_SYMMETRY_TOL:.0e}"
            )
        diag_err = float(np.abs(np.diag(v) - 1.0).max())
        if diag_err > ORM_DIAGONAL_TOL:
            raise ValidationError(
                f"orthogonality diagonal deviates from 1 by {diag_err:.3e}, "
                f"tolerance {ORM_DIAGONAL_TOL:.0e}"
            )
        object.__setattr__(self, "values", _readonly(np.clip(v, 0.0, 1.0)))

    @property
    def order(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ImportanceVector:
    """Per-layer importance derived from the orthogonality matrix.

    coupling holds the off-diagonal row sums (how entangled each layer is with
    the rest of the net), factors the importance g(beta * coupling) under the
    named decreasing function.
    """

    coupling: np.ndarray
    factors: np.ndarray
    beta: float
    function_id: str

    def __post_init__(self):
        coupling = np.asarray(self.coupling, dtype=np.float64)
        factors = np.asarray(self.factors, dtype=np.float64)
        if coupling.ndim != 1 or factors.shape != coupling.shape:
            raise ValidationError(
                f"coupling and factors must be equal-length vectors, got "
                f"{coupling.shape} and {factors.shape}"
            )
        if coupling.size < 1:
            raise ValidationError("importance vector must cover at least one layer")
        if not (np.isfinite(coupling).all() and np.isfinite(factors).all()):
            raise ValidationError("importance values must be finite")
        if float(coupling.min()) < 0.0:
            raise ValidationError(
                f"coupling sums must be nonnegative, min is {coupling.min():.17g}"
            )
        if not (self.beta > 0.0 and np.isfinite(self.beta)):
            raise ValidationError(f"beta must be a positive real, got {self.beta}")
        if self.function_id not in IMPORTANCE_FUNCTIONS:
            raise ValidationError(
                f"unknown importance function {self.function_id!r}; "
                f"expected one of {IMPORTANCE_FUNCTIONS}"
            )
        if self.function_id == "exp-neg":
            if float(factors.min()) <= 0.0 or float(factors.max()) > 1.0:
                raise ValidationError(
                    "exp-neg factors must lie in (0, 1]; saw range "
                    f"[{factors.min():.17g}, {factors.max():.17g}]"
                )
        object.__setattr__(self, "coupling", _readonly(coupling))
        object.__setattr__(self, "factors", _readonly(factors))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class LayerDescriptor:
    """Static shape facts about one quantizable layer.

    param_count counts weight entries only (no bias, no normalization);
    mac_count is multiply-accumulates for a single input. fixed_weight_bit,
    when set, pins the layer's weight bit-width outside the search; it may lie
    outside the candidate range (a common pattern for first/last layers).
    """

    name: str
    param_count: int
    mac_count: int
    block_id: int = 0
    stage_id: int = 0
    fixed_weight_bit: int | None = None
    activation_bit: int = 8

    def __post_init__(self):
        if not self.name:
            raise ValidationError("layer descriptor needs a nonempty name")
        for label in ("param_count", "mac_count", "block_id", "stage_id"):
            value = getattr(self, label)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValidationError(
                    f"layer {self.name!r}: {label} must be a nonnegative integer, "
                    f"got {value!r}"
                )
        if self.param_count + self.mac_count <= 0:
            raise ValidationError(
                f"layer {self.name!r}: a quantizable layer needs params or macs"
            )
        if self.fixed_weight_bit is not None and not (
            isinstance(self.fixed_weight_bit, int)
            and not isinstance(self.fixed_weight_bit, bool)
            and 1 <= self.fixed_weight_bit <= 32
        ):
            raise ValidationError(
                f"layer {self.name!r}: fixed_weight_bit must be in [1, 32] or "
                f"absent, got {self.fixed_weight_bit!r}"
            )
        if not (
            isinstance(self.activation_bit, int)
            and not isinstance(self.activation_bit, bool)
            and 1 <= self.activation_bit <= 32
        ):
            raise ValidationError(
                f"layer {self.name!r}: activation_bit must be in [1, 32], "
                f"got {self.activation_bit!r}"
            )


@dataclass(frozen=True)
class ModelDescriptor:
    """Ordered layer descriptors plus the candidate bit-width range."""

    layers: tuple[LayerDescriptor, ...]
    bit_min: int
    bit_max: int

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("model descriptor needs at least one layer")
        seen: set[str] = set()
        for layer in layers:
            if layer.name in seen:
                raise DuplicateName(f"duplicate layer name {layer.name!r}")
            seen.add(layer.name)
        for label in ("bit_min", "bit_max"):
            value = getattr(self, label)
            if not isinstance(value, int) or isinstance(value, bool) or not (
                1 <= value <= 32
            ):
                raise ValidationError(
                    f"{label} must be an integer in [1, 32], got {value!r}"
                )
        if self.bit_min > self.bit_max:
            raise ValidationError(
                f"bit_min {self.bit_min} exceeds bit_max {self.bit_max}"
            )
        object.__setattr__(self, "layers", layers)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(layer.name for layer in self.layers)

    def __len__(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class AllocationResult:
    """A solved bit assignment with its reporting quantities.

    bits is one integer per layer (pinned layers carry their pin); sizes are
    decimal megabytes of weight storage; bops_g is billions of bit operations
    for one input.
    """

    bits: tuple[int, ...]
    objective_value: float
    model_size_mb: float
    bops_g: float
    method: str

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits:
            raise ValidationError("allocation result needs at least one layer")
        if any(b < 1 or b > 32 for b in bits):
            raise ValidationError(f"bit-widths must lie in [1, 32], got {bits}")
        if self.method not in ALLOCATION_METHODS:
            raise ValidationError(
                f"unknown method {self.method!r}; expected one of {ALLOCATION_METHODS}"
            )
        for label in ("objective_value", "model_size_mb", "bops_g"):
            value = float(getattr(self, label))
            if not np.isfinite(value):
                raise ValidationError(f"{label} must be finite, got {value!r}")
            object.__setattr__(self, label, value)
        object.__setattr__(self, "bits", bits)


def validate_feature_set(
    features: list[FeatureMatrix], model: ModelDescriptor
) -> list[FeatureMatrix]:
    """Check a dump against a descriptor and return it in descriptor order.

    Every descriptor layer must have exactly one feature matrix and vice versa,
    all matrices must agree on the sample count, and none may be identically
    zero (the constructor enforces the last already; re-checked here so the
    contract holds even for matrices built elsewhere).
    """
    by_name: dict[str, FeatureMatrix] = {}
    for fm in features:
        if fm.layer_name in by_name:
            raise DuplicateName(f"duplicate feature matrix for layer {fm.layer_name!r}")
        by_name[fm.layer_name] = fm

    wanted = set(model.names)
    extras = sorted(set(by_name) - wanted)
    if extras:
        raise UnknownLayer(
            f"activation dump names layers absent from the descriptor: {extras}"
        )
    missing = [name for name in model.names if name not in by_name]
    if missing:
        raise MissingLayer(f"no activations for descriptor layers: {missing}")

    ordered = [by_name[name] for name in model.names]
    n0 = ordered[0].n_samples
    for fm in ordered[1:]:
        if fm.n_samples != n0:
            raise SampleMismatch(
                f"layer {fm.layer_name!r} has {fm.n_samples} samples, "
                f"layer {ordered[0].layer_name!r} has {n0}"
            )
    for fm in ordered:
        if not fm.data.any():
            raise ZeroFeature(
                f"layer {fm.layer_name!r}: feature matrix is identically zero"
            )
    return ordered
