"""Pairwise layer-orthogonality metric and derived importance.

The metric for layers i, j with activations Fi (N x p_i) and Fj (N x p_j) is

    ||Fj^T Fi||_F^2 / (||Fi^T Fi||_F * ||Fj^T Fj||_F)

which lies in [0, 1]: 0 for orthogonal feature spans, 1 for identical ones.
It admits two algebraic evaluation forms with different costs:

  norm-form  O(N * p_i * p_j)        direct cross-product norms
  gram-form  O(N^2 * (p_i + p_j + 1)) <vec(Fi Fi^T), vec(Fj Fj^T)> identity

so the faster form depends on whether samples outnumber features. The auto
strategy picks per pair by comparing those operation counts. No mean-centering
is applied anywhere: the metric is intentionally uncentered.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    FeatureMatrix,
    GramMatrix,
    ImportanceVector,
    OrmMatrix,
)
from .errors import (
    DuplicateName,
    OmpqError,
    OrderMismatch,
    SampleMismatch,
    ValidationError,
    ZeroFeature,
)

NORM_FORM = "norm-form"
GRAM_FORM = "gram-form"
AUTO = "auto"

NEG_LOG_FLOOR = 1e-12

# Scratch budget for blocked cross products, in float64 elements (~64 MB).
_BLOCK_ELEMS = 8_000_000


def _canon_strategy(strategy: str) -> str:
    aliases = {
        "auto": AUTO,
        "norm": NORM_FORM,
        "norm-form": NORM_FORM,
        "gram": GRAM_FORM,
        "gram-form": GRAM_FORM,
    }
    try:
        return aliases[strategy]
    except KeyError:
        raise ValidationError(
            f"unknown strategy {strategy!r}; expected auto, norm or gram"
        ) from None


def _as64(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def _cross_frob_sq(a: np.ndarray, b: np.ndarray) -> float:
    """||b^T a||_F^2 in float64, blocked so scratch stays bounded.

    Block boundaries are fixed by shape alone, keeping the summation order,
    and therefore the result, independent of worker count and repeat runs.
    """
    pa = a.shape[1]
    pb = b.shape[1]
    width = max(1, min(pb, _BLOCK_ELEMS // max(pa, 1)))
    total = 0.0
    for start in range(0, pb, width):
        blk = b[:, start : start + width].T @ a
        flat = blk.ravel()
        total += float(np.dot(flat, flat))
    return total


def _self_norm(f64: np.ndarray) -> float:
    return math.sqrt(_cross_frob_sq(f64, f64))


def gram(fm: FeatureMatrix) -> GramMatrix:
    """Sample-space Gram matrix F @ F.T, accumulated in float64."""
    f64 = _as64(fm.data)
    return GramMatrix(fm.layer_name, f64 @ f64.T)


def gram_norm(g: GramMatrix) -> float:
    """Frobenius norm of a Gram matrix, equal to ||F^T F||_F."""
    flat = g.values.ravel()
    return math.sqrt(float(np.dot(flat, flat)))


def select_strategy(n_samples: int, p_i: int, p_j: int, requested: str = AUTO) -> str:
    """Resolve the evaluation form for one pair.

    auto compares the two operation counts, N*p_i*p_j for norm-form against
    N^2*(p_i + p_j + 1) for gram-form, and takes norm-form only when strictly
    cheaper.
    """
    requested = _canon_strategy(requested)
    if requested != AUTO:
        return requested
    if n_samples * p_i * p_j < n_samples * n_samples * (p_i + p_j + 1):
        return NORM_FORM
    return GRAM_FORM


def orm_pair_norm(fi: FeatureMatrix, fj: FeatureMatrix) -> float:
    """Metric value for one pair via direct cross-product norms.

    Arguments are canonicalized by (n_features, layer_name) before the cross
    term so both call orders run the identical arithmetic: the value is
    bitwise symmetric, not merely symmetric up to rounding.
    """
    if fi.n_samples != fj.n_samples:
        raise SampleMismatch(
            f"layer {fi.layer_name!r} has {fi.n_samples} samples, "
            f"layer {fj.layer_name!r} has {fj.n_samples}"
        )
    a, b = fi, fj
    if (b.n_features, b.layer_name) < (a.n_features, a.layer_name):
        a, b = b, a
    num = _cross_frob_sq(_as64(a.data), _as64(b.data))
    ni = _self_norm(_as64(fi.data))
    nj = _self_norm(_as64(fj.data))
    return _ratio(num, ni, nj, fi.layer_name, fj.layer_name)


def orm_pair_gram(
    gi: GramMatrix, gj: GramMatrix, norm_i: float, norm_j: float
) -> float:
    """Metric value for one pair from cached Gram matrices and norms.

    norm_i and norm_j are the Frobenius norms of the respective Gram matrices
    (see gram_norm); passing them in lets a matrix computation reuse one norm
    across all pairs touching a layer.
    """
    if gi.order != gj.order:
        raise OrderMismatch(
            f"Gram orders differ: {gi.layer_name!r} is {gi.order}, "
            f"{gj.layer_name!r} is {gj.order}"
        )
    num = float(np.dot(gi.values.ravel(), gj.values.ravel()))
    return _ratio(num, float(norm_i), float(norm_j), gi.layer_name, gj.layer_name)


def _ratio(num: float, norm_i: float, norm_j: float, name_i: str, name_j: str) -> float:
    if norm_i <= 0.0 or norm_j <= 0.0:
        raise ZeroFeature(
            f"pair ({name_i!r}, {name_j!r}): a zero feature matrix has no "
            f"defined orthogonality"
        )
    value = num / (norm_i * norm_j)
    # Cauchy-Schwarz bounds the exact value by 1; rounding may poke past it.
    return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class OrmComputation:
    """Matrix plus the phase timings the CLI reports."""

    matrix: OrmMatrix
    gram_seconds: float
    pair_seconds: float
    norm_pairs: int
    gram_pairs: int


def compute_orm_matrix(
    features: list[FeatureMatrix], strategy: str = AUTO, workers: int = 1
) -> OrmComputation:
    """Full pairwise matrix over a feature list, with phase timings.

    Strategies resolve per pair before any computation. Gram matrices and
    per-layer norms are built once in a first phase and shared read-only by
    the pair phase; both phases distribute across `workers` threads. Values
    do not depend on the worker count: every pair is computed by the same
    single-pair arithmetic and written to its own slot.
    """
    if not features:
        raise ValidationError("need at least one feature matrix")
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")
    seen: set[str] = set()
    for fm in features:
        if fm.layer_name in seen:
            raise DuplicateName(f"duplicate feature matrix for layer {fm.layer_name!r}")
        seen.add(fm.layer_name)
    n0 = features[0].n_samples
    for fm in features[1:]:
        if fm.n_samples != n0:
            raise SampleMismatch(
                f"layer {fm.layer_name!r} has {fm.n_samples} samples, "
                f"layer {features[0].layer_name!r} has {n0}"
            )

    count = len(features)
    pairs = [(i, j) for i in range(count) for j in range(i + 1, count)]
    resolved = {
        (i, j): select_strategy(
            n0, features[i].n_features, features[j].n_features, strategy
        )
        for (i, j) in pairs
    }
    needs_gram = [False] * count
    for (i, j), form in resolved.items():
        if form == GRAM_FORM:
            needs_gram[i] = True
            needs_gram[j] = True

    grams: list[GramMatrix | None] = [None] * count
    norms: list[float] = [0.0] * count

    def build_layer(i: int) -> None:
        if needs_gram[i]:
            g = gram(features[i])
            grams[i] = g
            norms[i] = gram_norm(g)
        else:
            norms[i] = _self_norm(_as64(features[i].data))

    t0 = time.perf_counter()
    _run(build_layer, range(count), workers)
    t1 = time.perf_counter()

    values = np.eye(count, dtype=np.float64)

    def compute_pair(pair: tuple[int, int]) -> None:
        i, j = pair
        fi, fj = features[i], features[j]
        try:
            if resolved[pair] == GRAM_FORM:
                value = orm_pair_gram(grams[i], grams[j], norms[i], norms[j])
            else:
                a, b = fi, fj
                if (b.n_features, b.layer_name) < (a.n_features, a.layer_name):
                    a, b = b, a
                num = _cross_frob_sq(_as64(a.data), _as64(b.data))
                value = _ratio(num, norms[i], norms[j], fi.layer_name, fj.layer_name)
        except OmpqError as exc:
            raise _annotate(exc, i, j, fi.layer_name, fj.layer_name) from exc
        values[i, j] = value
        values[j, i] = value

    _run(compute_pair, pairs, workers)
    t2 = time.perf_counter()

    forms = list(resolved.values())
    return OrmComputation(
        matrix=OrmMatrix(values),
        gram_seconds=t1 - t0,
        pair_seconds=t2 - t1,
        norm_pairs=forms.count(NORM_FORM),
        gram_pairs=forms.count(GRAM_FORM),
    )


def orm_matrix(
    features: list[FeatureMatrix], strategy: str = AUTO, workers: int = 1
) -> OrmMatrix:
    """Pairwise orthogonality matrix; see compute_orm_matrix for the details."""
    return compute_orm_matrix(features, strategy, workers).matrix


def _run(fn, items, workers: int) -> None:
    items = list(items)
    if workers == 1 or len(items) <= 1:
        for item in items:
            fn(item)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for future in [pool.submit(fn, item) for item in items]:
            future.result()


def _annotate(exc: OmpqError, i: int, j: int, name_i: str, name_j: str) -> OmpqError:
    message = f"pair ({i}, {j}) [{name_i!r} x {name_j!r}]: {exc}"
    try:
        return type(exc)(message)
    except TypeError:
        return OmpqError(message)


def coupling_sums(matrix: OrmMatrix) -> np.ndarray:
    """Off-diagonal row sums: how entangled each layer is with all others.

    Row i sums to diagonal + off-diagonal mass; subtracting the unit diagonal
    leaves a value in [0, L-1]. A diagonal slightly below 1 (tolerated to
    1e-6) could push an isolated layer fractionally negative, so the result
    is floored at 0 to keep the documented range.
    """
    sums = matrix.values.sum(axis=1) - 1.0
    return np.maximum(sums, 0.0)


def importance(coupling: np.ndarray, beta: float, function_id: str) -> ImportanceVector:
    """Per-layer importance factors g(beta * coupling).

    All five functions decrease in their argument, so layers entangled with
    many others (large coupling) matter less and orthogonal ones matter more:

      exp-neg   e^-x          neg       -x
      neg-log   -log(x)       neg-cube  -x^3
                              neg-exp   -e^x

    neg-log floors each coupling at 1e-12 before the logarithm.
    """
    coupling = np.asarray(coupling, dtype=np.float64)
    if coupling.ndim != 1 or coupling.size < 1:
        raise ValidationError(
            f"coupling must be a nonempty vector, got shape {coupling.shape}"
        )
    beta = float(beta)
    if not (math.isfinite(beta) and beta > 0.0):
        raise ValidationError(f"beta must be a positive real, got {beta!r}")
    if function_id == "exp-neg":
        factors = np.exp(-beta * coupling)
    elif function_id == "neg-log":
        factors = -np.log(beta * np.maximum(coupling, NEG_LOG_FLOOR))
    elif function_id == "neg":
        factors = -beta * coupling
    elif function_id == "neg-cube":
        factors = -((beta * coupling) ** 3)
    elif function_id == "neg-exp":
        factors = -np.exp(beta * coupling)
    else:
        raise ValidationError(
            f"unknown importance function {function_id!r}"
        )
    return ImportanceVector(
        coupling=coupling, factors=factors, beta=beta, function_id=function_id
    )
