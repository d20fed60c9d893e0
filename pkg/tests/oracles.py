"""Independent oracles the tests check the package against.

Every function here recomputes a quantity along a different route than the
package does: explicit loops instead of BLAS, textbook linear-algebra calls
instead of the blocked kernels, vertex enumeration instead of the greedy,
exhaustive search instead of branch-and-bound, and a from-the-docs rewrite of
the pinned generator. Slow and obvious on purpose.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def cross_frob_sq_loops(y: np.ndarray, z: np.ndarray) -> float:
    """||z^T y||_F^2 by plain triple loop, no matrix products."""
    n, p1 = y.shape
    n2, p2 = z.shape
    assert n == n2
    total = 0.0
    for a in range(p2):
        for b in range(p1):
            acc = 0.0
            for s in range(n):
                acc += float(z[s, a]) * float(y[s, b])
            total += acc * acc
    return total


def orm_definition(y: np.ndarray, z: np.ndarray) -> float:
    """The metric straight from its definition via numpy.linalg."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    num = np.linalg.norm(z.T @ y, "fro") ** 2
    den = np.linalg.norm(y.T @ y, "fro") * np.linalg.norm(z.T @ z, "fro")
    return float(num / den)


def continuous_best(
    c: np.ndarray,
    cost: np.ndarray,
    budget: float,
    lo: float,
    hi: float,
    pins: tuple | None = None,
) -> float:
    """Exact optimum of max c.b s.t. cost.b <= budget, lo <= b <= hi.

    Enumerates the basic feasible points of the one-constraint polytope:
    every variable at a bound, or exactly one variable interior with the
    budget tight. The best objective over those points is the LP optimum.
    Pinned variables are substituted out first.
    """
    c = np.asarray(c, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    n = c.size
    if pins is None:
        pins = (None,) * n
    fixed = np.zeros(n)
    free = []
    for i, pin in enumerate(pins):
        if pin is None:
            free.append(i)
        else:
            fixed[i] = pin
    base_obj = float(np.dot(c, fixed))
    base_cost = float(np.dot(cost, fixed))
    cf = c[free]
    costf = cost[free]
    m = len(free)
    if m == 0:
        assert base_cost <= budget + 1e-9
        return base_obj

    best = -math.inf
    for pattern in itertools.product((lo, hi), repeat=m):
        b = np.array(pattern, dtype=np.float64)
        if base_cost + float(np.dot(costf, b)) <= budget + 1e-12:
            best = max(best, float(np.dot(cf, b)))
    for k in range(m):
        if costf[k] <= 0.0:
            continue
        others = [i for i in range(m) if i != k]
        for pattern in itertools.product((lo, hi), repeat=m - 1):
            b = np.empty(m)
            for slot, value in zip(others, pattern):
                b[slot] = value
            spent = base_cost + float(np.dot(costf[others], b[others]))
            bk = (budget - spent) / costf[k]
            if lo - 1e-12 <= bk <= hi + 1e-12:
                b[k] = min(hi, max(lo, bk))
                best = max(best, float(np.dot(cf, b)))
    assert best > -math.inf, "oracle found no feasible vertex"
    return base_obj + best


def integer_best(
    c: np.ndarray,
    cost: np.ndarray,
    budget: float,
    lo: int,
    hi: int,
    pins: tuple | None = None,
) -> tuple[float, tuple[int, ...]]:
    """Exhaustive integer optimum with the lexicographically-largest tie-break.

    Free variables are enumerated in lexicographically decreasing order and a
    candidate replaces the incumbent only on a strict improvement, so the
    first optimum kept is the largest one in layer order. Vectorized over
    all combinations; usable up to ~10^6 of them.
    """
    c = np.asarray(c, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    n = c.size
    if pins is None:
        pins = (None,) * n
    free = [i for i, pin in enumerate(pins) if pin is None]
    bits = np.array([0 if pin is None else pin for pin in pins], dtype=np.float64)
    m = len(free)
    if m == 0:
        assert float(np.dot(cost, bits)) <= budget + 1e-9
        return float(np.dot(c, bits)), tuple(int(b) for b in bits)

    descending = np.arange(hi, lo - 1, dtype=np.float64, step=-1)
    axes = np.meshgrid(*([descending] * m), indexing="ij")
    combos = np.stack([axis.ravel() for axis in axes], axis=1)
    assert combos.shape == ((hi - lo + 1) ** m, m)

    base_cost = float(np.dot(cost, bits))
    base_obj = float(np.dot(c, bits))
    total_cost = base_cost + combos @ cost[free]
    feasible = total_cost <= budget + 1e-12
    assert feasible.any(), "oracle found no feasible configuration"
    objectives = np.where(feasible, base_obj + combos @ c[free], -np.inf)
    winner = int(np.argmax(objectives))  # first max = lex-largest by row order
    for slot, i in enumerate(free):
        bits[i] = combos[winner, slot]
    return float(objectives[winner]), tuple(int(b) for b in bits)


# From-the-docs rewrite of the pinned generator (FORMATS.md wording), shaped
# as plain functions over explicit state rather than the package's class.

_MASK = 0xFFFFFFFFFFFFFFFF


def splitmix_next(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31), state


def xoshiro_stream(seed: int):
    """Yield the raw u64 stream for a seed, per the documented construction."""
    s = []
    state = seed & _MASK
    for _ in range(4):
        word, state = splitmix_next(state)
        s.append(word)
    if s == [0, 0, 0, 0]:
        s[0] = 1

    def rot(x, k):
        return ((x << k) | (x >> (64 - k))) & _MASK

    while True:
        yield (rot((s[0] + s[3]) & _MASK, 23) + s[0]) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rot(s[3], 45)


def normal_stream(seed: int):
    """Yield standard normals per the documented polar method and spare rule."""
    raw = xoshiro_stream(seed)

    def uniform():
        return (next(raw) >> 11) * 2.0**-53

    while True:
        while True:
            u = 2.0 * uniform() - 1.0
            v = 2.0 * uniform() - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        m = math.sqrt(-2.0 * math.log(s) / s)
        yield u * m
        yield v * m


def toynet_weights(seed: int, dims: tuple[int, ...]) -> list[np.ndarray]:
    """Weights per the documented order: one stream, layers in order, each
    in x out matrix row-major, entries normal / sqrt(in)."""
    normals = normal_stream(seed)
    weights = []
    for din, dout in zip(dims, dims[1:]):
        w = np.array(
            [next(normals) for _ in range(din * dout)], dtype=np.float64
        ).reshape(din, dout)
        weights.append(w / math.sqrt(din))
    return weights
