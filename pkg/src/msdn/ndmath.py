"""Dense float64 math kernels, a portable PRNG, and gradient checking.

Matrices throughout the package are 2-D C-order ``float64`` numpy arrays;
vectors are 1-D ``float64`` arrays.  Everything here is deterministic:
re-running an operation on identical inputs yields bit-identical output,
and the :class:`Rng` stream depends only on its seed, never on the
platform.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from typing import NamedTuple

import numpy as np

from .errors import ArgumentError, NumericError, ShapeError

_U64 = (1 << 64) - 1
_XORSHIFT_MULT = 0x2545F4914F6CDD1D
_TWO_POW_NEG53 = 2.0 ** -53

DEFAULT_GRAD_STEP = 1e-5


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _U64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _U64
    return x ^ (x >> 31)


class Rng:
    """xorshift64* generator with a splitmix64-scrambled seed.

    The update is ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` on a 64-bit
    word, and each output is ``x * 0x2545F4914F6CDD1D`` truncated to 64
    bits.  Doubles take the top 53 bits of an output word, so the stream
    is identical on every platform for a given seed.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = _splitmix64(int(seed) & _U64)
        if self.state == 0:
            # xorshift has a fixed point at zero.
            self.state = 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _U64
        x ^= x >> 27
        self.state = x
        return (x * _XORSHIFT_MULT) & _U64

    def next_f64(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _TWO_POW_NEG53

    def next_below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ArgumentError(f"next_below requires n >= 1, got {n}")
        return int(self.next_f64() * n)

    def uniform(self, lo: float, hi: float, rows: int, cols: int) -> np.ndarray:
        """rows x cols matrix of i.i.d. uniforms in [lo, hi), row-major draw order."""
        if not lo < hi:
            raise ArgumentError(f"uniform requires lo < hi, got lo={lo}, hi={hi}")
        if rows < 1 or cols < 1:
            raise ArgumentError(f"uniform requires positive shape, got {rows}x{cols}")
        span = hi - lo
        out = np.empty((rows, cols), dtype=np.float64)
        flat = out.reshape(-1)
        for i in range(flat.size):
            flat[i] = lo + span * self.next_f64()
        return out

    def normal(self, n: int) -> np.ndarray:
        """n i.i.d. standard normals via Box-Muller.

        Draws ceil(n / 2) pairs of uniforms; the spare deviate of an odd
        request is discarded, so consumption depends only on n.
        """
        if n < 0:
            raise ArgumentError(f"normal requires n >= 0, got {n}")
        out = np.empty(n, dtype=np.float64)
        for i in range(0, n, 2):
            u1 = 1.0 - self.next_f64()  # (0, 1]: keeps log(u1) finite
            u2 = self.next_f64()
            radius = math.sqrt(-2.0 * math.log(u1))
            theta = 2.0 * math.pi * u2
            out[i] = radius * math.cos(theta)
            if i + 1 < n:
                out[i + 1] = radius * math.sin(theta)
        return out

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice_weighted(self, weights: np.ndarray) -> int:
        """Index drawn with probability proportional to non-negative weights."""
        total = float(np.sum(weights))
        if total <= 0.0 or not math.isfinite(total):
            raise ArgumentError("choice_weighted requires a positive finite weight sum")
        target = self.next_f64() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += float(w)
            if target < acc:
                return i
        return len(weights) - 1  # target landed on accumulated rounding slack


def rng_uniform(rng: Rng, lo: float, hi: float, rows: int, cols: int) -> np.ndarray:
    """Functional spelling of :meth:`Rng.uniform`."""
    return rng.uniform(lo, hi, rows, cols)


def as_matrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting other ranks."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {out.shape}")
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with float64 accumulation.

    Raises :class:`ShapeError` naming both shapes when the inner
    dimensions disagree.
    """
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul shape mismatch: {a.shape[0]}x{a.shape[1]} times "
            f"{b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def softmax_stable(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax along ``axis``; each slice sums to one.

    With a 2-D input, ``axis=0`` normalizes every column and ``axis=1``
    every row.  Non-finite logits are rejected.
    """
    x = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(x).all():
        raise NumericError("softmax_stable requires finite logits")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_sum_exp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable log(sum(exp(x))) along ``axis``."""
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


class GradCheckResult(NamedTuple):
    max_rel_error: float
    worst_index: int
    analytic_at_worst: float
    numeric_at_worst: float


def grad_check_detail(
    f: Callable[[np.ndarray], float],
    point: np.ndarray,
    analytic: np.ndarray,
    step: float = DEFAULT_GRAD_STEP,
) -> GradCheckResult:
    """Compare an analytic gradient against central differences.

    For every coordinate i the relative error is
    ``|analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|)`` with
    ``numeric_i = (f(x + step e_i) - f(x - step e_i)) / (2 step)``.
    Returns the worst coordinate; raises :class:`NumericError` if ``f``
    evaluates non-finite at any probe point.
    """
    if step <= 0:
        raise ArgumentError(f"grad_check requires step > 0, got {step}")
    x = np.array(point, dtype=np.float64).reshape(-1)
    g = np.asarray(analytic, dtype=np.float64).reshape(-1)
    if g.shape != x.shape:
        raise ShapeError(
            f"analytic gradient has {g.size} coordinates, point has {x.size}"
        )
    worst = GradCheckResult(0.0, -1, 0.0, 0.0)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        f_plus = float(f(x))
        x[i] = orig - step
        f_minus = float(f(x))
        x[i] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NumericError(
                f"grad_check: f is non-finite near coordinate {i}"
            )
        numeric = (f_plus - f_minus) / (2.0 * step)
        rel = abs(g[i] - numeric) / max(1.0, abs(g[i]), abs(numeric))
        if rel > worst.max_rel_error:
            worst = GradCheckResult(rel, i, float(g[i]), numeric)
    return worst


def grad_check(
    f: Callable[[np.ndarray], float],
    point: np.ndarray,
    analytic: np.ndarray,
    step: float = DEFAULT_GRAD_STEP,
) -> float:
    """Max relative error between ``analytic`` and central differences of ``f``."""
    return grad_check_detail(f, point, analytic, step).max_rel_error
