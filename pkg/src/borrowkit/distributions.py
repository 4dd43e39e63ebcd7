"""Special functions and samplers used throughout borrowkit.

The regularized incomplete beta is evaluated with the modified Lentz
continued fraction; the Student-t and F distribution functions are thin
layers over it. Samplers draw from a :class:`RngStream`, a seeded
``numpy.random.Generator`` whose state is keyed by ``(seed, stream_id)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 20_000


@dataclass
class RngStream:
    """Independent random stream derived from ``(seed, stream_id)``.

    The generator state is a pure function of the pair, so replication
    ``b`` draws the same numbers regardless of which worker runs it.
    """

    seed: int
    stream_id: int = 0
    path: tuple = ()
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def substream(self, index: int) -> RngStream:
        """Child stream, used for retries and per-stage splits."""
        return RngStream(self.seed, self.stream_id, (*self.path, index))


def _betacf(x: float, a: float, b: float) -> float:
    # Modified Lentz evaluation of the continued fraction for I_x(a, b).
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _log_beta_prefactor(x: float, a: float, b: float) -> float:
    return (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(_log_beta_prefactor(x, a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(x, a, b) / a
    return 1.0 - front * _betacf(1.0 - x, b, a) / b


def _check_dof(*dofs):
    for d in dofs:
        if not d >= 1:
            raise ValueError(f"degrees of freedom must be >= 1, got {d}")


def student_t_cdf(t: float, dof: float) -> float:
    """CDF of the central Student-t distribution."""
    _check_dof(dof)
    if math.isnan(t):
        raise ValueError("t is NaN")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    if t == 0.0:
        return 0.5
    # One tail is computed once and mirrored so F(t) + F(-t) == 1 exactly.
    tail = 0.5 * regularized_incomplete_beta(dof / (dof + t * t), 0.5 * dof, 0.5)
    return 1.0 - tail if t > 0 else tail


def student_t_pdf(t: float, dof: float) -> float:
    _check_dof(dof)
    logc = math.lgamma(0.5 * (dof + 1)) - math.lgamma(0.5 * dof) - 0.5 * math.log(dof * math.pi)
    return math.exp(logc - 0.5 * (dof + 1) * math.log1p(t * t / dof))


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F(d1, d2) distribution."""
    _check_dof(d1, d2)
    if x < 0 or math.isnan(x):
        raise ValueError(f"F variate must be non-negative, got {x}")
    if math.isinf(x):
        return 1.0
    return regularized_incomplete_beta(d1 * x / (d1 * x + d2), 0.5 * d1, 0.5 * d2)


def f_sf(x: float, d1: float, d2: float) -> float:
    """Upper tail 1 - F(x), evaluated without cancellation."""
    _check_dof(d1, d2)
    if x < 0 or math.isnan(x):
        raise ValueError(f"F variate must be non-negative, got {x}")
    if math.isinf(x):
        return 0.0
    return regularized_incomplete_beta(d2 / (d2 + d1 * x), 0.5 * d2, 0.5 * d1)


def f_logpdf(x: float, d1: float, d2: float) -> float:
    _check_dof(d1, d2)
    if x < 0 or math.isnan(x):
        raise ValueError(f"F variate must be non-negative, got {x}")
    if x == 0.0:
        if d1 < 2:
            return math.inf
        return 0.0 if d1 == 2 else -math.inf
    if math.isinf(x):
        return -math.inf
    h1, h2 = 0.5 * d1, 0.5 * d2
    lbeta = math.lgamma(h1) + math.lgamma(h2) - math.lgamma(h1 + h2)
    return (
        h1 * math.log(d1 / d2) + (h1 - 1.0) * math.log(x)
        - (h1 + h2) * math.log1p(d1 * x / d2) - lbeta
    )


def f_pdf(x: float, d1: float, d2: float) -> float:
    """Density of the F(d1, d2) distribution."""
    lp = f_logpdf(x, d1, d2)
    return math.exp(lp) if lp != -math.inf else 0.0


def f_mode(d1: float, d2: float) -> float:
    """Mode of F(d1, d2); zero when the density is monotone (d1 <= 2)."""
    _check_dof(d1, d2)
    if d1 <= 2:
        return 0.0
    return (d1 - 2.0) / d1 * d2 / (d2 + 2.0)


def sample_gamma(shape, rng: RngStream, size=None):
    """Gamma(shape, rate=1) draws; Marsaglia-Tsang squeeze with the shape+1 boost."""
    if np.any(np.asarray(shape) <= 0):
        raise ValueError(f"gamma shape must be positive, got {shape}")
    return rng.generator.standard_gamma(shape, size=size)


def sample_inverse_gamma(shape: float, scale: float, rng: RngStream, size=None):
    """Inverse-gamma draws with density proportional to x^(-shape-1) exp(-scale/x)."""
    if not (shape > 0 and scale > 0):
        raise ValueError(f"inverse-gamma parameters must be positive, got shape={shape}, scale={scale}")
    return scale / sample_gamma(shape, rng, size=size)


def sample_normal(rng: RngStream, size=None):
    return rng.generator.standard_normal(size=size)


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise np.linalg.LinAlgError("covariance matrix is not symmetric")
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # Semidefinite covariances fall back to a symmetric square root.
        vals, vecs = np.linalg.eigh(cov)
        tol = 1e-10 * max(1.0, float(np.max(np.abs(vals))))
        if np.min(vals) < -tol:
            raise np.linalg.LinAlgError(
                "covariance matrix is not positive semidefinite; invalid posterior covariance"
            )
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_mvn(mean, covariance, rng: RngStream, size=None) -> np.ndarray:
    """Multivariate normal draws ``mean + L z`` with ``L L' = covariance``."""
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    q = mean.shape[0]
    if cov.shape != (q, q):
        raise ValueError(f"covariance shape {cov.shape} does not match mean length {q}")
    chol = _psd_factor(cov)
    if size is None:
        return mean + chol @ sample_normal(rng, size=q)
    z = sample_normal(rng, size=(size, q))
    return mean + z @ chol.T
