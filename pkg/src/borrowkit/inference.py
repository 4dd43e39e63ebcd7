"""PSW-BPP posterior machinery for the two arms of the current trial.

The control arm borrows from PS-weighted external controls through two
power parameters: ``a1`` discounts the mean part of the external likelihood
and ``a2`` the variance part. Both conditionals are conjugate, so draws are
generated exactly (sigma^2 from its inverse-gamma law, then theta given
sigma^2 from a multivariate normal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (
    RngStream,
    f_cdf,
    f_logpdf,
    f_mode,
    f_sf,
    sample_inverse_gamma,
    sample_normal,
    student_t_cdf,
    _psd_factor,
)
from .exceptions import EssTooSmall, RankDeficient, TooFewRows
from .propensity import WeightVector

MPI_WEIGHTING = ("weighted", "raw")
MPI_KINDS = ("tail", "level_set")


@dataclass(frozen=True)
class ArmData:
    """Design matrix (intercept first) and outcomes for one arm."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"design has {X.shape[0]} rows but outcome has {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("arm data contain missing or non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ArmSummary:
    theta_hat: np.ndarray
    s2: float
    n: int
    xtx: np.ndarray
    ybar: float
    sc2_raw: float


@dataclass(frozen=True)
class WeightedSummary:
    theta_hat_w: np.ndarray
    s2_w: float
    ess: float
    xtwx: np.ndarray
    ybar_w: float
    s2_raw: float
    n_raw: int
    ybar_raw: float = math.nan
    s2_ols: float = math.nan


@dataclass(frozen=True)
class PowerParams:
    a1: float
    a2: float

    def __post_init__(self):
        for name in ("a1", "a2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"power parameter {name}={v} outside [0, 1]")

    @classmethod
    def none(cls) -> PowerParams:
        return cls(0.0, 0.0)


@dataclass(frozen=True)
class MpiReport:
    t_stat: float | None
    mpi_mean: float | None
    f_stat: float | None
    mpi_var: float | None
    dof_mean: int | None
    dof_f: tuple[int, int] | None
    degenerate: bool = False

    def to_dict(self, params: PowerParams) -> dict:
        return {
            "t_stat": self.t_stat,
            "mpi_mean": self.mpi_mean,
            "f_stat": self.f_stat,
            "mpi_var": self.mpi_var,
            "dof_mean": self.dof_mean,
            "dof_f": list(self.dof_f) if self.dof_f is not None else None,
            "a1": params.a1,
            "a2": params.a2,
        }


@dataclass(frozen=True)
class PosteriorDraws:
    theta: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        if self.theta.shape[0] != self.sigma2.shape[0]:
            raise ValueError("theta and sigma2 draw counts differ")

    @property
    def n_draws(self) -> int:
        return self.sigma2.shape[0]


@dataclass(frozen=True)
class EffectSummary:
    mean: float
    lower95: float
    upper95: float
    width: float
    prob_positive: float
    ess_borrowed: float
    power_params: PowerParams
    sd: float = math.nan

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "lower95": self.lower95,
            "upper95": self.upper95,
            "width": self.width,
            "sd": self.sd,
            "prob_positive": self.prob_positive,
            "ess_borrowed": self.ess_borrowed,
            "a1": self.power_params.a1,
            "a2": self.power_params.a2,
        }


@dataclass(frozen=True)
class CalibrationConfig:
    mpi_weighting: str = "weighted"
    mpi_kind: str = "tail"

    def __post_init__(self):
        if self.mpi_weighting not in MPI_WEIGHTING:
            raise ValueError(f"mpi_weighting must be one of {MPI_WEIGHTING}")
        if self.mpi_kind not in MPI_KINDS:
            raise ValueError(f"mpi_kind must be one of {MPI_KINDS}")


@dataclass(frozen=True)
class ConjugatePosterior:
    """theta | sigma^2 ~ N(theta_tilde, sigma^2 cov_unit) and sigma^2 ~ IG(ig_shape, ig_scale)."""

    theta_tilde: np.ndarray
    precision: np.ndarray
    cov_unit: np.ndarray
    ig_shape: float
    ig_scale: float


def _wls(X: np.ndarray, y: np.ndarray, w: np.ndarray | None):
    Xw = X if w is None else X * w[:, None]
    xtwx = X.T @ Xw
    if np.linalg.matrix_rank(xtwx) < X.shape[1]:
        raise RankDeficient("design matrix does not have full column rank")
    theta = np.linalg.solve(xtwx, Xw.T @ y)
    resid = y - X @ theta
    rss = float(resid @ resid) if w is None else float(resid @ (w * resid))
    return theta, rss, xtwx


def arm_summary(data: ArmData) -> ArmSummary:
    """OLS fit of one arm with residual variance on divisor ``n - 1``."""
    n, q = data.X.shape
    if n < q + 1:
        raise TooFewRows(f"arm has {n} rows; at least {q + 1} needed for {q} coefficients")
    theta, rss, xtx = _wls(data.X, data.y, None)
    return ArmSummary(
        theta_hat=theta,
        s2=rss / (n - 1),
        n=n,
        xtx=xtx,
        ybar=float(np.mean(data.y)),
        sc2_raw=float(np.var(data.y, ddof=1)),
    )


def weighted_summary(data: ArmData, weights: WeightVector) -> WeightedSummary:
    """Weighted least squares fit of the external controls.

    The residual variance uses ``ess - 1`` as divisor, so an effective
    sample size at or below one raises :class:`EssTooSmall`.
    """
    w = np.asarray(weights.w, dtype=float)
    if w.shape[0] != data.n:
        raise ValueError(f"{w.shape[0]} weights for {data.n} external rows")
    ess = float(weights.ess)
    if ess <= 1.0:
        raise EssTooSmall(f"effective sample size {ess:.4g} <= 1")
    theta, rss, xtwx = _wls(data.X, data.y, w)
    if data.n >= data.q + 1:
        _, rss_ols, _ = _wls(data.X, data.y, None)
        s2_ols = rss_ols / (data.n - 1)
    else:
        s2_ols = math.nan
    return WeightedSummary(
        theta_hat_w=theta,
        s2_w=rss / (ess - 1.0),
        ess=ess,
        xtwx=xtwx,
        ybar_w=float(np.sum(w * data.y) / np.sum(w)),
        s2_raw=float(np.var(data.y, ddof=1)) if data.n > 1 else math.nan,
        n_raw=data.n,
        ybar_raw=float(np.mean(data.y)),
        s2_ols=s2_ols,
    )


def mean_t_statistic(ybar_c: float, ybar_e: float, s2_c: float, n_c: int) -> float:
    if not s2_c > 0:
        raise ValueError(f"current variance must be positive, got {s2_c}")
    if n_c < 2:
        raise ValueError(f"current sample size must be at least 2, got {n_c}")
    return (ybar_c - ybar_e) / (math.sqrt(s2_c) / math.sqrt(n_c))


def mpi_mean(ybar_c: float, ybar_e: float, s2_c: float, n_c: int, kind: str = "level_set") -> float:
    """Plausibility of a zero mean difference under the scaled-t posterior.

    ``kind="level_set"`` is the posterior mass of the region where the t
    density is no higher than at zero (two-sided tail probability).
    ``kind="tail"`` is the smaller one-sided mass beyond zero, half the
    former for the symmetric t.
    """
    t0 = mean_t_statistic(ybar_c, ybar_e, s2_c, n_c)
    upper = 1.0 - student_t_cdf(abs(t0), n_c - 1)
    if kind == "tail":
        return upper
    if kind == "level_set":
        return min(1.0, 2.0 * upper)
    raise ValueError(f"unknown mPI kind {kind!r}")


def _bisect(fn, lo, hi, iters=200):
    flo = fn(lo)
    fhi = fn(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise ArithmeticError("bisection interval does not bracket a root")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0 or hi - lo <= 1e-15 * max(1.0, abs(mid)):
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def f_level_set_mass(x0: float, d1: float, d2: float) -> float:
    """P(f(X) <= f(x0)) for X ~ F(d1, d2), f the F density."""
    if x0 < 0:
        raise ValueError("F statistic must be non-negative")
    if math.isinf(x0):
        return 0.0
    if d1 <= 2:
        return f_sf(x0, d1, d2)
    mode = f_mode(d1, d2)
    if x0 == mode:
        return 1.0
    level = f_logpdf(x0, d1, d2)

    def gap(x):
        return f_logpdf(x, d1, d2) - level

    if x0 < mode:
        lo = mode
        hi = max(2.0 * mode, 1.0)
        while gap(hi) > 0:
            hi *= 2.0
            if hi > 1e300:
                return f_cdf(x0, d1, d2)
        x1 = _bisect(gap, lo, hi)
        return f_cdf(x0, d1, d2) + f_sf(x1, d1, d2)
    if level == -math.inf:
        return 0.0
    if gap(0.0) >= 0:
        return f_sf(x0, d1, d2)
    x1 = _bisect(gap, 0.0, mode)
    return f_cdf(x1, d1, d2) + f_sf(x0, d1, d2)


def mpi_variance(s2_c: float, s2_e: float, n_c: int, n_e_dof: int, kind: str = "level_set") -> float:
    """Plausibility of a unit variance ratio, referring S_e^2/S_c^2 to F(n_e_dof - 1, n_c - 1).

    ``kind="level_set"`` is the mass of the density-lower level set through
    the observed ratio; ``kind="tail"`` is the smaller of the two one-sided
    masses.
    """
    if not (s2_c > 0 and s2_e > 0):
        raise ValueError(f"variances must be positive, got s2_c={s2_c}, s2_e={s2_e}")
    if n_c < 2 or n_e_dof < 2:
        raise ValueError(f"sample sizes must be at least 2, got n_c={n_c}, n_e_dof={n_e_dof}")
    x0 = s2_e / s2_c
    d1, d2 = n_e_dof - 1, n_c - 1
    if kind == "tail":
        return min(f_cdf(x0, d1, d2), f_sf(x0, d1, d2))
    if kind == "level_set":
        return min(1.0, f_level_set_mass(x0, d1, d2))
    raise ValueError(f"unknown mPI kind {kind!r}")


def _degenerate_report() -> MpiReport:
    return MpiReport(None, None, None, None, None, None, degenerate=True)


def borrowing_guard(external: WeightedSummary | None) -> bool:
    """True when the external block is too small to borrow from."""
    return external is None or external.n_raw < 2 or external.ess <= 1.0


def calibrate_power_params(
    current: ArmSummary,
    external: WeightedSummary | None,
    config: CalibrationConfig = CalibrationConfig(),
) -> tuple[PowerParams, MpiReport]:
    """Set (a1, a2) to the mPIs of the mean and variance comparisons."""
    if borrowing_guard(external):
        return PowerParams.none(), _degenerate_report()
    if config.mpi_weighting == "weighted":
        ybar_e = external.ybar_w
        s2_c, s2_e = current.s2, external.s2_w
        n_e_dof = max(2, int(round(external.ess)))
    else:
        ybar_e = external.ybar_raw
        s2_c, s2_e = current.s2, external.s2_ols
        n_e_dof = external.n_raw
    n_c = current.n
    t0 = mean_t_statistic(current.ybar, ybar_e, current.sc2_raw, n_c)
    a1 = mpi_mean(current.ybar, ybar_e, current.sc2_raw, n_c, kind=config.mpi_kind)
    a2 = mpi_variance(s2_c, s2_e, n_c, n_e_dof, kind=config.mpi_kind)
    report = MpiReport(
        t_stat=t0,
        mpi_mean=a1,
        f_stat=s2_e / s2_c,
        mpi_var=a2,
        dof_mean=n_c - 1,
        dof_f=(n_e_dof - 1, n_c - 1),
    )
    return PowerParams(a1, a2), report


def control_posterior(
    current: ArmSummary,
    external: WeightedSummary | None,
    params: PowerParams,
) -> ConjugatePosterior:
    """Parameters of theta_c | sigma_c^2 ~ N and sigma_c^2 ~ IG.

    External terms enter only through ``a1`` (mean part) and ``a2``
    (variance part); a zero power parameter drops the matching term
    entirely, so the no-borrowing posterior never touches external data.
    """
    use_mean = params.a1 > 0
    use_var = params.a2 > 0
    if (use_mean or use_var) and borrowing_guard(external):
        raise EssTooSmall("external block cannot be borrowed from; power parameters must be (0, 0)")
    n_c = current.n
    if use_mean:
        precision = current.xtx + params.a1 * external.xtwx
        rhs = current.xtx @ current.theta_hat + params.a1 * (external.xtwx @ external.theta_hat_w)
        theta_tilde = np.linalg.solve(precision, rhs)
    else:
        precision = current.xtx
        theta_tilde = current.theta_hat
    cov_unit = np.linalg.inv(precision)
    cov_unit = 0.5 * (cov_unit + cov_unit.T)
    shape = n_c + params.a1
    scale = (n_c - 1) * current.s2
    if use_var:
        shape += (external.ess - 1.0) * params.a2
        scale += (external.ess - 1.0) * params.a2 * external.s2_w
    return ConjugatePosterior(theta_tilde, precision, cov_unit, 0.5 * shape, 0.5 * scale)


def _draw_normal_inverse_gamma(mean, cov_unit, shape, scale, n_draws, burn_in, rng):
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    if burn_in < 0:
        raise ValueError("burn_in must be non-negative")
    total = n_draws + burn_in
    sigma2 = sample_inverse_gamma(shape, scale, rng, size=total)
    chol = _psd_factor(cov_unit)
    z = sample_normal(rng, size=(total, mean.shape[0]))
    theta = mean + np.sqrt(sigma2)[:, None] * (z @ chol.T)
    return PosteriorDraws(theta[burn_in:], sigma2[burn_in:])


def sample_control_posterior(
    current: ArmData,
    external: ArmData | None,
    weights: WeightVector | None,
    params: PowerParams,
    n_draws: int,
    burn_in: int,
    rng: RngStream,
) -> PosteriorDraws:
    cur = arm_summary(current)
    ext = None
    if external is not None and (params.a1 > 0 or params.a2 > 0):
        if weights is None:
            weights = WeightVector.unit(external.n)
        ext = weighted_summary(external, weights)
    post = control_posterior(cur, ext, params)
    return _draw_normal_inverse_gamma(
        post.theta_tilde, post.cov_unit, post.ig_shape, post.ig_scale, n_draws, burn_in, rng
    )


def treatment_posterior(summary: ArmSummary) -> ConjugatePosterior:
    cov_unit = np.linalg.inv(summary.xtx)
    cov_unit = 0.5 * (cov_unit + cov_unit.T)
    return ConjugatePosterior(
        summary.theta_hat,
        summary.xtx,
        cov_unit,
        0.5 * (summary.n - 1),
        0.5 * (summary.n - 1) * summary.s2,
    )


def sample_treatment_posterior(
    treatment: ArmData, n_draws: int, burn_in: int, rng: RngStream
) -> PosteriorDraws:
    post = treatment_posterior(arm_summary(treatment))
    return _draw_normal_inverse_gamma(
        post.theta_tilde, post.cov_unit, post.ig_shape, post.ig_scale, n_draws, burn_in, rng
    )


def effect_summary(
    treatment_draws: PosteriorDraws,
    control_draws: PosteriorDraws,
    profile,
    ess_borrowed: float,
    params: PowerParams,
) -> EffectSummary:
    """Posterior summary of ``profile' (theta_t - theta_c)`` with an equal-tailed 95% interval."""
    if treatment_draws.n_draws != control_draws.n_draws:
        raise ValueError("treatment and control draw counts differ")
    profile = np.asarray(profile, dtype=float)
    q = treatment_draws.theta.shape[1]
    if control_draws.theta.shape[1] != q or profile.shape != (q,):
        raise ValueError("draw dimensions and covariate profile length must agree")
    delta = (treatment_draws.theta - control_draws.theta) @ profile
    lo, hi = np.quantile(delta, [0.025, 0.975])
    return EffectSummary(
        mean=float(np.mean(delta)),
        lower95=float(lo),
        upper95=float(hi),
        width=float(hi - lo),
        prob_positive=float(np.mean(delta > 0)),
        ess_borrowed=float(ess_borrowed),
        power_params=params,
        sd=float(np.std(delta, ddof=1)) if delta.shape[0] > 1 else 0.0,
    )
