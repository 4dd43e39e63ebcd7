"""One PSW-BPP analysis of a single dataset, shared by the simulation, estimator and CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import RngStream
from .inference import (
    ArmData,
    CalibrationConfig,
    EffectSummary,
    MpiReport,
    PosteriorDraws,
    PowerParams,
    WeightedSummary,
    arm_summary,
    borrowing_guard,
    calibrate_power_params,
    effect_summary,
    sample_control_posterior,
    sample_treatment_posterior,
    weighted_summary,
)
from .propensity import SCORE_CLIP, CovariateMatrix, WeightVector, external_weights, fit_logistic, propensity_scores


@dataclass(frozen=True)
class Strategy:
    """``psw_bpp`` (PS weights + mPI calibration) or fixed power parameters.

    Fixed strategies use unit external weights unless ``weighted`` is set.
    """

    kind: str
    a1: float = 0.0
    a2: float = 0.0
    weighted: bool = False

    def __post_init__(self):
        if self.kind not in ("psw_bpp", "fixed"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "fixed":
            PowerParams(self.a1, self.a2)

    @classmethod
    def psw_bpp(cls) -> Strategy:
        return cls("psw_bpp")

    @classmethod
    def fixed(cls, a1: float, a2: float | None = None, weighted: bool = False) -> Strategy:
        return cls("fixed", float(a1), float(a1 if a2 is None else a2), weighted)

    @classmethod
    def parse(cls, text: str, fb_weighted: bool = False) -> Strategy:
        text = text.strip().lower()
        if text in ("psw-bpp", "psw_bpp"):
            return cls.psw_bpp()
        if text.startswith("fixed:"):
            parts = text[len("fixed:"):].split(",")
            if len(parts) != 2:
                raise ValueError(f"fixed strategy needs two values, e.g. fixed:0.5,0.5; got {text!r}")
            try:
                a1, a2 = float(parts[0]), float(parts[1])
            except ValueError:
                raise ValueError(f"fixed strategy values must be numbers, got {text!r}") from None
            return cls.fixed(a1, a2, weighted=fb_weighted)
        raise ValueError(f"unknown strategy {text!r}; use psw-bpp or fixed:a1,a2")

    @property
    def uses_ps(self) -> bool:
        return self.kind == "psw_bpp" or self.weighted

    @property
    def label(self) -> str:
        if self.kind == "psw_bpp":
            return "PSW-BPP"
        return f"FB({self.a1:g},{self.a2:g})"

    @property
    def spec(self) -> str:
        return "psw-bpp" if self.kind == "psw_bpp" else f"fixed:{self.a1:g},{self.a2:g}"


@dataclass(frozen=True)
class BorrowingFit:
    effect: EffectSummary
    params: PowerParams
    mpi: MpiReport | None
    weights: WeightVector | None
    external_summary: WeightedSummary | None
    ps_coefficients: np.ndarray | None
    treatment_draws: PosteriorDraws
    control_draws: PosteriorDraws

    @property
    def guard_triggered(self) -> bool:
        return self.external_summary is None


def ps_odds_weights(ps_data: CovariateMatrix, external_rows) -> tuple[WeightVector, np.ndarray]:
    """Fit the propensity model and weight the selected (external control) rows."""
    coef = fit_logistic(ps_data)
    scores = propensity_scores(coef, ps_data.x[np.asarray(external_rows)])
    return external_weights(np.clip(scores, SCORE_CLIP, 1.0 - SCORE_CLIP)), coef


def resolve_weights(strategy, external, ps_data, external_rows):
    """External weights for ``strategy``; ``None`` when there is nothing to borrow."""
    if external is None or external.n < 2:
        return None, None
    if strategy.uses_ps:
        return ps_odds_weights(ps_data, external_rows)
    return WeightVector.unit(external.n), None


def resolve_params(strategy, current_summary, ext_summary, calibration):
    if strategy.kind == "psw_bpp":
        return calibrate_power_params(current_summary, ext_summary, calibration)
    if borrowing_guard(ext_summary):
        return PowerParams.none(), None
    return PowerParams(strategy.a1, strategy.a2), None


def summarize_external(external, weights):
    if external is None or weights is None or weights.ess <= 1.0 or external.n < 2:
        return None
    return weighted_summary(external, weights)


def fit_borrowing(
    treatment: ArmData,
    control: ArmData,
    external: ArmData | None,
    strategy: Strategy,
    *,
    ps_data: CovariateMatrix | None = None,
    external_rows=None,
    profile=None,
    draws: int = 5000,
    burn_in: int = 2000,
    rng: RngStream,
    calibration: CalibrationConfig = CalibrationConfig(),
) -> BorrowingFit:
    """Run PS weighting, power-parameter choice and both posterior samplers.

    ``external_rows`` indexes the external controls inside ``ps_data``.
    ``profile`` is the covariate vector (intercept first) at which the
    treatment effect is read off; it defaults to the pooled current-study
    covariate means.
    """
    current = arm_summary(control)
    weights, coef = resolve_weights(strategy, external, ps_data, external_rows)
    ext = summarize_external(external, weights)
    params, mpi = resolve_params(strategy, current, ext, calibration)

    if profile is None:
        profile = np.vstack([treatment.X, control.X]).mean(axis=0)
    t_draws = sample_treatment_posterior(treatment, draws, burn_in, rng.substream(1))
    borrowing = params.a1 > 0 or params.a2 > 0
    c_draws = sample_control_posterior(
        control,
        external if borrowing else None,
        weights if borrowing else None,
        params,
        draws,
        burn_in,
        rng.substream(2),
    )
    ess = weights.ess if (borrowing and weights is not None) else 0.0
    eff = effect_summary(t_draws, c_draws, profile, ess, params)
    return BorrowingFit(eff, params, mpi, weights, ext, coef, t_draws, c_draws)
