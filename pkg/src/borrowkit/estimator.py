"""scikit-learn style front end for PSW-BPP analyses of subject-level data."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y, column_or_1d

from .borrowing import Strategy, fit_borrowing, resolve_weights, summarize_external
from .distributions import RngStream
from .exceptions import SchemaError
from .inference import ArmData, CalibrationConfig, arm_summary, calibrate_power_params
from .propensity import CovariateMatrix

PS_POOLS = ("current", "controls")
EFFECTS = ("profile", "intercept")


def encode_source(source) -> np.ndarray:
    """Map source labels to 1 (current) / 0 (external)."""
    arr = np.asarray(source).ravel()
    if arr.dtype.kind in "OUS":
        labels = np.char.lower(arr.astype(str))
        bad = ~np.isin(labels, ["current", "external"])
        if bad.any():
            raise SchemaError(
                f"source labels must be 'current' or 'external'; bad rows {np.flatnonzero(bad)[:10].tolist()}"
            )
        return (labels == "current").astype(float)
    arr = arr.astype(float)
    if not np.all((arr == 0) | (arr == 1)):
        raise SchemaError("numeric source labels must be 1 (current) or 0 (external)")
    return arr


def _add_intercept(X):
    return np.column_stack([np.ones(X.shape[0]), X])


class PSWBPPRegressor(RegressorMixin, BaseEstimator):
    """Treatment-effect estimator borrowing external controls through PSW-BPP.

    Parameters
    ----------
    strategy : str
        ``"psw-bpp"`` for PS weights with mPI-calibrated power parameters,
        or ``"fixed:a1,a2"`` for fixed borrowing with unit weights.
    mpi_weighting : {"weighted", "raw"}
        Whether the mPI compares against PS-weighted or unweighted external
        summaries.
    mpi_kind : {"tail", "level_set"}
        Plausibility functional. ``"tail"`` is the smaller one-sided
        posterior mass beyond the null; ``"level_set"`` the mass of the
        density level set through the null.
    ps_pool : {"current", "controls"}
        Current-study rows entering the propensity model against the
        external rows.
    effect : {"profile", "intercept"}
        Read the effect at the pooled current covariate means, or as the
        intercept difference.
    fb_weighted : bool
        Apply PS weights to fixed strategies too.
    n_draws, burn_in : int
    random_state : int

    Call ``fit(X, y, treatment=..., source=...)`` with ``X`` holding the
    baseline covariates (no intercept column).
    """

    def __init__(
        self,
        strategy="psw-bpp",
        mpi_weighting="weighted",
        mpi_kind="tail",
        ps_pool="current",
        effect="profile",
        fb_weighted=False,
        n_draws=5000,
        burn_in=2000,
        random_state=0,
    ):
        self.strategy = strategy
        self.mpi_weighting = mpi_weighting
        self.mpi_kind = mpi_kind
        self.ps_pool = ps_pool
        self.effect = effect
        self.fb_weighted = fb_weighted
        self.n_draws = n_draws
        self.burn_in = burn_in
        self.random_state = random_state

    def _validate_params(self):
        if self.ps_pool not in PS_POOLS:
            raise ValueError(f"ps_pool must be one of {PS_POOLS}, got {self.ps_pool!r}")
        if self.effect not in EFFECTS:
            raise ValueError(f"effect must be one of {EFFECTS}, got {self.effect!r}")
        if int(self.n_draws) < 1 or int(self.burn_in) < 0:
            raise ValueError("n_draws must be >= 1 and burn_in >= 0")
        seed = self.random_state
        if seed is None or int(seed) < 0:
            raise ValueError("random_state must be a non-negative integer")
        strategy = self.strategy
        if isinstance(strategy, str):
            strategy = Strategy.parse(strategy, fb_weighted=self.fb_weighted)
        return strategy, CalibrationConfig(self.mpi_weighting, self.mpi_kind)

    def _prepare(self, X, y, treatment, source, ps_X, strategy):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        t = column_or_1d(np.asarray(treatment, dtype=float))
        z = encode_source(source)
        if t.shape[0] != X.shape[0] or z.shape[0] != X.shape[0]:
            raise ValueError("treatment and source must have one entry per row of X")
        if not np.all((t == 0) | (t == 1)):
            raise SchemaError("treatment values must be 0 or 1")
        ps_X = X if ps_X is None else check_array(ps_X, dtype=float)
        if ps_X.shape[0] != X.shape[0]:
            raise ValueError("ps_X must have one row per row of X")

        cur = z == 1
        treated, controls = cur & (t == 1), cur & (t == 0)
        ext_controls = (~cur) & (t == 0)
        if not treated.any() or not controls.any():
            raise SchemaError("need at least one current treated and one current control row")
        design = _add_intercept(X)

        external = ArmData(design[ext_controls], y[ext_controls]) if ext_controls.any() else None
        ps_data = external_rows = None
        if external is not None and strategy.uses_ps:
            ps_cur = cur if self.ps_pool == "current" else controls
            rows = np.flatnonzero(ps_cur | ~cur)
            ps_data = CovariateMatrix(ps_X[rows], z[rows])
            external_rows = np.flatnonzero(ext_controls[rows])

        if self.effect == "profile":
            profile = design[cur].mean(axis=0)
        else:
            profile = np.eye(design.shape[1])[0]
        self.n_features_in_ = X.shape[1]
        self.n_external_controls_ = int(ext_controls.sum())
        return (
            ArmData(design[treated], y[treated]),
            ArmData(design[controls], y[controls]),
            external,
            ps_data,
            external_rows,
            profile,
        )

    def calibrate(self, X, y, treatment, source, ps_X=None):
        """mPI-calibrated power parameters and diagnostics, without posterior sampling.

        External summaries are weighted the way the configured strategy
        weights them (PS weights for ``psw-bpp``, unit weights for
        unweighted fixed borrowing).
        """
        strategy, calibration = self._validate_params()
        _, control, external, ps_data, external_rows, _ = self._prepare(
            X, y, treatment, source, ps_X, strategy
        )
        current = arm_summary(control)
        weights, _ = resolve_weights(strategy, external, ps_data, external_rows)
        ext = summarize_external(external, weights)
        params, report = calibrate_power_params(current, ext, calibration)
        return params, report

    def fit(self, X, y, treatment, source, ps_X=None):
        strategy, calibration = self._validate_params()
        treatment_arm, control, external, ps_data, external_rows, profile = self._prepare(
            X, y, treatment, source, ps_X, strategy
        )
        fit = fit_borrowing(
            treatment_arm,
            control,
            external,
            strategy,
            ps_data=ps_data,
            external_rows=external_rows,
            profile=profile,
            draws=int(self.n_draws),
            burn_in=int(self.burn_in),
            rng=RngStream(int(self.random_state)),
            calibration=calibration,
        )
        self.strategy_ = strategy
        self.fit_ = fit
        self.effect_ = fit.effect
        self.params_ = fit.params
        self.mpi_ = fit.mpi
        self.weights_ = fit.weights
        self.ess_ = fit.effect.ess_borrowed
        self.guard_triggered_ = fit.guard_triggered
        self.profile_ = profile
        return self

    def predict(self, X, treatment=None):
        """Posterior-mean outcome for each row under its arm (control when ``treatment`` is omitted)."""
        check_is_fitted(self, "fit_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        design = _add_intercept(X)
        theta_t = self.fit_.treatment_draws.theta.mean(axis=0)
        theta_c = self.fit_.control_draws.theta.mean(axis=0)
        if treatment is None:
            return design @ theta_c
        t = column_or_1d(np.asarray(treatment, dtype=float))
        return np.where(t == 1, design @ theta_t, design @ theta_c)

    def score(self, X, y, treatment=None, sample_weight=None):
        from sklearn.metrics import r2_score

        return r2_score(y, self.predict(X, treatment), sample_weight=sample_weight)
