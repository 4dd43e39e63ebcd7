"""Subject-level analysis pipeline: config and CSV validation, reports, synthetic fixture."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.base import clone

from . import __version__
from .borrowing import Strategy
from .distributions import RngStream
from .estimator import PSWBPPRegressor
from .exceptions import SchemaError
from .inference import EffectSummary, MpiReport

_REQUIRED = ("outcome_column", "treatment_column", "source_column", "covariate_columns", "seed")


@dataclass(frozen=True)
class AnalysisConfig:
    outcome_column: str
    treatment_column: str
    source_column: str
    covariate_columns: list[str]
    seed: int
    draws: int = 5000
    burn_in: int = 2000
    strategy: str = "psw-bpp"
    mpi_weighting: str = "weighted"
    mpi_kind: str = "tail"
    success_threshold: float = 0.975
    ps_pool: str = "current"
    ps_covariate_columns: list[str] | None = None
    effect: str = "profile"
    fb_weighted: bool = False

    def __post_init__(self):
        problems = []
        if not isinstance(self.covariate_columns, list) or not all(isinstance(c, str) for c in self.covariate_columns):
            problems.append("covariate_columns must be a list of column names")
        elif not self.covariate_columns:
            problems.append("covariate_columns must not be empty")
        if self.ps_covariate_columns is not None and (
            not isinstance(self.ps_covariate_columns, list) or not self.ps_covariate_columns
        ):
            problems.append("ps_covariate_columns must be a non-empty list when given")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            problems.append("seed must be an unsigned 64-bit integer")
        if not isinstance(self.draws, int) or self.draws < 1:
            problems.append("draws must be a positive integer")
        if not isinstance(self.burn_in, int) or self.burn_in < 0:
            problems.append("burn_in must be a non-negative integer")
        if not isinstance(self.success_threshold, (int, float)) or not 0.5 < self.success_threshold < 1:
            problems.append("success_threshold must lie in (0.5, 1)")
        try:
            Strategy.parse(str(self.strategy))
        except ValueError as exc:
            problems.append(str(exc))
        for name, allowed in (
            ("mpi_weighting", ("weighted", "raw")),
            ("mpi_kind", ("tail", "level_set")),
            ("ps_pool", ("current", "controls")),
            ("effect", ("profile", "intercept")),
        ):
            if getattr(self, name) not in allowed:
                problems.append(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if problems:
            raise SchemaError("invalid analysis config: " + "; ".join(problems))

    @classmethod
    def from_dict(cls, data: dict) -> AnalysisConfig:
        if not isinstance(data, dict):
            raise SchemaError("analysis config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SchemaError(f"unknown config keys: {', '.join(unknown)}")
        missing = [k for k in _REQUIRED if k not in data]
        if missing:
            raise SchemaError(f"missing required config keys: {', '.join(missing)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> AnalysisConfig:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @property
    def ps_columns(self) -> list[str]:
        return self.ps_covariate_columns or self.covariate_columns

    def estimator(self) -> PSWBPPRegressor:
        return PSWBPPRegressor(
            strategy=self.strategy,
            mpi_weighting=self.mpi_weighting,
            mpi_kind=self.mpi_kind,
            ps_pool=self.ps_pool,
            effect=self.effect,
            fb_weighted=self.fb_weighted,
            n_draws=self.draws,
            burn_in=self.burn_in,
            random_state=self.seed,
        )


def read_dataset(path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise SchemaError(f"cannot parse {path}: {exc}") from None


def validate_frame(frame: pd.DataFrame, config: AnalysisConfig) -> pd.DataFrame:
    """Check required columns and value domains; returns the typed frame."""
    wanted = [config.outcome_column, config.treatment_column, config.source_column]
    wanted += config.covariate_columns + [c for c in config.ps_columns if c not in config.covariate_columns]
    missing = [c for c in dict.fromkeys(wanted) if c not in frame.columns]
    if missing:
        raise SchemaError(f"dataset is missing required columns: {', '.join(missing)}")

    out = frame.copy()
    numeric = [config.outcome_column, config.treatment_column] + list(
        dict.fromkeys(config.covariate_columns + config.ps_columns)
    )
    problems = []
    for col in numeric:
        values = pd.to_numeric(out[col], errors="coerce")
        bad = values.isna()
        if bad.any():
            rows = (np.flatnonzero(bad.to_numpy()) + 1)[:10].tolist()
            problems.append(f"column {col!r} has missing or non-numeric values at data rows {rows}")
        out[col] = values
    t = out[config.treatment_column]
    bad_t = ~t.isin([0, 1]) & t.notna()
    if bad_t.any():
        rows = (np.flatnonzero(bad_t.to_numpy()) + 1)[:10].tolist()
        problems.append(f"column {config.treatment_column!r} must be 0/1; bad data rows {rows}")
    src = out[config.source_column].astype(str).str.strip().str.lower()
    bad_s = ~src.isin(["current", "external"])
    if bad_s.any():
        rows = (np.flatnonzero(bad_s.to_numpy()) + 1)[:10].tolist()
        problems.append(f"column {config.source_column!r} must be 'current' or 'external'; bad data rows {rows}")
    if problems:
        raise SchemaError("; ".join(problems))
    out[config.source_column] = src
    cur = src == "current"
    if not (cur & (t == 1)).any() or not (cur & (t == 0)).any():
        raise SchemaError("dataset needs at least one current treated row and one current control row")
    return out


def _arrays(frame: pd.DataFrame, config: AnalysisConfig):
    return dict(
        X=frame[config.covariate_columns].to_numpy(dtype=float),
        y=frame[config.outcome_column].to_numpy(dtype=float),
        treatment=frame[config.treatment_column].to_numpy(dtype=float),
        source=frame[config.source_column].to_numpy(),
        ps_X=frame[config.ps_columns].to_numpy(dtype=float),
    )


@dataclass(frozen=True)
class AnalysisReport:
    effect: EffectSummary
    mpi: MpiReport | None
    ess_borrowed: float
    success: bool
    no_borrow_comparison: EffectSummary
    notes: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        params = self.effect.power_params
        return {
            "effect": self.effect.to_dict(),
            "mpi": None if self.mpi is None else self.mpi.to_dict(params),
            "ess_borrowed": self.ess_borrowed,
            "success": self.success,
            "no_borrow_comparison": self.no_borrow_comparison.to_dict(),
            "notes": list(self.notes),
            "provenance": self.provenance,
        }


def analyze_frame(frame: pd.DataFrame, config: AnalysisConfig) -> AnalysisReport:
    """PS fit, weights, calibration and posteriors, plus the no-borrowing baseline."""
    frame = validate_frame(frame, config)
    arrays = _arrays(frame, config)
    est = config.estimator().fit(**arrays)
    baseline = clone(est).set_params(strategy="fixed:0,0", fb_weighted=False).fit(**arrays)

    notes = []
    if est.strategy_.kind == "psw_bpp" and est.guard_triggered_:
        notes.append(
            "fewer than two external controls or effective sample size <= 1: power parameters forced to (0, 0)"
        )
    effect = est.effect_
    return AnalysisReport(
        effect=effect,
        mpi=est.mpi_,
        ess_borrowed=effect.ess_borrowed,
        success=bool(effect.prob_positive > config.success_threshold),
        no_borrow_comparison=baseline.effect_,
        notes=notes,
        provenance={
            "borrowkit_version": __version__,
            "seed": config.seed,
            "n_rows": int(len(frame)),
            "n_external_controls": est.n_external_controls_,
            "config": asdict(config),
        },
    )


def mpi_frame(frame: pd.DataFrame, config: AnalysisConfig) -> dict:
    frame = validate_frame(frame, config)
    params, report = config.estimator().calibrate(**_arrays(frame, config))
    return report.to_dict(params)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False, default=_json_default) + "\n"


# Synthetic stand-in for the case-study cohorts (baseline characteristics
# only; outcomes come from a user-set effect). Not real patient data.
ADNI_MIMIC = {
    "current": dict(n=531, exposure=0.6365, male=0.5518, age=(73.19, 7.36), ravlt=(14.42, 5.03),
                    apoe4=(0.5065, 0.3634), mmse=(26.95, 2.93)),
    "external": dict(n=710, exposure=0.7099, male=0.5775, age=(75.27, 6.73), ravlt=(13.73, 4.44),
                     apoe4=(0.5141, 0.3775), mmse=(26.88, 2.58)),
}
FIXTURE_COVARIATES = ["age", "male", "ravlt", "apoe4", "mmse"]
# Outcome model for the change score, per covariate unit.
_FIXTURE_COEF = dict(intercept=0.2, age=-0.01, male=0.05, ravlt=0.03, apoe4=-0.1, mmse=0.04)
_FIXTURE_CENTER = dict(age=73.19, male=0.55, ravlt=14.42, apoe4=0.63, mmse=26.95)


def make_fixture(seed: int, effect: float = 0.17, noise_sd: float = 0.75, matched: bool = True) -> pd.DataFrame:
    """Synthetic current + external cohorts shaped like the case-study baseline table.

    With ``matched`` both cohorts draw covariates from the current-study
    distribution, so borrowing is appropriate.
    """
    g = RngStream(seed).generator
    parts = []
    for source in ("current", "external"):
        spec = ADNI_MIMIC[source]
        dist = ADNI_MIMIC["current"] if matched else spec
        n = spec["n"]
        exposure = (g.random(n) < dist["exposure"]).astype(int)
        male = (g.random(n) < dist["male"]).astype(int)
        age = np.round(g.normal(*dist["age"], size=n), 1)
        ravlt = np.round(np.clip(g.normal(*dist["ravlt"], size=n), 0, None), 2)
        p0, p1 = dist["apoe4"]
        u = g.random(n)
        apoe4 = np.where(u < p0, 0, np.where(u < p0 + p1, 1, 2))
        mmse = np.clip(np.round(g.normal(*dist["mmse"], size=n)), 18, 30).astype(int)
        cov = dict(age=age, male=male, ravlt=ravlt, apoe4=apoe4, mmse=mmse)
        mean = _FIXTURE_COEF["intercept"] + effect * exposure
        for k in FIXTURE_COVARIATES:
            mean = mean + _FIXTURE_COEF[k] * (cov[k] - _FIXTURE_CENTER[k])
        outcome = np.round(mean + g.normal(0.0, noise_sd, size=n), 4)
        parts.append(pd.DataFrame({"source": source, "exposure": exposure, **cov, "outcome": outcome}))
    return pd.concat(parts, ignore_index=True)


def fixture_config(seed: int = 20240101) -> dict:
    return {
        "outcome_column": "outcome",
        "treatment_column": "exposure",
        "source_column": "source",
        "covariate_columns": list(FIXTURE_COVARIATES),
        "seed": seed,
    }


def trial_frame(trial) -> pd.DataFrame:
    """Subject-level frame of a simulated trial (columns x1..x{q-1}), arm by arm."""
    blocks = [
        ("current", 1, trial.treatment),
        ("current", 0, trial.control),
        ("external", 0, trial.external),
    ]
    parts = []
    for source, t, arm in blocks:
        cols = {f"x{j}": arm.X[:, j] for j in range(1, arm.q)}
        parts.append(pd.DataFrame({"source": source, "treatment": t, **cols, "y": arm.y}))
    return pd.concat(parts, ignore_index=True)
