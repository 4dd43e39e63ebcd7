"""Operating-characteristics study: scenarios, trial generation, strategies and metrics."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import RngStream
from .exceptions import BorrowkitError
from .borrowing import Strategy, fit_borrowing
from .inference import ArmData, CalibrationConfig, PowerParams
from .propensity import CovariateMatrix

SCENARIO_IDS = ("I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII")
MAX_RETRIES = 3
THREADS_ENV = "BORROWKIT_THREADS"


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    mu_current: tuple[float, float, float]
    sigma2: float
    mu_external: tuple[float, float, float]
    eta2: float

    @property
    def homogeneous_means(self) -> bool:
        return self.mu_current == self.mu_external


_SHIFTED = (1.2, 1.5, 1.6)
_BASE = (1.0, 1.0, 1.0)
_VARIANCES = [(1, 1), (3, 3), (10, 10), (1, 1.5), (3, 4), (10, 12)]


def scenario_table() -> list[ScenarioSpec]:
    """The twelve simulation settings; odd rows shift the current covariate means."""
    rows = []
    ids = iter(SCENARIO_IDS)
    for sigma2, eta2 in _VARIANCES:
        for mu in (_SHIFTED, _BASE):
            rows.append(ScenarioSpec(next(ids), mu, float(sigma2), _BASE, float(eta2)))
    return rows


def get_scenario(scenario_id: str) -> ScenarioSpec:
    for spec in scenario_table():
        if spec.id == scenario_id:
            return spec
    raise ValueError(f"unknown scenario {scenario_id!r}; expected one of {', '.join(SCENARIO_IDS)}")


@dataclass(frozen=True)
class GenConfig:
    n: int = 100
    n_e: int = 1000
    beta0: float = 0.0
    beta: tuple[float, float, float, float] = (2.0, 1.0, 1.5, -1.3)
    # Test hooks: zero the noise, or generate outcomes from continuous X1.
    noiseless: bool = False
    continuous_treatment_covariate: bool = False

    def __post_init__(self):
        if self.n < 10 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 10, got {self.n}")
        if self.n_e < 2:
            raise ValueError(f"n_e must be at least 2, got {self.n_e}")

    @property
    def theta(self) -> float:
        return self.beta[0]


@dataclass(frozen=True)
class Trial:
    treatment: ArmData
    control: ArmData
    external: ArmData
    ps_data: CovariateMatrix

    def profile(self) -> np.ndarray:
        """Pooled current-study covariate means, intercept first."""
        return np.vstack([self.treatment.X, self.control.X]).mean(axis=0)


def generate_trial(spec: ScenarioSpec, gen: GenConfig, rng: RngStream) -> Trial:
    g = rng.generator
    mu_cur = np.r_[0.0, spec.mu_current]
    mu_ext = np.r_[0.0, spec.mu_external]
    x_cur = mu_cur + g.standard_normal((gen.n, 4))
    x_ext = mu_ext + g.standard_normal((gen.n_e, 4))
    eps_cur = g.standard_normal(gen.n) * math.sqrt(spec.sigma2)
    eps_ext = g.standard_normal(gen.n_e) * math.sqrt(spec.eta2)
    if gen.noiseless:
        eps_cur = np.zeros_like(eps_cur)
        eps_ext = np.zeros_like(eps_ext)

    t = (x_cur[:, 0] >= np.median(x_cur[:, 0])).astype(float)
    slopes = np.asarray(gen.beta[1:])
    first = x_cur[:, 0] if gen.continuous_treatment_covariate else t
    y_cur = gen.beta0 + gen.theta * first + x_cur[:, 1:] @ slopes + eps_cur
    first_ext = x_ext[:, 0] if gen.continuous_treatment_covariate else 0.0
    y_ext = gen.beta0 + gen.theta * first_ext + x_ext[:, 1:] @ slopes + eps_ext

    design_cur = np.column_stack([np.ones(gen.n), x_cur[:, 1:]])
    design_ext = np.column_stack([np.ones(gen.n_e), x_ext[:, 1:]])
    treated = t == 1
    return Trial(
        treatment=ArmData(design_cur[treated], y_cur[treated]),
        control=ArmData(design_cur[~treated], y_cur[~treated]),
        external=ArmData(design_ext, y_ext),
        ps_data=CovariateMatrix.from_blocks(x_cur[:, 1:], x_ext[:, 1:]),
    )


@dataclass(frozen=True)
class ReplicationResult:
    estimate: float
    lower: float
    upper: float
    params_used: PowerParams
    ess: float = 0.0
    mpi_mean: float | None = None
    mpi_var: float | None = None
    retries: int = 0


def analyze_trial(
    trial: Trial,
    strategy: Strategy,
    draws: int,
    burn_in: int,
    rng: RngStream,
    calibration: CalibrationConfig = CalibrationConfig(),
) -> ReplicationResult:
    n_cur = int(trial.ps_data.z.sum())
    fit = fit_borrowing(
        trial.treatment,
        trial.control,
        trial.external,
        strategy,
        ps_data=trial.ps_data,
        external_rows=np.arange(n_cur, trial.ps_data.x.shape[0]),
        profile=trial.profile(),
        draws=draws,
        burn_in=burn_in,
        rng=rng,
        calibration=calibration,
    )
    eff = fit.effect
    return ReplicationResult(
        eff.mean,
        eff.lower95,
        eff.upper95,
        fit.params,
        ess=eff.ess_borrowed,
        mpi_mean=None if fit.mpi is None else fit.mpi.mpi_mean,
        mpi_var=None if fit.mpi is None else fit.mpi.mpi_var,
    )


def run_replication(
    spec: ScenarioSpec,
    gen: GenConfig,
    strategy: Strategy,
    draws: int,
    burn_in: int,
    rng: RngStream,
    calibration: CalibrationConfig = CalibrationConfig(),
) -> ReplicationResult:
    """Generate one trial and analyze it; failed draws are regenerated from sub-streams."""
    stream = rng
    for attempt in range(MAX_RETRIES + 1):
        try:
            trial = generate_trial(spec, gen, stream.substream(0))
            res = analyze_trial(trial, strategy, draws, burn_in, stream, calibration)
            return replace(res, retries=attempt)
        except (BorrowkitError, np.linalg.LinAlgError):
            if attempt == MAX_RETRIES:
                raise
            stream = rng.substream(100 + attempt)
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class MetricsRow:
    strategy: str
    scenario: str
    n: int
    n_e: int
    bias: float
    abias: float
    rmse: float
    se: float
    width: float
    cp: float
    retries: int = 0
    mean: float = math.nan

    CSV_FIELDS = ("strategy", "scenario", "n", "n_e", "bias", "abias", "rmse", "se", "width", "cp")


def evaluate(records, truth: float = 2.0, strategy: str = "", scenario: str = "", n: int = 0, n_e: int = 0) -> MetricsRow:
    """Bias, absolute bias, RMSE, simulation SE, mean interval width and coverage.

    ``records`` is a sequence of ``(estimate, lower, upper)`` triples.
    RMSE is the square root of the mean squared error.
    """
    arr = np.asarray([tuple(r)[:3] for r in records], dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError(f"need at least 2 replications, got {len(arr)}")
    return _metrics(arr, truth, strategy, scenario, n, n_e)


def _metrics(arr, truth, strategy, scenario, n, n_e, with_se=True) -> MetricsRow:
    est, lo, hi = arr[:, 0], arr[:, 1], arr[:, 2]
    err = est - truth
    return MetricsRow(
        strategy=strategy,
        scenario=scenario,
        n=n,
        n_e=n_e,
        bias=float(np.mean(err)),
        abias=float(np.mean(np.abs(err))),
        rmse=float(np.sqrt(np.mean(err**2))),
        se=float(np.std(est, ddof=1)) if with_se else math.nan,
        width=float(np.mean(hi - lo)),
        cp=float(np.mean((lo <= truth) & (truth <= hi))),
        mean=float(np.mean(est)),
    )


@dataclass(frozen=True)
class StudyResult:
    rows: list[MetricsRow]
    replications: dict = field(repr=False)


def _replication_task(args):
    spec, gen, strategy, draws, burn_in, seed, b, calibration = args
    return run_replication(spec, gen, strategy, draws, burn_in, RngStream(seed, b), calibration)


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return value
    return os.cpu_count() or 1


def run_study(
    scenarios,
    strategies,
    gen: GenConfig,
    B: int,
    draws: int,
    burn_in: int,
    seed: int,
    threads: int | None = None,
    calibration: CalibrationConfig = CalibrationConfig(),
) -> StudyResult:
    """B replications per (scenario, strategy).

    Replication ``b`` of every cell uses ``RngStream(seed, b)``, so all
    strategies see the same simulated trials and the output does not
    depend on how work is scheduled across processes.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    scenarios = [get_scenario(s) if isinstance(s, str) else s for s in scenarios]
    strategies = [Strategy.parse(s) if isinstance(s, str) else s for s in strategies]
    cells = [(sc, st) for sc in scenarios for st in strategies]
    tasks = [
        (sc, gen, st, draws, burn_in, seed, b, calibration)
        for sc, st in cells
        for b in range(B)
    ]
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(tasks) < 2:
        results = [_replication_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replication_task, tasks, chunksize=max(1, len(tasks) // (8 * threads))))

    rows = []
    reps = {}
    for i, (sc, st) in enumerate(cells):
        block = results[i * B:(i + 1) * B]
        reps[(sc.id, st.label)] = block
        arr = np.array([(r.estimate, r.lower, r.upper) for r in block])
        row = _metrics(arr, gen.theta, st.label, sc.id, gen.n, gen.n_e, with_se=B >= 2)
        rows.append(replace(row, retries=sum(r.retries for r in block)))
    return StudyResult(rows, reps)
