"""Synthetic designs and the type-I-error / power study harness.

Four designs share a common recipe: draw covariates, build transform-space
curves g_i(t), map them through the inverse transform (anchor 0) to obtain
mediator quantile functions, and generate a scalar outcome.  Designs 1-3
have no indirect effect (either no treatment effect on the mediator or no
mediator effect on the outcome); design 4 has both.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .distribution import Grid, inverse_batch
from .errors import InvalidInputError, QfmedError
from .mediation import AnalysisDataset, PipelineConfig, bootstrap_infer

OUTCOME_SIGMA = 0.05


@dataclass(frozen=True)
class SimDesign:
    """One of the four synthetic designs.

    sim 1: mediator is pure noise, outcome has no mediator term (null).
    sim 2: treatment shifts the mediator, outcome has no mediator term (null).
    sim 3: mediator affects the outcome, treatment does not shift it (null).
    sim 4: both paths active (non-zero indirect effect).
    """

    sim_id: int
    n: int = 300
    grid: Grid = Grid(100)
    seed: int = 0
    sigma_eta: float = OUTCOME_SIGMA

    def __post_init__(self):
        if self.sim_id not in (1, 2, 3, 4):
            raise InvalidInputError(f"sim_id must be in 1..4, got {self.sim_id}")
        if self.n < 4 or self.n % 2:
            raise InvalidInputError("n must be even and at least 4 for the half/half split")

    @property
    def mediator_has_h(self) -> bool:
        return self.sim_id in (2, 3, 4)

    @property
    def mediator_has_treatment(self) -> bool:
        return self.sim_id in (2, 4)

    @property
    def outcome_has_mediator(self) -> bool:
        return self.sim_id in (3, 4)


def base_curve(t: np.ndarray, x1: float = 10.0, x2: float = 12.0) -> np.ndarray:
    """The common transform-space shape -cos(2 pi t)/2 + x1 t^2 - x2 t + 5."""
    return -np.cos(2.0 * np.pi * t) / 2.0 + x1 * t * t - x2 * t + 5.0


def generate(design: SimDesign) -> AnalysisDataset:
    """Draw one dataset; deterministic given the design's seed.

    Draw order is fixed: x1, x2, noise scores, outcome noise, then the
    half/half treatment assignment permutation.
    """
    rng = np.random.default_rng(design.seed)
    n = design.n
    t = design.grid.points

    x1 = rng.normal(10.0, 1.0, n)
    x2 = rng.normal(12.0, 1.0, n)
    e1 = rng.normal(0.0, 1.0, n)
    e2 = rng.normal(0.0, 1.0, n)
    eta = rng.normal(0.0, design.sigma_eta, n)
    z = np.zeros(n, dtype=np.uint8)
    z[rng.permutation(n)[: n // 2]] = 1

    g = e1[:, None] * np.sin(np.pi * t) + e2[:, None] * np.sin(2.0 * np.pi * t)
    if design.mediator_has_h:
        g += -np.cos(2.0 * np.pi * t) / 2.0 + np.outer(x1, t * t) - np.outer(x2, t) + 5.0
    if design.mediator_has_treatment:
        g -= 2.0 * np.outer(z, t)

    mediators = inverse_batch(g, np.zeros(n), design.grid)
    y = 0.05 * x1 - 0.05 * x2 + z + eta
    if design.outcome_has_mediator:
        y = y + design.grid.delta * (mediators @ t)

    return AnalysisDataset(
        grid=design.grid,
        q_values=mediators,
        x=np.column_stack([x1, x2]),
        z=z,
        y=y,
        covariate_names=("x1", "x2"),
        outcome_name="y",
    )


@dataclass(frozen=True)
class StudyResult:
    sim_id: int
    n: int
    grid: Grid
    runs: int
    B: int
    level: float
    seed: int
    global_rate: float
    pointwise_rates: np.ndarray
    mean_alpha: np.ndarray
    mean_beta: np.ndarray
    mean_indirect: np.ndarray
    n_failures: int

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "sim_id": self.sim_id,
            "n": self.n,
            "grid_size": self.grid.size,
            "runs": self.runs,
            "B": self.B,
            "level": self.level,
            "seed": self.seed,
            "global_rate": self.global_rate,
            "n_failures": self.n_failures,
            "curves": {
                "t": self.grid.points.tolist(),
                "rejection_rate": self.pointwise_rates.tolist(),
                "mean_alpha": self.mean_alpha.tolist(),
                "mean_beta": self.mean_beta.tolist(),
                "mean_indirect": self.mean_indirect.tolist(),
            },
        }


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(2, np.uint64)[0])


def _study_worker(args):
    design, run_index, data_seed, boot_seed, B, level, config = args
    data = generate(replace(design, seed=data_seed))
    report = bootstrap_infer(data, config, B=B, seed=boot_seed)
    return {
        "run": run_index,
        "global_reject": report.p_global <= level,
        "pointwise_reject": report.p_pointwise <= level,
        "alpha": report.alpha_curve.values,
        "beta": report.beta_curve,
        "indirect": report.indirect_curve,
    }


def run_study(
    design: SimDesign,
    runs: int,
    B: int,
    level: float = 0.05,
    seed: int = 0,
    config: PipelineConfig = PipelineConfig(),
    n_jobs: int = 1,
) -> StudyResult:
    """Monte Carlo study: generate, fit, bootstrap-test, accumulate rejections.

    Per-run seeds derive from independent substreams of ``seed``, and
    aggregation is by run index, so results are identical for any
    ``n_jobs``.  Runs whose pipeline raises are counted as failures;
    more than 2% failures aborts the study.
    """
    if runs < 1:
        raise InvalidInputError(f"runs must be >= 1, got {runs}")
    if not (0 < level < 1):
        raise InvalidInputError("level must be in (0, 1)")
    root = np.random.SeedSequence(seed)
    tasks = []
    for r, child in enumerate(root.spawn(runs)):
        data_ss, boot_ss = child.spawn(2)
        tasks.append((design, r, _seed_int(data_ss), _seed_int(boot_ss), B, level, config))

    results = [None] * runs
    failures = 0
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for out in pool.map(_try_worker, tasks, chunksize=max(1, runs // (4 * n_jobs))):
                if isinstance(out, dict):
                    results[out["run"]] = out
                else:
                    failures += 1
    else:
        for task in tasks:
            out = _try_worker(task)
            if isinstance(out, dict):
                results[out["run"]] = out
            else:
                failures += 1

    if failures > 0.02 * runs:
        raise QfmedError(f"{failures} of {runs} study runs failed (ceiling is 2%)")

    kept = [r for r in results if r is not None]
    G = design.grid.size
    global_rate = float(np.mean([r["global_reject"] for r in kept]))
    pointwise = np.mean(np.stack([r["pointwise_reject"] for r in kept]), axis=0)
    mean_alpha = np.mean(np.stack([r["alpha"] for r in kept]), axis=0)
    mean_beta = np.mean(np.stack([r["beta"] for r in kept]), axis=0)
    mean_indirect = np.mean(np.stack([r["indirect"] for r in kept]), axis=0)
    assert pointwise.shape == (G,)

    return StudyResult(
        sim_id=design.sim_id,
        n=design.n,
        grid=design.grid,
        runs=runs,
        B=B,
        level=level,
        seed=seed,
        global_rate=global_rate,
        pointwise_rates=pointwise,
        mean_alpha=mean_alpha,
        mean_beta=mean_beta,
        mean_indirect=mean_indirect,
        n_failures=failures,
    )


def _try_worker(task):
    try:
        return _study_worker(task)
    except QfmedError:
        return task[1]
