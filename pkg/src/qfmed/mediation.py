"""Effect decomposition and bootstrap inference.

The total treatment effect splits into the direct effect (the treatment
coefficient of the outcome regression) and the indirect effect transmitted
through the mediator distribution, the quadrature integral of
beta(t) * alpha(t).  Inference resamples whole subjects with replacement,
refits the entire pipeline per replicate, and applies a two-sided
indicator rule for p-values.
"""

from dataclasses import dataclass

import numpy as np

from .distribution import Grid, transform_batch
from .errors import (
    BootstrapFailureError,
    GridMismatchError,
    InvalidConfigError,
    InvalidInputError,
    SingularDesignError,
)
from .mediator_model import (
    AdditiveMediatorFit,
    AlphaCurve,
    MediatorDataset,
    SmootherConfig,
    estimate_alpha,
    fit_additive,
)
from .outcome_model import BasisSet, OutcomeFit, fit_outcome, loadings_matrix, make_basis

MODES = ("per-subject-summary", "repeated-measures")


@dataclass(frozen=True)
class AnalysisDataset:
    """Observed units: quantile mediator, covariates, treatment, outcome.

    In repeated-measures mode a unit is a (subject, day) pair and ``groups``
    records which subject each unit belongs to; the subject is then the
    resampling unit of the cluster bootstrap.
    """

    grid: Grid
    q_values: np.ndarray       # (n, G) monotone rows
    x: np.ndarray              # (n, d)
    z: np.ndarray              # (n,)
    y: np.ndarray              # (n,)
    groups: np.ndarray = None  # (n,) subject index per unit
    subject_ids: tuple = ()
    covariate_names: tuple = ()
    outcome_name: str = "y"
    mode: str = "per-subject-summary"

    def __post_init__(self):
        q = np.ascontiguousarray(self.q_values, dtype=np.float64)
        x = np.ascontiguousarray(np.atleast_2d(self.x), dtype=np.float64)
        z = np.asarray(self.z)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        n = q.shape[0]
        if x.shape[0] != n:
            x = x.reshape(n, -1)
        if q.ndim != 2 or q.shape[1] != self.grid.size:
            raise InvalidInputError("q_values must have shape (n, grid.size)")
        if np.any(np.diff(q, axis=1) < 0):
            raise InvalidInputError("mediator quantile curves must be non-decreasing")
        if not np.all((z == 0) | (z == 1)):
            raise InvalidInputError("treatment must be binary 0/1")
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("outcomes must be finite")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}")
        groups = self.groups
        if groups is None:
            groups = np.arange(n)
        groups = np.asarray(groups, dtype=np.int64)
        if groups.shape != (n,):
            raise InvalidInputError("groups must have length n")
        sids = tuple(self.subject_ids) if self.subject_ids else tuple(str(g) for g in np.unique(groups))
        for i, zg in enumerate(np.unique(groups)):
            arm = np.unique(z[groups == zg])
            if arm.size != 1:
                raise InvalidInputError(f"subject {sids[i] if i < len(sids) else zg} has mixed treatment values")
        object.__setattr__(self, "q_values", q)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z.astype(np.uint8))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "subject_ids", sids)
        object.__setattr__(
            self,
            "covariate_names",
            tuple(self.covariate_names) if self.covariate_names else tuple(f"x{j + 1}" for j in range(x.shape[1])),
        )

    @property
    def n_units(self) -> int:
        return self.q_values.shape[0]

    @property
    def n_subjects(self) -> int:
        return int(np.unique(self.groups).size)

    def cluster_rows(self):
        """List of unit-row index arrays, one per subject."""
        order = np.argsort(self.groups, kind="stable")
        uniq, starts = np.unique(self.groups[order], return_index=True)
        return [order[s:e] for s, e in zip(starts, list(starts[1:]) + [len(order)])]

    def take_units(self, rows: np.ndarray) -> "AnalysisDataset":
        return AnalysisDataset(
            grid=self.grid,
            q_values=self.q_values[rows],
            x=self.x[rows],
            z=self.z[rows],
            y=self.y[rows],
            groups=self.groups[rows],
            subject_ids=self.subject_ids,
            covariate_names=self.covariate_names,
            outcome_name=self.outcome_name,
            mode=self.mode,
        )


@dataclass(frozen=True)
class PipelineConfig:
    smoother: SmootherConfig = SmootherConfig()
    basis_kind: str = "bspline"
    basis_K: int = 5

    def make_basis(self, grid: Grid) -> BasisSet:
        return make_basis(self.basis_kind, self.basis_K, grid)


@dataclass
class MediationReport:
    grid: Grid
    gamma: float
    alpha_curve: AlphaCurve
    beta_curve: np.ndarray
    indirect_curve: np.ndarray
    indirect_total: float
    total_effect: float
    p_global: float = None
    p_pointwise: np.ndarray = None
    ci_lower: np.ndarray = None
    ci_upper: np.ndarray = None
    ci_global: tuple = None
    B: int = 0
    seed: int = None
    n_discarded: int = 0

    @property
    def has_inference(self) -> bool:
        return self.p_global is not None

    def to_dict(self) -> dict:
        out = {
            "schema_version": 1,
            "gamma": self.gamma,
            "indirect_total": self.indirect_total,
            "total_effect": self.total_effect,
            "p_global": self.p_global,
            "B": self.B,
            "seed": self.seed,
            "n_discarded": self.n_discarded,
            "ci_global": list(self.ci_global) if self.ci_global is not None else None,
            "curves": {
                "t": self.grid.points.tolist(),
                "alpha": self.alpha_curve.values.tolist(),
                "beta": self.beta_curve.tolist(),
                "indirect": self.indirect_curve.tolist(),
                "p_pointwise": self.p_pointwise.tolist() if self.p_pointwise is not None else None,
                "ci_lo": self.ci_lower.tolist() if self.ci_lower is not None else None,
                "ci_hi": self.ci_upper.tolist() if self.ci_upper is not None else None,
            },
        }
        return out


def mediator_dataset(data: AnalysisDataset) -> MediatorDataset:
    """Transform the dataset's quantile mediators into transform space."""
    values, anchors = transform_batch(data.q_values, data.grid)
    return MediatorDataset(data.grid, values, anchors, data.x, data.z)


def fit_pipeline(data: AnalysisDataset, config: PipelineConfig = PipelineConfig(), basis: BasisSet = None):
    """Fit mediator and outcome models; returns (med_fit, out_fit, alpha)."""
    med_data = mediator_dataset(data)
    med_fit = fit_additive(med_data, config.smoother)
    if basis is None:
        basis = config.make_basis(data.grid)
    lam = loadings_matrix(data.q_values, basis)
    out_fit = fit_outcome(data.y, data.z, data.x, lam, basis)
    alpha = estimate_alpha(med_fit, med_data)
    return med_fit, out_fit, alpha


def decompose(med_fit: AdditiveMediatorFit, out_fit: OutcomeFit, data: AnalysisDataset) -> MediationReport:
    """Point estimates of the effect decomposition (no inference fields)."""
    if med_fit.grid != data.grid or out_fit.basis.grid != data.grid:
        raise GridMismatchError("fits and data must share the grid")
    alpha = estimate_alpha(med_fit, mediator_dataset(data))
    return _assemble_report(data.grid, out_fit.gamma, alpha, out_fit.beta_curve)


def _assemble_report(grid: Grid, gamma: float, alpha: AlphaCurve, beta_curve: np.ndarray) -> MediationReport:
    indirect_curve = beta_curve * alpha.values
    indirect_total = float(grid.delta * indirect_curve.sum())
    return MediationReport(
        grid=grid,
        gamma=float(gamma),
        alpha_curve=alpha,
        beta_curve=beta_curve,
        indirect_curve=indirect_curve,
        indirect_total=indirect_total,
        total_effect=float(gamma) + indirect_total,
    )


def bootstrap_pvalue(estimate: float, replicates: np.ndarray) -> float:
    """Two-sided bootstrap p-value.

    p = 2 * #{xi_b - xi >= xi} / B when xi >= 0 and
    p = 2 * #{xi_b - xi <  xi} / B when xi <  0, clamped to [0, 1].
    """
    reps = np.asarray(replicates, dtype=np.float64)
    if reps.size == 0:
        raise InvalidInputError("no bootstrap replicates")
    if estimate >= 0:
        p = 2.0 * np.count_nonzero(reps - estimate >= estimate) / reps.size
    else:
        p = 2.0 * np.count_nonzero(reps - estimate < estimate) / reps.size
    return float(min(max(p, 0.0), 1.0))


def bootstrap_unit_rows(data: AnalysisDataset, B: int, seed: int):
    """Yield the unit-row index array of every bootstrap replicate.

    The resampling unit is the subject: a draw brings all of a subject's
    units (all its days in repeated-measures mode).  Replicate b uses the
    b-th independent substream spawned from ``seed``.
    """
    clusters = data.cluster_rows()
    n_subj = len(clusters)
    trivial = data.n_units == n_subj and all(len(c) == 1 for c in clusters)
    for child in np.random.SeedSequence(seed).spawn(B):
        rng = np.random.default_rng(child)
        pick = rng.integers(0, n_subj, size=n_subj)
        yield pick if trivial else np.concatenate([clusters[p] for p in pick])


def bootstrap_infer(
    data: AnalysisDataset,
    config: PipelineConfig = PipelineConfig(),
    B: int = 200,
    seed: int = 0,
) -> MediationReport:
    """Cluster bootstrap over subjects with a full pipeline refit per replicate.

    Deterministic given (data, config, B, seed): replicate b draws from an
    independent substream spawned from the seed, so results do not depend
    on any execution schedule.  Replicates that resample a single arm, or
    whose resampled design is rank deficient, are discarded and counted;
    more than 10% discarded is an error.  p-values use the retained
    replicates.
    """
    if B < 100:
        raise InvalidConfigError(f"bootstrap needs B >= 100, got {B}")
    basis = config.make_basis(data.grid)
    med_fit, out_fit, alpha = fit_pipeline(data, config, basis)
    report = _assemble_report(data.grid, out_fit.gamma, alpha, out_fit.beta_curve)

    # The transform and the loadings are row-local, so compute them once on
    # the full data and index rows per replicate.
    med_full = mediator_dataset(data)
    lam_full = loadings_matrix(data.q_values, basis)

    xi = np.empty(B)
    curves = np.empty((B, data.grid.size))
    kept = 0
    discarded = 0
    for rows in bootstrap_unit_rows(data, B, seed):
        z_rep = data.z[rows]
        if z_rep.min() == z_rep.max():
            discarded += 1
            continue
        med_rep = MediatorDataset(
            data.grid, med_full.values[rows], med_full.anchors[rows], data.x[rows], z_rep
        )
        try:
            fit_b = fit_additive(med_rep, config.smoother)
            out_b = fit_outcome(data.y[rows], z_rep, med_rep.x, lam_full[rows], basis)
        except SingularDesignError:
            discarded += 1
            continue
        alpha_b = estimate_alpha(fit_b, med_rep)
        curve_b = out_b.beta_curve * alpha_b.values
        curves[kept] = curve_b
        xi[kept] = data.grid.delta * curve_b.sum()
        kept += 1

    if discarded > 0.1 * B:
        raise BootstrapFailureError(f"{discarded} of {B} bootstrap replicates had a single arm")
    xi = xi[:kept]
    curves = curves[:kept]

    report.p_global = bootstrap_pvalue(report.indirect_total, xi)
    report.p_pointwise = np.array(
        [bootstrap_pvalue(report.indirect_curve[g], curves[:, g]) for g in range(data.grid.size)]
    )
    report.ci_lower = np.percentile(curves, 2.5, axis=0)
    report.ci_upper = np.percentile(curves, 97.5, axis=0)
    report.ci_global = (float(np.percentile(xi, 2.5)), float(np.percentile(xi, 97.5)))
    report.B = B
    report.seed = seed
    report.n_discarded = discarded
    return report


def pointwise_null_test(report: MediationReport, level: float = 0.05) -> np.ndarray:
    """Reject/accept flags per grid point at the given level."""
    if not report.has_inference or report.p_pointwise is None:
        raise InvalidInputError("report has no inference fields; run bootstrap_infer first")
    if not (0 < level < 1):
        raise InvalidConfigError("level must be in (0, 1)")
    return report.p_pointwise <= level
