"""Data ingestion, configuration, report emission, and the command line.

Input files are CSV with a header row.  The activity table holds epoch-level
counts (subject_id, day, epoch_index, count, valid); the subjects table
holds treatment, covariates (column names starting with ``x``), outcome
columns, and an optional ``day`` column for repeated-measures outcomes.
Reports are JSON plus plot-ready CSV curve files; all floats are written
with 12 significant digits so identical inputs give byte-identical output.
"""

import argparse
import csv
import json
import re
import sys
import warnings
from dataclasses import dataclass, fields, replace

import numpy as np

from .distribution import Grid, barycenter, empirical_quantile
from .errors import (
    InvalidConfigError,
    InvalidInputError,
    NumericError,
    QfmedError,
    ReconciliationError,
)
from .mediation import (
    AnalysisDataset,
    MediationReport,
    PipelineConfig,
    bootstrap_infer,
    decompose,
    fit_pipeline,
)
from .mediator_model import SmootherConfig
from .sensitivity import SensitivityConfig, sensitivity_sweep
from .simulation import SimDesign, run_study

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Everything the pipeline needs, parsed from a key = value text file."""

    grid_size: int = 100
    bandwidth_multiplier: float = 1.0
    tolerance: float = 1e-4
    max_iter: int = 50
    eval_points: int = 51
    smooth_over_t: bool = False
    basis_kind: str = "bspline"
    basis_K: int = 5
    bootstrap_B: int = 200
    seed: int = 0
    rho_grid: tuple = ()
    mode: str = "per-subject-summary"
    min_epochs: int = 60
    outcome: str = ""

    def validate(self):
        if self.grid_size < 2:
            raise InvalidConfigError("grid_size must be >= 2")
        if self.min_epochs < 1:
            raise InvalidConfigError("min_epochs must be >= 1")
        if self.mode not in ("per-subject-summary", "repeated-measures"):
            raise InvalidConfigError(f"unknown mode {self.mode!r}")
        self.smoother().validate()

    def smoother(self) -> SmootherConfig:
        return SmootherConfig(
            bandwidth_multiplier=self.bandwidth_multiplier,
            tolerance=self.tolerance,
            max_iter=self.max_iter,
            eval_points=self.eval_points,
            smooth_over_t=self.smooth_over_t,
        )

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(smoother=self.smoother(), basis_kind=self.basis_kind, basis_K=self.basis_K)

    def grid(self) -> Grid:
        return Grid(self.grid_size)


def parse_rho_grid(spec: str) -> tuple:
    """Parse ``lo:hi:step`` into an inclusive tuple of rho values."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise InvalidConfigError(f"rho grid must be lo:hi:step, got {spec!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError as exc:
        raise InvalidConfigError(f"rho grid values must be numeric: {spec!r}") from exc
    if step <= 0 or hi < lo:
        raise InvalidConfigError(f"rho grid needs step > 0 and hi >= lo: {spec!r}")
    count = int(round((hi - lo) / step)) + 1
    values = tuple(round(lo + k * step, 12) for k in range(count) if lo + k * step <= hi + 1e-12)
    return values


def _parse_value(name: str, raw: str, kind):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise InvalidConfigError(f"config key {name}: expected boolean, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is tuple:
        if not raw:
            return ()
        if ":" in raw:
            return parse_rho_grid(raw)
        return tuple(float(p) for p in raw.split(","))
    return raw


_CONFIG_TYPES = {
    "grid_size": int, "bandwidth_multiplier": float, "tolerance": float,
    "max_iter": int, "eval_points": int, "smooth_over_t": bool,
    "basis_kind": str, "basis_K": int, "bootstrap_B": int, "seed": int,
    "rho_grid": tuple, "mode": str, "min_epochs": int, "outcome": str,
}


def parse_config(text: str) -> RunConfig:
    """Parse the structured key = value config format (# starts a comment)."""
    types = _CONFIG_TYPES
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise InvalidConfigError(f"config line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in types:
            raise InvalidConfigError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw, types[key])
        except (ValueError, InvalidConfigError) as exc:
            if isinstance(exc, InvalidConfigError):
                raise
            raise InvalidConfigError(f"config line {lineno}: bad value for {key}: {raw!r}") from exc
    config = RunConfig(**values)
    config.validate()
    return config


def serialize_config(config: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, tuple):
            text = ",".join(repr(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# input tables
# ---------------------------------------------------------------------------

_ACTIVITY_COLUMNS = ("subject_id", "day", "epoch_index", "count", "valid")


def _parse_flag(raw: str, where: str) -> bool:
    if raw.lower() in ("1", "true", "yes"):
        return True
    if raw.lower() in ("0", "false", "no"):
        return False
    raise InvalidInputError(f"{where}: bad valid flag {raw!r}")


@dataclass
class RawActivityTable:
    """Epoch-level activity counts with a validity flag."""

    subject_id: list
    day: np.ndarray
    epoch_index: np.ndarray
    count: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if np.any(self.count < 0):
            raise InvalidInputError("activity counts must be non-negative")
        key = list(zip(self.subject_id, self.day.tolist(), self.epoch_index.tolist()))
        if len(set(key)) != len(key):
            raise InvalidInputError("(subject, day, epoch) rows must be unique")

    @classmethod
    def from_csv(cls, path: str) -> "RawActivityTable":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InvalidInputError(f"{path}: empty activity file") from None
            if tuple(h.strip() for h in header) != _ACTIVITY_COLUMNS:
                raise InvalidInputError(
                    f"{path}: expected header {','.join(_ACTIVITY_COLUMNS)}, got {','.join(header)}"
                )
            sid, day, epoch, count, valid = [], [], [], [], []
            for i, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 5:
                    raise InvalidInputError(f"{path}:{i}: expected 5 fields, got {len(row)}")
                sid.append(row[0].strip())
                try:
                    day.append(int(row[1]))
                    epoch.append(int(row[2]))
                    count.append(int(row[3]))
                except ValueError as exc:
                    raise InvalidInputError(f"{path}:{i}: bad numeric field") from exc
                valid.append(_parse_flag(row[4].strip(), f"{path}:{i}"))
        return cls(sid, np.array(day), np.array(epoch), np.array(count), np.array(valid, dtype=bool))


@dataclass
class SubjectTable:
    """Per-subject (or per subject-day) treatment, covariates, and outcomes."""

    subject_id: list
    z: np.ndarray
    x: np.ndarray                 # (rows, d)
    covariate_names: tuple
    outcomes: dict                # name -> (rows,) array
    day: np.ndarray = None        # present in repeated-measures files

    @classmethod
    def from_csv(cls, path: str) -> "SubjectTable":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise InvalidInputError(f"{path}: empty subjects file") from None
            if "subject_id" not in header or "z" not in header:
                raise InvalidInputError(f"{path}: subjects file needs subject_id and z columns")
            has_day = "day" in header
            xcols = [h for h in header if h.startswith("x") and h not in ("subject_id",)]
            special = {"subject_id", "z", "day", *xcols}
            outcome_cols = [h for h in header if h not in special]
            col = {name: i for i, name in enumerate(header)}
            sid, zs, days = [], [], []
            xs = {name: [] for name in xcols}
            outs = {name: [] for name in outcome_cols}
            for i, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise InvalidInputError(f"{path}:{i}: expected {len(header)} fields, got {len(row)}")
                sid.append(row[col["subject_id"]].strip())
                try:
                    zs.append(int(row[col["z"]]))
                    if has_day:
                        days.append(int(row[col["day"]]))
                    for name in xcols:
                        xs[name].append(float(row[col[name]]))
                    for name in outcome_cols:
                        outs[name].append(float(row[col[name]]))
                except ValueError as exc:
                    raise InvalidInputError(f"{path}:{i}: bad numeric field") from exc
        z = np.array(zs)
        if not np.all((z == 0) | (z == 1)):
            raise InvalidInputError(f"{path}: z must be binary 0/1")
        x = np.column_stack([np.array(xs[name]) for name in xcols]) if xcols else np.zeros((len(sid), 0))
        if not np.all(np.isfinite(x)):
            raise InvalidInputError(f"{path}: covariates must be finite")
        outcomes = {name: np.array(vals) for name, vals in outs.items()}
        for name, vals in outcomes.items():
            if not np.all(np.isfinite(vals)):
                raise InvalidInputError(f"{path}: outcome {name} has non-finite values")
        for s in set(sid):
            if np.unique(z[np.array(sid) == s]).size != 1:
                raise InvalidInputError(f"{path}: subject {s} has more than one treatment value")
        return cls(sid, z, x, tuple(xcols), outcomes, np.array(days) if has_day else None)


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def ingest(activity: RawActivityTable, subjects: SubjectTable, config: RunConfig) -> AnalysisDataset:
    """Turn raw tables into an analysis dataset.

    Counts are transformed c -> log(1 + c); each valid (subject, day)
    becomes an empirical quantile function on the grid.  In summary mode
    days are averaged with a barycenter per subject and outcomes averaged;
    in repeated-measures mode each day stays a unit and the subject is
    recorded as the cluster for the bootstrap.
    """
    config.validate()
    grid = config.grid()
    ids_a = set(activity.subject_id)
    ids_s = set(subjects.subject_id)
    if ids_a != ids_s:
        missing = sorted(ids_a ^ ids_s)
        side = "subjects table" if ids_a - ids_s else "activity table"
        raise ReconciliationError(
            f"subject ids do not reconcile (missing from {side}): {', '.join(missing)}", missing
        )

    outcome_name = config.outcome or next(iter(subjects.outcomes), "")
    if outcome_name not in subjects.outcomes:
        raise InvalidInputError(
            f"outcome column {outcome_name!r} not found; available: {sorted(subjects.outcomes)}"
        )

    asid = np.array(activity.subject_id)
    day_quantiles = {}
    for subject in sorted(ids_a):
        rows = asid == subject
        days = np.unique(activity.day[rows])
        per_day = {}
        for day in days:
            sel = rows & (activity.day == day) & activity.valid
            n_valid = int(sel.sum())
            if n_valid < config.min_epochs:
                warnings.warn(
                    f"subject {subject} day {day}: {n_valid} valid epochs < min_epochs "
                    f"{config.min_epochs}; day dropped",
                    stacklevel=2,
                )
                continue
            counts = activity.count[sel]
            per_day[int(day)] = empirical_quantile(np.log1p(counts.astype(np.float64)), grid)
        if not per_day:
            raise InvalidInputError(f"subject {subject} lost all days to the min_epochs filter")
        day_quantiles[subject] = per_day

    ssid = np.array(subjects.subject_id)
    ordered = sorted(ids_a)
    q_rows, x_rows, z_rows, y_rows, groups, unit_days = [], [], [], [], [], []

    if config.mode == "per-subject-summary":
        for gi, subject in enumerate(ordered):
            srows = np.nonzero(ssid == subject)[0]
            per_day = day_quantiles[subject]
            q_rows.append(barycenter(list(per_day.values())).values)
            x_rows.append(subjects.x[srows[0]])
            z_rows.append(int(subjects.z[srows[0]]))
            y_rows.append(float(np.mean(subjects.outcomes[outcome_name][srows])))
            groups.append(gi)
            unit_days.append(-1)
    else:
        if subjects.day is None:
            raise InvalidInputError("repeated-measures mode needs a day column in the subjects table")
        for gi, subject in enumerate(ordered):
            srows = np.nonzero(ssid == subject)[0]
            per_day = day_quantiles[subject]
            kept = 0
            for r in srows:
                day = int(subjects.day[r])
                if day not in per_day:
                    warnings.warn(
                        f"subject {subject} day {day}: no retained activity; unit dropped", stacklevel=2
                    )
                    continue
                q_rows.append(per_day[day].values)
                x_rows.append(subjects.x[r])
                z_rows.append(int(subjects.z[r]))
                y_rows.append(float(subjects.outcomes[outcome_name][r]))
                groups.append(gi)
                unit_days.append(day)
                kept += 1
            if kept == 0:
                raise InvalidInputError(f"subject {subject} has no usable (day, outcome) units")

    dataset = AnalysisDataset(
        grid=grid,
        q_values=np.stack(q_rows),
        x=np.stack(x_rows) if x_rows and len(x_rows[0]) else np.zeros((len(q_rows), 0)),
        z=np.array(z_rows),
        y=np.array(y_rows),
        groups=np.array(groups),
        subject_ids=tuple(ordered),
        covariate_names=subjects.covariate_names,
        outcome_name=outcome_name,
        mode=config.mode,
    )
    return dataset


# ---------------------------------------------------------------------------
# dataset and report files
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    return f"{float(value):.12g}"


def _round_floats(obj):
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dump_json(obj, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round_floats(obj), fh, sort_keys=True, indent=1)
        fh.write("\n")


def save_dataset(dataset: AnalysisDataset, path: str):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "grid_size": dataset.grid.size,
        "mode": dataset.mode,
        "outcome_name": dataset.outcome_name,
        "covariate_names": list(dataset.covariate_names),
        "subject_ids": list(dataset.subject_ids),
        "groups": dataset.groups.tolist(),
        "z": dataset.z.astype(int).tolist(),
        "y": dataset.y.tolist(),
        "x": dataset.x.tolist(),
        "q_values": dataset.q_values.tolist(),
    }
    dump_json(doc, path)


def load_dataset(path: str) -> AnalysisDataset:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InvalidInputError(f"{path}: unsupported dataset schema {doc.get('schema_version')!r}")
    return AnalysisDataset(
        grid=Grid(int(doc["grid_size"])),
        q_values=np.array(doc["q_values"], dtype=np.float64),
        x=np.array(doc["x"], dtype=np.float64).reshape(len(doc["y"]), -1),
        z=np.array(doc["z"]),
        y=np.array(doc["y"], dtype=np.float64),
        groups=np.array(doc["groups"]),
        subject_ids=tuple(doc["subject_ids"]),
        covariate_names=tuple(doc["covariate_names"]),
        outcome_name=doc["outcome_name"],
        mode=doc["mode"],
    )


def write_report(report: MediationReport, path: str, sensitivity_results=None, config: RunConfig = None):
    doc = report.to_dict()
    if sensitivity_results is not None:
        doc["sensitivity"] = [
            {
                "rho": float(res.rho.values[0]) if np.ptp(res.rho.values) == 0 else res.rho.values.tolist(),
                "indirect_total_rho": res.indirect_total_rho,
                "converged": res.converged,
                "iterations": res.iterations,
                "effective_rank": res.effective_rank,
            }
            for res in sensitivity_results
        ]
    if config is not None:
        doc["config"] = {f.name: (list(v) if isinstance(v := getattr(config, f.name), tuple) else v)
                         for f in fields(RunConfig)}
    dump_json(doc, path)


def write_curves_csv(report: MediationReport, path: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "alpha", "beta", "indirect", "p_pointwise", "ci_lo", "ci_hi"])
        for g in range(report.grid.size):
            row = [
                _fmt(report.grid.points[g]),
                _fmt(report.alpha_curve.values[g]),
                _fmt(report.beta_curve[g]),
                _fmt(report.indirect_curve[g]),
            ]
            if report.has_inference:
                row += [_fmt(report.p_pointwise[g]), _fmt(report.ci_lower[g]), _fmt(report.ci_upper[g])]
            else:
                row += ["", "", ""]
            writer.writerow(row)


def write_sensitivity_csv(results, path: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "indirect_total_rho", "converged"])
        for res in results:
            rho = res.rho.values
            label = _fmt(rho[0]) if np.ptp(rho) == 0 else "profile"
            writer.writerow([label, _fmt(res.indirect_total_rho), str(bool(res.converged)).lower()])


def write_study(result, out_dir: str):
    import os

    os.makedirs(out_dir, exist_ok=True)
    dump_json(result.to_dict(), os.path.join(out_dir, "study.json"))
    with open(os.path.join(out_dir, "curves.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "rejection_rate", "mean_alpha", "mean_beta", "mean_indirect"])
        for g in range(result.grid.size):
            writer.writerow([
                _fmt(result.grid.points[g]),
                _fmt(result.pointwise_rates[g]),
                _fmt(result.mean_alpha[g]),
                _fmt(result.mean_beta[g]),
                _fmt(result.mean_indirect[g]),
            ])


# ---------------------------------------------------------------------------
# pipeline orchestration
# ---------------------------------------------------------------------------

def run_pipeline(dataset: AnalysisDataset, config: RunConfig, with_bootstrap: bool = True):
    """Transform, fit, decompose, optionally bootstrap and sweep rho.

    Returns (report, sensitivity_results_or_None).
    """
    config.validate()
    pipeline = config.pipeline()
    med_fit, out_fit, alpha = fit_pipeline(dataset, pipeline)
    if with_bootstrap:
        report = bootstrap_infer(dataset, pipeline, B=config.bootstrap_B, seed=config.seed)
    else:
        report = decompose(med_fit, out_fit, dataset)
    results = None
    if config.rho_grid:
        basis = pipeline.make_basis(dataset.grid)
        results = sensitivity_sweep(dataset, med_fit, out_fit, config.rho_grid, basis, SensitivityConfig())
    return report, results


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="qfmed", description="Mediation analysis with distribution-valued mediators.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_dataset_args(p):
        p.add_argument("--dataset", help="dataset JSON produced by the ingest subcommand")
        p.add_argument("--activity", help="activity CSV (epoch counts)")
        p.add_argument("--subjects", help="subjects CSV (treatment, covariates, outcomes)")
        p.add_argument("--config", help="run config file")
        p.add_argument("--out", required=True, help="output directory")

    p_ingest = sub.add_parser("ingest", help="build a dataset from raw CSV tables")
    p_ingest.add_argument("--activity", required=True)
    p_ingest.add_argument("--subjects", required=True)
    p_ingest.add_argument("--config")
    p_ingest.add_argument("--out", required=True)

    p_fit = sub.add_parser("fit", help="point estimates only")
    add_dataset_args(p_fit)

    p_test = sub.add_parser("test", help="bootstrap inference")
    add_dataset_args(p_test)
    p_test.add_argument("--boot", type=int, default=None, help="bootstrap replicates")
    p_test.add_argument("--seed", type=int, required=True)

    p_sens = sub.add_parser("sensitivity", help="rho sweep on top of the fit")
    add_dataset_args(p_sens)
    p_sens.add_argument("--rho-grid", required=True, help="lo:hi:step")
    p_sens.add_argument("--boot", type=int, default=None)
    p_sens.add_argument("--seed", type=int, required=True)
    # let values like -0.3:0.3:0.1 pass as arguments rather than flags
    p_sens._negative_number_matcher = re.compile(r"^-[\d.:]+$")

    p_sim = sub.add_parser("simulate", help="run a synthetic study")
    p_sim.add_argument("--sim", type=int, required=True, choices=(1, 2, 3, 4))
    p_sim.add_argument("--n", type=int, default=300)
    p_sim.add_argument("--runs", type=int, default=200)
    p_sim.add_argument("--boot", type=int, default=200)
    p_sim.add_argument("--level", type=float, default=0.05)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--grid", type=int, default=100)
    p_sim.add_argument("--jobs", type=int, default=1)
    p_sim.add_argument("--out", required=True)

    p_rep = sub.add_parser("report", help="print a human-readable report summary")
    p_rep.add_argument("--report", required=True, help="report JSON path")

    return parser


def _load_inputs(args, parser) -> tuple:
    config = load_config(args.config) if args.config else RunConfig()
    if args.dataset:
        return load_dataset(args.dataset), config
    if args.activity and args.subjects:
        activity = RawActivityTable.from_csv(args.activity)
        subjects = SubjectTable.from_csv(args.subjects)
        return ingest(activity, subjects, config), config
    parser.error("missing --dataset (or --activity and --subjects)")


def _emit(report, results, config, out_dir):
    import os

    os.makedirs(out_dir, exist_ok=True)
    write_report(report, os.path.join(out_dir, "report.json"), results, config)
    write_curves_csv(report, os.path.join(out_dir, "curves.csv"))
    if results is not None:
        write_sensitivity_csv(results, os.path.join(out_dir, "sensitivity.csv"))


def _print_report_summary(doc):
    print(f"direct effect (gamma): {doc['gamma']:.6g}")
    print(f"total indirect effect: {doc['indirect_total']:.6g}")
    print(f"total effect:          {doc['total_effect']:.6g}")
    if doc.get("p_global") is not None:
        print(f"global p-value:        {doc['p_global']:.4g}  (B={doc['B']})")
    for entry in doc.get("sensitivity") or []:
        print(
            f"rho={entry['rho']}: indirect={entry['indirect_total_rho']:.6g} "
            f"(converged={entry['converged']})"
        )


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 1
    try:
        if args.command == "ingest":
            config = load_config(args.config) if args.config else RunConfig()
            activity = RawActivityTable.from_csv(args.activity)
            subjects = SubjectTable.from_csv(args.subjects)
            dataset = ingest(activity, subjects, config)
            import os

            os.makedirs(args.out, exist_ok=True)
            save_dataset(dataset, os.path.join(args.out, "dataset.json"))
            print(f"{dataset.n_units} units, {dataset.n_subjects} subjects, grid {dataset.grid.size}")
        elif args.command == "fit":
            dataset, config = _load_inputs(args, parser)
            report, results = run_pipeline(dataset, config, with_bootstrap=False)
            _emit(report, results, config, args.out)
        elif args.command in ("test", "sensitivity"):
            dataset, config = _load_inputs(args, parser)
            overrides = {"seed": args.seed}
            if args.boot is not None:
                overrides["bootstrap_B"] = args.boot
            if args.command == "sensitivity":
                overrides["rho_grid"] = parse_rho_grid(getattr(args, "rho_grid"))
            config = replace(config, **overrides)
            report, results = run_pipeline(dataset, config, with_bootstrap=True)
            _emit(report, results, config, args.out)
            print(f"p_global = {report.p_global:.4g}")
        elif args.command == "simulate":
            design = SimDesign(sim_id=args.sim, n=args.n, grid=Grid(args.grid), seed=0)
            result = run_study(design, runs=args.runs, B=args.boot, level=args.level,
                               seed=args.seed, n_jobs=args.jobs)
            write_study(result, args.out)
            print(f"sim {args.sim}: global rejection rate {result.global_rate:.4g} over {args.runs} runs")
        elif args.command == "report":
            with open(args.report, "r", encoding="utf-8") as fh:
                _print_report_summary(json.load(fh))
    except (InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except QfmedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
