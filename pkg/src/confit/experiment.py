"""Experiment orchestration: fold preparation, per-(algorithm, alpha, fold)
runs on a bounded worker pool, and machine-readable artifacts.

Artifacts per run directory:

* ``history_<algorithm>_<loss>_a<alpha>.jsonl``: one line-delimited record
  stream per (algorithm, alpha), holding a file-level meta line followed by
  every fold's iteration records (tagged with their fold);
* ``summary.csv``: final-metric rows per fold plus mean/std aggregate rows;
* ``run_meta.json``: config echo, seed, and convergence verdicts.

Numbers are serialized with shortest-round-trip formatting, so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, resolved_dataset_path, validate_dataset_columns
from .constraints import (ConstraintSet, DidiSpec, build_box,
                          build_didi_constraints, didi_value, intersect)
from .data import (ColumnRoles, Dataset, apply_normalization, fold_indices,
                   load_csv, normalize, ordinal_encode)
from .driver import IterationHistory, RunConfig, run
from .errors import ConfitError, DataError
from .metrics import SERIES_NAMES, FoldSummary, significance_flag, summarize_folds

log = logging.getLogger("confit")


@dataclass(frozen=True)
class FoldData:
    index: int
    train: Dataset
    test: Dataset


def prepare_folds(cfg: ExperimentConfig) -> list[FoldData]:
    """Load, encode, split, and normalize according to the config. In `train`
    normalization mode the scaling is fitted on each training fold only."""
    roles = ColumnRoles(target=cfg.dataset.target, drop=cfg.dataset.drop,
                        categorical=cfg.dataset.categorical,
                        protected=cfg.dataset.protected)
    table = load_csv(resolved_dataset_path(cfg), roles)
    if table.dropped_rows:
        log.info("dropped %d rows with missing values", table.dropped_rows)
    table = ordinal_encode(table, [c for c in cfg.dataset.categorical])
    protected_names = list(cfg.dataset.protected)

    def attach_protected(ds: Dataset) -> Dataset:
        indices = [ds.feature_names.index(name) for name in protected_names]
        return ds.with_protected(indices)

    folds = fold_indices(table.n, cfg.run.folds, cfg.run.seed)
    all_rows = np.arange(table.n)
    out = []
    if cfg.run.normalization == "full":
        full = attach_protected(normalize(table, cfg.dataset.target))
        for j, test_rows in enumerate(folds):
            train_rows = np.setdiff1d(all_rows, test_rows)
            out.append(FoldData(j, full.select(train_rows), full.select(test_rows)))
        return out
    for j, test_rows in enumerate(folds):
        train_rows = np.setdiff1d(all_rows, test_rows)
        train = attach_protected(normalize(table.select_rows(train_rows), cfg.dataset.target))
        test = attach_protected(apply_normalization(table.select_rows(test_rows),
                                                    cfg.dataset.target, train))
        out.append(FoldData(j, train, test))
    return out


def build_constraints(cfg: ExperimentConfig, train: Dataset) -> ConstraintSet:
    parts = []
    if cfg.dataset.protected:
        if cfg.constraint.epsilon is not None:
            eps = cfg.constraint.epsilon
        else:
            base = didi_value(train.y, train.protected)
            if base <= 0:
                raise DataError("training disparate-impact index is zero; the "
                                "fractional constraint is vacuous")
            eps = cfg.constraint.fraction * base
        spec = DidiSpec(protected=train.protected, epsilon=eps,
                        fraction=cfg.constraint.fraction or 1.0)
        parts.append(build_didi_constraints(spec.protected, spec.epsilon, train.n))
    if cfg.constraint.box is not None:
        parts.append(build_box(cfg.constraint.box[0], cfg.constraint.box[1], train.n))
    if not parts:
        raise ConfitError("config declares neither protected columns nor a box; "
                          "there is nothing to constrain")
    cs = parts[0]
    for extra in parts[1:]:
        cs = intersect(cs, extra)
    return cs


def _run_one(cfg: ExperimentConfig, algorithm: str, alpha: float, fold: FoldData) -> IterationHistory:
    constraints = build_constraints(cfg, fold.train)
    run_config = RunConfig(
        alpha=alpha, constraints=constraints, beta=cfg.run.beta,
        iterations=cfg.run.iterations, loss=cfg.run.loss, learner=cfg.run.learner,
        algorithm=algorithm, solver=cfg.solver, seed=cfg.run.seed)
    return run(run_config, fold.train, fold.test)


def _run_task(args):
    cfg, algorithm, alpha, fold = args
    return _run_one(cfg, algorithm, alpha, fold)


def format_float(x) -> str:
    return repr(float(x))


def _alpha_tag(alpha: float) -> str:
    return repr(float(alpha))


def history_filename(algorithm: str, loss_kind: str, alpha: float) -> str:
    return f"history_{algorithm}_{loss_kind}_a{_alpha_tag(alpha)}.jsonl"


def run_experiment(cfg: ExperimentConfig, jobs: int = 1,
                   out_dir: str | None = None) -> dict:
    """Execute every (algorithm, alpha, fold) run and write artifacts.

    Tasks are independent; with jobs > 1 they are dispatched to a process
    pool, and results are always collected in task order so outputs do not
    depend on scheduling.
    """
    validate_dataset_columns(cfg)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    folds = prepare_folds(cfg)
    tasks = [(cfg, algorithm, alpha, fold)
             for algorithm in cfg.run.algorithms
             for alpha in cfg.run.alphas
             for fold in folds]
    log.info("running %d tasks (%d algorithms x %d alphas x %d folds), jobs=%d",
             len(tasks), len(cfg.run.algorithms), len(cfg.run.alphas), len(folds), jobs)
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]

    grouped: dict[tuple[str, float], list[IterationHistory]] = {}
    for (cfg_, algorithm, alpha, fold), history in zip(tasks, results):
        grouped.setdefault((algorithm, alpha), []).append(history)

    artifacts = {"histories": [], "summary": str(out / "summary.csv"),
                 "meta": str(out / "run_meta.json")}
    summary_rows = []
    meta_runs = []
    for (algorithm, alpha), histories in grouped.items():
        fname = history_filename(algorithm, cfg.run.loss.kind, alpha)
        path = out / fname
        write_history_file(path, cfg, algorithm, alpha, histories)
        artifacts["histories"].append(str(path))
        summary = summarize_folds(histories)
        for j, h in enumerate(histories):
            summary_rows.append({
                "algorithm": algorithm, "alpha": alpha, "fold": j, "kind": "fold",
                **{name: summary.finals[name][j] for name in SERIES_NAMES},
            })
        summary_rows.append({
            "algorithm": algorithm, "alpha": alpha, "fold": "", "kind": "mean",
            **{name: summary.mean[name] for name in SERIES_NAMES},
        })
        summary_rows.append({
            "algorithm": algorithm, "alpha": alpha, "fold": "", "kind": "std",
            **{name: summary.std[name] for name in SERIES_NAMES},
        })
        meta_runs.append({
            "algorithm": algorithm, "alpha": alpha, "history_file": fname,
            "verdict": histories[0].to_records()[0]["verdict"],
            "branch_counts": [h.branch_counts for h in histories],
        })
    _write_summary_csv(out / "summary.csv", summary_rows)
    meta = {
        "config": _config_echo(cfg),
        "seed": cfg.run.seed,
        "runs": meta_runs,
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return artifacts


def _config_echo(cfg: ExperimentConfig) -> dict:
    return {
        "dataset": {
            "path": cfg.dataset.path, "target": cfg.dataset.target,
            "protected": list(cfg.dataset.protected), "drop": list(cfg.dataset.drop),
            "categorical": list(cfg.dataset.categorical),
        },
        "constraint": {
            "fraction": cfg.constraint.fraction, "epsilon": cfg.constraint.epsilon,
            "box": list(cfg.constraint.box) if cfg.constraint.box else None,
        },
        "run": {
            "loss": {"kind": cfg.run.loss.kind, "huber_m": cfg.run.loss.huber_m},
            "alphas": list(cfg.run.alphas), "beta": cfg.run.beta,
            "iterations": cfg.run.iterations,
            "learner": {
                "kind": cfg.run.learner.kind, "ridge_lambda": cfg.run.learner.ridge_lambda,
                "n_trees": cfg.run.learner.n_trees, "max_depth": cfg.run.learner.max_depth,
                "learning_rate": cfg.run.learner.learning_rate,
                "min_samples_leaf": cfg.run.learner.min_samples_leaf,
                "seed": cfg.run.learner.seed,
            },
            "algorithms": list(cfg.run.algorithms), "folds": cfg.run.folds,
            "seed": cfg.run.seed, "normalization": cfg.run.normalization,
        },
        "solver": {
            "tolerance": cfg.solver.tolerance,
            "max_iterations": cfg.solver.max_iterations,
            "warm_start": cfg.solver.warm_start,
        },
    }


def write_history_file(path, cfg: ExperimentConfig, algorithm: str, alpha: float,
                       histories: list[IterationHistory]) -> None:
    first = histories[0].to_records()[0]
    filemeta = {
        "type": "filemeta",
        "format": 1,
        "algorithm": algorithm,
        "alpha": alpha,
        "beta": cfg.run.beta,
        "iterations": cfg.run.iterations,
        "loss": {"kind": cfg.run.loss.kind, "huber_m": cfg.run.loss.huber_m},
        "folds": len(histories),
        "seed": cfg.run.seed,
        "dataset": {
            "path": cfg.dataset.path,
            "target": cfg.dataset.target,
            "rows_train_fold0": int(histories[0].initial.yhat.size),
        },
        "verdict": first["verdict"],
    }
    lines = [json.dumps(filemeta)]
    for j, history in enumerate(histories):
        for record in history.to_records():
            tagged = {"fold": j, **record}
            lines.append(json.dumps(tagged))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_history_file(path) -> tuple[dict, list[IterationHistory]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such history file: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records or records[0].get("type") != "filemeta":
        raise DataError(f"{path}: not a history file (missing filemeta line)")
    filemeta = records[0]
    if any(r.get("type") == "filemeta" for r in records[1:]):
        raise DataError(f"{path}: holds more than one history; one history per file")
    by_fold: dict[int, list[dict]] = {}
    for rec in records[1:]:
        fold = rec.get("fold")
        if fold is None:
            raise DataError(f"{path}: record without a fold tag")
        body = {k: v for k, v in rec.items() if k != "fold"}
        by_fold.setdefault(fold, []).append(body)
    histories = []
    for fold in sorted(by_fold):
        histories.append(IterationHistory.from_records(by_fold[fold]))
        if histories[-1].algorithm != filemeta["algorithm"] or \
                histories[-1].alpha != filemeta["alpha"]:
            raise DataError(f"{path}: fold {fold} disagrees with the file meta; "
                            "one history per file")
    return filemeta, histories


def _write_summary_csv(path, rows) -> None:
    header = ["algorithm", "alpha", "fold", "kind", *SERIES_NAMES]
    lines = [",".join(header)]
    for row in rows:
        cells = [str(row["algorithm"]), _alpha_tag(row["alpha"]), str(row["fold"]),
                 row["kind"]]
        for name in SERIES_NAMES:
            value = row[name]
            cells.append("" if value is None or (isinstance(value, float) and np.isnan(value))
                         else format_float(value))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def plotdata_rows(histories: list[IterationHistory]) -> list[str]:
    """Per-iteration mean/std rows for the training-split metrics, ready to plot."""
    summary: FoldSummary = summarize_folds(histories)
    lines = ["iteration,r2_mean,r2_std,c_mean,c_std,residual_mean"]
    iters = len(summary.curve_mean["r2_train"])
    for i in range(iters):
        cells = [str(i),
                 _csv_number(summary.curve_mean["r2_train"][i]),
                 _csv_number(summary.curve_std["r2_train"][i]),
                 _csv_number(summary.curve_mean["c_train"][i]),
                 _csv_number(summary.curve_std["c_train"][i]),
                 _csv_number(summary.residual_curve_mean[i - 1]) if i >= 1 else ""]
        lines.append(",".join(cells))
    return lines


def _csv_number(x) -> str:
    return "" if isinstance(x, float) and np.isnan(x) else format_float(x)


def compare_rows(meta_a: dict, hist_a: list[IterationHistory],
                 meta_b: dict, hist_b: list[IterationHistory]) -> list[str]:
    """Per-metric comparison table with significance flags."""
    for key in ("loss", "alpha", "beta", "iterations", "folds", "dataset"):
        if meta_a.get(key) != meta_b.get(key):
            raise DataError(f"mismatched protocols: {key} differs "
                            f"({meta_a.get(key)!r} vs {meta_b.get(key)!r})")
    sa = summarize_folds(hist_a)
    sb = summarize_folds(hist_b)
    lines = ["metric,mean_a,std_a,mean_b,std_b,flag"]
    for name in SERIES_NAMES:
        stats = (sa.mean[name], sa.std[name], sb.mean[name], sb.std[name])
        if any(np.isnan(v) for v in stats):
            flag = "comparable"  # metric undefined on this data (e.g. no protected columns)
        else:
            flag = significance_flag(*stats, higher_is_better=name.startswith("r2"))
        lines.append(",".join([name, *(format_float(v) for v in stats), flag]))
    return lines
