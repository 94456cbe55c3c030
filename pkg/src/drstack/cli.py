"""Command line interface: rank, train, predict, evaluate, reproduce.

Every run is deterministic for a fixed dataset and seed; report files never
contain timestamps, so identical runs produce identical bytes.  Exit codes:
0 success, 2 usage error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .dataset import (
    _looks_like_header,
    _read_text,
    class_distribution,
    load_table,
    project_features,
)
from .ensemble import StackingSpec, train_stacking
from .evaluation import (
    DATASET_ORDER,
    MODEL_ORDER,
    METRIC_NAMES,
    CvResult,
    cross_validate,
    describe_spec,
    summarize_tables,
)
from .feature_selection import RANKING_METHODS, RankingSelector, rank_features
from .learners import LearnerSpec, load_model, save_model, train

MODEL_CHOICES = ("svm", "nn", "rf", "stack", "tree", "logistic")
_MODEL_KINDS = {"svm": "svm", "nn": "mlp", "rf": "forest", "tree": "tree", "logistic": "logistic"}
_SET_SCOPES = ("tree", "forest", "mlp", "svm", "logistic", "stack")


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _parse_overrides(pairs) -> dict:
    """Parse --set scope.param=value entries into {scope: {param: value}}."""
    overrides: dict[str, dict] = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ValueError(f"--set expects scope.param=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        if "." not in key:
            raise ValueError(f"--set expects scope.param=value, got {pair!r}")
        scope, param = key.split(".", 1)
        if scope not in _SET_SCOPES:
            raise ValueError(f"unknown --set scope {scope!r}; known: {_SET_SCOPES}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides.setdefault(scope, {})[param] = value
    return overrides


def build_spec(model: str, seed: int, overrides: dict):
    """Build a learner or stacking spec with --set overrides applied."""
    if model == "stack":
        stack_over = dict(overrides.get("stack", {}))
        internal_folds = int(stack_over.pop("internal_folds", 5))
        if stack_over:
            raise ValueError(f"unknown stack parameters: {sorted(stack_over)}")
        bases = tuple(
            LearnerSpec(kind, dict(overrides.get(kind, {})), seed)
            for kind in ("forest", "mlp", "svm")
        )
        meta = LearnerSpec("logistic", dict(overrides.get("logistic", {})), seed)
        return StackingSpec(bases, meta, internal_folds, seed)
    kind = _MODEL_KINDS[model]
    return LearnerSpec(kind, dict(overrides.get(kind, {})), seed)


def _dataset_manifest(path: str, ds) -> dict:
    return {
        "path": os.path.abspath(path),
        "sha256": file_sha256(path),
        "n_rows": ds.n_rows,
        "n_features": ds.n_features,
        "class_counts": {str(k): v for k, v in class_distribution(ds).items()},
    }


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _ensure_out(out: str) -> str:
    os.makedirs(out, exist_ok=True)
    return out


def _fold_csv_text(result: CvResult) -> str:
    lines = ["repeat,fold,tp,fp,tn,fn,accuracy,precision,recall,f_measure,auc"]
    for i, rep in enumerate(result.fold_reports):
        repeat, fold = divmod(i, result.k)
        cells = [str(repeat), str(fold), str(rep.cm.tp), str(rep.cm.fp), str(rep.cm.tn), str(rep.cm.fn)]
        for name in METRIC_NAMES:
            value = rep.value(name)
            cells.append("" if value is None else repr(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _summary_doc(result: CvResult) -> dict:
    return {
        "k": result.k,
        "repeats": result.repeats,
        "seed": result.seed,
        "protocol": result.protocol,
        "metrics": {
            name: {
                "mean": result.mean(name),
                "std": result.std(name),
                "undefined_folds": result.undefined_count(name),
            }
            for name in METRIC_NAMES
        },
    }


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def cmd_rank(args) -> int:
    ds = load_table(args.data)
    ranking = rank_features(ds, args.method, args.top, args.seed)
    out = _ensure_out(args.out)
    path = os.path.join(out, f"ranking_{args.method}.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ranking.to_json() + "\n")
    print(f"wrote {path}")
    for rank, score in enumerate(ranking.ordered, start=1):
        name = ds.feature_names[score.feature_index]
        print(f"{rank:3d}. feature {score.feature_index} ({name}) score={score.score:.6f}")
    return 0


def cmd_train(args) -> int:
    ds = load_table(args.data)
    overrides = _parse_overrides(args.set)
    spec = build_spec(args.model, args.seed, overrides)
    if isinstance(spec, StackingSpec):
        model = train_stacking(ds, spec)
    else:
        model = train(ds, spec)
    out = _ensure_out(args.out)
    path = os.path.join(out, "model.json")
    save_model(model, path)
    manifest = {
        "command": "train",
        "package": "drstack",
        "version": __version__,
        "seed": args.seed,
        "model": args.model,
        "spec": describe_spec(spec),
        "overrides": overrides,
        "dataset": _dataset_manifest(args.data, ds),
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)
    print(f"wrote {path}")
    return 0


def _read_feature_rows(path: str, n_features: int) -> np.ndarray:
    """Parse an unlabeled CSV of feature rows, sniffing an optional header."""
    text, _ = _read_text(path)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines and _looks_like_header(lines[0]):
        lines = lines[1:]
    rows = np.empty((len(lines), n_features), dtype=np.float64)
    for i, line in enumerate(lines):
        cells = line.split(",")
        if len(cells) != n_features:
            raise ValueError(f"model expects {n_features} features, row {i} has {len(cells)}")
        for j, cell in enumerate(cells):
            try:
                rows[i, j] = float(cell.strip())
            except ValueError:
                raise ValueError(f"row {i}, column {j}: non-numeric value {cell.strip()!r}") from None
    return rows


def cmd_predict(args) -> int:
    model = load_model(args.model_file)
    rows = _read_feature_rows(args.input, model.n_features)
    out = _ensure_out(args.out)
    path = os.path.join(out, "predictions.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("prediction,probability\n")
        if rows.shape[0]:
            probs = model.predict_proba(rows)
            for p in probs:
                fh.write(f"{int(p >= 0.5)},{repr(float(p))}\n")
    print(f"wrote {path}")
    return 0


def cmd_evaluate(args) -> int:
    ds = load_table(args.data)
    overrides = _parse_overrides(args.set)
    spec = build_spec(args.model, args.seed, overrides)
    result = cross_validate(ds, spec, k=args.folds, repeats=args.repeats, seed=args.seed, jobs=args.jobs)
    out = _ensure_out(args.out)
    with open(os.path.join(out, "folds.csv"), "w", encoding="utf-8") as fh:
        fh.write(_fold_csv_text(result))
    _write_json(os.path.join(out, "summary.json"), _summary_doc(result))
    manifest = {
        "command": "evaluate",
        "package": "drstack",
        "version": __version__,
        "seed": args.seed,
        "folds": args.folds,
        "repeats": args.repeats,
        "model": args.model,
        "spec": describe_spec(spec),
        "overrides": overrides,
        "dataset": _dataset_manifest(args.data, ds),
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)
    for name in METRIC_NAMES:
        mean = result.mean(name)
        std = result.std(name)
        text = "n/a" if mean is None else f"{mean:.3f}({std:.3f})"
        print(f"{name}: {text}")
    return 0


def cmd_reproduce(args) -> int:
    out = _ensure_out(args.out)
    stage = "load-dataset"
    try:
        ds = load_table(args.data)
        overrides = _parse_overrides(args.set)
        top10 = min(10, ds.n_features)
        top5 = min(5, ds.n_features)

        stage = "rank-features"
        _progress("[reproduce] ranking features (infogain, wrapper)")
        rankings = {
            "infogain": rank_features(ds, "infogain", top10, args.seed),
            "wrapper": rank_features(ds, "wrapper", top10, args.seed),
        }
        for method, ranking in rankings.items():
            with open(os.path.join(out, f"ranking_{method}.json"), "w", encoding="utf-8") as fh:
                fh.write(ranking.to_json() + "\n")

        stage = "build-datasets"
        datasets: dict[str, object] = {"original": ds}
        selectors: dict[str, object] = {"original": None}
        plan = {
            "wrapper_top5": ("wrapper", top5),
            "wrapper_top10": ("wrapper", top10),
            "infogain_top5": ("infogain", top5),
            "infogain_top10": ("infogain", top10),
        }
        for key, (method, top) in plan.items():
            if args.strict_selection:
                datasets[key] = ds
                selectors[key] = RankingSelector(method, top, args.seed)
            else:
                datasets[key] = project_features(ds, rankings[method].indices()[:top])
                selectors[key] = None

        specs = {m: build_spec(m, args.seed, overrides) for m in MODEL_ORDER}
        results: dict[tuple[str, str], CvResult] = {}
        for dkey in DATASET_ORDER:
            for mkey in MODEL_ORDER:
                stage = f"cross-validate {dkey}/{mkey}"
                _progress(f"[reproduce] {dkey} / {mkey}")
                result = cross_validate(
                    datasets[dkey],
                    specs[mkey],
                    k=args.folds,
                    repeats=args.repeats,
                    seed=args.seed,
                    jobs=args.jobs,
                    selector=selectors[dkey],
                )
                results[(dkey, mkey)] = result
                with open(os.path.join(out, f"folds_{dkey}_{mkey}.csv"), "w", encoding="utf-8") as fh:
                    fh.write(_fold_csv_text(result))

        stage = "summarize"
        tables = summarize_tables(results)
        with open(os.path.join(out, "tables.md"), "w", encoding="utf-8") as fh:
            fh.write(f"# Cross-validation report\n\nselection mode: "
                     f"{'per_training_fold' if args.strict_selection else 'full_dataset_once'}\n\n")
            fh.write(tables.to_markdown())
        for name, table in (
            ("accuracy_by_dataset", tables.accuracy_table),
            ("best_vs_stack", tables.comparison_table),
            ("stack_reduced", tables.reduced_table),
        ):
            with open(os.path.join(out, f"{name}.csv"), "w", encoding="utf-8") as fh:
                fh.write(table.to_csv())

        stage = "manifest"
        manifest = {
            "command": "reproduce",
            "package": "drstack",
            "version": __version__,
            "seed": args.seed,
            "folds": args.folds,
            "repeats": args.repeats,
            "strict_selection": bool(args.strict_selection),
            "selection_mode": "per_training_fold" if args.strict_selection else "full_dataset_once",
            "overrides": overrides,
            "models": {m: describe_spec(specs[m]) for m in MODEL_ORDER},
            "dataset": _dataset_manifest(args.data, ds),
        }
        _write_json(os.path.join(out, "manifest.json"), manifest)
    except Exception as exc:
        with open(os.path.join(out, "FAILED"), "w", encoding="utf-8") as fh:
            fh.write(f"stage: {stage}\nerror: {exc}\n")
        raise
    _progress(f"[reproduce] done, reports in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drstack",
        description="Feature ranking, stacked ensemble training, and cross-validated reports "
        "for binary tabular screening data.",
    )
    parser.add_argument("--version", action="version", version=f"drstack {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, data=True):
        if data:
            p.add_argument("--data", required=True, help="CSV or ARFF dataset, last column is the 0/1 label")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out", default=".", help="output directory")

    p_rank = sub.add_parser("rank", help="rank features and write the ranking file")
    add_common(p_rank)
    p_rank.add_argument("--method", choices=RANKING_METHODS, default="infogain")
    p_rank.add_argument("--top", type=int, default=10, help="how many features to keep")
    p_rank.set_defaults(handler=cmd_rank)

    p_train = sub.add_parser("train", help="train a model and save it as JSON")
    add_common(p_train)
    p_train.add_argument("--model", choices=MODEL_CHOICES, default="stack")
    p_train.add_argument("--set", action="append", metavar="SCOPE.PARAM=VALUE",
                         help="hyperparameter override, repeatable")
    p_train.set_defaults(handler=cmd_train)

    p_pred = sub.add_parser("predict", help="predict labels for unlabeled CSV rows")
    p_pred.add_argument("--model-file", required=True)
    p_pred.add_argument("--input", required=True, help="CSV of feature rows without labels")
    p_pred.add_argument("--out", default=".")
    p_pred.set_defaults(handler=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="repeated stratified cross-validation of one model")
    add_common(p_eval)
    p_eval.add_argument("--model", choices=MODEL_CHOICES, default="stack")
    p_eval.add_argument("--folds", type=int, default=10)
    p_eval.add_argument("--repeats", type=int, default=1)
    p_eval.add_argument("--jobs", type=int, default=max(1, os.cpu_count() or 1))
    p_eval.add_argument("--set", action="append", metavar="SCOPE.PARAM=VALUE")
    p_eval.set_defaults(handler=cmd_evaluate)

    p_rep = sub.add_parser("reproduce", help="full study: rankings, reduced datasets, all models, tables")
    add_common(p_rep)
    p_rep.add_argument("--folds", type=int, default=10)
    p_rep.add_argument("--repeats", type=int, default=1)
    p_rep.add_argument("--jobs", type=int, default=max(1, os.cpu_count() or 1))
    p_rep.add_argument("--strict-selection", action="store_true",
                       help="rerun feature selection inside every training fold")
    p_rep.add_argument("--set", action="append", metavar="SCOPE.PARAM=VALUE")
    p_rep.set_defaults(handler=cmd_reproduce)
    return parser


def _validate(parser: argparse.ArgumentParser, args) -> None:
    if getattr(args, "top", None) is not None and args.top < 1:
        parser.error("--top must be at least 1")
    if getattr(args, "folds", None) is not None and args.folds < 2:
        parser.error("--folds must be at least 2")
    if getattr(args, "repeats", None) is not None and args.repeats < 1:
        parser.error("--repeats must be at least 1")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        parser.error("--jobs must be at least 1")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        return args.handler(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
