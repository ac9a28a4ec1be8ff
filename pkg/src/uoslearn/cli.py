"""Command-line pipeline: synth, cluster, hierarchy, classify, eval.

Every subcommand accepts --config FILE (flat key=value text) and --seed.
Result records are JSON lines on stdout; diagnostics go to stderr. Exit
codes: 0 success, 2 configuration/data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datasets
from .bundles import KnnModel, load_model_bundle, predict_with_bundle, save_model_bundle
from .errors import ConfigError, DataError, DimensionError, NumericalError, UosError
from .hierarchy import HierarchyConfig, hcs_lrr, read_tree, tree_summary, write_tree
from .metrics import clustering_accuracy
from .sequences import LeafSet, assign_to_leaves, leaf_distance_table
from .solver import SolverConfig, build_affinity, cslrr_solve, threshold_coefficients
from .spectral import spectral_cluster
from .svm import (
    MODE_ONE_VS_ALL,
    MODE_ONE_VS_ONE,
    open_set_svm,
    svm_predict_multiclass,
    svm_train_multiclass,
)
from .synth import (
    SequenceSynthConfig,
    UosSynthConfig,
    generate_synthetic_sequences,
    generate_synthetic_uos,
    split_by_class,
)

METHODS = ("lrr", "sclrr", "cslrr")
CLASSIFIERS = ("knn", "svm-ovo", "svm-ova")


def emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True))


def diag(message: str) -> None:
    print(message, file=sys.stderr)


def parse_config(path: Path) -> dict[str, str]:
    cfg = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line: {raw.strip()!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def load_config(args) -> tuple[dict[str, str], Path]:
    base = Path.cwd()
    cfg: dict[str, str] = {}
    if args.config:
        cfg = parse_config(args.config)
        base = Path(args.config).resolve().parent
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg, base


def need(cfg: dict[str, str], key: str) -> str:
    if key not in cfg:
        raise ConfigError(f"missing config key: {key}")
    return cfg[key]


def cfg_int(cfg, key, default=None) -> int:
    raw = need(cfg, key) if default is None else cfg.get(key, str(default))
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key} must be an integer, got {raw!r}") from exc


def cfg_float(cfg, key, default=None) -> float:
    raw = need(cfg, key) if default is None else cfg.get(key, str(default))
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key} must be a number, got {raw!r}") from exc


def cfg_bool(cfg, key, default=False) -> bool:
    raw = cfg.get(key, str(default)).lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key {key} must be a boolean, got {raw!r}")


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def manifest_from_config(cfg: dict[str, str], base: Path) -> datasets.DatasetManifest:
    block = None
    if "block_rows" in cfg or "block_bins" in cfg:
        block = (cfg_int(cfg, "block_rows"), cfg_int(cfg, "block_bins"))
    return datasets.DatasetManifest(
        features=_resolve(base, need(cfg, "data")),
        fmt=cfg.get("format", "bin"),
        labels=_resolve(base, cfg["labels"]) if "labels" in cfg else None,
        boundaries=_resolve(base, cfg["boundaries"]) if "boundaries" in cfg else None,
        block_shape=block,
    )


def solver_config_from(cfg: dict[str, str], method: str, l_max: int) -> SolverConfig:
    alpha = cfg_float(cfg, "alpha", 1.0)
    beta = cfg_float(cfg, "beta", 0.5)
    if method == "lrr":
        alpha, beta = 0.0, 0.0
    elif method == "sclrr":
        beta = 0.0
    elif method != "cslrr":
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    return SolverConfig(
        l_max=l_max,
        alpha=alpha,
        beta=beta,
        lam=cfg_float(cfg, "lambda", 1.0),
        rho=cfg_float(cfg, "rho", 1.1),
        mu0=cfg_float(cfg, "mu0", 0.1),
        mu_max=cfg_float(cfg, "mu_max", 1e30),
        epsilon=cfg_float(cfg, "epsilon", 1e-7),
        eta_factor=cfg_float(cfg, "eta_factor", 1.02),
        max_iters=cfg_int(cfg, "max_iters", 500),
        error_mode=cfg.get("error_mode", "columnwise"),
        coeff_threshold=cfg_float(cfg, "coeff_threshold", 0.05),
    )


def _write_residual_csv(path, history) -> None:
    with open(path, "w") as fh:
        fh.write("iter,r1,r2\n")
        for i, (r1, r2) in enumerate(history, start=1):
            fh.write(f"{i},{r1!r},{r2!r}\n")


def cmd_synth(args) -> int:
    cfg, base = load_config(args)
    out = Path(args.out) if args.out else _resolve(base, need(cfg, "out"))
    out.mkdir(parents=True, exist_ok=True)
    kind = need(cfg, "kind")
    seed = args.seed if args.seed is not None else cfg_int(cfg, "seed", 0)
    if kind == "uos":
        ucfg = UosSynthConfig(
            m=cfg_int(cfg, "m"),
            subspaces=cfg_int(cfg, "subspaces"),
            dim=cfg_int(cfg, "dim"),
            points_per_subspace=cfg_int(cfg, "points"),
            noise=cfg_float(cfg, "noise", 0.0),
            geometry=cfg.get("geometry", "independent"),
            seed=seed,
        )
        fm, labels = generate_synthetic_uos(ucfg)
        datasets.write_feature_bin(out / "features.bin", fm.data)
        datasets.write_labels(out / "labels.txt", labels)
        emit(
            {
                "record": "synth",
                "kind": "uos",
                "out": str(out),
                "m": ucfg.m,
                "n_samples": fm.n_samples,
                "subspaces": ucfg.subspaces,
                "seed": seed,
            }
        )
        return 0
    if kind == "sequences":
        train_pc = cfg_int(cfg, "train_per_class")
        test_pc = cfg_int(cfg, "test_per_class")
        scfg = SequenceSynthConfig(
            m=cfg_int(cfg, "m"),
            leaves=cfg_int(cfg, "leaves"),
            leaf_dim=cfg_int(cfg, "leaf_dim"),
            classes=cfg_int(cfg, "classes"),
            sequences_per_class=train_pc + test_pc,
            template_len=cfg_int(cfg, "template_len", 4),
            frames_min=cfg_int(cfg, "frames_min", 2),
            frames_max=cfg_int(cfg, "frames_max", 4),
            jitter=cfg_float(cfg, "jitter", 0.0),
            seed=seed,
        )
        samples, leaves = generate_synthetic_sequences(scfg)
        train, test = split_by_class(samples, train_pc)
        datasets.save_sequence_dataset(out / "train", train)
        datasets.save_sequence_dataset(out / "test", test)
        datasets.save_leaves(out / "leaves.bin", leaves)
        emit(
            {
                "record": "synth",
                "kind": "sequences",
                "out": str(out),
                "classes": scfg.classes,
                "train_sequences": len(train),
                "test_sequences": len(test),
                "leaves": len(leaves),
                "seed": seed,
            }
        )
        return 0
    raise ConfigError(f"unknown synth kind {kind!r}")


def cmd_cluster(args) -> int:
    cfg, base = load_config(args)
    manifest = manifest_from_config(cfg, base)
    fm = datasets.load_feature_matrix(manifest)
    method = args.method or cfg.get("method", "cslrr")
    if args.alpha is not None:
        cfg["alpha"] = str(args.alpha)
    if args.beta is not None:
        cfg["beta"] = str(args.beta)
    k = args.clusters if args.clusters is not None else cfg_int(cfg, "clusters")
    seed = args.seed if args.seed is not None else cfg_int(cfg, "seed", 0)
    scfg = solver_config_from(cfg, method, l_max=k)
    result = cslrr_solve(fm, scfg, log_stream=sys.stderr if args.verbose else None)
    if not result.converged:
        diag(f"solver did not converge within {scfg.max_iters} iterations")
    w = build_affinity(threshold_coefficients(result.z, scfg.coeff_threshold))
    labels = spectral_cluster(w, k, seed)
    if args.out:
        datasets.write_labels(args.out, labels)
    if args.emit_csv:
        _write_residual_csv(args.emit_csv, result.residual_history)
    emit(
        {
            "record": "cluster",
            "method": method,
            "clusters": k,
            "n_samples": fm.n_samples,
            "converged": result.converged,
            "iterations": result.iterations,
            "seed": seed,
            "labels": labels.tolist(),
        }
    )
    if manifest.labels is not None:
        truth = datasets.load_labels(manifest.labels)
        emit(
            {
                "record": "accuracy",
                "task": "cluster",
                "value": clustering_accuracy(labels, truth),
            }
        )
    return 0


def cmd_hierarchy(args) -> int:
    cfg, base = load_config(args)
    manifest = manifest_from_config(cfg, base)
    fm = datasets.load_feature_matrix(manifest)
    seed = args.seed if args.seed is not None else cfg_int(cfg, "seed", 0)
    levels = cfg_int(cfg, "levels")
    scfg = solver_config_from(cfg, cfg.get("method", "cslrr"), l_max=2**levels)
    hcfg = HierarchyConfig(
        max_level=levels,
        gamma=cfg_float(cfg, "gamma", 0.98),
        split_gain=cfg_float(cfg, "split_gain", 0.01),
        min_dim=cfg_int(cfg, "min_dim", 1),
    )
    tree = hcs_lrr(fm, scfg, hcfg, seed)
    if not tree.solver_converged:
        diag("solver did not converge; tree built from the last iterate")
    if args.out:
        write_tree(tree, args.out)
    if args.summary:
        Path(args.summary).write_text(tree_summary(tree))
    leaves = tree.leaves()
    labels = tree.leaf_labels()
    emit(
        {
            "record": "hierarchy",
            "levels": levels,
            "n_samples": fm.n_samples,
            "leaves": len(leaves),
            "leaf_sizes": [n.size for n in leaves],
            "leaf_dims": [n.dim for n in leaves],
            "solver_converged": tree.solver_converged,
            "seed": seed,
            "labels": labels.tolist(),
        }
    )
    if manifest.labels is not None:
        truth = datasets.load_labels(manifest.labels)
        emit(
            {
                "record": "accuracy",
                "task": "hierarchy",
                "value": clustering_accuracy(labels, truth),
            }
        )
    return 0


def _load_leaves_for_classify(args, cfg, base) -> LeafSet:
    if args.tree:
        return LeafSet.from_tree(read_tree(args.tree))
    if args.leaves:
        return datasets.load_leaves(args.leaves)
    data_dir = Path(args.data) if args.data else _resolve(base, need(cfg, "data"))
    leaves_path = data_dir / "leaves.bin"
    if not leaves_path.exists():
        raise ConfigError(
            "no leaf bases: provide --tree, --leaves, or a data dir with leaves.bin"
        )
    return datasets.load_leaves(leaves_path)


def cmd_classify(args) -> int:
    cfg, base = load_config(args)
    data_dir = Path(args.data) if args.data else _resolve(base, need(cfg, "data"))
    test = datasets.load_sequence_dataset(data_dir / "test")
    leaves = None
    if args.model:
        leaves, model, kind = load_model_bundle(args.model)
        predictions = [predict_with_bundle(model, kind, s, leaves) for s in test]
        classifier = f"bundle:{kind}"
        if isinstance(model, KnnModel):
            known = {int(s.label) for s in model.train}
        else:
            known = set(model.classes)
    else:
        leaves = _load_leaves_for_classify(args, cfg, base)
        train = datasets.load_sequence_dataset(data_dir / "train")
        classifier = args.classifier or cfg.get("classifier", "knn")
        if classifier not in CLASSIFIERS:
            raise ConfigError(
                f"unknown classifier {classifier!r}; expected one of {CLASSIFIERS}"
            )
        open_set = args.open or cfg_bool(cfg, "open", False)
        table = leaf_distance_table(leaves)
        for s in train + test:
            s.assignment = assign_to_leaves(s, leaves)
        known = {int(s.label) for s in train}
        if classifier == "knn":
            model = KnnModel(
                train=train,
                k=cfg_int(cfg, "k", 3),
                open_set=open_set,
                varsigma=cfg_float(cfg, "varsigma", 1.2),
            )
            model.fit_ceilings(leaves)
            predictions = [model.predict(s, leaves, table) for s in test]
        else:
            mode = MODE_ONE_VS_ONE if classifier == "svm-ovo" else MODE_ONE_VS_ALL
            if open_set and mode != MODE_ONE_VS_ALL:
                raise ConfigError("open-set SVM requires classifier svm-ova")
            nu = cfg_float(cfg, "nu") if "nu" in cfg else None
            model = svm_train_multiclass(
                [s.assignment for s in train],
                [s.label for s in train],
                leaves,
                mode=mode,
                nu=nu,
                c=cfg_float(cfg, "c", 10.0),
            )
            if open_set:
                predictions = [open_set_svm(model, s.assignment, leaves) for s in test]
            else:
                predictions = [
                    svm_predict_multiclass(model, s.assignment, leaves) for s in test
                ]
        if args.save_model:
            save_model_bundle(args.save_model, leaves, model, open_set=open_set)
    for i, (sample, pred) in enumerate(zip(test, predictions)):
        emit(
            {
                "record": "prediction",
                "index": i,
                "predicted": pred,
                "is_new": pred is None,
                "truth": sample.label,
            }
        )
    truths = [s.label for s in test]
    known_mask = [t in known for t in truths]
    n_known = sum(known_mask)
    n_unknown = len(test) - n_known
    correct_known = sum(
        1 for p, t, m in zip(predictions, truths, known_mask) if m and p == t
    )
    summary = {
        "record": "classification_summary",
        "classifier": classifier,
        "n_test": len(test),
        "known_accuracy": (correct_known / n_known) if n_known else None,
    }
    if n_unknown:
        rejected = sum(
            1 for p, m in zip(predictions, known_mask) if not m and p is None
        )
        summary["new_recall"] = rejected / n_unknown
        summary["n_unknown"] = n_unknown
    emit(summary)
    return 0


def cmd_eval(args) -> int:
    pred = datasets.load_labels(args.pred)
    truth = datasets.load_labels(args.truth)
    emit(
        {
            "record": "accuracy",
            "task": "eval",
            "value": clustering_accuracy(pred, truth),
        }
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uoslearn",
        description="Subspace-structured representation learning pipeline",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cluster", help="flat subspace clustering")
    common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--clusters", type=int)
    p.add_argument("--out", help="write predicted labels to this file")
    p.add_argument("--emit-csv", help="write per-iteration residuals as CSV")
    p.add_argument("--verbose", action="store_true", help="residual log on stderr")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("hierarchy", help="hierarchical subspace clustering")
    common(p)
    p.add_argument("--out", help="write the tree binary to this file")
    p.add_argument("--summary", help="write the human-readable tree summary")
    p.set_defaults(func=cmd_hierarchy)

    p = sub.add_parser("classify", help="sequence classification")
    common(p)
    p.add_argument("--data", help="dataset directory with train/, test/, leaves.bin")
    p.add_argument("--classifier", choices=CLASSIFIERS)
    p.add_argument("--open", action="store_true", help="open-set prediction")
    p.add_argument("--tree", help="take leaf bases from a hierarchy tree file")
    p.add_argument("--leaves", help="take leaf bases from a leaf-basis file")
    p.add_argument("--model", help="predict with a saved model bundle")
    p.add_argument("--save-model", help="write the trained model bundle")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="metrics over saved label files")
    common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.set_defaults(func=cmd_eval)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, DataError, DimensionError) as exc:
        diag(f"error: {exc}")
        return 2
    except NumericalError as exc:
        diag(f"numerical failure: {exc}")
        return 3
    except UosError as exc:
        diag(f"error: {exc}")
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
