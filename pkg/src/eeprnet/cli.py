"""``palm`` command line: synth, train-localizer, train, extract-roi, eval,
report and gradcheck. Exit codes: 0 ok, 1 usage, 2 runtime/data error."""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _widths(text: str) -> tuple[int, int, int]:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"widths must be three comma-separated ints, got {text!r}") from exc
    if len(vals) != 3 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"widths must be three positive ints, got {text!r}")
    return vals


def _file_sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_config(out_dir, command: str, args: argparse.Namespace, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items() if k != "func"}
    cfg = {"command": command, "version": __version__, **cfg, **(extra or {})}
    path = out / "config.resolved.json"
    path.write_text(json.dumps(cfg, sort_keys=True, indent=1, default=str))
    return path


def _split(palm_ids, args):
    from .evaluation import make_split_firstk, make_split_internetstyle

    if args.split == "internet":
        return make_split_internetstyle(palm_ids, args.split_seed)
    if args.split == "firstk":
        return make_split_firstk(palm_ids, args.firstk)
    return None


# --------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    from .synth import generate_dataset

    if args.palms < 1:
        raise UsageError("--palms must be >= 1")
    manifest = generate_dataset(args.palms, args.out, args.seed, args.samples_per_palm, mean_samples=args.mean_samples)
    write_config(args.out, "synth", args)
    print(manifest)
    return 0


def cmd_train_localizer(args) -> int:
    from .nets import save_network
    from .synth import load_dataset
    from .train import stage1_train_localizer

    ds = load_dataset(args.dataset)
    held = load_dataset(args.heldout) if args.heldout else None
    out = Path(args.out)
    write_config(out, "train-localizer", args)
    net, log, final = stage1_train_localizer(
        ds, args.epochs_a, args.epochs_ab, args.seed, args.widths, args.batch_size, heldout=held, progress=None if args.quiet else print
    )
    save_network(out / "localizer.palmw", net, net.arch())
    log.to_csv(out / "train_log.csv")
    print(json.dumps({"initial_nme": log.initial_metric, "final_nme": final, "weights": str(out / "localizer.palmw")}))
    return 0


def cmd_train(args) -> int:
    from .nets import load_network, save_network
    from .synth import load_dataset
    from .train import END_TO_END, PreconditionError, StrategyConfig, train_strategy

    if args.final:
        cfg = StrategyConfig.final(seed=args.seed, grayscale=args.at_replaces_ct, widths=args.widths, h_roi=args.h_roi, batch_size=args.batch_size, lr_block_d=args.lr_block_d, lr=args.lr)
    else:
        cfg = StrategyConfig(
            strategy=args.strategy,
            epochs=args.epochs,
            seed=args.seed,
            batch_size=args.batch_size,
            lr=args.lr,
            lr_block_d=args.lr_block_d,
            d_start=args.d_start,
            dropout_switch=args.dropout_switch,
            ct=not args.no_ct,
            at_from=args.at_from,
            at_replaces_ct=args.at_replaces_ct,
            widths=args.widths,
            h_roi=args.h_roi,
        )
    # prerequisites are checked before any data is loaded
    localizer = None
    if cfg.strategy in END_TO_END + ("S0", "S0nct"):
        if not args.localizer:
            raise PreconditionError(f"strategy {cfg.strategy} needs --localizer (a Stage I model)")
        localizer, arch = load_network(args.localizer)
        if arch.get("kind") != "lanet":
            raise PreconditionError(f"{args.localizer} is not a localizer ({arch.get('kind')})")
        if tuple(arch["widths"]) != tuple(cfg.widths):
            raise PreconditionError(f"localizer widths {arch['widths']} differ from --widths {list(cfg.widths)}")
    ds = load_dataset(args.dataset)
    plan = _split(ds.palm_ids, args)
    train_ds = ds.subset(np.flatnonzero(plan.train)) if plan is not None else ds
    out = Path(args.out)
    write_config(out, "train", args, {"strategy_config": cfg.to_dict(), "config_hash": cfg.config_hash()})
    net, log = train_strategy(cfg, train_ds, localizer, progress=None if args.quiet else print)
    arch = net.arch()
    arch["strategy"] = cfg.strategy
    save_network(out / "model.palmw", net, arch)
    log.to_csv(out / "train_log.csv")
    print(json.dumps({"weights": str(out / "model.palmw"), "sha256": _file_sha(out / "model.palmw"), "epochs": len(log.rows)}))
    return 0


def cmd_extract_roi(args) -> int:
    from .landmarks import write_landmark_csv
    from .nets import batch56, load_network
    from .synth import load_dataset, save_image
    from .tps import extract_roi_array
    from .train import predict_landmarks

    net, arch = load_network(args.model)
    lanet = net.lanet if arch["kind"] == "eeprnet" else net
    if arch["kind"] not in ("eeprnet", "lanet"):
        raise ValueError(f"{args.model} has no localizer")
    ds = load_dataset(args.dataset)
    out = Path(args.out)
    (out / "rois").mkdir(parents=True, exist_ok=True)
    write_config(out, "extract-roi", args)
    rows = []
    for s in range(0, len(ds), 64):
        chunk = ds.images[s : s + 64]
        lms = predict_landmarks(lanet, batch56(chunk, lanet.mean_rgb if arch["kind"] == "lanet" else net.mean_rgb))
        for k, (im, lm) in enumerate(zip(chunk, lms)):
            name = Path(ds.paths[s + k]).stem + ".png"
            roi = extract_roi_array(im, lm, args.h_roi, args.h_roi)
            save_image(out / "rois" / name, np.clip(roi * 255 + 0.5, 0, 255).astype(np.uint8))
            rows.append((ds.paths[s + k], lm))
    write_landmark_csv(out / "landmarks.csv", rows)
    print(out / "landmarks.csv")
    return 0


def cmd_eval(args) -> int:
    from .classifiers import CLASSIFIERS, ClassifierError, score_probes
    from .evaluation import evaluate
    from .nets import load_network
    from .synth import load_dataset
    from .train import describe

    net, arch = load_network(args.model)
    if arch.get("kind") != "eeprnet":
        raise ValueError(f"{args.model} is not a recognition model")
    ds = load_dataset(args.dataset)
    plan = _split(ds.palm_ids, args)
    if plan is None:
        raise UsageError("eval needs --split internet or firstk")
    gallery_classes = np.unique(ds.palm_ids[plan.train])
    if not np.array_equal(np.sort(net.classes), gallery_classes):
        raise ClassifierError(f"model classes ({len(net.classes)}) do not match the gallery classes ({len(gallery_classes)})")
    names = list(CLASSIFIERS) if "all" in args.classifier else args.classifier
    desc, logits = describe(net, ds.images)
    g_idx, p_idx = np.flatnonzero(plan.train), np.flatnonzero(plan.probe)
    counts = plan.train_counts()
    n_train = np.array([counts[int(p)] for p in ds.palm_ids[p_idx]])
    sides = ds.sides()[p_idx]
    truth = ds.palm_ids[p_idx]
    probe_ids = [ds.paths[i] for i in p_idx]
    out = Path(args.out)
    extra = {"model_sha256": _file_sha(args.model), "dataset_manifest": str(args.dataset)}
    write_config(out, "eval", args, extra)
    cfg_hash = hashlib.sha256(json.dumps({k: str(v) for k, v in {**vars(args), **extra}.items() if k not in ("func", "out", "model")}, sort_keys=True).encode()).hexdigest()[:16]
    hashes = {}
    for name in names:
        scores = score_probes(name, desc[g_idx], ds.palm_ids[g_idx], desc[p_idx], logits[p_idx], net.classes, args.pls_components, probe_ids)
        report = evaluate(scores, truth, n_train, sides, seed=args.split_seed, config_hash=cfg_hash, strategy=args.strategy or arch.get("strategy", ""))
        report.write(out, f"report_{name}")
        if args.save_scores:
            scores.to_csv(out / f"scores_{name}.csv")
        hashes[name] = report.report_hash()
        print(f"{name:<8} rank-1 {100 * report.rank1:6.2f}%  rank-30 {100 * report.rank30:6.2f}%  EER {report.eer:6.2f}%")
    (out / "report_hashes.json").write_text(json.dumps(hashes, sort_keys=True, indent=1))
    return 0


def cmd_report(args) -> int:
    from .evaluation import load_report
    from .report import build_report

    files = []
    for p in args.reports:
        p = Path(p)
        files.extend(sorted(p.rglob("report_*.json")) if p.is_dir() else [p])
    files = [f for f in files if f.name != "report_hashes.json"]
    if not files:
        raise ValueError("no report JSON files found")
    reports = [load_report(f) for f in files]
    write_config(args.out, "report", args)
    paths = build_report(reports, args.out)
    for k, v in paths.items():
        print(f"{k}: {v}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import format_table, run_suite

    results = run_suite(args.instances, args.seed)
    print(format_table(results))
    if args.out:
        write_config(args.out, "gradcheck", args, {"results": [r.__dict__ | {"passed": r.passed} for r in results]})
    return 0 if all(r.passed for r in results) else 2


# --------------------------------------------------------------------------
# parser


def _load_json_defaults(argv: list[str]) -> dict:
    """``--config file.json`` supplies defaults that explicit flags override."""
    if "--config" not in argv:
        return {}
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a path")
    try:
        data = json.loads(Path(argv[i + 1]).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {argv[i + 1]}: {exc}") from exc
    out = {}
    for k, v in data.items():
        k = k.replace("-", "_")
        if k == "widths" and isinstance(v, list):
            v = tuple(v)
        out[k] = v
    return out


def build_parser() -> Parser:
    p = Parser(prog="palm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    s = sub.add_parser("synth", help="render a synthetic palm dataset")
    s.add_argument("--palms", type=int, required=True)
    s.add_argument("--mean-samples", type=float, default=None)
    s.add_argument("--samples-per-palm", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train-localizer", help="Stage I: pretrain the landmark localizer")
    s.add_argument("--dataset", required=True)
    s.add_argument("--heldout", default=None)
    s.add_argument("--epochs-a", type=int, default=10)
    s.add_argument("--epochs-ab", type=int, default=15)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--widths", type=_widths, default=(16, 32, 64))
    s.add_argument("--batch-size", type=int, default=128)
    s.add_argument("--quiet", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_localizer)

    s = sub.add_parser("train", help="train one strategy (S0, S0h, S0nct, S1-S5)")
    s.add_argument("--config", default=None, help="JSON file with defaults for these flags")
    s.add_argument("--strategy", choices=["S0", "S0h", "S0nct", "S1", "S2", "S3", "S4", "S5"], default="S5")
    s.add_argument("--final", action="store_true", help="S5, 60 epochs, at from epoch 41")
    s.add_argument("--epochs", type=int, default=40)
    s.add_argument("--dataset", required=True)
    s.add_argument("--localizer", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--widths", type=_widths, default=(16, 32, 64))
    s.add_argument("--h-roi", type=int, default=112)
    s.add_argument("--batch-size", type=int, default=128)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--lr-block-d", type=float, default=1e-3)
    s.add_argument("--d-start", type=int, default=20, help="block D is tuned after this epoch (S3-S5)")
    s.add_argument("--dropout-switch", type=int, default=35, help="S5 turns localizer dropout off after this epoch")
    s.add_argument("--no-ct", action="store_true")
    s.add_argument("--at-from", type=int, default=None)
    s.add_argument("--at-replaces-ct", action="store_true")
    _split_flags(s, default="internet")
    s.add_argument("--quiet", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("extract-roi", help="predict landmarks and write ROI images")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--h-roi", type=int, default=112)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract_roi)

    s = sub.add_parser("eval", help="identification / verification report")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--classifier", nargs="+", choices=["softmax", "pls", "svm", "knn", "all"], default=["pls"])
    s.add_argument("--pls-components", type=int, default=50)
    s.add_argument("--strategy", default=None, help="label for the report grid")
    s.add_argument("--save-scores", action="store_true")
    _split_flags(s, default="internet")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="figures and the strategy x classifier grid")
    s.add_argument("reports", nargs="+", help="report JSON files or directories")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("gradcheck", help="finite-difference audit of all ops")
    s.add_argument("--instances", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_gradcheck)
    return p


def _split_flags(s, default: str) -> None:
    s.add_argument("--split", choices=["internet", "firstk", "none"], default=default)
    s.add_argument("--split-seed", type=int, default=0)
    s.add_argument("--firstk", type=int, default=4)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        defaults = _load_json_defaults(argv)
        if defaults and argv and argv[0] == "train":
            sub = parser._subparsers._group_actions[0].choices["train"]
            known = {a.dest for a in sub._actions}
            unknown = sorted(set(defaults) - known)
            if unknown:
                raise UsageError(f"unknown config keys: {unknown}")
            sub.set_defaults(**defaults)
            for a in sub._actions:
                if a.dest in defaults:
                    a.required = False
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # argparse: usage error, --help or --version
            return exc.code if isinstance(exc.code, int) else 1
        return args.func(args)
    except UsageError as exc:
        print(f"palm: usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"palm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
