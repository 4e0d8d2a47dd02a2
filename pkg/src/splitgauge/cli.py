"""``splitgauge`` command-line interface.

Exit codes: 0 success, 2 usage error, 3 data/validation error, 4 when
``audit --fail-on-mismatch`` finds a mismatch.

Every command writes a JSON envelope::

    {"schema_version": 1, "tool": "splitgauge", "tool_version": ..., "command": ...,
     "config": {...}, "created_at": ..., "payload": {...}}

Option values resolve as: command-line flag, then ``--config`` JSON file,
then built-in default.
"""

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .audit import DEFAULT_M, DEFAULT_SEEDS, MISMATCH, DecisionRule, audit
from .density import GmmModel, bpd, fit_gmm
from .embedder import EmbedderConfig, FeatureMatrix, embed_reference, load_features, save_features
from .errors import SplitGaugeError
from .ingest import read_labels, read_probs, read_raw, read_svhn_mat, write_labels, write_raw
from .remix import apply_plan, remix
from .scores import inception_score
from .synth import GeneratorSpec, inject_mismatch, inject_mismatch_pixels, three_component_spec

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MISMATCH = 0, 2, 3, 4

log = logging.getLogger("splitgauge")

DEFAULTS = {
    "embed": {"grid": "8x8", "dim": 64, "embed_seed": 0, "dtype": "f8", "remap_label_ten": False},
    "audit": {"m": DEFAULT_M, "seeds": ",".join(map(str, DEFAULT_SEEDS)), "tau": 1.5, "tau_low": 1.2,
              "z_min": 3.0, "jitter": None, "grid": "8x8", "dim": 64, "embed_seed": 0,
              "fail_on_mismatch": False, "remap_label_ten": False},
    "is": {"splits": 1},
    "remix": {"seed": 0, "remap_label_ten": False},
    "fit-density": {"k": 1, "seed": 0, "tol": 1e-6, "max_iter": 200, "reg": None, "covariance": "full"},
    "bpd": {},
    "synth": {"mode": "none", "strength": 0.0, "n_train": 12000, "n_test": 5000, "seed": 0, "dim": 16,
              "pixels": False, "image_size": 32},
}


class UsageError(Exception):
    pass


def _threads(value):
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("SPLITGAUGE_THREADS")
    return max(1, int(env)) if env else 1


def _parse_grid(text):
    try:
        h, w = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise UsageError(f"--grid expects HxW, got {text!r}") from None
    return h, w


def _parse_seeds(text):
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    try:
        return [int(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds expects a comma-separated list of integers, got {text!r}") from None


def _load_dataset(path, remap=False):
    path = str(path)
    if path.lower().endswith(".mat"):
        return read_svhn_mat(path, remap_label_ten=remap)
    return read_raw(path)


def _embed_cfg(args):
    return EmbedderConfig(_parse_grid(args.grid), int(args.dim), int(args.embed_seed))


def _envelope(command, config, payload):
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "splitgauge",
        "tool_version": __version__,
        "command": command,
        "config": config,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "payload": payload,
    }


def _emit(args, payload, config, dest=None):
    env = _envelope(args.command, config, payload)
    text = json.dumps(env, indent=2, sort_keys=True)
    if args.command != "remix":
        # remix uses --out for the plan itself and --report for this envelope
        dest = args.out
    if dest:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")
    return env


def _config_echo(args, skip=("config", "command", "threads", "out", "report", "func")):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_embed(args):
    data = _load_dataset(args.dataset, args.remap_label_ten)
    cfg = _embed_cfg(args)
    f = embed_reference(data, cfg, threads=args.threads)
    save_features(args.features_out, f, dtype=args.dtype)
    if args.labels_out:
        write_labels(args.labels_out, data.labels)
    payload = {"n": f.n, "d": f.dim, "embedder_id": f.embedder_id, "features": str(args.features_out)}
    _emit(args, payload, _config_echo(args))
    return EXIT_OK


def _audit_inputs(args):
    have_feat = args.train_features is not None or args.test_features is not None
    have_data = args.train_dataset is not None or args.test_dataset is not None
    if have_feat and have_data:
        raise UsageError("give either --train-features/--test-features or --train-dataset/--test-dataset, not both")
    if have_feat:
        if args.train_features is None or args.test_features is None:
            raise UsageError("both --train-features and --test-features are required")
        return load_features(args.train_features), load_features(args.test_features)
    if args.train_dataset is None or args.test_dataset is None:
        raise UsageError("audit needs train and test inputs (features or datasets)")
    cfg = _embed_cfg(args)
    tr = embed_reference(_load_dataset(args.train_dataset, args.remap_label_ten), cfg, threads=args.threads)
    te = embed_reference(_load_dataset(args.test_dataset, args.remap_label_ten), cfg, threads=args.threads)
    return tr, te


def cmd_audit(args):
    train, test = _audit_inputs(args)
    rule = DecisionRule(float(args.tau), float(args.tau_low), float(args.z_min))
    seeds = _parse_seeds(args.seeds)
    jitter = float(args.jitter) if args.jitter is not None else None
    report = audit(train, test, int(args.m), seeds, rule, jitter=jitter, threads=args.threads)
    _emit(args, report.to_dict(), _config_echo(args))
    if args.csv:
        report.write_csv(args.csv)
    if args.svg:
        write_audit_svg(args.svg, report)
    if args.fail_on_mismatch and report.verdict == MISMATCH:
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_is(args):
    result = inception_score(read_probs(args.probs), splits=int(args.splits))
    _emit(args, result.to_dict(), _config_echo(args))
    return EXIT_OK


def _labels_from(path, remap):
    p = str(path)
    if p.lower().endswith((".mat", ".sgtd", ".raw")):
        return _load_dataset(p, remap)
    return read_labels(p)


def cmd_remix(args):
    train = _labels_from(args.train, args.remap_label_ten)
    test = _labels_from(args.test, args.remap_label_ten)
    tl = train.labels if hasattr(train, "labels") else train
    el = test.labels if hasattr(test, "labels") else test
    plan = remix(tl, el, int(args.seed))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(plan.dumps() + "\n")
    if args.train_out or args.test_out:
        if not (hasattr(train, "images") and hasattr(test, "images")):
            raise UsageError("--train-out/--test-out need datasets, not label files")
        new_tr, new_te = apply_plan(plan, train, test)
        if args.train_out:
            write_raw(args.train_out, new_tr)
        if args.test_out:
            write_raw(args.test_out, new_te)
    payload = plan.summary()
    payload["plan"] = str(args.out)
    _emit(args, payload, _config_echo(args), dest=args.report)
    return EXIT_OK


def cmd_fit_density(args):
    f = load_features(args.features)
    model = fit_gmm(f, int(args.k), int(args.seed), float(args.tol), int(args.max_iter),
                    None if args.reg is None else float(args.reg), args.covariance)
    model.save(args.model_out)
    payload = {"model": str(args.model_out), "k": model.k, "d": model.dim,
               "iterations": model.meta["iterations"], "converged": model.meta["converged"],
               "final_objective": model.fit_trace[-1], "train_bpd": bpd(model, f).to_dict()}
    _emit(args, payload, _config_echo(args))
    return EXIT_OK


def cmd_bpd(args):
    if args.train is None and args.test is None:
        raise UsageError("bpd needs --train and/or --test features")
    model = GmmModel.load(args.model)
    payload = {}
    for name in ("train", "test"):
        path = getattr(args, name)
        if path is not None:
            payload[name] = bpd(model, load_features(path)).to_dict()
    if "train" in payload and "test" in payload:
        payload["test_minus_train"] = payload["test"]["bpd"] - payload["train"]["bpd"]
    _emit(args, payload, _config_echo(args))
    return EXIT_OK


def cmd_synth(args):
    spec = GeneratorSpec.load(args.spec) if args.spec else three_component_spec(int(args.dim))
    sizes = (int(args.n_train), int(args.n_test))
    if args.pixels:
        side = int(args.image_size)
        train, test = inject_mismatch_pixels(spec, args.mode, float(args.strength), sizes, int(args.seed),
                                             image_shape=(side, side, 3))
        write_raw(args.train_out, train)
        write_raw(args.test_out, test)
        payload = {"train": str(args.train_out), "test": str(args.test_out), "format": "SGTD0001",
                   "train_class_counts": np.bincount(train.labels).tolist(),
                   "test_class_counts": np.bincount(test.labels).tolist()}
    else:
        split = inject_mismatch(spec, args.mode, float(args.strength), sizes, int(args.seed))
        save_features(args.train_out, split.train)
        save_features(args.test_out, split.test)
        if args.labels_prefix:
            write_labels(f"{args.labels_prefix}.train.txt", split.train_labels)
            write_labels(f"{args.labels_prefix}.test.txt", split.test_labels)
        payload = {"train": str(args.train_out), "test": str(args.test_out), "format": "FEATMTX1",
                   "test_weights": split.test_weights.tolist(),
                   "train_class_counts": np.bincount(split.train_labels).tolist(),
                   "test_class_counts": np.bincount(split.test_labels).tolist()}
    payload["spec"] = spec.to_dict()
    _emit(args, payload, _config_echo(args))
    return EXIT_OK


# ---------------------------------------------------------------------------
# svg
# ---------------------------------------------------------------------------

def write_audit_svg(path, report, width=640, height=360):
    """Grouped bars of within vs cross FID per seed, plus the means."""
    groups = [(str(r.seed), r.fid_within, r.fid_cross) for r in report.per_seed]
    groups.append(("mean", report.within_mean, report.cross_mean))
    top = max(max(w, c) for _, w, c in groups) or 1.0
    left, bottom, plot_h = 60, 40, height - 90
    slot = (width - left - 20) / len(groups)
    bar = slot * 0.35
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<text x="{left}" y="20">FID within (grey) vs cross (red); verdict: {report.verdict}, '
        f'ratio {report.gap_ratio:.3f}</text>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - 20}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{left}" y2="{height - bottom - plot_h}" stroke="black"/>',
        f'<text x="5" y="{height - bottom - plot_h + 4}">{top:.3g}</text>',
    ]
    for i, (name, w, c) in enumerate(groups):
        x0 = left + i * slot + slot * 0.15
        for j, (value, colour) in enumerate(((w, "#888888"), (c, "#b2182b"))):
            h = plot_h * value / top
            parts.append(f'<rect x="{x0 + j * bar:.2f}" y="{height - bottom - h:.2f}" '
                         f'width="{bar:.2f}" height="{h:.2f}" fill="{colour}"/>')
        parts.append(f'<text x="{x0 + bar * 0.5:.2f}" y="{height - bottom + 16}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: $SPLITGAUGE_THREADS or 1); never changes results")

    out_opt = argparse.ArgumentParser(add_help=False)
    out_opt.add_argument("--out", help="write the JSON report here instead of stdout")

    p = _Parser(prog="splitgauge", description="Audit train/test splits for distribution mismatch.")
    p.add_argument("--version", action="version", version=f"splitgauge {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def embed_opts(sp):
        sp.add_argument("--grid", default=None, help="pooling grid HxW (default 8x8)")
        sp.add_argument("--dim", type=int, default=None, help="projection dimension (default 64)")
        sp.add_argument("--embed-seed", type=int, default=None)
        sp.add_argument("--remap-label-ten", action="store_true", default=None,
                        help="treat label 10 as class 0 when reading .mat files")

    sp = sub.add_parser("embed", parents=[common, out_opt], help="reference-embed a dataset to FEATMTX1")
    sp.add_argument("--dataset", required=True, help=".sgtd raw tensors or SVHN .mat")
    sp.add_argument("--features-out", required=True)
    sp.add_argument("--labels-out")
    sp.add_argument("--dtype", choices=("f4", "f8"), default=None)
    embed_opts(sp)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("audit", parents=[common, out_opt], help="subset-FID mismatch audit")
    sp.add_argument("--train-features")
    sp.add_argument("--test-features")
    sp.add_argument("--train-dataset")
    sp.add_argument("--test-dataset")
    sp.add_argument("--m", type=int, default=None, help="subset size (default 10000)")
    sp.add_argument("--seeds", default=None, help="comma-separated seeds (default 1,2,3,4,5)")
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--tau-low", type=float, default=None)
    sp.add_argument("--z-min", type=float, default=None)
    sp.add_argument("--jitter", type=float, default=None, help="add jitter*I to covariances")
    sp.add_argument("--csv", help="also write per-seed rows as CSV")
    sp.add_argument("--svg", help="also write a grouped bar chart")
    sp.add_argument("--fail-on-mismatch", action="store_true", default=None)
    embed_opts(sp)
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("is", parents=[common, out_opt], help="Inception Score of a probability matrix")
    sp.add_argument("--probs", required=True)
    sp.add_argument("--splits", type=int, default=None, help="fold count (default 1 = whole set)")
    sp.set_defaults(func=cmd_is)

    sp = sub.add_parser("remix", parents=[common], help="stratified remix plan")
    sp.add_argument("--train", required=True, help="dataset (.sgtd/.mat) or label file")
    sp.add_argument("--test", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", required=True, help="remix plan JSON")
    sp.add_argument("--report", help="write the JSON report here instead of stdout")
    sp.add_argument("--train-out")
    sp.add_argument("--test-out")
    sp.add_argument("--remap-label-ten", action="store_true", default=None)
    sp.set_defaults(func=cmd_remix)

    sp = sub.add_parser("fit-density", parents=[common, out_opt], help="fit the GMM density probe")
    sp.add_argument("--features", required=True)
    sp.add_argument("--model-out", required=True)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--max-iter", type=int, default=None)
    sp.add_argument("--reg", type=float, default=None)
    sp.add_argument("--covariance", choices=("full", "diag"), default=None)
    sp.set_defaults(func=cmd_fit_density)

    sp = sub.add_parser("bpd", parents=[common, out_opt], help="bits per dimension under a fitted probe")
    sp.add_argument("--model", required=True)
    sp.add_argument("--train")
    sp.add_argument("--test")
    sp.set_defaults(func=cmd_bpd)

    sp = sub.add_parser("synth", parents=[common, out_opt], help="synthetic splits with an injected mismatch")
    sp.add_argument("--spec", help="generator spec JSON (default: built-in three-component mixture)")
    sp.add_argument("--mode", choices=("none", "density_skew", "subpop_drop"), default=None)
    sp.add_argument("--strength", type=float, default=None)
    sp.add_argument("--n-train", type=int, default=None)
    sp.add_argument("--n-test", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--dim", type=int, default=None, help="dimension of the built-in spec (default 16)")
    sp.add_argument("--pixels", action="store_true", default=None, help="emit .sgtd image datasets")
    sp.add_argument("--image-size", type=int, default=None, help="pixel-mode image side (default 32)")
    sp.add_argument("--train-out", required=True)
    sp.add_argument("--test-out", required=True)
    sp.add_argument("--labels-prefix")
    sp.set_defaults(func=cmd_synth)
    return p


def _apply_config(args):
    defaults = DEFAULTS.get(args.command, {})
    file_cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise UsageError("--config must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        unknown = set(file_cfg) - set(vars(args))
        if unknown:
            raise UsageError(f"unknown keys in config file: {', '.join(sorted(unknown))}")
    for name in vars(args):
        if getattr(args, name) is None:
            if name in file_cfg:
                setattr(args, name, file_cfg[name])
            elif name in defaults:
                setattr(args, name, defaults[name])
    args.threads = _threads(args.threads)


def run(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"splitgauge: usage error: {exc}\n")
        return EXIT_USAGE
    except (SplitGaugeError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"splitgauge: error: {exc}\n")
        return EXIT_DATA
    except SystemExit as exc:
        # --help / --version
        return int(exc.code or 0)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
