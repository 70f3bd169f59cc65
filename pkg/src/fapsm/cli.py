"""Command-line surface: generate, train, match, evaluate, sweep, stats.

Configuration is layered: built-in defaults, then a "key = value" config file
(--config flag or the FAPSM_CONFIG environment variable), then CLI flags.
Flag names mirror config keys. Exit codes: 0 success, 1 validation error,
2 I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, pipeline, report, synth
from .associative import load_model, save_model
from .errors import FapsmError, NumericalError, StoreError, ValidationError
from .signatures import load_gallery, load_probes, save_gallery, save_probes
from .weighting import load_weights, save_weights

CONFIG_ENV = "FAPSM_CONFIG"

_PIPELINE_KEYS = {
    "lambda1": float,
    "lambda2": float,
    "threshold": float,
    "mode": str,
    "kernel": str,
    "sigma": float,
    "n_k": int,
    "seed": int,
}
_SYNTH_KEYS = {
    "identities": int,
    "probes_per_identity": int,
    "feature_dim": int,
    "patches": int,
    "noise_sigma": float,
    "occlusion_prob": float,
    "corruption_probs": str,
    "seed": int,
}


def read_config_file(path) -> dict:
    """Parse a line-based 'key = value' config file; '#' starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise StoreError(f"cannot read config file {path}: {e}") from e
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, val = (tok.strip() for tok in line.split("=", 1))
        values[key] = val
    return values


def _layered(args, key, cast, default):
    """CLI flag > config file > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in args._config:
        try:
            return cast(args._config[key])
        except ValueError as e:
            raise ValidationError(f"config key {key}: {e}") from e
    return default


def _pipeline_config(args) -> pipeline.PipelineConfig:
    n_k = _layered(args, "n_k", int, None)
    return pipeline.PipelineConfig(
        lambda1=_layered(args, "lambda1", float, 1.0),
        lambda2=_layered(args, "lambda2", float, 0.01),
        threshold=_layered(args, "threshold", float, 0.4),
        mode=_layered(args, "mode", str, "kernel"),
        kernel_kind=_layered(args, "kernel", str, "gaussian"),
        sigma=_layered(args, "sigma", float, 0.05),
        n_k=n_k,
        seed=_layered(args, "seed", int, 0),
    )


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as e:
        raise ValidationError(f"malformed number list {text!r}: {e}") from e


def _figure_path(output_path) -> Path:
    p = Path(output_path)
    return p.with_suffix(".png") if p.suffix != ".png" else p.with_suffix(".fig.png")


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    rho = _layered(args, "corruption_probs", str, "")
    m = _layered(args, "patches", int, 8)
    config = synth.SynthConfig(
        num_identities=_layered(args, "identities", int, 50),
        num_probes_per_identity=_layered(args, "probes_per_identity", int, 10),
        b=_layered(args, "feature_dim", int, 512),
        m=m,
        noise_sigma=_layered(args, "noise_sigma", float, 0.0),
        occlusion_prob=_layered(args, "occlusion_prob", float, 0.0),
        corruption_probs=tuple(_parse_float_list(rho)) if rho else (),
        seed=_layered(args, "seed", int, 0),
    )
    gallery, probes = synth.generate(config)
    save_gallery(args.gallery_out, gallery)
    save_probes(args.probes_out, probes)
    print(f"wrote gallery ({len(gallery)} identities) to {args.gallery_out}")
    print(f"wrote probes ({len(probes)} samples) to {args.probes_out}")
    return 0


def cmd_train(args) -> int:
    config = _pipeline_config(args)
    gallery = load_gallery(args.gallery)
    probes = load_probes(args.probes)
    result = pipeline.train(gallery, probes, config)
    save_model(args.model_out, result.model)
    save_weights(args.weights_out, result.weights)
    print(f"baseline rank-1: {result.baseline_accuracy:.4f}")
    print(f"fapsm rank-1:    {result.fapsm_accuracy:.4f}")
    print(f"wrote model to {args.model_out}")
    print(f"wrote weights to {args.weights_out}")
    return 0


def cmd_match(args) -> int:
    gallery = load_gallery(args.gallery)
    probes = load_probes(args.probes)
    model = load_model(args.model)
    weights = load_weights(args.weights)
    rows = pipeline.match(gallery, probes, model, weights)
    lines = [
        f"{r.probe_index},{r.final_identity},{r.final_score!r},"
        f"{r.baseline_identity},{r.baseline_score!r}"
        for r in rows
    ]
    Path(args.output).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(rows)} match rows to {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    gallery = load_gallery(args.gallery)
    probes = load_probes(args.probes)
    model = load_model(args.model)
    weights = load_weights(args.weights)
    rep = pipeline.evaluate(gallery, probes, model, weights)
    lines = [
        f"baseline rank-1: {rep.baseline_accuracy!r}",
        f"fapsm rank-1: {rep.fapsm_accuracy!r}",
        "patch,local_accuracy,global_accuracy",
    ]
    for j in range(rep.local_patch_accuracy.shape[0]):
        lines.append(
            f"{j + 1},{float(rep.local_patch_accuracy[j])!r},"
            f"{float(rep.global_patch_accuracy[j])!r}"
        )
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        if not args.no_figure:
            report.render_evaluate_figure(
                rep.local_patch_accuracy, rep.global_patch_accuracy,
                _figure_path(args.output),
            )
    return 0


def cmd_sweep(args) -> int:
    config = _pipeline_config(args)
    gallery = load_gallery(args.gallery)
    probes = load_probes(args.probes)
    ts = _parse_float_list(args.thresholds)
    result = evaluation.sweep_threshold(gallery, probes, ts, config)
    lines = ["t,rank1_accuracy"]
    for t, acc in zip(result.thresholds, result.accuracies):
        lines.append(f"{float(t)!r},{float(acc)!r}")
    lines.append(f"best_t,{float(result.best_threshold)!r}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        if not args.no_figure:
            report.render_sweep_figure(
                result.thresholds, result.accuracies, result.best_threshold,
                _figure_path(args.output),
            )
    return 0


def cmd_stats(args) -> int:
    results = evaluation.read_splits_csv(args.splits)
    alpha = _layered(args, "alpha", float, 0.10)
    rep = evaluation.significance_report(results, alpha)
    human = [
        f"Comparison of {results.n_methods} methods over {results.n_splits} splits "
        f"(alpha = {alpha:g})",
        "average ranks: "
        + ", ".join(f"{n} = {r:.4f}" for n, r in zip(rep.method_names, rep.avg_ranks)),
        f"Friedman chi-square = {rep.friedman_chi2:.4f}",
        f"Iman-Davenport F = {rep.iman_f:.4f}",
        f"critical difference = {rep.critical_difference:.4f}",
    ]
    if rep.significant_pairs:
        for a, b, gap in rep.significant_pairs:
            human.append(f"significant: {a} vs {b} (rank gap {gap:.4f} > CD)")
    else:
        human.append("no significant pairs")
    machine = [
        "[stat-report]",
        "alpha=" + repr(rep.alpha),
        "chi2=" + repr(rep.friedman_chi2),
        "iman_f=" + repr(rep.iman_f),
        "cd=" + repr(rep.critical_difference),
    ]
    for n, r in zip(rep.method_names, rep.avg_ranks):
        machine.append(f"rank.{n}=" + repr(float(r)))
    machine.append(
        "significant_pairs=" + ";".join(f"{a}|{b}" for a, b, _ in rep.significant_pairs)
    )
    text = "\n".join(human + machine) + "\n"
    print(text, end="")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        if not args.no_figure:
            report.render_stats_figure(rep, _figure_path(args.output))
    return 0


# ---------------------------------------------------------------------------


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda1", type=float, default=None, help="ridge regularizer (default 1)")
    p.add_argument("--lambda2", type=float, default=None, help="l1 weight regularizer (default 0.01)")
    p.add_argument("--threshold", type=float, default=None, help="rejection threshold t (default 0.4)")
    p.add_argument("--mode", choices=["linear", "kernel"], default=None,
                   help="associative fit mode (default kernel)")
    p.add_argument("--kernel", choices=["linear", "gaussian"], default=None,
                   help="kernel kind (default gaussian)")
    p.add_argument("--sigma", type=float, default=None, help="gaussian kernel width (default 0.05)")
    p.add_argument("--n-k", dest="n_k", type=int, default=None,
                   help="retained kernel training rows (default min(n, 1000))")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fapsm",
        description="Fully associative patch-based 1-to-N signature matcher",
    )
    parser.add_argument("--config", default=None,
                        help=f"config file of 'key = value' lines (or ${CONFIG_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic gallery and probe stores")
    p.add_argument("--gallery-out", required=True)
    p.add_argument("--probes-out", required=True)
    p.add_argument("--identities", type=int, default=None)
    p.add_argument("--probes-per-identity", dest="probes_per_identity", type=int, default=None)
    p.add_argument("--feature-dim", dest="feature_dim", type=int, default=None)
    p.add_argument("--patches", type=int, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--occlusion-prob", dest="occlusion_prob", type=float, default=None)
    p.add_argument("--corruption-probs", dest="corruption_probs", default=None,
                   help="comma-separated per-patch corruption probabilities")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit the associative model and patch weights")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--weights-out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("match", help="identify probes with trained artifacts")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("evaluate", help="rank-1 and per-patch accuracy report")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="threshold sensitivity table and best t")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--thresholds", default="0.2,0.3,0.4,0.5,0.6")
    p.add_argument("--output", default=None)
    p.add_argument("--no-figure", action="store_true")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="Friedman / Bonferroni-Dunn report from a splits CSV")
    p.add_argument("--splits", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--output", default=None)
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config_path = args.config or os.environ.get(CONFIG_ENV)
        args._config = read_config_file(config_path) if config_path else {}
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (StoreError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FapsmError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
