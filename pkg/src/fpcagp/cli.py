"""Command line entry point: ``fpcagp synth | cmapss | demo``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, synthgen
from .fpca import parse_k_rule

log = logging.getLogger("fpcagp")

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_INPUT = 2

# flags that may also come from a --config file, with their parsers
_CONFIG_KEYS = {
    "gamma": str, "reps": int, "seed": int, "heterogeneity": int, "target": str,
    "covariates": str, "out": str, "threads": int, "k-rule": str, "methods": str,
    "test-points": int, "units": int, "restarts": int, "grid-size": int,
    "train": str, "test": str, "window": str, "plot": str,
}


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            key, sep, value = line.partition(":")
        key = key.strip().lstrip("-").replace("_", "-")
        if not sep or key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: cannot parse {raw!r}")
        value = value.strip()
        if key == "plot":
            out[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            out[key] = _CONFIG_KEYS[key](value)
    return out


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _names(text: str) -> tuple:
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    p.add_argument("--gamma", help="comma separated observed fractions (default 0.25,0.5,0.75)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--k-rule", dest="k_rule", help="pve:<threshold> or fixed:<K> (default pve:0.99)")
    p.add_argument("--methods", help="comma separated subset of FPCA-GP,FPCA-B,ME")
    p.add_argument("--restarts", type=int, help="hyperparameter optimiser starts (default 5)")
    p.add_argument("--grid-size", dest="grid_size", type=int)
    p.add_argument("--out", help="output MAE CSV path")
    p.add_argument("--plot", action="store_true", default=None,
                   help="also write <out>.summary.csv and a boxplot <out>.svg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpcagp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthetic two-environment study")
    _common(s)
    s.add_argument("--reps", type=int)
    s.add_argument("--heterogeneity", type=int, choices=(0, 50, 90))
    s.add_argument("--units", type=int, help="historical units (default 50)")
    s.add_argument("--test-points", dest="test_points", type=int, help="scoring points U (default 100)")
    s.add_argument("--export-data", dest="export_data", help="write repetition 0 as unit,stream,time,value CSV")

    c = sub.add_parser("cmapss", help="study on recorded C-MAPSS style files")
    _common(c)
    c.add_argument("--train", help="training file (26-column text, or unit,stream,time,value .csv)")
    c.add_argument("--test", help="test file, same formats")
    c.add_argument("--target", help="target stream id, e.g. sensor_4")
    c.add_argument("--covariates", help="comma separated covariate stream ids")
    c.add_argument("--window", help="obs_end,pred_end (default 100,160)")

    d = sub.add_parser("demo", help="small synthetic run printing a summary table")
    _common(d)
    d.add_argument("--reps", type=int)
    d.add_argument("--heterogeneity", type=int, choices=(0, 50, 90))
    return parser


def _merge(args: argparse.Namespace) -> dict:
    opts = read_config(args.config) if getattr(args, "config", None) else {}
    for key in _CONFIG_KEYS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            opts[key] = val
    return opts


def _experiment(opts: dict, **defaults) -> bench.ExperimentConfig:
    kw = dict(defaults)
    if "gamma" in opts:
        kw["gammas"] = _floats(opts["gamma"])
    if "methods" in opts:
        kw["methods"] = _names(opts["methods"])
    if "k-rule" in opts:
        kw["k_rule"] = parse_k_rule(opts["k-rule"])
    for key, field in (("reps", "reps"), ("seed", "seed"), ("threads", "threads"),
                       ("heterogeneity", "heterogeneity"), ("units", "n_units"),
                       ("test-points", "test_points"), ("restarts", "restarts"),
                       ("grid-size", "grid_size")):
        if key in opts:
            kw[field] = opts[key]
    return bench.ExperimentConfig(**kw)


def _emit(result: bench.RunResult, opts: dict, out_default: str, title: str) -> None:
    out = Path(opts.get("out", out_default))
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(",".join(bench.MAE_HEADER) + "\n")
        bench.write_records(result.records, fh)
    if result.failures:
        bench.write_failures(result.failures, out.with_suffix(".failures.csv"))
    if opts.get("plot"):
        bench.write_summary(bench.summarize(result.records), out.with_suffix(".summary.csv"))
        bench.plot_summary(result.records, out.with_suffix(".svg"), title)
    log.info("wrote %d records to %s", len(result.records), out)


def _print_summary(result: bench.RunResult, stream=None) -> None:
    stream = stream or sys.stdout
    rows = bench.summarize(result.records)
    print(f"{'method':<8} {'gamma':>5} {'n':>4} {'median':>9} {'mean':>9} {'sd':>9}", file=stream)
    for r in rows:
        print(f"{r['method']:<8} {r['gamma']:>5.2f} {r['n']:>4d} {r['median']:>9.4f} {r['mean']:>9.4f} {r['sd']:>9.4f}",
              file=stream)


def _status(result: bench.RunResult) -> int:
    if not result.ok:
        log.error("%.1f%% of work items failed", 100 * result.failure_rate)
        return EXIT_FAILURES
    return EXIT_OK


def cmd_synth(opts: dict, export_data=None) -> int:
    cfg = _experiment(opts)
    if export_data:
        hist, test = synthgen.generate(synthgen.SynthConfig(
            n_units=cfg.n_units, heterogeneity=cfg.heterogeneity, seed=bench._rep_seed(cfg.seed, 0)))
        synthgen.export_csv(hist + [test], export_data)
    result = bench.run_synthetic(cfg)
    _emit(result, opts, "synth_mae.csv", f"synthetic, {cfg.heterogeneity}% heterogeneity")
    return _status(result)


def cmd_cmapss(opts: dict) -> int:
    missing = [k for k in ("train", "test", "target", "covariates") if k not in opts]
    if missing:
        log.error("cmapss needs --%s", " --".join(missing))
        return EXIT_INPUT
    window = _floats(opts.get("window", "100,160"))
    cfg = _experiment(opts)
    try:
        result = bench.run_cmapss(cfg, opts["train"], opts["test"], opts["target"],
                                  _names(opts["covariates"]), window)
    except (ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    if result.excluded:
        log.info("%d test unit(s) without observations in the scoring window were excluded",
                 len(result.excluded))
    _emit(result, opts, "cmapss_mae.csv", f"{opts['target']}")
    _print_summary(result)
    return _status(result)


def cmd_demo(opts: dict) -> int:
    opts = {"reps": 3, **opts}
    cfg = _experiment(opts)
    result = bench.run_synthetic(cfg)
    _print_summary(result)
    if "out" in opts:
        _emit(result, opts, opts["out"], "demo")
    return _status(result)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = _merge(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    try:
        if args.command == "synth":
            return cmd_synth(opts, args.export_data)
        if args.command == "cmapss":
            return cmd_cmapss(opts)
        return cmd_demo(opts)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
