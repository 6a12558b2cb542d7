"""Command-line entry point: ``difflstm <command> ...``.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure,
4 a reference comparison failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__, dynamics, harness
from .errors import ConfigError, DiffLSTMError, NumericError, UnknownMetricError
from .network import check_gradients, predict, save, train
from .dynamics import Series
from .preprocess import (EmbeddingSpec, SavGolSpec, build_windows, false_nearest_neighbors,
                         read_csv_columns, savitzky_golay_derivative, unscale)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FAIL = 0, 2, 3, 4

log = logging.getLogger("difflstm")


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def cmd_generate(args) -> int:
    params = {"n_samples": args.n_samples, "warmup": args.warmup, "sample_every": args.sample_every}
    if args.dt is not None:
        params["dt"] = args.dt
    values, diffs = dynamics.generate(args.system, **params)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "differential"])
        for v, d in zip(values.values, diffs.values):
            w.writerow([repr(float(v)), repr(float(d))])
    print(f"wrote {len(values)} samples (dt={values.dt:g}) to {out}")
    return EXIT_OK


def cmd_prepare(args) -> int:
    spec = EmbeddingSpec(args.D, args.T, args.H)
    if args.diff == "analytic":
        try:
            values, diffs = read_csv_columns(args.input, (args.column, args.diff_column))
        except DiffLSTMError as exc:
            raise ConfigError(f"analytic differentials need a second CSV column: {exc}") from exc
    else:
        (values,) = read_csv_columns(args.input, (args.column,))
        sg = SavGolSpec(args.window, args.polyorder, args.dt, args.edge)
        diffs = savitzky_golay_derivative(Series(values, args.dt), sg).values
    ds = build_windows(values, diffs, spec)
    Path(args.out).write_text(json.dumps(ds.to_dict()) + "\n")
    print(f"wrote {len(ds)} windows (D={spec.D}, T={spec.T}, H={spec.H}) to {args.out}")
    return EXIT_OK


def _output_dir(args, cfg) -> Path:
    return Path(args.output_dir) if args.output_dir else harness.output_dir_for(cfg)


def _apply_overrides(cfg: harness.ExperimentConfig, args) -> harness.ExperimentConfig:
    changes = {k: getattr(args, k) for k in ("n_runs", "workers", "epochs")
               if getattr(args, k, None) is not None}
    if not changes:
        return cfg
    try:
        return dataclasses.replace(cfg, **changes)
    except (TypeError, DiffLSTMError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_train(args) -> int:
    cfg = _apply_overrides(harness.load_config(args.config), args)
    seed = cfg.base_seed if args.seed is None else args.seed
    data = harness.prepare(cfg)
    params, history = train(data.train, cfg.train_config(seed))
    out_dir = _output_dir(args, cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = Path(args.out) if args.out else out_dir / "model.json"
    save(params, model_path, config={**cfg.to_dict(), "seed": seed})
    vs, dsc = data.value_scale, data.diff_scale
    te_y, te_yd = predict(params, data.test)
    orig = harness.rmse_per_step(unscale(vs, te_y), data.test_raw.Y)
    diff = harness.rmse_per_step(unscale(dsc, te_yd), data.test_raw.Yd)
    print(f"final train loss {history[-1] if history else float('nan'):.6g}")
    print(f"test RMSE original {harness.overall_rmse(orig):.6f}  differential {harness.overall_rmse(diff):.6f}")
    print(f"model written to {model_path}")
    return EXIT_OK


def _benchmark_one(cfg, args, stem: str, reference) -> bool:
    report = harness.run_experiment(cfg)
    written = harness.emit_reports(report, _output_dir(args, cfg), stem=stem)
    agg = report.aggregate()
    done = len(report.completed)
    print(f"[lambda={cfg.lam:g}] {done}/{cfg.n_runs} runs completed, {report.n_failed} failed")
    if "original/test" in agg:
        s = agg["original/test"]
        print(f"  test RMSE mean {s.mean:.6f}  95% CI [{s.ci_lo:.6f}, {s.ci_hi:.6f}]")
    print(f"  reports: {', '.join(str(p) for p in written.values())}")
    if reference is None:
        return True
    if done == 0:
        print("  no completed runs to compare")
        return False
    verdicts = harness.compare_to_reference(report, reference, args.slack)
    print(harness.verdict_table(verdicts))
    return all(v.verdict != "FAIL" for v in verdicts)


def cmd_benchmark(args) -> int:
    cfg = _apply_overrides(harness.load_config(args.config), args)
    reference = harness.load_reference(args.reference) if args.reference else None
    if args.lambda_sweep:
        ok = True
        for lam in args.lambda_sweep:
            try:
                swept = dataclasses.replace(cfg, lam=lam)
            except (DiffLSTMError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
            ok &= _benchmark_one(swept, args, f"report-lambda-{lam:g}", reference)
    else:
        ok = _benchmark_one(cfg, args, "report", reference)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_gradcheck(args) -> int:
    res = check_gradients(args.seed, args.trials)
    verdict = "PASS" if res.max_rel_error < args.tol else "FAIL"
    print(f"max relative error {res.max_rel_error:.3e} over {res.trials} trials "
          f"(worst trial {res.worst_trial}), tolerance {args.tol:g}: {verdict}")
    return EXIT_OK if verdict == "PASS" else EXIT_NUMERIC


def cmd_fnn(args) -> int:
    (x,) = read_csv_columns(args.input, (args.column,))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = false_nearest_neighbors(x, lag=args.lag, d_max=args.dmax, rtol=args.rtol,
                                      threshold=args.threshold, atol=args.atol)
    for w in caught:
        log.warning("%s", w.message)
    for d, frac in enumerate(res.fractions, start=1):
        print(f"D={d:<3d} false-neighbour fraction {frac:.4f}")
    print(f"embedding dimension: {res.dimension}" + ("" if res.converged else " (not converged)"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="difflstm", description="Differential-regularised LSTM forecasting")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="integrate a chaotic system and write value,differential CSV")
    p.add_argument("--system", required=True, choices=sorted(dynamics.SYSTEMS) + ["mackey_glass"])
    p.add_argument("--out", required=True)
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--dt", type=float)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--sample-every", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("prepare", help="cut a CSV series into windows")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--D", type=int, default=5)
    p.add_argument("--T", type=int, default=1)
    p.add_argument("--H", type=int, default=10)
    p.add_argument("--diff", choices=("analytic", "savgol"), default="analytic")
    p.add_argument("--column", type=int, default=0)
    p.add_argument("--diff-column", type=int, default=1)
    p.add_argument("--dt", type=float, default=1.0, help="sample spacing for the savgol derivative")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--polyorder", type=int, default=3)
    p.add_argument("--edge", choices=("mirror", "fit"), default="mirror")
    p.set_defaults(func=cmd_prepare)

    for name, func, text in (("train", cmd_train, "train one model from a config file"),
                             ("benchmark", cmd_benchmark, "repeated seeded runs with RMSE statistics")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True)
        p.add_argument("--output-dir")
        p.add_argument("--epochs", type=int)
        p.add_argument("--workers", type=int)
        if name == "train":
            p.add_argument("--seed", type=int)
            p.add_argument("--out", help="model file (default <output-dir>/model.json)")
        else:
            p.add_argument("--n-runs", type=int)
            p.add_argument("--reference", help="reference table path or bundled name")
            p.add_argument("--slack", type=float, help="override every metric's slack")
            p.add_argument("--lambda-sweep", type=_float_list, metavar="L1,L2,...")
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("fnn", help="false-nearest-neighbour embedding dimension")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--dmax", type=int, default=10)
    p.add_argument("--lag", type=int, default=1)
    p.add_argument("--column", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--rtol", type=float, default=10.0)
    p.add_argument("--atol", type=float, default=2.0)
    p.set_defaults(func=cmd_fnn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UnknownMetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DiffLSTMError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
