"""Repeated-run experiments, RMSE statistics and report files.

An experiment builds one dataset, then trains ``n_runs`` models that differ
only in their seed (``base_seed + run_index``). Errors are scored after
inverse scaling. Per-step RMSE is taken over all windows for one horizon;
the overall train/test figure is ``sqrt(sum_k MSE_k)``, the root of the
summed per-step mean squared errors.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats

from . import dynamics
from .dynamics import Series
from .errors import ConfigError, DiffLSTMError, ShapeError, UnknownMetricError
from .network import TrainConfig, predict, train
from .preprocess import (EmbeddingSpec, SavGolSpec, ScaleParams, WindowedDataset,
                         build_windows, fit_scale, read_csv_columns, savitzky_golay_derivative,
                         scale_dataset, split_train_test, unscale)

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "DIFFLSTM_OUTPUT_DIR"
STREAMS = ("original", "differential")
REPORT_VERSION = 1


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment; serialised as a flat mapping.

    ``dataset`` is ``mackey_glass``, ``lorenz``, ``rossler`` or ``csv:<path>``.
    Generator fields left as ``None`` take the system's defaults and
    ``system_params`` overrides system constants (``alpha``, ``sigma``, ...).
    ``lam`` is written as ``lambda`` in config files.
    """

    dataset: str = "mackey_glass"
    n_samples: int | None = None
    dt: float | None = None
    warmup: int = 0
    sample_every: int = 1
    initial: tuple | None = None
    system_params: dict = field(default_factory=dict)
    csv_column: int = 0
    csv_dt: float = 1.0
    diff_method: str = "analytic"
    savgol_window: int = 5
    savgol_polyorder: int = 3
    savgol_edge: str = "mirror"
    normalize_dataset: bool = True
    scale_fit: str = "train"
    target_lo: float = -0.5
    target_hi: float = 0.5
    D: int = 5
    T: int = 1
    H: int = 10
    train_frac: float = 0.6
    lam: float = 1.0
    learning_rate: float = 0.005
    epochs: int = 300
    batch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float | None = None
    hidden: int = 10
    init_scale: float | None = None
    n_runs: int = 30
    base_seed: int = 0
    ci_method: str = "normal"
    workers: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigError("n_runs must be at least 1")
        if self.diff_method not in ("analytic", "savgol"):
            raise ConfigError(f"diff_method must be 'analytic' or 'savgol', got {self.diff_method!r}")
        if self.dataset.startswith("csv:") and self.diff_method == "analytic":
            raise ConfigError("csv datasets have no governing equation; use diff_method='savgol'")
        if self.savgol_edge not in ("mirror", "fit"):
            raise ConfigError("savgol_edge must be 'mirror' or 'fit'")
        if self.scale_fit not in ("train", "all"):
            raise ConfigError("scale_fit must be 'train' or 'all'")
        if self.ci_method not in ("normal", "t"):
            raise ConfigError("ci_method must be 'normal' or 't'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.initial is not None:
            object.__setattr__(self, "initial", tuple(self.initial))

    @property
    def embedding(self) -> EmbeddingSpec:
        return EmbeddingSpec(self.D, self.T, self.H)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(lam=self.lam, learning_rate=self.learning_rate, epochs=self.epochs,
                           batch_size=self.batch_size, adam_beta1=self.adam_beta1,
                           adam_beta2=self.adam_beta2, adam_eps=self.adam_eps, seed=seed,
                           grad_clip=self.grad_clip, hidden=self.hidden, init_scale=self.init_scale)

    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.n_runs)]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lambda"] = d.pop("lam")
        if d["initial"] is not None:
            d["initial"] = list(d["initial"])
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        d = dict(raw)
        if "lambda" in d:
            if "lam" in d:
                raise ConfigError("give either 'lambda' or 'lam', not both")
            d["lam"] = d.pop("lambda")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**d)
        except (TypeError, DiffLSTMError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def bundled_config_path(name: str) -> Path:
    """Location of a shipped benchmark config: ``mackey_glass``, ``lorenz``, ``rossler``, ``aci_finance``."""
    return Path(str(resources.files("difflstm") / "configs" / f"{name}.json"))


def load_config(path) -> ExperimentConfig:
    """Read a flat JSON (or TOML) config file, or a bundled config by name."""
    path = Path(path)
    if not path.exists() and bundled_config_path(str(path)).exists():
        path = bundled_config_path(str(path))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return ExperimentConfig.from_dict(raw)


# -- data preparation --------------------------------------------------------

@dataclass(frozen=True)
class PreparedData:
    """Raw-unit and scaled train/test windows plus the scale maps used."""

    train_raw: WindowedDataset
    test_raw: WindowedDataset
    train: WindowedDataset
    test: WindowedDataset
    value_scale: ScaleParams
    diff_scale: ScaleParams


def load_series(cfg: ExperimentConfig) -> tuple[Series, Series]:
    """Produce the (value, differential) pair the windows are cut from.

    With ``normalize_dataset`` the value series is min-max mapped onto [0, 1]
    over its full length and the differential is divided by the same range,
    so both stay consistent. This is the unit in which errors are reported.
    """
    if cfg.dataset.startswith("csv:"):
        (vals,) = read_csv_columns(cfg.dataset[4:], (cfg.csv_column,))
        values = Series(vals, cfg.csv_dt, Path(cfg.dataset[4:]).stem)
        diffs = None
    else:
        kwargs = dict(cfg.system_params)
        for key in ("n_samples", "dt", "initial"):
            if getattr(cfg, key) is not None:
                kwargs[key] = getattr(cfg, key)
        kwargs.update(warmup=cfg.warmup, sample_every=cfg.sample_every)
        try:
            values, diffs = dynamics.generate(cfg.dataset, **kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad generator parameters for {cfg.dataset}: {exc}") from exc
    if cfg.normalize_dataset:
        lo, hi = float(values.values.min()), float(values.values.max())
        if hi == lo:
            raise ConfigError("cannot normalise a constant series")
        values = values.with_values((values.values - lo) / (hi - lo))
        if diffs is not None:
            diffs = diffs.with_values(diffs.values / (hi - lo))
    if cfg.diff_method == "savgol":
        sg = SavGolSpec(cfg.savgol_window, cfg.savgol_polyorder, values.dt, cfg.savgol_edge)
        diffs = savitzky_golay_derivative(values, sg)
    return values, diffs


def prepare(cfg: ExperimentConfig) -> PreparedData:
    values, diffs = load_series(cfg)
    ds = build_windows(values, diffs, cfg.embedding)
    train_raw, test_raw = split_train_test(ds, cfg.train_frac)
    fit_on = train_raw if cfg.scale_fit == "train" else ds
    vs = fit_scale(np.concatenate([fit_on.X.ravel(), fit_on.Y.ravel()]), cfg.target_lo, cfg.target_hi)
    dsc = fit_scale(np.concatenate([fit_on.Xd.ravel(), fit_on.Yd.ravel()]), cfg.target_lo, cfg.target_hi)
    return PreparedData(train_raw, test_raw, scale_dataset(train_raw, vs, dsc),
                        scale_dataset(test_raw, vs, dsc), vs, dsc)


# -- metrics -----------------------------------------------------------------

def rmse_per_step(predictions, targets) -> np.ndarray:
    """RMSE of each horizon column over all windows."""
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if p.shape != t.shape:
        raise ShapeError(f"predictions {p.shape} and targets {t.shape} differ in shape")
    return np.sqrt(np.mean((p - t) ** 2, axis=0))


def overall_rmse(step_rmse) -> float:
    """Root of the summed per-step MSEs."""
    s = np.asarray(step_rmse, dtype=np.float64)
    return float(np.sqrt(np.sum(s * s)))


@dataclass(frozen=True)
class Stats:
    n: int
    mean: float
    sd: float | None
    ci_lo: float
    ci_hi: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def summarize(values, ci_method: str = "normal") -> Stats:
    """Mean, sample SD and a symmetric 95% interval (normal 1.96 or Student t)."""
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[0]
    mean = float(np.mean(v))
    if n < 2:
        return Stats(n, mean, None, mean, mean, float(v.min()), float(v.max()))
    sd = float(np.std(v, ddof=1))
    z = 1.96 if ci_method == "normal" else float(stats.t.ppf(0.975, n - 1))
    half = z * sd / math.sqrt(n)
    return Stats(n, mean, sd, mean - half, mean + half, float(v.min()), float(v.max()))


# -- runs and reports --------------------------------------------------------

@dataclass
class RunResult:
    run_index: int
    seed: int
    status: str
    error: str | None = None
    metrics: dict = field(default_factory=dict)
    final_train_loss: float | None = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def flat_metrics(self) -> dict[str, float]:
        """``{"original/test": .., "original/step-3": .., "differential/train-step-1": ..}``."""
        out = {}
        for stream, m in self.metrics.items():
            out[f"{stream}/train"] = m["train"]
            out[f"{stream}/test"] = m["test"]
            for k, v in enumerate(m["train_steps"], start=1):
                out[f"{stream}/train-step-{k}"] = v
            for k, v in enumerate(m["test_steps"], start=1):
                out[f"{stream}/step-{k}"] = v
        return out

    def to_dict(self, timing: bool = False) -> dict:
        d = {"run_index": self.run_index, "seed": self.seed, "status": self.status,
             "error": self.error, "metrics": self.metrics, "final_train_loss": self.final_train_loss}
        if timing:
            d["wall_time"] = self.wall_time
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(d["run_index"], d["seed"], d["status"], d.get("error"), d.get("metrics", {}),
                   d.get("final_train_loss"), d.get("wall_time", 0.0))


@dataclass
class RunReport:
    config: dict
    horizon: int
    runs: list[RunResult]
    ci_method: str = "normal"

    @property
    def completed(self) -> list[RunResult]:
        return [r for r in self.runs if r.ok]

    @property
    def n_failed(self) -> int:
        return len(self.runs) - len(self.completed)

    def aggregate(self) -> dict[str, Stats]:
        done = self.completed
        if not done:
            return {}
        flats = [r.flat_metrics() for r in done]
        return {key: summarize([f[key] for f in flats], self.ci_method) for key in flats[0]}

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "config": self.config,
            "horizon": self.horizon,
            "ci_method": self.ci_method,
            "n_runs": len(self.runs),
            "n_failed": self.n_failed,
            "runs": [r.to_dict() for r in self.runs],
            "aggregate": {k: s.to_dict() for k, s in self.aggregate().items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["config"], d["horizon"], [RunResult.from_dict(r) for r in d["runs"]],
                   d.get("ci_method", "normal"))


def _score(pred, target) -> dict:
    train_steps = rmse_per_step(pred[0], target[0])
    test_steps = rmse_per_step(pred[1], target[1])
    return {"train": overall_rmse(train_steps), "test": overall_rmse(test_steps),
            "train_steps": train_steps.tolist(), "test_steps": test_steps.tolist()}


def execute_run(data: PreparedData, cfg: ExperimentConfig, run_index: int) -> RunResult:
    """Train, predict and score one seed. Numeric failures are captured, not raised."""
    seed = cfg.base_seed + run_index
    start = time.perf_counter()
    try:
        params, history = train(data.train, cfg.train_config(seed))
        tr_y, tr_yd = predict(params, data.train)
        te_y, te_yd = predict(params, data.test)
        vs, dsc = data.value_scale, data.diff_scale
        metrics = {
            "original": _score((unscale(vs, tr_y), unscale(vs, te_y)), (data.train_raw.Y, data.test_raw.Y)),
            "differential": _score((unscale(dsc, tr_yd), unscale(dsc, te_yd)),
                                   (data.train_raw.Yd, data.test_raw.Yd)),
        }
        final_loss = history[-1] if history else None
        if not all(math.isfinite(m["test"]) and math.isfinite(m["train"]) for m in metrics.values()):
            raise ArithmeticError("non-finite RMSE")
    except (ArithmeticError, FloatingPointError) as exc:
        log.warning("run %d (seed %d) failed: %s", run_index, seed, exc)
        return RunResult(run_index, seed, "failed", error=str(exc),
                         wall_time=time.perf_counter() - start)
    return RunResult(run_index, seed, "ok", metrics=metrics, final_train_loss=final_loss,
                     wall_time=time.perf_counter() - start)


def _execute_packed(args):
    return execute_run(*args)


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Build the dataset once and run every seed; failed runs are kept but not aggregated."""
    data = prepare(cfg)
    jobs = [(data, cfg, i) for i in range(cfg.n_runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(_execute_packed, jobs))
    else:
        runs = [execute_run(*job) for job in jobs]
    return RunReport(cfg.to_dict(), cfg.H, runs, cfg.ci_method)


# -- reference comparison ----------------------------------------------------

def reference_path(name: str) -> Path:
    """Location of a bundled reference table such as ``mackey_glass`` or ``lorenz_diff``."""
    return Path(str(resources.files("difflstm") / "reference" / f"{name}.json"))


def load_reference(path_or_name) -> dict:
    p = Path(path_or_name)
    if not p.exists():
        p = reference_path(str(path_or_name))
    try:
        return json.loads(p.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read reference table {path_or_name}: {exc}") from exc


@dataclass(frozen=True)
class Verdict:
    metric: str
    reference: float
    observed: float
    slack: float | None
    verdict: str

    @property
    def limit(self) -> float | None:
        return None if self.slack is None else self.reference + self.slack


def compare_to_reference(report: RunReport, reference: dict,
                         slack: float | dict | None = None) -> list[Verdict]:
    """Compare aggregate means with a reference table.

    A metric passes when ``observed_mean <= reference_mean + slack``. Slack
    comes from the ``slack`` argument (a number for every metric or a
    per-metric mapping), falling back to the table's own ``slack`` entries;
    metrics with no slack anywhere are reported as ``INFO``.
    """
    stream = reference.get("stream", "original")
    agg = report.aggregate()
    wanted = {f"{stream}/{k}": v for k, v in reference["metrics"].items()}
    absent = sorted(k for k in wanted if k not in agg)
    if absent:
        raise UnknownMetricError(f"report lacks metrics {absent}")
    table_slack = reference.get("slack", {})
    out = []
    for key, ref in wanted.items():
        short = key.split("/", 1)[1]
        if isinstance(slack, dict):
            s = slack.get(short, table_slack.get(short))
        elif slack is not None:
            s = float(slack)
        else:
            s = table_slack.get(short)
        observed = agg[key].mean
        if s is None:
            verdict = "INFO"
        else:
            verdict = "PASS" if observed <= ref["mean"] + s + 1e-12 else "FAIL"
        out.append(Verdict(key, ref["mean"], observed, s, verdict))
    return out


def verdict_table(verdicts: list[Verdict]) -> str:
    lines = [f"{'metric':<28}{'reference':>11}{'observed':>11}{'limit':>11}  verdict"]
    for v in verdicts:
        limit = "" if v.limit is None else f"{v.limit:.5f}"
        lines.append(f"{v.metric:<28}{v.reference:>11.5f}{v.observed:>11.5f}{limit:>11}  {v.verdict}")
    return "\n".join(lines)


# -- report files ------------------------------------------------------------

CSV_HEADER = ["run_index", "seed", "status", "metric", "value"]
PLOT_HEADER = ["series", "step", "mean", "ci_lo", "ci_hi"]


def report_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in report.runs:
        if not r.ok:
            w.writerow([r.run_index, r.seed, r.status, "error", r.error or ""])
            continue
        for key, value in r.flat_metrics().items():
            w.writerow([r.run_index, r.seed, r.status, key, repr(value)])
    return buf.getvalue()


def report_plotcsv(report: RunReport) -> str:
    """Tidy per-step table: one row per (stream/partition, step)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_HEADER)
    agg = report.aggregate()
    if agg:
        for stream in STREAMS:
            for part, prefix in (("train", "train-step-"), ("test", "step-")):
                for k in range(1, report.horizon + 1):
                    s = agg[f"{stream}/{prefix}{k}"]
                    w.writerow([f"{stream}/{part}", k, repr(s.mean), repr(s.ci_lo), repr(s.ci_hi)])
    return buf.getvalue()


def output_dir_for(cfg: ExperimentConfig) -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV) or cfg.output_dir)


def emit_reports(report: RunReport, output_dir, formats=("json", "csv", "plotcsv"),
                 stem: str = "report") -> dict[str, Path]:
    """Write the requested formats; wall times go to a separate ``<stem>.timing.json``.

    Keeping timings out of ``<stem>.json`` makes that file a pure function of
    the configuration.
    """
    out = Path(output_dir)
    writers = {"json": (".json", report.to_json), "csv": (".csv", lambda: report_csv(report)),
               "plotcsv": (".plot.csv", lambda: report_plotcsv(report))}
    unknown = set(formats) - set(writers)
    if unknown:
        raise ConfigError(f"unknown report formats {sorted(unknown)}")
    written = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        for fmt in formats:
            suffix, render = writers[fmt]
            path = out / f"{stem}{suffix}"
            path.write_text(render())
            written[fmt] = path
        timing = out / f"{stem}.timing.json"
        timing.write_text(json.dumps({str(r.run_index): r.wall_time for r in report.runs}, indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"writing reports to {out} failed: {exc}") from exc
    return written
