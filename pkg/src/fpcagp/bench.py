"""Benchmark protocol: gamma-observation experiments, MAE scoring and CSV output."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import baselines, bayes, fpca as fpca_mod, score_gp, synthgen
from .fpca import PVE
from .signal import Signal, TimeDomain, UnitRecord, WorkingGrid, restrict

log = logging.getLogger(__name__)

FPCA_GP = "FPCA-GP"
FPCA_B = "FPCA-B"
ME = "ME"
METHODS = (FPCA_GP, FPCA_B, ME)
MAE_HEADER = ("method", "gamma", "rep", "unit", "mae")
SUMMARY_HEADER = ("method", "gamma", "n", "mean", "sd", "min", "q1", "median", "q3", "max")
FAILURE_LIMIT = 0.10


@dataclass(frozen=True)
class ExperimentConfig:
    gammas: tuple = (0.25, 0.50, 0.75)
    reps: int = 100
    test_points: int = 100
    methods: tuple = METHODS
    k_rule: object = PVE(0.99)
    seed: int = 0
    heterogeneity: int = 90
    n_units: int = 50
    points_per_signal: int = 50
    noise_sd: float = 0.05
    grid_size: int = 101
    restarts: int = 5
    threads: int = 1

    def __post_init__(self):
        if not all(0 < g < 1 for g in self.gammas):
            raise ValueError("every gamma must lie in (0, 1)")
        if self.reps < 1 or self.test_points < 1:
            raise ValueError("reps and test_points must be >= 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")


@dataclass(frozen=True, order=True)
class MaeRecord:
    method: str
    gamma: float
    rep: int
    unit: str
    mae: float


@dataclass(frozen=True)
class Failure:
    method: str
    gamma: float
    rep: int
    unit: str
    error: str


@dataclass
class RunResult:
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        total = len(self.records) + len(self.failures)
        return len(self.failures) / total if total else 0.0

    @property
    def ok(self) -> bool:
        return self.failure_rate <= FAILURE_LIMIT


def mae(pred: Callable, truth: Callable, t_star: float, b: float, U: int) -> float:
    """Mean absolute error over ``U`` evenly spaced points of ``[t_star, b]``."""
    if not t_star < b:
        raise ValueError("t_star must be smaller than b")
    t = np.linspace(t_star, b, U)
    return float(np.mean(np.abs(np.asarray(pred(t)) - np.asarray(truth(t)))))


def mae_at(pred: Callable, times, values) -> float:
    """Mean absolute error against recorded observations."""
    return float(np.mean(np.abs(np.asarray(pred(np.asarray(times))) - np.asarray(values))))


def _fmt(x) -> str:
    return format(float(x), ".17g")


def record_row(r: MaeRecord) -> list:
    return [r.method, _fmt(r.gamma), str(r.rep), str(r.unit), _fmt(r.mae)]


def write_records(records: Iterable[MaeRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    for r in records:
        w.writerow(record_row(r))


def summarize(records: Sequence[MaeRecord]) -> list[dict]:
    """Per ``(method, gamma)`` distribution of MAE."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.method, r.gamma), []).append(r.mae)
    out = []
    for (method, gamma) in sorted(groups):
        v = np.array(groups[(method, gamma)])
        q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
        out.append(dict(
            method=method, gamma=gamma, n=v.size, mean=float(v.mean()),
            sd=float(v.std(ddof=1)) if v.size > 1 else 0.0,
            min=q[0], q1=q[1], median=q[2], q3=q[3], max=q[4],
        ))
    return out


def write_summary(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in rows:
            w.writerow([row["method"], _fmt(row["gamma"]), row["n"]] + [_fmt(row[k]) for k in SUMMARY_HEADER[3:]])


def write_failures(failures: Sequence[Failure], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "gamma", "rep", "unit", "error"))
        for f in sorted(failures, key=lambda f: (f.method, f.gamma, f.rep, f.unit)):
            w.writerow([f.method, _fmt(f.gamma), f.rep, f.unit, f.error])


def plot_summary(records: Sequence[MaeRecord], path, title: str = "") -> None:
    """Grouped boxplots of MAE per method and gamma, saved as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "fpcagp"
    methods = sorted({r.method for r in records})
    gammas = sorted({r.gamma for r in records})
    fig, ax = plt.subplots(figsize=(2 + 1.6 * len(gammas), 3.5))
    width = 0.8 / max(len(methods), 1)
    for i, m in enumerate(methods):
        data = [[r.mae for r in records if r.method == m and r.gamma == g] for g in gammas]
        pos = [j + (i - (len(methods) - 1) / 2) * width for j in range(len(gammas))]
        bp = ax.boxplot(data, positions=pos, widths=width * 0.9, patch_artist=True, showfliers=True)
        for patch in bp["boxes"]:
            patch.set_facecolor(f"C{i}")
        ax.plot([], [], color=f"C{i}", lw=6, label=m)
    ax.set_xticks(range(len(gammas)), [f"{g:.0%}" for g in gammas])
    ax.set_xlabel("observed fraction")
    ax.set_ylabel("MAE")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _rep_seed(master: int, rep: int) -> int:
    return int(np.random.SeedSequence([master, rep]).generate_state(1)[0])


def _predict_all(methods, fpca_model, me_model, hist_records, in_service, covariates, target,
                 t_star, eval_times, seed, restarts, threads=1):
    """Predictive mean curves for each method; errors are returned per method."""
    obs = restrict(in_service[target], t_star)
    out = {}
    for m in methods:
        try:
            if m == FPCA_GP:
                prior = score_gp.build_priors(
                    fpca_model, hist_records, in_service, covariates, t_star,
                    restarts=restarts, seed=seed, threads=threads,
                )
                out[m] = bayes.extrapolate(fpca_model, prior, obs, eval_times)[0]
            elif m == FPCA_B:
                out[m] = bayes.extrapolate(fpca_model, baselines.fpca_b_prior(fpca_model), obs, eval_times)[0]
            elif m == ME:
                out[m] = baselines.me_predict(me_model, obs, eval_times)[0]
        except Exception as exc:  # recorded, the run continues
            out[m] = exc
    return out


def _synthetic_rep(cfg: ExperimentConfig, rep: int):
    seed = _rep_seed(cfg.seed, rep)
    synth_cfg = synthgen.SynthConfig(
        n_units=cfg.n_units, heterogeneity=cfg.heterogeneity,
        points_per_signal=cfg.points_per_signal, noise_sd=cfg.noise_sd, seed=seed,
    )
    records, failures = [], []
    try:
        hist, test = synthgen.generate(synth_cfg)
        dom = synth_cfg.domain
        grid = WorkingGrid(dom, cfg.grid_size)
        targets = [u.streams[synthgen.TARGET] for u in hist]
        model = fpca_mod.fit(targets, grid, cfg.k_rule) if {FPCA_GP, FPCA_B} & set(cfg.methods) else None
        me_model = baselines.me_fit(targets) if ME in cfg.methods else None
    except Exception as exc:
        for g in cfg.gammas:
            for m in cfg.methods:
                failures.append(Failure(m, g, rep, str(cfg.n_units), f"{type(exc).__name__}: {exc}"))
        return records, failures
    hist_records = [u.streams for u in hist]
    for gi, g in enumerate(cfg.gammas):
        t_star = dom.a + g * dom.length
        eval_times = np.linspace(t_star, dom.b, cfg.test_points)
        truth = test.truth_at(synthgen.TARGET, eval_times)
        preds = _predict_all(
            cfg.methods, model, me_model, hist_records, test.streams, [synthgen.COVARIATE],
            synthgen.TARGET, t_star, eval_times, _rep_seed(seed, gi), cfg.restarts,
        )
        for m in cfg.methods:
            p = preds[m]
            if isinstance(p, Exception):
                failures.append(Failure(m, g, rep, str(test.unit_id), f"{type(p).__name__}: {p}"))
            else:
                records.append(MaeRecord(m, g, rep, str(test.unit_id), float(np.mean(np.abs(p - truth)))))
    return sorted(records), failures


def run_synthetic(cfg: ExperimentConfig, sink: Callable[[list], None] | None = None) -> RunResult:
    """Repeat the synthetic gamma-observation experiment ``cfg.reps`` times.

    Repetitions run on up to ``cfg.threads`` worker threads.  ``sink`` receives
    each repetition's records in repetition order as soon as they are
    available; the final record list is in canonical order.
    """
    result = RunResult()

    def work(rep):
        return _synthetic_rep(cfg, rep)

    if cfg.threads > 1:
        ex = ThreadPoolExecutor(cfg.threads)
        stream = ex.map(work, range(cfg.reps))
    else:
        ex = None
        stream = map(work, range(cfg.reps))
    try:
        for rep, (recs, fails) in enumerate(stream):
            result.records.extend(recs)
            result.failures.extend(fails)
            for f in fails:
                log.warning("rep %d %s gamma=%s failed: %s", f.rep, f.method, f.gamma, f.error)
            if sink is not None:
                sink(recs)
    finally:
        if ex is not None:
            ex.shutdown()
    result.records.sort()
    return result


# --- recorded data -----------------------------------------------------------

CMAPSS_COLUMNS = 26
CMAPSS_STREAMS = tuple(f"op_{i}" for i in range(1, 4)) + tuple(f"sensor_{i}" for i in range(1, 22))


def _records_from_rows(rows: dict) -> list[UnitRecord]:
    units = []
    for uid in sorted(rows, key=lambda u: (not isinstance(u, int), u)):
        streams = {}
        for sid, pts in rows[uid].items():
            t = np.array([p[0] for p in pts])
            v = np.array([p[1] for p in pts])
            order = np.argsort(t, kind="stable")
            streams[sid] = Signal(t[order], v[order], uid, sid)
        units.append(UnitRecord(uid, streams))
    return units


def ingest_cmapss(path) -> list[UnitRecord]:
    """Parse a whitespace-separated C-MAPSS file into one record per unit.

    Columns: unit, cycle, three operational settings, 21 sensors.  The cycle
    is the time axis; streams are ``op_1..op_3`` and ``sensor_1..sensor_21``.
    """
    text = Path(path).read_text() if not hasattr(path, "read") else path.read()
    rows: dict = {}
    last_cycle: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != CMAPSS_COLUMNS:
            raise ValueError(f"line {lineno}: expected {CMAPSS_COLUMNS} columns, found {len(parts)}")
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric field") from None
        uid, cycle = int(nums[0]), nums[1]
        if uid in last_cycle and cycle <= last_cycle[uid]:
            raise ValueError(f"line {lineno}: cycles of unit {uid} are not increasing")
        last_cycle[uid] = cycle
        unit = rows.setdefault(uid, {s: [] for s in CMAPSS_STREAMS})
        for sid, v in zip(CMAPSS_STREAMS, nums[2:]):
            unit[sid].append((cycle, v))
    return _records_from_rows(rows)


def ingest_long_csv(path) -> list[UnitRecord]:
    """Read ``unit,stream,time,value`` rows (the synthetic export format)."""
    rows: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["unit", "stream", "time", "value"]:
            raise ValueError("line 1: expected header unit,stream,time,value")
        for lineno, rec in enumerate(reader, 2):
            if not rec:
                continue
            if len(rec) != 4:
                raise ValueError(f"line {lineno}: expected 4 fields, found {len(rec)}")
            u, s, t, v = rec
            try:
                uid = int(u)
            except ValueError:
                uid = u
            try:
                rows.setdefault(uid, {}).setdefault(s, []).append((float(t), float(v)))
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric time or value") from None
    return _records_from_rows(rows)


def ingest(path) -> list[UnitRecord]:
    return ingest_long_csv(path) if str(path).lower().endswith(".csv") else ingest_cmapss(path)


def mean_sd(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def run_recorded(
    cfg: ExperimentConfig,
    train: Sequence[UnitRecord],
    test: Sequence[UnitRecord],
    target,
    covariates: Sequence,
    obs_end: float = 100.0,
    pred_end: float = 160.0,
    start: float = 0.0,
) -> RunResult:
    """Gamma-observation study on recorded units.

    The target-stream FPCA and ME are fitted on training units over
    ``[start, pred_end]``.  A test unit is observed up to
    ``t* = start + gamma (obs_end - start)`` and scored against its own
    recorded target values in ``(obs_end, pred_end]``; units without such
    values are excluded and listed in ``RunResult.excluded``.
    """
    covariates = [c for c in covariates if c != target]
    domain = TimeDomain(start, pred_end)
    grid = WorkingGrid(domain, cfg.grid_size)
    hist_records = [_clip_record(r, start, pred_end) for r in train]
    targets = [r[target] for r in hist_records]
    model = fpca_mod.fit(targets, grid, cfg.k_rule)
    me_model = baselines.me_fit(targets) if ME in cfg.methods else None
    result = RunResult()
    scored = []
    for unit in test:
        sig = unit[target]
        keep = (sig.times > obs_end) & (sig.times <= pred_end)
        if not keep.any():
            result.excluded.append(str(unit.unit_id))
            continue
        # test and training files number their units independently
        scored.append((_relabel(unit, f"test:{unit.unit_id}"), sig.times[keep], sig.values[keep]))

    def work(item):
        unit, times, values = item
        label = unit.unit_id.split(":", 1)[1]
        recs, fails = [], []
        for gi, g in enumerate(cfg.gammas):
            t_star = start + g * (obs_end - start)
            preds = _predict_all(
                cfg.methods, model, me_model, hist_records, unit, covariates, target,
                t_star, times, _rep_seed(cfg.seed, gi), cfg.restarts,
            )
            for m in cfg.methods:
                p = preds[m]
                if isinstance(p, Exception):
                    fails.append(Failure(m, g, 0, label, f"{type(p).__name__}: {p}"))
                else:
                    recs.append(MaeRecord(m, g, 0, label, float(np.mean(np.abs(p - values)))))
        return recs, fails

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            outs = list(ex.map(work, scored))
    else:
        outs = [work(item) for item in scored]
    for recs, fails in outs:
        result.records.extend(recs)
        result.failures.extend(fails)
    result.records.sort()
    return result


def _relabel(rec: UnitRecord, uid) -> UnitRecord:
    return UnitRecord(uid, {sid: Signal(s.times, s.values, uid, sid) for sid, s in rec.streams.items()})


def _clip_record(rec: UnitRecord, start: float, end: float) -> UnitRecord:
    streams = {}
    for sid, s in rec.streams.items():
        keep = (s.times >= start) & (s.times <= end)
        streams[sid] = Signal(s.times[keep], s.values[keep], s.unit_id, s.stream_id)
    return UnitRecord(rec.unit_id, streams)


def run_cmapss(cfg, train_path, test_path, target, covariates, time_window=(100.0, 160.0)) -> RunResult:
    return run_recorded(
        cfg, ingest(train_path), ingest(test_path), target, covariates,
        obs_end=time_window[0], pred_end=time_window[1],
    )
