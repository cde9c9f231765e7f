"""Monte-Carlo sweeps over SNR with seeded drops, aggregation and CSV/JSON output.

Drop ``d`` at every SNR uses the same channel draws (seed ``[seed, d, attempt]``),
so scheme and SNR comparisons are paired. A drop whose first attempt is
rejected (clustering failure, singular ZF matrix, unreachable minimum rates
for any requested scheme) is redrawn with the next attempt index; every
rejection is counted.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .baselines import SCHEMES, solve_scheme
from .channel import SystemConfig, dft_codebook, synthesize_beam_users
from .clustering import cluster_users, select_beams
from .errors import InvalidInputError, MmNomaError
from .maxmin import DEFAULT_EPS, InnerSettings

log = logging.getLogger(__name__)

OBJECTIVES = ("max_min_ee", "max_min_rate")
BASIC_METRICS = ("min_ee", "sum_se", "min_rate")
OUTPUTS = BASIC_METRICS + ("iteration_counts", "traces")
COUNT_METRICS = ("outer_iterations", "alternation_rounds", "sca_iterations", "cccp_iterations", "newton_steps")
CSV_COLUMNS = ("snr_db", "scheme", "metric", "mean", "stderr", "n_effective_drops")
SIG_DIGITS = 12


def sig(x: float) -> float:
    """Round to 12 significant digits (the serialized precision)."""
    return float(f"{x:.{SIG_DIGITS}g}")


@dataclass(frozen=True)
class ExperimentSpec:
    config: SystemConfig = field(default_factory=SystemConfig)
    snr_grid_db: tuple = (0.0, 10.0, 20.0)
    n_drops: int = 200
    schemes: tuple = SCHEMES
    seed: int = 0
    outputs: tuple = BASIC_METRICS
    objective: str = "max_min_ee"
    eps: float = DEFAULT_EPS
    workers: int = 1
    max_attempts: int = 50

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.n_drops < 1:
            raise InvalidInputError("n_drops must be >= 1")
        if not self.snr_grid_db:
            raise InvalidInputError("snr grid must not be empty")
        if not self.schemes or set(self.schemes) - set(SCHEMES):
            raise InvalidInputError(f"schemes must be a non-empty subset of {SCHEMES}")
        if set(self.outputs) - set(OUTPUTS):
            raise InvalidInputError(f"outputs must be a subset of {OUTPUTS}")
        if self.objective not in OBJECTIVES:
            raise InvalidInputError(f"objective must be one of {OBJECTIVES}")
        if self.workers < 1 or self.max_attempts < 1 or self.eps <= 0:
            raise InvalidInputError("workers, max_attempts and eps must be positive")

    @property
    def metrics(self) -> tuple:
        out = [m for m in BASIC_METRICS if m in self.outputs]
        if "iteration_counts" in self.outputs:
            out += list(COUNT_METRICS)
        return tuple(out)


@dataclass
class DropRecord:
    snr_db: float
    drop: int
    attempt: int | None
    rejections: dict
    metrics: dict  # scheme -> metric -> value
    traces: dict = field(default_factory=dict)


@dataclass
class ResultTable:
    rows: list
    rejections: dict  # snr -> {reason: count}
    drops: list = field(default_factory=list)

    def cell(self, snr_db: float, scheme: str, metric: str) -> dict | None:
        for row in self.rows:
            if row["snr_db"] == snr_db and row["scheme"] == scheme and row["metric"] == metric:
                return row
        return None

    def mean(self, snr_db, scheme, metric) -> float:
        row = self.cell(snr_db, scheme, metric)
        return math.nan if row is None or row["mean"] is None else row["mean"]

    def per_drop(self, snr_db, scheme, metric) -> np.ndarray:
        """Per-drop values in drop order (effective drops only)."""
        return np.array(
            [d.metrics[scheme][metric] for d in self.drops if d.snr_db == snr_db and d.attempt is not None]
        )


def _metric_values(sol, metrics) -> dict:
    counts = sol.counters.as_dict()
    base = {"min_ee": sol.min_ee, "sum_se": sol.sum_rate, "min_rate": sol.min_rate}
    return {m: float(base[m] if m in base else counts[m]) for m in metrics}


def _jsonable_trace(sol) -> dict:
    return {
        "L": [[float(e), float(v)] for e, v in sol.traces.get("L", [])],
        "z": [[float(v) for v in tr] for tr in sol.traces.get("z", [])],
    }


def run_drop(spec: ExperimentSpec, snr_db: float, drop: int) -> DropRecord:
    """Solve one drop at one SNR for every requested scheme, redrawing on rejection."""
    cfg = spec.config.with_snr_db(snr_db)
    codebook = dft_codebook(cfg.n_antennas, cfg.codebook_size)
    beams = select_beams(cfg.codebook_size, cfg.n_rf, cfg.beam_family)
    settings = InnerSettings(record="traces" in spec.outputs)
    rejections = Counter()
    for attempt in range(spec.max_attempts):
        seed = np.random.SeedSequence([spec.seed, drop, attempt])
        try:
            channels = synthesize_beam_users(cfg, beams, seed)
            plan = cluster_users(codebook, channels.h, beams)
            sols = {s: solve_scheme(s, plan, cfg, spec.objective, spec.eps, settings) for s in spec.schemes}
        except MmNomaError as exc:
            rejections[type(exc).__name__] += 1
            log.info("snr=%g drop=%d attempt=%d rejected: %s", snr_db, drop, attempt, exc)
            continue
        metrics = {s: _metric_values(sol, spec.metrics) for s, sol in sols.items()}
        traces = {s: _jsonable_trace(sol) for s, sol in sols.items()} if settings.record else {}
        return DropRecord(snr_db, drop, attempt, dict(rejections), metrics, traces)
    log.warning("snr=%g drop=%d: all %d attempts rejected", snr_db, drop, spec.max_attempts)
    return DropRecord(snr_db, drop, None, dict(rejections), {})


def _run_task(args):
    return run_drop(*args)


def aggregate(spec: ExperimentSpec, drops: list) -> ResultTable:
    rows, rejections = [], {}
    for snr in spec.snr_grid_db:
        mine = [d for d in drops if d.snr_db == snr]
        total = Counter()
        for d in mine:
            total.update(d.rejections)
        total["missing_drops"] = sum(d.attempt is None for d in mine)
        rejections[snr] = dict(total)
        good = [d for d in mine if d.attempt is not None]
        for scheme in spec.schemes:
            for metric in spec.metrics:
                vals = np.array([d.metrics[scheme][metric] for d in good])
                n = vals.size
                if n == 0:
                    mean = stderr = None
                else:
                    mean = sig(vals.mean())
                    stderr = sig(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
                rows.append({"snr_db": snr, "scheme": scheme, "metric": metric, "mean": mean, "stderr": stderr, "n_effective_drops": n})
        n_rej = sum(v for k, v in total.items() if k != "missing_drops")
        if spec.metrics:
            rows.append(
                {"snr_db": snr, "scheme": "all", "metric": "rejected_attempts", "mean": float(n_rej), "stderr": 0.0, "n_effective_drops": len(good)}
            )
    return ResultTable(rows, rejections, drops)


def run(spec: ExperimentSpec) -> ResultTable:
    """Run every (snr, drop) and aggregate mean and standard error per (snr, scheme, metric)."""
    tasks = [(spec, snr, d) for snr in spec.snr_grid_db for d in range(spec.n_drops)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            drops = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * spec.workers))))
    else:
        drops = [_run_task(t) for t in tasks]
    return aggregate(spec, drops)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return f"{x:.{SIG_DIGITS}g}"


def to_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in table.rows:
        writer.writerow([_fmt(row["snr_db"]), row["scheme"], row["metric"], _fmt(row["mean"]), _fmt(row["stderr"]), row["n_effective_drops"]])
    return buf.getvalue()


def to_json(table: ResultTable, with_drops: bool = False) -> str:
    doc = {
        "rows": table.rows,
        "rejections": {_fmt(k): v for k, v in table.rejections.items()},
    }
    if with_drops:
        doc["drops"] = [asdict(d) for d in table.drops]
    return json.dumps(doc, indent=1, sort_keys=True)


def emit(table: ResultTable, fmt: str, path) -> Path:
    """Write ``table`` as ``csv`` or ``json``; JSON carries per-drop records when traces were captured."""
    path = Path(path)
    if fmt == "csv":
        text = to_csv(table)
    elif fmt == "json":
        text = to_json(table, with_drops=any(d.traces for d in table.drops))
    else:
        raise InvalidInputError(f"unknown format {fmt!r}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def read_json(path) -> ResultTable:
    doc = json.loads(Path(path).read_text())
    rej = {float(k): v for k, v in doc["rejections"].items()}
    drops = [DropRecord(**d) for d in doc.get("drops", [])]
    return ResultTable(doc["rows"], rej, drops)
