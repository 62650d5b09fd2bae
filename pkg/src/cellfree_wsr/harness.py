"""Monte Carlo driver: trials over SNR / antenna / UE sweeps, CSV output, scaling fits."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .channel_io import dump_channels, load_channels
from .errors import NumericError, PreconditionError
from .ezf import ezf_beamformer, ezf_lowdim
from .metrics import ap_powers, interaction_count, weighted_sum_rate
from .network import ChannelSet, NetworkConfig, generate, noise_power
from .rwmmse import gram_powers, solve_rwmmse
from .streams import init_allocation, lsa_init, solve_rwmmse_lsa, solve_rwmmse_lus
from .trace import SolveTrace
from .wmmse import SolverOptions, solve_wmmse

log = logging.getLogger(__name__)

ALGORITHMS = ("ezf", "wmmse", "rwmmse", "rwmmse-lsa", "rwmmse-lus")
ALIASES = {"local-ezf": "ezf"}

CSV_FIELDS = ("trial", "algo", "snr_db", "M", "K", "N", "L", "iters", "wsr_bits", "sum_power_watts",
              "max_ap_power_ratio", "interaction_scalars", "wall_ms", "streams_total", "status")
TRACE_FIELDS = ("trial", "algo", "snr_db", "M", "K", "iter", "wsr_bits", "ap_power_watts",
                "multipliers", "streams_total", "sweep_ms")
SUMMARY_FIELDS = ("algo", "snr_db", "M", "K", "trials", "ok", "wsr_mean", "wsr_stderr",
                  "iters_mean", "interaction_scalars")


def canonical_algo(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in ALGORITHMS:
        raise PreconditionError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")
    return name


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run and where to write it.

    Empty sweep axes fall back to the corresponding ``base`` value. Per-trial
    seeds are ``base_seed ^ trial``, so every axis point of a trial sees the
    same draw sequence.
    """

    base: NetworkConfig = field(default_factory=NetworkConfig)
    snr_db: tuple[float, ...] = ()
    tx_antennas: tuple[int, ...] = ()
    num_ues: tuple[int, ...] = ()
    trials: int = 1
    algorithms: tuple[str, ...] = ("ezf",)
    base_seed: int = 0
    options: SolverOptions = field(default_factory=SolverOptions)
    out: Optional[str] = None
    trace: bool = False
    timing: bool = False
    load_channels: Optional[str] = None
    dump_channels: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db) or (float(self.base.snr_db),))
        object.__setattr__(self, "tx_antennas", tuple(int(m) for m in self.tx_antennas)
                           or (self.base.tx_antennas[0],))
        object.__setattr__(self, "num_ues", tuple(int(k) for k in self.num_ues) or (self.base.num_ues,))
        object.__setattr__(self, "algorithms", tuple(canonical_algo(a) for a in self.algorithms))
        if self.trials < 1:
            raise PreconditionError("trials must be >= 1")
        if not self.algorithms:
            raise PreconditionError("at least one algorithm is required")
        if self.base_seed < 0:
            raise PreconditionError("base_seed must be unsigned")

    def points(self) -> list[tuple[float, int, int]]:
        return [(s, m, k) for k in self.num_ues for m in self.tx_antennas for s in self.snr_db]

    def config_at(self, snr_db: float, M: int, K: int) -> NetworkConfig:
        base = self.base
        rx = base.rx_antennas if K == base.num_ues else base.rx_antennas[0]
        weights = base.rate_weights if K == base.num_ues else base.rate_weights[0]
        return base.with_(snr_db=snr_db, tx_antennas=M, num_ues=K, rx_antennas=rx, rate_weights=weights)


@dataclass
class TrialResult:
    algo: str
    wsr_bits: float
    ap_power: np.ndarray
    budgets: np.ndarray
    interaction: list[Fraction]
    streams_total: int
    trace: Optional[SolveTrace]
    wall_seconds: float
    status: str = "ok"

    @property
    def iterations(self) -> int:
        return self.trace.iterations if self.trace is not None else 0


def fixed_streams(channels: ChannelSet) -> np.ndarray:
    """Even per-AP stream split of each UE's receive antennas over its serving set."""
    return init_allocation(channels).counts(channels.num_aps, channels.num_ues)


def run_algorithm(algo: str, channels: ChannelSet, weights, budgets, opts: SolverOptions) -> TrialResult:
    """One solver run from the Local EZF starting point."""
    algo = canonical_algo(algo)
    budgets = np.broadcast_to(np.asarray(budgets, dtype=float), (channels.num_aps,)).copy()
    I, K = channels.num_aps, channels.num_ues
    t0 = time.perf_counter()
    if algo == "ezf":
        D = fixed_streams(channels)
        P = ezf_beamformer(channels, D, budgets)
        wsr, powers, trace, streams = weighted_sum_rate(channels, P, weights), ap_powers(channels, P), None, D
    elif algo == "wmmse":
        D = fixed_streams(channels)
        P, trace = solve_wmmse(channels, weights, D, ezf_beamformer(channels, D, budgets), budgets, opts)
        wsr, powers, streams = trace.final_wsr, ap_powers(channels, P), D
    elif algo == "rwmmse":
        D = fixed_streams(channels)
        X, trace = solve_rwmmse(channels, weights, D, ezf_lowdim(channels, D, budgets), budgets, opts)
        wsr, powers, streams = trace.final_wsr, gram_powers(channels, X), D
    elif algo == "rwmmse-lsa":
        L0, X0 = lsa_init(channels, budgets)
        X, L, trace = solve_rwmmse_lsa(channels, weights, L0, X0, budgets, opts)
        wsr, powers, streams = trace.final_wsr, gram_powers(channels, X), L.counts(I, K)
    else:
        X, L, _, trace = solve_rwmmse_lus(channels, weights, budgets, opts)
        wsr, powers, streams = trace.final_wsr, gram_powers(channels, X), L.counts(I, K)
    wall = time.perf_counter() - t0
    interaction = (trace.interaction if trace is not None
                   else interaction_count(algo, channels.rx_antennas, channels.tx_antennas, streams.sum(axis=1)))
    return TrialResult(algo, float(wsr), powers, budgets, interaction, int(streams.sum()), trace, wall)


def failed_result(algo: str, channels: ChannelSet, budgets, exc: Exception) -> TrialResult:
    budgets = np.broadcast_to(np.asarray(budgets, dtype=float), (channels.num_aps,)).copy()
    trace = getattr(exc, "trace", None)
    return TrialResult(algo, float("nan"), np.full(channels.num_aps, np.nan), budgets, [], 0, trace,
                       float("nan"), status=f"error:{type(exc).__name__}")


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else repr(float(x))
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _dims(values: Sequence[int]) -> str:
    values = tuple(values)
    return str(values[0]) if len(set(values)) == 1 else ";".join(str(v) for v in values)


def _channels_for(spec: ExperimentSpec, cfg: NetworkConfig, trial: int, loaded: Optional[ChannelSet]):
    if loaded is None:
        return generate(cfg, seed=spec.base_seed ^ trial)
    if loaded.has_noise and len(spec.snr_db) == 1 and spec.snr_db[0] == spec.base.snr_db:
        return loaded
    return loaded.with_noise(noise_power(loaded, cfg.snr_db, cfg.noise_mode))


def _dump_path(base: str, index: int, total: int) -> str:
    if total == 1:
        return base
    stem, ext = os.path.splitext(base)
    return f"{stem}.{index}{ext}"


def result_row(trial: int, snr: float, channels: ChannelSet, cfg: NetworkConfig, res: TrialResult,
               timing: bool) -> dict:
    ok = res.status == "ok"
    return {
        "trial": trial,
        "algo": res.algo,
        "snr_db": _fmt(float(snr)),
        "M": _dims(channels.tx_antennas),
        "K": channels.num_ues,
        "N": _dims(channels.rx_antennas),
        "L": cfg.cluster_size,
        "iters": res.iterations,
        "wsr_bits": _fmt(res.wsr_bits),
        "sum_power_watts": _fmt(float(np.sum(res.ap_power))) if ok else "nan",
        "max_ap_power_ratio": _fmt(float(np.max(res.ap_power / res.budgets))) if ok else "nan",
        "interaction_scalars": _fmt(sum(res.interaction, Fraction(0))) if ok else "",
        "wall_ms": _fmt(1e3 * res.wall_seconds) if timing and ok else "",
        "streams_total": res.streams_total,
        "status": res.status,
    }


def trace_rows(trial: int, snr: float, channels: ChannelSet, res: TrialResult, timing: bool) -> list[dict]:
    tr = res.trace
    if tr is None:
        return []
    rows = []
    for r in range(tr.iterations):
        rows.append({
            "trial": trial,
            "algo": res.algo,
            "snr_db": _fmt(float(snr)),
            "M": _dims(channels.tx_antennas),
            "K": channels.num_ues,
            "iter": r + 1,
            "wsr_bits": _fmt(tr.wsr[r]),
            "ap_power_watts": ";".join(_fmt(float(p)) for p in tr.ap_power[r]),
            "multipliers": ";".join(_fmt(float(m)) for m in tr.multipliers[r]),
            "streams_total": tr.stream_totals[r] if r < len(tr.stream_totals) else res.streams_total,
            "sweep_ms": _fmt(1e3 * tr.sweep_seconds[r]) if timing else "",
        })
    return rows


def summarize(rows: Iterable[dict]) -> list[dict]:
    """Per (algo, axis point) means and standard errors over successful trials."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["algo"], row["snr_db"], row["M"], row["K"]), []).append(row)
    out = []
    for (algo, snr, M, K), rs in groups.items():
        good = [r for r in rs if r["status"] == "ok"]
        wsr = np.array([float(r["wsr_bits"]) for r in good])
        iters = np.array([float(r["iters"]) for r in good])
        inter = np.array([float(r["interaction_scalars"]) for r in good])
        stderr = float(np.std(wsr, ddof=1) / np.sqrt(wsr.size)) if wsr.size > 1 else float("nan")
        out.append({
            "algo": algo, "snr_db": snr, "M": M, "K": K, "trials": len(rs), "ok": len(good),
            "wsr_mean": _fmt(float(wsr.mean())) if wsr.size else "nan",
            "wsr_stderr": _fmt(stderr),
            "iters_mean": _fmt(float(iters.mean())) if iters.size else "nan",
            "interaction_scalars": _fmt(float(inter.mean())) if inter.size else "nan",
        })
    return out


def _write_csv(path: str, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def output_paths(out: str) -> dict[str, str]:
    stem, ext = os.path.splitext(out)
    ext = ext or ".csv"
    return {"results": out, "summary": f"{stem}_summary{ext}", "trace": f"{stem}_trace{ext}"}


def run_experiment(spec: ExperimentSpec) -> dict:
    """Run every (axis point, trial, algorithm) and write the CSV files.

    Returns the in-memory rows (``results``, ``summary``, ``trace``) and the
    paths written. Solver numeric failures are recorded in the ``status``
    column and the run continues.
    """
    loaded = load_channels(spec.load_channels) if spec.load_channels else None
    points = spec.points()
    keyed, traces = [], []
    dumped = 0
    total = spec.trials * len(points)
    for trial in range(spec.trials):
        for p_idx, (snr, M, K) in enumerate(points):
            cfg = spec.config_at(snr, M, K)
            channels = _channels_for(spec, cfg, trial, loaded)
            if spec.dump_channels:
                dump_channels(channels, _dump_path(spec.dump_channels, dumped, total))
                dumped += 1
            for a_idx, algo in enumerate(spec.algorithms):
                try:
                    res = run_algorithm(algo, channels, cfg.weights[: channels.num_ues], cfg.budgets,
                                        spec.options)
                except NumericError as exc:
                    log.warning("trial %d %s at %s: %s", trial, algo, (snr, M, K), exc)
                    res = failed_result(algo, channels, cfg.budgets, exc)
                log.info("trial %d %s snr=%s M=%d K=%d wsr=%.4f (%.2fs)", trial, algo, snr, M, K,
                         res.wsr_bits, res.wall_seconds)
                key = (trial, a_idx, p_idx)
                keyed.append((key, result_row(trial, snr, channels, cfg, res, spec.timing)))
                if spec.trace:
                    traces.extend((key, r) for r in trace_rows(trial, snr, channels, res, spec.timing))
    keyed.sort(key=lambda kv: kv[0])
    traces.sort(key=lambda kv: kv[0])
    rows = [r for _, r in keyed]
    trace_out = [r for _, r in traces]
    summary = summarize(rows)
    written = {}
    if spec.out:
        paths = output_paths(spec.out)
        _write_csv(paths["results"], CSV_FIELDS, rows)
        _write_csv(paths["summary"], SUMMARY_FIELDS, summary)
        written = {"results": paths["results"], "summary": paths["summary"]}
        if spec.trace:
            _write_csv(paths["trace"], TRACE_FIELDS, trace_out)
            written["trace"] = paths["trace"]
    return {"results": rows, "summary": summary, "trace": trace_out, "paths": written}


def fit_exponent(sizes: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of ``log(time)`` against ``log(size)``."""
    sizes = np.asarray(sizes, dtype=float)
    times = np.asarray(times, dtype=float)
    if sizes.shape != times.shape or np.unique(sizes).size < 3:
        raise PreconditionError("scaling fit needs at least 3 distinct sizes")
    if np.any(sizes <= 0) or np.any(~np.isfinite(times)) or np.any(times <= 0):
        raise PreconditionError("sizes and times must be positive and finite")
    slope, _ = np.polyfit(np.log(sizes), np.log(times), 1)
    return float(slope)


def scaling_fit(groups: Mapping[str, Mapping[int, Sequence]]) -> dict[str, float]:
    """Per-algorithm exponent from traces (or raw per-sweep times) grouped by ``M``.

    For each ``M`` the per-trial median sweep time (warm-up sweep excluded) is
    reduced by a further median across trials before fitting.
    """
    out = {}
    for algo, by_m in groups.items():
        ms, ts = [], []
        for m, items in sorted(by_m.items()):
            per = [it.median_sweep_seconds() if isinstance(it, SolveTrace) else float(it) for it in items]
            if not per:
                continue
            ms.append(m)
            ts.append(float(np.median(per)))
        out[algo] = fit_exponent(ms, ts)
    return out
