import csv
from fractions import Fraction

import numpy as np
import pytest

from cellfree_wsr.errors import NumericError, PreconditionError
from cellfree_wsr.harness import (
    CSV_FIELDS,
    ExperimentSpec,
    canonical_algo,
    fit_exponent,
    fixed_streams,
    output_paths,
    run_algorithm,
    run_experiment,
    scaling_fit,
    summarize,
)
from cellfree_wsr.metrics import interaction_count
from cellfree_wsr.network import NetworkConfig, generate
from cellfree_wsr.trace import SolveTrace
from cellfree_wsr.wmmse import SolverOptions

SMALL = NetworkConfig(num_aps=3, num_ues=4, tx_antennas=8, rx_antennas=2)
FAST = SolverOptions(max_iters=40, rel_tol=1e-8)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_single_ezf_trial_writes_one_row(tmp_path):
    out = tmp_path / "r.csv"
    res = run_experiment(ExperimentSpec(base=SMALL, out=str(out)))
    rows = _read(out)
    assert len(rows) == 1
    assert tuple(rows[0]) == CSV_FIELDS
    assert rows[0]["algo"] == "ezf" and rows[0]["status"] == "ok"
    assert rows[0]["iters"] == "0"
    assert float(rows[0]["max_ap_power_ratio"]) == pytest.approx(1.0, abs=1e-9)
    assert rows[0]["wall_ms"] == ""
    assert set(res["paths"]) == {"results", "summary"}


def test_runs_are_byte_identical(tmp_path):
    spec = dict(base=SMALL, snr_db=(0.0, 6.0), trials=2, algorithms=("ezf", "rwmmse-lsa"),
                options=FAST, trace=True)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_experiment(ExperimentSpec(out=str(a), **spec))
    run_experiment(ExperimentSpec(out=str(b), **spec))
    for kind in ("results", "summary", "trace"):
        assert open(output_paths(str(a))[kind], "rb").read() == open(output_paths(str(b))[kind], "rb").read()


def test_rows_are_ordered_by_trial_algorithm_point():
    res = run_experiment(ExperimentSpec(base=SMALL, snr_db=(0.0, 3.0), trials=2,
                                        algorithms=("wmmse", "ezf"), options=FAST))
    keys = [(r["trial"], r["algo"], r["snr_db"]) for r in res["results"]]
    assert keys == [(t, a, s) for t in (0, 1) for a in ("wmmse", "ezf") for s in ("0.0", "3.0")]


def test_interaction_column_matches_formula():
    res = run_experiment(ExperimentSpec(base=SMALL, algorithms=("ezf", "wmmse", "rwmmse"), options=FAST))
    N, M = (2,) * 4, (8,) * 3
    streams = fixed_streams(generate(SMALL, seed=0)).sum(axis=1)
    for row in res["results"]:
        expected = sum(interaction_count(row["algo"], N, M, streams), Fraction(0))
        assert Fraction(row["interaction_scalars"]) == expected


def test_wmmse_and_rwmmse_agree():
    ch = generate(SMALL, seed=5)
    a = run_algorithm("wmmse", ch, 1.0, 1.0, FAST)
    b = run_algorithm("rwmmse", ch, 1.0, 1.0, FAST)
    assert a.wsr_bits == pytest.approx(b.wsr_bits, abs=1e-3)
    assert a.iterations == b.iterations


def test_all_algorithms_are_feasible():
    ch = generate(SMALL, seed=6)
    for algo in ("ezf", "wmmse", "rwmmse", "rwmmse-lsa", "rwmmse-lus"):
        res = run_algorithm(algo, ch, 1.0, 1.0, FAST)
        assert np.all(res.ap_power <= 1 + 1e-8), algo
        assert res.wsr_bits > 0


def test_numeric_failure_becomes_status_row(monkeypatch):
    import cellfree_wsr.harness as harness

    def boom(*args, **kwargs):
        raise NumericError("synthetic", SolveTrace("wmmse"))

    monkeypatch.setattr(harness, "solve_wmmse", boom)
    res = run_experiment(ExperimentSpec(base=SMALL, algorithms=("ezf", "wmmse"), options=FAST))
    status = {r["algo"]: r["status"] for r in res["results"]}
    assert status == {"ezf": "ok", "wmmse": "error:NumericError"}
    assert res["results"][1]["wsr_bits"] == "nan"


def test_summary_statistics():
    rows = [{"algo": "a", "snr_db": "0.0", "M": 8, "K": 4, "status": "ok", "wsr_bits": str(v),
             "iters": "3", "interaction_scalars": "10"} for v in (1.0, 2.0, 3.0)]
    rows.append(dict(rows[0], status="error:NumericError", wsr_bits="nan"))
    (s,) = summarize(rows)
    assert s["trials"] == 4 and s["ok"] == 3
    assert float(s["wsr_mean"]) == pytest.approx(2.0)
    assert float(s["wsr_stderr"]) == pytest.approx(1.0 / np.sqrt(3))


def test_timing_fills_wall_ms():
    res = run_experiment(ExperimentSpec(base=SMALL, timing=True))
    assert float(res["results"][0]["wall_ms"]) >= 0


def test_sweep_axes():
    spec = ExperimentSpec(base=SMALL, tx_antennas=(8, 12), num_ues=(3, 4))
    assert spec.points() == [(0.0, 8, 3), (0.0, 12, 3), (0.0, 8, 4), (0.0, 12, 4)]
    cfg = spec.config_at(0.0, 12, 3)
    assert cfg.tx_antennas == (12,) * 3 and cfg.rx_antennas == (2,) * 3


def test_loaded_channels_reproduce_generated(tmp_path):
    dump = tmp_path / "ch.bin"
    a = run_experiment(ExperimentSpec(base=SMALL, algorithms=("ezf",), dump_channels=str(dump)))
    b = run_experiment(ExperimentSpec(base=SMALL, algorithms=("ezf",), load_channels=str(dump)))
    assert a["results"] == b["results"]


def test_spec_validation():
    with pytest.raises(PreconditionError):
        ExperimentSpec(trials=0)
    with pytest.raises(PreconditionError):
        ExperimentSpec(algorithms=("nope",))
    assert canonical_algo("local-ezf") == "ezf"


@pytest.mark.parametrize("power", [3.0, 1.0, 2.2])
def test_fit_recovers_exponent(power):
    sizes = [64, 128, 256, 512]
    assert fit_exponent(sizes, [1e-6 * m ** power for m in sizes]) == pytest.approx(power, abs=1e-12)


def test_fit_needs_three_sizes():
    with pytest.raises(PreconditionError):
        fit_exponent([64, 128], [1.0, 2.0])
    with pytest.raises(PreconditionError):
        fit_exponent([64, 64, 128], [1.0, 1.0, 2.0])


def test_scaling_fit_uses_median_sweeps():
    def trace(m, p):
        t = SolveTrace("x")
        t.sweep_seconds = [100.0] + [m ** p * 1e-9] * 4
        return t

    groups = {"cubic": {m: [trace(m, 3), trace(m, 3)] for m in (64, 128, 256)},
              "linear": {m: [m * 1e-6] for m in (64, 128, 256)}}
    fits = scaling_fit(groups)
    assert fits["cubic"] == pytest.approx(3.0, abs=1e-9)
    assert fits["linear"] == pytest.approx(1.0, abs=1e-9)
