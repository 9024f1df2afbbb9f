import numpy as np
import pytest

from jadce.adaptive import AdaptiveContext, HyperParams, evaluate
from jadce.bench import (
    CSV_HEADER,
    Artifacts,
    SweepSpec,
    first_crossing,
    layer_curve,
    parse_mismatch,
    run_sweep,
    write_csv,
)
from jadce.datagen import ConfigError, SceneConfig, gen_dataset
from jadce.dictionary import solve_plain_dictionary, solve_symmetric_dictionary
from jadce.iterative import IterativeConfig, solve_batch
from jadce.metrics import nmse_db_stack
from jadce.unfolded import ALPGM, ALPGM_MM, UnfoldedNetwork, forward_batch, initial_layers


@pytest.fixture(scope="module")
def base():
    return SceneConfig(n_devices=20, n_antennas=2, pilot_len=10, active_prob=0.15, snr_db=40.0,
                       pilot_kind="gaussian", seed=3)


@pytest.fixture(scope="module")
def artifacts(base):
    ds = gen_dataset(base, 2, 1)
    plain = solve_plain_dictionary(ds.s_tilde, steps=20)
    _, sym = solve_symmetric_dictionary(ds.s_tilde, steps=100)
    art = Artifacts()
    art.nets[ALPGM] = UnfoldedNetwork(ALPGM, initial_layers(6), plain)
    art.nets[ALPGM_MM] = UnfoldedNetwork(ALPGM_MM, initial_layers(6), sym)
    art.adaptive["LPGM_AT"] = (AdaptiveContext.build(ds.s_tilde, sym, 6), HyperParams(0.05, 1e-3, 5.0))
    return art


def test_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec("noise", [1], ["PGM"])
    with pytest.raises(ConfigError):
        SweepSpec("snr_db", [], ["PGM"])
    with pytest.raises(ConfigError):
        SweepSpec("snr_db", [1], ["LISTA"])


def test_parse_mismatch():
    assert parse_mismatch("base") == {}
    assert parse_mismatch("snr_db=15") == {"snr_db": 15.0}
    assert parse_mismatch("active_ratio=0.15") == {"active_prob": 0.15}
    with pytest.raises(ConfigError):
        parse_mismatch("pilot_len=3")
    with pytest.raises(ConfigError):
        parse_mismatch("snr")


def test_one_method_one_value(base):
    rows = run_sweep(SweepSpec("snr_db", [20.0], ["ISTA_GS"], test_count=4), base)
    assert len(rows) == 1
    r = rows[0]
    assert r.method == "ISTA_GS" and r.axis == "snr_db" and r.axis_value == 20.0
    assert np.isfinite(r.nmse_db) and r.runtime_ms_per_sample > 0


def test_rows_sorted_and_reproducible(base, artifacts):
    spec = SweepSpec("active_ratio", [0.2, 0.1], ["PGM", "ALPGM", "LPGM_AT"], iters_for_iterative=10,
                     test_count=4)
    rows = run_sweep(spec, base, artifacts)
    keys = [(r.method, r.axis_value) for r in rows]
    assert keys == sorted(keys)
    again = run_sweep(spec, base, artifacts)
    assert [r.nmse_db for r in rows] == [r.nmse_db for r in again]
    fps = {r.axis_value: r.fingerprint for r in rows}
    assert fps[0.1] != fps[0.2]


def test_layers_axis_matches_trace(base, artifacts):
    spec = SweepSpec("layers", [2, 5], ["ALPGM", "FISTA_GS"], test_count=5)
    cache = {}
    rows = run_sweep(spec, base, artifacts, cache)
    test = cache[base]
    _, its = forward_batch(artifacts.net(ALPGM), test.s_tilde, test.y_stack(), trace=True)
    got = {(r.method, r.axis_value): r.nmse_db for r in rows}
    assert got[("ALPGM", 5)] == pytest.approx(nmse_db_stack(its[5], test.x_stack()))
    curve = layer_curve("FISTA_GS", test, artifacts, iters=5)
    assert got[("FISTA_GS", 2)] == pytest.approx(curve[1])
    with pytest.raises(ConfigError):
        run_sweep(SweepSpec("layers", [99], ["ALPGM"], test_count=2), base, artifacts)


def test_mismatch_base_reproduces_direct_eval(base, artifacts):
    spec = SweepSpec("mismatch", ["base", "snr_db=15"], ["ALPGM_MM", "LPGM_AT"], test_count=6)
    rows = run_sweep(spec, base, artifacts)
    test = gen_dataset(base, 6, spec.test_seed)
    direct = nmse_db_stack(forward_batch(artifacts.net(ALPGM_MM), test.s_tilde, test.y_stack()),
                           test.x_stack())
    row = next(r for r in rows if r.method == "ALPGM_MM" and r.axis_value == "base")
    assert abs(row.nmse_db - direct) <= 0.1
    ctx, hp = artifacts.lpgm_at()
    row = next(r for r in rows if r.method == "LPGM_AT" and r.axis_value == "base")
    assert row.nmse_db == pytest.approx(evaluate(ctx, hp, test.x_stack(), test.y_stack()))


def test_missing_artifact_named(base):
    art = Artifacts(sources={"ALPGM": "/tmp/nowhere/net_ALPGM.json"})
    with pytest.raises(ConfigError, match="net_ALPGM.json"):
        run_sweep(SweepSpec("snr_db", [10.0], ["ALPGM"], test_count=2), base, art)
    with pytest.raises(ConfigError):
        run_sweep(SweepSpec("snr_db", [10.0], ["LPGM_AT"], test_count=2), base, Artifacts())


def test_pilot_len_requires_matching_artifact(base, artifacts):
    with pytest.raises(ConfigError):
        run_sweep(SweepSpec("pilot_len", [8], ["ALPGM"], test_count=2), base, artifacts)
    rows = run_sweep(SweepSpec("pilot_len", [8, 12], ["ISTA_GS"], test_count=2), base)
    assert [r.axis_value for r in rows] == [8, 12]


def test_first_crossing():
    assert first_crossing([-5, -15, -21, -30], -20) == 3
    assert first_crossing([-5], -20) is None


def test_csv_header(tmp_path, base):
    rows = run_sweep(SweepSpec("snr_db", [30.0], ["PGM"], iters_for_iterative=3, test_count=2), base)
    text = write_csv(tmp_path / "s.csv", rows).read_text().splitlines()
    assert text[0] == ",".join(CSV_HEADER)
    assert text[0] == "method,axis,axis_value,nmse_db,runtime_ms_per_sample,seed,fingerprint"
    assert text[1].startswith("PGM,snr_db,30.0,")
