import csv
import math

import numpy as np
import pytest
import yaml

from grapl.cli import _parse_graph_spec, main
from grapl.harness import (
    ConfigError,
    ErrorCurve,
    ExperimentConfig,
    PolicyConfig,
    emit_csv,
    first_zero_time,
    load_config,
    materialize,
    run,
)


def _config(**over):
    base = {
        "schema_version": 1,
        "seed": 3,
        "trials": 3,
        "T": 60,
        "tau": 0.0,
        "epsilon": 0.01,
        "graph": {"generator": "sbm", "n": 20},
        "signal": {"kind": "blocks", "values": [1.0, -1.0]},
        "noise": {"kind": "gaussian", "sigma": 1.0},
        "policies": [
            {"policy": "grapl", "gamma": [1, 10], "lambda": "1e-3"},
            {"policy": "nonadaptive_random", "gamma": 10},
            {"policy": "nonadaptive_rr", "gamma": 10},
            {"policy": "apt"},
            {"policy": "oracle", "gamma": 10},
        ],
    }
    base.update(over)
    return base


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def test_config_expansion_and_coercion():
    cfg = ExperimentConfig.from_dict(_config())
    assert [p.name for p in cfg.policies] == ["grapl", "grapl", "nonadaptive_random", "nonadaptive_rr", "apt", "oracle"]
    assert cfg.policies[0].lam == 1e-3
    assert cfg.policies[1].gamma == 10.0


@pytest.mark.parametrize(
    "patch",
    [
        {"T": 0},
        {"trials": 0},
        {"epsilon": 0},
        {"policies": [{"policy": "ucb"}]},
        {"policies": [{"policy": "grapl"}]},
        {"policies": []},
        {"schema_version": 2},
        {"bogus": 1},
        {"noise_stream": "shared"},
    ],
)
def test_config_validation(patch):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_config(**patch))


def test_config_missing_key():
    data = _config()
    del data["tau"]
    with pytest.raises(ConfigError, match="tau"):
        ExperimentConfig.from_dict(data)


def test_offset_keyword():
    data = _config(policies=[{"policy": "grapl", "gamma": 1, "offset": "tau"}])
    assert ExperimentConfig.from_dict(data).policies[0].offset is True
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(_config(policies=[{"policy": "grapl", "gamma": 1, "offset": "median"}]))


def test_oracle_deterministic_two_arms():
    data = _config(
        T=10,
        trials=1,
        graph={"generator": "empty", "n": 2},
        signal={"kind": "explicit", "mu": [1.0, -1.0]},
        noise={"kind": "deterministic"},
        policies=[{"policy": "oracle", "gamma": 1.0}],
    )
    res = run(ExperimentConfig.from_dict(data))
    e = res.curves[0].errors[0]
    assert np.all(e[1:] == 0)
    assert first_zero_time(e) <= 2


def test_replay_determinism_and_threads(tmp_path):
    cfg = ExperimentConfig.from_dict(_config())
    a = emit_csv(run(cfg).curves, tmp_path / "a")
    b = emit_csv(run(cfg, threads=3).curves, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_csv_layout(tmp_path):
    cfg = ExperimentConfig.from_dict(_config(T=3, trials=1, policies=[{"policy": "apt"}]))
    errors, agg = emit_csv(run(cfg).curves, tmp_path)
    rows = list(csv.reader(errors.open()))
    assert rows[0] == ["policy", "gamma", "trial", "t", "E"]
    assert len(rows) == 4
    assert all(r[1] == "" for r in rows[1:])
    agg_rows = list(csv.reader(agg.open()))
    assert agg_rows[0] == ["policy", "gamma", "t", "median", "q25", "q75"]
    for r in agg_rows[1:]:
        assert r[3] == r[4] == r[5]


def test_quantile_convention():
    c = ErrorCurve(PolicyConfig("apt"), [0, 1, 2, 3], np.array([[0.0], [0.0], [1.0], [1.0]]))
    assert c.median[0] == 0.5
    assert c.q25[0] == 0.0 and c.q75[0] == 1.0


def test_emit_csv_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    c = ErrorCurve(PolicyConfig("apt"), [0], np.zeros((1, 2)))
    with pytest.raises(OSError, match="file"):
        emit_csv([c], blocker / "sub")


def test_errors_in_unit_interval_and_final_estimate():
    cfg = ExperimentConfig.from_dict(_config())
    res = run(cfg)
    assert res.ok
    for c in res.curves:
        assert c.errors.shape == (3, 60)
        assert np.all((c.errors >= 0) & (c.errors <= 1))
    # E at T recomputed from the reported final estimate
    _, inst = materialize(cfg, 0)
    for c in res.curves:
        est = c.final_estimates[0]
        sep = np.abs(inst.mu - inst.tau) >= inst.epsilon
        wrong = ((inst.mu >= inst.tau + inst.epsilon) & ~est) | ((inst.mu < inst.tau - inst.epsilon) & est)
        assert c.errors[0, -1] == wrong.sum() / sep.sum()


def test_apt_accounting():
    cfg = ExperimentConfig.from_dict(_config())
    res = run(cfg)
    apt = res.curve("apt")
    assert all(p == cfg.T + 2 * 20 for p in apt.total_pulls)
    assert all(p == cfg.T for p in res.curve("grapl").total_pulls)


def test_per_policy_trial_counts():
    data = _config(policies=[{"policy": "grapl", "gamma": 1, "trials": 1}, {"policy": "apt"}])
    res = run(ExperimentConfig.from_dict(data))
    assert res.curve("grapl").trials == [0]
    assert res.curve("apt").trials == [0, 1, 2]


def test_graph_regenerated_per_trial():
    cfg = ExperimentConfig.from_dict(_config())
    g0, _ = materialize(cfg, 0)
    g1, _ = materialize(cfg, 1)
    assert g0.edges() != g1.edges()
    fixed = ExperimentConfig.from_dict(_config(graph={"generator": "sbm", "n": 20, "regenerate": False}))
    assert materialize(fixed, 0)[0].edges() == materialize(fixed, 1)[0].edges()


def test_shared_noise_across_policies():
    # With per-arm streams two identical policies in one trial see identical rewards.
    data = _config(
        trials=1,
        policies=[{"policy": "apt"}, {"policy": "apt", "label": "apt2"}],
    )
    res = run(ExperimentConfig.from_dict(data))
    np.testing.assert_array_equal(res.curve("apt").errors, res.curve("apt2").errors)
    res2 = run(ExperimentConfig.from_dict({**data, "noise_stream": "per_policy"}))
    assert res2.ok


def test_failure_recorded_and_others_continue():
    data = _config(
        trials=2,
        signal={"kind": "explicit", "mu": [0.0] * 20},
        policies=[{"policy": "oracle", "gamma": 1}, {"policy": "apt"}],
    )
    res = run(ExperimentConfig.from_dict(data))
    assert not res.ok
    assert {f.policy for f in res.failures} == {"oracle"}
    assert res.curve("apt").errors.shape == (2, 60)


def test_edge_list_and_labels(tmp_path):
    # vertices 0..4 in a path plus isolated 5; labels for all six
    (tmp_path / "g.txt").write_text("0 1\n1 0\n1 2\n2 3\n3 4\n")
    (tmp_path / "l.txt").write_text("\n".join(f"{i} {int(i >= 2)}" for i in range(6)))
    data = _config(
        trials=1,
        T=20,
        tau=0.5,
        graph={"generator": "edge_list", "path": "g.txt"},
        signal={"kind": "labels", "path": "l.txt"},
        noise={"kind": "deterministic"},
        policies=[{"policy": "grapl", "gamma": 1e-5, "alpha": 1e-8, "offset": "tau"}],
    )
    cfg = load_config(_write(tmp_path, data))
    g, inst = materialize(cfg, 0)
    assert g.n_vertices == 5
    assert g.edges()[0] == (0, 1, 2.0)
    np.testing.assert_array_equal(inst.mu, [0, 0, 1, 1, 1])
    assert run(cfg).ok


def test_smooth_signal_config():
    data = _config(
        trials=1,
        tau=0.5,
        graph={"generator": "small_world", "n": 30, "k_ring": 4, "p_new": 0.05},
        signal={"kind": "smooth"},
        noise={"kind": "bernoulli"},
        policies=[{"policy": "apt"}],
    )
    _, inst = materialize(ExperimentConfig.from_dict(data), 0)
    assert inst.R == 0.5 and np.all((inst.mu >= 0) & (inst.mu <= 1))


def test_first_zero_time():
    assert first_zero_time(np.array([0.0, 0.0])) == 1
    assert first_zero_time(np.array([0.5, 0.0, 0.2, 0.0, 0.0])) == 4
    assert first_zero_time(np.array([0.5, 0.0, 0.2])) == math.inf


def test_cli_run_and_exit_codes(tmp_path, capsys):
    p = _write(tmp_path, _config(trials=2, T=15))
    out = tmp_path / "out"
    assert main(["run", str(p), "--out-dir", str(out), "--seed", "4", "--trials", "1"]) == 0
    rows = list(csv.reader((out / "errors.csv").open()))
    assert len(rows) == 1 + 6 * 15
    bad = _write(tmp_path, _config(signal={"kind": "explicit", "mu": [0.0] * 20}, policies=[{"policy": "oracle", "gamma": 1}]), "bad.yaml")
    assert main(["run", str(bad), "--out-dir", str(tmp_path / "o2")]) == 1
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2


def test_cli_analyze(tmp_path, capsys):
    p = _write(tmp_path, _config(T=200))
    assert main(["analyze", str(p), "--points", "5"]) == 0
    out = capsys.readouterr().out
    assert "gamma_star" in out and "grapl" in out and "T_crit" in out


def test_cli_analyze_noiseless(tmp_path, capsys):
    p = _write(tmp_path, _config(noise={"kind": "deterministic"}))
    assert main(["analyze", str(p), "--points", "3"]) == 0
    captured = capsys.readouterr()
    assert "gamma_star" not in captured.out
    assert "R = 0" in captured.err


def test_cli_gen_graph(tmp_path):
    out = tmp_path / "g.txt"
    assert main(["gen-graph", "small_world:n=30,k_ring=4,p_new=0.1", "-o", str(out), "--seed", "2"]) == 0
    from grapl.graph import gen_small_world, load_edge_list

    assert load_edge_list(out).edges() == gen_small_world(30, 4, 0.1, np.random.SeedSequence(2)).edges()
    assert main(["gen-graph", "cliques:d=2,k=3", "-o", str(out)]) == 0
    assert load_edge_list(out).n_edges == 6
    assert main(["gen-graph", "wat:n=3", "-o", str(out)]) == 2


def test_parse_graph_spec():
    assert _parse_graph_spec("sbm:n=200") == {"generator": "sbm", "n": "200"}
    with pytest.raises(ConfigError):
        _parse_graph_spec("sbm:n")
