from __future__ import annotations

import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netconsensus.cli import OUT_ENV, main
from netconsensus.config import (
    BaselineCampaign,
    Campaign,
    ConfigError,
    FitCampaign,
    SweepCampaign,
    TopologyEntry,
    TuneCampaign,
    roundtrip,
)

MIX = [{"preset": "ER-dense"}, {"preset": "ER-sparse"}, {"preset": "BA"}]


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().err


# -- config parsing ----------------------------------------------------------------------


def test_campaign_cross_product_has_36_cells():
    c = Campaign.from_dict({"topologies": MIX, "adversaries": [0, 2, 5], "visible": [0, 1, 2, 5]})
    cells = c.cells()
    assert len(cells) == 36
    assert [(x["topology"], x["a"], x["v"]) for x in cells[:5]] == [
        ("ER-dense", 0, 0), ("ER-dense", 0, 1), ("ER-dense", 0, 2), ("ER-dense", 0, 5), ("ER-dense", 2, 0)
    ]  # fmt: skip
    assert {x["n"] - x["a"] for x in cells} == {20}


def test_presets_expand():
    e = TopologyEntry.from_dict({"preset": "BA"})
    assert (e.kind, e.m, e.gamma) == ("BA", 3, 1.0)
    dense = TopologyEntry.from_dict({"preset": "ER-dense"})
    sparse = TopologyEntry.from_dict({"preset": "ER-sparse"})
    assert dense.kind == sparse.kind == "ER" and dense.p > sparse.p
    assert TopologyEntry.from_dict({"preset": "BA", "m": 2, "label": "x"}).m == 2


CONFIGS = [
    Campaign.from_dict({"topologies": MIX, "adversaries": [0, 2], "visible": [1], "master_seed": 9,
                        "placements": [{"visible": "greedy", "adversary": "random"}],
                        "behavior": {"type": "models", "bank": None}}),
    BaselineCampaign.from_dict({"topology": {"preset": "ER-dense"}, "delays": [0, 6, 12]}),
    SweepCampaign.from_dict({"kind": "clustering", "topology": {"kind": "SmallWorld", "k": 6}, "values": [0, 0.5]}),
    TuneCampaign.from_dict({"epsilon": 0.3, "topology": {"preset": "BA"}, "adversaries": 2}),
    FitCampaign.from_dict({"logs": "x.jsonl", "lambda_grid": [0.1]}),
]  # fmt: skip


@pytest.mark.parametrize("config", CONFIGS, ids=lambda c: type(c).__name__)
def test_config_roundtrip_identity(config):
    again = roundtrip(config)
    assert again == config
    assert roundtrip(again) == again


@settings(max_examples=40)
@given(
    st.lists(st.sampled_from(MIX), min_size=1, max_size=3),
    st.lists(st.integers(0, 5), min_size=1, max_size=3),
    st.lists(st.integers(0, 5), min_size=1, max_size=4),
    st.integers(1, 5000),
    st.integers(0, 2**64 - 1),
)
def test_campaign_roundtrip_property(topos, advs, vis, reps, seed):
    c = Campaign.from_dict({"topologies": topos, "adversaries": advs, "visible": vis, "replications": reps,
                            "master_seed": seed})  # fmt: skip
    assert roundtrip(c) == c
    assert len(c.cells()) == len(topos) * len(advs) * len(vis)


@pytest.mark.parametrize(
    "data, path",
    [
        ({"topologies": MIX, "replications": 0}, "$.replications"),
        ({"topologies": [{"kind": "ER", "p": 2}]}, "$.topologies[0].p"),
        ({"topologies": MIX, "adversaries": [-1]}, "$.adversaries[0]"),
        ({"topologies": MIX, "colour": "red"}, "$"),
        ({"topologies": [{"preset": "nope"}]}, "$.topologies[0].preset"),
        ({"adversaries": [0]}, "$"),
    ],
)
def test_schema_errors_name_json_path(data, path):
    with pytest.raises(ConfigError) as info:
        Campaign.from_dict(data)
    assert str(info.value).startswith(path + ":")


def test_baseline_rejects_adversaries():
    with pytest.raises(ConfigError, match="adversaries"):
        BaselineCampaign.from_dict({"topology": {"preset": "ER-dense"}, "delays": [0], "adversaries": 2})
    with pytest.raises(ConfigError, match="adversaries"):
        Campaign.from_dict({"topologies": MIX, "adversaries": [2], "behavior": {"type": "baseline"}})


def test_sweep_kind_must_match_topology():
    with pytest.raises(ConfigError, match="kind"):
        SweepCampaign.from_dict({"kind": "clustering", "topology": {"preset": "ER-dense"}, "values": [0.1]})
    with pytest.raises(ConfigError):
        SweepCampaign.from_dict({"kind": "gamma", "topology": {"kind": "SmallWorld", "k": 4}, "values": [1]})
    assert SweepCampaign.from_dict({"kind": "density", "topology": {"preset": "BA"}, "values": [1]}).parameter() == "m"
    assert SweepCampaign.from_dict({"kind": "density", "topology": {"preset": "ER-dense"},
                                    "values": [0.2]}).parameter() == "p"  # fmt: skip


# -- CLI ------------------------------------------------------------------------------


SMALL = {"name": "s", "topologies": [{"preset": "ER-dense"}], "adversaries": [0, 2], "visible": [0, 1],
         "replications": 30, "master_seed": 4}  # fmt: skip


def test_simulate_writes_summary_and_is_byte_identical(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {**SMALL, "write_traces": True})
    assert run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "b", "--jobs", 2)[0] == 0
    for f in ("s_summary.csv", "s_traces.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rows = read_csv(tmp_path / "a" / "s_summary.csv")
    rates = [r for r in rows if r["metric"] == "consensus_rate"]
    assert len(rates) == 4
    assert all(len(r["value"].split(".")[1]) == 6 for r in rates)
    assert len((tmp_path / "a" / "s_traces.jsonl").read_text().splitlines()) == 4 * 30


def test_seed_and_replication_overrides(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {**SMALL, "write_traces": True})
    run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "a", "--replications", 5)
    assert len((tmp_path / "a" / "s_traces.jsonl").read_text().splitlines()) == 4 * 5
    run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "b", "--replications", 5, "--seed", 99)
    assert (tmp_path / "a" / "s_traces.jsonl").read_bytes() != (tmp_path / "b" / "s_traces.jsonl").read_bytes()


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    cfg = write(tmp_path, "c.json", {**SMALL, "replications": 3})
    assert run(capsys, "simulate", "--config", cfg)[0] == 0
    assert (tmp_path / "env" / "s_summary.csv").exists()
    cfg = write(tmp_path, "d.json", {**SMALL, "replications": 3, "output_dir": str(tmp_path / "cfg")})
    assert run(capsys, "simulate", "--config", cfg)[0] == 0
    assert (tmp_path / "cfg" / "s_summary.csv").exists()


@pytest.mark.parametrize(
    "data, fragment",
    [
        ({**SMALL, "replications": 0}, "$.replications"),
        ({"topologies": [{"kind": "ER", "p": 2}]}, "$.topologies[0].p"),
    ],
)
def test_cli_schema_error_exit(tmp_path, capsys, data, fragment):
    code, err = run(capsys, "simulate", "--config", write(tmp_path, "bad.json", data), "--out", tmp_path)
    assert code != 0
    assert fragment in err


def test_cli_replications_override_zero_rejected(tmp_path, capsys):
    code, err = run(capsys, "simulate", "--config", write(tmp_path, "c.json", SMALL), "--replications", 0)
    assert code != 0 and "$.replications" in err


def test_cli_invalid_json_and_missing_file(tmp_path, capsys):
    bad = tmp_path / "x.json"
    bad.write_text("{nope")
    code, err = run(capsys, "simulate", "--config", bad)
    assert code != 0 and "invalid JSON" in err
    code, _ = run(capsys, "simulate", "--config", tmp_path / "missing.json")
    assert code != 0


def test_baseline_cli_single_row_and_flat_v0(tmp_path, capsys):
    cfg = write(tmp_path, "b.json", {"name": "one", "topology": {"preset": "ER-dense"}, "delays": [12],
                                     "visible": [2], "replications": 40})  # fmt: skip
    assert run(capsys, "baseline", "--config", cfg, "--out", tmp_path)[0] == 0
    rows = read_csv(tmp_path / "one_baseline.csv")
    assert len(rows) == 1 and list(rows[0]) == ["D", "v", "rate", "ci_lo", "ci_hi", "replications"]
    cfg = write(tmp_path, "b0.json", {"name": "flat", "topology": {"preset": "ER-dense"}, "delays": [0, 6, 12],
                                      "visible": [0], "replications": 60})  # fmt: skip
    assert run(capsys, "baseline", "--config", cfg, "--out", tmp_path)[0] == 0
    rows = read_csv(tmp_path / "flat_baseline.csv")
    assert [r["D"] for r in rows] == ["0", "6", "12"]
    assert len({(r["rate"], r["ci_lo"], r["ci_hi"]) for r in rows}) == 1


def test_baseline_cli_rejects_adversaries(tmp_path, capsys):
    cfg = write(tmp_path, "b.json", {"topology": {"preset": "ER-dense"}, "delays": [0], "adversaries": 2})
    code, err = run(capsys, "baseline", "--config", cfg, "--out", tmp_path)
    assert code != 0 and "adversaries" in err


def test_sweep_cli_outputs(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"name": "cl", "kind": "clustering", "topology": {"kind": "SmallWorld", "k": 4},
                                     "values": [0.0, 1.0], "replications": 20})  # fmt: skip
    assert run(capsys, "sweep", "clustering", "--config", cfg, "--out", tmp_path)[0] == 0
    rows = read_csv(tmp_path / "cl_clustering.csv")
    assert [r["parameter"] for r in rows] == ["beta", "beta"]
    # the ring lattice with k=4 has clustering 0.5; rewiring lowers the measured value
    assert float(rows[0]["measured"]) == pytest.approx(0.5)
    assert float(rows[1]["measured"]) < 0.5
    cfg = write(tmp_path, "g.json", {"name": "g", "kind": "gamma", "topology": {"preset": "BA"},
                                     "values": [0.5, 1.0, 1.5], "replications": 10})  # fmt: skip
    assert run(capsys, "sweep", "gamma", "--config", cfg, "--out", tmp_path)[0] == 0
    assert len(read_csv(tmp_path / "g_gamma.csv")) == 3
    cfg = write(tmp_path, "d.json", {"name": "d", "kind": "density", "topology": {"preset": "BA"},
                                     "values": [1, 2, 3, 5], "team_size": 25, "replications": 10})  # fmt: skip
    assert run(capsys, "sweep", "density", "--config", cfg, "--out", tmp_path)[0] == 0
    rows = read_csv(tmp_path / "d_density.csv")
    assert [r["setting"] for r in rows] == ["1", "2", "3", "5"]
    assert [float(r["measured"]) for r in rows] == pytest.approx([2 * (25 - m) * m / 25 + m * (m - 1) / 25
                                                                  for m in (1, 2, 3, 5)])  # fmt: skip


def test_sweep_cli_kind_mismatch(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"kind": "clustering", "topology": {"preset": "ER-dense"}, "values": [0.1]})
    code, err = run(capsys, "sweep", "clustering", "--config", cfg, "--out", tmp_path)
    assert code != 0 and "$.topology.kind" in err
    cfg = write(tmp_path, "d.json", {"kind": "gamma", "topology": {"preset": "BA"}, "values": [1.0]})
    code, err = run(capsys, "sweep", "density", "--config", cfg, "--out", tmp_path)
    assert code != 0 and "$.kind" in err


def test_place_cli_four_bars_per_cell(tmp_path, capsys):
    cfg = write(tmp_path, "p.json", {"name": "pl", "topologies": [{"preset": "ER-dense"}], "adversaries": [2],
                                     "visible": [2], "replications": 20})  # fmt: skip
    assert run(capsys, "place", "--config", cfg, "--out", tmp_path)[0] == 0
    rows = [r for r in read_csv(tmp_path / "pl_placement.csv") if r["metric"] == "consensus_rate"]
    assert [r["placement"] for r in rows] == ["random/random", "random/greedy", "greedy/random", "greedy/greedy"]


def test_tune_cli_zero_epsilon(tmp_path, capsys):
    cfg = write(tmp_path, "t.json", {"name": "t", "epsilon": 0.0, "topology": {"preset": "ER-dense"},
                                     "adversaries": 2, "replications": 20})  # fmt: skip
    assert run(capsys, "tune", "--config", cfg, "--out", tmp_path)[0] == 0
    report = json.loads((tmp_path / "t_tune.json").read_text())
    assert report["delta"] in ({}, [])
    assert report["final_rate"] == report["baseline_rate"]
    assert json.loads((tmp_path / "t_tuned_bank.json").read_text())


def test_fit_cli_closed_loop(tmp_path, capsys):
    sim = write(tmp_path, "s.json", {"name": "gen", "topologies": MIX, "adversaries": [0, 2], "visible": [0, 2],
                                     "replications": 40, "write_traces": True, "master_seed": 1})  # fmt: skip
    assert run(capsys, "simulate", "--config", sim, "--out", tmp_path)[0] == 0
    fit = write(tmp_path, "f.json", {"name": "f", "logs": str(tmp_path / "gen_traces.jsonl"), "fixed_lambda": 1e-3})
    assert run(capsys, "fit", "--config", fit, "--out", tmp_path)[0] == 0
    report = json.loads((tmp_path / "f_fit_report.json").read_text())
    assert report["games"] == 12 * 40
    assert len(report["slots"]) == 18
    assert report["comparison"]["checked"] > 0
    assert report["comparison"]["correlation"] > 0.5
    assert json.loads((tmp_path / "f_bank.json").read_text())


def test_fit_cli_malformed_logs(tmp_path, capsys):
    logs = tmp_path / "l.jsonl"
    logs.write_text('{"n": 2}\n')
    code, err = run(capsys, "fit", "--config", write(tmp_path, "f.json", {"logs": str(logs)}), "--out", tmp_path)
    assert code != 0 and ":1:" in err
