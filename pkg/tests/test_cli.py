import json
from pathlib import Path

import numpy as np
import pytest

from hibp import FeatureAllocation, load_allocation, sample_allocation
from hibp.cli import main

from conftest import small_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def alloc_file(tmp_path):
    a = sample_allocation(small_config("bernoulli", (4, 3)), np.random.default_rng(8))
    p = tmp_path / "alloc.json"
    p.write_text(a.to_json())
    return str(p)


def test_generate_writes_binary_matrices(tmp_path):
    out = tmp_path / "gen"
    assert main(["generate", str(CONFIGS / "gg_beta_fof_a01.json"), str(out), "--replicates", "2"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["alloc_0000.csv", "alloc_0000.json",
                                                      "alloc_0001.csv", "alloc_0001.json"]
    a = load_allocation(out / "alloc_0000.json")
    assert a.config.J == 3
    for j in range(3):
        d = a.to_indicator(j)
        assert d.shape == (100, a.r)
        assert set(np.unique(d).tolist()) <= {0, 1}
        np.testing.assert_array_equal(d, a.to_dense(j) > 0)


def test_generate_is_byte_identical(tmp_path):
    cfg = str(CONFIGS / "mixed_slabs.json")
    for name in ("a", "b"):
        assert main(["generate", cfg, str(tmp_path / name), "--seed", "5", "--replicates", "3"]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    assert main(["generate", cfg, str(tmp_path / "c"), "--seed", "6", "--replicates", "1"]) == 0
    assert (tmp_path / "c" / "alloc_0000.json").read_bytes() != (tmp_path / "a" / "alloc_0000.json").read_bytes()


def test_generate_replicate_streams_independent_of_threads(tmp_path, monkeypatch):
    cfg = str(CONFIGS / "mixed_slabs.json")
    main(["generate", cfg, str(tmp_path / "a"), "--replicates", "3", "--format", "json"])
    monkeypatch.setenv("HIBP_THREADS", "3")
    main(["generate", cfg, str(tmp_path / "b"), "--replicates", "3", "--format", "json"])
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_generate_invalid_config_exits_2(tmp_path, capsys):
    bad = _write(tmp_path / "bad.json", {"base": {"family": "generalized_gamma", "alpha": 1.5, "zeta": 1.0,
                                                  "theta": -1.0}, "groups": []})
    assert main(["generate", bad, str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["generate", str(tmp_path / "missing.json"), str(tmp_path / "o")]) == 2


def test_generate_zero_replicates(tmp_path):
    out = tmp_path / "none"
    assert main(["generate", str(CONFIGS / "mixed_slabs.json"), str(out), "--replicates", "0"]) == 0
    assert not out.exists() or not any(out.iterdir())


def test_loglik_empty_allocation_is_minus_phi(tmp_path):
    cfg = small_config()
    p = tmp_path / "empty.json"
    p.write_text(FeatureAllocation(cfg, ()).to_json())
    out = tmp_path / "ll.json"
    assert main(["loglik", str(p), "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["breakdown"]["total"] == pytest.approx(-cfg.phi(), rel=1e-14)


def test_loglik_row_permutation_identical(tmp_path, alloc_file):
    a = load_allocation(alloc_file)
    b = a.permute_rows(0, np.array([2, 0, 3, 1])).permute_rows(1, np.array([1, 2, 0]))
    pb = tmp_path / "perm.json"
    pb.write_text(b.to_json())
    outs = []
    for src in (alloc_file, str(pb)):
        o = tmp_path / (Path(src).stem + ".ll.json")
        assert main(["loglik", src, "--params", "1.5,2.0,0.4", "--out", str(o)]) == 0
        outs.append(json.loads(o.read_text()))
    assert outs[0]["breakdown"]["total"] == pytest.approx(outs[1]["breakdown"]["total"], abs=1e-12)
    assert outs[0]["profile"] == pytest.approx(outs[1]["profile"], abs=1e-12)


def test_loglik_bad_params(alloc_file):
    assert main(["loglik", alloc_file, "--params", "1,2"]) == 2


def test_infer_deterministic(tmp_path, alloc_file):
    mc = _write(tmp_path / "mc.json", {"steps": 200, "burn_in": 100, "thin": 5, "chains": 2, "seed": 3})
    for name in ("a", "b"):
        assert main(["infer", alloc_file, mc, str(tmp_path / name)]) == 0
    for f in ("traces.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    lines = (tmp_path / "a" / "traces.csv").read_text().splitlines()
    assert lines[0] == "step,chain,theta0,theta,alpha,log_target"
    assert len(lines) == 1 + 2 * 20
    assert main(["infer", str(tmp_path / "nope.json"), mc, str(tmp_path / "c")]) == 2
    bad = _write(tmp_path / "bad_mc.json", {"steps": 10, "burn_in": 20})
    assert main(["infer", alloc_file, bad, str(tmp_path / "d")]) == 2


def test_predict_existing_and_new_group(tmp_path, alloc_file):
    a = load_allocation(alloc_file)
    out, ext = tmp_path / "p.csv", tmp_path / "ext.json"
    assert main(["predict", alloc_file, str(out), "--group", "1", "--rows", "2", "--seed", "4",
                 "--out-json", str(ext)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "group,row,feature_index,count"
    assert all(line.split(",")[1] in ("5", "6") for line in rows[1:])
    e = load_allocation(ext)
    assert e.config.groups[0].M == 6
    out2 = tmp_path / "p2.csv"
    assert main(["predict", alloc_file, str(out2), "--group", "1", "--rows", "2", "--seed", "4"]) == 0
    assert out2.read_bytes() == out.read_bytes()

    assert main(["predict", alloc_file, str(tmp_path / "n.csv"), "--group", "3", "--out-json",
                 str(tmp_path / "n.json")]) == 0
    n = load_allocation(tmp_path / "n.json")
    assert n.config.J == 3 and n.config.groups[2].M == 1
    # no selections of the new group at old atoms beyond its one predicted row
    assert np.all(n.counts[: a.r, :2] == a.counts)


def test_predict_group_out_of_range(tmp_path, alloc_file):
    assert main(["predict", alloc_file, str(tmp_path / "x.csv"), "--group", "4"]) == 2
    assert main(["predict", alloc_file, str(tmp_path / "x.csv"), "--group", "0"]) == 2


def test_fof_command(tmp_path, alloc_file):
    out = tmp_path / "fof.csv"
    assert main(["fof", alloc_file, str(out)]) == 0
    a = load_allocation(alloc_file)
    lines = out.read_text().splitlines()
    assert lines[0] == "count,frequency"
    assert sum(int(l.split(",")[1]) for l in lines[1:]) == a.r
    assert main(["fof", alloc_file, str(out), "--level", "group", "--group", "2"]) == 0
    assert main(["fof", alloc_file, str(out), "--level", "group"]) == 2
