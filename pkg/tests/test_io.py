import json

import numpy as np
import pytest

from gprune.bench import recovery_sweep
from gprune.core import PermutationPair, ValidationError
from gprune.equivalence import export_grouped, export_sparse
from gprune.io import (
    RunReport,
    load_manifest,
    read_grouped_export,
    read_norm_csv,
    read_report,
    read_sparse_export,
    read_tensor,
    write_grouped_export,
    write_manifest,
    write_norm_csv,
    write_report,
    write_sparse_export,
    write_tensor,
)
from gprune.pruner import prune_mask


def test_tensor_round_trip(tmp_path):
    a = np.random.default_rng(0).standard_normal((3, 4, 2, 2)).astype(np.float32)
    write_tensor(tmp_path / "t.gpt", a)
    raw = (tmp_path / "t.gpt").read_bytes()
    assert raw[:4] == b"GPT1" and raw[4:8] == (4).to_bytes(4, "little")
    assert np.array_equal(read_tensor(tmp_path / "t.gpt"), a.astype(np.float64))


def test_tensor_bad_magic_and_size(tmp_path):
    (tmp_path / "bad.gpt").write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(ValidationError, match="magic"):
        read_tensor(tmp_path / "bad.gpt")
    write_tensor(tmp_path / "t.gpt", np.zeros((2, 2)))
    (tmp_path / "short.gpt").write_bytes((tmp_path / "t.gpt").read_bytes()[:-4])
    with pytest.raises(ValidationError, match="payload"):
        read_tensor(tmp_path / "short.gpt")


def test_tensor_non_finite(tmp_path):
    write_tensor(tmp_path / "n.gpt", np.array([[1.0, np.inf]]))
    with pytest.raises(ValidationError, match=r"\(0, 1\)"):
        read_tensor(tmp_path / "n.gpt")


def test_norm_csv_round_trip(tmp_path):
    m = np.random.default_rng(1).uniform(size=(3, 5))
    write_norm_csv(tmp_path / "m.csv", m)
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "in_0,in_1,in_2,in_3,in_4"
    assert np.array_equal(read_norm_csv(tmp_path / "m.csv"), m)


def test_empty_manifest(tmp_path):
    write_manifest(tmp_path / "m.json", [])
    assert load_manifest(tmp_path / "m.json").layers == []


def test_fixture_manifest_dims(model_dir):
    man = load_manifest(model_dir / "model.json")
    assert [l.spec.name for l in man.layers] == ["conv1", "conv2", "conv3", "ones"]
    for l in man.layers[:3]:
        s = l.spec
        assert l.weights.shape == (s.c_out, s.c_in, s.k_h, s.k_w)
        assert l.norms.shape == (s.c_out, s.c_in)
    assert man.layer("ones").weights is None


def _manifest_with(tmp_path, **override):
    write_tensor(tmp_path / "w.gpt", np.ones((2, 3, 1, 1)))
    entry = {"name": "l", "c_in": 3, "c_out": 2, "k_h": 1, "k_w": 1, "data_file": "w.gpt"}
    entry.update(override)
    write_manifest(tmp_path / "m.json", [entry])
    return tmp_path / "m.json"


def test_dimension_mismatch_rejected(tmp_path):
    with pytest.raises(ValidationError, match="dimension mismatch"):
        load_manifest(_manifest_with(tmp_path, c_in=4))


@pytest.mark.parametrize("override,needle", [
    ({"data_file": "missing.gpt"}, "not found"),
    ({"dtype": "float16"}, "dtype"),
    ({"k_h": 0}, "k_h"),
    ({"data_file": None}, "data_file or norm_file"),
])
def test_manifest_field_errors(tmp_path, override, needle):
    with pytest.raises(ValidationError, match=needle):
        load_manifest(_manifest_with(tmp_path, **override))


def test_manifest_version_and_duplicates(tmp_path):
    (tmp_path / "v.json").write_text(json.dumps({"format_version": 9, "layers": []}))
    with pytest.raises(ValidationError, match="format_version"):
        load_manifest(tmp_path / "v.json")
    write_norm_csv(tmp_path / "n.csv", np.ones((2, 2)))
    e = {"name": "a", "c_in": 2, "c_out": 2, "k_h": 1, "k_w": 1, "norm_file": "n.csv"}
    write_manifest(tmp_path / "d.json", [e, e])
    with pytest.raises(ValidationError, match="duplicate"):
        load_manifest(tmp_path / "d.json")


def test_loading_does_not_touch_inputs(model_dir):
    before = {p.name: p.read_bytes() for p in model_dir.iterdir()}
    load_manifest(model_dir / "model.json")
    assert {p.name: p.read_bytes() for p in model_dir.iterdir()} == before


def test_empty_report_round_trip(tmp_path):
    write_report(RunReport(), tmp_path / "r.json")
    assert read_report(tmp_path / "r.json") == RunReport()


def test_permutation_report_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    p = PermutationPair(rng.permutation(64), rng.permutation(64))
    entry = {"name": "x", "g": 4, "objective": 0.1 + 0.2, "cost": 1 / 3, **p.to_dict()}
    r = RunReport(["prune-layer"], [7], [entry], {"params": 1, "ops": 2, "cost": 1 / 3})
    write_report(r, tmp_path / "r.json")
    back = read_report(tmp_path / "r.json")
    assert back == r
    assert PermutationPair.from_dict(back.layers[0]) == p
    assert back.layers[0]["objective"] == 0.1 + 0.2


def test_report_rejects_bad_permutation(tmp_path):
    (tmp_path / "r.json").write_text(json.dumps(
        {"schema_version": 1, "layers": [{"name": "x", "out_perm": [0, 0], "in_perm": [0, 1]}]}))
    with pytest.raises(ValidationError):
        read_report(tmp_path / "r.json")


def test_sweep_report_reload(tmp_path):
    rep = recovery_sweep(50, sizes=[8], g_values=[2, 4], ns_values=[0, 2], base_seed=3)
    write_report(RunReport(["bench", "sweep"], [3], extra=rep.to_dict()), tmp_path / "s.json")
    back = read_report(tmp_path / "s.json")
    for e in back.extra["entries"]:
        assert sum(e["histogram"]) == e["samples"] == 50


def test_grouped_and_sparse_exports_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    w = rng.standard_normal((8, 8, 1, 1)).astype(np.float32).astype(np.float64)
    p = PermutationPair(rng.permutation(8), rng.permutation(8))
    e = export_grouped(w, p, 4)
    back = read_grouped_export(write_grouped_export(tmp_path, "l", e))
    assert back.perms == p and all(np.array_equal(a, b) for a, b in zip(back.blocks, e.blocks))
    s = export_sparse(w, prune_mask(8, 8, 4, p))
    sb = read_sparse_export(write_sparse_export(tmp_path, "l", s))
    assert np.array_equal(sb.to_dense(), s.to_dense())
