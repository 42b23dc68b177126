import numpy as np
import pytest

from gprune.io import write_manifest, write_norm_csv, write_tensor

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0].lstrip("AC")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}: {detail}")


@pytest.fixture
def model_dir(tmp_path):
    """Manifest with three weight-backed layers and one norm-only layer."""
    rng = np.random.default_rng(2024)
    entries = []
    shapes = [("conv1", 8, 8, 3, 3, 6, 6), ("conv2", 8, 16, 1, 1, 6, 6), ("conv3", 16, 8, 3, 3, 3, 3)]
    for name, c_in, c_out, kh, kw, h, w in shapes:
        weights = rng.standard_normal((c_out, c_in, kh, kw)).astype(np.float32)
        write_tensor(tmp_path / f"{name}.gpt", weights)
        entries.append({"name": name, "c_in": c_in, "c_out": c_out, "k_h": kh, "k_w": kw,
                        "h_out": h, "w_out": w, "dtype": "float32", "data_file": f"{name}.gpt"})
    write_norm_csv(tmp_path / "ones.csv", np.ones((4, 4)))
    entries.append({"name": "ones", "c_in": 4, "c_out": 4, "k_h": 1, "k_w": 1,
                    "h_out": 1, "w_out": 1, "dtype": "float32", "norm_file": "ones.csv"})
    write_manifest(tmp_path / "model.json", entries)
    return tmp_path
