import filecmp
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from flowstab import io_csv
from flowstab.cli import main

SMALL = """
[domain]
nx = 16
ny = 16

[bases]
M = 3
N_gal = 6
M_t = 3

[physics]
nu = 0.05
lam = 1.0

[synthesis]
T = 8.0
dt_R = 0.02

[simulation]
T_sim = 4.0
dt = 5e-3
dt_reduced = 2e-3
snapshot_stride = 200
ic_amplitude = 0.5
ic_kappa_amplitude = 0.2

[openloop]
K = 2

[picard]
T = 1.5
"""


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    p = d / "small.ini"
    p.write_text(SMALL)
    return str(p)


@pytest.fixture(scope="module")
def synth_dir(small_cfg, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("artifacts"))
    rc = main(["synthesize", "--config", small_cfg, "--out", out])
    assert rc == 0
    return out


class TestMatrixCSV:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        M = rng.standard_normal((7, 5)) * np.pi
        path = str(tmp_path / "m.csv")
        io_csv.write_matrix(path, M)
        back = io_csv.read_matrix(path)
        assert np.array_equal(M, back)

    def test_header_format(self, tmp_path):
        path = str(tmp_path / "m.csv")
        io_csv.write_matrix(path, np.eye(2))
        first = open(path).readline().strip()
        assert first == "# 2 2"


class TestSynthesize:
    def test_artifacts_present(self, synth_dir):
        assert os.path.exists(os.path.join(synth_dir, "gain", "index.json"))
        assert os.path.exists(os.path.join(synth_dir, "eig", "meta.json"))
        assert os.path.exists(os.path.join(synth_dir, "basis", "xi.csv"))
        summary = io_csv.read_json(os.path.join(synth_dir, "synthesis.json"))
        assert summary["N_gal"] == 6
        assert float(summary["feedback_norm_bound"]) > 0

    def test_gain_reload_bit_exact(self, synth_dir, small_cfg):
        from flowstab.config import load_config
        from flowstab.pipeline import load_synthesis
        cfg = load_config(small_cfg)
        setup = load_synthesis(cfg, synth_dir)
        x = np.linspace(-1, 1, setup.gain.n_x)
        k = np.linspace(0.5, -0.5, setup.gain.n_k)
        out1 = setup.gain.feedback(1.234, x, k)
        setup2 = load_synthesis(cfg, synth_dir)
        out2 = setup2.gain.feedback(1.234, x, k)
        assert np.array_equal(out1, out2)

    def test_stale_hash_refused(self, synth_dir, small_cfg, tmp_path):
        from flowstab.config import load_config
        from flowstab.pipeline import load_synthesis
        other = tmp_path / "other.ini"
        other.write_text(SMALL.replace("lam = 1.0", "lam = 1.5"))
        cfg = load_config(str(other))
        with pytest.raises(io_csv.StaleArtifact, match="re-run synthesize"):
            load_synthesis(cfg, synth_dir)


class TestSimulate:
    def test_reduced_mode(self, small_cfg, synth_dir):
        rc = main(["simulate", "--config", small_cfg, "--mode", "reduced",
                   "--out", synth_dir])
        assert rc == 0
        meta = io_csv.read_json(os.path.join(synth_dir, "run_reduced", "run.json"))
        assert "fitted_decay_rate" in meta
        assert float(meta["fitted_decay_rate"]) > 0.45

    def test_linear_mode(self, small_cfg, synth_dir):
        rc = main(["simulate", "--config", small_cfg, "--mode", "linear",
                   "--out", synth_dir])
        assert rc == 0
        meta = io_csv.read_json(os.path.join(synth_dir, "run_linear", "run.json"))
        assert meta["status"] == "ok"
        assert float(meta["fitted_decay_rate"]) > 0.40

    def test_nonlinear_mode_records_status(self, small_cfg, synth_dir):
        rc = main(["simulate", "--config", small_cfg, "--mode", "nonlinear",
                   "--out", synth_dir])
        assert rc == 0
        meta = io_csv.read_json(os.path.join(synth_dir, "run_nonlinear", "run.json"))
        assert meta["status"] in ("ok", "diverged")

    def test_picard_mode(self, small_cfg, synth_dir):
        rc = main(["simulate", "--config", small_cfg, "--mode", "picard",
                   "--out", synth_dir])
        assert rc == 0
        meta = io_csv.read_json(os.path.join(synth_dir, "run_picard", "run.json"))
        assert float(meta["picard_vs_nonlinear"]) < 1e-6

    def test_missing_cache_is_instructive(self, small_cfg, tmp_path):
        rc = main(["simulate", "--config", small_cfg, "--mode", "reduced",
                   "--out", str(tmp_path / "empty")])
        assert rc == 2

    def test_openloop_mode_self_assembles(self, small_cfg, tmp_path):
        out = str(tmp_path / "ol")
        rc = main(["simulate", "--config", small_cfg, "--mode", "openloop",
                   "--out", out])
        assert rc == 0
        table = open(os.path.join(out, "run_openloop", "intervals.csv")).read()
        assert table.startswith("# n,rho")
        assert len(table.strip().splitlines()) == 3  # header + K rows

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[physics]\nlam = 0\n")
        rc = main(["simulate", "--config", str(bad), "--mode", "reduced",
                   "--out", str(tmp_path)])
        assert rc == 1


class TestVerify:
    def test_appendix_suite(self, small_cfg, tmp_path):
        out = str(tmp_path / "v")
        rc = main(["verify", "--config", small_cfg, "--suite", "appendix",
                   "--out", out])
        assert rc == 0
        rep = io_csv.read_json(os.path.join(out, "verify_appendix.json"))
        assert rep["passed"] is True
        names = {c["name"] for c in rep["checks"]}
        assert "appendix.kernel_cosine" in names
        assert "appendix.commutation" in names

    def test_basis_suite(self, small_cfg, tmp_path):
        rc = main(["verify", "--config", small_cfg, "--suite", "basis",
                   "--out", str(tmp_path / "v2")])
        assert rc == 0


def _run_cli(args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "flowstab", *args],
                          capture_output=True, text=True, env=env)


class TestDeterminism:
    def test_repeated_synthesize_byte_identical(self, small_cfg, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        for out in (out1, out2):
            r = _run_cli(["synthesize", "--config", small_cfg, "--out", out,
                          "--deterministic"])
            assert r.returncode == 0, r.stderr
        for sub in ("gain", "eig", "basis"):
            d1, d2 = os.path.join(out1, sub), os.path.join(out2, sub)
            cmp = filecmp.dircmp(d1, d2)
            assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
            for name in cmp.common_files:
                assert open(os.path.join(d1, name), "rb").read() == \
                    open(os.path.join(d2, name), "rb").read()

    def test_repeated_simulate_byte_identical(self, small_cfg, tmp_path):
        out = str(tmp_path / "sim")
        r = _run_cli(["synthesize", "--config", small_cfg, "--out", out,
                      "--deterministic"])
        assert r.returncode == 0, r.stderr
        series = []
        for _ in range(2):
            r = _run_cli(["simulate", "--config", small_cfg, "--mode", "reduced",
                          "--out", out, "--deterministic"])
            assert r.returncode == 0, r.stderr
            series.append(open(os.path.join(out, "run_reduced", "series.csv"),
                               "rb").read())
        assert series[0] == series[1]

    def test_env_out_dir_override(self, small_cfg, tmp_path):
        out = str(tmp_path / "env_out")
        r = _run_cli(["synthesize", "--config", small_cfg],
                     env_extra={"FLOWSTAB_OUT": out})
        assert r.returncode == 0, r.stderr
        assert os.path.exists(os.path.join(out, "synthesis.json"))
