"""Full pipeline: compute_volume and the command-line entry point."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from volumetrica.bodies import Cube, Polytope, Simplex
from volumetrica.pipeline import VolumeReport, cli_main, compute_volume
from volumetrica.verify import brute_force_volume


def skewed_box(scales):
    s = np.asarray(scales, dtype=float)
    n = len(s)
    A = np.vstack([np.eye(n), -np.eye(n)])
    b = np.concatenate([s, s])
    return Polytope(A, b, inner_radius=float(s.min()),
                    outer_radius=float(np.linalg.norm(s)))


class TestComputeVolume:
    def test_cube4(self):
        rep = compute_volume(Cube(4), eps=0.1, seed=3)
        assert abs(rep.volume - 16.0) <= 1.6
        assert rep.volume == pytest.approx(math.exp(rep.log_volume))
        assert rep.body_kind == "cube"
        assert rep.dim == 4

    def test_simplex5(self):
        rep = compute_volume(Simplex(5), eps=0.1, seed=4)
        assert rep.volume == pytest.approx(1.0 / 120.0, rel=0.1)

    def test_skewed_box(self):
        body = skewed_box([1.0, 30.0, 1.0])
        rep = compute_volume(body, eps=0.15, seed=5)
        assert rep.volume == pytest.approx(8.0 * 30.0, rel=0.15)
        # rounding must have squeezed the long axis into the determinant
        assert rep.log_abs_det < 0

    def test_matches_independent_oracle(self):
        body = skewed_box([0.5, 2.0])
        rep = compute_volume(body, eps=0.1, seed=6)
        lo, hi = body.axis_bounds()
        v_mc, se = brute_force_volume(body, lo, hi, 200_000,
                                      np.random.default_rng(0))
        assert abs(rep.volume - v_mc) <= 0.1 * v_mc + 3.0 * se

    def test_query_accounting_exact(self):
        body = Cube(3)
        before = body.query_counter
        rep = compute_volume(body, eps=0.2, seed=7)
        assert rep.queries_total == body.query_counter - before
        assert rep.queries_total == rep.queries_round + rep.queries_volume
        assert rep.queries_round > 0 and rep.queries_volume > 0

    def test_trace_sink_collects_rows(self):
        sink = []
        compute_volume(Cube(3), eps=0.2, seed=8, trace_sink=sink)
        assert len(sink) == 1  # one formatted block per run

    def test_deterministic_given_seed(self):
        a = compute_volume(Cube(3), eps=0.2, seed=9)
        b = compute_volume(Cube(3), eps=0.2, seed=9)
        assert a.to_text(include_timing=False) == b.to_text(include_timing=False)
        c = compute_volume(Cube(3), eps=0.2, seed=10)
        assert c.volume != a.volume


class TestReport:
    def test_key_order_stable(self):
        rep = compute_volume(Cube(2), eps=0.2, seed=11)
        data = json.loads(rep.to_text())
        assert list(data.keys()) == list(VolumeReport._KEYS) + ["wall_time_s"]
        assert "wall_time_s" not in rep.to_text(include_timing=False)

    def test_image_inner_radius_positive(self):
        rep = compute_volume(Cube(3), eps=0.2, seed=12)
        assert rep.image_inner_radius > 0


def write_cube_file(path, n=3, h=1.0):
    path.write_text(f"cube\n{n} {h}\n")
    return str(path)


class TestCli:
    def test_volume_subcommand(self, tmp_path, capsys):
        body = write_cube_file(tmp_path / "cube.txt")
        out = tmp_path / "report.json"
        code = cli_main(["volume", "--body", body, "--eps", "0.2",
                         "--seed", "1", "--out", str(out)])
        assert code == 0
        data = json.loads(out.read_text())
        assert abs(data["volume"] - 8.0) <= 1.6

    def test_round_subcommand(self, tmp_path):
        body = tmp_path / "poly.txt"
        # box [-1,1] x [-10,10] with its inner ball declared
        body.write_text("polytope\n4 2\n"
                        "1 0 1\n-1 0 1\n0 1 10\n0 -1 10\n"
                        "inner 0 0 1\n")
        out = tmp_path / "round.txt"
        code = cli_main(["round", "--body", str(body), "--out", str(out)])
        assert code == 0
        text = out.read_text()
        assert text.startswith("T\n")
        eig_line = [ln for ln in text.splitlines()
                    if ln.startswith("cov_eigenvalues")][0]
        ev = np.array([float(v) for v in eig_line.split()[1:]])
        assert ev.max() / ev.min() <= 2.5

    def test_sample_subcommand(self, tmp_path):
        body = write_cube_file(tmp_path / "cube.txt", n=2)
        out = tmp_path / "samples.csv"
        code = cli_main(["sample", "--body", body, "--n", "500",
                         "--out", str(out)])
        assert code == 0
        X = np.loadtxt(out, delimiter=",")
        assert X.shape[0] >= 500 and X.shape[1] == 2
        assert np.all(np.abs(X) <= 1.0 + 1e-9)

    def test_trace_output(self, tmp_path):
        body = write_cube_file(tmp_path / "cube.txt", n=2)
        trace = tmp_path / "trace.txt"
        code = cli_main(["volume", "--body", body, "--eps", "0.2",
                         "--out", str(tmp_path / "r.json"),
                         "--trace", str(trace)])
        assert code == 0
        assert trace.exists()

    def test_missing_file_exit1(self, tmp_path, capsys):
        code = cli_main(["volume", "--body", str(tmp_path / "nope.txt")])
        assert code == 1
        assert "not found" in capsys.readouterr().err

    def test_malformed_file_exit1_with_line(self, tmp_path, capsys):
        body = tmp_path / "bad.txt"
        body.write_text("polytope\n2 2\n1 0 1\n-1 zero 1\n")
        code = cli_main(["volume", "--body", str(body)])
        assert code == 1
        err = capsys.readouterr().err
        assert "line" in err

    def test_invariant_violation_exit2(self, tmp_path, capsys):
        body = tmp_path / "lying.txt"
        # declared inner ball radius 5 fits the outer bound but not the box
        body.write_text("polytope\n4 2\n"
                        "1 0 1\n-1 0 1\n0 1 10\n0 -1 10\n"
                        "inner 0 0 5\n")
        code = cli_main(["volume", "--body", str(body)])
        assert code == 2
        assert "failure" in capsys.readouterr().err

    def test_cli_entry_point_runs(self, tmp_path):
        body = write_cube_file(tmp_path / "cube.txt", n=2)
        proc = subprocess.run(
            [sys.executable, "-m", "volumetrica.pipeline", "volume",
             "--body", body, "--eps", "0.2"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["dim"] == 2

    def test_determinism_across_processes(self, tmp_path):
        body = write_cube_file(tmp_path / "cube.txt", n=2)
        outs = []
        for _ in range(2):
            proc = subprocess.run(
                [sys.executable, "-m", "volumetrica.pipeline", "volume",
                 "--body", body, "--eps", "0.2", "--seed", "3"],
                capture_output=True, text=True)
            assert proc.returncode == 0
            lines = [ln for ln in proc.stdout.splitlines()
                     if "wall_time_s" not in ln]
            outs.append("\n".join(lines))
        assert outs[0] == outs[1]
