import json
import subprocess
import sys

import numpy as np
import pytest

from latentgeo import io
from latentgeo.cli import main
from latentgeo.datasets import circle_data, flat_model
from latentgeo.gp import LatentModel
from latentgeo.kernel import KernelParams


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    io.write_csv(d / "circle.csv", [f"y{j + 1}" for j in range(10)], circle_data())
    assert main(["fit", str(d / "circle.csv"), "-q", "2", "-o", str(d / "circle.json")]) == 0
    io.save_model(d / "flat.json", flat_model())
    return d


def endpoints(work, i, j):
    X = io.load_model(work / "circle.json").X
    return ",".join(repr(float(v)) for v in X[i]), ",".join(repr(float(v)) for v in X[j])


class TestFit:
    def test_prints_summary(self, work, capsys):
        code, out, _ = run(capsys, "fit", work / "circle.csv", "-q", 2, "-o", work / "again.json")
        assert code == 0
        fields = dict(line.split(": ") for line in out.strip().splitlines())
        assert fields["N"] == "60" and fields["p"] == "10" and fields["q"] == "2"
        assert float(fields["avg_training_error"]) > 0
        assert np.isfinite(float(fields["log_likelihood"]))

    def test_byte_identical(self, work, capsys):
        run(capsys, "fit", work / "circle.csv", "-o", work / "again.json")
        assert (work / "again.json").read_bytes() == (work / "circle.json").read_bytes()

    def test_matches_library_fit(self, work, circle_model):
        assert np.array_equal(io.load_model(work / "circle.json").X, circle_model.X)

    def test_empty_file(self, work, capsys):
        (work / "empty.csv").write_text("")
        code, _, err = run(capsys, "fit", work / "empty.csv", "-o", work / "x.json")
        assert code == 2 and "empty" in err

    def test_malformed_line_number(self, work, capsys):
        (work / "bad.csv").write_text("1,2,3\n4,5,6\n7,oops,9\n")
        code, _, err = run(capsys, "fit", work / "bad.csv", "-q", 1, "-o", work / "x.json")
        assert code == 2 and ":3:" in err

    def test_q_not_below_p(self, work, capsys):
        (work / "small.csv").write_text("1,2\n3,4\n5,7\n")
        code, _, err = run(capsys, "fit", work / "small.csv", "-q", 2, "-o", work / "x.json")
        assert code == 2


class TestGeodesic:
    def test_flat_model_straight(self, work, capsys):
        code, out, _ = run(capsys, "geodesic", work / "flat.json", "--from", "0,0", "--to", "3,4",
                           "--curve", work / "flat_curve.csv")
        assert code == 0
        doc = json.loads(out)
        assert doc["length"] == pytest.approx(5.0, abs=1e-10) and doc["converged"]
        nodes = np.array(doc["nodes"])
        np.testing.assert_allclose(nodes, np.outer(doc["params"], [3.0, 4.0]), atol=1e-8)
        assert (work / "flat_curve.csv").read_text().splitlines()[0] == "t,x1,x2"

    def test_compare_straight_and_oracle(self, work, capsys):
        a, b = endpoints(work, 0, 30)
        code, _, _ = run(capsys, "geodesic", work / "circle.json", f"--from={a}", f"--to={b}", "--compare-straight",
                         "--oracle", "-o", work / "geo.json", "--out-samples", work / "samples.csv",
                         "--curve", work / "curve.csv")
        assert code == 0
        doc = json.loads((work / "geo.json").read_text())
        assert doc["length"] < doc["straight_length"]
        assert doc["oracle"]["rel_gap"] < 0.05
        assert len(doc["profiles"]["geodesic"]) == len(doc["profiles"]["straight"]) == 50
        assert max(doc["profiles"]["geodesic"]) < max(doc["profiles"]["straight"])
        curve = io.read_matrix_csv(work / "curve.csv")
        np.testing.assert_array_equal(curve[:, 1:], np.array(doc["nodes"]))

    def test_reconstruct_matches_profile(self, work, capsys):
        doc = json.loads((work / "geo.json").read_text())
        code, _, _ = run(capsys, "reconstruct", work / "circle.json", work / "samples.csv", "-o", work / "recon.csv")
        assert code == 0
        model = io.load_model(work / "circle.json")
        R = io.read_matrix_csv(work / "recon.csv")
        Y = model.Y + model.Y_mean
        nn = np.sqrt(((R[:, None] - Y[None]) ** 2).sum(-1).min(axis=1))
        np.testing.assert_array_equal(nn, np.array(doc["profiles"]["geodesic"]))

    def test_byte_identical(self, work, capsys):
        a, b = endpoints(work, 5, 25)
        for name in ("g1.json", "g2.json"):
            run(capsys, "geodesic", work / "circle.json", f"--from={a}", f"--to={b}", "-o", work / name)
        assert (work / "g1.json").read_bytes() == (work / "g2.json").read_bytes()

    @pytest.mark.parametrize("frm", ["0,0,0", "a,b", "1"])
    def test_bad_endpoint(self, work, capsys, frm):
        code, _, _ = run(capsys, "geodesic", work / "circle.json", "--from", frm, "--to", "1,1")
        assert code == 2


class TestMfGrid:
    def test_two_by_two(self, work, capsys):
        code, _, _ = run(capsys, "mf-grid", work / "circle.json", "--resolution", 2, "-o", work / "mf.csv")
        assert code == 0
        lines = (work / "mf.csv").read_text().splitlines()
        assert lines[0] == "x1,x2,mf" and len(lines) == 5
        assert np.all(io.read_matrix_csv(work / "mf.csv")[:, 2] > 0)

    def test_near_less_than_far(self, work, capsys):
        model = io.load_model(work / "circle.json")
        ell = model.params.lengthscale
        lo, hi = model.X.min(0) - 5 * ell, model.X.max(0) + 5 * ell
        bounds = ",".join(repr(float(v)) for v in (lo[0], hi[0], lo[1], hi[1]))
        code, _, _ = run(capsys, "mf-grid", work / "circle.json", f"--bounds={bounds}", "--resolution", "60,50",
                         "-o", work / "mf_big.csv")
        assert code == 0
        T = io.read_matrix_csv(work / "mf_big.csv")
        assert T.shape == (3000, 3)
        d = np.min(np.linalg.norm(T[:, None, :2] - model.X[None], axis=2), axis=1)
        assert T[d < 0.5 * ell, 2].mean() < T[d > 3 * ell, 2].mean()

    def test_requires_q2(self, work, capsys):
        m = LatentModel(np.arange(9.0).reshape(3, 3), np.ones((3, 4)), KernelParams(), np.zeros(4))
        io.save_model(work / "q3.json", m)
        code, _, err = run(capsys, "mf-grid", work / "q3.json", "-o", work / "x.csv")
        assert code == 2 and "q=2" in err

    def test_bad_bounds(self, work, capsys):
        code, _, _ = run(capsys, "mf-grid", work / "circle.json", "--bounds", "0,1,2", "-o", work / "x.csv")
        assert code == 2


class TestReconstruct:
    def test_interpolation_limit(self, work, capsys):
        X = 4.0 * np.arange(5, dtype=float)[:, None] * np.array([[1.0, 0.3]])
        Y = np.random.default_rng(0).normal(size=(5, 3))
        io.save_model(work / "sharp.json", LatentModel(X, Y, KernelParams(beta=1e6), np.full(3, 2.0)))
        io.write_points_csv(work / "train_pts.csv", X)
        code, _, _ = run(capsys, "reconstruct", work / "sharp.json", work / "train_pts.csv", "-o", work / "r.csv")
        assert code == 0
        assert np.abs(io.read_matrix_csv(work / "r.csv") - (Y + 2.0)).max() < 1e-3

    def test_single_row(self, work, capsys):
        (work / "one.csv").write_text("0.1,0.2\n")
        run(capsys, "reconstruct", work / "circle.json", work / "one.csv", "-o", work / "r1.csv")
        assert io.read_matrix_csv(work / "r1.csv").shape == (1, 10)

    def test_dimension_mismatch(self, work, capsys):
        (work / "three.csv").write_text("0.1,0.2,0.3\n")
        code, _, _ = run(capsys, "reconstruct", work / "circle.json", work / "three.csv", "-o", work / "r.csv")
        assert code == 2


class TestVerify:
    def test_circle_passes_and_is_reproducible(self, work, capsys):
        code, out, _ = run(capsys, "verify", work / "circle.json", "--seed", 0, "-o", work / "v1.json")
        assert code == 0
        run(capsys, "verify", work / "circle.json", "--seed", 0, "-o", work / "v2.json")
        assert (work / "v1.json").read_bytes() == (work / "v2.json").read_bytes()
        report = json.loads((work / "v1.json").read_text())
        assert report["all_pass"]
        assert set(report["checks"]) == {"fd_jacobian", "fd_metric_derivative", "mc_expected_metric", "grid_geodesic"}
        for check in report["checks"].values():
            assert "tolerance" in check and check["pass"]

    def test_nan_model(self, work, capsys):
        doc = json.loads((work / "circle.json").read_text())
        doc["X"][3][1] = float("nan")
        (work / "nan.json").write_text(io.dumps(doc))
        code, _, err = run(capsys, "verify", work / "nan.json")
        assert code == 2 and "non-finite" in err

    def test_failing_check_exit_code(self, work, capsys, monkeypatch):
        import latentgeo.cli as cli

        monkeypatch.setattr(cli, "verify_model", lambda *a, **k: {"checks": {}, "all_pass": False})
        code, _, _ = run(capsys, "verify", work / "circle.json")
        assert code == 1


class TestSampleMetric:
    def test_seeded_identical(self, work, capsys):
        outs = [run(capsys, "sample-metric", work / "circle.json", "--at", "0.1,0.2", "-n", 5, "--seed", 9)[1]
                for _ in range(2)]
        assert outs[0] == outs[1]
        doc = json.loads(outs[0])
        S = np.array(doc["samples"])
        assert S.shape == (5, 2, 2) and np.array_equal(S, S.transpose(0, 2, 1))
        assert outs[0] != run(capsys, "sample-metric", work / "circle.json", "--at", "0.1,0.2", "-n", 5,
                              "--seed", 10)[1]

    def test_bad_count(self, work, capsys):
        assert run(capsys, "sample-metric", work / "circle.json", "--at", "0,0", "-n", 0)[0] == 2


def test_console_entry_point(work):
    proc = subprocess.run([sys.executable, "-m", "latentgeo", "geodesic", str(work / "missing.json"),
                           "--from", "0,0", "--to", "1,1"], capture_output=True, text=True)
    assert proc.returncode == 2 and "error" in proc.stderr


def test_numerical_failure_exit_code(work, capsys, monkeypatch):
    import latentgeo.cli as cli
    from latentgeo.errors import NumericalError

    def boom(*a, **k):
        raise NumericalError("metric is not positive definite")
    monkeypatch.setattr(cli, "solve_geodesic_bvp", boom)
    code, _, err = run(capsys, "geodesic", work / "circle.json", "--from", "0,0", "--to", "1,1")
    assert code == 1 and "numerical" in err
