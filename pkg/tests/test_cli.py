import math
import subprocess
import sys

import numpy as np
import pytest

from diracmech import cli
from diracmech import io as tio
from diracmech import svgplot
from diracmech.errors import ConfigError


def run(capsys, *argv):
    code = cli.run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def value(text, key):
    for line in text.splitlines():
        if line.startswith(key + " = "):
            return float(line.split("=", 1)[1].split()[0])
    raise KeyError(key)


class TestSimulate:
    def test_roller_racer(self, capsys, tmp_path):
        path = tmp_path / "rr.csv"
        code, out, _ = run(capsys, "simulate", "--system", "roller-racer", "--T", "10", "--h", "1e-3", "--out", str(path))
        assert code == 0
        header, data = tio.read_table(str(path))
        assert data.shape[0] == 10001
        assert header[:5] == ["t", "q1", "q2", "q3", "q4"]
        assert value(out, "energy_drift") < 1e-8

    def test_lc_frequency(self, capsys, tmp_path):
        code, out, _ = run(capsys, "simulate", "--system", "lc-circuit", "--T", "20", "--out", str(tmp_path / "lc.csv"))
        assert code == 0
        assert value(out, "zero_crossing_frequency") == pytest.approx(math.sqrt(1.5), rel=1e-6)

    @pytest.mark.parametrize("flags", [("--h", "0"), ("--T", "-1"), ("--h", "2", "--T", "1"), ("--param", "m1=0"), ("--param", "mass=1"), ("--init", "psi")])
    def test_bad_configuration(self, capsys, tmp_path, flags):
        code, _, err = run(capsys, "simulate", "--system", "roller-racer", "--out", str(tmp_path / "x.csv"), *flags)
        assert code == 2 and err.startswith("error:")

    def test_singular(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--system", "point-vortex", "--T", "1", "--out", str(tmp_path / "pv.csv"))
        assert code == 3 and "linear_velocity_diagnostic" in err

    def test_inconsistent_state(self, capsys, tmp_path):
        code, _, _ = run(capsys, "simulate", "--system", "lc-circuit", "--init", "q_ell=9", "--out", str(tmp_path / "x.csv"))
        assert code == 2

    def test_blow_up(self, capsys, tmp_path):
        # psi released far from upright makes the verbatim tilt metric degenerate
        code, _, err = run(capsys, "simulate", "--system", "bicycle", "--init", "psi=0.2", "--T", "5", "--out", str(tmp_path / "b.csv"))
        assert code in (3, 4), err

    def test_config_file_under_flags(self, capsys, tmp_path):
        cfg = tmp_path / "rr.ini"
        cfg.write_text("[system]\nname = roller-racer\nT = 0.5\nh = 0.01\n\n[initial]\nv_theta = 0.25\n")
        path = tmp_path / "rr.csv"
        code, _, _ = run(capsys, "simulate", "--config", str(cfg), "--h", "0.05", "--out", str(path))
        assert code == 0
        _, data = tio.read_table(str(path))
        assert data.shape[0] == 11
        np.testing.assert_allclose(data[:, 7], 0.25, rtol=1e-6)

    def test_config_system_conflict(self, capsys, tmp_path):
        cfg = tmp_path / "lc.ini"
        cfg.write_text("[system]\nname = lc-circuit\n")
        code, _, err = run(capsys, "simulate", "--system", "roller-racer", "--config", str(cfg))
        assert code == 2 and "conflicts" in err

    def test_byte_identical(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            assert run(capsys, "simulate", "--system", "bicycle", "--T", "0.5", "--h", "0.01", "--out", str(p))[0] == 0
        assert a.read_bytes() == b.read_bytes()


class TestHJCheck:
    def test_roller_racer_passes(self, capsys):
        code, out, _ = run(capsys, "hj-check", "--system", "roller-racer", "--T", "1")
        assert code == 0 and out.rstrip().endswith("PASS (tol 1e-09)")

    def test_perturbed_fails(self, capsys):
        code, out, _ = run(capsys, "hj-check", "--system", "roller-racer", "--T", "1", "--perturb", "0.1")
        assert code == 1
        failed = out.strip().splitlines()[-1]
        assert failed.startswith("FAIL") and "dhj_residual" in failed

    def test_lc_holonomic(self, capsys, tmp_path):
        report = tmp_path / "lc.txt"
        code, out, _ = run(capsys, "hj-check", "--system", "lc-circuit", "--out", str(report))
        assert code == 0
        assert value(out, "holonomic_energy_residual") < 1e-9
        assert report.read_text() in out

    def test_nh_toy(self, capsys):
        assert run(capsys, "hj-check", "--system", "nh-toy")[0] == 0
        assert run(capsys, "hj-check", "--system", "nh-toy", "--perturb", "0.1")[0] == 1

    def test_no_solution(self, capsys):
        code, _, err = run(capsys, "hj-check", "--system", "bicycle")
        assert code == 2 and "available" in err

    def test_loose_tolerance(self, capsys):
        assert run(capsys, "hj-check", "--system", "lc-circuit", "--perturb", "1e-3", "--tol", "1")[0] == 0


class TestReduce:
    def test_roller_racer(self, capsys, tmp_path):
        prefix = tmp_path / "rr"
        code, out, _ = run(capsys, "reduce", "--system", "roller-racer", "--T", "1", "--out", str(prefix))
        assert code == 0
        assert value(out, "reduction_vs_direct_gap") < 1e-6
        header, data = tio.read_table(f"{prefix}-reduced.csv")
        assert header == ["t", "q3", "q4", "v3", "v4", "pbar1", "pbar2", "energy"]
        assert data.shape == (1001, 8)
        _, full = tio.read_table(f"{prefix}-reconstructed.csv")
        assert full.shape[0] == 1001

    def test_flat_toy_exact(self, capsys, tmp_path):
        code, out, _ = run(capsys, "reduce", "--system", "flat-toy", "--init", "v_y=0.5", "--T", "2", "--h", "0.01", "--out", str(tmp_path / "ft"))
        assert code == 0 and value(out, "reduction_vs_direct_gap") < 1e-12

    def test_bicycle(self, capsys, tmp_path):
        code, out, _ = run(capsys, "reduce", "--system", "bicycle", "--T", "1", "--h", "1e-2", "--out", str(tmp_path / "b"))
        assert code == 0 and value(out, "max_constraint_residual") < 1e-9

    def test_no_symmetry(self, capsys, tmp_path):
        assert run(capsys, "reduce", "--system", "lc-circuit", "--out", str(tmp_path / "lc"))[0] == 2


class TestPlot:
    def test_two_rows_one_segment(self, capsys, tmp_path):
        csv = tmp_path / "two.csv"
        csv.write_text("t,a\n0,1\n1,2\n")
        svg = tmp_path / "two.svg"
        assert run(capsys, "plot", str(csv), "--columns", "a", "--out", str(svg))[0] == 0
        text = svg.read_text()
        assert text.count("<polyline") == 1
        points = text.split('points="')[1].split('"')[0].split()
        assert len(points) == 2

    def test_missing_column(self, capsys, tmp_path):
        csv = tmp_path / "two.csv"
        csv.write_text("t,a\n0,1\n1,2\n")
        code, _, err = run(capsys, "plot", str(csv), "--columns", "a,b", "--out", str(tmp_path / "x.svg"))
        assert code == 2 and "b" in err
        assert not (tmp_path / "x.svg").exists()

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "plot", str(tmp_path / "none.csv"), "--columns", "a", "--out", str(tmp_path / "x.svg"))[0] == 2

    def test_byte_stable(self, capsys, tmp_path):
        csv = tmp_path / "lc.csv"
        assert run(capsys, "simulate", "--system", "lc-circuit", "--T", "5", "--h", "0.01", "--out", str(csv))[0] == 0
        outs = []
        for name in ("a.svg", "b.svg"):
            assert run(capsys, "plot", str(csv), "--columns", "q1,q2", "--out", str(tmp_path / name))[0] == 0
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]
        assert outs[0].count(b"<polyline") == 2


class TestModuleEntryPoint:
    def test_help(self):
        res = subprocess.run([sys.executable, "-m", "diracmech", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "hj-check" in res.stdout


class TestTableIO:
    def test_roundtrip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        cols = [rng.normal(size=7), rng.normal(size=(7, 2)) * 1e-300, np.array([math.pi, 1 / 3, -0.0, 1e308, 5e-324, 2.0, 7.0])]
        path = tmp_path / "t.csv"
        tio.atomic_write_text(str(path), tio.table_text(["a", "b", "c", "d"], cols))
        header, data = tio.read_table(str(path))
        assert header == ["a", "b", "c", "d"]
        np.testing.assert_array_equal(data, np.column_stack(cols))

    def test_header_mismatch(self):
        with pytest.raises(ValueError):
            tio.table_text(["a"], [np.zeros(3), np.zeros(3)])

    def test_trajectory_header(self):
        assert tio.trajectory_header(2, 1) == ["t", "q1", "q2", "v1", "v2", "p1", "p2", "lambda1", "energy", "constraint_residual"]

    def test_reduced_header(self):
        assert tio.reduced_header((2, 3, 4), 3) == ["t", "q3", "q4", "q5", "v3", "v4", "v5", "pbar1", "pbar2", "pbar3", "energy"]

    def test_atomic_write_replaces(self, tmp_path):
        path = tmp_path / "sub" / "f.txt"
        tio.atomic_write_text(str(path), "one")
        tio.atomic_write_text(str(path), "two")
        assert path.read_text() == "two"
        assert [p.name for p in path.parent.iterdir()] == ["f.txt"]

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,a\n0,x\n")
        with pytest.raises(ConfigError):
            tio.read_table(str(path))


class TestSvg:
    def test_viewport_and_legend(self):
        svg = svgplot.line_chart([0.0, 1.0, 2.0], {"q<1>": [0.0, 1.0, 0.0]})
        assert svg.startswith('<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600"')
        assert "q&lt;1&gt;" in svg
        assert svg.endswith("</svg>\n")

    def test_constant_series(self):
        svg = svgplot.line_chart([0.0, 1.0], {"c": [2.0, 2.0]})
        pts = svg.split('points="')[1].split('"')[0].split()
        assert pts[0].split(",")[1] == pts[1].split(",")[1]

    def test_extremes_map_to_plot_frame(self):
        svg = svgplot.line_chart([0.0, 1.0], {"a": [-1.0, 1.0]})
        pts = [tuple(map(float, p.split(","))) for p in svg.split('points="')[1].split('"')[0].split()]
        L, T = svgplot.LEFT, svgplot.TOP
        assert pts == [(L, svgplot.HEIGHT - svgplot.BOTTOM), (svgplot.WIDTH - svgplot.RIGHT, T)]
