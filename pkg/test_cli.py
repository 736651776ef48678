import json

import numpy as np
import pandas as pd
import pytest

from config import load_config
from data_io import SourceTable, build_source, load_solution, write_solution
from errors import ConfigError, DomainError
from grid import FieldVector
import main
from main import cli
from special import exponent_table

SOLVE = {
    "n": 3, "s": 0.5, "gamma": 0.1, "N": 10,
    "domain": {"kind": "ball", "radius": 1.0},
    "f": {"kind": "constant", "value": 1.0},
}


def _write(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestSolveCommand:

    def test_solve_writes_report_and_solution(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli(["solve", "--config", str(_write(tmp_path, SOLVE)), "--output", str(out)])
        assert code == 0
        assert "[solve] OK" in capsys.readouterr().out

        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["status"] == "ok"
        assert report["config"]["gamma"] == 0.1
        assert report["result"]["residual_norm"] <= 1e-10
        assert set(report["result"]["norms"]) >= {"L1", "L2", "Linf", "rho_sq", "hardy"}
        assert "tolerances" in report

        frame = pd.read_csv(out / "solution.csv")
        assert list(frame.columns) == ["node", "x", "y", "z", "value"]
        assert (frame["value"] > 0).all()

    def test_output_independent_of_thread_count(self, tmp_path):
        config = _write(tmp_path, SOLVE)
        for threads in (1, 4):
            assert cli(["solve", "--config", str(config), "--output", str(tmp_path / f"t{threads}"),
                        "--threads", str(threads)]) == 0
        assert (tmp_path / "t1" / "solution.csv").read_bytes() == (tmp_path / "t4" / "solution.csv").read_bytes()


class TestIterateCommand:

    def test_schedule_limits_compared_in_m_double_star(self, tmp_path):
        out = tmp_path / "out"
        payload = dict(SOLVE, K=5, m=1.3)
        assert cli(["iterate", "--config", str(_write(tmp_path, payload)), "--output", str(out)]) == 0
        result = json.loads((out / "report.json").read_text(encoding="utf-8"))["result"]
        assert result["sola_exponent"] == pytest.approx(exponent_table(3, 0.5, 1.3).m_double_star)
        assert 0.0 <= result["sola_distance"] < 1.0
        assert (out / "trace.csv").is_file()

    def test_l2_comparison_without_m(self, tmp_path):
        out = tmp_path / "out"
        assert cli(["iterate", "--config", str(_write(tmp_path, dict(SOLVE, K=5))), "--output", str(out)]) == 0
        result = json.loads((out / "report.json").read_text(encoding="utf-8"))["result"]
        assert result["sola_exponent"] == 2.0


class TestConfigErrors:

    def test_sweep_above_threshold(self, tmp_path, capsys):
        gamma_m = exponent_table(3, 0.5, 1.3).gamma_m
        payload = dict(SOLVE, m=1.3, gammas=[0.0, gamma_m])
        payload.pop("gamma")
        code = cli(["sweep", "--config", str(_write(tmp_path, payload)), "--output", str(tmp_path)])
        assert code == 1
        assert "γ(m)" in capsys.readouterr().err
        assert not (tmp_path / "report.json").exists()

    def test_unknown_command(self, tmp_path, capsys):
        assert cli(["frobnicate", "--output", str(tmp_path)]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_field_named(self, tmp_path, capsys):
        payload = {k: v for k, v in SOLVE.items() if k != "gamma"}
        assert cli(["solve", "--config", str(_write(tmp_path, payload))]) == 1
        assert "'gamma'" in capsys.readouterr().err

    def test_unknown_field(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config("solve", _write(tmp_path, dict(SOLVE, colour="red")))
        assert "colour" in str(info.value)

    def test_gamma_above_hardy_constant(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config("solve", _write(tmp_path, dict(SOLVE, gamma=0.3)))

    def test_source_must_be_an_object(self, tmp_path, capsys):
        payload = dict(SOLVE, f="constant")
        assert cli(["solve", "--config", str(_write(tmp_path, payload)), "--output", str(tmp_path)]) == 1
        assert "'f'" in capsys.readouterr().err

    def test_sweep_needs_numeric_m(self, tmp_path, capsys):
        payload = dict(SOLVE, m=None, gammas=[0.0, 0.05])
        payload.pop("gamma")
        assert cli(["sweep", "--config", str(_write(tmp_path, payload)), "--output", str(tmp_path)]) == 1
        assert "'m'" in capsys.readouterr().err

    def test_non_numeric_field(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            load_config("solve", _write(tmp_path, dict(SOLVE, N="sixteen")))
        assert "'N'" in str(info.value)

    def test_missing_config_file(self, tmp_path, capsys):
        assert cli(["solve", "--config", str(tmp_path / "absent.json")]) == 1
        assert "not found" in capsys.readouterr().err


class TestEnvironment:

    def test_threads_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MLNHARDY_THREADS", "3")
        assert load_config("solve", _write(tmp_path, SOLVE)).threads == 3

    def test_flag_overrides_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MLNHARDY_THREADS", "3")
        monkeypatch.setenv("MLNHARDY_OUTPUT", str(tmp_path / "env"))
        cfg = load_config("solve", _write(tmp_path, SOLVE), output="flag", threads=2)
        assert cfg.threads == 2
        assert cfg.output == "flag"

    def test_bad_thread_count(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MLNHARDY_THREADS", "many")
        with pytest.raises(ConfigError):
            load_config("solve", _write(tmp_path, SOLVE))


class TestVerifyCommand:

    def test_suite_runs_on_configured_mesh(self, tmp_path, monkeypatch):
        seen = {}

        def fake_suite(**kwargs):
            seen.update(kwargs)
            return pd.DataFrame({"check": ["constants"], "value": [0.0], "limit": [1e-10],
                                 "passed": [True], "error": [""]})

        monkeypatch.setattr(main, "run_suite", fake_suite)
        payload = {"gamma": 0.0, "N": 10, "domain": {"kind": "box", "half_widths": 1.0}}
        out = tmp_path / "out"
        assert cli(["verify", "--config", str(_write(tmp_path, payload)), "--output", str(out)]) == 0
        assert seen["gamma"] == 0.0
        assert seen["N"] == 10
        assert seen["domain"].kind == "box"
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["config"]["gamma"] == 0.0
        assert report["config"]["N"] == 10

    def test_suite_coupling_validated(self, tmp_path, capsys):
        assert cli(["verify", "--config", str(_write(tmp_path, {"gamma": 0.3})),
                    "--output", str(tmp_path)]) == 1
        assert "Λ_n" in capsys.readouterr().err

    @pytest.mark.slow
    def test_suite_passes(self, tmp_path, capsys):
        assert cli(["verify", "--output", str(tmp_path)]) == 0
        table = pd.read_csv(tmp_path / "verify.csv")
        assert table["passed"].all(), table.loc[~table["passed"]].to_string()
        assert "[verify] OK" in capsys.readouterr().out


class TestDataFiles:

    def test_solution_round_trip_is_exact(self, small_mesh, rng, tmp_path):
        u = FieldVector(small_mesh, rng.normal(size=small_mesh.count))
        path = write_solution(u, tmp_path / "u.csv")
        assert np.array_equal(load_solution(path, small_mesh).values, u.values)

    def test_solution_from_other_mesh_rejected(self, small_mesh, ball_mesh, tmp_path):
        path = write_solution(FieldVector.zeros(small_mesh), tmp_path / "u.csv")
        with pytest.raises(DomainError):
            load_solution(path, ball_mesh)

    def test_custom_source_nearest_neighbour(self, small_mesh, tmp_path):
        frame = pd.DataFrame({"x": small_mesh.coordinates[:, 0], "y": small_mesh.coordinates[:, 1],
                              "z": small_mesh.coordinates[:, 2], "value": small_mesh.radii})
        frame.to_csv(tmp_path / "f.csv", index=False, float_format="%.17g")
        f = build_source({"kind": "custom", "path": str(tmp_path / "f.csv")}, small_mesh)
        np.testing.assert_array_equal(f.values, small_mesh.radii)

    def test_source_table_requires_value_column(self, tmp_path):
        (tmp_path / "bad.csv").write_text("x,y,z\n0,0,0\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            SourceTable(tmp_path / "bad.csv").load_csv()

    def test_power_source(self, small_mesh):
        f = build_source({"kind": "power", "beta": 1.0, "scale": 2.0}, small_mesh)
        np.testing.assert_allclose(f.values, 2.0 / small_mesh.radii)
