"""End-to-end CLI tests: commands, artifacts, exit codes."""

import json
import math
from pathlib import Path

import pytest

from bellctx.cli import main
from bellctx.harness import CountsTable, read_event_log
from bellctx.kolmogorov import optimal_settings
from bellctx.models import QuantumModel, model_tables, tables_to_json
from bellctx.quantum import photon_pair_state

CONFIGS = Path(__file__).parent.parent / "src" / "bellctx" / "configs"


def write_quick_config(tmp_path: Path, base: str = "chsh_quantum.cfg",
                       trials: int = 20_000, **overrides) -> Path:
    """Copy a bundled config with a smaller trial count for test speed."""
    text = (CONFIGS / base).read_text()
    lines = []
    for line in text.splitlines():
        key = line.split("=")[0].strip() if "=" in line else None
        if key == "trials":
            line = f"trials = {trials}"
        if key in overrides:
            line = f"{key} = {overrides.pop(key)}"
        lines.append(line)
    for key, value in overrides.items():
        lines.append(f"{key} = {value}")
    path = tmp_path / base
    path.write_text("\n".join(lines) + "\n")
    return path


class TestSimulate:
    def test_quantum_run_writes_all_artifacts(self, tmp_path, capsys):
        config = write_quick_config(tmp_path, trials=200_000,
                                    **{"kc.exhaustive_limit": 8})
        assert main(["simulate", str(config), "--out-dir", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "S        = +2.8" in out
        report = json.loads((tmp_path / "chsh_quantum_report.json").read_text())
        assert report["report"]["estimates"]["s"] == pytest.approx(2 * math.sqrt(2), abs=0.05)
        assert report["report"]["exact"]["s"] == pytest.approx(2 * math.sqrt(2), abs=1e-10)
        assert report["report"]["kc"]["n_atoms"] == 16
        assert "wall_clock_seconds" in report["meta"]
        header, records = read_event_log(tmp_path / "chsh_quantum_events.jsonl")
        assert header["master_seed"] == 42
        assert len(records) == 200_000
        counts = CountsTable.from_csv((tmp_path / "chsh_quantum_counts.csv").read_text())
        assert counts == CountsTable.from_records(records, 2, 2)

    def test_lhv_uniform_run_near_zero(self, tmp_path):
        config = write_quick_config(tmp_path, "chsh_lhv_uniform.cfg", trials=100_000,
                                    **{"kc.exhaustive_limit": 8})
        assert main(["simulate", str(config), "--out-dir", str(tmp_path), "--quiet"]) == 0
        report = json.loads((tmp_path / "chsh_lhv_report.json").read_text())
        estimates = report["report"]["estimates"]
        assert abs(estimates["s"]) <= 5 * estimates["s_se"]

    def test_malformed_config_exits_2_without_artifacts(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("model.kind = quantum\ntrials = not_a_number\n")
        assert main(["simulate", str(bad), "--out-dir", str(tmp_path)]) == 2
        assert not list(tmp_path.glob("*.jsonl"))
        assert not list(tmp_path.glob("*.json"))

    def test_invalid_model_exits_3(self, tmp_path):
        config = write_quick_config(tmp_path, **{"model.state": "bogus"})
        assert main(["simulate", str(config), "--out-dir", str(tmp_path)]) == 3

    def test_seed_override_and_quiet(self, tmp_path, capsys):
        config = write_quick_config(tmp_path, trials=5000,
                                    **{"kc.exhaustive_limit": 8})
        assert main(["simulate", str(config), "--out-dir", str(tmp_path),
                     "--seed", "7", "--quiet"]) == 0
        assert capsys.readouterr().out == ""
        report = json.loads((tmp_path / "chsh_quantum_report.json").read_text())
        assert report["report"]["config"]["seed"] == 7

    def test_byte_identical_reports_across_workers(self, tmp_path):
        report_bytes = {}
        logs = {}
        for workers in (1, 8):
            out = tmp_path / f"w{workers}"
            out.mkdir()
            config = write_quick_config(out, trials=50_000, workers=workers,
                                        chunk_size=4096,
                                        **{"kc.exhaustive_limit": 8})
            assert main(["simulate", str(config), "--out-dir", str(out), "--quiet"]) == 0
            payload = json.loads((out / "chsh_quantum_report.json").read_text())
            report_bytes[workers] = json.dumps(payload["report"], sort_keys=True)
            logs[workers] = (out / "chsh_quantum_events.jsonl").read_bytes()
        assert report_bytes[1] == report_bytes[8]
        assert logs[1] == logs[8]

    def test_json_format_prints_report(self, tmp_path, capsys):
        config = write_quick_config(tmp_path, trials=2000,
                                    **{"kc.exhaustive_limit": 8})
        assert main(["simulate", str(config), "--out-dir", str(tmp_path),
                     "--format", "json"]) == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["counts"]["n_total"] == 2000

    def test_out_dir_env_var_is_honored(self, tmp_path, monkeypatch):
        target = tmp_path / "from_env"
        monkeypatch.setenv("BELLCTX_OUT_DIR", str(target))
        config = write_quick_config(tmp_path, trials=2000,
                                    **{"kc.exhaustive_limit": 8})
        assert main(["simulate", str(config), "--quiet"]) == 0
        assert (target / "chsh_quantum_report.json").exists()


class TestKcVerify:
    def test_quantum_config_passes_and_prints_landmarks(self, tmp_path, capsys):
        config = write_quick_config(tmp_path, **{"kc.exhaustive_limit": 8})
        assert main(["kc-verify", str(config), "--out-dir", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "mixed space: 16 atoms, OK" in out
        assert "+2.8284271247" in out
        assert "+0.7071067812" in out
        report = json.loads((tmp_path / "kc_report.json").read_text())
        assert report["report"]["s_global_times_4"] == pytest.approx(2 * math.sqrt(2))
        for entry in report["report"]["contexts"].values():
            assert entry["report"]["additivity_ok"]

    def test_lhv_config_also_verifies(self, tmp_path):
        config = write_quick_config(tmp_path, "chsh_lhv_uniform.cfg",
                                    **{"kc.exhaustive_limit": 8})
        assert main(["kc-verify", str(config), "--out-dir", str(tmp_path), "--quiet"]) == 0
        report = json.loads((tmp_path / "kc_report.json").read_text())
        assert report["report"]["mixed_space"]["report"]["additivity_ok"]
        assert report["report"]["s"] == pytest.approx(0.0, abs=1e-12)


class TestGleasonCheck:
    def test_dim3_defaults_pass(self, tmp_path, capsys):
        assert main(["gleason-check", "--dim", "3", "--n-contexts", "200",
                     "--seed", "5", "--out-dir", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "gleason_dim3.json").read_text())
        assert report["report"]["additivity"]["passed"]
        assert report["report"]["trace_form_fit"]["recovery_max_error"] <= 1e-8
        assert report["report"]["extravalence"]["passed"]

    def test_dim2_reports_counterexample_contrast(self, tmp_path, capsys):
        assert main(["gleason-check", "--dim", "2", "--n-contexts", "200",
                     "--seed", "5", "--out-dir", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "dimension >= 3" in out
        report = json.loads((tmp_path / "gleason_dim2.json").read_text())
        assert report["report"]["counterexample"]["additivity"]["passed"]
        assert report["report"]["counterexample"]["fit_residual"] > 0.01

    def test_dim1_is_an_error(self, tmp_path):
        assert main(["gleason-check", "--dim", "1", "--out-dir", str(tmp_path)]) == 2

    def test_state_file_round_trip(self, tmp_path):
        from bellctx.quantum import maximally_mixed, operator_to_json
        state_path = tmp_path / "state.json"
        state_path.write_text(json.dumps(operator_to_json(maximally_mixed(3).matrix)))
        assert main(["gleason-check", "--dim", "3", "--n-contexts", "50",
                     "--state", str(state_path), "--out-dir", str(tmp_path),
                     "--quiet"]) == 0


class TestLhvBound:
    def test_bound_and_vertices(self, capsys):
        assert main(["lhv-bound"]) == 0
        out = capsys.readouterr().out
        assert "2" in out.splitlines()[0]
        assert sum(1 for line in out.splitlines() if line.strip().startswith("a(")) == 8

    def test_quantum_tables_diagnosed_nonlocal(self, tmp_path, capsys):
        spec = optimal_settings()
        tables = model_tables(QuantumModel(photon_pair_state(),
                                           spec.alice_angles, spec.bob_angles))
        path = tmp_path / "tables.json"
        path.write_text(tables_to_json(tables))
        assert main(["lhv-bound", str(path)]) == 0
        assert "nonlocal: violates CHSH, S = 2.8284" in capsys.readouterr().out

    def test_signalling_tables_distinct_diagnosis(self, tmp_path, capsys):
        from bellctx.models import SignallingModel
        path = tmp_path / "tables.json"
        path.write_text(tables_to_json(model_tables(SignallingModel())))
        assert main(["lhv-bound", str(path)]) == 0
        assert "ill-posed: signalling" in capsys.readouterr().out

    def test_bad_tables_file_exits_2(self, tmp_path):
        path = tmp_path / "tables.json"
        path.write_text("{not json")
        assert main(["lhv-bound", str(path)]) == 2


class TestPlot:
    def test_quantum_sweep_peaks_at_tsirelson(self, tmp_path, capsys):
        config = write_quick_config(tmp_path)
        assert main(["plot", str(config), "sweep.svg", "--out-dir", str(tmp_path),
                     "--mc-trials", "2000"]) == 0
        out = capsys.readouterr().out
        assert "2.8284" in out
        svg = (tmp_path / "sweep.svg").read_text()
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert "http" not in svg.replace("http://www.w3.org/2000/svg", "")

    def test_lhv_sweep_stays_within_local_bound(self, tmp_path, capsys):
        config = write_quick_config(tmp_path, "chsh_lhv_uniform.cfg")
        assert main(["plot", str(config), "lhv.svg", "--out-dir", str(tmp_path),
                     "--mc-trials", "2000"]) == 0
        peak = float(capsys.readouterr().out.rsplit(":", 1)[1].rstrip(")\n"))
        assert peak <= 2.0 + 1e-9

    def test_empty_sweep_range_exits_2(self, tmp_path):
        config = write_quick_config(tmp_path)
        assert main(["plot", str(config), "x.svg", "--out-dir", str(tmp_path),
                     "--sweep-points", "1"]) == 2
        assert main(["plot", str(config), "x.svg", "--out-dir", str(tmp_path),
                     "--sweep-start", "1.0", "--sweep-stop", "1.0"]) == 2
        assert not (tmp_path / "x.svg").exists()
