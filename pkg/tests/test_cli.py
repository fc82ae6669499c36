from __future__ import annotations

import csv
import json

import pytest

from vmouse.cli import main


def run(argv):
    return main(argv)


class TestRobotSim:
    def test_writes_report_and_manifest(self, tmp_path, capsys):
        out = tmp_path / "rs"
        code = run(["robot-sim", "--rotate", "--positions", "20,50,80",
                    "--out", str(out)])
        assert code == 0
        rows = list(csv.DictReader((out / "equivalence.csv").open()))
        assert {r["p_percent"] for r in rows} == {"20", "50", "80"}
        fused = [r for r in rows if r["mode"] == "fused"]
        assert all(float(r["discrepancy_pct"]) < 0.1 for r in fused)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "robot-sim"
        assert "length ratio" in capsys.readouterr().out

    def test_bad_position_is_validation_error(self, tmp_path):
        code = run(["robot-sim", "--positions", "150", "--out", str(tmp_path)])
        assert code == 2


@pytest.fixture(scope="module")
def sim_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("usersim")
    code = run(["user-sim", "--duration", "20", "--seed", "5", "--out", str(out)])
    assert code == 0
    return out


class TestUserSimAnalyzeVerify:
    def test_log_written_with_manifest(self, sim_out):
        assert (sim_out / "session.log").exists()
        assert (sim_out / "manifest.json").exists()

    def test_verify_log_clean(self, sim_out, capsys):
        code = run(["verify-log", "--log", str(sim_out / "session.log")])
        assert code == 0
        assert "mismatches: 0" in capsys.readouterr().out

    def test_verify_log_detects_tampering(self, sim_out, tmp_path, capsys):
        lines = (sim_out / "session.log").read_text().splitlines()
        for i, line in enumerate(lines):
            if line[:1].isdigit():
                parts = line.split(",")
                parts[7] = str(int(parts[7]) + 3)
                lines[i] = ",".join(parts)
                break
        bad = tmp_path / "bad.log"
        bad.write_text("\n".join(lines) + "\n")
        assert run(["verify-log", "--log", str(bad)]) == 1

    def test_analyze_tapping_log(self, tmp_path):
        # a tapping run produces 16-click sessions the analyzer can rebuild
        from vmouse.arm import ArmModel, ArmSession, simulate_tapping_session
        from vmouse.analysis import TaskConfig
        from vmouse.device_io import HEADER_MAGIC, FusedQuantizer, LogRecord, encode_record
        from vmouse.fusion import CarryAccumulator, VirtualConfig

        cfg = VirtualConfig(p_percent=50, user_cpi=800)
        task = TaskConfig(d_px=300, w_px=50)
        session = ArmSession(ArmModel(), cfg, seed=2)
        log = session.capture_log()
        for _ in range(2):
            simulate_tapping_session(session, task)
        clicks = set(session.click_samples)
        quant = FusedQuantizer(50, 800)
        raw = [CarryAccumulator() for _ in range(4)]
        lines = [HEADER_MAGIC, "# p_percent=50 user_cpi=800"]
        for i, (a, b, c, d) in enumerate(log):
            ints = [acc.push(v) for acc, v in zip(raw, (a, b, c, d))]
            mx, my = quant.push(*ints)
            lines.append(encode_record(LogRecord(
                (i + 1) * 2000, 1 if i in clicks else 0, 0, *ints, mx, my)))
        path = tmp_path / "tap.log"
        path.write_text("\n".join(lines) + "\n", encoding="ascii")

        out = tmp_path / "an"
        code = run(["analyze", "--log", str(path), "--task", "D=300,W=50",
                    "--out", str(out)])
        assert code == 0
        rows = list(csv.DictReader((out / "sessions.csv").open()))
        assert len(rows) == 2
        assert all(float(r["tp"]) > 0 for r in rows)

    def test_analyze_missing_task_key(self, sim_out, tmp_path):
        code = run(["analyze", "--log", str(sim_out / "session.log"),
                    "--task", "D=300", "--out", str(tmp_path)])
        assert code == 2


class TestCalibrateOptimize:
    def test_calibrate_synthetic_converges(self, tmp_path, capsys):
        out = tmp_path / "cal"
        code = run(["calibrate", "--synthetic", "p_ref=0.4", "--seed", "7",
                    "--seconds", "120", "--out", str(out)])
        assert code == 0
        text = capsys.readouterr().out
        chosen = int(text.rsplit("chosen p:", 1)[1].strip().rstrip("%"))
        assert 30 <= chosen <= 50
        assert (out / "blocks.csv").exists()
        assert (out / "tp_vs_p.svg").exists()
        assert (out / "mae_vs_p.svg").exists()

    def test_optimize_synthetic(self, tmp_path, capsys):
        out = tmp_path / "opt"
        ckpt = out / "run.ckpt"
        code = run(["optimize", "--synthetic", "p_ref=0.4", "--seed", "3",
                    "--budget", "6", "--seconds", "30",
                    "--checkpoint", str(ckpt), "--out", str(out)])
        assert code == 0
        assert ckpt.exists()
        text = capsys.readouterr().out
        final = int(text.rsplit("final p:", 1)[1].strip().rstrip("%"))
        assert 20 <= final <= 80


class TestEmulateCommand:
    def test_emulate_to_stdout(self, capsys):
        code = run(["emulate", "--script", "SET_P 40; START; PLAY 0.5; STOP",
                    "--seed", "2"])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith("# vmouse-log v1")
        assert "# CMD SET_P 40" in out

    def test_emulate_to_file(self, tmp_path):
        path = tmp_path / "e.log"
        code = run(["emulate", "--script", "START; PLAY 0.5", "--seed", "2",
                    "--out", str(path)])
        assert code == 0
        assert path.exists()
        assert (tmp_path / "manifest.json").exists()


def test_unknown_subcommand_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
