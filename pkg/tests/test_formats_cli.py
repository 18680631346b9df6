import subprocess
import sys

import numpy as np
import pytest

from erasure_qkd.cli import main
from erasure_qkd.experiment import (
    ExperimentConfig,
    ReplayMismatch,
    load_config,
    replay,
    run_batch,
    run_experiment,
)
from erasure_qkd.formats import (
    FormatError,
    parse_key,
    parse_key_values,
    parse_transcript,
    render_key,
    render_transcript,
)
from erasure_qkd.session import ConfigError, SessionConfig, run_session


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def _summary(out):
    return parse_key_values(out, kind="summary")


class TestFormats:
    def test_transcript_round_trip(self):
        t, _, _ = run_session(SessionConfig(rounds=500, attack="intercept_resend", check_mode=True, seed=1))
        text = render_transcript(t, "erasure", {"rounds": 500})
        protocol, header, back = parse_transcript(text)
        assert protocol == "erasure" and header["rounds"] == "500"
        for name in ("source", "alice_bit", "bob_bit", "detector", "pol_tag", "kept", "clicks", "eve_basis", "eve_port"):
            assert np.array_equal(getattr(back, name), getattr(t, name))
        assert render_transcript(back, "erasure", {"rounds": 500}) == text

    def test_transcript_header_columns(self):
        t, _, _ = run_session(SessionConfig(rounds=10, seed=1))
        lines = render_transcript(t, "erasure", {}).splitlines()
        assert lines[0] == "# erasure-qkd transcript v1"
        assert lines[2].startswith("round_id,source,alice_bit,bob_bit,detector,pol_tag,kept")

    def test_key_round_trip(self):
        bits = np.random.default_rng(0).integers(0, 2, 37).astype(np.uint8)
        text = render_key(bits)
        assert text.splitlines()[1] == "length=37"
        assert text.splitlines()[2] == text.splitlines()[2].lower()
        assert np.array_equal(parse_key(text), bits)

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="line 1"):
            parse_transcript("hello\n")

    def test_bad_field_names_line(self):
        t, _, _ = run_session(SessionConfig(rounds=20, seed=1))
        lines = render_transcript(t, "erasure", {"rounds": 20}).splitlines()
        lines[5] = lines[5].replace("S1", "S9").replace("S2", "S9")
        with pytest.raises(FormatError, match="line 6"):
            parse_transcript("\n".join(lines))


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("rounds=1000\nseed=1\nattack=blinding\n")
        env = {"ERASURE_QKD_SEED": "2", "ERASURE_QKD_ATTACK": "intercept_resend"}
        c = load_config(str(cfg), {"seed": "3"}, environ=env)
        assert (c.rounds, c.attack, c.seed) == (1000, "intercept_resend", 3)
        assert load_config(str(cfg), {}, environ={}).attack == "blinding"
        assert load_config(None, {}, environ={}) == ExperimentConfig()

    def test_fraction_values(self):
        assert load_config(None, {"qber_threshold": "1/3"}, environ={}).qber_threshold == pytest.approx(1 / 3)

    @pytest.mark.parametrize("flags", [{"rounds": "0"}, {"bogus": "1"}, {"attack": "x"}, {"check_mode": "maybe"}])
    def test_invalid(self, flags):
        with pytest.raises(ConfigError):
            load_config(None, flags, environ={})


class TestRun:
    def test_honest(self, capsys, tmp_path):
        code, out = _run(capsys, "run", "--rounds", "100000", "--seed", "7", "--out-dir", str(tmp_path))
        s = _summary(out)
        assert code == 0
        assert s["sample_qber"] == "0.0" and s["sifted_qber"] == "0.0" and s["verdict"] == "proceed"
        assert s["final_keys_identical"] == "true"
        alice = parse_key((tmp_path / "alice.key").read_text())
        assert np.array_equal(alice, parse_key((tmp_path / "bob.key").read_text()))
        assert len(alice) == int(s["final_key_length"]) > 0

    def test_erasure_blinding(self, capsys):
        code, out = _run(capsys, "run", "--attack", "blinding", "--blinding-threshold", "0.9", "--seed", "7")
        s = _summary(out)
        assert code == 2 and s["verdict"] == "abort"
        assert abs(float(s["sifted_qber"]) - 1 / 3) < 0.01

    def test_bb84_blinding(self, capsys):
        code, out = _run(capsys, "run", "--protocol", "bb84", "--attack", "blinding", "--seed", "7")
        s = _summary(out)
        assert s["sifted_qber"] == "0.0" and s["sample_qber"] == "0.0"
        assert s["eve_agreement"] == "1.0"
        assert code == 0  # the QBER test passes; Eve's full information then empties the key
        assert s["final_key_length"] == "0"

    def test_config_error_exit_1_no_artifacts(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        assert main(["run", "--rounds", "0", "--out-dir", str(out_dir)]) == 1
        assert not out_dir.exists() or not any(out_dir.iterdir())
        assert "error" in capsys.readouterr().err

    def test_missing_config_file(self, capsys, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 1

    def test_artifacts_byte_identical(self, capsys, tmp_path):
        for d in ("a", "b"):
            assert main(["run", "--rounds", "20000", "--attack", "intercept_resend", "--check-mode",
                         "--seed", "5", "--out-dir", str(tmp_path / d)]) == 2
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == ["summary.txt", "transcript.csv"]
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "erasure_qkd", "--version"], capture_output=True, text=True)
        assert out.returncode == 0 and "erasure-qkd" in out.stdout


class TestCompare:
    @staticmethod
    def _table(out):
        rows = {}
        for line in out.splitlines()[1:]:
            key, a, b = line.split()
            rows[key] = (a, b)
        return rows

    def test_intercept_resend(self, capsys, tmp_path):
        (tmp_path / "a.cfg").write_text("protocol=erasure\nattack=intercept_resend\n")
        (tmp_path / "b.cfg").write_text("protocol=bb84\nattack=intercept_resend\n")
        code, out = _run(capsys, "compare", str(tmp_path / "a.cfg"), str(tmp_path / "b.cfg"), "--seed", "3")
        rows = self._table(out)
        assert code == 0
        assert abs(float(rows["sifted_qber"][0]) - 1 / 3) < 0.01
        assert abs(float(rows["sifted_qber"][1]) - 0.25) < 0.01
        assert abs(float(rows["i_alice_eve"][0]) - 0.311) < 0.001
        assert float(rows["i_alice_eve"][1]) == 0.5

    def test_blinding(self, capsys, tmp_path):
        (tmp_path / "a.cfg").write_text("attack=blinding\n")
        (tmp_path / "b.cfg").write_text("protocol=bb84\nattack=blinding\n")
        _, out = _run(capsys, "compare", str(tmp_path / "a.cfg"), str(tmp_path / "b.cfg"))
        rows = self._table(out)
        assert abs(float(rows["sifted_qber"][0]) - 1 / 3) < 0.01
        assert float(rows["sifted_qber"][1]) == 0.0

    def test_identical_configs(self, capsys, tmp_path):
        (tmp_path / "a.cfg").write_text("attack=intercept_resend\nrounds=20000\n")
        _, out = _run(capsys, "compare", str(tmp_path / "a.cfg"), str(tmp_path / "a.cfg"))
        assert all(a == b for a, b in self._table(out).values())


class TestReplay:
    @pytest.fixture(params=[("erasure", "none"), ("erasure", "intercept_resend"), ("erasure", "blinding"), ("bb84", "blinding")])
    def artifacts(self, request, tmp_path):
        protocol, attack = request.param
        main(["run", "--protocol", protocol, "--attack", attack, "--check-mode", "--rounds", "20000",
              "--seed", "13", "--out-dir", str(tmp_path)])
        return tmp_path

    def test_identical_summary(self, artifacts, capsys):
        code, out = _run(capsys, "replay", str(artifacts / "transcript.csv"))
        assert code == 0
        assert out == (artifacts / "summary.txt").read_text()

    def test_flipped_kept_flag(self, tmp_path):
        main(["run", "--rounds", "2000", "--seed", "1", "--out-dir", str(tmp_path)])
        lines = (tmp_path / "transcript.csv").read_text().splitlines()
        start = next(i for i, l in enumerate(lines) if l.startswith("round_id")) + 1
        i = next(j for j in range(start, len(lines)) if lines[j].split(",")[4])  # a round with a click
        fields = lines[i].split(",")
        fields[6] = "0" if fields[6] == "1" else "1"
        fields[7] = "0"
        lines[i] = ",".join(fields)
        text = "\n".join(lines) + "\n"
        with pytest.raises(ReplayMismatch, match=f"round {i - start}: kept"):
            replay(text)
        (tmp_path / "transcript.csv").write_text(text)
        assert main(["replay", str(tmp_path / "transcript.csv")]) == 1

    def test_tampered_summary(self, tmp_path):
        main(["run", "--rounds", "2000", "--seed", "1", "--out-dir", str(tmp_path)])
        summary = (tmp_path / "summary.txt").read_text().replace("verdict=proceed", "verdict=abort")
        with pytest.raises(ReplayMismatch, match="verdict"):
            replay((tmp_path / "transcript.csv").read_text(), summary)

    def test_truncated(self, tmp_path, capsys):
        main(["run", "--rounds", "2000", "--seed", "1", "--out-dir", str(tmp_path)])
        lines = (tmp_path / "transcript.csv").read_text().splitlines()
        cut = lines[:-500]
        cut[-1] = cut[-1][:3]
        (tmp_path / "transcript.csv").write_text("\n".join(cut) + "\n")
        assert main(["replay", str(tmp_path / "transcript.csv")]) == 1
        assert f"line {len(cut)}" in capsys.readouterr().err

    def test_truncated_on_row_boundary(self, tmp_path):
        main(["run", "--rounds", "2000", "--seed", "1", "--out-dir", str(tmp_path)])
        lines = (tmp_path / "transcript.csv").read_text().splitlines()[:-10]
        with pytest.raises(FormatError, match="truncated"):
            parse_transcript("\n".join(lines) + "\n")


class TestBatch:
    def test_serial_equals_parallel(self):
        configs = [ExperimentConfig(rounds=5000, attack=a, seed=s) for s in (1, 2) for a in ("none", "blinding")]
        assert run_batch(configs, max_workers=1) == run_batch(configs, max_workers=2)

    def test_matches_single_run(self):
        cfg = ExperimentConfig(rounds=3000, seed=4)
        assert run_batch([cfg], max_workers=1)[0] == run_experiment(cfg).artifacts()
