import json
import subprocess
import sys

import pytest

from loraisac.cli import bundled_scenario, main, write_outputs
from loraisac.errors import ScenarioError
from loraisac.scenario import load_scenario, locate, parse_scenario

SMALL_SOIL = {
    "mode": "soil", "seed": 5,
    "frame": {"payload_len": 4},
    "sweep": {"snr_db": [20, None], "moisture": [0.1, 0.3], "packets_per_point": 2},
}


def write(tmp_path, obj, name="sc.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj, indent=2))
    return path


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: ")
    return json.loads(err[0][len("error: "):])


class TestParse:
    def test_unknown_key_has_line(self, tmp_path):
        text = '{\n  "mode": "soil",\n  "sweep": {\n    "moisture": [0.1],\n    "colour": 3\n  }\n}\n'
        with pytest.raises(ScenarioError) as info:
            parse_scenario(text, "x.json")
        assert info.value.line == 5 and "colour" in str(info.value)

    def test_wrong_type(self):
        with pytest.raises(ScenarioError) as info:
            parse_scenario('{"mode": "soil",\n "seed": "x", "sweep": {"moisture": [0.1]}}')
        assert info.value.line == 2

    def test_invalid_json_line(self):
        with pytest.raises(ScenarioError) as info:
            parse_scenario('{\n "mode": "soil",\n "seed": 1,,\n}')
        assert info.value.line == 3

    def test_section_not_allowed_for_mode(self):
        with pytest.raises(ScenarioError, match="not used"):
            parse_scenario('{"mode": "phy_selftest", "sweep": {}}')

    def test_module_invariant_is_anchored(self):
        text = json.dumps({"mode": "soil", "sweep": {"moisture": [0.1, 0.7]}}, indent=1)
        with pytest.raises(ScenarioError) as info:
            parse_scenario(text)
        assert info.value.line == locate(text, ("sweep", "moisture"))

    def test_locate_list_element(self):
        text = '{"network": {"nodes": [\n {"node_id": "a"},\n {"node_id": "b",\n  "mode": "x"}]}}'
        assert locate(text, ("network", "nodes", 1, "mode")) == 4

    @pytest.mark.parametrize("name", ["soil_baseline", "soil_noise_free", "soil_snr_sweep", "presence_walk_still",
                                      "network_four_nodes", "phy_selftest"])
    def test_bundled_scenarios_validate(self, name):
        assert name.startswith(load_scenario(bundled_scenario(name)).mode)


class TestRun:
    def test_soil_outputs(self, tmp_path, capsys):
        sc = write(tmp_path, SMALL_SOIL)
        assert main(["soil", "--scenario", str(sc), "--out", str(tmp_path / "o")]) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["decode_accuracy"] == 1.0 and summary["n_packets"] == 8
        header = (tmp_path / "o" / "moisture_results.csv").read_text().splitlines()[0]
        assert header.startswith("distance_m,snr_db")
        assert json.loads(capsys.readouterr().out)["n_packets"] == 8

    def test_seed_override_changes_output(self, tmp_path):
        sc = write(tmp_path, SMALL_SOIL)
        main(["soil", "--scenario", str(sc), "--out", str(tmp_path / "a")])
        main(["soil", "--scenario", str(sc), "--out", str(tmp_path / "b"), "--seed", "6"])
        a = (tmp_path / "a" / "moisture_results.csv").read_bytes()
        assert a != (tmp_path / "b" / "moisture_results.csv").read_bytes()

    def test_soil_baseline_decodes_everything(self, tmp_path):
        assert main(["soil", "--scenario", "@soil_baseline", "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "summary.json").read_text())["decode_accuracy"] == 1.0

    def test_noise_free_grid(self, tmp_path):
        assert main(["soil", "--scenario", "@soil_noise_free", "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "summary.json").read_text())["max_abs_error"] <= 1e-4

    def test_network_example(self, tmp_path):
        assert main(["network", "--scenario", "@network_four_nodes", "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["n_collisions"] == 0 and summary["delivery_ratio"] == 1.0

    def test_output_dir_from_file(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        sc = write(tmp_path, {**SMALL_SOIL, "output_dir": "from_file"})
        assert main(["soil", "--scenario", str(sc)]) == 0
        assert (tmp_path / "from_file" / "summary.json").exists()


class TestErrors:
    def test_missing_file(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["soil", "--scenario", str(tmp_path / "nope.json"), "--out", str(out)]) == 2
        assert error_line(capsys)["type"] == "ScenarioError"
        assert not out.exists()

    def test_unknown_key_exit(self, tmp_path, capsys):
        sc = write(tmp_path, '{"mode": "soil",\n"sweep": {"moisture": [0.1]},\n"bogus": 1}')
        assert main(["soil", "--scenario", str(sc), "--out", str(tmp_path / "o")]) == 2
        d = error_line(capsys)
        assert d["line"] == 3 and d["file"] == str(sc)

    def test_mode_mismatch(self, tmp_path, capsys):
        assert main(["presence", "--scenario", "@soil_baseline", "--out", str(tmp_path)]) == 2
        assert "expected 'presence'" in error_line(capsys)["message"]

    def test_low_rate_reports_required_rate(self, tmp_path, capsys):
        assert main(["presence", "--scenario", "@presence_low_rate", "--out", str(tmp_path / "o")]) == 2
        d = error_line(capsys)
        assert d["cause"] == "SamplingRateError" and d["required_rate"] == 4.0
        assert not (tmp_path / "o").exists()

    def test_overloaded_network(self, tmp_path, capsys):
        assert main(["network", "--scenario", "@network_overloaded", "--out", str(tmp_path / "o")]) == 3
        d = error_line(capsys)
        assert d["channel"] == 0 and d["demand"] == pytest.approx(2.0)

    @pytest.mark.parametrize("argv", [[], ["soil"], ["fly"], ["soil", "--scenario", "x", "--seed", "-1"]])
    def test_usage_errors(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2
        assert error_line(capsys)["type"] == "UsageError"

    def test_no_partial_outputs_on_write_failure(self, tmp_path):
        out = tmp_path / "o"
        with pytest.raises(TypeError):
            write_outputs(out, {"a.txt": "fine", "b.txt": None})
        assert list(out.iterdir()) == []


class TestSelftest:
    def test_all_pass(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[-1] == "16/16 properties passed"
        assert all(line.startswith("PASS ") for line in out[:-1])

    def test_with_scenario_and_json(self, tmp_path, capsys):
        assert main(["selftest", "--scenario", "@phy_selftest", "--out", str(tmp_path)]) == 0
        results = json.loads((tmp_path / "selftest.json").read_text())
        assert len(results) == 16 and all(r["passed"] for r in results)

    def test_console_script_entry(self):
        proc = subprocess.run([sys.executable, "-m", "loraisac.cli", "selftest"], capture_output=True, text=True)
        assert proc.returncode == 0 and "16/16" in proc.stdout
