import json

import numpy as np
import pytest

from conftest import CONFIG_DIR

from submhe.cli import run_cli
from submhe.config import load_config, loads_config
from submhe.errors import ParseError, ValidationError


@pytest.fixture(scope="module")
def base_dict():
    with open(CONFIG_DIR / "case_study.json") as fh:
        return json.load(fh)


class TestLoadConfig:
    def test_case_study_values(self, case_study_doc):
        doc = case_study_doc
        assert doc.mhe["M"] == 5
        assert doc.certificate.eta == 0.8
        assert np.array_equal(doc.certificate.R, [[1.0]])
        assert np.array_equal(doc.certificate.Q, np.eye(5))
        assert doc.mhe["K"] == 652
        assert doc.gamma13_slope == 28.8
        assert doc.controller.declared_lipschitz == 2.65
        assert doc.analysis["L_Phi"] == 5.32
        assert not doc.system.x_box.is_bounded
        assert doc.system.w1_box.is_bounded

    def test_auto_iteration_budget(self, certified_doc):
        assert certified_doc.mhe["K"] == "auto"
        assert certified_doc.mhe["M"] == 9

    def test_missing_field_reports_path(self, base_dict):
        broken = json.loads(json.dumps(base_dict))
        del broken["system"]["C"]
        with pytest.raises(ValidationError) as err:
            loads_config(json.dumps(broken))
        assert err.value.path == "$.system.C"

    def test_unknown_key_rejected(self, base_dict):
        broken = json.loads(json.dumps(base_dict))
        broken["system"]["D"] = [[1.0]]
        with pytest.raises(ValidationError) as err:
            loads_config(json.dumps(broken))
        assert "unknown key" in err.value.reason

    def test_box_excluding_origin_rejected(self, base_dict):
        broken = json.loads(json.dumps(base_dict))
        broken["system"]["u_box"] = [[1.0, 2.0], [-1.0, 1.0]]
        with pytest.raises(ValidationError) as err:
            loads_config(json.dumps(broken))
        assert err.value.path == "$.system"

    def test_bound_sentinels(self, base_dict):
        doc = json.loads(json.dumps(base_dict))
        doc["system"]["y_box"] = [[None, "Infinity"]]
        loaded = loads_config(json.dumps(doc))
        assert loaded.system.y_box.lower[0] == -np.inf
        assert loaded.system.y_box.upper[0] == np.inf

    def test_bad_json_is_parse_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ParseError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_config(tmp_path / "absent.json")

    def test_round_trip_canonical(self, case_study_doc):
        text = case_study_doc.canonical_json()
        again = loads_config(text)
        assert again.canonical_json() == text
        assert again.config_hash() == case_study_doc.config_hash()

    def test_round_trip_certified(self, certified_doc):
        text = certified_doc.canonical_json()
        assert loads_config(text).canonical_json() == text

    def test_search_directive(self, base_dict):
        doc = json.loads(json.dumps(base_dict))
        doc["certificate"]["P"] = "search"
        doc["certificate"]["search_budget"] = 123
        loaded = loads_config(json.dumps(doc))
        assert loaded.certificate is None
        assert loaded.certificate_search["budget"] == 123
        text = loaded.canonical_json()
        assert loads_config(text).canonical_json() == text

    def test_nonnumber_matrix_entry(self, base_dict):
        broken = json.loads(json.dumps(base_dict))
        broken["system"]["A"][0][0] = "zero"
        with pytest.raises(ValidationError) as err:
            loads_config(json.dumps(broken))
        assert err.value.path == "$.system.A[0][0]"


class TestCli:
    def test_certify_pass(self, capsys):
        code = run_cli(["certify", "--config",
                        str(CONFIG_DIR / "case_study.json")])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["passed"] is True
        assert out["max_eigenvalue"] <= out["tol"]

    def test_certify_search_path(self, tmp_path, base_dict, capsys):
        doc = json.loads(json.dumps(base_dict))
        doc["certificate"]["P"] = "search"
        doc["certificate"]["search_budget"] = 3000
        path = tmp_path / "search.json"
        path.write_text(json.dumps(doc))
        code = run_cli(["certify", "--config", str(path)])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["searched"] is True
        assert np.linalg.eigvalsh(np.array(out["P"]))[0] > 0

    def test_analyze_k_contraction_violated(self, capsys):
        code = run_cli(["analyze-k", "--config",
                        str(CONFIG_DIR / "case_study.json")])
        err = json.loads(capsys.readouterr().err)
        assert code == 1
        assert err["error"] == "ContractionViolated"
        assert err["suggested_M"] == 9

    def test_analyze_k_certified(self, capsys, tmp_path):
        code = run_cli(["analyze-k", "--config",
                        str(CONFIG_DIR / "case_study_certified.json"),
                        "--out", str(tmp_path)])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["K_star"] >= 1
        assert out["ledger"]["small_gain"]["passed"] is True
        assert (tmp_path / "analyze_k.json").exists()
        # config-supplied scalars bypass both estimators
        assert out["meta"]["gamma13_heuristic"] is False
        assert out["meta"]["L_Phi_probed"] is False

    def test_analyze_k_estimated_scalars(self, tmp_path, base_dict, capsys):
        doc = json.loads(json.dumps(base_dict))
        doc["mhe"]["M"] = 9
        doc["controller"]["gamma13_slope"] = None
        doc["analysis"]["L_Phi"] = "probe"
        doc["analysis"]["probe_trials"] = 60
        path = tmp_path / "estimated.json"
        path.write_text(json.dumps(doc))
        code = run_cli(["analyze-k", "--config", str(path)])
        out = json.loads(capsys.readouterr().out)
        assert code == 0
        assert out["meta"]["gamma13_heuristic"] is True
        assert out["meta"]["L_Phi_probed"] is True
        assert out["ledger"]["params"]["L_phi"] >= 1.0

    def test_negative_seed_rejected(self, capsys):
        code = run_cli(["simulate", "--config",
                        str(CONFIG_DIR / "case_study.json"),
                        "--seed", "-1", "--uncertified"])
        err = json.loads(capsys.readouterr().err)
        assert code == 2
        assert err["error"] == "ValidationError"

    def test_simulate_requires_uncertified_gate(self, tmp_path, capsys):
        code = run_cli(["simulate", "--config",
                        str(CONFIG_DIR / "case_study.json"),
                        "--out", str(tmp_path)])
        err = json.loads(capsys.readouterr().err)
        assert code == 1
        assert err["error"] == "ContractionViolated"

    def test_simulate_uncertified_writes_outputs(self, tmp_path, capsys):
        code = run_cli(["simulate", "--config",
                        str(CONFIG_DIR / "case_study.json"),
                        "--out", str(tmp_path), "--uncertified",
                        "--steps", "12", "--iters", "60"])
        capsys.readouterr()
        assert code == 0
        csv = (tmp_path / "trajectory.csv").read_text()
        assert len(csv.strip().split("\n")) == 13
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["certified"] is False
        assert summary["steps"] == 12
        assert summary["K"] == 60

    def test_simulate_certified_forty_steps(self, tmp_path, capsys):
        code = run_cli(["simulate", "--config",
                        str(CONFIG_DIR / "case_study_certified.json"),
                        "--out", str(tmp_path), "--steps", "40"])
        capsys.readouterr()
        assert code == 0
        csv = (tmp_path / "trajectory.csv").read_text()
        assert len(csv.strip().split("\n")) == 41
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["certified"] is True
        assert summary["ledger"]["small_gain"]["passed"] is True

    def test_simulate_oracle_off(self, tmp_path, capsys):
        code = run_cli(["simulate", "--config",
                        str(CONFIG_DIR / "case_study.json"),
                        "--out", str(tmp_path), "--uncertified",
                        "--steps", "5", "--oracle", "off"])
        capsys.readouterr()
        assert code == 0
        lines = (tmp_path / "trajectory.csv").read_text().strip().split("\n")
        header = lines[0].split(",")
        eps_col = header.index("eps")
        for line in lines[1:]:
            assert line.split(",")[eps_col] == ""

    def test_simulate_strict_failure_exits_nonzero(self, tmp_path, base_dict,
                                                   capsys):
        doc = json.loads(json.dumps(base_dict))
        doc["mhe"]["phi_base"] = 1e-6  # impossible claimed rate
        doc["mhe"]["K"] = 1
        path = tmp_path / "strict.json"
        path.write_text(json.dumps(doc))
        code = run_cli(["simulate", "--config", str(path), "--out",
                        str(tmp_path), "--uncertified", "--strict",
                        "--steps", "6"])
        err = json.loads(capsys.readouterr().err)
        assert code == 1
        assert err["error"] == "MonitorViolation"

    def test_determinism_byte_identical(self, tmp_path, capsys):
        for sub in ("a", "b"):
            code = run_cli(["simulate", "--config",
                            str(CONFIG_DIR / "case_study.json"),
                            "--out", str(tmp_path / sub), "--uncertified",
                            "--steps", "10", "--iters", "40"])
            assert code == 0
        capsys.readouterr()
        assert (tmp_path / "a" / "trajectory.csv").read_bytes() == \
            (tmp_path / "b" / "trajectory.csv").read_bytes()

    def test_verify_subcommand(self, capsys):
        code = run_cli(["verify", "--config",
                        str(CONFIG_DIR / "case_study_certified.json")])
        out = capsys.readouterr().out
        assert code == 0
        assert "8/8 checks passed" in out

    def test_usage_errors_exit_two(self, tmp_path, capsys):
        assert run_cli(["simulate", "--config",
                        str(tmp_path / "missing.json")]) == 2
        capsys.readouterr()
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        assert run_cli(["certify", "--config", str(bad)]) == 2
        capsys.readouterr()
        assert run_cli(["bogus-subcommand"]) == 2


def test_module_entrypoint(tmp_path):
    import subprocess
    import sys
    res = subprocess.run(
        [sys.executable, "-m", "submhe.cli", "certify", "--config",
         str(CONFIG_DIR / "case_study.json")],
        capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["passed"] is True
