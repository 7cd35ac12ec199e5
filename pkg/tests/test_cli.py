import json
import subprocess
import sys

import pytest

from esharing import cases, cli
from esharing.errors import Infeasible
from esharing.scenario_io import dump_scenario


@pytest.fixture
def fixture_file(tmp_path):
    path = tmp_path / "two_f5.json"
    dump_scenario(cases.two_prosumer_line(5.0), path)
    return str(path)


@pytest.fixture
def chain_file(tmp_path):
    path = tmp_path / "chain.json"
    dump_scenario(cases.three_bus_chain(1.0, (1.0, 1.0, 0.0), 0.27), path)
    return str(path)


def test_gne_report(fixture_file):
    report, code = cli.run_command(["gne", fixture_file])
    assert code == 0
    assert report.command == "gne"
    assert len(report.digest) == 16
    assert report.results["p_bar"] == pytest.approx([105.0, 195.0])
    assert report.results["b_bar"] == pytest.approx([10.5, 30.6])
    assert report.residuals["clearing_price_gap"] <= 1e-6
    assert report.residuals["price_structure"] <= 1e-6


def test_validate_report(fixture_file):
    report, code = cli.run_command(["validate", fixture_file])
    assert code == 0
    assert report.results["ok"]
    assert report.results["radial"]
    assert report.residuals["ptdf_oracle_gap"] <= 1e-12


def test_clear_command(fixture_file):
    report, code = cli.run_command(["clear", fixture_file,
                                    "--bids", "10.5,30.6"])
    assert code == 0
    assert report.results["prices"] == pytest.approx([1.55, 2.56])
    assert report.residuals["clearing_kkt"] <= 1e-8


def test_social_selfsuff_poa(fixture_file):
    social, code = cli.run_command(["social", fixture_file])
    assert code == 0
    assert social.results["p_tilde"] == pytest.approx([105.0, 195.0])
    selfsuff, code = cli.run_command(["selfsuff", fixture_file])
    assert code == 0
    assert selfsuff.results["total"] == pytest.approx(456.0)
    poa, code = cli.run_command(["poa", fixture_file])
    assert code == 0
    assert poa.results["poa_value"] >= 1.0


def test_ve_command(fixture_file):
    report, code = cli.run_command(["ve", fixture_file])
    assert code == 0
    assert report.results["radial"]


def test_bid_command_with_trace(fixture_file, tmp_path):
    trace = str(tmp_path / "trace.csv")
    report, code = cli.run_command(["bid", fixture_file, "--eps", "1e-4",
                                    "--trace", trace])
    assert code == 0
    assert report.results["iterations"] <= 50
    assert report.results["fejer_monotone"]
    assert report.results["gap_to_equilibrium"] <= 1e-3
    header = open(trace).readline().strip()
    assert header == "iter,i,lambda,b,p,delta_b_norm,dist_to_eqm"


def test_bid_non_convergence_exit_code(fixture_file, capsys):
    report, code = cli.run_command(["bid", fixture_file, "--eps", "1e-14",
                                    "--max-iter", "2"])
    assert report is None
    assert code == 3
    assert "converge" in capsys.readouterr().err


def test_brlab_verify(chain_file):
    report, code = cli.run_command(["brlab", chain_file,
                                    "--verify", "1.6,1.6,0.8"])
    assert code == 0
    assert report.results["is_gne"] is False
    assert report.results["best_bids"][1] == pytest.approx(1.535, abs=1e-3)


def test_brlab_scan_csv(chain_file, tmp_path):
    out = str(tmp_path / "scan.csv")
    report, code = cli.run_command(["brlab", chain_file, "--prosumer", "2",
                                    "--fix-bids", "1.6,1.6,0.8",
                                    "--csv", out])
    assert code == 0
    assert len(report.results["local_minima"]) == 2
    assert open(out).readline().strip() == "b,cost"


def test_brlab_classify(tmp_path):
    path = tmp_path / "pair.json"
    dump_scenario(cases.equal_pair(1.0, (1.0, 0.5), 0.1), path)
    report, code = cli.run_command(["brlab", str(path), "--classify-2bus"])
    assert code == 0
    assert report.results["regime"] == "multiple-upper"
    assert report.results["b2_interval"] == pytest.approx([1.2, 1.6])


def test_brlab_mode_required(chain_file, capsys):
    report, code = cli.run_command(["brlab", chain_file])
    assert report is None and code == 1
    assert "usage error" in capsys.readouterr().err


def test_bad_file_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    report, code = cli.run_command(["gne", str(bad)])
    assert report is None and code == 1
    report, code = cli.run_command(["gne", str(tmp_path / "missing.json")])
    assert report is None and code == 1
    capsys.readouterr()


def test_usage_error_exit_code(capsys):
    report, code = cli.run_command(["frobnicate"])
    assert report is None and code == 1
    capsys.readouterr()


def test_infeasible_maps_to_exit_2(fixture_file, monkeypatch, capsys):
    def boom(scenario):
        raise Infeasible("forced")

    monkeypatch.setattr(cli.equilibrium, "improved_gne", boom)
    report, code = cli.run_command(["gne", fixture_file])
    assert report is None and code == 2
    assert "infeasible" in capsys.readouterr().err


def test_gen_command_is_deterministic(tmp_path):
    a = str(tmp_path / "a.json")
    b = str(tmp_path / "b.json")
    _, code_a = cli.run_command(["gen", "--seed", "3", "--size", "5",
                                 "-o", a])
    _, code_b = cli.run_command(["gen", "--seed", "3", "--size", "5",
                                 "-o", b])
    assert code_a == code_b == 0
    assert open(a, "rb").read() == open(b, "rb").read()
    report, code = cli.run_command(["gne", a])
    assert code == 0


def test_gen_respects_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    report, code = cli.run_command(["gen", "--seed", "4", "--size", "4"])
    assert code == 0
    expected = tmp_path / "generated_seed4_size4.json"
    assert expected.exists()
    assert report.results["path"] == str(expected)


def test_batch_command(tmp_path):
    scen_dir = tmp_path / "scens"
    scen_dir.mkdir()
    dump_scenario(cases.two_prosumer_line(5.0), scen_dir / "a.json")
    dump_scenario(cases.two_prosumer_line(10.0), scen_dir / "b.json")
    (scen_dir / "broken.json").write_text("{]")
    out_dir = tmp_path / "reports"
    report, code = cli.run_command(["batch", "--dir", str(scen_dir),
                                    "--out", str(out_dir)])
    assert code == 1  # one file failed
    assert report.results["evaluated"] == 3
    assert report.results["failures"] == 1
    assert (out_dir / "a.report.json").exists()
    assert (out_dir / "b.report.json").exists()
    assert not list(out_dir.glob("*.tmp"))
    doc = json.loads((out_dir / "a.report.json").read_text())
    assert doc["results"]["p_bar"] == pytest.approx([105.0, 195.0])


def test_render_formats(fixture_file):
    report, _ = cli.run_command(["selfsuff", fixture_file])
    as_json = cli.render_report(report, "json")
    doc = json.loads(as_json)
    assert doc["results"]["total"] == pytest.approx(456.0)
    as_csv = cli.render_report(report, "csv")
    lines = as_csv.splitlines()
    assert lines[0] == "key,value"
    row = dict(line.split(",", 1) for line in lines[1:])
    assert float(row["results.total"]) == pytest.approx(456.0)


def test_main_prints_report(fixture_file, capsys):
    code = cli.main(["selfsuff", fixture_file])
    assert code == 0
    out = capsys.readouterr().out
    assert json.loads(out)["results"]["total"] == pytest.approx(456.0)


def test_module_entry_point(fixture_file):
    proc = subprocess.run([sys.executable, "-m", "esharing", "gne",
                           fixture_file], capture_output=True, text=True)
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert doc["results"]["p_bar"] == pytest.approx([105.0, 195.0])
