import json

import numpy as np
import pytest

from emsniff import budget, containers
from emsniff.cli import EXIT_ERROR, EXIT_NOT_DISCLOSED, EXIT_OK, main


def _run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr().out
    return rc, out


def test_full_scan_accounting_and_files(tmp_path, capsys):
    rc, out = _run(capsys, "full-scan", "--measure", "snr", "--traces-per-measure", "1000", "--out", str(tmp_path))
    assert rc == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["summary"]["total_traces"] == 900_000 and rep["summary"]["cells"] == 900
    assert rep["scenario"]["name"] and rep["seed"] is not None and rep["flags"]["measure"] == "snr"
    heat = containers.read_heatmap_csv(tmp_path / "heatmap.csv")
    assert heat.shape == (30, 30)
    assert (tmp_path / "heatmap.pgm").read_bytes().startswith(b"P5")


def test_full_scan_mtd_accounting(capsys):
    rc, out = _run(capsys, "full-scan", "--grid", "3", "--measure", "mtd", "--traces-per-measure", "200")
    assert rc == EXIT_OK
    assert json.loads(out)["summary"]["total_traces"] == 1800


def test_sniff_is_deterministic(capsys):
    args = ("sniff", "--grid", "10", "--seed", "3", "--measure", "tvla")
    rc1, out1 = _run(capsys, *args)
    rc2, out2 = _run(capsys, *args)
    assert rc1 == rc2 == EXIT_OK and out1 == out2
    rep = json.loads(out1)
    assert rep["disclosed"] and rep["total_traces"] == rep["search_traces"] + rep["attack"]["key_mtd"]
    assert rep["effective_step_mm"] == pytest.approx(9.0 / 10 * 2.8)


def test_sniff_not_disclosed_exit_status(capsys):
    rc, out = _run(capsys, "sniff", "--scenario", "aes8bit_masked", "--grid", "6", "--cema-cap", "100", "--traces-per-measure", "200")
    assert rc == EXIT_NOT_DISCLOSED
    assert json.loads(out)["disclosed"] is False


def test_attack_writes_trajectories(tmp_path, capsys):
    rc, _ = _run(capsys, "attack", "--cell", "19,12", "--traces", "300", "--out", str(tmp_path))
    assert rc == EXIT_OK
    rows = (tmp_path / "trajectories.csv").read_text().splitlines()
    assert rows[0].startswith("byte_index,traces,k00") and len(rows) == 1 + 16 * 6


def test_budget_monotone_and_constants_round_trip(tmp_path, capsys):
    consts = budget.BudgetConstants(4.0, 4.0, 40.0, 35.0)
    (tmp_path / "c.json").write_text(json.dumps(consts.to_dict()))
    rc, _ = _run(capsys, "budget", "--constants", str(tmp_path / "c.json"), "--out", str(tmp_path / "o"))
    assert rc == EXIT_OK
    crv = budget.read_curve_csv(tmp_path / "o" / "curve.csv")
    assert crv.snr_grid[0] == pytest.approx(1e-3) and crv.snr_grid[-1] == pytest.approx(1.0)
    for col in (crv.n_scn_tvla, crv.n_scn_snr, crv.n_exh):
        assert np.all(np.diff(col) < 0)
    assert budget.read_constants(tmp_path / "o" / "fit_report.json") == consts
    rep = json.loads((tmp_path / "o" / "budget.json").read_text())
    assert rep["crossover_snr"] == pytest.approx(budget.crossover_snr(10, consts))


def test_budget_from_fit_inputs(tmp_path, capsys):
    snrs = [0.01, 0.1, 1.0]
    doc = {"mtd": {str(s): 4 / s**2 for s in snrs}, "tvla_cost": {str(s): 40 / s for s in snrs},
           "snr_cost": {str(s): 30 / s for s in snrs}}
    (tmp_path / "in.json").write_text(json.dumps(doc))
    rc, out = _run(capsys, "budget", "--fit-inputs", str(tmp_path / "in.json"))
    assert rc == EXIT_OK
    assert json.loads(out)["constants"]["k1"] == pytest.approx(4.0)


@pytest.mark.parametrize("argv", [
    ("budget", "--constants", "missing.json"),
    ("full-scan", "--scenario", "no-such-scenario"),
    ("attack", "--cell", "30,0"),
])
def test_errors_exit_one(argv, capsys):
    assert main(list(argv)) == EXIT_ERROR


@pytest.mark.parametrize("argv", [("attack", "--cell", "x"), ("sniff", "--bogus"), ()])
def test_usage_errors_exit_one(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(list(argv))
    assert info.value.code == EXIT_ERROR


def test_empty_snr_range(tmp_path, capsys):
    consts = budget.BudgetConstants(1.0, 1.0, 1.0, 1.0)
    (tmp_path / "c.json").write_text(json.dumps(consts.to_dict()))
    assert main(["budget", "--constants", str(tmp_path / "c.json"), "--snr-min", "1", "--snr-max", "0.1"]) == EXIT_ERROR


def test_bad_scenario_reports_position(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"grid_resolution": 10,\n  oops}')
    assert main(["full-scan", "--scenario", str(tmp_path / "bad.json")]) == EXIT_ERROR
    assert "line 2" in capsys.readouterr().err
