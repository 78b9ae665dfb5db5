"""Sweep orchestration, CSV output, verification suite, CLI."""

import csv
import json
import math

import numpy as np
import pytest

import amtrl.cli
from amtrl.harness import (
    CSV_HEADER,
    ConfigError,
    SweepConfig,
    cmd_gen,
    cmd_nu_solve,
    cmd_run,
    cmd_verify,
    config_from_dict,
    loglog_slope,
    make_instance,
    read_rows_csv,
    reference_nu,
    run_sweep,
    summarize,
)


def _small_cfg(tmp_path, **over):
    base = dict(
        instance={"kind": "random", "d": 6, "k": 2, "T": 4,
                  "sigma_z": 0.1, "seed": 0},
        strategies=("passive", "known_nu_q1"),
        budgets=(200, 400),
        seeds=3,
        n_target=200,
        out_dir=str(tmp_path),
    )
    base.update(over)
    return SweepConfig(**base)


def test_csv_header_is_stable():
    assert CSV_HEADER == ("strategy", "seed", "N_tot", "N_floor", "ER",
                          "subspace_dist", "nu_l1", "support", "status",
                          "wall_ms")


def test_sweep_config_validation():
    good = dict(instance={"kind": "random", "d": 4, "k": 2, "T": 3,
                          "sigma_z": 0.1},
                strategies=("passive",), budgets=(100,))
    SweepConfig(**good)
    with pytest.raises(ConfigError):
        SweepConfig(**{**good, "strategies": ()})
    with pytest.raises(ConfigError):
        SweepConfig(**{**good, "strategies": ("huh",)})
    with pytest.raises(ConfigError):
        SweepConfig(**{**good, "budgets": (100, 100)})
    with pytest.raises(ConfigError):
        SweepConfig(**{**good, "seeds": 0})
    with pytest.raises(ConfigError):
        SweepConfig(**{**good, "lambda_policy": "explicit"})
    with pytest.raises(ConfigError):
        SweepConfig(**{**good, "instance": "nope"})


def test_config_from_dict():
    raw = {"instance": {"kind": "random", "d": 4, "k": 2, "T": 3,
                        "sigma_z": 0.1},
           "strategies": ["passive"], "budgets": [100],
           "lambda_policy": "explicit", "lambda": 0.5}
    cfg = config_from_dict(raw)
    assert cfg.lambda_value == 0.5
    with pytest.raises(ConfigError):
        config_from_dict({**raw, "bogus": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"strategies": ["passive"]})


def test_make_instance_kinds_and_file(tmp_path):
    gt = make_instance({"kind": "random", "d": 5, "k": 2, "T": 4,
                        "sigma_z": 0.2, "seed": 1})
    assert (gt.d, gt.k, gt.T) == (5, 2, 4)
    gt2 = make_instance({"kind": "almost_sparse", "d": 5, "k": 2, "T": 6,
                         "sigma_z": 0.2})
    assert "reference_nu" in gt2.meta
    gt3 = make_instance({"kind": "aligned_worstcase", "d": 5, "k": 2,
                         "T": 6, "c_w": 1.5})
    assert gt3.meta["kind"] == "aligned_worstcase"
    cfg = _small_cfg(tmp_path)
    path = cmd_gen(cfg, out_dir=str(tmp_path))
    gt4 = make_instance({"file": path})
    np.testing.assert_array_equal(gt4.W_star,
                                  make_instance(cfg.instance).W_star)
    with pytest.raises(ConfigError):
        make_instance({"kind": "huh"})
    with pytest.raises(ConfigError):
        make_instance({"kind": "random", "d": 5})


def test_reference_nu_sources():
    gt = make_instance({"kind": "almost_sparse", "d": 6, "k": 2, "T": 5,
                        "sigma_z": 0.1})
    np.testing.assert_allclose(reference_nu(gt, 1), gt.meta["reference_nu"])
    np.testing.assert_allclose(reference_nu(gt, 2), gt.meta["reference_nu"])
    gt2 = make_instance({"kind": "random", "d": 6, "k": 2, "T": 5,
                         "sigma_z": 0.1})
    nu1, nu2 = reference_nu(gt2, 1), reference_nu(gt2, 2)
    assert np.abs(nu1).sum() <= np.abs(nu2).sum() + 1e-9
    np.testing.assert_allclose(gt2.W_star @ nu1, gt2.w_target_star,
                               atol=1e-8)


def test_sweep_row_counts_and_files(tmp_path):
    cfg = _small_cfg(tmp_path)
    rows, summary = run_sweep(cfg)
    assert len(rows) == 2 * 2 * 3  # strategies x budgets x seeds
    assert len(summary) == 2 * 2
    on_disk = read_rows_csv(tmp_path / "runs.csv")
    assert len(on_disk) == 12
    assert list(on_disk[0].keys()) == list(CSV_HEADER)
    assert (tmp_path / "summary.csv").exists()
    for s in cfg.strategies:
        lines = (tmp_path / f"plot_{s}.dat").read_text().strip().splitlines()
        assert lines[0].startswith("#")
        assert len(lines) == 1 + 2  # header + one point per budget


def _rows_without_wall(path):
    rows = read_rows_csv(path)
    return [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]


def test_sweep_deterministic_across_reruns(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    run_sweep(_small_cfg(d1), out_dir=str(d1))
    run_sweep(_small_cfg(d2), out_dir=str(d2))
    assert _rows_without_wall(d1 / "runs.csv") == \
        _rows_without_wall(d2 / "runs.csv")
    assert (d1 / "summary.csv").read_bytes() == \
        (d2 / "summary.csv").read_bytes()


def test_sweep_thread_count_does_not_change_results(tmp_path, monkeypatch):
    d1, d2 = tmp_path / "serial", tmp_path / "par"
    monkeypatch.setenv("AMTRL_THREADS", "1")
    run_sweep(_small_cfg(d1), out_dir=str(d1))
    monkeypatch.setenv("AMTRL_THREADS", "3")
    run_sweep(_small_cfg(d2), out_dir=str(d2))
    assert _rows_without_wall(d1 / "runs.csv") == \
        _rows_without_wall(d2 / "runs.csv")


def test_sweep_infeasible_budget_rows_are_recorded(tmp_path):
    # first budget cannot cover T x N_floor; the row must say so instead of
    # aborting the sweep
    cfg = _small_cfg(tmp_path, strategies=("passive",), budgets=(40, 400),
                     N_floor=20, seeds=1)
    rows, summary = run_sweep(cfg)
    by_budget = {int(r["N_tot"]): r for r in rows}
    assert by_budget[40]["status"] == "infeasible"
    assert by_budget[40]["ER"] == 0.0
    assert by_budget[400]["status"] == "ok"
    # summaries skip non-ok rows
    assert all(s["N_tot"] != 40 for s in summary)


def test_summarize_and_loglog_slope():
    rows = []
    for n in (100, 1000, 10000):
        for seed, er in ((0, 2.0 / n), (1, 1.0 / n), (2, 4.0 / n)):
            rows.append({"strategy": "x", "N_tot": n, "seed": seed,
                         "ER": er, "status": "ok"})
    rows.append({"strategy": "x", "N_tot": 100, "seed": 3, "ER": 999.0,
                 "status": "infeasible"})
    summary = summarize(rows)
    assert [s["N_tot"] for s in summary] == [100, 1000, 10000]
    np.testing.assert_allclose(summary[0]["median_ER"], 2.0 / 100)
    # exact ER = 2/N power law: slope -1
    np.testing.assert_allclose(loglog_slope(summary, "x"), -1.0, atol=1e-12)
    with pytest.raises(ValueError):
        loglog_slope(summary, "missing")


def test_cmd_run_and_nu_solve(tmp_path):
    cfg = _small_cfg(tmp_path, strategies=("known_nu_q1",), budgets=(300,))
    row, path = cmd_run(cfg, out_dir=str(tmp_path))
    assert row["status"] == "ok"
    doc = json.loads((tmp_path / "run.json").read_text())
    assert doc["strategy"] == "known_nu"
    assert len(read_rows_csv(tmp_path / "run.csv")) == 1
    report = cmd_nu_solve(cfg, out_dir=str(tmp_path))
    assert report["supports"]["lp"] <= 2
    assert report["l1_norms"]["lp"] <= report["l1_norms"]["l2_solution"] + 1e-9
    assert (tmp_path / "nu.json").exists()


def test_cmd_verify_fast_passes(tmp_path):
    report, code = cmd_verify(level="fast", out_dir=str(tmp_path))
    assert code == 0 and report["all_pass"]
    names = [p["name"] for p in report["properties"]]
    assert "allocation_optimality" in names
    assert (tmp_path / "verify.json").exists()
    with pytest.raises(ConfigError):
        cmd_verify(level="huh")
    with pytest.raises(ConfigError):
        cmd_verify(tolerances={"not_a_property": 1.0})


def test_cmd_verify_reports_failure_on_impossible_tolerance():
    report, code = cmd_verify(level="fast",
                              tolerances={"lasso_matches_lp": 1e-30})
    assert code == 1 and not report["all_pass"]
    failed = [p["name"] for p in report["properties"] if not p["passed"]]
    assert failed == ["lasso_matches_lp"]


def _write_cfg(tmp_path, name="cfg.json", **over):
    raw = {
        "instance": {"kind": "random", "d": 6, "k": 2, "T": 4,
                     "sigma_z": 0.1, "seed": 0},
        "strategies": ["known_nu_q1"],
        "budgets": [300],
        "n_target": 200,
    }
    raw.update(over)
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_cli_exit_codes(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    out = str(tmp_path / "out")
    assert amtrl.cli.main(["gen", "--config", cfg_path, "--out", out]) == 0
    assert amtrl.cli.main(["run", "--config", cfg_path, "--out", out]) == 0
    assert amtrl.cli.main(["nu-solve", "--config", cfg_path,
                           "--out", out]) == 0
    assert amtrl.cli.main(["sweep", "--config", cfg_path,
                           "--out", out]) == 0
    capsys.readouterr()
    # usage and config errors: exit 2
    bad_cfg = _write_cfg(tmp_path, name="bad.json", bogus=1)
    assert amtrl.cli.main(["run", "--config", bad_cfg]) == 2
    # missing file: exit 3
    assert amtrl.cli.main(["run", "--config",
                           str(tmp_path / "missing.json")]) == 3
    capsys.readouterr()


def test_cli_verify_failure_names_property(tmp_path, capsys):
    code = amtrl.cli.main(["verify", "--level", "fast",
                           "--tolerance", "lasso_matches_lp=1e-30",
                           "--out", str(tmp_path)])
    captured = capsys.readouterr()
    assert code == 1
    assert "lasso_matches_lp" in captured.err
    report = json.loads(captured.out)
    assert not report["all_pass"]


def test_cli_rejects_malformed_tolerance(capsys):
    assert amtrl.cli.main(["verify", "--tolerance", "nonsense"]) == 2
    capsys.readouterr()
