import csv
import json

import pytest

from robust_wsrm.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, load_config, main, ConfigError

BASE = {
    "network": {"B": 1, "users_per_bs": [2], "T": 3, "sigma2": 1.0, "snr_db": 10.0, "weights": None},
    "uncertainty": {"type": "box", "rho": 0.05},
    "algorithm": {"max_iters": 50, "tol_obj": 1e-4, "eps_t": 1e-3, "seed": 0, "restarts": 2},
    "sampling": {"n_samples": 30, "n_repeats": 2, "n_trials": 500, "n_eval": 200},
}


def write_cfg(tmp_path, name="cfg.json", **override):
    cfg = json.loads(json.dumps(BASE))
    for dotted, value in override.items():
        sec, key = dotted.split("__")
        if value is None:
            del cfg[sec][key]
        else:
            cfg[sec][key] = value
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_solve_writes_monotone_history(tmp_path):
    out = tmp_path / "sol.json"
    assert main(["solve", write_cfg(tmp_path), "--method", "robust1", "--out", str(out)]) == EXIT_OK
    sol = json.loads(out.read_text())
    h = sol["history"]
    assert sol["converged"] and len(h) == sol["iterations"]
    assert all(b >= a - 1e-6 for a, b in zip(h, h[1:]))
    assert sol["objective"] == pytest.approx(h[-1])


def test_solve_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["solve", cfg, "--method", "robust2", "--out", str(a)])
    main(["solve", cfg, "--method", "robust2", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_zero_rho_robust_matches_nonrobust(tmp_path):
    cfg = write_cfg(tmp_path, uncertainty__rho=0.0)
    outs = {}
    for m in ("nonrobust", "robust2"):
        p = tmp_path / f"{m}.json"
        assert main(["solve", cfg, "--method", m, "--out", str(p)]) == EXIT_OK
        outs[m] = json.loads(p.read_text())["objective"]
    assert outs["robust2"] == pytest.approx(outs["nonrobust"], rel=1e-3)


def test_missing_field_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, network__users_per_bs=None)
    assert main(["solve", cfg]) == EXIT_CONFIG
    assert "network.users_per_bs" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="uncertainty.rho"):
        load_config(write_cfg(tmp_path, "b.json", uncertainty__rho=None))


def test_unknown_method_is_config_error(tmp_path):
    assert main(["solve", write_cfg(tmp_path), "--method", "magic"]) == EXIT_CONFIG
    assert main(["sweep", write_cfg(tmp_path), "--methods", "zf,magic"]) == EXIT_CONFIG


def test_infeasible_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, uncertainty__rho=2.0, algorithm__restarts=1)
    assert main(["solve", cfg, "--method", "robust2-lfj", "--out", str(tmp_path / "x.json")]) == EXIT_INFEASIBLE


def test_sweep_csv_deterministic(tmp_path):
    cfg = write_cfg(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", cfg, "--values", "0.02:0.06:0.02", "--methods", "nonrobust,robust1,zf", "--n-seeds", "2"]
    assert main(args + ["--out", str(a)]) == EXIT_OK
    main(args + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(a.open()))
    assert len(rows) == 3 * 3 * 2
    assert {r["value"] for r in rows} == {"0.02", "0.04", "0.06"}


def test_pe_table_structure(tmp_path):
    out = tmp_path / "pe.csv"
    assert main(["pe-table", write_cfg(tmp_path), "--methods", "nonrobust,robust1", "--ratios", "1,4",
                 "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert [(r["method"], r["ratio"]) for r in rows] == [("nonrobust", "1.0"), ("nonrobust", "4.0"),
                                                        ("robust1", "1.0"), ("robust1", "4.0")]
    robust = {r["ratio"]: float(r["pe"]) for r in rows if r["method"] == "robust1"}
    assert robust["1.0"] == 1.0 and robust["4.0"] <= 1.0


def test_cdf_and_rho_commands(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "cdf.csv"
    assert main(["cdf", cfg, "--methods", "nonrobust,zf", "--thin", "50", "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    last = [r for r in rows if r["method"] == "zf"][-1]
    assert float(last["cdf"]) == 1.0
    out = tmp_path / "rho.csv"
    assert main(["rho-for-pe", cfg, "--sigma", "0.05", "--tol", "0.05", "--out", str(out)]) == EXIT_OK
    (row,) = list(csv.DictReader(out.open()))
    assert row["method"] == "robust1" and float(row["pe"]) >= 0.8
