import csv
import json

import pytest
import yaml

import spin1qfi.sweep as sweep
from spin1qfi.cli import EXIT_CONFIG, EXIT_OK, EXIT_STRICT, main
from spin1qfi.fits import FitResult
from spin1qfi.sweep import (RECORD_COLUMNS, ConfigError, config_from_dict, read_fits,
                            read_records, run_sweep)

BASE = {
    "models": [{"model": "BLBQ", "J": 1.0, "beta": [-0.3333333333333333, 0.0]}],
    "sizes": [6, 8, 10, 12],
    "observables": ["string_z", "staggered_local_x"],
    "dmrg": {"chi_max": 24, "chi_ramp": [8, 16], "max_sweeps": 20, "energy_tol": 1e-9,
             "sector": "singlet"},
    "fits": {"default": {"family": "power"}},
    "seed": 7,
}


def _cfg(tmp_path, **changes):
    raw = {**BASE, "output": str(tmp_path / "out"), **changes}
    return config_from_dict(raw)


def _strip_time(text):
    rows = text.splitlines()
    return [",".join(r.split(",")[:-1]) for r in rows]


@pytest.mark.parametrize("changes,msg", [
    ({"observables": []}, "observables"),
    ({"sizes": [10, 8]}, "increasing"),
    ({"models": []}, "empty"),
    ({"models": [{"model": "Ising"}]}, "unknown model"),
    ({"models": [{"model": "BLBQ", "gamma": 1}]}, "coupling"),
    ({"observables": ["string_q"]}, "observable"),
    ({"fits": {"default": {"family": "cubic"}}}, "family"),
    ({"workers": 0}, "workers"),
    ({"dmrg": {"bogus": 1}}, "dmrg"),
])
def test_config_errors(tmp_path, changes, msg):
    with pytest.raises(ConfigError, match=msg):
        _cfg(tmp_path, **changes)


def test_size_ranges_and_grid(tmp_path):
    cfg = _cfg(tmp_path, sizes={"start": 12, "stop": 48, "step": 4},
               models=[{"model": "XXZ", "J_z": [0.0, 1.0], "J_xy": 1.0}])
    assert cfg.sizes == list(range(12, 49, 4))
    assert [p.J_z for p in cfg.points] == [0.0, 1.0]
    assert cfg.dmrg.seed == 7


def test_workers_env(tmp_path, monkeypatch):
    monkeypatch.setenv(sweep.WORKERS_ENV, "3")
    assert _cfg(tmp_path).workers == 3
    assert config_from_dict({**BASE}, workers=2).workers == 2


@pytest.fixture(scope="module")
def serial_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("serial")
    cfg = config_from_dict({**BASE, "output": str(out)})
    calls = []
    real = sweep.dmrg_ground_state

    def counting(*a, **k):
        calls.append(1)
        return real(*a, **k)

    sweep.dmrg_ground_state = counting
    try:
        res = run_sweep(cfg)
    finally:
        sweep.dmrg_ground_state = real
    return cfg, res, out, len(calls)


def test_one_solve_per_point_and_size(serial_run):
    cfg, res, out, n_calls = serial_run
    assert n_calls == len(cfg.points) * len(cfg.sizes)
    assert len(res.records) == n_calls * len(cfg.observables)


def test_outputs(serial_run):
    cfg, res, out, _ = serial_run
    lines = (out / "records.csv").read_text().splitlines()
    assert lines[0].startswith("# spin1qfi-records")
    rows = list(csv.reader(lines[1:]))
    assert tuple(rows[0]) == RECORD_COLUMNS
    assert all(len(r) == 10 for r in rows[1:])
    assert "e" in rows[1][3] and "e" in rows[1][6]
    recs = read_records(out / "records.csv")
    assert len(recs) == len(res.records)
    fits = read_fits(out / "fits.json")
    assert len(fits) == len(res.fits) == 4
    for a, b in zip(fits, res.fits):
        for k in a.params:
            assert abs(a.params[k] - b.params[k]) <= 1e-12 * max(1, abs(b.params[k]))
    reports = [json.loads(l) for l in (out / "reports.jsonl").read_text().splitlines()]
    assert len(reports) == len(res.records) and "M" in reports[0]


def test_aklt_plotdata_monotone(serial_run):
    out = serial_run[2]
    tsv = [p for p in (out / "plotdata").iterdir() if "beta=-0.33" in p.name and "string_z" in p.name]
    assert len(tsv) == 1
    vals = [float(l.split("\t")[1]) for l in tsv[0].read_text().splitlines()[1:]]
    assert len(vals) == 4 and all(b > a for a, b in zip(vals, vals[1:]))
    # the open-chain singlet approaches 2/9 + 4N/9 up to corrections ~ 3^-N
    dev = [abs(v - (2 / 9 + 4 * n / 9)) for n, v in zip(BASE["sizes"], vals)]
    assert dev[0] < 0.02 and all(b < a for a, b in zip(dev, dev[1:]))


def test_aklt_sweep_linear(tmp_path):
    raw = {**BASE, "models": [{"model": "BLBQ", "beta": -0.3333333333333333}],
           "sizes": [12, 16, 20, 24], "observables": ["string_z"], "output": str(tmp_path / "k")}
    res = run_sweep(config_from_dict(raw))
    fit, = res.fits
    assert fit.family == "power" and abs(fit["delta"] - 1) < 0.03


def test_determinism_and_parallel(serial_run, tmp_path):
    cfg, res, out, _ = serial_run
    ref = _strip_time((out / "records.csv").read_text())
    again = run_sweep(config_from_dict({**BASE, "output": str(tmp_path / "a")}))
    assert _strip_time((tmp_path / "a" / "records.csv").read_text()) == ref
    par = run_sweep(config_from_dict({**BASE, "output": str(tmp_path / "p"), "workers": 2}))
    assert _strip_time((tmp_path / "p" / "records.csv").read_text()) == ref
    assert [f.params for f in par.fits] == [f.params for f in res.fits]


def test_correlator_rule(tmp_path):
    raw = {**BASE, "models": [{"model": "BLBQ", "beta": -0.3333333333333333}], "sizes": [16, 20],
           "observables": ["string_z"], "output": str(tmp_path / "c"),
           "correlators": [{"observable": "local_z", "family": "exp_sqrt", "r_min": 1, "edge": 3}]}
    res = run_sweep(config_from_dict(raw))
    assert len(res.correlators) == 1
    (label, (rs, cs)), = res.correlators.items()
    assert "N=20" in label and rs[0] == 1
    assert abs(cs[0] + 4 / 9) < 1e-3


def test_cli_run_fit_verify(tmp_path, capsys):
    cfg = tmp_path / "sweep.yaml"
    cfg.write_text(yaml.safe_dump({**BASE, "sizes": [6, 8, 10, 12],
                                   "models": [{"model": "BLBQ", "beta": -0.3333333333333333}]}))
    out = tmp_path / "res"
    assert main(["run", str(cfg), "-o", str(out), "--seed", "3", "--workers", "1"]) == EXIT_OK
    assert (out / "records.csv").exists()
    assert main(["fit", str(out / "records.csv"), "--config", str(cfg), "-o", str(tmp_path / "f.json")]) == EXIT_OK
    refit = [FitResult.from_dict(d) for d in json.loads((tmp_path / "f.json").read_text())]
    orig = read_fits(out / "fits.json")
    assert [f.params for f in refit] == [f.params for f in orig]
    assert main(["verify", "--min-n", "3", "--max-n", "4"]) == EXIT_OK
    assert "all identities hold" in capsys.readouterr().out


def test_cli_config_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({**BASE, "observables": []}))
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG


def test_cli_strict(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(yaml.safe_dump({**BASE, "sizes": [10], "models": [{"model": "BLBQ", "beta": 0.0}],
                                   "dmrg": {"chi_max": 16, "max_sweeps": 1}}))
    assert main(["run", str(cfg), "-o", str(tmp_path / "o")]) == EXIT_OK
    assert main(["run", str(cfg), "--strict", "-o", str(tmp_path / "o2")]) == EXIT_STRICT


def test_example_config_loads():
    from pathlib import Path
    from spin1qfi.sweep import load_config
    cfg = load_config(Path(__file__).parents[1] / "configs" / "example.yaml")
    assert len(cfg.points) == 4 and cfg.sizes == [12, 16, 20, 24, 28, 32]
    assert cfg.fits["staggered_local_z"].subsample == "even_N"
    assert len(cfg.correlators) == 2 and cfg.dmrg.truncation.chi_max == 64
