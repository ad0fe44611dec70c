"""Batch driver: DMRG + QFI over coupling grids and system sizes, followed by
scaling fits, with CSV/JSON/TSV output."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import os
import re
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dmrg import DmrgParams, dmrg_ground_state
from .fits import (CORRELATOR_FAMILIES, FitError, FitResult, ScalingDataset, fit_const,
                   fit_correlator_decay, fit_log, fit_power, select_model, subsample)
from .models import MODELS, ModelSpec, build_mpo
from .mps import TruncationParams, local_correlator, string_correlator
from .qfi import ObservableSpec, qfi

logger = logging.getLogger(__name__)

RECORDS_SCHEMA = "spin1qfi-records v1"
RECORD_COLUMNS = ("model", "N", "observable", "energy", "converged", "F_Q", "f_Q",
                  "depth_witness", "chi", "wall_time")
WORKERS_ENV = "SPIN1QFI_WORKERS"
_COUPLINGS = {"J", "beta", "J_prime", "theta", "J_xy", "J_z"}
_FIT_FAMILIES = ("auto", "power", "log", "const", "all")


class ConfigError(ValueError):
    pass


class StrictModeError(RuntimeError):
    """A DMRG run did not converge while strict mode was requested."""


@dataclass(frozen=True)
class FitRule:
    family: str = "auto"
    subsample: str | None = None
    min_N: int | None = None

    def __post_init__(self):
        if self.family not in _FIT_FAMILIES:
            raise ConfigError(f"fit family must be one of {_FIT_FAMILIES}")


@dataclass(frozen=True)
class CorrelatorRule:
    """Two-point function measured on the largest size of each point."""

    observable: ObservableSpec
    family: str = "power"
    r_min: int = 2
    edge: int | None = None

    def __post_init__(self):
        if self.observable.is_string and self.observable.is_staggered:
            raise ConfigError("correlators use local, staggered_local or string kinds")
        if self.family not in CORRELATOR_FAMILIES:
            raise ConfigError(f"correlator family must be one of {CORRELATOR_FAMILIES}")


@dataclass
class SweepConfig:
    points: list
    sizes: list
    observables: list
    dmrg: DmrgParams = field(default_factory=DmrgParams)
    fits: dict = field(default_factory=dict)
    correlators: list = field(default_factory=list)
    output: str = "results"
    workers: int = 1
    strict: bool = False
    m_max_sites: int = 16

    def __post_init__(self):
        if not self.points:
            raise ConfigError("the model grid is empty")
        if not self.sizes:
            raise ConfigError("no system sizes given")
        if not self.observables:
            raise ConfigError("no observables given")
        if list(self.sizes) != sorted(set(self.sizes)):
            raise ConfigError("sizes must be strictly increasing")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def fit_rule(self, obs: ObservableSpec) -> FitRule:
        return self.fits.get(obs.label(), self.fits.get("default", FitRule()))


@dataclass
class RunRecord:
    model: ModelSpec
    N: int
    observable: ObservableSpec
    energy: float
    converged: bool
    F_Q: float
    f_Q: float
    depth_witness: int
    chi: int
    wall_time: float

    def sort_key(self):
        return (self.model.model, tuple(sorted(self.model.point().items())), self.N,
                self.observable.label())

    def row(self):
        return [self.model.label(), str(self.N), self.observable.label(), f"{self.energy:.17e}",
                "1" if self.converged else "0", f"{self.F_Q:.17e}", f"{self.f_Q:.17e}",
                str(self.depth_witness), str(self.chi), f"{self.wall_time:.3f}"]


# --- configuration -----------------------------------------------------------

def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _expand_sizes(raw):
    if isinstance(raw, dict):
        try:
            start, stop = int(raw["start"]), int(raw["stop"])
            step = int(raw.get("step", 1))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad size range {raw!r}") from exc
        return list(range(start, stop + 1, step))
    return [int(n) for n in _as_list(raw)]


def _expand_points(entries):
    points = []
    for entry in _as_list(entries):
        if not isinstance(entry, dict) or "model" not in entry:
            raise ConfigError("each model entry needs a 'model' key")
        if entry["model"] not in MODELS:
            raise ConfigError(f"unknown model {entry['model']!r}")
        unknown = set(entry) - _COUPLINGS - {"model"}
        if unknown:
            raise ConfigError(f"unknown coupling(s) {sorted(unknown)}")
        keys = sorted(k for k in entry if k in _COUPLINGS)
        grids = [[float(v) for v in _as_list(entry[k])] for k in keys]
        for combo in itertools.product(*grids):
            points.append((entry["model"], dict(zip(keys, combo))))
    return points


def _dmrg_params(raw: dict, seed=None) -> DmrgParams:
    raw = dict(raw or {})
    trunc = TruncationParams(int(raw.pop("chi_max", 128)), float(raw.pop("cutoff", 1e-12)))
    if "chi_ramp" in raw:
        raw["chi_ramp"] = tuple(int(c) for c in raw["chi_ramp"])
    if seed is not None:
        raw["seed"] = int(seed)
    try:
        return DmrgParams(truncation=trunc, **raw)
    except TypeError as exc:
        raise ConfigError(f"bad dmrg section: {exc}") from exc


def _observable(text) -> ObservableSpec:
    try:
        if isinstance(text, dict):
            return ObservableSpec(axis=text["axis"], kind=text["kind"])
        return ObservableSpec.parse(str(text))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad observable {text!r}") from exc


def _fit_rules(section) -> dict:
    rules = {}
    for key, rule in (section or {}).items():
        rule = rule or {}
        if not isinstance(rule, dict):
            raise ConfigError(f"fit rule for {key!r} must be a mapping")
        if key != "default":
            key = _observable(key).label()
        try:
            rules[key] = FitRule(**rule)
        except TypeError as exc:
            raise ConfigError(f"bad fit rule for {key!r}: {exc}") from exc
    return rules


def config_from_dict(raw: dict, seed=None, workers=None, strict=None) -> SweepConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    fits = _fit_rules(raw.get("fits"))
    correlators = []
    for c in raw.get("correlators") or []:
        c = dict(c)
        correlators.append(CorrelatorRule(_observable(c.pop("observable")), **c))
    env_workers = os.environ.get(WORKERS_ENV)
    n_workers = workers or (int(env_workers) if env_workers else None) or int(raw.get("workers", 1))
    try:
        return SweepConfig(
            points=[ModelSpec(m, 2, **c) for m, c in _expand_points(raw.get("models", []))],
            sizes=_expand_sizes(raw.get("sizes", [])),
            observables=[_observable(o) for o in _as_list(raw.get("observables") or [])],
            dmrg=_dmrg_params(raw.get("dmrg"), seed if seed is not None else raw.get("seed")),
            fits=fits,
            correlators=correlators,
            output=str(raw.get("output", "results")),
            workers=n_workers,
            strict=bool(raw.get("strict", False) if strict is None else strict),
            m_max_sites=int(raw.get("m_max_sites", 16)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> SweepConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw, **overrides)


# --- execution ---------------------------------------------------------------

@dataclass
class _TaskResult:
    records: list
    reports: list
    correlators: dict


def _correlator_series(psi, rule: CorrelatorRule):
    N = psi.N
    edge = rule.edge if rule.edge is not None else N // 4
    i0 = edge
    rs, cs = [], []
    obs = rule.observable
    for j in range(i0 + rule.r_min, N - edge):
        r = j - i0
        if obs.is_string:
            c = string_correlator(psi, obs.axis, i0, j)
        else:
            c = local_correlator(psi, obs.axis, i0, j)
            if obs.is_staggered:
                c *= (-1) ** r
        rs.append(r)
        cs.append(c)
    return rs, cs


def _run_task(args):
    spec, observables, params, correlators, m_max = args
    t0 = time.perf_counter()
    psi, energy, rep = dmrg_ground_state(build_mpo(spec), params)
    dmrg_time = time.perf_counter() - t0
    records, reports = [], []
    for obs in observables:
        t1 = time.perf_counter()
        r = qfi(psi, obs, model=spec.to_dict())
        records.append(RunRecord(spec, spec.N, obs, energy, rep.converged, r.F_Q, r.f_Q,
                                 r.depth_witness, rep.chi, dmrg_time + time.perf_counter() - t1))
        d = r.to_dict(include_M=spec.N <= m_max)
        d.update(energy=energy, converged=rep.converged, sweeps=rep.sweeps,
                 total_sz=rep.total_sz, max_discarded_weight=rep.max_discarded_weight)
        reports.append(d)
    corr = {}
    for rule in correlators:
        corr[rule.observable.label()] = _correlator_series(psi, rule)
    logger.info("%s N=%d E=%.12f converged=%s (%.1fs)", spec.label(), spec.N, energy,
                rep.converged, dmrg_time)
    return _TaskResult(records, reports, corr)


def _tasks(config: SweepConfig):
    out = []
    for point in config.points:
        largest = max(config.sizes)
        for N in config.sizes:
            corr = config.correlators if N == largest else []
            out.append((point.with_size(N), config.observables, config.dmrg, corr,
                        config.m_max_sites))
    return out


def series_label(model_label: str, obs_label: str) -> str:
    return f"{model_label}|{obs_label}"


def fit_dataset(data: ScalingDataset, rule: FitRule) -> list:
    """Apply a fit rule; returns one or more FitResults (``family='all'``)."""
    if rule.min_N is not None:
        data = ScalingDataset.from_points([(x, y) for x, y in zip(data.x, data.y) if x >= rule.min_N],
                                          data.label)
    if rule.subsample:
        data = subsample(data, rule.subsample)
    fitters = {"power": fit_power, "log": fit_log, "const": fit_const}
    if rule.family == "auto":
        return [select_model(data)]
    names = ("power", "log", "const") if rule.family == "all" else (rule.family,)
    out = []
    for name in names:
        try:
            out.append(fitters[name](data))
        except FitError as exc:
            if exc.best is not None:
                exc.best.trace.append(f"not converged: {exc}")
                out.append(exc.best)
            else:
                logger.warning("fit %s failed for %s: %s", name, data.label, exc)
    return out


def datasets_from_records(records) -> dict:
    groups = {}
    for rec in records:
        key = (rec.model if isinstance(rec.model, str) else rec.model.label(),
               rec.observable if isinstance(rec.observable, str) else rec.observable.label())
        groups.setdefault(key, []).append((rec.N, rec.f_Q))
    return {series_label(*k): ScalingDataset.from_points(v, series_label(*k))
            for k, v in sorted(groups.items())}


def fit_records(records, rules: dict) -> list:
    fits = []
    for label, data in datasets_from_records(records).items():
        obs_label = label.rsplit("|", 1)[1]
        rule = rules.get(obs_label, rules.get("default", FitRule()))
        try:
            fits.extend(fit_dataset(data, rule))
        except ValueError as exc:
            logger.warning("skipping fit of %s: %s", label, exc)
    return fits


@dataclass
class SweepResult:
    records: list
    fits: list
    reports: list
    correlators: dict
    correlator_fits: list

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.records)


def run_sweep(config: SweepConfig, write: bool = True) -> SweepResult:
    """Run every (model point, N) task once, evaluate all observables on the
    resulting state, fit the f_Q series and optionally write the outputs."""
    tasks = _tasks(config)
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    records, reports, corr = [], [], {}
    for task, res in zip(tasks, results):
        records.extend(res.records)
        reports.extend(res.reports)
        for obs_label, series in res.correlators.items():
            corr[f"{task[0].label()}|corr_{obs_label}|N={task[0].N}"] = series
    records.sort(key=RunRecord.sort_key)
    fits = fit_records(records, config.fits)
    corr_fits = []
    rules = {r.observable.label(): r for r in config.correlators}
    for label, (rs, cs) in sorted(corr.items()):
        obs_label = label.split("|")[1][len("corr_"):]
        try:
            corr_fits.append(fit_correlator_decay(ScalingDataset(tuple(rs), tuple(cs), label),
                                                  rules[obs_label].family))
        except (FitError, ValueError) as exc:
            logger.warning("correlator fit failed for %s: %s", label, exc)
    result = SweepResult(records, fits, reports, corr, corr_fits)
    if write:
        emit_outputs(records, fits + corr_fits, config.output, reports=reports, correlators=corr)
    if config.strict and not result.all_converged:
        bad = [f"{r.model.label()} N={r.N}" for r in records if not r.converged]
        raise StrictModeError("DMRG did not converge for: " + ", ".join(sorted(set(bad))))
    return result


# --- output ------------------------------------------------------------------

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def records_csv(records) -> str:
    buf = io.StringIO()
    buf.write(f"# {RECORDS_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for rec in sorted(records, key=RunRecord.sort_key):
        w.writerow(rec.row())
    return buf.getvalue()


@dataclass
class CsvRecord:
    """A row read back from ``records.csv`` (model and observable as labels)."""

    model: str
    N: int
    observable: str
    energy: float
    converged: bool
    F_Q: float
    f_Q: float
    depth_witness: int
    chi: int
    wall_time: float


def read_records(path) -> list:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {RECORDS_SCHEMA}":
            raise ValueError(f"{path}: missing '# {RECORDS_SCHEMA}' header")
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(CsvRecord(row["model"], int(row["N"]), row["observable"], float(row["energy"]),
                                 row["converged"] == "1", float(row["F_Q"]), float(row["f_Q"]),
                                 int(row["depth_witness"]), int(row["chi"]), float(row["wall_time"])))
    return out


def safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._=+-]+", "_", label).strip("_")


def emit_outputs(records, fits, directory, reports=None, correlators=None):
    """Write records.csv, fits.json, reports.jsonl and plotdata/*.tsv."""
    if not records:
        raise ValueError("no records to write")
    out = Path(directory)
    _atomic_write(out / "records.csv", records_csv(records))
    _atomic_write(out / "fits.json", json.dumps([f.to_dict() for f in fits], indent=2) + "\n")
    if reports is not None:
        lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in reports)
        _atomic_write(out / "reports.jsonl", lines)
    for label, data in datasets_from_records(records).items():
        body = "# N\tf_Q\n" + "".join(f"{int(x)}\t{y:.17e}\n" for x, y in zip(data.x, data.y))
        _atomic_write(out / "plotdata" / f"{safe_name(label)}.tsv", body)
    for label, (rs, cs) in (correlators or {}).items():
        body = "# r\tC\n" + "".join(f"{r}\t{c:.17e}\n" for r, c in zip(rs, cs))
        _atomic_write(out / "plotdata" / f"{safe_name(label)}.tsv", body)
    return out


def read_fits(path) -> list:
    with open(path) as fh:
        return [FitResult.from_dict(d) for d in json.load(fh)]


def load_fit_rules(path) -> dict:
    """Fit rules from the ``fits`` section of a sweep configuration file."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    return _fit_rules(raw.get("fits"))

