"""Finite-size scaling fits of QFI densities and correlator decays."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import least_squares

FIT_SCHEMA = "spin1qfi-fit/1"
FAMILIES = ("power", "log", "const")
CORRELATOR_FAMILIES = ("power", "exp", "exp_sqrt", "exp_sq", "offset_power")
FLAT_SPREAD = 0.02
_MAX_NFEV = 2000


class FitError(RuntimeError):
    """Raised when a nonlinear fit does not converge; ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ScalingDataset:
    """Series of ``(x, y)`` points; ``x`` is the system size N or a distance r.

    Points are stored sorted by ``x``; duplicate abscissae are rejected.
    """

    x: tuple
    y: tuple
    label: str = ""

    def __post_init__(self):
        if len(self.x) != len(self.y):
            raise ValueError("x and y lengths differ")
        order = sorted(range(len(self.x)), key=lambda i: self.x[i])
        xs = tuple(float(self.x[i]) for i in order)
        ys = tuple(float(self.y[i]) for i in order)
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("abscissae must be distinct")
        if not all(math.isfinite(v) for v in xs + ys):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "y", ys)

    @classmethod
    def from_points(cls, points, label=""):
        points = list(points)
        return cls(tuple(p[0] for p in points), tuple(p[1] for p in points), label)

    def __len__(self):
        return len(self.x)

    @property
    def arrays(self):
        return np.array(self.x), np.array(self.y)


@dataclass
class FitResult:
    family: str
    params: dict
    stderr: dict
    residual_norm: float
    r2: float
    n_points: int
    label: str = ""
    trace: list = field(default_factory=list)

    def __getitem__(self, name):
        return self.params[name]

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        f = {
            "const": lambda: np.full_like(x, p.get("q", 0.0)),
            "log": lambda: p["q"] + p["b"] * np.log(x),
            "power": lambda: (p["q"] + p["b"] * x ** p["delta"]) if "q" in p else p["a0"] * x ** (-p["eta"]),
            "exp": lambda: p["a0"] * np.exp(-x / p["xi"]),
            "exp_sqrt": lambda: p["a0"] * np.exp(-x / p["a1"]) / np.sqrt(x),
            "exp_sq": lambda: p["a2"] + p["a0"] * np.exp(-x / p["a1"]) / x ** 2,
            "offset_power": lambda: p["a2"] + p["a0"] / x ** 2,
        }[self.family]
        return f()

    def to_dict(self) -> dict:
        return {
            "schema": FIT_SCHEMA,
            "label": self.label,
            "family": self.family,
            "params": dict(self.params),
            "stderr": dict(self.stderr),
            "residual_norm": self.residual_norm,
            "r2": self.r2,
            "n_points": self.n_points,
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        if d.get("schema") != FIT_SCHEMA:
            raise ValueError(f"unsupported fit schema {d.get('schema')!r}")
        return cls(d["family"], dict(d["params"]), dict(d["stderr"]), float(d["residual_norm"]),
                   float(d["r2"]), int(d["n_points"]), d.get("label", ""), list(d.get("trace", [])))


def _r2(y, resid):
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)


def _stderr(jac, resid, n, p):
    """Gauss-Newton covariance ``inv(J^T J) * RSS / (n - p)``."""
    dof = n - p
    if dof <= 0:
        return np.full(p, np.nan)
    jtj = jac.T @ jac
    try:
        cov = np.linalg.pinv(jtj) * float(resid @ resid) / dof
    except np.linalg.LinAlgError:
        return np.full(p, np.nan)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _finish(family, names, theta, jac, resid, y, label):
    se = _stderr(jac, resid, len(y), len(names))
    return FitResult(
        family=family,
        params={k: float(v) for k, v in zip(names, theta)},
        stderr={k: float(v) for k, v in zip(names, se)},
        residual_norm=float(np.linalg.norm(resid)),
        r2=_r2(y, resid),
        n_points=len(y),
        label=label,
    )


def _linear_fit(family, names, design, y, label):
    theta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = design @ theta - y
    return _finish(family, names, theta, design, resid, y, label)


def _nonlinear(family, names, model, jac, theta0, x, y, label):
    def fun(t):
        return model(t, x) - y

    try:
        sol = least_squares(fun, theta0, jac=lambda t: jac(t, x), method="lm",
                            max_nfev=_MAX_NFEV, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    except (ValueError, FloatingPointError) as exc:
        raise FitError(f"{family} fit failed: {exc}") from exc
    if not np.all(np.isfinite(sol.x)):
        raise FitError(f"{family} fit diverged")
    res = _finish(family, names, sol.x, sol.jac, sol.fun, y, label)
    if sol.status <= 0:
        raise FitError(f"{family} fit did not converge ({sol.message})", best=res)
    return res


def _require(data, n):
    if len(data) < n:
        raise ValueError(f"need at least {n} points, got {len(data)}")


def _power_init(x, y):
    # slope of log|first differences| vs log(midpoints) is delta - 1
    dy = np.diff(y) / np.diff(x)
    xm = 0.5 * (x[1:] + x[:-1])
    ok = np.abs(dy) > 0
    if ok.sum() >= 2:
        slope = np.polyfit(np.log(xm[ok]), np.log(np.abs(dy[ok])), 1)[0]
        delta = float(slope + 1.0)
    else:
        delta = 1.0
    if not math.isfinite(delta) or abs(delta) < 1e-3:
        delta = 1e-3 if delta >= 0 else -1e-3
    b = y[-1] / x[-1] ** delta
    return np.array([0.0, b, delta])


def _power_model(t, x):
    return t[0] + t[1] * x ** t[2]


def _power_jac(t, x):
    xd = x ** t[2]
    return np.column_stack([np.ones_like(x), xd, t[1] * xd * np.log(x)])


def fit_power(data: ScalingDataset) -> FitResult:
    """Fit ``q + b N^delta`` by Levenberg-Marquardt.

    Initialization: ``delta0 = 1 + slope`` of log|first differences| against
    log N, ``b0 = y_last / N_last^delta0`` and ``q0 = 0``.
    """
    _require(data, 4)
    x, y = data.arrays
    if np.any(x <= 0):
        raise ValueError("power fit needs positive abscissae")
    return _nonlinear("power", ("q", "b", "delta"), _power_model, _power_jac,
                      _power_init(x, y), x, y, data.label)


def fit_log(data: ScalingDataset) -> FitResult:
    """Fit ``q + b ln N`` (linear least squares)."""
    _require(data, 3)
    x, y = data.arrays
    if np.any(x <= 0):
        raise ValueError("log fit needs positive abscissae")
    return _linear_fit("log", ("q", "b"), np.column_stack([np.ones_like(x), np.log(x)]), y, data.label)


def fit_const(data: ScalingDataset) -> FitResult:
    """Mean with its standard error."""
    _require(data, 2)
    x, y = data.arrays
    return _linear_fit("const", ("q",), np.ones((len(y), 1)), y, data.label)


def _dof_scale(fit: FitResult, p: int) -> float:
    # residual standard deviation: RSS / (n - p)
    return fit.residual_norm / math.sqrt(max(fit.n_points - p, 1))


def select_model(data: ScalingDataset, flat_spread: float = FLAT_SPREAD) -> FitResult:
    """Pick among the power, log and const families.

    * const if the power exponent is within two standard errors of zero,
      or the relative spread ``(max - min)/|mean|`` is below ``flat_spread``;
    * otherwise the family with the smaller residual standard deviation
      ``||r|| / sqrt(n - p)``. The power law contains the logarithm as its
      ``delta -> 0`` limit, so raw residual norms would always favour it.

    The returned result carries the decision steps in ``trace``.
    """
    trace = []
    const = fit_const(data)
    x, y = data.arrays
    mean = float(np.mean(y))
    spread = float((y.max() - y.min()) / abs(mean)) if mean != 0 else math.inf
    trace.append(f"relative spread {spread:.4g} (threshold {flat_spread:g})")
    try:
        power = fit_power(data)
    except (FitError, ValueError) as exc:
        power = None
        trace.append(f"power fit unavailable: {exc}")
    try:
        log = fit_log(data)
    except ValueError as exc:
        log = None
        trace.append(f"log fit unavailable: {exc}")
    if spread < flat_spread:
        trace.append("flat data -> const")
        const.trace = trace
        return const
    if power is not None:
        d, sd = power.params["delta"], power.stderr["delta"]
        trace.append(f"power delta = {d:.6g} +- {sd:.3g}")
        if math.isfinite(sd) and abs(d) < 2.0 * sd:
            if log is None or abs(log.params["b"]) < 2.0 * log.stderr["b"]:
                trace.append("delta compatible with 0 and no significant log slope -> const")
                const.trace = trace
                return const
            trace.append("delta compatible with 0 but log slope significant")
    candidates = [(f, p) for f, p in ((power, 3), (log, 2)) if f is not None]
    if not candidates:
        trace.append("no nonlinear family available -> const")
        const.trace = trace
        return const
    for f, p in candidates:
        trace.append(f"{f.family}: residual std {_dof_scale(f, p):.6g}")
    best = min(candidates, key=lambda fp: _dof_scale(*fp))[0]
    trace.append(f"selected {best.family}")
    best.trace = trace
    return best


_P3 = re.compile(r"^period3_residue\((\d)\)$")


def subsample(data: ScalingDataset, rule: str) -> ScalingDataset:
    """Keep points with odd N (``"odd_N"``), even N (``"even_N"``) or
    ``N % 3 == r`` (``"period3_residue(r)"``)."""
    if rule == "odd_N":
        keep = lambda n: n % 2 == 1
    elif rule == "even_N":
        keep = lambda n: n % 2 == 0
    else:
        m = _P3.match(rule or "")
        if not m or int(m.group(1)) > 2:
            raise ValueError(f"unknown subsample rule {rule!r}")
        r = int(m.group(1))
        keep = lambda n: n % 3 == r
    pts = [(a, b) for a, b in zip(data.x, data.y) if keep(int(round(a)))]
    if not pts:
        raise ValueError(f"rule {rule!r} leaves no points")
    return ScalingDataset.from_points(pts, data.label)


def _loglin(x, y):
    # slope and intercept of a straight line through (x, log|y|)
    s, c = np.polyfit(x, np.log(np.abs(y)), 1)
    return s, c


def fit_correlator_decay(data: ScalingDataset, family: str) -> FitResult:
    """Fit a correlator ``C(r)``.

    Families: ``power`` a0 r^-eta, ``exp`` a0 exp(-r/xi), ``exp_sqrt``
    a0 exp(-r/a1)/sqrt(r), ``exp_sq`` a2 + a0 exp(-r/a1)/r^2 and
    ``offset_power`` a2 + a0/r^2.
    """
    if family not in CORRELATOR_FAMILIES:
        raise ValueError(f"family must be one of {CORRELATOR_FAMILIES}")
    _require(data, 5)
    r, c = data.arrays
    if np.any(r <= 0):
        raise ValueError("distances must be positive")
    lab = data.label
    if family == "offset_power":
        return _linear_fit(family, ("a2", "a0"), np.column_stack([np.ones_like(r), r ** -2.0]), c, lab)
    if family == "power":
        s, k = np.polyfit(np.log(r), np.log(np.abs(c)), 1)
        t0 = np.array([math.copysign(math.exp(k), c[-1]), -s])
        model = lambda t, x: t[0] * x ** (-t[1])
        jac = lambda t, x: np.column_stack([x ** (-t[1]), -t[0] * x ** (-t[1]) * np.log(x)])
        return _nonlinear(family, ("a0", "eta"), model, jac, t0, r, c, lab)
    if family == "exp":
        s, k = _loglin(r, c)
        t0 = np.array([math.copysign(math.exp(k), c[-1]), -1.0 / s if s < 0 else 1.0])
        model = lambda t, x: t[0] * np.exp(-x / t[1])
        jac = lambda t, x: np.column_stack([np.exp(-x / t[1]), t[0] * np.exp(-x / t[1]) * x / t[1] ** 2])
        return _nonlinear(family, ("a0", "xi"), model, jac, t0, r, c, lab)
    if family == "exp_sqrt":
        s, k = _loglin(r, c * np.sqrt(r))
        t0 = np.array([math.copysign(math.exp(k), c[-1]), -1.0 / s if s < 0 else 1.0])
        model = lambda t, x: t[0] * np.exp(-x / t[1]) / np.sqrt(x)
        jac = lambda t, x: np.column_stack([np.exp(-x / t[1]) / np.sqrt(x),
                                            t[0] * np.exp(-x / t[1]) * x / t[1] ** 2 / np.sqrt(x)])
        return _nonlinear(family, ("a0", "a1"), model, jac, t0, r, c, lab)
    # exp_sq: offset from the tail, then a log-linear start for the rest
    a2 = c[-1]
    rest = c[:-1] - a2
    ok = np.abs(rest) > 0
    if ok.sum() >= 2:
        s, k = _loglin(r[:-1][ok], rest[ok] * r[:-1][ok] ** 2)
    else:
        s, k = -1.0, 0.0
    t0 = np.array([math.copysign(math.exp(k), rest[0] if rest.size else 1.0), -1.0 / s if s < 0 else 1.0, a2])
    model = lambda t, x: t[2] + t[0] * np.exp(-x / t[1]) / x ** 2
    jac = lambda t, x: np.column_stack([np.exp(-x / t[1]) / x ** 2,
                                        t[0] * np.exp(-x / t[1]) / t[1] ** 2 / x,
                                        np.ones_like(x)])
    return _nonlinear(family, ("a0", "a1", "a2"), model, jac, t0, r, c, lab)


def wzw_scaling_dimension(n: int, k: int):
    """SU(n)_k primary: ``h = (n^2 - 1) / (2 n (n + k))``, ``Delta = 2h``,
    ``eta = 2 Delta``; returned as exact fractions."""
    if n < 2 or k < 1:
        raise ValueError("need n >= 2 and k >= 1")
    h = Fraction(n * n - 1, 2 * n * (n + k))
    return h, 2 * h, 4 * h
