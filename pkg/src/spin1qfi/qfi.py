"""QFI of summed spin observables from MPS correlators.

For ``O = sum_j c_j T_j`` with ``T_j`` a (possibly string-dressed) spin
component, the variance is assembled from

* ``M[i, j]`` (i <= j): ``<S_i P_{i+1} ... P_{j-1} S_j>`` times the
  staggering signs, where ``P`` is the phase ``exp(i pi S^a)`` of the same
  axis for string observables and the identity otherwise;
* ``V[l] = <T_l>`` (with staggering sign).

The QFI (variance convention, no factor 4) is then
``F = sum_i M_ii + c sum_{i<j} M_ij - (sum_l V_l)^2`` with ``c = -2`` for
string observables and ``c = +2`` for local ones. The minus sign comes from
``S^a exp(i pi S^a) = -S^a`` once the two strings are multiplied out.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .mps import MPS, correlation_matrix, one_point_strings
from .spin import exp_ipi_spin, spin_component

KINDS = ("local", "staggered_local", "string", "staggered_string")
OBS_AXES = ("x", "z")

# relative slack when testing a k-producibility bound for violation
_BOUND_RTOL = 1e-9


@dataclass(frozen=True)
class ObservableSpec:
    """A summed one-site observable.

    String observables carry ``exp(i pi S^a)`` on every site left of the
    spin for ``axis='z'`` and right of it for ``axis='x'``.
    """

    axis: str = "z"
    kind: str = "string"

    def __post_init__(self):
        if self.axis not in OBS_AXES:
            raise ValueError(f"axis must be one of {OBS_AXES}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")

    @property
    def is_string(self) -> bool:
        return self.kind.endswith("string")

    @property
    def is_staggered(self) -> bool:
        return self.kind.startswith("staggered")

    @property
    def string_direction(self) -> str | None:
        if not self.is_string:
            return None
        return "left" if self.axis == "z" else "right"

    @property
    def spectral_range(self) -> float:
        return 2.0

    def label(self) -> str:
        return f"{self.kind}_{self.axis}"

    @classmethod
    def parse(cls, text: str) -> "ObservableSpec":
        """Inverse of :meth:`label`, e.g. ``"staggered_string_x"``."""
        kind, _, axis = text.rpartition("_")
        return cls(axis=axis, kind=kind)

    def signs(self, N: int) -> np.ndarray:
        """Per-site coefficients ``c_j``: ``(-1)^j`` with 1-based ``j`` when staggered."""
        if self.is_staggered:
            return np.array([(-1.0) ** (j + 1) for j in range(N)])
        return np.ones(N)


def _real(a, what):
    a = np.asarray(a)
    if a.size and np.max(np.abs(a.imag)) > 1e-8:
        raise FloatingPointError(f"{what} has a sizeable imaginary part")
    return np.ascontiguousarray(a.real)


def m_matrix(mps: MPS, obs: ObservableSpec) -> np.ndarray:
    """Upper-triangular correlator matrix (real, N x N)."""
    s = spin_component(obs.axis)
    middle = exp_ipi_spin(obs.axis) if obs.is_string else None
    m = _real(correlation_matrix(mps, s, s, middle=middle, diagonal=s @ s), "M")
    if obs.is_staggered:
        c = obs.signs(mps.N)
        m = m * np.outer(c, c)
    return m


def v_vector(mps: MPS, obs: ObservableSpec) -> np.ndarray:
    s = spin_component(obs.axis)
    if obs.is_string:
        v = one_point_strings(mps, s, exp_ipi_spin(obs.axis), obs.string_direction)
    else:
        v = one_point_strings(mps, s)
    return _real(v, "V") * obs.signs(mps.N)


def qfi_from_parts(M: np.ndarray, V: np.ndarray, string: bool) -> float:
    c = -2.0 if string else 2.0
    off = np.triu(M, 1).sum()
    return float(np.trace(M) + c * off - V.sum() ** 2)


def k_producible_bound(N: int, k: int) -> int:
    """Largest variance of a k-producible state: ``s k^2 + r^2``."""
    s, r = divmod(N, k)
    return s * k * k + r * r


def depth_witness(F_Q: float, N: int) -> int:
    """Lower bound on the entanglement depth certified by ``F_Q``.

    Returns ``1 + max{k : F_Q > s k^2 + r^2}``, or 1 when no bound is
    violated. Values within a relative ``1e-9`` of a bound count as equal.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    best = 0
    for k in range(1, N + 1):
        bound = k_producible_bound(N, k)
        if F_Q > bound * (1.0 + _BOUND_RTOL):
            best = k
    return min(best + 1, N) if best else 1


@dataclass
class QfiReport:
    M: np.ndarray
    V: np.ndarray
    F_Q: float
    f_Q: float
    depth_witness: int
    observable: ObservableSpec
    N: int
    chi: int
    model: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def spectral_range(self) -> float:
        return self.observable.spectral_range

    def conventional_qfi(self) -> float:
        """QFI with the usual factor 4 restored."""
        return 4.0 * self.F_Q

    def to_dict(self, include_M: bool = True) -> dict:
        d = {
            "N": self.N,
            "chi": self.chi,
            "observable": {"axis": self.observable.axis, "kind": self.observable.kind},
            "model": self.model,
            "F_Q": self.F_Q,
            "f_Q": self.f_Q,
            "depth_witness": self.depth_witness,
            "spectral_range": self.spectral_range,
            "V": self.V.tolist(),
        }
        if include_M:
            d["M"] = self.M.tolist()
        d.update(self.extra)
        return d

    def to_json(self, include_M: bool = True) -> str:
        return json.dumps(self.to_dict(include_M))


def qfi(mps: MPS, obs: ObservableSpec, model: dict | None = None) -> QfiReport:
    """Full QFI report of ``obs`` on the (normalized) state ``mps``."""
    M = m_matrix(mps, obs)
    V = v_vector(mps, obs)
    F = qfi_from_parts(M, V, obs.is_string)
    if F < 0:
        if F < -1e-8 * max(1.0, float(np.trace(M))):
            raise FloatingPointError(f"negative QFI {F:.3e}")
        F = 0.0
    N = mps.N
    return QfiReport(M=M, V=V, F_Q=F, f_Q=F / N, depth_witness=depth_witness(F, N),
                     observable=obs, N=N, chi=mps.max_bond, model=model)


def depth_from_density(f_Q: float, N: int) -> int:
    return depth_witness(f_Q * N, N)


def is_multipartite(f_Q: float) -> bool:
    """``f_Q > 1`` certifies entanglement (at least two-partite)."""
    return f_Q > 1.0 + _BOUND_RTOL and math.isfinite(f_Q)
