"""Two-site DMRG ground-state search on open chains."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .models import MPO, casimir_mpo, mpo_sum, sz_total_squared_mpo
from .mps import MPS, TruncationParams, truncated_svd, one_point_strings
from .spin import SZ

logger = logging.getLogger(__name__)

INITS = ("random", "neel_like", "sz_zero_product")
SECTORS = ("any", "sz0", "singlet")


@dataclass(frozen=True)
class DmrgParams:
    max_sweeps: int = 30
    energy_tol: float = 1e-10
    truncation: TruncationParams = field(default_factory=TruncationParams)
    init: str = "sz_zero_product"
    # bond-dimension caps for the first sweeps; later sweeps use chi_max
    chi_ramp: tuple = (16, 32, 64)
    lanczos_tol: float = 1e-10
    lanczos_max_iter: int = 200
    seed: int = 0
    # symmetry sector selected through an energy penalty (see dmrg_ground_state)
    sector: str = "sz0"
    penalty: float = 1.0

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.energy_tol <= 0:
            raise ValueError("energy_tol must be > 0")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.sector not in SECTORS:
            raise ValueError(f"sector must be one of {SECTORS}")
        if self.penalty <= 0:
            raise ValueError("penalty must be > 0")

    def chi_for_sweep(self, n):
        cap = self.truncation.chi_max
        if n < len(self.chi_ramp):
            return min(cap, self.chi_ramp[n])
        return cap


@dataclass
class DmrgReport:
    sweep_energies: list
    max_discarded_weight: float
    converged: bool
    total_sz: float
    chi: int
    matvecs: int = 0

    @property
    def sweeps(self):
        return len(self.sweep_energies)


def lanczos_ground(matvec, v0, tol=1e-10, max_iter=200, krylov_dim=32):
    """Lowest eigenpair of a Hermitian operator given only ``matvec``.

    Lanczos with full re-orthogonalization, restarted from the current Ritz
    vector every ``krylov_dim`` steps. ``tol`` bounds the eigenvalue error:
    iteration stops once the squared residual estimate ``(beta_m y_m)^2``
    drops below it. Returns ``(energy, vector, matvecs)``.
    """
    n = v0.size
    v = v0.reshape(-1)
    nv = np.linalg.norm(v)
    if not np.isfinite(nv) or nv == 0:
        raise FloatingPointError("invalid Lanczos start vector")
    v = v / nv
    used = 0
    kdim = min(krylov_dim, n)
    while True:
        basis = np.empty((kdim + 1, n), dtype=np.result_type(v, np.float64))
        basis[0] = v
        alphas, betas = [], []
        w = matvec(v)
        used += 1
        for m in range(kdim):
            a = np.vdot(basis[m], w).real
            alphas.append(a)
            w = w - a * basis[m]
            if m:
                w = w - betas[-1] * basis[m - 1]
            q = basis[: m + 1]
            w = w - q.T @ (q.conj() @ w)
            b = np.linalg.norm(w)
            if len(alphas) == 1:
                theta, y = np.array([alphas[0]]), np.ones((1, 1))
            else:
                theta, y = eigh_tridiagonal(np.array(alphas), np.array(betas),
                                            select="i", select_range=(0, 0))
            resid = b * abs(y[-1, 0])
            if not np.isfinite(resid):
                raise FloatingPointError("Lanczos breakdown (non-finite residual)")
            done = resid * resid < tol or b < 1e-13 or used >= max_iter
            if done or m == kdim - 1:
                break
            betas.append(b)
            basis[m + 1] = w / b
            w = matvec(basis[m + 1])
            used += 1
        x = y[:, 0] @ basis[: len(alphas)]
        x = x / np.linalg.norm(x)
        if done:
            return float(theta[0]), x, used
        v = x


def _initial_state(N, params: DmrgParams, dtype):
    if params.init == "random":
        return MPS.random(N, chi=4, rng=params.seed, dtype=dtype)
    labels = ["+" if k % 2 == 0 else "-" for k in range(N)]
    if params.init == "sz_zero_product" and N % 2:
        labels[-1] = "0"
    mps = MPS.product_state(labels)
    return MPS([t.astype(dtype) for t in mps.tensors], 0)


class _Engine:
    def __init__(self, mpo: MPO, mps: MPS, params: DmrgParams):
        self.W = mpo.tensors
        self.N = mpo.N
        self.params = params
        dtype = np.result_type(mpo.dtype, mps.dtype)
        self.T = [t.astype(dtype) for t in mps.canonicalize(0).tensors]
        one = np.ones((1, 1, 1), dtype=dtype)
        self.L = [None] * (self.N + 1)
        self.R = [None] * (self.N + 1)
        self.L[0] = one
        self.R[self.N] = one
        for k in range(self.N - 1, 0, -1):
            self.R[k] = self._grow_right(self.R[k + 1], self.T[k], self.W[k])
        self.matvecs = 0

    @staticmethod
    def _grow_left(L, A, W):
        x = np.tensordot(L, A, axes=(2, 0))                 # (a', w, t, b)
        x = np.tensordot(x, W, axes=([1, 2], [0, 2]))        # (a', b, s, v)
        x = np.tensordot(A.conj(), x, axes=([0, 1], [0, 2]))  # (b', b, v)
        return x.transpose(0, 2, 1)

    @staticmethod
    def _grow_right(R, B, W):
        x = np.tensordot(B, R, axes=(2, 2))                 # (a, t, b', u)
        x = np.tensordot(W, x, axes=([2, 3], [1, 3]))        # (w, s, a, b')
        return np.tensordot(B.conj(), x, axes=([1, 2], [1, 3]))  # (a', w, a)

    def _optimize(self, i, chi):
        L, R = self.L[i], self.R[i + 2]
        W1, W2 = self.W[i], self.W[i + 1]
        theta0 = np.tensordot(self.T[i], self.T[i + 1], axes=(2, 0))
        shape = theta0.shape

        def matvec(v):
            x = np.tensordot(L, v.reshape(shape), axes=(2, 0))
            x = np.tensordot(x, W1, axes=([1, 2], [0, 2]))
            x = np.tensordot(x, W2, axes=([4, 1], [0, 2]))
            x = np.tensordot(x, R, axes=([1, 4], [2, 1]))
            return x.reshape(-1)

        p = self.params
        energy, vec, used = lanczos_ground(matvec, theta0.reshape(-1), p.lanczos_tol,
                                           p.lanczos_max_iter)
        self.matvecs += used
        trunc = TruncationParams(chi, p.truncation.cutoff)
        u, s, vh, disc = truncated_svd(vec.reshape(shape[0] * 3, 3 * shape[3]), trunc)
        return energy, u, s, vh, disc, shape

    def sweep(self, chi):
        worst = 0.0
        energy = None
        N = self.N
        for i in range(N - 1):
            energy, u, s, vh, disc, shape = self._optimize(i, chi)
            worst = max(worst, disc)
            self.T[i] = u.reshape(shape[0], 3, -1)
            self.T[i + 1] = (s[:, None] * vh).reshape(-1, 3, shape[3])
            self.L[i + 1] = self._grow_left(self.L[i], self.T[i], self.W[i])
        for i in range(N - 2, -1, -1):
            energy, u, s, vh, disc, shape = self._optimize(i, chi)
            worst = max(worst, disc)
            self.T[i] = (u * s).reshape(shape[0], 3, -1)
            self.T[i + 1] = vh.reshape(-1, 3, shape[3])
            self.R[i + 1] = self._grow_right(self.R[i + 2], self.T[i + 1], self.W[i + 1])
        return energy, worst


def mpo_expectation(mps: MPS, mpo: MPO) -> float:
    """``<psi|W|psi> / <psi|psi>`` for an MPO ``W``."""
    if mps.N != mpo.N:
        raise ValueError("MPS and MPO sizes differ")
    env = np.ones((1, 1, 1))
    norm = np.ones((1, 1))
    for t, w in zip(mps.tensors, mpo.tensors):
        env = _Engine._grow_left(env, t, w)
        x = np.tensordot(norm, t, axes=(1, 0))
        norm = np.tensordot(t.conj(), x, axes=([0, 1], [0, 1]))
    return float(np.real(env[0, 0, 0] / norm[0, 0]))


def targeted_mpo(mpo: MPO, sector: str, penalty: float = 1.0) -> MPO:
    """Add the sector penalty used by :func:`dmrg_ground_state`."""
    if sector == "any":
        return mpo
    if sector == "sz0":
        return mpo_sum(mpo, sz_total_squared_mpo(mpo.N, penalty))
    if sector == "singlet":
        return mpo_sum(mpo_sum(mpo, sz_total_squared_mpo(mpo.N, penalty)),
                       casimir_mpo(mpo.N, penalty))
    raise ValueError(f"sector must be one of {SECTORS}")


def dmrg_ground_state(mpo: MPO, params: DmrgParams | None = None, initial: MPS | None = None):
    """Two-site DMRG.

    Sweeps (left-to-right then right-to-left) until the energy change of a
    full sweep at the final bond dimension is below ``energy_tol`` or
    ``max_sweeps`` is reached. Non-convergence is reported, not raised.

    ``params.sector`` resolves exact degeneracies between symmetry sectors:
    ``"sz0"`` adds ``penalty * (S^z_tot)^2`` and ``"singlet"`` additionally
    ``penalty * S_tot^2`` (meaningful for SU(2)-invariant models). The
    returned energy is the expectation of the unpenalized ``mpo``.

    Returns ``(mps, energy, report)``.
    """
    params = params or DmrgParams()
    work = targeted_mpo(mpo, params.sector, params.penalty)
    dtype = mpo.dtype
    psi0 = initial if initial is not None else _initial_state(mpo.N, params, dtype)
    if psi0.N != mpo.N:
        raise ValueError("initial state and MPO sizes differ")
    eng = _Engine(work, psi0, params)
    energies, converged, disc = [], False, 0.0
    for n in range(params.max_sweeps):
        chi = params.chi_for_sweep(n)
        e, disc = eng.sweep(chi)
        energies.append(e)
        logger.debug("sweep %d chi=%d E=%.14f disc=%.2e", n, chi, e, disc)
        at_full_chi = chi == params.truncation.chi_max or n >= len(params.chi_ramp)
        if (at_full_chi and len(energies) > 1
                and params.chi_for_sweep(n - 1) == chi
                and abs(energies[-2] - energies[-1]) < params.energy_tol):
            converged = True
            break
    psi = MPS(eng.T, center=0).canonicalize(0)
    energy = mpo_expectation(psi, mpo) if work is not mpo else energies[-1]
    sz = float(one_point_strings(psi, SZ).real.sum())
    report = DmrgReport(
        sweep_energies=energies,
        max_discarded_weight=disc,
        converged=converged,
        total_sz=sz,
        chi=psi.max_bond,
        matvecs=eng.matvecs,
    )
    return psi, energy, report
