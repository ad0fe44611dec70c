"""Open-boundary matrix product states and contraction primitives.

Site tensors have shape ``(chi_left, 3, chi_right)``. Sites are 0-based.
The outermost bonds normally have dimension 1; a larger outer bond is read
as an un-observed ancilla, so expectation values trace over it (this is how
the summed-boundary AKLT state is represented).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .spin import spin_component, exp_ipi_spin

MPS_FORMAT = "spin1qfi-mps"
MPS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TruncationParams:
    chi_max: int = 128
    cutoff: float = 1e-12

    def __post_init__(self):
        if self.chi_max < 1:
            raise ValueError("chi_max must be >= 1")
        if self.cutoff < 0:
            raise ValueError("cutoff must be >= 0")


def svd(m):
    try:
        return sla.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        return sla.svd(m, full_matrices=False, lapack_driver="gesvd", check_finite=False)


def truncated_svd(m, trunc: TruncationParams):
    """SVD of ``m`` keeping at most ``chi_max`` values and dropping the
    smallest ones while their summed squared weight stays below ``cutoff``
    (relative to the total weight).

    Returns ``(u, s, vh, discarded_weight)`` with ``s`` renormalized.
    """
    u, s, vh = svd(m)
    w = s * s
    total = w.sum()
    # tail[k] = weight discarded when keeping k values
    tail = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    keep = int(np.searchsorted(-tail, -trunc.cutoff * total, side="left"))
    keep = max(1, min(keep, trunc.chi_max, len(s)))
    # strictly-zero singular values carry no information
    keep = max(1, min(keep, int(np.count_nonzero(s > s[0] * 1e-15))))
    discarded = float(tail[keep] / total) if total > 0 else 0.0
    s = s[:keep]
    s = s / np.linalg.norm(s)
    return u[:, :keep], s, vh[:keep], discarded


@dataclass(frozen=True)
class CanonicalForm:
    """Right-canonical tensors ``B`` plus Schmidt values on every bond.

    ``schmidt[k]`` lives on the bond left of site ``k``; ``schmidt[0]`` is the
    outer left bond (``[1.]`` for an ordinary pure state). ``diag(schmidt[k]) B[k]``
    is the normalized orthogonality center at site ``k``.
    """

    B: list
    schmidt: list

    def center(self, k):
        return self.schmidt[k][:, None, None] * self.B[k]


class MPS:
    """Matrix product state; treat instances as immutable values."""

    def __init__(self, tensors, center=None):
        ts = [np.asarray(t) for t in tensors]
        if not ts:
            raise ValueError("empty MPS")
        for t in ts:
            if t.ndim != 3 or t.shape[1] != 3:
                raise ValueError("site tensors must have shape (chi_l, 3, chi_r)")
        for a, b in zip(ts[:-1], ts[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError("inconsistent MPS bond dimensions")
        self.tensors = ts
        self.center = center
        self._canon = None

    # -- basic properties ---------------------------------------------------
    @property
    def N(self):
        return len(self.tensors)

    def __len__(self):
        return len(self.tensors)

    @property
    def dtype(self):
        return np.result_type(*self.tensors)

    @property
    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond(self):
        return max(self.bond_dims, default=1)

    def copy(self):
        return MPS([t.copy() for t in self.tensors], self.center)

    # -- constructors ---------------------------------------------------------
    @classmethod
    def product_state(cls, local_states):
        """Product state from a list of 3-vectors or labels '+', '0', '-'."""
        basis = {"+": 0, "0": 1, "-": 2}
        ts = []
        for v in local_states:
            if isinstance(v, str):
                vec = np.zeros(3)
                vec[basis[v]] = 1.0
            else:
                vec = np.asarray(v)
                vec = vec / np.linalg.norm(vec)
            ts.append(vec.reshape(1, 3, 1))
        return cls(ts, center=0)

    @classmethod
    def random(cls, N, chi, rng=None, dtype=float):
        rng = np.random.default_rng(rng)
        dims = [1] + [min(chi, 3 ** min(k, N - k)) for k in range(1, N)] + [1]
        ts = []
        for k in range(N):
            shape = (dims[k], 3, dims[k + 1])
            t = rng.standard_normal(shape)
            if np.issubdtype(dtype, np.complexfloating):
                t = t + 1j * rng.standard_normal(shape)
            ts.append(t)
        return cls(ts).canonicalize(0)

    @classmethod
    def from_dense(cls, psi, N):
        psi = np.asarray(psi).reshape([1] + [3] * N + [1])
        ts = []
        rest = psi.reshape(1, -1)
        chi = 1
        for k in range(N - 1):
            rest = rest.reshape(chi * 3, -1)
            q, r = np.linalg.qr(rest)
            ts.append(q.reshape(chi, 3, -1))
            chi = q.shape[1]
            rest = r
        ts.append(rest.reshape(chi, 3, 1))
        return cls(ts).canonicalize(0)

    # -- gauge ----------------------------------------------------------------
    def canonicalize(self, center=0):
        """Return a normalized copy in mixed-canonical form around ``center``."""
        ts = [t.copy() for t in self.tensors]
        N = len(ts)
        for k in range(center):
            l, d, r = ts[k].shape
            q, rr = np.linalg.qr(ts[k].reshape(l * d, r))
            ts[k] = q.reshape(l, d, -1)
            ts[k + 1] = np.tensordot(rr, ts[k + 1], axes=(1, 0))
        for k in range(N - 1, center, -1):
            l, d, r = ts[k].shape
            q, rr = np.linalg.qr(ts[k].reshape(l, d * r).T)
            ts[k] = q.T.reshape(-1, d, r)
            ts[k - 1] = np.tensordot(ts[k - 1], rr.T, axes=(2, 0))
        nrm = np.linalg.norm(ts[center])
        if nrm == 0:
            raise FloatingPointError("MPS has zero norm")
        ts[center] = ts[center] / nrm
        return MPS(ts, center)

    def canonical_form(self) -> CanonicalForm:
        """Right-canonical tensors and normalized Schmidt spectra (cached)."""
        if self._canon is not None:
            return self._canon
        ts = self.canonicalize(self.N - 1).tensors
        B = [None] * self.N
        S = [None] * (self.N + 1)
        S[self.N] = np.ones(ts[-1].shape[2])
        for k in range(self.N - 1, -1, -1):
            l, d, r = ts[k].shape
            u, s, vh = svd(ts[k].reshape(l, d * r))
            keep = max(1, int(np.count_nonzero(s > s[0] * 1e-14)))
            u, s, vh = u[:, :keep], s[:keep], vh[:keep]
            s = s / np.linalg.norm(s)
            B[k] = vh.reshape(keep, d, r)
            S[k] = s
            if k > 0:
                ts[k - 1] = np.tensordot(ts[k - 1], u * s, axes=(2, 0))
        self._canon = CanonicalForm(B, S)
        return self._canon

    def norm(self):
        ts = self.tensors
        env = np.eye(ts[0].shape[0])
        for t in ts:
            env = _transfer(env, t, None)
        return float(np.sqrt(abs(np.trace(env))))

    def compress(self, trunc: TruncationParams):
        """SVD-truncated copy (right-to-left sweep after left canonicalization).

        Returns ``(mps, max_discarded_weight)``.
        """
        ts = [t.copy() for t in self.canonicalize(self.N - 1).tensors]
        worst = 0.0
        for k in range(self.N - 1, 0, -1):
            l, d, r = ts[k].shape
            u, s, vh, disc = truncated_svd(ts[k].reshape(l, d * r), trunc)
            worst = max(worst, disc)
            ts[k] = vh.reshape(-1, d, r)
            ts[k - 1] = np.tensordot(ts[k - 1], u * s, axes=(2, 0))
        ts[0] = ts[0] / np.linalg.norm(ts[0])
        return MPS(ts, center=0), worst

    def to_dense(self):
        """Full state vector (length 3^N); requires trivial outer bonds."""
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("to_dense needs outer bond dimension 1")
        if self.N > 12:
            raise MemoryError("to_dense is limited to N <= 12")
        psi = self.tensors[0][0]
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=(psi.ndim - 1, 0))
        return psi.reshape(-1)

    def entanglement_entropy(self):
        return [float(-np.sum(s**2 * np.log(np.clip(s**2, 1e-300, None))))
                for s in self.canonical_form().schmidt[1:-1]]

    # -- persistence ------------------------------------------------------------
    def save(self, path):
        path = Path(path)
        payload = {
            "format": np.array(MPS_FORMAT),
            "version": np.array(MPS_FORMAT_VERSION),
            "n_sites": np.array(self.N),
            "center": np.array(-1 if self.center is None else self.center),
        }
        for k, t in enumerate(self.tensors):
            payload[f"t{k}"] = t
        with open(path, "wb") as fh:
            np.savez(fh, **payload)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            if str(z["format"]) != MPS_FORMAT:
                raise ValueError(f"{path}: not an MPS checkpoint")
            version = int(z["version"])
            if version != MPS_FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {version}")
            n = int(z["n_sites"])
            center = int(z["center"])
            ts = [z[f"t{k}"] for k in range(n)]
        return cls(ts, None if center < 0 else center)


# --- contraction kernels -----------------------------------------------------

def _transfer(env, t, op):
    """Push a left environment ``env[bra, ket]`` through one site.

    Computes ``sum conj(t[a,s,b]) op[s,s'] env[a,a'] t[a',s',b']``.
    """
    x = np.tensordot(env, t, axes=(1, 0))            # (a, s', b')
    if op is not None:
        x = np.tensordot(op, x, axes=(1, 1))          # (s, a, b')
        return np.tensordot(t.conj(), x, axes=([1, 0], [0, 1]))
    return np.tensordot(t.conj(), x, axes=([0, 1], [0, 1]))


def _close(env, t, op):
    """Trace-close ``env`` with the last operator-carrying site (right-canonical)."""
    x = np.tensordot(env, t, axes=(1, 0))            # (a, s', b)
    x = np.tensordot(op, x, axes=(1, 1))              # (s, a, b)
    return np.tensordot(t.conj(), x, axes=([1, 0, 2], [0, 1, 2]))


def _as_operator(o):
    o = np.asarray(o)
    if o.shape != (3, 3):
        raise ValueError("local operators must be 3x3")
    return o


def expectation_operator_string(mps: MPS, ops) -> complex:
    """Exact ``<psi| prod_j O_{s_j} |psi>`` for one-site operators on strictly
    increasing 0-based sites ``s_j``. Sites outside the support are absorbed
    by the canonical form, so the cost is linear in the support width.
    """
    ops = [(int(s), _as_operator(o)) for s, o in ops]
    sites = [s for s, _ in ops]
    for s in sites:
        if not 0 <= s < mps.N:
            raise ValueError(f"site {s} outside [0, {mps.N})")
    if any(b <= a for a, b in zip(sites[:-1], sites[1:])):
        raise ValueError("sites must be strictly increasing and distinct")
    cf = mps.canonical_form()
    if not ops:
        return complex(np.sum(cf.schmidt[0] ** 2))
    first, last = sites[0], sites[-1]
    table = dict(ops)
    c = cf.center(first)
    env = np.eye(c.shape[0], dtype=c.dtype)
    if first == last:
        return complex(_close(env, c, table[first]))
    env = _transfer(env, c, table[first])
    for k in range(first + 1, last):
        env = _transfer(env, cf.B[k], table.get(k))
    return complex(_close(env, cf.B[last], table[last]))


def _real_part(value, what):
    if abs(value.imag) > 1e-10:
        warnings.warn(f"{what} has imaginary part {value.imag:.3e}; discarded", RuntimeWarning)
    return float(value.real)


def _check_pair(mps, i, j):
    if not (0 <= i < j < mps.N):
        raise ValueError(f"need 0 <= i < j < N, got i={i}, j={j}, N={mps.N}")


def local_correlator(mps: MPS, axis: str, i: int, j: int) -> float:
    """<S^a_i S^a_j> for i < j."""
    _check_pair(mps, i, j)
    s = spin_component(axis)
    return _real_part(expectation_operator_string(mps, [(i, s), (j, s)]), "local correlator")


def string_correlator(mps: MPS, axis: str, i: int, j: int) -> float:
    """<S^a_i exp(i pi sum_{i<k<j} S^a_k) S^a_j> for i < j."""
    _check_pair(mps, i, j)
    s = spin_component(axis)
    phase = exp_ipi_spin(axis)
    ops = [(i, s)] + [(k, phase) for k in range(i + 1, j)] + [(j, s)]
    return _real_part(expectation_operator_string(mps, ops), "string correlator")


def correlation_matrix(mps: MPS, left, right, middle=None, diagonal=None):
    """Upper-triangular matrix ``C[i, j] = <left_i middle_{i+1..j-1} right_j>``.

    ``middle=None`` means identity on intermediate sites; ``diagonal`` (an
    operator) fills ``C[i, i] = <diagonal_i>``. Left environments are reused
    while sweeping ``j``, giving O(N^2) site contractions in total.
    """
    cf = mps.canonical_form()
    N = mps.N
    left, right = _as_operator(left), _as_operator(right)
    out = np.zeros((N, N), dtype=complex)
    for i in range(N):
        c = cf.center(i)
        env0 = np.eye(c.shape[0], dtype=c.dtype)
        if diagonal is not None:
            out[i, i] = _close(env0, c, _as_operator(diagonal))
        if i == N - 1:
            break
        env = _transfer(env0, c, left)
        for j in range(i + 1, N):
            out[i, j] = _close(env, cf.B[j], right)
            if j < N - 1:
                env = _transfer(env, cf.B[j], middle)
    return out


def one_point_strings(mps: MPS, op, string_op=None, direction="left"):
    """Vector ``V[l] = <string op_l>`` where the string ``prod string_op``
    covers every site left of ``l`` (``direction='left'``) or right of ``l``
    (``direction='right'``). ``string_op=None`` gives plain ``<op_l>``.
    """
    cf = mps.canonical_form()
    N = mps.N
    op = _as_operator(op)
    out = np.zeros(N, dtype=complex)
    if string_op is None:
        for l in range(N):
            c = cf.center(l)
            out[l] = _close(np.eye(c.shape[0]), c, op)
        return out
    if direction == "left":
        c = cf.center(0)
        env = np.eye(c.shape[0], dtype=c.dtype)
        tensors = [c] + cf.B[1:]
        for l in range(N):
            out[l] = _close(env, tensors[l], op)
            env = _transfer(env, tensors[l], string_op)
        return out
    if direction != "right":
        raise ValueError("direction must be 'left' or 'right'")
    # right environments R[k][a, a'] for the string on sites >= k
    renv = [None] * (N + 1)
    renv[N] = np.eye(cf.B[-1].shape[2])
    for k in range(N - 1, 0, -1):
        b = cf.B[k]
        x = np.tensordot(b, renv[k + 1], axes=(2, 1))         # (a', s', b)
        x = np.tensordot(string_op, x, axes=(1, 1))            # (s, a', b)
        renv[k] = np.tensordot(b.conj(), x, axes=([1, 2], [0, 2]))   # (bra, ket)
    for l in range(N):
        c = cf.center(l)
        x = np.tensordot(c, renv[l + 1], axes=(2, 1))          # (a, s', b)
        x = np.tensordot(op, x, axes=(1, 1))                   # (s, a, b)
        out[l] = np.tensordot(c.conj(), x, axes=([1, 0, 2], [0, 1, 2]))
    return out
