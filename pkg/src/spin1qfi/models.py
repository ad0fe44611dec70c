"""Spin-1 chain Hamiltonians: model descriptions, MPO builders and sparse
full-space matrices used as exact-diagonalization oracles.

Only open boundary conditions are supported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp

from .spin import SX, SY, SZ, ID

MODELS = ("BLBQ", "BLBQ_theta", "XXZ", "AKLT_projector")

#: Largest Hilbert-space dimension accepted by :func:`dense_hamiltonian`.
MAX_DENSE_DIM = 60_000


def _kron2(a, b):
    return np.kron(a, b)


def heisenberg_bond():
    """Two-site S_i . S_{i+1} as a 9x9 matrix (real)."""
    h = _kron2(SX, SX) + _kron2(SY, SY) + _kron2(SZ, SZ)
    return h.real.copy()


def p2_projector():
    """Projector onto the total-spin-2 multiplet of two spin-1 sites."""
    x = heisenberg_bond()
    return np.eye(9) / 3.0 + 0.5 * (x + x @ x / 3.0)


@dataclass(frozen=True)
class ModelSpec:
    """Couplings of one chain Hamiltonian.

    ``model`` selects which couplings are read:

    * ``BLBQ``: ``J``, ``beta``  ->  J sum [S.S - beta (S.S)^2]
    * ``BLBQ_theta``: ``J_prime``, ``theta``  ->  J' sum [cos t S.S - sin t (S.S)^2]
    * ``XXZ``: ``J_xy``, ``J_z``
    * ``AKLT_projector``: ``J``  ->  -(2/3)(N-1)J + 2J sum P2
    """

    model: str
    N: int
    J: float = 1.0
    beta: float = 0.0
    J_prime: float = 1.0
    theta: float = 0.0
    J_xy: float = 1.0
    J_z: float = 1.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if self.model == "BLBQ_theta" and not -math.pi - 1e-12 <= self.theta <= math.pi + 1e-12:
            raise ValueError("theta must lie in [-pi, pi]")

    def bond_term(self) -> np.ndarray:
        """The 9x9 nearest-neighbour term (real) shared by every bond."""
        x = heisenberg_bond()
        if self.model == "BLBQ":
            return self.J * (x - self.beta * (x @ x))
        if self.model == "BLBQ_theta":
            c, s = math.cos(self.theta), math.sin(self.theta)
            return self.J_prime * (c * x - s * (x @ x))
        if self.model == "XXZ":
            xy = (_kron2(SX, SX) + _kron2(SY, SY)).real
            return self.J_xy * xy + self.J_z * _kron2(SZ, SZ).real
        return self.J * (2.0 * p2_projector() - (2.0 / 3.0) * np.eye(9))

    def with_size(self, N: int) -> "ModelSpec":
        d = asdict(self)
        d["N"] = N
        return ModelSpec(**d)

    def point(self) -> dict:
        """Couplings relevant to ``model`` (size excluded)."""
        keys = {
            "BLBQ": ("J", "beta"),
            "BLBQ_theta": ("J_prime", "theta"),
            "XXZ": ("J_xy", "J_z"),
            "AKLT_projector": ("J",),
        }[self.model]
        return {k: getattr(self, k) for k in keys}

    def label(self) -> str:
        args = ",".join(f"{k}={v:.10g}" for k, v in self.point().items())
        return f"{self.model}({args})"

    def to_dict(self) -> dict:
        return {"model": self.model, "N": self.N, **self.point()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


class MPO:
    """Matrix product operator with open boundaries.

    ``tensors[k]`` has shape ``(D_left, 3, 3, D_right)``; the two middle axes
    are the matrix row (outgoing) and column (incoming) physical indices.
    """

    def __init__(self, tensors):
        self.tensors = [np.asarray(w) for w in tensors]
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[-1] != 1:
            raise ValueError("MPO edge bonds must have dimension 1")
        for a, b in zip(self.tensors[:-1], self.tensors[1:]):
            if a.shape[-1] != b.shape[0]:
                raise ValueError("inconsistent MPO bond dimensions")
        for w in self.tensors:
            w.setflags(write=False)

    @property
    def N(self):
        return len(self.tensors)

    @property
    def dtype(self):
        return np.result_type(*self.tensors)

    @property
    def bond_dims(self):
        return [w.shape[-1] for w in self.tensors[:-1]]

    def to_dense(self) -> np.ndarray:
        """Full 3^N x 3^N matrix; intended for N <= 7."""
        if 3 ** self.N > 3 ** 7:
            raise MemoryError("MPO.to_dense is limited to N <= 7")
        acc = self.tensors[0][0]  # (3, 3, D)
        for w in self.tensors[1:]:
            # acc[(r), (c), a] w[a, s, t, b] -> [(r s), (c t), b]
            t = np.tensordot(acc, w, axes=([2], [0]))
            r, c = t.shape[0], t.shape[1]
            t = t.transpose(0, 2, 1, 3, 4).reshape(r * 3, c * 3, -1)
            acc = t
        return acc[:, :, 0]


def nearest_neighbor_mpo(bond: np.ndarray, N: int, tol: float = 1e-13) -> MPO:
    """Exact MPO for ``sum_i bond(i, i+1)`` on ``N`` open sites.

    The constant part of the 9x9 two-site term goes on the diagonal corner;
    the rest is split by an operator Schmidt decomposition
    ``sum_k A_k (x) B_k`` with one MPO channel per retained term, so the
    internal bond dimension is ``rank + 2``.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    bond = np.asarray(bond)
    const = np.trace(bond) / 9.0
    h = (bond - const * np.eye(9)).reshape(3, 3, 3, 3).transpose(0, 2, 1, 3).reshape(9, 9)
    u, s, vh = np.linalg.svd(h)
    keep = s > tol * max(s[0], 1.0)
    rank = int(keep.sum())
    A = [(u[:, k] * s[k]).reshape(3, 3) for k in range(rank)]
    B = [vh[k].reshape(3, 3) for k in range(rank)]
    dtype = float if np.isrealobj(bond) else complex
    eye = np.eye(3, dtype=dtype)
    D = rank + 2
    w = np.zeros((D, 3, 3, D), dtype=dtype)
    w[0, :, :, 0] = eye
    w[D - 1, :, :, D - 1] = eye
    for k in range(rank):
        w[0, :, :, 1 + k] = A[k]
        w[1 + k, :, :, D - 1] = B[k]
    # one copy of the constant per bond, carried by the left site of the bond
    w[0, :, :, D - 1] = const * eye
    last = w[:, :, :, D - 1:].copy()
    last[0, :, :, 0] = 0.0
    tensors = [w[:1].copy()] + [w.copy() for _ in range(N - 2)] + [last]
    return MPO(tensors)


def build_mpo(spec: ModelSpec) -> MPO:
    return nearest_neighbor_mpo(spec.bond_term(), spec.N)


def build_blbq_mpo(J: float, beta: float, N: int) -> MPO:
    """J sum_i [S_i.S_{i+1} - beta (S_i.S_{i+1})^2] with open boundaries."""
    return build_mpo(ModelSpec("BLBQ", N, J=J, beta=beta))


def build_blbq_theta_mpo(J_prime: float, theta: float, N: int) -> MPO:
    return build_mpo(ModelSpec("BLBQ_theta", N, J_prime=J_prime, theta=theta))


def build_xxz_mpo(J_xy: float, J_z: float, N: int) -> MPO:
    return build_mpo(ModelSpec("XXZ", N, J_xy=J_xy, J_z=J_z))


def build_aklt_projector_mpo(J: float, N: int, include_shift: bool = True) -> MPO:
    """``-(2/3)(N-1)J + 2J sum_i P2(i, i+1)``.

    With ``include_shift=False`` only the non-negative projector sum is built,
    whose ground energy is exactly zero.
    """
    if include_shift:
        return build_mpo(ModelSpec("AKLT_projector", N, J=J))
    return nearest_neighbor_mpo(2.0 * J * p2_projector(), N)


def _is_standard(m: MPO) -> bool:
    # identity in the "nothing placed" and "all placed" channels of every bulk tensor
    eye = np.eye(3)
    for w in m.tensors[1:-1]:
        D = w.shape[0]
        if w.shape[3] != D or not (np.allclose(w[0, :, :, 0], eye) and np.allclose(w[D - 1, :, :, D - 1], eye)):
            return False
        if np.any(w[1:, :, :, 0]) or np.any(w[D - 1, :, :, : D - 1]):
            return False
    return m.N > 2


def mpo_sum(a: MPO, b: MPO) -> MPO:
    """MPO of ``a + b``.

    When both operands are in the lower-triangular form produced by the
    builders here, the two identity channels are shared, giving bond
    dimension ``Da + Db - 2``; otherwise the bond spaces are stacked.
    """
    if a.N != b.N:
        raise ValueError("MPO sizes differ")
    dtype = np.result_type(a.dtype, b.dtype)
    N = a.N
    if _is_standard(a) and _is_standard(b):
        Da, Db = a.tensors[1].shape[0], b.tensors[1].shape[0]
        D = Da + Db - 2
        ia = np.r_[0, 1:Da - 1, D - 1]
        ib = np.r_[0, Da - 1:D - 1, D - 1]
        out = []
        for k, (x, y) in enumerate(zip(a.tensors, b.tensors)):
            rl = [0] if k == 0 else None
            rr = [0] if k == N - 1 else None
            w = np.zeros((1 if rl else D, 3, 3, 1 if rr else D), dtype=dtype)
            for t, idx in ((x, ia), (y, ib)):
                li = np.array(rl) if rl else idx
                ri = np.array(rr) if rr else idx
                w[np.ix_(li, range(3), range(3), ri)] += t
            # the shared identity channels were added twice
            if k == 0:
                w[0, :, :, 0] -= np.eye(3)
            elif k == N - 1:
                w[D - 1, :, :, 0] -= np.eye(3)
            else:
                w[0, :, :, 0] -= np.eye(3)
                w[D - 1, :, :, D - 1] -= np.eye(3)
            out.append(w)
        return MPO(out)
    out = []
    for k, (x, y) in enumerate(zip(a.tensors, b.tensors)):
        first, last = k == 0, k == N - 1
        dl = 1 if first else x.shape[0] + y.shape[0]
        dr = 1 if last else x.shape[3] + y.shape[3]
        w = np.zeros((dl, 3, 3, dr), dtype=dtype)
        if N == 1:
            w[0, :, :, 0] = x[0, :, :, 0] + y[0, :, :, 0]
        elif first:
            w[:, :, :, : x.shape[3]] = x
            w[:, :, :, x.shape[3]:] = y
        elif last:
            w[: x.shape[0]] = x
            w[x.shape[0]:] = y
        else:
            w[: x.shape[0], :, :, : x.shape[3]] = x
            w[x.shape[0]:, :, :, x.shape[3]:] = y
        out.append(w)
    return MPO(out)


def _pair_sum_mpo(ops_left, ops_right, onsite, N, weight):
    """``weight * (sum_i onsite_i + 2 sum_{i<j} sum_c L^c_i R^c_j)``."""
    n = len(ops_left)
    D = n + 2
    w = np.zeros((D, 3, 3, D))
    eye = np.eye(3)
    w[0, :, :, 0] = eye
    w[D - 1, :, :, D - 1] = eye
    w[0, :, :, D - 1] = weight * onsite
    for c in range(n):
        w[0, :, :, 1 + c] = 2.0 * weight * ops_left[c]
        w[1 + c, :, :, 1 + c] = eye
        w[1 + c, :, :, D - 1] = ops_right[c]
    if N == 1:
        return MPO([w[:1, :, :, D - 1:]])
    return MPO([w[:1].copy()] + [w.copy() for _ in range(N - 2)] + [w[:, :, :, D - 1:].copy()])


def sz_total_squared_mpo(N: int, weight: float = 1.0) -> MPO:
    """``weight * (sum_i S^z_i)^2``."""
    sz = SZ.real
    return _pair_sum_mpo([sz], [sz], sz @ sz, N, weight)


def casimir_mpo(N: int, weight: float = 1.0) -> MPO:
    """``weight * S_tot^2`` written with S^z and the (real) ladder operators."""
    sz = SZ.real
    sp_ = (SX + 1j * SY).real
    sm = (SX - 1j * SY).real
    return _pair_sum_mpo([sz, sp_ / 2, sm / 2], [sz, sm, sp_], 2.0 * np.eye(3), N, weight)


# --- sparse full-space matrices -------------------------------------------

def site_operator(op, site, N, fmt="csr"):
    """Embed a one-site operator at ``site`` (0-based) into the N-site space."""
    left = sp.identity(3 ** site, format="csr")
    right = sp.identity(3 ** (N - site - 1), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format=fmt)


def product_operator(ops: dict, N: int):
    """Sparse matrix of a tensor product of one-site operators.

    ``ops`` maps 0-based site -> 3x3 matrix; missing sites carry the identity.
    """
    out = sp.csr_matrix(np.ones((1, 1), dtype=complex))
    for j in range(N):
        out = sp.kron(out, sp.csr_matrix(ops.get(j, ID)), format="csr")
    return out


def _check_dim(N):
    if 3 ** N > MAX_DENSE_DIM:
        raise MemoryError(f"3^{N} exceeds the full-space cap of {MAX_DENSE_DIM}")


def dense_hamiltonian(spec: ModelSpec):
    """Full-space Hamiltonian as a sparse CSR matrix, assembled from spin
    operators site by site (independent of the MPO path)."""
    N = spec.N
    _check_dim(N)
    dim = 3 ** N
    H = sp.csr_matrix((dim, dim), dtype=complex)
    comps = {a: [site_operator(m, j, N) for j in range(N)] for a, m in zip("xyz", (SX, SY, SZ))}
    for i in range(N - 1):
        xx = comps["x"][i] @ comps["x"][i + 1]
        yy = comps["y"][i] @ comps["y"][i + 1]
        zz = comps["z"][i] @ comps["z"][i + 1]
        dot = xx + yy + zz
        if spec.model == "BLBQ":
            H = H + spec.J * (dot - spec.beta * (dot @ dot))
        elif spec.model == "BLBQ_theta":
            H = H + spec.J_prime * (math.cos(spec.theta) * dot - math.sin(spec.theta) * (dot @ dot))
        elif spec.model == "XXZ":
            H = H + spec.J_xy * (xx + yy) + spec.J_z * zz
        else:
            eye = sp.identity(dim, format="csr")
            p2 = eye / 3.0 + 0.5 * (dot + (dot @ dot) / 3.0)
            H = H + 2.0 * spec.J * p2
    if spec.model == "AKLT_projector":
        H = H - (2.0 / 3.0) * (N - 1) * spec.J * sp.identity(dim, format="csr")
    H = H.tocsr()
    if H.nnz == 0 or abs(H.imag).max() < 1e-13:
        H = H.real.tocsr()
    H.eliminate_zeros()
    return H


def gell_mann_matrices():
    """The eight Gell-Mann matrices, normalized to Tr(l_a l_b) = 2 delta_ab."""
    lam = []
    for a in range(3):
        for b in range(a + 1, 3):
            m = np.zeros((3, 3), dtype=complex)
            m[a, b] = m[b, a] = 1.0
            lam.append(m)
            m = np.zeros((3, 3), dtype=complex)
            m[a, b], m[b, a] = -1j, 1j
            lam.append(m)
    lam.append(np.diag([1.0, -1.0, 0.0]).astype(complex))
    lam.append(np.diag([1.0, 1.0, -2.0]).astype(complex) / np.sqrt(3.0))
    return lam


def gell_mann_chain(N: int):
    """Lai-Sutherland Hamiltonian written with SU(3) generators:

        (4/3)(N-1) + 1/2 sum_i sum_a l^a_i l^a_{i+1}

    On two spin-1 sites S.S + (S.S)^2 = 1 + SWAP and SWAP = 1/3 + 1/2 sum_a
    l^a (x) l^a, which fixes the constant.
    """
    _check_dim(N)
    dim = 3 ** N
    H = (4.0 / 3.0) * (N - 1) * sp.identity(dim, format="csr", dtype=complex)
    for lam in gell_mann_matrices():
        for i in range(N - 1):
            H = H + 0.5 * (site_operator(lam, i, N) @ site_operator(lam, i + 1, N))
    return H.tocsr()
