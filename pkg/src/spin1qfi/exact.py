"""Full-space reference computations for small chains: exact ground states,
variance/QFI of dense operators, and the Kennedy-Tasaki unitary together with
the operator identities it satisfies.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import expm

from .models import MAX_DENSE_DIM, ModelSpec, dense_hamiltonian, product_operator, site_operator
from .qfi import ObservableSpec
from .spin import ID, SX, SY, SZ, exp_ipi_spin, spin_component

DEGENERACY_TOL = 1e-9
# above this dimension the ground state is found with sparse Lanczos
_DENSE_EIGH_MAX = 3000
KT_MAX_N = 8


@dataclass
class DenseState:
    amplitudes: np.ndarray
    N: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes)
        if self.amplitudes.shape != (3 ** self.N,):
            raise ValueError("amplitude vector must have length 3^N")
        nrm = np.linalg.norm(self.amplitudes)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized (norm {nrm!r})")

    def expect(self, op) -> complex:
        psi = self.amplitudes
        return complex(np.vdot(psi, op @ psi))


def _sites_from_dim(dim):
    N = int(round(np.log(dim) / np.log(3)))
    if 3 ** N != dim:
        raise ValueError(f"dimension {dim} is not a power of 3")
    return N


def exact_ground_state(H, n_states: int = 6):
    """Lowest eigenpair of a Hermitian matrix (dense array or sparse).

    Returns ``(energy, DenseState, degeneracy)`` where the degeneracy counts
    eigenvalues within ``1e-9`` of the minimum. Small matrices use a full
    dense diagonalization; larger ones sparse Lanczos on the lowest
    ``n_states`` levels (so degeneracies above that number are capped).
    """
    dim = H.shape[0]
    if H.shape != (dim, dim):
        raise ValueError("H must be square")
    if dim > MAX_DENSE_DIM:
        raise MemoryError(f"dimension {dim} exceeds the cap of {MAX_DENSE_DIM}")
    N = _sites_from_dim(dim)
    try:
        if dim <= _DENSE_EIGH_MAX:
            Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
            w, v = np.linalg.eigh(Hd)
        else:
            k = min(n_states, dim - 2)
            w, v = spla.eigsh(H, k=k, which="SA", tol=1e-13, maxiter=100_000)
            order = np.argsort(w)
            w, v = w[order], v[:, order]
    except (np.linalg.LinAlgError, spla.ArpackError) as exc:
        raise FloatingPointError(f"eigensolver failed: {exc}") from exc
    e0 = float(w[0])
    deg = int(np.count_nonzero(w - e0 < DEGENERACY_TOL))
    psi = v[:, 0] / np.linalg.norm(v[:, 0])
    return e0, DenseState(psi, N), deg


def qfi_pure_dense(state, O) -> float:
    """``<O^2> - <O>^2`` (QFI without the factor 4)."""
    psi = state.amplitudes if isinstance(state, DenseState) else np.asarray(state)
    if O.shape != (psi.size, psi.size):
        raise ValueError("operator and state dimensions differ")
    opsi = O @ psi
    mean = np.vdot(psi, opsi).real
    return float(np.vdot(opsi, opsi).real - mean * mean)


def qfi_mixed_dense(rho, O, psd_tol: float = 1e-10) -> float:
    """Mixed-state QFI ``(1/4) * 2 sum (p_i - p_k)^2/(p_i + p_k) |<i|O|k>|^2``."""
    rho = np.asarray(rho.toarray() if sp.issparse(rho) else rho)
    Od = np.asarray(O.toarray() if sp.issparse(O) else O)
    if rho.shape != Od.shape:
        raise ValueError("rho and O dimensions differ")
    if np.max(np.abs(rho - rho.conj().T)) > psd_tol:
        raise ValueError("rho is not Hermitian")
    p, phi = np.linalg.eigh(rho)
    if p.min() < -psd_tol:
        raise ValueError(f"rho is not positive semidefinite (min eigenvalue {p.min():.3e})")
    if abs(p.sum() - 1.0) > psd_tol:
        raise ValueError("rho must have unit trace")
    p = np.clip(p, 0.0, None)
    Ob = phi.conj().T @ Od @ phi
    den = p[:, None] + p[None, :]
    num = (p[:, None] - p[None, :]) ** 2
    mask = den > 1e-14
    terms = np.zeros_like(den)
    terms[mask] = num[mask] / den[mask] * np.abs(Ob[mask]) ** 2
    return float(0.5 * terms.sum())


def observable_matrix(obs: ObservableSpec, N: int):
    """Sparse matrix of the summed observable described by ``obs``."""
    s = spin_component(obs.axis)
    phase = exp_ipi_spin(obs.axis)
    coeff = obs.signs(N)
    out = sp.csr_matrix((3 ** N, 3 ** N), dtype=complex)
    for j in range(N):
        ops = {j: s}
        if obs.string_direction == "left":
            ops.update({l: phase for l in range(j)})
        elif obs.string_direction == "right":
            ops.update({l: phase for l in range(j + 1, N)})
        out = out + coeff[j] * product_operator(ops, N)
    return out.tocsr()


# --- Kennedy-Tasaki unitary -------------------------------------------------

def _kt_factor(j, k, N):
    """exp(i pi S^z_j S^x_k) embedded in the N-site space.

    The 9x9 exponential is taken numerically and split by its operator
    Schmidt decomposition, so non-adjacent sites embed as sparse products.
    """
    g = expm(1j * np.pi * np.kron(SZ, SX))
    h = g.reshape(3, 3, 3, 3).transpose(0, 2, 1, 3).reshape(9, 9)
    u, s, vh = np.linalg.svd(h)
    out = None
    for r in range(int(np.count_nonzero(s > 1e-12))):
        a = (u[:, r] * s[r]).reshape(3, 3)
        b = vh[r].reshape(3, 3)
        term = product_operator({j: a, k: b}, N)
        out = term if out is None else out + term
    return out


def kennedy_tasaki_dense(N: int):
    """Sparse ``U = prod_k prod_{j<k} exp(i pi S^z_j S^x_k)`` (all j < k)."""
    if N > KT_MAX_N:
        raise MemoryError(f"Kennedy-Tasaki matrix limited to N <= {KT_MAX_N}")
    if N < 1:
        raise ValueError("N must be >= 1")
    U = sp.identity(3 ** N, dtype=complex, format="csr")
    for k in range(N):
        for j in range(k):
            U = (_kt_factor(j, k, N) @ U).tocsr()
    U.data[np.abs(U.data) < 1e-14] = 0.0
    U.eliminate_zeros()
    return U


_LABEL = {"+": 0, "0": 1, "-": 2}
_FLIP = {"+": "-", "-": "+", "0": "0"}


def basis_index(sigma: str) -> int:
    idx = 0
    for c in sigma:
        idx = 3 * idx + _LABEL[c]
    return idx


def kt_basis_action(sigma: str):
    """Image of the product state ``|sigma>`` under U as ``(sign, sigma_bar)``.

    Each spin with an odd number of non-zero spins to its left is flipped;
    every such flip contributes ``exp(i pi S^x)|m> = -|-m>``.
    """
    if any(c not in _LABEL for c in sigma):
        raise ValueError("sigma must consist of '+', '0', '-'")
    out, sign, nonzero = [], 1, 0
    for c in sigma:
        if nonzero % 2:
            out.append(_FLIP[c])
            sign = -sign
        else:
            out.append(c)
        nonzero += c != "0"
    return sign, "".join(out)


def zeros_on_odd_sites(sigma: str) -> int:
    """Number of '0' characters on odd sites, counting sites from 1."""
    return sum(1 for i, c in enumerate(sigma) if c == "0" and i % 2 == 0)


def aklt_allowed_strings(N: int):
    """Configurations whose non-zero spins alternate in sign, with equal
    numbers of '+' and '-'."""
    for sigma in itertools.product("+0-", repeat=N):
        nz = [c for c in sigma if c != "0"]
        if all(a != b for a, b in zip(nz, nz[1:])) and nz.count("+") == nz.count("-"):
            yield "".join(sigma)


# --- identity checks ---------------------------------------------------------

@dataclass
class IdentityCheck:
    name: str
    passed: bool
    residual: float
    note: str = ""


@dataclass
class IdentityReport:
    N: int
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, residual, tol, note=""):
        self.checks.append(IdentityCheck(name, bool(residual < tol), float(residual), note))

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = [f"N={self.N}"]
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"  {flag} {c.name:<34} residual={c.residual:.2e} {c.note}".rstrip())
        return "\n".join(lines)


def _maxabs(a):
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def transformed_spin(axis: str, j: int, N: int):
    """Sparse matrix of the string-dressed spin ``U S^axis_j U^dagger``."""
    ops = {j: spin_component(axis)}
    if axis in ("x", "y"):
        ops.update({l: exp_ipi_spin("x") for l in range(j + 1, N)})
    if axis in ("z", "y"):
        ops.update({l: exp_ipi_spin("z") for l in range(j)})
    return product_operator(ops, N)


def transformed_bond(j: int, N: int):
    """``-SxSx + Sy exp(i pi (S^z_j + S^x_{j+1})) Sy - SzSz`` on bond (j, j+1)."""
    xx = product_operator({j: SX, j + 1: SX}, N)
    zz = product_operator({j: SZ, j + 1: SZ}, N)
    yy = product_operator({j: SY @ exp_ipi_spin("z"), j + 1: exp_ipi_spin("x") @ SY}, N)
    return -xx + yy - zz


def pi_rotation(axis: str, N: int):
    """Global rotation by pi about ``axis``."""
    ph = exp_ipi_spin(axis)
    return product_operator({j: ph for j in range(N)}, N)


def verify_appendix_identities(N: int, J: float = 1.0, beta: float = 0.0,
                               tol: float = 1e-10) -> IdentityReport:
    """Check the Kennedy-Tasaki identities on the full 3^N space.

    Returned entries (residuals are max-abs entry differences):

    * ``involution``: U U = 1;
    * ``transformed_{x,y,z}``: U S^a_j U^dagger equals the string-dressed spin;
    * ``hamiltonian``: U H U^dagger = J sum [h_j - beta h_j^2];
    * ``string_identity_{x,z}``: S^a_1 prod_{1<k<r} exp(i pi S^a_k) S^a_r
      equals -U^-1 S^a_1 S^a_r U for every r;
    * ``z2xz2_{H,Htilde}``: pi rotations about x and z commute with H and
      with U H U^dagger;
    * ``sign_rule``: on allowed AKLT strings, U|sigma> = +-(-1)^{z(sigma)}
      |sigma_bar>, the overall sign being the same for every string.
    """
    if N > 6:
        raise MemoryError("identity checks are limited to N <= 6")
    if N < 2:
        raise ValueError("N must be >= 2")
    rep = IdentityReport(N)
    U = kennedy_tasaki_dense(N)
    Ud = U.conj().T.tocsr()
    eye = sp.identity(3 ** N, format="csr")
    rep.add("involution", _maxabs(U @ U - eye), tol)

    for axis in ("x", "y", "z"):
        res = 0.0
        for j in range(N):
            lhs = U @ site_operator(spin_component(axis), j, N) @ Ud
            res = max(res, _maxabs(lhs - transformed_spin(axis, j, N)))
        rep.add(f"transformed_{axis}", res, tol)

    H = dense_hamiltonian(ModelSpec("BLBQ", N, J=J, beta=beta)).astype(complex)
    Ht = U @ H @ Ud
    rhs = sp.csr_matrix(H.shape, dtype=complex)
    for j in range(N - 1):
        h = transformed_bond(j, N)
        rhs = rhs + J * (h - beta * (h @ h))
    rep.add("hamiltonian", _maxabs(Ht - rhs), tol)

    for axis in ("x", "z"):
        s = spin_component(axis)
        ph = exp_ipi_spin(axis)
        res = 0.0
        for r in range(1, N):
            lhs = product_operator({0: s, r: s, **{k: ph for k in range(1, r)}}, N)
            rhs_op = -(Ud @ product_operator({0: s, r: s}, N) @ U)
            res = max(res, _maxabs(lhs - rhs_op))
        rep.add(f"string_identity_{axis}", res, tol)

    rx, rz = pi_rotation("x", N), pi_rotation("z", N)
    for name, op in (("H", H), ("Htilde", Ht)):
        res = max(_maxabs(rx @ op - op @ rx), _maxabs(rz @ op - op @ rz))
        rep.add(f"z2xz2_{name}", res, tol)

    res, ref = 0.0, None
    for sigma in aklt_allowed_strings(N):
        sign, bar = kt_basis_action(sigma)
        col = U[:, basis_index(sigma)].toarray().ravel()
        pred = np.zeros(3 ** N, dtype=complex)
        pred[basis_index(bar)] = sign
        res = max(res, float(np.max(np.abs(col - pred))))
        ratio = sign * (-1) ** zeros_on_odd_sites(sigma)
        ref = ratio if ref is None else ref
        if ratio != ref:
            res = max(res, 2.0)
    rep.add("sign_rule", res, tol, note=f"global sign {ref:+d}")
    return rep
