"""Closed-form reference states: AKLT valence-bond solid, dimer product
state and GHZ-block states that saturate the k-producibility bound.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mps import MPS

_R2 = np.sqrt(2.0)
_EDGE = {"up": 0, "down": 1}


@dataclass(frozen=True)
class BoundaryChoice:
    """Edge spin-1/2 labels of an open AKLT chain.

    ``symmetrized=True`` ignores ``alpha``/``beta`` and sums over all four
    edge configurations, which reproduces infinite-chain expectation values
    on every site.
    """

    alpha: str = "up"
    beta: str = "down"
    symmetrized: bool = False

    def __post_init__(self):
        if self.alpha not in _EDGE or self.beta not in _EDGE:
            raise ValueError("edge labels must be 'up' or 'down'")


SYMMETRIZED = BoundaryChoice(symmetrized=True)


def _aklt_pair_tensor():
    # P[a, s, b]: symmetric spin-1/2 pair (a, b) mapped to spin-1 state s
    p = np.zeros((2, 3, 2))
    p[0, 0, 0] = _R2
    p[0, 1, 1] = p[1, 1, 0] = 1.0
    p[1, 2, 1] = _R2
    return p


def aklt_mps(N: int, boundary: BoundaryChoice | str = BoundaryChoice()) -> MPS:
    """Normalized AKLT valence-bond-solid MPS (bond dimension 2).

    Neighbouring pair tensors are joined by the antisymmetric singlet
    ``eps``. ``boundary`` may be ``"symmetrized"`` as a shorthand; that mode
    keeps dimension-2 outer bonds (traced over by all expectation routines).
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    if boundary == "symmetrized":
        boundary = SYMMETRIZED
    if not isinstance(boundary, BoundaryChoice):
        raise TypeError("boundary must be a BoundaryChoice or 'symmetrized'")
    eps = np.array([[0.0, 1.0], [-1.0, 0.0]])
    p = _aklt_pair_tensor()
    bulk = np.tensordot(p, eps, axes=(2, 0))
    tensors = [bulk.copy() for _ in range(N - 1)] + [p.copy()]
    if not boundary.symmetrized:
        tensors[0] = tensors[0][_EDGE[boundary.alpha]][None]
        tensors[-1] = tensors[-1][:, :, _EDGE[boundary.beta]][:, :, None]
    return MPS(tensors).canonicalize(0)


def aklt_correlator_analytic(r: int) -> float:
    """Infinite-chain AKLT two-point function <S^a_0 S^a_r> = (-1)^r (4/3) 3^-r."""
    if r < 1:
        raise ValueError("distance r must be >= 1")
    return (-1) ** r * (4.0 / 3.0) * 3.0 ** (-r)


def _dimer_block():
    # (|+-> + |-+> - |00>)/sqrt(3) split into two rank-3 tensors
    a = np.zeros((1, 3, 3))
    b = np.zeros((3, 3, 1))
    for k, (s, t, c) in enumerate([(0, 2, 1.0), (2, 0, 1.0), (1, 1, -1.0)]):
        a[0, s, k] = c / np.sqrt(3.0)
        b[k, t, 0] = 1.0
    return a, b


def dimer_pairs(N: int, parity: str = "-"):
    """Site pairs (0-based) forming the blocks of ``dimer_mps``.

    ``'-'`` pairs (0,1), (2,3), ...; ``'+'`` pairs (1,2), ..., (N-3,N-2) and
    joins the two end sites (0, N-1).
    """
    if N < 2 or N % 2:
        raise ValueError("dimer state needs an even N >= 2")
    if parity == "-":
        return [(j, j + 1) for j in range(0, N, 2)]
    if parity == "+":
        return [(j, j + 1) for j in range(1, N - 1, 2)] + [(0, N - 1)]
    raise ValueError("parity must be '+' or '-'")


def dimer_mps(N: int, parity: str = "-") -> MPS:
    """Product of two-site blocks (|+-> + |-+> - |00>)/sqrt(3)."""
    pairs = dimer_pairs(N, parity)
    a, b = _dimer_block()
    if parity == "-":
        tensors = []
        for _ in pairs:
            tensors += [a.copy(), b.copy()]
        return MPS(tensors).canonicalize(0)
    # the wrap-around block threads its bond index w through the inner blocks
    eye3 = np.eye(3)
    left = np.einsum("wv,sm->wsvm", eye3, a[0]).reshape(3, 3, 9)
    right = np.einsum("wv,mt->wmtv", eye3, b[..., 0]).reshape(9, 3, 3)
    tensors = [a.copy()]
    for _ in range(len(pairs) - 1):
        tensors += [left.copy(), right.copy()]
    tensors.append(b.copy())
    return MPS(tensors).canonicalize(0)


def _ghz_tensors(k):
    if k == 1:
        return [np.array([1.0, 0.0, 1.0]).reshape(1, 3, 1) / _R2]
    first = np.zeros((1, 3, 2))
    first[0, 0, 0] = first[0, 2, 1] = 1.0 / _R2
    mid = np.zeros((2, 3, 2))
    mid[0, 0, 0] = mid[1, 2, 1] = 1.0
    last = np.zeros((2, 3, 1))
    last[0, 0, 0] = last[1, 2, 0] = 1.0
    return [first] + [mid.copy() for _ in range(k - 2)] + [last]


def ghz_block_state(N: int, k: int) -> MPS:
    """floor(N/k) GHZ blocks (|+..+> + |-..->)/sqrt(2) of size k followed by
    one residual GHZ block of size N mod k (if nonzero).
    """
    if not 1 <= k <= N:
        raise ValueError("need 1 <= k <= N")
    s, r = divmod(N, k)
    tensors = []
    for _ in range(s):
        tensors += _ghz_tensors(k)
    if r:
        tensors += _ghz_tensors(r)
    return MPS(tensors).canonicalize(0)
