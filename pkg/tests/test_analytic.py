import math

import numpy as np
import pytest

from spin1qfi.analytic import (BoundaryChoice, aklt_correlator_analytic, aklt_mps, dimer_mps,
                               dimer_pairs, ghz_block_state)
from spin1qfi.models import ModelSpec, dense_hamiltonian, p2_projector
from spin1qfi.mps import expectation_operator_string, local_correlator, one_point_strings
from spin1qfi.qfi import ObservableSpec, qfi
from spin1qfi.spin import SZ, exp_ipi_spin


def _p2_on(state, i, N):
    p = p2_projector().reshape(3, 3, 3, 3)
    t = state.reshape((3,) * N)
    out = np.tensordot(p, t, axes=([2, 3], [i, i + 1]))
    return np.moveaxis(out, [0, 1], [i, i + 1]).reshape(-1)


@pytest.mark.parametrize("boundary", [BoundaryChoice("up", "up"), BoundaryChoice("up", "down"),
                                      BoundaryChoice("down", "up"), BoundaryChoice("down", "down")])
def test_aklt_annihilated_by_projectors(boundary):
    m = aklt_mps(5, boundary)
    assert m.max_bond == 2
    psi = m.to_dense()
    assert abs(np.linalg.norm(psi) - 1) < 1e-12
    for i in range(4):
        assert np.linalg.norm(_p2_on(psi, i, 5)) < 1e-12


def test_aklt_projector_energy_zero():
    psi = aklt_mps(4).to_dense()
    H = dense_hamiltonian(ModelSpec("AKLT_projector", 4)).toarray() + 2 / 3 * 3 * np.eye(81)
    assert abs(np.vdot(psi, H @ psi)) < 1e-12


def test_aklt_diagonal_terms():
    m = aklt_mps(6, "symmetrized")
    for i in range(6):
        assert abs(expectation_operator_string(m, [(i, SZ @ SZ)]) - 2 / 3) < 1e-8
    # fixed edges: bulk value reached exponentially fast
    m = aklt_mps(40)
    assert abs(expectation_operator_string(m, [(20, SZ @ SZ)]) - 2 / 3) < 1e-8


def test_aklt_in_exact_ground_space():
    spec = ModelSpec("BLBQ", 8, beta=-1 / 3)
    H = dense_hamiltonian(spec).toarray()
    w, v = np.linalg.eigh(H)
    sub = v[:, np.abs(w - w[0]) < 1e-8]
    assert sub.shape[1] == 4
    for b in ("up", "down"):
        psi = aklt_mps(8, BoundaryChoice(b, "up")).to_dense()
        assert np.linalg.norm(sub.T @ psi) ** 2 > 1 - 1e-8


def test_aklt_correlator_values():
    assert aklt_correlator_analytic(1) == pytest.approx(-4 / 9, abs=1e-15)
    assert aklt_correlator_analytic(2) == pytest.approx(4 / 27, abs=1e-15)
    assert aklt_correlator_analytic(3) == pytest.approx(-4 / 81, abs=1e-15)
    with pytest.raises(ValueError):
        aklt_correlator_analytic(0)


def test_aklt_bulk_correlators():
    m = aklt_mps(40)
    for r in range(1, 12):
        assert abs(local_correlator(m, "z", 12, 12 + r) - aklt_correlator_analytic(r)) < 1e-6


def test_dimer_state_two_sites():
    psi = dimer_mps(2).to_dense()
    ref = np.zeros(9)
    ref[2] = ref[6] = 1 / math.sqrt(3)
    ref[4] = -1 / math.sqrt(3)
    np.testing.assert_allclose(psi * np.sign(psi[2]), ref, atol=1e-14)


@pytest.mark.parametrize("parity", ["+", "-"])
def test_dimer_properties(parity):
    N = 6
    m = dimer_mps(N, parity)
    assert abs(m.norm() - 1) < 1e-12
    np.testing.assert_allclose(one_point_strings(m, SZ).real, 0, atol=1e-14)
    v = one_point_strings(m, SZ, exp_ipi_spin("z"), "left")
    assert abs(v.sum()) < 1e-10
    # swapping the two sites of every block leaves the state unchanged
    psi = m.to_dense().reshape((3,) * N)
    for a, b in dimer_pairs(N, parity):
        np.testing.assert_allclose(np.swapaxes(psi, a, b), psi, atol=1e-14)
    assert m.max_bond <= 9 if parity == "+" else m.max_bond <= 3


def test_dimer_pairs_and_errors():
    assert dimer_pairs(6, "-") == [(0, 1), (2, 3), (4, 5)]
    assert dimer_pairs(6, "+") == [(1, 2), (3, 4), (0, 5)]
    with pytest.raises(ValueError):
        dimer_mps(5)
    with pytest.raises(ValueError):
        dimer_mps(4, "x")


@pytest.mark.parametrize("N,k,F", [(4, 4, 16), (4, 2, 8), (5, 2, 9)])
def test_ghz_examples(N, k, F):
    r = qfi(ghz_block_state(N, k), ObservableSpec("z", "local"))
    assert abs(r.F_Q - F) < 1e-10


def test_ghz_structure():
    m = ghz_block_state(5, 5)
    psi = m.to_dense()
    assert abs(psi[0] - 1 / math.sqrt(2)) < 1e-14 and abs(psi[-1] - 1 / math.sqrt(2)) < 1e-14
    assert m.max_bond == 2
    with pytest.raises(ValueError):
        ghz_block_state(4, 5)
