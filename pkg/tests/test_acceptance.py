"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest -m acceptance -s``. The DMRG-backed criteria take
tens of minutes on one core.
"""
import math
import time
from functools import lru_cache

import numpy as np
import pytest

from spin1qfi.analytic import aklt_correlator_analytic, aklt_mps, dimer_mps, ghz_block_state
from spin1qfi.dmrg import DmrgParams, dmrg_ground_state
from spin1qfi.exact import observable_matrix, qfi_pure_dense, verify_appendix_identities
from spin1qfi.fits import (FitError, ScalingDataset, fit_correlator_decay, fit_power,
                           select_model, subsample, wzw_scaling_dimension)
from spin1qfi.models import ModelSpec, build_mpo
from spin1qfi.mps import MPS, TruncationParams, local_correlator, string_correlator
from spin1qfi.qfi import KINDS, ObservableSpec, k_producible_bound, qfi

pytestmark = pytest.mark.acceptance

CHI = 64
STRING_Z = ObservableSpec("z", "string")
STRING_X = ObservableSpec("x", "string")
STAG_Z = ObservableSpec("z", "staggered_local")
STAG_X = ObservableSpec("x", "staggered_local")


@lru_cache(maxsize=None)
def _ground(spec: ModelSpec, chi: int = CHI, sectors: tuple = ()):
    # On long Haldane chains the sz0 run can stall in an edge-polarized state
    # above the singlet; for SU(2) models keep the lower bare energy of both.
    if not sectors:
        sectors = ("sz0", "singlet") if spec.model in ("BLBQ", "BLBQ_theta") else ("sz0",)
    runs = []
    for sector in sectors:
        params = DmrgParams(energy_tol=1e-8, sector=sector, truncation=TruncationParams(chi))
        psi, energy, rep = dmrg_ground_state(build_mpo(spec), params)
        runs.append((energy, psi, rep))
    energy, psi, rep = min(runs, key=lambda run: run[0])
    return psi, rep


def _series(model, sizes, observables, chi=CHI, sectors=(), **couplings):
    """f_Q per observable over sizes; also the number of unconverged runs."""
    out = {o: [] for o in observables}
    bad = 0
    for N in sizes:
        psi, rep = _ground(ModelSpec(model, N, **couplings), chi, sectors)
        bad += not rep.converged
        for o in observables:
            out[o].append((N, qfi(psi, o).f_Q))
    return {o: ScalingDataset.from_points(v, o.label()) for o, v in out.items()}, bad


def _power(data):
    try:
        return fit_power(data)
    except FitError as exc:
        return exc.best


def _fmt(fit, *names):
    return ", ".join(f"{n}={fit.params[n]:.4f}+-{fit.stderr[n]:.1g}" for n in names)


def _boundary_traced_variance(psi, O):
    """Variance in the density matrix an MPS with open outer bonds stands for.

    The outer indices are traced over, as in every expectation routine, so
    ``rho`` is the normalized sum of the projectors on the boundary slices.
    """
    first, last = psi.tensors[0], psi.tensors[-1]
    z = m1 = m2 = 0.0
    for a in range(first.shape[0]):
        for b in range(last.shape[2]):
            part = MPS([first[a:a + 1]] + psi.tensors[1:-1] + [last[:, :, b:b + 1]]).to_dense()
            op = O @ part
            z += np.vdot(part, part).real
            m1 += np.vdot(part, op).real
            m2 += np.vdot(op, op).real
    return m2 / z - (m1 / z) ** 2


def test_c01_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    for N in (4, 6, 8):
        states = {
            "dmrg_blbq": _ground(ModelSpec("BLBQ", N, beta=0.3), 32)[0],
            "dmrg_xxz": _ground(ModelSpec("XXZ", N, J_z=0.5), 32)[0],
            "aklt": aklt_mps(N),
            "dimer-": dimer_mps(N, "-"),
            "dimer+": dimer_mps(N, "+"),
            "ghz2": ghz_block_state(N, 2),
            "ghzN": ghz_block_state(N, N),
        }
        for psi in states.values():
            vec = psi.to_dense()
            for axis in "xz":
                for kind in KINDS:
                    obs = ObservableSpec(axis, kind)
                    ref = qfi_pure_dense(vec, observable_matrix(obs, N))
                    worst = max(worst, abs(qfi(psi, obs).F_Q - ref))
                    count += 1
        sym = aklt_mps(N, "symmetrized")
        for axis in "xz":
            for kind in KINDS:
                obs = ObservableSpec(axis, kind)
                ref = _boundary_traced_variance(sym, observable_matrix(obs, N))
                worst = max(worst, abs(qfi(sym, obs).F_Q - ref))
                count += 1
    dt = time.perf_counter() - t0
    criterion(1, "oracle equivalence", worst < 1e-8 and dt < 300,
              f"max |engine - dense| = {worst:.2e} over {count} cases, {dt:.0f}s")


def test_c02_aklt_correlator(criterion):
    psi = aklt_mps(60)
    i0 = 22
    worst = 0.0
    for axis in "zx":
        for r in range(1, 16):
            c = local_correlator(psi, axis, i0, i0 + r)
            worst = max(worst, abs(c - (-1) ** r * 4 / 3 * 3.0 ** -r))
            assert aklt_correlator_analytic(r) == pytest.approx((-1) ** r * 4 / 3 * 3.0 ** -r)
    criterion(2, "AKLT bulk correlator", worst < 1e-6, f"max deviation {worst:.2e} for r=1..15")


def test_c03_aklt_linear_law(criterion):
    data = ScalingDataset.from_points(
        [(N, qfi(aklt_mps(N, "symmetrized"), STRING_Z).f_Q) for N in range(20, 61)])
    fit = fit_power(data)
    ok = abs(fit["delta"] - 1) <= 0.01 and abs(fit["b"] - 0.444) <= 0.010
    criterion(3, "AKLT linear QFI law", ok, _fmt(fit, "b", "delta"))


def test_c04_dimer_value(criterion):
    worst = 0.0
    for N in range(2, 41, 2):
        for parity in ("-", "+") if N >= 4 else ("-",):
            worst = max(worst, abs(qfi(dimer_mps(N, parity), STRING_Z).f_Q - 4 / 3))
    criterion(4, "dimer f_Q = 4/3", worst < 1e-10, f"max deviation {worst:.2e}, even N <= 40")


def test_c05_ghz_saturation(criterion):
    worst, wrong = 0.0, []
    local_z = ObservableSpec("z", "local")
    for N in range(1, 13):
        for k in range(1, N + 1):
            r = qfi(ghz_block_state(N, k), local_z)
            worst = max(worst, abs(r.F_Q - k_producible_bound(N, k)))
            if r.depth_witness != k:
                wrong.append((N, k, r.depth_witness))
    criterion(5, "GHZ bound saturation", worst < 1e-10 and not wrong,
              f"max |F - (s k^2 + r^2)| = {worst:.1e}, witness mismatches {wrong}")


def test_c06_heisenberg(criterion):
    t0 = time.perf_counter()
    # at chi = 64 the edge-entangled singlet loses to an edge-polarized state
    # for N >= 56: its truncation cost exceeds the exponentially small edge gap.
    # Even-N Heisenberg ground states are unique singlets (Lieb-Mattis).
    sizes = list(range(16, 65, 8))
    series, bad = _series("BLBQ", sizes, [STRING_Z], chi=2 * CHI, sectors=("singlet",), beta=0.0)
    psi, _ = _ground(ModelSpec("BLBQ", 64, beta=0.0), 2 * CHI, ("singlet",))
    plateau = float(np.mean([string_correlator(psi, "z", 16, j) for j in range(32, 49)]))
    fit = _power(series[STRING_Z])
    dt = time.perf_counter() - t0
    ok = (abs(plateau + 0.36) <= 0.02 and abs(fit["delta"] - 1) <= 0.02
          and abs(fit["b"] - 0.355) <= 0.02 and dt < 1200)
    criterion(6, "Heisenberg string order", ok,
              f"plateau {plateau:.4f}, {_fmt(fit, 'b', 'delta')}, N={sizes[0]}..{sizes[-1]}, chi={2 * CHI}, "
              f"unconverged {bad}, {dt:.0f}s")


def test_c07_takhtajan_babujian(criterion):
    t0 = time.perf_counter()
    sizes = list(range(15, 64, 8))
    series, bad = _series("BLBQ", sizes, [STRING_Z, STAG_Z], beta=1.0)
    fz = _power(subsample(series[STRING_Z], "odd_N"))
    fs = _power(subsample(series[STAG_Z], "odd_N"))
    psi, _ = _ground(ModelSpec("BLBQ", 63, beta=1.0))
    i0 = 63 // 4
    pts = [(j - i0, (-1) ** (j - i0) * local_correlator(psi, "z", i0, j)) for j in range(i0 + 2, 63 - i0)]
    corr = fit_correlator_decay(ScalingDataset.from_points(pts), "power")
    dt = time.perf_counter() - t0
    ok = (abs(fz["delta"] - 0.25) <= 0.05 and abs(fs["delta"] - 0.24) <= 0.06
          and abs(corr["eta"] - 0.75) <= 0.10 and dt < 2700)
    criterion(7, "Takhtajan-Babujian exponents", ok,
              f"string_z delta={fz['delta']:.4f}, staggered_z delta={fs['delta']:.4f}, "
              f"eta={corr['eta']:.4f}, odd N={sizes[0]}..{sizes[-1]}, unconverged {bad}, {dt:.0f}s")


def test_c08_dimer_trimer_log(criterion):
    t0 = time.perf_counter()
    cases = [(2.0, range(12, 49, 4), "even_N", 0.58),
             (4.0, range(12, 49, 4), "even_N", 0.405),
             (-2.0, range(12, 49, 6), "period3_residue(0)", 0.19)]
    parts, ok = [], True
    for beta, sizes, rule, b_ref in cases:
        series, bad = _series("BLBQ", list(sizes), [STRING_Z], beta=beta)
        sel = select_model(subsample(series[STRING_Z], rule))
        good = sel.family == "log" and abs(sel.params.get("b", math.inf) - b_ref) <= 0.1
        ok &= good
        txt = f"log b={sel['b']:.4f}" if sel.family == "log" else sel.family
        if sel.family == "power":
            txt += f" delta={sel['delta']:.4f}"
        parts.append(f"beta={beta:g}: {txt} (ref b {b_ref}), unconverged {bad}")
    dt = time.perf_counter() - t0
    criterion(8, "dimer/trimer log scaling", ok and dt < 1800, "; ".join(parts) + f", {dt:.0f}s")


def test_c09_xxz(criterion):
    t0 = time.perf_counter()
    sizes = list(range(12, 49, 4))
    obs = [STAG_X, STRING_X, STRING_Z]
    s0, bad0 = _series("XXZ", sizes, obs, J_z=0.0)
    s1, bad1 = _series("XXZ", sizes, obs, J_z=1.186)
    s2, bad2 = _series("XXZ", sizes, obs, J_z=1.0)
    st0, sx0 = _power(s0[STAG_X]), _power(s0[STRING_X])
    z0 = select_model(s0[STRING_Z])
    z0_ok = z0.family == "const" or (z0.family == "power" and abs(z0["delta"]) <= 0.2)
    sx1 = _power(s1[STRING_X])
    z1 = select_model(s1[STRING_Z])
    fx, fz = _power(s2[STRING_X]), _power(s2[STRING_Z])
    iso = all(abs(fx[k] - fz[k]) <= 2 * math.hypot(fx.stderr[k], fz.stderr[k]) for k in ("b", "delta"))
    dt = time.perf_counter() - t0
    ok = (abs(st0["delta"] - 0.757) <= 0.03 and abs(sx0["delta"] - 0.757) <= 0.03 and z0_ok
          and abs(sx1["delta"] - 0.73) <= 0.05 and z1.family == "const" and iso and dt < 3600)
    z0_txt = z0.family + (f" delta={z0['delta']:.4f}" if z0.family == "power" else "")
    criterion(9, "XXZ criticality", ok,
              f"J_z=0: stag_x delta={st0['delta']:.4f}, string_x delta={sx0['delta']:.4f}, "
              f"string_z {z0_txt}; J_z=1.186: string_x delta={sx1['delta']:.4f}, string_z {z1.family}; "
              f"J_z=1: |db|={abs(fx['b'] - fz['b']):.1e}, |ddelta|={abs(fx['delta'] - fz['delta']):.1e}, "
              f"isotropic {iso}; unconverged {bad0 + bad1 + bad2}, {dt:.0f}s")


def test_c10_kennedy_tasaki(criterion):
    t0 = time.perf_counter()
    failed, worst = [], 0.0
    for N in range(3, 7):
        rep = verify_appendix_identities(N, tol=1e-10)
        for chk in rep.checks:
            worst = max(worst, chk.residual)
            if not chk.passed:
                failed.append(f"{chk.name}@N={N}")
    dt = time.perf_counter() - t0
    criterion(10, "Kennedy-Tasaki identities", not failed and worst < 1e-10 and dt < 120,
              f"max residual {worst:.1e}, failures {failed}, {dt:.0f}s")


def test_c11_wzw(criterion):
    eta22 = wzw_scaling_dimension(2, 2)[2]
    eta31 = wzw_scaling_dimension(3, 1)[2]
    criterion(11, "WZW exponents", str(eta22) == "3/4" and str(eta31) == "4/3",
              f"eta(2,2)={eta22}, eta(3,1)={eta31}")
