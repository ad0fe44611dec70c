"""Spin-1 single-site operators.

All matrices live in the S^z eigenbasis ordered (m=+1, 0, -1) and are
stored as complex arrays.
"""
import numpy as np

AXES = ("x", "y", "z")

_R2 = 1.0 / np.sqrt(2.0)

SX = np.array([[0, _R2, 0], [_R2, 0, _R2], [0, _R2, 0]], dtype=complex)
SY = np.array([[0, -1j * _R2, 0], [1j * _R2, 0, -1j * _R2], [0, 1j * _R2, 0]], dtype=complex)
SZ = np.diag([1.0, 0.0, -1.0]).astype(complex)
ID = np.eye(3, dtype=complex)

for _m in (SX, SY, SZ, ID):
    _m.setflags(write=False)

_BY_AXIS = {"x": SX, "y": SY, "z": SZ}


def spin1_matrices():
    """Return copies of ``(Sx, Sy, Sz)`` for spin 1."""
    return SX.copy(), SY.copy(), SZ.copy()


def spin_component(axis):
    if axis not in _BY_AXIS:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    return _BY_AXIS[axis].copy()


def exp_ipi_spin(axis):
    """Return ``exp(i*pi*S^axis)``.

    For spin 1 the eigenvalues of ``S^axis`` are -1, 0, 1 so the exponential
    reduces to ``1 - 2 (S^axis)^2``.
    """
    s = spin_component(axis)
    return ID - 2.0 * (s @ s)


def staggered(ops, start=0):
    """Multiply the j-th operator of a list by (-1)^(j + start)."""
    return [((-1) ** (j + start)) * o for j, o in enumerate(ops)]
