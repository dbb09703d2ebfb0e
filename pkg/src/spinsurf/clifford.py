"""Flat 4x4 Dirac algebra in the standard (Dirac) basis.

beta = diag(1, 1, -1, -1) and gamma^i = [[0, sigma_i], [-sigma_i, 0]], so
{gamma^i, gamma^j} = -2 delta^ij and beta gamma^i is Hermitian. Flat index
order follows the adapted frame (t1, t2, n): gamma^3 is the normal matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .geometry import GeometryFrame

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_ZERO2 = np.zeros((2, 2), dtype=complex)

IDENTITY = np.eye(4, dtype=complex)
BETA = np.diag([1, 1, -1, -1]).astype(complex)
GAMMA = np.array([np.block([[_ZERO2, s], [-s, _ZERO2]]) for s in PAULI])
SIGMA = np.array([np.kron(np.eye(2), s) for s in PAULI])
SIGMA3 = SIGMA[2]


@dataclass(frozen=True)
class SpinorMatrix:
    entries: NDArray[np.complex128]
    tag: str = "product"

    def __matmul__(self, other: SpinorMatrix) -> SpinorMatrix:
        return SpinorMatrix(self.entries @ other.entries, tag=f"{self.tag}*{other.tag}")


def gamma(i: int) -> SpinorMatrix:
    """Flat gamma^i for i in {1, 2, 3}."""
    return SpinorMatrix(GAMMA[i - 1], tag=f"gamma{i}")


def anticommutator(a: NDArray, b: NDArray) -> NDArray:
    return a @ b + b @ a


def commutator(a: NDArray, b: NDArray) -> NDArray:
    return a @ b - b @ a


def contract_gamma(components: NDArray) -> NDArray[np.complex128]:
    """components[..., i] gamma^i over the three flat indices."""
    return np.einsum("...i,ijk->...jk", np.asarray(components, dtype=complex), GAMMA)


def reduced_gamma(frame: GeometryFrame, a: int) -> SpinorMatrix:
    """gamma-bar^a = e^a_i gamma^i; a is 0 or 1 (q1, q2)."""
    return SpinorMatrix(contract_gamma(frame.e_inv[..., a, :]), tag=f"gamma_bar{a + 1}")


def unit_reduced_gamma(frame: GeometryFrame, a: int) -> SpinorMatrix:
    row = frame.e_inv[..., a, :]
    norm = np.linalg.norm(row, axis=-1, keepdims=True)
    return SpinorMatrix(contract_gamma(row / norm), tag=f"gamma_hat{a + 1}")


def grading(dim: int) -> NDArray[np.complex128]:
    """beta acting on a (dim // 4) node x 4-spinor space, spinor index fastest."""
    if dim % 4:
        raise ValueError(f"dimension {dim} is not a multiple of 4")
    return np.kron(np.eye(dim // 4), BETA)


def even_odd_split(m: SpinorMatrix | NDArray) -> tuple[NDArray, NDArray]:
    """Unique beta-grading projection: even = (M + beta M beta)/2, odd = M - even."""
    entries = m.entries if isinstance(m, SpinorMatrix) else np.asarray(m)
    if entries.shape[-1] == 4:
        graded = BETA @ entries @ BETA
    else:
        b = grading(entries.shape[-1])
        graded = b @ entries @ b
    even = 0.5 * (entries + graded)
    return even, entries - even
