"""Numerical Foldy-Wouthuysen block diagonalisation.

Each step conjugates H by the exact unitary exp(beta O / 2m), where O is the
beta-odd part of the current operator. The leftover odd norm after a fixed
number of steps measures how far the 1/m expansion has converged.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .clifford import commutator, even_odd_split, grading
from .errors import NonHermitianInput
from .spectral import GridOperator

logger = logging.getLogger(__name__)

MAX_STEPS = 3


@dataclass(frozen=True)
class BlockOperator:
    matrix: NDArray[np.complex128]
    meta: dict[str, object] = field(default_factory=dict)

    @classmethod
    def from_grid_operator(cls, operator: GridOperator, m: float) -> BlockOperator:
        return cls(
            matrix=operator.dense().astype(complex),
            meta={"m": m, "grid": operator.grid.describe(), "steps": 0},
        )

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def grading(self) -> NDArray[np.complex128]:
        return grading(self.dim)

    @property
    def steps(self) -> int:
        return int(self.meta.get("steps", 0))

    def hermiticity_defect(self) -> float:
        scale = max(np.linalg.norm(self.matrix), 1.0)
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T) / scale)

    def eigenvalues(self) -> NDArray:
        return scipy.linalg.eigvalsh(self.matrix)


def odd_residual_norm(h: BlockOperator) -> float:
    """Frobenius norm of (H - beta H beta)/2."""
    _, odd = even_odd_split(h.matrix)
    return float(np.linalg.norm(odd))


def fw_step(h: BlockOperator, m: float) -> BlockOperator:
    if m <= 0:
        raise ValueError(f"mass must be positive, got {m}")
    defect = h.hermiticity_defect()
    if defect > 1e-11:
        raise NonHermitianInput("FW step needs a Hermitian operator", defect=defect)
    _, odd = even_odd_split(h.matrix)
    if not np.any(odd):
        return BlockOperator(matrix=h.matrix.copy(), meta={**h.meta, "steps": h.steps + 1, "unitarity": 0.0})
    beta = h.grading
    unitary = scipy.linalg.expm(beta @ odd / (2 * m))
    rotated = unitary @ h.matrix @ unitary.conj().T
    unitarity = float(np.linalg.norm(unitary.conj().T @ unitary - np.eye(h.dim), ord=2))
    return BlockOperator(
        matrix=0.5 * (rotated + rotated.conj().T),
        meta={**h.meta, "steps": h.steps + 1, "unitarity": unitarity},
    )


def fw_sequence(h: BlockOperator, m: float, n_steps: int) -> tuple[BlockOperator, list[float]]:
    """Apply `n_steps` FW steps; the history holds the odd norm before and after each one."""
    if not 0 <= n_steps <= MAX_STEPS:
        raise ValueError(f"n_steps must lie in 0..{MAX_STEPS}, got {n_steps}")
    history = [odd_residual_norm(h)]
    current = h
    for _ in range(n_steps):
        current = fw_step(current, m)
        history.append(odd_residual_norm(current))
    if any(later > earlier for earlier, later in zip(history, history[1:])):
        logger.warning("odd residual grew during FW steps at m=%g: %s", m, history)
    return current, history


def fw_even_series(h: BlockOperator, m: float) -> NDArray[np.complex128]:
    """beta m + E + beta O^2/2m - [O,[O,E]]/8m^2 with E the even part net of beta m."""
    beta = h.grading
    even, odd = even_odd_split(h.matrix)
    rest = even - m * beta
    return (
        m * beta
        + rest
        + beta @ odd @ odd / (2 * m)
        - commutator(odd, commutator(odd, rest)) / (8 * m**2)
    )


@dataclass
class ScalingRun:
    m: float
    history: list[float]
    converged: bool


@dataclass
class FWScaling:
    runs: list[ScalingRun]
    n_steps: int
    slope: float | None

    @property
    def final_residuals(self) -> NDArray:
        return np.array([run.history[-1] for run in self.runs])

    def rows(self) -> list[tuple[float, int, float]]:
        return [(run.m, step, value) for run in self.runs for step, value in enumerate(run.history)]


def fw_scaling(
    builder: Callable[[float], BlockOperator], masses: list[float], n_steps: int = MAX_STEPS
) -> FWScaling:
    """Sweep masses and fit log(final odd residual) against log(m)."""
    runs = []
    for m in masses:
        _, history = fw_sequence(builder(m), m, n_steps)
        converged = all(later <= earlier * (1 + 1e-12) for earlier, later in zip(history, history[1:]))
        runs.append(ScalingRun(m=m, history=history, converged=converged))
        logger.info("m=%g residuals %s", m, ", ".join(f"{v:.3e}" for v in history))
    finals = np.array([run.history[-1] for run in runs])
    slope = None
    if len(masses) >= 2 and np.all(finals > 0):
        slope = float(np.polyfit(np.log(masses), np.log(finals), 1)[0])
    return FWScaling(runs=runs, n_steps=n_steps, slope=slope)
