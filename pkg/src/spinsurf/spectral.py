"""Grid discretisation of spinor operators and the block eigensolver.

Unknowns are ordered node-major with the spinor index fastest:
index = (i1 * n2 + i2) * 4 + s. Operators are kept as scipy sparse matrices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.sparse.linalg import norm as sparse_norm

from .errors import ConvergenceFailure, GridTooCoarse, NonPeriodicMismatch, UnsupportedChart
from .geometry import GeometryFrame, SurfaceChart, frame_at, frame_field

logger = logging.getLogger(__name__)

MIN_NODES = 8
DENSE_LIMIT = 5000
PAULI2 = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)

_FIRST = {
    2: {-1: -0.5, 1: 0.5},
    4: {-2: 1 / 12, -1: -2 / 3, 1: 2 / 3, 2: -1 / 12},
}
_SECOND = {
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    4: {-2: -1 / 12, -1: 4 / 3, 0: -5 / 2, 1: 4 / 3, 2: -1 / 12},
}


def stencil_symbols(order: int, kh: NDArray | float) -> tuple[NDArray, NDArray]:
    """Fourier symbols (first, second) of the central stencils, before dividing by h and h^2."""
    kh = np.asarray(kh, dtype=float)
    if order == 2:
        return 1j * np.sin(kh), -(2 - 2 * np.cos(kh))
    if order == 4:
        return 1j * (8 * np.sin(kh) - np.sin(2 * kh)) / 6, (-2 * np.cos(2 * kh) + 32 * np.cos(kh) - 30) / 12
    raise ValueError(f"unsupported stencil order {order}")


def derivative_1d(n: int, h: float, order: int, periodic: bool, derivative: int) -> sp.csr_matrix:
    """Central difference matrix; non-periodic axes drop the stencil entries that leave the grid."""
    table = (_FIRST if derivative == 1 else _SECOND)[order]
    scale = h if derivative == 1 else h * h
    rows, cols, data = [], [], []
    base = np.arange(n)
    for offset, weight in table.items():
        target = base + offset
        if periodic:
            keep = np.ones(n, dtype=bool)
            target = target % n
        else:
            keep = (target >= 0) & (target < n)
        rows.append(base[keep])
        cols.append(target[keep])
        data.append(np.full(int(keep.sum()), weight / scale))
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


@dataclass(frozen=True)
class Grid2D:
    n1: int
    n2: int
    domain: tuple[tuple[float, float], tuple[float, float]]
    periodic: tuple[bool, bool]
    order: int = 2

    def __post_init__(self) -> None:
        if min(self.n1, self.n2) < MIN_NODES:
            raise GridTooCoarse(
                f"grids need at least {MIN_NODES} nodes per axis", n1=self.n1, n2=self.n2
            )
        if self.order not in _FIRST:
            raise ValueError(f"unsupported stencil order {self.order}")

    @classmethod
    def for_chart(cls, chart: SurfaceChart, n1: int, n2: int, order: int = 2) -> Grid2D:
        return cls(n1=n1, n2=n2, domain=chart.domain, periodic=chart.periodic, order=order)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n1, self.n2

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def spacing(self) -> tuple[float, float]:
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.domain, self.shape))

    def axis_nodes(self, axis: int) -> NDArray:
        (lo, _), n, h = self.domain[axis], self.shape[axis], self.spacing[axis]
        # Non-periodic axes sit at cell centres so no node lands on a boundary or pole.
        offset = 0.0 if self.periodic[axis] else 0.5
        return lo + (np.arange(n) + offset) * h

    def nodes(self) -> tuple[NDArray, NDArray]:
        """Flattened node coordinates in unknown order."""
        q1, q2 = np.meshgrid(self.axis_nodes(0), self.axis_nodes(1), indexing="ij")
        return q1.ravel(), q2.ravel()

    def frames(self, chart: SurfaceChart, frame_angle: float = 0.0) -> GeometryFrame:
        q1, q2 = self.nodes()
        return frame_field(chart, q1, q2, frame_angle=frame_angle)

    def first_derivatives(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        d1 = [
            derivative_1d(n, h, self.order, p, 1)
            for n, h, p in zip(self.shape, self.spacing, self.periodic)
        ]
        return (
            sp.kron(d1[0], sp.identity(self.n2), format="csr"),
            sp.kron(sp.identity(self.n1), d1[1], format="csr"),
        )

    def second_derivatives(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        d2 = [
            derivative_1d(n, h, self.order, p, 2)
            for n, h, p in zip(self.shape, self.spacing, self.periodic)
        ]
        return (
            sp.kron(d2[0], sp.identity(self.n2), format="csr"),
            sp.kron(sp.identity(self.n1), d2[1], format="csr"),
        )

    def describe(self) -> dict[str, object]:
        return {
            "n1": self.n1,
            "n2": self.n2,
            "order": self.order,
            "periodic": list(self.periodic),
            "spacing": list(self.spacing),
        }


@dataclass
class OperatorTerms:
    """Coefficient fields of sum C_ab d_a d_b + B_a d_a + A, one 4x4 matrix per node and index."""

    second: NDArray
    first: NDArray
    zeroth: NDArray

    @classmethod
    def zeros(cls, nodes: int) -> OperatorTerms:
        return cls(
            second=np.zeros((nodes, 2, 2, 4, 4), dtype=complex),
            first=np.zeros((nodes, 2, 4, 4), dtype=complex),
            zeroth=np.zeros((nodes, 4, 4), dtype=complex),
        )

    def __add__(self, other: OperatorTerms) -> OperatorTerms:
        return OperatorTerms(
            second=self.second + other.second,
            first=self.first + other.first,
            zeroth=self.zeroth + other.zeroth,
        )

    def left_multiply(self, matrix: NDArray) -> OperatorTerms:
        return OperatorTerms(
            second=np.einsum("ij,...jk->...ik", matrix, self.second),
            first=np.einsum("ij,...jk->...ik", matrix, self.first),
            zeroth=np.einsum("ij,...jk->...ik", matrix, self.zeroth),
        )

    def is_zero(self) -> bool:
        return not (np.any(self.second) or np.any(self.first) or np.any(self.zeroth))


@dataclass
class GridOperator:
    matrix: sp.csr_matrix
    grid: Grid2D
    asymmetry: float = 0.0
    label: str = "H"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        return float(sparse_norm(self.matrix))

    def __add__(self, other: GridOperator) -> GridOperator:
        return GridOperator(
            matrix=(self.matrix + other.matrix).tocsr(),
            grid=self.grid,
            asymmetry=max(self.asymmetry, other.asymmetry),
            label=f"{self.label}+{other.label}",
        )

    def hermiticity_residual(self) -> float:
        total = self.norm
        if total == 0.0:
            return 0.0
        return float(sparse_norm(self.matrix - self.matrix.conj().T)) / total

    def dense(self) -> NDArray:
        return self.matrix.toarray()

    def block(self, sign: int) -> sp.csr_matrix:
        idx = block_indices(self.grid.size, sign)
        return self.matrix[idx][:, idx].tocsr()

    def off_block_norm(self) -> float:
        pos, neg = block_indices(self.grid.size, 1), block_indices(self.grid.size, -1)
        return float(sparse_norm(self.matrix[pos][:, neg]))


def block_indices(nodes: int, sign: int) -> NDArray:
    """Unknown indices of the upper (sign=+1) or lower (sign=-1) beta block."""
    spinors = np.array([0, 1]) if sign > 0 else np.array([2, 3])
    return (np.arange(nodes)[:, None] * 4 + spinors).ravel()


def _coefficient_matrix(coeff: NDArray) -> sp.bsr_matrix:
    nodes = coeff.shape[0]
    return sp.bsr_matrix((coeff, np.arange(nodes), np.arange(nodes + 1)), shape=(4 * nodes, 4 * nodes))


def discretize(
    terms: OperatorTerms,
    grid: Grid2D,
    weights: NDArray | None = None,
    chart: SurfaceChart | None = None,
    symmetrize: bool = True,
    label: str = "H",
) -> GridOperator:
    """Discretise the coefficient fields and project onto the Hermitian part under the sqrt(g) measure.

    With W the per-unknown weight, the returned matrix is the Hermitian part of
    W^1/2 H W^-1/2, which has the spectrum of H restricted to sqrt(g)-self-adjoint form.
    """
    if chart is not None and tuple(chart.periodic) != tuple(grid.periodic):
        raise NonPeriodicMismatch(
            "grid periodicity differs from the chart",
            chart=list(chart.periodic),
            grid=list(grid.periodic),
        )
    spin_identity = sp.identity(4, format="csr")
    first = grid.first_derivatives()
    second = grid.second_derivatives()

    h = _coefficient_matrix(terms.zeroth).tocsr()
    for a in range(2):
        if np.any(terms.first[:, a]):
            h = h + _coefficient_matrix(terms.first[:, a]) @ sp.kron(first[a], spin_identity)
        for b in range(2):
            if not np.any(terms.second[:, a, b]):
                continue
            stencil = second[a] if a == b else first[a] @ first[b]
            h = h + _coefficient_matrix(terms.second[:, a, b]) @ sp.kron(stencil, spin_identity)
    h = sp.csr_matrix(h)

    if not symmetrize:
        return GridOperator(matrix=h, grid=grid, label=label)

    if weights is not None:
        root = np.repeat(np.sqrt(weights), 4)
        h = (sp.diags(root) @ h @ sp.diags(1.0 / root)).tocsr()
    skew = h - h.conj().T
    total = float(sparse_norm(h))
    asymmetry = float(sparse_norm(skew)) / total if total else 0.0
    if asymmetry > 1e-12:
        logger.info("%s: pre-symmetrisation asymmetry %.3e", label, asymmetry)
    symmetric = (0.5 * (h + h.conj().T)).tocsr()
    symmetric.eliminate_zeros()
    return GridOperator(matrix=symmetric, grid=grid, asymmetry=asymmetry, label=label)


@dataclass
class EigenPair:
    block: str
    index: int
    value: float
    residual: float
    fourier: tuple[int, int]
    vector: NDArray | None = None


@dataclass
class GapRow:
    theta: float
    inplane: float
    normal: float
    geom_potential: float

    @property
    def splitting(self) -> float:
        """Zeeman-like spin gap of the row: the channel carried by the deformed SOC, proportional to alpha^2_2."""
        return self.inplane

    @property
    def total(self) -> float:
        return float(np.hypot(self.inplane, self.normal))


@dataclass
class SpectrumResult:
    pairs: list[EigenPair]
    diagnostics: dict[str, object] = field(default_factory=dict)
    gap_profile: list[GapRow] | None = None

    def values(self, block: str) -> NDArray:
        return np.array([p.value for p in self.pairs if p.block == block])

    @property
    def positive(self) -> NDArray:
        return self.values("positive")

    @property
    def negative(self) -> NDArray:
        return self.values("negative")

    @property
    def eigenvalues(self) -> NDArray:
        return np.sort(np.array([p.value for p in self.pairs]))

    @property
    def block_labels(self) -> list[str]:
        ordered = sorted(self.pairs, key=lambda p: p.value)
        return [p.block for p in ordered]

    @property
    def max_residual(self) -> float:
        return max((p.residual for p in self.pairs), default=0.0)

    def pairing_defect(self) -> float:
        """max |lambda+_i + lambda-_i|; zero when H - beta m is odd under the block swap."""
        pos, neg = self.positive, self.negative
        if len(pos) == 0:
            return 0.0
        return float(np.max(np.abs(pos + neg)))

    def doublet_splitting(self) -> float | None:
        """lambda2 - lambda1 of the lowest positive states sharing a dominant |q2| Fourier index.

        None when no index holds two of the solved states.
        """
        groups: dict[int, list[float]] = {}
        for pair in sorted((p for p in self.pairs if p.block == "positive"), key=lambda p: p.value):
            members = groups.setdefault(abs(pair.fourier[1]), [])
            members.append(pair.value)
            if len(members) == 2:
                return members[1] - members[0]
        return None


def dominant_fourier_index(vector: NDArray, shape: tuple[int, int]) -> tuple[int, int]:
    field_ = vector.reshape(shape + (-1,))
    power = np.sum(np.abs(np.fft.fft2(field_, axes=(0, 1))) ** 2, axis=-1)
    i, j = np.unravel_index(int(np.argmax(power)), shape)
    freq1 = np.fft.fftfreq(shape[0], d=1.0 / shape[0])
    freq2 = np.fft.fftfreq(shape[1], d=1.0 / shape[1])
    return int(freq1[i]), int(freq2[j])


def _gershgorin(matrix: sp.csr_matrix) -> tuple[float, float]:
    diag = matrix.diagonal().real
    radius = np.asarray(abs(matrix).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - radius)), float(np.max(diag + radius))


def _solve_block(block: sp.csr_matrix, k: int, lowest: bool, mode: str, tol: float) -> tuple[NDArray, NDArray]:
    n = block.shape[0]
    if mode == "dense" or (mode == "auto" and n <= DENSE_LIMIT) or k >= n - 1:
        window = [0, k - 1] if lowest else [n - k, n - 1]
        values, vectors = scipy.linalg.eigh(block.toarray(), subset_by_index=window)
        return values, vectors
    lower, upper = _gershgorin(block)
    margin = 1e-2 * max(upper - lower, 1.0)
    sigma = lower - margin if lowest else upper + margin
    try:
        values, vectors = eigsh(block, k=k, sigma=sigma, which="LM", tol=tol)
    except ArpackNoConvergence as exc:
        achieved = [
            float(np.linalg.norm(block @ v - lam * v))
            for lam, v in zip(exc.eigenvalues, exc.eigenvectors.T)
        ]
        raise ConvergenceFailure(
            "iterative eigensolver did not converge",
            requested=k,
            converged=len(exc.eigenvalues),
            achieved_residual=max(achieved, default=float("nan")),
        ) from exc
    order = np.argsort(values)
    return values[order], vectors[:, order]


def eigensolve(
    operator: GridOperator,
    k: int,
    mode: str = "auto",
    tol: float = 1e-10,
    keep_vectors: bool = False,
) -> SpectrumResult:
    """Lowest k states of the positive block and their k mirrored partners at the top of the negative block."""
    grid = operator.grid
    diagnostics: dict[str, object] = {
        "grid": grid.describe(),
        "hermiticity_residual": operator.hermiticity_residual(),
        "asymmetry": operator.asymmetry,
        "mode": mode,
    }
    if k <= 0:
        return SpectrumResult(pairs=[], diagnostics=diagnostics)

    leak = operator.off_block_norm()
    if leak > 1e-12 * max(operator.norm, 1.0):
        logger.warning("operator couples the beta blocks (norm %.3e); solving blocks separately", leak)

    pairs: list[EigenPair] = []
    block_dim = 2 * grid.size
    if k > block_dim:
        raise GridTooCoarse("grid holds fewer states per block than requested", k=k, block_dim=block_dim)
    for sign, name in ((1, "positive"), (-1, "negative")):
        block = operator.block(sign)
        values, vectors = _solve_block(block, k, lowest=sign > 0, mode=mode, tol=tol)
        found = []
        for lam, vec in zip(values, vectors.T):
            residual = float(np.linalg.norm(block @ vec - lam * vec))
            fourier = dominant_fourier_index(vec, grid.shape)
            found.append((float(lam), residual, fourier, vec))
        # Mirror order on the negative block so index i pairs with positive index i.
        direction = 1.0 if sign > 0 else -1.0
        found.sort(key=lambda item: (round(direction * item[0], 9), item[2]))
        for index, (lam, residual, fourier, vec) in enumerate(found):
            pairs.append(
                EigenPair(
                    block=name,
                    index=index,
                    value=lam,
                    residual=residual,
                    fourier=fourier,
                    vector=vec if keep_vectors else None,
                )
            )
    diagnostics["max_residual"] = max(p.residual for p in pairs)
    logger.debug("solved %d pairs per block, max residual %.3e", k, diagnostics["max_residual"])
    return SpectrumResult(pairs=pairs, diagnostics=diagnostics)


def _spin_decomposition(block: NDArray) -> NDArray:
    """Real b with block = a0 I + b . sigma for a Hermitian 2x2 block."""
    return np.real(np.einsum("kij,...ji->...k", PAULI2, block)) / 2


def local_gap_profile(terms: OperatorTerms, grid: Grid2D, chart: SurfaceChart, harmonic: int = 1) -> list[GapRow]:
    """Frozen-row spin splitting of the given q2 harmonic, one row per q1 node.

    The positive-block symbol is split into its sigma_1, sigma_2 part (the in-plane
    channel, driven by the curvature-deformed SOC) and its sigma_3 part (the normal
    channel, driven by the spin connection). Only meaningful when the coefficients
    do not depend on q2.
    """
    if not chart.axisymmetric:
        raise UnsupportedChart("gap profile needs a chart with a cyclic coordinate", preset=chart.preset_tag)
    h2 = grid.spacing[1]
    s1, s2 = stencil_symbols(grid.order, harmonic * h2)
    s1, s2 = s1 / h2, s2 / h2**2
    rows = grid.n2
    second = terms.second[::rows, 1, 1]
    first = terms.first[::rows, 1]
    symbol = s2 * second + s1 * first + terms.zeroth[::rows]
    hermitian = 0.5 * (symbol + np.conj(np.swapaxes(symbol, -1, -2)))
    b = _spin_decomposition(hermitian[:, :2, :2])
    thetas = grid.axis_nodes(0)
    frames = frame_field(chart, thetas, np.full_like(thetas, grid.axis_nodes(1)[0]))
    geom = frames.geometric_potential
    return [
        GapRow(
            theta=float(theta),
            inplane=float(2 * np.hypot(bk[0], bk[1])),
            normal=float(2 * abs(bk[2])),
            geom_potential=float(gp),
        )
        for theta, bk, gp in zip(thetas, b, geom)
    ]


@dataclass
class GapScanRow:
    theta: float
    zeeman_coeff: float
    spin_conn_coeff: float
    doublet_splitting: float
    inplane_splitting: float
    normal_splitting: float
    total_splitting: float
    geom_potential: float


def gap_scan(result: SpectrumResult, chart: SurfaceChart) -> list[GapScanRow]:
    """Analytic curvature coefficients alongside the measured splitting per q1 row.

    The Zeeman coefficient is alpha^2_2 and the spin-connection coefficient is Omega_2,
    both read from the geometry at the row's q1.
    """
    if not chart.axisymmetric:
        raise UnsupportedChart("gap scan needs an axisymmetric chart", preset=chart.preset_tag)
    if result.gap_profile is None:
        raise ValueError("spectrum result carries no gap profile")
    q2 = chart.domain[1][0]
    rows = []
    for row in result.gap_profile:
        frame = frame_at(chart, (row.theta, q2))
        rows.append(
            GapScanRow(
                theta=row.theta,
                zeeman_coeff=float(frame.alpha_mixed[1, 1]),
                spin_conn_coeff=float(frame.omega[1]),
                doublet_splitting=row.splitting,
                inplane_splitting=row.inplane,
                normal_splitting=row.normal,
                total_splitting=row.total,
                geom_potential=row.geom_potential,
            )
        )
    return rows
