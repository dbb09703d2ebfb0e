"""Surface effective Hamiltonian, confinement corrections and the normal problem.

H_s = beta m + (beta/2m) X, where X collects the squared surface Dirac operator,
the curvature spin-orbit term, the Zeeman-like term, the normal-connection term
and the geometric potential. Every piece is a set of per-node coefficient fields
that `spectral.discretize` turns into a sparse grid operator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numpy.typing import NDArray

from .clifford import BETA, GAMMA, IDENTITY, SIGMA, SIGMA3, contract_gamma, gamma, reduced_gamma, unit_reduced_gamma
from .errors import ConfigInvalid, GridTooCoarse, UnknownCase
from .geometry import EPSILON, GeometryFrame, SurfaceChart, frame_field
from .spectral import Grid2D, GridOperator, OperatorTerms, derivative_1d, discretize

logger = logging.getLogger(__name__)

HALF_I_SIGMA3 = 0.5j * SIGMA3
GAMMA3 = GAMMA[2]
TERM_NAMES = ("kinetic", "soc", "zeeman_like", "normal_conn", "geom_pot", "mass")
CASE_ALIASES = {
    "a": "linear",
    "linear": "linear",
    "b": "harmonic",
    "harmonic": "harmonic",
    "c": "square_well",
    "square_well": "square_well",
}
MIN_NORMAL_NODES = 64


@dataclass(frozen=True)
class ConfinementCase:
    kind: str
    m: float
    omega: float = 0.0
    width: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in CASE_ALIASES:
            raise UnknownCase(f"unknown confinement case {self.kind!r}", known=sorted(set(CASE_ALIASES.values())))
        object.__setattr__(self, "kind", CASE_ALIASES[self.kind])
        if self.m <= 0:
            raise ConfigInvalid("mass must be positive", field="physics.m", value=self.m)
        if self.kind == "square_well" and self.width <= 0:
            raise ConfigInvalid("square well needs a positive width", field="physics.L_well", value=self.width)
        if self.kind != "square_well" and self.omega <= 0:
            raise ConfigInvalid("confinement frequency must be positive", field="physics.omega", value=self.omega)

    @property
    def label(self) -> str:
        return {"linear": "a", "harmonic": "b", "square_well": "c"}[self.kind]


@dataclass
class HamiltonianTerms:
    """Per-term coefficient fields of H_s, each already carrying its beta/2m or beta m prefactor."""

    chart: SurfaceChart
    grid: Grid2D
    m: float
    frames: GeometryFrame
    weights: NDArray
    fields: dict[str, OperatorTerms] = field(default_factory=dict)
    confinement: GridOperator | None = None

    def total(self) -> OperatorTerms:
        out = OperatorTerms.zeros(self.grid.size)
        for name in TERM_NAMES:
            out = out + self.fields[name]
        return out

    def operator(self, name: str) -> GridOperator:
        """One term on its own, Hermitian-projected under the sqrt(g) measure."""
        return discretize(self.fields[name], self.grid, weights=self.weights, label=name)


def _stencil_derivative(samples: list[NDArray], step: float) -> NDArray:
    m2, m1, p1, p2 = samples
    return (m2 - 8 * m1 + 8 * p1 - p2) / (12 * step)


def frame_derivatives(
    chart: SurfaceChart, q1: NDArray, q2: NDArray, frame_angle: float = 0.0
) -> tuple[NDArray, NDArray]:
    """d_a e^c_i with shape (..., a, c, 3) and d_a Omega_b with shape (..., a, b)."""
    steps = 2e-4 * chart.extents
    d_e_inv, d_omega = [], []
    for axis in range(2):
        frames = []
        for k in (-2, -1, 1, 2):
            shift = k * steps[axis]
            if axis == 0:
                frames.append(frame_field(chart, q1 + shift, q2, frame_angle))
            else:
                frames.append(frame_field(chart, q1, q2 + shift, frame_angle))
        d_e_inv.append(_stencil_derivative([f.e_inv for f in frames], steps[axis]))
        d_omega.append(_stencil_derivative([f.omega for f in frames], steps[axis]))
    return np.stack(d_e_inv, axis=-3), np.stack(d_omega, axis=-2)


def _kinetic_fields(gbar: NDArray, dgbar: NDArray, omega: NDArray, d_omega: NDArray) -> OperatorTerms:
    """[gbar^a (d_a + Omega_a)][gbar^b (d_b + Omega_b)] expanded into coefficient fields."""
    nodes = gbar.shape[0]
    terms = OperatorTerms.zeros(nodes)
    omega_hat = omega[..., None, None] * HALF_I_SIGMA3
    connection = np.einsum("najk,nakl->njl", gbar, omega_hat)
    for a in range(2):
        for b in range(2):
            terms.second[:, a, b] = gbar[:, a] @ gbar[:, b]
    for c in range(2):
        terms.first[:, c] = (
            np.einsum("najk,nakl->njl", gbar, dgbar[:, :, c])
            + connection @ gbar[:, c]
            + gbar[:, c] @ connection
        )
    inner = np.einsum("nabjk,nbkl->najl", dgbar, omega_hat) + np.einsum(
        "nbjk,nab->najk", gbar, d_omega
    ) @ HALF_I_SIGMA3
    terms.zeroth[:] = np.einsum("najk,nakl->njl", gbar, inner) + connection @ connection
    return terms


def _soc_fields(gbar: NDArray, alpha: NDArray) -> OperatorTerms:
    terms = OperatorTerms.zeros(gbar.shape[0])
    for a in range(2):
        terms.first[:, a] = -GAMMA3 @ np.einsum("nb,nbjk->njk", alpha[:, a], gbar)
    return terms


def _zeeman_fields(frames: GeometryFrame, alpha: NDArray) -> OperatorTerms:
    # gamma^3 gamma-hat^b with gamma-hat^b along the unit inverse zweibein row b.
    normal_hat = np.stack([(gamma(3) @ unit_reduced_gamma(frames, b)).entries for b in range(2)], axis=1)
    glow = contract_gamma(frames.zweibein)
    omega_hat = frames.omega[..., None, None] * HALF_I_SIGMA3
    terms = OperatorTerms.zeros(alpha.shape[0])
    for a in range(2):
        for b in range(2):
            coupling = alpha[:, a, b, None, None] * normal_hat[:, b]
            terms.zeroth -= coupling @ omega_hat[:, a]
            if EPSILON[a, b]:
                terms.zeroth -= 0.5 * alpha[:, a, a, None, None] * (coupling @ glow[:, a] @ GAMMA3)
    return terms


def _normal_connection_fields(frames: GeometryFrame, gbar: NDArray) -> OperatorTerms:
    terms = OperatorTerms.zeros(gbar.shape[0])
    rate = np.einsum("na,najk->njk", frames.d3_omega, gbar)
    terms.zeroth[:] = GAMMA3 @ rate @ HALF_I_SIGMA3 + frames.d3_gamma3[:, None, None] * HALF_I_SIGMA3
    return terms


def _geometric_potential_fields(frames: GeometryFrame) -> OperatorTerms:
    terms = OperatorTerms.zeros(frames.q1.shape[0])
    terms.zeroth[:] = frames.geometric_potential[:, None, None] * IDENTITY
    return terms


def _mass_fields(nodes: int, m: float) -> OperatorTerms:
    terms = OperatorTerms.zeros(nodes)
    terms.zeroth[:] = m * BETA
    return terms


def build_terms(chart: SurfaceChart, grid: Grid2D, m: float, frame_angle: float = 0.0) -> HamiltonianTerms:
    if m <= 0:
        raise ConfigInvalid("mass must be positive", field="physics.m", value=m)
    q1, q2 = grid.nodes()
    frames = frame_field(chart, q1, q2, frame_angle=frame_angle)
    d_e_inv, d_omega = frame_derivatives(chart, q1, q2, frame_angle)
    gbar = np.stack([reduced_gamma(frames, a).entries for a in range(2)], axis=1)
    dgbar = contract_gamma(d_e_inv)
    alpha = frames.alpha_mixed
    prefactor = BETA / (2 * m)
    fields = {
        "kinetic": _kinetic_fields(gbar, dgbar, frames.omega, d_omega).left_multiply(prefactor),
        "soc": _soc_fields(gbar, alpha).left_multiply(prefactor),
        "zeeman_like": _zeeman_fields(frames, alpha).left_multiply(prefactor),
        "normal_conn": _normal_connection_fields(frames, gbar).left_multiply(prefactor),
        "geom_pot": _geometric_potential_fields(frames).left_multiply(prefactor),
        "mass": _mass_fields(grid.size, m),
    }
    return HamiltonianTerms(
        chart=chart,
        grid=grid,
        m=m,
        frames=frames,
        weights=frames.sqrt_g,
        fields=fields,
    )


def assemble_Hs(
    chart: SurfaceChart, grid: Grid2D, m: float, frame_angle: float = 0.0
) -> tuple[GridOperator, HamiltonianTerms]:
    terms = build_terms(chart, grid, m, frame_angle)
    operator = discretize(terms.total(), grid, weights=terms.weights, chart=chart, label="H_s")
    if operator.asymmetry > 1e-8:
        logger.warning("H_s on %s: pre-symmetrisation asymmetry %.3e", chart.preset_tag, operator.asymmetry)
    return operator, terms


def torus_Hs_closed_form(R: float, r: float, grid: Grid2D, m: float) -> GridOperator:
    """The torus H_s written out with explicit theta dependence, independent of the frame machinery."""
    if not R > r > 0:
        raise ConfigInvalid("torus needs R > r > 0", field="surface.R", R=R, r=r)
    if m <= 0:
        raise ConfigInvalid("mass must be positive", field="physics.m", value=m)
    theta, _ = grid.nodes()
    c, s = np.cos(theta)[:, None, None], np.sin(theta)[:, None, None]
    rho = R + r * c
    g1, g2 = GAMMA[0], GAMMA[1]

    bar_theta = np.broadcast_to(g1 / r, (grid.size, 4, 4))
    bar_phi = g2 / rho
    d_bar_phi = r * s / rho**2 * g2
    connection = bar_phi @ (s * HALF_I_SIGMA3)

    terms = OperatorTerms.zeros(grid.size)
    terms.second[:, 0, 0] = bar_theta @ bar_theta
    terms.second[:, 0, 1] = bar_theta @ bar_phi
    terms.second[:, 1, 0] = bar_phi @ bar_theta
    terms.second[:, 1, 1] = bar_phi @ bar_phi
    terms.first[:, 0] = connection @ bar_theta + bar_theta @ connection - GAMMA3 @ bar_theta / r
    terms.first[:, 1] = (
        bar_theta @ d_bar_phi + connection @ bar_phi + bar_phi @ connection - (c / rho) * (GAMMA3 @ bar_phi)
    )
    terms.zeroth[:] = (
        bar_theta @ (d_bar_phi @ (s * HALF_I_SIGMA3) + bar_phi @ (c * HALF_I_SIGMA3))
        + connection @ connection
        - 1j * (c / rho) * (s / 2) * SIGMA[1]
    )
    terms = terms.left_multiply(BETA / (2 * m)) + _mass_fields(grid.size, m)
    weights = (r * rho).ravel()
    return discretize(terms, grid, weights=weights, label="H_s[torus]")


def surface_dirac_operator(chart: SurfaceChart, grid: Grid2D, m: float, frame_angle: float = 0.0) -> GridOperator:
    """beta m - i beta gbar^a (d_a + Omega_a): the first-order operator whose square gives the kinetic term."""
    q1, q2 = grid.nodes()
    frames = frame_field(chart, q1, q2, frame_angle=frame_angle)
    gbar = contract_gamma(frames.e_inv)
    omega_hat = frames.omega[..., None, None] * HALF_I_SIGMA3
    terms = OperatorTerms.zeros(grid.size)
    for a in range(2):
        terms.first[:, a] = -1j * BETA @ gbar[:, a]
    terms.zeroth[:] = -1j * BETA @ np.einsum("najk,nakl->njl", gbar, omega_hat) + m * BETA
    return discretize(terms, grid, weights=frames.sqrt_g, chart=chart, label="D_s")


def assemble_Hpp(chart: SurfaceChart, grid: Grid2D, case: ConfinementCase, base: HamiltonianTerms) -> GridOperator:
    """Leading confinement correction added to H_s for the given potential."""
    if case.kind not in ("linear", "harmonic", "square_well"):
        raise UnknownCase(f"unknown confinement case {case.kind!r}")
    m = case.m
    if case.kind == "square_well":
        operator = GridOperator(
            matrix=sp.csr_matrix((4 * grid.size, 4 * grid.size), dtype=complex), grid=grid, label="H''(c)"
        )
    else:
        terms = OperatorTerms.zeros(grid.size)
        scale = -case.omega / (4 * m)
        if case.kind == "harmonic":
            terms.zeroth[:] = scale * BETA
        else:
            frames = base.frames
            gbar = contract_gamma(frames.e_inv)
            omega_hat = frames.omega[..., None, None] * HALF_I_SIGMA3
            for a in range(2):
                terms.first[:, a] = scale * BETA @ GAMMA3 @ gbar[:, a]
            terms.zeroth[:] = scale * BETA @ GAMMA3 @ np.einsum("najk,nakl->njl", gbar, omega_hat)
        operator = discretize(terms, grid, weights=base.weights, chart=chart, label=f"H''({case.label})")
    base.confinement = operator
    logger.debug("confinement case %s: norm %.3e", case.label, operator.norm)
    return operator


def effective_hamiltonian(
    chart: SurfaceChart, grid: Grid2D, m: float, case: ConfinementCase, frame_angle: float = 0.0
) -> tuple[GridOperator, HamiltonianTerms]:
    hs, terms = assemble_Hs(chart, grid, m, frame_angle)
    return hs + assemble_Hpp(chart, grid, case, terms), terms


@dataclass(frozen=True)
class NormalGrid:
    n: int
    lower: float
    upper: float
    periodic: bool = False

    def __post_init__(self) -> None:
        if self.n < MIN_NORMAL_NODES:
            raise GridTooCoarse(
                f"normal grid needs at least {MIN_NORMAL_NODES} nodes", n=self.n
            )

    @classmethod
    def for_case(cls, case: ConfinementCase, n: int = 256) -> NormalGrid:
        """Domain sized to the bound-state length scale; walls coincide with the square well."""
        if case.kind == "square_well":
            half = case.width / 2
        elif case.kind == "harmonic":
            half = 8.0 * (case.m * case.omega) ** -0.25
        else:
            half = 12.0 * (case.m * case.omega) ** (-1.0 / 3.0)
        return cls(n=n, lower=-half, upper=half)

    @property
    def spacing(self) -> float:
        span = self.upper - self.lower
        return span / self.n if self.periodic else span / (self.n + 1)

    def nodes(self) -> NDArray:
        offset = 0 if self.periodic else 1
        return self.lower + (np.arange(self.n) + offset) * self.spacing


@dataclass
class NormalOperator:
    """H_n = beta L on a two-component (upper, lower) space; `positive` is L."""

    positive: sp.csr_matrix
    grid: NormalGrid

    @property
    def matrix(self) -> sp.csr_matrix:
        return sp.kron(self.positive, sp.diags([1.0, -1.0]), format="csr")

    def eigenvalues(self, k: int | None = None) -> NDArray:
        values = scipy.linalg.eigvalsh(self.positive.toarray())
        return values if k is None else values[:k]


def assemble_Hn(case: ConfinementCase | None, grid: NormalGrid) -> NormalOperator:
    """beta (V(q3) - d3^2); `case=None` is the free problem."""
    h = grid.spacing
    q = grid.nodes()
    laplacian = derivative_1d(grid.n, h, 2, grid.periodic, 2)
    if case is None:
        potential = np.zeros_like(q)
    elif case.kind == "square_well":
        potential = np.zeros_like(q)
    elif case.kind == "harmonic":
        potential = case.m * case.omega * q**2
    elif case.kind == "linear":
        potential = case.m * case.omega * np.abs(q)
    else:
        raise UnknownCase(f"unknown confinement case {case.kind!r}")
    operator = sp.diags(potential) - laplacian
    if case is not None and case.kind == "linear":
        # The symmetrised sign(q3) d3 term collapses to a coupling across q3=0 whose
        # strength grows like 1/h; the lowest eigenvalues still converge under refinement.
        drift = -(case.omega / (2 * case.m)) * (sp.diags(np.sign(q)) @ derivative_1d(grid.n, h, 2, grid.periodic, 1))
        operator = operator + 0.5 * (drift + drift.T)
    return NormalOperator(positive=sp.csr_matrix(operator), grid=grid)
