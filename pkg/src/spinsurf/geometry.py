"""Differential geometry of a parametrised surface and its normal neighbourhood.

A chart maps (q1, q2) to R^3. The normal is n = s (r_1 x r_2)/|r_1 x r_2| with a
per-chart orientation sign s; presets pick s so that n points outward. All
evaluators are vectorised over arbitrary batch shapes of (q1, q2).
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DegenerateChart, NonPeriodicMismatch, OutsideTube

logger = logging.getLogger(__name__)

EPSILON = np.array([[0.0, 1.0], [1.0, 0.0]])
REGULARITY_FLOOR = 1e-12

ParamMap = Callable[[NDArray, NDArray], NDArray]
Jet = tuple[NDArray, NDArray, NDArray]


@dataclass(frozen=True)
class SurfaceChart:
    param_map: ParamMap
    domain: tuple[tuple[float, float], tuple[float, float]]
    periodic: tuple[bool, bool]
    preset_tag: str = "custom"
    params: dict[str, float] = field(default_factory=dict)
    orientation: int = 1
    analytic_jet: Callable[[NDArray, NDArray], Jet] | None = None
    # Orthogonal coordinates along principal-curvature lines.
    principal: bool = False
    # Coefficients independent of q2 and q2 periodic (torus, sphere).
    axisymmetric: bool = False
    coordinate_names: tuple[str, str] = ("q1", "q2")

    @property
    def deriv_mode(self) -> str:
        return "analytic" if self.analytic_jet is not None else "finite_difference"

    @property
    def extents(self) -> NDArray:
        return np.array([b - a for a, b in self.domain])

    @property
    def h_geo(self) -> NDArray:
        return 1e-5 * self.extents

    def contains(self, q1: float, q2: float) -> bool:
        (a1, b1), (a2, b2) = self.domain
        return a1 <= q1 <= b1 and a2 <= q2 <= b2

    def jet(self, q1: ArrayLike, q2: ArrayLike) -> Jet:
        """Position, first derivatives (..., 2, 3) and second derivatives (..., 2, 2, 3)."""
        q1, q2 = np.broadcast_arrays(np.asarray(q1, dtype=float), np.asarray(q2, dtype=float))
        if self.analytic_jet is not None:
            return self.analytic_jet(q1, q2)
        return _finite_difference_jet(self.param_map, q1, q2, self.h_geo, 1e-4 * self.extents)


def _finite_difference_jet(param_map: ParamMap, q1: NDArray, q2: NDArray, h1: NDArray, h2: NDArray) -> Jet:
    def r(dq1: float, dq2: float) -> NDArray:
        return np.asarray(param_map(q1 + dq1, q2 + dq2), dtype=float)

    center = r(0.0, 0.0)
    first = np.stack(
        [
            (r(h1[0], 0.0) - r(-h1[0], 0.0)) / (2 * h1[0]),
            (r(0.0, h1[1]) - r(0.0, -h1[1])) / (2 * h1[1]),
        ],
        axis=-2,
    )
    s1, s2 = h2
    d11 = (r(s1, 0.0) - 2 * center + r(-s1, 0.0)) / s1**2
    d22 = (r(0.0, s2) - 2 * center + r(0.0, -s2)) / s2**2
    d12 = (r(s1, s2) - r(s1, -s2) - r(-s1, s2) + r(-s1, -s2)) / (4 * s1 * s2)
    second = np.stack([np.stack([d11, d12], axis=-2), np.stack([d12, d22], axis=-2)], axis=-3)
    return center, first, second


def _stack3(x: NDArray, y: NDArray, z: NDArray) -> NDArray:
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def torus(R: float, r: float) -> SurfaceChart:
    """Torus in (theta, phi); theta = 0 on the outer equator."""

    def param_map(theta: NDArray, phi: NDArray) -> NDArray:
        rho = R + r * np.cos(theta)
        return _stack3(rho * np.cos(phi), rho * np.sin(phi), r * np.sin(theta))

    def jet(theta: NDArray, phi: NDArray) -> Jet:
        ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
        rho = R + r * ct
        zero = np.zeros_like(theta)
        r_t = _stack3(-r * st * cp, -r * st * sp, r * ct)
        r_p = _stack3(-rho * sp, rho * cp, zero)
        r_tt = _stack3(-r * ct * cp, -r * ct * sp, -r * st)
        r_tp = _stack3(r * st * sp, -r * st * cp, zero)
        r_pp = _stack3(-rho * cp, -rho * sp, zero)
        first = np.stack([r_t, r_p], axis=-2)
        second = np.stack([np.stack([r_tt, r_tp], axis=-2), np.stack([r_tp, r_pp], axis=-2)], axis=-3)
        return param_map(theta, phi), first, second

    return SurfaceChart(
        param_map=param_map,
        domain=((0.0, 2 * np.pi), (0.0, 2 * np.pi)),
        periodic=(True, True),
        preset_tag="torus",
        params={"R": R, "r": r},
        orientation=-1,
        analytic_jet=jet,
        principal=True,
        axisymmetric=True,
        coordinate_names=("theta", "phi"),
    )


def sphere(a: float) -> SurfaceChart:
    """Sphere in polar (theta, phi); theta is not periodic."""

    def param_map(theta: NDArray, phi: NDArray) -> NDArray:
        return a * _stack3(np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta))

    def jet(theta: NDArray, phi: NDArray) -> Jet:
        ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(phi), np.sin(phi)
        zero = np.zeros_like(theta)
        pos = param_map(theta, phi)
        r_t = a * _stack3(ct * cp, ct * sp, -st)
        r_p = a * _stack3(-st * sp, st * cp, zero)
        r_tp = a * _stack3(-ct * sp, ct * cp, zero)
        r_pp = a * _stack3(-st * cp, -st * sp, zero)
        first = np.stack([r_t, r_p], axis=-2)
        second = np.stack([np.stack([-pos, r_tp], axis=-2), np.stack([r_tp, r_pp], axis=-2)], axis=-3)
        return pos, first, second

    return SurfaceChart(
        param_map=param_map,
        domain=((0.0, np.pi), (0.0, 2 * np.pi)),
        periodic=(False, True),
        preset_tag="sphere",
        params={"a": a},
        orientation=1,
        analytic_jet=jet,
        principal=True,
        axisymmetric=True,
        coordinate_names=("theta", "phi"),
    )


def cylinder(rho: float, length: float) -> SurfaceChart:
    """Cylinder in (phi, z) with open ends at z = 0 and z = length."""

    def param_map(phi: NDArray, z: NDArray) -> NDArray:
        return _stack3(rho * np.cos(phi), rho * np.sin(phi), z)

    def jet(phi: NDArray, z: NDArray) -> Jet:
        cp, sp = np.cos(phi), np.sin(phi)
        zero = np.zeros_like(phi)
        one = np.ones_like(phi)
        first = np.stack([_stack3(-rho * sp, rho * cp, zero), _stack3(zero, zero, one)], axis=-2)
        zeros3 = _stack3(zero, zero, zero)
        r_pp = _stack3(-rho * cp, -rho * sp, zero)
        second = np.stack([np.stack([r_pp, zeros3], axis=-2), np.stack([zeros3, zeros3], axis=-2)], axis=-3)
        return param_map(phi, z), first, second

    return SurfaceChart(
        param_map=param_map,
        domain=((0.0, 2 * np.pi), (0.0, length)),
        periodic=(True, False),
        preset_tag="cylinder",
        params={"rho": rho, "L": length},
        orientation=1,
        analytic_jet=jet,
        principal=True,
        coordinate_names=("phi", "z"),
    )


def plane(l1: float, l2: float) -> SurfaceChart:
    """Flat periodic box [0, l1] x [0, l2]."""

    def param_map(x: NDArray, y: NDArray) -> NDArray:
        return _stack3(x, y, np.zeros_like(x))

    def jet(x: NDArray, y: NDArray) -> Jet:
        zero = np.zeros_like(x)
        one = np.ones_like(x)
        first = np.stack([_stack3(one, zero, zero), _stack3(zero, one, zero)], axis=-2)
        return param_map(x, y), first, np.zeros(x.shape + (2, 2, 3))

    return SurfaceChart(
        param_map=param_map,
        domain=((0.0, l1), (0.0, l2)),
        periodic=(True, True),
        preset_tag="plane",
        params={"L1": l1, "L2": l2},
        orientation=1,
        analytic_jet=jet,
        principal=True,
        coordinate_names=("x", "y"),
    )


def custom(
    param_map: ParamMap,
    domain: tuple[tuple[float, float], tuple[float, float]],
    periodic: tuple[bool, bool] = (False, False),
    orientation: int = 1,
) -> SurfaceChart:
    chart = SurfaceChart(
        param_map=param_map,
        domain=domain,
        periodic=periodic,
        preset_tag="custom",
        orientation=orientation,
    )
    check_periodic_seams(chart)
    return chart


# Seam tolerances for position, first and second derivatives; the derivative
# bounds sit above the noise of the finite-difference jet.
SEAM_TOLERANCES = (1e-12, 1e-8, 1e-5)


def check_periodic_seams(chart: SurfaceChart, samples: int = 9) -> None:
    """Raise NonPeriodicMismatch unless the jet agrees at both ends of every periodic axis."""
    for axis, flagged in enumerate(chart.periodic):
        if not flagged:
            continue
        lo, hi = chart.domain[axis]
        other = np.linspace(*chart.domain[1 - axis], samples)
        ends = [np.full_like(other, lo), np.full_like(other, hi)]
        if axis == 1:
            jets = [chart.jet(other, end) for end in ends]
        else:
            jets = [chart.jet(end, other) for end in ends]
        for order, (start, stop, tol) in enumerate(zip(jets[0], jets[1], SEAM_TOLERANCES)):
            scale = 1.0 + float(np.max(np.abs(start)))
            gap = float(np.max(np.abs(stop - start)))
            if gap > tol * scale:
                raise NonPeriodicMismatch(
                    "chart does not close on a periodic axis",
                    axis=axis + 1,
                    derivative_order=order,
                    mismatch=gap,
                )


@dataclass(frozen=True)
class GeometryFrame:
    """Pointwise geometric payload; every field carries the batch shape of (q1, q2)."""

    q1: NDArray
    q2: NDArray
    position: NDArray
    normal: NDArray
    g: NDArray
    g_inv: NDArray
    sqrt_g: NDArray
    alpha_low: NDArray
    alpha_mixed: NDArray
    triad: NDArray
    zweibein: NDArray
    e_inv: NDArray
    omega: NDArray
    gamma3_conn: NDArray
    d3_omega: NDArray
    d3_gamma3: NDArray
    f_coeffs: NDArray

    @property
    def principal_curvatures(self) -> NDArray:
        """Eigenvalues of the Weingarten map, descending."""
        values = np.linalg.eigvals(self.alpha_mixed).real
        return -np.sort(-values, axis=-1)

    @property
    def geometric_potential(self) -> NDArray:
        """|eps^a_b| alpha^a_b alpha^b_a / 2, summed: only anti-diagonal entries contribute."""
        return self.alpha_mixed[..., 0, 1] * self.alpha_mixed[..., 1, 0]


def _raise_if_degenerate(norm: NDArray, q1: NDArray, q2: NDArray) -> None:
    bad = norm < REGULARITY_FLOOR
    if np.any(bad):
        idx = tuple(np.argwhere(bad)[0]) if bad.ndim else ()
        raise DegenerateChart(
            "tangent vectors are parallel",
            q1=float(q1[idx]),
            q2=float(q2[idx]),
            cross_norm=float(norm[idx]),
        )


def _normal_and_twist(chart: SurfaceChart, q1: NDArray, q2: NDArray) -> NDArray:
    """Rotation rate of the parallel-surface Gram-Schmidt frame along q3 at q3 = 0."""
    _, dr, ddr = chart.jet(q1, q2)
    cross = np.cross(dr[..., 0, :], dr[..., 1, :])
    norm = np.linalg.norm(cross, axis=-1)
    _raise_if_degenerate(norm, q1, q2)
    n = chart.orientation * cross / norm[..., None]
    g = np.einsum("...ai,...bi->...ab", dr, dr)
    alpha_mixed = np.linalg.inv(g) @ -np.einsum("...abi,...i->...ab", ddr, n)
    dn1 = np.einsum("...c,...ci->...i", alpha_mixed[..., :, 0], dr)
    len1 = np.linalg.norm(dr[..., 0, :], axis=-1)
    t1 = dr[..., 0, :] / len1[..., None]
    return np.einsum("...i,...i->...", np.cross(n, t1), dn1) / len1


def frame_field(chart: SurfaceChart, q1: ArrayLike, q2: ArrayLike, frame_angle: float = 0.0) -> GeometryFrame:
    q1, q2 = np.broadcast_arrays(np.asarray(q1, dtype=float), np.asarray(q2, dtype=float))
    pos, dr, ddr = chart.jet(q1, q2)
    r1, r2 = dr[..., 0, :], dr[..., 1, :]

    cross = np.cross(r1, r2)
    norm = np.linalg.norm(cross, axis=-1)
    _raise_if_degenerate(norm, q1, q2)
    n = chart.orientation * cross / norm[..., None]

    g = np.einsum("...ai,...bi->...ab", dr, dr)
    g_inv = np.linalg.inv(g)
    sqrt_g = np.sqrt(np.linalg.det(g))
    alpha_low = -np.einsum("...abi,...i->...ab", ddr, n)
    alpha_mixed = g_inv @ alpha_low

    # Weingarten equation: d_b n = alpha^c_b r_c
    dn = np.einsum("...cb,...ci->...bi", alpha_mixed, dr)

    len1 = np.linalg.norm(r1, axis=-1)
    t1 = r1 / len1[..., None]
    u = r2 - np.einsum("...i,...i->...", r2, t1)[..., None] * t1
    t2 = u / np.linalg.norm(u, axis=-1)[..., None]
    # d_a t1 from r_1a; t2 = s (n x t1)
    proj = np.einsum("...i,...ai->...a", t1, ddr[..., 0, :, :])
    dt1 = (ddr[..., 0, :, :] - proj[..., None] * t1[..., None, :]) / len1[..., None, None]
    dt2 = chart.orientation * (np.cross(dn, t1[..., None, :]) + np.cross(n[..., None, :], dt1))

    c, s = np.cos(frame_angle), np.sin(frame_angle)
    f1, f2 = c * t1 + s * t2, -s * t1 + c * t2
    df1 = c * dt1 + s * dt2
    omega = np.einsum("...i,...ai->...a", np.cross(n, f1), df1)

    triad = np.stack([f1, f2, n], axis=-2)
    zweibein = np.einsum("...ai,...ji->...aj", dr, triad)
    zweibein[..., 2] = 0.0
    e_inv = np.zeros_like(zweibein)
    e_inv[..., :2] = np.swapaxes(np.linalg.inv(zweibein[..., :2]), -1, -2)

    if chart.principal:
        # Along curvature lines d_1 n is parallel to t1: the frame does not twist with q3.
        gamma3_conn = np.zeros(q1.shape)
        d3_gamma3 = np.zeros(q1.shape)
        d3_omega = np.zeros(q1.shape + (2,))
    else:
        twist_b = np.einsum("...i,...i->...", np.cross(n, t1), dn[..., 0, :])
        twist_a = np.einsum("...i,...i->...", t1, dn[..., 0, :])
        gamma3_conn = twist_b / len1
        d3_gamma3 = -2.0 * twist_a * twist_b / len1**2
        h = 1e-3 * chart.extents
        d3_omega = np.stack(
            [
                (_normal_and_twist(chart, q1 + h[0], q2) - _normal_and_twist(chart, q1 - h[0], q2)) / (2 * h[0]),
                (_normal_and_twist(chart, q1, q2 + h[1]) - _normal_and_twist(chart, q1, q2 - h[1])) / (2 * h[1]),
            ],
            axis=-1,
        )

    f_coeffs = np.stack([np.trace(alpha_mixed, axis1=-2, axis2=-1), np.linalg.det(alpha_mixed)], axis=-1)

    return GeometryFrame(
        q1=q1,
        q2=q2,
        position=pos,
        normal=n,
        g=g,
        g_inv=g_inv,
        sqrt_g=sqrt_g,
        alpha_low=alpha_low,
        alpha_mixed=alpha_mixed,
        triad=triad,
        zweibein=zweibein,
        e_inv=e_inv,
        omega=omega,
        gamma3_conn=gamma3_conn,
        d3_omega=d3_omega,
        d3_gamma3=d3_gamma3,
        f_coeffs=f_coeffs,
    )


def frame_at(chart: SurfaceChart, q: tuple[float, float], frame_angle: float = 0.0) -> GeometryFrame:
    q1, q2 = q
    if not chart.contains(q1, q2):
        raise ValueError(f"point {q!r} lies outside the chart domain {chart.domain!r}")
    return frame_field(chart, q1, q2, frame_angle=frame_angle)


def rescale_factor(frame: GeometryFrame, q3: float | NDArray) -> NDArray:
    """f = 1 + Tr(alpha) q3 + det(alpha) q3^2."""
    return 1.0 + frame.f_coeffs[..., 0] * q3 + frame.f_coeffs[..., 1] * q3**2


def expansion_metric(frame: GeometryFrame, q3: float) -> NDArray:
    """G_AB from the quadratic expansion in q3; G_a3 = 0, G_33 = 1."""
    a = np.swapaxes(frame.alpha_mixed, -1, -2)
    ag = a @ frame.g
    tangential = frame.g + q3 * (ag + np.swapaxes(ag, -1, -2)) + q3**2 * (ag @ np.swapaxes(a, -1, -2))
    out = np.zeros(frame.g.shape[:-2] + (3, 3))
    out[..., :2, :2] = tangential
    out[..., 2, 2] = 1.0
    return out


def embedded_metric_direct(chart: SurfaceChart, q: tuple[float, float], q3: float) -> NDArray:
    """G_AB = dR/dq^A . dR/dq^B for R = r + q3 n, differentiated by 4th-order central differences."""
    frame = frame_at(chart, q)
    f = float(rescale_factor(frame, q3))
    if f <= 0.0:
        raise OutsideTube("normal coordinates self-intersect", q1=q[0], q2=q[1], q3=q3, f=f)

    def normal(q1: float, q2: float) -> NDArray:
        _, dr, _ = chart.jet(q1, q2)
        cross = np.cross(dr[0], dr[1])
        return chart.orientation * cross / np.linalg.norm(cross)

    def shifted(q1: float, q2: float) -> NDArray:
        return np.asarray(chart.param_map(np.float64(q1), np.float64(q2)), dtype=float) + q3 * normal(q1, q2)

    h = 5e-4 * chart.extents
    q1, q2 = q
    tangents = []
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = h[axis]
        samples = [shifted(q1 + k * step[0], q2 + k * step[1]) for k in (-2, -1, 1, 2)]
        tangents.append((samples[0] - 8 * samples[1] + 8 * samples[2] - samples[3]) / (12 * h[axis]))
    n = normal(q1, q2)
    basis = np.stack([tangents[0], tangents[1], n])
    return basis @ basis.T


def spin_connection_at(chart: SurfaceChart, q: tuple[float, float]) -> tuple[float, float, float]:
    """(Omega_1, Omega_2, Gamma_3) as real coefficients of i Sigma_3 / 2."""
    frame = frame_at(chart, q)
    return float(frame.omega[0]), float(frame.omega[1]), float(frame.gamma3_conn)


@dataclass
class MetricIdentityReport:
    max_relative_deviation: float
    samples: int
    q3_values: list[float]
    worst_point: tuple[float, float, float] | None

    def to_dict(self) -> dict[str, object]:
        return {
            "max_relative_deviation": self.max_relative_deviation,
            "samples": self.samples,
            "q3_values": self.q3_values,
            "worst_point": list(self.worst_point) if self.worst_point else None,
        }


def random_domain_points(chart: SurfaceChart, count: int, seed: int, margin: float = 0.05) -> NDArray:
    """Uniform points; non-periodic coordinates keep a relative margin off their edges."""
    rng = np.random.default_rng(seed)
    columns = []
    for (lo, hi), periodic in zip(chart.domain, chart.periodic):
        pad = 0.0 if periodic else margin * (hi - lo)
        columns.append(rng.uniform(lo + pad, hi - pad, size=count))
    return np.stack(columns, axis=-1)


def metric_identity_check(
    chart: SurfaceChart,
    points: int = 20,
    q3_values: tuple[float, ...] = (-0.05, -0.01, 0.01, 0.05),
    seed: int = 0,
) -> MetricIdentityReport:
    worst = 0.0
    worst_point = None
    for q1, q2 in random_domain_points(chart, points, seed):
        frame = frame_at(chart, (q1, q2))
        scale = np.linalg.norm(frame.g)
        for q3 in q3_values:
            direct = embedded_metric_direct(chart, (q1, q2), q3)
            deviation = float(np.linalg.norm(direct - expansion_metric(frame, q3)) / scale)
            if deviation > worst:
                worst, worst_point = deviation, (float(q1), float(q2), float(q3))
    logger.debug("metric identity on %s: max deviation %.3e", chart.preset_tag, worst)
    return MetricIdentityReport(
        max_relative_deviation=worst,
        samples=points * len(q3_values),
        q3_values=list(q3_values),
        worst_point=worst_point,
    )
