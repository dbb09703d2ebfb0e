import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from spinsurf.errors import ConvergenceFailure, GridTooCoarse, NonPeriodicMismatch, UnsupportedChart
from spinsurf.hamiltonian import assemble_Hs
from spinsurf.spectral import (
    Grid2D,
    OperatorTerms,
    derivative_1d,
    discretize,
    eigensolve,
    gap_scan,
    local_gap_profile,
    stencil_symbols,
)


def plane_levels(m, n, length, count):
    h = length / n
    k = np.fft.fftfreq(n, d=1.0 / n) * 2 * np.pi / length
    symbol = (2 - 2 * np.cos(k * h)) / h**2
    kinetic = np.add.outer(symbol, symbol).ravel()
    # Each plane wave carries a spin doublet.
    return np.sort(np.repeat(m + kinetic / (2 * m), 2))[:count]


@pytest.mark.parametrize("order", [2, 4])
def test_first_derivative_ring_is_skew_circulant(order):
    n, h = 16, 2 * np.pi / 16
    d1 = derivative_1d(n, h, order, periodic=True, derivative=1).toarray()
    assert_allclose(d1, -d1.T, atol=1e-15)
    k = np.arange(n)
    expected, _ = stencil_symbols(order, k * h)
    values = np.sort(np.linalg.eigvals(d1).imag)
    assert_allclose(values, np.sort((expected / h).imag), atol=1e-12)


def test_dirichlet_axis_truncates_stencil():
    d2 = derivative_1d(10, 0.1, 2, periodic=False, derivative=2).toarray()
    assert d2[0, -1] == 0.0
    assert d2[0, 0] == pytest.approx(-200.0)


def test_grid_rejects_coarse_meshes(plane_chart):
    with pytest.raises(GridTooCoarse):
        Grid2D.for_chart(plane_chart, 6, 16)


def test_grid_nodes_offset_on_open_axes(sphere_chart):
    grid = Grid2D.for_chart(sphere_chart, 8, 8)
    theta = grid.axis_nodes(0)
    assert theta[0] == pytest.approx(np.pi / 16)
    assert grid.axis_nodes(1)[0] == 0.0


def test_discretize_rejects_periodicity_mismatch(sphere_chart):
    grid = Grid2D(n1=8, n2=8, domain=sphere_chart.domain, periodic=(True, True))
    with pytest.raises(NonPeriodicMismatch):
        discretize(OperatorTerms.zeros(grid.size), grid, chart=sphere_chart)


def test_plane_laplacian_spectrum_is_exact(plane_chart):
    grid = Grid2D.for_chart(plane_chart, 16, 16)
    terms = OperatorTerms.zeros(grid.size)
    terms.second[:, 0, 0] = -np.eye(4)
    terms.second[:, 1, 1] = -np.eye(4)
    operator = discretize(terms, grid)
    values = np.sort(np.linalg.eigvalsh(operator.dense()))
    h = 2 * np.pi / 16
    k = np.arange(16) * h
    symbol = (2 - 2 * np.cos(k)) / h**2
    expected = np.sort(np.repeat(np.add.outer(symbol, symbol).ravel(), 4))
    assert_allclose(values, expected, atol=1e-9)


def test_plane_spectrum_free_particle(plane_chart):
    m = 10.0
    grid = Grid2D.for_chart(plane_chart, 32, 32)
    operator, _ = assemble_Hs(plane_chart, grid, m)
    result = eigensolve(operator, 10)
    assert_allclose(result.positive, plane_levels(m, 32, 2 * np.pi, 10), atol=1e-10)
    assert result.positive[0] == pytest.approx(m)
    assert result.positive[2] == pytest.approx(m + 0.05, abs=2e-4)
    assert result.max_residual <= 1e-8 * operator.norm
    assert result.pairing_defect() <= 1e-10


@pytest.mark.parametrize("order,factor", [(2, 3.5), (4, 14.0)])
def test_plane_refinement_convergence(plane_chart, order, factor):
    m = 10.0
    errors = []
    for n in (16, 32):
        grid = Grid2D.for_chart(plane_chart, n, n, order=order)
        operator, _ = assemble_Hs(plane_chart, grid, m)
        result = eigensolve(operator, 4)
        errors.append(abs(result.positive[2] - (m + 1 / (2 * m))))
    assert errors[0] / errors[1] >= factor


def test_iterative_mode_agrees_with_dense(torus_chart):
    grid = Grid2D.for_chart(torus_chart, 16, 16)
    operator, _ = assemble_Hs(torus_chart, grid, 10.0)
    dense = eigensolve(operator, 4, mode="dense")
    iterative = eigensolve(operator, 4, mode="iterative")
    assert_allclose(iterative.positive, dense.positive, atol=1e-8)
    assert_allclose(iterative.negative, dense.negative, atol=1e-8)


def test_zero_count_gives_empty_result(torus_grid, torus_chart):
    operator, _ = assemble_Hs(torus_chart, torus_grid, 10.0)
    result = eigensolve(operator, 0)
    assert result.pairs == []
    assert result.eigenvalues.size == 0


def test_block_labels_follow_energy_sign(torus_grid, torus_chart):
    operator, _ = assemble_Hs(torus_chart, torus_grid, 10.0)
    result = eigensolve(operator, 3)
    assert result.block_labels == ["negative"] * 3 + ["positive"] * 3
    assert list(result.eigenvalues) == sorted(result.eigenvalues)


def test_eigensolve_orders_degenerate_states_by_fourier_index(plane_chart):
    grid = Grid2D.for_chart(plane_chart, 16, 16)
    operator, _ = assemble_Hs(plane_chart, grid, 10.0)
    first = eigensolve(operator, 10)
    second = eigensolve(operator, 10)
    assert [p.fourier for p in first.pairs] == [p.fourier for p in second.pairs]
    assert first.pairs[0].fourier == (0, 0)


def test_torus_gap_profile_channels():
    from spinsurf.geometry import torus

    chart = torus(2.0, 0.5)
    grid = Grid2D.for_chart(chart, 32, 32)
    operator, terms = assemble_Hs(chart, grid, 10.0)
    rows = local_gap_profile(terms.total(), grid, chart)
    thetas = np.array([row.theta for row in rows])
    inplane = np.array([row.inplane for row in rows])
    normal = np.array([row.normal for row in rows])
    quarter = int(np.argmin(np.abs(thetas - np.pi / 2)))
    three_quarter = int(np.argmin(np.abs(thetas - 3 * np.pi / 2)))
    assert inplane[quarter] == pytest.approx(0.0, abs=1e-12)
    assert inplane[three_quarter] == pytest.approx(0.0, abs=1e-12)
    assert normal[0] == pytest.approx(0.0, abs=1e-12)
    assert normal[16] == pytest.approx(0.0, abs=1e-12)
    assert np.all(inplane[[0, 16]] > 0)
    assert all(abs(row.geom_potential) <= 1e-14 for row in rows)


def test_gap_scan_emits_analytic_coefficients():
    from spinsurf.geometry import torus

    chart = torus(2.0, 0.5)
    grid = Grid2D.for_chart(chart, 32, 32)
    operator, terms = assemble_Hs(chart, grid, 10.0)
    result = eigensolve(operator, 4)
    result.gap_profile = local_gap_profile(terms.total(), grid, chart)
    rows = gap_scan(result, chart)
    assert len(rows) == 32
    assert rows[0].spin_conn_coeff == pytest.approx(0.0, abs=1e-12)
    assert rows[8].zeeman_coeff == pytest.approx(0.0, abs=1e-12)
    assert rows[0].zeeman_coeff == pytest.approx(1 / 2.5)
    signs = np.sign([r.zeeman_coeff for r in rows if abs(r.zeeman_coeff) > 1e-12])
    assert np.count_nonzero(np.diff(signs)) == 2


def test_gap_scan_rejects_cylinder(cylinder_chart):
    grid = Grid2D.for_chart(cylinder_chart, 8, 8)
    operator, terms = assemble_Hs(cylinder_chart, grid, 10.0)
    result = eigensolve(operator, 2)
    with pytest.raises(UnsupportedChart):
        gap_scan(result, cylinder_chart)
    with pytest.raises(UnsupportedChart):
        local_gap_profile(terms.total(), grid, cylinder_chart)


def test_hermiticity_of_assembled_operator(torus_chart):
    grid = Grid2D.for_chart(torus_chart, 32, 32)
    operator, _ = assemble_Hs(torus_chart, grid, 10.0)
    assert operator.hermiticity_residual() <= 1e-12
    assert isinstance(operator.matrix, sp.csr_matrix)


def test_torus_splitting_minima_sit_where_zeeman_coefficient_vanishes():
    from spinsurf.geometry import torus

    chart = torus(2.0, 0.5)
    grid = Grid2D.for_chart(chart, 32, 32)
    operator, terms = assemble_Hs(chart, grid, 10.0)
    result = eigensolve(operator, 8)
    result.gap_profile = local_gap_profile(terms.total(), grid, chart)
    rows = gap_scan(result, chart)
    splitting = np.array([row.doublet_splitting for row in rows])
    thetas = np.array([row.theta for row in rows])
    lowest = np.argsort(splitting)[:2]
    assert sorted(thetas[lowest]) == pytest.approx([np.pi / 2, 3 * np.pi / 2])
    assert np.all(splitting[[0, 16]] > 100 * splitting[lowest].max())
    for row in rows:
        assert row.total_splitting == pytest.approx(np.hypot(row.inplane_splitting, row.normal_splitting))


def test_spectral_doublet_groups_states_by_cyclic_index():
    from spinsurf.spectral import EigenPair, SpectrumResult

    pairs = [
        EigenPair(block="positive", index=0, value=10.0, residual=0.0, fourier=(0, 1)),
        EigenPair(block="positive", index=1, value=10.01, residual=0.0, fourier=(0, 0)),
        EigenPair(block="positive", index=2, value=10.03, residual=0.0, fourier=(1, -1)),
        EigenPair(block="negative", index=0, value=-10.0, residual=0.0, fourier=(0, 0)),
    ]
    assert SpectrumResult(pairs=pairs).doublet_splitting() == pytest.approx(0.03)
    assert SpectrumResult(pairs=pairs[:2]).doublet_splitting() is None


def test_plane_ground_doublet_is_degenerate(plane_chart):
    grid = Grid2D.for_chart(plane_chart, 16, 16)
    operator, _ = assemble_Hs(plane_chart, grid, 10.0)
    result = eigensolve(operator, 4)
    assert result.doublet_splitting() == pytest.approx(0.0, abs=1e-10)


def test_requesting_more_states_than_a_block_holds(plane_chart):
    grid = Grid2D.for_chart(plane_chart, 8, 8)
    operator, _ = assemble_Hs(plane_chart, grid, 10.0)
    with pytest.raises(GridTooCoarse) as info:
        eigensolve(operator, 200)
    assert info.value.exit_code == 4
    assert "128" in str(info.value)


def test_stalled_iterative_solve_reports_achieved_residual(monkeypatch, plane_chart):
    from scipy.sparse.linalg import ArpackNoConvergence

    import spinsurf.spectral as spectral

    grid = Grid2D.for_chart(plane_chart, 8, 8)
    operator, _ = assemble_Hs(plane_chart, grid, 10.0)

    def stalled(block, k, **kwargs):
        vector = np.zeros((block.shape[0], 1), dtype=complex)
        vector[0, 0] = 1.0
        raise ArpackNoConvergence("no convergence", np.array([10.0]), vector)

    monkeypatch.setattr(spectral, "eigsh", stalled)
    with pytest.raises(ConvergenceFailure) as info:
        eigensolve(operator, 2, mode="iterative")
    assert info.value.exit_code == 4
    assert info.value.context["requested"] == 2
    assert info.value.context["converged"] == 1
    assert info.value.context["achieved_residual"] > 0
