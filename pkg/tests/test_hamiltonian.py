import numpy as np
import pytest
from numpy.testing import assert_allclose

from spinsurf.errors import ConfigInvalid, GridTooCoarse, UnknownCase
from spinsurf.hamiltonian import (
    ConfinementCase,
    NormalGrid,
    assemble_Hn,
    assemble_Hpp,
    assemble_Hs,
    effective_hamiltonian,
    torus_Hs_closed_form,
)
from spinsurf.spectral import Grid2D, eigensolve


def test_general_assembler_matches_torus_closed_form(torus_chart):
    grid = Grid2D.for_chart(torus_chart, 32, 32)
    general, _ = assemble_Hs(torus_chart, grid, 10.0)
    closed = torus_Hs_closed_form(2.0, 0.5, grid, 10.0)
    difference = abs(general.matrix - closed.matrix)
    assert difference.max() <= 1e-10


def test_closed_form_requires_ordered_radii(torus_grid):
    with pytest.raises(ConfigInvalid):
        torus_Hs_closed_form(0.5, 2.0, torus_grid, 10.0)


def test_hs_is_block_diagonal_and_paired(torus_chart):
    grid = Grid2D.for_chart(torus_chart, 16, 16)
    operator, _ = assemble_Hs(torus_chart, grid, 10.0)
    assert operator.off_block_norm() <= 1e-12 * operator.norm
    result = eigensolve(operator, 6)
    assert result.pairing_defect() <= 1e-10
    assert np.all(result.positive > 0)


def test_zeeman_term_is_removed_by_symmetrisation(torus_grid, torus_chart):
    _, terms = assemble_Hs(torus_chart, torus_grid, 10.0)
    zeeman = terms.fields["zeeman_like"].zeroth
    assert np.max(np.abs(zeeman)) > 0
    assert_allclose(zeeman, -np.conj(np.swapaxes(zeeman, -1, -2)), atol=1e-14)
    assert terms.operator("zeeman_like").norm == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", ["geom_pot", "normal_conn"])
@pytest.mark.parametrize("preset", ["torus_chart", "sphere_chart", "cylinder_chart", "plane_chart"])
def test_curvature_terms_vanish_on_presets(request, preset, name):
    chart = request.getfixturevalue(preset)
    grid = Grid2D.for_chart(chart, 8, 8)
    _, terms = assemble_Hs(chart, grid, 10.0)
    field = terms.fields[name]
    for part in (field.second, field.first, field.zeroth):
        assert np.max(np.abs(part)) <= 1e-14


def test_plane_reduces_to_mass_plus_laplacian(plane_chart):
    grid = Grid2D.for_chart(plane_chart, 8, 8)
    _, terms = assemble_Hs(plane_chart, grid, 10.0)
    for name in ("soc", "zeeman_like", "normal_conn", "geom_pot"):
        assert terms.fields[name].is_zero()
    assert not np.any(terms.fields["kinetic"].first)
    assert not np.any(terms.fields["kinetic"].zeroth)


def test_sphere_has_no_geometric_potential(sphere_chart):
    grid = Grid2D.for_chart(sphere_chart, 8, 8)
    _, terms = assemble_Hs(sphere_chart, grid, 10.0)
    assert_allclose(terms.frames.geometric_potential, 0.0, atol=1e-14)
    assert_allclose(terms.frames.omega[:, 1], np.cos(terms.frames.q1), atol=1e-10)


def test_confinement_case_validation():
    with pytest.raises(UnknownCase):
        ConfinementCase(kind="cubic", m=10.0, omega=1.0)
    with pytest.raises(ConfigInvalid):
        ConfinementCase(kind="b", m=10.0, omega=0.0)
    assert ConfinementCase(kind="c", m=1.0, width=1.0).kind == "square_well"


def test_square_well_correction_is_zero(torus_grid, torus_chart):
    _, terms = assemble_Hs(torus_chart, torus_grid, 10.0)
    correction = assemble_Hpp(torus_chart, torus_grid, ConfinementCase("c", 10.0, width=1.0), terms)
    assert correction.matrix.nnz == 0
    assert terms.confinement is correction


def test_harmonic_correction_shifts_blocks(torus_grid, torus_chart):
    m, omega = 10.0, 1.0
    hs, terms = assemble_Hs(torus_chart, torus_grid, m)
    correction = assemble_Hpp(torus_chart, torus_grid, ConfinementCase("b", m, omega=omega), terms)
    diagonal = correction.matrix.diagonal()
    assert_allclose(diagonal.reshape(-1, 4), np.tile([-1, -1, 1, 1], (torus_grid.size, 1)) / 40, atol=1e-15)
    base = eigensolve(hs, 6)
    shifted = eigensolve(hs + correction, 6)
    assert_allclose(shifted.positive - base.positive, -omega / (4 * m), atol=1e-8)
    assert_allclose(shifted.negative - base.negative, omega / (4 * m), atol=1e-8)


def test_linear_correction_is_symmetric_on_plane(plane_chart):
    m, omega = 10.0, 1.0
    grid = Grid2D.for_chart(plane_chart, 16, 16)
    _, terms = assemble_Hs(plane_chart, grid, m)
    correction = assemble_Hpp(plane_chart, grid, ConfinementCase("a", m, omega=omega), terms)
    values = np.linalg.eigvalsh(correction.block(1).toarray())
    assert_allclose(np.sort(values), np.sort(-values), atol=1e-12)
    h = 2 * np.pi / 16
    # Largest plane-wave symbol of the central first derivative is 1/h per axis.
    assert np.max(np.abs(values)) <= omega / (4 * m) * np.sqrt(2) / h + 1e-12
    doubled = assemble_Hpp(plane_chart, grid, ConfinementCase("a", m, omega=2 * omega), terms)
    assert doubled.norm == pytest.approx(2 * correction.norm)


def test_effective_hamiltonian_adds_correction(torus_grid, torus_chart):
    case = ConfinementCase("b", 10.0, omega=1.0)
    heff, terms = effective_hamiltonian(torus_chart, torus_grid, 10.0, case)
    hs, _ = assemble_Hs(torus_chart, torus_grid, 10.0)
    assert abs(heff.matrix - hs.matrix - terms.confinement.matrix).max() <= 1e-14


def test_square_well_levels():
    width = 1.0
    case = ConfinementCase("c", 10.0, width=width)
    operator = assemble_Hn(case, NormalGrid.for_case(case, 256))
    levels = operator.eigenvalues(4)
    expected = (np.arange(1, 5) * np.pi / width) ** 2
    assert_allclose(levels, expected, rtol=1e-2)


def test_harmonic_ladder():
    case = ConfinementCase("b", 10.0, omega=1.0)
    operator = assemble_Hn(case, NormalGrid.for_case(case, 256))
    levels = operator.eigenvalues(4)
    expected = np.sqrt(10.0) * (2 * np.arange(4) + 1)
    assert_allclose(levels, expected, rtol=2e-2)


def test_free_periodic_normal_problem():
    grid = NormalGrid(n=64, lower=0.0, upper=2 * np.pi, periodic=True)
    operator = assemble_Hn(None, grid)
    h = grid.spacing
    k = np.arange(64)
    expected = np.sort((2 - 2 * np.cos(k * h)) / h**2)
    assert_allclose(operator.eigenvalues(), expected, atol=1e-10)
    full = np.linalg.eigvalsh(operator.matrix.toarray())
    assert_allclose(np.sort(full), np.sort(np.concatenate([expected, -expected])), atol=1e-10)


def test_linear_case_spectrum_is_real_and_sorted():
    case = ConfinementCase("a", 10.0, omega=1.0)
    operator = assemble_Hn(case, NormalGrid.for_case(case, 256))
    dense = operator.positive.toarray()
    assert_allclose(dense, dense.T, atol=1e-14)
    levels = operator.eigenvalues(5)
    assert np.all(np.diff(levels) > 0)
    assert levels[0] > 0


def test_linear_case_ground_level_settles_under_refinement():
    case = ConfinementCase("a", 10.0, omega=1.0)
    levels = [assemble_Hn(case, NormalGrid.for_case(case, n)).eigenvalues(1)[0] for n in (512, 1024)]
    assert levels[1] == pytest.approx(levels[0], rel=1e-2)


def test_normal_grid_needs_resolution():
    with pytest.raises(GridTooCoarse):
        NormalGrid(n=32, lower=-1.0, upper=1.0)
