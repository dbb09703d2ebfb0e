import numpy as np
import pytest

from spinsurf.acceptance import local_minima, validate_gap_scan, zero_crossings


def torus_columns(n):
    thetas = np.arange(n) * 2 * np.pi / n
    rho = 2.0 + 0.5 * np.cos(thetas)
    return thetas, np.cos(thetas) / rho, np.sin(thetas)


@pytest.mark.parametrize("n", [30, 32])
def test_gap_scan_accepts_torus_profile(n):
    thetas, zeeman, spin_conn = torus_columns(n)
    result = validate_gap_scan(
        thetas, zeeman, spin_conn, np.zeros(n), spacing=2 * np.pi / n, splitting=np.abs(zeeman)
    )
    assert result.passed, result.errors


def test_gap_scan_rejects_misplaced_splitting_minima():
    thetas, zeeman, spin_conn = torus_columns(32)
    result = validate_gap_scan(
        thetas, zeeman, spin_conn, np.zeros(32), spacing=2 * np.pi / 32, splitting=np.abs(spin_conn)
    )
    assert not result.passed
    assert "Splitting minima" in result.errors[0]


def test_local_minima_are_ordered_by_value():
    thetas = np.arange(8.0)
    values = [3.0, 1.0, 2.0, 0.5, 4.0, 5.0, 0.2, 6.0]
    assert local_minima(thetas, values, period=8.0) == [6.0, 3.0, 1.0]
    assert local_minima(thetas, values, period=None) == [6.0, 3.0, 1.0]


def test_zero_crossings_interpolate_sign_changes():
    thetas = np.array([0.0, 1.0, 2.0, 3.0])
    assert zero_crossings(thetas, [1.0, -1.0, -1.0, 1.0], period=None) == pytest.approx([0.5, 2.5])
