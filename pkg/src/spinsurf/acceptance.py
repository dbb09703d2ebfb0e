from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ValidationResult:
    errors: list[str] = field(default_factory=list)
    metrics: dict[str, float | None] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.errors

    def merge(self, other: ValidationResult) -> ValidationResult:
        return ValidationResult(errors=self.errors + other.errors, metrics={**self.metrics, **other.metrics})

    def to_dict(self) -> dict[str, object]:
        return {"passed": self.passed, "errors": list(self.errors), "metrics": dict(self.metrics)}


def validate_metric_identity(max_deviation: float, tolerance: float) -> ValidationResult:
    errors = []
    if max_deviation > tolerance:
        errors.append(f"Metric expansion deviates from the embedded metric: {max_deviation:.3e} > {tolerance:.1e}")
    return ValidationResult(errors=errors, metrics={"metric_max_deviation": max_deviation})


def validate_spectrum(
    hermiticity: float,
    pairing: float,
    max_residual: float,
    operator_norm: float,
    residual_tol: float = 1e-8,
) -> ValidationResult:
    errors = []
    if hermiticity > 1e-12:
        errors.append(f"Operator is not Hermitian: residual {hermiticity:.3e}")
    if pairing > 1e-10 * max(operator_norm, 1.0):
        errors.append(f"Spectrum is not paired across beta blocks: defect {pairing:.3e}")
    if max_residual > residual_tol * max(operator_norm, 1.0):
        errors.append(f"Eigenpair residual too large: {max_residual:.3e}")
    return ValidationResult(
        errors=errors,
        metrics={"hermiticity_residual": hermiticity, "pairing_defect": pairing, "max_residual": max_residual},
    )


def validate_fw_slope(slope: float | None, slope_max: float) -> ValidationResult:
    # No slope means every residual vanished: nothing left to converge.
    errors = []
    if slope is not None and slope > slope_max:
        errors.append(f"FW residual slope too shallow: {slope:.3f} > {slope_max}")
    return ValidationResult(errors=errors, metrics={"slope": slope})


def validate_confinement_shift(shift_error: float, correction_c_norm: float, tolerance: float = 1e-8) -> ValidationResult:
    errors = []
    if shift_error > tolerance:
        errors.append(f"Harmonic confinement shift off by {shift_error:.3e}")
    if correction_c_norm != 0.0:
        errors.append(f"Square-well correction is not zero: norm {correction_c_norm:.3e}")
    return ValidationResult(
        errors=errors,
        metrics={"shift_error": shift_error, "square_well_norm": correction_c_norm},
    )


def zero_crossings(thetas: Sequence[float], values: Sequence[float], period: float | None, floor: float = 1e-12) -> list[float]:
    """Positions where a sampled coefficient vanishes or changes sign, linearly interpolated."""
    values = np.where(np.abs(values) <= floor, 0.0, np.asarray(values, dtype=float))
    thetas = np.asarray(thetas, dtype=float)
    count = len(values)
    last = count if period is not None else count - 1
    crossings = []
    for i in range(count):
        if values[i] == 0.0:
            crossings.append(float(thetas[i]))
            continue
        if i >= last:
            continue
        j = (i + 1) % count
        if values[i] * values[j] < 0:
            upper = thetas[j] + (period if j < i else 0.0)
            t = values[i] / (values[i] - values[j])
            crossings.append(float(thetas[i] + t * (upper - thetas[i])))
    return crossings


def local_minima(thetas: Sequence[float], values: Sequence[float], period: float | None) -> list[float]:
    """Positions of the local minima of a sampled profile, smallest value first."""
    values = np.asarray(values, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    count = len(values)
    found = []
    for i in range(count):
        if period is None:
            left = values[i - 1] if i > 0 else np.inf
            right = values[i + 1] if i < count - 1 else np.inf
        else:
            left, right = values[i - 1], values[(i + 1) % count]
        if values[i] < left and values[i] <= right:
            found.append((values[i], float(thetas[i])))
    return [theta for _, theta in sorted(found)]


def _crossings_match(found: list[float], targets: Sequence[float], spacing: float, period: float | None) -> bool:
    if len(found) != len(targets):
        return False

    def distance(a: float, b: float) -> float:
        gap = abs(a - b)
        return min(gap, period - gap) if period else gap

    return all(min(distance(f, t) for f in found) <= spacing for t in targets)


def validate_gap_scan(
    thetas: Sequence[float],
    zeeman: Sequence[float],
    spin_conn: Sequence[float],
    geom_potential: Sequence[float],
    spacing: float,
    period: float | None = 2 * np.pi,
    zeeman_zeros: Sequence[float] | None = (np.pi / 2, 3 * np.pi / 2),
    spin_conn_zeros: Sequence[float] | None = (0.0, np.pi),
    splitting: Sequence[float] | None = None,
) -> ValidationResult:
    errors = []
    # The Zeeman-like gap closes where its coefficient does.
    if splitting is not None and zeeman_zeros is not None and len(splitting):
        minima = local_minima(thetas, splitting, period)[: len(zeeman_zeros)]
        if not _crossings_match(minima, zeeman_zeros, spacing, period):
            errors.append(f"Splitting minima {minima} do not sit at {list(zeeman_zeros)}")
    zeeman_found = zero_crossings(thetas, zeeman, period)
    spin_found = zero_crossings(thetas, spin_conn, period)
    if zeeman_zeros is not None and not _crossings_match(zeeman_found, zeeman_zeros, spacing, period):
        errors.append(f"Zeeman coefficient zeros {zeeman_found} do not sit at {list(zeeman_zeros)}")
    if spin_conn_zeros is not None and not _crossings_match(spin_found, spin_conn_zeros, spacing, period):
        errors.append(f"Spin-connection zeros {spin_found} do not sit at {list(spin_conn_zeros)}")
    geom_max = float(np.max(np.abs(geom_potential))) if len(geom_potential) else 0.0
    if geom_max > 1e-12:
        errors.append(f"Geometric potential is not zero: {geom_max:.3e}")
    return ValidationResult(
        errors=errors,
        metrics={"zeeman_zero_count": len(zeeman_found), "spin_conn_zero_count": len(spin_found), "geom_max": geom_max},
    )
