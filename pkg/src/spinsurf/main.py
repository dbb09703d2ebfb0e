from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .acceptance import (
    ValidationResult,
    validate_confinement_shift,
    validate_fw_slope,
    validate_gap_scan,
    validate_metric_identity,
    validate_spectrum,
)
from .artifacts import (
    CONFINEMENT_HEADER,
    FW_HEADER,
    GAP_CHANNELS_HEADER,
    GAP_SCAN_HEADER,
    GEOMETRY_HEADER,
    SPECTRUM_HEADER,
    write_csv,
    write_json,
)
from .config import RunConfig, build_chart, load_config, resolve_output_dir
from .errors import AcceptanceFailure, SpinsurfError, UnsupportedChart
from .fw import BlockOperator, fw_scaling, fw_sequence
from .geometry import SurfaceChart, metric_identity_check
from .hamiltonian import (
    NormalGrid,
    assemble_Hn,
    assemble_Hpp,
    assemble_Hs,
    effective_hamiltonian,
    surface_dirac_operator,
)
from .spectral import Grid2D, SpectrumResult, eigensolve, gap_scan, local_gap_profile

logger = logging.getLogger("spinsurf")


@dataclass
class CommandResult:
    command: str
    out_dir: Path
    files: list[Path] = field(default_factory=list)
    validation: ValidationResult = field(default_factory=ValidationResult)


def _append_jsonl(path: Path, payload: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(payload, ensure_ascii=True, sort_keys=True) + "\n")


class RunEventLogger:
    """Per-step JSONL events; nothing touches disk unless a log path is given."""

    def __init__(self, log_path: Path | None = None):
        self.log_path = log_path
        self.events: list[dict[str, Any]] = []

    def log(self, *, step: str, duration_ms: int, status: str, detail: str = "") -> None:
        event = {"step": step, "duration_ms": duration_ms, "status": status, "detail": detail}
        self.events.append(event)
        if self.log_path is not None:
            _append_jsonl(self.log_path, event)

    @contextmanager
    def step(self, name: str) -> Iterator[None]:
        started = time.perf_counter()
        try:
            yield
        except Exception as exc:
            self.log(step=name, duration_ms=_elapsed_ms(started), status="failed", detail=str(exc))
            raise
        self.log(step=name, duration_ms=_elapsed_ms(started), status="ok")

    def write_summary(self) -> Path | None:
        if self.log_path is None:
            return None
        summary_path = self.log_path.parent / "event-diagnostics.json"
        summary = {
            "log_path": str(self.log_path),
            "total_steps": len(self.events),
            "failed_steps": sum(1 for e in self.events if e["status"] != "ok"),
            "total_duration_ms": sum(e["duration_ms"] for e in self.events),
        }
        summary_path.parent.mkdir(parents=True, exist_ok=True)
        summary_path.write_text(json.dumps(summary, indent=2, ensure_ascii=True) + "\n", encoding="utf-8")
        return summary_path


def _elapsed_ms(started: float) -> int:
    return int((time.perf_counter() - started) * 1000)


def _summary_payload(
    config: RunConfig,
    command: str,
    validation: ValidationResult,
    files: list[Path],
    **extra: Any,
) -> dict[str, Any]:
    return {
        "command": command,
        "version": __version__,
        "config": config.echo(),
        "files": sorted(p.name for p in files),
        "acceptance": validation.to_dict(),
        **extra,
    }


def _grid(config: RunConfig, chart: SurfaceChart) -> Grid2D:
    return Grid2D.for_chart(chart, config.grid.n1, config.grid.n2, config.grid.order)


def _spectrum_rows(result: SpectrumResult) -> list[tuple[int, str, float, float]]:
    return [(p.index, p.block, p.value, p.residual) for p in result.pairs]


def cmd_geometry(config: RunConfig, out_dir: Path, events: RunEventLogger) -> CommandResult:
    result = CommandResult("geometry", out_dir)
    chart = build_chart(config.surface)
    grid = _grid(config, chart)
    with events.step("frames"):
        frames = grid.frames(chart, frame_angle=config.physics.frame_angle)
    kappa = frames.principal_curvatures
    rows = [
        (
            frames.q1[i], frames.q2[i],
            frames.g[i, 0, 0], frames.g[i, 0, 1], frames.g[i, 1, 1],
            kappa[i, 0], kappa[i, 1],
            frames.omega[i, 0], frames.omega[i, 1],
            frames.f_coeffs[i, 0], frames.f_coeffs[i, 1],
        )
        for i in range(grid.size)
    ]
    result.files.append(write_csv(out_dir / "geometry.csv", GEOMETRY_HEADER, [tuple(map(float, r)) for r in rows]))

    with events.step("metric-identity"):
        report = metric_identity_check(chart, points=config.output.metric_points, seed=config.seed)
    # Finite-difference charts cannot reach the analytic tolerance.
    tolerance = config.output.metric_tol if chart.deriv_mode == "analytic" else max(config.output.metric_tol, 1e-6)
    result.validation = validate_metric_identity(report.max_relative_deviation, tolerance)
    identity_path = out_dir / "metric-identity.json"
    result.files.append(identity_path)
    write_json(
        identity_path,
        _summary_payload(
            config, "geometry", result.validation, result.files,
            metric_identity=report.to_dict(), tolerance=tolerance, deriv_mode=chart.deriv_mode,
            coordinates=list(chart.coordinate_names),
        ),
    )
    print(f"Saved geometry table to {out_dir / 'geometry.csv'}")
    print(f"Metric expansion max relative deviation: {report.max_relative_deviation:.3e}")
    return result


def _normal_summary(config: RunConfig) -> dict[str, Any]:
    case = config.confinement()
    operator = assemble_Hn(case, NormalGrid.for_case(case, config.solve.normal_nodes))
    levels = operator.eigenvalues(min(4, operator.grid.n))
    return {"case": case.label, "nodes": operator.grid.n, "lowest": levels.tolist()}


def cmd_spectrum(config: RunConfig, out_dir: Path, events: RunEventLogger) -> CommandResult:
    result = CommandResult("spectrum", out_dir)
    chart = build_chart(config.surface)
    grid = _grid(config, chart)
    case = config.confinement()
    with events.step("assemble"):
        operator, _ = effective_hamiltonian(chart, grid, config.physics.m, case, config.physics.frame_angle)
    with events.step("eigensolve"):
        spectrum = eigensolve(operator, config.solve.k, mode=config.solve.mode, tol=config.solve.tol)
    with events.step("normal"):
        normal = _normal_summary(config)
    result.validation = validate_spectrum(
        hermiticity=operator.hermiticity_residual(),
        pairing=spectrum.pairing_defect(),
        max_residual=spectrum.max_residual,
        operator_norm=operator.norm,
        residual_tol=config.solve.residual_tol,
    )
    result.files.append(write_csv(out_dir / "spectrum.csv", SPECTRUM_HEADER, _spectrum_rows(spectrum)))
    summary_path = out_dir / "spectrum.json"
    result.files.append(summary_path)
    write_json(
        summary_path,
        _summary_payload(
            config, "spectrum", result.validation, result.files,
            diagnostics=spectrum.diagnostics, confinement=case.label, normal=normal,
        ),
    )
    print(f"Saved eigenvalues to {out_dir / 'spectrum.csv'}")
    return result


def cmd_gap_scan(config: RunConfig, out_dir: Path, events: RunEventLogger) -> CommandResult:
    result = CommandResult("gap-scan", out_dir)
    chart = build_chart(config.surface)
    if not chart.axisymmetric:
        raise UnsupportedChart("gap scan needs a torus-like chart", preset=chart.preset_tag)
    grid = _grid(config, chart)
    with events.step("assemble"):
        operator, terms = assemble_Hs(chart, grid, config.physics.m, config.physics.frame_angle)
    with events.step("eigensolve"):
        spectrum = eigensolve(operator, config.solve.k, mode=config.solve.mode, tol=config.solve.tol)
    spectrum.gap_profile = local_gap_profile(terms.total(), grid, chart)
    rows = gap_scan(spectrum, chart)

    result.files.append(
        write_csv(
            out_dir / "gap-scan.csv",
            GAP_SCAN_HEADER,
            [(r.theta, r.zeeman_coeff, r.spin_conn_coeff, r.doublet_splitting) for r in rows],
        )
    )
    result.files.append(
        write_csv(
            out_dir / "gap-channels.csv",
            GAP_CHANNELS_HEADER,
            [(r.theta, r.inplane_splitting, r.normal_splitting, r.total_splitting, r.geom_potential) for r in rows],
        )
    )
    is_torus = chart.preset_tag == "torus"
    result.validation = validate_gap_scan(
        thetas=[r.theta for r in rows],
        zeeman=[r.zeeman_coeff for r in rows],
        spin_conn=[r.spin_conn_coeff for r in rows],
        geom_potential=[r.geom_potential for r in rows],
        splitting=[r.doublet_splitting for r in rows],
        spacing=grid.spacing[0],
        period=2 * np.pi if chart.periodic[0] else None,
        zeeman_zeros=(np.pi / 2, 3 * np.pi / 2) if is_torus else None,
        spin_conn_zeros=(0.0, np.pi) if is_torus else None,
    )
    summary_path = out_dir / "gap-scan.json"
    result.files.append(summary_path)
    write_json(
        summary_path,
        _summary_payload(
            config, "gap-scan", result.validation, result.files,
            diagnostics=spectrum.diagnostics,
            lowest_positive=spectrum.positive.tolist(),
            spectral_doublet_splitting=spectrum.doublet_splitting(),
        ),
    )
    print(f"Saved gap scan to {out_dir / 'gap-scan.csv'}")
    return result


def cmd_fw_verify(config: RunConfig, out_dir: Path, events: RunEventLogger) -> CommandResult:
    result = CommandResult("fw-verify", out_dir)
    chart = build_chart(config.surface)
    grid = Grid2D.for_chart(chart, config.fw.n1, config.fw.n2, config.grid.order)

    def builder(m: float) -> BlockOperator:
        return BlockOperator.from_grid_operator(surface_dirac_operator(chart, grid, m, config.physics.frame_angle), m)

    with events.step("fw-scaling"):
        scaling = fw_scaling(builder, config.fw.masses, config.fw.steps)
    converged = all(run.converged for run in scaling.runs)
    if converged:
        result.validation = validate_fw_slope(scaling.slope, config.fw.slope_max)
    else:
        logger.warning("FW residuals are not monotone; the 1/m expansion has not converged")
        result.validation = ValidationResult(metrics={"slope": scaling.slope})

    with events.step("spectrum-invariance"):
        m0 = config.fw.masses[0]
        start = builder(m0)
        end, _ = fw_sequence(start, m0, config.fw.steps)
        drift = float(np.max(np.abs(start.eigenvalues() - end.eigenvalues())))
    result.validation.metrics["spectrum_drift"] = drift
    if drift > 1e-10 * max(1.0, float(np.linalg.norm(start.matrix, ord=2))):
        result.validation.errors.append(f"FW steps moved the spectrum by {drift:.3e}")

    result.files.append(write_csv(out_dir / "fw-residuals.csv", FW_HEADER, scaling.rows()))
    summary_path = out_dir / "fw-verify.json"
    result.files.append(summary_path)
    write_json(
        summary_path,
        _summary_payload(
            config, "fw-verify", result.validation, result.files,
            slope=scaling.slope,
            slope_defined=scaling.slope is not None,
            converged=converged,
            runs=[{"m": run.m, "converged": run.converged, "history": run.history} for run in scaling.runs],
        ),
    )
    slope_text = "undefined" if scaling.slope is None else f"{scaling.slope:.3f}"
    print(f"FW residual log-log slope: {slope_text}")
    return result


def cmd_compare_confinement(config: RunConfig, out_dir: Path, events: RunEventLogger) -> CommandResult:
    result = CommandResult("compare-confinement", out_dir)
    chart = build_chart(config.surface)
    grid = _grid(config, chart)
    m = config.physics.m
    with events.step("assemble"):
        hs, terms = assemble_Hs(chart, grid, m, config.physics.frame_angle)
    spectra = {"hs": eigensolve(hs, config.solve.k, mode=config.solve.mode, tol=config.solve.tol)}
    norms = {}
    for label in ("a", "b", "c"):
        case = config.confinement(label)
        with events.step(f"case-{label}"):
            correction = assemble_Hpp(chart, grid, case, terms)
            norms[label] = correction.norm
            spectra[f"case_{label}"] = eigensolve(
                hs + correction, config.solve.k, mode=config.solve.mode, tol=config.solve.tol
            )

    rows = []
    for block in ("positive", "negative"):
        columns = [spectra[key].values(block) for key in ("hs", "case_a", "case_b", "case_c")]
        for index, values in enumerate(zip(*columns)):
            rows.append((index, block, *map(float, values)))

    shift = config.physics.omega / (4 * m)
    b, c = spectra["case_b"], spectra["case_c"]
    shift_error = 0.0
    if len(b.positive):
        shift_error = float(
            max(
                np.max(np.abs(b.positive - c.positive + shift)),
                np.max(np.abs(b.negative - c.negative - shift)),
            )
        )
    result.validation = validate_confinement_shift(shift_error, norms["c"])

    result.files.append(write_csv(out_dir / "confinement.csv", CONFINEMENT_HEADER, rows))
    summary_path = out_dir / "confinement.json"
    result.files.append(summary_path)
    write_json(
        summary_path,
        _summary_payload(
            config, "compare-confinement", result.validation, result.files,
            expected_shift=-shift, correction_norms=norms,
        ),
    )
    print(f"Saved confinement comparison to {out_dir / 'confinement.csv'}")
    return result


COMMANDS: dict[str, Callable[[RunConfig, Path, RunEventLogger], CommandResult]] = {
    "geometry": cmd_geometry,
    "spectrum": cmd_spectrum,
    "gap-scan": cmd_gap_scan,
    "fw-verify": cmd_fw_verify,
    "compare-confinement": cmd_compare_confinement,
}


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Spin-resolved effective Hamiltonians of Dirac particles confined to curved surfaces.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "geometry": "Tabulate surface geometry and check the metric expansion.",
        "spectrum": "Assemble H_s with confinement and solve for the lowest states.",
        "gap-scan": "Scan the curvature-induced spin splitting across theta.",
        "fw-verify": "Measure FW odd-residual scaling with the mass.",
        "compare-confinement": "Compare spectra for the three confinement cases.",
    }
    for name, text in helps.items():
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument("--config", default=None, help="INI config file; defaults apply when omitted.")
        sub.add_argument("--out", default=None, help="Output directory (overrides SPINSURF_OUT and the config).")
        sub.add_argument("--seed", type=int, default=None, help="Seed for randomised identity sampling.")
        sub.add_argument("--event-log", default=None, help="Optional JSONL path for per-step timing events.")
    return parser.parse_args(argv)


def _configure_logging() -> None:
    level = os.environ.get("SPINSURF_LOG_LEVEL", "WARNING").strip().upper() or "WARNING"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def run_command(args: argparse.Namespace) -> CommandResult:
    config = load_config(args.config, seed=args.seed)
    out_dir = resolve_output_dir(config, args.out)
    events = RunEventLogger(Path(args.event_log) if args.event_log else None)
    try:
        with events.step(args.command):
            result = COMMANDS[args.command](config, out_dir, events)
    finally:
        diagnostics_path = events.write_summary()
        if diagnostics_path is not None:
            print(f"Event diagnostics written to {diagnostics_path}")
    if result.validation.passed:
        print("Acceptance checks passed.")
    else:
        print("Acceptance checks failed:")
        for err in result.validation.errors:
            print(f" - {err}")
    return result


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    _configure_logging()
    try:
        result = run_command(args)
        if not result.validation.passed:
            raise AcceptanceFailure("; ".join(result.validation.errors), command=result.command)
    except SpinsurfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
