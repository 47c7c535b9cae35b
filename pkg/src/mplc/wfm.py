"""Wavefront-matching synthesis of phase-mask stacks.

The optimizer alternates two sweeps.  All input fields are propagated
forward through the current mask stack while the complex amplitude
arriving at every modulation plane is recorded.  The target fields are
then propagated backward from the output plane; at each plane, from last
to first, the per-pair overlap between the recorded forward field and
the backward field (including the current mask phase) is formed, each
pair is rotated by the argument of its area-integrated overlap so the
pairs interfere constructively, and the mask is incremented by the
negative argument of the pair sum.  The updated mask is imprinted
(conjugated) on the backward fields before they continue toward the
previous plane.  Iterations repeat until the mean squared overlap stops
improving or the iteration cap is reached.

Pixels where the pair sum vanishes carry no gradient information and
receive no phase update.  The whole procedure is deterministic: for
identical inputs and configuration the masks are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fields import Field, GridSpec
from .gates import GateMatrix, ModeBasis, target_fields
from .propagation import (
    DEFAULT_BAND_LIMIT,
    PhaseMask,
    PropagationSpec,
    transfer_function,
    wrap_phase,
)

__all__ = [
    "WfmConfig",
    "ConverterDesign",
    "ConvergenceTrace",
    "IdealConverter",
    "wfm_optimize",
    "design_converter",
    "simulate_converter",
    "sweep_planes",
]

DEFAULT_MAX_ITERATIONS = 50
DEFAULT_EPSILON = 1e-5
_STALL_LIMIT = 3  # stop after this many consecutive sub-epsilon gains


@dataclass(frozen=True)
class WfmConfig:
    """Geometry and stopping rules for one optimization run.

    ``lead_in`` and ``lead_out`` are the propagation distances before the
    first and after the last mask; they default to half the plane
    spacing.

    ``phase_anchor`` controls the phase reference used when the per-pair
    overlaps are summed in the mask update.  Each pair's reference is its
    own average overlap phase, pulled by this fraction toward the common
    average of all pairs.  At 0 the referencing is fully per-pair, which
    converges fast but leaves the relative output phases of the pairs
    free to drift, degrading superposition (unbiased-basis) visibility;
    at 1 the reference is fully shared and pair phases are locked at the
    fixed point.  The default 0.5 pins relative phases to a few
    hundredths of a radian without a measurable cost in conversion
    efficiency.

    ``balance_exponent`` biases each update toward the currently weakest
    pairs: pair contributions are weighted by
    ``(mean overlap / pair overlap) ** balance_exponent``.  At 0 all
    pairs count alike and the converged per-pair efficiencies spread by
    several percent, which reads as decoherence in process tomography;
    the default 1.0 equalizes them.
    """

    grid: GridSpec
    n_planes: int
    plane_spacing: float
    lead_in: float | None = None
    lead_out: float | None = None
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    convergence_epsilon: float = DEFAULT_EPSILON
    band_limit_fraction: float = DEFAULT_BAND_LIMIT
    phase_anchor: float = 0.5
    balance_exponent: float = 1.0

    def __post_init__(self) -> None:
        if self.n_planes < 1:
            raise ValueError("need at least one modulation plane")
        if self.plane_spacing < 0:
            raise ValueError("plane spacing must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("need at least one iteration")
        if not (0.0 < self.band_limit_fraction <= 1.0):
            raise ValueError("band_limit_fraction must lie in (0, 1]")
        if self.lead_in is None:
            object.__setattr__(self, "lead_in", self.plane_spacing / 2.0)
        if self.lead_out is None:
            object.__setattr__(self, "lead_out", self.plane_spacing / 2.0)
        if self.lead_in < 0 or self.lead_out < 0:
            raise ValueError("lead distances must be non-negative")


@dataclass(frozen=True)
class ConvergenceTrace:
    """Mean squared target overlap per iteration, entry 0 = zero masks."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("trace must be a non-empty vector")
        if np.any(values < -1e-12) or np.any(values > 1.0 + 1e-9):
            raise ValueError("trace values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def final(self) -> float:
        return float(self.values[-1])

    @property
    def iterations(self) -> int:
        return self.values.size - 1


@dataclass(frozen=True)
class ConverterDesign:
    """Ordered phase masks plus the geometry they were optimized for.

    ``basis`` and ``gate`` record what the design implements; they are
    None for raw field-to-field optimizations.
    """

    masks: tuple[PhaseMask, ...]
    config: WfmConfig
    basis: ModeBasis | None = None
    gate: GateMatrix | None = None

    def __post_init__(self) -> None:
        if len(self.masks) != self.config.n_planes:
            raise ValueError("mask count must match the configured plane count")
        if any(m.grid != self.config.grid for m in self.masks):
            raise ValueError("all masks must share the design grid")
        object.__setattr__(self, "masks", tuple(self.masks))

    def simulate(self, f: Field) -> Field:
        return simulate_converter(self, f)

    def with_masks(self, masks) -> "ConverterDesign":
        return replace(self, masks=tuple(masks))


def _segment_kernels(config: WfmConfig) -> list[np.ndarray]:
    """Forward transfer functions for the n_planes + 1 free-space hops."""
    blf = config.band_limit_fraction
    grid = config.grid
    distances = (
        [config.lead_in]
        + [config.plane_spacing] * (config.n_planes - 1)
        + [config.lead_out]
    )
    return [transfer_function(grid, PropagationSpec(z, blf)) for z in distances]


def _hop(amps: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(np.fft.fft2(amps, axes=(-2, -1)) * kernel, axes=(-2, -1))


def _forward_pass(
    amps: np.ndarray, phases: np.ndarray, kernels: list[np.ndarray]
) -> tuple[np.ndarray, np.ndarray]:
    """Run the stack; return per-plane incident fields and the output."""
    n_planes = phases.shape[0]
    incident = np.empty((n_planes,) + amps.shape, dtype=np.complex128)
    u = _hop(amps, kernels[0])
    for t in range(n_planes):
        incident[t] = u
        u = u * np.exp(1j * phases[t])
        u = _hop(u, kernels[t + 1])
    return incident, u


def _mean_sq_overlap(outputs: np.ndarray, targets: np.ndarray, pixel_area: float) -> float:
    ov = np.sum(np.conj(targets) * outputs, axis=(-2, -1)) * pixel_area
    return float(np.mean(np.abs(ov) ** 2))


def wfm_optimize(
    inputs: list[Field], targets: list[Field], config: WfmConfig
) -> tuple[ConverterDesign, ConvergenceTrace]:
    """Optimize a mask stack mapping each input field onto its target.

    Inputs and targets must be normalized and share the configured grid.
    Returns the design together with the convergence trace; the trace
    holds the mean squared overlap before any update (index 0) and after
    each iteration's backward sweep.
    """
    if len(inputs) != len(targets) or not inputs:
        raise ValueError("inputs and targets must be non-empty and equally long")
    if config.plane_spacing <= 0 and config.n_planes > 1:
        raise ValueError("plane spacing must be positive to optimize a multi-plane stack")
    for f in (*inputs, *targets):
        if f.grid != config.grid:
            raise ValueError("all fields must live on the configured grid")
        if not f.is_normalized(tol=1e-6):
            raise ValueError("inputs and targets must be normalized")

    grid = config.grid
    area = grid.pixel_area
    kernels = _segment_kernels(config)
    back_kernels = [np.conj(k) for k in kernels]
    fwd0 = np.stack([f.amp for f in inputs])
    tgt = np.stack([t.amp for t in targets])
    phases = np.zeros((config.n_planes, grid.n, grid.n))

    incident, out = _forward_pass(fwd0, phases, kernels)
    trace = [_mean_sq_overlap(out, tgt, area)]
    stalled = 0
    for _ in range(config.max_iterations):
        ov = np.abs(np.sum(np.conj(tgt) * out, axis=(-2, -1))) * area
        floor = max(1e-3, 0.05 * float(np.mean(ov)))
        weights = (np.mean(ov) / np.maximum(ov, floor)) ** config.balance_exponent
        # cap the bias so a collapsing pair cannot seize the whole update
        weights = np.clip(weights, 1.0 / 3.0, 3.0)
        b = _hop(tgt, back_kernels[config.n_planes])
        for t in range(config.n_planes - 1, -1, -1):
            pair = np.conj(b) * incident[t] * np.exp(1j * phases[t])
            pair_sums = np.sum(pair, axis=(-2, -1))
            mean_phase = np.angle(pair_sums)
            common = np.angle(np.sum(pair_sums))
            # Pull each pair's phase reference toward the common average
            # along the short arc; see the phase_anchor field docs.
            ref = mean_phase + config.phase_anchor * np.angle(
                np.exp(1j * (common - mean_phase))
            )
            combined = np.sum(
                pair * (weights * np.exp(-1j * ref))[:, None, None], axis=0
            )
            # angle(0) == 0, so dead pixels receive no update
            phases[t] = wrap_phase(phases[t] - np.angle(combined))
            if t > 0:
                b = b * np.exp(-1j * phases[t])
                b = _hop(b, back_kernels[t])
        incident, out = _forward_pass(fwd0, phases, kernels)
        trace.append(_mean_sq_overlap(out, tgt, area))
        gain = trace[-1] - trace[-2]
        stalled = stalled + 1 if gain < config.convergence_epsilon else 0
        if stalled >= _STALL_LIMIT:
            break

    masks = tuple(PhaseMask(grid, phases[t]) for t in range(config.n_planes))
    design = ConverterDesign(masks=masks, config=config)
    return design, ConvergenceTrace(np.asarray(trace))


def design_converter(
    gate: GateMatrix, basis: ModeBasis, config: WfmConfig
) -> tuple[ConverterDesign, ConvergenceTrace]:
    """Optimize the mask stack realizing ``gate`` on ``basis`` modes."""
    inputs, targets = target_fields(gate, basis, config.grid)
    design, trace = wfm_optimize(inputs, targets, config)
    return replace(design, basis=basis, gate=gate), trace


def simulate_converter(design: ConverterDesign, f: Field) -> Field:
    """Deterministic forward pass of one field through the design."""
    if f.grid != design.config.grid:
        raise ValueError("input field does not live on the design grid")
    kernels = _segment_kernels(design.config)
    phases = np.stack([m.phase for m in design.masks])
    _, out = _forward_pass(f.amp, phases, kernels)
    return Field(f.grid, out)


@dataclass(frozen=True)
class IdealConverter:
    """Exact gate action in mode space, bypassing any mask stack.

    Decomposes the input on the basis modes, applies the gate to the
    coefficients and resynthesizes on the output-waist modes.  Content
    outside the modeled subspace is discarded, not renormalized.
    """

    gate: GateMatrix
    basis: ModeBasis
    grid: GridSpec

    def simulate(self, f: Field) -> Field:
        if f.grid != self.grid:
            raise ValueError("input field does not live on the converter grid")
        area = self.grid.pixel_area
        in_modes = self.basis.input_fields(self.grid)
        out_modes = self.basis.output_fields(self.grid)
        coeffs = np.array([np.vdot(m.amp, f.amp) * area for m in in_modes])
        out_coeffs = self.gate.image(coeffs)
        amp = np.zeros((self.grid.n, self.grid.n), dtype=np.complex128)
        for c, m in zip(out_coeffs, out_modes):
            amp += c * m.amp
        return Field(self.grid, amp)


def sweep_planes(
    gate_family,
    dims: list[int],
    plane_counts: list[int],
    config_template: WfmConfig,
    input_waist: float,
    output_waist_scale: float = 1.0,
    basis_family=None,
    with_tomography: bool = True,
) -> list[dict]:
    """Optimize and evaluate one design per (dimension, plane count) cell.

    ``gate_family`` maps a dimension to a gate (e.g. the unit cyclic
    shift); ``basis_family`` maps a dimension to a :class:`ModeBasis`
    and defaults to azimuthal-only labels symmetric around zero.
    Each record holds dimension, plane count, computational-basis
    visibility and (optionally) the reconstructed process purity.
    """
    from . import evaluate as _evaluate
    from . import tomography as _tomography
    from .gates import oam_mode_labels

    if basis_family is None:
        def basis_family(d: int) -> ModeBasis:
            return ModeBasis(
                modes=tuple(oam_mode_labels(d)),
                input_waist=input_waist,
                output_waist_scale=output_waist_scale,
            )

    records = []
    for d in dims:
        gate = gate_family(d)
        basis = basis_family(d)
        for n_planes in plane_counts:
            config = replace(config_template, n_planes=n_planes)
            design, trace = design_converter(gate, basis, config)
            ct = _evaluate.crosstalk_matrix(design, _evaluate.computational_states(gate.d))
            record = {
                "d": gate.d,
                "n_planes": n_planes,
                "visibility": _evaluate.visibility(ct),
                "final_overlap": trace.final,
            }
            if with_tomography:
                probe = _tomography.probe_channel(design)
                chi = _tomography.reconstruct_chi(probe.records, gate.d)
                record["process_purity"] = _tomography.process_purity(
                    _tomography.choi_from_chi(chi)
                )
            records.append(record)
    return records
