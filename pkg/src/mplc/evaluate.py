"""Measurement-side analysis: projections, crosstalk, visibility, alignment.

Crosstalk protocol
------------------
Probe states are grouped into bases ("I" = computational, "II".. =
unbiased superposition bases).  For a gate test the analysis state for
probe ``j`` is the gate image of probe ``j``, so an ideal device yields
the identity matrix.  Each input is simulated once and projected onto
every analysis state; probabilities are kept raw and, per analysis-basis
block, renormalized by the captured power, which is reported separately
as the capture efficiency.

Visibility is the diagonal fraction ``sum(C_ii) / sum(C_ij)`` of the raw
probabilities, pooled over the matched input/analysis basis blocks
(cross-basis pairs carry no gate-quality information: they sit at the
unbiased overlap for any unitary).  The row-renormalized diagonal mean is
reported alongside as the accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field, inner_product, superpose
from .gates import LabeledState, mub_states
from .wfm import ConverterDesign

__all__ = [
    "CrosstalkMatrix",
    "MisalignmentSpec",
    "GaParams",
    "AlignmentResult",
    "project",
    "computational_states",
    "pairwise_probe_states",
    "probe_states",
    "crosstalk_matrix",
    "visibility",
    "accuracy",
    "misalign",
    "genetic_align",
]


def project(out: Field, analysis: Field) -> float:
    """Projection probability ``|<analysis|out>|**2`` (ideal detection)."""
    if out.grid != analysis.grid:
        raise ValueError("fields live on different grids")
    if not analysis.is_normalized(tol=1e-6):
        raise ValueError("analysis field must be normalized")
    return float(abs(inner_product(analysis, out)) ** 2)


def computational_states(d: int) -> list[LabeledState]:
    """The ``d`` computational basis states (basis "I")."""
    eye = np.eye(d, dtype=np.complex128)
    return [LabeledState("I", i, eye[i]) for i in range(d)]


def pairwise_probe_states(d: int) -> list[LabeledState]:
    """Informationally complete probe family for non-prime dimensions.

    Computational states plus ``(|k> + |l>)/sqrt(2)`` and
    ``(|k> + i|l>)/sqrt(2)`` for every pair; the superposition pairs are
    grouped into pseudo-bases "S" and "T" for reporting purposes.
    """
    eye = np.eye(d, dtype=np.complex128)
    states = [LabeledState("I", i, eye[i]) for i in range(d)]
    idx = 0
    for k in range(d):
        for l in range(k + 1, d):
            states.append(LabeledState("S", idx, (eye[k] + eye[l]) / np.sqrt(2.0)))
            states.append(LabeledState("T", idx, (eye[k] + 1j * eye[l]) / np.sqrt(2.0)))
            idx += 1
    return states


def probe_states(d: int, kind: str = "mubs") -> list[LabeledState]:
    """Named probe families: "computational", "mubs", "pairwise".

    "mubs" falls back to the pairwise family for non-prime dimensions,
    where no full set of mutually unbiased bases is constructed here.
    """
    if kind == "computational":
        return computational_states(d)
    if kind == "pairwise":
        return pairwise_probe_states(d)
    if kind == "mubs":
        try:
            return mub_states(d)
        except ValueError:
            return pairwise_probe_states(d)
    raise ValueError(f"unknown probe family {kind!r}")


@dataclass(frozen=True)
class CrosstalkMatrix:
    """Raw and block-renormalized projection probabilities.

    Rows index input states, columns analysis states (the gate images of
    the same state list).  ``blocks`` maps each state index to its basis
    block id; ``capture`` holds, per row, the raw power captured by the
    analysis states of the row's own basis block.
    """

    raw: np.ndarray
    normalized: np.ndarray
    labels: tuple[str, ...]
    block_ids: tuple[int, ...]
    capture: np.ndarray

    def __post_init__(self) -> None:
        raw = np.asarray(self.raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
            raise ValueError("crosstalk matrix must be square")
        if np.any(raw < -1e-12) or np.any(raw > 1.0 + 1e-9):
            raise ValueError("probabilities must lie in [0, 1]")
        for arr in (raw, self.normalized, self.capture):
            np.asarray(arr).setflags(write=False)

    @property
    def d(self) -> int:
        return self.raw.shape[0]

    def matched_mask(self) -> np.ndarray:
        ids = np.asarray(self.block_ids)
        return ids[:, None] == ids[None, :]


def _simulator(converter):
    if hasattr(converter, "simulate"):
        return converter.simulate
    raise TypeError(f"{type(converter).__name__} cannot simulate fields")


def _converter_parts(converter):
    gate = converter.gate
    basis = converter.basis
    if gate is None or basis is None:
        raise ValueError("converter carries no gate/basis metadata")
    grid = converter.config.grid if isinstance(converter, ConverterDesign) else converter.grid
    return _simulator(converter), gate, basis, grid


def crosstalk_matrix(
    converter,
    inputs: list[LabeledState],
    analyses: list[LabeledState] | None = None,
) -> CrosstalkMatrix:
    """Probe the converter and tabulate gate-expected projection powers.

    ``analyses`` defaults to ``inputs``; analysis fields are the gate
    images of the analysis states on the output-waist modes.
    """
    simulate, gate, basis, grid = _converter_parts(converter)
    if analyses is None:
        analyses = inputs
    if len(analyses) != len(inputs):
        raise ValueError("inputs and analyses must pair up one to one")
    n = len(inputs)
    if n == 0:
        raise ValueError("need at least one probe state")

    in_modes = basis.input_fields(grid)
    out_modes = basis.output_fields(grid)
    ana_fields = [superpose(out_modes, gate.image(s.coeffs)) for s in analyses]

    raw = np.zeros((n, n))
    for i, state in enumerate(inputs):
        out = simulate(superpose(in_modes, state.coeffs))
        for j, ana in enumerate(ana_fields):
            raw[i, j] = abs(inner_product(ana, out)) ** 2

    block_labels = []
    for s in analyses:
        if s.basis not in block_labels:
            block_labels.append(s.basis)
    block_ids = tuple(block_labels.index(s.basis) for s in analyses)
    ids = np.asarray(block_ids)

    normalized = np.zeros_like(raw)
    capture = np.zeros(n)
    for b in range(len(block_labels)):
        cols = ids == b
        sums = raw[:, cols].sum(axis=1)
        if np.any(sums <= 0):
            raise ValueError("a probe captured no power in an analysis basis block")
        normalized[:, cols] = raw[:, cols] / sums[:, None]
        capture[ids == b] = sums[ids == b]

    labels = tuple(s.label for s in inputs)
    return CrosstalkMatrix(
        raw=raw, normalized=normalized, labels=labels,
        block_ids=block_ids, capture=capture,
    )


def visibility(C) -> float:
    """Diagonal fraction of the crosstalk probabilities.

    For a :class:`CrosstalkMatrix` the sum pools the matched
    input/analysis basis blocks; a plain array is treated as one block.
    """
    if isinstance(C, CrosstalkMatrix):
        mask = C.matched_mask()
        total = float(C.raw[mask].sum())
        diag = float(np.trace(C.raw))
    else:
        arr = np.asarray(C, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("crosstalk matrix must be square")
        total = float(arr.sum())
        diag = float(np.trace(arr))
    if total <= 0.0:
        raise ValueError("visibility undefined for an all-zero matrix")
    return diag / total


def accuracy(C: CrosstalkMatrix) -> float:
    """Mean renormalized diagonal probability (per-row normalization)."""
    return float(np.mean(np.diag(C.normalized)))


@dataclass(frozen=True)
class MisalignmentSpec:
    """Integer pixel offsets (dx, dy) applied to each mask in order."""

    offsets: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        offsets = tuple((int(dx), int(dy)) for dx, dy in self.offsets)
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def zero(cls, n_planes: int) -> "MisalignmentSpec":
        return cls(tuple((0, 0) for _ in range(n_planes)))

    def minus(self, other: "MisalignmentSpec") -> "MisalignmentSpec":
        if len(self.offsets) != len(other.offsets):
            raise ValueError("offset counts differ")
        return MisalignmentSpec(
            tuple(
                (a[0] - b[0], a[1] - b[1])
                for a, b in zip(self.offsets, other.offsets)
            )
        )


def _shifted(arr: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by whole pixels, zero-filling the exposed edges."""
    n0, n1 = arr.shape
    out = np.zeros_like(arr)
    src0 = slice(max(0, -dx), min(n0, n0 - dx))
    dst0 = slice(max(0, dx), min(n0, n0 + dx))
    src1 = slice(max(0, -dy), min(n1, n1 - dy))
    dst1 = slice(max(0, dy), min(n1, n1 + dy))
    out[dst0, dst1] = arr[src0, src1]
    return out


def misalign(design: ConverterDesign, spec: MisalignmentSpec) -> ConverterDesign:
    """Translate each mask by its integer offsets (zero-fill at edges)."""
    from .propagation import PhaseMask

    if len(spec.offsets) != len(design.masks):
        raise ValueError("offset count must match the mask count")
    bound = design.config.grid.n // 8
    for dx, dy in spec.offsets:
        if abs(dx) > bound or abs(dy) > bound:
            raise ValueError(f"offset ({dx}, {dy}) exceeds the +-{bound} pixel bound")
    masks = [
        PhaseMask(m.grid, _shifted(np.asarray(m.phase), dx, dy))
        for m, (dx, dy) in zip(design.masks, spec.offsets)
    ]
    return design.with_masks(masks)


@dataclass(frozen=True)
class GaParams:
    """Knobs of the elitist generational search for hologram offsets."""

    population: int = 30
    generations: int = 40
    mutation_rate: float = 0.15
    tournament: int = 3
    elitism: int = 1
    crossover_rate: float = 0.9
    bound: int = 3

    def __post_init__(self) -> None:
        if self.population < 2 or self.generations < 1:
            raise ValueError("population must be >= 2 and generations >= 1")
        if self.tournament < 1 or self.elitism < 0:
            raise ValueError("invalid tournament or elitism setting")
        if self.bound < 0:
            raise ValueError("search bound must be non-negative")


@dataclass(frozen=True)
class AlignmentResult:
    """Best offsets found plus the fitness log (non-decreasing by elitism)."""

    offsets: MisalignmentSpec
    fitness: float
    best_per_generation: tuple[float, ...]
    evaluations: int


def genetic_align(
    design: ConverterDesign,
    injected: MisalignmentSpec,
    params: GaParams = GaParams(),
    seed: int = 0,
    probes: list[LabeledState] | None = None,
) -> AlignmentResult:
    """Search for the offsets that undo an injected mask misalignment.

    Each population member proposes per-mask offsets; its fitness is the
    visibility of the crosstalk measurement with the net misalignment
    ``injected - candidate`` applied.  Exact recovery therefore maximizes
    the fitness.  Selection is by tournament, variation by uniform
    crossover and integer-gene mutation, and the best member always
    survives, so the per-generation best fitness never decreases.
    """
    d = design.gate.d if design.gate is not None else None
    if d is None:
        raise ValueError("design carries no gate metadata")
    for dx, dy in injected.offsets:
        if abs(dx) > params.bound or abs(dy) > params.bound:
            raise ValueError("search bound does not cover the injected offsets")
    if probes is None:
        probes = computational_states(d)

    n_genes = 2 * len(design.masks)
    rng = np.random.default_rng(seed)
    cache: dict[tuple[int, ...], float] = {}

    def fitness(genes: np.ndarray) -> float:
        key = tuple(int(g) for g in genes)
        if key not in cache:
            candidate = MisalignmentSpec(
                tuple((key[2 * i], key[2 * i + 1]) for i in range(len(design.masks)))
            )
            perturbed = misalign(design, injected.minus(candidate))
            cache[key] = visibility(crosstalk_matrix(perturbed, probes))
        return cache[key]

    pop = rng.integers(-params.bound, params.bound + 1, size=(params.population, n_genes))
    pop[0] = 0  # seed the null correction
    scores = np.array([fitness(g) for g in pop])
    best_log = []
    for _ in range(params.generations):
        order = np.argsort(scores)[::-1]
        pop, scores = pop[order], scores[order]
        best_log.append(float(scores[0]))
        children = [pop[i].copy() for i in range(params.elitism)]
        while len(children) < params.population:
            parents = []
            for _ in range(2):
                picks = rng.integers(0, params.population, size=params.tournament)
                parents.append(pop[picks[np.argmax(scores[picks])]])
            a, b = parents[0].copy(), parents[1].copy()
            if rng.random() < params.crossover_rate:
                swap = rng.random(n_genes) < 0.5
                a[swap], b[swap] = b[swap], a[swap]
            for child in (a, b):
                for g in range(n_genes):
                    if rng.random() < params.mutation_rate:
                        if rng.random() < 0.5:
                            child[g] = rng.integers(-params.bound, params.bound + 1)
                        else:
                            step = 1 if rng.random() < 0.5 else -1
                            child[g] = int(np.clip(child[g] + step, -params.bound, params.bound))
                if len(children) < params.population:
                    children.append(child)
        pop = np.array(children)
        scores = np.array([fitness(g) for g in pop])

    order = np.argsort(scores)[::-1]
    pop, scores = pop[order], scores[order]
    best_log.append(float(scores[0]))
    best = pop[0]
    offsets = MisalignmentSpec(
        tuple((int(best[2 * i]), int(best[2 * i + 1])) for i in range(len(design.masks)))
    )
    return AlignmentResult(
        offsets=offsets,
        fitness=float(scores[0]),
        best_per_generation=tuple(best_log),
        evaluations=len(cache),
    )
