"""Qudit gate matrices, mutually unbiased bases and target-field synthesis.

Matrix convention
-----------------
Gate matrices are stored with **rows indexing input basis states and
columns indexing output basis states**: entry ``[i, k]`` is the amplitude
with which input state ``i`` leaves the device in output state ``k``.
The image of a coefficient vector ``c`` is therefore ``mat.T @ c``
(see :meth:`GateMatrix.image`).  Under this convention the cyclic-shift
constructor maps input index ``i`` to output index ``(i + m) % d`` and
the controlled shift maps ``|p, l>`` to ``|p, (l + p) % d>``.

Qudit indices map to azimuthal mode labels sorted ascending (index 0 is
the most negative ``l``); the product basis for controlled gates is
control-major: ``|p, l> -> p * d_target + l_index``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field, GridSpec, ModeSpec, lg_mode, superpose

__all__ = [
    "GateMatrix",
    "ModeBasis",
    "LabeledState",
    "x_gate",
    "h_gate",
    "cx_gate",
    "compose",
    "mub_states",
    "oam_mode_labels",
    "target_fields",
]

UNITARITY_TOL = 1e-12

_ROMAN = ("I", "II", "III", "IV", "V", "VI", "VII")


def _is_prime(d: int) -> bool:
    if d < 2:
        return False
    return all(d % k for k in range(2, int(d**0.5) + 1))


@dataclass(frozen=True)
class GateMatrix:
    """Unitary matrix defining target superpositions (rows index inputs)."""

    mat: np.ndarray

    def __post_init__(self) -> None:
        mat = np.asarray(self.mat, dtype=np.complex128)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise ValueError("gate matrix must be square")
        defect = np.max(np.abs(mat @ mat.conj().T - np.eye(mat.shape[0])))
        if defect > UNITARITY_TOL:
            raise ValueError(f"matrix is not unitary (defect {defect:.3e})")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    @property
    def d(self) -> int:
        return self.mat.shape[0]

    def basis_image(self, j: int) -> np.ndarray:
        """Output coefficients for basis input ``j`` (row ``j``)."""
        return np.array(self.mat[j])

    def image(self, coeffs: np.ndarray) -> np.ndarray:
        """Output coefficients for an input coefficient vector."""
        return self.mat.T @ np.asarray(coeffs, dtype=np.complex128)


def x_gate(d: int, m: int) -> GateMatrix:
    """Cyclic shift by ``m``: row ``i`` carries a 1 in column ``(i+m) % d``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    if not 0 <= m < d:
        raise ValueError(f"shift must satisfy 0 <= m < d, got m={m}, d={d}")
    mat = np.zeros((d, d), dtype=np.complex128)
    mat[np.arange(d), (np.arange(d) + m) % d] = 1.0
    return GateMatrix(mat)


def h_gate(d: int, m: int) -> GateMatrix:
    """Fourier/Hadamard family member ``m`` in dimension ``d``.

    ``m = 0`` is the identity; for ``1 <= m <= d`` the entry at (row k,
    column l) is ``w**(l*k + (m-1)*k*k) / sqrt(d)`` with
    ``w = exp(2 pi i / d)``.  Valid for prime ``d``; for qubits the
    member ``m = 2`` is replaced by the third Pauli eigenbasis so the
    full set of three unbiased qubit bases is available.
    """
    if not _is_prime(d):
        raise ValueError(f"Hadamard family requires prime dimension, got {d}")
    if not 0 <= m <= d:
        raise ValueError(f"family index must satisfy 0 <= m <= d, got {m}")
    if m == 0:
        return GateMatrix(np.eye(d, dtype=np.complex128))
    if d == 2 and m == 2:
        return GateMatrix(np.array([[1.0, 1.0], [1.0j, -1.0j]]) / np.sqrt(2.0))
    k = np.arange(d)[:, None]
    l = np.arange(d)[None, :]
    exponent = (l * k + (m - 1) * k * k) % d
    return GateMatrix(np.exp(2j * np.pi * exponent / d) / np.sqrt(d))


def cx_gate(d_ctrl: int, d_tgt: int) -> GateMatrix:
    """Controlled cyclic shift on the control-major product basis.

    Control block ``p`` applies the target-space shift by ``p``; for the
    qubit-qubit case this is the standard CNOT matrix.
    """
    if d_ctrl < 2 or d_tgt < 2:
        raise ValueError("both dimensions must be at least 2")
    dim = d_ctrl * d_tgt
    mat = np.zeros((dim, dim), dtype=np.complex128)
    for p in range(d_ctrl):
        block = x_gate(d_tgt, p % d_tgt).mat
        mat[p * d_tgt : (p + 1) * d_tgt, p * d_tgt : (p + 1) * d_tgt] = block
    return GateMatrix(mat)


def compose(g1: GateMatrix, g2: GateMatrix) -> GateMatrix:
    """Matrix product ``g1 @ g2``; with rows-index-inputs this is
    "apply g1, then g2"."""
    if g1.d != g2.d:
        raise ValueError(f"dimension mismatch: {g1.d} vs {g2.d}")
    return GateMatrix(g1.mat @ g2.mat)


@dataclass(frozen=True)
class LabeledState:
    """State vector tagged with its basis id ("I", "II", ...) and index."""

    basis: str
    index: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        norm = np.linalg.norm(coeffs)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state vector must be unit norm, got {norm!r}")
        coeffs = coeffs.copy()
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def label(self) -> str:
        return f"{self.basis}:{self.index}"


def mub_states(d: int) -> list[LabeledState]:
    """All ``d*(d+1)`` states of the ``d+1`` mutually unbiased bases.

    Basis I is computational; bases II..(d+1) are the columns of the
    Hadamard family members 1..d (basis II is the angle basis).  Requires
    prime ``d``; for ``d = 2`` these are the three Pauli eigenbases.
    """
    if not _is_prime(d):
        raise ValueError(f"MUB construction requires prime dimension, got {d}")
    states = [
        LabeledState("I", i, np.eye(d, dtype=np.complex128)[i]) for i in range(d)
    ]
    for m in range(1, d + 1):
        cols = h_gate(d, m).mat
        states.extend(
            LabeledState(_ROMAN[m], i, cols[:, i]) for i in range(d)
        )
    return states


def oam_mode_labels(d: int) -> list[tuple[int, int]]:
    """Default azimuthal-only mode set for dimension ``d``.

    Labels are symmetric around zero: odd ``d`` uses
    ``l = -(d-1)/2 .. (d-1)/2``; even ``d`` skips ``l = 0``.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    if d % 2:
        half = (d - 1) // 2
        ls = range(-half, half + 1)
    else:
        half = d // 2
        ls = [l for l in range(-half, half + 1) if l != 0]
    return [(0, l) for l in ls]


@dataclass(frozen=True)
class ModeBasis:
    """Ordered map from qudit index to (p, l) mode labels plus waists."""

    modes: tuple[tuple[int, int], ...]
    input_waist: float
    output_waist_scale: float = 1.0

    def __post_init__(self) -> None:
        modes = tuple((int(p), int(l)) for p, l in self.modes)
        if len(set(modes)) != len(modes):
            raise ValueError("mode labels must be distinct")
        if len(modes) < 1:
            raise ValueError("basis must hold at least one mode")
        if self.input_waist <= 0 or self.output_waist_scale <= 0:
            raise ValueError("waist and waist scale must be positive")
        object.__setattr__(self, "modes", modes)

    @property
    def d(self) -> int:
        return len(self.modes)

    @property
    def output_waist(self) -> float:
        return self.input_waist * self.output_waist_scale

    def input_specs(self) -> list[ModeSpec]:
        return [ModeSpec(p, l, self.input_waist) for p, l in self.modes]

    def output_specs(self) -> list[ModeSpec]:
        return [ModeSpec(p, l, self.output_waist) for p, l in self.modes]

    def input_fields(self, grid: GridSpec) -> list[Field]:
        return [lg_mode(s, grid) for s in self.input_specs()]

    def output_fields(self, grid: GridSpec) -> list[Field]:
        return [lg_mode(s, grid) for s in self.output_specs()]


def target_fields(
    gate: GateMatrix, basis: ModeBasis, grid: GridSpec
) -> tuple[list[Field], list[Field]]:
    """Input mode fields and their gate-image target fields.

    Input ``j`` is the ``j``-th basis mode at the input waist; its target
    is the superposition of output-waist modes weighted by the gate's
    output coefficients for input ``j``.
    """
    if basis.d != gate.d:
        raise ValueError(f"basis length {basis.d} does not match gate dimension {gate.d}")
    inputs = basis.input_fields(grid)
    out_modes = basis.output_fields(grid)
    targets = [superpose(out_modes, gate.basis_image(j)) for j in range(gate.d)]
    return inputs, targets
