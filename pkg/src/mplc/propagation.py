"""Free-space propagation between modulation planes and phase-mask action.

Propagation uses the scalar angular-spectrum method: 2-D FFT, multiply by
``exp(i z sqrt(k^2 - kx^2 - ky^2))`` with evanescent components zeroed,
inverse FFT.  The method is exact for the grid's full numerical aperture
and parameter-free.  Spatial frequencies above ``band_limit_fraction``
times the Nyquist frequency are zeroed to suppress periodic wrap-around
ghosts on long hops.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image

from .fields import Field, GridSpec

__all__ = [
    "PropagationSpec",
    "PhaseMask",
    "wrap_phase",
    "transfer_function",
    "propagate",
    "backpropagate",
    "apply_mask",
    "save_mask",
    "load_mask",
    "save_mask_png",
    "load_mask_png",
]

DEFAULT_BAND_LIMIT = 0.9

_MSK_MAGIC = b"MSK1"
_HEADER = struct.Struct("<4sId")
_PNG_LEVELS = 65536  # 16-bit quantization: half-step error pi/65536 < 1e-4 rad


def wrap_phase(phase: np.ndarray) -> np.ndarray:
    """Wrap angles to the canonical interval [-pi, pi)."""
    return np.mod(np.asarray(phase, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class PropagationSpec:
    """Propagation distance and band-limit fraction of Nyquist."""

    distance: float
    band_limit_fraction: float = DEFAULT_BAND_LIMIT

    def __post_init__(self) -> None:
        if self.distance < 0:
            raise ValueError("propagation distance must be non-negative")
        if not (0.0 < self.band_limit_fraction <= 1.0):
            raise ValueError("band_limit_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class PhaseMask:
    """Transverse phase pattern in radians, stored wrapped to [-pi, pi)."""

    grid: GridSpec
    phase: np.ndarray

    def __post_init__(self) -> None:
        phase = np.asarray(self.phase, dtype=np.float64)
        if phase.shape != (self.grid.n, self.grid.n):
            raise ValueError(
                f"phase shape {phase.shape} does not match grid side {self.grid.n}"
            )
        if not np.all(np.isfinite(phase)):
            raise ValueError("mask phases must be finite")
        phase = wrap_phase(phase)
        phase.setflags(write=False)
        object.__setattr__(self, "phase", phase)


@lru_cache(maxsize=128)
def _cached_transfer(grid: GridSpec, distance: float, band_limit_fraction: float) -> np.ndarray:
    k = 2.0 * np.pi / grid.wavelength
    kt = 2.0 * np.pi * np.fft.fftfreq(grid.n, grid.pitch)
    kx2 = (kt * kt)[:, None]
    ky2 = (kt * kt)[None, :]
    kz_sq = k * k - kx2 - ky2
    h = np.where(
        kz_sq >= 0.0,
        np.exp(1j * distance * np.sqrt(np.maximum(kz_sq, 0.0))),
        0.0 + 0.0j,
    )
    cutoff = band_limit_fraction * np.pi / grid.pitch
    keep = np.abs(kt) <= cutoff * (1.0 + 1e-12)
    h *= keep[:, None]
    h *= keep[None, :]
    h.setflags(write=False)
    return h


def transfer_function(grid: GridSpec, spec: PropagationSpec) -> np.ndarray:
    """Angular-spectrum transfer function on the FFT frequency grid."""
    return _cached_transfer(grid, spec.distance, spec.band_limit_fraction)


def _apply_transfer(amp: np.ndarray, h: np.ndarray) -> np.ndarray:
    # amp may be a single (n, n) field or a stacked (..., n, n) batch.
    return np.fft.ifft2(np.fft.fft2(amp, axes=(-2, -1)) * h, axes=(-2, -1))


def propagate(f: Field, spec: PropagationSpec) -> Field:
    """Propagate ``f`` forward by ``spec.distance``."""
    return Field(f.grid, _apply_transfer(f.amp, transfer_function(f.grid, spec)))


def backpropagate(f: Field, spec: PropagationSpec) -> Field:
    """Propagate ``f`` backward (conjugated transfer function)."""
    return Field(f.grid, _apply_transfer(f.amp, np.conj(transfer_function(f.grid, spec))))


def apply_mask(f: Field, m: PhaseMask) -> Field:
    """Pointwise multiplication by ``exp(i * phase)``; norm-preserving."""
    if f.grid != m.grid:
        raise ValueError("field and mask live on different grids")
    return Field(f.grid, f.amp * np.exp(1j * m.phase))


def save_mask(m: PhaseMask, path) -> None:
    """Write the MSK1 flat binary record (header as FLD1, real f64 payload)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MSK_MAGIC, m.grid.n, m.grid.pitch))
        fh.write(np.ascontiguousarray(m.phase, dtype="<f8").tobytes())


def load_mask(path, wavelength: float) -> PhaseMask:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated mask record")
    magic, n, pitch = _HEADER.unpack_from(raw)
    if magic != _MSK_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_MSK_MAGIC!r}")
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if payload.size != n * n:
        raise ValueError(f"{path}: payload holds {payload.size} samples, expected {n * n}")
    return PhaseMask(GridSpec(n=n, pitch=pitch, wavelength=wavelength), payload.reshape(n, n))


def save_mask_png(m: PhaseMask, path) -> None:
    """Write a 16-bit grayscale PNG mapping [-pi, pi) onto [0, 65535].

    This is the SLM-upload style export; the quantization error on
    round-trip is at most ``pi / 65536`` (< 1e-4 rad).
    """
    levels = np.floor((m.phase + np.pi) / (2.0 * np.pi) * _PNG_LEVELS)
    levels = np.clip(levels, 0, _PNG_LEVELS - 1).astype(np.uint16)
    Image.fromarray(levels, mode="I;16").save(path, format="PNG")


def load_mask_png(path, grid: GridSpec) -> PhaseMask:
    """Read a mask PNG; grid metadata is not stored in the image."""
    levels = np.asarray(Image.open(path), dtype=np.float64)
    phase = (levels + 0.5) * (2.0 * np.pi / _PNG_LEVELS) - np.pi
    return PhaseMask(grid, phase)
