"""Complex scalar fields on square sampling grids, and Laguerre-Gauss modes.

Conventions
-----------
* A :class:`GridSpec` fixes the sampling: ``n`` pixels per side (even,
  >= 64), the physical pixel ``pitch`` in metres and the vacuum
  ``wavelength`` in metres.  Every field that takes part in one
  computation must share its grid.
* Pixel ``(i, j)`` is centred at ``x = (i - n/2 + 0.5) * pitch`` and
  ``y = (j - n/2 + 0.5) * pitch``.  The half-pixel offset keeps the beam
  axis between samples, so vortex modes never hit an exact on-axis point.
* Discrete inner products carry the quadrature weight ``pitch**2``; a
  normalized field therefore satisfies ``sum(|amp|**2) * pitch**2 == 1``
  to within :data:`NORM_TOL`.
* Azimuthal phase winds counterclockwise for positive azimuthal index
  (``phi = atan2(y, x)``); flipping the sign convention relabels
  ``l -> -l`` consistently everywhere.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NORM_TOL",
    "GridSpec",
    "Field",
    "ModeSpec",
    "grid_for_waist",
    "lg_mode",
    "inner_product",
    "normalize",
    "superpose",
    "save_field",
    "load_field",
    "export_intensity_csv",
]

NORM_TOL = 1e-9

_FLD_MAGIC = b"FLD1"
_HEADER = struct.Struct("<4sId")


@dataclass(frozen=True)
class GridSpec:
    """Square sampling grid shared by all fields of a computation."""

    n: int
    pitch: float
    wavelength: float

    def __post_init__(self) -> None:
        if self.n < 64 or self.n % 2 != 0:
            raise ValueError(f"grid side must be even and >= 64, got {self.n}")
        if not (self.pitch > 0 and self.wavelength > 0):
            raise ValueError("pitch and wavelength must be positive")

    @property
    def window(self) -> float:
        """Physical side length ``n * pitch`` of the sampled window."""
        return self.n * self.pitch

    @property
    def pixel_area(self) -> float:
        return self.pitch * self.pitch

    def axis(self) -> np.ndarray:
        """Pixel-centre coordinates along one axis (metres)."""
        return (np.arange(self.n) - self.n / 2 + 0.5) * self.pitch


def grid_for_waist(max_waist: float, wavelength: float, n: int = 256) -> GridSpec:
    """Default grid sizing: the window is 12x the largest waist in play.

    Keeps aliasing of the highest-order modes used here (radial index up
    to 2, azimuthal up to +-2) below 1e-4 while staying desk-scale.
    """
    return GridSpec(n=n, pitch=12.0 * max_waist / n, wavelength=wavelength)


@dataclass(frozen=True)
class Field:
    """Complex amplitude sampled on a :class:`GridSpec`.

    The amplitude array is stored read-only; operations return new
    fields, so values can be shared freely across threads.
    """

    grid: GridSpec
    amp: np.ndarray

    def __post_init__(self) -> None:
        amp = np.asarray(self.amp, dtype=np.complex128)
        if amp.shape != (self.grid.n, self.grid.n):
            raise ValueError(
                f"amplitude shape {amp.shape} does not match grid side {self.grid.n}"
            )
        if not np.all(np.isfinite(amp.view(np.float64))):
            raise ValueError("field amplitudes must be finite")
        amp = amp.copy()
        amp.setflags(write=False)
        object.__setattr__(self, "amp", amp)

    @property
    def power(self) -> float:
        """Total power ``sum(|amp|**2) * pitch**2``."""
        return float(np.sum(np.abs(self.amp) ** 2) * self.grid.pixel_area)

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.power - 1.0) <= tol


@dataclass(frozen=True)
class ModeSpec:
    """Laguerre-Gauss mode label: radial index, azimuthal index, waist."""

    p: int
    l: int
    waist: float

    def __post_init__(self) -> None:
        if self.p < 0:
            raise ValueError("radial index must be non-negative")
        if self.waist <= 0:
            raise ValueError("waist must be positive")


def _assoc_laguerre(p: int, alpha: int, x: np.ndarray) -> np.ndarray:
    # Three-term recurrence; stable for the small radial orders used here.
    if p == 0:
        return np.ones_like(x)
    prev = np.ones_like(x)
    cur = 1.0 + alpha - x
    for k in range(2, p + 1):
        prev, cur = cur, ((2 * k - 1 + alpha - x) * cur - (k - 1 + alpha) * prev) / k
    return cur


def lg_mode(spec: ModeSpec, grid: GridSpec) -> Field:
    """Synthesize the normalized LG mode of ``spec`` at its waist plane.

    The amplitude is
    ``N * (sqrt(2) r / w)**|l| * L_p^{|l|}(2 r^2 / w^2) * exp(-r^2/w^2) * exp(i l phi)``
    with ``N = sqrt(2 p! / (pi (p+|l|)!)) / w``, i.e. flat phase apart
    from the azimuthal winding.  Gouy and curvature terms are omitted
    because modes are always generated at a waist and evolved by the
    propagator.

    Raises
    ------
    ValueError
        If the mode does not fit the window (``waist > window / 6``).
    """
    if spec.waist > grid.window / 6.0:
        raise ValueError(
            f"waist {spec.waist:g} m does not fit window {grid.window:g} m "
            "(required: waist <= window / 6)"
        )
    ax = grid.axis()
    x = ax[:, None]
    y = ax[None, :]
    r2 = x * x + y * y
    w = spec.waist
    la = abs(spec.l)
    rho = 2.0 * r2 / (w * w)
    norm = math.sqrt(2.0 * math.factorial(spec.p) / (math.pi * math.factorial(spec.p + la))) / w
    radial = norm * rho ** (la / 2.0) * _assoc_laguerre(spec.p, la, rho) * np.exp(-r2 / (w * w))
    amp = radial * np.exp(1j * spec.l * np.arctan2(y, x))
    # Analytic normalization is exact on the plane; renormalize on the
    # grid so the discrete invariant holds to NORM_TOL.
    amp /= math.sqrt(np.sum(np.abs(amp) ** 2) * grid.pixel_area)
    return Field(grid, amp)


def inner_product(a: Field, b: Field) -> complex:
    """Discrete overlap ``<a|b> = sum(conj(a) * b) * pitch**2``."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return complex(np.vdot(a.amp, b.amp) * a.grid.pixel_area)


def normalize(f: Field) -> Field:
    """Rescale to unit power; rejects the zero field."""
    p = f.power
    if p <= 0.0 or not math.isfinite(p):
        raise ValueError("cannot normalize a zero field")
    return Field(f.grid, f.amp / math.sqrt(p))


def superpose(basis: list[Field], coeffs: np.ndarray) -> Field:
    """Normalized coherent superposition ``sum_i coeffs[i] * basis[i]``.

    Rejects destructive cancellation (zero resultant).
    """
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if len(basis) == 0 or coeffs.shape != (len(basis),):
        raise ValueError("coefficient count must match basis length")
    grid = basis[0].grid
    if any(f.grid != grid for f in basis[1:]):
        raise ValueError("basis fields live on different grids")
    acc = np.zeros((grid.n, grid.n), dtype=np.complex128)
    for c, f in zip(coeffs, basis):
        acc += c * f.amp
    power = np.sum(np.abs(acc) ** 2) * grid.pixel_area
    if power < 1e-15:
        raise ValueError("superposition cancels to a zero field")
    return Field(grid, acc / math.sqrt(power))


def save_field(f: Field, path) -> None:
    """Write the FLD1 flat binary record.

    Layout: 16-byte header (magic ``FLD1``, u32 side, f64 pitch) then
    ``n*n`` interleaved (re, im) little-endian f64 pairs, row-major.
    The wavelength is not part of the record and must be supplied again
    on load.
    """
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_FLD_MAGIC, f.grid.n, f.grid.pitch))
        fh.write(np.ascontiguousarray(f.amp, dtype="<c16").tobytes())


def load_field(path, wavelength: float) -> Field:
    """Read an FLD1 record written by :func:`save_field`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated field record")
    magic, n, pitch = _HEADER.unpack_from(raw)
    if magic != _FLD_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_FLD_MAGIC!r}")
    payload = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if payload.size != n * n:
        raise ValueError(f"{path}: payload holds {payload.size} samples, expected {n * n}")
    return Field(GridSpec(n=n, pitch=pitch, wavelength=wavelength), payload.reshape(n, n))


def export_intensity_csv(f: Field, path) -> None:
    """Write ``|amp|**2`` as CSV (header row, comma separator, '.' decimal)."""
    header = ",".join(f"col_{j}" for j in range(f.grid.n))
    np.savetxt(path, np.abs(f.amp) ** 2, delimiter=",", header=header, comments="")
