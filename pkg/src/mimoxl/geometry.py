"""Uniform planar array geometry and steering vectors.

The array is an N_z x N_y x N_x lattice with spacings given in carrier
wavelengths, so the wavelength never appears explicitly.  A full steering
vector is the Kronecker product a_z (x) a_y (x) a_x of the per-axis
responses; the flattened antenna index is therefore
``z * (n_y * n_x) + y * n_x + x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Per-axis phase factor: the physically standard convention includes the
# 2*pi carried by d/lambda; the literal convention drops it, matching the
# printed array-response formulas some datasets ship with.
PHASE_CONVENTIONS = ("standard_2pi", "paper_literal")


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna counts and spacings (in wavelengths) of the BS array."""

    n_x: int = 4
    n_y: int = 4
    n_z: int = 1
    d_x: float = 0.5
    d_y: float = 0.5
    d_z: float = 0.5
    phase_convention: str = "standard_2pi"

    def __post_init__(self):
        for n in (self.n_x, self.n_y, self.n_z):
            if n < 1 or int(n) != n:
                raise ValueError(f"antenna counts must be positive integers, got {n}")
        for d in (self.d_x, self.d_y, self.d_z):
            if d <= 0:
                raise ValueError(f"antenna spacings must be > 0, got {d}")
        if self.phase_convention not in PHASE_CONVENTIONS:
            raise ValueError(f"unknown phase convention {self.phase_convention!r}")

    @property
    def n_t(self) -> int:
        return self.n_x * self.n_y * self.n_z

    @property
    def phase_factor(self) -> float:
        return 2.0 * np.pi if self.phase_convention == "standard_2pi" else 1.0


def _axis_response(n: int, d: float, c: float, angle_term: float) -> np.ndarray:
    idx = np.arange(n)
    return np.exp(1j * c * d * idx * angle_term)


def steering_vector(azimuth: float, elevation: float, geom: ArrayGeometry) -> np.ndarray:
    """Array response for a ray leaving at (azimuth, elevation).

    Axis phase terms: x uses sin(el)cos(az), y uses sin(el)sin(az), z uses
    cos(el).  Entry 0 is exactly 1+0j and every entry has unit modulus.
    """
    if not (np.isfinite(azimuth) and np.isfinite(elevation)):
        raise ValueError("steering angles must be finite")
    c = geom.phase_factor
    se, ce = np.sin(elevation), np.cos(elevation)
    a_x = _axis_response(geom.n_x, geom.d_x, c, se * np.cos(azimuth))
    a_y = _axis_response(geom.n_y, geom.d_y, c, se * np.sin(azimuth))
    a_z = _axis_response(geom.n_z, geom.d_z, c, ce)
    return np.kron(a_z, np.kron(a_y, a_x))


def steering_matrix(azimuths: np.ndarray, elevations: np.ndarray, geom: ArrayGeometry) -> np.ndarray:
    """Stack steering vectors for many rays into an (n_rays, N_t) matrix."""
    azimuths = np.asarray(azimuths, dtype=float)
    elevations = np.asarray(elevations, dtype=float)
    if azimuths.shape != elevations.shape:
        raise ValueError("azimuth/elevation arrays must have equal shapes")
    if not (np.all(np.isfinite(azimuths)) and np.all(np.isfinite(elevations))):
        raise ValueError("steering angles must be finite")
    c = geom.phase_factor
    se = np.sin(elevations)[:, None]
    ce = np.cos(elevations)[:, None]
    ax = np.exp(1j * c * geom.d_x * np.arange(geom.n_x)[None, :] * (se * np.cos(azimuths)[:, None]))
    ay = np.exp(1j * c * geom.d_y * np.arange(geom.n_y)[None, :] * (se * np.sin(azimuths)[:, None]))
    az = np.exp(1j * c * geom.d_z * np.arange(geom.n_z)[None, :] * ce)
    # row-wise kron: az (x) ay (x) ax
    out = np.einsum("rz,ry,rx->rzyx", az, ay, ax).reshape(len(azimuths), -1)
    return out
