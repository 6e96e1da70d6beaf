"""Kronecker DFT beamforming codebook and rate-optimal beam labeling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ArrayGeometry


@dataclass
class Codebook:
    """Unit-norm beamforming vectors, one per column of F."""

    F: np.ndarray  # (N_t, |F|)
    geom: ArrayGeometry

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=complex)
        if self.F.ndim != 2 or self.F.shape[1] < 1:
            raise ValueError("codebook must hold at least one column vector")

    def __len__(self) -> int:
        return self.F.shape[1]

    def vectors(self):
        return [self.F[:, i] for i in range(len(self))]


def _dft_block(n: int, oversampling: int) -> np.ndarray:
    """n x (oversampling*n) block of unit-norm DFT columns."""
    k = oversampling * n
    grid = np.arange(n)[:, None] * np.arange(k)[None, :]
    return np.exp(-2j * np.pi * grid / k) / np.sqrt(n)


def build_codebook(geom: ArrayGeometry, oversampling: int = 1) -> Codebook:
    """Kronecker product of per-axis DFT codebooks, columns normalized.

    Degenerate axes (count 1) contribute the trivial factor, so a ULA gets a
    plain oversampled DFT and a 1x1x1 array the singleton {[1]}.
    """
    if oversampling < 1 or int(oversampling) != oversampling:
        raise ValueError("oversampling must be a positive integer")
    F = np.ones((1, 1), dtype=complex)
    for n in (geom.n_z, geom.n_y, geom.n_x):
        block = _dft_block(n, oversampling) if n > 1 else np.ones((1, 1), dtype=complex)
        F = np.kron(F, block)
    F = F / np.linalg.norm(F, axis=0, keepdims=True)
    return Codebook(F=F, geom=geom)


def achievable_rate(h: np.ndarray, f: np.ndarray, snr: float, form: str = "bilinear") -> float:
    """log2(1 + snr |h^T f|^2); ``form="sesquilinear"`` switches to h^H f."""
    if snr < 0:
        raise ValueError("snr must be >= 0")
    h = np.asarray(h, dtype=complex)
    f = np.asarray(f, dtype=complex)
    if h.shape != f.shape:
        raise ValueError("channel and beam must have equal lengths")
    inner = h @ f if form == "bilinear" else h.conj() @ f
    return float(np.log2(1.0 + snr * np.abs(inner) ** 2))


def optimal_beam(h: np.ndarray, cb: Codebook, snr: float = 1.0, form: str = "bilinear") -> int:
    """Index of the rate-maximizing beam; ties break to the lowest index."""
    h = np.asarray(h, dtype=complex)
    inner = h @ cb.F if form == "bilinear" else h.conj() @ cb.F
    gains = np.abs(inner) ** 2
    # argmax returns the first maximizer, which is the lowest-index tie-break
    return int(np.argmax(gains))


def optimal_beams(channels: np.ndarray, cb: Codebook, form: str = "bilinear") -> np.ndarray:
    """Vectorized optimal_beam over the rows of ``channels``."""
    channels = np.asarray(channels, dtype=complex)
    inner = channels @ cb.F if form == "bilinear" else channels.conj() @ cb.F
    return np.argmax(np.abs(inner) ** 2, axis=1)
