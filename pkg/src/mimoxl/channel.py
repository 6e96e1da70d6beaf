"""Deterministic geometric channel simulator and classical estimators.

A scene is a BS, a rectangular grid of candidate user positions and a small
set of fixed scatterers.  Each position maps to a line-of-sight ray plus one
single-bounce ray per scatterer; the mapping is a pure function of
(position, scene), so regenerating a dataset is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry, steering_matrix, steering_vector

SPEED_OF_LIGHT = 299_792_458.0


@dataclass
class PathParams:
    """Per-path parameters of one channel realization.

    All arrays have length L (number of paths).  Arrival angles are kept for
    completeness even though the single-antenna user reduces the arrival
    response to the scalar 1.
    """

    alpha: np.ndarray
    phase: np.ndarray
    delay: np.ndarray
    aod_azimuth: np.ndarray
    aod_elevation: np.ndarray
    aoa_azimuth: np.ndarray
    aoa_elevation: np.ndarray
    bandwidth: float

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        n = len(self.alpha)
        for name in ("phase", "delay", "aod_azimuth", "aod_elevation", "aoa_azimuth", "aoa_elevation"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            setattr(self, name, arr)
        if n < 1:
            raise ValueError("at least one path is required")
        if np.any(self.alpha < 0):
            raise ValueError("attenuation coefficients must be >= 0")
        for el in (self.aod_elevation, self.aoa_elevation):
            if np.any(el < 0) or np.any(el > np.pi):
                raise ValueError("elevation angles must lie in [0, pi]")
        for az in (self.aod_azimuth, self.aoa_azimuth):
            if np.any(az < -np.pi) or np.any(az >= np.pi):
                raise ValueError("azimuth angles must lie in [-pi, pi)")

    @property
    def n_paths(self) -> int:
        return len(self.alpha)


@dataclass
class Scene:
    """Synthetic propagation scene standing in for a ray-traced map.

    Positions form a ``grid_rows x grid_cols`` lattice with ``pitch`` meter
    spacing in the z=1.5 m user plane.  Scatterers are drawn once from
    ``seed`` and then frozen, so the position-to-path mapping stays a pure
    function of (position, scene).
    """

    grid_rows: int = 40
    grid_cols: int = 40
    pitch: float = 0.25
    bs_position: np.ndarray = field(default_factory=lambda: np.array([5.0, -10.0, 10.0]))
    n_scatterers: int = 5
    seed: int = 7
    carrier_wavelength: float = 2.0
    bandwidth: float = 1.0e8
    reflection_gain: float = 0.6
    include_los: bool = True
    user_height: float = 1.5

    def __post_init__(self):
        self.bs_position = np.asarray(self.bs_position, dtype=float)
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ValueError("grid must be at least 1x1")
        if self.pitch <= 0:
            raise ValueError("grid pitch must be > 0")
        if not self.include_los and self.n_scatterers == 0:
            raise ValueError("scene needs LOS or at least one scatterer")
        rng = np.random.default_rng(self.seed)
        extent_x = (self.grid_cols - 1) * self.pitch
        extent_y = (self.grid_rows - 1) * self.pitch
        # scatterers float above and around the user grid
        self.scatterers = np.column_stack(
            [
                rng.uniform(-2.0, extent_x + 2.0, self.n_scatterers),
                rng.uniform(-2.0, extent_y + 2.0, self.n_scatterers),
                rng.uniform(3.0, 9.0, self.n_scatterers),
            ]
        )

    @property
    def n_positions(self) -> int:
        return self.grid_rows * self.grid_cols

    def grid_positions(self) -> np.ndarray:
        """All user positions in row-major order, shape (rows*cols, 3)."""
        xs = np.arange(self.grid_cols) * self.pitch
        ys = np.arange(self.grid_rows) * self.pitch
        gx, gy = np.meshgrid(xs, ys)
        pos = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, self.user_height)])
        return pos

    def paths_for_position(self, position: np.ndarray) -> PathParams:
        """LOS + single-bounce path parameters for one user position."""
        position = np.asarray(position, dtype=float)
        legs = []  # (departure point seen from BS, total path length)
        if self.include_los:
            legs.append((position, float(np.linalg.norm(position - self.bs_position)), 1.0))
        for sc in self.scatterers:
            d1 = float(np.linalg.norm(sc - self.bs_position))
            d2 = float(np.linalg.norm(position - sc))
            legs.append((sc, d1 + d2, self.reflection_gain))
        def wrap(a):
            return np.mod(a + np.pi, 2.0 * np.pi) - np.pi

        alpha, phase, delay = [], [], []
        aod_az, aod_el = [], []
        for target, length, gain in legs:
            v = target - self.bs_position
            r = np.linalg.norm(v)
            aod_az.append(wrap(np.arctan2(v[1], v[0])))
            aod_el.append(np.arccos(np.clip(v[2] / r, -1.0, 1.0)))
            alpha.append(gain / length)
            phase.append(wrap(-2.0 * np.pi * length / self.carrier_wavelength))
            delay.append(length / SPEED_OF_LIGHT)
        zeros = np.zeros(len(alpha))
        return PathParams(
            alpha=np.array(alpha),
            phase=np.array(phase),
            delay=np.array(delay),
            aod_azimuth=np.array(aod_az),
            aod_elevation=np.array(aod_el),
            aoa_azimuth=zeros,
            aoa_elevation=np.full(len(alpha), np.pi / 2),
            bandwidth=self.bandwidth,
        )


@dataclass
class ChannelSample:
    position: np.ndarray
    h: np.ndarray
    beam_label: int = 0


@dataclass
class CovarianceSample:
    block_location: int
    R: np.ndarray


@dataclass
class PilotConfig:
    """Pilot matrix plus a noise level, linked through the SNR convention.

    Signal power is E[|h|^2]/N_t over the dataset the pilot is used with;
    ``sigma2 = signal_power * 10^(-snr_db/10)``.
    """

    P: np.ndarray
    noise_power: float
    snr_db: float | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=complex)
        if self.P.ndim != 2:
            raise ValueError("pilot matrix must be 2-D")
        if self.noise_power < 0:
            raise ValueError("noise power must be >= 0")

    @property
    def n(self) -> int:
        return self.P.shape[0]


def identity_pilot(n_t: int, snr_db: float, signal_power: float) -> PilotConfig:
    sigma2 = signal_power * 10.0 ** (-snr_db / 10.0)
    return PilotConfig(P=np.eye(n_t, dtype=complex), noise_power=sigma2, snr_db=snr_db)


def generate_channel(paths: PathParams, geom: ArrayGeometry) -> np.ndarray:
    """Sum of per-path rays: alpha * exp(j(phase + 2*pi*delay*B)) * a(AoD).

    The single-antenna user collapses the arrival response to 1, so the
    channel is the length-N_t departure-side mixture.
    """
    if paths.n_paths < 1:
        raise ValueError("at least one path is required")
    gains = paths.alpha * np.exp(1j * (paths.phase + 2.0 * np.pi * paths.delay * paths.bandwidth))
    A = steering_matrix(paths.aod_azimuth, paths.aod_elevation, geom)
    return gains @ A


def generate_scene_dataset(
    scene: Scene,
    geom: ArrayGeometry,
    count: int | None = None,
    codebook=None,
    normalize: bool = True,
) -> list[ChannelSample]:
    """Channels for the first ``count`` grid positions (all by default).

    When ``normalize`` is set the whole dataset is rescaled so the mean of
    |h|^2/N_t is 1, which makes snr_db map to sigma2 = 10^(-snr/10) and keeps
    network inputs O(1).  Beam labels are filled when a codebook is given.
    """
    positions = scene.grid_positions()
    if count is None:
        count = len(positions)
    if count > len(positions):
        raise ValueError(f"count {count} exceeds grid size {len(positions)}")
    if count < 1:
        raise ValueError("count must be >= 1")
    channels = np.empty((count, geom.n_t), dtype=complex)
    for i in range(count):
        channels[i] = generate_channel(scene.paths_for_position(positions[i]), geom)
    if normalize:
        power = float(np.mean(np.abs(channels) ** 2))
        if power > 0:
            channels /= np.sqrt(power)
    samples = [ChannelSample(position=positions[i], h=channels[i]) for i in range(count)]
    if codebook is not None:
        from .codebook import optimal_beam

        for s in samples:
            s.beam_label = optimal_beam(s.h, codebook, snr=1.0)
    return samples


def observe(h: np.ndarray, pilot: PilotConfig, rng: np.random.Generator) -> np.ndarray:
    """Noisy pilot observation y = P h + v, v ~ CN(0, sigma2 I)."""
    h = np.asarray(h, dtype=complex)
    if pilot.P.shape[1] != h.shape[0]:
        raise ValueError("pilot matrix width must match channel length")
    n = pilot.n
    v = np.sqrt(pilot.noise_power / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return pilot.P @ h + v


def ls_estimate(y: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Least-squares estimate P^H (P P^H)^{-1} y; needs full row rank."""
    y = np.asarray(y, dtype=complex)
    P = np.asarray(P, dtype=complex)
    gram = P @ P.conj().T
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise np.linalg.LinAlgError("pilot matrix is row-rank deficient")
    return P.conj().T @ np.linalg.solve(gram, y)


def lmmse_estimate(
    y: np.ndarray,
    P: np.ndarray,
    R: np.ndarray,
    sigma2: float,
    form: str = "paper",
) -> np.ndarray:
    """Linear MMSE estimate from a noisy pilot observation.

    ``form="paper"`` evaluates (y^T (P^H R P + sigma2 I)^{-1} P^H R)^T, the
    transposed expression as printed; ``form="standard"`` uses the textbook
    conjugate form R P^H (P R P^H + sigma2 I)^{-1} y.  Both coincide for
    real-valued data; they differ by conjugations for complex channels.
    """
    y = np.asarray(y, dtype=complex)
    P = np.asarray(P, dtype=complex)
    R = np.asarray(R, dtype=complex)
    if form == "paper":
        M = P.conj().T @ R @ P + sigma2 * np.eye(P.shape[1])
        if P.shape[0] != P.shape[1]:
            raise ValueError("paper form requires a square pilot matrix")
        return (y @ np.linalg.solve(M, P.conj().T @ R)).T
    if form == "standard":
        M = P @ R @ P.conj().T + sigma2 * np.eye(P.shape[0])
        return R @ P.conj().T @ np.linalg.solve(M, y)
    raise ValueError(f"unknown LMMSE form {form!r}")


def compute_ccm(channels) -> CovarianceSample:
    """Sample covariance (1/K) sum h h^H; exactly Hermitian by construction."""
    channels = [np.asarray(h, dtype=complex) for h in channels]
    if not channels:
        raise ValueError("need at least one channel to form a covariance")
    n = channels[0].shape[0]
    R = np.zeros((n, n), dtype=complex)
    for h in channels:
        if h.shape != (n,):
            raise ValueError("all channels must have equal length")
        R += np.outer(h, h.conj())
    R /= len(channels)
    # enforce exact Hermitian symmetry against accumulation round-off
    R = 0.5 * (R + R.conj().T)
    return CovarianceSample(block_location=0, R=R)


def collection_blocks(
    scene: Scene,
    geom: ArrayGeometry,
    block_rows: int,
    block_cols: int,
    block_size: float = 1.0,
    samples_per_side: int = 5,
    normalize: bool = True,
) -> list[CovarianceSample]:
    """Per-block covariance samples from a regular in-block sub-grid.

    Blocks are spread evenly over the scene grid extent; each contributes the
    sample covariance of ``samples_per_side**2`` channels taken at the cell
    centers of the block.
    """
    if block_rows < 1 or block_cols < 1:
        raise ValueError("need at least one block per axis")
    extent_x = (scene.grid_cols - 1) * scene.pitch
    extent_y = (scene.grid_rows - 1) * scene.pitch
    if block_size > extent_x + 1e-12 or block_size > extent_y + 1e-12:
        raise ValueError("block does not fit inside the scene grid")
    x0s = np.linspace(0.0, extent_x - block_size, block_cols)
    y0s = np.linspace(0.0, extent_y - block_size, block_rows)
    offsets = (np.arange(samples_per_side) + 0.5) * (block_size / samples_per_side)
    samples = []
    all_R = []
    for r, y0 in enumerate(y0s):
        for c, x0 in enumerate(x0s):
            chans = []
            for oy in offsets:
                for ox in offsets:
                    pos = np.array([x0 + ox, y0 + oy, scene.user_height])
                    chans.append(generate_channel(scene.paths_for_position(pos), geom))
            R = compute_ccm(chans).R
            samples.append(CovarianceSample(block_location=r * block_cols + c, R=R))
            all_R.append(R)
    if normalize:
        scale = float(np.mean([np.trace(R).real / geom.n_t for R in all_R]))
        if scale > 0:
            for s in samples:
                s.R = s.R / scale
    return samples


def dataset_signal_power(samples: list[ChannelSample]) -> float:
    """Mean per-antenna signal power E[|h|^2]/N_t over the dataset."""
    return float(np.mean([np.mean(np.abs(s.h) ** 2) for s in samples]))


def ensemble_covariance(samples: list[ChannelSample]) -> np.ndarray:
    return compute_ccm([s.h for s in samples]).R
