"""Free-space mode fields and turbulent modal coupling.

Transmit and receive mode sets are linear combinations of
Laguerre-Gaussian fields at a common beam waist, following the standard
weakly-guiding LP -> LG correspondence. A phase screen plus a hard
circular aperture maps to a modal coupling matrix by overlap integrals
(thin-screen, negligible-diffraction model), which is then expanded over
the two polarizations and column-calibrated on the blank screen.
"""

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.special import eval_genlaguerre

_SQ2 = np.sqrt(2.0)

# weakly-guiding LP modes launched as free-space LG superpositions:
# entries are (radial index p, azimuthal index l, weight)
LP_TO_LG = {
    "LP01": ((0, 0, 1.0),),
    "LP11a": ((0, 1, 1.0 / _SQ2), (0, -1, 1.0 / _SQ2)),
    "LP11b": ((0, 1, -1j / _SQ2), (0, -1, 1j / _SQ2)),
    "LP21a": ((0, 2, 1.0 / _SQ2), (0, -2, 1.0 / _SQ2)),
    "LP21b": ((0, 2, -1j / _SQ2), (0, -2, 1j / _SQ2)),
    "LP02": ((1, 0, 1.0),),
}

DEFAULT_WAIST = 2.1e-3
TX_MODES = ("LP01", "LP11a", "LP11b", "LP21a", "LP21b")
RX_MODES = ("LP01", "LP11a", "LP11b", "LP21a", "LP21b", "LP02")


@dataclass(frozen=True)
class GridGeometry:
    """Square raster geometry co-registered with a phase screen."""

    grid_size: int
    pitch: float

    @classmethod
    def of_screen(cls, screen):
        return cls(grid_size=screen.grid_size, pitch=screen.pitch)

    def coords(self):
        return (np.arange(self.grid_size) - self.grid_size // 2) * self.pitch


@dataclass(frozen=True)
class ModeSpec:
    """A transverse mode as a normalized LG superposition."""

    label: str
    lg_composition: tuple
    waist: float = DEFAULT_WAIST

    @classmethod
    def lp(cls, label, waist=DEFAULT_WAIST):
        if label not in LP_TO_LG:
            raise ValueError(f"unknown LP label {label!r}")
        return cls(label=label, lg_composition=LP_TO_LG[label], waist=waist)

    def __post_init__(self):
        total = sum(abs(w) ** 2 for _, _, w in self.lg_composition)
        if abs(total - 1.0) > 1e-9:
            raise ValueError("composition weights must have unit squared magnitude")
        if self.waist <= 0:
            raise ValueError("waist must be positive")


@dataclass(frozen=True)
class ApertureConfig:
    """Hard circular receive aperture co-registered with the screen grid."""

    diameter: float = 8.4e-3

    def mask(self, grid):
        if self.diameter > grid.grid_size * grid.pitch:
            raise ValueError("aperture diameter exceeds the raster extent")
        c = grid.coords()
        x, y = np.meshgrid(c, c)
        return (x ** 2 + y ** 2 <= (self.diameter / 2.0) ** 2).astype(float)


@dataclass(frozen=True)
class ChannelMatrix:
    """Polarization-expanded MIMO channel with its static calibration."""

    h: np.ndarray
    n_r: int
    n_t: int
    calibration: np.ndarray

    def __post_init__(self):
        if self.h.shape != (self.n_r, self.n_t):
            raise ValueError("h shape inconsistent with (n_r, n_t)")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("channel matrix contains non-finite entries")


def lg_field(p, l, waist, grid):
    """Laguerre-Gaussian field at the waist plane, discretely normalized."""
    c = grid.coords()
    x, y = np.meshgrid(c, c)
    r2 = x ** 2 + y ** 2
    rho = np.sqrt(r2)
    amp = np.sqrt(2.0 * factorial(p) / (np.pi * factorial(p + abs(l)))) / waist
    field = (
        amp
        * (_SQ2 * rho / waist) ** abs(l)
        * eval_genlaguerre(p, abs(l), 2.0 * r2 / waist ** 2)
        * np.exp(-r2 / waist ** 2)
        * np.exp(1j * l * np.arctan2(y, x))
    )
    return field / np.sqrt(np.sum(np.abs(field) ** 2) * grid.pitch ** 2)


def mode_field(spec, grid):
    """Evaluate a ModeSpec on the grid; rejects badly clipped waists.

    The analytic fields carry unit continuum energy, so the energy
    captured on the raster measures clipping directly.
    """
    c = grid.coords()
    x, y = np.meshgrid(c, c)
    r2 = x ** 2 + y ** 2
    rho = np.sqrt(r2)
    theta = np.arctan2(y, x)
    field = np.zeros_like(rho, dtype=complex)
    for p, l, weight in spec.lg_composition:
        amp = np.sqrt(2.0 * factorial(p) / (np.pi * factorial(p + abs(l)))) / spec.waist
        field += weight * (
            amp
            * (_SQ2 * rho / spec.waist) ** abs(l)
            * eval_genlaguerre(p, abs(l), 2.0 * r2 / spec.waist ** 2)
            * np.exp(-r2 / spec.waist ** 2)
            * np.exp(1j * l * theta)
        )
    captured = np.sum(np.abs(field) ** 2) * grid.pitch ** 2
    if captured < 0.99:
        raise ValueError(
            f"mode {spec.label}: only {captured:.3f} of the energy falls on the "
            "raster; waist too large for the grid"
        )
    return field / np.sqrt(captured)


def overlap(a, b, pitch):
    """Discrete overlap integral sum(conj(a) * b) * pitch^2."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.sum(np.conj(a) * b) * pitch ** 2)


def spatial_coupling_matrix(screen, tx, rx, aperture):
    """Modal coupling matrix M_kl = <psi_k_rx | A e^{j phi} psi_l_tx>."""
    grid = GridGeometry.of_screen(screen)
    mask = aperture.mask(grid)
    rx_fields = np.stack(
        [(np.conj(mode_field(spec, grid)) * mask).ravel() for spec in rx]
    )
    tx_fields = np.stack([mode_field(spec, grid).ravel() for spec in tx]).T
    phase = np.exp(1j * screen.raster).ravel()
    return (rx_fields * phase[None, :]) @ tx_fields * grid.pitch ** 2


def calibrate_columns(h_blank, target=None):
    """Static per-column power-balancing scales from the blank-screen channel.

    target defaults to the smallest blank column norm so calibration only
    attenuates (like the transmit-side VOAs).
    """
    norms = np.linalg.norm(h_blank, axis=0)
    if np.any(norms == 0.0):
        raise ValueError("blank channel has a zero column norm")
    if target is None:
        target = norms.min()
    return target / norms


def polarization_expand(m, calibration=None):
    """Expand a spatial coupling matrix over X/Y polarizations.

    H = M kron I2 (the same screen modulates both polarizations; no
    cross-polarization coupling), with optional static column scales.
    """
    m = np.asarray(m)
    h = np.kron(m, np.eye(2))
    if calibration is None:
        calibration = np.ones(h.shape[1])
    h = h * np.asarray(calibration)[None, :]
    return ChannelMatrix(
        h=h, n_r=h.shape[0], n_t=h.shape[1], calibration=np.asarray(calibration)
    )


def received_power_proxy(m_calibrated, n_t_spatial):
    """Mean aperture-and-basis-captured power across transmit modes."""
    return float(np.linalg.norm(m_calibrated) ** 2 / n_t_spatial)
