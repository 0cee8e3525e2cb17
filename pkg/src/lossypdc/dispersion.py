"""Frequency grid, refractive indices, pump spectrum and extinction profiles.

Unit system: lengths in um, times in fs, angular frequencies in rad/fs,
wavevectors in rad/um.  With c ~ 0.3 um/fs all quantities entering the
propagation equations are O(1), which keeps the integrators well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

SPEED_OF_LIGHT = 0.299792458
"""Speed of light in um/fs."""

WAVELENGTH_BAND = (0.4, 3.0)
"""Wavelength window (um) in which the dispersion formulas are trusted;
the resonance pole sits near 0.135 um."""

DB_PER_CM_TO_INV_UM = np.log(10.0) / 10.0 / 1.0e4
"""Conversion factor from an intensity extinction in dB/cm to 1/um."""


@dataclass(frozen=True)
class SellmeierSet:
    """Coefficients of the dispersion formula n^2(lam) = a + b/(lam^2 - c) - d lam^2,
    with lam in um."""

    a: float
    b: float
    c: float
    d: float

    def index_squared(self, wavelength):
        lam2 = np.asarray(wavelength, dtype=float) ** 2
        return self.a + self.b / (lam2 - self.c) - self.d * lam2


@dataclass(frozen=True)
class OpticalModel:
    """Uniaxial dispersion model.

    The generated field propagates as an ordinary wave; the pump sees the
    angle-tuned extraordinary index built from ``eta`` and the ordinary
    index.  Defaults reproduce the dispersive material used throughout the
    numerical examples.
    """

    ordinary: SellmeierSet = SellmeierSet(2.7359, 0.01878, 0.01822, 0.01354)
    eta: SellmeierSet = SellmeierSet(2.3753, 0.01224, 0.01667, 0.01516)
    theta: float = 0.1107 * np.pi


@dataclass(frozen=True)
class PumpSpec:
    """Transform-limited Gaussian pump pulse.

    ``fwhm`` is the intensity full width at half maximum in fs.  The spectral
    amplitude is peak-normalised to 1 at the central frequency.
    """

    wavelength: float = 0.8
    fwhm: float = 50.0

    def __post_init__(self):
        if self.fwhm <= 0:
            raise ValidationError(f"pump FWHM must be positive, got {self.fwhm}")
        if self.wavelength <= 0:
            raise ValidationError(f"pump wavelength must be positive, got {self.wavelength}")

    @property
    def omega(self) -> float:
        """Central angular frequency in rad/fs."""
        return 2.0 * np.pi * SPEED_OF_LIGHT / self.wavelength

    @property
    def tau(self) -> float:
        """Gaussian amplitude duration: S(w) = exp(-tau^2 (w - w_p)^2 / 2)."""
        return self.fwhm / (2.0 * np.sqrt(np.log(2.0)))


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of signal/idler angular frequencies.

    ``center`` must equal half the pump central frequency for the degenerate
    type-I process treated here; this cross-constraint is enforced at the
    scenario level where both objects are known.
    """

    center: float
    half_width: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValidationError(f"grid needs at least 2 points, got {self.count}")
        if self.half_width <= 0:
            raise ValidationError("grid half-width must be positive")
        if self.center - self.half_width <= 0:
            raise ValidationError("grid extends to non-positive frequencies")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.count - 1)

    @property
    def omegas(self) -> np.ndarray:
        return self.center - self.half_width + self.spacing * np.arange(self.count)

    @property
    def sum_omegas(self) -> np.ndarray:
        """The 2N-1 distinct values of omega_i + omega_j, ascending."""
        return 2.0 * (self.center - self.half_width) + self.spacing * np.arange(2 * self.count - 1)


def refractive_index(model: OpticalModel, wavelength, polarization: str = "ordinary"):
    """Refractive index at ``wavelength`` (um) for the requested polarization.

    The extraordinary branch mixes ``eta`` and the ordinary index through the
    crystal angle ``model.theta``.
    """
    lam = np.asarray(wavelength, dtype=float)
    lo, hi = WAVELENGTH_BAND
    if np.any(lam <= lo) or np.any(lam >= hi):
        raise ValidationError(
            f"wavelength outside the trusted band {WAVELENGTH_BAND} um: "
            f"range [{lam.min():.4g}, {lam.max():.4g}]"
        )
    no2 = model.ordinary.index_squared(lam)
    if polarization == "ordinary":
        return np.sqrt(no2)
    if polarization == "extraordinary":
        eta2 = model.eta.index_squared(lam)
        s2 = np.sin(model.theta) ** 2
        return np.sqrt(1.0 / (s2 / eta2 + (1.0 - s2) / no2))
    raise ValidationError(f"unknown polarization {polarization!r}")


def wavevector(model: OpticalModel, omega, role: str = "pdc"):
    """Wavevector k = n(w) w / c in rad/um.

    ``role='pdc'`` uses the ordinary index, ``role='pump'`` the extraordinary
    one, matching a type-I (e -> oo) process.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValidationError("frequencies must be positive")
    lam = 2.0 * np.pi * SPEED_OF_LIGHT / w
    pol = {"pdc": "ordinary", "pump": "extraordinary"}.get(role)
    if pol is None:
        raise ValidationError(f"unknown role {role!r}")
    return refractive_index(model, lam, pol) * w / SPEED_OF_LIGHT


def phase_mismatch(model: OpticalModel, omega_i, omega_j):
    """Collinear wavevector mismatch dk = k_p(w_i + w_j) - k(w_i) - k(w_j).

    Symmetric in its two frequency arguments; broadcasts like numpy."""
    wi = np.asarray(omega_i, dtype=float)
    wj = np.asarray(omega_j, dtype=float)
    return wavevector(model, wi + wj, "pump") - wavevector(model, wi, "pdc") - wavevector(model, wj, "pdc")


def pump_spectrum(pump: PumpSpec, omega_sum):
    """Pump spectral amplitude S(w) = exp(-tau^2 (w - w_p)^2 / 2), peak value 1."""
    w = np.asarray(omega_sum, dtype=float)
    return np.exp(-0.5 * (pump.tau * (w - pump.omega)) ** 2)


def coupling_matrix(z: float, grid: FrequencyGrid, pump: PumpSpec, model: OpticalModel) -> np.ndarray:
    """Pairwise coupling J_ij(z) = S(w_i + w_j) exp(i k_p(w_i + w_j) z).

    Symmetric; its modulus is independent of z."""
    ws = grid.sum_omegas
    vals = pump_spectrum(pump, ws) * np.exp(1j * wavevector(model, ws, "pump") * z)
    idx = np.add.outer(np.arange(grid.count), np.arange(grid.count))
    return vals[idx]


@dataclass(frozen=True)
class LossProfile:
    """Per-grid-frequency intensity extinction coefficients in 1/um."""

    alpha: np.ndarray
    kind: str = "constant"

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if np.any(a < 0):
            raise ValidationError("extinction coefficients must be non-negative")
        object.__setattr__(self, "alpha", a)

    def transmission(self, length: float) -> np.ndarray:
        """Intensity transmission exp(-alpha L) over a medium of ``length`` um."""
        return np.exp(-self.alpha * length)


def loss_profile_none(grid: FrequencyGrid) -> LossProfile:
    return LossProfile(np.zeros(grid.count), kind="none")


def loss_profile_constant(db_per_cm: float, grid: FrequencyGrid) -> LossProfile:
    """Frequency-flat extinction given in dB/cm of intensity loss."""
    if db_per_cm < 0:
        raise ValidationError(f"loss must be non-negative, got {db_per_cm} dB/cm")
    return LossProfile(np.full(grid.count, db_per_cm * DB_PER_CM_TO_INV_UM), kind="constant")


def loss_profile_tabulated(omegas, db_per_cm, grid: FrequencyGrid) -> LossProfile:
    """Linear interpolation of tabulated (omega, dB/cm) points onto the grid.

    Extrapolation beyond the table is clamped to the end values."""
    w = np.asarray(omegas, dtype=float)
    v = np.asarray(db_per_cm, dtype=float)
    if w.ndim != 1 or w.shape != v.shape or w.size < 2:
        raise ValidationError("tabulated loss needs matching 1-d arrays of at least 2 points")
    if np.any(np.diff(w) <= 0):
        raise ValidationError("tabulated frequencies must be strictly increasing")
    if np.any(v < 0):
        raise ValidationError("extinction coefficients must be non-negative")
    alpha = np.interp(grid.omegas, w, v) * DB_PER_CM_TO_INV_UM
    return LossProfile(alpha, kind="tabulated")


def design_grid(
    pump: PumpSpec,
    model: OpticalModel,
    length: float,
    count: int = 511,
    edge_amplitude: float = 1e-2,
) -> FrequencyGrid:
    """Build the default frequency grid around the degeneracy point.

    The half-width is the largest detuning at which the low-gain two-photon
    amplitude |S(2w) sinc(dk(w, w) L / 2)| still exceeds ``edge_amplitude``
    times its peak, so the grid edges carry less than that fraction of
    amplitude.
    """
    if not 0 < edge_amplitude < 1:
        raise ValidationError("edge_amplitude must lie in (0, 1)")
    w0 = pump.omega / 2.0
    # beyond d_s the pump factor alone is below threshold
    d_s = np.sqrt(np.log(1.0 / edge_amplitude) / 2.0) / pump.tau
    det = np.linspace(0.0, 1.5 * d_s, 6001)
    w = w0 + det
    amp = pump_spectrum(pump, 2.0 * w) * np.abs(
        np.sinc(phase_mismatch(model, w, w) * length / 2.0 / np.pi)
    )
    above = np.nonzero(amp >= edge_amplitude * amp.max())[0]
    half_width = det[min(above[-1] + 1, det.size - 1)]
    return FrequencyGrid(center=w0, half_width=half_width, count=count)
