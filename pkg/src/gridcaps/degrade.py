"""Measurement degradations applied to PMU windows.

Mirrors what field data does to a classifier: additive Gaussian sensor
noise at a target SNR, samples replaced by the nominal reference when
packets are lost, spiky outliers around the true value, and late
observation windows. All transforms are pure: they return new windows
and draw exclusively from the rng handed in.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import StructuralError
from .sim import NOMINAL_HZ, PmuWindow

#: per-channel nominal reference (frequency Hz, angle rad)
NOMINAL = np.array([NOMINAL_HZ, 0.0])


@dataclass(frozen=True)
class DegradationConfig:
    """Test-condition knobs; None switches a transform off."""

    snr_db: float | None = None
    drop_frac: float | None = None
    outlier_frac: float | None = None
    delay_s: float | None = None

    def to_dict(self):
        return {
            "snr_db": self.snr_db,
            "drop_frac": self.drop_frac,
            "outlier_frac": self.outlier_frac,
            "delay_s": self.delay_s,
        }

    @classmethod
    def from_dict(cls, raw):
        return replace(cls(), **{k: raw[k] for k in raw if k in cls.__dataclass_fields__})

    @property
    def active(self):
        return any(v is not None for v in self.to_dict().values())


def deviations(window: PmuWindow):
    """Signal with the nominal reference removed, shape (N_G, T, 2)."""
    return window.data - NOMINAL


def add_gaussian_noise(window: PmuWindow, snr_db, rng) -> PmuWindow:
    """Additive zero-mean Gaussian noise at a per-channel target SNR.

    The signal reference is the rms of the deviation from nominal, so a
    20 dB target means the injected noise is one tenth of the observed
    excursion, channel by channel.
    """
    if snr_db is None or np.isinf(snr_db):
        return window
    dev = deviations(window)
    rms = np.sqrt(np.mean(np.square(dev), axis=(0, 1)))
    if np.any(rms <= 0):
        raise StructuralError("window sits at nominal; SNR is undefined")
    sigma = rms / (10.0 ** (snr_db / 20.0))
    noise = rng.normal(0.0, 1.0, size=window.data.shape) * sigma
    return replace(window, data=window.data + noise)


def _pick_points(shape, fraction, rng):
    n_g, t = shape
    if not 0.0 <= fraction <= 1.0:
        raise StructuralError(f"fraction {fraction} outside [0, 1]")
    count = int(np.floor(fraction * n_g * t))
    flat = rng.choice(n_g * t, size=count, replace=False)
    return np.unravel_index(flat, (n_g, t))


def drop_points(window: PmuWindow, fraction, rng) -> PmuWindow:
    """Replace lost samples with the 50 Hz / 0 rad reference on both channels."""
    rows, cols = _pick_points(window.data.shape[:2], fraction, rng)
    data = window.data.copy()
    data[rows, cols, :] = NOMINAL
    return replace(window, data=data)


def inject_outliers(window: PmuWindow, fraction, rng) -> PmuWindow:
    """Scale chosen points by a random factor within 20% of their value.

    The factor applies to the deviation from nominal (the physical
    excursion), not to the absolute 50 Hz carrier, which the outlier
    would otherwise dwarf.
    """
    rows, cols = _pick_points(window.data.shape[:2], fraction, rng)
    data = window.data.copy()
    u = rng.uniform(-0.2, 0.2, size=(rows.size, 2))
    dev = data[rows, cols, :] - NOMINAL
    data[rows, cols, :] = NOMINAL + dev * (1.0 + u)
    return replace(window, data=data)


def apply_config(window: PmuWindow, cfg: DegradationConfig, rng) -> PmuWindow:
    """Noise, drops, and outliers in a fixed order under one rng stream."""
    if cfg.snr_db is not None:
        window = add_gaussian_noise(window, cfg.snr_db, rng)
    if cfg.drop_frac is not None:
        window = drop_points(window, cfg.drop_frac, rng)
    if cfg.outlier_frac is not None:
        window = inject_outliers(window, cfg.outlier_frac, rng)
    return window


def empirical_snr_db(clean: PmuWindow, noisy: PmuWindow) -> np.ndarray:
    """Measured per-channel SNR between a window and its degraded copy."""
    dev = deviations(clean)
    err = noisy.data - clean.data
    rms_sig = np.sqrt(np.mean(np.square(dev), axis=(0, 1)))
    rms_err = np.sqrt(np.mean(np.square(err), axis=(0, 1)))
    return 20.0 * np.log10(rms_sig / rms_err)
