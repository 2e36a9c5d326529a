"""Core numeric types and 2D frequency-domain primitives.

Latents are C x H x W real grids; their spectra are kept DC-centered so a
radial Gaussian low-pass response has a closed form. The same filter response
is applied identically to every channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatentGrid",
    "FrequencyGrid",
    "LowPassFilter",
    "fft2",
    "ifft2",
    "make_lpf",
    "hadamard",
]


@dataclass(frozen=True)
class LatentGrid:
    """A C x H x W grid of real, finite scalars (latents or noise)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 3:
            raise ValueError(f"latent grid must be C x H x W, got shape {a.shape}")
        if min(a.shape) < 1:
            raise ValueError(f"latent grid dimensions must be positive, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("latent grid contains non-finite values")
        object.__setattr__(self, "data", a)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FrequencyGrid:
    """Per-channel 2D spectrum of a LatentGrid.

    ``dc_centered`` records the spectral layout so a filter built for the
    centered layout is never applied to an uncentered spectrum by accident.
    """

    data: np.ndarray
    dc_centered: bool = True

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.complex128)
        if a.ndim != 3:
            raise ValueError(f"frequency grid must be C x H x W, got shape {a.shape}")
        object.__setattr__(self, "data", a)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


# Half-power convention: the response drops to 0.5 at the stop frequency.
_HALF_POWER_SIGMA = math.sqrt(2.0 * math.log(2.0))


def gaussian_response(radius, stop_frequency: float):
    """Radial Gaussian response with value 0.5 at ``radius == stop_frequency``.

    ``radius`` is in Nyquist-normalized units (1.0 = Nyquist per axis, so the
    grid corner sits at sqrt(2)).
    """
    sigma = stop_frequency / _HALF_POWER_SIGMA
    return np.exp(-np.square(radius) / (2.0 * sigma * sigma))


@dataclass(frozen=True)
class LowPassFilter:
    """Gaussian low-pass response sampled on a DC-centered H x W spectrum."""

    height: int
    width: int
    stop_frequency: float
    response: np.ndarray = field(repr=False)

    def response_at(self, radius) -> np.ndarray:
        """Closed-form response at a Nyquist-normalized radius."""
        return gaussian_response(radius, self.stop_frequency)

    @property
    def complement(self) -> np.ndarray:
        """The high-pass response 1 - LPF as a plain array."""
        return 1.0 - self.response


def _normalized_radius(height: int, width: int) -> np.ndarray:
    # fftfreq spans [-0.5, 0.5); dividing by 0.5 normalizes Nyquist to 1.
    fy = np.fft.fftshift(np.fft.fftfreq(height)) / 0.5
    fx = np.fft.fftshift(np.fft.fftfreq(width)) / 0.5
    return np.hypot(fy[:, None], fx[None, :])


def make_lpf(height: int, width: int, stop_frequency: float) -> LowPassFilter:
    """Build a radial Gaussian low-pass filter for a DC-centered spectrum."""
    if not (0.0 < stop_frequency <= 1.0):
        raise ValueError(f"stop_frequency must be in (0, 1], got {stop_frequency}")
    if height < 1 or width < 1:
        raise ValueError("filter dimensions must be positive")
    response = gaussian_response(_normalized_radius(height, width), stop_frequency)
    return LowPassFilter(height=height, width=width, stop_frequency=stop_frequency, response=response)


def fft2(grid: LatentGrid) -> FrequencyGrid:
    """Per-channel 2D DFT with the DC bin shifted to the center."""
    if not isinstance(grid, LatentGrid):
        grid = LatentGrid(np.asarray(grid))
    spec = np.fft.fftshift(np.fft.fft2(grid.data, axes=(-2, -1)), axes=(-2, -1))
    return FrequencyGrid(spec, dc_centered=True)


def ifft2(freq: FrequencyGrid, *, residue_rtol: float = 1e-6, residue_atol: float = 0.0) -> LatentGrid:
    """Inverse of :func:`fft2`; returns the real part after a symmetry check.

    Spectra in this package always originate from real grids, so the inverse
    transform must come back real up to roundoff. A large imaginary residue
    means conjugate symmetry was broken upstream (e.g. a complex-valued or
    asymmetric filter) and is reported instead of silently dropped.
    ``residue_atol`` gives callers an absolute floor for spectra whose true
    inverse is zero.
    """
    if not freq.dc_centered:
        raise ValueError("expected a DC-centered spectrum")
    out = np.fft.ifft2(np.fft.ifftshift(freq.data, axes=(-2, -1)), axes=(-2, -1))
    max_im = float(np.abs(out.imag).max())
    max_re = float(np.abs(out.real).max())
    if max_im > residue_rtol * max_re + residue_atol:
        raise ValueError(
            f"imaginary residue {max_im:.3e} exceeds {residue_rtol:.1e} * {max_re:.3e}"
            " -- conjugate symmetry broken upstream"
        )
    return LatentGrid(out.real)


def hadamard(freq: FrequencyGrid, filt) -> FrequencyGrid:
    """Elementwise product of a spectrum with a real response.

    ``filt`` may be a LowPassFilter or any H x W real array (e.g. the
    complement 1 - LPF built by the caller); it is broadcast over channels.
    """
    response = filt.response if isinstance(filt, LowPassFilter) else np.asarray(filt, dtype=np.float64)
    if response.shape != (freq.height, freq.width):
        raise ValueError(
            f"filter shape {response.shape} does not match spectrum {(freq.height, freq.width)}"
        )
    return FrequencyGrid(freq.data * response[None, :, :], dc_centered=freq.dc_centered)
