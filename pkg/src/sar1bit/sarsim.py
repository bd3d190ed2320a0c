"""Side-looking radar echo simulation and Range-Doppler image formation.

Produces paired full-precision / sign-quantized images from a reflectivity
map: exact point-by-point echo superposition of a linear-FM pulse under the
stop-and-go approximation, optional extreme 1-bit quantization of the raw
echo (sign of real and imaginary parts), then the classic three-step chain
of range compression, range cell migration correction, and azimuth
compression.

Geometry and sampling conventions:

* fast-time samples are centred on the reference slant range ``r0``; with
  the default range pixel spacing ``c/(2*fs)`` scene row ``j`` of an
  ``n_range``-tall map lands on range sample ``j``;
* one pulse per azimuth pixel: azimuth pixel spacing defaults to
  ``velocity/prf`` so scene column ``i`` lands on azimuth sample ``i``;
* matched filtering is circular, so scenes must stay inside the sampling
  window (validated before simulation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SimulationError(ValueError):
    """Scene/parameter combination outside the simulator's valid regime."""


@dataclass
class RadarParams:
    """Pulsed side-looking radar and scene grid description."""

    wavelength: float = 0.055
    chirp_rate: float = 3.75e11
    pulse_duration: float = 4e-6
    sample_rate: float = 2e6
    prf: float = 85.0
    velocity: float = 150.0
    r0: float = 10_000.0
    pixel_range: float = 0.0  # 0 = auto: c / (2 * sample_rate)
    pixel_azimuth: float = 0.0  # 0 = auto: velocity / prf
    n_range: int = 64
    n_azimuth: int = 64
    c: float = 3.0e8

    def __post_init__(self):
        if self.pixel_range <= 0:
            self.pixel_range = self.c / (2.0 * self.sample_rate)
        if self.pixel_azimuth <= 0:
            self.pixel_azimuth = self.velocity / self.prf
        self.validate()

    def validate(self):
        if self.velocity <= 0 or self.r0 <= 0 or self.pulse_duration <= 0:
            raise SimulationError("velocity, r0 and pulse_duration must be positive")
        if self.sample_rate < abs(self.chirp_rate) * self.pulse_duration:
            raise SimulationError(
                f"sample_rate {self.sample_rate:g} Hz below chirp bandwidth "
                f"{abs(self.chirp_rate) * self.pulse_duration:g} Hz"
            )
        for name in ("n_range", "n_azimuth"):
            n = getattr(self, name)
            if n < 2 or n & (n - 1):
                raise SimulationError(f"{name}={n} must be a power of two")

    @property
    def bandwidth(self) -> float:
        return abs(self.chirp_rate) * self.pulse_duration

    @property
    def range_sample_spacing(self) -> float:
        return self.c / (2.0 * self.sample_rate)

    def fast_times(self) -> np.ndarray:
        """Absolute fast-time of each range sample, centred on 2*r0/c."""
        n = np.arange(self.n_range) - self.n_range // 2
        return 2.0 * self.r0 / self.c + n / self.sample_rate

    def slow_times(self) -> np.ndarray:
        """Slow-time of each pulse, centred on the aperture middle."""
        k = np.arange(self.n_azimuth) - self.n_azimuth // 2
        return k / self.prf

    def doppler_rate(self, slant_range: float | np.ndarray):
        return 2.0 * self.velocity**2 / (self.wavelength * slant_range)

    def row_ranges(self, n_rows: int) -> np.ndarray:
        """Closest-approach slant range of each scene row."""
        jj = np.arange(n_rows) - n_rows // 2
        return self.r0 + self.pixel_range * jj


def validate_scene(psf: np.ndarray, params: RadarParams):
    """Reject scenes whose echoes would leave the fast-time window."""
    h, w = psf.shape
    if h > params.n_range or w > params.n_azimuth:
        raise SimulationError(f"scene {h}x{w} exceeds grid {params.n_range}x{params.n_azimuth}")
    nz = np.argwhere(psf != 0)
    if nz.size == 0:
        return
    jj = np.abs(nz[:, 0] - h // 2).max()
    half_window = params.n_range // 2
    pulse_half = 0.5 * params.pulse_duration * params.sample_rate
    # worst-case migration of the farthest scene corner
    ii = np.abs(nz[:, 1] - w // 2).max()
    x_max = (params.n_azimuth // 2) / params.prf * params.velocity + ii * params.pixel_azimuth
    r_edge = params.r0 + jj * params.pixel_range
    extra = np.sqrt(r_edge**2 + x_max**2) - r_edge
    span = jj * params.pixel_range / params.range_sample_spacing + pulse_half
    span += extra / params.range_sample_spacing
    if span > half_window:
        raise SimulationError(
            f"scene spans {span:.1f} range samples, beyond the unambiguous "
            f"window of {half_window}; shrink the target or the pulse"
        )


def simulate_echo(psf: np.ndarray, params: RadarParams) -> np.ndarray:
    """Raw baseband echo of a reflectivity map, shape (n_range, n_azimuth).

    Exact superposition over nonzero scene points: each contributes a
    delayed linear-FM pulse with carrier phase ``-4*pi*R/wavelength`` where
    ``R`` is the instantaneous slant range to the platform (stop-and-go).
    """
    psf = np.asarray(psf, dtype=np.float64)
    if psf.ndim != 2:
        raise SimulationError(f"reflectivity map must be 2-D, got shape {psf.shape}")
    validate_scene(psf, params)
    h, w = psf.shape
    tau = params.fast_times()[:, None]  # (n_range, 1)
    x_plat = params.velocity * params.slow_times()[None, :]  # (1, n_azimuth)
    echo = np.zeros((params.n_range, params.n_azimuth), dtype=np.complex128)
    half = params.pulse_duration / 2.0
    for jj, ii in np.argwhere(psf != 0):
        amp = psf[jj, ii]
        r_closest = params.r0 + params.pixel_range * (jj - h // 2)
        x_target = params.pixel_azimuth * (ii - w // 2)
        rng = np.sqrt(r_closest**2 + (x_plat - x_target) ** 2)  # (1, n_azimuth)
        delay = 2.0 * rng / params.c
        trel = tau - delay  # (n_range, n_azimuth)
        inside = np.abs(trel) <= half
        phase = np.pi * params.chirp_rate * trel**2 - 4.0 * np.pi * rng / params.wavelength
        echo += amp * inside * np.exp(1j * phase)
    return echo.astype(np.complex64)


def quantize_1bit(echo: np.ndarray) -> np.ndarray:
    """Extreme quantization: keep only sign(real) + 1j*sign(imag).

    sign(0) is defined as +1, so every output entry has modulus sqrt(2).
    """
    echo = np.asarray(echo)
    re = np.where(echo.real >= 0, 1.0, -1.0)
    im = np.where(echo.imag >= 0, 1.0, -1.0)
    return (re + 1j * im).astype(np.complex64)


def _reference_chirp_spectrum(params: RadarParams) -> np.ndarray:
    """FFT of the transmit pulse placed (wrapped) around fast-time zero."""
    n = params.n_range
    idx = (np.arange(n) + n // 2) % n - n // 2
    t = idx / params.sample_rate
    g = np.where(np.abs(t) <= params.pulse_duration / 2.0,
                 np.exp(1j * np.pi * params.chirp_rate * t**2), 0.0)
    return np.fft.fft(g)


def range_compress(echo: np.ndarray, params: RadarParams) -> np.ndarray:
    """Circular matched filtering along range (per azimuth column)."""
    echo = np.asarray(echo, dtype=np.complex64)
    if echo.shape != (params.n_range, params.n_azimuth):
        raise SimulationError(f"echo shape {echo.shape} != grid ({params.n_range}, {params.n_azimuth})")
    ref = np.conj(_reference_chirp_spectrum(params))[:, None]
    spec = np.fft.fft(echo, axis=0)
    return np.fft.ifft(spec * ref, axis=0).astype(np.complex64)


def _sinc_shift_rows(x: np.ndarray, shifts: np.ndarray, taps: int = 8) -> np.ndarray:
    """Shift each column's content by a (fractional) number of range samples.

    ``out[n, k] = x[n + shifts[k], k]`` with circular truncated-sinc
    interpolation; integer shifts reduce to exact circular rolls.
    """
    n, m = x.shape
    base = np.floor(shifts).astype(int)
    frac = shifts - base
    offs = np.arange(-(taps // 2 - 1), taps // 2 + 1)  # e.g. -3..4 for 8 taps
    kern = np.sinc(frac[None, :] - offs[:, None])  # (taps, m)
    rows = np.arange(n)[:, None, None]  # (n, 1, 1)
    src = (rows + base[None, None, :] + offs[None, :, None]) % n  # (n, taps, m)
    cols = np.broadcast_to(np.arange(m)[None, None, :], src.shape)
    gathered = x[src, cols]  # (n, taps, m)
    return (gathered * kern[None, :, :]).sum(axis=1)


def rcmc(rc: np.ndarray, params: RadarParams, no_migration: bool = False) -> np.ndarray:
    """Range cell migration correction; output stays in the range-Doppler domain.

    Azimuth FFT, then each Doppler bin's range line is advanced by
    ``wavelength^2 * r0 * f_a^2 / (8 v^2)`` converted to range samples,
    using 8-tap truncated-sinc interpolation.
    """
    rc = np.asarray(rc, dtype=np.complex64)
    rd = np.fft.fft(rc, axis=1)
    if no_migration:
        return rd.astype(np.complex64)
    fa = np.fft.fftfreq(params.n_azimuth, d=1.0 / params.prf)
    dr = params.wavelength**2 * params.r0 * fa**2 / (8.0 * params.velocity**2)
    shifts = dr / params.range_sample_spacing
    if shifts.max() > params.n_range / 4:
        raise SimulationError(
            f"range migration of {shifts.max():.1f} samples exceeds n_range/4; "
            "scene and radar parameters are inconsistent"
        )
    return _sinc_shift_rows(rd, shifts).astype(np.complex64)


def azimuth_compress_complex(rcmc_out: np.ndarray, params: RadarParams) -> np.ndarray:
    """Azimuth matched filter (range-Doppler domain in, slow-time domain out)."""
    rd = np.asarray(rcmc_out, dtype=np.complex64)
    fa = np.fft.fftfreq(params.n_azimuth, d=1.0 / params.prf)
    ka = params.doppler_rate(params.row_ranges(params.n_range))  # per range row
    h = np.exp(-1j * np.pi * fa[None, :] ** 2 / ka[:, None])
    return np.fft.ifft(rd * h, axis=1).astype(np.complex64)


def azimuth_compress(rcmc_out: np.ndarray, params: RadarParams) -> np.ndarray:
    """Magnitude image normalized to [0, 1]; an all-zero input stays zero."""
    img = np.abs(azimuth_compress_complex(rcmc_out, params)).astype(np.float32)
    peak = img.max()
    if peak > 0:
        img /= peak
    return img


def rda_image(echo: np.ndarray, params: RadarParams) -> np.ndarray:
    """Full imaging chain: range compression -> RCMC -> azimuth compression."""
    return azimuth_compress(rcmc(range_compress(echo, params), params), params)


def rda_complex(echo: np.ndarray, params: RadarParams) -> np.ndarray:
    """Imaging chain before magnitude/normalization (linear in the echo)."""
    return azimuth_compress_complex(rcmc(range_compress(echo, params), params), params)


def generate_pair(
    target: np.ndarray, params: RadarParams, gt_source: str = "rda"
) -> tuple[np.ndarray, np.ndarray]:
    """(full-precision image, 1-bit image) for one reflectivity map.

    Both images come out of the same imaging operator; the full-precision
    path images the raw echo, the 1-bit path images its sign-quantized
    version. With ``gt_source='original'`` the raw reflectivity map itself
    (padded to the grid) is returned as the full-precision image instead.
    """
    if gt_source not in ("rda", "original"):
        raise ValueError(f"gt_source must be 'rda' or 'original', got {gt_source!r}")
    echo = simulate_echo(target, params)
    img_1bit = rda_image(quantize_1bit(echo), params)
    if gt_source == "original":
        img_16bit = embed_in_grid(target, params).astype(np.float32)
    else:
        img_16bit = rda_image(echo, params)
    return img_16bit, img_1bit


def embed_in_grid(target: np.ndarray, params: RadarParams) -> np.ndarray:
    """Centre a (possibly smaller) reflectivity map on the imaging grid."""
    target = np.asarray(target, dtype=np.float32)
    h, w = target.shape
    out = np.zeros((params.n_range, params.n_azimuth), dtype=np.float32)
    r0 = params.n_range // 2 - h // 2
    c0 = params.n_azimuth // 2 - w // 2
    out[r0 : r0 + h, c0 : c0 + w] = target
    return out
