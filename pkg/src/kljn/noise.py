"""Band-limited Gaussian noise synthesis and spectral verification tools.

The thermal noise of a resistor ``r`` at effective temperature ``T_eff``
has the flat one-sided voltage spectral density ``4*k*T_eff*r`` inside the
public band ``[0, B]``.  Waveforms are synthesised in the frequency domain:
independent complex Gaussian coefficients are placed on the FFT bins inside
the band, all bins above the band are zero, and one inverse real FFT yields
the time samples.  This gives an exact hard band limit (the quasi-static,
no-wave operating regime) and exactly Gaussian marginals.  Each clock
period is synthesised independently, so there is no correlation between
bit periods.

Two unit modes are supported: ``physical`` uses the SI Boltzmann constant,
``normalized`` fixes ``4*k*T_eff = 1 V^2/(ohm*Hz)`` which makes analytic
levels easy to read off in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal, stats

BOLTZMANN = 1.380649e-23  # J/K, SI exact

_SCALE_MODES = ("physical", "normalized")


@dataclass(frozen=True)
class NoiseConfig:
    """Parameters governing noise synthesis for one session.

    Parameters
    ----------
    t_eff : float
        Effective noise temperature in kelvin (ignored in normalized mode).
    bandwidth_hz : float
        Public noise bandwidth B.
    sample_rate_hz : float
        Sampling rate; must be at least ``20 * bandwidth_hz`` to keep a
        comfortable margin inside the quasi-static (no-wave) regime.
    samples_per_bit : int
        Samples per clock period, M.
    scale_mode : str
        ``"physical"`` or ``"normalized"``.
    seed : int
        64-bit master seed for all session randomness.
    """

    t_eff: float = 1e18
    bandwidth_hz: float = 1000.0
    sample_rate_hz: float = 20000.0
    samples_per_bit: int = 4096
    scale_mode: str = "normalized"
    seed: int = 0

    def __post_init__(self):
        if self.t_eff <= 0:
            raise ValueError("t_eff must be > 0")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be > 0")
        if self.sample_rate_hz < 20.0 * self.bandwidth_hz:
            raise ValueError(
                "sample_rate_hz must be >= 20 * bandwidth_hz "
                "(quasi-static regime margin)"
            )
        if self.samples_per_bit < 2:
            raise ValueError("samples_per_bit must be >= 2")
        if self.scale_mode not in _SCALE_MODES:
            raise ValueError(f"scale_mode must be one of {_SCALE_MODES}")

    @property
    def four_kt(self) -> float:
        """The 4*k*T_eff prefactor in the active unit system."""
        if self.scale_mode == "normalized":
            return 1.0
        return 4.0 * BOLTZMANN * self.t_eff


@dataclass(frozen=True)
class PsdEstimate:
    """Averaged-periodogram spectral estimate on [0, fs/2]."""

    freqs: np.ndarray
    psd: np.ndarray
    n_segments: int
    resolution_hz: float

    def __post_init__(self):
        if len(self.freqs) != len(self.psd):
            raise ValueError("freqs and psd must have equal length")
        if np.any(self.psd < 0):
            raise ValueError("psd values must be >= 0")
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")

    def band_mean(self, f_lo: float, f_hi: float) -> float:
        """Mean PSD over bins with f_lo <= f <= f_hi."""
        m = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        if not np.any(m):
            raise ValueError("no PSD bins in requested band")
        return float(np.mean(self.psd[m]))


def synth_band_noise(
    rng: np.random.Generator,
    n: int,
    sample_rate_hz: float,
    psd: float,
    bandwidth_hz: float,
) -> np.ndarray:
    """Synthesise `n` samples of Gaussian noise with flat one-sided PSD.

    The one-sided spectral density is `psd` on ``[0, bandwidth_hz]`` and
    zero above.  Coefficients are drawn in a fixed order from `rng`, so a
    given generator state yields bit-identical output.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if psd < 0:
        raise ValueError("psd must be >= 0")
    if psd == 0.0:
        return np.zeros(n)

    df = sample_rate_hz / n
    k_max = min(n // 2, int(bandwidth_hz / df + 1e-9))
    spec = np.zeros(n // 2 + 1, dtype=np.complex128)

    # E|X_k|^2 chosen so every in-band bin contributes psd*df of variance:
    # interior bins carry two-sided halves, DC and Nyquist are real-valued.
    spec[0] = rng.standard_normal() * np.sqrt(psd * sample_rate_hz * n)
    k_hi = min(k_max, (n - 1) // 2)
    if k_hi >= 1:
        g = rng.standard_normal((2, k_hi))
        amp = np.sqrt(psd * sample_rate_hz * n / 4.0)
        spec[1 : k_hi + 1] = amp * (g[0] + 1j * g[1])
    if n % 2 == 0 and k_max == n // 2:
        spec[n // 2] = rng.standard_normal() * np.sqrt(psd * sample_rate_hz * n)

    return np.fft.irfft(spec, n)


def gen_johnson_noise(
    cfg: NoiseConfig,
    r: float,
    n: int,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Generate `n` samples of the Johnson-noise voltage of resistance `r`.

    The one-sided spectral density is ``cfg.four_kt * r`` over
    ``[0, cfg.bandwidth_hz]``, giving expected variance
    ``cfg.four_kt * r * cfg.bandwidth_hz``.  Zero resistance yields an
    all-zero vector and consumes no random draws.

    Parameters
    ----------
    cfg : NoiseConfig
    r : float
        Resistance in ohms; must be >= 0.
    n : int
        Sample count; must be >= 1.
    rng : numpy.random.Generator, optional
        Source of randomness; a fresh stream derived from ``cfg.seed`` is
        used when omitted.
    """
    if r < 0:
        raise ValueError("resistance must be >= 0")
    if n < 1:
        raise ValueError("sample count must be >= 1")
    if rng is None:
        from . import rng as _rng

        rng = _rng.stream(cfg.seed, _rng.ALICE_NOISE)
    return synth_band_noise(rng, n, cfg.sample_rate_hz, cfg.four_kt * r, cfg.bandwidth_hz)


def estimate_psd(
    samples: np.ndarray,
    sample_rate_hz: float,
    segment_len: int = 1024,
    overlap: float = 0.5,
) -> PsdEstimate:
    """Welch PSD estimate with Hann windowing.

    The default segmenting (1024-sample Hann segments, 50% overlap) keeps
    Parseval closure: the integral of the estimate over [0, fs/2] matches
    the sample variance to within a few percent for band-limited noise.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if segment_len > n:
        raise ValueError("segment_len must not exceed the number of samples")
    if segment_len < 2:
        raise ValueError("segment_len must be >= 2")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must satisfy 0 <= overlap < 1")

    noverlap = int(overlap * segment_len)
    freqs, psd = signal.welch(
        samples,
        fs=sample_rate_hz,
        window="hann",
        nperseg=segment_len,
        noverlap=noverlap,
        detrend=False,
    )
    step = segment_len - noverlap
    n_segments = 1 + (n - segment_len) // step
    return PsdEstimate(
        freqs=freqs,
        psd=psd,
        n_segments=n_segments,
        resolution_hz=sample_rate_hz / segment_len,
    )


@dataclass(frozen=True)
class GaussianityResult:
    skewness: float
    excess_kurtosis: float


def gaussianity_check(samples: np.ndarray) -> GaussianityResult:
    """Sample skewness and excess kurtosis; both near 0 for Gaussian input.

    Raises for fewer than 1000 samples (estimates would be meaningless)
    and for degenerate (zero-variance) input.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size < 1000:
        raise ValueError("need at least 1000 samples for moment estimates")
    if np.var(samples) == 0.0:
        raise ValueError("degenerate input: zero variance")
    return GaussianityResult(
        skewness=float(stats.skew(samples)),
        excess_kurtosis=float(stats.kurtosis(samples)),
    )
