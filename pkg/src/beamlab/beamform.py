"""Mask-based MVDR beamformer and a delay-and-sum baseline.

The MVDR weights follow the masked-statistics formulation: per-frequency
speech/noise cross-channel PSD matrices, filter
    h(f) = (Phi_NN^-1(f) Phi_SS(f) / tr{Phi_NN^-1(f) Phi_SS(f)}) u
with u one-hot at the reference microphone, applied as x_hat = h^H x.
"""

from dataclasses import dataclass

import numpy as np

from .dsp import Spectrogram

MASK_EPS = 1e-10
# Relative diagonal loading applied to Phi_NN before inversion.
DIAGONAL_LOADING = 1e-6
HERMITIAN_TOL = 1e-8


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class TFMask:
    """Per-(t,f) weight in [0,1]; target names what the mask selects."""

    values: np.ndarray
    target: str = "speech"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("mask values must be [frames, freq_bins]")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("mask values must lie in [0, 1]")
        if self.target not in ("speech", "noise"):
            raise ValueError("mask target must be 'speech' or 'noise'")


@dataclass
class PsdPair:
    """Per-frequency C x C Hermitian PSD matrices for speech and noise."""

    phi_ss: np.ndarray
    phi_nn: np.ndarray

    def __post_init__(self):
        self.phi_ss = np.asarray(self.phi_ss, dtype=np.complex128)
        self.phi_nn = np.asarray(self.phi_nn, dtype=np.complex128)
        for name, phi in (("phi_ss", self.phi_ss), ("phi_nn", self.phi_nn)):
            if phi.ndim != 3 or phi.shape[1] != phi.shape[2]:
                raise ValueError(f"{name} must be [freq_bins, C, C]")
        if self.phi_ss.shape != self.phi_nn.shape:
            raise ValueError("phi_ss and phi_nn shapes must match")

    @property
    def channels(self) -> int:
        return self.phi_ss.shape[1]


@dataclass
class BeamWeights:
    """Per-frequency complex filter h(f) of length C plus the reference index."""

    h: np.ndarray
    ref_channel: int

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.complex128)
        if self.h.ndim != 2:
            raise ValueError("beam weights must be [freq_bins, C]")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("beam weights must be finite")
        if not 0 <= self.ref_channel < self.h.shape[1]:
            raise ValueError("ref_channel out of range")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def oracle_masks(clean: Spectrogram, noise: Spectrogram, ref_channel: int = 0):
    """Ideal ratio masks from known clean/noise components (reference channel).

    m_s = |S|^2 / (|S|^2 + |N|^2 + eps), m_n = 1 - m_s.
    Returns (speech TFMask, noise TFMask).
    """
    if clean.bins.shape != noise.bins.shape:
        raise ValueError("clean and noise spectrogram shapes must match")
    s_pow = np.abs(clean.bins[:, :, ref_channel]) ** 2
    n_pow = np.abs(noise.bins[:, :, ref_channel]) ** 2
    m_s = s_pow / (s_pow + n_pow + MASK_EPS)
    return TFMask(m_s, target="speech"), TFMask(1.0 - m_s, target="noise")


def masked_psd(bins: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Raw-array core of estimate_psd: bins [T,F,C], mask [T,F] -> [F,C,C]."""
    numer = np.einsum("tf,tfi,tfj->fij", mask, bins, bins.conj())
    denom = np.maximum(mask.sum(axis=0), MASK_EPS)
    return numer / denom[:, None, None]


def estimate_psd(spec: Spectrogram, mask) -> np.ndarray:
    """Mask-weighted spatial covariance per frequency.

    Phi(f) = sum_t m(t,f) x(t,f) x(t,f)^H / max(sum_t m(t,f), eps).
    Hermitian by construction; an all-zero mask column yields a zero matrix.
    """
    values = mask.values if isinstance(mask, TFMask) else np.asarray(mask, dtype=np.float64)
    if values.shape != (spec.frames, spec.freq_bins):
        raise ValueError("mask shape must match spectrogram frames x freq_bins")
    return masked_psd(spec.bins, values)


def _check_hermitian(phi: np.ndarray, name: str):
    scale = max(1.0, float(np.abs(phi).max(initial=0.0)))
    if np.abs(phi - phi.conj().transpose(0, 2, 1)).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise ValueError(f"invalid PSD: {name} is not Hermitian within tolerance")


def load_noise_psd(phi_nn: np.ndarray) -> np.ndarray:
    """Diagonal loading Phi_NN + delta*(tr(Phi_NN)/C)*I, delta = 1e-6."""
    c = phi_nn.shape[-1]
    trace = np.trace(phi_nn, axis1=1, axis2=2).real
    eye = np.eye(c)
    return phi_nn + (DIAGONAL_LOADING * trace / c)[:, None, None] * eye


def normalized_psd_ratio(phi_ss: np.ndarray, phi_nn: np.ndarray) -> np.ndarray:
    """Trace-normalized G = Phi_NN_loaded^-1 Phi_SS per frequency.

    tr of every returned matrix is 1 except where tr(G) is exactly zero
    (Phi_SS identically zero), which yields a zero matrix.
    """
    loaded = load_noise_psd(phi_nn)
    ratio = np.linalg.solve(loaded, phi_ss)
    trace = np.trace(ratio, axis1=1, axis2=2)
    out = np.zeros_like(ratio)
    nz = trace != 0
    out[nz] = ratio[nz] / trace[nz, None, None]
    return out


def mvdr_weights(psd: PsdPair, ref: int) -> BeamWeights:
    """MVDR filter h(f) = (Phi_NN^-1 Phi_SS / tr{.}) u with diagonal loading."""
    if not 0 <= ref < psd.channels:
        raise ValueError("ref channel out of range")
    _check_hermitian(psd.phi_ss, "phi_ss")
    _check_hermitian(psd.phi_nn, "phi_nn")
    normalized = normalized_psd_ratio(psd.phi_ss, psd.phi_nn)
    return BeamWeights(h=normalized[:, :, ref], ref_channel=ref)


def apply_beamformer(weights: BeamWeights, spec: Spectrogram) -> Spectrogram:
    """Enhanced single-channel spectrogram x_hat(t,f) = h(f)^H x(t,f)."""
    if weights.h.shape[1] != spec.channels:
        raise ValueError("beam weight channel count does not match spectrogram")
    if weights.h.shape[0] != spec.freq_bins:
        raise ValueError("beam weight bin count does not match spectrogram")
    enhanced = np.einsum("fc,tfc->tf", weights.h.conj(), spec.bins)
    return Spectrogram(
        bins=enhanced[:, :, None],
        sample_rate=spec.sample_rate,
        window_size=spec.window_size,
        hop=spec.hop,
    )


def select_reference(phi_ss: np.ndarray) -> int:
    """Reference microphone: argmax over channels of mean diagonal signal power.

    Approximates principal-component selection; ties break to the lowest index.
    """
    phi_ss = np.asarray(phi_ss)
    if phi_ss.ndim != 3 or phi_ss.shape[0] < 1:
        raise ValueError("phi_ss must be [freq_bins, C, C] with >= 1 bin")
    power = np.einsum("fcc->c", phi_ss).real / phi_ss.shape[0]
    return int(np.argmax(power))


def delay_and_sum(spec: Spectrogram, delays) -> Spectrogram:
    """Phase-steered average: x_hat(t,f) = (1/C) sum_c e^{-j w_f tau_c} x(t,f,c).

    delays are per-channel in samples (fractional allowed); w_f is the bin's
    angular frequency in rad/sample.
    """
    delays = np.asarray(delays, dtype=np.float64)
    if delays.shape != (spec.channels,):
        raise ValueError("need exactly one delay per channel")
    omega = 2.0 * np.pi * np.arange(spec.freq_bins) / spec.window_size
    steer = np.exp(-1j * omega[:, None] * delays[None, :])  # [F, C]
    summed = np.einsum("fc,tfc->tf", steer, spec.bins) / spec.channels
    return Spectrogram(
        bins=summed[:, :, None],
        sample_rate=spec.sample_rate,
        window_size=spec.window_size,
        hop=spec.hop,
    )
