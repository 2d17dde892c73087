"""Image-source room impulse responses and multi-channel scene synthesis.

Shoebox rooms only. Each image source contributes a fractionally-delayed,
Hann-windowed sinc pulse with amplitude (prod of wall reflection
coefficients) / (4 pi distance); reflection coefficient per wall is
sqrt(1 - absorption).
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .dsp import Waveform

SOUND_SPEED = 343.0
# Half-width of the windowed-sinc fractional-delay kernel, in taps.
SINC_HALF_WIDTH = 40
DEFAULT_MAX_ORDER = 10
DEFAULT_ABSORPTION = 0.35


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class RoomSpec:
    """Shoebox room geometry with a single source.

    absorption may be a scalar or 6 per-wall values ordered
    (x=0, x=Lx, y=0, y=Ly, z=0, z=Lz), each in (0, 1].
    """

    dims: np.ndarray
    source_pos: np.ndarray
    absorption: np.ndarray = DEFAULT_ABSORPTION
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        self.dims = np.asarray(self.dims, dtype=np.float64)
        self.source_pos = np.asarray(self.source_pos, dtype=np.float64)
        absorption = np.asarray(self.absorption, dtype=np.float64)
        if absorption.ndim == 0:
            absorption = np.full(6, float(absorption))
        if absorption.shape != (6,):
            raise ValueError("absorption must be scalar or 6 per-wall values")
        self.absorption = absorption
        if self.dims.shape != (3,) or np.any(self.dims <= 0):
            raise ValueError("room dims must be 3 positive lengths")
        if self.source_pos.shape != (3,):
            raise ValueError("source_pos must have 3 coordinates")
        if np.any(self.source_pos <= 0) or np.any(self.source_pos >= self.dims):
            raise ValueError("source must lie strictly inside the room")
        if np.any(self.absorption <= 0) or np.any(self.absorption > 1):
            raise ValueError("absorption must lie in (0, 1]")
        if self.sound_speed <= 0:
            raise ValueError("sound_speed must be positive")


@dataclass
class MicArray:
    """Microphone positions in meters, [C, 3]."""

    positions: np.ndarray
    preset: str = "custom"

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("mic positions must be [C, 3]")
        if self.positions.shape[0] < 1:
            raise ValueError("array needs at least one microphone")

    @property
    def channels(self) -> int:
        return self.positions.shape[0]


@dataclass
class RIR:
    """Room impulse responses, taps [C, n_taps] on a shared time base."""

    taps: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.taps = np.atleast_2d(np.asarray(self.taps, dtype=np.float64))
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("RIR taps must be finite")

    @property
    def channels(self) -> int:
        return self.taps.shape[0]


# ---------------------------------------------------------------------------
# Array presets
# ---------------------------------------------------------------------------


def array_preset(name: str, center) -> MicArray:
    """Build a named array centered at `center`.

    chime4-6ch: 6 mics on a 10 cm-spaced rectangle (2 rows of 3), a tablet
    frame approximation. aishell4-8ch-circular: 8 mics on a 5 cm-radius
    circle. Both are documented approximations; the real challenge geometries
    are not public in coordinate form here.
    """
    center = np.asarray(center, dtype=np.float64)
    if name == "chime4-6ch":
        offsets = [[x, y, 0.0] for y in (-0.05, 0.05) for x in (-0.1, 0.0, 0.1)]
        positions = center + np.asarray(offsets)
        return MicArray(positions=positions, preset=name)
    if name == "aishell4-8ch-circular":
        angles = 2.0 * np.pi * np.arange(8) / 8
        offsets = 0.05 * np.stack([np.cos(angles), np.sin(angles), np.zeros(8)], axis=1)
        return MicArray(positions=center + offsets, preset=name)
    if name == "desk-4ch":
        offsets = 0.05 * np.asarray(
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]
        )
        return MicArray(positions=center + offsets, preset=name)
    raise ValueError(f"unknown array preset '{name}'")


def load_room_config(path) -> tuple[RoomSpec, MicArray, dict]:
    """Read room/array specs from a JSON file (schema in README)."""
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    room = RoomSpec(
        dims=cfg["room"]["dims"],
        source_pos=cfg["room"]["source_pos"],
        absorption=cfg["room"].get("absorption", DEFAULT_ABSORPTION),
        sound_speed=cfg["room"].get("sound_speed", SOUND_SPEED),
    )
    acfg = cfg["array"]
    if "positions" in acfg:
        array = MicArray(positions=acfg["positions"], preset=acfg.get("preset", "custom"))
    else:
        array = array_preset(acfg["preset"], acfg["center"])
    extras = {
        "max_order": int(cfg.get("max_order", DEFAULT_MAX_ORDER)),
        "sample_rate": int(cfg.get("sample_rate", 16000)),
    }
    return room, array, extras


# ---------------------------------------------------------------------------
# Image-source method
# ---------------------------------------------------------------------------


def first_order_images(room: RoomSpec) -> np.ndarray:
    """The 6 single-reflection image positions (one per wall), [6, 3]."""
    images = []
    for axis in range(3):
        low = room.source_pos.copy()
        low[axis] = -room.source_pos[axis]
        high = room.source_pos.copy()
        high[axis] = 2.0 * room.dims[axis] - room.source_pos[axis]
        images.extend([low, high])
    return np.asarray(images)


def _enumerate_images(room: RoomSpec, max_order: int):
    """All image positions and amplitudes (before 1/4pi*d) up to max_order.

    Images are indexed per axis by parity p in {0,1} and translation r in Z:
    coordinate = (1-2p)*s + 2*r*L. Wall hit counts per axis are |r - p|
    (wall at 0) and |r| (wall at L); total order is their sum over axes.
    """
    beta = np.sqrt(1.0 - room.absorption)  # amplitude reflection per wall
    r_max = (max_order + 1) // 2
    positions = []
    gains = []
    r_range = range(-r_max, r_max + 1)
    for p in itertools.product((0, 1), repeat=3):
        for r in itertools.product(r_range, repeat=3):
            n_low = [abs(r[a] - p[a]) for a in range(3)]
            n_high = [abs(r[a]) for a in range(3)]
            if sum(n_low) + sum(n_high) > max_order:
                continue
            pos = [
                (1 - 2 * p[a]) * room.source_pos[a] + 2 * r[a] * room.dims[a] for a in range(3)
            ]
            gain = 1.0
            for a in range(3):
                gain *= beta[2 * a] ** n_low[a] * beta[2 * a + 1] ** n_high[a]
            positions.append(pos)
            gains.append(gain)
    return np.asarray(positions), np.asarray(gains)


def image_source_rir(
    room: RoomSpec, array: MicArray, max_order: int, sample_rate: int
) -> RIR:
    """Image-source RIRs for every microphone, on a shared time base.

    Each image contributes gain/(4 pi d) at fractional delay d/c (in samples),
    interpolated with a +-40-tap Hann-windowed sinc.
    """
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    if np.any(array.positions <= 0) or np.any(array.positions >= room.dims):
        raise ValueError("all microphones must lie strictly inside the room")
    positions, gains = _enumerate_images(room, max_order)
    dists = np.linalg.norm(positions[None, :, :] - array.positions[:, None, :], axis=2)
    delays = dists * sample_rate / room.sound_speed  # [C, K] fractional samples
    amps = gains[None, :] / (4.0 * np.pi * dists)

    n_taps = int(np.ceil(delays.max())) + SINC_HALF_WIDTH + 2
    taps = np.zeros((array.channels, n_taps + SINC_HALF_WIDTH + 1))
    offsets = np.arange(-SINC_HALF_WIDTH, SINC_HALF_WIDTH + 1)
    for c in range(array.channels):
        centers = np.round(delays[c]).astype(int)  # [K]
        idx = centers[:, None] + offsets[None, :]  # [K, 81]
        t = idx - delays[c][:, None]  # signed offset from true delay
        window = 0.5 * (1.0 + np.cos(np.pi * t / (SINC_HALF_WIDTH + 1)))
        pulse = amps[c][:, None] * np.sinc(t) * window
        valid = idx >= 0
        np.add.at(taps[c], idx[valid], pulse[valid])
    return RIR(taps=taps[:, :n_taps], sample_rate=sample_rate)


# ---------------------------------------------------------------------------
# Scene synthesis
# ---------------------------------------------------------------------------


def simulate_multichannel(source: Waveform, rir: RIR) -> Waveform:
    """Convolve a single-channel source with each RIR channel (full length)."""
    if source.channels != 1:
        raise ValueError("source must be single-channel")
    if source.sample_rate != rir.sample_rate:
        raise ValueError("sample rate mismatch between source and RIR")
    out = fftconvolve(rir.taps, source.samples, axes=1)
    return Waveform(samples=out, sample_rate=source.sample_rate)


def mix_at_snr(speech: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Scale noise so the reference-channel SNR equals snr_db, then sum.

    snr_db = inf is a sentinel for a zero noise scale. Noise longer than the
    speech is truncated; shorter noise is an error.
    """
    if speech.channels != noise.channels:
        raise ValueError("speech and noise channel counts must match")
    if speech.sample_rate != noise.sample_rate:
        raise ValueError("speech and noise sample rates must match")
    if noise.n_samples < speech.n_samples:
        raise ValueError("noise must be at least as long as speech")
    noise_cut = noise.samples[:, : speech.n_samples]
    if np.isinf(snr_db):
        return Waveform(samples=speech.samples.copy(), sample_rate=speech.sample_rate)
    p_speech = np.mean(speech.samples[0] ** 2)
    p_noise = np.mean(noise_cut[0] ** 2)
    if p_speech <= 0.0 or p_noise <= 0.0:
        raise ValueError("zero-power input to mix_at_snr")
    scale = np.sqrt(p_speech / (p_noise * 10.0 ** (snr_db / 10.0)))
    return Waveform(samples=speech.samples + scale * noise_cut, sample_rate=speech.sample_rate)
