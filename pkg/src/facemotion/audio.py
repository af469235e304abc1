"""Audio clips, acoustic features, and the FMAT feature container.

Two feature paths feed the animation model:

* ``mel_features`` turns a mono PCM clip into log mel filterbank energies.
* ``load_features`` reads precomputed features from an FMAT file, e.g. the
  pseudo-phoneme features emitted by the synthetic corpus generator.

FMAT container (little-endian): magic ``FMAT``, u32 version (=1),
u32 frame count T, u32 channel count C, f32 frame rate, then T*C float32
values row-major. A frame rate of zero marks rate-free matrices (used for
things like weight activation maps); resampling requires a positive rate.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    FormatError,
    InsufficientAudioError,
    NonFiniteDataError,
    TruncatedPayloadError,
)

FMAT_MAGIC = b"FMAT"
FMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIf")

LOG_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono waveform with samples scaled to [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("clip must be a non-empty 1-D sample vector")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteDataError("clip contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """A (T, C) feature matrix tagged with its frame rate in Hz."""

    rows: np.ndarray
    frame_rate: float

    def __post_init__(self):
        arr = np.asarray(self.rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"features must be (T, C) with T,C >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteDataError("features contain non-finite values")
        if not (np.isfinite(self.frame_rate) and self.frame_rate >= 0):
            raise ValueError(f"frame rate must be >= 0, got {self.frame_rate}")
        object.__setattr__(self, "rows", arr)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    @property
    def frame_count(self) -> int:
        return self.rows.shape[0]

    @property
    def channels(self) -> int:
        return self.rows.shape[1]


def load_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file. Only 16-bit PCM mono is supported."""
    try:
        with wave.open(str(path), "rb") as handle:
            channels = handle.getnchannels()
            width = handle.getsampwidth()
            comp = handle.getcomptype()
            rate = handle.getframerate()
            raw = handle.readframes(handle.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: not a readable WAVE file ({exc})") from exc
    if channels != 1:
        raise FormatError(f"{path}: expected mono audio, got {channels} channels")
    if width != 2 or comp != "NONE":
        raise FormatError(f"{path}: expected 16-bit PCM, got width={width} comp={comp}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples=samples, sample_rate=rate)


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM mono, clipping to the representable range."""
    ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(clip.sample_rate)
        handle.writeframes(ints.tobytes())


@dataclass(frozen=True)
class MelConfig:
    """Analysis settings for log mel features."""

    window: int = 400
    hop: int = 160
    bands: int = 40
    fmin: float = 0.0
    fmax: float | None = None

    def __post_init__(self):
        if self.window < 2 or self.hop < 1:
            raise ValueError("window must be >= 2 and hop >= 1")
        if self.bands < 1:
            raise ValueError("need at least one mel band")


def _mel_scale(freq):
    return 2595.0 * np.log10(1.0 + np.asarray(freq, dtype=np.float64) / 700.0)


def _mel_inverse(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(sample_rate: int, cfg: MelConfig) -> np.ndarray:
    """The bands+2 edge frequencies in Hz spaced uniformly on the mel scale."""
    fmax = cfg.fmax if cfg.fmax is not None else sample_rate / 2.0
    return _mel_inverse(np.linspace(_mel_scale(cfg.fmin), _mel_scale(fmax), cfg.bands + 2))


def mel_filterbank(sample_rate: int, cfg: MelConfig) -> np.ndarray:
    """Triangular mel filters over rFFT bins, shape (bands, window//2 + 1)."""
    edges = mel_band_edges(sample_rate, cfg)
    bins = np.fft.rfftfreq(cfg.window, d=1.0 / sample_rate)
    bank = np.zeros((cfg.bands, bins.size))
    for b in range(cfg.bands):
        lo, center, hi = edges[b], edges[b + 1], edges[b + 2]
        rising = (bins - lo) / max(center - lo, 1e-12)
        falling = (hi - bins) / max(hi - center, 1e-12)
        bank[b] = np.maximum(0.0, np.minimum(rising, falling))
    return bank

def mel_features(clip: AudioClip, cfg: MelConfig | None = None) -> FeatureSequence:
    """Log mel filterbank energies of a clip.

    Frames start at sample 0 and advance by ``hop``; any trailing samples
    shorter than one hop past the last complete window are ignored. Each
    frame is Hann-windowed, power-spectrum'd, pooled through the mel bank,
    and floored at ``LOG_FLOOR`` before the log, so silence maps to the
    constant log(1e-10).
    """
    cfg = cfg or MelConfig()
    n = clip.samples.size
    if n < cfg.window:
        raise InsufficientAudioError(
            f"clip has {n} samples, analysis window needs {cfg.window}"
        )
    count = 1 + (n - cfg.window) // cfg.hop
    offsets = np.arange(count) * cfg.hop
    frames = clip.samples[offsets[:, None] + np.arange(cfg.window)]
    window = np.hanning(cfg.window)
    spectrum = np.fft.rfft(frames * window, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    energies = power @ mel_filterbank(clip.sample_rate, cfg).T
    rows = np.log(energies + LOG_FLOOR)
    return FeatureSequence(rows=rows, frame_rate=clip.sample_rate / cfg.hop)


def write_features(path, feat: FeatureSequence) -> None:
    """Serialize features to the FMAT container (float32 payload)."""
    t, c = feat.rows.shape
    header = _HEADER.pack(FMAT_MAGIC, FMAT_VERSION, t, c, float(feat.frame_rate))
    payload = np.ascontiguousarray(feat.rows, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_features(path) -> FeatureSequence:
    """Read an FMAT container, validating header, length, and payload."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: header too short ({len(raw)} bytes)")
    magic, version, t, c, rate = _HEADER.unpack_from(raw)
    if magic != FMAT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if t < 1 or c < 1:
        raise FormatError(f"{path}: invalid dimensions T={t} C={c}")
    if not (np.isfinite(rate) and rate >= 0):
        raise FormatError(f"{path}: invalid frame rate {rate}")
    expected = t * c * 4
    body = raw[_HEADER.size:]
    if len(body) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(body)} bytes, header declares {expected}"
        )
    if len(body) > expected:
        raise FormatError(f"{path}: {len(body) - expected} trailing bytes")
    rows = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(t, c)
    if not np.all(np.isfinite(rows)):
        raise NonFiniteDataError(f"{path}: payload contains non-finite values")
    return FeatureSequence(rows=rows, frame_rate=float(rate))


def resample_features(
    feat: FeatureSequence, target_fps: float, target_len: int
) -> FeatureSequence:
    """Linearly interpolate features along time to exactly ``target_len`` rows.

    Output row j samples the input at position j*(T_in-1)/(target_len-1),
    so the first and last rows coincide with the input endpoints. For a
    single output row the first input row is used. Same rate and length in
    and out is an exact identity.
    """
    if target_len < 1:
        raise ValueError(f"target length must be >= 1, got {target_len}")
    if not (np.isfinite(target_fps) and target_fps > 0):
        raise ValueError(f"target fps must be positive, got {target_fps}")
    t_in = feat.frame_count
    if target_len == 1:
        positions = np.zeros(1)
    else:
        positions = np.linspace(0.0, t_in - 1.0, target_len)
    lower = np.floor(positions).astype(np.int64)
    upper = np.minimum(lower + 1, t_in - 1)
    frac = positions - lower
    rows = feat.rows[lower] * (1.0 - frac)[:, None] + feat.rows[upper] * frac[:, None]
    # Exact passthrough where the position lands on an input row.
    exact = frac == 0.0
    rows[exact] = feat.rows[lower[exact]]
    return FeatureSequence(rows=rows, frame_rate=float(target_fps))
