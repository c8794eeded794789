"""Audio front end: framing, MFCC extraction, normalization, synthetic
pseudo-languages and the MFC1 frame file format."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft
from scipy.io import wavfile

from .errors import (
    FormatError,
    InsufficientData,
    SignalTooShort,
    UnknownProfile,
    VocdevError,
)

SAMPLE_RATE = 16000
N_MFCC = 20

FRAME_MAGIC = b"MFC1"
_FRAME_HEADER = struct.Struct("<4sII")


@dataclass(frozen=True)
class FeatureConfig:
    n_fft: int = 1024
    hop: int = 512
    n_mels: int = 40
    n_mfcc: int = N_MFCC
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_fft < 1 or self.hop < 1:
            raise ValueError("n_fft and hop must be positive")
        if self.hop > self.n_fft:
            raise ValueError(f"hop ({self.hop}) must not exceed n_fft ({self.n_fft})")
        if self.n_mfcc > self.n_mels:
            raise ValueError(f"n_mfcc ({self.n_mfcc}) must not exceed n_mels ({self.n_mels})")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate != SAMPLE_RATE:
            raise VocdevError(f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise VocdevError("audio must be mono (1-D sample array)")
        if self.samples.size == 0:
            raise VocdevError("audio clip is empty")
        if not np.all(np.isfinite(self.samples)):
            raise VocdevError("audio contains non-finite samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def frame_count(n_samples: int, n_fft: int, hop: int) -> int:
    if n_samples < n_fft:
        return 0
    return 1 + (n_samples - n_fft) // hop


def frame_signal(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Cut the clip into Hann-windowed frames lying fully inside the signal.

    Returns an array of shape (n_frames, n_fft).
    """
    x = clip.samples
    if x.size < cfg.n_fft:
        raise SignalTooShort(f"{x.size} samples is shorter than n_fft={cfg.n_fft}")
    n = frame_count(x.size, cfg.n_fft, cfg.hop)
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.n_fft)[:: cfg.hop][:n]
    return frames * hann_window(cfg.n_fft)


def hann_window(n: int) -> np.ndarray:
    # periodic Hann, the usual choice for spectral analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(n_mels: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Edge points (n_mels + 2) equally spaced on the mel scale from 0 Hz to Nyquist."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))


def mel_filterbank(n_mels: int = 40, n_fft: int = 1024, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular, area-normalized mel filters of shape (n_mels, n_fft // 2 + 1)."""
    edges = mel_center_frequencies(n_mels, sample_rate)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb *= 2.0 / (upper - lower)
    return fb


def dct_ortho(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return scipy.fft.dct(x, type=2, norm="ortho", axis=axis)


def idct_ortho(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return scipy.fft.idct(x, type=2, norm="ortho", axis=axis)


def power_spectrum(frames: np.ndarray) -> np.ndarray:
    return np.abs(np.fft.rfft(frames, axis=-1)) ** 2


def log_mel_energies(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    frames = frame_signal(clip, cfg)
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, clip.sample_rate)
    energies = power_spectrum(frames) @ fb.T
    return np.log(np.maximum(energies, cfg.log_floor))


def mfcc(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Un-normalized MFCC frames, shape (n_frames, n_mfcc)."""
    return dct_ortho(log_mel_energies(clip, cfg))[:, : cfg.n_mfcc]


# --- normalization -----------------------------------------------------------


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-D arrays of equal length")

    def normalize(self, frames: np.ndarray) -> np.ndarray:
        return (np.asarray(frames, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, frames: np.ndarray) -> np.ndarray:
        return np.asarray(frames, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))

    @classmethod
    def identity(cls, dim: int = N_MFCC) -> "NormalizationStats":
        return cls(np.zeros(dim), np.ones(dim))


def fit_normalization(frames: np.ndarray, min_std: float = 1e-8) -> NormalizationStats:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 2:
        raise InsufficientData("need at least 2 frames to fit normalization")
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    std = np.where(std < min_std, 1.0, std)
    return NormalizationStats(mean, std)


# --- synthetic pseudo-languages ----------------------------------------------

# Each profile draws its partials from its own formant inventory. Inventories
# are disjoint so the resulting corpora are spectrally separable.
PROFILES: dict[str, dict] = {
    "profileA": {
        "formants": (310.0, 540.0, 860.0, 1240.0, 1850.0, 2500.0, 3250.0),
        "damping": (8.0, 30.0),
    },
    # B and C share some formants with A, as related languages share phones
    "profileB": {
        "formants": (310.0, 700.0, 860.0, 1520.0, 1850.0, 2900.0, 3250.0),
        "damping": (4.0, 20.0),
    },
    "profileC": {
        "formants": (310.0, 620.0, 960.0, 1240.0, 2150.0, 2500.0, 3600.0),
        "damping": (12.0, 40.0),
    },
}


def resolve_profile(profile: str) -> str:
    if profile in PROFILES:
        return profile
    alias = f"profile{profile}"
    if alias in PROFILES:
        return alias
    raise UnknownProfile(f"unknown synthetic profile {profile!r}; known: {sorted(PROFILES)}")


def synth_pseudo_language(seed: int, profile: str, duration: float) -> AudioClip:
    """Deterministic pseudo-speech: 50-200 ms segments of 2-3 damped sinusoids."""
    name = resolve_profile(profile)
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    spec = PROFILES[name]
    formants = np.array(spec["formants"])
    d_lo, d_hi = spec["damping"]
    rng = np.random.default_rng([int(seed), sorted(PROFILES).index(name)])

    total = int(round(duration * SAMPLE_RATE))
    pieces = []
    produced = 0
    while produced < total:
        n = int(rng.uniform(0.05, 0.2) * SAMPLE_RATE)
        t = np.arange(n) / SAMPLE_RATE
        k = rng.integers(2, 4)
        freqs = rng.choice(formants, size=k, replace=False) * (1.0 + 0.02 * rng.standard_normal(k))
        amps = rng.uniform(0.2, 1.0, size=k)
        decay = rng.uniform(d_lo, d_hi, size=k)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=k)
        seg = np.sum(
            amps[:, None] * np.exp(-decay[:, None] * t) * np.sin(2.0 * np.pi * freqs[:, None] * t + phase[:, None]),
            axis=0,
        )
        seg *= 0.5 / max(np.max(np.abs(seg)), 1e-12)
        pieces.append(seg)
        produced += n
    samples = np.concatenate(pieces)[:total]
    samples = samples + 0.003 * rng.standard_normal(total)
    return AudioClip(np.clip(samples, -1.0, 1.0), SAMPLE_RATE)


# --- WAV input ----------------------------------------------------------------


def read_wav(path) -> AudioClip:
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise VocdevError(f"{path}: stereo/multichannel audio is not supported (got {data.shape[1]} channels)")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise VocdevError(f"{path}: unsupported WAV sample type {data.dtype}; need PCM16 or float32")
    return AudioClip(samples, rate)


def write_wav(path, clip: AudioClip) -> None:
    wavfile.write(path, clip.sample_rate, clip.samples.astype(np.float32))


# --- MFC1 frame files ----------------------------------------------------------


def write_frames(frames, path, dim: int = N_MFCC) -> None:
    arr = np.asarray(frames, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, dim)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise FormatError(f"frames must have shape (n, {dim}), got {arr.shape}")
    payload = arr.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_FRAME_HEADER.pack(FRAME_MAGIC, arr.shape[0], dim))
        fh.write(payload)


def read_frames(path, dim: int = N_MFCC) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _FRAME_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, count, file_dim = _FRAME_HEADER.unpack_from(raw)
    if magic != FRAME_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if file_dim != dim:
        raise FormatError(f"{path}: dimension {file_dim}, expected {dim}")
    expected = _FRAME_HEADER.size + 4 * count * dim
    if len(raw) != expected:
        raise FormatError(f"{path}: size {len(raw)} does not match header ({expected})")
    data = np.frombuffer(raw, dtype="<f4", offset=_FRAME_HEADER.size)
    return data.reshape(count, dim).astype(np.float64)


# --- dataset manifest -----------------------------------------------------------


@dataclass
class ManifestEntry:
    language: str
    role: str
    path: str

    def __post_init__(self):
        if not self.language:
            raise FormatError("manifest entry has an empty language tag")
        if self.role not in ("train", "test"):
            raise FormatError(f"manifest role must be 'train' or 'test', got {self.role!r}")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    normalization: NormalizationStats | None = None
    root: Path = field(default_factory=Path)

    def languages(self, role: str | None = None) -> list[str]:
        seen = []
        for e in self.entries:
            if (role is None or e.role == role) and e.language not in seen:
                seen.append(e.language)
        return seen

    def paths(self, language: str, role: str) -> list[Path]:
        return [self.root / e.path for e in self.entries if e.language == language and e.role == role]

    def load_frames(self, language: str, role: str) -> np.ndarray:
        """Raw (un-normalized) frames for one language/role, concatenated."""
        paths = self.paths(language, role)
        if not paths:
            return np.zeros((0, N_MFCC))
        return np.concatenate([read_frames(p) for p in paths], axis=0)

    def to_dict(self) -> dict:
        d = {"entries": [{"language": e.language, "role": e.role, "path": e.path} for e in self.entries]}
        if self.normalization is not None:
            d.update(self.normalization.to_dict())
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from exc
        entries = [ManifestEntry(e["language"], e["role"], e["path"]) for e in d.get("entries", [])]
        norm = None
        if "mean" in d and "std" in d:
            norm = NormalizationStats.from_dict(d)
        return cls(entries, norm, path.parent)
