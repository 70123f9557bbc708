"""Log-mel filterbank front end for stereo WAV input.

Computes the 80-channel log mel-filterbank features that feed the toy ASR.
All functions are pure; the same input always yields the same output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

from .reps import RepSequence


class AudioError(Exception):
    """Unreadable or unsupported audio input."""


@dataclass(frozen=True)
class StereoSignal:
    samples_left: np.ndarray
    samples_right: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        left = np.asarray(self.samples_left, dtype=np.float64)
        right = np.asarray(self.samples_right, dtype=np.float64)
        if left.ndim != 1 or right.ndim != 1:
            raise AudioError("channels must be 1-D sample sequences")
        if len(left) != len(right):
            raise AudioError("left/right channels differ in length")
        if len(left) == 0:
            raise AudioError("zero-length audio")
        if self.sample_rate_hz <= 0:
            raise AudioError("sample rate must be positive")
        if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
            raise AudioError("non-finite samples")
        object.__setattr__(self, "samples_left", left)
        object.__setattr__(self, "samples_right", right)

    @property
    def n_samples(self) -> int:
        return len(self.samples_left)

    def channel(self, which: str) -> np.ndarray:
        if which == "left":
            return self.samples_left
        if which == "right":
            return self.samples_right
        raise ValueError(f"unknown channel {which!r}")


@dataclass(frozen=True)
class FeatConfig:
    n_mels: int = 80
    window_ms: float = 25.0
    hop_ms: float = 10.0
    fft_size: int | None = None  # None: next power of two >= window samples
    fmin_hz: float = 0.0
    fmax_hz: float | None = None  # None: Nyquist
    log_floor: float = 1e-10

    def validate(self, sr: int) -> None:
        fmax = self.fmax_hz if self.fmax_hz is not None else sr / 2.0
        if self.n_mels <= 0:
            raise ValueError("n_mels must be positive")
        if not (self.fmin_hz < fmax <= sr / 2.0):
            raise ValueError("need fmin_hz < fmax_hz <= sample_rate/2")
        if self.window_ms < self.hop_ms:
            raise ValueError("window_ms must be >= hop_ms")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def window_samples(self, sr: int) -> int:
        return int(round(self.window_ms * sr / 1000.0))

    def hop_samples(self, sr: int) -> int:
        return int(round(self.hop_ms * sr / 1000.0))

    def effective_fft_size(self, sr: int) -> int:
        if self.fft_size is not None:
            if self.fft_size < self.window_samples(sr):
                raise ValueError("fft_size smaller than window")
            return self.fft_size
        n = 1
        while n < self.window_samples(sr):
            n *= 2
        return n


def read_wav(path) -> StereoSignal:
    """Read a 16-bit PCM or 32-bit float WAV as a StereoSignal.

    Mono files are duplicated into both channels; int16 samples are scaled
    by 1/32768 into [-1, 1].
    """
    try:
        sr, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as e:
        raise AudioError(f"unreadable WAV file {path}: {e}") from e
    if data.size == 0:
        raise AudioError(f"zero-length audio in {path}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioError(
            f"unsupported sample format {data.dtype} in {path}; "
            "expected 16-bit PCM or 32-bit float"
        )
    if samples.ndim == 1:
        return StereoSignal(samples, samples.copy(), int(sr))
    if samples.ndim == 2 and samples.shape[1] in (1, 2):
        left = samples[:, 0]
        right = samples[:, -1]
        return StereoSignal(left, right, int(sr))
    raise AudioError(f"unsupported channel layout {samples.shape} in {path}")


def frame_count(n_samples: int, cfg: FeatConfig, sr: int) -> int:
    """Number of analysis frames: floor((n - win)/hop) + 1."""
    win = cfg.window_samples(sr)
    hop = cfg.hop_samples(sr)
    if n_samples < win:
        raise ValueError(f"signal of {n_samples} samples shorter than one {win}-sample window")
    return (n_samples - win) // hop + 1


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatConfig, sr: int) -> np.ndarray:
    """Triangular unit-peak mel filters, (n_mels, fft_size//2 + 1)."""
    cfg.validate(sr)
    n_fft = cfg.effective_fft_size(sr)
    fmax = cfg.fmax_hz if cfg.fmax_hz is not None else sr / 2.0
    mel_pts = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(fmax), cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_hz = np.arange(n_fft // 2 + 1) * sr / n_fft
    fb = np.zeros((cfg.n_mels, len(bin_hz)))
    for k in range(cfg.n_mels):
        lo, ctr, hi = hz_pts[k], hz_pts[k + 1], hz_pts[k + 2]
        up = (bin_hz - lo) / (ctr - lo)
        down = (hi - bin_hz) / (hi - ctr)
        fb[k] = np.maximum(0.0, np.minimum(up, down))
        if not np.any(fb[k] > 0):
            raise ValueError(
                f"mel band {k} covers no FFT bin; increase fft_size or reduce n_mels"
            )
    return fb


def band_centers_hz(cfg: FeatConfig, sr: int) -> np.ndarray:
    fmax = cfg.fmax_hz if cfg.fmax_hz is not None else sr / 2.0
    mel_pts = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(fmax), cfg.n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def logmel(signal_channel: np.ndarray, cfg: FeatConfig, sr: int,
           signal_id: str = "", channel: str = "left") -> RepSequence:
    """Log-mel features for one channel: (frame_count, n_mels) RepSequence.

    Hann-windowed frames, power spectrum, triangular mel filters,
    ln(max(energy, log_floor)).
    """
    cfg.validate(sr)
    x = np.asarray(signal_channel, dtype=np.float64)
    win = cfg.window_samples(sr)
    hop = cfg.hop_samples(sr)
    n_frames = frame_count(len(x), cfg, sr)
    n_fft = cfg.effective_fft_size(sr)
    window = np.hanning(win)
    fb = mel_filterbank(cfg, sr)

    feats = np.empty((n_frames, cfg.n_mels))
    for t in range(n_frames):
        frame = x[t * hop:t * hop + win] * window
        spec = np.abs(np.fft.rfft(frame, n=n_fft)) ** 2
        feats[t] = np.log(np.maximum(fb @ spec, cfg.log_floor))
    return RepSequence(data=feats, level="input", channel=channel, signal_id=signal_id)
