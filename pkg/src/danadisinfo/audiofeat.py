"""Frame-level audio descriptors summarized to per-clip mean and std.

Every feature shares one analysis grid: 22050 Hz mono, 2048-sample frames,
512-sample hop, centered frames (reflect padding), periodic Hann window for
spectra. Families are listed in :data:`FAMILIES`; each contributes
``<name>_mean`` and ``<name>_std`` columns except tempo, which is a single
scalar per clip.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 22050
FRAME_LENGTH = 2048
HOP_LENGTH = 512
N_MELS = 128
N_MFCC = 13
MIN_DURATION = 0.5

ROLLOFF_PERCENT = 0.85
TEMPO_RANGE = (30.0, 300.0)
PITCH_RANGE = (50.0, 2000.0)
VOICING_THRESHOLD = 0.3
# Smallest-lag candidate within this fraction of the strongest peak wins;
# keeps subharmonics (period doubling) from beating the true period.
OCTAVE_TOLERANCE = 0.9
TEMPO_LAG_SMOOTHING = 7
HNR_RANGE = (-10.0, 40.0)
CONTRAST_EDGES = (0.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0)
CONTRAST_QUANTILE = 0.02
EPS = 1e-10

FAMILIES = (
    ["zcr", "rms", "spectral_centroid", "spectral_rolloff", "spectral_bandwidth",
     "spectral_flatness"]
    + [f"chroma{i}" for i in range(1, 13)]
    + [f"mfcc{i}" for i in range(1, N_MFCC + 1)]
    + ["hnr", "tempo", "onset_strength", "pitch"]
    + [f"contrast{i}" for i in range(1, 8)]
    + [f"tonnetz{i}" for i in range(1, 7)]
)
FEATURE_NAMES = tuple(
    name for fam in FAMILIES
    for name in ((fam,) if fam == "tempo" else (f"{fam}_mean", f"{fam}_std"))
)


class AudioFormatError(ValueError):
    """Unsupported or empty WAV data."""


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        y = np.asarray(self.samples, dtype=float).ravel()
        if y.size == 0:
            raise ValueError("audio clip is empty")
        if not np.all(np.isfinite(y)):
            raise ValueError("audio clip has non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", y)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SpectralFrameSeries:
    frames: np.ndarray  # (n_frames, n_bins) magnitudes
    frame_rate: float
    bin_freqs: np.ndarray
    sample_rate: int


def load_wav(path: str | Path, target_rate: int = SAMPLE_RATE) -> AudioClip:
    """Read PCM16 / PCM32 / float WAV, average channels, resample to ``target_rate``."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except ValueError as exc:
        raise AudioFormatError(f"{path}: unsupported WAV encoding ({exc})") from exc
    if data.dtype == np.int16:
        y = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        y = data.astype(float) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        y = data.astype(float)
    else:
        raise AudioFormatError(f"{path}: unsupported sample type {data.dtype}")
    if y.ndim == 2:
        y = y.mean(axis=1)
    if y.size == 0:
        raise AudioFormatError(f"{path}: no audio data")
    if rate != target_rate:
        from scipy.signal import resample_poly  # slow import; only needed here

        g = math.gcd(int(rate), int(target_rate))
        y = resample_poly(y, target_rate // g, rate // g, padtype="edge")
    return AudioClip(y, target_rate)


def frame_signal(y: np.ndarray, frame_length: int = FRAME_LENGTH,
                 hop_length: int = HOP_LENGTH) -> np.ndarray:
    """Centered frames, ``ceil(len(y) / hop)`` of them, shape (n_frames, frame_length).

    Padding reflects the signal; clips shorter than one frame are padded with
    zeros instead.
    """
    y = np.asarray(y, dtype=float)
    n_frames = -(-y.size // hop_length)
    pad = frame_length // 2
    mode = "reflect" if y.size >= frame_length else "constant"
    padded = np.pad(y, pad, mode=mode)
    windows = np.lib.stride_tricks.sliding_window_view(padded, frame_length)
    return windows[::hop_length][:n_frames]


def stft(clip: AudioClip, frame_length: int = FRAME_LENGTH,
         hop_length: int = HOP_LENGTH) -> SpectralFrameSeries:
    frames = frame_signal(clip.samples, frame_length, hop_length)
    window = hann(frame_length)
    mags = np.abs(np.fft.rfft(frames * window, axis=1))
    freqs = np.arange(frame_length // 2 + 1) * clip.sample_rate / frame_length
    return SpectralFrameSeries(mags, clip.sample_rate / hop_length, freqs, clip.sample_rate)


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


# -- spectral shape -------------------------------------------------------

def _safe_div(num, den):
    out = np.zeros_like(num, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def spectral_centroid(S, freqs):
    return _safe_div(S @ freqs, S.sum(axis=1))


def spectral_bandwidth(S, freqs, centroid=None):
    if centroid is None:
        centroid = spectral_centroid(S, freqs)
    dev = (freqs[None, :] - centroid[:, None]) ** 2
    return np.sqrt(_safe_div((S * dev).sum(axis=1), S.sum(axis=1)))


def spectral_rolloff(S, freqs, percent=ROLLOFF_PERCENT):
    total = S.sum(axis=1)
    cum = np.cumsum(S, axis=1)
    idx = np.argmax(cum >= percent * total[:, None], axis=1)
    return np.where(total > 0, freqs[idx], 0.0)


def spectral_flatness(S):
    geo = np.exp(np.mean(np.log(S + EPS), axis=1))
    flat = np.minimum(geo / (S.mean(axis=1) + EPS), 1.0)
    return np.where(S.any(axis=1), flat, 1.0)


# -- mel / cepstrum -------------------------------------------------------

_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = math.log(6.4) / 27.0


def hz_to_mel(f):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=float)
    lin = f / _F_SP
    return np.where(f >= _MIN_LOG_HZ,
                    _MIN_LOG_MEL + np.log(np.maximum(f, EPS) / _MIN_LOG_HZ) / _LOGSTEP, lin)


def mel_to_hz(m):
    m = np.asarray(m, dtype=float)
    return np.where(m >= _MIN_LOG_MEL, _MIN_LOG_HZ * np.exp(_LOGSTEP * (m - _MIN_LOG_MEL)),
                    _F_SP * m)


def mel_filterbank(sample_rate=SAMPLE_RATE, n_fft=FRAME_LENGTH, n_mels=N_MELS,
                   fmin=0.0, fmax=None) -> np.ndarray:
    """Area-normalized triangular filters, shape (n_mels, n_fft // 2 + 1)."""
    if fmax is None:
        fmax = sample_rate / 2.0
    fft_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    return weights


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; ``dct_matrix(n) @ x`` transforms a length-n vector."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    D = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    D[0] /= np.sqrt(2.0)
    return D


def log_mel_spectrogram(S, sample_rate=SAMPLE_RATE, n_mels=N_MELS):
    """Mel power in dB with a 1e-10 power floor, shape (n_frames, n_mels)."""
    fb = mel_filterbank(sample_rate, 2 * (S.shape[1] - 1), n_mels)
    return 10.0 * np.log10(np.maximum((S ** 2) @ fb.T, EPS))


def mfcc(S, sample_rate=SAMPLE_RATE, n_mfcc=N_MFCC, n_mels=N_MELS):
    """Cepstral coefficients 0..n_mfcc-1 of the log mel spectrum."""
    logmel = log_mel_spectrogram(S, sample_rate, n_mels)
    return logmel @ dct_matrix(n_mels)[:n_mfcc].T


# -- pitch class ----------------------------------------------------------

def chroma(S, freqs):
    """12-bin pitch-class energy (C first), L1-normalized per frame.

    The DC bin is skipped; every other bin goes to its nearest equal-tempered
    semitone relative to A440. Frames without energy stay all-zero.
    """
    semis = np.rint(12.0 * np.log2(freqs[1:] / 440.0)).astype(int)
    onehot = np.zeros((freqs.size - 1, 12))
    onehot[np.arange(freqs.size - 1), (semis + 9) % 12] = 1.0
    energy = (S[:, 1:] ** 2) @ onehot
    return _safe_div(energy, energy.sum(axis=1, keepdims=True))


def _tonnetz_basis() -> np.ndarray:
    pc = np.arange(12)
    rows = []
    for radius, angle in ((1.0, 7 * np.pi / 6), (1.0, 3 * np.pi / 2), (0.5, 2 * np.pi / 3)):
        rows.append(radius * np.sin(pc * angle))
        rows.append(radius * np.cos(pc * angle))
    return np.array(rows)


def tonnetz(chroma_frames):
    """Tonal centroid (fifths, minor thirds, major thirds), shape (n_frames, 6)."""
    return chroma_frames @ _tonnetz_basis().T


def spectral_contrast(S, freqs, edges=CONTRAST_EDGES, quantile=CONTRAST_QUANTILE):
    """Peak-minus-valley level in dB for the sub-200 Hz band and six octaves above it."""
    db = 20.0 * np.log10(np.maximum(S, EPS))
    bounds = list(edges) + [np.inf]
    out = np.zeros((S.shape[0], len(edges)))
    for b in range(len(edges)):
        sel = (freqs >= bounds[b]) & (freqs < bounds[b + 1])
        band = np.sort(db[:, sel], axis=1)
        q = max(1, int(round(quantile * band.shape[1])))
        out[:, b] = band[:, -q:].mean(axis=1) - band[:, :q].mean(axis=1)
    return out


# -- rhythm ---------------------------------------------------------------

def onset_envelope(S, sample_rate=SAMPLE_RATE, n_mels=N_MELS):
    """Band-averaged half-wave rectified difference of the log mel spectrogram."""
    logmel = log_mel_spectrogram(S, sample_rate, n_mels)
    env = np.zeros(S.shape[0])
    if S.shape[0] > 1:
        env[1:] = np.maximum(np.diff(logmel, axis=0), 0.0).mean(axis=1)
    return env


def _parabolic_offset(left, mid, right):
    den = left - 2.0 * mid + right
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / den, -0.5, 0.5))


def estimate_tempo(onset_env, frame_rate, bpm_range=TEMPO_RANGE):
    """Tempo in BPM from the onset-envelope autocorrelation.

    The autocorrelation is smoothed over :data:`TEMPO_LAG_SMOOTHING` lags so
    a period that falls between two integer lags is not split across them.
    Within the lag range for ``bpm_range`` the smallest-lag local maximum
    reaching :data:`OCTAVE_TOLERANCE` of the strongest one wins, refined by
    parabolic interpolation. A flat envelope gives 0.
    """
    env = np.asarray(onset_env, dtype=float)
    n = env.size
    lo = max(1, int(math.ceil(60.0 * frame_rate / bpm_range[1])))
    hi = min(int(math.floor(60.0 * frame_rate / bpm_range[0])), n - 2)
    if hi < lo or not np.any(env):
        return 0.0
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    ac = np.fft.irfft(np.abs(np.fft.rfft(env, nfft)) ** 2, nfft)[:n]
    kernel = hann(TEMPO_LAG_SMOOTHING + 1)[1:]
    ac = np.convolve(ac, kernel / kernel.sum(), mode="same")
    lags = np.arange(lo, hi + 1)
    peaks = lags[(ac[lags] > ac[lags - 1]) & (ac[lags] >= ac[lags + 1])]
    if peaks.size == 0 or ac[peaks].max() <= 0:
        return 0.0
    lag = peaks[np.argmax(ac[peaks] >= OCTAVE_TOLERANCE * ac[peaks].max())]
    refined = lag + _parabolic_offset(ac[lag - 1], ac[lag], ac[lag + 1])
    return 60.0 * frame_rate / refined


# -- periodicity ----------------------------------------------------------

def normalized_autocorrelation(frames, max_lag):
    """Per-frame ``sum x[n] x[n+k] / sqrt(E_head(k) E_tail(k))`` for k = 0..max_lag."""
    n = frames.shape[1]
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    ac = np.fft.irfft(np.abs(spec) ** 2, nfft, axis=1)[:, :max_lag + 1]
    sq = np.cumsum(frames ** 2, axis=1)
    total = sq[:, -1:]
    k = np.arange(max_lag + 1)
    head = sq[:, n - 1 - k]
    tail = total - np.concatenate([np.zeros((frames.shape[0], 1)), sq[:, k[1:] - 1]], axis=1)
    den = np.sqrt(head * tail)
    return _safe_div(ac, den)


def pitch_track(frames, sample_rate=SAMPLE_RATE, fmin=PITCH_RANGE[0], fmax=PITCH_RANGE[1],
                threshold=VOICING_THRESHOLD):
    """Per-frame f0 and peak correlation; unvoiced frames get nan.

    Returns ``(f0, peak)`` arrays. A frame is voiced when some local maximum
    of its normalized autocorrelation within the lag range reaches
    ``threshold``.
    """
    lag_lo = max(2, int(math.floor(sample_rate / fmax)))
    lag_hi = int(math.ceil(sample_rate / fmin))
    r = normalized_autocorrelation(frames, lag_hi + 1)
    mid = r[:, lag_lo:lag_hi + 1]
    is_peak = (mid > r[:, lag_lo - 1:lag_hi]) & (mid >= r[:, lag_lo + 1:lag_hi + 2])
    f0 = np.full(frames.shape[0], np.nan)
    peak = np.full(frames.shape[0], np.nan)
    for t in range(frames.shape[0]):
        cand = np.flatnonzero(is_peak[t])
        if cand.size == 0:
            continue
        vals = mid[t, cand]
        best = vals.max()
        if best < threshold:
            continue
        i = cand[np.argmax(vals >= max(threshold, OCTAVE_TOLERANCE * best))]
        lag = lag_lo + i
        off = _parabolic_offset(r[t, lag - 1], r[t, lag], r[t, lag + 1])
        f0[t] = sample_rate / (lag + off)
        peak[t] = min(1.0, r[t, lag] - 0.25 * (r[t, lag - 1] - r[t, lag + 1]) * off)
    return f0, peak


def harmonics_to_noise(peak):
    """``10 log10(r / (1 - r))`` per voiced frame, clamped to [-10, 40] dB."""
    r = np.asarray(peak, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        hnr = 10.0 * np.log10(r / (1.0 - r))
    hnr = np.where(r >= 1.0, HNR_RANGE[1], hnr)
    return np.clip(hnr, *HNR_RANGE)


# -- summary --------------------------------------------------------------

def _summary(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0, 0.0
    return float(values.mean()), float(values.std())


def frame_features(clip: AudioClip) -> dict[str, np.ndarray]:
    """Frame-level descriptor tracks keyed by family name (tempo excluded)."""
    frames = frame_signal(clip.samples)
    spec = stft(clip)
    S, freqs = spec.frames, spec.bin_freqs
    neg = frames < 0
    tracks = {
        "zcr": np.count_nonzero(neg[:, 1:] != neg[:, :-1], axis=1) / frames.shape[1],
        "rms": np.sqrt(np.mean(frames ** 2, axis=1)),
    }
    centroid = spectral_centroid(S, freqs)
    tracks["spectral_centroid"] = centroid
    tracks["spectral_rolloff"] = spectral_rolloff(S, freqs)
    tracks["spectral_bandwidth"] = spectral_bandwidth(S, freqs, centroid)
    tracks["spectral_flatness"] = spectral_flatness(S)
    chroma_frames = chroma(S, freqs)
    for i in range(12):
        tracks[f"chroma{i + 1}"] = chroma_frames[:, i]
    cep = mfcc(S, clip.sample_rate)
    for i in range(N_MFCC):
        tracks[f"mfcc{i + 1}"] = cep[:, i]
    f0, peak = pitch_track(frames, clip.sample_rate)
    voiced = ~np.isnan(f0)
    tracks["pitch"] = f0[voiced]
    tracks["hnr"] = harmonics_to_noise(peak[voiced])
    tracks["onset_strength"] = onset_envelope(S, clip.sample_rate)
    contrast = spectral_contrast(S, freqs)
    for i in range(contrast.shape[1]):
        tracks[f"contrast{i + 1}"] = contrast[:, i]
    tz = tonnetz(chroma_frames)
    for i in range(6):
        tracks[f"tonnetz{i + 1}"] = tz[:, i]
    tracks["_frame_rate"] = np.array([spec.frame_rate])
    return tracks


def extract_features(clip: AudioClip) -> dict[str, float]:
    """Feature vector for one clip, keys in :data:`FEATURE_NAMES` order."""
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {clip.sample_rate}; use load_wav")
    if clip.duration < MIN_DURATION:
        raise ValueError(f"clip is {clip.duration:.3f} s; at least {MIN_DURATION} s required")
    tracks = frame_features(clip)
    frame_rate = float(tracks.pop("_frame_rate")[0])
    out = {}
    for fam in FAMILIES:
        if fam == "tempo":
            out["tempo"] = float(estimate_tempo(tracks["onset_strength"], frame_rate))
            continue
        out[f"{fam}_mean"], out[f"{fam}_std"] = _summary(tracks[fam])
    return out


@dataclass
class AudioTable:
    rows: dict[str, dict[str, float]] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    def summary(self) -> str:
        lines = [f"{len(self.rows)} clips extracted, {len(self.failures)} failed"]
        lines += [f"  {pid}: {msg}" for pid, msg in sorted(self.failures.items())]
        return "\n".join(lines)


def _extract_one(path):
    return extract_features(load_wav(path))


def summarize_corpus_audio(corpus, workers: int = 1,
                           base_dir: str | Path | None = None) -> AudioTable:
    """Extract features for every post with an ``audio_path``.

    Relative paths resolve against ``base_dir``. A file that fails to load or
    extract is recorded in ``failures`` and the run continues.
    """
    jobs = {}
    for post in corpus:
        if post.audio_path is None:
            continue
        path = Path(post.audio_path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        jobs[post.id] = path
    table = AudioTable()
    if not jobs:
        warnings.warn("no posts with audio; audio table is empty", stacklevel=2)
        return table
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = {pid: pool.submit(_extract_one, path) for pid, path in jobs.items()}
        for pid, fut in futures.items():
            try:
                table.rows[pid] = fut.result()
            except Exception as exc:  # noqa: BLE001 - batch runs keep going
                table.failures[pid] = f"{type(exc).__name__}: {exc}"
    return table


def write_audio_csv(rows: Mapping[str, Mapping[str, float]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["post_id", *FEATURE_NAMES])
        for pid in sorted(rows):
            writer.writerow([pid, *(repr(float(rows[pid][name])) for name in FEATURE_NAMES)])


def read_audio_csv(path: str | Path) -> dict[str, dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return {row.pop("post_id"): {k: float(v) for k, v in row.items()} for row in reader}
