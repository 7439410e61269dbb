"""Synthetic posts and clips for demos and tests.

Nothing here resembles the real corpus beyond its shape: labels, platforms,
emotion scores and embeddings are drawn so that label 1 differs from label 0
by a controllable amount.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .audiofeat import SAMPLE_RATE
from .corpus import EMOTIONS, Corpus, Post

_COMMON = ("la", "el", "de", "en", "que", "y", "los", "las", "por", "con", "dana", "valencia",
           "agua", "calle", "gente", "hoy", "todo", "zona", "pueblo", "coche")
_TRUSTED = ("voluntarios", "ayudar", "tormenta", "inundaciones", "aemet", "aviso", "bulo",
            "falso", "desmentido", "fuentes", "oficial", "informa", "verificado", "alerta")
_DISINFO = ("ocultan", "cadáveres", "presa", "haarp", "verdad", "gobierno", "mienten",
            "parking", "bonaire", "cementerio", "manipulación", "radar", "cruz", "roja")


def make_corpus(n0: int = 40, n1: int = 40, seed: int = 0, separation: float = 0.35,
                platforms=("x", "tiktok"), embedding_dim: int | None = 8,
                audio_dir=None) -> Corpus:
    """Labeled posts with class-dependent vocabulary, emotions and embeddings.

    ``separation`` is the probability that a content word is drawn from the
    post's class vocabulary instead of the other class's. With
    ``audio_dir`` set, a short WAV is written per post whose pitch depends
    on the label.
    """
    rng = np.random.default_rng(seed)
    labels = [0] * n0 + [1] * n1
    posts = []
    for i, lab in enumerate(labels):
        own, other = (_TRUSTED, _DISINFO) if lab == 0 else (_DISINFO, _TRUSTED)
        words = []
        for _ in range(int(rng.integers(8, 25))):
            r = rng.random()
            if r < 0.5:
                words.append(_COMMON[rng.integers(len(_COMMON))])
            elif r < 0.5 + 0.5 * (0.5 + separation):
                words.append(own[rng.integers(len(own))])
            else:
                words.append(other[rng.integers(len(other))])
        if rng.random() < 0.3:
            words.insert(0, "#DANA")
        raw = rng.dirichlet(np.ones(len(EMOTIONS)))
        shift = 0.15 if lab == 1 else 0.0
        raw[EMOTIONS.index("anger")] += shift
        emotions = {name: float(v) for name, v in zip(EMOTIONS, raw / raw.sum())}
        emb = None
        if embedding_dim:
            emb = tuple(float(v) for v in rng.normal(size=embedding_dim))
        audio_path = None
        if audio_dir is not None:
            audio_path = f"{audio_dir}/post{i:04d}.wav"
            f0 = 180.0 if lab == 0 else 140.0
            write_wav(audio_path, speechlike_clip(f0 * (1 + 0.05 * rng.normal()), 1.0, rng))
        posts.append(Post(id=f"p{i:04d}", platform=platforms[i % len(platforms)],
                          text=" ".join(words), label=lab, emotions=emotions,
                          audio_path=audio_path, embedding=emb))
    order = rng.permutation(len(posts))
    return Corpus(tuple(posts[j] for j in order))


def sine(freq: float, seconds: float, amplitude: float = 1.0, sr: int = SAMPLE_RATE) -> np.ndarray:
    t = np.arange(int(round(seconds * sr))) / sr
    return amplitude * np.sin(2 * np.pi * freq * t)


def click_train(bpm: float, seconds: float, sr: int = SAMPLE_RATE, width: int = 50) -> np.ndarray:
    y = np.zeros(int(round(seconds * sr)))
    period = 60.0 / bpm * sr
    start = 0.0
    while start + width <= y.size:
        s = int(round(start))
        y[s:s + width] += np.hanning(width + 2)[1:-1]
        start += period
    return y


def speechlike_clip(f0: float, seconds: float, rng=None, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Harmonic tone with a slow amplitude envelope plus a little noise."""
    rng = np.random.default_rng(0) if rng is None else rng
    t = np.arange(int(round(seconds * sr))) / sr
    y = sum(np.sin(2 * np.pi * f0 * h * t) / h for h in range(1, 6))
    env = 0.5 + 0.5 * np.sin(2 * np.pi * 3.0 * t) ** 2
    y = y * env + 0.02 * rng.standard_normal(t.size)
    return 0.5 * y / np.max(np.abs(y))


def write_wav(path, samples: np.ndarray, sr: int = SAMPLE_RATE, channels: int = 1) -> None:
    """16-bit PCM WAV; ``channels > 1`` duplicates the signal."""
    pcm = np.clip(np.round(np.asarray(samples) * 32767), -32768, 32767).astype(np.int16)
    if channels > 1:
        pcm = np.repeat(pcm[:, None], channels, axis=1)
    wavfile.write(path, sr, pcm)
