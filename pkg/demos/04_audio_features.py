"""Per-clip acoustic summaries on controlled signals."""
import time

import numpy as np

from danadisinfo.audiofeat import AudioClip, FEATURE_NAMES, SAMPLE_RATE, extract_features
from danadisinfo.synthetic import click_train, sine, speechlike_clip

print(len(FEATURE_NAMES), "features per clip")

# A pure tone: the zero-crossing rate is twice the frequency over the
# sample rate, the centroid and pitch sit on 440 Hz, and rms is 1/sqrt(2).
t0 = time.perf_counter()
f = extract_features(AudioClip(sine(440.0, 3.0), SAMPLE_RATE))
print(f"extracted in {time.perf_counter() - t0:.3f} s")
for name in ("zcr_mean", "rms_mean", "spectral_centroid_mean", "pitch_mean",
             "spectral_flatness_mean", "chroma10_mean"):
    print(f"  {name:24s} {f[name]:.4f}")
print("  expected zcr", 2 * 440 / SAMPLE_RATE)

# White noise is spectrally flat and unvoiced
noise = extract_features(AudioClip(0.3 * np.random.default_rng(0).standard_normal(2 * SAMPLE_RATE)))
print("noise flatness", round(noise["spectral_flatness_mean"], 3), "hnr", noise["hnr_mean"])

# Click trains check the tempo estimator
for bpm in (72, 120, 170):
    print(bpm, "BPM ->", round(extract_features(AudioClip(click_train(bpm, 8.0)))["tempo"], 2))

# A harmonic voice-like tone: pitch follows f0, energy sits in the harmonics
voice = speechlike_clip(150.0, 2.0)
v = extract_features(AudioClip(voice))
print("pitch", round(v["pitch_mean"], 2), "hnr", round(v["hnr_mean"], 1),
      "mfcc1", round(v["mfcc1_mean"], 1))

# Scaling the waveform by c only moves mfcc1, by 20 log10(c) sqrt(n_mels);
# the rest of the cepstrum is level-free
quiet = extract_features(AudioClip(0.25 * voice))
print("mfcc1 shift", round(quiet["mfcc1_mean"] - v["mfcc1_mean"], 3),
      "expected", round(20 * np.log10(0.25) * np.sqrt(128), 3),
      "mfcc2 shift", abs(quiet["mfcc2_mean"] - v["mfcc2_mean"]))
