"""The spectral filter: shorten a hidden sequence without losing its gist.

A [batch, time, dim] tensor is DCT-transformed along time, the top
ceil(r*N) low-frequency bins are kept, and an inverse DCT at the shorter
length produces a downsampled sequence. Constants and slow trends pass
through unchanged; high-frequency jitter is discarded.
"""

import numpy as np

from spectran import dct

rng = np.random.default_rng(1)

n, r = 512, 0.2
m = dct.retained_bins(n, r)
print(f"length {n} at retaining ratio {r} -> {m} positions")

# a slow trend plus jitter, as one "hidden dimension"
t = np.arange(n)
trend = np.tanh((t - n / 2) / 100.0)
h = (trend + 0.1 * rng.standard_normal(n))[None, :, None]

short = dct.spectral_downsample(h, r)
print("input shape:", h.shape, "-> output shape:", short.shape)

# the shorter sequence still follows the trend
resampled_trend = np.tanh((np.linspace(0, n, m) - n / 2) / 100.0)
err = np.abs(short[0, :, 0] - resampled_trend).max()
print("max deviation from the underlying trend:", round(float(err), 3))

# constants are preserved exactly at any ratio
const = np.full((1, n, 1), 3.25)
out = dct.spectral_downsample(const, 0.1)
print("constant input stays constant:", float(out.min()), float(out.max()))

# alternative truncation strategies
spec = dct.dct_time(h)
for strategy in dct.TRUNCATION_STRATEGIES:
    kept = dct.truncate_spectrum(spec, 0.1, strategy).kept_bins
    print(f"{strategy}: keeps bins {kept[:4].tolist()}...{kept[-2:].tolist()}")
