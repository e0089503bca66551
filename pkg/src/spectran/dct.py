"""Orthonormal DCT-II / DCT-III transforms and spectral sequence downsampling.

The fast path shuffles the signal (even positions ascending, then odd
positions descending), runs a mixed-radix FFT and recombines real and
imaginary parts with a per-bin rotation. Works for any length N >= 1,
not just powers of two.

All transforms operate along the last axis, so a [batch, dim, time]
layout can be processed in one vectorized call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIGH_FREQUENCY_CUT = "high-frequency-cut"
LOW_FREQUENCY_CUT = "low-frequency-cut"
TOP_AMPLITUDE = "top-amplitude"

TRUNCATION_STRATEGIES = (HIGH_FREQUENCY_CUT, LOW_FREQUENCY_CUT, TOP_AMPLITUDE)


@dataclass(frozen=True)
class DctPlan:
    """Precomputed tables for one transform length. Immutable and shareable."""

    length: int
    permutation: np.ndarray      # even indices ascending, then odd descending
    inverse_permutation: np.ndarray
    cos_table: np.ndarray        # cos(pi*k / 2N)
    sin_table: np.ndarray        # sin(pi*k / 2N)
    alpha: np.ndarray            # sqrt(1/N) for k=0, sqrt(2/N) otherwise


@dataclass
class SpectrumTensor:
    """DCT coefficients [batch, freq, dim] plus the pre-truncation length."""

    coeffs: np.ndarray
    source_length: int
    kept_bins: np.ndarray | None = None  # set once truncated

    @property
    def num_bins(self) -> int:
        return self.coeffs.shape[1]


def build_plan(n: int) -> DctPlan:
    """Build the shuffle permutation and rotation tables for length ``n``."""
    if n < 1:
        raise ValueError(f"transform length must be >= 1, got {n}")
    evens = np.arange(0, n, 2)
    odds = np.arange(1, n, 2)[::-1]
    permutation = np.concatenate([evens, odds])
    inverse = np.empty(n, dtype=np.int64)
    inverse[permutation] = np.arange(n)
    k = np.arange(n)
    theta = np.pi * k / (2.0 * n)
    alpha = np.full(n, np.sqrt(2.0 / n))
    alpha[0] = np.sqrt(1.0 / n)
    return DctPlan(
        length=n,
        permutation=permutation,
        inverse_permutation=inverse,
        cos_table=np.cos(theta),
        sin_table=np.sin(theta),
        alpha=alpha,
    )


def _check_input(x, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    if x.shape[-1] < 1:
        raise ValueError(f"{name} must have at least one sample")
    return x


def dct_naive(x) -> np.ndarray:
    """O(N^2) orthonormal DCT-II along the last axis; the correctness oracle."""
    x = _check_input(np.asarray(x, dtype=np.float64), "input")
    n = x.shape[-1]
    k = np.arange(n)[:, None]
    nn = np.arange(n)[None, :]
    basis = np.cos(np.pi * k * (2 * nn + 1) / (2.0 * n))
    alpha = np.full(n, np.sqrt(2.0 / n))
    alpha[0] = np.sqrt(1.0 / n)
    return np.einsum("kn,...n->...k", alpha[:, None] * basis, x)


def idct_naive(y) -> np.ndarray:
    """O(N^2) orthonormal DCT-III (inverse of :func:`dct_naive`) along the last axis."""
    y = _check_input(np.asarray(y, dtype=np.float64), "input")
    n = y.shape[-1]
    k = np.arange(n)[:, None]
    nn = np.arange(n)[None, :]
    basis = np.cos(np.pi * k * (2 * nn + 1) / (2.0 * n))
    alpha = np.full(n, np.sqrt(2.0 / n))
    alpha[0] = np.sqrt(1.0 / n)
    return np.einsum("kn,...k->...n", alpha[:, None] * basis, y)


def dct_fft(x, plan: DctPlan | None = None) -> np.ndarray:
    """Fast orthonormal DCT-II along the last axis via shuffle + FFT + rotation."""
    x = _check_input(np.asarray(x), "input")
    n = x.shape[-1]
    if plan is None:
        plan = build_plan(n)
    elif plan.length != n:
        raise ValueError(f"plan is for length {plan.length}, input has length {n}")
    u = x[..., plan.permutation]
    v = np.fft.fft(u, axis=-1)
    # equal to cos*Re(v') - sin*Im(v') under the opposite FFT sign convention
    y = plan.alpha * (plan.cos_table * v.real + plan.sin_table * v.imag)
    return y.astype(x.dtype, copy=False) if x.dtype != np.float64 else y


def idct_fft(y, plan: DctPlan | None = None) -> np.ndarray:
    """Fast inverse of :func:`dct_fft`: undo the rotation, inverse FFT, unshuffle."""
    y = _check_input(np.asarray(y), "input")
    n = y.shape[-1]
    if plan is None:
        plan = build_plan(n)
    elif plan.length != n:
        raise ValueError(f"plan is for length {plan.length}, input has length {n}")
    c = y / plan.alpha
    # Hermitian symmetry of the shuffled real signal gives Im(W_k) = -C_{N-k}
    w_imag = np.zeros_like(c, dtype=np.float64)
    if n > 1:
        w_imag[..., 1:] = -c[..., :0:-1]
    rot = plan.cos_table + 1j * plan.sin_table
    v = rot * (c + 1j * w_imag)
    u = np.fft.ifft(v, axis=-1).real
    x = np.empty_like(u)
    x[..., plan.permutation] = u
    return x.astype(y.dtype, copy=False) if y.dtype != np.float64 else x


def dct_time(h: np.ndarray, plan: DctPlan | None = None) -> SpectrumTensor:
    """DCT of a [batch, time, dim] tensor along the time axis only."""
    h = np.asarray(h)
    if h.ndim != 3:
        raise ValueError(f"expected [batch, time, dim], got shape {h.shape}")
    n = h.shape[1]
    coeffs = np.swapaxes(dct_fft(np.swapaxes(h, 1, 2), plan), 1, 2)
    return SpectrumTensor(coeffs=coeffs, source_length=n)


def idct_time(s: np.ndarray, plan: DctPlan | None = None) -> np.ndarray:
    """Inverse DCT of [batch, freq, dim] coefficients along the frequency axis."""
    s = np.asarray(s)
    return np.swapaxes(idct_fft(np.swapaxes(s, 1, 2), plan), 1, 2)


def retained_bins(n: int, r: float) -> int:
    """Number of frequency bins kept at retaining ratio ``r``: ceil(r*N)."""
    if not 0.0 < r <= 1.0:
        raise ValueError(f"retaining ratio must be in (0, 1], got {r}")
    return int(np.ceil(r * n))


def truncate_spectrum(s: SpectrumTensor, r: float,
                      strategy: str = HIGH_FREQUENCY_CUT) -> SpectrumTensor:
    """Keep ceil(r*N) frequency bins of an untruncated spectrum."""
    if strategy not in TRUNCATION_STRATEGIES:
        raise ValueError(f"unknown truncation strategy {strategy!r}")
    if s.num_bins != s.source_length:
        raise ValueError("spectrum was already truncated")
    n = s.source_length
    m = retained_bins(n, r)
    if strategy == HIGH_FREQUENCY_CUT:
        kept = np.arange(m)
    elif strategy == LOW_FREQUENCY_CUT:
        kept = np.arange(n - m, n)
    else:
        score = np.abs(s.coeffs).mean(axis=(0, 2))
        kept = np.sort(np.argsort(-score, kind="stable")[:m])
    return SpectrumTensor(coeffs=s.coeffs[:, kept, :], source_length=n,
                          kept_bins=kept)


def select_bins(n: int, r: float, strategy: str,
                coeffs: np.ndarray | None = None) -> np.ndarray:
    """Indices of the bins a truncation would keep, without materializing it."""
    if strategy not in TRUNCATION_STRATEGIES:
        raise ValueError(f"unknown truncation strategy {strategy!r}")
    m = retained_bins(n, r)
    if strategy == HIGH_FREQUENCY_CUT:
        return np.arange(m)
    if strategy == LOW_FREQUENCY_CUT:
        return np.arange(n - m, n)
    if coeffs is None:
        raise ValueError("top-amplitude selection needs the coefficients")
    score = np.abs(coeffs).mean(axis=(0, 2))
    return np.sort(np.argsort(-score, kind="stable")[:m])


def spectral_downsample(h: np.ndarray, r: float,
                        strategy: str = HIGH_FREQUENCY_CUT,
                        plan: DctPlan | None = None,
                        out_plan: DctPlan | None = None) -> np.ndarray:
    """Shorten a [batch, time, dim] tensor along time: DCT, truncate, inverse DCT.

    Retained coefficients are rescaled by sqrt(M'/N) so that constants and
    pure retained DCT tones keep their time-domain amplitude at the shorter
    length.
    """
    h = np.asarray(h)
    if h.ndim != 3:
        raise ValueError(f"expected [batch, time, dim], got shape {h.shape}")
    if h.shape[1] < 1:
        raise ValueError("time axis must be nonempty")
    out, _ = spectral_downsample_with_bins(h, r, strategy, plan, out_plan)
    return out


def spectral_downsample_with_bins(h: np.ndarray, r: float,
                                  strategy: str = HIGH_FREQUENCY_CUT,
                                  plan: DctPlan | None = None,
                                  out_plan: DctPlan | None = None):
    """Like :func:`spectral_downsample` but also returns the kept bin indices."""
    n = h.shape[1]
    spec = dct_time(h, plan)
    trunc = truncate_spectrum(spec, r, strategy)
    m = trunc.num_bins
    scale = np.sqrt(m / n)
    out = idct_time(trunc.coeffs * scale, out_plan)
    return out, trunc.kept_bins


def spectral_upsample_adjoint(g: np.ndarray, kept: np.ndarray, n: int,
                              plan: DctPlan | None = None,
                              out_plan: DctPlan | None = None) -> np.ndarray:
    """Transpose of the downsampling map, used as its gradient.

    The filter is linear; with the orthonormal DCT its transpose is a DCT at
    the short length, the same sqrt(M'/N) rescale, scatter into the kept
    bins, and an inverse DCT at the original length.
    """
    g = np.asarray(g)
    m = g.shape[1]
    spec = dct_time(g, plan).coeffs * np.sqrt(m / n)
    full = np.zeros((g.shape[0], n, g.shape[2]), dtype=spec.dtype)
    full[:, kept, :] = spec
    return idct_time(full, out_plan)


def power_spectrum(h_stream) -> np.ndarray:
    """Mean Fourier amplitude per frequency bin of [batch, time, dim] tensors.

    Amplitudes are averaged over batches, hidden dimensions and the whole
    stream; only the nonnegative-frequency half is returned.
    """
    total = None
    count = 0
    shape = None
    for h in h_stream:
        h = np.asarray(h)
        if h.ndim != 3:
            raise ValueError(f"expected [batch, time, dim], got shape {h.shape}")
        if shape is None:
            shape = h.shape[1:]
        elif h.shape[1:] != shape:
            raise ValueError(
                f"inconsistent shapes in stream: {h.shape[1:]} vs {shape}")
        amp = np.abs(np.fft.rfft(h, axis=1))
        contrib = amp.sum(axis=(0, 2))
        total = contrib if total is None else total + contrib
        count += h.shape[0] * h.shape[2]
    if total is None:
        raise ValueError("empty stream")
    return total / count


def spectral_centroid(curve) -> float:
    """Amplitude-weighted mean frequency bin; lower = more low-frequency energy."""
    curve = np.asarray(curve, dtype=np.float64)
    if curve.size == 0:
        raise ValueError("empty amplitude curve")
    if np.any(curve < 0):
        raise ValueError("amplitude curve must be nonnegative")
    mass = curve.sum()
    if mass == 0:
        raise ZeroDivisionError("centroid undefined for an all-zero curve")
    return float((np.arange(curve.size) * curve).sum() / mass)
