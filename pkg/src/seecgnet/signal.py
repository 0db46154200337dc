"""Fourier-domain signal tools: discrete transform and length resampling.

The transform is built in: a radix-2 split runs in O(n log n) whenever the
length keeps halving evenly, with a direct O(n^2) summation at odd lengths.
Resampling truncates or zero-pads the spectrum symmetrically about DC,
keeping Hermitian symmetry (splitting or folding the Nyquist bin), so a real
input always yields a real output and band-limited content survives exactly.
"""

from __future__ import annotations

import numpy as np

# Direct-summation fallback processes output bins in chunks of this many rows
# so odd-length transforms stay memory-bounded.
_DIRECT_CHUNK = 512


def _direct_dft(x: np.ndarray, sign: float) -> np.ndarray:
    n = x.shape[0]
    out = np.empty(n, dtype=np.complex128)
    k = np.arange(n)
    for start in range(0, n, _DIRECT_CHUNK):
        j = np.arange(start, min(start + _DIRECT_CHUNK, n))
        out[j] = np.exp(sign * 2j * np.pi * np.outer(j, k) / n) @ x
    return out


def _fft_rec(x: np.ndarray, sign: float) -> np.ndarray:
    n = x.shape[0]
    if n == 1:
        return x.copy()
    if n % 2:
        return _direct_dft(x, sign)
    even = _fft_rec(x[0::2], sign)
    odd = _fft_rec(x[1::2], sign)
    twiddled = np.exp(sign * 2j * np.pi * np.arange(n // 2) / n) * odd
    return np.concatenate([even + twiddled, even - twiddled])


def dft(x) -> np.ndarray:
    """Forward discrete Fourier transform of a 1-d sequence.

    Returns the length-n complex spectrum X[j] = sum_k x[k] e^{-2 pi i j k / n}.
    """
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] == 0:
        raise ValueError(f"dft: input must be a non-empty 1-d sequence, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("dft: input contains non-finite samples")
    return _fft_rec(x.astype(np.complex128), -1.0)


def idft(spectrum) -> np.ndarray:
    """Inverse transform; ``idft(dft(x))`` reproduces x to round-off."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    if spectrum.ndim != 1 or spectrum.shape[0] == 0:
        raise ValueError("idft: input must be a non-empty 1-d sequence")
    return _fft_rec(spectrum, +1.0) / spectrum.shape[0]


def fourier_resample(x, target_len: int) -> np.ndarray:
    """Resample a real signal to ``target_len`` points through its spectrum.

    The output is the trigonometric interpolant of the input evaluated on the
    new grid: amplitudes (not energy) are preserved, the DC component is kept
    exactly, and frequencies at or above the new Nyquist limit are dropped.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"fourier_resample: input must be 1-d, got shape {x.shape}")
    n = x.shape[0]
    m = int(target_len)
    if m < 2:
        raise ValueError(f"fourier_resample: target length must be >= 2, got {m}")
    if n < 1:
        raise ValueError("fourier_resample: input is empty")

    spectrum = dft(x)
    resized = np.zeros(m, dtype=np.complex128)
    if m >= n:
        keep_pos = (n + 1) // 2  # DC plus strictly positive bins (Nyquist excluded)
        resized[:keep_pos] = spectrum[:keep_pos]
        neg = n // 2 - (1 if n % 2 == 0 else 0)
        if neg > 0:
            resized[m - neg:] = spectrum[n - neg:]
        if n % 2 == 0:
            nyq = spectrum[n // 2]
            if m > n:
                # The shared cosine coefficient splits across +/- Nyquist.
                resized[n // 2] += 0.5 * nyq
                resized[m - n // 2] += 0.5 * nyq
            else:
                resized[n // 2] = nyq
    else:
        keep_pos = (m + 1) // 2
        resized[:keep_pos] = spectrum[:keep_pos]
        neg = m // 2 - (1 if m % 2 == 0 else 0)
        if neg > 0:
            resized[m - neg:] = spectrum[n - neg:]
        if m % 2 == 0:
            # New Nyquist bin folds the old +/- m/2 coefficients together.
            resized[m // 2] = spectrum[m // 2] + spectrum[n - m // 2]

    y = idft(resized) * (m / n)
    residue = float(np.abs(y.imag).max(initial=0.0))
    if residue > 1e-9 * max(1.0, float(np.abs(y.real).max(initial=0.0))):
        raise ValueError(f"fourier_resample: unexpected imaginary residue {residue:g}")
    return np.ascontiguousarray(y.real)


def default_target_len(n_samples: int) -> int:
    """Largest power of two not exceeding ``n_samples`` (at least 2)."""
    if n_samples < 2:
        raise ValueError(f"default_target_len: need at least 2 samples, got {n_samples}")
    return 1 << (int(n_samples).bit_length() - 1)
