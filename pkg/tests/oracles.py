"""Slow, direct reference implementations used only by the tests."""

import math

import numpy as np


def direct_dft_magnitude(x):
    """O(N^2) one-sided DFT magnitudes by explicit summation."""
    x = np.asarray(x, dtype=float)
    n = x.size
    out = []
    for k in range(n // 2 + 1):
        re = sum(x[j] * math.cos(2 * math.pi * k * j / n) for j in range(n))
        im = -sum(x[j] * math.sin(2 * math.pi * k * j / n) for j in range(n))
        out.append(math.hypot(re, im))
    return np.array(out)


def manual_welch(x, fs, nperseg):
    """Hann-windowed, 50% overlap, density-scaled one-sided Welch PSD."""
    x = np.asarray(x, dtype=float)
    step = nperseg - nperseg // 2
    j = np.arange(nperseg)
    # periodic Hann, as used for spectral estimation
    win = 0.5 - 0.5 * np.cos(2 * np.pi * j / nperseg)
    scale = 1.0 / (fs * np.sum(win**2))
    acc = np.zeros(nperseg // 2 + 1)
    count = 0
    for start in range(0, x.size - nperseg + 1, step):
        seg = x[start:start + nperseg] * win
        acc += np.abs(np.fft.rfft(seg)) ** 2
        count += 1
    p = acc / count * scale
    if nperseg % 2 == 0:
        p[1:-1] *= 2
    else:
        p[1:] *= 2
    return np.fft.rfftfreq(nperseg, 1.0 / fs), p


def analytic_envelope(x):
    """Envelope via an explicit FFT-domain analytic signal."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = np.zeros(n)
    h[0] = 1
    if n % 2 == 0:
        h[n // 2] = 1
        h[1:n // 2] = 2
    else:
        h[1:(n + 1) // 2] = 2
    return np.abs(np.fft.ifft(np.fft.fft(x) * h))


def floyd_warshall(n, edges, cost=lambda w: w):
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for u, v, w in edges:
        c = cost(w)
        d[u, v] = min(d[u, v], c)
        d[v, u] = min(d[v, u], c)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def modularity_bruteforce(n, edges, labels):
    a = np.zeros((n, n))
    for u, v, w in edges:
        a[u, v] = a[v, u] = w
    k = a.sum(axis=1)
    two_m = k.sum()
    q = 0.0
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += a[i, j] - k[i] * k[j] / two_m
    return q / two_m


def straightforward_channel_features(x, fs):
    """Loop-level reimplementation of the 20 per-channel features."""
    x = [float(v) for v in x]
    n = len(x)
    mean = math.fsum(x) / n
    srt = sorted(x)
    median = srt[n // 2] if n % 2 else 0.5 * (srt[n // 2 - 1] + srt[n // 2])
    m2 = math.fsum((v - mean) ** 2 for v in x) / n
    m3 = math.fsum((v - mean) ** 3 for v in x) / n
    m4 = math.fsum((v - mean) ** 4 for v in x) / n
    std = math.sqrt(m2)
    skew = m3 / std**3
    kurt = m4 / m2**2
    rms = math.sqrt(math.fsum(v * v for v in x) / n)
    peak = max(abs(v) for v in x)
    tkeo = math.fsum(x[j] ** 2 - x[j - 1] * x[j + 1] for j in range(1, n - 1)) / (n - 2)

    def bands(freqs, vals):
        lo = math.fsum(v for f, v in zip(freqs, vals) if f <= fs / 6)
        mid = math.fsum(v for f, v in zip(freqs, vals) if fs / 6 < f <= fs / 3)
        hi = math.fsum(v for f, v in zip(freqs, vals) if f > fs / 3)
        return [lo, mid, hi]

    mags = np.abs(np.fft.rfft(np.array(x)))
    freqs = np.arange(mags.size) * fs / n
    f_mean = math.fsum(mags) / mags.size
    f_std = math.sqrt(math.fsum((m - f_mean) ** 2 for m in mags) / mags.size)
    pf, pp = manual_welch(np.array(x), fs, min(256, n // 2))
    env = analytic_envelope(np.array(x))
    em = np.abs(np.fft.rfft(env))
    e_mean = math.fsum(em) / em.size
    e_std = math.sqrt(math.fsum((m - e_mean) ** 2 for m in em) / em.size)
    return [mean, median, std, skew, kurt, rms, peak, tkeo, f_mean, f_std, *bands(freqs, mags),
            math.fsum(pp), max(pp), *bands(pf, pp), e_mean, e_std]
