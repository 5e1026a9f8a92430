# SPDX-License-Identifier: Apache-2.0
"""Reference p-values for the SP 800-22 tests used by the suite.

Written directly from the SP 800-22 rev1a formulas on top of scipy, with no
code shared with the Rust implementation. Run from this directory to refresh
the fixture:

    python3 nist_oracle.py > ../fixtures/nist_oracle.json
"""

import json
import math

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm


def frequency(e):
    n = len(e)
    s = np.sum(2 * e - 1)
    return float(erfc(abs(s) / math.sqrt(n) / math.sqrt(2)))


def block_frequency(e, m=20):
    n = len(e)
    nb = n // m
    blocks = e[: nb * m].reshape(nb, m)
    pi = blocks.mean(axis=1)
    chi2 = 4.0 * m * np.sum((pi - 0.5) ** 2)
    return float(gammaincc(nb / 2.0, chi2 / 2.0))


def cusum(e, reverse=False):
    x = 2 * e - 1
    if reverse:
        x = x[::-1]
    n = len(x)
    z = int(np.max(np.abs(np.cumsum(x))))
    sn = math.sqrt(n)

    def trunc_div(a, b):
        return int(a / b)

    s1 = 0.0
    for k in range(trunc_div(trunc_div(-n, z) + 1, 4), trunc_div(trunc_div(n, z) - 1, 4) + 1):
        s1 += norm.cdf((4 * k + 1) * z / sn) - norm.cdf((4 * k - 1) * z / sn)
    s2 = 0.0
    for k in range(trunc_div(trunc_div(-n, z) - 3, 4), trunc_div(trunc_div(n, z) - 1, 4) + 1):
        s2 += norm.cdf((4 * k + 3) * z / sn) - norm.cdf((4 * k + 1) * z / sn)
    return float(1.0 - s1 + s2)


def runs(e):
    n = len(e)
    pi = e.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0
    v = 1 + int(np.sum(e[1:] != e[:-1]))
    num = abs(v - 2.0 * n * pi * (1 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
    return float(erfc(num / den))


def longest_run(e):
    n = len(e)
    if n < 6272:
        m, edges, probs = 8, (1, 4), [0.21484375, 0.3671875, 0.23046875, 0.1875]
    else:
        m, edges, probs = 128, (4, 9), [0.1174035788, 0.242955959, 0.249363483,
                                         0.17517706, 0.102701071, 0.112398847]
    nb = n // m
    counts = np.zeros(len(probs))
    for b in range(nb):
        block = e[b * m:(b + 1) * m]
        best = run = 0
        for bit in block:
            run = run + 1 if bit else 0
            best = max(best, run)
        idx = min(max(best, edges[0]), edges[1]) - edges[0]
        counts[idx] += 1
    expected = nb * np.array(probs)
    chi2 = np.sum((counts - expected) ** 2 / expected)
    return float(gammaincc((len(probs) - 1) / 2.0, chi2 / 2.0))


def _pattern_counts(e, m):
    n = len(e)
    ext = np.concatenate([e, e[: m - 1]]) if m > 1 else e
    counts = np.zeros(2 ** m)
    for i in range(n):
        v = 0
        for j in range(m):
            v = (v << 1) | int(ext[i + j])
        counts[v] += 1
    return counts


def approximate_entropy(e, m):
    n = len(e)

    def phi(mm):
        if mm == 0:
            return 0.0
        c = _pattern_counts(e, mm) / n
        c = c[c > 0]
        return float(np.sum(c * np.log(c)))

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return float(gammaincc(2 ** (m - 1), chi2 / 2.0))


def serial(e, m):
    n = len(e)

    def psi2(mm):
        if mm <= 0:
            return 0.0
        c = _pattern_counts(e, mm)
        return float((2 ** mm) / n * np.sum(c ** 2) - n)

    d1 = psi2(m) - psi2(m - 1)
    d2 = psi2(m) - 2 * psi2(m - 1) + psi2(m - 2)
    return [float(gammaincc(2 ** (m - 2), d1 / 2.0)),
            float(gammaincc(2 ** (m - 3), d2 / 2.0))]


def dft(e):
    n = len(e)
    x = 2 * e - 1
    mod = np.abs(np.fft.fft(x))[: n // 2]
    t = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = int(np.sum(mod < t))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return float(erfc(abs(d) / math.sqrt(2)))


def suite(e):
    n = len(e)
    lg = int(math.floor(math.log2(n)))
    out = {
        "Frequency": [frequency(e)],
        "BlockFrequency": [block_frequency(e)],
        "CumsumForward": [cusum(e)],
        "CumsumReverse": [cusum(e, reverse=True)],
        "Runs": [runs(e)],
        "LongestRun": [longest_run(e)],
        "ApproximateEntropy": [approximate_entropy(e, lg - 6)],
        "Serial": serial(e, lg - 3),
    }
    if n >= 1000:
        out["DFT"] = [dft(e)]
    return out


def main():
    rng = np.random.default_rng(20240607)
    cases = []
    for n in (255, 1023):
        for _ in range(10):
            e = rng.integers(0, 2, size=n)
            cases.append({"bits": "".join(map(str, e)), "p_values": suite(e)})
    print(json.dumps({"cases": cases}, indent=1))


if __name__ == "__main__":
    main()
