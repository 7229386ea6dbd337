"""Independent reference implementations used only by the tests.

Nothing here imports the package: the S-box is derived from GF(2^8)
arithmetic, and the statistics are plain two-pass Python loops.
"""
from __future__ import annotations

import math


# -- AES-128 ------------------------------------------------------------------

def gf_mul(a: int, b: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        a = ((a << 1) ^ 0x11B) if a & 0x80 else (a << 1)
        b >>= 1
    return r


def gf_inv(a: int) -> int:
    if a == 0:
        return 0
    # a^254 = a^-1 in GF(2^8)
    r, base, e = 1, a, 254
    while e:
        if e & 1:
            r = gf_mul(r, base)
        base = gf_mul(base, base)
        e >>= 1
    return r


def _affine(b: int) -> int:
    out = 0x63
    for shift in range(5):
        out ^= ((b << shift) | (b >> (8 - shift))) & 0xFF
    return out


SBOX = [_affine(gf_inv(v)) for v in range(256)]


def _key_expansion(key: bytes) -> list[list[int]]:
    words = [list(key[4 * i:4 * i + 4]) for i in range(4)]
    rcon = 1
    for i in range(4, 44):
        w = list(words[i - 1])
        if i % 4 == 0:
            w = w[1:] + w[:1]
            w = [SBOX[v] for v in w]
            w[0] ^= rcon
            rcon = gf_mul(rcon, 2)
        words.append([a ^ b for a, b in zip(words[i - 4], w)])
    return [sum(words[4 * r:4 * r + 4], []) for r in range(11)]


def _mix_column(col: list[int]) -> list[int]:
    a0, a1, a2, a3 = col
    return [
        gf_mul(a0, 2) ^ gf_mul(a1, 3) ^ a2 ^ a3,
        a0 ^ gf_mul(a1, 2) ^ gf_mul(a2, 3) ^ a3,
        a0 ^ a1 ^ gf_mul(a2, 2) ^ gf_mul(a3, 3),
        gf_mul(a0, 3) ^ a1 ^ a2 ^ gf_mul(a3, 2),
    ]


def aes128_encrypt(key: bytes, block: bytes) -> bytes:
    rks = _key_expansion(key)
    s = [b ^ k for b, k in zip(block, rks[0])]
    for rnd in range(1, 11):
        s = [SBOX[v] for v in s]
        # state is column-major: s[r + 4c]
        s = [s[(r + 4 * ((c + r) % 4))] for c in range(4) for r in range(4)]
        if rnd != 10:
            s = sum((_mix_column(s[4 * c:4 * c + 4]) for c in range(4)), [])
        s = [v ^ k for v, k in zip(s, rks[rnd])]
    return bytes(s)


def first_round_sbox(plaintext: bytes, key: bytes) -> list[int]:
    return [SBOX[p ^ k] for p, k in zip(plaintext, key)]


# -- statistics -----------------------------------------------------------------

def mean(xs) -> float:
    return sum(xs) / len(xs)


def sample_var(xs) -> float:
    m = mean(xs)
    return sum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def welch(a, b) -> float:
    return (mean(a) - mean(b)) / math.sqrt(sample_var(a) / len(a) + sample_var(b) / len(b))


def pearson(x, y) -> float:
    mx, my = mean(x), mean(y)
    sxy = sum((u - mx) * (v - my) for u, v in zip(x, y))
    sxx = sum((u - mx) ** 2 for u in x)
    syy = sum((v - my) ** 2 for v in y)
    return sxy / math.sqrt(sxx * syy)


def class_snr(values, classes) -> float:
    """Weighted variance of class means over pooled within-class variance."""
    groups: dict[int, list[float]] = {}
    for v, c in zip(values, classes):
        groups.setdefault(int(c), []).append(float(v))
    n, k = len(values), len(groups)
    grand = mean(values)
    signal = sum(len(g) * (mean(g) - grand) ** 2 for g in groups.values()) / n
    noise = sum(sum((v - mean(g)) ** 2 for v in g) for g in groups.values()) / (n - k)
    return signal / noise


def bisect_root(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)
