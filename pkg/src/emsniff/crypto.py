"""AES-128 first-round model: S-box, Hamming weight, TVLA input sets."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import seeding

# fmt: off
SBOX = np.array([
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
], dtype=np.uint8)
# fmt: on

HW = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)

# HW_SBOX[p, k] = HW(S(p ^ k)): the whole hypothesis table for one key byte.
HW_SBOX = HW[SBOX[np.arange(256)[:, None] ^ np.arange(256)[None, :]]]

# Variance of HW(S(P ^ k)) over uniform P: S is a bijection, so this is the
# variance of HW over all bytes, binomial(8, 1/2) -> 8 * 1/4.
HW_VARIANCE = 2.0


def sbox_output(plaintext_byte: int, key_byte: int) -> int:
    """First-round S-box output ``S(p ^ k)``."""
    _check_byte(plaintext_byte)
    _check_byte(key_byte)
    return int(SBOX[plaintext_byte ^ key_byte])


def hamming_weight(v: int) -> int:
    _check_byte(v)
    return int(HW[v])


def _check_byte(v: int) -> None:
    if not 0 <= v < 256:
        raise ValueError(f"byte value out of range: {v}")


@dataclass(frozen=True)
class KeyByteHypothesis:
    byte_index: int
    value: int

    def __post_init__(self):
        if not 0 <= self.byte_index < 16:
            raise ValueError(f"byte_index must be in [0, 16), got {self.byte_index}")
        _check_byte(self.value)


class InputKind(enum.Enum):
    FIXED = "fixed"
    RANDOM = "random"


@dataclass(frozen=True, eq=False)
class InputSet:
    """Plaintexts (``(n, 16)`` uint8) encrypted under a single key."""

    kind: InputKind
    key: np.ndarray
    plaintexts: np.ndarray

    def __post_init__(self):
        key = as_block(self.key)
        pts = np.ascontiguousarray(self.plaintexts, dtype=np.uint8)
        if pts.ndim != 2 or pts.shape[1] != 16:
            raise ValueError(f"plaintexts must have shape (n, 16), got {pts.shape}")
        if self.kind is InputKind.FIXED and len(pts) and not (pts == pts[0]).all():
            raise ValueError("a fixed input set must repeat one plaintext")
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "plaintexts", pts)

    def __len__(self) -> int:
        return len(self.plaintexts)

    def head(self, count: int) -> "InputSet":
        return InputSet(self.kind, self.key, self.plaintexts[:count])


def as_block(value) -> np.ndarray:
    """Coerce bytes, hex string or sequence into a 16-byte uint8 array."""
    if isinstance(value, str):
        value = bytes.fromhex(value)
    if isinstance(value, (bytes, bytearray)):
        arr = np.frombuffer(bytes(value), dtype=np.uint8)
    else:
        arr = np.asarray(value)
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("block values must be bytes")
        arr = arr.astype(np.uint8)
    if arr.shape != (16,):
        raise ValueError(f"expected a 16-byte block, got shape {arr.shape}")
    return arr.copy()


def random_inputs(seed: int, count: int, key, *labels: int) -> InputSet:
    """``count`` uniform plaintexts from the stream ``(seed, PLAINTEXT, *labels)``."""
    rng = seeding.stream(seed, seeding.PLAINTEXT, *labels)
    pts = rng.integers(0, 256, size=(count, 16), dtype=np.uint8)
    return InputSet(InputKind.RANDOM, key, pts)


def fixed_inputs(count: int, key, plaintext) -> InputSet:
    pt = as_block(plaintext)
    return InputSet(InputKind.FIXED, key, np.tile(pt, (count, 1)))


def generate_tvla_sets(seed: int, group_size: int, key, fixed_pt) -> tuple[InputSet, InputSet]:
    """Fixed-vs-random input sets for a non-specific t-test.

    Returns ``(fixed, random)``, each with ``group_size`` plaintexts under
    ``key``. The random set depends only on ``seed`` and ``group_size``.
    """
    if group_size < 2:
        raise ValueError("group_size must be >= 2 for a sample variance")
    fixed = fixed_inputs(group_size, key, fixed_pt)
    rng = seeding.stream(seed, seeding.TVLA)
    pts = rng.integers(0, 256, size=(group_size, 16), dtype=np.uint8)
    return fixed, InputSet(InputKind.RANDOM, key, pts)
