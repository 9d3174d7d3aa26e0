"""Deterministic synthetic quasitubal tensors.

Every frontal slice is generated independently from ``(seed, k)`` with a
counter-based SplitMix64 stream, so a slice can be produced lazily without
generating its neighbours and the bits are identical on every platform.

SplitMix64 (Steele, Lea & Flood) with the usual constants::

    state_i = key + (i + 1) * 0x9E3779B97F4A7C15
    z = (state_i ^ (state_i >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out_i = z ^ (z >> 31)

Doubles are ``(out_i >> 11) * 2**-53``; entries are uniform on ``[-1, 1)`` in
both the real and imaginary part.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .tensor import QtTensor

__all__ = [
    "FAMILIES",
    "SynthSpec",
    "splitmix64",
    "uniform_stream",
    "family_slice",
    "family_slice_energy",
    "synthesize",
]

FAMILIES = ("random-banded", "smooth-fourier", "geometric-decay", "delta-spike")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(key: int, count: int) -> np.ndarray:
    """First ``count`` outputs of SplitMix64 started from state ``key``."""
    i = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(np.uint64(key % 2**64) + i * _GOLDEN)


def _stream_key(seed: int, k: int) -> int:
    with np.errstate(over="ignore"):
        a = _mix(np.array([seed % 2**64], dtype=np.uint64))[0]
        b = _mix(np.array([(k % 2**64)], dtype=np.uint64) ^ a)[0]
    return int(b)


def uniform_stream(seed: int, k: int, count: int) -> np.ndarray:
    """``count`` doubles in ``[0, 1)`` for slice ``k`` of stream ``seed``."""
    bits = splitmix64(_stream_key(seed, k), count)
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _raw_slice(seed: int, k: int, m: int, p: int) -> np.ndarray:
    u = 2.0 * uniform_stream(seed, k, 2 * m * p) - 1.0
    return (u[0::2] + 1j * u[1::2]).reshape(m, p)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic family.

    ``band`` is the half-width of the stored band (slices ``-band .. band``);
    ``None`` means unbounded support, which only lazy oracles can represent.
    ``decay`` is the exponent ``s`` of ``(1 + k^2)^-s`` for smooth-fourier
    and the per-step energy ratio for geometric-decay.
    """

    family: str
    m: int
    p: int
    band: int | None = 4
    seed: int = 0
    scale: float = 1.0
    decay: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.m < 1 or self.p < 1:
            raise ValueError("m and p must be positive")
        if self.band is not None and self.band < 0:
            raise ValueError("band must be non-negative")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        d = self.effective_decay
        if self.family == "geometric-decay" and not 0 < d < 1:
            raise ValueError("geometric-decay ratio must lie in (0, 1)")
        if self.family == "smooth-fourier" and d <= 0.25:
            raise ValueError("smooth-fourier exponent must exceed 1/4")

    @property
    def effective_decay(self) -> float:
        if self.decay is not None:
            return float(self.decay)
        return {"geometric-decay": 0.25, "smooth-fourier": 1.0}.get(self.family, 0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)

    def support(self) -> tuple[int, int] | None:
        """Half-open index range holding every nonzero slice, ``None`` if unbounded."""
        if self.family == "delta-spike":
            return (0, 1)
        if self.band is None:
            return None
        return (-self.band, self.band + 1)


def family_slice(spec: SynthSpec, k: int) -> np.ndarray:
    """Transform-domain slice ``k`` of the family (zero outside the support)."""
    sup = spec.support()
    if sup is not None and not sup[0] <= k < sup[1]:
        return np.zeros((spec.m, spec.p), dtype=complex)
    R = _raw_slice(spec.seed, k, spec.m, spec.p)
    if spec.family == "random-banded" or spec.family == "delta-spike":
        return spec.scale * R
    if spec.family == "smooth-fourier":
        return spec.scale * R / (1.0 + k * k) ** spec.effective_decay
    # geometric-decay: ||slice_k||_F^2 = scale * ratio^|k|
    target = math.sqrt(spec.scale * spec.effective_decay ** abs(k))
    return R * (target / np.linalg.norm(R))


def family_slice_energy(spec: SynthSpec, k: int) -> float:
    """Closed-form energy of slice ``k`` for geometric-decay."""
    if spec.family != "geometric-decay":
        raise ValueError("closed-form slice energies exist only for geometric-decay")
    sup = spec.support()
    if sup is not None and not sup[0] <= k < sup[1]:
        return 0.0
    return spec.scale * spec.effective_decay ** abs(k)


def synthesize(spec: SynthSpec) -> QtTensor:
    """Materialize the finite-support tensor described by ``spec``."""
    sup = spec.support()
    if sup is None:
        raise ValueError("cannot materialize a family with unbounded support; use a lazy oracle")
    lo, hi = sup
    slices = np.stack([family_slice(spec, k) for k in range(lo, hi)])
    return QtTensor(lo, slices, np.zeros((spec.m, spec.p)))
