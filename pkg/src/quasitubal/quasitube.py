"""Quasitubes as eventually-constant sequences over the integers.

A quasitube is stored through its transform-domain multiplier sequence: a
finite band of explicit values starting at index ``lo`` and a constant
``tail`` taking every other index. Products are pointwise, conjugation is
entrywise and the norm is the sup-norm, so the class realizes the commutative
unital C*-algebra of bounded sequences restricted to the eventually-constant
ones. Tail-zero sequences are the square-summable tubes (the ideal ``H``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EcSeq",
    "NotInH",
    "NOT_IN_H",
    "SpectrumDesc",
    "SingularError",
    "NotNonnegativeError",
    "NotSelfAdjointError",
    "POS_TOL",
    "ec_add",
    "ec_scale",
    "ec_sub",
    "ec_hadamard",
    "ec_conj",
    "ec_sup_norm",
    "ec_l2_norm",
    "ec_spectrum",
    "ec_geq",
    "ec_sqrt_nonneg",
    "ec_sqrt_selfadjoint",
    "ec_abs",
    "ec_invert",
    "multiplier_matrix",
    "unit",
    "zero",
    "delta",
]

# floating-point closure of exact positivity / self-adjointness
POS_TOL = 1e-12


class NotInH:
    """Marker returned by H-norms of objects with a nonzero constant tail."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NOT_IN_H"

    def __bool__(self):
        return False


NOT_IN_H = NotInH()


class SingularError(ValueError):
    pass


class NotNonnegativeError(ValueError):
    pass


class NotSelfAdjointError(ValueError):
    pass


def _normalize_dtype(values, tail):
    vals = np.asarray(values)
    dt = np.result_type(vals, np.asarray(tail)) if vals.size else np.asarray(tail).dtype
    return np.int64 if dt.kind in "biu" else np.complex128


class EcSeq:
    """Eventually-constant sequence ``k -> values[k - lo]`` inside the band, ``tail`` outside.

    Instances are immutable and always canonical: the band never starts or
    ends with an entry equal to the tail, and an empty band has ``lo == 0``.
    Integer sequences (used for ranks) keep an ``int64`` dtype, everything
    else is ``complex128``.
    """

    __slots__ = ("lo", "values", "tail")

    def __init__(self, lo: int = 0, values=(), tail=0):
        dtype = _normalize_dtype(values, tail)
        vals = np.array(values, dtype=dtype).reshape(-1)
        tail = dtype(tail)
        lo = int(lo)
        # strip band edges equal to the tail
        neq = np.flatnonzero(vals != tail)
        if neq.size == 0:
            vals = vals[:0]
            lo = 0
        else:
            a, b = neq[0], neq[-1] + 1
            vals = vals[a:b]
            lo += int(a)
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "tail", tail)

    def __setattr__(self, name, value):
        raise AttributeError("EcSeq is immutable")

    # -- basic access -----------------------------------------------------
    @property
    def hi(self) -> int:
        """One past the last band index."""
        return self.lo + len(self.values)

    @property
    def band(self) -> tuple[int, int] | None:
        return None if len(self.values) == 0 else (self.lo, self.hi)

    @property
    def dtype(self):
        return self.values.dtype

    def __getitem__(self, k: int):
        k = int(k)
        if self.lo <= k < self.hi:
            return self.values[k - self.lo]
        return self.tail

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Dense values at indices ``lo, ..., hi - 1``."""
        out = np.full(max(hi - lo, 0), self.tail, dtype=self.dtype)
        a, b = max(lo, self.lo), min(hi, self.hi)
        if a < b:
            out[a - lo : b - lo] = self.values[a - self.lo : b - self.lo]
        return out

    def points(self) -> np.ndarray:
        """Distinct values taken by the sequence (band values and the tail)."""
        return np.unique(np.append(self.values, self.tail))

    def __repr__(self):
        return f"EcSeq(lo={self.lo}, values={self.values.tolist()!r}, tail={self.tail.item()!r})"

    def __eq__(self, other):
        if not isinstance(other, EcSeq):
            return NotImplemented
        return (
            self.lo == other.lo
            and self.tail == other.tail
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.lo, complex(self.tail), self.values.tobytes()))

    def allclose(self, other: "EcSeq", rtol: float = 1e-10, atol: float = 1e-12) -> bool:
        lo, hi = _union_band(self, other)
        return bool(
            np.allclose(self.window(lo, hi), other.window(lo, hi), rtol=rtol, atol=atol)
            and np.isclose(self.tail, other.tail, rtol=rtol, atol=atol)
        )

    def map(self, f) -> "EcSeq":
        """Apply a pointwise function to band and tail."""
        return EcSeq(self.lo, f(self.values), f(np.asarray(self.tail))[()])

    # -- operators -----------------------------------------------------------
    def __add__(self, other):
        return ec_add(self, _coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ec_sub(self, _coerce(other))

    def __rsub__(self, other):
        return ec_sub(_coerce(other), self)

    def __neg__(self):
        return ec_scale(-1, self)

    def __mul__(self, other):
        if isinstance(other, EcSeq):
            return ec_hadamard(self, other)
        return ec_scale(other, self)

    __rmul__ = __mul__

    def conj(self) -> "EcSeq":
        return ec_conj(self)


def _coerce(x) -> EcSeq:
    return x if isinstance(x, EcSeq) else EcSeq(0, (), x)


def _union_band(*seqs: EcSeq) -> tuple[int, int]:
    bands = [s.band for s in seqs if s.band is not None]
    if not bands:
        return 0, 0
    return min(b[0] for b in bands), max(b[1] for b in bands)


def _pointwise(f, *seqs: EcSeq) -> EcSeq:
    lo, hi = _union_band(*seqs)
    return EcSeq(lo, f(*(s.window(lo, hi) for s in seqs)), f(*(np.asarray(s.tail) for s in seqs))[()])


def unit() -> EcSeq:
    """The unit ``e``: empty band, tail 1."""
    return EcSeq(0, (), 1.0)


def zero() -> EcSeq:
    return EcSeq(0, (), 0.0)


def delta(j: int, value=1.0) -> EcSeq:
    """Basis atom supported at index ``j`` (tail 0)."""
    return EcSeq(j, [value], 0.0)


# -- vector space and algebra ------------------------------------------------
def ec_add(a: EcSeq, b: EcSeq) -> EcSeq:
    return _pointwise(np.add, a, b)


def ec_sub(a: EcSeq, b: EcSeq) -> EcSeq:
    return _pointwise(np.subtract, a, b)


def ec_scale(alpha, a: EcSeq) -> EcSeq:
    return a.map(lambda v: alpha * v)


def ec_hadamard(a: EcSeq, b: EcSeq) -> EcSeq:
    """Pointwise product; this is the quasitube product in the transform domain."""
    return _pointwise(np.multiply, a, b)


def ec_conj(a: EcSeq) -> EcSeq:
    return a.map(np.conj)


# -- norms -----------------------------------------------------------------------
def ec_sup_norm(a: EcSeq) -> float:
    if len(a.values) == 0:
        return float(abs(a.tail))
    return float(max(abs(a.tail), np.max(np.abs(a.values))))


def ec_l2_norm(a: EcSeq):
    """l2 norm of a tail-zero sequence, :data:`NOT_IN_H` otherwise."""
    if a.tail != 0:
        return NOT_IN_H
    return float(np.linalg.norm(a.values))


# -- spectrum and order ------------------------------------------------------
@dataclass(frozen=True)
class SpectrumDesc:
    points: tuple
    is_selfadjoint: bool
    is_nonneg: bool
    is_strictly_pos: bool


def ec_spectrum(a: EcSeq) -> SpectrumDesc:
    pts = a.points().astype(complex)
    selfadj = bool(np.all(np.abs(pts.imag) <= POS_TOL))
    nonneg = selfadj and bool(np.all(pts.real >= -POS_TOL))
    strict = selfadj and bool(np.all(pts.real > POS_TOL))
    return SpectrumDesc(tuple(pts.tolist()), selfadj, nonneg, strict)


def ec_geq(a: EcSeq, b: EcSeq) -> bool:
    """Partial order: ``a >= b`` iff ``a - b`` has non-negative spectrum."""
    return ec_spectrum(ec_sub(a, b)).is_nonneg


# -- functional calculus -----------------------------------------------------
def ec_sqrt_nonneg(a: EcSeq) -> EcSeq:
    if not ec_spectrum(a).is_nonneg:
        raise NotNonnegativeError("square root requires a non-negative quasitube")
    return a.map(lambda v: np.sqrt(np.maximum(np.real(v), 0.0)).astype(complex))


def ec_sqrt_selfadjoint(a: EcSeq) -> EcSeq:
    """Square root of a self-adjoint quasitube; negative entries map to ``+i sqrt|a_k|``."""
    if not ec_spectrum(a).is_selfadjoint:
        raise NotSelfAdjointError("square root requires a self-adjoint quasitube")

    def root(v):
        r = np.real(v)
        return np.where(r >= 0, np.sqrt(np.abs(r)) + 0j, 1j * np.sqrt(np.abs(r)))

    return a.map(root)


def ec_abs(a: EcSeq) -> EcSeq:
    return a.map(lambda v: np.abs(v).astype(complex))


def ec_invert(a: EcSeq) -> EcSeq:
    pts = a.points()
    if np.min(np.abs(pts)) <= POS_TOL:
        raise SingularError("quasitube is not invertible: 0 is in its spectrum")
    return a.map(lambda v: 1.0 / np.asarray(v, dtype=complex))


def multiplier_matrix(a: EcSeq, window: tuple[int, int]) -> np.ndarray:
    """Diagonal matrix of the multiplier on basis indices ``window[0] .. window[1] - 1``.

    On a finite window this is the matrix of ``y -> x * y`` in the orthonormal
    basis, which is why its Frobenius norm equals the l2 norm of a tail-zero
    sequence once the window covers the band.
    """
    lo, hi = window
    return np.diag(a.window(lo, hi).astype(complex))
