"""Quasitubal and finite tubal tensors.

:class:`QtTensor` stores an ``m x p`` quasitubal tensor in the transform
domain: frontal slices on a finite band of integer indices plus one constant
tail slice used at every index outside the band. Entry ``(i, j)`` read along
the frontal axis is an :class:`~quasitubal.quasitube.EcSeq`.

:class:`FiniteTubalTensor` is the classical ``m x p x n`` tubal tensor kept in
the spatial domain together with the :class:`~quasitubal.transform.TransformSpec`
defining its product.
"""
from __future__ import annotations

import numpy as np

from .quasitube import NOT_IN_H, EcSeq
from .transform import TransformSpec

__all__ = [
    "QtTensor",
    "FiniteTubalTensor",
    "qt_identity",
    "qt_zeros",
    "qt_prod",
    "qt_conj_transpose",
    "qt_h_norm",
    "qt_op_norm",
    "qt_trace",
    "qt_gram_inner",
    "qt_h_inner",
    "qt_is_f_diagonal",
    "qt_is_star_unitary",
    "finite_tprod",
    "finite_identity",
    "finite_to_qt",
    "spectral_norms",
]

# slices with min(m, p) above this use power iteration for the spectral norm
DENSE_SVD_LIMIT = 64


class QtTensor:
    """Banded-plus-tail quasitubal tensor (transform domain).

    ``slices[n]`` is the frontal slice at index ``lo + n``; ``tail_slice`` is
    the slice everywhere else. Canonical form strips band slices equal to the
    tail at both ends of the band.
    """

    __slots__ = ("m", "p", "lo", "slices", "tail_slice")

    def __init__(self, lo: int, slices, tail_slice=None, shape: tuple[int, int] | None = None):
        slices = np.array(slices, dtype=complex)
        if tail_slice is None:
            if shape is None:
                if slices.ndim != 3:
                    raise ValueError("cannot infer tensor shape")
                shape = slices.shape[1:]
            tail_slice = np.zeros(shape, dtype=complex)
        tail_slice = np.array(tail_slice, dtype=complex)
        if tail_slice.ndim != 2:
            raise ValueError(f"tail slice must be a matrix, got shape {tail_slice.shape}")
        m, p = tail_slice.shape
        if slices.size == 0:
            slices = slices.reshape(0, m, p)
        if slices.ndim != 3 or slices.shape[1:] != (m, p):
            raise ValueError(f"band slices of shape {slices.shape} do not match tail {tail_slice.shape}")
        lo = int(lo)
        differs = np.flatnonzero(np.any(slices != tail_slice, axis=(1, 2)))
        if differs.size == 0:
            slices = slices[:0]
            lo = 0
        else:
            a, b = differs[0], differs[-1] + 1
            slices = slices[a:b]
            lo += int(a)
        slices = slices.copy()
        slices.setflags(write=False)
        tail_slice.setflags(write=False)
        for name, val in (("m", m), ("p", p), ("lo", lo), ("slices", slices), ("tail_slice", tail_slice)):
            object.__setattr__(self, name, val)

    def __setattr__(self, name, value):
        raise AttributeError("QtTensor is immutable")

    # -- constructors ----------------------------------------------------------
    @classmethod
    def from_entries(cls, entries) -> "QtTensor":
        """Build from an ``m x p`` nested list of :class:`EcSeq`."""
        rows = [list(r) for r in entries]
        m, p = len(rows), len(rows[0])
        flat = [e for r in rows for e in r]
        bands = [e.band for e in flat if e.band is not None]
        lo = min((b[0] for b in bands), default=0)
        hi = max((b[1] for b in bands), default=0)
        slices = np.zeros((hi - lo, m, p), dtype=complex)
        tail = np.zeros((m, p), dtype=complex)
        for i in range(m):
            for j in range(p):
                slices[:, i, j] = rows[i][j].window(lo, hi)
                tail[i, j] = rows[i][j].tail
        return cls(lo, slices, tail)

    # -- access ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.p)

    @property
    def n_slices(self) -> int:
        return self.slices.shape[0]

    @property
    def hi(self) -> int:
        return self.lo + self.n_slices

    @property
    def band(self) -> tuple[int, int] | None:
        return None if self.n_slices == 0 else (self.lo, self.hi)

    @property
    def has_tail(self) -> bool:
        return bool(np.any(self.tail_slice != 0))

    @property
    def in_h(self) -> bool:
        return not self.has_tail

    def slice_at(self, k: int) -> np.ndarray:
        if self.lo <= k < self.hi:
            return self.slices[k - self.lo]
        return self.tail_slice

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Dense ``(hi - lo, m, p)`` stack of slices ``lo .. hi - 1``."""
        out = np.broadcast_to(self.tail_slice, (max(hi - lo, 0), self.m, self.p)).copy()
        a, b = max(lo, self.lo), min(hi, self.hi)
        if a < b:
            out[a - lo : b - lo] = self.slices[a - self.lo : b - self.lo]
        return out

    def entry(self, i: int, j: int) -> EcSeq:
        return EcSeq(self.lo, self.slices[:, i, j], self.tail_slice[i, j])

    def __repr__(self):
        return f"QtTensor(shape={self.shape}, band={self.band}, has_tail={self.has_tail})"

    def __eq__(self, other):
        if not isinstance(other, QtTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.lo == other.lo
            and np.array_equal(self.slices, other.slices)
            and np.array_equal(self.tail_slice, other.tail_slice)
        )

    __hash__ = None

    def allclose(self, other: "QtTensor", atol: float = 1e-10) -> bool:
        if self.shape != other.shape:
            return False
        lo, hi = union_band(self, other)
        return bool(
            np.allclose(self.window(lo, hi), other.window(lo, hi), rtol=0, atol=atol)
            and np.allclose(self.tail_slice, other.tail_slice, rtol=0, atol=atol)
        )

    # -- arithmetic ----------------------------------------------------------------
    def _binary(self, other: "QtTensor", op) -> "QtTensor":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch: {self.shape} vs {other.shape}")
        lo, hi = union_band(self, other)
        return QtTensor(lo, op(self.window(lo, hi), other.window(lo, hi)), op(self.tail_slice, other.tail_slice))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __neg__(self):
        return QtTensor(self.lo, -self.slices, -self.tail_slice)

    def __mul__(self, alpha):
        if isinstance(alpha, QtTensor):
            return NotImplemented
        return QtTensor(self.lo, alpha * self.slices, alpha * self.tail_slice)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return qt_prod(self, other)

    @property
    def H(self) -> "QtTensor":
        return qt_conj_transpose(self)


def union_band(*tensors) -> tuple[int, int]:
    bands = [t.band for t in tensors if t.band is not None]
    if not bands:
        return 0, 0
    return min(b[0] for b in bands), max(b[1] for b in bands)


def qt_zeros(m: int, p: int) -> QtTensor:
    return QtTensor(0, np.zeros((0, m, p)), np.zeros((m, p)))


def qt_identity(p: int) -> QtTensor:
    if p < 1:
        raise ValueError("identity size must be positive")
    return QtTensor(0, np.zeros((0, p, p)), np.eye(p))


def qt_prod(X: QtTensor, Y: QtTensor) -> QtTensor:
    """Facewise product over the union of the two bands; tails multiply once."""
    if X.p != Y.m:
        raise ValueError(f"inner dimensions differ: {X.shape} times {Y.shape}")
    lo, hi = union_band(X, Y)
    return QtTensor(lo, X.window(lo, hi) @ Y.window(lo, hi), X.tail_slice @ Y.tail_slice)


def qt_conj_transpose(X: QtTensor) -> QtTensor:
    return QtTensor(X.lo, np.conj(np.swapaxes(X.slices, 1, 2)), X.tail_slice.conj().T)


def qt_h_norm(X: QtTensor):
    """Hilbert-space norm; :data:`NOT_IN_H` when the tail slice is nonzero."""
    if X.has_tail:
        return NOT_IN_H
    return float(np.sqrt(np.sum(np.abs(X.slices) ** 2)))


def _power_norm(A: np.ndarray, tol: float = 1e-12) -> float:
    m, p = A.shape
    maxit = 10 * min(m, p)
    # deterministic start: the row of A^H A with largest norm
    G = A.conj().T @ A
    x = G[np.argmax(np.linalg.norm(G, axis=1))].conj()
    nx = np.linalg.norm(x)
    if nx == 0:
        return 0.0
    x = x / nx
    lam = 0.0
    for _ in range(maxit):
        y = G @ x
        new = float(np.linalg.norm(y))
        if new == 0:
            return 0.0
        x = y / new
        if abs(new - lam) <= tol * new:
            lam = new
            break
        lam = new
    return float(np.sqrt(lam))


def spectral_norms(stack: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a ``(n, m, p)`` stack."""
    stack = np.asarray(stack)
    if stack.shape[0] == 0:
        return np.zeros(0)
    if min(stack.shape[1:]) <= DENSE_SVD_LIMIT:
        return np.linalg.svd(stack, compute_uv=False)[:, 0]
    return np.array([_power_norm(A) for A in stack])


def qt_op_norm(X: QtTensor) -> float:
    """Operator norm: the sup of slice spectral norms over band and tail."""
    norms = spectral_norms(np.concatenate([X.slices, X.tail_slice[None]], axis=0))
    return float(np.max(norms))


def qt_trace(X: QtTensor) -> EcSeq:
    if X.m != X.p:
        raise ValueError(f"trace requires a square tensor, got {X.shape}")
    return EcSeq(X.lo, np.trace(X.slices, axis1=1, axis2=2), np.trace(X.tail_slice))


def qt_gram_inner(X: QtTensor, Y: QtTensor) -> EcSeq:
    """Module-valued inner product ``Tr(X* Y)``."""
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    return qt_trace(qt_prod(qt_conj_transpose(X), Y))


def qt_h_inner(X: QtTensor, Y: QtTensor) -> complex:
    """Hilbert inner product of two tail-zero tensors, linear in ``X``."""
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    if X.has_tail or Y.has_tail:
        raise ValueError("inner product is defined only for tensors in H (zero tail)")
    lo, hi = union_band(X, Y)
    return complex(np.sum(X.window(lo, hi) * np.conj(Y.window(lo, hi))))


def _all_slices(X: QtTensor) -> np.ndarray:
    return np.concatenate([X.slices, X.tail_slice[None]], axis=0)


def qt_is_f_diagonal(X: QtTensor, tol: float = 0.0) -> bool:
    S = _all_slices(X)
    off = S.copy()
    k = min(X.m, X.p)
    off[:, np.arange(k), np.arange(k)] = 0
    return bool(np.all(np.abs(off) <= tol))


def qt_is_star_unitary(U: QtTensor, tol: float = 1e-10) -> bool:
    if U.m != U.p:
        raise ValueError(f"unitarity requires a square tensor, got {U.shape}")
    S = _all_slices(U)
    eye = np.eye(U.m)
    g1 = np.conj(np.swapaxes(S, 1, 2)) @ S - eye
    g2 = S @ np.conj(np.swapaxes(S, 1, 2)) - eye
    return bool(max(np.max(np.abs(g1)), np.max(np.abs(g2))) <= tol)


# -- finite tubal tensors -------------------------------------------------------
class FiniteTubalTensor:
    """Spatial-domain ``m x p x n`` tubal tensor with its tube transform."""

    __slots__ = ("data", "spec")

    def __init__(self, data, spec: TransformSpec):
        data = np.array(data, dtype=complex)
        if data.ndim != 3:
            raise ValueError(f"expected an m x p x n array, got shape {data.shape}")
        if data.shape[2] != spec.size:
            raise ValueError(f"tube length {data.shape[2]} does not match transform size {spec.size}")
        self.data = data
        self.spec = spec

    @property
    def shape(self):
        return self.data.shape

    def hat(self) -> np.ndarray:
        """Transform-domain array ``X x_3 M``."""
        return self.spec.apply(self.data, axis=2)

    @classmethod
    def from_hat(cls, hat, spec: TransformSpec) -> "FiniteTubalTensor":
        return cls(spec.apply(np.asarray(hat, dtype=complex), axis=2, inverse=True), spec)

    def __repr__(self):
        return f"FiniteTubalTensor(shape={self.shape}, transform={self.spec.kind})"


def finite_identity(p: int, spec: TransformSpec) -> FiniteTubalTensor:
    hat = np.zeros((p, p, spec.size), dtype=complex)
    hat[np.arange(p), np.arange(p), :] = 1.0
    return FiniteTubalTensor.from_hat(hat, spec)


def finite_tprod(X: FiniteTubalTensor, Y: FiniteTubalTensor) -> FiniteTubalTensor:
    if X.spec != Y.spec:
        raise ValueError("operands use different transforms")
    if X.shape[1] != Y.shape[0]:
        raise ValueError(f"inner dimensions differ: {X.shape} times {Y.shape}")
    Xh, Yh = X.hat(), Y.hat()
    Zh = np.einsum("ilk,ljk->ijk", Xh, Yh)
    return FiniteTubalTensor.from_hat(Zh, X.spec)


def finite_to_qt(X: FiniteTubalTensor, frontal_offset: int = 0) -> QtTensor:
    """Embed a finite tubal tensor as a tail-zero quasitubal tensor.

    The transform-domain slices are placed at indices ``frontal_offset``
    onwards and padded with zeros on both sides. Only orthonormal transforms
    give meaningful coordinates, so non-unitary specs are rejected.
    """
    if not X.spec.is_unitary:
        raise ValueError("embedding requires a unitary transform")
    hat = X.hat()
    return QtTensor(frontal_offset, np.moveaxis(hat, 2, 0), np.zeros(X.shape[:2]))
