"""Tube-mode transforms and the finite tube product.

A :class:`TransformSpec` wraps an invertible ``n x n`` matrix ``M``. Tubes are
length-``n`` complex vectors and the tube product is

    x * y = M^{-1} ((M x) . (M y))

with ``.`` the Hadamard product. The registry covers the identity, the unitary
DFT, the orthonormal DCT-II and arbitrary invertible ``custom`` matrices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

__all__ = [
    "TransformSpec",
    "forward_tube",
    "inverse_tube",
    "mode3_apply",
    "tube_mprod",
    "tube_unit",
    "FAST_THRESHOLD",
]

KINDS = ("identity", "dft_unitary", "dct2_orthonormal", "custom")

# above this size DFT/DCT are applied with FFTs instead of explicit matrices
FAST_THRESHOLD = 4096


def _dense_matrix(kind: str, n: int) -> np.ndarray:
    if kind == "identity":
        return np.eye(n, dtype=complex)
    if kind == "dft_unitary":
        j = np.arange(n)
        return np.exp(-2j * np.pi * np.outer(j, j) / n) / np.sqrt(n)
    if kind == "dct2_orthonormal":
        return scipy.fft.dct(np.eye(n), type=2, norm="ortho", axis=0).astype(complex)
    raise ValueError(f"no built-in matrix for kind {kind!r}")


@dataclass(frozen=True, eq=False)
class TransformSpec:
    """Immutable description of an invertible tube transform."""

    kind: str
    size: int
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if int(self.size) < 1:
            raise ValueError("transform size must be positive")
        if self.kind == "custom":
            if self._matrix is None:
                raise ValueError("custom transform requires a matrix")
            M = np.array(self._matrix, dtype=complex)
            if M.shape != (self.size, self.size):
                raise ValueError(f"custom matrix must be {self.size}x{self.size}, got {M.shape}")
            cond = np.linalg.cond(M)
            if not np.isfinite(cond) or cond > 1e14:
                raise ValueError("custom transform matrix is not invertible")
            M.setflags(write=False)
            object.__setattr__(self, "_matrix", M)
        elif self._matrix is not None:
            raise ValueError(f"kind {self.kind!r} does not take a matrix")

    # -- constructors -----------------------------------------------------
    @classmethod
    def identity(cls, n: int) -> "TransformSpec":
        return cls("identity", n)

    @classmethod
    def dft(cls, n: int) -> "TransformSpec":
        return cls("dft_unitary", n)

    @classmethod
    def dct(cls, n: int) -> "TransformSpec":
        return cls("dct2_orthonormal", n)

    @classmethod
    def custom(cls, matrix) -> "TransformSpec":
        M = np.asarray(matrix)
        return cls("custom", M.shape[0], M)

    # -- matrices -----------------------------------------------------------
    @cached_property
    def matrix(self) -> np.ndarray:
        if self.kind == "custom":
            return self._matrix
        M = _dense_matrix(self.kind, self.size)
        M.setflags(write=False)
        return M

    @cached_property
    def inverse_matrix(self) -> np.ndarray:
        if self.kind == "custom":
            Minv = np.linalg.inv(self._matrix)
        else:
            Minv = self.matrix.conj().T.copy()
        Minv.setflags(write=False)
        return Minv

    @property
    def n(self) -> int:
        return self.size

    @property
    def is_unitary(self) -> bool:
        if self.kind != "custom":
            return True
        M = self._matrix
        return bool(np.max(np.abs(M.conj().T @ M - np.eye(self.size))) <= 1e-10)

    @property
    def is_unitary_multiple(self) -> bool:
        """True when ``M^H M = c I`` for some ``c > 0`` (within 1e-10)."""
        if self.kind != "custom":
            return True
        M = self._matrix
        G = M.conj().T @ M
        c = np.trace(G).real / self.size
        return bool(c > 0 and np.max(np.abs(G - c * np.eye(self.size))) <= 1e-10 * max(c, 1.0))

    # -- application ----------------------------------------------------------
    def apply(self, a, axis: int = -1, inverse: bool = False, method: str = "auto") -> np.ndarray:
        """Apply ``M`` (or ``M^{-1}``) along ``axis`` of ``a``.

        ``method`` is ``"matrix"``, ``"fast"`` or ``"auto"``; ``auto`` picks the
        FFT path for DFT/DCT above :data:`FAST_THRESHOLD`.
        """
        a = np.asarray(a, dtype=complex)
        if a.shape[axis] != self.size:
            raise ValueError(
                f"dimension mismatch: axis has length {a.shape[axis]}, transform size {self.size}"
            )
        if self.kind == "identity":
            return a.copy()
        if method == "auto":
            method = "fast" if self.size > FAST_THRESHOLD and self.kind != "custom" else "matrix"
        if method == "fast":
            return self._apply_fast(a, axis, inverse)
        if method != "matrix":
            raise ValueError(f"unknown method {method!r}")
        M = self.inverse_matrix if inverse else self.matrix
        moved = np.moveaxis(a, axis, -1)
        return np.moveaxis(moved @ M.T, -1, axis)

    def _apply_fast(self, a, axis, inverse):
        if self.kind == "dft_unitary":
            f = scipy.fft.ifft if inverse else scipy.fft.fft
            return f(a, axis=axis, norm="ortho")
        if self.kind == "dct2_orthonormal":
            f = scipy.fft.idct if inverse else scipy.fft.dct
            return f(a.real, type=2, axis=axis, norm="ortho") + 1j * f(
                a.imag, type=2, axis=axis, norm="ortho"
            )
        raise ValueError(f"no fast path for kind {self.kind!r}")

    # -- serialization ----------------------------------------------------------
    def to_descriptor(self) -> dict:
        d = {"kind": self.kind, "n": self.size}
        if self.kind == "custom":
            d["matrix"] = [[[z.real, z.imag] for z in row] for row in self._matrix.tolist()]
        return d

    @classmethod
    def from_descriptor(cls, d: dict) -> "TransformSpec":
        kind, n = d["kind"], int(d["n"])
        if kind == "custom":
            M = np.array([[complex(re, im) for re, im in row] for row in d["matrix"]])
            return cls("custom", n, M)
        return cls(kind, n)

    def to_json(self) -> str:
        return json.dumps(self.to_descriptor())

    def __eq__(self, other):
        if not isinstance(other, TransformSpec):
            return NotImplemented
        if (self.kind, self.size) != (other.kind, other.size):
            return False
        return self.kind != "custom" or np.array_equal(self._matrix, other._matrix)

    def __hash__(self):
        return hash((self.kind, self.size))


def _check_tube(x, spec: TransformSpec) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1 or x.shape[0] != spec.size:
        raise ValueError(f"dimension mismatch: tube of shape {x.shape}, transform size {spec.size}")
    return x


def forward_tube(x, spec: TransformSpec) -> np.ndarray:
    """Transform-domain coefficients ``M x`` of a tube."""
    return spec.apply(_check_tube(x, spec))


def inverse_tube(xhat, spec: TransformSpec) -> np.ndarray:
    return spec.apply(_check_tube(xhat, spec), inverse=True)


def mode3_apply(T, spec: TransformSpec, direction: str = "forward") -> np.ndarray:
    """Apply the transform to every tube ``T[i, j, :]`` of an ``m x p x n`` array."""
    T = np.asarray(T, dtype=complex)
    if T.ndim != 3:
        raise ValueError(f"expected an m x p x n array, got shape {T.shape}")
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return spec.apply(T, axis=2, inverse=direction == "inverse")


def tube_mprod(x, y, spec: TransformSpec) -> np.ndarray:
    x = _check_tube(x, spec)
    y = _check_tube(y, spec)
    return spec.apply(spec.apply(x) * spec.apply(y), inverse=True)


def tube_unit(spec: TransformSpec) -> np.ndarray:
    """Multiplicative unit ``M^{-1} 1`` of the tube ring."""
    return spec.apply(np.ones(spec.size, dtype=complex), inverse=True)
