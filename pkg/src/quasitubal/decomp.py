"""Quasitubal SVD, rank notions and rank truncations.

The q-SVD is computed slice by slice in the transform domain: every band
slice and the tail slice get their own matrix SVD, which makes ``U`` and
``V`` f-unitary and ``S`` f-diagonal with pointwise ordered singular
quasitubes.

Numerical rank uses the floor ``sigma > rtol * max(sigma_max(slice), 1)`` with
``rtol = 1e-10`` by default; the same floor decides which transform-domain
atoms count as components.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .quasitube import EcSeq
from .tensor import FiniteTubalTensor, QtTensor, union_band

__all__ = [
    "QSvd",
    "TSvd",
    "Component",
    "ComponentList",
    "NotInHError",
    "InfiniteCandidateError",
    "RankRangeError",
    "RANK_RTOL",
    "qsvd",
    "tsvd_finite",
    "tsvd_truncate",
    "multirank",
    "qrank",
    "implicit_rank",
    "truncate_multirank",
    "truncate_qrank",
    "order_components",
    "truncate_explicit",
    "components_tensor",
    "rank_f",
]

RANK_RTOL = 1e-10


class NotInHError(ValueError):
    """The operation needs a tensor with zero tail slice."""


class InfiniteCandidateError(ValueError):
    """Ordering was requested over an infinite set of equal tail components."""


class RankRangeError(ValueError):
    pass


def _ct(A: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(A, -1, -2))


def _fix_phase(U: np.ndarray, V: np.ndarray, k: int) -> None:
    """Make the first nonzero entry of every column of ``U`` real positive, in place.

    The first ``k`` columns of ``V`` get the same phase so that ``U S V^H`` is
    unchanged; the remaining columns of ``V`` are normalized on their own.
    """

    def phases(W):
        mask = np.abs(W) > 1e-12
        first = np.argmax(mask, axis=-2)
        lead = np.take_along_axis(W, first[..., None, :], axis=-2)[..., 0, :]
        mag = np.abs(lead)
        return np.where(mag > 0, lead / np.where(mag > 0, mag, 1), 1.0)

    ph_u = phases(U)
    U *= np.conj(ph_u)[..., None, :]
    V[..., :k] *= np.conj(ph_u[..., :k])[..., None, :]
    if V.shape[-1] > k:
        ph_v = phases(V[..., k:])
        V[..., k:] *= np.conj(ph_v)[..., None, :]


def _batched_svd(stack: np.ndarray, first_index: int):
    try:
        U, s, Vh = np.linalg.svd(stack, full_matrices=True)
    except np.linalg.LinAlgError:
        for n, A in enumerate(stack):
            try:
                np.linalg.svd(A)
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError(f"SVD failed on frontal slice {first_index + n}") from exc
        raise
    V = _ct(Vh).copy()
    _fix_phase(U, V, s.shape[-1])
    return U, s, V


def _diag_stack(s: np.ndarray, m: int, p: int) -> np.ndarray:
    S = np.zeros(s.shape[:-1] + (m, p), dtype=complex)
    k = s.shape[-1]
    S[..., np.arange(k), np.arange(k)] = s
    return S


@dataclass(frozen=True)
class QSvd:
    """Factors of ``X = U * S * V^*`` with f-unitary ``U``, ``V`` and f-diagonal ``S``."""

    U: QtTensor
    S: QtTensor
    V: QtTensor
    rtol: float = RANK_RTOL

    @property
    def shape(self):
        return (self.U.m, self.V.m)

    @property
    def kmin(self) -> int:
        return min(self.shape)

    @property
    def band(self):
        return union_band(self.U, self.S, self.V) if any(
            t.band is not None for t in (self.U, self.S, self.V)
        ) else None

    def sigma_at(self, k: int) -> np.ndarray:
        S = self.S.slice_at(k)
        return np.real(np.diagonal(S))[: self.kmin].copy()

    def singular_quasitubes(self) -> list[EcSeq]:
        return [self.S.entry(j, j) for j in range(self.kmin)]

    def reconstruct(self) -> QtTensor:
        return self.U @ self.S @ self.V.H


def qsvd(X: QtTensor, rtol: float = RANK_RTOL) -> QSvd:
    """Slice-wise SVD over the band and the tail slice."""
    stack = np.concatenate([X.slices, X.tail_slice[None]], axis=0)
    U, s, V = _batched_svd(stack, X.lo)
    S = _diag_stack(s, X.m, X.p)
    return QSvd(
        QtTensor(X.lo, U[:-1], U[-1]),
        QtTensor(X.lo, S[:-1], S[-1]),
        QtTensor(X.lo, V[:-1], V[-1]),
        rtol,
    )


# -- ranks ------------------------------------------------------------------------
def _as_svd(obj) -> QSvd:
    return obj if isinstance(obj, QSvd) else qsvd(obj)


def _rank_counts(sig: np.ndarray, rtol: float) -> np.ndarray:
    if sig.shape[-1] == 0:
        return np.zeros(sig.shape[:-1], dtype=np.int64)
    floor = rtol * np.maximum(sig[..., :1], 1.0)
    return np.sum(sig > floor, axis=-1).astype(np.int64)


def _sigma_stack(svd: QSvd) -> tuple[int, np.ndarray, np.ndarray]:
    S = svd.S
    k = svd.kmin
    band = np.real(np.diagonal(S.slices, axis1=1, axis2=2))[:, :k]
    tail = np.real(np.diagonal(S.tail_slice))[:k]
    return S.lo, band, tail


def multirank(obj, rtol: float | None = None) -> EcSeq:
    """Per-slice numerical ranks as an integer :class:`EcSeq`."""
    svd = _as_svd(obj)
    rtol = svd.rtol if rtol is None else rtol
    lo, band, tail = _sigma_stack(svd)
    return EcSeq(lo, _rank_counts(band, rtol), int(_rank_counts(tail, rtol)))


def qrank(obj, rtol: float | None = None) -> int:
    """Number of nonzero singular quasitubes."""
    rho = multirank(obj, rtol)
    return int(max(rho.points().max(), 0))


def implicit_rank(obj, rtol: float | None = None):
    """Count of nonzero transform-domain singular values; ``math.inf`` if the tail has any."""
    rho = multirank(obj, rtol)
    if rho.tail > 0:
        return math.inf
    return int(np.sum(rho.values))


def rank_f(X: QtTensor, rtol: float = RANK_RTOL):
    """Dimension of the image of ``X`` as a complex-linear map (equals the implicit rank)."""
    return implicit_rank(qsvd(X, rtol))


# -- truncations ------------------------------------------------------------------
def _truncate_slices(U, S, V, r):
    kk = np.arange(S.shape[-1])
    mask = (kk < np.asarray(r)[..., None]).astype(float)
    Sm = S * mask[..., None, :]
    return U @ Sm @ _ct(V)


def truncate_multirank(svd: QSvd, rho: EcSeq) -> QtTensor:
    """Keep the leading ``rho[k]`` singular triples of every slice ``k``."""
    if isinstance(rho, (int, np.integer)):
        rho = EcSeq(0, (), int(rho))
    pts = np.real(rho.points())
    if np.any(pts < 0) or np.any(pts > svd.kmin):
        raise RankRangeError(f"multi-rank values must lie in [0, {svd.kmin}]")
    lo, hi = union_band(svd.U, svd.S, svd.V)
    if rho.band is not None:
        lo, hi = (min(lo, rho.lo), max(hi, rho.hi)) if hi > lo else rho.band
    r_band = np.real(rho.window(lo, hi)).astype(int)
    band = _truncate_slices(svd.U.window(lo, hi), svd.S.window(lo, hi), svd.V.window(lo, hi), r_band)
    tail = _truncate_slices(svd.U.tail_slice, svd.S.tail_slice, svd.V.tail_slice, int(np.real(rho.tail)))
    return QtTensor(lo, band, tail)


def truncate_qrank(svd: QSvd, r: int) -> QtTensor:
    if not 0 <= r <= svd.kmin:
        raise RankRangeError(f"q-rank must lie in [0, {svd.kmin}], got {r}")
    return truncate_multirank(svd, EcSeq(0, (), int(r)))


# -- components and the explicit truncation -------------------------------------------
@dataclass(frozen=True, eq=False)
class Component:
    """Rank-one transform-domain atom ``sigma * u v^H`` living in frontal slice ``t``."""

    sigma: float
    l: int
    t: int
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def matrix(self) -> np.ndarray:
        return self.sigma * np.outer(self.u, np.conj(self.v))


@dataclass
class ComponentList:
    """Components in descending ``sigma`` order, ties broken by ``(t, l)`` ascending."""

    components: list = field(default_factory=list)
    provenance: str = "offline"

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([c.sigma for c in self.components], dtype=float)

    @property
    def indices(self) -> list[tuple[int, int]]:
        return [(c.l, c.t) for c in self.components]


def order_components(svd: QSvd, limit: int | None = None) -> ComponentList:
    """Globally ordered nonzero atoms of the q-SVD.

    With ``limit=None`` every nonzero atom is returned, which needs a zero
    tail. A nonzero tail is tolerated only when the first ``limit`` atoms all
    lie strictly above the largest tail singular value.
    """
    lo, band, tail = _sigma_stack(svd)
    n, k = band.shape
    if n:
        floor = svd.rtol * np.maximum(band[:, :1], 1.0)
        keep = band > floor
    else:
        keep = np.zeros((0, k), dtype=bool)
    tt, ll = np.nonzero(keep)
    sig = band[tt, ll]
    order = np.lexsort((ll, tt, -sig))
    tt, ll, sig = tt[order], ll[order], sig[order]

    tail_live = _rank_counts(tail, svd.rtol) > 0
    if tail_live:
        if limit is None:
            raise InfiniteCandidateError("tensor has a nonzero tail: infinitely many components")
        tmax = float(tail[0])
        if limit > len(sig) or (limit > 0 and not sig[limit - 1] > tmax):
            raise InfiniteCandidateError(
                f"the first {limit} components are not separated from the constant tail"
            )
    if limit is not None:
        tt, ll, sig = tt[:limit], ll[:limit], sig[:limit]

    comps = []
    for t_i, l_i, s_i in zip(tt.tolist(), ll.tolist(), sig.tolist()):
        t = lo + t_i
        comps.append(
            Component(
                float(s_i), int(l_i), int(t),
                svd.U.slice_at(t)[:, l_i].copy(),
                svd.V.slice_at(t)[:, l_i].copy(),
            )
        )
    return ComponentList(comps, "offline")


def components_tensor(components, m: int, p: int) -> QtTensor:
    """Sum of component atoms as a tail-zero tensor."""
    comps = list(components)
    if not comps:
        return QtTensor(0, np.zeros((0, m, p)), np.zeros((m, p)))
    lo = min(c.t for c in comps)
    hi = max(c.t for c in comps) + 1
    slices = np.zeros((hi - lo, m, p), dtype=complex)
    for c in comps:
        slices[c.t - lo] += c.matrix()
    return QtTensor(lo, slices, np.zeros((m, p)))


def truncate_explicit(svd: QSvd, q: int) -> tuple[QtTensor, ComponentList]:
    """Sum of the ``q`` globally leading atoms (optimal in H-norm among rank-``q`` tensors)."""
    if q < 0:
        raise RankRangeError("q must be non-negative")
    if svd.S.has_tail:
        raise NotInHError("explicit truncation needs a tensor with zero tail")
    comps = order_components(svd, q)
    return components_tensor(comps, *svd.shape), comps


# -- finite tSVD ------------------------------------------------------------------------
@dataclass(frozen=True)
class TSvd:
    U: FiniteTubalTensor
    S: FiniteTubalTensor
    V: FiniteTubalTensor
    optimal: bool

    def sigma_hat(self) -> np.ndarray:
        """Transform-domain singular values, shape ``(n, min(m, p))``."""
        Sh = np.moveaxis(self.S.hat(), 2, 0)
        k = min(Sh.shape[1:])
        return np.real(np.diagonal(Sh, axis1=1, axis2=2))[:, :k]


def tsvd_finite(X: FiniteTubalTensor) -> TSvd:
    """tSVD under the transform of ``X``: transform, slice SVDs, inverse transform.

    Eckart-Young optimality of truncations only holds when ``M`` is a nonzero
    multiple of a unitary matrix; otherwise a warning is emitted and the
    result carries ``optimal=False``.
    """
    spec = X.spec
    optimal = spec.is_unitary_multiple
    if not optimal:
        warnings.warn("transform is not a multiple of a unitary matrix; truncations are not optimal",
                      stacklevel=2)
    m, p, _ = X.shape
    hat = np.moveaxis(X.hat(), 2, 0)
    U, s, V = _batched_svd(hat, 0)
    S = _diag_stack(s, m, p)
    back = lambda A: FiniteTubalTensor.from_hat(np.moveaxis(A, 0, 2), spec)
    return TSvd(back(U), back(S), back(V), optimal)


def tsvd_truncate(res: TSvd, rho) -> FiniteTubalTensor:
    """Multi-rank truncation (``rho`` per transform slice) or t-rank truncation (scalar ``rho``)."""
    Uh = np.moveaxis(res.U.hat(), 2, 0)
    Sh = np.moveaxis(res.S.hat(), 2, 0)
    Vh = np.moveaxis(res.V.hat(), 2, 0)
    n = Sh.shape[0]
    rho = np.broadcast_to(np.asarray(rho, dtype=int), (n,))
    if np.any(rho < 0) or np.any(rho > min(Sh.shape[1:])):
        raise RankRangeError("rank out of range")
    out = _truncate_slices(Uh, Sh, Vh, rho)
    return FiniteTubalTensor.from_hat(np.moveaxis(out, 0, 2), res.S.spec)
