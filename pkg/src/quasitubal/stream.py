"""Band-certified extraction of leading components from a lazy slice oracle.

The tensor is only available through ``k -> X_hat[:, :, k]``. For a band
``|k| <= B`` let ``E_in`` be the energy of the (deflated) slices inside the
band and ``sigma_max`` their largest singular value. If

    sigma_max^2 > ||X_deflated||_H^2 - E_in

then no slice outside the band can carry a singular value as large as
``sigma_max``, so the in-band leader is the global leader. The extractor grows
the band until this holds, records the leader, subtracts it from its home
slice and repeats.
"""
from __future__ import annotations

import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .decomp import RANK_RTOL, Component, ComponentList, _fix_phase
from .tensor import QtTensor

__all__ = [
    "SliceOracle",
    "OracleError",
    "BandLimitError",
    "CertStats",
    "ExtractionReport",
    "certify_band",
    "extract_top_q",
    "doubling",
    "MAX_BAND",
]

MAX_BAND = 2**20
TIE_TOL = 1e-12


class OracleError(RuntimeError):
    def __init__(self, k: int, cause: BaseException | str):
        super().__init__(f"slice oracle failed at k={k}: {cause}")
        self.k = k


class BandLimitError(RuntimeError):
    def __init__(self, stage: int, band: int, sigma2: float, residual: float):
        super().__init__(
            f"stage {stage}: band reached {band} without certification "
            f"(sigma_max^2={sigma2:.6g}, out-of-band bound={residual:.6g})"
        )
        self.stage, self.band, self.sigma2, self.residual = stage, band, sigma2, residual


def doubling(B: int) -> int:
    return max(1, 2 * B)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QTT_THREADS", "1")))
    except ValueError:
        return 1


class SliceOracle:
    """Lazy frontal-slice access to a tail-zero quasitubal tensor.

    At least one of ``total_energy`` (``||X||_H^2``) or ``tail_energy`` (a
    non-increasing bound ``B -> sum_{|k|>B} ||X_hat_k||_F^2``) is needed for
    certification; the exact total is preferred when both are given.
    """

    def __init__(
        self,
        m: int,
        p: int,
        slice_fn: Callable[[int], np.ndarray],
        total_energy: float | None = None,
        tail_energy: Callable[[int], float] | None = None,
    ):
        self.m, self.p = int(m), int(p)
        self._slice_fn = slice_fn
        self.total_energy = None if total_energy is None else float(total_energy)
        self.tail_energy = tail_energy

    def slice(self, k: int) -> np.ndarray:
        try:
            A = np.asarray(self._slice_fn(k), dtype=complex)
        except Exception as exc:  # propagate with the failing index
            raise OracleError(k, exc) from exc
        if A.shape != (self.m, self.p):
            raise OracleError(k, f"slice has shape {A.shape}, expected {(self.m, self.p)}")
        return A

    # -- constructors ------------------------------------------------------------
    @classmethod
    def from_qttensor(cls, X: QtTensor) -> "SliceOracle":
        if X.has_tail:
            raise ValueError("extraction needs a tensor in H (zero tail slice)")
        energies = np.sum(np.abs(X.slices) ** 2, axis=(1, 2))
        ks = np.arange(X.lo, X.hi)

        def tail_energy(B: int) -> float:
            return float(np.sum(energies[np.abs(ks) > B]))

        return cls(X.m, X.p, X.slice_at, float(np.sum(energies)), tail_energy)

    @classmethod
    def from_family(cls, descriptor: dict) -> "SliceOracle":
        """Oracle for a closed-form family.

        ``descriptor`` is ``{"generator": family, "params": {...}, "tail_energy": id}``
        with ``id`` one of ``geometric`` (exact), ``zeta-bound`` (upper bound for
        smooth-fourier) or ``finite`` (finite support, summed exactly).
        """
        from .synth import SynthSpec, family_slice

        params = dict(descriptor.get("params", {}))
        spec = SynthSpec(family=descriptor["generator"], **params)
        formula = descriptor.get("tail_energy", "finite")
        fn = lambda k: family_slice(spec, k)  # noqa: E731
        if formula == "geometric":
            if spec.family != "geometric-decay" or spec.band is not None:
                raise ValueError("geometric tail formula needs an unbounded geometric-decay family")
            c, r = spec.scale, spec.effective_decay
            total = c * (1 + r) / (1 - r)
            return cls(spec.m, spec.p, fn, total, lambda B: 2 * c * r ** (B + 1) / (1 - r))
        if formula == "zeta-bound":
            if spec.family != "smooth-fourier" or spec.band is not None:
                raise ValueError("zeta-bound tail formula needs an unbounded smooth-fourier family")
            s4 = 4 * spec.effective_decay
            # |entry|^2 <= 2, so ||R_k||_F^2 <= 2 m p; sum_{k>B} k^-4s <= B^{1-4s}/(4s-1) (+1 for B=0)
            bound = 2 * spec.m * spec.p * spec.scale**2

            def tail(B: int) -> float:
                if B == 0:
                    return 2 * bound * (1 + 1 / (s4 - 1))
                return 2 * bound * B ** (1 - s4) / (s4 - 1)

            return cls(spec.m, spec.p, fn, None, tail)
        if formula == "finite":
            sup = spec.support()
            if sup is None:
                raise ValueError("finite tail formula needs a bounded family")
            energies = {k: float(np.sum(np.abs(fn(k)) ** 2)) for k in range(*sup)}
            total = sum(energies.values())
            return cls(
                spec.m, spec.p, fn, total,
                lambda B: sum(e for k, e in energies.items() if abs(k) > B),
            )
        raise ValueError(f"unknown tail-energy formula {formula!r}")

    @classmethod
    def from_directory(cls, path, total_energy: float) -> "SliceOracle":
        """Oracle over ``slice_{k}.mat`` files; absent indices are zero slices."""
        from .io import read_slice_file

        path = Path(path)
        files = {}
        for f in path.iterdir():
            mt = re.fullmatch(r"slice_(-?\d+)\.mat", f.name)
            if mt:
                files[int(mt.group(1))] = f
        if not files:
            raise ValueError(f"no slice_{{k}}.mat files in {path}")
        k0 = next(iter(files))
        m, p = read_slice_file(files[k0])[1].shape

        def fn(k):
            if k not in files:
                return np.zeros((m, p), dtype=complex)
            kk, A = read_slice_file(files[k])
            if kk != k:
                raise ValueError(f"{files[k].name} declares k={kk}")
            return A

        return cls(m, p, fn, total_energy, None)


@dataclass
class CertStats:
    band: int
    sigma2: float
    residual: float
    e_in: float
    slices_evaluated: int


class _State:
    """Slice cache with per-slice lazy deflation."""

    def __init__(self, oracle: SliceOracle, rtol: float = RANK_RTOL):
        self.oracle = oracle
        self.rtol = rtol
        self.resid: dict[int, np.ndarray] = {}
        self.floor: dict[int, float] = {}
        self.energy: dict[int, float] = {}
        self.top: dict[int, tuple] = {}
        self.n_atoms: dict[int, int] = {}
        self.out_atoms: list[Component] = []
        self.extracted_energy = 0.0

    @property
    def slices_evaluated(self) -> int:
        return len(self.resid)

    def ensure(self, B: int) -> None:
        todo = [k for k in range(-B, B + 1) if k not in self.resid]
        if not todo:
            return
        threads = _threads()
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                mats = list(ex.map(self.oracle.slice, todo))
        else:
            mats = [self.oracle.slice(k) for k in todo]
        for k, A in zip(todo, mats):
            s_max = np.linalg.norm(A, 2) if A.size else 0.0
            self.floor[k] = self.rtol * max(s_max, 1.0)
            self.resid[k] = A.copy()
            self.n_atoms.setdefault(k, 0)
            # atoms extracted while this slice was out of band
            for c in [c for c in self.out_atoms if c.t == k]:
                self.resid[k] -= c.matrix()
                self.n_atoms[k] += 1
                self.out_atoms.remove(c)
            self._refresh(k)

    def _refresh(self, k: int) -> None:
        A = self.resid[k]
        self.energy[k] = float(np.sum(np.abs(A) ** 2))
        U, s, Vh = np.linalg.svd(A, full_matrices=False)
        V = np.conj(Vh.T).copy()
        _fix_phase(U, V, s.shape[0])
        self.top[k] = (float(s[0]) if s.size else 0.0, U[:, 0].copy(), V[:, 0].copy())

    def deflate(self, c: Component) -> None:
        self.extracted_energy += c.sigma**2
        if c.t in self.resid:
            self.resid[c.t] = self.resid[c.t] - c.matrix()
            self.n_atoms[c.t] += 1
            self._refresh(c.t)
        else:
            self.out_atoms.append(c)

    def certify(self, B: int):
        self.ensure(B)
        ks = [k for k in range(-B, B + 1)]
        e_in = math.fsum(self.energy[k] for k in ks)
        leader = None
        best = (-1.0, 0)
        for k in ks:  # ascending k, so strict > keeps the smallest t on ties
            s = self.top[k][0]
            if s > self.floor[k] and s > best[0]:
                best = (s, k)
        o = self.oracle
        if o.total_energy is not None:
            residual = o.total_energy - self.extracted_energy - e_in
        elif o.tail_energy is not None:
            residual = o.tail_energy(B) - sum(c.sigma**2 for c in self.out_atoms)
        else:
            raise ValueError("oracle provides neither total_energy nor tail_energy")
        residual = max(residual, 0.0)
        sigma2 = 0.0
        if best[0] >= 0:
            s, k = best
            sigma2 = s * s
            _, u, v = self.top[k]
            leader = Component(s, self.n_atoms[k], k, u, v)
        ok = leader is not None and sigma2 - residual > TIE_TOL * max(sigma2, 1.0)
        stats = CertStats(B, sigma2, residual, e_in, self.slices_evaluated)
        return ok, leader, stats


def certify_band(oracle: SliceOracle, deflated, B: int, rtol: float = RANK_RTOL):
    """Check whether the leader inside ``|k| <= B`` is the global leader.

    ``deflated`` lists components already removed from the tensor. Returns
    ``(certified, leader, stats)``; ``leader`` is ``None`` when no in-band
    slice has a nonzero singular value left.
    """
    if B < 0:
        raise ValueError("band must be non-negative")
    st = _State(oracle, rtol)
    for c in deflated:
        st.deflate(c)
    return st.certify(B)


@dataclass
class ExtractionReport:
    components: ComponentList
    bands_used: list = field(default_factory=list)
    certificates: list = field(default_factory=list)
    slices_evaluated: int = 0
    residual_energy: float = 0.0
    exhausted: bool = False


def extract_top_q(
    oracle: SliceOracle,
    q: int,
    band_schedule: Callable[[int], int] = doubling,
    max_band: int = MAX_BAND,
    rtol: float = RANK_RTOL,
    exhaust_tol: float = 1e-12,
) -> ExtractionReport:
    """Extract the ``q`` leading components of the oracle's tensor.

    The band starts at 0, grows by ``band_schedule`` and never shrinks between
    stages. Extraction stops early (``exhausted=True``) once no in-band
    component remains and the out-of-band energy bound drops below
    ``exhaust_tol * max(total, 1)``.
    """
    if q < 0:
        raise ValueError("q must be non-negative")
    st = _State(oracle, rtol)
    report = ExtractionReport(ComponentList([], "streaming"))
    scale = max(oracle.total_energy or 0.0, 1.0)
    B = 0
    for stage in range(q):
        while True:
            ok, leader, stats = st.certify(B)
            if ok:
                break
            if leader is None and stats.residual <= exhaust_tol * scale:
                report.exhausted = True
                break
            if B >= max_band:
                raise BandLimitError(stage, B, stats.sigma2, stats.residual)
            B = min(band_schedule(B), max_band)
        if report.exhausted:
            break
        report.components.components.append(leader)
        report.bands_used.append(B)
        report.certificates.append((stats.sigma2, stats.residual))
        st.deflate(leader)
    report.slices_evaluated = st.slices_evaluated
    if oracle.total_energy is not None:
        report.residual_energy = oracle.total_energy - st.extracted_energy
    else:
        e_in = math.fsum(st.energy.values())
        report.residual_energy = e_in + oracle.tail_energy(B)
    return report
