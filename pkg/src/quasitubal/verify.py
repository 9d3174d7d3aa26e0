"""Seeded property suites and random generators.

Each suite returns a JSON-serializable report ``{"suite", "seed", "passed",
"checks": [...]}`` where every check records its count, worst observed
violation and tolerance. Reports depend only on the seed.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .decomp import (
    order_components,
    qsvd,
    truncate_explicit,
    truncate_multirank,
)
from .quasitube import (
    EcSeq,
    ec_abs,
    ec_add,
    ec_conj,
    ec_geq,
    ec_hadamard,
    ec_l2_norm,
    ec_spectrum,
    ec_sqrt_nonneg,
    ec_sqrt_selfadjoint,
    ec_sub,
    ec_sup_norm,
    multiplier_matrix,
)
from .stream import SliceOracle, certify_band, extract_top_q
from .tensor import QtTensor, qt_h_norm, qt_op_norm, spectral_norms

__all__ = [
    "SUITES",
    "run_suite",
    "random_ecseq",
    "random_qttensor",
    "random_unitary",
    "algebra_suite",
    "eckart_young_suite",
    "stream_suite",
    "exhaustive_subset_check",
]


# -- generators -----------------------------------------------------------------------
def random_ecseq(rng: np.random.Generator, max_band: int = 32, kind: str = "complex",
                 tail: str = "any") -> EcSeq:
    """Random sequence with ``1..max_band`` band entries.

    ``kind`` is ``complex``, ``real`` (self-adjoint) or ``nonneg``; ``tail`` is
    ``any`` or ``zero``.
    """
    n = int(rng.integers(1, max_band + 1))
    lo = int(rng.integers(-max_band, max_band + 1))

    def draw(size):
        x = rng.standard_normal(size)
        if kind == "complex":
            return x + 1j * rng.standard_normal(size)
        if kind == "real":
            return x.astype(complex)
        if kind == "nonneg":
            return np.abs(x).astype(complex)
        raise ValueError(kind)

    t = 0.0 if tail == "zero" or rng.random() < 0.3 else draw(1)[0]
    return EcSeq(lo, draw(n), t)


def random_qttensor(rng: np.random.Generator, m: int | None = None, p: int | None = None,
                    max_dim: int = 6, max_band: int = 9, tail_prob: float = 0.0) -> QtTensor:
    m = int(rng.integers(1, max_dim + 1)) if m is None else m
    p = int(rng.integers(1, max_dim + 1)) if p is None else p
    n = int(rng.integers(1, max_band + 1))
    lo = int(rng.integers(-n, n + 1))
    shape = (n, m, p)
    slices = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    tail = np.zeros((m, p), dtype=complex)
    if rng.random() < tail_prob:
        tail = rng.standard_normal((m, p)) + 1j * rng.standard_normal((m, p))
    return QtTensor(lo, slices, tail)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


# -- report plumbing ------------------------------------------------------------------
class _Check:
    def __init__(self, name: str, tol: float):
        self.name, self.tol = name, tol
        self.count = 0
        self.worst = 0.0
        self.failures = 0

    def record(self, violation: float) -> None:
        """``violation <= tol`` passes."""
        self.count += 1
        v = float(violation)
        if math.isnan(v):
            v = math.inf
        self.worst = max(self.worst, v)
        if v > self.tol:
            self.failures += 1

    def flag(self, ok: bool) -> None:
        self.record(0.0 if ok else math.inf)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "count": self.count,
            "failures": self.failures,
            "worst": self.worst if math.isfinite(self.worst) else "inf",
            "tol": self.tol,
            "passed": self.failures == 0,
        }


def _report(suite: str, seed: int, checks) -> dict:
    items = [c.as_dict() for c in checks]
    return {"suite": suite, "seed": seed, "passed": all(c["passed"] for c in items), "checks": items}


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1.0)


# -- algebra ---------------------------------------------------------------------------
def algebra_suite(seed: int = 0, n: int = 1000, max_band: int = 32) -> dict:
    rng = np.random.default_rng(seed)
    cstar = _Check("c-star-identity", 1e-10)
    radius = _Check("spectral-radius-equals-sup-norm", 1e-10)
    ideal = _Check("ideal-closure", 1e-10)
    order = _Check("order-monotonicity", 0.0)
    sqrt_ = _Check("sqrt-reconstruction", 1e-10)
    abs_ = _Check("abs-reconstruction", 1e-10)
    hs = _Check("hilbert-schmidt-norm", 1e-12)
    for _ in range(n):
        a = random_ecseq(rng, max_band)
        na = ec_sup_norm(a)
        cstar.record(_rel(ec_sup_norm(ec_hadamard(a, ec_conj(a))), na**2))

        s = random_ecseq(rng, max_band, kind="real")
        rad = max(abs(z) for z in ec_spectrum(s).points)
        radius.record(_rel(rad, ec_sup_norm(s)))

        h = random_ecseq(rng, max_band, tail="zero")
        ah = ec_hadamard(a, h)
        nh = ec_l2_norm(h)
        ideal.flag(ah.tail == 0 and ec_hadamard(h, a).tail == 0)
        ideal.record(max(ec_l2_norm(ah) - na * nh, 0.0) / max(na * nh, 1.0))

        # b <= a by construction; order is preserved by adding c and by conjugating with c
        d = random_ecseq(rng, max_band, kind="nonneg")
        b = s
        a2 = ec_add(s, d)
        c = random_ecseq(rng, max_band)
        order.flag(ec_geq(a2, b) and ec_geq(ec_add(a2, c), ec_add(b, c)))
        cc = ec_hadamard(ec_conj(c), c)
        order.flag(ec_geq(ec_hadamard(cc, a2), ec_hadamard(cc, b)))
        pos = random_ecseq(rng, max_band, kind="nonneg")
        order.flag(ec_geq(ec_sqrt_nonneg(ec_add(pos, d)), ec_sqrt_nonneg(pos)))

        r = ec_sqrt_nonneg(pos)
        sqrt_.record(_pt_rel(ec_hadamard(r, r), pos))
        rs = ec_sqrt_selfadjoint(s)
        sqrt_.record(_pt_rel(ec_hadamard(rs, rs), s))
        m = ec_abs(a)
        abs_.record(_pt_rel(ec_hadamard(m, m), ec_hadamard(ec_conj(a), a)))
        abs_.flag(ec_spectrum(m).is_nonneg)

        win = (h.lo - int(rng.integers(0, 4)), h.hi + int(rng.integers(0, 4)))
        fro = np.linalg.norm(multiplier_matrix(h, win), "fro")
        hs.record(abs(fro - nh) / max(nh, 1e-300))
    return _report("algebra", seed, [cstar, radius, ideal, order, sqrt_, abs_, hs])


def _pt_rel(x: EcSeq, y: EcSeq) -> float:
    diff = ec_sub(x, y)
    return ec_sup_norm(diff) / max(ec_sup_norm(y), 1.0)


# -- Eckart-Young ---------------------------------------------------------------------
def _stack(X: QtTensor, lo: int, hi: int) -> np.ndarray:
    return np.concatenate([X.window(lo, hi), X.tail_slice[None]], axis=0)


def _lowrank(rng, m, p, r, scale):
    if r == 0:
        return np.zeros((m, p), dtype=complex)
    A = rng.standard_normal((m, r)) + 1j * rng.standard_normal((m, r))
    B = rng.standard_normal((r, p)) + 1j * rng.standard_normal((r, p))
    return scale * (A @ B) / math.sqrt(r * max(m, p))


def _svd_stack(stack):
    U, s, Vh = np.linalg.svd(stack, full_matrices=False)
    return U, s, Vh


def _from_triples(U, s, Vh, keep) -> np.ndarray:
    """Sum of the rank-one terms selected by the boolean mask ``keep`` (per slice)."""
    return np.einsum("kil,kl,klj->kij", U, s * keep, Vh)


def multirank_competitors(rng, stack: np.ndarray, ranks: np.ndarray, n_random: int):
    """Yield slice stacks whose per-slice ranks are at most ``ranks``."""
    K, m, p = stack.shape
    U, s, Vh = _svd_stack(stack)
    kk = np.arange(s.shape[1])
    best = kk[None, :] < ranks[:, None]
    scale = float(np.max(s)) if s.size else 1.0
    for _ in range(n_random):
        yield np.stack([_lowrank(rng, m, p, int(r), scale * rng.random()) for r in ranks])
    # adversarial: perturbations of the optimum
    for eps in (1e-2, 1e-4, 1e-6):
        Y = np.empty_like(stack)
        for k in range(K):
            r = int(ranks[k])
            A = U[k, :, :r] * s[k, :r] + eps * (rng.standard_normal((m, r)) + 1j * rng.standard_normal((m, r)))
            B = Vh[k, :r, :] + eps * (rng.standard_normal((r, p)) + 1j * rng.standard_normal((r, p)))
            Y[k] = A @ B
        yield Y
        yield _from_triples(U, s, Vh, best) * (1 + eps)
        yield _from_triples(U, s, Vh, best) * (1 - eps)
    # adversarial: swap the last kept triple for the first dropped one on some slice
    for k in range(K):
        r = int(ranks[k])
        if 0 < r < s.shape[1]:
            keep = best.copy()
            keep[k, r - 1], keep[k, r] = False, True
            yield _from_triples(U, s, Vh, keep)


def explicit_competitors(rng, stack: np.ndarray, q: int, n_random: int):
    """Yield slice stacks of total (implicit) rank at most ``q``."""
    K, m, p = stack.shape
    U, s, Vh = _svd_stack(stack)
    kmax = s.shape[1]
    scale = float(np.max(s)) if s.size else 1.0

    def allocation():
        alloc = np.zeros(K, dtype=int)
        for _ in range(q):
            free = np.flatnonzero(alloc < kmax)
            if free.size == 0:
                break
            alloc[rng.choice(free)] += 1
        return alloc

    for _ in range(n_random // 2):
        alloc = allocation()
        yield np.stack([_lowrank(rng, m, p, int(r), scale * rng.random()) for r in alloc])
    # adversarial: per-slice optimal truncations for a random rank allocation
    for _ in range(n_random - n_random // 2):
        alloc = allocation()
        keep = np.arange(kmax)[None, :] < alloc[:, None]
        yield _from_triples(U, s, Vh, keep)
    # adversarial: random subsets of the candidate atoms
    flat = np.argwhere(s > 0)
    for _ in range(20):
        if flat.shape[0] == 0:
            break
        pick = rng.choice(flat.shape[0], size=min(q, flat.shape[0]), replace=False)
        keep = np.zeros_like(s, dtype=bool)
        keep[flat[pick, 0], flat[pick, 1]] = True
        yield _from_triples(U, s, Vh, keep)


def eckart_young_suite(seed: int = 0, n_instances: int = 100, n_competitors: int = 200,
                       margin: float = -1e-10) -> dict:
    rng = np.random.default_rng(seed)
    op_opt = _Check("multirank-op-norm-optimality", -margin)
    h_opt = _Check("explicit-h-norm-optimality", -margin)
    op_val = _Check("explicit-op-residual-equals-next-sigma", 1e-10)
    for _ in range(n_instances):
        X = random_qttensor(rng, max_dim=4, max_band=6, tail_prob=0.3)
        svd = qsvd(X)
        lo, hi = X.lo, X.hi
        stack = _stack(X, lo, hi)
        kmax = min(X.shape)
        ranks = rng.integers(0, kmax + 1, size=stack.shape[0])
        rho = EcSeq(lo, ranks[:-1], int(ranks[-1]))
        Xr = truncate_multirank(svd, rho)
        best = qt_op_norm(X - Xr)
        for Y in multirank_competitors(rng, stack, ranks, n_competitors):
            err = float(np.max(spectral_norms(stack - Y)))
            op_opt.record(best - err)

        # explicit truncation lives in H
        Xh = QtTensor(X.lo, X.slices, np.zeros(X.shape))
        svd_h = qsvd(Xh)
        q = int(rng.integers(0, len(order_components(svd_h)) + 1))
        Xq, _ = truncate_explicit(svd_h, q)
        best_h = qt_h_norm(Xh - Xq)
        for Y in explicit_competitors(rng, Xh.slices, q, n_competitors):
            err = float(np.linalg.norm(Xh.slices - Y))
            h_opt.record(best_h - err)
        nxt = order_components(svd_h, q + 1)
        expect = nxt[q].sigma if len(nxt) > q else 0.0
        op_val.record(abs(qt_op_norm(Xh - Xq) - expect) / max(expect, 1.0))
    ex = exhaustive_subset_check(rng, 50)
    return _report("eckart-young", seed, [op_opt, h_opt, op_val, ex])


def exhaustive_subset_check(rng, n_instances: int = 50) -> _Check:
    """On 2x2 tensors with 3 slices, greedy selection equals the best of all subsets."""
    chk = _Check("exhaustive-subset-oracle", 0.0)
    for _ in range(n_instances):
        sl = rng.standard_normal((3, 2, 2)) + 1j * rng.standard_normal((3, 2, 2))
        X = QtTensor(-1, sl, np.zeros((2, 2)))
        U, s, Vh = _svd_stack(sl)
        cands = [(t, l) for t in range(3) for l in range(2)]
        svd = qsvd(X)
        for q in range(len(cands) + 1):
            errs = []
            for sub in itertools.combinations(cands, q):
                keep = np.zeros_like(s, dtype=bool)
                for t, l in sub:
                    keep[t, l] = True
                errs.append((float(np.linalg.norm(sl - _from_triples(U, s, Vh, keep))), sub))
            errs.sort(key=lambda e: e[0])
            _, comps = truncate_explicit(svd, q)
            greedy = sorted((c.t - X.lo, c.l) for c in comps)
            chk.flag(sorted(errs[0][1]) == greedy)
    return chk


# -- streaming ---------------------------------------------------------------------------
def economy_oracle(calls: list | None = None) -> SliceOracle:
    """Slice energies 4 at k=0 and 1 at k=5; the far slice should never be read."""
    A0 = np.diag([2.0, 0.0]).astype(complex)
    A5 = np.diag([1.0, 0.0]).astype(complex)

    def fn(k):
        if calls is not None:
            calls.append(k)
        return A0 if k == 0 else A5 if k == 5 else np.zeros((2, 2), dtype=complex)

    return SliceOracle(2, 2, fn, total_energy=5.0)


def replay_certificates(oracle: SliceOracle, report) -> list[bool]:
    """Recompute each stage's certificate from scratch on a fresh oracle state."""
    out = []
    comps = list(report.components)
    for j, B in enumerate(report.bands_used):
        ok, leader, st = certify_band(oracle, comps[:j], B)
        out.append(bool(ok and st.sigma2 > st.residual and leader is not None
                        and (leader.l, leader.t) == (comps[j].l, comps[j].t)))
    return out


def stream_suite(seed: int = 0, n: int = 100) -> dict:
    rng = np.random.default_rng(seed)
    same = _Check("offline-equivalence-indices", 0.0)
    sig = _Check("offline-equivalence-sigma", 1e-10)
    cert = _Check("certificate-replay", 0.0)
    energy = _Check("energy-accounting", 1e-8)
    econ = _Check("slice-economy", 0.0)
    for _ in range(n):
        X = random_qttensor(rng, max_dim=4, max_band=7)
        offline = order_components(qsvd(X))
        q = int(rng.integers(1, len(offline) + 2))
        oracle = SliceOracle.from_qttensor(X)
        rep = extract_top_q(oracle, q)
        ref = offline[: min(q, len(offline))]
        same.flag(rep.components.indices == [(c.l, c.t) for c in ref])
        if len(rep.components) == len(ref):
            sig.record(float(np.max(np.abs(rep.components.sigmas - np.array([c.sigma for c in ref])), initial=0.0)))
        for s2, res in rep.certificates:
            cert.flag(s2 > res)
        for ok in replay_certificates(oracle, rep):
            cert.flag(ok)
        tot = oracle.total_energy
        energy.record(abs(float(np.sum(rep.components.sigmas**2)) + rep.residual_energy - tot) / max(tot, 1.0))
    calls: list = []
    rep = extract_top_q(economy_oracle(calls), 1)
    econ.flag(rep.slices_evaluated == 1 and 5 not in calls)
    return _report("stream", seed, [same, sig, cert, energy, econ])


SUITES = {
    "algebra": algebra_suite,
    "eckart-young": eckart_young_suite,
    "stream": stream_suite,
}


def run_suite(name: str, seed: int = 0) -> dict:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; expected one of {sorted(SUITES)}")
    return SUITES[name](seed)
