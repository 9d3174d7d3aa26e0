import numpy as np
import pytest

from quasitubal.decomp import ComponentList, order_components, qsvd
from quasitubal.io import write_slice_file
from quasitubal.stream import (
    BandLimitError,
    OracleError,
    SliceOracle,
    certify_band,
    doubling,
    extract_top_q,
)
from quasitubal.synth import SynthSpec, family_slice, synthesize
from quasitubal.tensor import QtTensor
from quasitubal.verify import economy_oracle, random_qttensor, replay_certificates


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def two_slice(e0, e5):
    A0 = np.diag([np.sqrt(e0), 0.0])
    A5 = np.diag([np.sqrt(e5), 0.0])
    return SliceOracle(2, 2, lambda k: A0 if k == 0 else A5 if k == 5 else np.zeros((2, 2)),
                       total_energy=e0 + e5)


def test_single_slice_certifies(rng):
    A = crandn(rng, 3, 2)
    o = SliceOracle.from_qttensor(QtTensor(0, [A], np.zeros((3, 2))))
    ok, leader, st = certify_band(o, [], 0)
    assert ok
    U, s, Vh = np.linalg.svd(A)
    assert leader.sigma == pytest.approx(s[0], rel=1e-14)
    assert (leader.l, leader.t) == (0, 0)
    assert np.allclose(leader.matrix(), s[0] * np.outer(U[:, 0], Vh[0]))


def test_two_slice_certificates():
    ok, _, st = certify_band(two_slice(4, 1), [], 0)
    assert ok and st.e_in == 4 and st.residual == 1 and st.sigma2 == pytest.approx(4)
    assert st.slices_evaluated == 1
    ok, _, st = certify_band(two_slice(1, 4), [], 0)
    assert not ok


def test_tie_is_not_certified():
    ok, _, st = certify_band(two_slice(1, 1), [], 0)
    assert not ok
    r = extract_top_q(two_slice(1, 1), 2)
    assert r.components.indices == [(0, 0), (0, 5)]


def test_economy():
    calls = []
    r = extract_top_q(economy_oracle(calls), 1)
    assert r.slices_evaluated == 1 and calls == [0]


def test_q_zero():
    calls = []
    r = extract_top_q(economy_oracle(calls), 0)
    assert len(r.components) == 0 and r.slices_evaluated == 0 and calls == []


def test_offline_equivalence(rng):
    for _ in range(30):
        X = random_qttensor(rng, max_dim=4, max_band=6)
        off = order_components(qsvd(X))
        r = extract_top_q(SliceOracle.from_qttensor(X), len(off))
        assert r.components.indices == off.indices
        assert np.max(np.abs(r.components.sigmas - off.sigmas)) < 1e-10
        assert r.components.provenance == "streaming"
        for c, d in zip(r.components, off):
            assert np.allclose(c.matrix(), d.matrix(), atol=1e-9)


def test_exhaustion_stops_early(rng):
    X = random_qttensor(rng, m=2, p=2, max_band=3)
    n = len(order_components(qsvd(X)))
    r = extract_top_q(SliceOracle.from_qttensor(X), n + 4)
    assert r.exhausted and len(r.components) == n
    assert abs(r.residual_energy) < 1e-9


def test_leader_is_global_argmax(rng):
    for _ in range(30):
        X = random_qttensor(rng, max_dim=3, max_band=8)
        o = SliceOracle.from_qttensor(X)
        off = order_components(qsvd(X))
        j = int(rng.integers(0, len(off)))
        for B in range(0, 10):
            ok, leader, _ = certify_band(o, list(off)[:j], B)
            if ok:
                assert (leader.l, leader.t) == (off[j].l, off[j].t)
                assert leader.sigma == pytest.approx(off[j].sigma, rel=1e-10)


def test_certificates_monotone_in_band(rng):
    for _ in range(30):
        X = random_qttensor(rng, max_dim=3, max_band=8)
        o = SliceOracle.from_qttensor(X)
        off = order_components(qsvd(X))
        j = int(rng.integers(0, len(off)))
        flags = [certify_band(o, list(off)[:j], B)[0] for B in range(12)]
        first = flags.index(True) if True in flags else len(flags)
        assert all(flags[first:])


def test_deflation_exactness(rng):
    X = random_qttensor(rng, m=3, p=3, max_band=4)
    off = order_components(qsvd(X))
    for n in range(len(off) - 1):
        nxt = off[n + 1]
        if nxt.t != off[n].t:
            continue
        A = X.slice_at(nxt.t).copy()
        for c in list(off)[: n + 1]:
            if c.t == nxt.t:
                A -= c.matrix()
        assert abs(np.linalg.norm(A, 2) - nxt.sigma) < 1e-9


def test_energy_accounting(rng):
    X = random_qttensor(rng, max_dim=4, max_band=6)
    o = SliceOracle.from_qttensor(X)
    r = extract_top_q(o, 5)
    total = o.total_energy
    assert abs(np.sum(r.components.sigmas**2) + r.residual_energy - total) <= 1e-8 * total
    assert r.residual_energy >= -1e-9


def test_geometric_closed_form_oracle():
    d = {"generator": "geometric-decay", "params": {"m": 3, "p": 3, "band": None, "seed": 4},
         "tail_energy": "geometric"}
    o = SliceOracle.from_family(d)
    spec = SynthSpec("geometric-decay", 3, 3, band=None, seed=4)
    inside = sum(np.linalg.norm(family_slice(spec, k)) ** 2 for k in range(-30, 31))
    assert inside + o.tail_energy(30) == pytest.approx(o.total_energy, rel=1e-12)
    r = extract_top_q(o, 12)
    assert len(r.components) == 12
    assert all(np.isfinite(r.bands_used))
    assert all(s > res for s, res in r.certificates)
    assert all(replay_certificates(o, r))
    assert r.bands_used == sorted(r.bands_used)


def test_zeta_bound_is_an_upper_bound():
    d = {"generator": "smooth-fourier", "params": {"m": 2, "p": 2, "band": None, "seed": 0},
         "tail_energy": "zeta-bound"}
    o = SliceOracle.from_family(d)
    spec = SynthSpec("smooth-fourier", 2, 2, band=None, seed=0)
    e = {k: np.linalg.norm(family_slice(spec, k)) ** 2 for k in range(-400, 401)}
    prev = np.inf
    for B in (0, 1, 2, 5, 20, 100):
        partial = sum(v for k, v in e.items() if abs(k) > B)
        assert o.tail_energy(B) >= partial
        assert o.tail_energy(B) <= prev
        prev = o.tail_energy(B)
    assert o.tail_energy(10**6) < 1e-12
    r = extract_top_q(o, 3)
    assert len(r.components) == 3


def test_tail_bound_oracle_agrees_with_exact_total(rng):
    X = random_qttensor(rng, m=2, p=3, max_band=6)
    exact = SliceOracle.from_qttensor(X)
    bound_only = SliceOracle(2, 3, X.slice_at, None, exact.tail_energy)
    a = extract_top_q(exact, 4)
    b = extract_top_q(bound_only, 4)
    assert a.components.indices == b.components.indices


def test_finite_family_oracle():
    d = {"generator": "random-banded", "params": {"m": 2, "p": 2, "band": 2, "seed": 1}}
    o = SliceOracle.from_family(d)
    X = synthesize(SynthSpec("random-banded", 2, 2, band=2, seed=1))
    assert extract_top_q(o, 5).components.indices == order_components(qsvd(X), 5).indices


def test_directory_oracle(tmp_path, rng):
    X = random_qttensor(rng, m=2, p=2, max_band=4)
    for k in range(X.lo, X.hi):
        write_slice_file(tmp_path / f"slice_{k}.mat", k, X.slice_at(k))
    o = SliceOracle.from_directory(tmp_path, float(np.sum(np.abs(X.slices) ** 2)))
    assert extract_top_q(o, 3).components.indices == order_components(qsvd(X), 3).indices


def test_oracle_failure_reports_index():
    def bad(k):
        if k == 1:
            raise RuntimeError("disk gone")
        return np.eye(2) * (k == 0) * 0.1

    o = SliceOracle(2, 2, bad, total_energy=5.0)
    with pytest.raises(OracleError) as info:
        extract_top_q(o, 1)
    assert info.value.k == 1
    wrong = SliceOracle(2, 2, lambda k: np.zeros((3, 3)), total_energy=1.0)
    with pytest.raises(OracleError):
        certify_band(wrong, [], 0)


def test_missing_energy_information():
    o = SliceOracle(1, 1, lambda k: np.ones((1, 1)))
    with pytest.raises(ValueError):
        certify_band(o, [], 0)


def test_band_limit_error():
    o = two_slice(1, 4)
    with pytest.raises(BandLimitError) as info:
        extract_top_q(o, 1, max_band=4)
    assert info.value.stage == 0 and info.value.band == 4


def test_rejects_nonzero_tail():
    with pytest.raises(ValueError):
        SliceOracle.from_qttensor(QtTensor(0, [], np.eye(2)))


def test_custom_schedule_and_threads(rng, monkeypatch):
    X = random_qttensor(rng, m=3, p=2, max_band=9)
    o = SliceOracle.from_qttensor(X)
    base = extract_top_q(o, 6)
    lin = extract_top_q(o, 6, band_schedule=lambda B: B + 1)
    assert lin.components.indices == base.components.indices
    monkeypatch.setenv("QTT_THREADS", "4")
    par = extract_top_q(o, 6)
    assert par.components.indices == base.components.indices
    assert np.array_equal(par.components.sigmas, base.components.sigmas)
    assert doubling(0) == 1 and doubling(3) == 6


def test_negative_q():
    with pytest.raises(ValueError):
        extract_top_q(economy_oracle(), -1)
    with pytest.raises(ValueError):
        certify_band(economy_oracle(), ComponentList(), -1)
