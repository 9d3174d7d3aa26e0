import numpy as np
import pytest

from quasitubal.transform import (
    FAST_THRESHOLD,
    TransformSpec,
    forward_tube,
    inverse_tube,
    mode3_apply,
    tube_mprod,
    tube_unit,
)

SPECS = [TransformSpec.identity(5), TransformSpec.dft(5), TransformSpec.dct(5)]


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def dft_oracle(n):
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(-2j * np.pi * j * k / n) / np.sqrt(n)


def test_forward_examples():
    assert np.allclose(forward_tube([1, 2, 3], TransformSpec.identity(3)), [1, 2, 3])
    assert np.allclose(forward_tube([1, 0, 0, 0], TransformSpec.dft(4)), [0.5] * 4)
    P = TransformSpec.custom([[0, 1], [1, 0]])
    assert np.allclose(forward_tube([3 + 1j, -2], P), [-2, 3 + 1j])


def test_inverse_examples(rng):
    assert np.allclose(inverse_tube([1, 2], TransformSpec.identity(2)), [1, 2])
    assert np.allclose(inverse_tube([1, 1, 1, 1], TransformSpec.dft(4)), [2, 0, 0, 0], atol=1e-15)
    for spec in SPECS:
        x = crandn(rng, 5)
        y = inverse_tube(forward_tube(x, spec), spec)
        assert np.linalg.norm(y - x) / np.linalg.norm(x) < 1e-10


def test_dft_matrix_matches_definition():
    for n in (1, 2, 7, 16):
        assert np.allclose(TransformSpec.dft(n).matrix, dft_oracle(n), atol=1e-14)


def test_registered_matrices_unitary():
    for n in (1, 3, 8):
        for spec in (TransformSpec.identity(n), TransformSpec.dft(n), TransformSpec.dct(n)):
            M = spec.matrix
            assert np.max(np.abs(M.conj().T @ M - np.eye(n))) < 1e-12
            assert np.linalg.norm(spec.inverse_matrix @ M - np.eye(n)) < 1e-10
            assert spec.is_unitary


def test_dct_first_row_constant():
    M = TransformSpec.dct(6).matrix
    assert np.allclose(M[0], 1 / np.sqrt(6))


def test_custom_inverse_and_flags(rng):
    M = crandn(rng, 4, 4)
    spec = TransformSpec.custom(M)
    assert not spec.is_unitary and not spec.is_unitary_multiple
    assert np.linalg.norm(spec.inverse_matrix @ spec.matrix - np.eye(4)) < 1e-10
    assert TransformSpec.custom(3 * TransformSpec.dft(4).matrix).is_unitary_multiple


def test_custom_rejects_singular():
    with pytest.raises(ValueError):
        TransformSpec.custom(np.ones((3, 3)))
    with pytest.raises(ValueError):
        TransformSpec("fourier", 3)


def test_dimension_mismatch():
    spec = TransformSpec.dft(4)
    with pytest.raises(ValueError):
        forward_tube([1, 2, 3], spec)
    with pytest.raises(ValueError):
        tube_mprod([1, 2, 3, 4], [1, 2], spec)
    with pytest.raises(ValueError):
        mode3_apply(np.zeros((2, 2, 3)), spec)


def test_mode3(rng):
    T = crandn(rng, 2, 3, 4)
    assert np.array_equal(mode3_apply(T, TransformSpec.identity(4)), T)
    spec = TransformSpec.dft(4)
    back = mode3_apply(mode3_apply(T, spec), spec, "inverse")
    assert np.linalg.norm(back - T) < 1e-10
    x = crandn(rng, 4)
    assert np.allclose(mode3_apply(x[None, None, :], spec)[0, 0], forward_tube(x, spec))
    # each tube transformed independently
    ref = np.einsum("kn,ijn->ijk", spec.matrix, T)
    assert np.allclose(mode3_apply(T, spec), ref)


def test_mprod_examples():
    out = tube_mprod([1, 2, 0], [0, 1, 5], TransformSpec.identity(3))
    assert np.allclose(out, [0, 2, 0])
    a, b, c, d = 1.0, -2.0, 0.5 + 1j, 3.0
    out = tube_mprod([1, 0, 0, 0], [a, b, c, d], TransformSpec.dft(4))
    assert np.allclose(out, np.array([a, b, c, d]) / 2)


def test_mprod_is_scaled_circular_convolution(rng):
    n = 6
    x, y = crandn(rng, n), crandn(rng, n)
    conv = np.array([sum(x[j] * y[(k - j) % n] for j in range(n)) for k in range(n)])
    assert np.allclose(tube_mprod(x, y, TransformSpec.dft(n)), conv / np.sqrt(n))


def test_basis_dependence():
    phi1, phi2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    F = TransformSpec.identity(2)
    assert np.array_equal(tube_mprod(phi1, phi2, F), np.zeros(2))
    G = TransformSpec.custom(np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    out = tube_mprod(phi1, phi2, G)
    assert np.max(np.abs(out - np.array([0, 1 / np.sqrt(2)]))) < 1e-14


@pytest.mark.parametrize("spec", SPECS + [TransformSpec.custom(np.diag([1, 2, 3, 4, 5.0]) + 0.1)])
def test_ring_laws(rng, spec):
    x, y, z = (crandn(rng, spec.size) for _ in range(3))
    e = tube_unit(spec)
    assert np.allclose(tube_mprod(x, y, spec), tube_mprod(y, x, spec), atol=1e-10)
    lhs = tube_mprod(tube_mprod(x, y, spec), z, spec)
    rhs = tube_mprod(x, tube_mprod(y, z, spec), spec)
    assert np.allclose(lhs, rhs, atol=1e-10)
    assert np.allclose(tube_mprod(x, e, spec), x, atol=1e-10)
    assert np.allclose(tube_mprod(e, x, spec), x, atol=1e-10)


def test_isometry(rng):
    for spec in SPECS:
        x = crandn(rng, 5)
        assert abs(np.linalg.norm(forward_tube(x, spec)) - np.linalg.norm(x)) < 1e-10


@pytest.mark.parametrize("maker", [TransformSpec.dft, TransformSpec.dct])
def test_fast_path_agrees(rng, maker):
    n = FAST_THRESHOLD + 3
    spec = maker(n)
    x = crandn(rng, 2, n)
    fast = spec.apply(x, method="fast")
    dense = spec.apply(x, method="matrix")
    assert np.max(np.abs(fast - dense)) < 1e-9
    back = spec.apply(fast, inverse=True, method="fast")
    assert np.max(np.abs(back - x)) < 1e-9


def test_descriptor_round_trip(rng):
    for spec in SPECS + [TransformSpec.custom(crandn(rng, 3, 3))]:
        again = TransformSpec.from_descriptor(spec.to_descriptor())
        assert again == spec
        assert np.array_equal(again.matrix, spec.matrix)
