import math

import mpmath

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from growthspec.cartan import (
    CartanError,
    CartanOverflowError,
    GroupElement,
    cartan_projection,
    project_blocks,
    random_rotation,
    riemannian_length,
)
from growthspec.chamber import build_root_system

SL2 = build_root_system("sl2")
SL3 = build_root_system("sl3")
SL2x3 = build_root_system("sl2xsl3")


def svd_oracle(M):
    """Log singular values straight from an SVD, centred and sorted."""
    s = np.log(np.linalg.svd(M, compute_uv=False))
    return np.sort(s - s.mean())[::-1]


def sl2_closed_form(M):
    """Top singular value of a 2x2 unimodular matrix from its Frobenius norm."""
    f2 = float(np.sum(np.asarray(M, dtype=float) ** 2))
    sigma = math.sqrt((f2 + math.sqrt(f2 * f2 - 4.0)) / 2.0)
    return np.array([math.log(sigma), -math.log(sigma)])


def kak(rs, rng, H):
    blocks = []
    for blk, n in zip(rs.blocks, rs.descriptor.factors):
        blocks.append(random_rotation(rng, n) @ np.diag(np.exp(H[blk])) @ random_rotation(rng, n))
    return GroupElement(tuple(blocks))


def test_diagonal_and_rotation():
    g = GroupElement.from_matrices(np.diag([math.e, 1 / math.e]))
    assert np.allclose(cartan_projection(SL2, g), [1, -1], atol=1e-14)
    k = random_rotation(np.random.default_rng(0), 3)
    assert np.allclose(cartan_projection(SL3, GroupElement((k,))), 0, atol=1e-12)
    assert riemannian_length(SL2, g) == pytest.approx(math.sqrt(2), rel=1e-14)


def test_identity_projects_to_zero():
    assert np.array_equal(cartan_projection(SL2x3, GroupElement.identity(SL2x3)), np.zeros(5))


@pytest.mark.parametrize("rs", [SL2, SL3, SL2x3])
def test_recovers_kak_input(rs, rng):
    for _ in range(50):
        H = rs.random_chamber(rng, 1)[0]
        H *= rng.uniform(0, 5) / max(rs.norm(H), 1e-12)
        assert np.allclose(cartan_projection(rs, kak(rs, rng, H)), H, atol=1e-10)


def mp_oracle(M, digits=80):
    """Centred log singular values of an integer matrix in high precision."""
    with mpmath.workdps(digits):
        s = mpmath.svd_r(mpmath.matrix(M.tolist()), compute_uv=False)
        logs = [mpmath.log(x) for x in s]
        mean = sum(logs) / len(logs)
        return np.array(sorted((float(x - mean) for x in logs), reverse=True))


@pytest.mark.parametrize("length", [20, 60, 120])
def test_large_spread_against_high_precision(length, rng):
    # long integer words in SL(3, Z) have singular values far apart, where a
    # plain float SVD loses the small ones
    E = [np.eye(3, dtype=object) for _ in range(6)]
    for k, (i, j) in enumerate([(0, 1), (1, 2), (0, 2), (1, 0), (2, 1), (2, 0)]):
        E[k][i, j] = 1
    M = np.eye(3, dtype=object)
    for k in rng.integers(0, 6, length):
        M = M.dot(E[k])
    assert max(abs(int(x)) for x in M.ravel()) < 1e140
    mu = project_blocks(SL3, [M[None]])[0]
    assert np.allclose(mu, mp_oracle(M), rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("rs", [SL2, SL3])
def test_agrees_with_svd_when_well_conditioned(rs, rng):
    n = rs.ambient_dim
    for _ in range(30):
        M = rng.standard_normal((n, n))
        if np.linalg.det(M) < 0:
            M[0] = -M[0]
        M /= abs(np.linalg.det(M)) ** (1 / n)
        assert np.allclose(cartan_projection(rs, GroupElement((M,))), svd_oracle(M), atol=1e-9)


elementary = st.sampled_from([np.array([[1, 1], [0, 1]]), np.array([[1, 0], [1, 1]]),
                              np.array([[1, -1], [0, 1]]), np.array([[1, 0], [-1, 1]]),
                              np.array([[0, -1], [1, 0]])])


@given(st.lists(elementary, min_size=1, max_size=25))
def test_integer_sl2_closed_form(word):
    M = np.eye(2, dtype=np.int64)
    for e in word:
        M = M @ e
    mu = cartan_projection(SL2, GroupElement.from_matrices(M))
    assert np.allclose(mu, sl2_closed_form(M), rtol=1e-12, atol=1e-12)


@given(st.lists(elementary, min_size=1, max_size=12), st.lists(elementary, min_size=1, max_size=12))
def test_inverse_symmetry_and_subadditivity(w1, w2):
    def mat(w):
        M = np.eye(2, dtype=np.int64)
        for e in w:
            M = M @ e
        return GroupElement.from_matrices(M)

    a, b = mat(w1), mat(w2)
    mu_a = cartan_projection(SL2, a)
    assert np.allclose(cartan_projection(SL2, a.inverse()), -mu_a[::-1], atol=1e-12)
    gap = SL2.norm(cartan_projection(SL2, a @ b) - mu_a) - SL2.norm(cartan_projection(SL2, b))
    assert gap <= 1e-9


def test_bi_invariance(rng):
    for rs in (SL2, SL3):
        n = rs.ambient_dim
        for _ in range(50):
            g = kak(rs, rng, rs.random_chamber(rng, 1)[0])
            k1, k2 = random_rotation(rng, n), random_rotation(rng, n)
            moved = GroupElement((k1 @ g.blocks[0] @ k2,))
            assert np.allclose(cartan_projection(rs, moved), cartan_projection(rs, g), atol=1e-9)


def test_batch_matches_single(rng):
    Ms = np.stack([kak(SL3, rng, SL3.random_chamber(rng, 1)[0]).blocks[0] for _ in range(20)])
    batch = project_blocks(SL3, [Ms])
    single = np.array([cartan_projection(SL3, GroupElement((M,))) for M in Ms])
    assert np.allclose(batch, single, atol=1e-13)


def test_product_group_blocks():
    g = GroupElement.from_matrices(np.diag([2.0, 0.5]), np.diag([4.0, 1.0, 0.25]))
    mu = cartan_projection(SL2x3, g)
    assert np.allclose(mu, [math.log(2), -math.log(2), math.log(4), 0, -math.log(4)], atol=1e-14)


def test_errors():
    with pytest.raises(CartanError, match="singular"):
        cartan_projection(SL2, GroupElement((np.zeros((2, 2)),)))
    with pytest.raises(CartanError, match="unimodular"):
        cartan_projection(SL2, GroupElement((np.diag([2.0, 1.0]),)))
    with pytest.raises(CartanError, match="do not match"):
        cartan_projection(SL3, GroupElement((np.eye(2),)))
    with pytest.raises(CartanError, match="square"):
        GroupElement((np.ones((2, 3)),))
    with pytest.raises(CartanOverflowError):
        cartan_projection(SL2, GroupElement((np.diag([1e200, 1e-200]),)), check=False)
    with pytest.raises(CartanOverflowError):
        cartan_projection(SL2, GroupElement((np.array([[np.inf, 0], [0, 1.0]]),)))


def test_negative_determinant_is_accepted():
    # |det| = 1 suffices; the projection only sees singular values
    g = GroupElement.from_matrices(np.array([[0, 1], [1, 0]]))
    assert np.allclose(cartan_projection(SL2, g), 0)


def test_exact_inverse_tracks_integers():
    g = GroupElement.from_matrices(np.array([[2, 1], [1, 1]]))
    assert g.exact is not None
    assert np.array_equal((g @ g.inverse()).exact[0], np.eye(2, dtype=np.int64))
