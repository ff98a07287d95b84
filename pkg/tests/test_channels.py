import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmcr import catalog
from qmcr import channels as ch
from qmcr import densela as la
from qmcr import random_ops as ro
from qmcr import tom as tm
from qmcr.channels import KrausMap
from qmcr.errors import DimensionMismatch, InvalidWeights

seeds = st.integers(0, 2**32 - 1)
X = np.array([[0, 1], [1, 0]], dtype=complex)


def test_superop_examples():
    assert np.array_equal(ch.to_superop(ch.identity_channel(2)).matrix, np.eye(4))
    m = ch.to_superop(KrausMap([X])).matrix
    perm = np.zeros((4, 4))
    for a, b in [(0, 3), (3, 0), (1, 2), (2, 1)]:
        perm[a, b] = 1
    assert np.array_equal(m, perm)


def test_superop_is_sum_of_lifts():
    phi = ro.random_channel(np.random.default_rng(0), 3, 3)
    assert np.allclose(phi.matrix, sum(np.kron(b, b.conj()) for b in phi.kraus))


def test_superop_apply_matches_kraus():
    rng = np.random.default_rng(1)
    phi = ro.random_channel(rng, 3, 2)
    rho = ro.random_density(rng, 3)
    assert np.allclose(ch.to_superop(phi).apply(rho), sum(b @ rho @ la.dagger(b) for b in phi.kraus))


def test_two_site_superop_matches_closed_form():
    for p, q in [(0.4, 0.3), (0.5, 0.25)]:
        assert np.allclose(catalog.two_site_walk(p, q).matrix, catalog.two_site_matrix(p, q), atol=1e-14)


def test_dual_examples():
    assert np.allclose(ch.dual(ch.identity_channel(2)).matrix, np.eye(4))
    phi = ro.random_channel(np.random.default_rng(2), 2, 2)
    back = ch.dual(ch.dual(phi))
    assert all(np.array_equal(a, b) for a, b in zip(back.kraus, phi.kraus))


def test_duality_pairing_kac_channel():
    rng = np.random.default_rng(3)
    phi = catalog.kac_channel()
    dual = ch.dual(phi)
    for _ in range(100):
        rho, x = ro.random_density(rng, 2), ro.ginibre(rng, 2, 2)
        lhs = np.trace(phi.apply(rho) @ x)
        rhs = np.trace(rho @ dual.apply(x))
        assert abs(lhs - rhs) <= 1e-10


def test_tp_and_unital_flags():
    for p, q in [(0.4, 0.3), (0.6, 0.3), (0.2, 0.7)]:
        emb = tm.embed_cptp(catalog.two_site_walk(p, q))
        assert ch.is_trace_preserving(emb)
        assert ch.is_unital(emb) == (abs(p - 2 * q) < 1e-12)
    idc = ch.identity_channel(2)
    assert ch.is_trace_preserving(idc) and ch.is_unital(idc)
    ad = ch.amplitude_damping(0.5)
    assert ch.is_trace_preserving(ad) and not ch.is_unital(ad)


def test_tp_check_on_superop_matrix():
    assert ch.is_trace_preserving(ch.amplitude_damping(0.2).matrix)
    assert not ch.is_unital(ch.amplitude_damping(0.2).matrix)


def test_choi_identity_and_transpose():
    j = ch.choi(ch.identity_channel(2))
    omega = np.zeros(4)
    omega[[0, 3]] = 1
    assert np.allclose(j, np.outer(omega, omega))
    assert ch.is_completely_positive(ch.identity_channel(2))
    transpose = np.zeros((4, 4))
    for a in range(2):
        for b in range(2):
            transpose[b * 2 + a, a * 2 + b] = 1
    assert not ch.is_completely_positive(transpose)


def test_three_site_blocks_are_cp():
    t = catalog.three_site_walk()
    assert all(ch.is_completely_positive(phi.matrix) for phi in t.blocks.values())


def test_kraus_from_superop_round_trip():
    phi = ro.random_channel(np.random.default_rng(4), 3, 2)
    assert np.allclose(ch.kraus_from_superop(phi.matrix).matrix, phi.matrix, atol=1e-12)


def test_compose_and_combine_examples():
    rng = np.random.default_rng(5)
    phi, psi = ro.random_channel(rng, 2, 2), ro.random_channel(rng, 2, 3)
    assert np.allclose(ch.compose(phi, ch.identity_channel(2)).matrix, phi.matrix)
    assert np.allclose(ch.convex_combine([1.0], [phi]).matrix, phi.matrix)
    assert np.allclose(ch.compose(phi, psi).matrix, phi.matrix @ psi.matrix)
    mix = ch.convex_combine([0.25, 0.75], [phi, psi])
    assert np.allclose(mix.matrix, 0.25 * phi.matrix + 0.75 * psi.matrix)


def test_compose_and_combine_errors():
    a, b = ch.identity_channel(2), ch.identity_channel(3)
    with pytest.raises(DimensionMismatch):
        ch.compose(a, b)
    with pytest.raises(InvalidWeights):
        ch.convex_combine([0.5, 0.6], [a, a])
    with pytest.raises(InvalidWeights):
        ch.convex_combine([1.5, -0.5], [a, a])
    with pytest.raises(InvalidWeights):
        ch.depolarizing(1.5)


def test_depolarizing_action():
    rho = ro.random_density(np.random.default_rng(6), 3)
    out = ch.depolarizing(0.3, 3).apply(rho)
    assert np.allclose(out, 0.7 * rho + 0.3 * np.eye(3) / 3)


def test_invariant_state_two_site():
    p, q = 0.4, 0.3
    t = catalog.two_site_walk(p, q)
    st_ = tm.stationary(t)
    assert np.allclose(st_.blocks[1], q / (2 * q + p) * np.eye(2))
    assert np.allclose(st_.blocks[2], p / (2 * (2 * q + p)) * np.eye(2))


def test_invariant_state_kac_channel():
    (chi,) = ch.invariant_states(catalog.kac_channel())
    assert np.allclose(chi, catalog.kac_fixed_point(), atol=1e-12)


def test_identity_channel_invariant_states_span():
    states = ch.invariant_states(ch.identity_channel(2))
    assert len(states) == 4
    assert np.linalg.matrix_rank(np.array([la.vec(s) for s in states])) == 4
    assert all(ch.is_density(s) for s in states)


def test_irreducibility():
    for p, q in [(0.4, 0.3), (0.1, 0.9), (0.9, 0.1)]:
        assert tm.is_irreducible(catalog.two_site_walk(p, q))
    assert not ch.is_irreducible(ch.amplitude_damping(0.5))
    assert not ch.is_irreducible(ch.identity_channel(2))
    assert ch.is_irreducible(catalog.kac_channel())


def test_relevant_subspace_examples():
    rng = np.random.default_rng(7)
    phi = ro.random_channel(rng, 3, 2)
    assert la.orthonormal_basis(ch.relevant_subspace(phi, np.eye(3)[:, :1])).shape[1] == 3
    emb = tm.embed_cptp(catalog.two_site_walk(0.4, 0.2))
    psi = np.zeros((4, 1))
    psi[0] = 1  # e0 at site 1
    assert ch.relevant_subspace(emb, psi).shape[1] == 4
    a, b = ro.haar_unitary(rng, 2), ro.haar_unitary(rng, 3)
    u = np.zeros((5, 5), dtype=complex)
    u[:2, :2], u[2:, 2:] = a, b
    v = ch.relevant_subspace(KrausMap([u]), np.eye(5)[:, :1])
    assert v.shape[1] <= 2
    assert np.allclose(v[2:], 0)


@settings(max_examples=100)
@given(seeds, st.integers(2, 4), st.integers(1, 3))
def test_channel_invariants(seed, d, k):
    rng = np.random.default_rng(seed)
    phi = ro.random_channel(rng, d, k)
    rho = ro.random_density(rng, d)
    out = phi.apply(rho)
    assert abs(np.trace(out) - 1) <= 1e-10
    assert np.linalg.eigvalsh(la.hermitize(out)).min() >= -1e-9
    x = ro.ginibre(rng, d, d)
    assert abs(np.trace(out @ x) - np.trace(rho @ ch.dual(phi).apply(x))) <= 1e-10
    for s in ch.invariant_states(phi):
        assert np.linalg.norm(phi.matrix @ la.vec(s) - la.vec(s)) <= 1e-9
    v = ch.relevant_subspace(phi, ro.random_subspace(rng, d, 1))
    proj = v @ la.dagger(v)
    for b in phi.kraus:
        assert np.max(np.abs(proj @ b @ v - b @ v)) <= 1e-9


def test_kraus_map_arithmetic():
    a = KrausMap([np.eye(2)])
    assert np.allclose((a + a).matrix, 2 * np.eye(4))
    assert np.allclose(a.scaled(0.25).matrix, 0.25 * np.eye(4))
    assert KrausMap([], 2).is_zero
    with pytest.raises((DimensionMismatch, ValueError)):
        KrausMap([np.eye(2), np.eye(3)])
