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
from qmcr.tom import Tom, TomDensity

seeds = st.integers(0, 2**32 - 1)


def _nonzero_spectrum(m, cut=1e-10):
    w = np.linalg.eigvals(m)
    return np.sort_complex(np.round(w[np.abs(w) > cut], 8))


def test_validate_examples():
    t = catalog.two_site_walk(0.4, 0.3)
    assert tm.validate(t).valid
    broken = t.with_blocks({(2, 1): None})
    rep = tm.validate(broken)
    assert not rep.trace_preserving
    expected = np.max(np.abs(ch.kraus_sum(t.block(2, 1))))
    assert rep.column_residuals[1] == pytest.approx(expected)
    assert rep.column_residuals[2] <= 1e-12
    assert any("column 1" in f for f in rep.failures)
    single = Tom(["a"], 2, {("a", "a"): ch.amplitude_damping(0.3)})
    assert tm.validate(single).valid


def test_validate_reports_non_cp_block_without_raising():
    t = catalog.two_site_walk(0.4, 0.3)
    bad = t.with_blocks({(1, 1): KrausMap([np.eye(2) * 2])})
    rep = tm.validate(bad)
    assert not rep.trace_preserving and not rep.trace_nonincreasing


def test_block_superop_examples():
    assert np.allclose(tm.block_superop(catalog.two_site_walk(0.4, 0.3)), catalog.two_site_matrix(0.4, 0.3))
    t = Tom([0], 2, {(0, 0): ch.identity_channel(2)})
    assert np.allclose(tm.block_superop(t), np.eye(4))
    t3 = catalog.three_site_walk()
    m = tm.block_superop(t3)
    assert m.shape == (12, 12)
    for (i, j), phi in t3.blocks.items():
        a, b = t3.index(i), t3.index(j)
        assert np.allclose(m[4 * a:4 * a + 4, 4 * b:4 * b + 4], sum(np.kron(k, k.conj()) for k in phi.kraus))
    assert np.all(m[8:12, 0:4] == 0)  # 3 <- 1 is structurally absent


def test_embedding_spectrum_matches_block_rep():
    for t in (catalog.two_site_walk(0.4, 0.3), catalog.three_site_walk()):
        emb = tm.embed_cptp(t)
        assert ch.is_trace_preserving(emb) and ch.is_completely_positive(emb.matrix)
        assert np.allclose(_nonzero_spectrum(emb.matrix), _nonzero_spectrum(t.matrix), atol=1e-7)


def test_embedding_invariant_state_is_rearranged_fixed_point():
    p, q = 0.4, 0.3
    t = catalog.two_site_walk(p, q)
    (rho,) = ch.invariant_states(tm.embed_cptp(t))
    # index a*|V| + i: site 1 holds the even entries, site 2 the odd ones
    expected = np.diag([q / (2 * q + p), p / (2 * (2 * q + p))] * 2)
    assert np.allclose(rho, expected, atol=1e-12)


def test_single_vertex_embedding():
    phi = ch.amplitude_damping(0.4)
    emb = tm.embed_cptp(Tom([0], 2, {(0, 0): phi}))
    assert np.allclose(emb.matrix, phi.matrix)


def test_block_diagonal_part_examples():
    rng = np.random.default_rng(0)
    blocks = [ro.random_density(rng, 2) / 2 for _ in range(2)]
    diag = tm.from_site_blocks(blocks)
    assert np.allclose(tm.block_diagonal_part(diag, 2, 2), diag)
    s2 = 1 / np.sqrt(2)
    phi1, phi2 = np.array([1, 0]), np.array([s2, s2])
    psi = np.zeros(4, dtype=complex)
    psi[0::2] = phi1
    psi[1::2] = phi2
    psi /= np.linalg.norm(psi)
    got = tm.site_blocks(np.outer(psi, psi.conj()), 2, 2)
    assert np.allclose(got[0], np.outer(phi1, phi1) / 2)
    assert np.allclose(got[1], np.outer(phi2, phi2) / 2)


@settings(max_examples=50)
@given(seeds)
def test_embedding_acts_through_block_diagonal_part(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    t = ro.random_tom(rng, n, d)
    rho = ro.random_density(rng, n * d)
    lhs = tm.embed_cptp(t).apply(rho)
    bd = tm.site_blocks(rho, n, d)
    rhs = tm.from_site_blocks(tm.unstack(t.matrix @ tm.stack(bd), n, d))
    assert np.allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=50)
@given(seeds)
def test_random_toms_embed_to_channels(seed):
    rng = np.random.default_rng(seed)
    t = ro.random_tom(rng, int(rng.integers(1, 5)), int(rng.integers(1, 4)), n_kraus=2)
    emb = tm.embed_cptp(t)
    assert tm.validate(t).valid
    assert ch.is_trace_preserving(emb)
    assert ch.is_completely_positive(emb.matrix)


def test_from_stochastic_two_state():
    a, b = 0.3, 0.6
    t = tm.from_stochastic([[1 - a, b], [a, 1 - b]])
    assert tm.validate(t).valid
    st_ = tm.stationary(t)
    assert np.allclose([st_.blocks[0][0, 0], st_.blocks[1][0, 0]], np.array([b, a]) / (a + b))


def test_from_stochastic_permutation():
    t = tm.from_stochastic([[0, 0, 1], [1, 0, 0], [0, 1, 0]], vertices="xyz")
    rho = tm.stack([np.eye(1), np.zeros((1, 1)), np.zeros((1, 1))])
    assert np.allclose(t.matrix @ rho, [0, 1, 0])
    assert set(t.blocks) == {("y", "x"), ("z", "y"), ("x", "z")}


def test_from_stochastic_rejects_bad_columns():
    with pytest.raises(ValueError):
        tm.from_stochastic([[0.5, 0.5], [0.6, 0.5]])


def test_from_oqw_matches_hand_built():
    # single-Kraus version of a two-site walk
    s2 = np.sqrt(0.5)
    eff = {
        (1, 1): s2 * np.eye(2),
        (2, 1): s2 * np.array([[0, 1], [1, 0]]),
        (1, 2): np.diag([1.0, 0.0]),
        (2, 2): np.diag([0.0, 1.0]),
    }
    t = tm.from_oqw(tm.OqwSpec([1, 2], eff))
    hand = Tom([1, 2], 2, {k: KrausMap([v]) for k, v in eff.items()})
    assert np.allclose(t.matrix, hand.matrix)
    eff[(2, 2)] = np.eye(2)
    with pytest.raises(ValueError):
        tm.from_oqw(tm.OqwSpec([1, 2], eff))


def test_from_superops_round_trip():
    t = catalog.three_site_walk()
    mats = {k: v.matrix for k, v in t.blocks.items()}
    back = tm.from_superops(t.vertices, t.dim, mats)
    assert np.allclose(back.matrix, t.matrix, atol=1e-12)


def test_tom_density_validity():
    good = TomDensity({1: np.eye(2) / 4, 2: np.eye(2) / 4})
    assert good.is_valid()
    assert not TomDensity({1: np.eye(2)}).is_valid()
    assert not TomDensity({1: np.diag([1.5, -0.5])}).is_valid()


def test_restricted_and_column_access():
    t = catalog.three_site_walk()
    r = t.restricted([2, 3])
    assert r.vertices == (2, 3) and set(r.blocks) <= {(2, 2), (3, 2), (2, 3), (3, 3)}
    assert [i for i, _ in t.column(1)] == [1, 2]
    assert ch.is_trace_preserving(t.column_sum(3))
