import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmcr import catalog
from qmcr import channels as ch
from qmcr import random_ops as ro
from qmcr import recurrence as rc
from qmcr import splitting as sp
from qmcr import tom as tm
from qmcr.channels import KrausMap
from qmcr.errors import InvalidPartition, LeftNotRecurrent, StateOutsideOverlap
from qmcr.tom import Tom, TomDensity

seeds = st.integers(0, 2**32 - 1)


def _random_split(rng, d=None):
    nm, nz, npl = (int(x) for x in rng.integers(1, 3, size=3))
    d = int(rng.integers(1, 3)) if d is None else d
    t, (minus, zero, plus) = ro.random_overlapping_tom(rng, nm, nz, npl, d)
    return t, sp.Partition(minus, zero, plus)


def _product_tom(rng, d=2):
    """Left TOM on {0, 1}, right TOM on {1, 2}, multiplied out."""
    left = ro.random_tom(rng, 2, d, vertices=[0, 1])
    right = ro.random_tom(rng, 2, d, vertices=[1, 2])
    big = Tom([0, 1, 2], d, {})
    part = sp.Partition({0}, {1}, {2})
    m = sp.factor_product(big, left, right, part)
    d2 = d * d
    mats = {}
    for i in range(3):
        for j in range(3):
            blk = m[i * d2:(i + 1) * d2, j * d2:(j + 1) * d2]
            if np.max(np.abs(blk)) > 1e-14:
                mats[(i, j)] = blk
    return tm.from_superops([0, 1, 2], d, mats), part, left, right


# --------------------------------------------------------------------------
# partitions


def test_partition_validation():
    with pytest.raises(InvalidPartition):
        sp.Partition({1}, set(), {2})
    with pytest.raises(InvalidPartition):
        sp.Partition({1}, {1, 2}, {3})
    t = catalog.three_site_walk()
    with pytest.raises(InvalidPartition):
        sp.Partition({1}, {2}, set()).check_cover(t)
    p = sp.Partition({1}, {2}, {3})
    assert p.swapped() == sp.Partition({3}, {2}, {1})
    assert p.key() == p.swapped().key()


def test_zero_pattern_conditions():
    t = catalog.three_site_walk()
    part = sp.Partition({1}, {2}, {3})
    # 3 <- 1 is absent but 1 <- 3 is present
    assert sp.satisfies_factorization(t, part)
    assert not sp.satisfies_decomposition(t, part)
    assert not sp.satisfies_factorization(t, part.swapped())
    assert sp.detect_decompositions(t) == []
    with pytest.raises(InvalidPartition):
        sp.build_decomposition(t, part)


def test_detect_decompositions_on_a_path():
    rng = np.random.default_rng(0)
    t, part = ro.random_overlapping_tom(rng, 1, 1, 1, 2)[0], sp.Partition({0}, {1}, {2})
    found = sp.detect_decompositions(t)
    assert [p.key() for p in found] == [part.key()]
    assert sp.detect_decompositions(t, candidates=[part]) == [part]


def test_exhaustive_search_limit():
    t = ro.random_tom(np.random.default_rng(1), 4, 1)
    with pytest.raises(ValueError):
        sp.detect_decompositions(t, max_vertices=3)


# --------------------------------------------------------------------------
# decompositions


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_decomposition_reconstructs_and_splits(seed):
    rng = np.random.default_rng(seed)
    t, part = _random_split(rng)
    dec = sp.build_decomposition(t, part)
    assert dec.reconstruction_residual(t) <= 1e-12
    assert tm.validate(dec.left).valid and tm.validate(dec.right).valid
    for _ in range(3):
        z = 0.95 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
        assert sp.fr_identity_residual(t, dec, z) <= 1e-9
    m = sp.split_metrics_decomposition(t, dec, ro.random_tom_density(rng, t, part.zero))
    assert m.consistent
    assert max(m.pi_left, m.pi_right) >= 0.5 - 1e-9


def test_decomposition_state_must_sit_on_overlap():
    rng = np.random.default_rng(2)
    t, part = _random_split(rng, d=2)
    dec = sp.build_decomposition(t, part)
    with pytest.raises(StateOutsideOverlap):
        sp.split_metrics_decomposition(t, dec, ro.random_tom_density(rng, t))


def _perturb_left(rng, left, part, absorbing=False):
    blocks = {k: v for k, v in left.blocks.items() if k[1] not in part.minus}
    lv = list(left.vertices)
    for j in part.minus:
        if absorbing:
            blocks[(j, j)] = ch.identity_channel(left.dim)
            continue
        for i, phi in zip(lv, ro.random_cp_vector(rng, left.dim, len(lv))):
            blocks[(i, j)] = phi
    return Tom(lv, left.dim, blocks)


def test_perturbing_a_recurrent_left_side_keeps_return_probability():
    rng = np.random.default_rng(3)
    for _ in range(10):
        t, part = _random_split(rng, d=2)
        dec = sp.build_decomposition(t, part)
        rho = ro.random_tom_density(rng, t, part.zero)
        chk = sp.perturbation_invariance_check(t, dec, _perturb_left(rng, dec.left, part), rho)
        assert chk.invariant
        assert tm.validate(chk.perturbed).valid


def test_perturbation_requires_recurrent_left():
    rng = np.random.default_rng(4)
    t, part = _random_split(rng, d=2)
    dec = sp.build_decomposition(t, part)
    rho = ro.random_tom_density(rng, t, part.zero)
    with pytest.raises(LeftNotRecurrent):
        sp.perturbation_invariance_check(t, dec, _perturb_left(rng, dec.left, part, absorbing=True), rho)


# --------------------------------------------------------------------------
# factorizations


def test_three_site_factorization():
    t = catalog.three_site_walk()
    part = sp.Partition({1}, {2}, {3})
    fac = sp.detect_factorization(t, part)
    assert fac is not None and fac.unit.is_cptp
    assert fac.reconstruction_residual(t) <= 1e-10
    assert sp.verify_factorization(t, part, fac.left, fac.right) <= 1e-10
    m = sp.split_metrics_factorization(t, fac, TomDensity({2: np.eye(2) / 2}))
    assert m.consistent
    assert m.tau == pytest.approx(4, abs=1e-9)
    assert sum(np.trace(b).real for b in m.sigma.blocks.values()) == pytest.approx(m.pi_right)


def test_factorization_absent_when_pattern_forbids_it():
    t = catalog.three_site_walk()
    assert sp.detect_factorization(t, sp.Partition({3}, {2}, {1})) is None
    assert sp.detect_factorization(t, sp.Partition({3}, {1}, {2})) is None


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_products_are_detected_as_factorizations(seed):
    rng = np.random.default_rng(seed)
    t, part, left, right = _product_tom(rng)
    assert sp.verify_factorization(t, part, left, right) <= 1e-12
    fac = sp.detect_factorization(t, part)
    assert fac is not None
    assert fac.reconstruction_residual(t) <= 1e-8
    z = 0.9 * rng.uniform() * np.exp(2j * np.pi * rng.uniform())
    assert sp.fr_identity_residual(t, fac, z) <= 1e-8
    rho = TomDensity({1: ro.random_density(rng, 2)})
    m = sp.split_metrics_factorization(t, fac, rho)
    assert m.pi_residual <= 1e-7 and m.tau_residual <= 1e-7


def test_rank1_factor_of_scaled_columns():
    rng = np.random.default_rng(5)
    unit = sp.CpVector(ro.random_cp_vector(rng, 2, 3))
    assert unit.is_cptp
    cols = []
    for _ in range(3):
        # single-operator coefficients X -> B X B^*
        phi = KrausMap([ro.ginibre(rng, 2, 2)])
        cols.append(sp.CpVector([ch.compose(u, phi) for u in unit.maps]))
    cols.append(sp.CpVector([KrausMap([], 2)] * 3))
    fac = sp.factor_rank1(cols)
    assert fac is not None and fac.coefficients[-1] is None
    for col, phi in zip(cols[:3], fac.coefficients):
        rebuilt = np.vstack([u.matrix @ phi.matrix for u in fac.unit.maps])
        assert np.allclose(rebuilt, col.stacked(), atol=1e-8)


def test_rank1_rejects_unrelated_columns():
    rng = np.random.default_rng(6)
    cols = [sp.CpVector(ro.random_cp_vector(rng, 2, 3)) for _ in range(2)]
    assert sp.factor_rank1(cols) is None
    assert sp.factor_rank1([sp.CpVector([KrausMap([], 2)])]) is None


def test_overlap_schur_matches_recurrence_module():
    t = catalog.three_site_walk()
    f = rc.SchurFn(t, rc.Admissible.sites(t, [2]))
    assert np.allclose(sp.schur_on_overlap(t, [2], 0.3), f.f(0.3, compressed=True))
