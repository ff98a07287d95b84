import json

import numpy as np
import pytest

from qmcr import catalog
from qmcr import chains1d as c1
from qmcr import channels as ch
from qmcr import random_ops as ro
from qmcr import tom as tm
from qmcr.channels import KrausMap
from qmcr.errors import HypothesisViolated, SingularIterate


def params(lam):
    return c1.HomogeneousParams(lam, *catalog.chain_channels())


@pytest.fixture
def rho():
    return ro.random_density(np.random.default_rng(11), 2)


# --------------------------------------------------------------------------
# models


def test_model_construction_errors():
    phi = ch.identity_channel(2)
    with pytest.raises(ValueError):
        c1.HalfLineModel(2, {(0, 2): phi}, {})
    with pytest.raises(ValueError):
        c1.HalfLineModel(2, {(-1, 0): phi}, {})
    with pytest.raises(ValueError):
        c1.LineModel(2, {}, {2: phi})
    with pytest.raises(ValueError):
        params(1.0)


def test_catalog_params_are_valid():
    for lam in (0.2, 0.5, 0.8):
        prm = params(lam)
        assert prm.validate() == []
        assert c1.validate_model(c1.halfline_model(prm)) == []
        assert c1.validate_model(c1.line_model(prm)) == []


def test_validate_reports_problems():
    phi, plus, zero, minus = catalog.chain_channels()
    bad = c1.HomogeneousParams(0.3, phi, plus, zero, zero)
    assert any("phi_zero + phi_minus" in s for s in bad.validate())
    singular = c1.HomogeneousParams(0.3, ch.depolarizing(1.0), plus, zero, minus)
    assert any("phi is not invertible" in s for s in singular.validate())


def test_window_is_absorbing_at_the_edge():
    model = c1.halfline_model(params(0.3))
    w = model.window(0, 5)
    assert w.vertices == tuple(range(6))
    rep = tm.validate(w)
    assert rep.trace_nonincreasing and not rep.trace_preserving
    assert max(rep.column_residuals[j] for j in range(5)) <= 1e-12
    assert all(r <= 1e-12 for r in model.column_residuals(0, 50).values())
    assert all(model.invertibility(0, 10).values())


def test_line_window_and_defaults():
    model = c1.line_model(params(0.4))
    assert model.default_window(3) == (-4, 3)
    w = model.window(*model.default_window(3))
    assert w.n == 8
    assert model.block(5, 7) is None


# --------------------------------------------------------------------------
# closed forms


@pytest.mark.parametrize("lam", [0.2, 0.5, 0.75])
def test_closed_form_f1_matches_fixed_point(lam):
    prm = params(lam)
    for z in (0.3, -0.5, 0.4 + 0.4j):
        assert np.allclose(c1.closed_form_f1(prm, z), c1.fixed_point_f1(prm, z), atol=1e-10)


def test_closed_form_f1_at_zero():
    assert np.allclose(c1.closed_form_f1(params(0.3), 0), 0)
    assert c1.scalar_f1_trace(0.3, 0) == 0


def test_iterate_schur_keeps_bulk_fixed_point():
    prm = params(0.35)
    z = 0.6
    f1 = c1.closed_form_f1(prm, z)
    lam, phi = prm.lam, prm.phi.matrix
    # bulk column: down with lam, up with 1 - lam, no diagonal block
    nxt = c1.iterate_schur(np.eye(4) / z - f1, None, (1 - lam) * phi, lam * phi, z)
    assert np.allclose(np.eye(4) / z - nxt, f1, atol=1e-10)
    with pytest.raises(SingularIterate):
        c1.iterate_schur(np.zeros((4, 4)), None, phi, phi, z)


def test_assemble_f0_reproduces_halfline_closed_form():
    prm = params(0.3)
    for z in (0.2, 0.7, 0.5j):
        f1 = c1.closed_form_f1(prm, z)
        got = c1.assemble_f0(f1, prm.phi_zero.matrix, prm.lam * prm.phi_plus.matrix, prm.phi_minus.matrix, z)
        assert np.allclose(got, c1.closed_form_f_halfline(prm, z), atol=1e-10)
    assert np.allclose(c1.assemble_f0(f1, None, None, prm.phi_minus.matrix, 0.3), 0)


def test_line_closed_form_is_site_schur():
    prm = params(0.4)
    model = c1.line_model(prm)
    v, _, _ = c1.truncated_site_schur(model, 0, 8, z=0.6)
    assert np.allclose(v, c1.closed_form_f_line(prm, 0.6), atol=1e-9)
    model = c1.halfline_model(prm)
    v, _, _ = c1.truncated_site_schur(model, 0, 8, z=0.6)
    assert np.allclose(v, c1.closed_form_f_halfline(prm, 0.6), atol=1e-9)


def test_halfline_closed_metrics_examples(rho):
    assert c1.halfline_site_metrics(params(0.3), 1, rho).pi == pytest.approx(0.6)
    crit = c1.halfline_site_metrics(params(0.5), 0, rho)
    assert crit.recurrent and crit.tau == np.inf and not crit.positive_recurrent
    pos = c1.halfline_site_metrics(params(0.7), 0, rho)
    assert pos.positive_recurrent and np.isfinite(pos.tau)
    with pytest.raises(ValueError):
        c1.halfline_site_metrics(params(0.7), 2, rho)
    line = c1.line_site0_metrics(params(0.5), rho)
    assert line.pi == pytest.approx(1) and line.tau == np.inf


# --------------------------------------------------------------------------
# truncation


@pytest.mark.parametrize("lam", [0.3, 0.7])
def test_truncation_matches_closed_forms(lam, rho):
    prm = params(lam)
    model = c1.halfline_model(prm)
    for site in (0, 1):
        exact = c1.halfline_site_metrics(prm, site, rho)
        num = c1.truncate_numeric(model, 4, site, rho)
        assert num.converged
        assert num.pi == pytest.approx(exact.pi, abs=1e-6)
        if np.isfinite(exact.tau):
            assert num.tau == pytest.approx(exact.tau, abs=1e-6)
        else:
            assert num.tau == np.inf


def test_rays_and_dense_agree(rho):
    model = c1.halfline_model(params(0.6))
    a = c1.truncate_numeric(model, 4, 1, rho, n_max=64, method="rays")
    b = c1.truncate_numeric(model, 4, 1, rho, n_max=64, method="dense")
    assert [x[0] for x in a.trace] == [x[0] for x in b.trace]
    assert np.allclose([x[1:] for x in a.trace], [x[1:] for x in b.trace], atol=1e-10)


def test_truncation_trace_is_monotone(rho):
    rep = c1.truncate_numeric(c1.halfline_model(params(0.45)), 4, 0, rho)
    pis = [x[1] for x in rep.trace]
    assert np.all(np.diff(pis) >= -1e-14)
    assert [x[0] for x in rep.trace] == sorted({x[0] for x in rep.trace})


def test_critical_halfline_is_null_recurrent(rho):
    rep = c1.truncate_numeric(c1.halfline_model(params(0.5)), 4, 0, rho)
    assert rep.recurrent and rep.tau == np.inf and not rep.positive_recurrent
    assert rep.trace[-1][0] > 1024


def test_size_limit_is_reported(rho):
    rep = c1.truncate_numeric(c1.halfline_model(params(0.52)), 4, 0, rho, n_max=16, critical_nmax=16)
    assert not rep.converged and rep.notes
    with pytest.raises(ValueError):
        c1.truncate_numeric(c1.halfline_model(params(0.52)), 1, 0, rho)


def test_report_serializes(rho):
    rep = c1.truncate_numeric(c1.halfline_model(params(0.3)), 4, 0, rho)
    out = json.loads(json.dumps(rep.as_dict(), default=float))
    assert out["method"] == "truncation-rays" and len(out["trace"]) == len(rep.trace)


# --------------------------------------------------------------------------
# folding


def test_folded_model_is_a_valid_halfline():
    model = c1.line_model(params(0.4))
    folded = c1.fold_to_halfline(model)
    assert folded.kind == "halfline" and folded.dim == 4
    assert all(r <= 1e-12 for r in folded.column_residuals(0, 20).values())
    with pytest.raises(ValueError):
        c1.fold_to_halfline(c1.halfline_model(params(0.4)))


def test_embed_second():
    r = np.diag([0.3, 0.7])
    e = c1.embed_second(r)
    assert np.allclose(e[2:, 2:], r) and np.allclose(e[:2], 0)


@pytest.mark.parametrize("lam", [0.3, 0.7])
def test_folded_matches_direct(lam, rho):
    model = c1.line_model(params(lam))
    a = c1.truncate_numeric(model, 4, 0, rho)
    b = c1.folded_site_metrics(model, 4, 0, rho)
    assert a.pi == pytest.approx(b.pi, abs=1e-8)
    assert a.pi == pytest.approx(c1.line_site0_metrics(params(lam), rho).pi, abs=1e-6)
    with pytest.raises(ValueError):
        c1.folded_site_metrics(model, 4, -1, rho)


# --------------------------------------------------------------------------
# symmetric unital models


def _symmetric_model(rng, u=None):
    bulk_u = KrausMap([ro.haar_unitary(np.random.default_rng(99), 2)])
    u = KrausMap([ro.haar_unitary(rng, 2)]) if u is None else u
    v = KrausMap([ro.haar_unitary(rng, 2)])
    boundary = {(0, 0): v.scaled(0.5), (0, 1): u.scaled(0.5), (1, 0): u.scaled(0.5), (1, 1): None}
    return c1.HalfLineModel(2, boundary, {-1: bulk_u.scaled(0.5), 0: None, 1: bulk_u.scaled(0.5)})


def test_symmetric_unital_left_part_does_not_matter(rho):
    rng = np.random.default_rng(12)
    a, b = _symmetric_model(rng), _symmetric_model(rng)
    same, pa, pb = c1.symmetric_unital_invariance(a, b, 2, rho, n=32)
    assert same and pa == pytest.approx(pb, abs=1e-10)


def test_symmetric_unital_hypotheses_checked(rho):
    chain = c1.halfline_model(params(0.3))
    with pytest.raises(HypothesisViolated):
        c1.symmetric_unital_invariance(chain, chain, 2, rho)
    rng = np.random.default_rng(13)
    a = _symmetric_model(rng)
    # a different 1 <- 2 block breaks symmetry outside the allowed part
    b = c1.HalfLineModel(2, {**a.boundary, (1, 2): KrausMap([ro.haar_unitary(rng, 2)]).scaled(0.5)}, a.bulk)
    with pytest.raises(HypothesisViolated):
        c1.symmetric_unital_invariance(a, b, 1, rho)


def test_window_decomposition():
    model = c1.halfline_model(params(0.3))
    w, dec = c1.window_decomposition(model, 2, 10)
    assert dec.reconstruction_residual(w) <= 1e-12
    assert dec.partition.zero == frozenset({2})
    with pytest.raises(ValueError):
        c1.window_decomposition(model, 0, 10)
