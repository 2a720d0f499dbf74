import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atl import regularity as reg
from atl.errors import ContractError, InsufficientSamplingError
from atl.grid import GridSpec, ScalarField
from atl.levelset import ArrivalResult
from atl.oracles import AnalyticArrival

H = 1 / 16
G3 = GridSpec.from_bounds([-1.0] * 3, [1.0] * 3, H)
G2 = GridSpec.from_bounds([-1.0] * 2, [1.0] * 2, H)


def oracle_result(kind, grid, **kw):
    arrival = AnalyticArrival(kind, grid.dimension, **kw)
    return ArrivalResult.from_field(ScalarField.from_function(grid, arrival))


def rotation(seed, d):
    q, r = np.linalg.qr(np.random.default_rng(seed).normal(size=(d, d)))
    return q * np.sign(np.diag(r))


@pytest.mark.parametrize("eig,n,k", [
    ([-1.0, -1.0, 0.0], 2, 1),
    ([-0.5, -0.5, -0.5], 2, 2),
    ([-1.0, -1.0], 1, 1),
    ([-1.02, -0.97, 0.05], 2, 1),
])
def test_classify_known_spectra(eig, n, k):
    got, res = reg.classify_critical(np.diag(eig), n)
    assert got == k
    assert res == pytest.approx(np.max(np.abs(np.sort(eig) - reg.target_spectrum(k, n))))


def test_classify_rejects_unmatched_and_bad_input():
    assert reg.classify_critical(np.diag([1.0, 2.0, 3.0]), 2)[0] is None
    with pytest.raises(ContractError):
        reg.classify_critical(np.eye(2), 2)
    with pytest.raises(ContractError):
        reg.classify_critical(np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]), 2)


def test_target_spectrum():
    np.testing.assert_allclose(reg.target_spectrum(1, 2), [-1, -1, 0])
    np.testing.assert_allclose(reg.target_spectrum(2, 2), [-0.5, -0.5, -0.5])


@given(st.integers(0, 10_000), st.integers(1, 2),
       st.lists(st.floats(-0.2, 0.2), min_size=3, max_size=3))
def test_classification_invariant_under_rotation(seed, k, noise):
    hess = np.diag(reg.target_spectrum(k, 2) + np.array(noise) * 0.5 / k)
    q = rotation(seed, 3)
    a = reg.classify_critical(hess, 2)
    b = reg.classify_critical(q @ hess @ q.T, 2)
    assert a[0] == b[0]
    assert a[1] == pytest.approx(b[1], abs=1e-9)
    assert reg.condition_b(hess)[0] == pytest.approx(reg.condition_b(q @ hess @ q.T)[0], abs=1e-9)


@given(st.integers(0, 10_000), st.integers(1, 2), st.floats(0.0, 0.1))
def test_condition_b_bounded_by_spectrum_residual(seed, k, size):
    # Weyl: each eigenvalue moves by at most the perturbation norm, the trace by n+1 times that
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 3))
    pert = a + a.T
    pert *= size / max(np.max(np.abs(np.linalg.eigvalsh(pert))), 1e-12)
    hess = rotation(seed, 3) @ np.diag(reg.target_spectrum(k, 2)) @ rotation(seed, 3).T + pert
    hess = 0.5 * (hess + hess.T)
    got_k, spec = reg.classify_critical(hess, 2)
    if got_k == k:
        assert reg.condition_b(hess)[0] <= 4 * spec + 1e-12


def test_condition_b_direction_is_shrinking():
    # trace -2 minus the -1 eigenvalue gives -1; the axis direction would leave -2
    res, vec, i = reg.condition_b(np.diag([-1.0, -1.0, 0.0]))
    assert res == pytest.approx(0.0)
    assert vec[2] == pytest.approx(0.0)
    assert i in (0, 1)
    assert reg.condition_b(-0.5 * np.eye(3))[0] == pytest.approx(0.0)


@pytest.mark.parametrize("kind,kw,k", [
    ("sphere", {"radius": 1.0}, 2),
    ("cylinder", {"k": 2}, 2),
])
def test_oracle_critical_point_exact(kind, kw, k):
    res = oracle_result(kind, G3, **kw)
    recs = reg.find_critical_points(res)
    assert len(recs) == 1
    rec = recs[0]
    np.testing.assert_allclose(rec.location, 0.0, atol=1e-12)
    assert rec.classified_k == k
    assert rec.spectrum_residual < 1e-9
    assert rec.equation_residual_b < 1e-9
    assert reg.check_classical(res, rec.index, critical=True) < 1e-9
    regular = tuple(np.asarray(rec.index) + [4, 2, 1])
    assert reg.check_classical(res, regular, critical=False) < 1e-9


def test_cylinder_axis_is_critical_line():
    res = oracle_result("cylinder", G3, k=1)
    recs = reg.find_critical_points(res)
    assert len(recs) >= 20
    assert all(r.classified_k == 1 for r in recs)
    locs = np.array([r.location for r in recs])
    np.testing.assert_allclose(locs[:, :2], 0.0, atol=1e-12)
    np.testing.assert_allclose(np.abs(reg.fitted_axis(recs[0])), [0, 0, 1], atol=1e-9)


def test_record_checks_eigen_consistency():
    res = oracle_result("sphere", G3, radius=1.0)
    rec = reg.find_critical_points(res)[0]
    d = rec.to_dict()
    assert d["classified_k"] == 2
    with pytest.raises(ContractError):
        reg.CriticalPointRecord(**{**rec.__dict__, "eigenvalues": rec.eigenvalues + 0.5})


def test_fit_circle_recovers_tilted_circle():
    t = np.linspace(0, 2 * np.pi, 40, endpoint=False)
    q = rotation(7, 3)
    pts = np.stack([0.9 * np.cos(t), 0.9 * np.sin(t), np.zeros_like(t)], axis=-1) @ q.T + [0.1, -0.2, 0.3]
    fit = reg.fit_circle(pts)
    assert fit.radius == pytest.approx(0.9, abs=1e-9)
    np.testing.assert_allclose(fit.center, [0.1, -0.2, 0.3], atol=1e-9)
    assert fit.max_deviation < 1e-9


def test_profile_and_axis_decay_on_cylinder():
    res = oracle_result("cylinder", G3, k=1)
    rec = reg.make_record(res, G3.nearest_index([0, 0, 0]))
    fits = reg.tangent_flow_profile(res, rec, [H * H, 10 * H * H])
    for fit in fits:
        assert fit.mean_ratio == pytest.approx(math.sqrt(2), abs=1e-6)
    rows = reg.axis_decay(res, rec, [0, 0, 1], [8 * H, 4 * H, 2 * H])
    assert max(r.ratio for r in rows) < 1e-9
    with pytest.raises(ContractError):
        reg.axis_decay(res, rec, [1, 0, 0], [4 * H])
    with pytest.raises(InsufficientSamplingError):
        reg.tangent_flow_profile(res, rec, [1e-8])


def test_blowup_exponent_on_sphere():
    res = oracle_result("sphere", G2, radius=1.0)
    rec = reg.make_record(res, G2.nearest_index([0, 0]))
    fit = reg.blowup_exponent(res, rec, 6 * H)
    assert fit.beta == pytest.approx(0.5, abs=1e-6)


def test_viscosity_oracle_has_no_violations():
    res = oracle_result("sphere", G2, radius=1.0)
    for idx in [G2.nearest_index([0, 0]), G2.nearest_index([0.3, -0.2])]:
        rep = reg.check_viscosity(res, idx, trial_count=100, seed=3)
        assert rep.tested > 0
        assert rep.violations == 0


def test_viscosity_detects_wrong_equation():
    # |x|^2 / 2 solves Delta_1 u = +1, so every super-solution test must fail
    u = ScalarField.from_function(G2, lambda x: 0.5 * np.sum(x ** 2, axis=-1))
    rep = reg.check_viscosity(u, G2.nearest_index([0.3, 0.2]), trial_count=100, seed=0)
    assert rep.violations > 0


def test_viscosity_touching_kinds():
    u = ScalarField.from_function(G2, lambda x: -0.25 * np.sum(x ** 2, axis=-1))
    idx = G2.nearest_index([0.0, 0.0])
    above = reg.viscosity_test(u, idx, [0, 0], -0.5 * np.eye(2) + 0.1 * np.eye(2))
    below = reg.viscosity_test(u, idx, [0, 0], -0.5 * np.eye(2) - 0.1 * np.eye(2))
    assert above.kind == "sub" and below.kind == "super"
    assert reg.viscosity_test(u, idx, [0, 0], np.diag([-0.4, -0.6])).kind == "skipped"


def test_classical_stats_and_curvature_on_oracle():
    res = oracle_result("sphere", G2, radius=1.0)
    recs = reg.find_critical_points(res)
    stats = reg.classical_residual_stats(res, recs)
    assert stats.count > 0
    assert stats.max < 1e-9
    bounds = reg.pinching_and_c11(res)
    assert bounds.c11_bound == pytest.approx(1.0, abs=1e-9)


def test_analyze_report_serializes():
    res = oracle_result("cylinder", G3, k=1)
    rep = reg.analyze(res, reg.AnalysisOptions(viscosity_points=5, viscosity_trials=10))
    d = rep.to_dict()
    assert d["critical_points"]
    assert all(p["classified_k"] == 1 for p in d["critical_points"])
