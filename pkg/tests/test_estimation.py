import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from reliable_fw import geometry
from reliable_fw.estimation import (
    ConfidenceParams,
    EstimationError,
    HTracker,
    LeastSquaresState,
    Variant,
    beta_of,
    collect_data_points,
    compute_constants,
    ellipsoid_contains,
    h_value,
    min_samples,
    sample_count_lhs,
    probe_points,
    psi_inverse,
    round_samples,
    safety_margin,
    theory_cumulative,
)
from reliable_fw.oracles import NoisyFeasibilityOracle, random_polytope


def batch_beta(X, Y):
    Xb = np.hstack([X, -np.ones((len(X), 1))])
    return np.linalg.lstsq(Xb, Y, rcond=None)[0]


def test_variant_parsing():
    assert Variant.parse("1") is Variant.NONCONVEX_STOCHASTIC
    assert Variant.parse("convex-deterministic") is Variant.CONVEX_DETERMINISTIC
    assert Variant.parse(3).convex and Variant.parse(3).stochastic
    with pytest.raises(ValueError):
        Variant.parse("5")


def test_round_samples():
    assert round_samples(1, 2) == 4
    assert round_samples(4, 2) == 4
    assert round_samples(4.1, 2) == 8
    assert round_samples(0, 3) == 6


def test_probe_layout():
    P = probe_points([1.0, 2.0], 0.5)
    np.testing.assert_allclose(P, [[1.5, 2.0], [1.0, 2.5], [0.5, 2.0], [1.0, 1.5]])
    X = collect_data_points([1.0, 2.0], 9, 0.5)
    assert X.shape == (12, 2)
    np.testing.assert_allclose(X[4:8], P)
    with pytest.raises(ValueError):
        collect_data_points([0.0], 2, 0.0)


def test_zero_noise_recovery(cutting_machine):
    P = cutting_machine.polytope
    nfo = NoisyFeasibilityOracle(P, 0.0)
    X = collect_data_points(cutting_machine.x0, 4, 0.01)
    st_ = LeastSquaresState(2, 5).update(X, nfo.query(X))
    assert np.max(np.abs(st_.beta() - beta_of(P))) <= 1e-9


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_incremental_matches_batch(seed, batches):
    rng = np.random.default_rng(seed)
    d = 2 + seed % 2
    P = random_polytope(d, d + 2, rng)
    nfo = NoisyFeasibilityOracle(P, 0.1, rng)
    state = LeastSquaresState(d, P.m)
    Xs, Ys = [], []
    for _ in range(batches):
        x = rng.normal(size=d) * 3
        X = collect_data_points(x, 2 * d * int(rng.integers(1, 4)), float(rng.uniform(0.05, 1)))
        Y = nfo.query(X)
        state.update(X, Y)
        Xs.append(X)
        Ys.append(Y)
        ref = batch_beta(np.vstack(Xs), np.vstack(Ys))
        np.testing.assert_allclose(state.beta(), ref, rtol=1e-8, atol=1e-8 * np.abs(ref).max())


def test_weighted_rows_equal_repeated_rows():
    rng = np.random.default_rng(0)
    X = probe_points([0.3, 0.4], 0.1)
    Y = rng.normal(size=(4, 3))
    a = LeastSquaresState(2, 3).update(np.repeat(X, 5, axis=0), np.repeat(Y, 5, axis=0))
    b = LeastSquaresState(2, 3).update(X, Y, np.full(4, 5.0))
    np.testing.assert_allclose(a.beta(), b.beta(), rtol=1e-12)
    np.testing.assert_allclose(a.Q(), b.Q(), rtol=1e-12, atol=1e-12)
    assert a.N == b.N == 20


def test_rank_deficient_and_ill_conditioned():
    s = LeastSquaresState(2, 1)
    s.update(np.zeros((3, 2)), np.zeros((3, 1)))
    assert not s.ready
    with pytest.raises(EstimationError):
        s.beta()
    with pytest.raises(EstimationError):
        LeastSquaresState(2, 1).update(collect_data_points([1e3, 1e3], 4, 1e-7), np.zeros((4, 1)))
    with pytest.raises(ValueError):
        s.update(np.zeros((2, 2)), np.zeros((2, 2)))


def test_q_is_inverse_centered_scatter():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 3))
    s = LeastSquaresState(3, 1).update(X, rng.normal(size=(30, 1)))
    Xc = X - X.mean(axis=0)
    np.testing.assert_allclose(s.Q(), np.linalg.inv(Xc.T @ Xc), rtol=1e-10)
    np.testing.assert_allclose(s.xbar, X.mean(axis=0), rtol=1e-12)
    Xb = np.hstack([X, -np.ones((30, 1))])
    np.testing.assert_allclose(s.normal_matrix(), Xb.T @ Xb, rtol=1e-12)
    np.testing.assert_allclose(s.normal_inverse(), np.linalg.inv(Xb.T @ Xb), rtol=1e-9)


@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=1, max_size=6),
       st.floats(0.001, 1.0), st.integers(1, 3))
def test_q_norm_bound(centers, r0, k):
    s = LeastSquaresState(2, 1)
    pts = []
    for c in centers:
        X = collect_data_points(c, 4 * k, r0)
        s.update(X, np.zeros((len(X), 1)))
        pts.append(X)
    # the bound is tight when all centres are collinear; rounding the scatter matrix
    # moves its smallest eigenvalue by ~eps*|M|, i.e. |Q| by a relative eps*cond(M)
    X = np.vstack(pts)
    ev = np.linalg.eigvalsh((X - X.mean(axis=0)).T @ (X - X.mean(axis=0)))
    rel = 1e-9 + 64 * np.finfo(float).eps * ev[-1] / ev[0]
    assert np.linalg.norm(s.Q(), 2) <= 2 / (s.N * r0 ** 2) * (1 + rel) + 1e-12


def test_psi_inverse_formula():
    for N, z, d in ((100, 0.01, 2), (1e6, 1e-5, 3), (7, 0.5, 1)):
        lg = math.log(N ** 2 / z)
        ref = max(math.sqrt(128 * d * math.log(N) * lg), 8 / 3 * lg)
        assert psi_inverse(N, z, d) == pytest.approx(ref, rel=1e-14)
    assert psi_inverse(1e300, 1e-3, 2) == pytest.approx(
        math.sqrt(128 * 2 * math.log(1e300) * (600 * math.log(10) - math.log(1e-3))), rel=1e-12)
    with pytest.raises(ValueError):
        psi_inverse(1, 0.1, 2)


def test_confidence_modes():
    a = ConfidenceParams(0.05, 100, 5, 2, 1.0)
    b = ConfidenceParams(0.05, 100, 5, 2, 1.0, mode="definition")
    assert a.level == pytest.approx(0.05 / 100 / 5)
    assert b.level == pytest.approx(0.01)
    assert a.kappa(1000) > b.kappa(1000)


def test_safety_margin_matches_sigma_form():
    rng = np.random.default_rng(3)
    P = random_polytope(2, 4, rng)
    nfo = NoisyFeasibilityOracle(P, 0.05, rng)
    s = LeastSquaresState(2, 4)
    for c in rng.normal(size=(3, 2)):
        X = collect_data_points(c, 8, 0.2)
        s.update(X, nfo.query(X))
    est = s.estimate()
    kappa = 0.3
    for x in rng.normal(size=(20, 2)):
        z = np.append(x, -1.0)
        width = z @ s.normal_inverse() @ z
        r = np.min(est.residuals(x))
        assert safety_margin(s, est, x, kappa) == pytest.approx(math.copysign(r * r, r) - kappa ** 2 * width,
                                                                rel=1e-8, abs=1e-12)


def test_safety_set_soundness():
    """Points certified by the safety set are truly feasible whenever the ellipsoid covers."""
    rng = np.random.default_rng(4)
    covered = 0
    for trial in range(60):
        raw = random_polytope(2, 4, rng)
        g = geometry.geometry_summary(raw)
        P, sbar = geometry.normalize(raw, 0.05, g)
        nfo = NoisyFeasibilityOracle(P, sbar, rng)
        s = LeastSquaresState(2, 4)
        for c in rng.dirichlet(np.ones(len(g.vertices)), size=2) @ g.vertices:
            X = collect_data_points(c, 40, 0.2)
            s.update(X, nfo.query(X))
        psi = psi_inverse(s.N, 0.1 / 4, 2)
        if not ellipsoid_contains(s, beta_of(P), psi, sbar):
            continue
        covered += 1
        est = s.estimate()
        lo, hi = g.vertices.min(axis=0) - 1, g.vertices.max(axis=0) + 1
        for x in rng.uniform(lo, hi, size=(200, 2)):
            if safety_margin(s, est, x, sbar * psi) >= 0:
                assert np.all(P.residuals(x) >= -1e-9)
    assert covered > 40


# -- constants ------------------------------------------------------------------

def reference_constants(geom, eps0, sbar, delta, T, r0, tau, L, M, sigma0, gap, n_ref, d, m):
    """Second, literal transcription of the constant definitions."""
    lam, gam = geom.diameter, geom.radius
    L_A = geom.rho_min / (2 * math.sqrt(d))
    kappa = sbar * psi_inverse(n_ref, delta / T / m, d)
    C0 = math.sqrt(d * ((1 + gam ** 2) / r0 ** 2 + 1))
    C1 = kappa * (1 + gam) * C0 / L_A
    C2 = max((4 * C1 * L_A / tau) ** 2, (8 * kappa * C0 / tau) ** 2,
             64 * kappa ** 2 / tau ** 2 * (1 + d * lam ** 2 / r0 ** 2), C1 ** 2)
    lg = math.log(4 / delta)
    C3 = (18 * math.sqrt(2) * (2 * lam + 1) * (sigma0 + L * lam) * math.sqrt(lg)) ** 3
    C4 = (9 * (M + sigma0) + 6 * L * (1 + lam) ** 2) ** 1.5
    C5 = (4 * M + 2 * L * (1 + lam ** 2)) ** 2
    C6 = (2 * max(16 * math.sqrt(2) * (1 + lam) * (L * lam + sigma0) * math.sqrt(lg),
                  4 * math.sqrt(2) * (M + sigma0), L ** 2 * (lam + 2))) ** 2
    C7 = 4 * (L * lam + sigma0) * math.sqrt(2 * lg)
    C8 = max(gap, 4 * C7 * (1 + lam), 4 * math.sqrt(2) * (M + sigma0), L ** 2 * (lam + 2))
    C9 = max(gap, 4 * M, 2 * L ** 2 * (lam + 2))
    return dict(C0=C0, C1=C1, C2=C2, C3=C3, C4=C4, C5=C5, C6=C6, C7=C7, C8=C8, C9=C9, kappa=kappa, L_A=L_A)


def test_constants_match_reference(cutting_machine):
    p = cutting_machine
    g = geometry.geometry_summary(p.polytope)
    P, sbar = geometry.normalize(p.polytope, 0.01, g)
    eps0 = float(np.min(P.residuals(p.x0)))
    c = compute_constants(g, P, p.x0, sbar, 0.01, 500, 0.01, eps0 / 2, p.objective.L, p.objective.M,
                          sigma0=0.001, f_gap0=p.f_gap0, n_ref=1e25)
    ref = reference_constants(g, eps0, sbar, 0.01, 500, 0.01, eps0 / 2, p.objective.L, p.objective.M,
                              0.001, p.f_gap0, 1e25, 2, 5)
    for k, v in ref.items():
        assert getattr(c, k) == pytest.approx(v, rel=1e-12), k
    assert c.eps0 == pytest.approx(eps0)
    assert "C9=" in c.report() and len(c.report().splitlines()) == len(c.as_dict())


def test_constants_default_reference_point(cutting_machine):
    p = cutting_machine
    g = geometry.geometry_summary(p.polytope)
    P, sbar = geometry.normalize(p.polytope, 0.01, g)
    eps0 = float(np.min(P.residuals(p.x0)))
    c = compute_constants(g, P, p.x0, sbar, 0.05, 200, 0.01, eps0 / 2, p.objective.L, p.objective.M)
    assert c.n_ref == pytest.approx(c.C2 * 200 ** 2, rel=1e-9)
    # tighter confidence means larger constants
    c2 = compute_constants(g, P, p.x0, sbar, 0.001, 200, 0.01, eps0 / 2, p.objective.L, p.objective.M)
    assert c2.C2 > c.C2


def test_constants_preconditions(cutting_machine):
    p = cutting_machine
    g = geometry.geometry_summary(p.polytope)
    P, sbar = geometry.normalize(p.polytope, 0.01, g)
    with pytest.raises(EstimationError):
        compute_constants(g, P, [90.0, 0.09], sbar, 0.05, 10, 0.01, 1e-8, 1, 1)
    with pytest.raises(EstimationError):
        compute_constants(g, P, p.x0, sbar, 0.05, 10, 0.01, 1.0, 1, 1)


def test_min_samples():
    C2 = 1000.3
    assert min_samples("1", 0, C2, 2) == round_samples(2 * C2, 2) == 2004
    assert min_samples("2", 0, C2, 2) == min_samples("2", 7, C2, 2) == 1004
    assert min_samples("4", 3, C2, 2) == round_samples(8 * C2, 2)
    assert min_samples("1", 0, C2, 2, scale=0.001) == 4
    with pytest.raises(ValueError):
        min_samples("1", 0, C2, 2, scale=0)


@pytest.mark.parametrize("variant", list(Variant))
def test_cumulative_counts_cover_theory(variant):
    C2 = 37.5
    total = 0
    for t in range(200):
        total += min_samples(variant, t, C2, 3)
        assert total >= theory_cumulative(variant, t, C2)


def test_h_tracker_matches_closed_form(cutting_machine):
    p = cutting_machine
    g = geometry.geometry_summary(p.polytope)
    P, sbar = geometry.normalize(p.polytope, 0.01, g)
    eps0 = float(np.min(P.residuals(p.x0)))
    c = compute_constants(g, P, p.x0, sbar, 0.05, 50, 0.01, eps0 / 2, p.objective.L, p.objective.M)
    etas = [(t + 2.0) ** (-2 / 3) for t in range(50)]
    Ns = np.cumsum([min_samples("1", t, c.C2, 2) for t in range(50)])
    tr = HTracker(c)
    for t in range(50):
        assert tr.value(Ns[t]) == pytest.approx(h_value(etas, Ns, t, c), rel=1e-9, abs=1e-15)
        # the safe-sampling inequality holds under theory-mode counts
        assert sample_count_lhs(Ns[t], c) <= tr.value(Ns[t]) ** 2
        tr.advance(etas[t], Ns[t])
