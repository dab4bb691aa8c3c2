import numpy as np
import pytest

from reliable_fw import geometry
from reliable_fw.oracles import (
    NoisyFeasibilityOracle,
    StaleTokenError,
    StochasticGradientOracle,
    VicinityError,
    ball_noise,
    get_problem,
    quadratic_objective,
    synthetic_problem,
)


def box():
    return geometry.box([0.0, 0.0], [1.0, 1.0])


def test_exact_measurement():
    P = box()
    nfo = NoisyFeasibilityOracle(P, 0.0)
    X = np.array([[0.5, 0.25]])
    np.testing.assert_allclose(nfo.query(X), X @ P.A.T - P.b)
    assert nfo.count == 1


def test_noise_statistics():
    nfo = NoisyFeasibilityOracle(box(), 0.3, np.random.default_rng(0))
    X = np.tile([0.5, 0.5], (20000, 1))
    noise = nfo.query(X) - nfo.exact(X)
    assert abs(noise.mean()) < 0.01
    assert noise.std() == pytest.approx(0.3, rel=0.02)
    assert nfo.count == 20000


def test_repeated_queries_have_mean_statistics():
    nfo = NoisyFeasibilityOracle(box(), 0.5, np.random.default_rng(1))
    pts = np.tile([[0.2, 0.3]], (4000, 1))
    Y = nfo.query_repeated(pts, 100)
    assert nfo.count == 400000
    assert (Y - nfo.exact(pts)).std() == pytest.approx(0.05, rel=0.03)
    with pytest.raises(ValueError):
        nfo.query_repeated(pts, 0)


def test_vicinity_guard():
    nfo = NoisyFeasibilityOracle(box(), 0.1, np.random.default_rng(0), strict_vicinity=True, r0=0.01)
    nfo.query(np.array([[1.01, 0.5], [0.5, -0.01]]))  # exactly r0 away
    assert nfo.guard_trips == 0
    with pytest.raises(VicinityError) as err:
        nfo.query(np.array([[1.02, 0.5]]))
    assert err.value.distance == pytest.approx(0.02)
    assert nfo.guard_trips == 1
    with pytest.raises(ValueError):
        NoisyFeasibilityOracle(box(), 0.1, strict_vicinity=True)


def test_query_shape_checked():
    with pytest.raises(ValueError):
        NoisyFeasibilityOracle(box(), 0.1).query(np.zeros((2, 3)))


def test_recording():
    nfo = NoisyFeasibilityOracle(box(), 0.1, np.random.default_rng(0), record=True)
    nfo.query(np.zeros((3, 2)))
    nfo.query_repeated(np.zeros((2, 2)), 5)
    assert [len(x) for x, _, _ in nfo.log] == [3, 2]
    assert nfo.log[1][2].tolist() == [5, 5]


def test_sfo_token_discipline():
    obj = quadratic_objective([0.0, 0.0])
    sfo = StochasticGradientOracle(obj, 0.1, np.random.default_rng(0), d=2)
    tok = sfo.mint()
    g1 = sfo.query([1.0, 0.0], tok)
    g2 = sfo.query([0.0, 0.0], tok)
    # same sample: the noise cancels in the difference
    np.testing.assert_allclose(g1 - g2, [2.0, 0.0])
    with pytest.raises(StaleTokenError):
        sfo.query([0.0, 0.0], tok)
    other = StochasticGradientOracle(obj, 0.1, np.random.default_rng(0), d=2)
    with pytest.raises(StaleTokenError):
        other.query([0.0, 0.0], tok)
    assert sfo.count == 2


def test_sfo_noise_bounded_and_unbiased():
    rng = np.random.default_rng(2)
    draws = np.array([ball_noise(rng, 3, 0.2) for _ in range(20000)])
    assert np.max(np.linalg.norm(draws, axis=1)) <= 0.2
    assert np.all(np.abs(draws.mean(axis=0)) < 0.005)
    assert np.array_equal(ball_noise(rng, 3, 0.0), np.zeros(3))


def test_cutting_machine_problem(cutting_machine):
    p = cutting_machine
    np.testing.assert_allclose(p.polytope.residuals([150.0, 0.09]), [0.782957, 50, 50, 0.07, 0.01], rtol=1e-12)
    np.testing.assert_allclose(p.polytope.residuals([130.0, 0.09]), [0.582257, 70, 30, 0.07, 0.01], rtol=1e-12)
    assert p.objective.value(p.x0) == pytest.approx(83.593276, rel=1e-6)
    np.testing.assert_allclose(p.xstar, [200.0, 0.16])
    assert p.fstar == pytest.approx(36.2054, rel=1e-5)


def test_cutting_machine_gradient_matches_finite_differences(cutting_machine):
    obj = cutting_machine.objective
    for z in ([150.0, 0.09], [110.0, 0.15], [199.0, 0.081]):
        z = np.array(z)
        h = np.array([1e-4, 1e-9])
        fd = [(obj.value(z + e) - obj.value(z - e)) / (2 * e[k]) for k, e in enumerate(np.diag(h))]
        np.testing.assert_allclose(obj.gradient(z), fd, rtol=1e-5)


def test_synthetic_problems_are_seeded():
    a = synthetic_problem("quad-poly", d=3, seed=7)
    b = synthetic_problem("quad-poly", d=3, seed=7)
    c = synthetic_problem("quad-poly", d=3, seed=8)
    assert a.polytope == b.polytope
    assert a.polytope != c.polytope
    assert a.polytope.contains(a.x0) and np.min(a.polytope.residuals(a.x0)) > 0


@pytest.mark.parametrize("name", ["quad-box", "quad-box-interior", "quad-poly", "trig-quad"])
def test_registry(name):
    p = get_problem(name, dim=2, seed=1)
    assert p.polytope.contains(p.x0)
    assert p.objective.value(p.xstar) == pytest.approx(p.fstar)
    assert p.f_gap0 >= 0


def test_unknown_problem():
    with pytest.raises(ValueError):
        get_problem("nope")
