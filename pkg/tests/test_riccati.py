import numpy as np
import pytest

from lqgcap import (
    RiccatiRecursion, iterate_riccati_recursion, make_system, solve_kalman,
    solve_lqr)
from lqgcap.errors import NoConvergence, NotStabilizable, NotStabilizing, \
    SingularInnovation

from _reference import dare_kalman_cov, dare_lqr_cov
from conftest import random_system, two_state

# Scalar fixed points frozen from the closed-form quadratic roots:
#   filter, F=0.5 H=1 W=1 V=1:  Sigma^2 - 0.25 Sigma - 1 = 0
#   regulator, F=1.4 G=1 Q=1 R=1:  E^2 - 1.96 E - 1 = 0
SIGMA_SCALAR = 1.1327822185373186
E_SCALAR = 2.380142849854971


def scalar_filter_system():
    return make_system(F=np.array([[0.5]]), G=np.array([[1.0]]),
                      H=np.array([[1.0]]), J=np.zeros((1, 1)),
                      W=np.eye(1), V=np.eye(1))


def test_scalar_kalman_frozen_value():
    kal = solve_kalman(scalar_filter_system())
    sig = float(kal.Sigma[0, 0])
    assert abs(sig - SIGMA_SCALAR) <= 1e-9
    # fixed point satisfies its own quadratic
    assert abs(sig * sig - 0.25 * sig - 1.0) <= 1e-8
    assert abs(float(kal.Psi[0, 0]) - (sig + 1.0)) <= 1e-9
    assert abs(float(kal.Kp[0, 0]) - 0.5 * sig / (sig + 1.0)) <= 1e-9
    assert kal.residual <= 1e-10


def test_scalar_lqr_frozen_value():
    sys = make_system(F=np.array([[1.4]]), G=np.array([[1.0]]),
                      H=np.array([[1.0]]), J=np.zeros((1, 1)),
                      W=np.eye(1), V=np.eye(1), Q=np.eye(1), R=np.eye(1))
    lqr = solve_lqr(sys)
    e = float(lqr.E[0, 0])
    assert abs(e - E_SCALAR) <= 1e-9
    assert abs(e * e - 1.96 * e - 1.0) <= 1e-8
    assert abs(float(lqr.PsiLqr[0, 0]) - (1.0 + e)) <= 1e-9
    assert abs(float(lqr.Klqr[0, 0]) - 1.4 * e / (1.0 + e)) <= 1e-9
    assert lqr.closed_loop_stable


def test_scalar_lqr_dual_of_filter():
    # F=0.5, G=1, Q=1, R=1 satisfies the same quadratic as the filter case
    sys = make_system(F=np.array([[0.5]]), G=np.array([[1.0]]),
                      H=np.array([[1.0]]), J=np.zeros((1, 1)),
                      W=np.eye(1), V=np.eye(1), Q=np.eye(1), R=np.eye(1))
    lqr = solve_lqr(sys)
    assert abs(float(lqr.E[0, 0]) - SIGMA_SCALAR) <= 1e-9


def test_static_plant_kalman_closed_form():
    sys = make_system(F=np.zeros((2, 2)), G=np.zeros((2, 1)),
                      H=np.array([[1.0, 2.0]]), J=np.zeros((1, 1)),
                      W=np.diag([1.0, 3.0]), V=np.eye(1))
    kal = solve_kalman(sys)
    np.testing.assert_allclose(kal.Sigma, sys.W, atol=1e-12)
    np.testing.assert_allclose(kal.Kp, np.zeros((2, 1)), atol=1e-12)
    np.testing.assert_allclose(kal.Psi, sys.H @ sys.W @ sys.H.T + sys.V,
                               atol=1e-12)


def test_zero_state_cost_shortcut(two_state_system):
    sys = make_system(F=two_state_system.F, G=two_state_system.G,
                      H=two_state_system.H, J=two_state_system.J,
                      W=two_state_system.W, V=two_state_system.V)
    lqr = solve_lqr(sys)
    assert np.all(lqr.E == 0.0)
    assert np.all(lqr.Klqr == 0.0)
    np.testing.assert_array_equal(lqr.PsiLqr, sys.R)
    assert lqr.Jstar == 0.0


def test_two_state_kalman_residual_and_stability(two_state_system):
    kal = solve_kalman(two_state_system)
    assert kal.residual <= 1e-10
    closed = two_state_system.F - kal.Kp @ two_state_system.H
    assert max(abs(np.linalg.eigvals(closed))) < 1.0


def test_two_state_against_dare(two_state_system):
    kal = solve_kalman(two_state_system)
    lqr = solve_lqr(two_state_system)
    np.testing.assert_allclose(kal.Sigma, dare_kalman_cov(two_state_system),
                               rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(lqr.E, dare_lqr_cov(two_state_system),
                               rtol=1e-8, atol=1e-8)


def test_random_battery_against_dare():
    rng = np.random.default_rng(424242)
    checked = 0
    while checked < 8:
        sys = random_system(rng)
        kal = solve_kalman(sys)
        scale = 1.0 + np.abs(kal.Sigma).max()
        np.testing.assert_allclose(kal.Sigma, dare_kalman_cov(sys),
                                   atol=1e-8 * scale)
        if np.any(sys.Q):
            lqr = solve_lqr(sys, kalman=kal)
            scale = 1.0 + np.abs(lqr.E).max()
            np.testing.assert_allclose(lqr.E, dare_lqr_cov(sys),
                                       atol=1e-8 * scale)
        checked += 1


def test_jstar_invariant_under_orthogonal_state_change(two_state_system):
    lqr0 = solve_lqr(two_state_system)
    rng = np.random.default_rng(7)
    U, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    s = two_state_system
    rotated = make_system(
        F=U @ s.F @ U.T, G=U @ s.G, H=s.H @ U.T, J=s.J,
        W=U @ s.W @ U.T, L=U @ s.L, V=s.V, Q=U @ s.Q @ U.T, R=s.R)
    lqr1 = solve_lqr(rotated)
    assert abs(lqr1.Jstar - lqr0.Jstar) <= 1e-9 * (1.0 + abs(lqr0.Jstar))


def test_iterate_records_defects():
    rec = RiccatiRecursion(A=np.array([[0.5]]), C=np.array([[1.0]]),
                           Wn=np.eye(1), Vn=np.eye(1), S=np.zeros((1, 1)))
    res = iterate_riccati_recursion(rec, np.zeros((1, 1)),
                                    record_defects=True)
    assert res.converged
    assert len(res.defects) == res.iterations
    assert res.defects[-1] <= 1e-11 * (1.0 + float(res.fixed_point[0, 0]))
    # defects shrink overall
    assert res.defects[-1] < res.defects[0]


def test_iterate_max_iter_cap():
    rec = RiccatiRecursion(A=np.array([[0.5]]), C=np.array([[1.0]]),
                           Wn=np.eye(1), Vn=np.eye(1), S=np.zeros((1, 1)))
    res = iterate_riccati_recursion(rec, np.zeros((1, 1)), max_iter=2)
    assert not res.converged
    assert res.iterations == 2


@pytest.mark.filterwarnings("ignore:overflow")
def test_kalman_no_convergence_on_undetectable_unstable():
    sys = make_system(F=np.array([[1.4]]), G=np.array([[1.0]]),
                      H=np.zeros((1, 1)), J=np.eye(1),
                      W=np.eye(1), V=np.eye(1))
    with pytest.raises(NoConvergence):
        solve_kalman(sys)


def test_kalman_not_stabilizing_on_unit_circle_mode():
    # noiseless marginal mode: recursion converges but the filter loop
    # sits exactly on the unit circle
    sys = make_system(F=np.eye(1), G=np.ones((1, 1)), H=np.eye(1),
                      J=np.zeros((1, 1)), W=np.zeros((1, 1)), V=np.eye(1))
    with pytest.raises(NotStabilizing):
        solve_kalman(sys)


def test_lqr_not_stabilizable_raises():
    sys = make_system(F=np.array([[1.4]]), G=np.zeros((1, 1)),
                      H=np.eye(1), J=np.zeros((1, 1)),
                      W=np.eye(1), V=np.eye(1), Q=np.eye(1), R=np.eye(1))
    with pytest.raises(NotStabilizable):
        solve_lqr(sys)


def test_singular_innovation_raises():
    rec = RiccatiRecursion(A=np.eye(1), C=np.zeros((1, 1)),
                           Wn=np.eye(1), Vn=np.zeros((1, 1)),
                           S=np.zeros((1, 1)))
    with pytest.raises(SingularInnovation):
        rec.step(np.zeros((1, 1)))


def test_jstar_formula_consistency(two_state_system):
    # long-run average cost equals the trace identity built from the
    # filter quantities
    kal = solve_kalman(two_state_system)
    lqr = solve_lqr(two_state_system)
    direct = (np.trace(kal.Kp @ kal.Psi @ kal.Kp.T @ lqr.E)
              + np.trace(kal.Sigma @ two_state_system.Q))
    assert abs(lqr.Jstar - float(direct)) <= 1e-12 * (1.0 + abs(lqr.Jstar))
