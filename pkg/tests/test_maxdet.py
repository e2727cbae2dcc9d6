import math

import numpy as np
import pytest

from lqgcap import (
    MatrixVariable, MaxdetProblem, SolveOptions, Status, check_feasible,
    register_backend, solve_maxdet)
from lqgcap.errors import DimensionMismatch, ProblemStructureError
from lqgcap.maxdet import MaxdetSolution

from _reference import waterfill_value


def identity_cap_problem(n=3):
    """maximize logdet X subject to 0 <= X <= I; optimum X = I."""
    X = MatrixVariable("X", n, n, symmetric=True)
    return MaxdetProblem(
        variables=[X],
        objective=lambda a: a["X"],
        lmis=[lambda a: np.eye(n) - a["X"], lambda a: a["X"]],
        lmi_names=["cap", "psd"])


def channel_pair_problem(power):
    """Two parallel channels with gains 1 and 2 under a power budget."""
    p1 = MatrixVariable("p1", 1, 1, symmetric=True)
    p2 = MatrixVariable("p2", 1, 1, symmetric=True)

    def obj(a):
        x1 = a["p1"][0, 0]
        x2 = a["p2"][0, 0]
        return np.array([[1.0 + x1, 0.0], [0.0, 1.0 + 4.0 * x2]])

    return MaxdetProblem(
        variables=[p1, p2],
        objective=obj,
        lmis=[lambda a: a["p1"], lambda a: a["p2"]],
        traces=[(lambda a: a["p1"][0, 0] + a["p2"][0, 0], power)])


def test_identity_cap_optimum():
    prob = identity_cap_problem()
    sol = solve_maxdet(prob)
    assert sol.status == Status.OPTIMAL
    assert abs(sol.objective_value) <= 1e-6
    np.testing.assert_allclose(sol.assignment["X"], np.eye(3), atol=1e-4)
    assert sol.mode == "exact"


def test_channel_pair_matches_waterfilling():
    for power in (0.5, 3.0):
        sol = solve_maxdet(channel_pair_problem(power))
        assert sol.status == Status.OPTIMAL
        want = waterfill_value(power, [1.0, 2.0])
        assert abs(0.5 * sol.objective_value - want) <= 1e-6


def test_budget_saturation():
    x = MatrixVariable("x", 1, 1, symmetric=True)
    prob = MaxdetProblem(
        variables=[x],
        objective=lambda a: np.eye(1) + a["x"],
        lmis=[lambda a: a["x"]],
        traces=[(lambda a: a["x"][0, 0], 3.0)])
    sol = solve_maxdet(prob)
    assert sol.status == Status.OPTIMAL
    assert abs(sol.objective_value - math.log(4.0)) <= 1e-6
    assert abs(sol.assignment["x"][0, 0] - 3.0) <= 1e-5


def test_trace_only_problem():
    # no LMI at all; the logdet domain supplies the lower boundary
    x = MatrixVariable("x", 1, 1, symmetric=True)
    prob = MaxdetProblem(
        variables=[x],
        objective=lambda a: np.eye(1) + a["x"],
        traces=[(lambda a: a["x"][0, 0], 3.0)])
    sol = solve_maxdet(prob)
    assert sol.status == Status.OPTIMAL
    assert abs(sol.objective_value - math.log(4.0)) <= 1e-6


def test_unconstrained_interior_optimum():
    g = MatrixVariable("g", 1, 1)

    def obj(a):
        v = a["g"][0, 0]
        return np.array([[2.0, v], [v, 2.0]])

    sol = solve_maxdet(MaxdetProblem(variables=[g], objective=obj))
    assert sol.status == Status.OPTIMAL
    assert abs(sol.objective_value - math.log(4.0)) <= 1e-8
    assert abs(sol.assignment["g"][0, 0]) <= 1e-6


def test_constant_negative_lmi_infeasible():
    prob = identity_cap_problem()
    bad = MaxdetProblem(
        variables=prob.variables,
        objective=prob.objective,
        lmis=list(prob.lmis) + [lambda a: -np.eye(1)])
    sol = solve_maxdet(bad)
    assert sol.status == Status.INFEASIBLE


def test_lmi_scaling_leaves_optimum_alone():
    base = solve_maxdet(channel_pair_problem(3.0))
    p1 = MatrixVariable("p1", 1, 1, symmetric=True)
    p2 = MatrixVariable("p2", 1, 1, symmetric=True)

    def obj(a):
        return np.array([[1.0 + a["p1"][0, 0], 0.0],
                         [0.0, 1.0 + 4.0 * a["p2"][0, 0]]])

    scaled = MaxdetProblem(
        variables=[p1, p2],
        objective=obj,
        lmis=[lambda a: 5.0 * a["p1"], lambda a: 5.0 * a["p2"]],
        traces=[(lambda a: a["p1"][0, 0] + a["p2"][0, 0], 3.0)])
    sol = solve_maxdet(scaled)
    assert abs(sol.objective_value - base.objective_value) <= 1e-6


def test_gap_refinement():
    loose = solve_maxdet(channel_pair_problem(3.0),
                         SolveOptions(tol_gap=1e-4))
    tight = solve_maxdet(channel_pair_problem(3.0),
                         SolveOptions(tol_gap=1e-9))
    want = waterfill_value(3.0, [1.0, 2.0])
    assert abs(0.5 * loose.objective_value - want) <= 1e-4
    assert abs(0.5 * tight.objective_value - want) <= 1e-8
    assert tight.duality_gap_estimate <= 1e-9


def test_objective_value_matches_direct_logdet():
    sol = solve_maxdet(channel_pair_problem(3.0))
    prob = channel_pair_problem(3.0)
    direct = prob.objective_logdet(sol.assignment)
    assert abs(direct - sol.objective_value) <= 1e-12 * (1.0 + abs(direct))
    mat = prob.objective_matrix(sol.assignment)
    sign, logdet = np.linalg.slogdet(mat)
    assert sign > 0
    assert abs(logdet - direct) <= 1e-12 * (1.0 + abs(direct))


def test_check_feasible_reports():
    prob = identity_cap_problem()
    assert prob.zero_feasible
    rep = check_feasible(prob, prob.zero_assignment())
    assert rep.feasible
    assert abs(rep.worst_lmi_eig) <= 1e-12  # X >= 0 is tight at zero
    assert rep.worst_trace_slack == float("inf")

    rep = check_feasible(prob, {"X": -np.eye(3)})
    assert not rep.feasible
    assert abs(rep.worst_lmi_eig - (-1.0)) <= 1e-12

    pair = channel_pair_problem(0.5)
    rep = check_feasible(pair, {"p1": np.zeros((1, 1)),
                                "p2": np.zeros((1, 1))})
    assert rep.feasible
    assert abs(rep.worst_trace_slack - 0.5) <= 1e-12


def test_check_feasible_shape_error():
    prob = identity_cap_problem()
    with pytest.raises(DimensionMismatch):
        check_feasible(prob, {"X": np.eye(2)})


def test_warm_start_reaches_same_value():
    cold = solve_maxdet(channel_pair_problem(3.0))
    warm = solve_maxdet(channel_pair_problem(3.0),
                        SolveOptions(warm_start=cold.assignment))
    assert warm.status == Status.OPTIMAL
    assert abs(warm.objective_value - cold.objective_value) <= 1e-7


def test_max_iterations_status():
    # warm start inside the cone so the run goes straight to the main
    # outer loop, then starve that loop
    start = {"p1": np.array([[1.0]]), "p2": np.array([[1.0]])}
    sol = solve_maxdet(channel_pair_problem(3.0),
                       SolveOptions(max_outer=1, tol_gap=1e-12,
                                    warm_start=start))
    assert sol.status == Status.MAX_ITERATIONS
    assert sol.duality_gap_estimate > 1e-12


def test_nonlinear_objective_rejected():
    X = MatrixVariable("X", 2, 2, symmetric=True)
    with pytest.raises(ProblemStructureError):
        MaxdetProblem(variables=[X], objective=lambda a: a["X"] @ a["X"])


def test_asymmetric_lmi_rejected():
    X = MatrixVariable("X", 2, 2, symmetric=True)
    shear = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ProblemStructureError):
        MaxdetProblem(variables=[X], objective=lambda a: a["X"],
                      lmis=[lambda a: a["X"] + shear])


def test_duplicate_variable_rejected():
    X = MatrixVariable("X", 1, 1, symmetric=True)
    Y = MatrixVariable("X", 1, 1, symmetric=True)
    with pytest.raises(ProblemStructureError):
        MaxdetProblem(variables=[X, Y], objective=lambda a: a["X"])


def test_symmetric_variable_must_be_square():
    with pytest.raises(ProblemStructureError):
        MatrixVariable("bad", 2, 3, symmetric=True)


def test_pack_unpack_round_trip():
    sym = MatrixVariable("S", 3, 3, symmetric=True)
    m = np.arange(9, dtype=float).reshape(3, 3)
    back = sym.unpack(sym.pack(m))
    np.testing.assert_allclose(back, 0.5 * (m + m.T), atol=1e-15)
    assert sym.n_params == 6

    rect = MatrixVariable("R", 2, 3)
    m = np.arange(6, dtype=float).reshape(2, 3)
    np.testing.assert_array_equal(rect.unpack(rect.pack(m)), m)
    assert rect.n_params == 6


def test_backend_registry_routes_and_rejects():
    prob = identity_cap_problem()
    canned = MaxdetSolution(
        assignment=prob.zero_assignment(), objective_value=-1.0,
        status=Status.OPTIMAL, kkt_residual=0.0, duality_gap_estimate=0.0,
        newton_iterations=0, mode="canned")
    register_backend("canned_test", lambda p, o: canned)
    out = solve_maxdet(prob, backend="canned_test")
    assert out is canned
    with pytest.raises(ProblemStructureError, match="unknown backend"):
        solve_maxdet(prob, backend="no_such_engine")
