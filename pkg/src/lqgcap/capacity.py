"""Joint control-and-communication capacity of a noisy linear plant.

The largest information rate a sender can push through the measurement
loop of a linear-quadratic-Gaussian system, while the long-run average
control cost stays within a budget, is the optimum of a determinant
maximization over stationary second moments of the transmit policy.
This module builds that program in two interchangeable parameterizations
(separate moment blocks, or one stacked moment matrix), solves it with
the engine in maxdet, snaps the solution to an exact fixed point of the
policy covariance recursion when that improves it, checks achievability
certificates, and applies a small moment perturbation when the innovation
part of the policy is singular, trading a bounded amount of rate for a
usable transmit covariance.

Budgets below the minimum achievable control cost are rejected up front.
Budgets exactly at the floor pin the moments to a face of the cone; that
case is solved exactly by a covariance recursion instead of the SDP.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from . import _mat, maxdet
from .errors import (AssumptionViolation, BudgetBelowFloor, ConfigError,
                     LqgcapError, SolverFailure)
from .maxdet import MatrixVariable, SolveOptions
from .model import (LqgSystem, Witness, check_assumptions, pbh_detectable,
                    validate_system)
from .riccati import (MAX_ITER, TOL_RICCATI, KalmanSolution, LqrSolution,
                      RiccatiRecursion, iterate_riccati_recursion,
                      solve_kalman, solve_lqr)

TOL_CERT = 1e-6
TOL_PD = 1e-8

FORMS = ("blocks", "upsilon")


def nats_to_bits(x):
    return x / math.log(2.0)


@dataclass
class CapacityOptions:
    """Knobs for compute_capacity.  Defaults match the documented
    tolerance contract; loosen tol_gap for quick surveys."""

    form: str = "blocks"
    tol_gap: float = maxdet.TOL_GAP
    tol_feas: float = maxdet.TOL_FEAS
    tol_kkt: float = maxdet.TOL_KKT
    tol_cert: float = TOL_CERT
    tol_pd: float = TOL_PD
    rate_sacrifice: float = 1e-4
    perturb_eps: tuple = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
    polish: bool = True
    recursion_max_iter: int = 100000
    warm_start: dict | None = None
    backend: str | None = None


def build_capacity_problem(system, kalman, lqr, budget, form="blocks"):
    """Compile the moment program for one budget.

    Variables are the stationary second moments of (decoder error,
    transmit direction): either SigmaHat (r x r), Gamma (p x r) and
    Pi (p x p), or the stacked matrix Upsilon.  The objective matrix is
    the stationary measurement innovation covariance; one LMI keeps the
    stacked moment PSD, the other keeps the error covariance recursion
    consistent, and the scalar bound spends at most the budget above the
    cost floor.
    """
    sys = validate_system(system)
    r, p, l = sys.r, sys.p, sys.l
    F, G, H, J = sys.F, sys.G, sys.H, sys.J
    Kp, Psi = kalman.Kp, kalman.Psi
    floor = lqr.Jstar
    slack = float(budget) - floor
    if slack < -maxdet.TOL_FEAS * (1.0 + abs(floor)):
        raise BudgetBelowFloor(budget=budget, floor=floor)
    bound = max(slack, 0.0)

    KpPsi = Kp @ Psi
    KpPsiKp = _mat.sym(KpPsi @ Kp.T)
    weight = _trace_weight(lqr)  # (r+p) x (r+p)

    if form == "blocks":
        variables = [MatrixVariable("SigmaHat", r, r, symmetric=True),
                     MatrixVariable("Gamma", p, r),
                     MatrixVariable("Pi", p, p, symmetric=True)]

        def objective(a):
            S, Ga, Pi = a["SigmaHat"], a["Gamma"], a["Pi"]
            return (H @ S @ H.T + J @ Pi @ J.T + H @ Ga.T @ J.T
                    + J @ Ga @ H.T + Psi)

        def lmi_moment(a):
            return np.block([[a["SigmaHat"], a["Gamma"].T],
                             [a["Gamma"], a["Pi"]]])

        def lmi_stationary(a):
            S, Ga, Pi = a["SigmaHat"], a["Gamma"], a["Pi"]
            top = (F @ S @ F.T + G @ Pi @ G.T + G @ Ga @ F.T
                   + F @ Ga.T @ G.T + KpPsiKp - S)
            N = (F @ S @ H.T + F @ Ga.T @ J.T + G @ Ga @ H.T
                 + G @ Pi @ J.T + KpPsi)
            Py = (H @ S @ H.T + J @ Pi @ J.T + H @ Ga.T @ J.T
                  + J @ Ga @ H.T + Psi)
            return np.block([[top, N], [N.T, Py]])

        def cost_trace(a):
            U = np.block([[a["SigmaHat"], a["Gamma"].T],
                          [a["Gamma"], a["Pi"]]])
            return float(np.trace(U @ weight))

    elif form == "upsilon":
        variables = [MatrixVariable("Upsilon", r + p, r + p, symmetric=True)]
        T = np.block([[F, G], [H, J]])          # (r+l) x (r+p)
        P = np.zeros((r + l, r + p))
        P[:r, :r] = np.eye(r)
        K = np.vstack([Kp, np.eye(l)])          # (r+l) x l
        KPK = _mat.sym(K @ Psi @ K.T)
        HJ = np.hstack([H, J])                  # l x (r+p)

        def objective(a):
            return HJ @ a["Upsilon"] @ HJ.T + Psi

        def lmi_moment(a):
            return a["Upsilon"]

        def lmi_stationary(a):
            U = a["Upsilon"]
            return T @ U @ T.T - P @ U @ P.T + KPK

        def cost_trace(a):
            return float(np.trace(a["Upsilon"] @ weight))

    else:
        raise ConfigError(f"unknown capacity form {form!r}; "
                          f"expected one of {FORMS}")

    return maxdet.MaxdetProblem(
        variables, objective, [lmi_moment, lmi_stationary],
        [(cost_trace, bound)],
        lmi_names=("moment_psd", "stationarity"),
        name=f"capacity-{form}")


def _trace_weight(lqr):
    """PSD weight so the cost above the floor is trace(Upsilon @ weight)."""
    KI = np.hstack([lqr.Klqr, np.eye(lqr.Klqr.shape[0])])
    return _mat.sym(KI.T @ lqr.PsiLqr @ KI)


def _assemble_upsilon(SigmaHat, Gamma, Pi):
    return np.block([[SigmaHat, Gamma.T], [Gamma, Pi]])


def _split_upsilon(U, r):
    return _mat.sym(U[:r, :r]), U[r:, :r].copy(), _mat.sym(U[r:, r:])


def _assignment_for(form, SigmaHat, Gamma, Pi):
    if form == "upsilon":
        return {"Upsilon": _assemble_upsilon(SigmaHat, Gamma, Pi)}
    return {"SigmaHat": SigmaHat, "Gamma": Gamma, "Pi": Pi}


def _policy_operator(sys, kalman, Gamma, Pi):
    """Covariance recursion of the decoder error under fixed (Gamma, Pi).

    Its fixed points are exactly the error covariances consistent with
    the stationarity LMI holding with equality.
    """
    F, G, H, J = sys.F, sys.G, sys.H, sys.J
    Kp, Psi = kalman.Kp, kalman.Psi
    KpPsi = Kp @ Psi
    Wn = (G @ Pi @ G.T + G @ Gamma @ F.T + F @ Gamma.T @ G.T
          + KpPsi @ Kp.T)
    Vn = (J @ Pi @ J.T + H @ Gamma.T @ J.T + J @ Gamma @ H.T + Psi)
    S = (F @ Gamma.T @ J.T + G @ Gamma @ H.T + G @ Pi @ J.T + KpPsi)
    return RiccatiRecursion(A=F, C=H, Wn=Wn, Vn=Vn, S=S)


def _rate_from_psi_y(PsiY, Psi):
    a = _mat.logdet_pd(PsiY)
    b = _mat.logdet_pd(Psi)
    if a is None or b is None:
        return None
    return 0.5 * (a - b)


def _sigma_pinv(SigmaHat):
    pinv, rank = _mat.psd_pinv(SigmaHat, rel_tol=1e-9, abs_tol=1e-8)
    return pinv, rank


def _stabilizing_injection(A, C):
    """Gain T with A - T C stable, or None.  Found by running a filter
    recursion for the pair with unit noise."""
    r, l = A.shape[0], C.shape[0]
    if _mat.spectral_radius(A) < 1.0 - 1e-12:
        return np.zeros((r, l))
    rec = RiccatiRecursion(A=A, C=C, Wn=np.eye(r), Vn=np.eye(l),
                           S=np.zeros((r, l)))
    res = iterate_riccati_recursion(rec, np.eye(r), tol=1e-12,
                                    max_iter=MAX_ITER)
    if not res.converged:
        return None
    T = rec.gain(_mat.sym(res.fixed_point))
    if _mat.spectral_radius(A - T @ C) >= 1.0:
        return None
    return T


def _dominating_start(A, C, Wn, Vn, S):
    """A matrix that dominates every fixed point of the recursion and
    maps below itself, so iteration descends to the largest fixed point.
    None when no stabilizing output injection exists."""
    T = _stabilizing_injection(A, C)
    if T is None:
        return None
    At = A - T @ C
    Wt = _mat.sym(Wn - T @ S.T - S @ T.T + T @ Vn @ T.T)
    try:
        P = sla.solve_discrete_lyapunov(At, np.eye(A.shape[0]))
    except (ValueError, np.linalg.LinAlgError):
        return None
    c = 1.01 * max(float(np.linalg.norm(Wt, 2)), 0.0) + 1e-9
    return c * _mat.sym(P)


def _face_solution(sys, kalman, lqr, opts):
    """Exact optimum when the budget equals the cost floor.

    Zero slack forces the transmit moments onto the face
    Gamma = -Klqr SigmaHat, Pi = Klqr SigmaHat Klqr'; there the program
    reduces to finding the largest fixed point of a covariance recursion,
    and the log-det objective is monotone in SigmaHat, so that fixed
    point is optimal.  Returns (SigmaHat, Gamma, Pi) or None when the
    construction is unavailable.
    """
    F, G, H, J = sys.F, sys.G, sys.H, sys.J
    Kp, Psi = kalman.Kp, kalman.Psi
    A = F - G @ lqr.Klqr
    C = H - J @ lqr.Klqr
    KpPsi = Kp @ Psi
    Wn = _mat.sym(KpPsi @ Kp.T)
    rec = RiccatiRecursion(A=A, C=C, Wn=Wn, Vn=Psi, S=KpPsi)
    start = _dominating_start(A, C, Wn, Psi, KpPsi)
    if start is None:
        return None
    res = iterate_riccati_recursion(rec, start, tol=TOL_RICCATI,
                                    max_iter=max(MAX_ITER,
                                                 opts.recursion_max_iter))
    if not res.converged:
        return None
    SigmaHat = _mat.psd_project(_mat.sym(res.fixed_point))
    Gamma = -lqr.Klqr @ SigmaHat
    Pi = _mat.sym(lqr.Klqr @ SigmaHat @ lqr.Klqr.T)
    return SigmaHat, Gamma, Pi


def _polish_fixed_point(sys, kalman, problem, form, SigmaHat, Gamma, Pi,
                        old_obj, opts):
    """Re-solve SigmaHat as the fixed point of the policy covariance
    recursion at fixed (Gamma, Pi).  Adopted only when the result stays
    feasible and does not lose more objective than solver noise."""
    rec = _policy_operator(sys, kalman, Gamma, Pi)
    try:
        res = iterate_riccati_recursion(rec, SigmaHat, tol=TOL_RICCATI,
                                        max_iter=opts.recursion_max_iter)
    except LqgcapError:
        return None
    if not res.converged:
        return None
    S_new = _mat.psd_project(_mat.sym(res.fixed_point))
    assignment = _assignment_for(form, S_new, Gamma, Pi)
    rep = maxdet.check_feasible(problem, assignment, tol=opts.tol_feas)
    if not rep.feasible:
        return None
    new_obj = _mat.logdet_pd(rec.innovation_cov(S_new))
    if new_obj is None:
        return None
    if new_obj < old_obj - 1e-7 * (1.0 + abs(old_obj)):
        return None
    return S_new


@dataclass(frozen=True)
class CertificateReport:
    """Achievability evidence for a reported policy.

    certified requires the stationarity residual within tol_cert and
    detectability of the closed loop pair; the covariance recursion
    behaviour and the innovation floor are reported alongside.
    """

    riccati_residual: float
    detectable_closed_loop: bool
    detectability_witness: Witness | None
    recursion_converged: bool
    recursion_iters: int
    recursion_defect: float
    m_star_min_eig: float
    perturbation_applied: tuple | None
    rate_loss_nats: float
    certified: bool
    notes: tuple = ()

    def to_dict(self):
        return {
            "riccati_residual": self.riccati_residual,
            "detectable_closed_loop": self.detectable_closed_loop,
            "detectability_witness": (self.detectability_witness.describe()
                                      if self.detectability_witness else None),
            "recursion_converged": self.recursion_converged,
            "recursion_iters": self.recursion_iters,
            "recursion_defect": self.recursion_defect,
            "m_star_min_eig": self.m_star_min_eig,
            "perturbation_applied": (list(self.perturbation_applied)
                                     if self.perturbation_applied else None),
            "rate_loss_nats": self.rate_loss_nats,
            "certified": self.certified,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class CapacitySolution:
    """Optimal rate, the policy moments achieving it, and certificates.

    capacity_nats is the optimum of the moment program.  The matrix
    fields describe the reported policy, which differs from the
    optimizer only when the innovation perturbation was applied; the
    rate of the reported policy is policy_rate_nats.
    """

    capacity_nats: float
    budget: float
    cost_floor: float
    SigmaHat: np.ndarray
    Gamma: np.ndarray
    Pi: np.ndarray
    Upsilon: np.ndarray
    PsiY: np.ndarray
    Ky: np.ndarray
    M: np.ndarray
    policy_rate_nats: float
    certificate: CertificateReport
    form: str
    solver_status: str
    solver_mode: str
    duality_gap: float
    kkt_residual: float
    newton_iterations: int
    solver_notes: tuple
    pre_policy: dict
    kalman: KalmanSolution
    lqr: LqrSolution
    system: LqgSystem

    @property
    def capacity_bits(self):
        return nats_to_bits(self.capacity_nats)

    @property
    def certified(self):
        return self.certificate.certified

    @property
    def budget_slack(self):
        return self.budget - self.cost_floor

    def assignment(self, form=None):
        """Pre-perturbation moments, shaped for the requested form.
        Useful as a warm start for a nearby budget."""
        form = form or self.form
        return _assignment_for(form, self.pre_policy["SigmaHat"],
                               self.pre_policy["Gamma"],
                               self.pre_policy["Pi"])

    def to_dict(self):
        return {
            "capacity_nats": self.capacity_nats,
            "capacity_bits": self.capacity_bits,
            "budget": self.budget,
            "cost_floor": self.cost_floor,
            "budget_slack": self.budget_slack,
            "policy_rate_nats": self.policy_rate_nats,
            "certified": self.certified,
            "form": self.form,
            "policy": {
                "SigmaHat": self.SigmaHat.tolist(),
                "Gamma": self.Gamma.tolist(),
                "Pi": self.Pi.tolist(),
                "PsiY": self.PsiY.tolist(),
                "Ky": self.Ky.tolist(),
                "M": self.M.tolist(),
            },
            "certificate": self.certificate.to_dict(),
            "solver": {
                "status": self.solver_status,
                "mode": self.solver_mode,
                "duality_gap": self.duality_gap,
                "kkt_residual": self.kkt_residual,
                "newton_iterations": self.newton_iterations,
                "notes": list(self.solver_notes),
            },
            "filter": {
                "Sigma": self.kalman.Sigma.tolist(),
                "Kp": self.kalman.Kp.tolist(),
                "Psi": self.kalman.Psi.tolist(),
            },
            "regulator": {
                "E": self.lqr.E.tolist(),
                "Klqr": self.lqr.Klqr.tolist(),
                "PsiLqr": self.lqr.PsiLqr.tolist(),
                "Jstar": self.lqr.Jstar,
            },
            "system": self.system.to_dict(),
        }


def _required_failures(sys, report):
    """Structural checks the capacity computation depends on.  The input
    stabilizability check only binds when the state is actually costed."""
    failures = []
    if not report.detectable_FH:
        failures.append("detectability of (F, H)")
    if not report.unit_circle_controllable:
        failures.append("unit-circle controllability of the noise loop")
    if _mat.max_abs(sys.Q) > 0.0 and not report.stabilizable_FG:
        failures.append("stabilizability of (F, G)")
    return failures


def compute_capacity(system, budget, options=None):
    """Capacity in nats per step at one control cost budget.

    Validates the system, checks the structural assumptions, solves the
    filter and regulator recursions, builds and solves the moment
    program, then certifies the result.  Returns the pair
    (CapacitySolution, CertificateReport); the certificate is also
    attached to the solution.  Raises AssumptionViolation,
    BudgetBelowFloor or SolverFailure accordingly.
    """
    opts = options if options is not None else CapacityOptions()
    if opts.form not in FORMS:
        raise ConfigError(f"unknown capacity form {opts.form!r}; "
                          f"expected one of {FORMS}")
    sys = validate_system(system)
    report = check_assumptions(sys)
    failures = _required_failures(sys, report)
    if failures:
        raise AssumptionViolation(report=report, needed=failures)

    kalman = solve_kalman(sys)
    lqr = solve_lqr(sys, kalman=kalman)
    floor = lqr.Jstar
    budget = float(budget)
    if budget < floor - maxdet.TOL_FEAS * (1.0 + abs(floor)):
        raise BudgetBelowFloor(budget=budget, floor=floor)
    slack = budget - floor
    tight = slack <= 1e-9 * (1.0 + abs(floor))

    problem = build_capacity_problem(sys, kalman, lqr, budget, form=opts.form)
    Psi = kalman.Psi
    log_det_psi = _mat.logdet_pd(Psi)

    solver_status = maxdet.Status.OPTIMAL.value
    solver_mode = "face"
    duality_gap = 0.0
    kkt_residual = 0.0
    newton_iters = 0
    solver_notes = []

    adopted = None
    if tight:
        face = _face_solution(sys, kalman, lqr, opts)
        if face is not None:
            rep = maxdet.check_feasible(problem,
                                        _assignment_for(opts.form, *face),
                                        tol=opts.tol_feas)
            if rep.feasible:
                adopted = face
            else:
                solver_notes.append("zero-slack face construction rejected "
                                    f"(worst slack {rep.worst_lmi_eig:.3e})")
        else:
            solver_notes.append("zero-slack face recursion unavailable; "
                                "falling back to the interior engine")

    if adopted is None:
        sol = maxdet.solve(problem,
                           SolveOptions(tol_gap=opts.tol_gap,
                                        tol_feas=opts.tol_feas,
                                        tol_kkt=opts.tol_kkt,
                                        warm_start=opts.warm_start),
                           backend=opts.backend)
        solver_status = sol.status.value
        solver_mode = sol.mode
        duality_gap = sol.duality_gap_estimate
        kkt_residual = sol.kkt_residual
        newton_iters = sol.newton_iterations
        solver_notes.extend(sol.notes)
        if sol.status is not maxdet.Status.OPTIMAL:
            raise SolverFailure(status=sol.status.value,
                                notes=list(sol.notes)
                                or ["moment program did not solve"])
        if opts.form == "upsilon":
            U = _mat.psd_project(_mat.sym(sol.assignment["Upsilon"]))
            SigmaHat, Gamma, Pi = _split_upsilon(U, sys.r)
        else:
            U = _mat.psd_project(_assemble_upsilon(
                _mat.sym(sol.assignment["SigmaHat"]), sol.assignment["Gamma"],
                _mat.sym(sol.assignment["Pi"])))
            SigmaHat, Gamma, Pi = _split_upsilon(U, sys.r)

        if opts.polish:
            old_obj = _mat.logdet_pd(_policy_operator(
                sys, kalman, Gamma, Pi).innovation_cov(SigmaHat))
            if old_obj is not None:
                S_new = _polish_fixed_point(sys, kalman, problem, opts.form,
                                            SigmaHat, Gamma, Pi, old_obj,
                                            opts)
                if S_new is not None:
                    SigmaHat = S_new
                else:
                    solver_notes.append("fixed-point polish rejected; "
                                        "keeping the solver iterate")
    else:
        SigmaHat, Gamma, Pi = adopted

    # pre-perturbation stationarity certificate and capacity value
    rec = _policy_operator(sys, kalman, Gamma, Pi)
    PsiY = rec.innovation_cov(SigmaHat)
    rate_pre = _rate_from_psi_y(PsiY, Psi)
    if rate_pre is None or log_det_psi is None:
        raise SolverFailure(status=solver_status,
                            notes=["innovation covariance lost positive "
                                   "definiteness at the reported moments"])
    if -opts.tol_cert < rate_pre < 0.0:
        rate_pre = 0.0
    try:
        defect = rec.defect(SigmaHat)
    except LqgcapError:
        defect = float("inf")
    residual = defect / (1.0 + _mat.max_abs(SigmaHat))

    pinv, _ = _sigma_pinv(SigmaHat)
    Gc = Gamma @ pinv
    detect_ok, detect_wit = pbh_detectable(sys.F + sys.G @ Gc,
                                           sys.H + sys.J @ Gc)

    M_pre = _mat.sym(Pi - Gamma @ pinv @ Gamma.T)
    m_min_pre = _mat.min_eig_sym(M_pre)

    cert_notes = []
    rate_loss = 0.0
    applied = None
    S_post, G_post, P_post = SigmaHat, Gamma, Pi
    M_post, m_min_post = M_pre, m_min_pre
    rate_post = rate_pre

    if m_min_pre < opts.tol_pd:
        picked = _perturb_innovation(sys, kalman, lqr, budget, problem,
                                     opts, SigmaHat, Gamma, Pi, M_pre,
                                     rate_pre)
        if picked is not None:
            pair, S_post, G_post, P_post, M_post, rate_post = picked
            m_min_post = _mat.min_eig_sym(M_post)
            rate_loss = max(rate_pre - rate_post, 0.0)
            applied = pair
        else:
            cert_notes.append(
                "transmit innovation covariance is singular and no "
                "feasible perturbation was found within the rate budget")

    rec_post = _policy_operator(sys, kalman, G_post, P_post)
    PsiY_post = rec_post.innovation_cov(S_post)
    if _mat.min_eig_sym(PsiY_post) < 1e-10:
        raise SolverFailure(status="NumericalFailure",
                            notes=["measurement innovation covariance of "
                                   "the reported policy is near singular"])
    Ky_post = rec_post.gain(S_post, PsiY_post)
    M_clip = _mat.psd_project(M_post)

    conv_ok, conv_iters, conv_defect = _closed_loop_recursion_check(
        sys, kalman, S_post, G_post, M_clip, opts)
    if not conv_ok:
        cert_notes.append("policy covariance recursion did not settle "
                          f"(final defect {conv_defect:.3e})")

    certified = bool(residual <= opts.tol_cert and detect_ok)
    certificate = CertificateReport(
        riccati_residual=float(residual),
        detectable_closed_loop=bool(detect_ok),
        detectability_witness=detect_wit,
        recursion_converged=bool(conv_ok),
        recursion_iters=int(conv_iters),
        recursion_defect=float(conv_defect),
        m_star_min_eig=float(m_min_post),
        perturbation_applied=applied,
        rate_loss_nats=float(rate_loss),
        certified=certified,
        notes=tuple(cert_notes))

    solution = CapacitySolution(
        capacity_nats=float(rate_pre),
        budget=budget,
        cost_floor=float(floor),
        SigmaHat=_mat.frozen(S_post),
        Gamma=_mat.frozen(G_post),
        Pi=_mat.frozen(P_post),
        Upsilon=_mat.frozen(_assemble_upsilon(S_post, G_post, P_post)),
        PsiY=_mat.frozen(_mat.sym(PsiY_post)),
        Ky=_mat.frozen(Ky_post),
        M=_mat.frozen(M_clip),
        policy_rate_nats=float(rate_post),
        certificate=certificate,
        form=opts.form,
        solver_status=solver_status,
        solver_mode=solver_mode,
        duality_gap=float(duality_gap),
        kkt_residual=float(kkt_residual),
        newton_iterations=int(newton_iters),
        solver_notes=tuple(solver_notes),
        pre_policy={"SigmaHat": _mat.frozen(SigmaHat),
                    "Gamma": _mat.frozen(Gamma),
                    "Pi": _mat.frozen(Pi)},
        kalman=kalman,
        lqr=lqr,
        system=sys)
    return solution, certificate


def _perturb_innovation(sys, kalman, lqr, budget, problem, opts, SigmaHat,
                        Gamma, Pi, M, rate_pre):
    """Scale the moments down and add a small multiple of the identity to
    Pi, which lifts the transmit innovation covariance by the same
    multiple.  Picks the smallest grid value that stays feasible, clears
    the innovation floor and costs at most rate_sacrifice nats.

    The identity weight is capped by what the freed budget can pay for:
    scaling by (1 - eps) releases eps times the current control cost, and
    adding eps2*I to Pi costs eps2 * Tr(PsiLqr), so an uncapped eps2
    would push an active trace constraint infeasible."""
    p = sys.p
    tr = float(np.trace(Pi))
    weight = _trace_weight(lqr)
    upsilon = _assemble_upsilon(SigmaHat, Gamma, Pi)
    spent = float(np.trace(upsilon @ weight))
    bound = max(budget - lqr.Jstar, 0.0)
    tr_psilqr = float(np.trace(lqr.PsiLqr))
    for eps in opts.perturb_eps:
        eps2 = eps * (tr / p) if tr > 0.0 else eps
        headroom = bound - (1.0 - eps) * spent + 0.5 * opts.tol_feas
        eps2 = min(eps2, headroom / tr_psilqr)
        if eps2 <= 0.0:
            continue
        S2 = (1.0 - eps) * SigmaHat
        G2 = (1.0 - eps) * Gamma
        P2 = _mat.sym((1.0 - eps) * Pi + eps2 * np.eye(p))
        M2 = _mat.sym((1.0 - eps) * M + eps2 * np.eye(p))
        if _mat.min_eig_sym(M2) < opts.tol_pd:
            continue
        rep = maxdet.check_feasible(problem,
                                    _assignment_for(opts.form, S2, G2, P2),
                                    tol=opts.tol_feas)
        if not rep.feasible:
            continue
        PsiY2 = _policy_operator(sys, kalman, G2, P2).innovation_cov(S2)
        rate2 = _rate_from_psi_y(PsiY2, kalman.Psi)
        if rate2 is None:
            continue
        if rate_pre - rate2 > opts.rate_sacrifice:
            break
        return (eps, eps2), S2, G2, P2, M2, rate2
    return None


def _closed_loop_recursion_check(sys, kalman, SigmaHat, Gamma, M, opts):
    """Run the decoder error covariance recursion of the reported policy
    from the reported moment and report whether it settles."""
    pinv, _ = _sigma_pinv(SigmaHat)
    Gc = Gamma @ pinv
    F, G, H, J = sys.F, sys.G, sys.H, sys.J
    Kp, Psi = kalman.Kp, kalman.Psi
    KpPsi = Kp @ Psi
    rec = RiccatiRecursion(A=F + G @ Gc, C=H + J @ Gc,
                           Wn=G @ M @ G.T + KpPsi @ Kp.T,
                           Vn=J @ M @ J.T + Psi,
                           S=G @ M @ J.T + KpPsi)
    try:
        res = iterate_riccati_recursion(rec, SigmaHat, tol=TOL_RICCATI,
                                        max_iter=opts.recursion_max_iter)
        final_defect = rec.defect(res.fixed_point)
    except LqgcapError:
        return False, 0, float("inf")
    rel = final_defect / (1.0 + _mat.max_abs(res.fixed_point))
    ok = bool(np.all(np.isfinite(res.fixed_point))) and rel <= opts.tol_cert
    return ok, res.iterations, rel


@dataclass(frozen=True)
class SweepPoint:
    """One budget in a sweep; exactly one of solution and error is set."""

    budget: float
    solution: CapacitySolution | None
    error: str | None = None
    error_kind: str | None = None


def capacity_sweep(system, budgets, options=None):
    """Capacity across budgets, warm-starting each point from the last.

    Budgets are processed in the order given; sorting them ascending
    makes the warm starts effective.  Points that fail keep their error
    in the returned entry instead of aborting the sweep.
    """
    opts = options if options is not None else CapacityOptions()
    sys = validate_system(system)
    points = []
    warm = opts.warm_start
    for b in budgets:
        o = replace(opts, warm_start=warm)
        try:
            sol, _ = compute_capacity(sys, b, o)
        except BudgetBelowFloor as exc:
            points.append(SweepPoint(budget=float(b), solution=None,
                                     error=str(exc),
                                     error_kind="infeasible"))
            continue
        except (SolverFailure, LqgcapError) as exc:
            kind = ("solver" if isinstance(exc, SolverFailure)
                    else type(exc).__name__)
            points.append(SweepPoint(budget=float(b), solution=None,
                                     error=str(exc), error_kind=kind))
            warm = None
            continue
        points.append(SweepPoint(budget=float(b), solution=sol))
        warm = sol.assignment(opts.form)
    return points


@dataclass(frozen=True)
class EquivalenceReport:
    """Capacity computed independently in both parameterizations."""

    capacity_blocks: float
    capacity_upsilon: float
    delta: float
    certified_blocks: bool
    certified_upsilon: bool

    def to_dict(self):
        return {"capacity_blocks": self.capacity_blocks,
                "capacity_upsilon": self.capacity_upsilon,
                "delta": self.delta,
                "certified_blocks": self.certified_blocks,
                "certified_upsilon": self.certified_upsilon}


def verify_equivalence(system, budget, options=None):
    """Solve the same budget in both parameterizations from cold starts
    and report the capacity difference."""
    base = options if options is not None else CapacityOptions()
    a, _ = compute_capacity(system, budget,
                            replace(base, form="blocks", warm_start=None))
    b, _ = compute_capacity(system, budget,
                            replace(base, form="upsilon", warm_start=None))
    return EquivalenceReport(capacity_blocks=a.capacity_nats,
                             capacity_upsilon=b.capacity_nats,
                             delta=abs(a.capacity_nats - b.capacity_nats),
                             certified_blocks=a.certified,
                             certified_upsilon=b.certified)
