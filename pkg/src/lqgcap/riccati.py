"""Steady-state covariance and regulator solvers.

Both solvers run the same engine: fixed-point iteration of a
prediction-error covariance recursion

    Psi[i]   = C Sigma[i] C' + Vn
    K[i]     = (A Sigma[i] C' + S) Psi[i]^-1
    Sigma[i+1] = A Sigma[i] A' + Wn - K[i] Psi[i] K[i]'

which covers the one-step-ahead Kalman filter with correlated noise
(A=F, C=H, Wn=W, Vn=V, S=L), the regulator cost recursion in transposed
form, and the decoder-error recursions used by the capacity certificates.
Iteration, rather than an invariant-subspace method, keeps the solver's
behavior identical to the recursions it certifies.
"""

from dataclasses import dataclass

import numpy as np

from . import _mat
from .errors import (NoConvergence, NotStabilizable, NotStabilizing,
                     SingularInnovation)
from .model import pbh_stabilizable, validate_system

TOL_RICCATI = 1e-11
MAX_ITER = 200000


@dataclass(frozen=True)
class RiccatiRecursion:
    """One covariance recursion, defined by its five coefficient matrices."""

    A: np.ndarray
    C: np.ndarray
    Wn: np.ndarray
    Vn: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        for name in ("A", "C", "Wn", "Vn", "S"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, _mat.frozen(arr))

    def innovation_cov(self, Sigma):
        return _mat.sym(self.C @ Sigma @ self.C.T + self.Vn)

    def gain(self, Sigma, Psi=None):
        if Psi is None:
            Psi = self.innovation_cov(Sigma)
        rhs = self.A @ Sigma @ self.C.T + self.S
        return np.linalg.solve(Psi, rhs.T).T

    def step(self, Sigma):
        """One update; returns (Sigma_next, gain, innovation_cov).

        Raises SingularInnovation when the innovation covariance is not
        positive definite.
        """
        Psi = self.innovation_cov(Sigma)
        if _mat.try_cholesky(Psi) is None:
            raise SingularInnovation(
                "innovation covariance lost positive definiteness "
                f"(smallest eigenvalue {_mat.min_eig_sym(Psi):.3e})")
        K = self.gain(Sigma, Psi)
        Sigma_next = _mat.sym(self.A @ Sigma @ self.A.T + self.Wn
                              - K @ Psi @ K.T)
        return Sigma_next, K, Psi

    def defect(self, Sigma):
        """Largest absolute entry of Sigma - step(Sigma)."""
        Sigma_next, _, _ = self.step(Sigma)
        return _mat.max_abs(Sigma_next - Sigma)


@dataclass(frozen=True)
class IterationResult:
    fixed_point: np.ndarray
    converged: bool
    iterations: int
    defects: tuple


def iterate_riccati_recursion(recursion, start, tol=TOL_RICCATI,
                              max_iter=MAX_ITER, record_defects=False):
    """Iterate to a fixed point.

    Stops when the largest absolute entry of the update falls at or below
    tol * (1 + largest absolute entry of the iterate).  A non-finite
    iterate terminates the run immediately with converged=False.
    """
    Sigma = _mat.sym(np.atleast_2d(np.asarray(start, dtype=float)))
    defects = []
    for it in range(1, int(max_iter) + 1):
        Sigma_next, _, _ = recursion.step(Sigma)
        d = _mat.max_abs(Sigma_next - Sigma)
        if record_defects:
            defects.append(d)
        if not np.isfinite(d):
            return IterationResult(Sigma_next, False, it, tuple(defects))
        Sigma = Sigma_next
        if d <= tol * (1.0 + _mat.max_abs(Sigma)):
            return IterationResult(Sigma, True, it, tuple(defects))
    return IterationResult(Sigma, False, int(max_iter), tuple(defects))


@dataclass(frozen=True)
class KalmanSolution:
    """Steady-state one-step-ahead filter: error covariance Sigma,
    predictor gain Kp, innovation covariance Psi."""

    Sigma: np.ndarray
    Kp: np.ndarray
    Psi: np.ndarray
    iterations: int
    residual: float

    def __post_init__(self):
        for name in ("Sigma", "Kp", "Psi"):
            object.__setattr__(self, name, _mat.frozen(getattr(self, name)))


def solve_kalman(system, tol=TOL_RICCATI, max_iter=MAX_ITER):
    """Stationary prediction-error covariance of the system's filter.

    Iterates from Sigma = W and verifies the stabilizing property of the
    fixed point (spectral radius of F - Kp H below one).
    """
    system = validate_system(system)
    rec = RiccatiRecursion(A=system.F, C=system.H, Wn=system.W,
                           Vn=system.V, S=system.L)
    res = iterate_riccati_recursion(rec, system.W, tol=tol, max_iter=max_iter)
    if not res.converged:
        last = res.defects[-1] if res.defects else float("nan")
        raise NoConvergence("filter covariance recursion", res.iterations,
                            rec.defect(res.fixed_point)
                            if np.all(np.isfinite(res.fixed_point)) else last)
    Sigma = _mat.sym(res.fixed_point)
    Psi = rec.innovation_cov(Sigma)
    Kp = rec.gain(Sigma, Psi)
    rho = _mat.spectral_radius(system.F - Kp @ system.H)
    if rho >= 1.0:
        raise NotStabilizing(
            f"filter closed loop has spectral radius {rho:.6g} >= 1; "
            "check detectability and the noise-loop rank condition")
    return KalmanSolution(Sigma=Sigma, Kp=Kp, Psi=Psi,
                          iterations=res.iterations,
                          residual=rec.defect(Sigma))


@dataclass(frozen=True)
class LqrSolution:
    """Steady-state regulator: cost-to-go matrix E, feedback gain Klqr,
    input-weight PsiLqr = R + G' E G, and the minimum achievable
    long-run average cost Jstar."""

    E: np.ndarray
    Klqr: np.ndarray
    PsiLqr: np.ndarray
    Jstar: float
    iterations: int
    residual: float
    closed_loop_stable: bool

    def __post_init__(self):
        for name in ("E", "Klqr", "PsiLqr"):
            object.__setattr__(self, name, _mat.frozen(getattr(self, name)))


def solve_lqr(system, kalman=None, tol=TOL_RICCATI, max_iter=MAX_ITER):
    """Steady-state regulator for the system's quadratic cost.

    With Q = 0 the answer is immediate: E = 0, Klqr = 0, PsiLqr = R and
    the cost floor is zero.  Otherwise the cost recursion is iterated in
    transposed (filter) form from E = Q.  The cost floor combines the
    regulator matrices with the filter solution, which is computed here
    when not supplied.
    """
    system = validate_system(system)
    r, p = system.r, system.p

    if _mat.max_abs(system.Q) == 0.0:
        stable = _mat.spectral_radius(system.F) < 1.0
        return LqrSolution(E=np.zeros((r, r)), Klqr=np.zeros((p, r)),
                           PsiLqr=system.R.copy(), Jstar=0.0, iterations=0,
                           residual=0.0, closed_loop_stable=stable)

    ok, witness = pbh_stabilizable(system.F, system.G)
    if not ok:
        raise NotStabilizable(witness.describe())

    rec = RiccatiRecursion(A=system.F.T, C=system.G.T, Wn=system.Q,
                           Vn=system.R, S=np.zeros((r, p)))
    res = iterate_riccati_recursion(rec, system.Q, tol=tol, max_iter=max_iter)
    if not res.converged:
        raise NoConvergence("regulator cost recursion", res.iterations,
                            rec.defect(res.fixed_point))
    E = _mat.sym(res.fixed_point)
    PsiLqr = _mat.sym(system.R + system.G.T @ E @ system.G)
    Klqr = np.linalg.solve(PsiLqr, system.G.T @ E @ system.F)
    rho = _mat.spectral_radius(system.F - system.G @ Klqr)
    stable = rho < 1.0
    if not stable and _mat.min_eig_sym(system.Q) > 0.0:
        raise NotStabilizing(
            f"regulator closed loop has spectral radius {rho:.6g} >= 1 "
            "despite positive definite Q")

    if kalman is None:
        kalman = solve_kalman(system, tol=tol, max_iter=max_iter)
    Jstar = float(np.trace(kalman.Kp @ kalman.Psi @ kalman.Kp.T @ E)
                  + np.trace(kalman.Sigma @ system.Q))
    return LqrSolution(E=E, Klqr=Klqr, PsiLqr=PsiLqr, Jstar=Jstar,
                       iterations=res.iterations, residual=rec.defect(E),
                       closed_loop_stable=stable)
