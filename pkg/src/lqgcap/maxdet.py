"""Determinant maximization over affine matrix expressions.

Problems have the form

    maximize    log det A(x)
    subject to  L_k(x) >= 0        (linear matrix inequalities)
                t_j(x) <= b_j      (affine scalar bounds)

where A, L_k and t_j are affine in a set of named matrix variables
(symmetric or rectangular).  Maps are supplied as plain callables taking
an assignment dict; the builder compiles them to coefficient tensors by
probing basis matrices, and verifies symmetry and affinity on random
assignments.

The built-in engine is a primal path-following Newton method on the
self-concordant barrier of the feasible set.  A feasibility phase
maximizes the smallest constraint slack; when the feasible set turns out
to have an empty interior (optima pinned to a face, as happens for
degenerate channel embeddings), the engine retries with every constraint
loosened by a shift no larger than the feasibility tolerance, so
reported assignments still satisfy the documented tolerance contract.

Alternative engines can be registered by name and selected per solve;
the result and problem contracts are the exchange format.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.linalg as sla

from . import _mat
from .errors import DimensionMismatch, ProblemStructureError

TOL_GAP = 1e-8
TOL_FEAS = 1e-9
TOL_KKT = 1e-7


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class MatrixVariable:
    """One named matrix unknown.  Symmetric variables are parameterized by
    their upper triangle; rectangular ones entry by entry."""

    name: str
    rows: int
    cols: int
    symmetric: bool = False

    def __post_init__(self):
        if self.symmetric and self.rows != self.cols:
            raise ProblemStructureError(
                f"symmetric variable {self.name} must be square")

    @property
    def n_params(self):
        if self.symmetric:
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols

    def zero(self):
        return np.zeros((self.rows, self.cols))

    def basis(self, k):
        out = np.zeros((self.rows, self.cols))
        if self.symmetric:
            iu = np.triu_indices(self.rows)
            i, j = iu[0][k], iu[1][k]
            out[i, j] = 1.0
            out[j, i] = 1.0
        else:
            out.flat[k] = 1.0
        return out

    def pack(self, mat):
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (self.rows, self.cols):
            raise DimensionMismatch(
                f"value for {self.name} has shape {mat.shape}, "
                f"expected {(self.rows, self.cols)}")
        if self.symmetric:
            return _mat.sym(mat)[np.triu_indices(self.rows)].copy()
        return mat.reshape(-1).copy()

    def unpack(self, params):
        if self.symmetric:
            out = np.zeros((self.rows, self.rows))
            out[np.triu_indices(self.rows)] = params
            out = out + out.T - np.diag(np.diag(out))
            return out
        return np.asarray(params, dtype=float).reshape(self.rows, self.cols)


@dataclass(frozen=True)
class _Affine:
    """Compiled affine symmetric-matrix map: constant + sum_k x_k coeffs[k]."""

    constant: np.ndarray
    coeffs: np.ndarray

    @property
    def dim(self):
        return self.constant.shape[0]

    def value(self, x):
        return self.constant + np.tensordot(x, self.coeffs, axes=(0, 0))


@dataclass(frozen=True)
class _AffineScalar:
    """Compiled affine scalar map with its upper bound."""

    constant: float
    coeffs: np.ndarray
    bound: float

    def value(self, x):
        return self.constant + float(self.coeffs @ x)

    def slack(self, x):
        return self.bound - self.value(x)


class MaxdetProblem:
    """A compiled determinant-maximization problem.

    Parameters
    ----------
    variables : sequence of MatrixVariable
    objective : callable(assignment) -> square matrix, affine; its log det
        is maximized.
    lmis : sequence of callables, each affine and symmetric-valued; the
        constraint is positive semidefiniteness.
    traces : sequence of (callable, bound) pairs; each callable is affine
        scalar-valued and constrained <= bound.
    """

    def __init__(self, variables, objective, lmis=(), traces=(),
                 lmi_names=None, name="maxdet"):
        self.name = name
        self.variables = tuple(variables)
        seen = set()
        for v in self.variables:
            if v.name in seen:
                raise ProblemStructureError(f"duplicate variable {v.name}")
            seen.add(v.name)
        self._slices = {}
        offset = 0
        for v in self.variables:
            self._slices[v.name] = slice(offset, offset + v.n_params)
            offset += v.n_params
        self.n_params = offset

        self.objective = objective
        self.lmis = tuple(lmis)
        self.traces = tuple(traces)
        self.lmi_names = tuple(lmi_names) if lmi_names is not None else tuple(
            f"lmi_{k}" for k in range(len(self.lmis)))
        if len(self.lmi_names) != len(self.lmis):
            raise ProblemStructureError("lmi_names length mismatch")

        rng = np.random.default_rng(12345)
        self._objective = self._compile_matrix(objective, "objective", rng)
        self._lmis = tuple(self._compile_matrix(fn, nm, rng)
                           for fn, nm in zip(self.lmis, self.lmi_names))
        self._scalars = tuple(self._compile_scalar(fn, bound, j, rng)
                              for j, (fn, bound) in enumerate(self.traces))

        rep = check_feasible(self, self.zero_assignment(), tol=0.0)
        self.zero_feasible = bool(rep.feasible)

    # -- assignment plumbing -------------------------------------------------

    def zero_assignment(self):
        return {v.name: v.zero() for v in self.variables}

    def pack_assignment(self, assignment):
        x = np.zeros(self.n_params)
        for v in self.variables:
            if v.name not in assignment:
                raise DimensionMismatch(f"assignment missing {v.name}")
            x[self._slices[v.name]] = v.pack(assignment[v.name])
        return x

    def unpack_params(self, x):
        return {v.name: v.unpack(x[self._slices[v.name]])
                for v in self.variables}

    @property
    def offsets(self):
        """Constant matrices of the compiled affine maps."""
        out = {"objective": self._objective.constant.copy()}
        for nm, cm in zip(self.lmi_names, self._lmis):
            out[nm] = cm.constant.copy()
        return out

    def scale(self):
        s = _mat.max_abs(self._objective.constant)
        for cm in self._lmis:
            s = max(s, _mat.max_abs(cm.constant))
        for sc in self._scalars:
            s = max(s, abs(sc.constant), abs(sc.bound))
        return 1.0 + s

    # -- compilation ---------------------------------------------------------

    def _basis_assignment(self, global_k):
        assign = self.zero_assignment()
        for v in self.variables:
            sl = self._slices[v.name]
            if sl.start <= global_k < sl.stop:
                assign[v.name] = v.basis(global_k - sl.start)
                break
        return assign

    def _compile_matrix(self, fn, what, rng):
        const = np.atleast_2d(np.asarray(fn(self.zero_assignment()),
                                         dtype=float))
        if const.shape[0] != const.shape[1]:
            raise ProblemStructureError(f"{what} map is not square")
        m = const.shape[0]
        coeffs = np.zeros((self.n_params, m, m))
        for k in range(self.n_params):
            out = np.atleast_2d(np.asarray(fn(self._basis_assignment(k)),
                                           dtype=float))
            if out.shape != const.shape:
                raise ProblemStructureError(f"{what} map changes shape")
            coeffs[k] = out - const
        compiled = _Affine(constant=const, coeffs=coeffs)

        for _ in range(3):
            x = rng.standard_normal(self.n_params)
            direct = np.atleast_2d(np.asarray(fn(self.unpack_params(x)),
                                              dtype=float))
            tol = 1e-8 * (1.0 + _mat.max_abs(direct))
            if _mat.max_abs(direct - direct.T) > tol:
                raise ProblemStructureError(
                    f"{what} map is not symmetric-valued")
            if _mat.max_abs(direct - compiled.value(x)) > tol:
                raise ProblemStructureError(f"{what} map is not affine")
        return compiled

    def _compile_scalar(self, fn, bound, j, rng):
        const = float(fn(self.zero_assignment()))
        coeffs = np.zeros(self.n_params)
        for k in range(self.n_params):
            coeffs[k] = float(fn(self._basis_assignment(k))) - const
        compiled = _AffineScalar(constant=const, coeffs=coeffs,
                                 bound=float(bound))
        for _ in range(3):
            x = rng.standard_normal(self.n_params)
            direct = float(fn(self.unpack_params(x)))
            if abs(direct - compiled.value(x)) > 1e-8 * (1.0 + abs(direct)):
                raise ProblemStructureError(f"trace map {j} is not affine")
        return compiled

    # -- direct evaluation ---------------------------------------------------

    def objective_matrix(self, assignment):
        return self._objective.value(self.pack_assignment(assignment))

    def objective_logdet(self, assignment):
        ld = _mat.logdet_pd(self.objective_matrix(assignment))
        if ld is None:
            raise ProblemStructureError(
                "objective matrix is not positive definite at this assignment")
        return ld


@dataclass(frozen=True)
class FeasReport:
    """Exact constraint evaluation at one assignment."""

    feasible: bool
    worst_lmi_eig: float
    worst_trace_slack: float
    lmi_eigs: tuple
    trace_slacks: tuple
    objective_min_eig: float


def check_feasible(problem, assignment, tol=TOL_FEAS):
    """Evaluate every constraint at the assignment.

    feasible means every LMI has smallest eigenvalue >= -tol and every
    scalar bound holds with slack >= -tol.  The objective's definiteness
    is reported but does not enter the verdict (it is a domain condition,
    not a constraint).
    """
    x = problem.pack_assignment(assignment)
    lmi_eigs = tuple(_mat.min_eig_sym(cm.value(x)) for cm in problem._lmis)
    slacks = tuple(sc.slack(x) for sc in problem._scalars)
    worst_eig = min(lmi_eigs) if lmi_eigs else 0.0
    worst_slack = min(slacks) if slacks else float("inf")
    feasible = worst_eig >= -tol and worst_slack >= -tol
    return FeasReport(feasible=feasible, worst_lmi_eig=worst_eig,
                      worst_trace_slack=worst_slack, lmi_eigs=lmi_eigs,
                      trace_slacks=slacks,
                      objective_min_eig=_mat.min_eig_sym(
                          problem._objective.value(x)))


@dataclass
class SolveOptions:
    tol_gap: float = TOL_GAP
    tol_feas: float = TOL_FEAS
    tol_kkt: float = TOL_KKT
    mu: float = 10.0
    max_outer: int = 40
    max_newton: int = 120
    warm_start: dict | None = None
    backend: str | None = None


@dataclass(frozen=True)
class MaxdetSolution:
    assignment: dict
    objective_value: float
    status: Status
    kkt_residual: float
    duality_gap_estimate: float
    newton_iterations: int
    mode: str
    notes: tuple = ()


# -- barrier internals -------------------------------------------------------


def _psi_value(obj_map, lin, lmis, scalars, t, x):
    """Barrier-augmented objective; None when x is outside the domain."""
    total = 0.0
    if obj_map is not None:
        c = _mat.try_cholesky(_mat.sym(obj_map.value(x)))
        if c is None:
            return None
        total -= t * _mat.chol_logdet(c)
    if lin is not None:
        total += t * float(lin @ x)
    for cm in lmis:
        c = _mat.try_cholesky(_mat.sym(cm.value(x)))
        if c is None:
            return None
        total -= _mat.chol_logdet(c)
    for sc in scalars:
        s = sc.slack(x)
        if s <= 0.0:
            return None
        total -= math.log(s)
    return total


def _map_grad_hess(cm, x):
    """Gradient and Hessian of -log det cm(x); None outside the domain."""
    M = _mat.sym(cm.value(x))
    c = _mat.try_cholesky(M)
    if c is None:
        return None
    inv = sla.cho_solve((c, True), np.eye(cm.dim), check_finite=False)
    g = -np.einsum("ij,kji->k", inv, cm.coeffs)
    T = np.einsum("ij,kjl->kil", inv, cm.coeffs)
    Hs = np.einsum("kij,lji->kl", T, T)
    return g, 0.5 * (Hs + Hs.T)


def _psi_grad_hess(obj_map, lin, lmis, scalars, t, x):
    n = x.size
    g = np.zeros(n)
    Hm = np.zeros((n, n))
    if obj_map is not None:
        gh = _map_grad_hess(obj_map, x)
        if gh is None:
            return None
        g += t * gh[0]
        Hm += t * gh[1]
    if lin is not None:
        g += t * lin
    for cm in lmis:
        gh = _map_grad_hess(cm, x)
        if gh is None:
            return None
        g += gh[0]
        Hm += gh[1]
    for sc in scalars:
        s = sc.slack(x)
        if s <= 0.0:
            return None
        g += sc.coeffs / s
        Hm += np.outer(sc.coeffs, sc.coeffs) / (s * s)
    return g, Hm


def _grad_noise_bound(obj_map, lmis, scalars, t, x):
    """Per-coordinate forward-error bound on the barrier gradient.

    Inverting an LMI value A with condition kappa carries an absolute
    error of order eps * ||A|| * ||A^-1||^2, and the trace against each
    coefficient matrix turns that into gradient noise.  A measured
    residual below this bound certifies nothing either way: the point is
    stationary to within double-precision measurement.
    """
    eps = np.finfo(float).eps
    bound = np.zeros_like(x)
    for weight, cm in [(t, obj_map)] + [(1.0, c) for c in lmis]:
        a = cm.value(x)
        try:
            w = np.linalg.eigvalsh(a)
        except np.linalg.LinAlgError:
            return None
        if w[0] <= 0.0:
            return None
        cf = np.sqrt(np.einsum("kij,kij->k", cm.coeffs, cm.coeffs))
        amp = w[-1] / (w[0] * w[0]) + 1.0 / w[0]
        bound += weight * 4.0 * a.shape[0] * eps * amp * cf
    for sc in scalars:
        s = sc.slack(x)
        if s <= 0.0:
            return None
        scale = (abs(sc.bound) + abs(sc.constant)
                 + float(np.abs(sc.coeffs) @ np.abs(x)))
        bound += 4.0 * eps * np.abs(sc.coeffs) * (scale / (s * s) + 1.0 / s)
    return bound


def _newton_direction(Hm, g):
    n = Hm.shape[0]
    diag_scale = float(np.trace(Hm)) / max(n, 1)
    ridge = 0.0
    for _ in range(3):
        c = _mat.try_cholesky(Hm + ridge * np.eye(n))
        if c is not None:
            return sla.cho_solve((c, True), -g, check_finite=False)
        ridge = max(1e-14 * max(diag_scale, 1.0), ridge * 1e3)
    try:
        return np.linalg.lstsq(Hm, -g, rcond=None)[0]
    except np.linalg.LinAlgError:
        return -g


def _center(obj_map, lin, lmis, scalars, t, x, ctol, max_newton):
    """Damped Newton to the analytic center at parameter t.

    Returns (x, decrement_sq_half, iterations, converged).
    """
    iters = 0
    prev_lam2 = float("inf")
    stall = 0
    for iters in range(1, max_newton + 1):
        gh = _psi_grad_hess(obj_map, lin, lmis, scalars, t, x)
        if gh is None:
            return x, float("inf"), iters, False
        g, Hm = gh
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(Hm))):
            return x, float("inf"), iters, False
        dx = _newton_direction(Hm, g)
        descent = float(g @ dx)
        if descent >= 0.0:
            gn = float(np.linalg.norm(g))
            dx = -g / max(gn, 1.0)
            descent = float(g @ dx)
        lam2_half = -0.5 * descent
        if lam2_half <= ctol:
            return x, lam2_half, iters - 1, True
        lam = math.sqrt(max(2.0 * lam2_half, 0.0))
        if lam <= 0.25:
            # the decrement contracts at least quadratically here, so a
            # plateau means the gradient noise floor has been reached and
            # further steps cannot improve the center
            if lam2_half > 0.25 * prev_lam2:
                stall += 1
                if stall >= 3:
                    return x, lam2_half, iters, lam2_half <= 1e-6
            else:
                stall = 0
            prev_lam2 = lam2_half
            # quadratic-convergence region: full step with a domain check
            # only.  A value-based line search stalls here whenever the
            # decrement sits below the float granularity of psi, which
            # happens routinely when a constraint slack is ~1e-9 and the
            # Hessian is ~1e18.
            nx = x + dx
            if _psi_value(obj_map, lin, lmis, scalars, t, nx) is not None:
                x = nx
                continue
            nx = x + dx / (1.0 + lam)
            if _psi_value(obj_map, lin, lmis, scalars, t, nx) is not None:
                x = nx
                continue
            return x, lam2_half, iters, lam2_half <= 1e3 * ctol
        base = _psi_value(obj_map, lin, lmis, scalars, t, x)
        alpha = 1.0
        accepted = False
        while alpha >= 1e-14:
            nx = x + alpha * dx
            val = _psi_value(obj_map, lin, lmis, scalars, t, nx)
            if val is not None and val <= base + 0.25 * alpha * descent:
                x = nx
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return x, lam2_half, iters, lam2_half <= 1e3 * ctol
    gh = _psi_grad_hess(obj_map, lin, lmis, scalars, t, x)
    lam2_half = float("inf")
    if gh is not None:
        g, Hm = gh
        dx = _newton_direction(Hm, g)
        lam2_half = max(0.0, -0.5 * float(g @ dx))
    return x, lam2_half, max_newton, lam2_half <= 1e3 * ctol


def _extend_affine(cm, extra_coeff):
    coeffs = np.concatenate([cm.coeffs, extra_coeff[None, :, :]], axis=0)
    return _Affine(constant=cm.constant, coeffs=coeffs)


def _extend_scalar(sc, extra):
    return _AffineScalar(constant=sc.constant,
                         coeffs=np.concatenate([sc.coeffs, [extra]]),
                         bound=sc.bound)


def _phase1(obj_map, lmis, scalars, x0, scale, opts, strict_margin, feas_eps):
    """Maximize the smallest constraint slack s over (x, s).

    The objective matrix joins the LMIs so the phase-two start is inside
    its domain.  Returns (verdict, x, s) with verdict one of "strict",
    "infeasible", "flat" (optimum within feas_eps of zero: the interior
    is empty at tolerance).
    """
    all_lmis = ([obj_map] if obj_map is not None else []) + list(lmis)
    ext_lmis = [_extend_affine(cm, -np.eye(cm.dim)) for cm in all_lmis]
    ext_scalars = [_extend_scalar(sc, 1.0) for sc in scalars]
    s_cap = 10.0 * scale
    cap = _AffineScalar(constant=0.0,
                        coeffs=np.concatenate([np.zeros(x0.size), [1.0]]),
                        bound=s_cap)
    ext_scalars.append(cap)
    lin = np.zeros(x0.size + 1)
    lin[-1] = -1.0

    mins = [
        _mat.min_eig_sym(cm.value(x0)) for cm in all_lmis
    ] + [sc.slack(x0) for sc in scalars] + [s_cap]
    s0 = min(mins) - max(1.0, 0.1 * abs(min(mins)))
    x = np.concatenate([x0, [s0]])

    nu = sum(cm.dim for cm in ext_lmis) + len(ext_scalars)
    t = 1.0
    newton_total = 0
    gap = float("inf")
    for _ in range(opts.max_outer):
        x, _, its, ok = _center(None, lin, ext_lmis, ext_scalars, t, x,
                                ctol=1e-11, max_newton=opts.max_newton)
        newton_total += its
        s = x[-1]
        gap = nu / t
        if s >= strict_margin:
            return "strict", x[:-1], s, newton_total
        if s + gap < -feas_eps:
            return "infeasible", x[:-1], s, newton_total
        if gap <= 0.25 * feas_eps or not ok:
            break
        t *= opts.mu
    s = x[-1]
    # gap belongs to the weight at which x was last centered; the optimistic
    # bound s + gap certifies emptiness only in that pairing
    if s + gap < -feas_eps:
        return "infeasible", x[:-1], s, newton_total
    if s >= strict_margin:
        return "strict", x[:-1], s, newton_total
    return "flat", x[:-1], s, newton_total


def _relax(lmis, scalars, delta):
    r_lmis = tuple(_Affine(constant=cm.constant + delta * np.eye(cm.dim),
                           coeffs=cm.coeffs) for cm in lmis)
    r_scalars = tuple(replace(sc, bound=sc.bound + delta) for sc in scalars)
    return r_lmis, r_scalars


def _solve_barrier(problem, options):
    opts = options
    notes = []
    scale = problem.scale()
    obj_map = problem._objective
    lmis = list(problem._lmis)
    scalars = list(problem._scalars)
    strict_margin = 1e-7 * scale
    feas_eps = 0.5 * opts.tol_feas
    newton_total = 0

    if opts.warm_start is not None:
        x0 = problem.pack_assignment(opts.warm_start)
    else:
        x0 = np.zeros(problem.n_params)

    def min_slack(x):
        vals = [_mat.min_eig_sym(cm.value(x)) for cm in lmis]
        vals.append(_mat.min_eig_sym(obj_map.value(x)))
        vals += [sc.slack(x) for sc in scalars]
        return min(vals) if vals else float("inf")

    mode = "exact"
    used_lmis, used_scalars = tuple(lmis), tuple(scalars)
    if min_slack(x0) < strict_margin:
        verdict, x0, s, its = _phase1(obj_map, lmis, scalars, x0, scale, opts,
                                      strict_margin, feas_eps)
        newton_total += its
        if verdict == "infeasible":
            return MaxdetSolution(
                assignment=problem.unpack_params(np.zeros(problem.n_params)),
                objective_value=float("nan"), status=Status.INFEASIBLE,
                kkt_residual=float("nan"), duality_gap_estimate=float("nan"),
                newton_iterations=newton_total, mode=mode,
                notes=("no assignment satisfies the constraints "
                       f"(best slack {s:.3e})",))
        if verdict == "flat":
            mode = "relaxed"
            delta = opts.tol_feas
            used_lmis, used_scalars = _relax(lmis, scalars, delta)
            notes.append("feasible set has an empty interior at tolerance; "
                         f"constraints loosened by {delta:.1e}")
            verdict, x0, s, its = _phase1(obj_map, list(used_lmis),
                                          list(used_scalars), x0, scale, opts,
                                          0.25 * opts.tol_feas, feas_eps)
            newton_total += its
            if verdict not in ("strict",):
                return MaxdetSolution(
                    assignment=problem.unpack_params(x0),
                    objective_value=float("nan"),
                    status=Status.NUMERICAL_FAILURE,
                    kkt_residual=float("nan"),
                    duality_gap_estimate=float("nan"),
                    newton_iterations=newton_total, mode=mode,
                    notes=tuple(notes) + (
                        "no interior point found even after loosening",))

    nu = sum(cm.dim for cm in used_lmis) + len(used_scalars)
    x = x0
    t = 1.0
    gap = float("inf")
    ok_path = True
    for _ in range(opts.max_outer):
        x, lam2h, its, ok = _center(obj_map, None, used_lmis, used_scalars,
                                    t, x, ctol=1e-11,
                                    max_newton=opts.max_newton)
        newton_total += its
        gap = nu / t
        if not ok and not math.isfinite(lam2h):
            ok_path = False
            break
        if gap <= opts.tol_gap:
            break
        t *= opts.mu
    else:
        ok_path = False

    status = Status.OPTIMAL
    if not ok_path:
        status = (Status.NUMERICAL_FAILURE if not math.isfinite(gap)
                  else Status.MAX_ITERATIONS)
    if ok_path and gap > opts.tol_gap:
        status = Status.MAX_ITERATIONS

    # final polish sharpens the stationarity residual at fixed t
    kkt = float("nan")
    if status is Status.OPTIMAL:
        x, lam2h, its, _ = _center(obj_map, None, used_lmis, used_scalars,
                                   t, x, ctol=1e-18, max_newton=40)
        newton_total += its
        gh = _psi_grad_hess(obj_map, None, used_lmis, used_scalars, t, x)
        if gh is not None:
            gabs = np.abs(gh[0])
            noise = _grad_noise_bound(obj_map, used_lmis, used_scalars, t, x)
            if noise is not None:
                gabs = np.maximum(gabs - noise, 0.0)
            kkt = float(np.max(gabs)) / t
        centered = math.isfinite(lam2h) and lam2h <= 1e-4
        if not (math.isfinite(kkt) and kkt <= opts.tol_kkt and centered):
            notes.append(f"stationarity residual {kkt:.3e} above "
                         f"{opts.tol_kkt:.1e} (final decrement {lam2h:.1e})")
            status = Status.NUMERICAL_FAILURE

    ld = _mat.logdet_pd(obj_map.value(x))
    if ld is None:
        status = Status.NUMERICAL_FAILURE
        ld = float("nan")
        notes.append("objective matrix not positive definite at the "
                     "returned point")

    return MaxdetSolution(assignment=problem.unpack_params(x),
                          objective_value=ld, status=status,
                          kkt_residual=kkt, duality_gap_estimate=gap,
                          newton_iterations=newton_total, mode=mode,
                          notes=tuple(notes))


_BACKENDS = {"barrier": _solve_barrier}


def register_backend(name, fn):
    """Register an alternative engine: fn(problem, options) -> MaxdetSolution."""
    _BACKENDS[name] = fn


def solve(problem, options=None, backend=None):
    """Solve a compiled problem with the selected engine (default built-in)."""
    opts = options if options is not None else SolveOptions()
    name = backend or opts.backend or "barrier"
    if name not in _BACKENDS:
        raise ProblemStructureError(f"unknown backend {name!r}; "
                                    f"registered: {sorted(_BACKENDS)}")
    return _BACKENDS[name](problem, opts)
