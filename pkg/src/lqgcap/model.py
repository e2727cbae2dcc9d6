"""System data model for linear-quadratic-Gaussian control loops.

A plant is the discrete-time stochastic linear system

    s[i+1] = F s[i] + G x[i] + w[i]
    y[i]   = H s[i] + J x[i] + v[i]

with state dimension r, input dimension p and output dimension l.  The
process noise w and measurement noise v are jointly Gaussian, zero mean,
with covariances W, V and cross covariance L = E[w v'].  The quadratic
stage cost is s' Q s + x' R x and the initial state has covariance Sigma1.

This module owns validation of that data, the eigenvector rank tests for
the structural assumptions needed downstream (detectability of (F, H),
stabilizability of (F, G), controllability on the unit circle of the noise
loop), a constructor that embeds a linear Gaussian channel with
intersymbol interference as a plant with zero state cost, and a strict
JSON reader/writer for system files.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import _mat
from .errors import ConfigError, DimensionMismatch, NotPd, NotPsd

TOL_UNIT = 1e-9
_SYM_NAMES = ("W", "V", "Q", "R", "Sigma1")
_REQUIRED_KEYS = ("F", "G", "H", "J", "W", "V", "Q", "R")
_OPTIONAL_KEYS = ("L", "Sigma1")


@dataclass(frozen=True)
class LqgSystem:
    """Immutable container for one plant.  Arrays are stored read-only."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    J: np.ndarray
    W: np.ndarray
    V: np.ndarray
    L: np.ndarray
    Sigma1: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("F", "G", "H", "J", "W", "V", "L", "Sigma1", "Q", "R"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, _mat.frozen(arr))

    @property
    def r(self):
        return self.F.shape[0]

    @property
    def p(self):
        return self.G.shape[1]

    @property
    def l(self):
        return self.H.shape[0]

    def to_dict(self):
        names = ("F", "G", "H", "J", "W", "V", "L", "Sigma1", "Q", "R")
        return {n: getattr(self, n).tolist() for n in names}


@dataclass(frozen=True)
class Witness:
    """An eigenvalue/eigenvector pair exhibiting a failed rank test."""

    eigenvalue: complex
    eigenvector: np.ndarray
    test: str

    def describe(self):
        lam = self.eigenvalue
        return (f"{self.test} fails at eigenvalue {lam.real:.6g}"
                f"{lam.imag:+.6g}j (|lam| = {abs(lam):.6g})")


@dataclass(frozen=True)
class AssumptionReport:
    """Results of the three structural checks, with witnesses on failure."""

    detectable_FH: bool
    stabilizable_FG: bool
    unit_circle_controllable: bool
    detectability_witness: Witness | None = None
    stabilizability_witness: Witness | None = None
    controllability_witness: Witness | None = None
    notes: tuple = ()

    @property
    def all_hold(self):
        return (self.detectable_FH and self.stabilizable_FG
                and self.unit_circle_controllable)

    def failures(self):
        out = []
        if not self.detectable_FH:
            out.append("detectability of (F, H)")
        if not self.stabilizable_FG:
            out.append("stabilizability of (F, G)")
        if not self.unit_circle_controllable:
            out.append("unit-circle controllability of the noise loop")
        return out


def make_system(F, G, H, J, W, V, L=None, Sigma1=None, Q=None, R=None):
    """Build and validate an LqgSystem, filling optional blocks with zeros.

    Q defaults to the zero state cost and R to the identity input cost,
    the conventions of a pure communication channel.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    r, p, l = F.shape[0], G.shape[1], H.shape[0]
    if L is None:
        L = np.zeros((r, l))
    if Sigma1 is None:
        Sigma1 = np.zeros((r, r))
    if Q is None:
        Q = np.zeros((r, r))
    if R is None:
        R = np.eye(p)
    return validate_system(LqgSystem(F=F, G=G, H=H, J=J, W=W, V=V, L=L,
                                     Sigma1=Sigma1, Q=Q, R=R))


def validate_system(system):
    """Check shapes and definiteness; return a normalized copy.

    Symmetric blocks are symmetrized.  PSD blocks are accepted when their
    smallest eigenvalue is >= -1e-10 (1 + ||M||_2) and then projected onto
    the PSD cone by eigenvalue clipping.  V and R must be positive
    definite.  The joint noise covariance [[W, L], [L', V]] must be PSD.
    Idempotent: validating a validated system returns an equal system.
    """
    r, p, l = system.r, system.p, system.l
    shapes = {"F": (r, r), "G": (r, p), "H": (l, r), "J": (l, p),
              "W": (r, r), "V": (l, l), "L": (r, l),
              "Sigma1": (r, r), "Q": (r, r), "R": (p, p)}
    for name, want in shapes.items():
        got = getattr(system, name).shape
        if got != want:
            raise DimensionMismatch(
                f"{name} has shape {got}, expected {want} for a system with "
                f"r={r}, p={p}, l={l}")

    updates = {}
    for name in _SYM_NAMES:
        updates[name] = _mat.sym(getattr(system, name))

    for name in ("W", "Q", "Sigma1"):
        updates[name] = _psd_or_raise(name, updates[name])
    for name in ("V", "R"):
        m = updates[name]
        min_eig = _mat.min_eig_sym(m)
        if min_eig <= 1e-14 * (1.0 + float(np.linalg.norm(m, 2))):
            raise NotPd(name, min_eig)

    joint = np.block([[updates["W"], system.L],
                      [system.L.T, updates["V"]]])
    joint_min = _mat.min_eig_sym(joint)
    if joint_min < -1e-10 * (1.0 + float(np.linalg.norm(joint, 2))):
        raise NotPsd("joint noise covariance [[W, L], [L', V]]", joint_min)

    return replace(system, **updates)


def _psd_or_raise(name, m):
    min_eig = _mat.min_eig_sym(m)
    if min_eig < -1e-10 * (1.0 + float(np.linalg.norm(m, 2))):
        raise NotPsd(name, min_eig)
    if min_eig < 0.0:
        m = _mat.psd_project(m)
    return m


def _rank_threshold(mat, singvals):
    smax = float(singvals[0]) if singvals.size else 0.0
    return max(mat.shape) * np.finfo(float).eps * smax


def pbh_detectable(F, H, tol_unit=TOL_UNIT):
    """Eigenvector rank test: every eigenvalue of F with modulus >= 1 must
    keep [F - lam I; H] at full column rank.  Returns (ok, witness)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    r = F.shape[0]
    eye = np.eye(r)
    for lam in np.linalg.eigvals(F):
        if abs(lam) < 1.0 - tol_unit:
            continue
        stacked = np.vstack([F - lam * eye, H])
        _, s, vh = np.linalg.svd(stacked)
        if s[r - 1] <= _rank_threshold(stacked, s):
            vec = vh[-1].conj()
            return False, Witness(complex(lam), vec, "detectability of (F, H)")
    return True, None


def pbh_stabilizable(F, G, tol_unit=TOL_UNIT):
    """Eigenvector rank test: every eigenvalue of F with modulus >= 1 must
    keep [F - lam I, G] at full row rank.  Returns (ok, witness)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    r = F.shape[0]
    eye = np.eye(r)
    for lam in np.linalg.eigvals(F):
        if abs(lam) < 1.0 - tol_unit:
            continue
        wide = np.hstack([F - lam * eye, G])
        u, s, _ = np.linalg.svd(wide)
        if s[r - 1] <= _rank_threshold(wide, s):
            vec = u[:, -1].conj()
            return False, Witness(complex(lam), vec, "stabilizability of (F, G)")
    return True, None


def pbh_unit_circle_controllable(F, B, tol_unit=TOL_UNIT):
    """Rank test restricted to eigenvalues on the unit circle: each such
    eigenvalue must keep [F - lam I, B] at full row rank."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    r = F.shape[0]
    eye = np.eye(r)
    for lam in np.linalg.eigvals(F):
        if abs(abs(lam) - 1.0) > tol_unit:
            continue
        wide = np.hstack([F - lam * eye, B])
        u, s, _ = np.linalg.svd(wide)
        if s[r - 1] <= _rank_threshold(wide, s):
            vec = u[:, -1].conj()
            return False, Witness(complex(lam), vec,
                                  "unit-circle controllability")
    return True, None


def check_assumptions(system, tol_unit=TOL_UNIT):
    """Run the three structural checks required by the capacity pipeline.

    The third check applies the unit-circle test to the noise loop pair
    (F - L V^-1 H, B) where B is a square-root factor of the conditional
    process-noise covariance W - L V^-1 L'.
    """
    system = validate_system(system)
    notes = []

    det_ok, det_w = pbh_detectable(system.F, system.H, tol_unit)
    stab_ok, stab_w = pbh_stabilizable(system.F, system.G, tol_unit)

    vinv_h = _mat.solve_pd(system.V, system.H)
    vinv_lt = _mat.solve_pd(system.V, system.L.T)
    F_s = system.F - system.L @ vinv_h
    W_s = system.W - system.L @ vinv_lt
    w_min = _mat.min_eig_sym(W_s)
    if w_min < -1e-10 * (1.0 + float(np.linalg.norm(W_s, 2))):
        notes.append("conditional process-noise covariance has a negative "
                     f"eigenvalue {w_min:.3e}; clipped for the rank test")
    B_s = _mat.psd_sqrt_factor(W_s)
    ctrl_ok, ctrl_w = pbh_unit_circle_controllable(F_s, B_s, tol_unit)

    return AssumptionReport(
        detectable_FH=det_ok,
        stabilizable_FG=stab_ok,
        unit_circle_controllable=ctrl_ok,
        detectability_witness=det_w,
        stabilizability_witness=stab_w,
        controllability_witness=ctrl_w,
        notes=tuple(notes),
    )


def from_isi_channel(channel_state, channel_input, channel_output,
                     feedthrough, noise_covs):
    """Embed a linear Gaussian channel with memory as a plant.

    The channel maps input x through internal dynamics (channel_state,
    channel_input) and emits channel_output s + feedthrough x plus noise.
    noise_covs is the triple (W, V, L).  The embedding uses zero state
    cost and identity input cost, so the cost budget is an average input
    power budget.
    """
    W, V, L = noise_covs
    return make_system(F=channel_state, G=channel_input, H=channel_output,
                       J=feedthrough, W=W, V=V, L=L)


def system_from_dict(data):
    """Build a validated system from a parsed JSON object.

    Keys F, G, H, J, W, V, Q, R are required; L and Sigma1 default to
    zero.  Unknown keys are rejected.  Every value must be a rectangular
    array of arrays of numbers (row major).
    """
    if not isinstance(data, dict):
        raise ConfigError("system description must be a JSON object")
    known = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in system description: {unknown}")
    missing = sorted(k for k in _REQUIRED_KEYS if k not in data)
    if missing:
        raise ConfigError(f"missing required keys: {missing}")

    mats = {}
    for key in data:
        mats[key] = _parse_matrix(key, data[key])

    try:
        return make_system(F=mats["F"], G=mats["G"], H=mats["H"], J=mats["J"],
                           W=mats["W"], V=mats["V"], L=mats.get("L"),
                           Sigma1=mats.get("Sigma1"), Q=mats["Q"], R=mats["R"])
    except IndexError as exc:
        raise ConfigError(f"malformed matrix data: {exc}") from exc


def _parse_matrix(name, value):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{name} must be a non-empty array of arrays")
    rows = []
    width = None
    for row in value:
        if not isinstance(row, list) or not row:
            raise ConfigError(f"{name} must be a non-empty array of arrays")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ConfigError(f"{name} has ragged rows")
        for entry in row:
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                raise ConfigError(f"{name} contains a non-numeric entry")
        rows.append([float(entry) for entry in row])
    return np.array(rows, dtype=float)


def load_system(path):
    """Read and validate a system from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return system_from_dict(data)


def save_system(system, path):
    """Write a system to a JSON file in the same layout load_system reads."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(system.to_dict(), fh, indent=2)
        fh.write("\n")
