"""Closed-loop Monte Carlo validation of a communicating control policy.

Simulates the plant, the encoder-side filter, the message-bearing input
policy and the decoder-side filter, then compares the empirical control
cost and the empirical information rate (from decoder innovations)
against the values the moment program promised.  Trials run on
independent counter-based substreams so runs are reproducible and
trivially parallel, and the whole batch of trials is advanced in lock
step so the hot loop is vectorized.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _mat
from .errors import (ConfigError, DimensionMismatch, NotPd, NotPsd,
                     NumericalBlowup, TooFewSamples)
from .model import validate_system
from .riccati import RiccatiRecursion

BLOWUP_GUARD = 1e12
_CHUNK = 20000
_GAIN_FREEZE_TOL = 1e-12


@dataclass(frozen=True)
class Policy:
    """Input-policy bundle: regulator gain, message direction loading,
    error-covariance pseudoinverse, message covariance, decoder gain and
    the stationary decoder error covariance the gains were derived from."""

    Klqr: np.ndarray
    Gamma: np.ndarray
    SigmaHatPinv: np.ndarray
    M: np.ndarray
    Ky: np.ndarray
    SigmaHat: np.ndarray

    def __post_init__(self):
        for name in ("Klqr", "Gamma", "SigmaHatPinv", "M", "Ky", "SigmaHat"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, _mat.frozen(arr))
        m_min = _mat.min_eig_sym(self.M)
        if m_min < -1e-8 * (1.0 + _mat.max_abs(self.M)):
            raise NotPsd("M", m_min)

    @property
    def direction_gain(self):
        return self.Gamma @ self.SigmaHatPinv

    @classmethod
    def from_solution(cls, solution):
        pinv, _ = _mat.psd_pinv(solution.SigmaHat, rel_tol=1e-9, abs_tol=1e-8)
        return cls(Klqr=solution.lqr.Klqr, Gamma=solution.Gamma,
                   SigmaHatPinv=pinv, M=solution.M, Ky=solution.Ky,
                   SigmaHat=solution.SigmaHat)


@dataclass
class SimConfig:
    """Monte Carlo settings.  horizon counts simulated steps; the first
    burn_in of them are excluded from every statistic."""

    horizon: int
    trials: int = 10
    seed: int = 0
    burn_in: int = 1000
    gain_schedule: str = "steady"
    policy: Policy | None = None
    dump_path: str | None = None

    def validate(self):
        if self.horizon <= self.burn_in or self.burn_in < 0:
            raise ConfigError("need horizon > burn_in >= 0, got "
                              f"horizon={self.horizon} burn_in={self.burn_in}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.gain_schedule not in ("steady", "time_varying"):
            raise ConfigError("gain_schedule must be 'steady' or "
                              f"'time_varying', got {self.gain_schedule!r}")


@dataclass(frozen=True)
class SimulationReport:
    empirical_cost: float
    cost_stderr: float
    empirical_rate_nats: float
    rate_stderr: float
    state_norm_max: float
    decoder_error_cov_final: np.ndarray
    lag1_autocorr: float
    empirical_cost_true_state: float
    trials: int
    horizon: int
    burn_in: int
    seed: int

    def to_dict(self):
        return {
            "empirical_cost": self.empirical_cost,
            "cost_stderr": self.cost_stderr,
            "empirical_rate_nats": self.empirical_rate_nats,
            "empirical_rate_bits": self.empirical_rate_nats / math.log(2.0),
            "rate_stderr": self.rate_stderr,
            "state_norm_max": self.state_norm_max,
            "decoder_error_cov_final":
                np.asarray(self.decoder_error_cov_final).tolist(),
            "lag1_autocorr": self.lag1_autocorr,
            "empirical_cost_true_state": self.empirical_cost_true_state,
            "trials": self.trials,
            "horizon": self.horizon,
            "burn_in": self.burn_in,
            "seed": self.seed,
        }


def empirical_cost(states, inputs, Q, R, Sigma, horizon=None):
    """Average quadratic cost of one trajectory of filtered states.

    states holds n+1 rows (terminal included), inputs holds n rows; the
    result is (1/n)(s_{n+1}' Q s_{n+1} + sum_i s_i' Q s_i + x_i' R x_i)
    plus ((n+1)/n) trace(Sigma Q), the correction from estimating the
    state by its filtered mean with steady error covariance Sigma.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    n = int(horizon) if horizon is not None else inputs.shape[0]
    if inputs.shape[0] != n or states.shape[0] != n + 1:
        raise DimensionMismatch(
            f"need n={n} inputs and n+1 states, got {inputs.shape[0]} "
            f"and {states.shape[0]}")
    if states.shape[1] != Q.shape[0] or inputs.shape[1] != R.shape[0]:
        raise DimensionMismatch("state or input width does not match the "
                                "cost matrices")
    run = float(np.einsum("ij,jk,ik->", states[:-1], Q, states[:-1])
                + np.einsum("ij,jk,ik->", inputs, R, inputs))
    terminal = float(states[-1] @ Q @ states[-1])
    correction = (n + 1) / n * float(np.trace(Sigma @ Q))
    return (run + terminal) / n + correction


def estimate_rate(innovation_samples, Psi):
    """Information rate implied by a sample of decoder innovations.

    Returns (rate_nats, std_error): half the log-det ratio of the sample
    covariance to the no-information innovation covariance Psi, with a
    std-error from ten contiguous batch means.
    """
    eps = np.atleast_2d(np.asarray(innovation_samples, dtype=float))
    n, l = eps.shape
    if n < 100 * l * l:
        raise TooFewSamples(f"need at least {100 * l * l} innovation "
                            f"samples for a {l}-dim covariance, got {n}")
    Psi = np.atleast_2d(np.asarray(Psi, dtype=float))
    log_det_psi = _mat.logdet_pd(Psi)
    if log_det_psi is None:
        raise NotPd("Psi", _mat.min_eig_sym(Psi))

    def _rate(block):
        mu = block.mean(axis=0)
        centered = block - mu
        cov = centered.T @ centered / block.shape[0]
        ld = _mat.logdet_pd(cov)
        return float("nan") if ld is None else 0.5 * (ld - log_det_psi)

    rate = _rate(eps)
    bounds = np.linspace(0, n, 11, dtype=int)
    batch = np.array([_rate(eps[a:b]) for a, b in zip(bounds[:-1],
                                                      bounds[1:])])
    stderr = float(np.std(batch, ddof=1) / math.sqrt(len(batch)))
    return rate, stderr


def _gain_schedule(recursion, start, steady_gain, horizon):
    """Per-step gains from a covariance recursion, frozen at the steady
    gain once they stop moving.  Returns (gains array, frozen index)."""
    gains = []
    Sigma = _mat.sym(np.atleast_2d(np.asarray(start, dtype=float)))
    tol = _GAIN_FREEZE_TOL * (1.0 + _mat.max_abs(steady_gain))
    for _ in range(horizon):
        Sigma_next, K, _ = recursion.step(Sigma)
        gains.append(K)
        if _mat.max_abs(K - steady_gain) <= tol:
            break
        Sigma = Sigma_next
    return np.asarray(gains), len(gains) - 1


def run_closed_loop(system, kalman, lqr, solution, config):
    """Simulate the policy and report empirical cost, rate and health.

    The plant runs with correlated process/measurement noise; the
    encoder runs the measurement filter and forms the input from the
    regulator part, the error-direction part and a fresh Gaussian
    message; the decoder runs its own filter on the outputs alone.
    Statistics use post-burn-in samples only.  Raises NumericalBlowup
    when any state norm passes the divergence guard.
    """
    config.validate()
    sys = validate_system(system)
    r, p, l = sys.r, sys.p, sys.l
    F, G, H, J = sys.F, sys.G, sys.H, sys.J
    Q, R = sys.Q, sys.R

    policy = config.policy
    if policy is None:
        policy = Policy.from_solution(solution)
    Klqr = policy.Klqr
    Gc = policy.direction_gain
    Ky = policy.Ky
    Kp = kalman.Kp

    A_dec = F - G @ Klqr
    C_dec = H - J @ Klqr

    joint = np.block([[sys.W, sys.L], [sys.L.T, sys.V]])
    noise_factor = _mat.psd_sqrt_factor(_mat.sym(joint))
    msg_factor = _mat.psd_sqrt_factor(_mat.sym(policy.M))
    init_factor = _mat.psd_sqrt_factor(sys.Sigma1)

    horizon, trials, burn_in = config.horizon, config.trials, config.burn_in

    if config.gain_schedule == "time_varying":
        enc_rec = RiccatiRecursion(A=F, C=H, Wn=sys.W, Vn=sys.V, S=sys.L)
        enc_gains, enc_last = _gain_schedule(enc_rec, sys.Sigma1, Kp, horizon)
        KpPsi = Kp @ kalman.Psi
        dec_rec = RiccatiRecursion(
            A=F + G @ Gc, C=H + J @ Gc,
            Wn=G @ policy.M @ G.T + KpPsi @ Kp.T,
            Vn=J @ policy.M @ J.T + kalman.Psi,
            S=G @ policy.M @ J.T + KpPsi)
        dec_gains, dec_last = _gain_schedule(dec_rec, policy.SigmaHat, Ky,
                                             horizon)
    else:
        enc_gains, enc_last = Kp[None, :, :], 0
        dec_gains, dec_last = Ky[None, :, :], 0

    base = np.random.Philox(config.seed)
    streams = [np.random.Generator(base.jumped(t)) for t in range(trials)]

    s = np.stack([g.standard_normal(r) @ init_factor.T for g in streams])
    sh = np.zeros((trials, r))
    sd = np.zeros((trials, r))

    state_norm_max = 0.0
    cost_run = np.zeros(trials)          # sum of sh'Q sh + x'R x, post burn-in
    cost_run_true = np.zeros(trials)     # same with the true state
    err_outer = np.zeros((r, r))
    eps_sum = np.zeros((trials, l))
    eps_outer = np.zeros((trials, l, l))
    lag_outer = np.zeros((l, l))
    prev_eps = None

    dump = None
    writer = None
    if config.dump_path is not None:
        dump = open(config.dump_path, "w", newline="")
        writer = csv.writer(dump, lineterminator="\r\n")
        header = (["step", "trial"]
                  + [f"s_{k}" for k in range(r)]
                  + [f"shat_{k}" for k in range(r)]
                  + [f"sdec_{k}" for k in range(r)]
                  + [f"x_{k}" for k in range(p)]
                  + [f"y_{k}" for k in range(l)])
        writer.writerow(header)

    try:
        step = 0
        while step < horizon:
            count = min(_CHUNK, horizon - step)
            wv = np.stack([g.standard_normal((count, r + l)) @ noise_factor.T
                           for g in streams])
            msg = np.stack([g.standard_normal((count, p)) @ msg_factor.T
                            for g in streams])
            for k in range(count):
                i = step + k            # zero-based global step index
                delta = sh - sd
                x = -sd @ Klqr.T + delta @ Gc.T + msg[:, k]
                y = s @ H.T + x @ J.T + wv[:, k, r:]
                enc_eps = y - sh @ H.T - x @ J.T
                dec_eps = y - sd @ C_dec.T

                if writer is not None:
                    for t in range(trials):
                        writer.writerow(
                            [i + 1, t]
                            + [format(v, ".17e") for v in s[t]]
                            + [format(v, ".17e") for v in sh[t]]
                            + [format(v, ".17e") for v in sd[t]]
                            + [format(v, ".17e") for v in x[t]]
                            + [format(v, ".17e") for v in y[t]])

                if i >= burn_in:
                    cost_run += (np.einsum("ti,ij,tj->t", sh, Q, sh)
                                 + np.einsum("ti,ij,tj->t", x, R, x))
                    cost_run_true += (np.einsum("ti,ij,tj->t", s, Q, s)
                                      + np.einsum("ti,ij,tj->t", x, R, x))
                    err_outer += np.einsum("ti,tj->ij", delta, delta)
                    eps_sum += dec_eps
                    eps_outer += np.einsum("ti,tj->tij", dec_eps, dec_eps)
                    if prev_eps is not None:
                        lag_outer += np.einsum("ti,tj->ij", dec_eps, prev_eps)
                    prev_eps = dec_eps

                Ke = enc_gains[min(i, enc_last)]
                Kd = dec_gains[min(i, dec_last)]
                s = s @ F.T + x @ G.T + wv[:, k, :r]
                sh = sh @ F.T + x @ G.T + enc_eps @ Ke.T
                sd = sd @ A_dec.T + dec_eps @ Kd.T

            norms = np.linalg.norm(s, axis=1)
            biggest = float(norms.max())
            state_norm_max = max(state_norm_max, biggest)
            # a NaN norm means the trajectory already left the finite range
            if not math.isfinite(biggest) or biggest > BLOWUP_GUARD:
                raise NumericalBlowup(step=step + count, norm=biggest)
            step += count
    finally:
        if dump is not None:
            dump.close()

    n_eff = horizon - burn_in
    tr_sq = float(np.trace(kalman.Sigma @ Q))
    terminal = np.einsum("ti,ij,tj->t", sh, Q, sh)
    terminal_true = np.einsum("ti,ij,tj->t", s, Q, s)
    cost_t = (cost_run + terminal) / n_eff + (n_eff + 1) / n_eff * tr_sq
    cost_true_t = (cost_run_true + terminal_true) / n_eff
    cost = float(cost_t.mean())
    cost_stderr = (float(np.std(cost_t, ddof=1) / math.sqrt(trials))
                   if trials > 1 else float("nan"))

    log_det_psi = _mat.logdet_pd(kalman.Psi)
    mean_t = eps_sum / n_eff
    cov_t = eps_outer / n_eff - np.einsum("ti,tj->tij", mean_t, mean_t)
    pooled_cov = cov_t.mean(axis=0)
    ld = _mat.logdet_pd(pooled_cov)
    rate = float("nan") if ld is None else 0.5 * (ld - log_det_psi)
    trial_lds = [_mat.logdet_pd(c) for c in cov_t]
    rate_t = np.array([float("nan") if v is None else 0.5 * (v - log_det_psi)
                       for v in trial_lds])
    if trials > 1:
        rate_stderr = float(np.std(rate_t, ddof=1) / math.sqrt(trials))
    else:
        rate_stderr = float("nan")

    pairs = (n_eff - 1) * trials
    lag_cov = lag_outer / pairs - np.outer(mean_t.mean(axis=0),
                                           mean_t.mean(axis=0))
    scale = np.sqrt(np.clip(np.diag(pooled_cov), 1e-300, None))
    lag1 = float(np.max(np.abs(lag_cov / np.outer(scale, scale))))

    return SimulationReport(
        empirical_cost=cost,
        cost_stderr=cost_stderr,
        empirical_rate_nats=rate,
        rate_stderr=rate_stderr,
        state_norm_max=state_norm_max,
        decoder_error_cov_final=_mat.frozen(err_outer / (n_eff * trials)),
        lag1_autocorr=lag1,
        empirical_cost_true_state=float(cost_true_t.mean()),
        trials=trials,
        horizon=horizon,
        burn_in=burn_in,
        seed=config.seed)
