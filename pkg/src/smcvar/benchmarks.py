"""Benchmark models: a Rao-Blackwellised change-point model and bearings-only tracking.

Both come with a data simulator and a :class:`~smcvar.model.ModelSpec`.
Simulated series can be written to and read from CSV (columns ``t``, the
hidden coordinates, ``y``) so a study can be rerun on pinned data.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import InvalidConfigurationError
from .model import ModelSpec

_LOG_2PI = math.log(2 * math.pi)


def _norm_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


# ---- change-point model ---------------------------------------------------------


def simulate_changepoint(T: int, rho: float, xi: float, seed=None):
    """Simulate the normal mean-shift model.

    ``X_1 ~ N(0, xi)``; for ``t >= 2`` the level is kept with probability
    ``1 - rho`` and otherwise redrawn from ``N(0, xi)``.  ``Y_t = X_t + e_t``
    with standard normal ``e_t``.

    Returns ``(X, Y)`` as float arrays of length ``T``.
    """
    if T < 1:
        raise InvalidConfigurationError("T must be positive")
    if not 0 < rho < 1 or not xi > 0:
        raise InvalidConfigurationError("need 0 < rho < 1 and xi > 0")
    rng = np.random.default_rng(seed)
    change = rng.random(T) < rho
    change[0] = True
    levels = rng.normal(0.0, math.sqrt(xi), size=T)
    x = np.empty(T)
    for t in range(T):
        x[t] = levels[t] if change[t] else x[t - 1]
    y = x + rng.standard_normal(T)
    return x, y


class ChangePointModel(ModelSpec):
    """Particles carry the change-point indicators through ``(run length, running sum)``.

    With the default ``proposal="conditional"`` the indicator ``I_t`` is drawn
    from its exact conditional law given the past indicators and ``Y_t``, so
    the incremental weight is the one-step predictive density of ``Y_t`` and
    does not depend on the drawn indicator.  ``proposal="prior"`` draws
    ``I_t ~ Bernoulli(rho)`` and weights by the density of the chosen branch.

    The functional is the posterior mean of the current level given the
    indicators, ``sum(Y_{C_T..T}) / (T - C_T + 1 + 1/xi)``.
    """

    def __init__(self, rho: float, xi: float, y, horizon: int | None = None,
                 proposal: str = "conditional"):
        if not 0 < rho < 1 or not xi > 0:
            raise InvalidConfigurationError("need 0 < rho < 1 and xi > 0")
        if proposal not in ("conditional", "prior"):
            raise InvalidConfigurationError(f"unknown proposal {proposal!r}")
        self.rho = float(rho)
        self.xi = float(xi)
        self.y = np.asarray(y, dtype=float)
        self.horizon = int(self.y.size if horizon is None else horizon)
        if not 1 <= self.horizon <= self.y.size:
            raise InvalidConfigurationError("horizon must be between 1 and len(y)")
        self.proposal = proposal
        self._log_rho = math.log(rho)
        self._log_stay = math.log1p(-rho)

    def initial_state(self, n):
        return np.zeros((n, 2))

    def level_posterior(self, state):
        """Posterior mean and variance of the current level given each particle's indicators."""
        lam = 1.0 / (state[:, 0] + 1.0 / self.xi)
        return lam * state[:, 1], lam

    def branch_logs(self, t, state):
        """``log a`` (change) and ``log b`` (no change) for stage ``t >= 2``."""
        y = self.y[t - 1]
        mean, lam = self.level_posterior(state)
        log_a = self._log_rho + _norm_logpdf(y, 0.0, 1.0 + self.xi)
        log_b = self._log_stay + _norm_logpdf(y, mean, 1.0 + lam)
        return np.broadcast_to(log_a, log_b.shape), log_b

    def propose(self, t, state, rng):
        n = state.shape[0]
        y = self.y[t - 1]
        u = rng.random(n)
        if t == 1:
            return np.column_stack([np.ones(n), np.full(n, y)])
        if self.proposal == "conditional":
            log_a, log_b = self.branch_logs(t, state)
            p_change = 1.0 / (1.0 + np.exp(log_b - log_a))
        else:
            p_change = self.rho
        change = u < p_change
        out = np.empty_like(state)
        out[:, 0] = np.where(change, 1.0, state[:, 0] + 1.0)
        out[:, 1] = np.where(change, y, state[:, 1] + y)
        return out

    def log_incremental_weight(self, t, state, new_state):
        n = state.shape[0]
        if t == 1:
            return np.full(n, _norm_logpdf(self.y[0], 0.0, 1.0 + self.xi))
        log_a, log_b = self.branch_logs(t, state)
        if self.proposal == "conditional":
            return np.logaddexp(log_a, log_b)
        change = new_state[:, 0] == 1.0
        return np.where(change, log_a - self._log_rho, log_b - self._log_stay)

    def functional(self, state):
        return self.level_posterior(state)[0]


def changepoint_model(rho: float, xi: float, y, horizon: int | None = None,
                      proposal: str = "conditional") -> ChangePointModel:
    return ChangePointModel(rho, xi, y, horizon=horizon, proposal=proposal)


# ---- bearings-only tracking -----------------------------------------------------

PHI = np.array([[1.0, 1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 1.0],
                [0.0, 0.0, 0.0, 1.0]])
GAMMA = np.array([[0.5, 0.0],
                  [1.0, 0.0],
                  [0.0, 0.5],
                  [0.0, 1.0]])
PROCESS_SD = 0.001
BEARING_SD = 0.005
INITIAL_MEAN = np.array([0.0, 0.0, 0.4, -0.05])
INITIAL_SD = np.array([0.5, 0.005, 0.3, 0.01])


def simulate_bearings(T: int, seed=None, process_sd: float = PROCESS_SD,
                      bearing_sd: float = BEARING_SD, initial_mean=INITIAL_MEAN,
                      initial_sd=INITIAL_SD):
    """Simulate a ship's track ``X`` (``T x 4``) and the bearings ``Y`` seen from the origin.

    Coordinates are ``(x, x-velocity, y, y-velocity)``; the dynamics are
    ``X_t = PHI X_{t-1} + GAMMA z_t`` and ``Y_t = atan(X_t3 / X_t1) + u_t``.
    """
    if T < 1:
        raise InvalidConfigurationError("T must be positive")
    rng = np.random.default_rng(seed)
    x = np.empty((T, 4))
    x[0] = np.asarray(initial_mean, dtype=float) + np.asarray(initial_sd, dtype=float) * rng.standard_normal(4)
    for t in range(1, T):
        x[t] = PHI @ x[t - 1] + GAMMA @ (process_sd * rng.standard_normal(2))
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.arctan(x[:, 2] / x[:, 0]) + bearing_sd * rng.standard_normal(T)
    return x, y


def initial_location(y1: float, xi_draw, zeta_draw):
    """Map the standard normal draws of the informed first-stage proposal to ``(x11, x13)``."""
    r = np.tan(y1 + BEARING_SD * np.asarray(xi_draw, dtype=float))
    denom = 0.36 + r**2
    mu = 0.4 * r / denom
    tau = 0.09 / denom
    x11 = mu + np.sqrt(tau) * np.asarray(zeta_draw, dtype=float)
    return x11, r * x11


class BearingsModel(ModelSpec):
    """Bearings-only tracking with the state propagated by the dynamics for ``t >= 2``.

    ``first_stage="informed"`` places the initial location on the line through
    the origin given by the first (jittered) bearing; ``"prior"`` draws it from
    the initial distribution.  The functional is ``(X_T1, X_T3)``.  Normalizing
    constants of the bearing density are dropped.
    """

    def __init__(self, y, horizon: int | None = None, first_stage: str = "informed"):
        if first_stage not in ("informed", "prior"):
            raise InvalidConfigurationError(f"unknown first-stage proposal {first_stage!r}")
        self.y = np.asarray(y, dtype=float)
        self.horizon = int(self.y.size if horizon is None else horizon)
        if not 1 <= self.horizon <= self.y.size:
            raise InvalidConfigurationError("horizon must be between 1 and len(y)")
        self.first_stage = first_stage

    def initial_state(self, n):
        return np.zeros((n, 4))

    def propose(self, t, state, rng):
        n = state.shape[0]
        if t > 1:
            z = PROCESS_SD * rng.standard_normal((n, 2))
            return state @ PHI.T + z @ GAMMA.T
        if self.first_stage == "prior":
            return INITIAL_MEAN + INITIAL_SD * rng.standard_normal((n, 4))
        xi_draw = rng.standard_normal(n)
        zeta_draw = rng.standard_normal(n)
        x11, x13 = initial_location(self.y[0], xi_draw, zeta_draw)
        out = np.empty((n, 4))
        out[:, 0] = x11
        out[:, 2] = x13
        out[:, 1] = INITIAL_MEAN[1] + INITIAL_SD[1] * rng.standard_normal(n)
        out[:, 3] = INITIAL_MEAN[3] + INITIAL_SD[3] * rng.standard_normal(n)
        return out

    def bearing_logweight(self, t, x1, x3):
        with np.errstate(divide="ignore", invalid="ignore"):
            resid = self.y[t - 1] - np.arctan(x3 / x1)
        lw = -0.5 * resid**2 / BEARING_SD**2
        return np.where(np.isnan(lw), -np.inf, lw)

    def log_incremental_weight(self, t, state, new_state):
        x1, x3 = new_state[:, 0], new_state[:, 2]
        if t > 1 or self.first_stage == "prior":
            return self.bearing_logweight(t, x1, x3)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = x3 / x1
            denom = 0.36 + r**2
            tau = 0.09 / denom
            zeta = (x1 - 0.4 * r / denom) / np.sqrt(tau)
            lw = (np.log(np.abs(x1)) + 0.5 * np.log(tau) + np.log1p(r**2)
                  - x1**2 / (2 * 0.5**2) - (x3 - 0.4) ** 2 / (2 * 0.3**2) + 0.5 * zeta**2)
        return np.where(np.isfinite(lw), lw, -np.inf)

    def functional(self, state):
        return state[:, [0, 2]]


def bearings_model(y, horizon: int | None = None, first_stage: str = "informed") -> BearingsModel:
    return BearingsModel(y, horizon=horizon, first_stage=first_stage)


# ---- CSV persistence ------------------------------------------------------------


def write_series(path, x, y):
    """Write hidden states and observations as ``t, x[, x1, x2, ...], y`` rows."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xs = x.reshape(x.shape[0], -1)
    names = ["x"] if xs.shape[1] == 1 else [f"x{j + 1}" for j in range(xs.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", *names, "y"])
        for t in range(y.size):
            writer.writerow([t + 1, *(repr(float(v)) for v in xs[t]), repr(float(y[t]))])


def read_series(path):
    """Inverse of :func:`write_series`; returns ``(x, y)``."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InvalidConfigurationError(f"{path} holds no rows")
    xcols = [c for c in rows[0] if c not in ("t", "y")]
    x = np.array([[float(r[c]) for c in xcols] for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    return (x[:, 0] if len(xcols) == 1 else x), y
