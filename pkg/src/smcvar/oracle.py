"""Exact reference computations for small models.

Everything here is brute force: a :class:`DiscreteHMM` with at most six states
and six stages is handled by enumerating every path, and
:func:`exhaustive_prototype_check` enumerates every outcome of the filter's own
random draws for tiny particle counts.  Sums are accumulated with
:func:`math.fsum` so that agreement to ``1e-12`` is meaningful.

For the change-point benchmark, :func:`changepoint_exact_mean` runs an exact
forward recursion over the most recent change point, and
:func:`changepoint_enumerated_mean` checks it by summing over all indicator
sequences.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import (AmbiguousScheduleError, EnumerationBudgetError,
                     InvalidConfigurationError, OracleError)
from .model import ModelSpec
from .resampling import Scheme

MAX_STATES = 6
MAX_HORIZON = 6
MAX_PATHS = 10**6


def _fsum(a) -> float:
    return math.fsum(np.asarray(a, dtype=float).ravel())


def _safe_log(a):
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(a)


def _gamma_vec(x):
    x = np.asarray(x, dtype=float)
    frac = x - np.floor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = frac * (1.0 - frac) / x
    return np.where(x > 0, out, 0.0)


class DiscreteHMM:
    """Finite-state hidden Markov model with explicit proposal tables.

    Parameters
    ----------
    initial : array, shape (d,)
        Initial distribution ``p_1``.
    transition : array, shape (d, d) or (T-1, d, d)
        ``transition[t-2][i, j] = p_t(j | i)``.
    emission : array, shape (T, d)
        ``emission[t-1, j] = g_t(Y_t | j)`` with the observations applied.
    proposal_initial, proposal : arrays, optional
        ``q_1`` and ``q_t``; default to the model itself (bootstrap proposal).
    psi : array, shape (d,) * T, optional
        Functional on paths.  Defaults to the index of the final state.
    """

    def __init__(self, initial, transition, emission, proposal_initial=None,
                 proposal=None, psi=None):
        self.emission = np.atleast_2d(np.asarray(emission, dtype=float))
        T, d = self.emission.shape
        if d > MAX_STATES or T > MAX_HORIZON:
            raise InvalidConfigurationError(
                f"enumeration limited to {MAX_STATES} states and {MAX_HORIZON} stages")
        self.initial = np.asarray(initial, dtype=float)
        self.transition = self._stack(transition, T, d)
        self.proposal_initial = (self.initial.copy() if proposal_initial is None
                                 else np.asarray(proposal_initial, dtype=float))
        self.proposal = (self.transition.copy() if proposal is None
                         else self._stack(proposal, T, d))
        if psi is None:
            psi = np.broadcast_to(np.arange(d, dtype=float), (d,) * T)
        self.psi = np.array(psi, dtype=float)
        if self.psi.shape != (d,) * T:
            raise InvalidConfigurationError(f"psi must have shape {(d,) * T}")
        self._validate()
        self._build()

    @staticmethod
    def _stack(mat, T, d):
        mat = np.asarray(mat, dtype=float)
        if mat.ndim == 2:
            mat = np.broadcast_to(mat, (max(T - 1, 0), d, d))
        if mat.shape != (max(T - 1, 0), d, d):
            raise InvalidConfigurationError(f"transition tables must have shape {(T - 1, d, d)}")
        return np.array(mat)

    @property
    def d(self) -> int:
        return self.emission.shape[1]

    @property
    def horizon(self) -> int:
        return self.emission.shape[0]

    def _validate(self):
        tol = 1e-12
        rows = [self.initial, self.proposal_initial, *self.transition, *self.proposal]
        for r in rows:
            if np.any(r < 0) or np.any(np.abs(r.sum(axis=-1) - 1) > tol):
                raise InvalidConfigurationError("probability tables must be stochastic")
        if np.any((self.proposal_initial == 0) & (self.initial > 0)) or np.any(
                (self.proposal == 0) & (self.transition > 0)):
            raise InvalidConfigurationError("proposal must be positive wherever the transition is")
        if np.any(self.emission < 0):
            raise InvalidConfigurationError("emission densities must be nonnegative")

    def _build(self):
        T, d = self.horizon, self.d
        # incremental weights: w[0] shape (d,), w[t-1] shape (d, d) for t >= 2
        with np.errstate(divide="ignore", invalid="ignore"):
            w1 = np.where(self.proposal_initial > 0,
                          self.initial * self.emission[0] / self.proposal_initial, 0.0)
            ws = [np.where(self.proposal[t - 2] > 0,
                           self.transition[t - 2] * self.emission[t - 1][None, :]
                           / self.proposal[t - 2], 0.0) for t in range(2, T + 1)]
        self.weights = [w1, *ws]
        # prefix tensors over (d,)*t: q probability, product of weights, product of p*g
        qprob, wprod, pg = [np.ones(())], [np.ones(())], [np.ones(())]
        for t in range(1, T + 1):
            if t == 1:
                q, w = self.proposal_initial, w1
                p = self.initial * self.emission[0]
            else:
                q, w = self.proposal[t - 2], ws[t - 2]
                p = self.transition[t - 2] * self.emission[t - 1][None, :]
            qprob.append(self._extend(qprob[-1], q, t))
            wprod.append(self._extend(wprod[-1], w, t))
            pg.append(self._extend(pg[-1], p, t))
        self.qprob, self.wprod, self.pg = qprob, wprod, pg
        self.eta = np.array([1.0] + [_fsum(qprob[t] * wprod[t]) for t in range(1, T + 1)])
        if not self.eta[-1] > 0:
            raise OracleError("observations have zero probability under the model")
        self.psi_T = _fsum(qprob[T] * wprod[T] * self.psi) / self.eta[T]

    @staticmethod
    def _extend(prefix, table, t):
        if t == 1:
            return prefix * table
        return prefix[..., None] * table.reshape((1,) * (t - 2) + table.shape)

    # ---- path-level quantities ------------------------------------------------

    def h_star(self, t: int) -> np.ndarray:
        """``eta_t / prod_{k<=t} w_k`` on prefixes (``inf`` where a weight vanishes)."""
        with np.errstate(divide="ignore"):
            return self.eta[t] / self.wprod[t]

    def likelihood_ratio(self) -> np.ndarray:
        """``L_T = prod w_t / eta_T`` on full paths."""
        return self.wprod[self.horizon] / self.eta[self.horizon]

    def _backward(self, terminal):
        T = self.horizon
        out = [None] * (T + 1)
        out[T] = terminal
        for t in range(T - 1, 0, -1):
            q = self.proposal[t - 1]
            out[t] = np.einsum("...ij,ij->...i", out[t + 1], q)
        out[0] = np.array(_fsum(self.proposal_initial * out[1]))
        return out

    def f(self) -> list:
        """Centred conditional expectations ``f_t`` for ``t = 0..T`` (``f_0 = 0``)."""
        fs = self._backward((self.psi - self.psi_T) * self.likelihood_ratio())
        fs[0] = np.array(0.0)
        return fs

    def f_tilde(self) -> list:
        """Uncentred ``E_q[psi L_T | x_{1:t}]``; ``f~_0 = psi_T``."""
        fs = self._backward(self.psi * self.likelihood_ratio())
        fs[0] = np.array(self.psi_T)
        return fs

    def expect(self, t: int, values) -> float:
        """``E_q`` of a prefix function given as a ``(d,)*t`` tensor (or broadcastable)."""
        values = np.broadcast_to(values, self.qprob[t].shape)
        mask = self.qprob[t] > 0
        return _fsum(np.where(mask, self.qprob[t] * np.where(mask, values, 0.0), 0.0))

    def _pad(self, tensor, t_from, t_to):
        return np.asarray(tensor).reshape(np.shape(tensor) + (1,) * (t_to - t_from))

    def _f2h(self, f_t, t, h_at=None):
        """``f_t^2 h*_{h_at}`` with zero where the weight product vanishes."""
        h_at = t if h_at is None else h_at
        w = self._pad(self.wprod[h_at], h_at, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(w > 0, f_t**2 * self.eta[h_at] / w, 0.0)

    def to_model(self) -> "DiscreteModel":
        return DiscreteModel(self)


class DiscreteModel(ModelSpec):
    """Filter-facing view of a :class:`DiscreteHMM`; states are integer paths."""

    def __init__(self, dhmm: DiscreteHMM):
        self.dhmm = dhmm
        self.horizon = dhmm.horizon
        with np.errstate(divide="ignore"):
            self._logw = [np.log(w) for w in dhmm.weights]
        self._cdf1 = np.cumsum(dhmm.proposal_initial)
        self._cdf = np.cumsum(dhmm.proposal, axis=-1)

    def initial_state(self, n):
        return np.zeros((n, 0), dtype=np.int64)

    def propose(self, t, state, rng):
        u = rng.random(state.shape[0])
        if t == 1:
            x = np.searchsorted(self._cdf1, u, side="right")
        else:
            cdf = self._cdf[t - 2][state[:, -1]]
            x = (u[:, None] >= cdf).sum(axis=1)
        x = np.minimum(x, self.dhmm.d - 1)
        return np.concatenate([state, x[:, None]], axis=1)

    def log_incremental_weight(self, t, state, new_state):
        x = new_state[:, -1]
        if t == 1:
            return self._logw[0][x]
        return self._logw[t - 1][state[:, -1], x]

    def functional(self, state):
        return self.dhmm.psi[tuple(state.T)]


# ---- exact quantities -----------------------------------------------------------


def exact_posterior(dhmm: DiscreteHMM):
    """Return ``(psi_T, eta)`` with ``eta[t-1]`` the normalizing constant up to stage ``t``.

    ``eta_t`` is computed as ``E_q[prod w_k]``; :func:`eta_direct` gives the
    same numbers from ``sum prod p g``.
    """
    return dhmm.psi_T, dhmm.eta[1:].copy()


def eta_direct(dhmm: DiscreteHMM) -> np.ndarray:
    return np.array([_fsum(dhmm.pg[t]) for t in range(1, dhmm.horizon + 1)])


def _schedule(dhmm, schedule):
    T = dhmm.horizon
    if schedule is None:
        return tuple(range(1, T))
    taus = tuple(sorted(int(s) for s in schedule))
    if any(not 1 <= s <= T - 1 for s in taus) or len(set(taus)) != len(taus):
        raise InvalidConfigurationError(f"resampling times must be distinct stages in 1..{T - 1}")
    return taus


def sigma2_terms(dhmm: DiscreteHMM, schedule=None, scheme=Scheme.MULTINOMIAL) -> list:
    """The individual terms of the limiting variance for a resampling schedule.

    ``schedule`` lists the resampling stages (default: every stage ``1..T-1``).
    Terms alternate propagation and resampling contributions, as in
    ``sigma^2_1, sigma^2_2, ...``; the residual scheme multiplies each
    resampling term by ``gamma`` of the limiting expected offspring count.
    """
    scheme = Scheme.parse(scheme)
    taus = (0, *_schedule(dhmm, schedule), dhmm.horizon)
    fs = dhmm.f()
    terms = []
    for s in range(1, len(taus)):
        prev, cur = taus[s - 1], taus[s]
        lead = dhmm.expect(cur, dhmm._f2h(fs[cur], cur, h_at=prev))
        back = dhmm.expect(prev, dhmm._f2h(fs[prev], prev)) if prev > 0 else 0.0
        terms.append(lead - back)
        if cur == dhmm.horizon:
            break
        even = dhmm._f2h(fs[cur], cur)
        if scheme is Scheme.RESIDUAL:
            base = dhmm._pad(dhmm.wprod[prev], prev, cur)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(base > 0, dhmm.wprod[cur] / base, 0.0)
            even = _gamma_vec(ratio * dhmm.eta[prev] / dhmm.eta[cur]) * even
        terms.append(dhmm.expect(cur, even))
    for k, term in enumerate(terms, start=1):
        if not math.isfinite(term):
            raise OracleError(f"variance term {k} is not finite")
    return terms


def exact_sigma2(dhmm: DiscreteHMM, schedule=None, scheme=Scheme.MULTINOMIAL) -> float:
    """Limiting variance of ``sqrt(m) (estimate - psi_T)`` for a fixed schedule."""
    return math.fsum(sigma2_terms(dhmm, schedule, scheme))


def sigma2_prototype(dhmm: DiscreteHMM) -> float:
    """Limiting variance of the likelihood-ratio estimator (every-stage bootstrap)."""
    T = dhmm.horizon
    ft = dhmm.f_tilde()
    total = []
    for t in range(1, T + 1):
        lead = dhmm.expect(t, dhmm._f2h(ft[t], t, h_at=t - 1))
        back = dhmm.expect(t - 1, dhmm._f2h(ft[t - 1], t - 1)) if t > 1 else float(ft[0]) ** 2
        total.append(lead - back)
        if t < T:
            # (f~ h* - f~_0)^2 / h*  =  (f~ eta/W - psi_T)^2 W / eta
            w = dhmm.wprod[t]
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.where(w > 0, (ft[t] * dhmm.eta[t] / w - dhmm.psi_T) ** 2 * w / dhmm.eta[t], 0.0)
            total.append(dhmm.expect(t, val))
    return math.fsum(total)


def limiting_cv2(dhmm: DiscreteHMM, since: int, t: int) -> float:
    """Limit of cv^2 at stage ``t`` when the last resampling happened at ``since``."""
    if not 0 <= since < t <= dhmm.horizon:
        raise InvalidConfigurationError("need 0 <= since < t <= T")
    w_since = dhmm._pad(dhmm.wprod[since], since, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(w_since > 0, dhmm.wprod[t] ** 2 / w_since, 0.0)
    return dhmm.eta[since] / dhmm.eta[t] ** 2 * dhmm.expect(t, ratio) - 1.0


def exact_tau_star(dhmm: DiscreteHMM, c: float, margin: float = 1e-9) -> tuple:
    """Deterministic limit of the resampling times under the rule ``cv^2 >= c``."""
    taus = []
    since = 0
    for t in range(1, dhmm.horizon):
        value = limiting_cv2(dhmm, since, t)
        if abs(value - c) <= margin:
            raise AmbiguousScheduleError(
                f"limiting cv^2 {value!r} at stage {t} is within {margin} of c = {c}")
        if value >= c:
            taus.append(t)
            since = t
    return tuple(taus)


def prototype_estimate(pop, psi, log_eta_T: float) -> float:
    """``m^{-1} sum L_T(X~_T^i) psi_i H_{T-1}^i`` from a finished population.

    Uses the path weights carried by the population; valid for an every-stage
    resampling run without groups.
    """
    from .engine import log_h_parent
    log_l = pop.log_w_path - log_eta_T
    return float(np.mean(np.exp(log_l + log_h_parent(pop)) * np.asarray(psi, dtype=float)))


# ---- exhaustive enumeration of the filter's randomness --------------------------


@dataclass
class PrototypeCheck:
    psi_T: float
    mean_prototype: float
    mean_filter: float
    var_prototype: float
    mean_sigma_tilde: float
    total_probability: float
    atoms: int

    @property
    def bias_filter(self) -> float:
        return self.mean_filter - self.psi_T


def exhaustive_prototype_check(dhmm: DiscreteHMM, m: int, budget: int = 10**6,
                               tol: float = 1e-12) -> PrototypeCheck:
    """Exact moments of the likelihood-ratio and ratio estimators.

    Enumerates every proposal and every multinomial resampling outcome of an
    ``m``-particle filter that resamples after every stage.  Raises
    :class:`OracleError` if the likelihood-ratio estimator is not unbiased to
    ``tol``.
    """
    T, d = dhmm.horizon, dhmm.d
    atoms = d ** (m * T) * m ** (m * (T - 1))
    if atoms > budget:
        raise EnumerationBudgetError(f"{atoms} atoms exceed the budget of {budget}")
    psi_T = dhmm.psi_T
    L = dhmm.likelihood_ratio()
    weights = dhmm.weights
    q1, qs = dhmm.proposal_initial, dhmm.proposal
    acc_prob, acc_tilde, acc_hat, acc_sq, acc_sig = [], [], [], [], []
    count = 0

    def recurse(t, paths, H, origins, corr, prob):
        nonlocal count
        for xs in itertools.product(range(d), repeat=m):
            if t == 1:
                p = math.prod(q1[x] for x in xs)
                w = [weights[0][x] for x in xs]
            else:
                p = math.prod(qs[t - 2][path[-1], x] for path, x in zip(paths, xs))
                w = [weights[t - 1][path[-1], x] for path, x in zip(paths, xs)]
            if p == 0.0:
                continue
            new_paths = [path + (x,) for path, x in zip(paths, xs)]
            total_w = math.fsum(w)
            if total_w == 0.0:
                raise OracleError(f"all weights vanish at stage {t}; enumeration undefined")
            wbar = total_w / m
            if t == T:
                count += 1
                tilde_terms = [L[path] * dhmm.psi[path] * h for path, h in zip(new_paths, H)]
                tilde = math.fsum(tilde_terms) / m
                hat = math.fsum(wi * dhmm.psi[path] for wi, path in zip(w, new_paths)) / total_w
                groups = [0.0] * m
                for j, term in zip(origins, tilde_terms):
                    groups[j] += term
                sig = math.fsum((g - (1.0 + c) * psi_T) ** 2 for g, c in zip(groups, corr)) / m
                weight = prob * p
                acc_prob.append(weight)
                acc_tilde.append(weight * tilde)
                acc_hat.append(weight * hat)
                acc_sq.append(weight * (tilde - psi_T) ** 2)
                acc_sig.append(weight * sig)
                continue
            W = [wi / total_w for wi in w]
            H_tilde = [h * wbar / wi if wi > 0 else math.inf for h, wi in zip(H, w)]
            for B in itertools.product(range(m), repeat=m):
                pb = math.prod(W[b] for b in B)
                if pb == 0.0:
                    continue
                counts = [0] * m
                for b in B:
                    counts[b] += 1
                new_corr = list(corr)
                for i in range(m):
                    new_corr[origins[i]] += counts[i] - m * W[i]
                recurse(t + 1, [new_paths[b] for b in B], [H_tilde[b] for b in B],
                        [origins[b] for b in B], new_corr, prob * p * pb)

    recurse(1, [()] * m, [1.0] * m, list(range(m)), [0.0] * m, 1.0)
    total = math.fsum(acc_prob)
    result = PrototypeCheck(
        psi_T=psi_T,
        mean_prototype=math.fsum(acc_tilde),
        mean_filter=math.fsum(acc_hat),
        var_prototype=math.fsum(acc_sq),
        mean_sigma_tilde=math.fsum(acc_sig),
        total_probability=total,
        atoms=count,
    )
    if abs(total - 1.0) > tol:
        raise OracleError(f"enumerated probabilities sum to {total!r}")
    if abs(result.mean_prototype - psi_T) > tol:
        raise OracleError(
            f"likelihood-ratio estimator has mean {result.mean_prototype!r}, expected {psi_T!r}")
    return result


# ---- change-point model ---------------------------------------------------------


def _norm_logpdf(x, mean, var):
    return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)


def changepoint_exact_mean(y, rho: float, xi: float) -> np.ndarray:
    """``E(X_t | Y_1..Y_t)`` for ``t = 1..len(y)`` in the normal mean-shift model.

    Forward recursion over the posterior of the most recent change point
    ``C_t``.  Given ``C_t = c`` the current level has a normal posterior with
    variance ``lambda = 1 / (t - c + 1 + 1/xi)`` and mean ``lambda * sum(Y_c..Y_t)``;
    the next observation is ``N(mean, 1 + lambda)`` if no change occurs and
    ``N(0, 1 + xi)`` after a change.  Probabilities are kept in log space.
    """
    if not 0 < rho < 1 or not xi > 0:
        raise InvalidConfigurationError("need 0 < rho < 1 and xi > 0")
    y = np.asarray(y, dtype=float)
    T = y.size
    out = np.empty(T)
    logp = np.zeros(1)
    sums = y[:1].copy()
    runs = np.ones(1)
    lam = 1.0 / (runs + 1.0 / xi)
    means = lam * sums
    out[0] = means[0]
    log_rho, log_stay = math.log(rho), math.log1p(-rho)
    for t in range(1, T):
        log_new = log_rho + _norm_logpdf(y[t], 0.0, 1.0 + xi)
        log_old = log_stay + _norm_logpdf(y[t], means, 1.0 + lam) + logp
        logp = np.append(log_old, log_new)
        logp -= logsumexp(logp)
        sums = np.append(sums + y[t], y[t])
        runs = np.append(runs + 1.0, 1.0)
        lam = 1.0 / (runs + 1.0 / xi)
        means = lam * sums
        out[t] = math.fsum(np.exp(logp) * means)
    return out


def changepoint_enumerated_mean(y, rho: float, xi: float, max_t: int = 12) -> float:
    """``E(X_T | Y_1..Y_T)`` by summing over all ``2^(T-1)`` indicator sequences."""
    y = np.asarray(y, dtype=float)
    T = y.size
    if T > max_t:
        raise EnumerationBudgetError(f"enumeration over 2^{T - 1} sequences refused (max_t={max_t})")
    log_terms, values = [], []
    for tail in itertools.product((0, 1), repeat=T - 1):
        indicators = (1, *tail)
        starts = [i for i, flag in enumerate(indicators) if flag]
        bounds = starts + [T]
        loglik = 0.0
        for a, b in zip(bounds[:-1], bounds[1:]):
            seg = y[a:b]
            n, s = seg.size, seg.sum()
            # N(0, I + xi 11') evaluated at the segment
            loglik += (-0.5 * n * math.log(2 * math.pi) - 0.5 * math.log1p(n * xi)
                       - 0.5 * (np.dot(seg, seg) - xi * s * s / (1 + n * xi)))
        k = sum(tail)
        log_terms.append(k * math.log(rho) + (T - 1 - k) * math.log1p(-rho) + loglik)
        seg = y[starts[-1]:]
        values.append(xi * seg.sum() / (1 + seg.size * xi))
    log_terms = np.array(log_terms)
    probs = np.exp(log_terms - logsumexp(log_terms))
    return math.fsum(probs * np.array(values))
