"""Model/proposal bundles consumed by the particle filter.

A model is vectorised over particles: every method receives the states of the
whole population as an array whose leading axis indexes particles.  Stages are
numbered ``t = 1, ..., horizon``.

Subclasses decide what a particle *state* is.  :class:`GenericModel` keeps the
whole path ``x_{1:t}``; Rao-Blackwellised models such as the change-point
benchmark keep a fixed-size sufficient statistic instead, so storage does not
grow with the horizon.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import InvalidConfigurationError


class ModelSpec:
    """Base class for a hidden Markov model together with its proposal.

    Subclasses implement :meth:`initial_state`, :meth:`propose`,
    :meth:`log_incremental_weight` and :meth:`functional`.  Instances must be
    read-only after construction; all randomness comes from the ``rng``
    argument of :meth:`propose`.
    """

    horizon: int = 0

    def initial_state(self, n: int) -> np.ndarray:
        """States of ``n`` particles before stage 1 (the empty prefix)."""
        raise NotImplementedError

    def propose(self, t: int, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Extend every particle by one draw from ``q_t(.|x_{1:t-1})``."""
        raise NotImplementedError

    def log_incremental_weight(self, t: int, state: np.ndarray, new_state: np.ndarray) -> np.ndarray:
        """``log w_t`` for each particle; ``-inf`` encodes a zero weight."""
        raise NotImplementedError

    def functional(self, state: np.ndarray) -> np.ndarray:
        """Value of the estimated functional, shape ``(n,)`` or ``(n, k)``."""
        raise NotImplementedError

    def take(self, state: np.ndarray, index: np.ndarray) -> np.ndarray:
        """Select particles by index (used by resampling)."""
        return state[index]


class GenericModel(ModelSpec):
    """Path-storing model assembled from user supplied densities.

    See :func:`make_generic_model` for the callable signatures.
    """

    def __init__(self, transition_sampler, transition_logpdf, emission_logpdf,
                 proposal_sampler, proposal_logpdf, observations, functional, horizon):
        self.transition_sampler = transition_sampler
        self.transition_logpdf = transition_logpdf
        self.emission_logpdf = emission_logpdf
        self.proposal_sampler = proposal_sampler
        self.proposal_logpdf = proposal_logpdf
        self.observations = observations
        self._functional = functional
        self.horizon = int(horizon)

    @property
    def is_bootstrap(self) -> bool:
        return self.proposal_sampler is None

    def initial_state(self, n):
        return np.empty((n, 0))

    @staticmethod
    def _last(path):
        return None if path.shape[1] == 0 else path[:, -1]

    def propose(self, t, state, rng):
        if self.is_bootstrap:
            x = self.transition_sampler(t, self._last(state), rng)
        else:
            x = self.proposal_sampler(t, state, rng)
        x = np.asarray(x)
        if x.shape[0] != state.shape[0]:
            raise InvalidConfigurationError(
                f"sampler returned {x.shape[0]} draws for {state.shape[0]} particles at stage {t}")
        x = x[:, None, ...]
        if state.shape[1] == 0:
            return x.copy()
        return np.concatenate([state, x.astype(state.dtype, copy=False)], axis=1)

    def log_incremental_weight(self, t, state, new_state):
        x = new_state[:, -1]
        y = self.observations[t - 1]
        lw = np.asarray(self.emission_logpdf(t, y, x), dtype=float)
        if not self.is_bootstrap:
            lw = (lw + np.asarray(self.transition_logpdf(t, self._last(state), x), dtype=float)
                  - np.asarray(self.proposal_logpdf(t, state, x), dtype=float))
        return np.broadcast_to(lw, (new_state.shape[0],)).astype(float)

    def functional(self, state):
        return np.asarray(self._functional(state), dtype=float)


def make_generic_model(
    transition_sampler: Callable | None,
    transition_logpdf: Callable | None,
    emission_logpdf: Callable,
    proposal_sampler: Callable | None,
    proposal_logpdf: Callable | None,
    observations,
    functional: Callable,
    horizon: int | None = None,
) -> GenericModel:
    """Build a path-storing :class:`ModelSpec` from densities.

    Parameters
    ----------
    transition_sampler : callable or None
        ``(t, x_prev, rng) -> x`` drawing from ``p_t``; ``x_prev`` is ``None``
        at ``t = 1``.  Only needed when no proposal is given.
    transition_logpdf : callable or None
        ``(t, x_prev, x) -> log p_t(x | x_prev)``.
    emission_logpdf : callable
        ``(t, y_t, x) -> log g_t(y_t | x)``.
    proposal_sampler, proposal_logpdf : callable or None
        ``(t, prefix, rng) -> x`` and ``(t, prefix, x) -> log q_t(x | prefix)``
        where ``prefix`` has shape ``(n, t-1, ...)``.  Pass ``None`` for both
        to propose from the transition (``q_t = p_t``); the incremental weight
        is then the emission density alone.
    observations : sequence
        ``Y_1, ..., Y_T``; fixed for the lifetime of the model.
    functional : callable
        ``path -> psi(path)`` evaluated on paths of shape ``(n, T, ...)``.
    horizon : int, optional
        Number of stages; defaults to ``len(observations)``.

    The log incremental weight equals
    ``transition_logpdf + emission_logpdf - proposal_logpdf`` pointwise.
    """
    if horizon is None:
        horizon = len(observations)
    if horizon < 1:
        raise InvalidConfigurationError("horizon must be a positive integer")
    if len(observations) < horizon:
        raise InvalidConfigurationError(
            f"{len(observations)} observations supplied for horizon {horizon}")
    if (proposal_sampler is None) != (proposal_logpdf is None):
        raise InvalidConfigurationError("proposal_sampler and proposal_logpdf go together")
    if proposal_sampler is None and transition_sampler is None:
        raise InvalidConfigurationError("need a transition sampler or a proposal sampler")
    if proposal_sampler is not None and transition_logpdf is None:
        raise InvalidConfigurationError("a non-bootstrap proposal requires transition_logpdf")
    return GenericModel(transition_sampler, transition_logpdf, emission_logpdf,
                        proposal_sampler, proposal_logpdf, observations, functional, horizon)


class ShiftedWeights(ModelSpec):
    """Wrap a model so every log incremental weight is shifted by ``log_kappa``.

    Multiplying the emission densities by ``kappa`` has this effect; normalized
    weights, and hence every estimator, are unchanged.
    """

    def __init__(self, model: ModelSpec, log_kappa: float):
        self.model = model
        self.log_kappa = float(log_kappa)
        self.horizon = model.horizon

    def initial_state(self, n):
        return self.model.initial_state(n)

    def propose(self, t, state, rng):
        return self.model.propose(t, state, rng)

    def log_incremental_weight(self, t, state, new_state):
        return self.model.log_incremental_weight(t, state, new_state) + self.log_kappa

    def functional(self, state):
        return self.model.functional(state)

    def take(self, state, index):
        return self.model.take(state, index)
