"""Factory for the generic model: a Gaussian random walk that dies for odd seeds."""

import numpy as np

from smcvar.model import ModelSpec


class Walk(ModelSpec):
    def __init__(self, T, dead):
        self.horizon = T
        self.dead = dead

    def initial_state(self, n):
        return np.zeros(n)

    def propose(self, t, state, rng):
        return state + rng.standard_normal(state.shape[0])

    def log_incremental_weight(self, t, state, new_state):
        if self.dead and t == self.horizon:
            return np.full(new_state.shape[0], -np.inf)
        return -0.5 * new_state**2

    def functional(self, state):
        return state


def make(T, seed):
    return Walk(T, dead=seed % 2 == 1), 0.0


def healthy(T, seed):
    return Walk(T, dead=False), 0.0
