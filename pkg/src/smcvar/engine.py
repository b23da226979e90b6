"""Importance sampling / resampling loop with genealogy tracking.

The population keeps, for every particle,

* ``log_v``: the log of the product of incremental weights since the most
  recent resampling of its group;
* ``log_w_path``: the log of the product of *all* incremental weights along
  its path, used to reconstruct the quantities ``H`` on demand;
* ``origins``: the index of its stage-1 ancestor (0-based);

and, per completed resampling stage, the parent index of every offspring.
Particles may be split into ``k`` contiguous groups that are weighted and
resampled independently of each other (sample splitting); ``k = 1`` is the
ordinary filter.

Randomness is consumed in a fixed order: at each stage all proposals (in
particle order), then the resampling draws of each group that resamples (in
group order).  A run is therefore a pure function of ``(model, m, policy,
scheme, k, seed)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import logsumexp

from .errors import (DegenerateWeightsError, InvalidConfigurationError,
                     PopulationExtinctionError)
from .model import ModelSpec
from .resampling import (Always, ResamplePolicy, Scheme, counts_for, group_sizes,
                         parse_policy, should_resample)


@dataclass
class Population:
    stage: int
    states: Any
    log_v: np.ndarray
    log_w_path: np.ndarray
    log_w_last: np.ndarray
    origins: np.ndarray
    sizes: np.ndarray
    log_wbar_prefix: np.ndarray
    last_resample: np.ndarray
    m: int
    parents: dict = field(default_factory=dict)
    resample_times: list = field(default_factory=list)
    group_resample_times: list = field(default_factory=list)
    cv2_trace: list = field(default_factory=list)
    log_wbar_trace: list = field(default_factory=list)
    size_trace: list = field(default_factory=list)

    @property
    def size(self) -> int:
        """Current number of particles ``M(t)``."""
        return int(self.log_v.size)

    @property
    def k(self) -> int:
        return int(self.sizes.size)

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)

    @property
    def group_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.k), self.sizes)

    def group_slices(self):
        for start, size in zip(self.starts, self.sizes):
            yield slice(int(start), int(start + size))


def init(model: ModelSpec, m: int, k: int = 1) -> Population:
    """Population of ``m`` particles at stage 0, split into ``k`` groups."""
    if m < 1:
        raise InvalidConfigurationError("number of particles must be at least 1")
    sizes = group_sizes(m, k)
    zeros = np.zeros(m)
    return Population(
        stage=0,
        states=model.initial_state(m),
        log_v=zeros.copy(),
        log_w_path=zeros.copy(),
        log_w_last=zeros.copy(),
        origins=np.arange(m),
        sizes=sizes,
        log_wbar_prefix=np.zeros(k),
        last_resample=np.zeros(k, dtype=np.int64),
        m=m,
        group_resample_times=[[] for _ in range(k)],
    )


def group_logsumexp(values: np.ndarray, pop: Population) -> np.ndarray:
    return np.array([logsumexp(values[s]) for s in pop.group_slices()])


def normalized_weights(pop: Population) -> np.ndarray:
    """``V_i``: weights since the last resampling, normalized within each group."""
    out = np.empty(pop.size)
    for s in pop.group_slices():
        lv = pop.log_v[s]
        top = lv.max()
        w = np.exp(lv - top)
        out[s] = w / w.sum()
    return out


def weight_ratios(pop: Population) -> np.ndarray:
    """``v_i / vbar`` with ``vbar`` the mean over the particle's group."""
    return normalized_weights(pop) * np.repeat(pop.sizes, pop.sizes)


def propagate(model: ModelSpec, pop: Population, rng: np.random.Generator) -> Population:
    """Advance every particle by one proposal draw and accumulate its weight.

    The population is updated in place and returned.
    """
    t = pop.stage + 1
    if t > model.horizon:
        raise InvalidConfigurationError(f"stage {t} is beyond the horizon {model.horizon}")
    new_states = model.propose(t, pop.states, rng)
    lw = np.asarray(model.log_incremental_weight(t, pop.states, new_states), dtype=float)
    if lw.shape != (pop.size,):
        raise InvalidConfigurationError(
            f"log weights at stage {t} have shape {lw.shape}, expected ({pop.size},)")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise DegenerateWeightsError(t, f"non-finite log incremental weight at stage {t}")
    pop.states = new_states
    pop.stage = t
    pop.log_v = pop.log_v + lw
    pop.log_w_path = pop.log_w_path + lw
    pop.log_w_last = lw
    log_wbar = group_logsumexp(lw, pop) - np.log(pop.sizes)
    if not np.all(np.isfinite(log_wbar)) or not np.all(np.isfinite(group_logsumexp(pop.log_v, pop))):
        raise DegenerateWeightsError(t)
    pop.log_wbar_prefix = pop.log_wbar_prefix + log_wbar
    pop.log_wbar_trace.append(log_wbar)
    v = normalized_weights(pop)
    pop.cv2_trace.append(np.array([max(0.0, size * float(np.dot(v[s], v[s])) - 1.0)
                                   for s, size in zip(pop.group_slices(), pop.sizes)]))
    pop.size_trace.append(pop.size)
    return pop


def resample(model: ModelSpec, pop: Population, counts, groups=None) -> Population:
    """Replace each particle by ``counts[i]`` copies of itself.

    Copies carry the state, origin and path weight of their parent and start
    a fresh ``log_v`` accumulation.  ``groups`` lists the groups that were
    resampled (default: all); particles of other groups must have count 1.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape != (pop.size,) or np.any(counts < 0):
        raise InvalidConfigurationError("counts must be a nonnegative vector, one per particle")
    groups = np.arange(pop.k) if groups is None else np.asarray(groups, dtype=np.int64)
    new_sizes = np.array([counts[s].sum() for s in pop.group_slices()], dtype=np.int64)
    if np.any(new_sizes == 0):
        raise PopulationExtinctionError(pop.stage, cv2_trace=pop.cv2_trace)
    parents = np.repeat(np.arange(pop.size), counts)
    reset = np.zeros(pop.k, dtype=bool)
    reset[groups] = True
    new_group = np.repeat(np.arange(pop.k), new_sizes)

    pop.states = model.take(pop.states, parents)
    pop.log_v = np.where(reset[new_group], 0.0, pop.log_v[parents])
    pop.log_w_path = pop.log_w_path[parents]
    pop.log_w_last = pop.log_w_last[parents]
    pop.origins = pop.origins[parents]
    pop.sizes = new_sizes
    pop.parents[pop.stage] = parents
    if not pop.resample_times or pop.resample_times[-1] != pop.stage:
        pop.resample_times.append(pop.stage)
    for g in groups:
        pop.group_resample_times[g].append(pop.stage)
        pop.last_resample[g] = pop.stage
    return pop


def ancestor_labels(pop: Population, s: int) -> np.ndarray:
    """Index of each current particle's ancestor among the stage-``s`` particles.

    Stage-``s`` particles are taken before resampling, so ``s = 1`` gives
    the ancestral origins.
    """
    if not 1 <= s <= pop.stage:
        raise InvalidConfigurationError(f"stage {s} outside 1..{pop.stage}")
    labels = np.arange(pop.size)
    for tau in sorted(pop.parents, reverse=True):
        if tau < s:
            break
        labels = pop.parents[tau][labels]
    return labels


def log_h_pre(pop: Population) -> np.ndarray:
    """``log H~_t^i`` for the current (pre-resampling) particles, ``k = 1``."""
    return pop.log_wbar_prefix[0] - pop.log_w_path


def log_h_parent(pop: Population) -> np.ndarray:
    """``log H_{t-1}^i`` of the path each current particle was proposed from."""
    prev_prefix = pop.log_wbar_prefix[0] - pop.log_wbar_trace[-1][0]
    return prev_prefix - (pop.log_w_path - pop.log_w_last)


def weight_identity_residual(pop: Population) -> np.ndarray:
    """``log(m W_t^i) - log(H_{t-1}^i / H~_t^i)`` for every particle.

    Zero (up to rounding) whenever the previous stage ended with a
    resampling, which makes ``W`` the ordinary resampling weights.
    """
    log_mw = np.log(normalized_weights(pop)) + np.log(pop.size)
    return log_mw - (log_h_parent(pop) - log_h_pre(pop))


def run_filter(model: ModelSpec, m: int, policy: ResamplePolicy | str | float = Always(),
               scheme: Scheme | str = Scheme.MULTINOMIAL, seed=None, *,
               rng: np.random.Generator | None = None, k: int = 1,
               gilks_berzuini: bool = True, mu=None,
               on_stage: Callable[[Population], None] | None = None,
               keep_population: bool = True):
    """Run the particle filter over the full horizon of ``model``.

    Parameters
    ----------
    model : ModelSpec
    m : int
        Initial number of particles.
    policy : ResamplePolicy or str or float
        ``Always()``, ``Never()``, ``CvThreshold(c)``, or anything accepted
        by :func:`smcvar.resampling.parse_policy`.
    scheme : Scheme or str
        ``"multinomial"`` (bootstrap) or ``"residual"`` (residual Bernoulli).
    seed : int or SeedSequence, optional
        Seed for :func:`numpy.random.default_rng`; ignored when ``rng`` is given.
    k : int
        Number of independently resampled groups.  ``k >= 2`` enables the
        sample-splitting variance estimate.
    gilks_berzuini : bool
        Also compute the genealogy-based comparator variance.
    mu : float, optional
        Centre for the variance estimates; defaults to the point estimate.
    on_stage : callable, optional
        Called with the population after each propagation, before any
        resampling at that stage.

    Returns
    -------
    FilterOutput
    """
    from .estimators import summarize

    policy = parse_policy(policy)
    scheme = Scheme.parse(scheme)
    if rng is None:
        rng = np.random.default_rng(seed)
    started = time.perf_counter()
    pop = init(model, m, k)
    horizon = model.horizon
    try:
        for t in range(1, horizon + 1):
            propagate(model, pop, rng)
            if on_stage is not None:
                on_stage(pop)
            if t == horizon:
                break
            v = normalized_weights(pop)
            chosen = [g for g, s in enumerate(pop.group_slices())
                      if should_resample(policy, v[s], t, horizon)]
            if not chosen:
                continue
            counts = np.ones(pop.size, dtype=np.int64)
            for g, s in enumerate(pop.group_slices()):
                if g in chosen:
                    counts[s] = counts_for(scheme, v[s], int(pop.sizes[g]), rng)
            resample(model, pop, counts, chosen)
    except (DegenerateWeightsError, PopulationExtinctionError) as err:
        err.cv2_trace = [float(c[0]) if c.size == 1 else c.tolist() for c in pop.cv2_trace]
        raise
    psi = model.functional(pop.states)
    return summarize(pop, psi, mu=mu, gilks_berzuini=gilks_berzuini,
                     wall_time=time.perf_counter() - started,
                     keep_population=keep_population)
