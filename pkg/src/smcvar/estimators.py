"""Point estimates and standard-error estimates from a finished population.

All variance estimates are built from particle residuals

    r_i = (v_i / vbar) * (psi_i - mu)

summed over groups of particles that share an ancestor.  Grouping by the
ancestral origin gives the consistent estimate; with ``k`` independently
resampled sub-populations the same grouping centred at the out-of-group
estimate gives the sample-splitting estimate; summing over the ancestors at
every stage gives the (conservative) Gilks-Berzuini comparator.

``var_ancestral`` and ``var_split`` estimate the asymptotic variance of
``sqrt(m) * (estimate - psi_T)`` and are converted to a standard error by
``sqrt(var / m)``.  ``var_gb`` estimates the variance of the estimate itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import Population, ancestor_labels, normalized_weights, weight_ratios
from .errors import InvalidConfigurationError


def _group_sum(labels, values, size):
    if values.ndim == 1:
        return np.bincount(labels, weights=values, minlength=size)
    return np.stack([np.bincount(labels, weights=values[:, j], minlength=size)
                     for j in range(values.shape[1])], axis=1)


def _residuals(pop, psi, mu):
    psi = np.asarray(psi, dtype=float)
    ratio = weight_ratios(pop)
    if psi.ndim == 2:
        ratio = ratio[:, None]
    return ratio * (psi - mu)


def group_estimates(pop: Population, psi) -> np.ndarray:
    """Self-normalized estimate inside each group, shape ``(k,)`` or ``(k, d)``."""
    psi = np.asarray(psi, dtype=float)
    v = normalized_weights(pop)
    return np.stack([v[s] @ psi[s] for s in pop.group_slices()])


def point_estimate(pop: Population, psi):
    """``sum_i V_T^i psi_i``, averaged over groups when the run was split."""
    est = group_estimates(pop, psi).mean(axis=0)
    return float(est) if np.ndim(est) == 0 else est


def var_ancestral(pop: Population, psi, mu=None):
    """Sum of squared origin-group residual totals, divided by ``m``.

    ``mu`` defaults to :func:`point_estimate`.  Origins are carried through
    every resampling, so the grouping is by the origin at the last resampling
    time (identity if the population was never resampled).
    """
    if mu is None:
        mu = point_estimate(pop, psi)
    totals = _group_sum(pop.origins, _residuals(pop, psi, mu), pop.m)
    out = np.sum(totals**2, axis=0) / pop.m
    return float(out) if np.ndim(out) == 0 else out


def var_sample_split(pop: Population, psi):
    """Origin-grouped variance centred at out-of-group estimates.

    Requires a run with ``k >= 2`` groups; each particle's residual is
    centred at the mean of the other groups' estimates.
    """
    if pop.k < 2:
        raise InvalidConfigurationError("sample splitting needs at least two groups")
    est = group_estimates(pop, psi)
    k = pop.k
    out_of_group = (est.sum(axis=0) - est) / (k - 1)
    centre = out_of_group[pop.group_index]
    psi = np.asarray(psi, dtype=float)
    ratio = weight_ratios(pop)
    if psi.ndim == 2:
        ratio = ratio[:, None]
    totals = _group_sum(pop.origins, ratio * (psi - centre), pop.m)
    out = np.sum(totals**2, axis=0) / pop.m
    return float(out) if np.ndim(out) == 0 else out


def var_gilks_berzuini(pop: Population, psi, mu=None):
    """``n^{-2} sum_{k,l} N^{k,l} r_k r_l`` with ``N`` the shared-ancestor counts.

    Evaluated stage by stage as ``n^{-2} sum_s sum_a (sum_{k: anc_s(k)=a} r_k)^2``;
    ancestor labels only change at resampling times, so stages are handled in
    blocks and no ``n x n`` matrix is formed.
    """
    if pop.stage < 1:
        raise InvalidConfigurationError("no stages have been run")
    if mu is None:
        mu = point_estimate(pop, psi)
    r = _residuals(pop, psi, mu)
    n = pop.size
    times = sorted(pop.parents)
    if any(t not in pop.parents for t in pop.resample_times):
        raise InvalidConfigurationError("genealogy is incomplete")
    labels = np.arange(n)
    upper = pop.stage
    total = np.zeros(r.shape[1:])
    for tau in reversed(times):
        # stages s in (tau, upper] share the current labels
        totals = _group_sum(labels, r, n)
        total = total + (upper - tau) * np.sum(totals**2, axis=0)
        labels = pop.parents[tau][labels]
        upper = tau
    totals = _group_sum(labels, r, n)
    total = total + upper * np.sum(totals**2, axis=0)
    out = total / n**2
    return float(out) if np.ndim(out) == 0 else out


def gb_stage_sum(pop: Population, psi, mu) -> float:
    """Reference O(T) evaluation of the Gilks-Berzuini sum via :func:`ancestor_labels`."""
    r = _residuals(pop, psi, mu)
    total = 0.0
    for s in range(1, pop.stage + 1):
        totals = _group_sum(ancestor_labels(pop, s), r, pop.size)
        total = total + np.sum(totals**2, axis=0)
    return total / pop.size**2


@dataclass
class Diagnostics:
    cv2: list
    resample_times: tuple
    sizes: tuple
    log_wbar: list
    group_resample_times: tuple = ()
    wall_time: float = field(default=0.0, compare=False)

    @property
    def n_resamples(self) -> int:
        return len(self.resample_times)


@dataclass
class FilterOutput:
    estimate: object
    var_ancestral: object
    m: int
    size: int
    n_groups: int = 1
    var_split: object = None
    var_gb: object = None
    diagnostics: Diagnostics | None = None
    psi: np.ndarray | None = field(default=None, repr=False, compare=False)
    population: Population | None = field(default=None, repr=False, compare=False)

    @property
    def se_ancestral(self):
        return None if self.var_ancestral is None else np.sqrt(np.asarray(self.var_ancestral) / self.m)

    @property
    def se_split(self):
        return None if self.var_split is None else np.sqrt(np.asarray(self.var_split) / self.m)

    @property
    def se_gb(self):
        return None if self.var_gb is None else np.sqrt(np.asarray(self.var_gb))

    def as_record(self) -> dict:
        """Plain-Python view of the numerical fields, for comparison or export."""
        def plain(x):
            if x is None:
                return None
            x = np.asarray(x, dtype=float)
            return x.tolist()
        d = self.diagnostics
        return {
            "estimate": plain(self.estimate),
            "var_ancestral": plain(self.var_ancestral),
            "var_split": plain(self.var_split),
            "var_gb": plain(self.var_gb),
            "m": self.m,
            "size": self.size,
            "n_groups": self.n_groups,
            "cv2": [plain(c) for c in d.cv2] if d else None,
            "resample_times": list(d.resample_times) if d else None,
            "sizes": list(d.sizes) if d else None,
            "log_wbar": [plain(c) for c in d.log_wbar] if d else None,
        }


def summarize(pop: Population, psi, mu=None, gilks_berzuini=True, wall_time=0.0,
              keep_population=True) -> FilterOutput:
    psi = np.asarray(psi, dtype=float)
    if psi.shape[0] != pop.size:
        raise InvalidConfigurationError("functional returned the wrong number of values")
    estimate = point_estimate(pop, psi)
    centre = estimate if mu is None else mu
    single = pop.m < 2
    var_a = None if single else var_ancestral(pop, psi, centre)
    var_s = var_sample_split(pop, psi) if pop.k >= 2 else None
    var_g = var_gilks_berzuini(pop, psi, centre) if (gilks_berzuini and not single) else None
    squeeze = (lambda c: float(c[0])) if pop.k == 1 else (lambda c: c.copy())
    diag = Diagnostics(
        cv2=[squeeze(c) for c in pop.cv2_trace],
        resample_times=tuple(pop.resample_times),
        sizes=tuple(pop.size_trace),
        log_wbar=[squeeze(c) for c in pop.log_wbar_trace],
        group_resample_times=tuple(tuple(g) for g in pop.group_resample_times),
        wall_time=wall_time,
    )
    return FilterOutput(
        estimate=estimate, var_ancestral=var_a, var_split=var_s, var_gb=var_g,
        m=pop.m, size=pop.size, n_groups=pop.k, diagnostics=diag, psi=psi,
        population=pop if keep_population else None,
    )
