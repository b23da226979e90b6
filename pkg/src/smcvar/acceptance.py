"""Acceptance suites.  Each suite returns a list of :class:`CriterionResult`.

Suites: ``identities``, ``micro-oracle``, ``clt``, ``coverage``,
``residual-vs-bootstrap``, ``tau-stability``, ``residual-law``.  Every suite
takes a master ``seed`` and is deterministic given it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import benchmarks, oracle
from .engine import run_filter, weight_identity_residual
from .errors import OracleError
from .experiment import (ExperimentConfig, aggregate_rows, derive_seed, read_rows, rows_to_csv,
                         run_rows, two_state_hmm)
from .model import ShiftedWeights
from .resampling import Always, CvThreshold, Scheme, gamma_fn, residual_bernoulli_counts


@dataclass
class CriterionResult:
    name: str
    passed: bool
    measured: object
    tolerance: str
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.name}: measured={self.measured} tolerance={self.tolerance}"
        return text + (f" ({self.detail})" if self.detail else "")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["measured"] = _plain(d["measured"])
        return d


def _plain(x):
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(b), 1e-300)
    return float(np.max(np.abs(a - b) / scale))


def random_dhmm(d: int, T: int, seed, n_obs: int = 3) -> oracle.DiscreteHMM:
    """A random ``d``-state instance with a non-uniform proposal and a path functional."""
    rng = np.random.default_rng(seed)
    init = rng.dirichlet(np.ones(d))
    trans = rng.dirichlet(np.ones(d), size=(T - 1, d))
    prop = 0.5 * trans + 0.5 * rng.dirichlet(np.ones(d), size=(T - 1, d))
    emission = rng.uniform(0.05, 1.0, size=(T, d))
    psi = rng.normal(size=(d,) * T)
    return oracle.DiscreteHMM(init, trans, emission, proposal_initial=rng.dirichlet(np.ones(d)),
                              proposal=prop, psi=psi)


# ---- 1. algebraic identities ----------------------------------------------------


def suite_identities(seed: int = 0) -> list:
    results = []
    dhmm = random_dhmm(3, 6, np.random.SeedSequence([seed, 1]))
    model = dhmm.to_model()

    worst = [0.0]

    def check(pop):
        worst[0] = max(worst[0], float(np.max(np.abs(weight_identity_residual(pop)))))

    cp_y = benchmarks.simulate_changepoint(60, 0.05, 1.0, np.random.SeedSequence([seed, 2]))[1]
    cp = benchmarks.changepoint_model(0.05, 1.0, cp_y)
    for mdl in (model, cp):
        for rep in range(5):
            run_filter(mdl, 500, Always(), seed=np.random.SeedSequence([seed, 3, rep]), on_stage=check,
                       gilks_berzuini=False)
    results.append(CriterionResult(
        "identities/weight-H-ratio", worst[0] <= 1e-12, f"{worst[0]:.3e}", "<= 1e-12 (log scale)",
        "m W_t = H_{t-1} / H~_t at every stage, oracle and change-point models"))

    worst_rel = 0.0
    psi_T = dhmm.psi_T
    log_eta_T = math.log(dhmm.eta[-1])
    for rep in range(20):
        out = run_filter(model, 200, Always(), seed=np.random.SeedSequence([seed, 4, rep]),
                         gilks_berzuini=False)
        pop = out.population
        lhs = out.estimate - psi_T
        proto = oracle.prototype_estimate(pop, out.psi - psi_T, log_eta_T)
        rhs = math.exp(log_eta_T - float(pop.log_wbar_prefix[0])) * proto
        worst_rel = max(worst_rel, abs(lhs - rhs) / abs(lhs))
    results.append(CriterionResult(
        "identities/two-form-estimator", worst_rel <= 1e-10, f"{worst_rel:.3e}", "<= 1e-10 relative",
        "estimate - psi_T against the likelihood-ratio form, 20 runs"))

    worst_scale = 0.0
    cases = [(model, Always(), Scheme.MULTINOMIAL, 1), (model, CvThreshold(0.3), Scheme.RESIDUAL, 1),
             (cp, CvThreshold(1.0), Scheme.MULTINOMIAL, 2), (cp, Always(), Scheme.RESIDUAL, 1)]
    for idx, (mdl, pol, scheme, k) in enumerate(cases):
        for log_kappa in (-700.0, 5.0, 300.0):
            ss = np.random.SeedSequence([seed, 5, idx])
            a = run_filter(mdl, 400, pol, scheme, seed=ss, k=k).as_record()
            ss = np.random.SeedSequence([seed, 5, idx])
            b = run_filter(ShiftedWeights(mdl, log_kappa), 400, pol, scheme, seed=ss, k=k).as_record()
            for key in ("estimate", "var_ancestral", "var_split", "var_gb"):
                if a[key] is None:
                    continue
                worst_scale = max(worst_scale, _rel(b[key], a[key]))
            if a["resample_times"] != b["resample_times"] or a["sizes"] != b["sizes"]:
                worst_scale = math.inf
    results.append(CriterionResult(
        "identities/weight-scaling", worst_scale <= 1e-10, f"{worst_scale:.3e}", "<= 1e-10 relative",
        "all estimator outputs with every weight multiplied by kappa in {e^-700, e^5, e^300}"))
    return results


# ---- 2. exhaustive enumeration --------------------------------------------------


def micro_instance() -> oracle.DiscreteHMM:
    return two_state_hmm((0, 1))


def suite_micro_oracle(seed: int = 0) -> list:
    results = []
    dhmm = micro_instance()
    for m in (2, 3):
        try:
            chk = oracle.exhaustive_prototype_check(dhmm, m, tol=1e-12)
            err = abs(chk.mean_prototype - chk.psi_T)
            detail = (f"{chk.atoms} atoms, exact bias of the ratio estimator {chk.bias_filter:+.3e}")
        except OracleError as exc:
            err, detail = math.inf, str(exc)
        results.append(CriterionResult(
            f"micro-oracle/unbiased-m{m}", err <= 1e-12, f"{err:.3e}", "<= 1e-12", detail))
    return results


# ---- 3. CLT and consistency of the variance estimate -----------------------------


def clt_instance() -> oracle.DiscreteHMM:
    return two_state_hmm((0, 1, 1))


def suite_clt(seed: int = 0, m: int = 10_000, reps: int = 2000) -> list:
    dhmm = clt_instance()
    sigma2 = oracle.exact_sigma2(dhmm)
    model = dhmm.to_model()
    errs = np.empty(reps)
    var_hat = np.empty(reps)
    for r in range(reps):
        out = run_filter(model, m, Always(), seed=derive_seed(seed, r), gilks_berzuini=False,
                         keep_population=False)
        errs[r] = out.estimate - dhmm.psi_T
        var_hat[r] = out.var_ancestral
    scaled = math.sqrt(m) * errs
    sample_var = float(np.var(scaled, ddof=1))
    mean_hat = float(var_hat.mean())
    z = errs / np.sqrt(var_hat / m)
    ad = stats.anderson(z, dist="norm")
    crit = float(ad.critical_values[list(ad.significance_level).index(1.0)])
    rel_a = abs(sample_var / sigma2 - 1)
    rel_b = abs(mean_hat / sigma2 - 1)
    ctx = f"sigma2={sigma2:.6g}, m={m}, reps={reps}"
    return [
        CriterionResult("clt/sample-variance", rel_a <= 0.10, f"{sample_var:.6g} (rel {rel_a:.3f})",
                        "within 10% of sigma2", ctx),
        CriterionResult("clt/mean-variance-estimate", rel_b <= 0.10, f"{mean_hat:.6g} (rel {rel_b:.3f})",
                        "within 10% of sigma2", ctx),
        CriterionResult("clt/anderson-darling", float(ad.statistic) < crit, f"A2={ad.statistic:.4f}",
                        f"< {crit:.3f} (alpha 0.01)", "standardized by the estimated standard error"),
    ]


# ---- 4. coverage study ----------------------------------------------------------


def coverage_config(seed: int = 0, reps: int = 300) -> ExperimentConfig:
    return ExperimentConfig(model="changepoint", rho=0.01, xi=1.0, T=200, m=2000, policy="2",
                            scheme="multinomial", gb=True, replications=reps, seed=seed,
                            truth="oracle").validate()


def suite_coverage(seed: int = 0, reps: int = 300) -> list:
    cfg = coverage_config(seed, reps)
    rows = read_rows(rows_to_csv(run_rows(cfg)))
    summary = aggregate_rows(rows)
    cov = summary["components"][0]["coverage"]
    one, two = cov["ancestral"]["cover1se"], cov["ancestral"]["cover2se"]
    gb1 = cov["gb"]["cover1se"]
    ctx = f"{summary['n_ok']}/{reps} runs, mean resamplings {summary.get('mean_resamples', 0):.2f}"
    return [
        CriterionResult("coverage/ancestral-1se", 0.60 <= one <= 0.76, f"{one:.3f}", "in [0.60, 0.76]", ctx),
        CriterionResult("coverage/ancestral-2se", 0.91 <= two <= 0.985, f"{two:.3f}", "in [0.91, 0.985]", ctx),
        CriterionResult("coverage/gilks-berzuini-1se", gb1 >= 0.90 and gb1 >= one, f"{gb1:.3f}",
                        ">= 0.90 and >= ancestral 1-se", ctx),
    ]


# ---- 5. residual versus bootstrap on the bearings model --------------------------

BEARINGS_HORIZONS = (4, 8, 12, 16, 20, 24)
BEARINGS_VARIANTS = {
    "boot(P)": ("prior", Scheme.MULTINOMIAL),
    "boot": ("informed", Scheme.MULTINOMIAL),
    "resid": ("informed", Scheme.RESIDUAL),
}


def bearings_standard_errors(seed: int = 0, reps: int = 50, m: int = 2000,
                             horizons=BEARINGS_HORIZONS) -> dict:
    """Mean sample-splitting standard error per variant and horizon, shape ``(len(horizons), 2)``.

    Each replication simulates one bearing series of the longest horizon and
    runs every variant on its prefixes, so variants are compared on the same
    data.
    """
    sums = {v: np.zeros((len(horizons), 2)) for v in BEARINGS_VARIANTS}
    for r in range(reps):
        rep_seed = derive_seed(seed, r)
        _, y = benchmarks.simulate_bearings(max(horizons), np.random.SeedSequence([rep_seed, 0]))
        for h, T in enumerate(horizons):
            for v_idx, (name, (first, scheme)) in enumerate(BEARINGS_VARIANTS.items()):
                model = benchmarks.bearings_model(y, horizon=T, first_stage=first)
                out = run_filter(model, m, Always(), scheme,
                                 seed=np.random.SeedSequence([rep_seed, 1, T, v_idx]), k=2,
                                 gilks_berzuini=False, keep_population=False)
                sums[name][h] += out.se_split
    return {name: s / reps for name, s in sums.items()}


def suite_residual_vs_bootstrap(seed: int = 0, reps: int = 50, m: int = 2000) -> list:
    se = bearings_standard_errors(seed, reps, m)
    resid_wins = np.all(se["resid"] <= se["boot"], axis=1)
    informed_wins = np.all(se["boot"] < se["boot(P)"], axis=1)
    table = "; ".join(
        f"T={T}: " + ", ".join(f"{v}=({se[v][h, 0]:.4f},{se[v][h, 1]:.4f})" for v in se)
        for h, T in enumerate(BEARINGS_HORIZONS))
    return [
        CriterionResult("residual-vs-bootstrap/resid-le-boot", int(resid_wins.sum()) >= 4,
                        f"{int(resid_wins.sum())}/6 horizons", ">= 4 of 6 (both coordinates)", table),
        CriterionResult("residual-vs-bootstrap/informed-lt-prior", int(informed_wins.sum()) >= 5,
                        f"{int(informed_wins.sum())}/6 horizons", ">= 5 of 6 (both coordinates)"),
    ]


# ---- 6. stability of the resampling times ---------------------------------------


def tau_instance():
    """Oracle model and a threshold whose limiting schedule has a wide margin.

    Returns ``(dhmm, c, tau_star, margin)`` where ``margin`` is the smallest
    distance between ``c`` and a limiting cv^2 consulted along the schedule.
    """
    dhmm = two_state_hmm((0, 1, 1, 0, 1, 1))
    best = None
    for c in np.round(np.arange(0.05, 2.0, 0.05), 2):
        taus, margins, since = [], [], 0
        for t in range(1, dhmm.horizon):
            value = oracle.limiting_cv2(dhmm, since, t)
            margins.append(abs(value - c))
            if value >= c:
                taus.append(t)
                since = t
        if not 0 < len(taus) < dhmm.horizon - 1:
            continue
        if best is None or min(margins) > best[3]:
            best = (dhmm, float(c), tuple(taus), min(margins))
    dhmm, c, taus, margin = best
    if oracle.exact_tau_star(dhmm, c) != taus:
        raise OracleError("threshold scan disagrees with exact_tau_star")
    return best


def suite_tau_stability(seed: int = 0, m: int = 100_000, reps: int = 200) -> list:
    dhmm, c, tau_star, margin = tau_instance()
    model = dhmm.to_model()
    hits = 0
    for r in range(reps):
        out = run_filter(model, m, CvThreshold(c), seed=derive_seed(seed, r), gilks_berzuini=False,
                         keep_population=False)
        hits += tuple(out.diagnostics.resample_times) == tau_star
    return [CriterionResult("tau-stability/matches-limit", hits >= 195, f"{hits}/{reps}", ">= 195",
                            f"c={c}, tau*={tau_star}, margin={margin:.3f}")]


# ---- 7. residual Bernoulli law --------------------------------------------------


def suite_residual_law(seed: int = 0, draws: int = 100_000) -> list:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    v = rng.dirichlet(np.ones(5))
    M = 7
    counts = np.stack([residual_bernoulli_counts(v, M, rng) for _ in range(draws)])
    base = np.floor(M * v)
    support_ok = bool(np.all((counts == base) | (counts == base + 1)))
    frac = M * v - base
    se = np.sqrt(frac * (1 - frac) / draws)
    z_mean = float(np.max(np.abs(counts.mean(axis=0) - M * v) / se))

    pair = np.stack([residual_bernoulli_counts([0.5, 0.5], 3, rng) for _ in range(draws)])
    outcomes = [(1, 1), (1, 2), (2, 1), (2, 2)]
    freqs = np.array([np.mean((pair[:, 0] == a) & (pair[:, 1] == b)) for a, b in outcomes])
    z_pair = float(np.max(np.abs(freqs - 0.25) / math.sqrt(0.25 * 0.75 / draws)))
    pair_support = bool(np.all(np.isin(pair, (1, 2))))

    gammas = {1.0: gamma_fn(1.0), 3.0: gamma_fn(3.0), 0.5: gamma_fn(0.5), 1.25: gamma_fn(1.25)}
    gamma_ok = (gammas[1.0] == 0.0 and gammas[3.0] == 0.0 and gammas[0.5] == 0.5
                and abs(gammas[1.25] - 0.15) <= 1e-15)
    return [
        CriterionResult("residual-law/support", support_ok and pair_support, support_ok and pair_support,
                        "every count in {floor(MV), floor(MV)+1}", f"{draws} draws"),
        CriterionResult("residual-law/expectation", z_mean <= 4, f"max |z| = {z_mean:.2f}", "<= 4 SE"),
        CriterionResult("residual-law/M3-uniform", z_pair <= 4,
                        f"freqs={np.round(freqs, 4).tolist()}, max |z| = {z_pair:.2f}", "<= 4 SE"),
        CriterionResult("residual-law/gamma-values", gamma_ok, {k: v for k, v in gammas.items()},
                        "0 at integers, 0.5 at 0.5, 0.15 at 1.25"),
    ]


SUITES = {
    "identities": suite_identities,
    "micro-oracle": suite_micro_oracle,
    "clt": suite_clt,
    "coverage": suite_coverage,
    "residual-vs-bootstrap": suite_residual_vs_bootstrap,
    "tau-stability": suite_tau_stability,
    "residual-law": suite_residual_law,
}
