"""Metropolis-Hastings kernels over inclusion indicators and the multi-chain driver.

Every step function is a pure function of the chain state, the frozen tuning
parameters and an RNG stream, so chains can be advanced in any order (or in
threads) without changing the output.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from . import adapt as adapt_mod
from .adapt import AdaptState, init_adapt, make_kw_batch
from .diagnostics import RunOutput
from .linmodel import (
    Dataset,
    ModelState,
    PriorSpec,
    SingularModelError,
    flip_model_state,
    make_model_state,
    move_model_state,
    rb_flip_logits,
)
from .proposals import (
    DEFAULT_EPS,
    Balancing,
    NeighbourhoodIndicator,
    RateVector,
    balance,
    logpmf_k,
    sample_k,
    thin_logpmf,
    thin_sample,
)

__all__ = [
    "SAMPLERS",
    "DEFAULT_TAU",
    "StepResult",
    "RunConfig",
    "ChainEnsemble",
    "init_ensemble",
    "ads_step",
    "asi_step",
    "arn_step",
    "arn_log_ratio",
    "arni_step",
    "parni_step",
    "parni_propose",
    "run_chains",
]

SAMPLERS = ("ads", "asi", "arn", "arni", "parni_rm", "parni_kw")
# Acceptance targets: 0.234 for the uninformed kernels, 0.65 for the informed ones.
DEFAULT_TAU = {"asi": 0.234, "arn": 0.234, "arni": 0.65, "parni_rm": 0.65, "parni_kw": 0.65, "ads": 0.234}


@dataclass(frozen=True, eq=False)
class StepResult:
    state: ModelState
    proposed: np.ndarray
    accepted: bool
    log_accept_prob: float
    hamming_jump: int
    k_size: int = 0
    models_evaluated: int = 0


def _try_move(state, gamma_new, data, prior):
    try:
        return move_model_state(state, gamma_new, data, prior)
    except SingularModelError:
        return None


def _try_flip(state, j, data, prior):
    try:
        return flip_model_state(state, j, data, prior)
    except SingularModelError:
        return None


def _finish_mh(state, cand, gamma_new, log_ratio, rng, **extra) -> StepResult:
    log_alpha = min(0.0, log_ratio) if cand is not None else -np.inf
    if np.isnan(log_alpha):
        log_alpha = -np.inf
    accepted = bool(np.log(rng.random()) < log_alpha)
    jump = int(np.count_nonzero(gamma_new != state.gamma))
    return StepResult(
        state=cand if accepted else state,
        proposed=gamma_new,
        accepted=accepted,
        log_accept_prob=float(log_alpha),
        hamming_jump=jump,
        **extra,
    )


def _reject(state, **extra) -> StepResult:
    return StepResult(
        state=state, proposed=state.gamma.copy(), accepted=False, log_accept_prob=-np.inf, hamming_jump=0, **extra
    )


# --------------------------------------------------------------------------- ADS


def ads_step(state: ModelState, data: Dataset, prior: PriorSpec, rng: np.random.Generator) -> StepResult:
    """Add-delete-swap: pick a move type uniformly, then a uniform neighbour.

    A swap picks an (active, inactive) pair uniformly.  Infeasible moves
    (delete or swap from the empty model, add or swap at the full model) stay
    put and count as rejections.
    """
    p, m = data.p, state.p_gamma
    move = int(rng.integers(3))
    gamma = state.gamma
    if move == 0:
        if m == p:
            return _reject(state)
        j = int(rng.choice(np.flatnonzero(~gamma)))
        log_nbhd = np.log(p - m) - np.log(m + 1)
        cand = _try_flip(state, j, data, prior)
    elif move == 1:
        if m == 0:
            return _reject(state)
        j = int(rng.choice(state.active))
        log_nbhd = np.log(m) - np.log(p - m + 1)
        cand = _try_flip(state, j, data, prior)
    else:
        if m == 0 or m == p:
            return _reject(state)
        i = int(rng.choice(state.active))
        j = int(rng.choice(np.flatnonzero(~gamma)))
        log_nbhd = 0.0
        cand = _try_flip(state, i, data, prior)
        cand = _try_flip(cand, j, data, prior) if cand is not None else None
        if cand is None:
            gamma_new = gamma.copy()
            gamma_new[[i, j]] = ~gamma_new[[i, j]]
            return _finish_mh(state, None, gamma_new, -np.inf, rng, models_evaluated=1)
    if cand is None:
        gamma_new = gamma.copy()
        gamma_new[j] = ~gamma_new[j]
        return _finish_mh(state, None, gamma_new, -np.inf, rng, models_evaluated=1)
    log_ratio = cand.log_post - state.log_post + log_nbhd
    return _finish_mh(state, cand, cand.gamma, log_ratio, rng, models_evaluated=1)


# --------------------------------------------------------------------------- ASI / ARN


def asi_step(
    state: ModelState, data: Dataset, prior: PriorSpec, rates: RateVector, zeta: float, rng: np.random.Generator
) -> StepResult:
    """Independent flips with probability zeta*A_j (add) or zeta*D_j (delete)."""
    r = zeta * rates.at(state.gamma)
    flips = rng.random(r.size) < r
    gamma_new = state.gamma ^ flips
    if not flips.any():
        return _finish_mh(state, state, gamma_new, 0.0, rng)
    cand = _try_move(state, gamma_new, data, prior)
    if cand is None:
        return _finish_mh(state, None, gamma_new, -np.inf, rng, models_evaluated=1)
    # unflipped positions contribute equal factors forwards and backwards
    r_back = zeta * rates.at(gamma_new)
    log_q_ratio = float(np.sum(np.log(r_back[flips]) - np.log(r[flips])))
    return _finish_mh(state, cand, gamma_new, cand.log_post - state.log_post + log_q_ratio, rng, models_evaluated=1)


def arn_step(
    state: ModelState,
    data: Dataset,
    prior: PriorSpec,
    rates: RateVector,
    xi: float,
    omega: float,
    rng: np.random.Generator,
) -> StepResult:
    """Random neighbourhood from the scaled rates, then uniform-rate thinning."""
    k = sample_k(rates, xi, state.gamma, rng)
    gamma_new = thin_sample(omega, k, state.gamma, rng)
    if k.p_k == 0 or not np.any(gamma_new != state.gamma):
        return _finish_mh(state, state, gamma_new, 0.0, rng, k_size=k.p_k)
    cand = _try_move(state, gamma_new, data, prior)
    if cand is None:
        return _finish_mh(state, None, gamma_new, -np.inf, rng, k_size=k.p_k, models_evaluated=1)
    log_ratio = arn_log_ratio(state, cand, rates, xi, omega, k)
    return _finish_mh(state, cand, gamma_new, log_ratio, rng, k_size=k.p_k, models_evaluated=1)


def arn_log_ratio(state, cand, rates: RateVector, xi: float, omega: float, k) -> float:
    """Log MH ratio of an ARN move from ``state`` to ``cand`` through neighbourhood ``k``."""
    kk = k.k if isinstance(k, NeighbourhoodIndicator) else np.asarray(k, dtype=bool)
    return (
        cand.log_post
        + logpmf_k(rates, xi, cand.gamma, kk)
        + thin_logpmf(omega, kk, cand.gamma, state.gamma)
        - state.log_post
        - logpmf_k(rates, xi, state.gamma, kk)
        - thin_logpmf(omega, kk, state.gamma, cand.gamma)
    )


# --------------------------------------------------------------------------- ARNI


def prob_size_exceeds(prob: np.ndarray, max_size: int) -> float:
    """P(sum of independent Bernoulli(prob) > max_size), by dynamic programming."""
    dist = np.zeros(max_size + 2)
    dist[0] = 1.0
    for q in prob:
        shifted = dist * q
        dist = dist * (1 - q)
        dist[1:] += shifted[:-1]
        dist[-1] += shifted[-1]
    return float(min(1.0, max(0.0, dist[-1])))


def _neighbourhood_states(state, K, data, prior):
    """States for every model in N(gamma, k), indexed by flip pattern over ``K``.

    Bit r of the index says whether position ``K[r]`` is flipped.  Models are
    visited in Gray-code order so each costs one flip.
    """
    n_models = 1 << K.size
    states = [None] * n_models
    states[0] = state
    cur, code = state, 0
    gamma = state.gamma.copy()
    for i in range(1, n_models):
        r = (i & -i).bit_length() - 1
        j = int(K[r])
        gamma[j] = not gamma[j]
        code ^= 1 << r
        try:
            cur = make_model_state(data, prior, gamma) if cur is None else flip_model_state(cur, j, data, prior)
        except SingularModelError:
            cur = None
        states[code] = cur
    return states


def arni_step(
    state: ModelState,
    data: Dataset,
    prior: PriorSpec,
    rates: RateVector,
    xi: float,
    omega: float,
    rng: np.random.Generator,
    fn=Balancing.HASTINGS,
    max_pk: int = 12,
) -> StepResult:
    """Random neighbourhood with a locally balanced proposal over all of N(gamma, k).

    Neighbourhoods larger than ``max_pk`` are redrawn once and otherwise the
    step stays put.  The redraw changes the effective distribution of k to
    p(k|gamma) (1 + P(p_k > max_pk | gamma)), and that factor enters the
    acceptance ratio.
    """
    k = sample_k(rates, xi, state.gamma, rng)
    if k.p_k > max_pk:
        k = sample_k(rates, xi, state.gamma, rng)
        if k.p_k > max_pk:
            return _reject(state, k_size=k.p_k)
    if k.p_k == 0:
        return _finish_mh(state, state, state.gamma.copy(), 0.0, rng)

    K = k.K
    n_models = 1 << K.size
    states = _neighbourhood_states(state, K, data, prior)
    codes = np.arange(n_models)
    bits = (codes[:, None] >> np.arange(K.size)) & 1
    flipped = bits.astype(bool) ^ state.gamma[K]
    log_r = np.log(xi * np.where(flipped, rates.D[K], rates.A[K]))
    # log pi(gamma*) + log p(k | gamma*), up to terms shared by the whole neighbourhood
    t = np.array([s.log_post if s is not None else -np.inf for s in states]) + log_r.sum(axis=1)
    hamming = bits.sum(axis=1)
    log_w = balance(fn, t - t[0]) + hamming * np.log(omega) + (K.size - hamming) * np.log1p(-omega)
    log_Z = logsumexp(log_w)
    probs = np.exp(log_w - log_Z)
    c = int(rng.choice(n_models, p=probs / probs.sum()))
    cand = states[c]
    gamma_new = state.gamma.copy()
    gamma_new[K] = flipped[c]
    if c == 0:
        return _finish_mh(state, state, gamma_new, 0.0, rng, k_size=K.size, models_evaluated=n_models - 1)

    hamming_back = np.array([bin(x ^ c).count("1") for x in codes])
    log_w_back = balance(fn, t - t[c]) + hamming_back * np.log(omega) + (K.size - hamming_back) * np.log1p(-omega)
    log_Z_back = logsumexp(log_w_back)
    log_ratio = (t[c] - t[0]) + (log_w_back[0] - log_Z_back) - (log_w[c] - log_Z)
    if max_pk < data.p:
        log_ratio += np.log1p(prob_size_exceeds(xi * rates.at(gamma_new), max_pk)) - np.log1p(
            prob_size_exceeds(xi * rates.at(state.gamma), max_pk)
        )
    return _finish_mh(state, cand, gamma_new, log_ratio, rng, k_size=K.size, models_evaluated=n_models - 1)


# --------------------------------------------------------------------------- PARNI


@dataclass(frozen=True, eq=False)
class ParniProposal:
    """Forward path of a point-wise proposal.

    ``log_Z`` and ``log_Z_rev`` hold, for each forward position r, the log
    normalising constant from gamma(r-1) and the one the reversed move uses
    over the same two-model neighbourhood (from gamma(r)).
    """

    k: NeighbourhoodIndicator
    states: list
    flips: np.ndarray
    log_Z: np.ndarray
    log_Z_rev: np.ndarray

    @property
    def final(self):
        return self.states[-1]

    @property
    def log_accept_ratio(self) -> float:
        return float(np.sum(self.log_Z) - np.sum(self.log_Z_rev))


def parni_propose(
    state: ModelState,
    data: Dataset,
    prior: PriorSpec,
    rates: RateVector,
    omega: float,
    k: NeighbourhoodIndicator,
    rng: np.random.Generator | None,
    fn=Balancing.HASTINGS,
    choices=None,
) -> ParniProposal:
    """Walk ``K`` in order, keeping or flipping each position by its balanced weight.

    ``choices`` forces the keep/flip decisions (used to score a given path).
    """
    log_keep = np.log1p(-omega) + balance(fn, 0.0)
    log_om = np.log(omega)
    cur = state
    states = [state]
    pk = k.p_k
    flips = np.zeros(pk, dtype=bool)
    log_Z = np.empty(pk)
    log_Z_rev = np.empty(pk)
    for r, j in enumerate(k.K):
        j = int(j)
        cand = _try_flip(cur, j, data, prior)
        if cand is None:
            delta = -np.inf
        else:
            inc = cur.gamma[j]
            # p(e_j | gamma) differs between the two models only through position j
            delta = cand.log_post - cur.log_post + np.log(rates.A[j] if inc else rates.D[j]) - np.log(
                rates.D[j] if inc else rates.A[j]
            )
        log_flip = log_om + balance(fn, delta)
        log_Z[r] = np.logaddexp(log_keep, log_flip)
        if choices is None:
            flip = bool(rng.random() < np.exp(log_flip - log_Z[r]))
        else:
            flip = bool(choices[r])
        if flip:
            flips[r] = True
            log_Z_rev[r] = np.logaddexp(log_keep, log_om + balance(fn, -delta))
            cur = cand
        else:
            log_Z_rev[r] = log_Z[r]
        states.append(cur)
    return ParniProposal(k=k, states=states, flips=flips, log_Z=log_Z, log_Z_rev=log_Z_rev)


def parni_step(
    state: ModelState,
    data: Dataset,
    prior: PriorSpec,
    rates: RateVector,
    omega: float,
    rng: np.random.Generator,
    fn=Balancing.HASTINGS,
) -> StepResult:
    """Point-wise informed proposal along a random ordering of the neighbourhood."""
    k = sample_k(rates, 1.0, state.gamma, rng)
    if k.p_k == 0:
        return _finish_mh(state, state, state.gamma.copy(), 0.0, rng)
    prop = parni_propose(state, data, prior, rates, omega, k, rng, fn)
    final = prop.final
    if final is None:
        gamma_new = state.gamma.copy()
        gamma_new[k.K[prop.flips]] ^= True
        return _finish_mh(state, None, gamma_new, -np.inf, rng, k_size=k.p_k, models_evaluated=k.p_k)
    return _finish_mh(
        state, final, final.gamma, prop.log_accept_ratio, rng, k_size=k.p_k, models_evaluated=k.p_k
    )


# --------------------------------------------------------------------------- driver


@dataclass
class RunConfig:
    sampler: str = "parni_kw"
    iterations: int = 5000
    burn_in: int = 1000
    balancing: str = "hastings"
    tau: float | None = None
    s: float = 5.0
    max_pk: int = 12
    time_budget_s: float | None = None
    workers: int = 1
    keep_trace: bool = True

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; choose from {', '.join(SAMPLERS)}")
        Balancing(self.balancing)
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError(f"burn_in must lie in [0, iterations), got {self.burn_in} with {self.iterations} iterations")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    @property
    def target_accept(self) -> float:
        return DEFAULT_TAU[self.sampler] if self.tau is None else self.tau


@dataclass
class ChainEnsemble:
    states: list
    adapt: AdaptState
    rngs: list
    master_rng: np.random.Generator
    seed: int = 0

    @property
    def L(self) -> int:
        return len(self.states)


def init_ensemble(
    data: Dataset,
    prior: PriorSpec,
    L: int,
    seed: int,
    *,
    tau: float = 0.65,
    s: float = 5.0,
    pi0: float = adapt_mod.DEFAULT_PI0,
    eps: float = DEFAULT_EPS,
    gamma_init=None,
) -> ChainEnsemble:
    """L chains started at ``gamma_init`` (default: empty model), one RNG stream each."""
    if L < 1:
        raise ValueError("need at least one chain")
    children = np.random.SeedSequence(seed).spawn(L + 1)
    rngs = [np.random.default_rng(c) for c in children[:L]]
    gamma0 = np.zeros(data.p, dtype=bool) if gamma_init is None else np.asarray(gamma_init, dtype=bool)
    state0 = make_model_state(data, prior, gamma0)
    adapt = init_adapt(data.p, prior.prior_inclusion(), pi0=pi0, eps=eps, tau=tau, s=s)
    return ChainEnsemble(
        states=[state0] * L, adapt=adapt, rngs=rngs, master_rng=np.random.default_rng(children[L]), seed=seed
    )


class _Trace:
    """Per-(iteration, chain) records plus per-iteration summaries."""

    fields = ("log_post", "p_gamma", "accepted", "log_accept_prob", "hamming", "k_size", "omega", "zeta_or_xi")

    def __init__(self, keep: bool):
        self.keep = keep
        self.rows = {f: [] for f in self.fields}
        self.acc = []
        self.alpha = []
        self.sjd = []

    def push(self, results, omegas, scale):
        alpha = np.exp([r.log_accept_prob for r in results])
        self.acc.append(np.mean([r.accepted for r in results]))
        self.alpha.append(alpha.mean())
        self.sjd.append(np.mean([r.hamming_jump for r in results] * alpha))
        if not self.keep:
            return
        rows = self.rows
        rows["log_post"].append([r.state.log_post for r in results])
        rows["p_gamma"].append([r.state.p_gamma for r in results])
        rows["accepted"].append([r.accepted for r in results])
        rows["log_accept_prob"].append([r.log_accept_prob for r in results])
        rows["hamming"].append([r.hamming_jump for r in results])
        rows["k_size"].append([r.k_size for r in results])
        rows["omega"].append(omegas)
        rows["zeta_or_xi"].append([scale] * len(results))

    def arrays(self) -> dict | None:
        if not self.keep:
            return None
        dtypes = {"p_gamma": int, "accepted": bool, "hamming": int, "k_size": int}
        return {f: np.array(v, dtype=dtypes.get(f, float)) for f, v in self.rows.items()}


def _chain_work(sampler, state, data, prior, adapt, omega, cfg, rng):
    rates = adapt.rates
    if sampler == "ads":
        res = ads_step(state, data, prior, rng)
    elif sampler == "asi":
        res = asi_step(state, data, prior, rates, adapt.zeta, rng)
    elif sampler == "arn":
        res = arn_step(state, data, prior, rates, adapt.xi, omega, rng)
    elif sampler == "arni":
        res = arni_step(state, data, prior, rates, adapt.xi, omega, rng, cfg.balancing, cfg.max_pk)
    else:
        res = parni_step(state, data, prior, rates, omega, rng, cfg.balancing)
    return res, rb_flip_logits(res.state, data, prior)


def _scale_param(sampler, adapt):
    if sampler == "asi":
        return adapt.zeta
    if sampler in ("arn", "arni"):
        return adapt.xi
    if sampler.startswith("parni"):
        return 1.0
    return float("nan")


def run_chains(ensemble: ChainEnsemble, cfg: RunConfig, data: Dataset, prior: PriorSpec, progress=None) -> RunOutput:
    """Advance all chains in lock-step with one shared adaptation update per iteration.

    Chains within an iteration see the same frozen snapshot of the adaptive
    parameters; updates are folded in afterwards in chain order, so the result
    does not depend on ``cfg.workers``.  Adaptation of the proposal stops after
    ``cfg.burn_in`` iterations; the Rao-Blackwellised PIP estimate keeps
    accumulating to the end.
    """
    sampler = cfg.sampler
    L = ensemble.L
    if sampler == "parni_kw" and L < 2:
        raise ValueError("parni_kw needs L >= 2 chains")
    tau = cfg.target_accept
    adapt = ensemble.adapt
    states = list(ensemble.states)
    trace = _Trace(cfg.keep_trace)
    freq = np.zeros(data.p)
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    omega_path = []
    t0 = time.perf_counter()
    done = 0
    try:
        for i in range(1, cfg.iterations + 1):
            adapting = i <= cfg.burn_in
            batch = None
            omegas = [adapt.omega] * L
            if sampler == "parni_kw" and adapting:
                batch = make_kw_batch(adapt, i, L, ensemble.master_rng)
                for l in batch.plus_ids:
                    omegas[l] = batch.omega_plus
                for l in batch.minus_ids:
                    omegas[l] = batch.omega_minus
            args = [(sampler, states[l], data, prior, adapt, omegas[l], cfg, ensemble.rngs[l]) for l in range(L)]
            if pool is None:
                out = [_chain_work(*a) for a in args]
            else:
                out = list(pool.map(lambda a: _chain_work(*a), args))
            results = [o[0] for o in out]
            states = [r.state for r in results]
            for s_ in states:
                freq[s_.gamma] += 1
            trace.push(results, omegas, _scale_param(sampler, adapt))
            omega_path.append(adapt.omega)

            adapt = adapt_mod.rb_update(adapt, np.stack([o[1] for o in out]), refresh_rates=adapting)
            if adapting:
                adapt = _adapt_scalars(sampler, adapt, results, batch, i, tau, cfg.s)
            done = i
            if progress is not None:
                progress(i, adapt)
            if cfg.time_budget_s is not None and time.perf_counter() - t0 > cfg.time_budget_s:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    wall = time.perf_counter() - t0
    ensemble.states = states
    ensemble.adapt = adapt
    burn = min(cfg.burn_in, done - 1)
    return RunOutput(
        sampler=sampler,
        pip_estimate=adapt.pip_hat.copy(),
        pip_freq=freq / (done * L),
        acceptance_rate=float(np.mean(trace.acc[burn:])),
        mean_accept_prob=float(np.mean(trace.alpha[burn:])),
        mean_asjd=float(np.mean(trace.sjd[burn:])),
        trace=trace.arrays(),
        wall_time=wall,
        iterations=done,
        burn_in=cfg.burn_in,
        L=L,
        omega_path=np.array(omega_path),
        adapt=adapt,
    )


def _adapt_scalars(sampler, adapt, results, batch, i, tau, s):
    eps = adapt.eps
    alpha = float(np.mean([np.exp(r.log_accept_prob) for r in results]))
    phi = adapt_mod.rm_step_size(i)
    if sampler == "asi":
        return replace(adapt, zeta_logit=adapt_mod.rm_update(adapt.zeta_logit, alpha, tau, phi, eps))
    if sampler in ("arn", "arni"):
        pk = float(np.mean([r.k_size for r in results]))
        return replace(
            adapt,
            # larger neighbourhoods than s must shrink xi, hence the swapped arguments
            xi_logit=adapt_mod.rm_update(adapt.xi_logit, s, pk, phi, eps),
            omega_logit=adapt_mod.rm_update(adapt.omega_logit, alpha, tau, phi, eps),
        )
    if sampler == "parni_rm":
        return replace(adapt, omega_logit=adapt_mod.rm_update(adapt.omega_logit, alpha, tau, phi, eps))
    if sampler == "parni_kw":
        batch = replace(
            batch,
            asjd_plus=adapt_mod.asjd(results[l] for l in batch.plus_ids),
            asjd_minus=adapt_mod.asjd(results[l] for l in batch.minus_ids),
        )
        return adapt_mod.kw_update(adapt, batch)
    return adapt
