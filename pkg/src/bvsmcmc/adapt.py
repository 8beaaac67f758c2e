"""Shared adaptive parameters and their update laws."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .proposals import DEFAULT_EPS, RateVector, inv_logit_eps, logit_eps, optimal_rates

__all__ = [
    "AdaptState",
    "KWBatch",
    "init_adapt",
    "rb_update",
    "rm_update",
    "kw_update",
    "asjd",
    "rm_step_size",
    "kw_gain",
    "kw_width",
    "clamp_logit",
]

DEFAULT_PI0 = 0.001


def rm_step_size(i: int) -> float:
    return float(i) ** -0.7


def kw_gain(i: int) -> float:
    return 1.0 / i


def kw_width(i: int) -> float:
    return float(i) ** -0.5


def clamp_logit(x: float, eps: float) -> float:
    """Keep a logit-scale scalar within the image of [2 eps, 1 - 2 eps]."""
    bound = logit_eps(1 - 2 * eps, eps)
    return float(np.clip(x, -bound, bound))


@dataclass(frozen=True, eq=False)
class AdaptState:
    pip_hat: np.ndarray
    pip_tilde: np.ndarray
    rates: RateVector
    zeta_logit: float
    xi_logit: float
    omega_logit: float
    iter: int = 0
    pi0: float = DEFAULT_PI0
    eps: float = DEFAULT_EPS
    tau: float = 0.65
    s: float = 5.0

    @property
    def zeta(self) -> float:
        return inv_logit_eps(self.zeta_logit, self.eps)

    @property
    def xi(self) -> float:
        return inv_logit_eps(self.xi_logit, self.eps)

    @property
    def omega(self) -> float:
        return inv_logit_eps(self.omega_logit, self.eps)


def init_adapt(
    p: int,
    pip_init: float | np.ndarray,
    *,
    zeta: float = 0.5,
    xi: float = 0.5,
    omega: float = 0.5,
    pi0: float = DEFAULT_PI0,
    eps: float = DEFAULT_EPS,
    tau: float = 0.65,
    s: float = 5.0,
) -> AdaptState:
    if not 0 < pi0 < 0.5:
        raise ValueError(f"pi0 must lie in (0, 1/2), got {pi0}")
    pip_hat = np.broadcast_to(np.asarray(pip_init, dtype=float), (p,)).copy()
    pip_tilde = pi0 + (1 - 2 * pi0) * pip_hat
    return AdaptState(
        pip_hat=pip_hat,
        pip_tilde=pip_tilde,
        rates=optimal_rates(pip_tilde, eps),
        zeta_logit=logit_eps(zeta, eps),
        xi_logit=logit_eps(xi, eps),
        omega_logit=logit_eps(omega, eps),
        pi0=pi0,
        eps=eps,
        tau=tau,
        s=s,
    )


def rb_update(adapt: AdaptState, flip_logits, refresh_rates: bool = True) -> AdaptState:
    """Fold one iteration of per-chain flip log-odds into the running PIP means.

    ``flip_logits`` has shape (L, p).  The running mean counts every chain at
    every iteration equally.  With ``refresh_rates`` false (adaptation frozen)
    only the estimate moves; pi_tilde and the rates stay put.
    """
    logits = np.atleast_2d(np.asarray(flip_logits, dtype=float))
    batch = expit(logits).mean(axis=0)
    n = adapt.iter
    pip_hat = adapt.pip_hat + (batch - adapt.pip_hat) / (n + 1) if n else batch
    pip_hat = np.clip(pip_hat, 0.0, 1.0)
    if not refresh_rates:
        return replace(adapt, pip_hat=pip_hat, iter=n + 1)
    pip_tilde = adapt.pi0 + (1 - 2 * adapt.pi0) * pip_hat
    return replace(
        adapt,
        pip_hat=pip_hat,
        pip_tilde=pip_tilde,
        rates=optimal_rates(pip_tilde, adapt.eps),
        iter=n + 1,
    )


def rm_update(logit_val: float, signal: float, target: float, phi_i: float, eps: float | None = None) -> float:
    """Robbins-Monro step ``logit + phi_i (signal - target)``.

    With ``eps`` given, the result is clamped so the natural-scale value stays
    inside [2 eps, 1 - 2 eps].
    """
    if phi_i <= 0:
        raise ValueError(f"step size must be positive, got {phi_i}")
    out = logit_val + phi_i * (signal - target)
    return clamp_logit(out, eps) if eps is not None else out


@dataclass(frozen=True)
class KWBatch:
    """One Kiefer-Wolfowitz iteration: chains split into +/- halves."""

    plus_ids: tuple[int, ...]
    minus_ids: tuple[int, ...]
    omega_plus: float
    omega_minus: float
    a_i: float
    c_i: float
    asjd_plus: float = 0.0
    asjd_minus: float = 0.0


def make_kw_batch(adapt: AdaptState, i: int, L: int, rng: np.random.Generator) -> KWBatch:
    """Randomly split ``L`` chains into two equal halves and perturb omega.

    The perturbation is applied on the logit_eps scale.  With odd ``L`` the
    leftover chain runs at the unperturbed omega and joins neither half.
    """
    if L < 2:
        raise ValueError("Kiefer-Wolfowitz adaptation needs at least two chains")
    perm = rng.permutation(L)
    half = L // 2
    c = kw_width(i)
    return KWBatch(
        plus_ids=tuple(sorted(int(x) for x in perm[:half])),
        minus_ids=tuple(sorted(int(x) for x in perm[half : 2 * half])),
        omega_plus=inv_logit_eps(adapt.omega_logit + c, adapt.eps),
        omega_minus=inv_logit_eps(adapt.omega_logit - c, adapt.eps),
        a_i=kw_gain(i),
        c_i=c,
    )


def kw_update(adapt: AdaptState, batch: KWBatch) -> AdaptState:
    if batch.c_i <= 0:
        raise ValueError(f"finite-difference width must be positive, got {batch.c_i}")
    grad = (batch.asjd_plus - batch.asjd_minus) / (2 * batch.c_i)
    return replace(adapt, omega_logit=clamp_logit(adapt.omega_logit + batch.a_i * grad, adapt.eps))


def asjd(step_results) -> float:
    """Mean of proposal Hamming distance times acceptance probability.

    For binary vectors the squared Euclidean jump equals the Hamming distance,
    so no extra square is taken.
    """
    results = list(step_results)
    if not results:
        raise ValueError("ASJD of an empty set of steps")
    return float(np.mean([r.hamming_jump * np.exp(r.log_accept_prob) for r in results]))
