"""Neighbourhood indicators, the thinning proposal and balancing functions."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "DEFAULT_EPS",
    "RateVector",
    "NeighbourhoodIndicator",
    "Balancing",
    "logit_eps",
    "inv_logit_eps",
    "optimal_rates",
    "sample_k",
    "logpmf_k",
    "thin_sample",
    "thin_logpmf",
    "balance",
]

DEFAULT_EPS = 0.001


def logit_eps(x, eps: float = DEFAULT_EPS):
    """``log(x - eps) - log(1 - x - eps)`` on the open interval (eps, 1 - eps)."""
    if not 0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 1/2), got {eps}")
    x = np.asarray(x, dtype=float)
    if np.any((x <= eps) | (x >= 1 - eps)):
        raise ValueError(f"logit_eps argument outside ({eps}, {1 - eps}): {x}")
    out = np.log(x - eps) - np.log(1 - x - eps)
    return float(out) if out.ndim == 0 else out


def inv_logit_eps(y, eps: float = DEFAULT_EPS):
    y = np.asarray(y, dtype=float)
    out = eps + (1 - 2 * eps) / (1 + np.exp(-y))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class RateVector:
    """Per-variable addition (A) and deletion (D) rates."""

    A: np.ndarray
    D: np.ndarray

    def at(self, gamma: np.ndarray) -> np.ndarray:
        """Rate that applies to each position given its current inclusion."""
        return np.where(gamma, self.D, self.A)


def optimal_rates(pi_tilde, eps: float = DEFAULT_EPS) -> RateVector:
    pi_tilde = np.asarray(pi_tilde, dtype=float)
    odds = pi_tilde / (1 - pi_tilde)
    A = np.clip(np.minimum(1.0, odds), eps, 1 - eps)
    D = np.clip(np.minimum(1.0, 1.0 / odds), eps, 1 - eps)
    return RateVector(A=A, D=D)


@dataclass(frozen=True, eq=False)
class NeighbourhoodIndicator:
    """Indicator ``k`` plus the (randomly ordered) list ``K`` of its set positions."""

    k: np.ndarray
    K: np.ndarray

    @property
    def p_k(self) -> int:
        return self.K.size

    @classmethod
    def from_positions(cls, positions, p: int) -> "NeighbourhoodIndicator":
        K = np.asarray(positions, dtype=int)
        k = np.zeros(p, dtype=bool)
        k[K] = True
        return cls(k=k, K=K)


def sample_k(rates: RateVector, xi: float, gamma: np.ndarray, rng: np.random.Generator) -> NeighbourhoodIndicator:
    prob = xi * rates.at(gamma)
    k = rng.random(prob.size) < prob
    K = np.flatnonzero(k)
    if K.size > 1:
        K = rng.permutation(K)
    return NeighbourhoodIndicator(k=k, K=K)


def logpmf_k(rates: RateVector, xi: float, gamma: np.ndarray, k: np.ndarray) -> float:
    prob = xi * rates.at(gamma)
    k = np.asarray(k, dtype=bool)
    return float(np.sum(np.log(prob[k])) + np.sum(np.log1p(-prob[~k])))


def thin_sample(omega: float, k: NeighbourhoodIndicator, gamma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Flip each position of ``K`` independently with probability ``omega``."""
    gamma_new = gamma.copy()
    if k.p_k:
        flips = k.K[rng.random(k.p_k) < omega]
        gamma_new[flips] = ~gamma_new[flips]
    return gamma_new


def thin_logpmf(omega: float, k, gamma: np.ndarray, gamma_new: np.ndarray) -> float:
    kk = k.k if isinstance(k, NeighbourhoodIndicator) else np.asarray(k, dtype=bool)
    diff = np.asarray(gamma, dtype=bool) != np.asarray(gamma_new, dtype=bool)
    if np.any(diff & ~kk):
        return -np.inf
    d = int(diff.sum())
    p_k = int(kk.sum())
    return d * np.log(omega) + (p_k - d) * np.log1p(-omega)


class Balancing(str, Enum):
    """Balancing functions, each satisfying g(t) = t g(1/t)."""

    HASTINGS = "hastings"
    BARKER = "barker"
    SQRT = "sqrt"


def balance(fn, log_t):
    """``log g(t)`` evaluated from ``log t``; handles +-inf."""
    fn = Balancing(fn)
    log_t = np.asarray(log_t, dtype=float)
    if fn is Balancing.HASTINGS:
        out = np.minimum(0.0, log_t)
    elif fn is Balancing.BARKER:
        # log(t / (1 + t)) = -log(1 + 1/t)
        out = -np.logaddexp(0.0, -log_t)
    else:
        out = 0.5 * log_t
    return float(out) if out.ndim == 0 else out
