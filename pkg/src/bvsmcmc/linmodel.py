"""Conjugate linear-model posterior over inclusion indicators.

The model is ``y = alpha 1 + X_gamma beta_gamma + e`` with a flat prior on the
intercept, ``beta_gamma | sigma^2 ~ N(0, g sigma^2 V_gamma)`` and
``p(sigma^2) ~ 1/sigma^2``.  After centering, the log marginal likelihood is,
up to a constant that does not depend on gamma,

    -1/2 log det(g V_gamma) - 1/2 log det F_gamma - (n-1)/2 log S_gamma

with ``F_gamma = X_g'X_g + (g V_gamma)^-1`` and
``S_gamma = y'y - (X_g'y)' F_gamma^-1 (X_g'y)``.

Everything that touches a model goes through :class:`ModelState`, which keeps
the Cholesky factor of ``F_gamma`` so that single-variable flips cost
``O(p_gamma^2)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betaln, logsumexp

__all__ = [
    "Dataset",
    "PriorSpec",
    "ModelState",
    "ExactPosterior",
    "SingularModelError",
    "center_data",
    "log_marginal_likelihood",
    "log_model_prior",
    "make_model_state",
    "flip_model_state",
    "move_model_state",
    "rb_flip_logits",
    "enumerate_posterior",
]

# XtX is cached below this many columns, otherwise X'x_j products are streamed.
XTX_CACHE_MAX_P = 2000
# Column removal uses a rank-one Cholesky update up to this model size.
DOWNDATE_MAX_SIZE = 64
S_FLOOR = 1e-300
# Relative Schur-complement threshold below which a g-prior active set is singular.
SINGULAR_RTOL = 1e-10


class SingularModelError(ValueError):
    """Raised when X_gamma'X_gamma is singular under the g-prior."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Centered response and design matrix."""

    y: np.ndarray
    X: np.ndarray
    column_names: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def yty(self) -> float:
        return float(self.y @ self.y)

    @cached_property
    def Xty(self) -> np.ndarray:
        return self.X.T @ self.y

    @cached_property
    def XtX(self) -> np.ndarray | None:
        if self.p > XTX_CACHE_MAX_P:
            return None
        return self.X.T @ self.X

    @cached_property
    def col_sq(self) -> np.ndarray:
        return np.einsum("ij,ij->j", self.X, self.X)

    def gram(self, rows: np.ndarray, cols: np.ndarray | slice) -> np.ndarray:
        """Block ``X[:, rows]' X[:, cols]``, from the cache when available."""
        if self.XtX is not None:
            return self.XtX[rows][:, cols] if isinstance(cols, slice) else self.XtX[np.ix_(rows, cols)]
        return self.X[:, rows].T @ self.X[:, cols]


@dataclass(frozen=True)
class PriorSpec:
    """Prior on (beta, gamma).

    ``v_form`` is ``"identity"`` (V = I) or ``"gprior"`` (V = (X'X)^-1).
    ``model_prior`` is ``"fixed"`` (independent Bernoulli(h)) or
    ``"betabinomial"`` (h ~ Beta(a, b) integrated out).
    """

    g: float = 9.0
    v_form: str = "identity"
    model_prior: str = "fixed"
    h: float | None = None
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        if not (self.g > 0 and np.isfinite(self.g)):
            raise ValueError(f"g must be positive and finite, got {self.g}")
        if self.v_form not in ("identity", "gprior"):
            raise ValueError(f"unknown v_form {self.v_form!r}")
        if self.model_prior == "fixed":
            if self.h is None or not 0 < self.h < 1:
                raise ValueError(f"fixed model prior needs 0 < h < 1, got {self.h}")
        elif self.model_prior == "betabinomial":
            if self.a is None or self.b is None or self.a <= 0 or self.b <= 0:
                raise ValueError(f"betabinomial model prior needs a, b > 0, got {self.a}, {self.b}")
        else:
            raise ValueError(f"unknown model_prior {self.model_prior!r}")

    @property
    def ridge(self) -> float:
        """Diagonal added to scale * X_g'X_g in F_gamma."""
        return 1.0 / self.g if self.v_form == "identity" else 0.0

    @property
    def scale(self) -> float:
        return 1.0 if self.v_form == "identity" else 1.0 + 1.0 / self.g

    def prior_inclusion(self) -> float:
        if self.model_prior == "fixed":
            return float(self.h)
        return float(self.a / (self.a + self.b))


def center_data(raw_y, raw_X, column_names=None) -> Dataset:
    """Subtract column means from ``raw_y`` and every column of ``raw_X``."""
    y = np.asarray(raw_y, dtype=float).ravel()
    X = np.asarray(raw_X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: y has {y.shape[0]} rows, X has shape {X.shape}")
    if y.shape[0] < 2 or X.shape[1] < 1:
        raise ValueError(f"need n >= 2 and p >= 1, got n={y.shape[0]}, p={X.shape[1]}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise ValueError("non-finite values in input data")
    if column_names is not None:
        column_names = tuple(str(c) for c in column_names)
        if len(column_names) != X.shape[1]:
            raise ValueError(f"{len(column_names)} column names for {X.shape[1]} columns")
    Xc = X - X.mean(axis=0)
    constant = np.flatnonzero(np.ptp(X, axis=0) == 0)
    if constant.size:
        warnings.warn(f"constant columns retained: {constant.tolist()}", stacklevel=2)
    return Dataset(y=y - y.mean(), X=Xc, column_names=column_names)


def _clamp_s(s: float) -> float:
    if s <= 0 or not np.isfinite(s):
        warnings.warn(f"residual quadratic form {s!r} clamped to {S_FLOOR}", RuntimeWarning, stacklevel=3)
        return S_FLOOR
    return s


def _log_ml(p_gamma: int, logdet_F: float, s_gamma: float, n: int, prior: PriorSpec) -> float:
    if prior.v_form == "identity":
        return -0.5 * p_gamma * np.log(prior.g) - 0.5 * logdet_F - 0.5 * (n - 1) * np.log(s_gamma)
    return -0.5 * p_gamma * np.log1p(prior.g) - 0.5 * (n - 1) * np.log(s_gamma)


def log_model_prior(prior: PriorSpec, gamma, p: int | None = None) -> float:
    gamma = np.asarray(gamma, dtype=bool)
    p = gamma.size if p is None else p
    k = int(gamma.sum())
    if prior.model_prior == "fixed":
        return k * np.log(prior.h) + (p - k) * np.log1p(-prior.h)
    return float(betaln(prior.a + k, prior.b + p - k) - betaln(prior.a, prior.b))


def _prior_add_delta(prior: PriorSpec, k: int, p: int) -> float:
    """log p(gamma + j) - log p(gamma) for a model of size k."""
    if prior.model_prior == "fixed":
        return float(np.log(prior.h) - np.log1p(-prior.h))
    return float(np.log(prior.a + k) - np.log(prior.b + p - k - 1))


@dataclass(frozen=True, eq=False)
class ModelState:
    """A model together with the factorisation of its posterior quantities.

    ``active`` lists the included columns in the row order of ``chol``;
    ``w = chol^-1 X_active'y`` so that ``S = y'y - w'w``.
    """

    gamma: np.ndarray
    active: np.ndarray
    chol: np.ndarray
    w: np.ndarray
    logdet_F: float
    s_gamma: float
    log_ml: float
    log_prior: float

    @property
    def log_post(self) -> float:
        return self.log_ml + self.log_prior

    @property
    def p_gamma(self) -> int:
        return self.active.size

    @property
    def xty(self) -> np.ndarray:
        return self.chol @ self.w


def _F_block(data: Dataset, prior: PriorSpec, rows, cols) -> np.ndarray:
    return prior.scale * data.gram(rows, cols)


def _finish(data, prior, gamma, active, L, w) -> ModelState:
    m = active.size
    s = _clamp_s(data.yty - float(w @ w))
    logdet = 2.0 * float(np.sum(np.log(np.diag(L)))) if m else 0.0
    return ModelState(
        gamma=gamma,
        active=active,
        chol=L,
        w=w,
        logdet_F=logdet,
        s_gamma=s,
        log_ml=_log_ml(m, logdet, s, data.n, prior),
        log_prior=log_model_prior(prior, gamma, data.p),
    )


def _check_size(m: int, data: Dataset, prior: PriorSpec):
    if prior.v_form == "gprior" and m >= data.n - 1:
        raise SingularModelError(f"g-prior needs p_gamma < n - 1, got p_gamma={m}, n={data.n}")


def make_model_state(data: Dataset, prior: PriorSpec, gamma) -> ModelState:
    """Build a :class:`ModelState` from scratch with a dense Cholesky."""
    gamma = np.array(gamma, dtype=bool)
    if gamma.shape != (data.p,):
        raise ValueError(f"gamma has shape {gamma.shape}, expected ({data.p},)")
    active = np.flatnonzero(gamma)
    m = active.size
    _check_size(m, data, prior)
    if m == 0:
        return _finish(data, prior, gamma, active, np.zeros((0, 0)), np.zeros(0))
    F = _F_block(data, prior, active, active)
    F[np.diag_indices(m)] += prior.ridge
    try:
        L = np.linalg.cholesky(F)
    except np.linalg.LinAlgError:
        raise SingularModelError(f"F_gamma is not positive definite for active set {active.tolist()}") from None
    d = np.diag(L)
    if prior.v_form == "gprior" and np.any(d**2 <= SINGULAR_RTOL * np.diag(F)):
        raise SingularModelError(f"collinear active set {active.tolist()}")
    w = solve_triangular(L, data.Xty[active], lower=True, check_finite=False)
    return _finish(data, prior, gamma, active, L, w)


def _chol_rank1_update(L: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Return L' with L'L'' = LL' + xx'."""
    L = L.copy()
    x = x.copy()
    n = x.size
    for k in range(n):
        lkk = L[k, k]
        r = np.hypot(lkk, x[k])
        c, s = r / lkk, x[k] / lkk
        L[k, k] = r
        if k + 1 < n:
            L[k + 1 :, k] = (L[k + 1 :, k] + s * x[k + 1 :]) / c
            x[k + 1 :] = c * x[k + 1 :] - s * L[k + 1 :, k]
    return L


def _add(state: ModelState, j: int, data: Dataset, prior: PriorSpec) -> ModelState:
    m = state.p_gamma
    _check_size(m + 1, data, prior)
    fjj = prior.scale * (data.XtX[j, j] if data.XtX is not None else data.col_sq[j]) + prior.ridge
    if m:
        f = _F_block(data, prior, state.active, [j]).ravel()
        v = solve_triangular(state.chol, f, lower=True, check_finite=False)
        c2 = fjj - float(v @ v)
    else:
        v = np.zeros(0)
        c2 = fjj
    if c2 <= SINGULAR_RTOL * fjj:
        if prior.v_form == "gprior" or c2 <= 0:
            raise SingularModelError(f"adding column {j} makes the active set singular")
    c = np.sqrt(c2)
    L = np.zeros((m + 1, m + 1))
    L[:m, :m] = state.chol
    L[m, :m] = v
    L[m, m] = c
    w_new = (data.Xty[j] - float(v @ state.w)) / c
    gamma = state.gamma.copy()
    gamma[j] = True
    active = np.append(state.active, j)
    w = np.append(state.w, w_new)
    # recomputed from w rather than downdated, so long flip sequences do not drift
    s = _clamp_s(data.yty - float(w @ w))
    logdet = state.logdet_F + np.log(c2)
    return ModelState(
        gamma=gamma,
        active=active,
        chol=L,
        w=w,
        logdet_F=logdet,
        s_gamma=s,
        log_ml=_log_ml(m + 1, logdet, s, data.n, prior),
        log_prior=state.log_prior + _prior_add_delta(prior, m, data.p),
    )


def _delete(state: ModelState, j: int, data: Dataset, prior: PriorSpec) -> ModelState:
    m = state.p_gamma
    q = int(np.flatnonzero(state.active == j)[0])
    gamma = state.gamma.copy()
    gamma[j] = False
    if m > DOWNDATE_MAX_SIZE:
        return make_model_state(data, prior, gamma)
    keep = np.r_[0:q, q + 1 : m]
    active = state.active[keep]
    L = state.chol
    L_new = L[np.ix_(keep, keep)]
    w = np.delete(state.w, q)
    if q < m - 1:
        l32 = L[q + 1 :, q]
        L33 = _chol_rank1_update(L[q + 1 :, q + 1 :], l32)
        L_new[q:, q:] = L33
        rhs = l32 * state.w[q] + L[q + 1 :, q + 1 :] @ state.w[q + 1 :]
        w[q:] = solve_triangular(L33, rhs, lower=True, check_finite=False)
    s = _clamp_s(data.yty - float(w @ w))
    logdet = 2.0 * float(np.sum(np.log(np.diag(L_new)))) if m > 1 else 0.0
    return ModelState(
        gamma=gamma,
        active=active,
        chol=L_new,
        w=w,
        logdet_F=logdet,
        s_gamma=s,
        log_ml=_log_ml(m - 1, logdet, s, data.n, prior),
        log_prior=state.log_prior - _prior_add_delta(prior, m - 1, data.p),
    )


def flip_model_state(state: ModelState, j: int, data: Dataset, prior: PriorSpec) -> ModelState:
    """Toggle variable ``j``: append to the factor, or remove it with a downdate."""
    if not 0 <= j < data.p:
        raise IndexError(f"variable index {j} out of range for p={data.p}")
    if state.gamma[j]:
        return _delete(state, j, data, prior)
    return _add(state, j, data, prior)


def move_model_state(state: ModelState, gamma_new, data: Dataset, prior: PriorSpec) -> ModelState:
    """State for ``gamma_new``, reached by flips when few variables change."""
    gamma_new = np.asarray(gamma_new, dtype=bool)
    diff = np.flatnonzero(gamma_new != state.gamma)
    if diff.size == 0:
        return state
    if diff.size > 4 + state.p_gamma // 2:
        return make_model_state(data, prior, gamma_new)
    # deletions first, so a g-prior path never passes through a larger singular set
    was_in = state.gamma[diff]
    for j in diff[was_in]:
        state = _delete(state, int(j), data, prior)
    for j in diff[~was_in]:
        state = _add(state, int(j), data, prior)
    return state


def log_marginal_likelihood(data: Dataset, prior: PriorSpec, gamma) -> float:
    return make_model_state(data, prior, gamma).log_ml


def rb_flip_logits(state: ModelState, data: Dataset, prior: PriorSpec) -> np.ndarray:
    """Log odds of gamma_j = 1 against gamma_j = 0 with the rest of gamma held fixed.

    One triangular solve against the Gram columns serves every inactive
    variable; the inverse factor serves every active one.
    """
    p, n, m = data.p, data.n, state.p_gamma
    d = np.empty(p)
    add_prior = _prior_add_delta(prior, m, p)
    lp0 = state.log_post
    inactive = np.flatnonzero(~state.gamma)

    # additions
    if inactive.size:
        if m:
            Fa = _F_block(data, prior, state.active, inactive)
            V = solve_triangular(state.chol, Fa, lower=True, check_finite=False)
            vv = np.einsum("ij,ij->j", V, V)
            vw = state.w @ V
        else:
            vv = np.zeros(inactive.size)
            vw = np.zeros(inactive.size)
        diag = data.XtX[inactive, inactive] if data.XtX is not None else data.col_sq[inactive]
        fjj = prior.scale * diag + prior.ridge
        c2 = fjj - vv
        ok = c2 > SINGULAR_RTOL * fjj
        if prior.v_form == "identity":
            ok |= c2 > 0
        if prior.v_form == "gprior" and m + 1 >= n - 1:
            ok[:] = False
        c2s = np.where(ok, c2, 1.0)
        u = (data.Xty[inactive] - vw) / np.sqrt(c2s)
        s_new = state.s_gamma - u * u
        s_new = np.where(s_new > 0, s_new, S_FLOOR)
        logdet = state.logdet_F + np.log(c2s)
        lml = _log_ml(m + 1, logdet, s_new, n, prior)
        d[inactive] = np.where(ok, lml + state.log_prior + add_prior - lp0, -np.inf)

    # deletions
    if m:
        Linv = solve_triangular(state.chol, np.eye(m), lower=True, check_finite=False)
        finv_diag = np.einsum("ij,ij->j", Linv, Linv)
        beta = Linv.T @ state.w
        s_new = state.s_gamma + beta**2 / finv_diag
        logdet = state.logdet_F + np.log(finv_diag)
        lml = _log_ml(m - 1, logdet, s_new, n, prior)
        del_prior = -_prior_add_delta(prior, m - 1, p)
        d[state.active] = lp0 - (lml + state.log_prior + del_prior)
    return d


@dataclass(frozen=True)
class ExactPosterior:
    """Normalised log model probabilities indexed by ``sum_j gamma_j 2^j``."""

    log_probs: np.ndarray
    pips: np.ndarray

    @property
    def p(self) -> int:
        return self.pips.size

    def gamma_of(self, index: int) -> np.ndarray:
        return ((index >> np.arange(self.p)) & 1).astype(bool)

    def prob(self, gamma) -> float:
        return float(np.exp(self.log_probs[gamma_index(gamma)]))

    def mean_size(self) -> float:
        sizes = np.array([bin(i).count("1") for i in range(self.log_probs.size)])
        return float(np.exp(self.log_probs) @ sizes)


def gamma_index(gamma) -> int:
    gamma = np.asarray(gamma, dtype=bool)
    return int(np.sum(1 << np.flatnonzero(gamma)))


def _normalise(log_post: np.ndarray, p: int) -> ExactPosterior:
    log_probs = log_post - logsumexp(log_post)
    idx = np.arange(log_probs.size)
    pips = np.empty(p)
    for j in range(p):
        pips[j] = np.exp(logsumexp(log_probs[(idx >> j) & 1 == 1]))
    return ExactPosterior(log_probs=log_probs, pips=np.clip(pips, 0.0, 1.0))


def enumerate_posterior(data: Dataset, prior: PriorSpec, max_p: int = 20) -> ExactPosterior:
    """Exact posterior over all 2^p models, visited in Gray-code order."""
    p = data.p
    if p > max_p:
        raise ValueError(f"refusing to enumerate 2^{p} models (cap is p <= {max_p})")
    log_post = np.empty(2**p)
    gamma = np.zeros(p, dtype=bool)
    state = make_model_state(data, prior, gamma)
    log_post[0] = state.log_post
    code = 0
    for i in range(1, 2**p):
        j = (i & -i).bit_length() - 1
        gamma[j] = not gamma[j]
        code ^= 1 << j
        try:
            if state is None:
                state = make_model_state(data, prior, gamma)
            else:
                state = flip_model_state(state, j, data, prior)
            log_post[code] = state.log_post
        except SingularModelError:
            state = None
            log_post[code] = -np.inf
    return _normalise(log_post, p)
