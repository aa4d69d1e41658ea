"""Bayesian lasso regression by Gibbs sampling.

Model, with ``c`` the per-row intercept multiplier (ones unless reweighted)::

    y | mu, beta, sigma2      ~ N(mu * c + X beta, sigma2 I)
    beta_j | sigma2, s2_j     ~ N(0, sigma2 * s2_j)
    s2_j | lam2               ~ Exponential(rate = lam2 / 2)
    lam2                      ~ Gamma(shape = r, rate = delta)
    p(mu) ∝ 1,  p(sigma2) ∝ 1 / sigma2

Marginally over ``s2_j`` each coefficient has a Laplace prior with rate
``sqrt(lam2) / sigma``.  ``beta`` stacks player effects then team effects.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .errors import NumericalError, ValidationError

BETA_SQ_FLOOR = 1e-24


@dataclass(frozen=True)
class ModelSpec:
    r: float = 2.0
    delta: float = 0.1
    burn_in: int = 2000
    thin: int = 10
    n_keep: int = 1000
    seed: int = 0
    # Holds lam2 at this value instead of sampling it.
    fixed_lambda2: float | None = None

    def __post_init__(self):
        if not (self.r > 0 and self.delta > 0):
            raise ValidationError("hyperprior parameters r and delta must be positive")
        if self.n_keep < 1 or self.thin < 1 or self.burn_in < 0:
            raise ValidationError("need n_keep >= 1, thin >= 1, burn_in >= 0")
        if self.fixed_lambda2 is not None and not self.fixed_lambda2 > 0:
            raise ValidationError("fixed_lambda2 must be positive")


@dataclass
class GibbsState:
    mu: float
    beta: np.ndarray
    sigma2: float
    lambda2: float
    s2: np.ndarray

    def copy(self) -> GibbsState:
        return replace(self, beta=self.beta.copy(), s2=self.s2.copy())

    def is_finite(self) -> bool:
        return (math.isfinite(self.mu) and math.isfinite(self.sigma2) and self.sigma2 > 0
                and math.isfinite(self.lambda2) and self.lambda2 > 0
                and bool(np.all(np.isfinite(self.beta))) and bool(np.all(np.isfinite(self.s2)))
                and bool(np.all(self.s2 > 0)))


@dataclass
class Precomputed:
    """Cross products reused by every sweep."""

    X: object
    y: np.ndarray
    c: np.ndarray
    XtX: np.ndarray
    Xty: np.ndarray
    Xtc: np.ndarray
    ctc: float

    @classmethod
    def from_arrays(cls, X, y, c=None) -> Precomputed:
        y = np.asarray(y, dtype=float)
        c = np.ones_like(y) if c is None else np.asarray(c, dtype=float)
        XtX = X.T @ X
        XtX = XtX.toarray() if hasattr(XtX, "toarray") else np.asarray(XtX)
        return cls(X, y, c, XtX, np.asarray(X.T @ y).ravel(), np.asarray(X.T @ c).ravel(),
                   float(c @ c))

    @classmethod
    def from_dataset(cls, ds) -> Precomputed:
        return cls.from_arrays(ds.X, ds.y, ds.intercept)


@dataclass
class PosteriorDraws:
    names: tuple[str, ...]
    mu: np.ndarray
    sigma2: np.ndarray
    coef: np.ndarray
    lambda2: np.ndarray | None = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        self.coef = np.asarray(self.coef, dtype=float).reshape(self.mu.size, len(self.names))
        self._index = {name: j for j, name in enumerate(self.names)}
        if len(self._index) != len(self.names):
            raise ValidationError("duplicate coefficient names in draws")

    @property
    def S(self) -> int:
        return self.mu.size

    def __contains__(self, name) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown coefficient {name!r}") from None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.coef[:, self.index(name)]


def sample_inverse_gaussian(mean, shape, rng: np.random.Generator, size=None):
    """Inverse-Gaussian variates by transformation with one rejection step.

    Uses the root of the chi-square transformation in the cancellation-free
    form ``x = m / (1 + y/2 + sqrt(y + y^2/4))`` with ``y = m * nu^2 / shape``.
    """
    m = np.asarray(mean, dtype=float)
    s = np.asarray(shape, dtype=float)
    if not (np.all(m > 0) and np.all(s > 0) and np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
        raise ValueError("inverse-Gaussian mean and shape must be finite and positive")
    if size is None:
        size = np.broadcast(m, s).shape
    nu = rng.standard_normal(size)
    u = rng.random(size)
    y = m * nu * nu / s
    x = m / (1.0 + 0.5 * y + np.sqrt(y + 0.25 * y * y))
    out = np.where(u <= m / (m + x), x, m * m / x)
    return float(out) if out.ndim == 0 else out


# Full conditionals.  Each returns a fresh draw and never mutates the state.

def coefficient_moments(state: GibbsState, pre: Precomputed):
    """Mean and lower Cholesky factor of A = X'X + diag(1/s2) for the beta block."""
    A = pre.XtX + np.diag(1.0 / state.s2)
    try:
        chol = linalg.cholesky(A, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"coefficient precision is not positive definite: {exc}") from None
    rhs = pre.Xty - state.mu * pre.Xtc
    return linalg.cho_solve((chol, True), rhs, check_finite=False), chol


def draw_coefficients(state: GibbsState, pre: Precomputed, rng: np.random.Generator) -> np.ndarray:
    """beta | rest ~ N(A^-1 X'(y - mu c), sigma2 A^-1) with A = X'X + diag(1/s2)."""
    mean, chol = coefficient_moments(state, pre)
    z = rng.standard_normal(mean.size)
    noise = linalg.solve_triangular(chol, z, lower=True, trans="T", check_finite=False)
    return mean + math.sqrt(state.sigma2) * noise


def draw_intercept(state: GibbsState, pre: Precomputed, rng: np.random.Generator) -> float:
    """mu | rest ~ N(c'(y - X beta) / c'c, sigma2 / c'c)."""
    resid = pre.y - pre.X @ state.beta
    mean = float(pre.c @ resid) / pre.ctc
    return mean + math.sqrt(state.sigma2 / pre.ctc) * rng.standard_normal()


def draw_sigma2(state: GibbsState, pre: Precomputed, rng: np.random.Generator) -> float:
    """sigma2 | rest ~ InvGamma((n + p)/2, (RSS + sum beta^2/s2) / 2)."""
    resid = pre.y - state.mu * pre.c - pre.X @ state.beta
    shape = 0.5 * (pre.y.size + state.beta.size)
    rate = 0.5 * (float(resid @ resid) + float(np.sum(state.beta ** 2 / state.s2)))
    return rate / rng.gamma(shape)


def draw_latent_scales(state: GibbsState, rng: np.random.Generator) -> np.ndarray:
    """1/s2_j | rest ~ InverseGaussian(sqrt(lam2 sigma2 / beta_j^2), lam2)."""
    b2 = np.maximum(state.beta ** 2, BETA_SQ_FLOOR)
    inv = sample_inverse_gaussian(np.sqrt(state.lambda2 * state.sigma2 / b2), state.lambda2, rng,
                                  size=b2.shape)
    return 1.0 / inv


def draw_lambda2(state: GibbsState, spec: ModelSpec, rng: np.random.Generator) -> float:
    """lam2 | rest ~ Gamma(p + r, rate = delta + sum(s2) / 2)."""
    rate = spec.delta + 0.5 * float(np.sum(state.s2))
    return rng.gamma(state.beta.size + spec.r) / rate


def gibbs_step(state: GibbsState, pre: Precomputed, spec: ModelSpec,
               rng: np.random.Generator) -> GibbsState:
    s = state.copy()
    s.beta = draw_coefficients(s, pre, rng)
    s.mu = draw_intercept(s, pre, rng)
    s.sigma2 = draw_sigma2(s, pre, rng)
    s.s2 = draw_latent_scales(s, rng)
    if spec.fixed_lambda2 is None:
        s.lambda2 = draw_lambda2(s, spec, rng)
    return s


def initial_state(pre: Precomputed, spec: ModelSpec) -> GibbsState:
    p = pre.XtX.shape[0]
    mu = float(pre.c @ pre.y) / pre.ctc
    var = float(np.var(pre.y - mu * pre.c))
    lam2 = spec.fixed_lambda2 if spec.fixed_lambda2 is not None else spec.r / spec.delta
    return GibbsState(mu=mu, beta=np.zeros(p), sigma2=var if var > 0 else 1.0,
                      lambda2=lam2, s2=np.ones(p))


def gibbs_fit(dataset, spec: ModelSpec = ModelSpec(), names=None, progress=None) -> PosteriorDraws:
    """Run the sampler on a ``RegressionDataset`` (or ``(X, y)`` pair).

    Discards ``burn_in`` sweeps, then keeps every ``thin``-th sweep until
    ``n_keep`` draws are stored.  Output depends only on the data and
    ``spec.seed``.
    """
    if isinstance(dataset, tuple):
        X, y = dataset[:2]
        pre = Precomputed.from_arrays(X, y, dataset[2] if len(dataset) > 2 else None)
        names = tuple(names) if names is not None else tuple(f"b{j}" for j in range(X.shape[1]))
    else:
        pre = Precomputed.from_dataset(dataset)
        names = dataset.coef_names
    n, p = pre.y.size, pre.XtX.shape[0]
    if n < 2:
        raise ValidationError("need at least two rows to fit")
    rng = np.random.default_rng(spec.seed)
    state = initial_state(pre, spec)
    S = spec.n_keep
    mu, sigma2, lam2 = np.empty(S), np.empty(S), np.empty(S)
    coef = np.empty((S, p))
    total = spec.burn_in + spec.thin * S
    k = 0
    for it in range(1, total + 1):
        try:
            state = gibbs_step(state, pre, spec, rng)
        except (NumericalError, ValueError) as exc:
            raise NumericalError(f"sampler diverged at iteration {it}: {exc}") from None
        if not state.is_finite():
            raise NumericalError(f"sampler diverged at iteration {it}: non-finite state")
        if it > spec.burn_in and (it - spec.burn_in) % spec.thin == 0:
            mu[k], sigma2[k], lam2[k] = state.mu, state.sigma2, state.lambda2
            coef[k] = state.beta
            k += 1
        if progress is not None and it % 1000 == 0:
            progress(it, total)
    return PosteriorDraws(names, mu, sigma2, coef, lam2)


def write_draws(draws: PosteriorDraws, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mu", "sigma2") + tuple(draws.names))
        for s in range(draws.S):
            w.writerow([repr(float(draws.mu[s])), repr(float(draws.sigma2[s]))]
                       + [repr(v) for v in draws.coef[s].tolist()])


def read_draws(path) -> PosteriorDraws:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["mu", "sigma2"]:
            raise ValidationError(f"{path}: draws file must start with columns mu,sigma2")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[0] == 0:
        raise ValidationError(f"{path}: no draws")
    if data.shape[1] != len(header):
        raise ValidationError(f"{path}: row width {data.shape[1]} != header width {len(header)}")
    return PosteriorDraws(tuple(header[2:]), data[:, 0], data[:, 1], data[:, 2:])
