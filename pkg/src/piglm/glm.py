"""Exponential-family GLMs: likelihood, IRLS fitting, deviance, scale estimates.

Families carry the cumulant b(theta), the variance function V(mu) and the
canonical map theta(mu); fitting is Fisher scoring (expected information),
which coincides with Newton for the canonical links used here and is the
stable choice for gamma-log.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize, special

from .errors import (
    ConvergenceError,
    DegreesOfFreedomError,
    DesignError,
    DomainError,
    SupportError,
)

__all__ = [
    "Family",
    "LinkFn",
    "ModelData",
    "FitResult",
    "ScaleEstimates",
    "FAMILIES",
    "LINKS",
    "log_likelihood",
    "score",
    "fit_irls",
    "deviance",
    "scale_estimates",
    "saddlepoint_logpdf",
    "likelihood_surface",
    "quadraticity_diagnostic",
    "LikelihoodSurface",
]

# Estimates beyond this magnitude on the link scale are treated as diverging
# to the boundary (e.g. a log rate ratio of 15 is e^15 ~ 3e6).
BOUNDARY_GUARD = 15.0


def _xlogy(x, y):
    return special.xlogy(x, y)


@dataclasses.dataclass(frozen=True)
class Family:
    name: str
    b: Callable[[np.ndarray], np.ndarray]          # cumulant b(theta)
    theta: Callable[[np.ndarray], np.ndarray]      # canonical parameter theta(mu)
    variance: Callable[[np.ndarray], np.ndarray]   # V(mu)
    unit_deviance: Callable[[np.ndarray, np.ndarray], np.ndarray]
    in_domain: Callable[[np.ndarray], np.ndarray]  # valid mean values
    known_scale: bool

    def check_mu(self, mu):
        if not np.all(self.in_domain(np.asarray(mu))):
            raise DomainError(f"mean outside the {self.name} family domain")


@dataclasses.dataclass(frozen=True)
class LinkFn:
    name: str
    g: Callable[[np.ndarray], np.ndarray]
    ginv: Callable[[np.ndarray], np.ndarray]
    gprime: Callable[[np.ndarray], np.ndarray]
    canonical_for: Optional[str]


FAMILIES = {
    "gaussian": Family(
        name="gaussian",
        b=lambda th: 0.5 * th**2,
        theta=lambda mu: mu,
        variance=lambda mu: np.ones_like(np.asarray(mu, dtype=float)),
        unit_deviance=lambda y, mu: (y - mu) ** 2,
        in_domain=lambda mu: np.isfinite(mu),
        known_scale=False,
    ),
    "poisson": Family(
        name="poisson",
        b=lambda th: np.exp(th),
        theta=lambda mu: np.log(mu),
        variance=lambda mu: np.asarray(mu, dtype=float),
        unit_deviance=lambda y, mu: 2.0 * (_xlogy(y, y / mu) - (y - mu)),
        in_domain=lambda mu: mu > 0,
        known_scale=True,
    ),
    "binomial": Family(
        name="binomial",
        b=lambda th: np.log1p(np.exp(-np.abs(th))) + np.maximum(th, 0.0),
        theta=lambda mu: np.log(mu / (1.0 - mu)),
        variance=lambda mu: mu * (1.0 - mu),
        unit_deviance=lambda y, mu: 2.0 * (_xlogy(y, y / mu) + _xlogy(1.0 - y, (1.0 - y) / (1.0 - mu))),
        in_domain=lambda mu: (mu > 0) & (mu < 1),
        known_scale=True,
    ),
    "gamma": Family(
        name="gamma",
        b=lambda th: -np.log(-th),
        theta=lambda mu: -1.0 / mu,
        variance=lambda mu: mu**2,
        unit_deviance=lambda y, mu: 2.0 * (-np.log(y / mu) + (y - mu) / mu),
        in_domain=lambda mu: mu > 0,
        known_scale=False,
    ),
}

LINKS = {
    "identity": LinkFn(
        name="identity",
        g=lambda mu: np.asarray(mu, dtype=float),
        ginv=lambda eta: np.asarray(eta, dtype=float),
        gprime=lambda mu: np.ones_like(np.asarray(mu, dtype=float)),
        canonical_for="gaussian",
    ),
    "log": LinkFn(
        name="log",
        g=np.log,
        ginv=np.exp,
        gprime=lambda mu: 1.0 / np.asarray(mu, dtype=float),
        canonical_for="poisson",
    ),
    "logit": LinkFn(
        name="logit",
        g=lambda mu: np.log(mu / (1.0 - mu)),
        ginv=special.expit,
        gprime=lambda mu: 1.0 / (mu * (1.0 - mu)),
        canonical_for="binomial",
    ),
}


@dataclasses.dataclass(frozen=True)
class ModelData:
    """One GLM problem: response, design, offsets and prior weights.

    Binomial responses are proportions with the trial counts in ``weights``.
    """

    y: np.ndarray
    X: np.ndarray
    offset: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        n, p = X.shape
        if y.shape[0] != n:
            raise DesignError("y and X row counts differ")
        if n < p:
            raise DesignError("need n >= p")
        off = np.zeros(n) if self.offset is None else np.asarray(self.offset, dtype=float)
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if off.shape[0] != n or w.shape[0] != n:
            raise DesignError("offset/weights length mismatch")
        if np.any(w <= 0):
            raise DesignError("weights must be positive")
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "weights", w)
        if np.linalg.matrix_rank(X) < p:
            raise DesignError("design matrix is rank deficient")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclasses.dataclass(frozen=True)
class ScaleEstimates:
    phi_mom: float
    phi_eql: float
    phi_dev: float
    phi_mpl: float


@dataclasses.dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    cov_unscaled: np.ndarray          # (X' W X)^{-1} at beta_hat
    deviance: float
    scale: Optional[ScaleEstimates]   # None when n == p
    converged: bool
    boundary: bool
    iterations: int
    loglik_at_mle: float
    family: str
    link: str
    n: int
    p: int

    def se(self, phi: float = 1.0) -> np.ndarray:
        return np.sqrt(phi * np.diag(self.cov_unscaled))


def _loglik_terms(family: Family, y, mu, phi, weights):
    """Exact per-observation log density including the c(y, phi) terms."""
    name = family.name
    a = weights
    if name == "gaussian":
        return -0.5 * np.log(2.0 * math.pi * phi / a) - a * (y - mu) ** 2 / (2.0 * phi)
    if name == "poisson":
        return _xlogy(y, mu) - mu - special.gammaln(y + 1.0)
    if name == "binomial":
        m = a
        k = y * m
        return (
            special.gammaln(m + 1.0)
            - special.gammaln(k + 1.0)
            - special.gammaln(m - k + 1.0)
            + _xlogy(k, mu)
            + _xlogy(m - k, 1.0 - mu)
        )
    if name == "gamma":
        nu = 1.0 / phi
        return (
            nu * np.log(nu / mu)
            + (nu - 1.0) * np.log(y)
            - nu * y / mu
            - special.gammaln(nu)
        )
    raise DomainError(f"unknown family {name}")


def _mu_from_beta(family: Family, link: LinkFn, beta, data: ModelData):
    eta = data.X @ np.asarray(beta, dtype=float) + data.offset
    mu = link.ginv(eta)
    family.check_mu(mu)
    return mu, eta


def log_likelihood(family, link, beta, phi, data: ModelData) -> float:
    """Exact log likelihood at (beta, phi). phi is ignored by fixed-scale families."""
    family, link = _resolve(family, link)
    if not phi > 0:
        raise DomainError("phi must be positive")
    mu, _ = _mu_from_beta(family, link, beta, data)
    return float(np.sum(_loglik_terms(family, data.y, mu, phi, data.weights)))


def score(family, link, beta, phi, data: ModelData) -> np.ndarray:
    """Analytic score dll/dbeta = X' [a (y - mu) / (phi V(mu) g'(mu))]."""
    family, link = _resolve(family, link)
    mu, _ = _mu_from_beta(family, link, beta, data)
    u = data.weights * (data.y - mu) / (phi * family.variance(mu) * link.gprime(mu))
    return data.X.T @ u


def deviance(family, data: ModelData, mu_hat) -> float:
    """Total deviance D = sum_i a_i d(y_i, mu_hat_i)."""
    family = _resolve_family(family)
    mu_hat = np.asarray(mu_hat, dtype=float)
    family.check_mu(mu_hat)
    d = family.unit_deviance(data.y, mu_hat)
    return float(np.sum(data.weights * d))


def _resolve_family(family) -> Family:
    if isinstance(family, Family):
        return family
    try:
        return FAMILIES[family]
    except KeyError:
        raise DomainError(f"unknown family {family!r}") from None


def _resolve(family, link):
    f = _resolve_family(family)
    if isinstance(link, LinkFn):
        return f, link
    try:
        return f, LINKS[link]
    except KeyError:
        raise DomainError(f"unknown link {link!r}") from None


def _start_mu(family: Family, data: ModelData):
    y = data.y
    if family.name == "poisson":
        return np.where(y > 0, y, 0.5)
    if family.name == "binomial":
        m = data.weights
        return (y * m + 0.5) / (m + 1.0)
    if family.name == "gamma":
        return np.maximum(y, 1e-8)
    return y.astype(float)


def fit_irls(family, link, data: ModelData, tol=1e-8, max_iter=50) -> FitResult:
    """Fit by iteratively reweighted least squares (Fisher scoring).

    Convergence requires both a relative deviance change below 1e-10 and a
    score infinity-norm below ``tol`` (at phi = 1; the scale cancels from the
    score equations for all four families). Estimates drifting past the
    divergence guard, mean underflow, or step-halving failure set
    ``boundary=True`` instead of raising.
    """
    family, link = _resolve(family, link)
    n, p = data.n, data.p
    mu = _start_mu(family, data)
    family.check_mu(mu)
    eta = link.g(mu)
    beta = None
    dev = deviance(family, data, mu)
    converged = False
    boundary = False
    it = 0
    for it in range(1, max_iter + 1):
        W = data.weights / (family.variance(mu) * link.gprime(mu) ** 2)
        z = (eta - data.offset) + (data.y - mu) * link.gprime(mu)
        sw = np.sqrt(W)
        Q, R = np.linalg.qr(sw[:, None] * data.X)
        beta_new = linalg.solve_triangular(R, Q.T @ (sw * z))
        # step-halve if the proposal leaves the domain or worsens the deviance
        step_ok = False
        frac = 1.0
        for _ in range(25):
            cand = beta_new if beta is None else beta + frac * (beta_new - beta)
            eta_c = data.X @ cand + data.offset
            mu_c = link.ginv(eta_c)
            if np.all(family.in_domain(mu_c)) and np.all(np.isfinite(mu_c)):
                dev_c = deviance(family, data, mu_c)
                if np.isfinite(dev_c) and (beta is None or dev_c <= dev + 1e-8 * (abs(dev) + 1.0)):
                    step_ok = True
                    break
            frac *= 0.5
        if not step_ok:
            boundary = True
            break
        beta, eta, mu = cand, eta_c, mu_c
        dev_new = dev_c
        s = score(family, link, beta, 1.0, data)
        if abs(dev_new - dev) < 1e-10 * (abs(dev_new) + 0.1) and np.max(np.abs(s)) < tol and it > 1:
            dev = dev_new
            converged = True
            break
        dev = dev_new
    if beta is None:
        raise ConvergenceError("IRLS could not take a single step")
    if np.any(np.abs(beta) > BOUNDARY_GUARD) or np.any(eta < -BOUNDARY_GUARD * 45):
        boundary = True
    W = data.weights / (family.variance(mu) * link.gprime(mu) ** 2)
    XtWX = data.X.T @ (W[:, None] * data.X)
    try:
        cov = np.linalg.inv(XtWX)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(XtWX)
        boundary = True
    phi_ll = 1.0
    scale = None
    if n > p and dev > 0 and not boundary:
        scale = _scale_estimates_impl(family, link, data, beta, mu, dev)
        if not family.known_scale:
            phi_ll = scale.phi_dev
    ll = float(np.sum(_loglik_terms(family, data.y, mu, phi_ll, data.weights)))
    return FitResult(
        beta_hat=np.asarray(beta, dtype=float),
        cov_unscaled=cov,
        deviance=float(dev),
        scale=scale,
        converged=converged,
        boundary=boundary,
        iterations=it,
        loglik_at_mle=ll,
        family=family.name,
        link=link.name,
        n=n,
        p=p,
    )


def _scale_estimates_impl(family, link, data, beta, mu, dev):
    n, p = data.n, data.p
    V = family.variance(mu)
    phi_mom = float(np.sum(data.weights * (data.y - mu) ** 2 / V) / (n - p))
    phi_eql = dev / n
    phi_dev = dev / (n - p)

    if family.name in ("gaussian", "gamma"):
        def profile(log_phi):
            return (p / 2.0) * log_phi + float(
                np.sum(_loglik_terms(family, data.y, mu, math.exp(log_phi), data.weights))
            )
    else:
        # fixed-scale families: only the phi-dependent extended quasi-likelihood
        # terms matter, -(n/2) log phi - D/(2 phi), plus the (p/2) log phi adjustment
        def profile(log_phi):
            phi = math.exp(log_phi)
            return (p / 2.0) * log_phi - (n / 2.0) * log_phi - dev / (2.0 * phi)

    center = math.log(phi_dev)
    res = optimize.minimize_scalar(
        lambda lp: -profile(lp),
        bounds=(center - 5.0, center + 5.0),
        method="bounded",
        options={"xatol": 1e-12},
    )
    phi_mpl = float(math.exp(res.x))
    return ScaleEstimates(phi_mom, phi_eql, phi_dev, phi_mpl)


def scale_estimates(family, link, data: ModelData, fit: FitResult) -> ScaleEstimates:
    """The four scale estimators at the fitted model (requires n > p)."""
    family, link = _resolve(family, link)
    if data.n == data.p:
        raise DegreesOfFreedomError("scale not estimable with n == p")
    if fit.scale is not None:
        return fit.scale
    mu, _ = _mu_from_beta(family, link, fit.beta_hat, data)
    return _scale_estimates_impl(family, link, data, fit.beta_hat, mu, fit.deviance)


def saddlepoint_logpdf(family, y_i: float, mu_i: float, phi: float) -> float:
    """Saddlepoint log density: -log(2 pi phi V(y))/2 - d(y, mu)/(2 phi).

    Exact for gaussian; relative density error below 3% for poisson counts
    above 3. Requires V(y) > 0, so poisson y = 0 is outside the support.
    """
    family = _resolve_family(family)
    if not phi > 0:
        raise DomainError("phi must be positive")
    vy = float(family.variance(np.asarray(y_i, dtype=float)))
    if not vy > 0:
        raise SupportError("saddlepoint density needs V(y) > 0")
    family.check_mu(np.asarray(mu_i, dtype=float))
    d = float(family.unit_deviance(np.asarray(y_i, dtype=float), np.asarray(mu_i, dtype=float)))
    return -0.5 * math.log(2.0 * math.pi * phi * vy) - d / (2.0 * phi)


@dataclasses.dataclass(frozen=True)
class LikelihoodSurface:
    beta0_grid: np.ndarray
    beta1_grid: np.ndarray
    loglik: np.ndarray        # shape (len(beta0), len(beta1))
    loglik_quad: np.ndarray
    center: np.ndarray
    info: np.ndarray          # X' W X at the center
    anchored: bool            # True when centered at a user anchor, not the MLE


def likelihood_surface(family, link, data: ModelData, fit: FitResult,
                       half_widths=(3.0, 3.0), resolution=101,
                       anchor=None, phi: float = 1.0) -> LikelihoodSurface:
    """Log-likelihood on a rectangular grid around the MLE (p = 2 only).

    ``half_widths`` are in SE units; boundary fits must supply ``anchor``.
    """
    family, link = _resolve(family, link)
    if data.p != 2:
        raise DomainError("likelihood_surface requires exactly two parameters")
    if fit.boundary and anchor is None:
        raise DomainError("boundary fit: supply an anchor point for the surface")
    center = np.asarray(anchor if anchor is not None else fit.beta_hat, dtype=float)
    mu, _ = _mu_from_beta(family, link, center, data)
    W = data.weights / (family.variance(mu) * link.gprime(mu) ** 2)
    info = data.X.T @ (W[:, None] * data.X) / phi
    se = np.sqrt(np.diag(np.linalg.inv(info)))
    g0 = np.linspace(center[0] - half_widths[0] * se[0], center[0] + half_widths[0] * se[0], resolution)
    g1 = np.linspace(center[1] - half_widths[1] * se[1], center[1] + half_widths[1] * se[1], resolution)
    ll = np.empty((resolution, resolution))
    for i, b0 in enumerate(g0):
        for j, b1 in enumerate(g1):
            try:
                ll[i, j] = log_likelihood(family, link, np.array([b0, b1]), max(phi, 1e-300), data)
            except DomainError:
                ll[i, j] = -np.inf
    ll0 = log_likelihood(family, link, center, max(phi, 1e-300), data)
    diffs0 = g0[:, None] - center[0]
    diffs1 = g1[None, :] - center[1]
    quad = (
        ll0
        - 0.5 * (info[0, 0] * diffs0**2 + 2.0 * info[0, 1] * diffs0 * diffs1 + info[1, 1] * diffs1**2)
    )
    return LikelihoodSurface(g0, g1, ll, quad, center, info, anchor is not None)


def quadraticity_diagnostic(surface: LikelihoodSurface, threshold: float = 0.1):
    """Max |ll - ll_quad| over nodes within Mahalanobis distance 2 of the center."""
    if surface.anchored:
        raise DomainError("quadraticity diagnostic needs a surface centered at the MLE")
    d0 = surface.beta0_grid[:, None] - surface.center[0]
    d1 = surface.beta1_grid[None, :] - surface.center[1]
    m2 = (
        surface.info[0, 0] * d0**2
        + 2.0 * surface.info[0, 1] * d0 * d1
        + surface.info[1, 1] * d1**2
    )
    mask = m2 <= 4.0
    diff = np.abs(surface.loglik - surface.loglik_quad)
    score_val = float(np.max(diff[mask]))
    return {"score": score_val, "pass": score_val < threshold}
