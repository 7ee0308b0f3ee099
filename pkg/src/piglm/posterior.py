"""Bayesian posterior machinery for GLM coefficients.

Covers the Gaussian/multivariate-t large-sample posterior with its scale
marginal, empirical-Bayes plug-in, exact low-dimensional grid posteriors under
arbitrary priors, impropriety detection, a random-walk Metropolis sampler, and
the normalized-likelihood density used to cross-check the two routes.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from .errors import (
    BoundaryError,
    DegreesOfFreedomError,
    DomainError,
    MixingError,
    SupportError,
)
from .glm import FitResult, ModelData, _resolve
from .numerics import RngStream, std_normal_cdf, student_t_cdf
from .priors import PriorSpec, ScalePriorSpec, prior_logpdf

__all__ = [
    "LaplacePosterior",
    "ScaleMarginal",
    "LaplaceResult",
    "GridPosterior",
    "McmcChain",
    "laplace_posterior",
    "vectorized_loglik",
    "grid_posterior",
    "detect_impropriety",
    "rw_metropolis",
    "p_formula_density",
]


@dataclasses.dataclass(frozen=True)
class LaplacePosterior:
    """Normal or multivariate-t posterior for the coefficient vector.

    For kind='mvt', ``cov`` holds the scale matrix and ``dof`` the degrees of
    freedom; marginals are location-scale Student-t.
    """

    mean: np.ndarray
    cov: np.ndarray
    kind: str                      # 'normal' or 'mvt'
    dof: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("normal", "mvt"):
            raise DomainError("kind must be 'normal' or 'mvt'")
        if self.kind == "mvt" and (self.dof is None or self.dof < 1):
            raise DegreesOfFreedomError("mvt posterior needs dof >= 1")

    @property
    def p(self) -> int:
        return len(self.mean)

    def marginal_scale(self, index: int) -> float:
        return float(math.sqrt(self.cov[index, index]))

    def marginal_sd(self, index: int) -> float:
        s = self.marginal_scale(index)
        if self.kind == "mvt":
            if self.dof <= 2:
                return math.inf
            return s * math.sqrt(self.dof / (self.dof - 2.0))
        return s

    def marginal_cdf(self, index: int, x: float) -> float:
        z = (x - self.mean[index]) / self.marginal_scale(index)
        if self.kind == "mvt":
            return float(student_t_cdf(z, self.dof))
        return float(std_normal_cdf(z))

    def sample(self, n: int, stream: RngStream) -> np.ndarray:
        rng = stream.generator()
        L = np.linalg.cholesky(self.cov)
        z = rng.standard_normal((n, self.p))
        draws = self.mean + z @ L.T
        if self.kind == "mvt":
            g = rng.chisquare(self.dof, size=n) / self.dof
            draws = self.mean + (draws - self.mean) / np.sqrt(g)[:, None]
        return draws


@dataclasses.dataclass(frozen=True)
class ScaleMarginal:
    """Scaled-inverse-chi-square marginal for the scale parameter."""

    dof: int
    scale: float

    @property
    def mode(self) -> float:
        return self.dof * self.scale / (self.dof + 2.0)

    def sample(self, n: int, stream: RngStream) -> np.ndarray:
        rng = stream.generator()
        return self.dof * self.scale / rng.chisquare(self.dof, size=n)


@dataclasses.dataclass(frozen=True)
class LaplaceResult:
    beta_posterior: LaplacePosterior
    scale_marginal: Optional[ScaleMarginal]
    plugin: LaplacePosterior       # empirical-Bayes normal at phi_MAP
    phi_map: float


def laplace_posterior(fit: FitResult, scale_prior: Optional[ScalePriorSpec],
                      family) -> LaplaceResult:
    """Large-sample posterior for beta, with the scale marginalized out.

    Fixed-scale families give a normal with covariance equal to the unscaled
    covariance. Otherwise the scale marginal is scaled-inverse-chi-square with
    dof n-p (jeffreys prior) or n-p-2 (uniform prior) and scale D/dof; the
    beta marginal is multivariate-t with that dof and scale matrix
    (D/(n-p)) * cov_unscaled. The empirical-Bayes plug-in replaces the scale
    marginal by a point mass at phi_MAP = D/(n-p).
    """
    from .glm import _resolve_family

    family = _resolve_family(family)
    if fit.boundary:
        raise BoundaryError("posterior unavailable for a boundary fit")
    if not fit.converged:
        raise BoundaryError("posterior unavailable for a non-converged fit")
    if family.known_scale:
        post = LaplacePosterior(fit.beta_hat, fit.cov_unscaled, "normal")
        return LaplaceResult(post, None, post, 1.0)
    n, p = fit.n, fit.p
    kind = scale_prior.kind if scale_prior is not None else "jeffreys"
    dof = (n - p) if kind == "jeffreys" else (n - p - 2)
    if dof <= 0:
        raise DegreesOfFreedomError("scale marginal needs positive dof")
    phi_map = fit.deviance / (n - p)
    marginal = ScaleMarginal(dof, fit.deviance / dof)
    beta_post = LaplacePosterior(fit.beta_hat, phi_map * fit.cov_unscaled, "mvt", dof)
    plugin = LaplacePosterior(fit.beta_hat, phi_map * fit.cov_unscaled, "normal")
    return LaplaceResult(beta_post, marginal, plugin, phi_map)


def vectorized_loglik(family, link, data: ModelData, phi: float = 1.0) -> Callable:
    """Log likelihood accepting an (m, p) array of coefficient vectors."""
    family, link = _resolve(family, link)
    from .glm import _loglik_terms

    def ll(betas: np.ndarray) -> np.ndarray:
        betas = np.atleast_2d(np.asarray(betas, dtype=float))
        eta = betas @ data.X.T + data.offset
        mu = link.ginv(eta)
        ok = np.all(family.in_domain(mu), axis=1)
        out = np.full(betas.shape[0], -np.inf)
        if np.any(ok):
            terms = _loglik_terms(family, data.y, mu[ok], phi, data.weights)
            out[ok] = terms.sum(axis=1)
        return out

    return ll


@dataclasses.dataclass(frozen=True)
class GridPosterior:
    """Trapezoid-normalized posterior on a rectangular grid (p <= 3)."""

    axes: Tuple[np.ndarray, ...]
    log_density: np.ndarray        # unnormalized
    log_normalizer: float
    proper: bool

    @property
    def p(self) -> int:
        return len(self.axes)

    def density(self) -> np.ndarray:
        if not self.proper:
            raise SupportError("improper posterior: normalization withheld")
        return np.exp(self.log_density - self.log_normalizer)

    def marginal(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        """(grid, density) of the normalized marginal of parameter ``index``."""
        dens = self.density()
        for ax in reversed([i for i in range(self.p) if i != index]):
            dens = np.trapezoid(dens, self.axes[ax], axis=ax)
        norm = np.trapezoid(dens, self.axes[index])
        return self.axes[index], dens / norm

    def marginal_cdf_at(self, index: int, x0: float) -> float:
        grid, dens = self.marginal(index)
        mask = grid <= x0
        if not np.any(mask):
            return 0.0
        lower = float(np.trapezoid(dens[mask], grid[mask]))
        if mask.sum() < len(grid) and x0 > grid[mask][-1]:
            # partial cell up to x0
            g0, g1 = grid[mask][-1], grid[~mask][0]
            d0, d1 = dens[mask][-1], dens[~mask][0]
            f = (x0 - g0) / (g1 - g0)
            d_at = d0 + f * (d1 - d0)
            lower += 0.5 * (d0 + d_at) * (x0 - g0)
        return min(max(lower, 0.0), 1.0)

    def mean_sd(self, index: int) -> Tuple[float, float]:
        grid, dens = self.marginal(index)
        m = float(np.trapezoid(grid * dens, grid))
        v = float(np.trapezoid((grid - m) ** 2 * dens, grid))
        return m, math.sqrt(v)

    def sample(self, n: int, stream: RngStream) -> np.ndarray:
        """Draw from the grid by cell probabilities plus in-cell jitter."""
        dens = self.density()
        flat = dens.ravel()
        prob = flat / flat.sum()
        rng = stream.generator()
        idx = rng.choice(len(flat), size=n, p=prob)
        coords = np.unravel_index(idx, dens.shape)
        out = np.empty((n, self.p))
        for d in range(self.p):
            ax = self.axes[d]
            h = ax[1] - ax[0]
            out[:, d] = ax[coords[d]] + rng.uniform(-0.5, 0.5, size=n) * h
        return out


def _grid_tail_improper(axis: np.ndarray, log_marg: np.ndarray) -> bool:
    """Tail-decay test on a gridded marginal: flat, non-negligible tails."""
    peak = np.max(log_marg)
    h = axis[1] - axis[0]
    for end, prev in ((0, 1), (-1, -2)):
        if not (np.isfinite(log_marg[end]) and np.isfinite(log_marg[prev])):
            continue               # underflowed tail decays plenty fast
        val_ok = log_marg[end] - peak > math.log(1e-10)
        slope = abs(log_marg[end] - log_marg[prev]) / h
        if val_ok and slope < 0.05:
            return True
    return False


def grid_posterior(loglik: Callable, priors: Sequence[Optional[PriorSpec]],
                   bounds: Sequence[Tuple[float, float]], resolution: int = 801) -> GridPosterior:
    """Exact posterior on a rectangular grid under per-parameter priors.

    ``loglik`` takes an (m, p) array of coefficient vectors; a ``None`` prior
    entry means flat (constant) over the grid for that parameter. The result
    is marked improper (and left unnormalized) when any marginal fails the
    tail-decay test.
    """
    p = len(bounds)
    if p > 3 or p < 1:
        raise DomainError("grid posterior supports 1 <= p <= 3")
    if len(priors) != p:
        raise DomainError("need one prior (or None) per parameter")
    axes = tuple(np.linspace(lo, hi, resolution) for lo, hi in bounds)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    logpost = np.asarray(loglik(pts), dtype=float).reshape(mesh[0].shape)
    for i, spec in enumerate(priors):
        if spec is None:
            continue
        lp = np.asarray(prior_logpdf(spec, axes[i]), dtype=float)
        shape = [1] * p
        shape[i] = resolution
        logpost = logpost + lp.reshape(shape)
    if not np.any(np.isfinite(logpost)):
        raise SupportError("posterior is -inf everywhere on the grid")
    peak = np.max(logpost)
    dens = np.exp(logpost - peak)
    # impropriety: check each axis marginal of the unnormalized density
    improper = False
    for i in range(p):
        marg = dens
        for ax in reversed([j for j in range(p) if j != i]):
            marg = np.trapezoid(marg, axes[ax], axis=ax)
        with np.errstate(divide="ignore"):
            log_marg = np.log(marg)
        if _grid_tail_improper(axes[i], log_marg):
            improper = True
    norm = dens
    for i in reversed(range(p)):
        norm = np.trapezoid(norm, axes[i], axis=i)
    log_normalizer = peak + math.log(float(norm))
    return GridPosterior(axes, logpost, log_normalizer, not improper)


def detect_impropriety(marginal_loglik: Callable, direction: str = "both"):
    """Flag a univariate log density whose tail fails to decay.

    A tail is divergent-looking when its value at |beta| = 30 is above
    1e-10 x peak *and* the local log-density slope there is below 0.05 per
    unit. Heavy-but-integrable tails (e.g. Cauchy) pass via the slope test.
    """
    if direction not in ("left", "right", "both"):
        raise DomainError("direction must be left/right/both")
    grid = np.linspace(-40.0, 40.0, 3201)
    vals = np.array([float(marginal_loglik(float(b))) for b in grid])
    peak = float(np.max(vals))
    sides = []
    if direction in ("left", "both"):
        sides.append(-1.0)
    if direction in ("right", "both"):
        sides.append(1.0)
    evidence = []
    improper = False
    for sgn in sides:
        f30 = float(marginal_loglik(sgn * 30.0))
        f29 = float(marginal_loglik(sgn * 29.0))
        tall = f30 - peak > math.log(1e-10)
        flat = abs(f30 - f29) < 0.05
        side = "left" if sgn < 0 else "right"
        evidence.append(
            f"{side} tail: log-density {f30 - peak:.3f} below peak, slope {abs(f30 - f29):.4f}/unit"
        )
        if tall and flat:
            improper = True
    return {"improper": improper, "evidence": "; ".join(evidence)}


@dataclasses.dataclass(frozen=True)
class McmcChain:
    draws: np.ndarray
    acceptance_rate: float
    stream: RngStream
    burn_in: int


def rw_metropolis(log_post: Callable, init, proposal_cov, n_iter: int,
                  burn_in: int, stream: RngStream) -> McmcChain:
    """Gaussian random-walk Metropolis with pre-burn-in scale adaptation.

    The proposal scale adapts in blocks of 200 during the first half of
    burn-in toward an acceptance rate in [0.2, 0.5], then freezes, so the
    retained draws come from a fixed kernel. Deterministic given ``stream``.
    """
    init = np.atleast_1d(np.asarray(init, dtype=float))
    p = init.size
    cov = np.atleast_2d(np.asarray(proposal_cov, dtype=float))
    L = np.linalg.cholesky(cov)
    rng = stream.generator()
    lp0 = float(log_post(init))
    if not np.isfinite(lp0):
        raise DomainError("log_post is not finite at init")
    total = burn_in + n_iter
    draws = np.empty((total, p))
    cur, cur_lp = init.copy(), lp0
    scale = 2.38 / math.sqrt(p)
    adapt_end = burn_in // 2
    block = 200
    acc_block = 0
    acc_retained = 0
    normals = rng.standard_normal((total, p))
    unifs = np.log(rng.uniform(size=total))
    for t in range(total):
        prop = cur + scale * (L @ normals[t])
        lp = float(log_post(prop))
        if lp - cur_lp > unifs[t]:
            cur, cur_lp = prop, lp
            acc_block += 1
            if t >= burn_in:
                acc_retained += 1
        draws[t] = cur
        if t < adapt_end and (t + 1) % block == 0:
            rate = acc_block / block
            if rate < 0.2:
                scale *= 0.7
            elif rate > 0.5:
                scale *= 1.4
            acc_block = 0
        elif (t + 1) % block == 0:
            acc_block = 0
    rate = acc_retained / max(n_iter, 1)
    if rate == 0.0:
        raise MixingError("chain never moved after adaptation")
    return McmcChain(draws[burn_in:], rate, stream, burn_in)


def p_formula_density(fit: FitResult, family, link, data: ModelData,
                      beta_grid: Sequence[np.ndarray], phi: float = 1.0):
    """Normalized-likelihood density on a two-parameter grid.

    raw = (n/2pi)^{p/2} |avg information|^{1/2} exp(ll(beta) - ll(beta_hat));
    ``renormalized`` divides raw by its trapezoid integral over the grid.
    """
    family, link = _resolve(family, link)
    if fit.boundary or not fit.converged:
        raise BoundaryError("p-formula density needs a converged interior fit")
    if fit.p != 2 or len(beta_grid) != 2:
        raise DomainError("p-formula density supports exactly two parameters")
    ll = vectorized_loglik(family, link, data, phi)
    g0, g1 = (np.asarray(g, dtype=float) for g in beta_grid)
    mesh = np.meshgrid(g0, g1, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    ll_vals = ll(pts).reshape(len(g0), len(g1))
    ll_hat = float(ll(fit.beta_hat[None, :])[0])
    info = np.linalg.inv(fit.cov_unscaled) / phi  # total information
    n, p = fit.n, fit.p
    avg_info = info / n
    const = (n / (2.0 * math.pi)) ** (p / 2.0) * math.sqrt(np.linalg.det(avg_info))
    raw = const * np.exp(ll_vals - ll_hat)
    integral = np.trapezoid(np.trapezoid(raw, g1, axis=1), g0)
    return {"axes": (g0, g1), "raw": raw, "renormalized": raw / integral,
            "raw_integral": float(integral)}
