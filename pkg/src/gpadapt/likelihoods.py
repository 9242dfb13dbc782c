"""Log-likelihoods of the four observation models, plus their ingredients.

Kinds
-----
``reg-fixed`` / ``reg-random``
    Gaussian mean regression, y_i = f(x_i) + sigma * noise; sigma has a
    uniform prior on a compact interval.  A marginal form integrating f
    out against the process prior is provided for hyperparameter moves.
``classif``
    Bernoulli with a probit or logistic link on f.
``density``
    Exponentially tilted reference density on the unit disc,
    g = gstar * exp(f) / normalizer, the normalizer evaluated on a fixed
    quadrature rule over the disc.
``denreg``
    Conditional densities g(y | x) = gstar(y) * exp(f(x, G(y))) / Z(x)
    where G is the reference cdf; the substitution u = G(y) turns Z(x)
    into the integral of exp(f(x, u)) over the unit interval, evaluated
    with a Gauss-Legendre rule.

All likelihoods are invariant (per point, for the density kinds) under
constant shifts of f wherever a normalizer absorbs them.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaln, log_ndtr, logsumexp, ndtr, ndtri
from scipy.stats import qmc

from .errors import ConfigError, NumericalError

__all__ = [
    "ModelData",
    "NormalReference",
    "SigmaPrior",
    "UniformDisc",
    "class_loglik",
    "denreg_loglik",
    "density_log_normalizer",
    "density_loglik",
    "disc_rule",
    "disc_lowdisc",
    "disc_volume",
    "make_model_data",
    "reg_loglik",
    "reg_marginal_loglik",
    "unit_interval_rule",
]

MODEL_KINDS = ("reg-fixed", "reg-random", "classif", "density", "denreg")
LINKS = ("probit", "logistic")


@dataclass(frozen=True)
class SigmaPrior:
    """Uniform prior for the regression noise scale on [lo, hi]."""

    lo: float = 0.05
    hi: float = 5.0

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ValueError(f"need 0 < lo < hi, got [{self.lo}, {self.hi}]")

    def contains(self, sigma):
        return self.lo <= sigma <= self.hi

    def log_pdf(self, sigma):
        if not self.contains(sigma):
            return -np.inf
        return -np.log(self.hi - self.lo)

    @property
    def midpoint(self):
        return 0.5 * (self.lo + self.hi)


def disc_volume(d):
    """Volume of the d-dimensional unit disc."""
    return float(np.exp(0.5 * d * np.log(np.pi) - gammaln(0.5 * d + 1.0)))


@dataclass(frozen=True)
class UniformDisc:
    """Uniform reference density on the unit disc."""

    dim: int

    def log_pdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        norms = (x**2).sum(axis=1)
        if norms.max() > 1 + 1e-9:
            raise ValueError("point outside the unit disc")
        return np.full(x.shape[0], -np.log(disc_volume(self.dim)))

    def pdf(self, x):
        return np.exp(self.log_pdf(x))


class NormalReference:
    """Standard-normal reference measure for the conditional-density model."""

    def log_pdf(self, y):
        y = np.asarray(y, dtype=np.float64)
        return -0.5 * y**2 - 0.5 * np.log(2.0 * np.pi)

    def pdf(self, y):
        return np.exp(self.log_pdf(y))

    def cdf(self, y):
        return ndtr(np.asarray(y, dtype=np.float64))

    def ppf(self, u):
        return ndtri(np.asarray(u, dtype=np.float64))


def _sobol(d, m, seed):
    # draw a full power-of-two block and truncate: the leading points are
    # identical and the balance warning for odd sizes goes away
    k = max(0, int(np.ceil(np.log2(m))))
    return qmc.Sobol(d, scramble=True, seed=seed).random_base2(k)[:m]


def disc_lowdisc(d, m, seed=0):
    """m low-discrepancy points in the d-dimensional unit disc.

    Scrambled Sobol, pushed through a smooth equal-volume map for
    d <= 3 (linear, polar, spherical); rejection from the enclosing cube
    for d >= 4.  Nested: the first k points for the same seed are the
    k-point set.
    """
    if d < 1 or m < 1:
        raise ValueError(f"need d >= 1 and m >= 1, got d={d}, m={m}")
    if d == 1:
        u = _sobol(1, m, seed)
        return 2.0 * u - 1.0
    if d == 2:
        u = _sobol(2, m, seed)
        r = np.sqrt(u[:, 0])
        th = 2.0 * np.pi * u[:, 1]
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    if d == 3:
        u = _sobol(3, m, seed)
        r = u[:, 0] ** (1.0 / 3.0)
        c = 1.0 - 2.0 * u[:, 1]
        s = np.sqrt(np.clip(1.0 - c**2, 0.0, None))
        th = 2.0 * np.pi * u[:, 2]
        return np.stack([r * s * np.cos(th), r * s * np.sin(th), r * c], axis=1)
    eng = qmc.Sobol(d, scramble=True, seed=seed)
    kept = []
    total = 0
    while total < m:
        x = 2.0 * eng.random(4096) - 1.0
        x = x[(x**2).sum(axis=1) <= 1.0]
        kept.append(x)
        total += x.shape[0]
    return np.concatenate(kept)[:m]


def disc_rule(d, m=2048, seed=0):
    """Quadrature nodes and weights for integrals over the unit disc.

    d = 1 uses a Gauss-Legendre rule on [-1, 1] (m nodes); higher d uses
    ``disc_lowdisc`` nodes with equal weights vol / m.
    """
    if d == 1:
        t, w = leggauss(m)
        return t[:, None], w
    nodes = disc_lowdisc(d, m, seed=seed)
    return nodes, np.full(m, disc_volume(d) / m)


def unit_interval_rule(m=64):
    """Gauss-Legendre nodes and weights on [0, 1]; weights sum to 1."""
    t, w = leggauss(m)
    return 0.5 * (t + 1.0), 0.5 * w


@dataclass(frozen=True)
class ModelData:
    """One dataset plus everything its likelihood needs.

    ``quad_x`` / ``quad_w`` hold the disc rule for the density kind;
    ``u_data`` / ``u_nodes`` / ``u_weights`` the interval rule and the
    reference-cdf-transformed responses for the conditional-density
    kind.  ``sigma_prior`` is present for the regression kinds.
    """

    kind: str
    x: np.ndarray
    y: np.ndarray | None = None
    link: str = "logistic"
    gstar: object | None = None
    sigma_prior: SigmaPrior | None = None
    quad_x: np.ndarray | None = None
    quad_w: np.ndarray | None = None
    u_data: np.ndarray | None = None
    u_nodes: np.ndarray | None = None
    u_weights: np.ndarray | None = None

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]


def make_model_data(
    kind,
    x,
    y=None,
    link="logistic",
    gstar=None,
    sigma_prior=None,
    quad_size=2048,
    u_size=64,
    quad_seed=0,
):
    """Validate raw arrays and assemble a ModelData for the given kind."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("need at least one observation")
    norms = np.sqrt((x**2).sum(axis=1))
    if norms.max() > 1 + 1e-9:
        raise ValueError(
            f"covariates must lie in the unit disc; max norm {norms.max():.6g}"
        )
    if kind == "density":
        if y is not None:
            raise ValueError("the density kind has no responses")
        if gstar is None:
            gstar = UniformDisc(x.shape[1])
        quad_x, quad_w = disc_rule(x.shape[1], quad_size, seed=quad_seed)
        return ModelData(kind=kind, x=x, gstar=gstar, quad_x=quad_x, quad_w=quad_w)

    y = np.asarray(y, dtype=np.float64).ravel() if y is not None else None
    if y is None or y.shape[0] != x.shape[0]:
        raise ValueError("responses must be given, one per covariate row")

    if kind in ("reg-fixed", "reg-random"):
        return ModelData(
            kind=kind, x=x, y=y, sigma_prior=sigma_prior or SigmaPrior()
        )
    if kind == "classif":
        if link not in LINKS:
            raise ValueError(f"unknown link {link!r}; choose from {LINKS}")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("classification responses must be 0 or 1")
        return ModelData(kind=kind, x=x, y=y, link=link)

    # denreg
    if gstar is None:
        gstar = NormalReference()
    u = gstar.cdf(y)
    clip = (u <= 0.0) | (u >= 1.0)
    if clip.any():
        warnings.warn(
            f"{int(clip.sum())} response(s) fall outside the numerically invertible "
            f"range of the reference cdf; clamped",
            RuntimeWarning,
            stacklevel=2,
        )
        u = np.clip(u, 1e-12, 1.0 - 1e-12)
    nodes, wts = unit_interval_rule(u_size)
    return ModelData(
        kind=kind, x=x, y=y, gstar=gstar, u_data=u, u_nodes=nodes, u_weights=wts
    )


def reg_loglik(fvals, data, sigma):
    """Gaussian regression log-likelihood at latent values fvals."""
    if data.kind not in ("reg-fixed", "reg-random"):
        raise ValueError(f"regression likelihood called on kind {data.kind!r}")
    if not data.sigma_prior.contains(sigma):
        raise ValueError(
            f"sigma={sigma} outside the prior support "
            f"[{data.sigma_prior.lo}, {data.sigma_prior.hi}]"
        )
    fvals = np.asarray(fvals, dtype=np.float64).ravel()
    if fvals.shape[0] != data.n:
        raise ValueError(f"expected {data.n} latent values, got {fvals.shape[0]}")
    resid = data.y - fvals
    n = data.n
    return float(
        -n * np.log(sigma)
        - 0.5 * (resid @ resid) / sigma**2
        - 0.5 * n * np.log(2.0 * np.pi)
    )


def reg_marginal_loglik(data, gram, sigma):
    """Regression log-likelihood with the latent function integrated out.

    y ~ N(0, K + sigma^2 I) for the raw kernel matrix K; evaluated by
    Cholesky.  Raises NumericalError if the factorization fails.
    """
    if data.kind not in ("reg-fixed", "reg-random"):
        raise ValueError(f"regression likelihood called on kind {data.kind!r}")
    if not data.sigma_prior.contains(sigma):
        raise ValueError(
            f"sigma={sigma} outside the prior support "
            f"[{data.sigma_prior.lo}, {data.sigma_prior.hi}]"
        )
    n = data.n
    cov = gram.matrix + sigma**2 * np.eye(n)
    try:
        factor = cho_factor(cov, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"marginal covariance factorization failed: {exc}") from exc
    alpha = cho_solve(factor, data.y, check_finite=False)
    logdet = 2.0 * np.log(np.diag(factor[0])).sum()
    return float(
        -0.5 * (data.y @ alpha) - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi)
    )


def _log_link_cdf(fvals, link):
    """log P(y=1|f) and log P(y=0|f), stable in both tails."""
    if link == "probit":
        return log_ndtr(fvals), log_ndtr(-fvals)
    if link == "logistic":
        return -np.logaddexp(0.0, -fvals), -np.logaddexp(0.0, fvals)
    raise ValueError(f"unknown link {link!r}; choose from {LINKS}")


def class_loglik(fvals, data):
    """Bernoulli log-likelihood under the data's link."""
    if data.kind != "classif":
        raise ValueError(f"classification likelihood called on kind {data.kind!r}")
    fvals = np.asarray(fvals, dtype=np.float64).ravel()
    if fvals.shape[0] != data.n:
        raise ValueError(f"expected {data.n} latent values, got {fvals.shape[0]}")
    log_p1, log_p0 = _log_link_cdf(fvals, data.link)
    return float((data.y * log_p1 + (1.0 - data.y) * log_p0).sum())


def density_log_normalizer(f_quad, data):
    """log of the tilted normalizer sum_j w_j gstar(z_j) exp(f(z_j))."""
    w = data.quad_w
    if w is None or not np.any(w > 0):
        raise ConfigError("density quadrature has no positive weights")
    f_quad = np.asarray(f_quad, dtype=np.float64).ravel()
    if f_quad.shape[0] != w.shape[0]:
        raise ValueError(
            f"expected {w.shape[0]} quadrature values, got {f_quad.shape[0]}"
        )
    # max-subtraction inside logsumexp keeps large f from overflowing
    return float(logsumexp(f_quad + data.gstar.log_pdf(data.quad_x), b=w))


def density_loglik(f_data, f_quad, data):
    """Log-likelihood of the tilted density model.

    ``f_data`` are latent values at the observations, ``f_quad`` at the
    quadrature nodes of ``data``.
    """
    if data.kind != "density":
        raise ValueError(f"density likelihood called on kind {data.kind!r}")
    f_data = np.asarray(f_data, dtype=np.float64).ravel()
    if f_data.shape[0] != data.n:
        raise ValueError(f"expected {data.n} latent values, got {f_data.shape[0]}")
    log_norm = density_log_normalizer(f_quad, data)
    return float(
        (data.gstar.log_pdf(data.x) + f_data).sum() - data.n * log_norm
    )


def denreg_loglik(f_data, f_quad, data):
    """Log-likelihood of the conditional-density model.

    ``f_data`` holds f(x_i, G(y_i)); ``f_quad`` has shape (n, m) with
    f(x_i, u_j) on the interval rule, whose normalizer equals the
    reference-substituted integral exactly.
    """
    if data.kind != "denreg":
        raise ValueError(f"conditional-density likelihood called on kind {data.kind!r}")
    f_data = np.asarray(f_data, dtype=np.float64).ravel()
    f_quad = np.asarray(f_quad, dtype=np.float64)
    n, m = data.n, data.u_nodes.shape[0]
    if f_data.shape[0] != n or f_quad.shape != (n, m):
        raise ValueError(
            f"expected latent shapes ({n},) and ({n}, {m}), "
            f"got {f_data.shape} and {f_quad.shape}"
        )
    log_z = logsumexp(f_quad, b=data.u_weights[None, :], axis=1)
    return float(
        (data.gstar.log_pdf(data.y) + f_data - log_z).sum()
    )
