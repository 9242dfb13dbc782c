"""Distances used to compare posterior draws with the generating truth.

Empirical and design-law L2 norms for regression functions, Hellinger
distance for densities on a quadrature rule, its design-law average for
conditional densities, and projection-matrix distances for recovered
subspaces.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MetricReport",
    "hellinger",
    "norm_gx",
    "norm_n",
    "proj_distance",
    "rho_gx",
]


@dataclass(frozen=True)
class MetricReport:
    """A named distance value with a Monte-Carlo standard error when
    the value itself is an MC estimate (None otherwise)."""

    name: str
    value: float
    mc_se: float | None = None


def norm_n(f, g):
    """Empirical L2 distance sqrt(mean (f_i - g_i)^2) of two value vectors."""
    f = np.asarray(f, dtype=np.float64).ravel()
    g = np.asarray(g, dtype=np.float64).ravel()
    if f.shape != g.shape:
        raise ValueError(f"length mismatch: {f.shape} vs {g.shape}")
    if f.shape[0] == 0:
        raise ValueError("empty value vectors")
    return float(np.sqrt(np.mean((f - g) ** 2)))


def _sqrt_mean_with_se(sq):
    """sqrt of the mean of sq, with a delta-method standard error."""
    mean = float(np.mean(sq))
    value = float(np.sqrt(mean))
    if sq.shape[0] < 2 or mean == 0.0:
        return value, 0.0
    se_mean = float(np.std(sq, ddof=1) / np.sqrt(sq.shape[0]))
    return value, se_mean / (2.0 * value)


def norm_gx(f, g, xs):
    """Design-law L2 distance of two functions, MC-estimated at xs.

    ``f`` and ``g`` map an (N, d) array to N values; ``xs`` is a sample
    from the design law.  Returns a MetricReport with a delta-method
    standard error.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    diff = np.asarray(f(xs), dtype=np.float64).ravel() - np.asarray(
        g(xs), dtype=np.float64
    ).ravel()
    if diff.shape[0] != xs.shape[0]:
        raise ValueError("function handles must return one value per point")
    value, se = _sqrt_mean_with_se(diff**2)
    return MetricReport(name="norm_gx", value=value, mc_se=se)


def hellinger(g1, g2, weights):
    """Hellinger distance sqrt(sum_j w_j (sqrt(g1_j) - sqrt(g2_j))^2)
    of two densities evaluated on a common quadrature rule."""
    g1 = np.asarray(g1, dtype=np.float64).ravel()
    g2 = np.asarray(g2, dtype=np.float64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if not (g1.shape == g2.shape == weights.shape):
        raise ValueError(
            f"shape mismatch: {g1.shape}, {g2.shape}, weights {weights.shape}"
        )
    if g1.shape[0] == 0:
        raise ValueError("empty quadrature rule")
    if g1.min() < 0 or g2.min() < 0:
        raise ValueError("densities must be nonnegative")
    return float(np.sqrt((weights * (np.sqrt(g1) - np.sqrt(g2)) ** 2).sum()))


def rho_gx(c1, c2, xs, u_nodes, u_weights):
    """Design-law average Hellinger distance between conditional densities.

    ``c1`` and ``c2`` map (xs, u_nodes) to an (N, m) array of
    reference-substituted conditional densities on the unit interval;
    the squared Hellinger distances per x are averaged over xs and the
    root returned with a delta-method standard error.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    u_weights = np.asarray(u_weights, dtype=np.float64).ravel()
    r1 = np.asarray(c1(xs, u_nodes), dtype=np.float64)
    r2 = np.asarray(c2(xs, u_nodes), dtype=np.float64)
    want = (xs.shape[0], u_weights.shape[0])
    if r1.shape != want or r2.shape != want:
        raise ValueError(
            f"conditional-density handles must return {want}, "
            f"got {r1.shape} and {r2.shape}"
        )
    if r1.min() < 0 or r2.min() < 0:
        raise ValueError("densities must be nonnegative")
    hsq = ((np.sqrt(r1) - np.sqrt(r2)) ** 2 * u_weights[None, :]).sum(axis=1)
    value, se = _sqrt_mean_with_se(hsq)
    return MetricReport(name="rho_gx", value=value, mc_se=se)


def _check_projection(r, name):
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"{name} must be square, got shape {r.shape}")
    if not np.allclose(r, r.T, atol=1e-8) or not np.allclose(r @ r, r, atol=1e-8):
        raise ValueError(f"{name} is not a projection matrix within 1e-8")
    return r


def proj_distance(r1, r2, norm="frobenius"):
    """Frobenius or spectral distance between two projection matrices."""
    r1 = _check_projection(r1, "r1")
    r2 = _check_projection(r2, "r2")
    if r1.shape != r2.shape:
        raise ValueError(f"shape mismatch: {r1.shape} vs {r2.shape}")
    if norm == "frobenius":
        return float(np.linalg.norm(r1 - r2, "fro"))
    if norm == "spectral":
        return float(np.linalg.norm(r1 - r2, 2))
    raise ValueError(f"unknown norm {norm!r}; choose frobenius or spectral")
