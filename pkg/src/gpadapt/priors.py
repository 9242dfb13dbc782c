"""Hyperprior over the input transformation: mask, rotation, rescale factor.

The mask has iid Bernoulli entries; the rotation is Haar on the
orthogonal group; given mask and rotation, the rescale factor raised to
the number of active axes (mask count, plus one for the extra axis) is
Gamma.  With nothing active and no extra axis the factor is degenerate
at 1.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import NumericalError
from .process import ProjectionSpec

__all__ = [
    "HyperConfig",
    "active_axes",
    "cayley",
    "projection_matrix",
    "propose_rotation",
    "rescale_log_density",
    "sample_hyper",
    "sample_orthogonal",
]


@dataclass(frozen=True)
class HyperConfig:
    """Hyperprior parameters.

    ``gamma_shape`` must be at least 1 (the small-ball arguments the
    rate theory rests on need it); ``gamma_rate`` positive;
    ``p_incl`` in (0, 1).  ``rotate=False`` pins the rotation at the
    identity (the pure variable-selection variant).
    """

    dim: int
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0
    p_incl: float = 0.5
    extra_axis: bool = False
    rotate: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not self.gamma_shape >= 1.0:
            raise ValueError(f"gamma_shape must be >= 1, got {self.gamma_shape}")
        if not self.gamma_rate > 0.0:
            raise ValueError(f"gamma_rate must be positive, got {self.gamma_rate}")
        if not 0.0 < self.p_incl < 1.0:
            raise ValueError(f"p_incl must lie in (0, 1), got {self.p_incl}")


def active_axes(mask_count, extra_axis):
    """Number of axes the rescale factor acts on."""
    return int(mask_count) + (1 if extra_axis else 0)


def rescale_log_density(a, m, gamma_shape=1.0, gamma_rate=1.0):
    """Log density of the rescale factor given m >= 1 active axes.

    The factor is S**(1/m) for S ~ Gamma(shape, rate), so the density at
    a is m * rate**shape * a**(m*shape - 1) * exp(-rate * a**m) / Gamma(shape).
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    a = np.asarray(a, dtype=np.float64)
    if not np.all(a > 0):
        raise ValueError(f"rescale factor must be positive, got {a}")
    out = (
        np.log(m)
        + gamma_shape * np.log(gamma_rate)
        + (m * gamma_shape - 1.0) * np.log(a)
        - gamma_rate * a**m
        - gammaln(gamma_shape)
    )
    return float(out) if out.ndim == 0 else out


def sample_orthogonal(d, rng):
    """Haar-distributed d x d orthogonal matrix (sign-corrected QR)."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    g = rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    # Fixing the signs of R's diagonal makes the QR map Haar-invariant.
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample_hyper(cfg, rng):
    """Draw a ProjectionSpec from the hyperprior."""
    mask = (rng.random(cfg.dim) < cfg.p_incl).astype(np.int64)
    if cfg.rotate:
        rotation = sample_orthogonal(cfg.dim, rng)
    else:
        rotation = np.eye(cfg.dim)
    m = active_axes(mask.sum(), cfg.extra_axis)
    if m >= 1:
        s = rng.gamma(cfg.gamma_shape, 1.0 / cfg.gamma_rate)
        scale = s ** (1.0 / m)
    else:
        scale = 1.0
    return ProjectionSpec(
        scale=scale, mask=mask, rotation=rotation, extra_axis=cfg.extra_axis
    )


def projection_matrix(mask, rotation):
    """R = rotation^T @ diag(mask) @ rotation; symmetric idempotent,
    trace equal to the mask count."""
    mask = np.asarray(mask, dtype=np.float64)
    rotation = np.asarray(rotation, dtype=np.float64)
    return rotation.T @ (mask[:, None] * rotation)


def cayley(skew):
    """Cayley transform (I - S/2)^-1 (I + S/2); orthogonal for skew S."""
    skew = np.asarray(skew, dtype=np.float64)
    d = skew.shape[0]
    eye = np.eye(d)
    try:
        return np.linalg.solve(eye - 0.5 * skew, eye + 0.5 * skew)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cayley transform solve failed: {exc}") from exc


def _random_skew(d, rng):
    g = rng.standard_normal((d, d))
    upper = np.triu(g, k=1)
    return upper - upper.T


def propose_rotation(rotation, step, rng):
    """Random-walk rotation proposal q @ cayley(step * S), S random skew.

    The skew has independent standard-normal upper-triangle entries, so
    (q, S) -> (q', -S) is a measure-preserving involution and the
    proposal is symmetric.  Determinant is preserved.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    last = None
    for _ in range(5):
        try:
            return rotation @ cayley(step * _random_skew(rotation.shape[0], rng))
        except NumericalError as exc:  # singular (I - S/2); essentially never
            last = exc
    raise NumericalError(f"rotation proposal failed 5 times: {last}")
