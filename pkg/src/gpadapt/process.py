"""Squared-exponential process with rescaling, coordinate masking and rotation.

The base process has covariance ``exp(-||t - s||^2)``.  Inputs are first
rotated, masked coordinate-wise and rescaled, so the modelled function is
constant along directions the mask removes: two points x, z get identical
process values exactly when R x = R z for the projection
``R = rotation^T @ diag(mask) @ rotation``.  For the conditional-density
model an auxiliary interval coordinate is appended and rescaled by the
same factor.

Gram matrices are factorized on *representative* sites: sites whose
transformed inputs coincide (up to floating-point resolution of the
kernel) share one latent coordinate.  An all-zero mask therefore
collapses to a single constant latent, and sampled paths agree exactly at
points with equal projections instead of only up to the jitter scale.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import NumericalError

__all__ = [
    "JITTER_LADDER",
    "KernelGram",
    "PointSet",
    "ProjectionSpec",
    "build_gram",
    "effective_input",
    "path_from_white",
    "sample_path",
    "sq_exp_cov",
]

# Escalating diagonal boosts tried until the Cholesky factorization succeeds.
JITTER_LADDER = (1e-10, 1e-8, 1e-6, 1e-4)

# Transformed inputs closer than this are one site: the kernel cannot
# distinguish them in float64 (exp(-1e-18) rounds to 1.0).
_TIE_SQ_DIST = 1e-18


@dataclass(frozen=True)
class ProjectionSpec:
    """Input transformation of the process: rescale, mask, rotate.

    Parameters
    ----------
    scale : float
        Positive rescaling factor applied after masking.
    mask : ndarray of shape (d,)
        0/1 inclusion indicators for the rotated coordinates.
    rotation : ndarray of shape (d, d)
        Orthonormal matrix applied to inputs before masking.
    extra_axis : bool
        Whether an auxiliary interval coordinate (rescaled by ``scale``)
        is appended, as in the conditional-density model.
    """

    scale: float
    mask: np.ndarray
    rotation: np.ndarray
    extra_axis: bool = False

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=np.int64)
        rot = np.asarray(self.rotation, dtype=np.float64)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "scale", float(self.scale))
        if mask.ndim != 1:
            raise ValueError(f"mask must be a vector, got shape {mask.shape}")
        d = mask.shape[0]
        if rot.shape != (d, d):
            raise ValueError(
                f"rotation must be {d}x{d} to match the mask, got {rot.shape}"
            )
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask entries must be 0 or 1")
        if not np.allclose(rot.T @ rot, np.eye(d), atol=1e-10):
            raise ValueError("rotation is not orthonormal within 1e-10")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if mask.sum() == 0 and not self.extra_axis and self.scale != 1.0:
            # With nothing selected the rescaling is unidentifiable; the
            # prior pins it at exactly 1.
            raise ValueError("scale must equal 1 exactly when the mask is all zeros")

    @property
    def dim(self):
        return self.mask.shape[0]

    @property
    def active_count(self):
        return int(self.mask.sum())


@dataclass(frozen=True)
class PointSet:
    """Evaluation sites: covariates in the unit disc, optional aux coordinate.

    ``x`` has shape (n, d); ``aux`` (present iff the process has an extra
    axis) holds the interval coordinate of each site, in [0, 1].
    """

    x: np.ndarray
    aux: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        object.__setattr__(self, "x", x)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError(f"x must be a nonempty (n, d) array, got shape {x.shape}")
        norms = np.sqrt((x**2).sum(axis=1))
        if norms.max() > 1 + 1e-9:
            raise ValueError(
                f"covariates must lie in the unit disc; max norm {norms.max():.6g}"
            )
        if self.aux is not None:
            aux = np.asarray(self.aux, dtype=np.float64).ravel()
            object.__setattr__(self, "aux", aux)
            if aux.shape[0] != x.shape[0]:
                raise ValueError("aux must have one entry per point")
            if aux.min() < 0.0 or aux.max() > 1.0:
                raise ValueError("aux coordinates must lie in [0, 1]")

    def __len__(self):
        return self.x.shape[0]


@dataclass(frozen=True)
class KernelGram:
    """Kernel matrix of a point set plus its (deduplicated) Cholesky factor.

    ``matrix`` is the raw n x n kernel (diagonal exactly 1).  ``chol`` is
    the lower-triangular factor of ``matrix[rep][:, rep] + jitter * I``
    over the ``m <= n`` representative sites; ``site_map[i]`` gives the
    representative index of site i.  For tie-free point sets m == n and
    ``chol @ chol.T`` reproduces ``matrix + jitter * I``.
    """

    matrix: np.ndarray
    jitter: float
    chol: np.ndarray
    rep_index: np.ndarray
    site_map: np.ndarray

    @property
    def n_sites(self):
        return self.matrix.shape[0]

    @property
    def latent_dim(self):
        return self.rep_index.shape[0]


def effective_input(x, spec, u=None):
    """Transformed process input diag(scale * mask) @ (rotation @ x) [, scale * u].

    Parameters
    ----------
    x : ndarray of shape (d,) or (n, d)
        Point(s) in the unit disc.
    spec : ProjectionSpec
    u : float or ndarray of shape (n,), optional
        Auxiliary coordinate(s); required iff ``spec.extra_axis``.

    Returns
    -------
    ndarray of shape (k,) or (n, k) with k = d (+1 with the extra axis).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != spec.dim:
        raise ValueError(
            f"points have dimension {pts.shape[1]}, spec expects {spec.dim}"
        )
    if spec.extra_axis and u is None:
        raise ValueError("spec has an extra axis but no aux coordinate was given")
    if not spec.extra_axis and u is not None:
        raise ValueError("aux coordinate given but spec has no extra axis")
    out = (pts @ spec.rotation.T) * (spec.scale * spec.mask)
    if spec.extra_axis:
        ucol = np.broadcast_to(
            np.asarray(u, dtype=np.float64).ravel(), (pts.shape[0],)
        )
        out = np.concatenate([out, spec.scale * ucol[:, None]], axis=1)
    return out[0] if single else out


def sq_exp_cov(t, s):
    """exp(-||t - s||^2) for transformed inputs of equal length."""
    t = np.asarray(t, dtype=np.float64).ravel()
    s = np.asarray(s, dtype=np.float64).ravel()
    if t.shape != s.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {s.shape}")
    return float(np.exp(-((t - s) ** 2).sum()))


def _representatives(t, sq):
    """First-occurrence grouping of rows of t closer than the tie threshold."""
    n = t.shape[0]
    if n > 1:
        off = sq + np.diag(np.full(n, np.inf))
        if off.min() > _TIE_SQ_DIST:
            # Generic point set: every site is its own representative.
            idx = np.arange(n, dtype=np.int64)
            return idx, idx.copy()
    reps = [0]
    site_map = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        d2 = ((t[reps] - t[i]) ** 2).sum(axis=1)
        j = int(np.argmin(d2))
        if d2[j] <= _TIE_SQ_DIST:
            site_map[i] = j
        else:
            site_map[i] = len(reps)
            reps.append(i)
    return np.asarray(reps, dtype=np.int64), site_map


def build_gram(pts, spec):
    """Kernel matrix and Cholesky factor for a point set under a spec.

    Entry (i, j) is ``sq_exp_cov`` of the transformed inputs of sites i
    and j.  The factorization adds the smallest jitter from
    ``JITTER_LADDER`` that makes the representative-site matrix positive
    definite.

    Raises
    ------
    NumericalError
        If the factorization fails at every rung; carries the ladder.
    """
    if spec.extra_axis:
        if pts.aux is None:
            raise ValueError("spec has an extra axis but the point set has no aux")
        t = effective_input(pts.x, spec, pts.aux)
    else:
        if pts.aux is not None:
            raise ValueError("point set has aux coordinates but spec has no extra axis")
        t = effective_input(pts.x, spec)
    t = np.atleast_2d(t)
    sq = cdist(t, t, "sqeuclidean")
    matrix = np.exp(-sq)
    np.fill_diagonal(matrix, 1.0)

    rep_index, site_map = _representatives(t, sq)
    kern = matrix[np.ix_(rep_index, rep_index)]
    eye = np.eye(rep_index.shape[0])
    for jitter in JITTER_LADDER:
        try:
            chol = np.linalg.cholesky(kern + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        return KernelGram(
            matrix=matrix,
            jitter=jitter,
            chol=chol,
            rep_index=rep_index,
            site_map=site_map,
        )
    raise NumericalError(
        f"Gram factorization failed for {rep_index.shape[0]} representative sites "
        f"at every jitter rung",
        ladder=JITTER_LADDER,
    )


def path_from_white(gram, white):
    """Path values from whitened coordinates: (chol @ white[:m]) at every site.

    ``white`` may be longer than the latent dimension m; only the leading
    m coordinates feed the factor, so one fixed-length vector serves
    every projection spec over the same sites.
    """
    white = np.asarray(white, dtype=np.float64).ravel()
    m = gram.latent_dim
    if white.shape[0] < m:
        raise ValueError(
            f"need at least {m} whitened coordinates, got {white.shape[0]}"
        )
    return (gram.chol @ white[:m])[gram.site_map]


def sample_path(gram, rng):
    """Draw process values at the gram's sites: mean zero, covariance
    ``matrix + jitter * I`` on representative sites, exact equality on ties."""
    return path_from_white(gram, rng.standard_normal(gram.latent_dim))
