"""Simulation harness: ground truths, synthetic data, rate studies, small-ball MC.

Truths are smoothness-controlled functions of a few coordinates (sparse)
or of a few rotated coordinates (projected), normalized so the sup of
|f0| over the disc is 1.  Rate studies fit posterior-distance medians
against sample size on a log-log scale and report the fitted slope next
to the dimension-adaptive theory exponent -alpha / (2 alpha + d_active)
(one more in the denominator for conditional densities).  The small-ball
probe Monte-Carlo-estimates how much prior mass sits in sup-norm balls
around a truth on a fixed grid.

Every cell of a study derives its own random stream from the master seed
and its keys, so results are independent of execution order and worker
count.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .likelihoods import make_model_data, disc_lowdisc
from .metrics import hellinger, norm_n
from .mcmc import ChainSchedule, inclusion_probs, regression_f_draw, run_chain
from .priors import projection_matrix, sample_hyper
from .process import PointSet, build_gram, sample_path
from .seeding import derive_rng, derive_seed_sequence

__all__ = [
    "RateReport",
    "SmallBallEstimate",
    "Truth",
    "gen_data",
    "make_truth",
    "rotation_from_direction",
    "run_rate_study",
    "smallball_mc",
    "theory_exponent",
]

_V0_IDS = ("kink", "trig")
_TRUTH_KINDS = ("sparse", "projected")


@dataclass(frozen=True)
class Truth:
    """A generating function with its structural descriptors.

    ``mask`` marks the active coordinates (of the rotated input for the
    projected kind); ``rotation`` is the generating rotation (identity
    for sparse truths); ``alpha`` the smoothness index (np.inf for the
    smooth trig family).
    """

    kind: str
    alpha: float
    dim: int
    mask: np.ndarray
    rotation: np.ndarray
    v0_id: str
    scale: float

    @property
    def d_active(self):
        return int(self.mask.sum())

    @property
    def projection(self):
        return projection_matrix(self.mask, self.rotation)

    def reduced(self, t):
        """The low-dimensional profile v0 on active coordinates."""
        t = np.atleast_2d(np.asarray(t, dtype=np.float64))
        if self.v0_id == "kink":
            return (np.clip(t, 0.0, None) ** self.alpha).sum(axis=1) / self.scale
        return np.sin(2.0 * t.sum(axis=1) / np.sqrt(t.shape[1])) / self.scale

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        active = np.flatnonzero(self.mask)
        t = (x @ self.rotation.T)[:, active]
        return self.reduced(t)


def make_truth(kind, alpha, d, active_mask, v0_id="kink", rotation=None):
    """Build a normalized truth with known structure.

    Parameters
    ----------
    kind : {"sparse", "projected"}
    alpha : float
        Smoothness index; the kink family needs alpha in (0, 2), the
        trig family ignores it (treated as infinitely smooth).  The
        projected kind requires alpha > 1 (the theory does: rotated
        coordinates of a rougher function are not identifiable).
    d : int
        Ambient dimension.
    active_mask : sequence of 0/1
        Active coordinates (of the rotated input for "projected").
    v0_id : {"kink", "trig"}
        "kink" is an additive one-sided power |t|_+^alpha per active
        coordinate; "trig" a sine of the coordinate sum.
    rotation : ndarray, optional
        Generating rotation for the projected kind (identity default
        for sparse; required to be orthonormal).

    The result is scaled so sup |f0| over the disc equals 1.
    """
    if kind not in _TRUTH_KINDS:
        raise ValueError(f"unknown truth kind {kind!r}; choose from {_TRUTH_KINDS}")
    if v0_id not in _V0_IDS:
        raise ValueError(f"unknown profile {v0_id!r}; choose from {_V0_IDS}")
    mask = np.asarray(active_mask, dtype=np.int64)
    if mask.shape != (d,) or not np.all((mask == 0) | (mask == 1)):
        raise ValueError(f"active_mask must be a 0/1 vector of length {d}")
    d_active = int(mask.sum())
    if d_active == 0:
        raise ValueError("need at least one active coordinate")
    if v0_id == "kink":
        if not 0.0 < alpha < 2.0:
            raise ValueError(f"kink profiles need alpha in (0, 2), got {alpha}")
    else:
        alpha = np.inf
    if kind == "projected" and not alpha > 1.0:
        raise ValueError(
            f"projected truths need alpha > 1, got {alpha}"
        )
    if rotation is None:
        rotation = np.eye(d)
    else:
        rotation = np.asarray(rotation, dtype=np.float64)
        if rotation.shape != (d, d) or not np.allclose(
            rotation.T @ rotation, np.eye(d), atol=1e-10
        ):
            raise ValueError("rotation must be orthonormal")
    if kind == "sparse" and not np.allclose(rotation, np.eye(d)):
        raise ValueError("sparse truths use the identity rotation")

    # sup over the unit ball: the additive kink peaks either at a single
    # axis (value 1) or at equal positive coordinates (d_active^(1-alpha/2)).
    if v0_id == "kink":
        scale = max(1.0, float(d_active) ** (1.0 - alpha / 2.0))
    else:
        scale = 1.0  # sine reaches 1 inside the disc for every d_active
    return Truth(
        kind=kind,
        alpha=float(alpha),
        dim=d,
        mask=mask,
        rotation=rotation,
        v0_id=v0_id,
        scale=scale,
    )


def rotation_from_direction(direction):
    """Complete a unit vector to an orthonormal matrix whose first row is it."""
    w = np.asarray(direction, dtype=np.float64).ravel()
    nrm = np.linalg.norm(w)
    if nrm == 0:
        raise ValueError("direction must be nonzero")
    w = w / nrm
    d = w.shape[0]
    # Householder reflection mapping e1 to w gives the remaining rows.
    v = w.copy()
    v[0] -= 1.0
    if np.linalg.norm(v) < 1e-12:
        return np.eye(d)
    h = np.eye(d) - 2.0 * np.outer(v, v) / (v @ v)
    return h.T


def theory_exponent(alpha, d_active, denreg=False):
    """Dimension-adaptive contraction exponent -alpha/(2 alpha + d_active),
    with one more in the denominator for conditional densities."""
    extra = 1 if denreg else 0
    if math.isinf(alpha):
        return -0.5
    return -alpha / (2.0 * alpha + d_active + extra)


def _uniform_disc(n, d, rng):
    g = rng.standard_normal((n, d))
    nrm = np.sqrt((g**2).sum(axis=1))
    nrm[nrm == 0] = 1.0
    r = rng.random(n) ** (1.0 / d)
    return g * (r / nrm)[:, None]


def _link_cdf(f, link):
    if link == "probit":
        from scipy.special import ndtr

        return ndtr(f)
    return 1.0 / (1.0 + np.exp(-f))


def gen_data(
    kind,
    truth,
    n,
    seed,
    noise=0.1,
    link="logistic",
    design=None,
    quad_size=2048,
    u_size=64,
):
    """Generate a synthetic dataset from a truth.

    Regression adds Gaussian noise of scale ``noise``; classification
    draws Bernoulli responses through the link; the density kind draws
    covariate-free observations from the tilted density by rejection
    (the envelope uses sup f0 = 1; an acceptance rate under 1e-3 raises
    with diagnostics); the conditional kind inverts the per-x cdf of the
    tilted interval density on a fine grid.

    ``design``: "random" (iid uniform on the disc; the design law of the
    random-design theory) or "fixed" (deterministic low-discrepancy set);
    default is "fixed" for reg-fixed and "random" otherwise.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    rng = derive_rng(seed, "data") if not isinstance(seed, np.random.Generator) else seed
    d = truth.dim
    if design is None:
        design = "fixed" if kind == "reg-fixed" else "random"
    if design == "fixed":
        x = disc_lowdisc(d, n, seed=0)
    elif design == "random":
        x = _uniform_disc(n, d, rng)
    else:
        raise ValueError(f"unknown design {design!r}; choose random or fixed")

    if kind in ("reg-fixed", "reg-random"):
        if noise < 0:
            raise ValueError(f"noise scale must be >= 0, got {noise}")
        y = truth(x) + noise * rng.standard_normal(n)
        return make_model_data(kind, x, y)
    if kind == "classif":
        p = _link_cdf(truth(x), link)
        y = (rng.random(n) < p).astype(np.float64)
        return make_model_data(kind, x, y, link=link)
    if kind == "density":
        # rejection from the reference with envelope exp(f0) <= e
        kept = []
        attempts = 0
        accepted = 0
        while accepted < n:
            m = max(4 * (n - accepted), 256)
            cand = _uniform_disc(m, d, rng)
            keep = rng.random(m) < np.exp(truth(cand) - 1.0)
            attempts += m
            accepted += int(keep.sum())
            kept.append(cand[keep])
            if attempts >= 1000 and accepted < attempts * 1e-3:
                raise NumericalError(
                    f"density rejection acceptance rate "
                    f"{accepted}/{attempts} below 1e-3; envelope unusable"
                )
        x = np.concatenate(kept)[:n]
        return make_model_data("density", x, quad_size=quad_size)
    if kind == "denreg":
        # inverse-cdf sampling of the tilted interval density per covariate
        grid = (np.arange(1024) + 0.5) / 1024.0
        fvals = _denreg_truth_values(truth, x, grid)
        probs = np.exp(fvals - fvals.max(axis=1, keepdims=True))
        cdf = np.cumsum(probs, axis=1)
        cdf /= cdf[:, -1:]
        v = rng.random(n)
        idx = np.array([np.searchsorted(cdf[i], v[i]) for i in range(n)])
        lo = np.where(idx > 0, cdf[np.arange(n), idx - 1], 0.0)
        hi = cdf[np.arange(n), idx]
        frac = np.where(hi > lo, (v - lo) / np.maximum(hi - lo, 1e-300), 0.5)
        u = (idx + frac) / 1024.0
        u = np.clip(u, 1e-12, 1.0 - 1e-12)
        data = make_model_data("denreg", x, _normal_ppf(u), u_size=u_size)
        return data
    raise ValueError(f"unknown model kind {kind!r}")


def _normal_ppf(u):
    from scipy.special import ndtri

    return ndtri(u)


def _denreg_truth_values(truth, x, u):
    """f0 on the product of covariates and interval nodes: the truth acts
    on x and is modulated along u so conditional densities vary in x."""
    fx = truth(x)
    return fx[:, None] * (2.0 * u[None, :] - 1.0)


def denreg_truth_surface(truth):
    """(x, u) -> f0 surface used by gen_data and the rate metrics."""
    return lambda x, u: _denreg_truth_values(truth, x, u)


@dataclass(frozen=True)
class SmallBallEstimate:
    eps: float
    estimate: float
    ci_lo: float
    ci_hi: float


def _wilson(successes, total, z=1.959963984540054):
    p = successes / total
    denom = 1.0 + z**2 / total
    center = (p + z**2 / (2.0 * total)) / denom
    half = z * math.sqrt(p * (1.0 - p) / total + z**2 / (4.0 * total**2)) / denom
    # clamp roundoff so the interval always contains the point estimate
    return min(p, max(0.0, center - half)), max(p, min(1.0, center + half))


def smallball_mc(truth, hyper, eps_grid, grid_size=128, paths=10000, seed=0):
    """Prior mass of sup-norm balls around a truth on a fixed disc grid.

    Draws ``paths`` prior paths (hyperparameters included) on the first
    ``grid_size`` points of a fixed low-discrepancy disc set, records the
    max absolute deviation from f0 per path, and returns one estimate
    with a 95% Wilson interval per epsilon.  Estimates are monotone in
    epsilon by construction and shared-seed calls share paths, so grids
    or truths can be compared path-by-path.

    ``truth`` may be None for the zero function.
    """
    eps_grid = np.asarray(eps_grid, dtype=np.float64).ravel()
    if eps_grid.shape[0] == 0 or np.any(np.diff(eps_grid) <= 0):
        raise ValueError("eps_grid must be strictly increasing and nonempty")
    if eps_grid[0] <= 0:
        raise ValueError("epsilons must be positive")
    if paths < 1 or grid_size < 1:
        raise ValueError("need paths >= 1 and grid_size >= 1")
    grid = disc_lowdisc(hyper.dim, grid_size, seed=0)
    pts = PointSet(grid)
    f0 = np.zeros(grid_size) if truth is None else truth(grid)
    children = derive_seed_sequence(seed, "smallball").spawn(paths)
    devs = np.empty(paths)
    for p in range(paths):
        rng_p = np.random.default_rng(children[p])
        spec = sample_hyper(hyper, rng_p)
        gram = build_gram(pts, spec)
        path = sample_path(gram, rng_p)
        devs[p] = np.abs(path - f0).max()
    out = []
    for eps in eps_grid:
        hits = int((devs <= eps).sum())
        lo, hi = _wilson(hits, paths)
        out.append(SmallBallEstimate(float(eps), hits / paths, lo, hi))
    return out


@dataclass
class RateReport:
    """Posterior-contraction summary of one rate study."""

    kind: str
    n_grid: list
    median_err: list
    q90_err: list
    per_replicate: dict  # n -> list of per-replicate posterior medians
    slope: float
    slope_ci: tuple
    theory: float
    replicates: int
    failures: list = field(default_factory=list)
    sigma_abs_median: list | None = None
    inclusion: dict = field(default_factory=dict)  # n -> mean mask vector


def _posterior_distances(chain, data, truth, seed):
    """Distance to the truth for each retained snapshot, per model kind."""
    kind = data.kind
    rng = derive_rng(seed, "eval")
    snaps = chain.post_burn()
    out = np.empty(len(snaps))
    sig = np.empty(len(snaps))
    if kind in ("reg-fixed", "reg-random"):
        f0 = truth(data.x)
        from .process import ProjectionSpec

        for i, s in enumerate(snaps):
            sig[i] = s.sigma
            if chain.meta.get("marginalized"):
                spec = ProjectionSpec(
                    scale=s.scale,
                    mask=s.mask,
                    rotation=s.rotation,
                    extra_axis=False,
                )
                gram = build_gram(PointSet(data.x), spec)
                _, draw = regression_f_draw(gram, data.y, s.sigma, rng)
            else:
                draw = s.fvals
            out[i] = norm_n(draw, f0)
        return out, sig
    if kind == "classif":
        # design points are an iid draw from the design law
        f0 = truth(data.x)
        for i, s in enumerate(snaps):
            out[i] = norm_n(s.fvals, f0)
        return out, None
    if kind == "density":
        n = data.n
        log_gstar = data.gstar.log_pdf(data.quad_x)
        w = data.quad_w
        f0q = truth(data.quad_x)
        g0 = np.exp(log_gstar + f0q)
        g0 /= (w * g0).sum()
        for i, s in enumerate(snaps):
            g = np.exp(log_gstar + s.fvals[n:] - s.fvals[n:].max())
            g /= (w * g).sum()
            out[i] = hellinger(g, g0, w)
        return out, None
    # denreg: average Hellinger over the design points on the interval rule
    n, m = data.n, data.u_nodes.shape[0]
    w = data.u_weights
    f0q = _denreg_truth_values(truth, data.x, data.u_nodes)
    r0 = np.exp(f0q - f0q.max(axis=1, keepdims=True))
    r0 /= (r0 * w[None, :]).sum(axis=1, keepdims=True)
    for i, s in enumerate(snaps):
        fq = s.fvals[n:].reshape(n, m)
        r = np.exp(fq - fq.max(axis=1, keepdims=True))
        r /= (r * w[None, :]).sum(axis=1, keepdims=True)
        hsq = ((np.sqrt(r) - np.sqrt(r0)) ** 2 * w[None, :]).sum(axis=1)
        out[i] = math.sqrt(float(hsq.mean()))
    return out, None


def _fit_slope(ns, meds):
    logn = np.log(np.asarray(ns, dtype=np.float64))
    loge = np.log(np.asarray(meds, dtype=np.float64))
    a = np.stack([logn, np.ones_like(logn)], axis=1)
    coef, *_ = np.linalg.lstsq(a, loge, rcond=None)
    return float(coef[0])


def _bootstrap_slope_ci(n_grid, per_rep, seed, n_boot=1000):
    rng = derive_rng(seed, "bootstrap")
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        meds = []
        for n in n_grid:
            vals = np.asarray(per_rep[n])
            pick = vals[rng.integers(vals.shape[0], size=vals.shape[0])]
            meds.append(np.median(pick))
        slopes[b] = _fit_slope(n_grid, meds)
    return float(np.quantile(slopes, 0.025)), float(np.quantile(slopes, 0.975))


def run_rate_study(
    kind,
    truth,
    n_grid,
    replicates,
    seed,
    hyper,
    schedule_for=None,
    noise=0.1,
    link="logistic",
    quad_size=256,
    u_size=16,
):
    """Posterior contraction against sample size, with a fitted slope.

    One chain runs per (n, replicate) cell with its own derived seed;
    the posterior median and 0.9-quantile of the distance to the truth
    summarize each cell, medians across replicates summarize each n, and
    the slope of log median error on log n is fitted with a bootstrap
    confidence interval over replicates.

    ``schedule_for``: optional callable n -> ChainSchedule.  The default
    marginalizes the regression kinds; the other kinds run the latent
    sampler (keep their n_grid modest).

    A chain failure (NumericalError) marks its replicate failed and the
    study continues; more than 20% failures raise.
    """
    n_grid = [int(n) for n in n_grid]
    if sorted(n_grid) != n_grid or len(set(n_grid)) != len(n_grid):
        raise ValueError("n_grid must be strictly increasing")
    if replicates < 1:
        raise ValueError(f"need replicates >= 1, got {replicates}")
    reg = kind in ("reg-fixed", "reg-random")

    def default_schedule(n):
        if reg:
            return ChainSchedule(
                iterations=1500, thin=10, marginalized=True, sample_rotation=hyper.rotate
            )
        return ChainSchedule(
            iterations=1200, thin=10, sample_rotation=hyper.rotate
        )

    make_schedule = schedule_for or default_schedule
    per_rep = {n: [] for n in n_grid}
    per_rep_q90 = {n: [] for n in n_grid}
    per_rep_sigma = {n: [] for n in n_grid}
    per_rep_incl = {n: [] for n in n_grid}
    failures = []
    for n in n_grid:
        for rep in range(replicates):
            try:
                data = gen_data(
                    kind,
                    truth,
                    n,
                    derive_rng(seed, "cell", n, rep),
                    noise=noise,
                    link=link,
                    quad_size=quad_size,
                    u_size=u_size,
                )
                chain = run_chain(
                    data,
                    hyper,
                    make_schedule(n),
                    derive_rng(seed, "chain", n, rep),
                )
                dists, sig = _posterior_distances(
                    chain, data, truth, _int_key(seed, n, rep)
                )
            except NumericalError as exc:
                failures.append((n, rep, str(exc)))
                continue
            per_rep[n].append(float(np.median(dists)))
            per_rep_q90[n].append(float(np.quantile(dists, 0.9)))
            per_rep_incl[n].append(inclusion_probs(chain))
            if sig is not None:
                per_rep_sigma[n].append(float(np.median(np.abs(sig - noise))))
    total = len(n_grid) * replicates
    if len(failures) > 0.2 * total:
        raise NumericalError(
            f"{len(failures)}/{total} rate-study cells failed: {failures[:3]}"
        )
    usable = [n for n in n_grid if per_rep[n]]
    med = [float(np.median(per_rep[n])) for n in usable]
    q90 = [float(np.median(per_rep_q90[n])) for n in usable]
    slope = _fit_slope(usable, med)
    ci = _bootstrap_slope_ci(usable, per_rep, _int_key(seed, 0, 0))
    return RateReport(
        kind=kind,
        n_grid=usable,
        median_err=med,
        q90_err=q90,
        per_replicate={n: list(per_rep[n]) for n in usable},
        slope=slope,
        slope_ci=ci,
        theory=theory_exponent(
            truth.alpha, truth.d_active, denreg=(kind == "denreg")
        ),
        replicates=replicates,
        failures=failures,
        sigma_abs_median=[float(np.median(per_rep_sigma[n])) for n in usable]
        if reg
        else None,
        inclusion={
            n: np.mean(per_rep_incl[n], axis=0).tolist() for n in usable
        },
    )


def _int_key(seed, n, rep):
    """Integer key mixing the master seed with cell coordinates."""
    return int(derive_seed_sequence(seed, "evalseed", n, rep).generate_state(1)[0])
