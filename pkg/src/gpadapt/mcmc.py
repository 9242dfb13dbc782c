"""Posterior sampling: whitened elliptical slice plus Metropolis-within-Gibbs.

The latent path is parameterized by whitened coordinates eta with a
standard-normal prior; path values are chol(gram) @ eta, so hyperparameter
moves transport the latent function through the new covariance ("whitened"
moves).  eta keeps one coordinate per site even when ties shrink the
factor; the unused tail stays standard normal and costs nothing.

Moves per iteration: one elliptical-slice sweep of eta (latent mode), a
log-random-walk on the rescale factor, single-coordinate mask flips with
the rescale factor redrawn from its prior conditional on the proposed
mask count (the prior and proposal densities cancel, leaving prior odds
times the likelihood ratio), a Cayley random-walk rotation move, and a
reflected random walk for the regression noise scale.  Random-walk steps
adapt toward 25% acceptance during burn-in only.

For the regression kinds a marginalized mode integrates the latent path
out analytically and the chain moves over hyperparameters alone.
"""

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericalError
from .likelihoods import (
    class_loglik,
    denreg_loglik,
    density_loglik,
    reg_loglik,
    reg_marginal_loglik,
)
from .priors import active_axes, propose_rotation, rescale_log_density
from .process import (
    JITTER_LADDER,
    PointSet,
    ProjectionSpec,
    build_gram,
    path_from_white,
)
from .seeding import derive_rng

__all__ = [
    "Chain",
    "ChainSchedule",
    "ChainState",
    "SamplerContext",
    "Snapshot",
    "ess_update",
    "inclusion_probs",
    "regression_f_draw",
    "run_chain",
    "update_mask",
    "update_rotation",
    "update_scale",
    "update_sigma",
]

_MAX_SHRINK = 500
_REG_KINDS = ("reg-fixed", "reg-random")


@dataclass
class ChainSchedule:
    """Iteration counts, move switches, and step sizes for one chain.

    ``burn_in=None`` resolves to a quarter of the iterations.  The
    ``sample_*`` switches pin individual blocks (e.g. the all-ones-mask
    ablation runs with ``sample_mask=False``).  ``prior_only=True``
    replaces the likelihood with a constant, so the chain must recover
    the prior; it exists for sampler validation.
    """

    iterations: int = 2000
    burn_in: int | None = None
    thin: int = 10
    marginalized: bool = False
    sample_scale: bool = True
    sample_mask: bool = True
    sample_rotation: bool = True
    sample_sigma: bool = True
    flips_per_sweep: int | None = None
    step_scale: float = 0.5
    step_rotation: float = 0.3
    step_sigma: float | None = None
    init_sigma: float | None = None
    adapt: bool = True
    target_accept: float = 0.25
    adapt_window: int = 50
    check_every: int = 100
    prior_only: bool = False

    def resolved_burn_in(self):
        if self.burn_in is None:
            return self.iterations // 4
        return self.burn_in


@dataclass
class ChainState:
    """Current position of the sampler; ``eta``/``fvals`` are None in
    marginalized mode."""

    spec: ProjectionSpec
    sigma: float | None
    eta: np.ndarray | None
    gram: object
    fvals: np.ndarray | None
    loglik: float


@dataclass(frozen=True)
class SamplerContext:
    """Static pieces every move needs: sites, data hooks, hyperprior."""

    pts: PointSet
    hyper: object
    latent_loglik: object = None  # (fvals, sigma) -> float
    marginal_loglik: object = None  # (gram, sigma) -> float
    marginalized: bool = False


@dataclass(frozen=True)
class Snapshot:
    iteration: int
    scale: float
    mask: np.ndarray
    rotation: np.ndarray
    sigma: float | None
    fvals: np.ndarray | None
    fvals_digest: str | None
    log_post: float


@dataclass
class Chain:
    """Thinned snapshots plus bookkeeping; see ``storage`` for the file form."""

    kind: str
    snapshots: list
    iterations: int
    burn_in: int
    thin: int
    seed: object
    attempts: dict = field(default_factory=dict)
    accepts: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    rng_state: dict | None = None

    def post_burn(self):
        return [s for s in self.snapshots if s.iteration >= self.burn_in]


def _mh_accept(log_ratio, rng):
    if log_ratio >= 0:
        return True
    return rng.random() < math.exp(max(log_ratio, -745.0))


def _reflect(x, lo, hi):
    # Fold the proposal back into [lo, hi]; the fold keeps the kernel symmetric.
    width = hi - lo
    t = (x - lo) % (2.0 * width)
    if t > width:
        t = 2.0 * width - t
    return lo + t


def _rebuild(state, ctx, spec):
    """Gram, path values, and log-likelihood after a hyperparameter change."""
    gram = build_gram(ctx.pts, spec)
    if ctx.marginalized:
        return gram, None, ctx.marginal_loglik(gram, state.sigma)
    fvals = path_from_white(gram, state.eta)
    return gram, fvals, ctx.latent_loglik(fvals, state.sigma)


def ess_update(state, loglik_fn, rng):
    """One elliptical slice move of the whitened coordinates.

    Always returns a state on the current slice: the threshold is the
    current log-likelihood plus log of a uniform, the angle bracket is
    shrunk toward zero, and the zero angle reproduces the current point.
    """
    eta = state.eta
    nu = rng.standard_normal(eta.shape[0])
    u = rng.random()
    if u <= 0.0:
        u = np.nextafter(0.0, 1.0)
    log_y = state.loglik + math.log(u)
    theta = rng.random() * 2.0 * np.pi
    lo, hi = theta - 2.0 * np.pi, theta
    for _ in range(_MAX_SHRINK):
        prop = eta * math.cos(theta) + nu * math.sin(theta)
        fvals = path_from_white(state.gram, prop)
        ll = loglik_fn(fvals, state.sigma)
        if ll > log_y:
            return replace(state, eta=prop, fvals=fvals, loglik=ll)
        # shrink the bracket toward the current point and retry
        if theta < 0.0:
            lo = theta
        else:
            hi = theta
        theta = lo + (hi - lo) * rng.random()
    raise NumericalError("elliptical slice bracket collapsed without acceptance")


def update_sigma(state, prior, step, loglik_at_sigma, rng):
    """Reflected Gaussian random walk on the noise scale inside its prior box."""
    prop = _reflect(state.sigma + step * rng.standard_normal(), prior.lo, prior.hi)
    ll = loglik_at_sigma(state, prop)
    if _mh_accept(ll - state.loglik, rng):
        return replace(state, sigma=prop, loglik=ll), True
    return state, False


def update_scale(state, ctx, step, rng):
    """Gaussian random walk on log(scale) with the change-of-variable term.

    Skipped (returns ``(state, None)``) when nothing is active and there
    is no extra axis: the prior pins the factor at 1.
    """
    cfg = ctx.hyper
    m = active_axes(state.spec.active_count, state.spec.extra_axis)
    if m == 0:
        return state, None
    cur = state.spec.scale
    prop = float(np.exp(np.log(cur) + step * rng.standard_normal()))
    spec = replace(state.spec, scale=prop)
    gram, fvals, ll = _rebuild(state, ctx, spec)
    log_ratio = (
        rescale_log_density(prop, m, cfg.gamma_shape, cfg.gamma_rate)
        + np.log(prop)
        - rescale_log_density(cur, m, cfg.gamma_shape, cfg.gamma_rate)
        - np.log(cur)
        + ll
        - state.loglik
    )
    if _mh_accept(log_ratio, rng):
        return replace(state, spec=spec, gram=gram, fvals=fvals, loglik=ll), True
    return state, False


def update_mask(state, ctx, rng):
    """Flip one uniformly chosen mask coordinate, redrawing the rescale
    factor from its prior conditional on the proposed mask count.

    Drawing the factor from the conditional prior cancels it from the
    Hastings ratio, which reduces to prior inclusion odds times the
    likelihood ratio; the whitened coordinates are transported unchanged.
    """
    cfg = ctx.hyper
    j = int(rng.integers(cfg.dim))
    mask = state.spec.mask.copy()
    mask[j] ^= 1
    m_new = active_axes(mask.sum(), cfg.extra_axis)
    if m_new >= 1:
        scale = float(rng.gamma(cfg.gamma_shape, 1.0 / cfg.gamma_rate) ** (1.0 / m_new))
    else:
        scale = 1.0
    spec = ProjectionSpec(
        scale=scale,
        mask=mask,
        rotation=state.spec.rotation,
        extra_axis=state.spec.extra_axis,
    )
    gram, fvals, ll = _rebuild(state, ctx, spec)
    logit = np.log(cfg.p_incl) - np.log1p(-cfg.p_incl)
    log_ratio = (logit if mask[j] else -logit) + ll - state.loglik
    if _mh_accept(log_ratio, rng):
        return replace(state, spec=spec, gram=gram, fvals=fvals, loglik=ll), True
    return state, False


def update_rotation(state, ctx, step, rng):
    """Cayley random-walk move on the rotation; symmetric, so the Haar
    prior drops out.  Skipped when the mask is empty or d = 1 (the
    rotation is then unidentifiable)."""
    if state.spec.active_count == 0 or ctx.hyper.dim == 1:
        return state, None
    rot = propose_rotation(state.spec.rotation, step, rng)
    spec = replace(state.spec, rotation=rot)
    gram, fvals, ll = _rebuild(state, ctx, spec)
    if _mh_accept(ll - state.loglik, rng):
        return replace(state, spec=spec, gram=gram, fvals=fvals, loglik=ll), True
    return state, False


def _site_set(data):
    """Latent sites for each kind: observations, plus quadrature nodes for
    the density kinds."""
    if data.kind == "density":
        return PointSet(np.vstack([data.x, data.quad_x])), data.n
    if data.kind == "denreg":
        m = data.u_nodes.shape[0]
        x_all = np.vstack([data.x, np.repeat(data.x, m, axis=0)])
        aux = np.concatenate([data.u_data, np.tile(data.u_nodes, data.n)])
        return PointSet(x_all, aux=aux), data.n
    return PointSet(data.x), data.n


def _latent_loglik_fn(data, schedule):
    if schedule.prior_only:
        return lambda fvals, sigma: 0.0
    kind = data.kind
    if kind in _REG_KINDS:
        return lambda fvals, sigma: reg_loglik(fvals, data, sigma)
    if kind == "classif":
        return lambda fvals, sigma: class_loglik(fvals, data)
    if kind == "density":
        n = data.n
        return lambda fvals, sigma: density_loglik(fvals[:n], fvals[n:], data)
    n, m = data.n, data.u_nodes.shape[0]
    return lambda fvals, sigma: denreg_loglik(
        fvals[:n], fvals[n:].reshape(n, m), data
    )


def _marginal_loglik_fn(data, schedule):
    if schedule.prior_only:
        return lambda gram, sigma: 0.0
    return lambda gram, sigma: reg_marginal_loglik(data, gram, sigma)


def _log_posterior(state, ctx, sigma_prior):
    cfg = ctx.hyper
    m = active_axes(state.spec.active_count, state.spec.extra_axis)
    lp = state.loglik
    if m >= 1:
        lp += rescale_log_density(
            state.spec.scale, m, cfg.gamma_shape, cfg.gamma_rate
        )
    k = state.spec.active_count
    lp += k * np.log(cfg.p_incl) + (cfg.dim - k) * np.log1p(-cfg.p_incl)
    if sigma_prior is not None and state.sigma is not None:
        lp += sigma_prior.log_pdf(state.sigma)
    return float(lp)


def _digest(fvals):
    if fvals is None:
        return None
    return hashlib.sha256(np.ascontiguousarray(fvals).tobytes()).hexdigest()[:16]


def _snapshot(it, state, ctx, sigma_prior, keep_fvals=True):
    return Snapshot(
        iteration=it,
        scale=state.spec.scale,
        mask=state.spec.mask.copy(),
        rotation=state.spec.rotation.copy(),
        sigma=state.sigma,
        fvals=None if state.fvals is None or not keep_fvals else state.fvals.copy(),
        fvals_digest=_digest(state.fvals),
        log_post=_log_posterior(state, ctx, sigma_prior),
    )


def _spot_check(state, ctx):
    """Recompute the cached path and log-likelihood from scratch."""
    if ctx.marginalized:
        ll = ctx.marginal_loglik(state.gram, state.sigma)
    else:
        fvals = path_from_white(state.gram, state.eta)
        if not np.allclose(fvals, state.fvals, atol=1e-8, rtol=0.0):
            raise NumericalError("cached path values drifted from chol(gram) @ eta")
        ll = ctx.latent_loglik(fvals, state.sigma)
    if abs(ll - state.loglik) > 1e-8 * max(1.0, abs(ll)):
        raise NumericalError(
            f"cached log-likelihood {state.loglik!r} != recomputed {ll!r}"
        )


def run_chain(data, hyper, schedule, seed, truth_projection=None):
    """Run one MCMC chain and return its thinned snapshots.

    Parameters
    ----------
    data : ModelData
    hyper : HyperConfig
        Must agree with the data kind on ``extra_axis``.
    schedule : ChainSchedule
    seed : int or numpy Generator
    truth_projection : ndarray, optional
        Known generating projection matrix, stored for summaries.

    Notes
    -----
    Initialization: whitened coordinates zero, mask all ones, rotation
    identity, rescale factor 1, noise scale at the prior midpoint.
    Identical seeds give identical chains; parallelism never lives
    inside a chain.
    """
    rng = seed if isinstance(seed, np.random.Generator) else derive_rng(seed)
    if data.dim != hyper.dim:
        raise ValueError(f"data dimension {data.dim} != hyperprior dim {hyper.dim}")
    if hyper.extra_axis != (data.kind == "denreg"):
        raise ValueError(
            "hyper.extra_axis must be set exactly for the conditional-density kind"
        )
    reg = data.kind in _REG_KINDS
    if schedule.marginalized and not (reg or schedule.prior_only):
        raise ValueError("marginalized mode exists only for the regression kinds")
    if schedule.iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {schedule.iterations}")
    if schedule.thin < 1:
        raise ValueError(f"thin must be >= 1, got {schedule.thin}")

    pts, _ = _site_set(data)
    ctx = SamplerContext(
        pts=pts,
        hyper=hyper,
        latent_loglik=None if schedule.marginalized else _latent_loglik_fn(data, schedule),
        marginal_loglik=_marginal_loglik_fn(data, schedule) if schedule.marginalized else None,
        marginalized=schedule.marginalized,
    )
    sigma_prior = data.sigma_prior if reg else None

    spec = ProjectionSpec(
        scale=1.0,
        mask=np.ones(hyper.dim, dtype=np.int64),
        rotation=np.eye(hyper.dim),
        extra_axis=hyper.extra_axis,
    )
    sigma = None
    if reg:
        sigma = schedule.init_sigma if schedule.init_sigma is not None else sigma_prior.midpoint
        if not sigma_prior.contains(sigma):
            raise ValueError(f"init_sigma={sigma} outside the sigma prior")
    gram = build_gram(pts, spec)
    if schedule.marginalized:
        state = ChainState(spec, sigma, None, gram, None, ctx.marginal_loglik(gram, sigma))
    else:
        eta = np.zeros(len(pts))
        fvals = path_from_white(gram, eta)
        state = ChainState(spec, sigma, eta, gram, fvals, ctx.latent_loglik(fvals, sigma))

    burn_in = schedule.resolved_burn_in()
    flips = schedule.flips_per_sweep if schedule.flips_per_sweep is not None else hyper.dim
    step_scale = schedule.step_scale
    step_rot = schedule.step_rotation
    step_sigma = schedule.step_sigma
    if step_sigma is None and sigma_prior is not None:
        step_sigma = 0.1 * (sigma_prior.hi - sigma_prior.lo)
    rotate = schedule.sample_rotation and hyper.rotate and hyper.dim > 1

    attempts = {"scale": 0, "mask": 0, "rotation": 0, "sigma": 0}
    accepts = {"scale": 0, "mask": 0, "rotation": 0, "sigma": 0}
    window = {"scale": [0, 0], "rotation": [0, 0]}  # attempts, accepts

    def tally(name, accepted):
        if accepted is None:
            return
        attempts[name] += 1
        accepts[name] += int(accepted)
        if name in window:
            window[name][0] += 1
            window[name][1] += int(accepted)

    snapshots = [_snapshot(0, state, ctx, sigma_prior)]
    sigma_ll = (
        (lambda st, s: ctx.marginal_loglik(st.gram, s))
        if schedule.marginalized
        else (lambda st, s: ctx.latent_loglik(st.fvals, s))
    )

    for it in range(1, schedule.iterations + 1):
        if not schedule.marginalized:
            state = ess_update(state, ctx.latent_loglik, rng)
        if schedule.sample_scale:
            state, acc = update_scale(state, ctx, step_scale, rng)
            tally("scale", acc)
        if schedule.sample_mask:
            # one extra flip on a coin toss: a fixed even flip count would
            # freeze the parity of the active count whenever every proposal
            # accepts (a flat likelihood does exactly that)
            for _ in range(flips + int(rng.random() < 0.5)):
                state, acc = update_mask(state, ctx, rng)
                tally("mask", acc)
        if rotate:
            state, acc = update_rotation(state, ctx, step_rot, rng)
            tally("rotation", acc)
        if reg and schedule.sample_sigma:
            state, acc = update_sigma(state, sigma_prior, step_sigma, sigma_ll, rng)
            tally("sigma", acc)

        if schedule.adapt and it <= burn_in and it % schedule.adapt_window == 0:
            # burn-in only: scale the steps toward the target acceptance
            for name, step_ref in (("scale", "step_scale"), ("rotation", "step_rot")):
                att, acc = window[name]
                if att > 0:
                    rate = acc / att
                    factor = math.exp(rate - schedule.target_accept)
                    if name == "scale":
                        step_scale = float(np.clip(step_scale * factor, 1e-4, 10.0))
                    else:
                        step_rot = float(np.clip(step_rot * factor, 1e-4, 10.0))
                window[name][0] = window[name][1] = 0

        if schedule.check_every and it % schedule.check_every == 0:
            _spot_check(state, ctx)

        if schedule.thin > 0 and it % schedule.thin == 0:
            snapshots.append(_snapshot(it, state, ctx, sigma_prior))

    return Chain(
        kind=data.kind,
        snapshots=snapshots,
        iterations=schedule.iterations,
        burn_in=burn_in,
        thin=schedule.thin,
        seed=seed if not isinstance(seed, np.random.Generator) else None,
        attempts=attempts,
        accepts=accepts,
        meta={
            "n": data.n,
            "d": data.dim,
            "link": data.link,
            "n_sites": len(pts),
            "marginalized": schedule.marginalized,
            "sigma_prior": None if sigma_prior is None else [sigma_prior.lo, sigma_prior.hi],
            "final_step_scale": step_scale,
            "final_step_rotation": step_rot,
            "truth_projection": None
            if truth_projection is None
            else np.asarray(truth_projection, dtype=np.float64).tolist(),
        },
        rng_state=rng.bit_generator.state,
    )


def inclusion_probs(chain):
    """Average mask over post-burn-in snapshots, one probability per
    coordinate.  Raises on a chain with no post-burn-in snapshots."""
    snaps = chain.post_burn()
    if not snaps:
        raise ValueError("chain has no post-burn-in snapshots")
    return np.mean([s.mask for s in snaps], axis=0)


def regression_f_draw(gram, y, sigma, rng):
    """Exact conjugate draw of the latent regression path at the gram's sites.

    Returns (posterior mean, one draw) of f | y, hyperparameters for the
    Gaussian model y = f + sigma * noise with prior covariance
    ``gram.matrix``.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    n = gram.n_sites
    kernel = gram.matrix
    try:
        factor = cho_factor(kernel + sigma**2 * np.eye(n), lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"conjugate covariance factorization failed: {exc}") from exc
    mean = kernel @ cho_solve(factor, y, check_finite=False)
    cov = kernel - kernel @ cho_solve(factor, kernel, check_finite=False)
    cov = 0.5 * (cov + cov.T)
    for jitter in JITTER_LADDER:
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        return mean, mean + chol @ rng.standard_normal(n)
    raise NumericalError(
        "conjugate posterior covariance factorization failed at every jitter rung",
        ladder=JITTER_LADDER,
    )
