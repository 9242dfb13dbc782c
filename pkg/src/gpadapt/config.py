"""Run configuration: a flat, line-oriented ``key = value`` format.

The format is deliberately minimal so experiment sweeps diff cleanly:
one dotted key per line, ``#`` starts a comment, blank lines ignored.
Unknown keys are rejected with the offending line number; a duplicated
key wins last and logs a warning; every default applied for an omitted
key is echoed to the run log.  ``serialize`` writes a config back out
so that reparsing reproduces an equal RunConfig.
"""

import logging
from dataclasses import dataclass, fields

from .errors import ConfigError
from .likelihoods import LINKS, MODEL_KINDS

__all__ = ["RunConfig", "parse_config", "serialize"]

logger = logging.getLogger(__name__)

_REFERENCES = ("auto", "uniform", "normal")
_TRUTH_KINDS = ("sparse", "projected")
_PROFILES = ("kink", "trig")


@dataclass
class RunConfig:
    """Everything a batch run needs, validated field by field.

    Numeric ranges mirror the owning modules: the rescaling Gamma shape
    is at least 1 and its rate positive, the inclusion probability lies
    strictly between 0 and 1, the noise-scale support is a positive
    interval, thinning is at least 1.  ``burn_in=None`` means a quarter
    of the iterations; ``marginalized=None`` means "for regression".
    ``rotate`` defaults to off (axis-aligned variable selection); turn
    it on to place the prior on rotated subspaces.
    """

    model_kind: str = "reg-fixed"
    link: str = "logistic"
    reference: str = "auto"
    dim: int | None = None
    sigma_lo: float = 0.05
    sigma_hi: float = 5.0
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0
    include_prob: float = 0.5
    rotate: bool = False
    iterations: int = 2000
    burn_in: int | None = None
    thin: int = 10
    marginalized: bool | None = None
    store_latents: bool = False
    data_path: str | None = None
    n: int | None = None
    noise: float = 0.1
    truth_kind: str = "sparse"
    truth_profile: str = "kink"
    truth_alpha: float = 1.5
    truth_active: tuple = None
    truth_direction: tuple = None
    n_grid: tuple = (64, 128, 256, 512)
    replicates: int = 5
    eps_grid: tuple = (0.25, 0.5, 1.0, 1.5, 2.0)
    paths: int = 10000
    grid_size: int = 128
    seed: int = 0
    out: str = "runs"

    def __post_init__(self):
        _validate(self)


def _parse_bool(s):
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_opt_bool(s):
    if s.strip().lower() in ("auto", "none"):
        return None
    return _parse_bool(s)


def _parse_opt_int(s):
    if s.strip().lower() in ("auto", "none"):
        return None
    return int(s)


def _parse_int_tuple(s):
    return tuple(int(p) for p in s.split(",") if p.strip())


def _parse_float_tuple(s):
    return tuple(float(p) for p in s.split(",") if p.strip())


def _opt(parser):
    def inner(s):
        if s.strip().lower() == "none":
            return None
        return parser(s)

    return inner


# key -> (field name, value parser)
_KEYS = {
    "model.kind": ("model_kind", str.strip),
    "model.link": ("link", str.strip),
    "model.reference": ("reference", str.strip),
    "model.dim": ("dim", _parse_opt_int),
    "model.sigma_lo": ("sigma_lo", float),
    "model.sigma_hi": ("sigma_hi", float),
    "prior.gamma_shape": ("gamma_shape", float),
    "prior.gamma_rate": ("gamma_rate", float),
    "prior.include_prob": ("include_prob", float),
    "prior.rotate": ("rotate", _parse_bool),
    "chain.iterations": ("iterations", int),
    "chain.burn_in": ("burn_in", _parse_opt_int),
    "chain.thin": ("thin", int),
    "chain.marginalized": ("marginalized", _parse_opt_bool),
    "chain.store_latents": ("store_latents", _parse_bool),
    "data.path": ("data_path", _opt(str.strip)),
    "data.n": ("n", _parse_opt_int),
    "data.noise": ("noise", float),
    "truth.kind": ("truth_kind", str.strip),
    "truth.profile": ("truth_profile", str.strip),
    "truth.alpha": ("truth_alpha", float),
    "truth.active": ("truth_active", _opt(_parse_int_tuple)),
    "truth.direction": ("truth_direction", _opt(_parse_float_tuple)),
    "study.n_grid": ("n_grid", _parse_int_tuple),
    "study.replicates": ("replicates", int),
    "smallball.eps_grid": ("eps_grid", _parse_float_tuple),
    "smallball.paths": ("paths", int),
    "smallball.grid_size": ("grid_size", int),
    "seed": ("seed", int),
    "out": ("out", str.strip),
}

_FIELD_TO_KEY = {f: k for k, (f, _) in _KEYS.items()}


def _validate(cfg):
    if cfg.model_kind not in MODEL_KINDS:
        raise ValueError(
            f"model.kind must be one of {MODEL_KINDS}, got {cfg.model_kind!r}"
        )
    if cfg.link not in LINKS:
        raise ValueError(f"model.link must be one of {LINKS}, got {cfg.link!r}")
    if cfg.reference not in _REFERENCES:
        raise ValueError(
            f"model.reference must be one of {_REFERENCES}, got {cfg.reference!r}"
        )
    if cfg.dim is not None and cfg.dim < 1:
        raise ValueError(f"model.dim must be >= 1, got {cfg.dim}")
    if not 0.0 < cfg.sigma_lo < cfg.sigma_hi:
        raise ValueError(
            f"model.sigma_lo and model.sigma_hi must satisfy 0 < lo < hi, "
            f"got [{cfg.sigma_lo}, {cfg.sigma_hi}]"
        )
    if not cfg.gamma_shape >= 1.0:
        raise ValueError(f"prior.gamma_shape must be >= 1, got {cfg.gamma_shape}")
    if not cfg.gamma_rate > 0.0:
        raise ValueError(f"prior.gamma_rate must be positive, got {cfg.gamma_rate}")
    if not 0.0 < cfg.include_prob < 1.0:
        raise ValueError(
            f"prior.include_prob must lie in (0, 1), got {cfg.include_prob}"
        )
    if cfg.iterations < 0:
        raise ValueError(f"chain.iterations must be >= 0, got {cfg.iterations}")
    if cfg.burn_in is not None and cfg.burn_in < 0:
        raise ValueError(f"chain.burn_in must be >= 0, got {cfg.burn_in}")
    if cfg.thin < 1:
        raise ValueError(f"chain.thin must be >= 1, got {cfg.thin}")
    if cfg.n is not None and cfg.n < 1:
        raise ValueError(f"data.n must be >= 1, got {cfg.n}")
    if cfg.noise < 0:
        raise ValueError(f"data.noise must be >= 0, got {cfg.noise}")
    if cfg.truth_kind not in _TRUTH_KINDS:
        raise ValueError(
            f"truth.kind must be one of {_TRUTH_KINDS}, got {cfg.truth_kind!r}"
        )
    if cfg.truth_profile not in _PROFILES:
        raise ValueError(
            f"truth.profile must be one of {_PROFILES}, got {cfg.truth_profile!r}"
        )
    if cfg.truth_profile == "kink" and not 0.0 < cfg.truth_alpha < 2.0:
        raise ValueError(
            f"truth.alpha must lie in (0, 2) for kink profiles, got {cfg.truth_alpha}"
        )
    if cfg.truth_active is not None:
        if len(cfg.truth_active) == 0 or any(v not in (0, 1) for v in cfg.truth_active):
            raise ValueError("truth.active must be a nonempty 0/1 list")
    if not cfg.n_grid or list(cfg.n_grid) != sorted(set(cfg.n_grid)):
        raise ValueError("study.n_grid must be strictly increasing and nonempty")
    if any(n < 1 for n in cfg.n_grid):
        raise ValueError("study.n_grid entries must be >= 1")
    if cfg.replicates < 1:
        raise ValueError(f"study.replicates must be >= 1, got {cfg.replicates}")
    if not cfg.eps_grid or list(cfg.eps_grid) != sorted(set(cfg.eps_grid)):
        raise ValueError("smallball.eps_grid must be strictly increasing and nonempty")
    if cfg.eps_grid[0] <= 0:
        raise ValueError("smallball.eps_grid entries must be positive")
    if cfg.paths < 1:
        raise ValueError(f"smallball.paths must be >= 1, got {cfg.paths}")
    if cfg.grid_size < 1:
        raise ValueError(f"smallball.grid_size must be >= 1, got {cfg.grid_size}")


def parse_config(text):
    """Parse config text into a validated RunConfig.

    Raises ConfigError naming the line for an unknown key, a malformed
    line, or an out-of-range value.  Omitted keys take the documented
    defaults and each applied default is echoed to the module logger.
    """
    values = {}
    set_on = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        field_name, parser = _KEYS[key]
        try:
            parsed = parser(val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
        if field_name in values:
            logger.warning(
                "line %d: duplicate key %r; last value wins", lineno, key
            )
        values[field_name] = parsed
        set_on[field_name] = lineno
    try:
        cfg = RunConfig(**values)
    except ValueError as exc:
        # range errors name the dotted key; recover the line that set it
        msg = str(exc)
        for key, (field_name, _) in _KEYS.items():
            if key in msg and field_name in set_on:
                raise ConfigError(f"line {set_on[field_name]}: {msg}") from exc
        raise ConfigError(msg) from exc
    for f in fields(RunConfig):
        if f.name not in values:
            logger.info(
                "default applied: %s = %s",
                _FIELD_TO_KEY[f.name],
                _format_value(getattr(cfg, f.name)),
            )
    return cfg


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, tuple):
        return ",".join(_format_value(p) for p in v)
    return str(v)


def serialize(cfg):
    """Write a RunConfig back to config text; reparsing yields an equal one."""
    lines = []
    for f in fields(RunConfig):
        lines.append(f"{_FIELD_TO_KEY[f.name]} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"
