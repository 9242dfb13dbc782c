"""Dataset ingestion, chain persistence, and report emission.

Files are plain text and deterministic: every float is written with 17
significant digits so a rerun with the same seed produces byte-identical
output, and chain files round-trip bit-exactly.  One writer owns an
output directory at a time, enforced by a lock file.
"""

import json
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IngestionError
from .harness import RateReport, SmallBallEstimate
from .likelihoods import make_model_data
from .mcmc import Chain, Snapshot
from .metrics import MetricReport

__all__ = [
    "IngestTransform",
    "emit_report",
    "load_chain",
    "output_lock",
    "persist_chain",
    "read_dataset",
    "write_dataset",
]

_CHAIN_FILE = "chain.jsonl"
_LOCK_FILE = ".lock"


def _fmt(v):
    """Full round-trip precision for emitted numbers."""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


@dataclass(frozen=True)
class IngestTransform:
    """Back-mapping record for ingested covariates.

    Covariates are divided by ``scale`` on the way in, so a model input
    x maps back to the original units as x * scale.  Data already inside
    the unit disc passes through with scale exactly 1, which makes
    ingestion idempotent.
    """

    scale: float

    def apply(self, x):
        return np.asarray(x, dtype=np.float64) / self.scale

    def invert(self, x):
        return np.asarray(x, dtype=np.float64) * self.scale


def read_dataset(path, kind, link="logistic", quad_size=2048, u_size=64):
    """Read a delimited dataset into a ModelData plus its ingest record.

    The file is comma-separated with a header row naming columns
    x1..xd and y (no y column for the density kind).  Covariates
    outside the unit disc are scaled into it by the max norm and the
    factor is returned for back-mapping.  Malformed input raises
    IngestionError naming the row and column.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise IngestionError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    expect_y = kind != "density"
    d = len(header) - (1 if expect_y else 0)
    if d < 1:
        raise IngestionError(f"{path}: header {header} has no covariate columns")
    wanted = [f"x{j + 1}" for j in range(d)] + (["y"] if expect_y else [])
    if header != wanted:
        raise IngestionError(
            f"{path}: expected columns {','.join(wanted)}, got {','.join(header)}"
        )
    rows = lines[1:]
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    vals = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        cells = [c.strip() for c in row.split(",")]
        if len(cells) != len(header):
            raise IngestionError(
                f"{path}: row {i + 2} has {len(cells)} cells, expected {len(header)}"
            )
        for j, cell in enumerate(cells):
            try:
                vals[i, j] = float(cell)
            except ValueError:
                raise IngestionError(
                    f"{path}: row {i + 2}, column {header[j]}: "
                    f"non-numeric cell {cell!r}"
                ) from None
        if not np.isfinite(vals[i]).all():
            j = int(np.flatnonzero(~np.isfinite(vals[i]))[0])
            raise IngestionError(
                f"{path}: row {i + 2}, column {header[j]}: non-finite value"
            )
    x = vals[:, :d]
    y = vals[:, d] if expect_y else None
    max_norm = float(np.sqrt((x**2).sum(axis=1)).max())
    scale = max_norm if max_norm > 1.0 else 1.0
    transform = IngestTransform(scale=scale)
    try:
        data = make_model_data(
            kind,
            x / scale,
            y,
            link=link,
            quad_size=quad_size,
            u_size=u_size,
        )
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    return data, transform


def write_dataset(x, y, path):
    """Write covariates (and responses unless None) as a header-led CSV."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    cols = [f"x{j + 1}" for j in range(x.shape[1])]
    if y is not None:
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape[0] != x.shape[0]:
            raise ValueError("x and y row counts differ")
        cols.append("y")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(x.shape[0]):
            cells = [_fmt(float(v)) for v in x[i]]
            if y is not None:
                cells.append(_fmt(float(y[i])))
            fh.write(",".join(cells) + "\n")
    return path


def _mask_to_bits(mask):
    return "".join("1" if int(v) else "0" for v in mask)


def _bits_to_mask(bits):
    if not all(c in "01" for c in bits):
        raise ValueError(f"bad mask bit-string {bits!r}")
    return np.array([1 if c == "1" else 0 for c in bits], dtype=np.int64)


def persist_chain(chain, out_dir, store_latents=False):
    """Write a chain as line-delimited records; returns the file path.

    The first line is a header with the run-level fields; each later
    line is one snapshot with the hyperparameters in full (mask as a
    bit-string, rotation row-major), the noise scale, a digest of the
    latent values, and the log posterior.  Latent values themselves are
    stored only when ``store_latents`` is set; they are large and the
    digest already pins them for reproducibility checks.
    """
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, _CHAIN_FILE)
    seed = chain.seed
    if not isinstance(seed, (int, str, type(None))):
        seed = None  # generators and seed sequences have no portable text form
    header = {
        "record": "header",
        "kind": chain.kind,
        "iterations": chain.iterations,
        "burn_in": chain.burn_in,
        "thin": chain.thin,
        "seed": seed,
        "attempts": chain.attempts,
        "accepts": chain.accepts,
        "meta": chain.meta,
        "rng_state": chain.rng_state,
        "store_latents": bool(store_latents),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in chain.snapshots:
            rec = {
                "iter": s.iteration,
                "scale": s.scale,
                "mask": _mask_to_bits(s.mask),
                "rotation": [float(v) for v in np.ravel(s.rotation)],
                "sigma": s.sigma,
                "fvals_digest": s.fvals_digest,
                "log_post": s.log_post,
            }
            if store_latents and s.fvals is not None:
                rec["fvals"] = [float(v) for v in s.fvals]
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def load_chain(out_dir):
    """Load a chain written by persist_chain, bit-exactly.

    Raises IngestionError naming the line for missing, corrupt, or
    structurally wrong records.
    """
    path = os.path.join(out_dir, _CHAIN_FILE)
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise IngestionError(f"{path}: empty chain file")

    def parse(lineno, text):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{path}: line {lineno}: corrupt record: {exc}") from exc

    header = parse(1, lines[0])
    if header.get("record") != "header":
        raise IngestionError(f"{path}: line 1: expected the header record")
    snapshots = []
    for lineno, text in enumerate(lines[1:], start=2):
        rec = parse(lineno, text)
        try:
            mask = _bits_to_mask(rec["mask"])
            d = mask.shape[0]
            rotation = np.asarray(rec["rotation"], dtype=np.float64).reshape(d, d)
            fvals = rec.get("fvals")
            snapshots.append(
                Snapshot(
                    iteration=int(rec["iter"]),
                    scale=float(rec["scale"]),
                    mask=mask,
                    rotation=rotation,
                    sigma=None if rec["sigma"] is None else float(rec["sigma"]),
                    fvals=None if fvals is None else np.asarray(fvals),
                    fvals_digest=rec["fvals_digest"],
                    log_post=float(rec["log_post"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise IngestionError(f"{path}: line {lineno}: bad snapshot: {exc}") from exc
    return Chain(
        kind=header["kind"],
        snapshots=snapshots,
        iterations=int(header["iterations"]),
        burn_in=int(header["burn_in"]),
        thin=int(header["thin"]),
        seed=header["seed"],
        attempts=header.get("attempts", {}),
        accepts=header.get("accepts", {}),
        meta=header.get("meta", {}),
        rng_state=header.get("rng_state"),
    )


@contextmanager
def output_lock(out_dir):
    """Exclusive ownership of an output directory via a lock file.

    A second writer gets a ConfigError pointing at the lock; a crashed
    run leaves the file behind and the message says to remove it.
    """
    os.makedirs(out_dir, exist_ok=True)
    lock_path = os.path.join(out_dir, _LOCK_FILE)
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(
            f"output directory {out_dir} is locked by another run; "
            f"remove {lock_path} if that run is dead"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        try:
            os.remove(lock_path)
        except OSError:
            pass


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ln in lines:
            fh.write(ln + "\n")
    return path


def emit_report(report, out_dir, stem=None):
    """Write a report as a delimited table, plot-ready curves, and a
    plain-text summary; returns the list of paths written.

    Accepts a RateReport, a MetricReport or list of them, or the list
    of small-ball estimates from the harness.  Reruns with identical
    inputs produce byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    if isinstance(report, RateReport):
        return _emit_rate(report, out_dir, stem or "rate")
    if isinstance(report, MetricReport):
        return _emit_metrics([report], out_dir, stem or "metrics")
    if isinstance(report, (list, tuple)) and report:
        if all(isinstance(r, SmallBallEstimate) for r in report):
            return _emit_smallball(report, out_dir, stem or "smallball")
        if all(isinstance(r, MetricReport) for r in report):
            return _emit_metrics(report, out_dir, stem or "metrics")
    raise ValueError(f"cannot emit a report of type {type(report).__name__}")


def _emit_rate(report, out_dir, stem):
    table = [_tsv("n", "median_err", "q90_err", "cells")]
    for i, n in enumerate(report.n_grid):
        table.append(
            _tsv(
                n,
                report.median_err[i],
                report.q90_err[i],
                len(report.per_replicate[n]),
            )
        )
    curve = [
        _tsv(math.log(n), math.log(report.median_err[i]))
        for i, n in enumerate(report.n_grid)
    ]
    summary = [
        f"model kind: {report.kind}",
        f"replicates per n: {report.replicates}",
        f"fitted slope (log median error on log n): {_fmt(report.slope)}",
        f"bootstrap 95% CI: [{_fmt(report.slope_ci[0])}, {_fmt(report.slope_ci[1])}]",
        f"theory exponent: {_fmt(report.theory)}",
        f"failed cells: {len(report.failures)}",
    ]
    return [
        _write_lines(os.path.join(out_dir, f"{stem}_table.tsv"), table),
        _write_lines(os.path.join(out_dir, f"{stem}_curve.tsv"), curve),
        _write_lines(os.path.join(out_dir, f"{stem}_summary.txt"), summary),
    ]


def _emit_metrics(reports, out_dir, stem):
    table = [_tsv("name", "value", "mc_se")]
    summary = []
    for r in reports:
        table.append(_tsv(r.name, r.value, "" if r.mc_se is None else _fmt(r.mc_se)))
        se = "" if r.mc_se is None else f" (mc se {_fmt(r.mc_se)})"
        summary.append(f"{r.name}: {_fmt(r.value)}{se}")
    return [
        _write_lines(os.path.join(out_dir, f"{stem}_table.tsv"), table),
        _write_lines(os.path.join(out_dir, f"{stem}_summary.txt"), summary),
    ]


def _emit_smallball(estimates, out_dir, stem):
    probs = [e.estimate for e in estimates]
    if any(b < a for a, b in zip(probs, probs[1:])):
        raise ValueError("small-ball estimates must be nondecreasing in eps")
    table = [_tsv("eps", "estimate", "ci_lo", "ci_hi")]
    curve = []
    for e in estimates:
        table.append(_tsv(e.eps, e.estimate, e.ci_lo, e.ci_hi))
        curve.append(_tsv(e.eps, e.estimate))
    summary = [
        f"grid points: {len(estimates)}",
        f"mass at smallest eps {_fmt(estimates[0].eps)}: {_fmt(estimates[0].estimate)}",
        f"mass at largest eps {_fmt(estimates[-1].eps)}: {_fmt(estimates[-1].estimate)}",
    ]
    return [
        _write_lines(os.path.join(out_dir, f"{stem}_table.tsv"), table),
        _write_lines(os.path.join(out_dir, f"{stem}_curve.tsv"), curve),
        _write_lines(os.path.join(out_dir, f"{stem}_summary.txt"), summary),
    ]


def _tsv(*cells):
    return "\t".join(_fmt(c) if isinstance(c, float) else str(c) for c in cells)
