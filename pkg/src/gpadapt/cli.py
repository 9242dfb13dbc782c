"""Command-line entry points for batch runs.

Subcommands: ``fit`` (data file to chain plus summaries), ``simulate``
(truth settings to a dataset file), ``rate-study`` (contraction study
files), ``smallball`` (prior mass diagnostic files), ``summarize``
(chain directory to inclusion probabilities, projection trace, and
metric reports).  Exit codes: 0 success, 2 configuration error, 3
ingestion error, 4 numerical failure.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .config import parse_config, serialize
from .errors import ConfigError, IngestionError, NumericalError
from .harness import (
    gen_data,
    make_truth,
    rotation_from_direction,
    run_rate_study,
    smallball_mc,
)
from .likelihoods import SigmaPrior
from .mcmc import ChainSchedule, inclusion_probs, run_chain
from .metrics import MetricReport, proj_distance
from .priors import HyperConfig, projection_matrix
from .seeding import derive_rng
from .storage import (
    emit_report,
    load_chain,
    output_lock,
    persist_chain,
    read_dataset,
    write_dataset,
)

logger = logging.getLogger(__name__)

_REG_KINDS = ("reg-fixed", "reg-random")


def _load_config(args):
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    else:
        text = ""
    cfg = parse_config(text)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if getattr(args, "model", None) is not None:
        overrides["model_kind"] = args.model
    if getattr(args, "link", None) is not None:
        overrides["link"] = args.link
    if overrides:
        try:
            cfg = replace(cfg, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def _apply_thread_cap(threads):
    if threads is None:
        return
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        logger.info("threadpoolctl not installed; --threads ignored")
        return
    # process-lifetime cap; the process exits when the command returns
    threadpool_limits(limits=threads)


def _hyper_for(cfg, dim):
    try:
        return HyperConfig(
            dim=dim,
            gamma_shape=cfg.gamma_shape,
            gamma_rate=cfg.gamma_rate,
            p_incl=cfg.include_prob,
            extra_axis=cfg.model_kind == "denreg",
            rotate=cfg.rotate,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_marginalized(cfg):
    if cfg.marginalized is None:
        return cfg.model_kind in _REG_KINDS
    if cfg.marginalized and cfg.model_kind not in _REG_KINDS:
        raise ConfigError(
            f"chain.marginalized = true needs a regression kind, "
            f"got {cfg.model_kind!r}"
        )
    return cfg.marginalized


def _schedule_for(cfg):
    return ChainSchedule(
        iterations=cfg.iterations,
        burn_in=cfg.burn_in,
        thin=cfg.thin,
        marginalized=_resolve_marginalized(cfg),
    )


def _truth_for(cfg, required=True):
    if cfg.truth_active is None:
        if required:
            raise ConfigError("truth.active is required for this subcommand")
        return None, _require_dim(cfg)
    d = len(cfg.truth_active)
    if cfg.dim is not None and cfg.dim != d:
        raise ConfigError(
            f"model.dim = {cfg.dim} disagrees with truth.active of length {d}"
        )
    rotation = None
    if cfg.truth_direction is not None:
        if len(cfg.truth_direction) != d:
            raise ConfigError(
                f"truth.direction has length {len(cfg.truth_direction)}, expected {d}"
            )
        rotation = rotation_from_direction(np.asarray(cfg.truth_direction))
    try:
        truth = make_truth(
            cfg.truth_kind,
            cfg.truth_alpha,
            d,
            cfg.truth_active,
            v0_id=cfg.truth_profile,
            rotation=rotation,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return truth, d


def _require_dim(cfg):
    if cfg.dim is None:
        raise ConfigError("model.dim is required when truth.active is not given")
    return cfg.dim


def _cmd_fit(cfg, args):
    if cfg.data_path is None:
        raise ConfigError("data.path is required for fit")
    data, transform = read_dataset(
        cfg.data_path, cfg.model_kind, link=cfg.link
    )
    if cfg.model_kind in _REG_KINDS:
        data = replace(data, sigma_prior=SigmaPrior(cfg.sigma_lo, cfg.sigma_hi))
    hyper = _hyper_for(cfg, data.dim)
    schedule = _schedule_for(cfg)
    with output_lock(cfg.out):
        chain = run_chain(data, hyper, schedule, derive_rng(cfg.seed, "fit"))
        persist_chain(chain, cfg.out, store_latents=cfg.store_latents)
        probs = inclusion_probs(chain)
        reports = [
            MetricReport(name=f"inclusion_x{j + 1}", value=float(p))
            for j, p in enumerate(probs)
        ]
        emit_report(reports, cfg.out, stem="fit")
        with open(
            os.path.join(cfg.out, "ingest.txt"), "w", encoding="utf-8", newline="\n"
        ) as fh:
            fh.write("covariate scale factor = %.17g\n" % transform.scale)
        _write_config_echo(cfg)
    logger.info("fit complete: %d snapshots in %s", len(chain.snapshots), cfg.out)
    return 0


def _cmd_simulate(cfg, args):
    truth, _ = _truth_for(cfg)
    if cfg.n is None:
        raise ConfigError("data.n is required for simulate")
    data = gen_data(
        cfg.model_kind,
        truth,
        cfg.n,
        derive_rng(cfg.seed, "simulate"),
        noise=cfg.noise,
        link=cfg.link,
    )
    with output_lock(cfg.out):
        path = write_dataset(
            data.x,
            None if cfg.model_kind == "density" else data.y,
            os.path.join(cfg.out, "dataset.csv"),
        )
        _write_config_echo(cfg)
    logger.info("wrote %d rows to %s", data.n, path)
    return 0


def _cmd_rate_study(cfg, args):
    truth, dim = _truth_for(cfg)
    hyper = _hyper_for(cfg, dim)
    marginalized = _resolve_marginalized(cfg)

    def schedule_for(n):
        return ChainSchedule(
            iterations=cfg.iterations,
            burn_in=cfg.burn_in,
            thin=cfg.thin,
            marginalized=marginalized,
        )

    with output_lock(cfg.out):
        report = run_rate_study(
            cfg.model_kind,
            truth,
            list(cfg.n_grid),
            cfg.replicates,
            cfg.seed,
            hyper,
            schedule_for=schedule_for,
            noise=cfg.noise,
            link=cfg.link,
        )
        paths = emit_report(report, cfg.out)
        _write_config_echo(cfg)
    logger.info(
        "rate study done: slope %.3f vs theory %.3f; files %s",
        report.slope,
        report.theory,
        ", ".join(paths),
    )
    return 0


def _cmd_smallball(cfg, args):
    truth, dim = _truth_for(cfg, required=False)
    hyper = _hyper_for(cfg, dim)
    with output_lock(cfg.out):
        estimates = smallball_mc(
            truth,
            hyper,
            list(cfg.eps_grid),
            grid_size=cfg.grid_size,
            paths=cfg.paths,
            seed=cfg.seed,
        )
        paths = emit_report(estimates, cfg.out)
        _write_config_echo(cfg)
    logger.info("small-ball diagnostic written: %s", ", ".join(paths))
    return 0


def _cmd_summarize(cfg, args):
    chain = load_chain(cfg.out)
    with output_lock(cfg.out):
        return _summarize_locked(cfg, chain)


def _summarize_locked(cfg, chain):
    probs = inclusion_probs(chain)
    reports = [
        MetricReport(name=f"inclusion_x{j + 1}", value=float(p))
        for j, p in enumerate(probs)
    ]
    snaps = chain.post_burn()
    scales = [s.scale for s in snaps]
    reports.append(MetricReport(name="scale_mean", value=float(np.mean(scales))))
    if snaps[0].sigma is not None:
        reports.append(
            MetricReport(
                name="sigma_mean", value=float(np.mean([s.sigma for s in snaps]))
            )
        )
    for move, att in sorted(chain.attempts.items()):
        if att:
            reports.append(
                MetricReport(
                    name=f"accept_{move}", value=chain.accepts.get(move, 0) / att
                )
            )
    files = []
    target = chain.meta.get("truth_projection")
    if target is not None:
        target = np.asarray(target, dtype=np.float64)
        lines = ["iter\tproj_distance"]
        dists = []
        for s in chain.snapshots:
            p = projection_matrix(s.mask, s.rotation)
            dist = proj_distance(p, target, "frobenius")
            lines.append("%d\t%.17g" % (s.iteration, dist))
            if s.iteration >= chain.burn_in:
                dists.append(dist)
        trace_path = os.path.join(cfg.out, "projection_trace.tsv")
        with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        files.append(trace_path)
        reports.append(
            MetricReport(name="proj_distance_mean", value=float(np.mean(dists)))
        )
    files.extend(emit_report(reports, cfg.out, stem="summary"))
    logger.info("summaries written: %s", ", ".join(files))
    return 0


def _write_config_echo(cfg):
    path = os.path.join(cfg.out, "config_used.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize(cfg))


_COMMANDS = {
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "rate-study": _cmd_rate_study,
    "smallball": _cmd_smallball,
    "summarize": _cmd_summarize,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gpadapt",
        description=(
            "Adaptive Gaussian-process fitting with variable selection and "
            "subspace projection, plus the experiment harness around it."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("fit", "fit a model to a dataset file and persist the chain"),
        ("simulate", "draw a synthetic dataset from a configured truth"),
        ("rate-study", "run a posterior contraction study"),
        ("smallball", "estimate prior mass of sup-norm balls around a truth"),
        ("summarize", "summarize a persisted chain directory"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument(
            "--threads",
            type=int,
            help="cap BLAS threads (needs threadpoolctl; otherwise ignored)",
        )
        p.add_argument(
            "--model",
            choices=["reg-fixed", "reg-random", "classif", "density", "denreg"],
            help="model kind (overrides config)",
        )
        p.add_argument(
            "--link",
            choices=["probit", "logistic"],
            help="classification link (overrides config)",
        )
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_thread_cap(args.threads)
        cfg = _load_config(args)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except IngestionError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
