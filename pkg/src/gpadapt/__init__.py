"""Adaptive Gaussian-process modeling with variable selection and
subspace projection.

The prior rescales, masks, and rotates inputs to a square-exponential
Gaussian process, so posteriors adapt to low-dimensional structure in
regression, classification, density estimation, and conditional density
estimation.  The package bundles the sampler, distance metrics, a
seeded simulation harness for contraction-rate studies, and a CLI.
"""

from .config import RunConfig, parse_config, serialize
from .errors import ConfigError, IngestionError, NumericalError
from .harness import (
    RateReport,
    SmallBallEstimate,
    Truth,
    gen_data,
    make_truth,
    rotation_from_direction,
    run_rate_study,
    smallball_mc,
    theory_exponent,
)
from .likelihoods import (
    ModelData,
    NormalReference,
    SigmaPrior,
    UniformDisc,
    class_loglik,
    denreg_loglik,
    density_log_normalizer,
    density_loglik,
    disc_lowdisc,
    disc_rule,
    make_model_data,
    reg_loglik,
    reg_marginal_loglik,
    unit_interval_rule,
)
from .mcmc import (
    Chain,
    ChainSchedule,
    Snapshot,
    inclusion_probs,
    regression_f_draw,
    run_chain,
)
from .metrics import MetricReport, hellinger, norm_gx, norm_n, proj_distance, rho_gx
from .priors import (
    HyperConfig,
    active_axes,
    cayley,
    projection_matrix,
    propose_rotation,
    rescale_log_density,
    sample_hyper,
    sample_orthogonal,
)
from .process import (
    KernelGram,
    PointSet,
    ProjectionSpec,
    build_gram,
    effective_input,
    path_from_white,
    sample_path,
    sq_exp_cov,
)
from .seeding import derive_rng, derive_seed_sequence
from .storage import (
    IngestTransform,
    emit_report,
    load_chain,
    output_lock,
    persist_chain,
    read_dataset,
    write_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ChainSchedule",
    "ConfigError",
    "HyperConfig",
    "IngestTransform",
    "IngestionError",
    "KernelGram",
    "MetricReport",
    "ModelData",
    "NormalReference",
    "NumericalError",
    "PointSet",
    "ProjectionSpec",
    "RateReport",
    "RunConfig",
    "SigmaPrior",
    "SmallBallEstimate",
    "Snapshot",
    "Truth",
    "UniformDisc",
    "__version__",
    "active_axes",
    "build_gram",
    "cayley",
    "class_loglik",
    "denreg_loglik",
    "density_log_normalizer",
    "density_loglik",
    "derive_rng",
    "derive_seed_sequence",
    "disc_lowdisc",
    "disc_rule",
    "effective_input",
    "emit_report",
    "gen_data",
    "hellinger",
    "inclusion_probs",
    "load_chain",
    "make_model_data",
    "make_truth",
    "norm_gx",
    "norm_n",
    "output_lock",
    "parse_config",
    "path_from_white",
    "persist_chain",
    "proj_distance",
    "projection_matrix",
    "propose_rotation",
    "read_dataset",
    "reg_loglik",
    "reg_marginal_loglik",
    "regression_f_draw",
    "rescale_log_density",
    "rho_gx",
    "rotation_from_direction",
    "run_chain",
    "run_rate_study",
    "sample_hyper",
    "sample_orthogonal",
    "sample_path",
    "serialize",
    "smallball_mc",
    "sq_exp_cov",
    "theory_exponent",
    "unit_interval_rule",
    "write_dataset",
]
