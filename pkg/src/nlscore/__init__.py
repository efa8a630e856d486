"""nlscore: normalized-likelihood scoring and Monte-Carlo simulation for
linear-Gaussian identification/verification backends."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    CanonicalModel,
    Enrollment,
    GeneralModel,
    LinearTransform,
    apply_inverse,
    apply_transform,
    canonicalize,
    conditional_log_density,
    load_model,
    marginal_log_density,
    posterior,
    posterior_log_density,
    predictive_log_density,
    prior_log_density,
    save_model,
)
from .scoring import (  # noqa: E402
    ScoreMatrix,
    ScoreRecord,
    ScoreType,
    cosine_score,
    decide_sv,
    euclidean_amended_score,
    euclidean_score,
    nl_known,
    nl_to_sv_posterior,
    nl_unknown,
    plda_lr_oracle,
    score_matrix,
)
from .evaluation import (  # noqa: E402
    MetricsReport,
    TrialPolicy,
    TrialSet,
    build_trials,
    compute_eer,
    compute_idr,
    det_points,
    write_metrics_csv,
)
from .geometry import ConcentrationReport, annulus_stats, separability_probe  # noqa: E402
from .rng import GaussianStream  # noqa: E402
from .simulation import (  # noqa: E402
    PRESETS,
    ConfigError,
    ExperimentConfig,
    load_config,
    preset_config,
    run_experiment,
    sample_classes,
    sample_observations,
)

__all__ = [
    "__version__",
    "CanonicalModel",
    "GeneralModel",
    "LinearTransform",
    "Enrollment",
    "canonicalize",
    "prior_log_density",
    "conditional_log_density",
    "marginal_log_density",
    "posterior",
    "posterior_log_density",
    "predictive_log_density",
    "apply_transform",
    "apply_inverse",
    "save_model",
    "load_model",
    "ScoreType",
    "ScoreRecord",
    "ScoreMatrix",
    "nl_known",
    "nl_unknown",
    "plda_lr_oracle",
    "nl_to_sv_posterior",
    "decide_sv",
    "cosine_score",
    "euclidean_score",
    "euclidean_amended_score",
    "score_matrix",
    "TrialSet",
    "TrialPolicy",
    "MetricsReport",
    "compute_eer",
    "compute_idr",
    "det_points",
    "build_trials",
    "write_metrics_csv",
    "ConcentrationReport",
    "annulus_stats",
    "separability_probe",
    "GaussianStream",
    "ExperimentConfig",
    "ConfigError",
    "PRESETS",
    "run_experiment",
    "sample_classes",
    "sample_observations",
    "load_config",
    "preset_config",
]
