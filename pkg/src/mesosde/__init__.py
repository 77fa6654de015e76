"""mesosde: data-driven mesoscale drift-diffusion models of collective motion.

The package covers the full workflow: simulate (or ingest) individual
trajectories, reduce them to the polarization order parameter, fit a
neural stochastic differential equation by transition-likelihood
maximization, verify the fit against closed-form mean-field models and
distributional metrics, and export drift/diffusion fields for
interpretation.
"""

from .abm import (
    HeadingState,
    HeadingTrajectory,
    ModelParams,
    aligned_state,
    random_state,
    save_heading_csv,
    simulate_abm,
    simulate_replicates,
    ssa_step,
    total_event_rate,
)
from .analytic_sde import AnalyticSde, diffusion_cov, drift
from .estimator import (
    DataInsufficiencyError,
    PairSet,
    SdeModel,
    TrainConfig,
    TrainReport,
    TransitionPair,
    build_pairs,
    cov_from_raw,
    load_model,
    loss_gradient,
    mean_nll,
    nll,
    save_model,
    train,
)
from .fields import (
    FieldGrid,
    RenderOptions,
    disc_grid,
    eval_fields,
    export_csv,
    load_field_csv,
    render_svg,
    write_field_csv,
)
from .metrics import (
    FitReport,
    acf,
    autocorr_time,
    default_max_lag,
    fit_report,
    t_rel,
    wasserstein1,
)
from .neural_net import (
    AdamaxState,
    MlpParams,
    MlpSpec,
    adamax_step,
    adamax_update,
    elu,
    init_mlp_params,
    load_mlp,
    mlp_forward,
    mlp_gradient,
    save_mlp,
)
from .order_parameter import (
    AUGMENT_ANGLES,
    PolarizationSeries,
    VelocityFrame,
    augment,
    load_polarization_csv,
    load_trajectory_csv,
    polarization,
    save_polarization_csv,
    series_from_trajectory,
)
from .sde_simulate import SimConfig, euler_maruyama, simulate_model

__version__ = "0.1.0"

__all__ = [
    "AUGMENT_ANGLES",
    "AdamaxState",
    "AnalyticSde",
    "DataInsufficiencyError",
    "FieldGrid",
    "FitReport",
    "HeadingState",
    "HeadingTrajectory",
    "MlpParams",
    "MlpSpec",
    "ModelParams",
    "PairSet",
    "PolarizationSeries",
    "RenderOptions",
    "SdeModel",
    "SimConfig",
    "TrainConfig",
    "TrainReport",
    "TransitionPair",
    "VelocityFrame",
    "acf",
    "adamax_step",
    "adamax_update",
    "aligned_state",
    "augment",
    "autocorr_time",
    "build_pairs",
    "cov_from_raw",
    "default_max_lag",
    "diffusion_cov",
    "disc_grid",
    "drift",
    "elu",
    "euler_maruyama",
    "eval_fields",
    "export_csv",
    "fit_report",
    "init_mlp_params",
    "load_field_csv",
    "load_mlp",
    "load_model",
    "load_polarization_csv",
    "load_trajectory_csv",
    "loss_gradient",
    "mean_nll",
    "mlp_forward",
    "mlp_gradient",
    "nll",
    "polarization",
    "random_state",
    "render_svg",
    "save_heading_csv",
    "save_mlp",
    "save_model",
    "save_polarization_csv",
    "series_from_trajectory",
    "simulate_abm",
    "simulate_model",
    "simulate_replicates",
    "ssa_step",
    "t_rel",
    "total_event_rate",
    "train",
    "wasserstein1",
    "write_field_csv",
]
