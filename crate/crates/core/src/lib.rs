//! Numerics for small-noise deviation bounds around quasiclassical paths.

pub mod action;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod master;
pub mod mc;
pub mod polyfield;

pub use action::{
    minimize_cost, quasipotential, rate_functional, rate_gradient, CostOptions, CostResult,
    DiscretePath, QuasipotentialResult,
};
pub use error::{Error, Result};
pub use integrate::{
    em_sde_solve, em_two_noise_solve, master_ode_solve, master_sde_solve, ode_solve, TimeGrid,
    Trajectory, WienerPath,
};
pub use linalg::SquareMatrix;
pub use master::{
    delta_curve, residual_cubic_closed, residual_cubic_stochastic, residual_dwell_closed,
    residual_generic, residual_stochastic_generic, scalar_residual, solve_lambda_path,
    CubicParams, DoubleWellParams, LambdaPath, SolveOptions,
};
pub use mc::{
    eps_sweep, expected_deviation, expected_deviation_conditional, path_seed, DeviationEstimate,
    SweepReport,
};
pub use polyfield::{
    confinement_check, ConfinementReport, Harmonic, MultiIndex, Phase, PolyDiffusionMatrix,
    PolyScalar, PolyVectorField, TimeCoefficient,
};
