//! Stochastic integration and bounded m-solution algorithms.

mod algorithms;
mod config;
mod ensemble;
mod stepper;
mod wiener;
mod yfunc;

pub use algorithms::{algorithm1, algorithm2, index1_initial_u, solve_path, ClosedFormU, MAX_STEP_STIFFNESS, MAX_SUBSTEPS, Y_DEFECT_FRACTION};
pub use config::{Algorithm, EpsilonCheck, GdScaling, RetryRng, Scheme, SolverConfig};
pub use ensemble::{run_ensemble, violation_fraction, EnsembleDiagnostics, EnsembleRun};
pub use stepper::{euler_step, heun_step, integrate_intrinsic, Trajectory, TrajectoryFlags, UProcess};
pub use wiener::{bridge_increments, draw_increments, path_rng, retry_rng, wiener_path, WienerPath};
pub use yfunc::{
    bounded_m_fields, composed_operator, coupled_fields, d1_y, d2_y, d2_y_numeric, decomposed_operator,
    gradient_descent_root, lambda_integrand, unit_probability_fields, y_value, BoundedFields, GdControls, GdOutcome,
    UnitProbabilityFields, YMap, CUT_LOCUS_MARGIN,
};
