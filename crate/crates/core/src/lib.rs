//! Dissipativity-based observer design for nonlinear plants with sparse,
//! aperiodic and noisy output samples.
//!
//! The pipeline runs: build a [`Plant`], split it with [`partition`], certify
//! the error nonlinearities ([`certify_kappa_n`], [`compute_varpi_o`]), derive
//! the sampling window with [`design_pipeline`], then check the result by
//! simulation with [`simulate`] and [`verify_iss`].

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod design;
pub mod dissipativity;
pub mod error;
pub mod example;
pub mod expr;
pub mod matrix;
pub mod ode;
pub mod plant;
pub mod sim;

pub use config::RunConfig;
pub use design::{
    check_convergence, design_pipeline, iss_ball_radius, jump_contraction, kappa_o_rate,
    t_max_noiseless, t_window, DesignConstants, Diagnostic, ObserverDesign, SamplingWindow,
    Severity, WindowInputs,
};
pub use dissipativity::{
    certify_kappa_n, compute_varpi_o, falsify_qsr, kappa_n_passes, qsr_ssd_check, supply_rate,
    CertStatus, Counterexample, QsrCertificate, SampleBox, Subject, VarpiBound,
};
pub use error::{
    CertError, DesignError, Error, IntegrationError, MatrixError, PlantError, Result, SimError,
};
pub use example::{equilibria, example_plant, phase_portrait_grid, ExampleParams};
pub use expr::Expr;
pub use matrix::{singular_values, spectral_norm, sym_eigenvalues, Matrix};
pub use ode::{integrate_flow, DenseTrajectory, OdeOptions};
pub use plant::{partition, residual_nonlinearity, Nonlinearity, PartitionedPlant, Plant};
pub use sim::{
    jump_map, make_noise, make_schedule, run_batch, sigma_o_majorant, simulate, simulate_open_loop,
    verify_iss, write_events_csv, write_trace_csv, IssReport, JumpEvent, NoiseDistribution,
    NoiseStream, Schedule, SigmaTrace, SigmaVariant, SimOptions, SimTrace,
};
