//! TOML run configuration. One file determines a run completely, seeds
//! included.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::{design_pipeline, DesignConstants, ObserverDesign};
use crate::dissipativity::{CertStatus, QsrCertificate, SampleBox, Subject};
use crate::error::Error;
use crate::example::{example_certificates, example_plant, ExampleParams};
use crate::expr::Expr;
use crate::matrix::{spectral_norm, Matrix};
use crate::plant::{PartitionedPlant, Plant};
use crate::sim::{
    make_noise, make_schedule, NoiseDistribution, NoiseStream, Schedule, SigmaVariant, SimOptions,
};

/// Scenario files shipped with the crate.
pub const BUNDLED: &[(&str, &str)] = &[
    (
        "example_open_loop",
        include_str!("../configs/example_open_loop.toml"),
    ),
    (
        "example_noisy",
        include_str!("../configs/example_noisy.toml"),
    ),
    (
        "example_noiseless",
        include_str!("../configs/example_noiseless.toml"),
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub sigma_variant: SigmaVariant,
    pub plant: PlantSpec,
    #[serde(default)]
    pub certificates: Vec<CertSpec>,
    pub design: Option<DesignSpec>,
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub simulation: Option<SimulationSpec>,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub output: OutputSpec,
    pub falsify: Option<FalsifySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    /// Built-in model name (`"example"`); excludes `a`, `c`, `psi`.
    pub builtin: Option<String>,
    pub params: Option<ExampleParams>,
    pub a: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<Vec<f64>>>,
    /// One expression per state, in `x1 .. xn`. Defaults to all zeros.
    pub psi: Option<Vec<String>>,
    #[serde(default)]
    pub lipschitz_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertSpec {
    pub subject: Subject,
    pub q: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    #[serde(default = "assumed")]
    pub status: CertStatus,
}

fn assumed() -> CertStatus {
    CertStatus::Assumed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    /// Diagonal of `L`.
    pub l_gain: Vec<f64>,
    pub alpha: f64,
    pub kappa: Option<f64>,
    /// Fixed constants that bypass the certificate chain.
    pub constants: Option<ConstantsSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    pub varpi_o: f64,
    pub kappa_n: f64,
    /// Defaults to `‖Ā_no‖`.
    pub lambda_no: Option<f64>,
    /// Defaults to `‖Ā_on‖`.
    pub lambda_on: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Window for random intervals; the design window when omitted.
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    /// Explicit sampling instants; overrides the random draw.
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub bound: f64,
    #[serde(default)]
    pub seed: u64,
    pub distribution: Option<NoiseDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub horizon: f64,
    /// Initial plant state, original coordinates.
    pub x0: Vec<f64>,
    /// Initial observer state, original coordinates.
    pub x_hat0: Vec<f64>,
    /// Run plant and observer without output injection.
    #[serde(default)]
    pub open_loop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub grid_density: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        let d = SimOptions::default();
        Self {
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            grid_density: d.grid_density,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<String>,
    /// File name prefix; the run name when omitted.
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalsifySpec {
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub z_box: Vec<[f64; 2]>,
    pub eps_box: Vec<[f64; 2]>,
}

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<Matrix, Error> {
    Matrix::from_rows(rows).map_err(|e| cfg_err(field, e))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn bundled(name: &str) -> Option<Self> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::parse(text).expect("bundled configs are valid"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Structural checks that do not need the plant to be built.
    pub fn validate(&self) -> Result<(), Error> {
        let p = &self.plant;
        match &p.builtin {
            Some(name) => {
                if name != "example" {
                    return Err(cfg_err("plant.builtin", format!("unknown model '{name}'")));
                }
                if p.a.is_some() || p.c.is_some() || p.psi.is_some() {
                    return Err(cfg_err("plant", "builtin excludes a, c and psi"));
                }
            }
            None => {
                if p.a.is_none() || p.c.is_none() {
                    return Err(cfg_err(
                        "plant",
                        "either builtin or both a and c are required",
                    ));
                }
                if p.params.is_some() {
                    return Err(cfg_err("plant.params", "only valid with a builtin model"));
                }
            }
        }
        if let Some(d) = &self.design {
            if d.l_gain.is_empty() {
                return Err(cfg_err("design.l_gain", "must not be empty"));
            }
        }
        if let Some(s) = &self.schedule {
            if s.times.is_some() && (s.t_min.is_some() || s.t_max.is_some()) {
                return Err(cfg_err("schedule", "times excludes t_min/t_max"));
            }
            if let (Some(lo), Some(hi)) = (s.t_min, s.t_max) {
                if !(lo >= 0.0 && lo < hi) {
                    return Err(cfg_err("schedule", format!("empty window ({lo}, {hi})")));
                }
            }
        }
        if !(self.noise.bound >= 0.0 && self.noise.bound.is_finite()) {
            return Err(cfg_err("noise.bound", "must be finite and >= 0"));
        }
        if let Some(sim) = &self.simulation {
            if !(sim.horizon > 0.0 && sim.horizon.is_finite()) {
                return Err(cfg_err("simulation.horizon", "must be positive"));
            }
            if sim.x0.len() != sim.x_hat0.len() {
                return Err(cfg_err("simulation", "x0 and x_hat0 differ in length"));
            }
        }
        let t = &self.tolerances;
        if !(t.rel_tol > 0.0 && t.abs_tol > 0.0 && t.grid_density > 0.0) {
            return Err(cfg_err("tolerances", "all entries must be positive"));
        }
        Ok(())
    }

    fn example_params(&self) -> ExampleParams {
        self.plant.params.unwrap_or_default()
    }

    fn is_example(&self) -> bool {
        self.plant.builtin.as_deref() == Some("example")
    }

    pub fn build_plant(&self) -> Result<Plant, Error> {
        if self.is_example() {
            return Ok(example_plant(&self.example_params())?);
        }
        let p = &self.plant;
        let a = matrix("plant.a", p.a.as_deref().unwrap_or_default())?;
        let c = matrix("plant.c", p.c.as_deref().unwrap_or_default())?;
        let n = a.rows();
        let exprs = match &p.psi {
            None => vec![Expr::parse("0").expect("literal")],
            Some(v) if v.len() != n => {
                return Err(cfg_err(
                    "plant.psi",
                    format!("expected {n} expressions, got {}", v.len()),
                ))
            }
            Some(v) => v
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let e = Expr::parse(s).map_err(|e| cfg_err(&format!("plant.psi[{i}]"), e))?;
                    if e.arity() > n {
                        return Err(cfg_err(
                            &format!("plant.psi[{i}]"),
                            format!("uses x{} but the state has {n} coordinates", e.arity()),
                        ));
                    }
                    Ok(e)
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        let psi: crate::plant::Nonlinearity = if p.psi.is_none() {
            Arc::new(move |_: &[f64]| vec![0.0; n])
        } else {
            Arc::new(move |x: &[f64]| exprs.iter().map(|e| e.eval(x)).collect())
        };
        Ok(Plant::new(a, c, psi, p.lipschitz_bound)?)
    }

    /// Certificates from the config; the built-in example supplies its own
    /// when none are given.
    pub fn certificates(&self) -> Result<Vec<QsrCertificate>, Error> {
        if self.certificates.is_empty() && self.is_example() {
            return Ok(example_certificates(&self.example_params()));
        }
        self.certificates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let f = format!("certificates[{i}]");
                QsrCertificate::new(
                    matrix(&format!("{f}.q"), &c.q)?,
                    matrix(&format!("{f}.s"), &c.s)?,
                    matrix(&format!("{f}.r"), &c.r)?,
                    c.subject,
                    c.status,
                )
                .map_err(|e| cfg_err(&f, e))
            })
            .collect()
    }

    fn design_spec(&self) -> Result<&DesignSpec, Error> {
        self.design
            .as_ref()
            .ok_or_else(|| cfg_err("design", "section is required for this command"))
    }

    pub fn build_design(&self, pp: &PartitionedPlant) -> Result<ObserverDesign, Error> {
        let d = self.design_spec()?;
        if d.l_gain.len() != pp.m() {
            return Err(cfg_err(
                "design.l_gain",
                format!("expected {} entries, got {}", pp.m(), d.l_gain.len()),
            ));
        }
        let l_gain = Matrix::diag(&d.l_gain);
        match &d.constants {
            Some(c) => {
                let kappa = d
                    .kappa
                    .ok_or_else(|| cfg_err("design.kappa", "required with fixed constants"))?;
                Ok(ObserverDesign::assemble(DesignConstants {
                    l_gain,
                    varpi_o: c.varpi_o,
                    kappa_n: c.kappa_n,
                    lambda_no: match c.lambda_no {
                        Some(v) => v,
                        None => spectral_norm(&pp.a_no)?,
                    },
                    lambda_on: match c.lambda_on {
                        Some(v) => v,
                        None => spectral_norm(&pp.a_on)?,
                    },
                    kappa,
                    alpha: d.alpha,
                })?)
            }
            None => Ok(design_pipeline(
                pp,
                &self.certificates()?,
                &l_gain,
                d.alpha,
                d.kappa,
            )?),
        }
    }

    pub fn simulation(&self) -> Result<&SimulationSpec, Error> {
        self.simulation
            .as_ref()
            .ok_or_else(|| cfg_err("simulation", "section is required for this command"))
    }

    /// Schedule with the configured seed shifted by `offset`.
    pub fn build_schedule(&self, design: &ObserverDesign, offset: u64) -> Result<Schedule, Error> {
        let spec = self
            .schedule
            .as_ref()
            .ok_or_else(|| cfg_err("schedule", "section is required for this command"))?;
        if let Some(times) = &spec.times {
            return Ok(Schedule::from_times(times.clone())?);
        }
        let horizon = self.simulation()?.horizon;
        let t_min = spec.t_min.unwrap_or(design.t_min);
        let t_max = spec.t_max.unwrap_or(design.t_max);
        Ok(make_schedule(
            t_min,
            t_max,
            horizon,
            spec.seed.wrapping_add(offset),
        )?)
    }

    pub fn build_noise(&self, count: usize, dim: usize, offset: u64) -> Result<NoiseStream, Error> {
        let seed = self.noise.seed.wrapping_add(offset);
        if self.noise.distribution == Some(NoiseDistribution::Zero) {
            return Ok(NoiseStream {
                seed,
                ..NoiseStream::zero(count, dim)
            });
        }
        Ok(make_noise(self.noise.bound, count, dim, seed)?)
    }

    /// Effective noise sup-norm bound.
    pub fn w_inf(&self) -> f64 {
        match self.noise.distribution {
            Some(NoiseDistribution::Zero) => 0.0,
            _ => self.noise.bound,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            rel_tol: self.tolerances.rel_tol,
            abs_tol: self.tolerances.abs_tol,
            grid_density: self.tolerances.grid_density,
            sigma_variant: self.sigma_variant,
        }
    }

    /// Initial plant and observer states in partitioned coordinates.
    pub fn initial_states(&self, pp: &PartitionedPlant) -> Result<(Vec<f64>, Vec<f64>), Error> {
        let sim = self.simulation()?;
        if sim.x0.len() != pp.n() {
            return Err(cfg_err(
                "simulation.x0",
                format!("expected {} entries, got {}", pp.n(), sim.x0.len()),
            ));
        }
        Ok((pp.to_transformed(&sim.x0), pp.to_transformed(&sim.x_hat0)))
    }

    pub fn sample_box(&self) -> Option<SampleBox> {
        self.falsify.as_ref().map(|f| SampleBox {
            z: f.z_box.clone(),
            eps: f.eps_box.clone(),
        })
    }

    pub fn output_prefix(&self) -> String {
        self.output
            .prefix
            .clone()
            .unwrap_or_else(|| self.name.clone())
    }
}
