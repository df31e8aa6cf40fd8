//! Scalar design constants of the impulsive observer.
//!
//! Given the correction gain `L`, the expansion bound `ϖ_o` of the measured
//! error, the dissipation rate `κ_n` of the unmeasured error and the coupling
//! norms `λ*_on = ‖Ā_on‖`, `λ*_no = ‖Ā_no‖`, this module produces the
//! admissible sampling window `(T_min, T_max)` for a prescribed net decay `κ`
//! and ISS gain `α`.

use serde::{Deserialize, Serialize};

use crate::dissipativity::{certify_kappa_n, compute_varpi_o, QsrCertificate, Subject};
use crate::error::DesignError;
use crate::matrix::{spectral_norm, Matrix};
use crate::plant::PartitionedPlant;

/// Relative tolerance on the binding (boundary) convergence inequality.
pub const BOUNDARY_RTOL: f64 = 1e-9;

pub mod stage {
    pub const JUMP: &str = "jump contraction";
    pub const MEASURED: &str = "measured-block bound (varpi_o)";
    pub const UNMEASURED: &str = "unmeasured-block certificate (kappa_n)";
    pub const DECAY: &str = "net decay (kappa)";
    pub const WINDOW: &str = "sampling window";
    pub const CONVERGENCE: &str = "convergence condition";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub stage: String,
    pub severity: Severity,
    pub message: String,
    /// Signed margin of the failing inequality, when one applies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

impl Diagnostic {
    fn failure(stage: &str, message: impl Into<String>, slack: Option<f64>) -> Self {
        Self {
            stage: stage.to_string(),
            severity: Severity::Failure,
            message: message.into(),
            slack,
        }
    }

    fn info(stage: &str, message: impl Into<String>) -> Self {
        Self {
            stage: stage.to_string(),
            severity: Severity::Info,
            message: message.into(),
            slack: None,
        }
    }
}

/// Complete set of design constants. Values that could not be computed are NaN
/// and come with a failure diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverDesign {
    pub l_gain: Matrix,
    pub gamma: f64,
    pub beta: f64,
    pub varpi_o: f64,
    pub kappa_n: f64,
    /// Decay rate of the measured-error majorant, evaluated at `t_max`.
    pub kappa_o: f64,
    pub kappa: f64,
    pub lambda_on: f64,
    pub lambda_no: f64,
    pub t_max: f64,
    pub t_min: f64,
    pub alpha: f64,
    pub feasible: bool,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

/// Inputs of [`ObserverDesign::assemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConstants {
    pub l_gain: Matrix,
    pub varpi_o: f64,
    pub kappa_n: f64,
    pub lambda_no: f64,
    pub lambda_on: f64,
    pub kappa: f64,
    pub alpha: f64,
}

/// `γ = 1 − max_i |1 − l_ii|` for a diagonal gain.
pub fn jump_contraction(l_gain: &Matrix) -> Result<f64, DesignError> {
    if !l_gain.is_diagonal() {
        return Err(DesignError::NonDiagonalGain);
    }
    let mut worst: f64 = 0.0;
    for (i, l) in l_gain.diagonal().into_iter().enumerate() {
        let d = (1.0 - l).abs();
        if d >= 1.0 {
            return Err(DesignError::NoContraction { index: i, value: l });
        }
        worst = worst.max(d);
    }
    if worst <= 0.0 {
        // 1 − γ = 0 leaves β = 1/(1 − γ)² undefined.
        let index = l_gain
            .diagonal()
            .iter()
            .position(|&l| l == 1.0)
            .unwrap_or(0);
        return Err(DesignError::NoContraction { index, value: 1.0 });
    }
    Ok(1.0 - worst)
}

/// `β = 1/(1 − γ)²`.
pub fn beta_from_gamma(gamma: f64) -> f64 {
    1.0 / ((1.0 - gamma) * (1.0 - gamma))
}

fn check_gamma(gamma: f64) -> Result<(), DesignError> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(DesignError::Gamma(gamma))
    }
}

/// `−ln((1 − γ)²)`: the log-contraction budget of one jump.
fn jump_budget(gamma: f64) -> f64 {
    -((1.0 - gamma) * (1.0 - gamma)).ln()
}

/// Supremum of the sampling interval without noise: `−ln((1−γ)²)/ϖ_o`.
///
/// For `ϖ_o ≤ 0` the flow does not expand the measured error and the bound is
/// `+∞`.
pub fn t_max_noiseless(gamma: f64, varpi_o: f64) -> Result<f64, DesignError> {
    check_gamma(gamma)?;
    if varpi_o <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(jump_budget(gamma) / varpi_o)
}

/// Decay rate `κ_o = −(ln((1−γ)²)/T + ϖ_o)` of the majorant for interval `T`.
pub fn kappa_o_rate(gamma: f64, t_interval: f64, varpi_o: f64) -> Result<f64, DesignError> {
    check_gamma(gamma)?;
    if !(t_interval > 0.0) {
        return Err(DesignError::Interval(t_interval));
    }
    Ok(jump_budget(gamma) / t_interval - varpi_o)
}

/// Right-hand side `λ*_no + β λ*_on + κ` of the convergence condition.
pub fn convergence_threshold(design: &ObserverDesign) -> f64 {
    design.lambda_no + design.beta * design.lambda_on + design.kappa
}

/// Slacks `(κ_o − rhs, κ_n − rhs)` of the convergence condition.
pub fn convergence_slack(design: &ObserverDesign) -> (f64, f64) {
    let rhs = convergence_threshold(design);
    (design.kappa_o - rhs, design.kappa_n - rhs)
}

/// Exponential-convergence condition: `κ_i > λ*_no + β λ*_on + κ` for both
/// error blocks, with `κ > 0`.
///
/// `κ_o` is evaluated at `t_max`, which is exactly where its inequality
/// becomes an equality; that side is therefore accepted up to a relative
/// rounding tolerance (every admissible interval is strictly shorter).
pub fn check_convergence(design: &ObserverDesign) -> bool {
    if !(design.kappa > 0.0) {
        return false;
    }
    let rhs = convergence_threshold(design);
    let tol = BOUNDARY_RTOL * rhs.abs().max(1.0);
    let o_ok = design.kappa_o > rhs || (design.kappa_o - rhs).abs() <= tol;
    o_ok && design.kappa_n > rhs
}

/// Inputs of [`t_window`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowInputs {
    pub gamma: f64,
    pub varpi_o: f64,
    pub kappa: f64,
    pub lambda_no: f64,
    pub lambda_on: f64,
    pub beta: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingWindow {
    /// Strict lower bound on admissible intervals (dwell time).
    pub t_min: f64,
    /// Strict upper bound on admissible intervals.
    pub t_max: f64,
}

/// Admissible sampling window for ISS with gain `α`:
///
/// ```text
/// T_max = −ln((1−γ)²) / (ϖ_o + κ + λ*_no + β λ*_on)
/// T_min = −ln((α − γ)/α) / κ
/// ```
pub fn t_window(inp: WindowInputs) -> Result<SamplingWindow, DesignError> {
    check_gamma(inp.gamma)?;
    if !(inp.alpha > inp.gamma) {
        return Err(DesignError::IssGain {
            alpha: inp.alpha,
            gamma: inp.gamma,
        });
    }
    if !(inp.kappa > 0.0) {
        return Err(DesignError::Kappa(inp.kappa));
    }
    let denom = inp.varpi_o + inp.kappa + inp.lambda_no + inp.beta * inp.lambda_on;
    if !(denom > 0.0) {
        return Err(DesignError::Denominator(denom));
    }
    let t_max = jump_budget(inp.gamma) / denom;
    let t_min = -((inp.alpha - inp.gamma) / inp.alpha).ln() / inp.kappa;
    if t_min >= t_max {
        return Err(DesignError::InfeasibleWindow { t_min, t_max });
    }
    Ok(SamplingWindow { t_min, t_max })
}

/// Radius `√(α ‖w‖_∞)` of the invariant error ball.
pub fn iss_ball_radius(alpha: f64, w_inf: f64) -> f64 {
    (alpha * w_inf).sqrt()
}

impl ObserverDesign {
    /// Derives every remaining constant from the given ones. Failures of the
    /// window or convergence stage mark the design infeasible; an invalid gain
    /// is a hard error.
    pub fn assemble(c: DesignConstants) -> Result<Self, DesignError> {
        let gamma = jump_contraction(&c.l_gain)?;
        let beta = beta_from_gamma(gamma);
        let mut design = ObserverDesign {
            l_gain: c.l_gain,
            gamma,
            beta,
            varpi_o: c.varpi_o,
            kappa_n: c.kappa_n,
            kappa_o: f64::NAN,
            kappa: c.kappa,
            lambda_on: c.lambda_on,
            lambda_no: c.lambda_no,
            t_max: f64::NAN,
            t_min: f64::NAN,
            alpha: c.alpha,
            feasible: false,
            diagnostics: Vec::new(),
        };
        design.finish();
        Ok(design)
    }

    fn finish(&mut self) {
        if self.varpi_o.is_finite() && self.varpi_o <= 0.0 {
            self.diagnostics.push(Diagnostic::info(
                stage::MEASURED,
                format!(
                    "varpi_o = {:.6} <= 0: the flow does not expand the measured error",
                    self.varpi_o
                ),
            ));
        }
        let inputs_known = [self.varpi_o, self.kappa_n, self.kappa, self.alpha]
            .iter()
            .all(|v| v.is_finite());
        if !inputs_known {
            self.feasible = false;
            return;
        }
        match t_window(WindowInputs {
            gamma: self.gamma,
            varpi_o: self.varpi_o,
            kappa: self.kappa,
            lambda_no: self.lambda_no,
            lambda_on: self.lambda_on,
            beta: self.beta,
            alpha: self.alpha,
        }) {
            Ok(w) => {
                self.t_min = w.t_min;
                self.t_max = w.t_max;
            }
            Err(DesignError::InfeasibleWindow { t_min, t_max }) => {
                self.t_min = t_min;
                self.t_max = t_max;
                self.diagnostics.push(Diagnostic::failure(
                    stage::WINDOW,
                    format!("t_min = {t_min:.6} >= t_max = {t_max:.6}"),
                    Some(t_max - t_min),
                ));
            }
            Err(e) => {
                self.diagnostics
                    .push(Diagnostic::failure(stage::WINDOW, e.to_string(), None));
                self.feasible = false;
                return;
            }
        }
        self.kappa_o = kappa_o_rate(self.gamma, self.t_max, self.varpi_o).unwrap_or(f64::NAN);
        let window_ok = self.t_min < self.t_max;
        let conv_ok = check_convergence(self);
        if !conv_ok {
            let (so, sn) = convergence_slack(self);
            if sn <= 0.0 {
                self.diagnostics.push(Diagnostic::failure(
                    stage::CONVERGENCE,
                    format!(
                        "kappa_n = {:.6} must exceed lambda_no + beta*lambda_on + kappa = {:.6}",
                        self.kappa_n,
                        convergence_threshold(self)
                    ),
                    Some(sn),
                ));
            }
            if so < 0.0 && so.abs() > BOUNDARY_RTOL * convergence_threshold(self).abs().max(1.0) {
                self.diagnostics.push(Diagnostic::failure(
                    stage::CONVERGENCE,
                    format!(
                        "kappa_o = {:.6} must exceed lambda_no + beta*lambda_on + kappa = {:.6}",
                        self.kappa_o,
                        convergence_threshold(self)
                    ),
                    Some(so),
                ));
            }
        }
        self.feasible = window_ok && conv_ok;
    }

    pub fn failures(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Failure)
    }

    pub fn iss_radius(&self, w_inf: f64) -> f64 {
        iss_ball_radius(self.alpha, w_inf)
    }

    /// `−ln((1−γ)²)/ϖ_o`, the noiseless interval bound.
    pub fn t_max_noiseless(&self) -> f64 {
        t_max_noiseless(self.gamma, self.varpi_o).unwrap_or(f64::NAN)
    }
}

/// Runs the certificate chain and the timing formulas end to end.
///
/// `certs` must contain one certificate for each of the measured and the
/// unmeasured error maps. When `kappa` is `None` the available convergence
/// slack `κ_n − λ*_no − β λ*_on` is split evenly between `κ` and margin.
pub fn design_pipeline(
    pp: &PartitionedPlant,
    certs: &[QsrCertificate],
    l_gain: &Matrix,
    alpha: f64,
    kappa: Option<f64>,
) -> Result<ObserverDesign, DesignError> {
    let cert_o = certs
        .iter()
        .find(|c| c.subject == Subject::StaticMapO)
        .ok_or(DesignError::MissingCertificate("measured-block map"))?;
    let cert_n = certs
        .iter()
        .find(|c| c.subject == Subject::StaticMapN)
        .ok_or(DesignError::MissingCertificate("unmeasured-block map"))?;
    if l_gain.shape() != (pp.m(), pp.m()) {
        return Err(DesignError::Stage {
            stage: stage::JUMP,
            source: Box::new(
                crate::error::MatrixError::DimensionMismatch {
                    op: "correction gain",
                    left: l_gain.shape(),
                    right: (pp.m(), pp.m()),
                }
                .into(),
            ),
        });
    }
    let gamma = jump_contraction(l_gain).map_err(|e| DesignError::Stage {
        stage: stage::JUMP,
        source: Box::new(e.into()),
    })?;
    let beta = beta_from_gamma(gamma);
    let mut diagnostics = Vec::new();

    let varpi_o = match compute_varpi_o(&pp.a_oo, cert_o) {
        Ok(v) => v.value,
        Err(e) => {
            diagnostics.push(Diagnostic::failure(stage::MEASURED, e.to_string(), None));
            f64::NAN
        }
    };
    let kappa_n = match certify_kappa_n(&pp.a_nn, cert_n) {
        Ok(k) => k,
        Err(e) => {
            diagnostics.push(Diagnostic::failure(stage::UNMEASURED, e.to_string(), None));
            f64::NAN
        }
    };
    let stage_err = |e: crate::error::MatrixError| DesignError::Stage {
        stage: stage::WINDOW,
        source: Box::new(e.into()),
    };
    let lambda_on = spectral_norm(&pp.a_on).map_err(stage_err)?;
    let lambda_no = spectral_norm(&pp.a_no).map_err(stage_err)?;

    let kappa = match kappa {
        Some(k) => k,
        None if kappa_n.is_finite() => {
            let slack = kappa_n - lambda_no - beta * lambda_on;
            if slack > 0.0 {
                0.5 * slack
            } else {
                diagnostics.push(Diagnostic::failure(
                    stage::DECAY,
                    format!(
                        "no positive decay budget: kappa_n - lambda_no - beta*lambda_on = {slack:.6}"
                    ),
                    Some(slack),
                ));
                f64::NAN
            }
        }
        None => f64::NAN,
    };
    if kappa.is_finite() && kappa <= 0.0 {
        diagnostics.push(Diagnostic::failure(
            stage::DECAY,
            format!("kappa = {kappa} must be positive"),
            Some(kappa),
        ));
    }

    let mut design = ObserverDesign::assemble(DesignConstants {
        l_gain: l_gain.clone(),
        varpi_o,
        kappa_n,
        lambda_no,
        lambda_on,
        kappa,
        alpha,
    })
    .map_err(|e| DesignError::Stage {
        stage: stage::JUMP,
        source: Box::new(e.into()),
    })?;
    diagnostics.append(&mut design.diagnostics);
    design.diagnostics = diagnostics;
    design.feasible = design.feasible && design.failures().next().is_none();
    Ok(design)
}
