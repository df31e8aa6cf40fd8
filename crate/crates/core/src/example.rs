//! Two-state benchmark plant
//!
//! ```text
//! ẋ1 = μ(x1, x2),   ẋ2 = b x1 + c x2,   y = x1
//! μ(x1, x2) = x1 x2 (x2 + a)(x2 − a) / (1 + x2⁴)
//! ```
//!
//! split as `A = [[0, 0], [b, c]]`, `ψ = [μ, 0]`. With `C = [1, 0]` the
//! partition is the identity, so `Ā_oo = 0`, `Ā_on = 0`, `Ā_no = b`,
//! `Ā_nn = c`.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::design::{DesignConstants, ObserverDesign};
use crate::dissipativity::{CertStatus, QsrCertificate, Subject};
use crate::error::{Error, PlantError};
use crate::matrix::Matrix;
use crate::plant::Plant;

/// Published sampling window of the benchmark.
pub const REFERENCE_T_MIN: f64 = 0.63;
pub const REFERENCE_T_MAX: f64 = 1.09;
/// Net decay that reproduces `REFERENCE_T_MIN` with `α = 3`, `γ = 0.8`.
pub const BACKSOLVED_KAPPA: f64 = 0.49228;
/// `ϖ_o + κ + λ*_no + β λ*_on` that reproduces `REFERENCE_T_MAX` with `γ = 0.8`.
pub const BACKSOLVED_DENOMINATOR: f64 = 2.95315;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for ExampleParams {
    fn default() -> Self {
        Self {
            a: 2.0,
            b: 3.0,
            c: -1.0,
        }
    }
}

impl ExampleParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        if ![self.a, self.b, self.c].iter().all(|v| v.is_finite()) {
            return Err(PlantError::Parameter("parameters must be finite".into()));
        }
        if self.c >= 0.0 {
            return Err(PlantError::Parameter(format!(
                "c = {} must be negative for detectability",
                self.c
            )));
        }
        Ok(())
    }
}

/// `μ(x1, x2) = x1 x2 (x2 + a)(x2 − a) / (1 + x2⁴)`.
pub fn mu(a: f64, x1: f64, x2: f64) -> f64 {
    x1 * x2 * (x2 + a) * (x2 - a) / (1.0 + x2.powi(4))
}

/// `sup_s |s (s² − a²)| / (1 + s⁴)`, so that `|μ(x1, x2)| ≤ g |x1|`.
///
/// Evaluated on a dense grid over `|s| ≤ 10 (1 + |a|)`; beyond that the
/// function decays like `1/|s|`.
pub fn mu_gain_bound(a: f64) -> f64 {
    let span = 10.0 * (1.0 + a.abs());
    let n = 200_000;
    (0..=n)
        .map(|i| {
            let s = span * i as f64 / n as f64;
            (s * (s * s - a * a) / (1.0 + s.powi(4))).abs()
        })
        .fold(0.0, f64::max)
}

pub fn field(p: &ExampleParams, x: &[f64]) -> [f64; 2] {
    [mu(p.a, x[0], x[1]), p.b * x[0] + p.c * x[1]]
}

pub fn example_plant(p: &ExampleParams) -> Result<Plant, PlantError> {
    p.validate()?;
    let a = Matrix::from_rows(&[[0.0, 0.0], [p.b, p.c]])?;
    let c = Matrix::from_rows(&[[1.0, 0.0]])?;
    let aa = p.a;
    let psi = Arc::new(move |x: &[f64]| vec![mu(aa, x[0], x[1]), 0.0]);
    Plant::new(a, c, psi, mu_gain_bound(p.a))
}

/// `x1 = −(c/b) x2`, `x2 ∈ {−a, 0, a}`.
pub fn equilibria(p: &ExampleParams) -> Result<[[f64; 2]; 3], PlantError> {
    if p.b == 0.0 {
        return Err(PlantError::Parameter("b must be nonzero".into()));
    }
    let point = |x2: f64| [-(p.c / p.b) * x2, x2];
    Ok([point(-p.a), point(0.0), point(p.a)])
}

/// Rows `(x1, x2, ẋ1, ẋ2)` on a `resolution × resolution` grid.
pub fn phase_portrait_grid(
    p: &ExampleParams,
    x1_range: [f64; 2],
    x2_range: [f64; 2],
    resolution: usize,
) -> Result<Vec<[f64; 4]>, PlantError> {
    if resolution < 2 {
        return Err(PlantError::Parameter(
            "resolution must be at least 2".into(),
        ));
    }
    for [lo, hi] in [x1_range, x2_range] {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(PlantError::Parameter(format!("bad range [{lo}, {hi}]")));
        }
    }
    let step = |[lo, hi]: [f64; 2], i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let mut rows = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            let x = [step(x1_range, i), step(x2_range, j)];
            let f = field(p, &x);
            rows.push([x[0], x[1], f[0], f[1]]);
        }
    }
    Ok(rows)
}

pub fn write_phase_portrait_csv<W: Write>(out: W, rows: &[[f64; 4]]) -> Result<(), Error> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["x1", "x2", "dx1", "dx2"])?;
    for r in rows {
        wtr.write_record(r.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Certificates for the benchmark error maps.
///
/// The measured residual is `ψ̃_o = h(x2) ε_1` when `ε_2 = 0`, with
/// `|h| ≤ g = mu_gain_bound(a)`, giving the sector `(−1, 0, g²)`. The
/// unmeasured residual is identically zero.
pub fn example_certificates(p: &ExampleParams) -> Vec<QsrCertificate> {
    let g = mu_gain_bound(p.a);
    let cert_o = QsrCertificate::new(
        Matrix::scalar(-1.0),
        Matrix::scalar(0.0),
        Matrix::scalar(g * g),
        Subject::StaticMapO,
        CertStatus::Assumed,
    )
    .expect("scalar certificate");
    vec![cert_o, QsrCertificate::trivial(1, Subject::StaticMapN)]
}

/// Design built from the back-solved constants that reproduce the published
/// window with `L = 0.8`, `α = 3`: `κ = 0.49228` and a denominator of
/// `2.95315`, with `λ*_no = |b|`, `λ*_on = 0` and `κ_n = −2c`.
///
/// This implies a negative `ϖ_o` and `κ_n < λ*_no`, so the convergence check
/// does not hold for it; the design is used for its window and gain only.
pub fn reference_design(p: &ExampleParams) -> ObserverDesign {
    let lambda_no = p.b.abs();
    let varpi_o = BACKSOLVED_DENOMINATOR - BACKSOLVED_KAPPA - lambda_no;
    ObserverDesign::assemble(DesignConstants {
        l_gain: Matrix::scalar(0.8),
        varpi_o,
        kappa_n: -2.0 * p.c,
        lambda_no,
        lambda_on: 0.0,
        kappa: BACKSOLVED_KAPPA,
        alpha: 3.0,
    })
    .expect("L = 0.8 is a valid gain")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mu_examples() {
        assert_eq!(mu(2.0, 3.7, 0.0), 0.0);
        assert_eq!(mu(2.0, 1.0, 2.0), 0.0);
        assert_eq!(mu(2.0, 1.0, -2.0), 0.0);
        assert_eq!(mu(2.0, 1.0, 1.0), -1.5);
    }

    #[test]
    fn plant_shape_and_origin() {
        let p = ExampleParams::default();
        let plant = example_plant(&p).unwrap();
        assert_eq!((plant.n(), plant.m()), (2, 1));
        assert_eq!((plant.psi)(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert!(example_plant(&ExampleParams { c: 0.0, ..p }).is_err());
        assert!(example_plant(&ExampleParams { c: 1.0, ..p }).is_err());
    }

    #[test]
    fn equilibria_examples() {
        let p = ExampleParams::default();
        let eq = equilibria(&p).unwrap();
        let expect = [[-2.0 / 3.0, -2.0], [0.0, 0.0], [2.0 / 3.0, 2.0]];
        for (e, x) in eq.iter().zip(expect) {
            assert_abs_diff_eq!(e[0], x[0], epsilon = 1e-15);
            assert_abs_diff_eq!(e[1], x[1], epsilon = 1e-15);
            let f = field(&p, e);
            assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12);
        }
        let degenerate = equilibria(&ExampleParams { a: 0.0, ..p }).unwrap();
        assert!(degenerate.iter().all(|e| e[0] == 0.0 && e[1] == 0.0));
        let doubled = equilibria(&ExampleParams { c: -2.0, ..p }).unwrap();
        assert_abs_diff_eq!(doubled[2][0], 2.0 * eq[2][0], epsilon = 1e-15);
        assert!(equilibria(&ExampleParams { b: 0.0, ..p }).is_err());
    }

    #[test]
    fn phase_grid_examples() {
        let p = ExampleParams::default();
        assert_eq!(field(&p, &[1.0, 1.0]), [-1.5, 2.0]);
        let rows = phase_portrait_grid(&p, [-2.0, 2.0], [-3.0, 3.0], 7).unwrap();
        assert_eq!(rows.len(), 49);
        // x2 grid is symmetric, so rows j and 6 - j mirror each other.
        for i in 0..7 {
            for j in 0..7 {
                let r = rows[7 * i + j];
                let m = rows[7 * i + 6 - j];
                assert!((r[2] + m[2]).abs() < 1e-12);
            }
        }
        assert!(phase_portrait_grid(&p, [0.0, 1.0], [0.0, 1.0], 1).is_err());
    }

    #[test]
    fn gain_bound_dominates_mu() {
        let g = mu_gain_bound(2.0);
        assert!(g > 0.0);
        for i in 0..2001 {
            let s = -50.0 + 0.05 * i as f64;
            assert!(mu(2.0, 1.0, s).abs() <= g + 1e-12);
        }
    }

    #[test]
    fn reference_design_reproduces_window() {
        let d = reference_design(&ExampleParams::default());
        assert_abs_diff_eq!(d.gamma, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(d.t_min, REFERENCE_T_MIN, epsilon = 1e-3);
        assert_abs_diff_eq!(d.t_max, REFERENCE_T_MAX, epsilon = 1e-3);
        assert!(d.varpi_o < 0.0);
        assert!(!d.feasible);
    }
}
