//! Quadratic (Q, S, R) supply rates and the strict-state-dissipativity
//! certificates used by the observer design.
//!
//! With storage `xᵀx`, the linear system `ẋ = A x + B u, y = x` is
//! (Q, S, R)-ssd(κ) when
//!
//! ```text
//! [[A + Aᵀ + κI − Q,  B − S],
//!  [Bᵀ − Sᵀ,          −R   ]]  ⪯ 0.
//! ```
//!
//! The unmeasured error block inherits a dissipation rate `κ_n` from the
//! certificate of its nonlinearity ([`certify_kappa_n`]); the measured block
//! gets an expansion bound `ϖ_o` ([`compute_varpi_o`]). Certificates for the
//! nonlinearities themselves are supplied by the caller and can only be
//! falsified by sampling ([`falsify_qsr`]).

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CertError;
use crate::matrix::{is_neg_definite, spectral_norm, sym_eig_max, Matrix};

/// Numerical guard for `⪯ 0` decisions.
pub const SSD_GUARD: f64 = 1e-9;
/// Bisection tolerance for the maximal dissipation rate.
pub const KAPPA_TOL: f64 = 1e-8;
/// Additive margin making the `ϖ_o` inequality strict.
pub const VARPI_MARGIN: f64 = 1e-6;
/// A sampled supply rate below this value is a counterexample.
pub const FALSIFY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    LinearSubsystemN,
    LinearSubsystemO,
    StaticMapO,
    StaticMapN,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertStatus {
    Verified,
    Falsified,
    Assumed,
}

/// A (Q, S, R, κ) tuple attached to a subsystem or a static map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsrCertificate {
    pub q: Matrix,
    pub s: Matrix,
    pub r: Matrix,
    #[serde(default)]
    pub kappa: f64,
    pub subject: Subject,
    pub status: CertStatus,
}

impl QsrCertificate {
    /// Validates shapes (`q: p×p`, `s: p×k`, `r: k×k`) and symmetrizes `q`, `r`.
    ///
    /// A static map can never be `Verified` here: sampling only falsifies, so
    /// such requests are downgraded to `Assumed`.
    pub fn new(
        q: Matrix,
        s: Matrix,
        r: Matrix,
        subject: Subject,
        status: CertStatus,
    ) -> Result<Self, CertError> {
        let (p, k) = s.shape();
        if q.shape() != (p, p) || r.shape() != (k, k) {
            return Err(crate::error::MatrixError::DimensionMismatch {
                op: "qsr certificate",
                left: q.shape(),
                right: r.shape(),
            }
            .into());
        }
        let status = match (subject, status) {
            (Subject::StaticMapN | Subject::StaticMapO, CertStatus::Verified) => {
                CertStatus::Assumed
            }
            (_, s) => s,
        };
        Ok(Self {
            q: q.symmetrized()?,
            s,
            r: r.symmetrized()?,
            kappa: 0.0,
            subject,
            status,
        })
    }

    /// Certificate of a map known to vanish identically (Q = S = R = 0).
    pub fn trivial(dim: usize, subject: Subject) -> Self {
        Self {
            q: Matrix::zeros(dim, dim),
            s: Matrix::zeros(dim, dim),
            r: Matrix::zeros(dim, dim),
            kappa: 0.0,
            subject,
            status: CertStatus::Assumed,
        }
    }

    /// All three weight blocks are zero: the certified map is `ψ ≡ 0`.
    pub fn is_trivial(&self) -> bool {
        self.q.is_zero() && self.s.is_zero() && self.r.is_zero()
    }

    /// `ω(y, u) = yᵀQy + 2yᵀSu + uᵀRu`.
    pub fn supply_rate(&self, y: &[f64], u: &[f64]) -> f64 {
        supply_rate(&self.q, &self.s, &self.r, y, u)
    }
}

fn quad(m: &Matrix, a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            acc += ai * m[(i, j)] * bj;
        }
    }
    acc
}

pub fn supply_rate(q: &Matrix, s: &Matrix, r: &Matrix, y: &[f64], u: &[f64]) -> f64 {
    quad(q, y, y) + 2.0 * quad(s, y, u) + quad(r, u, u)
}

/// (Q, S, R)-ssd(κ) test for `Σ(A, B, I)` with storage `xᵀx`.
pub fn qsr_ssd_check(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    s: &Matrix,
    r: &Matrix,
    kappa: f64,
) -> Result<bool, CertError> {
    let n = a.rows();
    let k = b.cols();
    let dims_ok = a.is_square()
        && b.rows() == n
        && q.shape() == (n, n)
        && s.shape() == (n, k)
        && r.shape() == (k, k);
    if !dims_ok {
        return Err(crate::error::MatrixError::DimensionMismatch {
            op: "qsr_ssd_check",
            left: a.shape(),
            right: b.shape(),
        }
        .into());
    }
    let top_left = a.add(&a.transpose())?.shift_diag(kappa).sub(q)?;
    let top_right = b.sub(s)?;
    let block = Matrix::from_blocks(
        &top_left,
        &top_right,
        &top_right.transpose(),
        &r.scale(-1.0),
    )?;
    Ok(sym_eig_max(&block)? <= SSD_GUARD)
}

/// ssd(κ) test for `ẋ = A x` with no input channel (the nonlinearity vanishes).
fn autonomous_ssd_check(a: &Matrix, kappa: f64) -> Result<bool, CertError> {
    let sym = a.add(&a.transpose())?.shift_diag(kappa);
    Ok(sym_eig_max(&sym)? <= SSD_GUARD)
}

fn check_kappa_n_inputs(a_nn: &Matrix, cert: &QsrCertificate) -> Result<(), CertError> {
    if cert.subject != Subject::StaticMapN {
        return Err(CertError::Precondition(format!(
            "expected a certificate for the unmeasured-block map, got {:?}",
            cert.subject
        )));
    }
    let p = a_nn.rows();
    if !a_nn.is_square() || cert.q.rows() != p || cert.s.cols() != p {
        return Err(crate::error::MatrixError::DimensionMismatch {
            op: "certify_kappa_n",
            left: a_nn.shape(),
            right: cert.s.shape(),
        }
        .into());
    }
    if sym_eig_max(&cert.q)? > SSD_GUARD {
        return Err(CertError::Precondition(
            "Q_n must be negative semidefinite".into(),
        ));
    }
    Ok(())
}

fn kappa_n_test(a_nn: &Matrix, cert: &QsrCertificate, kappa: f64) -> Result<bool, CertError> {
    if cert.is_trivial() {
        return autonomous_ssd_check(a_nn, kappa);
    }
    let ident = Matrix::identity(a_nn.rows());
    qsr_ssd_check(
        a_nn,
        &ident,
        &cert.r.scale(-1.0),
        &cert.s.transpose().scale(-1.0),
        &cert.q.scale(-1.0),
        kappa,
    )
}

/// Whether `Σ(Ā_n, I, I)` is (−R_n, −S_nᵀ, −Q_n)-ssd(κ), the test behind
/// [`certify_kappa_n`].
pub fn kappa_n_passes(a_nn: &Matrix, cert: &QsrCertificate, kappa: f64) -> Result<bool, CertError> {
    check_kappa_n_inputs(a_nn, cert)?;
    kappa_n_test(a_nn, cert, kappa)
}

/// Largest `κ_n ≥ 0` for which `Σ(Ā_n, I, I)` is (−R_n, −S_nᵀ, −Q_n)-ssd(κ_n).
///
/// A trivial certificate (all-zero Q, S, R) means `ψ̃_n ≡ 0`: the input
/// channel carries nothing and only `Ā_n + Ā_nᵀ + κI ⪯ 0` is checked.
/// The returned value passes the check; `κ_n + 1e-6` does not.
pub fn certify_kappa_n(a_nn: &Matrix, cert: &QsrCertificate) -> Result<f64, CertError> {
    check_kappa_n_inputs(a_nn, cert)?;
    let passes = |kappa: f64| kappa_n_test(a_nn, cert, kappa);

    if !passes(0.0)? {
        return Err(CertError::Infeasible(
            "no nonnegative dissipation rate for the unmeasured error block".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = 2.0 * spectral_norm(a_nn)? + cert.r.max_abs() + cert.s.max_abs() + 1.0;
    while passes(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(CertError::Infeasible(
                "dissipation rate is unbounded".into(),
            ));
        }
    }
    while hi - lo > KAPPA_TOL {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Expansion bound of the measured error block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarpiBound {
    /// `ϖ_o = λ_max(M_o) + VARPI_MARGIN`.
    pub value: f64,
    /// `λ_max(M_o)` without the margin.
    pub eig_max: f64,
    /// True when `ϖ_o > 0` (the flow may expand the measured error).
    pub positive: bool,
}

/// `M_o = Ā_o + Ā_oᵀ + R_o − (I + S_oᵀ) Q_o⁻¹ (I + S_o)`.
pub fn varpi_matrix(a_oo: &Matrix, cert: &QsrCertificate) -> Result<Matrix, CertError> {
    let m = a_oo.rows();
    let ident = Matrix::identity(m);
    let left = ident.add(&cert.s.transpose())?;
    let right = ident.add(&cert.s)?;
    let correction = left.matmul(&cert.q.inverse()?)?.matmul(&right)?;
    Ok(a_oo
        .add(&a_oo.transpose())?
        .add(&cert.r)?
        .sub(&correction)?)
}

/// Smallest admissible `ϖ_o` (plus a fixed margin) such that `Σ(Ā_o, I, I)`
/// is (−R_o, −S_oᵀ, −Q_o)-ssd(−ϖ_o). Requires `Q_o ≺ 0`.
pub fn compute_varpi_o(a_oo: &Matrix, cert: &QsrCertificate) -> Result<VarpiBound, CertError> {
    if cert.subject != Subject::StaticMapO {
        return Err(CertError::Precondition(format!(
            "expected a certificate for the measured-block map, got {:?}",
            cert.subject
        )));
    }
    let m = a_oo.rows();
    if !a_oo.is_square() || cert.q.rows() != m || cert.s.cols() != m {
        return Err(crate::error::MatrixError::DimensionMismatch {
            op: "compute_varpi_o",
            left: a_oo.shape(),
            right: cert.s.shape(),
        }
        .into());
    }
    if !is_neg_definite(&cert.q, 1e-10)? {
        return Err(CertError::Precondition(
            "measured-block bound requires Q_o negative definite".into(),
        ));
    }
    let eig_max = sym_eig_max(&varpi_matrix(a_oo, cert)?)?;
    let value = eig_max + VARPI_MARGIN;
    Ok(VarpiBound {
        value,
        eig_max,
        positive: value > 0.0,
    })
}

/// Axis-aligned sampling region for `(z, ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    /// Per-coordinate `[lo, hi]` bounds for the reference state `z`.
    pub z: Vec<[f64; 2]>,
    /// Per-coordinate `[lo, hi]` bounds for the error `ε`.
    pub eps: Vec<[f64; 2]>,
}

impl SampleBox {
    fn validate(&self) -> Result<(), CertError> {
        for [lo, hi] in self.z.iter().chain(&self.eps) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(CertError::SampleBox(format!("bad interval [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// A sampled point where the supply rate is negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub z: Vec<f64>,
    pub eps: Vec<f64>,
    pub psi: Vec<f64>,
    pub omega: f64,
    pub sample_index: usize,
}

/// Searches for a violation of `ω(ψ̃_i(z, ε), ε_i) ≥ 0` over random samples.
///
/// `block` selects `ε_i` inside `ε`. Returns the first counterexample, or
/// `None` if the sample found none. `None` does not verify the certificate.
#[allow(clippy::too_many_arguments)]
pub fn falsify_qsr<F>(
    psi: F,
    block: Range<usize>,
    q: &Matrix,
    s: &Matrix,
    r: &Matrix,
    sample_box: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<Option<Counterexample>, CertError>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    if samples == 0 {
        return Err(CertError::SampleBox("at least one sample required".into()));
    }
    sample_box.validate()?;
    if block.end > sample_box.eps.len() || block.len() != s.cols() {
        return Err(CertError::SampleBox(format!(
            "error block {block:?} does not match the box ({} coords) and S ({} cols)",
            sample_box.eps.len(),
            s.cols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, bounds: &[[f64; 2]]| -> Vec<f64> {
        bounds
            .iter()
            .map(|&[lo, hi]| {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            })
            .collect()
    };
    for idx in 0..samples {
        let z = draw(&mut rng, &sample_box.z);
        let eps = draw(&mut rng, &sample_box.eps);
        let out = psi(&z, &eps);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(CertError::NonFinite { z, eps });
        }
        if out.len() != q.rows() {
            return Err(CertError::SampleBox(format!(
                "evaluator returned {} values, Q is {}x{}",
                out.len(),
                q.rows(),
                q.cols()
            )));
        }
        let omega = supply_rate(q, s, r, &out, &eps[block.clone()]);
        if omega < -FALSIFY_TOL {
            return Ok(Some(Counterexample {
                z,
                eps,
                psi: out,
                omega,
                sample_index: idx,
            }));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn s(v: f64) -> Matrix {
        Matrix::scalar(v)
    }

    #[test]
    fn ssd_scalar_boundary() {
        let z = s(0.0);
        assert!(qsr_ssd_check(&s(-1.0), &z, &z, &z, &z, 2.0).unwrap());
        assert!(!qsr_ssd_check(&s(-1.0), &z, &z, &z, &z, 3.0).unwrap());
    }

    #[test]
    fn ssd_block_example() {
        // Block matrix decouples into 2x2 pairs [[2 - 2a, 1], [1, -1]], a ∈ {2, 3}.
        let a = Matrix::diag(&[-2.0, -3.0]);
        let i2 = Matrix::identity(2);
        let z2 = Matrix::zeros(2, 2);
        let ok = qsr_ssd_check(&a, &i2, &i2.scale(-1.0), &z2, &i2, 1.0).unwrap();
        // trace t = 1 - 2a, det d = 2a - 3, λ_max = (t + √(t² − 4d)) / 2.
        let lam = |av: f64| {
            let t = 1.0 - 2.0 * av;
            let d = 2.0 * av - 3.0;
            0.5 * (t + (t * t - 4.0 * d).sqrt())
        };
        let oracle = lam(2.0).max(lam(3.0));
        assert!(oracle < 0.0);
        assert!(ok);
        let full =
            Matrix::from_blocks(&a.scale(2.0).shift_diag(2.0), &i2, &i2, &i2.scale(-1.0)).unwrap();
        assert_abs_diff_eq!(sym_eig_max(&full).unwrap(), oracle, epsilon = 1e-12);
    }

    #[test]
    fn ssd_dimension_mismatch() {
        let z = s(0.0);
        assert!(matches!(
            qsr_ssd_check(&Matrix::identity(2), &z, &z, &z, &z, 0.0),
            Err(CertError::Matrix(_))
        ));
    }

    #[test]
    fn kappa_n_examples() {
        let cert = QsrCertificate::trivial(1, Subject::StaticMapN);
        assert_abs_diff_eq!(
            certify_kappa_n(&s(-1.0), &cert).unwrap(),
            2.0,
            epsilon = 1e-7
        );
        let cert2 = QsrCertificate::trivial(2, Subject::StaticMapN);
        assert_abs_diff_eq!(
            certify_kappa_n(&Matrix::diag(&[-3.0, -1.0]), &cert2).unwrap(),
            2.0,
            epsilon = 1e-7
        );
        assert!(matches!(
            certify_kappa_n(&s(1.0), &cert),
            Err(CertError::Infeasible(_))
        ));
    }

    #[test]
    fn kappa_n_sector_certificate() {
        // ψ̃_n in sector [-1, 0]: Q = -1, S = -1/2, R = 0.
        // [[2a + κ, 1/2], [1/2, -1]] ⪯ 0  ⇔  2a + κ + 1/4 ≤ 0.
        let cert = QsrCertificate::new(
            s(-1.0),
            s(-0.5),
            s(0.0),
            Subject::StaticMapN,
            CertStatus::Assumed,
        )
        .unwrap();
        let k = certify_kappa_n(&s(-5.0), &cert).unwrap();
        assert_abs_diff_eq!(k, 9.75, epsilon = 1e-7);
        let ident = Matrix::identity(1);
        assert!(qsr_ssd_check(&s(-5.0), &ident, &s(0.0), &s(0.5), &s(1.0), k).unwrap());
        assert!(!qsr_ssd_check(&s(-5.0), &ident, &s(0.0), &s(0.5), &s(1.0), k + 1e-6).unwrap());
    }

    #[test]
    fn kappa_n_rejects_wrong_subject_or_indefinite_q() {
        let cert = QsrCertificate::trivial(1, Subject::StaticMapO);
        assert!(matches!(
            certify_kappa_n(&s(-1.0), &cert),
            Err(CertError::Precondition(_))
        ));
        let cert = QsrCertificate::new(
            s(1.0),
            s(0.0),
            s(0.0),
            Subject::StaticMapN,
            CertStatus::Assumed,
        )
        .unwrap();
        assert!(matches!(
            certify_kappa_n(&s(-1.0), &cert),
            Err(CertError::Precondition(_))
        ));
    }

    #[test]
    fn varpi_examples() {
        let cert = QsrCertificate::new(
            s(-1.0),
            s(0.0),
            s(0.0),
            Subject::StaticMapO,
            CertStatus::Assumed,
        )
        .unwrap();
        let v = compute_varpi_o(&s(0.0), &cert).unwrap();
        assert_abs_diff_eq!(v.value, 1.0 + 1e-6, epsilon = 1e-14);
        assert!(v.positive);

        let i1 = Matrix::identity(1);
        let cert = QsrCertificate::new(
            i1.scale(-1.0),
            i1.scale(-1.0),
            s(0.0),
            Subject::StaticMapO,
            CertStatus::Assumed,
        )
        .unwrap();
        let v = compute_varpi_o(&s(-5.0), &cert).unwrap();
        assert_abs_diff_eq!(v.value, -10.0 + 1e-6, epsilon = 1e-14);
        assert!(!v.positive);

        let i2 = Matrix::identity(2);
        let cert = QsrCertificate::new(
            i2.scale(-1.0),
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 2),
            Subject::StaticMapO,
            CertStatus::Assumed,
        )
        .unwrap();
        let skew = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(
            varpi_matrix(&skew, &cert)
                .unwrap()
                .sub(&i2)
                .unwrap()
                .max_abs(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            compute_varpi_o(&skew, &cert).unwrap().value,
            1.0 + 1e-6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn varpi_requires_negative_definite_q() {
        let cert = QsrCertificate::new(
            s(0.0),
            s(0.0),
            s(0.0),
            Subject::StaticMapO,
            CertStatus::Assumed,
        )
        .unwrap();
        assert!(matches!(
            compute_varpi_o(&s(0.0), &cert),
            Err(CertError::Precondition(_))
        ));
    }

    #[test]
    fn varpi_certificate_holds_and_is_tight() {
        let a = Matrix::from_rows(&[[0.4, -0.3], [1.2, -0.8]]).unwrap();
        let q = Matrix::from_rows(&[[-2.0, 0.3], [0.3, -1.0]]).unwrap();
        let sm = Matrix::from_rows(&[[0.1, 0.4], [-0.2, 0.3]]).unwrap();
        let r = Matrix::from_rows(&[[0.5, 0.1], [0.1, 0.2]]).unwrap();
        let cert = QsrCertificate::new(
            q.clone(),
            sm.clone(),
            r.clone(),
            Subject::StaticMapO,
            CertStatus::Assumed,
        )
        .unwrap();
        let v = compute_varpi_o(&a, &cert).unwrap();
        let ident = Matrix::identity(2);
        let (nr, nst, nq) = (r.scale(-1.0), sm.transpose().scale(-1.0), q.scale(-1.0));
        assert!(qsr_ssd_check(&a, &ident, &nr, &nst, &nq, -v.value).unwrap());
        assert!(!qsr_ssd_check(&a, &ident, &nr, &nst, &nq, -(v.value - 2e-6)).unwrap());
    }

    #[test]
    fn static_map_cannot_be_verified_by_construction() {
        let cert = QsrCertificate::new(
            s(-1.0),
            s(0.0),
            s(0.0),
            Subject::StaticMapO,
            CertStatus::Verified,
        )
        .unwrap();
        assert_eq!(cert.status, CertStatus::Assumed);
    }

    fn unit_box() -> SampleBox {
        SampleBox {
            z: vec![[-1.0, 1.0]],
            eps: vec![[-5.0, 5.0]],
        }
    }

    #[test]
    fn falsify_zero_map_finds_nothing() {
        let z = s(0.0);
        let res = falsify_qsr(|_z, _e| vec![0.0], 0..1, &z, &z, &z, &unit_box(), 1000, 1).unwrap();
        assert!(res.is_none());
    }

    #[test]
    fn falsify_identity_with_negative_q() {
        let z = s(0.0);
        let res = falsify_qsr(
            |_z, e| vec![e[0]],
            0..1,
            &s(-1.0),
            &z,
            &z,
            &unit_box(),
            10,
            1,
        )
        .unwrap()
        .expect("counterexample");
        assert!(res.omega < 0.0);
        assert_abs_diff_eq!(res.omega, -res.eps[0] * res.eps[0], epsilon = 1e-12);
    }

    #[test]
    fn falsify_saturation_sector() {
        // sat in sector [0, 1]: ψ(ε - ψ) ≥ 0 → Q = -1, S = 1/2, R = 0.
        let sat = |x: f64| x.clamp(-1.0, 1.0);
        // Grid oracle over [-5, 5].
        let worst = (0..10_000)
            .map(|i| -5.0 + 10.0 * i as f64 / 9_999.0)
            .map(|e| -sat(e) * sat(e) + sat(e) * e)
            .fold(f64::INFINITY, f64::min);
        assert!(worst >= 0.0);
        let res = falsify_qsr(
            |_z, e| vec![sat(e[0])],
            0..1,
            &s(-1.0),
            &s(0.5),
            &s(0.0),
            &unit_box(),
            10_000,
            3,
        )
        .unwrap();
        assert!(res.is_none());
    }

    #[test]
    fn falsify_rejects_non_finite() {
        let z = s(0.0);
        let res = falsify_qsr(|_z, _e| vec![f64::NAN], 0..1, &z, &z, &z, &unit_box(), 5, 1);
        assert!(matches!(res, Err(CertError::NonFinite { .. })));
    }

    #[test]
    fn falsify_is_deterministic() {
        let z = s(0.0);
        let a = falsify_qsr(
            |_z, e| vec![e[0]],
            0..1,
            &s(-1.0),
            &z,
            &z,
            &unit_box(),
            10,
            42,
        )
        .unwrap();
        let b = falsify_qsr(
            |_z, e| vec![e[0]],
            0..1,
            &s(-1.0),
            &z,
            &z,
            &unit_box(),
            10,
            42,
        )
        .unwrap();
        assert_eq!(a.unwrap().eps, b.unwrap().eps);
    }
}
