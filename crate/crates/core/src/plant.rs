//! Plant description and the measured/unmeasured coordinate split.
//!
//! A [`Plant`] is `ẋ = A x + ψ(x)` with sampled output `y_k = C x(t_k) + w_k`.
//! [`partition`] moves it to coordinates `z = T x` with `T = [C; M]`, so the
//! first `m` coordinates are exactly the measured ones.

use std::fmt;
use std::sync::Arc;

use crate::error::PlantError;
use crate::matrix::{singular_values, Matrix};

/// Vector field evaluator `x ↦ ψ(x)`.
pub type Nonlinearity = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Relative singular-value threshold for the rank test on `C`.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone)]
pub struct Plant {
    pub a: Matrix,
    pub c: Matrix,
    pub psi: Nonlinearity,
    /// User-declared Lipschitz bound of `psi`.
    pub lipschitz_bound: f64,
}

impl fmt::Debug for Plant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Plant")
            .field("a", &self.a)
            .field("c", &self.c)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish_non_exhaustive()
    }
}

impl Plant {
    pub fn new(
        a: Matrix,
        c: Matrix,
        psi: Nonlinearity,
        lipschitz_bound: f64,
    ) -> Result<Self, PlantError> {
        let n = a.rows();
        if !a.is_square() {
            return Err(PlantError::Dimension {
                expected: n,
                got: a.cols(),
            });
        }
        if c.cols() != n {
            return Err(PlantError::Dimension {
                expected: n,
                got: c.cols(),
            });
        }
        if c.rows() >= n {
            return Err(PlantError::NotPartial { m: c.rows(), n });
        }
        check_full_row_rank(&c)?;
        if !(lipschitz_bound >= 0.0 && lipschitz_bound.is_finite()) {
            return Err(PlantError::Parameter(format!(
                "lipschitz_bound must be finite and >= 0, got {lipschitz_bound}"
            )));
        }
        let probe = vec![0.0; n];
        let out = psi(&probe);
        if out.len() != n {
            return Err(PlantError::Dimension {
                expected: n,
                got: out.len(),
            });
        }
        Ok(Self {
            a,
            c,
            psi,
            lipschitz_bound,
        })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.c.rows()
    }

    /// `A x + ψ(x)` in original coordinates.
    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        let mut dx = self
            .a
            .mul_vec(x)
            .expect("dimension checked at construction");
        for (d, p) in dx.iter_mut().zip((self.psi)(x)) {
            *d += p;
        }
        dx
    }
}

fn check_full_row_rank(c: &Matrix) -> Result<(), PlantError> {
    let sv = singular_values(c)?;
    let thresh = RANK_TOL * sv[0].max(f64::MIN_POSITIVE);
    let rank = sv.iter().filter(|&&s| s > thresh).count();
    if rank < c.rows() || sv[0] == 0.0 {
        return Err(crate::error::MatrixError::RankDeficient {
            rank,
            required: c.rows(),
        }
        .into());
    }
    Ok(())
}

/// Orthonormal completion `M` of the row space of `c`.
///
/// Rows of `M` span the orthogonal complement of the rows of `c`, obtained by
/// Gram–Schmidt against the standard basis in index order. Each row is signed
/// so that its first nonzero entry is positive.
pub fn complete_transformation(c: &Matrix) -> Result<Matrix, PlantError> {
    let (m, n) = c.shape();
    if m >= n {
        return Err(PlantError::NotPartial { m, n });
    }
    check_full_row_rank(c)?;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..m {
        if let Some(v) = orthonormalize(c.row(i).to_vec(), &basis) {
            basis.push(v);
        }
    }
    let mut completion = Vec::with_capacity(n - m);
    for j in 0..n {
        if basis.len() == n {
            break;
        }
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if let Some(mut v) = orthonormalize(e, &basis) {
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            basis.push(v.clone());
            completion.push(v);
        }
    }
    Ok(Matrix::from_rows(&completion)?)
}

/// Two passes of modified Gram–Schmidt; `None` if `v` lies in the span.
fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..2 {
        for b in basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-8 * norm0.max(1.0) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Plant in `z = T x` coordinates with `Ā = T A T⁻¹` split into blocks.
#[derive(Clone)]
pub struct PartitionedPlant {
    pub t_mat: Matrix,
    pub t_inv: Matrix,
    pub m_mat: Matrix,
    pub a_oo: Matrix,
    pub a_on: Matrix,
    pub a_no: Matrix,
    pub a_nn: Matrix,
    a_bar: Matrix,
    psi: Nonlinearity,
    pub lipschitz_bound: f64,
}

impl fmt::Debug for PartitionedPlant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartitionedPlant")
            .field("t_mat", &self.t_mat)
            .field("a_oo", &self.a_oo)
            .field("a_on", &self.a_on)
            .field("a_no", &self.a_no)
            .field("a_nn", &self.a_nn)
            .finish_non_exhaustive()
    }
}

impl PartitionedPlant {
    pub fn n(&self) -> usize {
        self.a_bar.rows()
    }

    /// Number of measured coordinates.
    pub fn m(&self) -> usize {
        self.a_oo.rows()
    }

    /// Full `Ā = T A T⁻¹`.
    pub fn a_bar(&self) -> &Matrix {
        &self.a_bar
    }

    /// `Ā` reassembled from its four blocks.
    pub fn reassemble(&self) -> Matrix {
        Matrix::from_blocks(&self.a_oo, &self.a_on, &self.a_no, &self.a_nn)
            .expect("blocks are conformant")
    }

    /// `ψ̄(z) = T ψ(T⁻¹ z)`.
    pub fn psi_bar(&self, z: &[f64]) -> Vec<f64> {
        let x = self.t_inv.mul_vec(z).expect("dimension");
        self.t_mat.mul_vec(&(self.psi)(&x)).expect("dimension")
    }

    /// `Ā z + ψ̄(z)`.
    pub fn field(&self, z: &[f64]) -> Vec<f64> {
        let mut dz = self.a_bar.mul_vec(z).expect("dimension");
        for (d, p) in dz.iter_mut().zip(self.psi_bar(z)) {
            *d += p;
        }
        dz
    }

    pub fn to_original(&self, z: &[f64]) -> Vec<f64> {
        self.t_inv.mul_vec(z).expect("dimension")
    }

    pub fn to_transformed(&self, x: &[f64]) -> Vec<f64> {
        self.t_mat.mul_vec(x).expect("dimension")
    }
}

/// Builds `T = [C; M]` and the block decomposition of `T A T⁻¹`.
pub fn partition(plant: &Plant) -> Result<PartitionedPlant, PlantError> {
    let (m, n) = plant.c.shape();
    let m_mat = complete_transformation(&plant.c)?;
    let t_mat = Matrix::vstack(&plant.c, &m_mat)?;

    // Row-scaled determinant as a conditioning measure.
    let mut scaled = t_mat.clone();
    for i in 0..n {
        let norm = t_mat.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..n {
            scaled[(i, j)] /= norm;
        }
    }
    let det = scaled.determinant()?;
    if det.abs() <= 1e-10 {
        return Err(PlantError::IllConditioned { det });
    }
    let t_inv = t_mat.inverse()?;
    let a_bar = t_mat.matmul(&plant.a)?.matmul(&t_inv)?;
    Ok(PartitionedPlant {
        a_oo: a_bar.block(0, m, 0, m),
        a_on: a_bar.block(0, m, m, n),
        a_no: a_bar.block(m, n, 0, m),
        a_nn: a_bar.block(m, n, m, n),
        a_bar,
        t_mat,
        t_inv,
        m_mat,
        psi: plant.psi.clone(),
        lipschitz_bound: plant.lipschitz_bound,
    })
}

/// `ψ̃(ε) = ψ̄(z + ε) − ψ̄(z)`; exactly zero for `ε = 0`.
pub fn residual_nonlinearity(
    pp: &PartitionedPlant,
    z: &[f64],
    eps: &[f64],
) -> Result<Vec<f64>, PlantError> {
    let n = pp.n();
    for len in [z.len(), eps.len()] {
        if len != n {
            return Err(PlantError::Dimension {
                expected: n,
                got: len,
            });
        }
    }
    if eps.iter().all(|&e| e == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let shifted: Vec<f64> = z.iter().zip(eps).map(|(a, b)| a + b).collect();
    let hi = pp.psi_bar(&shifted);
    let lo = pp.psi_bar(z);
    let out: Vec<f64> = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(PlantError::NonFinite { at: shifted });
    }
    Ok(out)
}
