//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use impobs_core::dissipativity::{CertStatus, QsrCertificate, Subject};
use impobs_core::matrix::Matrix;
use impobs_core::plant::{partition, PartitionedPlant, Plant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Classic fixed-step RK4; `n_steps` equal steps over `[t0, t1]`.
pub fn rk4<F: Fn(&[f64]) -> Vec<f64>>(
    f: &F,
    y0: &[f64],
    t0: f64,
    t1: f64,
    n_steps: usize,
) -> Vec<f64> {
    let h = (t1 - t0) / n_steps as f64;
    let mut y = y0.to_vec();
    let axpy = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        y.iter().zip(k).map(|(a, b)| a + s * b).collect()
    };
    for _ in 0..n_steps {
        let k1 = f(&y);
        let k2 = f(&axpy(&y, &k1, h / 2.0));
        let k3 = f(&axpy(&y, &k2, h / 2.0));
        let k4 = f(&axpy(&y, &k3, h));
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

/// RK4 trajectory sampled every `every` steps, including both ends.
pub fn rk4_samples<F: Fn(&[f64]) -> Vec<f64>>(
    f: &F,
    y0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    every: usize,
) -> Vec<(f64, Vec<f64>)> {
    let n = ((t1 - t0) / dt).round() as usize;
    let h = (t1 - t0) / n as f64;
    let mut out = vec![(t0, y0.to_vec())];
    let mut y = y0.to_vec();
    let mut done = 0;
    while done < n {
        let chunk = every.min(n - done);
        let ta = t0 + done as f64 * h;
        y = rk4(f, &y, ta, ta + chunk as f64 * h, chunk);
        done += chunk;
        out.push((t0 + done as f64 * h, y.clone()));
    }
    out
}

/// Matrix exponential by scaling and squaring with a degree-24 Taylor core.
pub fn expm(a: &Matrix) -> Matrix {
    let norm = a.frobenius_norm();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.scale(0.5f64.powi(s));
    let n = a.rows();
    let mut term = Matrix::identity(n);
    let mut sum = Matrix::identity(n);
    for k in 1..=24 {
        term = term.matmul(&scaled).unwrap().scale(1.0 / k as f64);
        sum = sum.add(&term).unwrap();
    }
    for _ in 0..s {
        sum = sum.matmul(&sum).unwrap();
    }
    sum
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Two-state coupled plant `ẋ = A x + ψ(x)`, `y = x1`, with
/// `ψ = [k_o tanh(x1), −k_n sat(x2)]`, `k_o, k_n ∈ [0, 0.5]`.
///
/// Residual sectors: `ψ̃_o/ε_o ∈ [0, k_o]` and `ψ̃_n/ε_n ∈ [−k_n, 0]`.
#[derive(Debug, Clone, Copy)]
pub struct SectorPlant {
    pub a: [[f64; 2]; 2],
    pub k_o: f64,
    pub k_n: f64,
}

impl SectorPlant {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            a: [
                [rng.random_range(-1.0..1.0), rng.random_range(-0.2..0.2)],
                [rng.random_range(-1.0..1.0), rng.random_range(-8.0..-5.0)],
            ],
            k_o: rng.random_range(0.1..0.5),
            k_n: rng.random_range(0.1..0.5),
        }
    }

    pub fn plant(&self) -> Plant {
        let (ko, kn) = (self.k_o, self.k_n);
        Plant::new(
            Matrix::from_rows(&self.a).unwrap(),
            Matrix::from_rows(&[[1.0, 0.0]]).unwrap(),
            Arc::new(move |x: &[f64]| vec![ko * x[0].tanh(), -kn * x[1].clamp(-1.0, 1.0)]),
            ko.max(kn),
        )
        .unwrap()
    }

    pub fn partitioned(&self) -> PartitionedPlant {
        partition(&self.plant()).unwrap()
    }

    /// `(ψ − 0)(ψ − k ε) ≤ 0`, i.e. `−ψ² + k ψ ε ≥ 0`.
    pub fn cert_o(&self) -> QsrCertificate {
        QsrCertificate::new(
            Matrix::scalar(-1.0),
            Matrix::scalar(self.k_o / 2.0),
            Matrix::scalar(0.0),
            Subject::StaticMapO,
            CertStatus::Assumed,
        )
        .unwrap()
    }

    /// `ψ (ψ + k ε) ≤ 0`, i.e. `−ψ² − k ψ ε ≥ 0`.
    pub fn cert_n(&self) -> QsrCertificate {
        QsrCertificate::new(
            Matrix::scalar(-1.0),
            Matrix::scalar(-self.k_n / 2.0),
            Matrix::scalar(0.0),
            Subject::StaticMapN,
            CertStatus::Assumed,
        )
        .unwrap()
    }

    /// Closed forms: `ϖ_o = 2 a_oo + (1 + k_o/2)²`, `κ_n = −2 a_nn − (1 − k_n/2)²`.
    pub fn varpi_oracle(&self) -> f64 {
        2.0 * self.a[0][0] + (1.0 + self.k_o / 2.0).powi(2)
    }

    pub fn kappa_n_oracle(&self) -> f64 {
        -2.0 * self.a[1][1] - (1.0 - self.k_n / 2.0).powi(2)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random `A = Hᵀ D H + K` with `H` orthogonal (product of two Householder
/// reflections), `D` diagonal with entries in `[lo, hi]` and `K`
/// skew-symmetric. The symmetric part of `A` has spectrum `D`, so
/// `λ_max(sym A) = max D` exactly.
pub fn random_with_known_sym(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> (Matrix, f64) {
    let householder = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let mut h = Matrix::identity(n);
        if vv < 1e-6 {
            return h;
        }
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] -= 2.0 * v[i] * v[j] / vv;
            }
        }
        h
    };
    let h = householder(rng).matmul(&householder(rng)).unwrap();
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    let sym = h
        .transpose()
        .matmul(&Matrix::diag(&d))
        .unwrap()
        .matmul(&h)
        .unwrap();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(-2.0..2.0);
            k[(i, j)] = v;
            k[(j, i)] = -v;
        }
    }
    let max = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (sym.add(&k).unwrap(), max)
}
