//! Dormand–Prince 5(4) integrator with PI step control and dense output.

use crate::error::IntegrationError;

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Upper bound on the step; the span length when `None`.
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            h_init: None,
            h_max: None,
            max_steps: 1_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Error coefficients (5th minus embedded 4th order).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Accepted steps of an integration together with the continuous extension
/// of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    dim: usize,
    /// Step start times, plus the final time at the end.
    times: Vec<f64>,
    /// States at `times`.
    states: Vec<Vec<f64>>,
    /// Five interpolation coefficient vectors per step, flattened.
    coeffs: Vec<f64>,
    rejected: usize,
    evaluations: usize,
}

impl DenseTrajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t1(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one time")
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Step boundaries (accepted mesh).
    pub fn mesh(&self) -> &[f64] {
        &self.times
    }

    pub fn mesh_states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least one state")
    }

    /// Interpolated state at `t`, clamped to `[t0, t1]`. Mesh points return
    /// the stored states exactly.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(self.t0(), self.t1());
        let i = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).expect("finite mesh"))
        {
            Ok(i) => {
                out.copy_from_slice(&self.states[i]);
                return;
            }
            Err(i) => i - 1,
        };
        let h = self.times[i + 1] - self.times[i];
        let theta = (t - self.times[i]) / h;
        let theta1 = 1.0 - theta;
        let n = self.dim;
        let base = 5 * n * i;
        let r = &self.coeffs[base..base + 5 * n];
        for j in 0..n {
            out[j] = r[j]
                + theta
                    * (r[n + j]
                        + theta1 * (r[2 * n + j] + theta * (r[3 * n + j] + theta1 * r[4 * n + j])));
        }
    }
}

fn check_finite(v: &[f64], t: f64) -> Result<(), IntegrationError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(IntegrationError::NonFinite { t })
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &OdeOptions) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sk = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn rms(v: &[f64], y: &[f64], opts: &OdeOptions) -> f64 {
    let n = v.len() as f64;
    let s: f64 = v
        .iter()
        .zip(y)
        .map(|(a, yi)| (a / (opts.abs_tol + opts.rel_tol * yi.abs())).powi(2))
        .sum();
    (s / n).sqrt()
}

/// Starting step heuristic from the derivative scale at `t0` and one Euler
/// probe.
fn initial_step<F>(
    field: &F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    h_max: f64,
    opts: &OdeOptions,
) -> Result<f64, IntegrationError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let dnf = rms(f0, y0, opts);
    let dny = rms(y0, y0, opts);
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * dny / dnf
    };
    h = h.min(h_max);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    field(t0 + h, &y1, &mut f1);
    check_finite(&f1, t0 + h)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let der2 = rms(&diff, y0, opts) / h;
    let der12 = der2.max(dnf);
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(h_max))
}

/// Integrates `y' = field(t, y)` from `t0` to `t1`.
///
/// `field(t, y, dy)` writes the derivative into `dy`. The last accepted step
/// ends exactly at `t1`.
pub fn integrate_flow<F>(
    field: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    opts: &OdeOptions,
) -> Result<DenseTrajectory, IntegrationError>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(IntegrationError::Span { t0, t1 });
    }
    check_finite(y0, t0)?;
    let n = y0.len();
    let span = t1 - t0;
    let h_max = opts.h_max.unwrap_or(span).min(span);

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];

    let mut evaluations = 1;
    field(t0, y0, &mut k1);
    check_finite(&k1, t0)?;

    let mut h = match opts.h_init {
        Some(h) if h > 0.0 => h.min(h_max),
        _ => {
            evaluations += 1;
            initial_step(&field, t0, y0, &k1, h_max, opts)?
        }
    };

    let mut traj = DenseTrajectory {
        dim: n,
        times: vec![t0],
        states: vec![y0.to_vec()],
        coeffs: Vec::new(),
        rejected: 0,
        evaluations: 0,
    };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut attempts = 0usize;

    loop {
        if attempts >= opts.max_steps {
            return Err(IntegrationError::TooManySteps { t });
        }
        attempts += 1;
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(IntegrationError::StepUnderflow { t });
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        field(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        field(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        field(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        field(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + h };
        field(t_new, &ytmp, &mut k6);
        for i in 0..n {
            y1[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        field(t_new, &y1, &mut k7);
        evaluations += 6;

        let stages_finite = [&k2, &k3, &k4, &k5, &k6, &k7, &y1]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !stages_finite {
            traj.rejected += 1;
            last_rejected = true;
            h *= 0.25;
            continue;
        }

        for i in 0..n {
            err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(&err, &y, &y1, opts);
        let fac11 = e.powf(0.2 - BETA * 0.75);

        if e <= 1.0 {
            // Coefficients [y, r2, r3, r4, r5] of the continuous extension.
            let base = traj.coeffs.len();
            traj.coeffs.resize(base + 5 * n, 0.0);
            let r = &mut traj.coeffs[base..];
            for i in 0..n {
                let r2 = y1[i] - y[i];
                let r3 = h * k1[i] - r2;
                r[i] = y[i];
                r[n + i] = r2;
                r[2 * n + i] = r3;
                r[3 * n + i] = r2 - h * k7[i] - r3;
                r[4 * n + i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }

            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            fac_old = e.max(1e-4);
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            traj.times.push(t);
            traj.states.push(y.clone());
            if last {
                traj.evaluations = evaluations;
                return Ok(traj);
            }
            let mut h_new = (h / fac).min(h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            traj.rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
}
