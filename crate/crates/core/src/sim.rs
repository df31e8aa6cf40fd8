//! Impulsive simulation of plant, observer and estimation error.
//!
//! The state carried through the flow is `(z, ε)` in partitioned coordinates,
//! with `ẑ = z + ε`. Between sampling instants both evolve continuously;
//! at each `t_k` only the measured error block jumps,
//! `ε_o⁺ = (I − L) ε_o + L w_k`. Traces are left-continuous: the dense grid
//! holds pre-jump values and the post-jump values live in [`JumpEvent`].

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{iss_ball_radius, ObserverDesign};
use crate::error::{Error, SimError};
use crate::matrix::Matrix;
use crate::ode::{integrate_flow, OdeOptions};
use crate::plant::PartitionedPlant;

/// Fraction of the design decay `κ` the fitted storage rate must reach.
pub const RATE_FRACTION: f64 = 0.9;
/// Storage values below this are excluded from the rate fit.
pub const RATE_FLOOR: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Strictly increasing sampling instants, all positive.
    pub times: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    pub seed: u64,
}

impl Schedule {
    /// Explicit sampling instants. Bounds are set to `(0, ∞)`.
    pub fn from_times(times: Vec<f64>) -> Result<Self, SimError> {
        let mut prev = 0.0;
        for &t in &times {
            if !(t.is_finite() && t > prev) {
                return Err(SimError::Argument(format!(
                    "sampling instants must be positive and strictly increasing (got {t} after {prev})"
                )));
            }
            prev = t;
        }
        Ok(Self {
            times,
            t_min: 0.0,
            t_max: f64::INFINITY,
            seed: 0,
        })
    }

    /// No sampling at all (open loop).
    pub fn none() -> Self {
        Self {
            times: Vec::new(),
            t_min: 0.0,
            t_max: f64::INFINITY,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Consecutive differences `t_{k+1} − t_k`.
    pub fn gaps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Instants in `(0, horizon]`.
    pub fn within(&self, horizon: f64) -> &[f64] {
        let end = self.times.partition_point(|&t| t <= horizon);
        &self.times[..end]
    }
}

/// Draws i.i.d. intervals uniform on `(t_min, t_max)` starting from `t = 0`
/// until the horizon is exceeded. The last instant lies beyond the horizon.
pub fn make_schedule(
    t_min: f64,
    t_max: f64,
    horizon: f64,
    seed: u64,
) -> Result<Schedule, SimError> {
    if !(t_min >= 0.0 && t_min < t_max && t_max.is_finite()) {
        return Err(SimError::EmptyWindow { t_min, t_max });
    }
    if !(horizon > t_min && horizon.is_finite()) {
        return Err(SimError::Argument(format!(
            "horizon {horizon} must exceed t_min = {t_min}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = Vec::new();
    let mut t = 0.0;
    while t <= horizon {
        let gap = loop {
            let g: f64 = rng.random_range(t_min..t_max);
            if g > t_min {
                break g;
            }
        };
        t += gap;
        times.push(t);
    }
    Ok(Schedule {
        times,
        t_min,
        t_max,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    UniformTruncated,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStream {
    pub values: Vec<Vec<f64>>,
    /// Sup-norm bound of every sample.
    pub bound: f64,
    pub seed: u64,
    pub distribution: NoiseDistribution,
}

impl NoiseStream {
    pub fn zero(count: usize, dim: usize) -> Self {
        Self {
            values: vec![vec![0.0; dim]; count],
            bound: 0.0,
            seed: 0,
            distribution: NoiseDistribution::Zero,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Each component i.i.d. uniform on `[−bound, bound]`; `bound = 0` gives the
/// zero stream.
pub fn make_noise(
    bound: f64,
    count: usize,
    dim: usize,
    seed: u64,
) -> Result<NoiseStream, SimError> {
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(SimError::Argument(format!(
            "noise bound {bound} must be finite and >= 0"
        )));
    }
    if bound == 0.0 {
        return Ok(NoiseStream {
            seed,
            ..NoiseStream::zero(count, dim)
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..count)
        .map(|_| (0..dim).map(|_| rng.random_range(-bound..=bound)).collect())
        .collect();
    Ok(NoiseStream {
        values,
        bound,
        seed,
        distribution: NoiseDistribution::UniformTruncated,
    })
}

/// `ε_o⁺ = (I − L) ε_o + L w_k`.
pub fn jump_map(eps_o: &[f64], l_gain: &Matrix, w_k: &[f64]) -> Result<Vec<f64>, SimError> {
    let m = l_gain.rows();
    if !l_gain.is_square() {
        return Err(SimError::Dimension {
            expected: m,
            got: l_gain.cols(),
        });
    }
    for len in [eps_o.len(), w_k.len()] {
        if len != m {
            return Err(SimError::Dimension {
                expected: m,
                got: len,
            });
        }
    }
    let contraction = Matrix::identity(m).sub(l_gain).expect("square");
    let kept = contraction.mul_vec(eps_o).expect("dimension");
    let injected = l_gain.mul_vec(w_k).expect("dimension");
    Ok(kept.iter().zip(&injected).map(|(a, b)| a + b).collect())
}

/// Coupling coefficient in the majorant flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SigmaVariant {
    /// `2 β λ*_on ‖ε_o‖‖ε_n‖`, the bound that follows from the cross term.
    #[default]
    #[serde(rename = "factor2")]
    Factor2,
    /// `β λ*_on ‖ε_o‖‖ε_n‖` as printed in the source flow equation.
    #[serde(rename = "eq15")]
    Eq15,
}

impl SigmaVariant {
    pub fn coefficient(self) -> f64 {
        match self {
            SigmaVariant::Factor2 => 2.0,
            SigmaVariant::Eq15 => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SigmaVariant::Factor2 => "factor2",
            SigmaVariant::Eq15 => "eq15",
        }
    }
}

impl std::str::FromStr for SigmaVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "factor2" => Ok(SigmaVariant::Factor2),
            "eq15" => Ok(SigmaVariant::Eq15),
            other => Err(format!(
                "unknown sigma variant '{other}' (expected factor2 or eq15)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Dense grid points per unit time.
    pub grid_density: f64,
    pub sigma_variant: SigmaVariant,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            grid_density: 1000.0,
            sigma_variant: SigmaVariant::Factor2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpEvent {
    pub k: usize,
    pub t: f64,
    /// Index of `t` on the dense grid (which stores the pre-jump state).
    pub grid_index: usize,
    pub eps_pre: Vec<f64>,
    pub eps_post: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMeta {
    pub schedule_seed: u64,
    pub noise_seed: u64,
    pub horizon: f64,
    pub options: SimOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub n: usize,
    pub m: usize,
    pub grid: Vec<f64>,
    /// Plant state in original coordinates.
    pub x: Vec<Vec<f64>>,
    /// Plant state in partitioned coordinates.
    pub z: Vec<Vec<f64>>,
    /// Observer state in partitioned coordinates.
    pub z_hat: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    /// `‖ε_o‖²`.
    pub s_o: Vec<f64>,
    /// `‖ε_n‖²`.
    pub s_n: Vec<f64>,
    /// `σ_o + S_n` from the first sampling instant on; `S_o + S_n` before.
    pub s_total: Vec<f64>,
    /// Majorant on the grid, NaN before the first sampling instant.
    pub sigma_o: Vec<f64>,
    pub sigma: Option<SigmaTrace>,
    pub events: Vec<JumpEvent>,
    pub meta: TraceMeta,
}

impl SimTrace {
    pub fn error_norm(&self, i: usize) -> f64 {
        norm(&self.eps[i])
    }

    pub fn final_error_norm(&self) -> f64 {
        self.eps.last().map(|e| norm(e)).unwrap_or(f64::NAN)
    }

    pub fn final_x(&self) -> &[f64] {
        self.x.last().expect("trace has at least one point")
    }

    /// Observer state mapped back to original coordinates, given the
    /// transformation used by the run.
    pub fn x_hat(&self, pp: &PartitionedPlant) -> Vec<Vec<f64>> {
        self.z_hat.iter().map(|zh| pp.to_original(zh)).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Joint vector field of `(z, ε)`.
fn joint_field(pp: &PartitionedPlant, y: &[f64], dy: &mut [f64]) {
    let n = pp.n();
    let (z, eps) = y.split_at(n);
    let a = pp.a_bar();
    let psi_z = pp.psi_bar(z);
    let exact_zero = eps.iter().all(|&e| e == 0.0);
    let psi_hat = if exact_zero {
        None
    } else {
        let zh: Vec<f64> = z.iter().zip(eps).map(|(a, b)| a + b).collect();
        Some(pp.psi_bar(&zh))
    };
    for i in 0..n {
        let row = a.row(i);
        let mut dz = psi_z[i];
        let mut de = 0.0;
        for j in 0..n {
            dz += row[j] * z[j];
            de += row[j] * eps[j];
        }
        if let Some(ph) = &psi_hat {
            de += ph[i] - psi_z[i];
        }
        dy[i] = dz;
        dy[n + i] = de;
    }
}

/// Runs plant and observer over `[0, horizon]`.
///
/// `z0` and `z_hat0` are in partitioned coordinates. Jumps are applied at the
/// schedule instants in `(0, horizon]`, using one noise sample each.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    pp: &PartitionedPlant,
    design: &ObserverDesign,
    schedule: &Schedule,
    noise: &NoiseStream,
    z0: &[f64],
    z_hat0: &[f64],
    horizon: f64,
    opts: &SimOptions,
) -> Result<SimTrace, SimError> {
    let m = pp.m();
    if design.l_gain.shape() != (m, m) {
        return Err(SimError::Dimension {
            expected: m,
            got: design.l_gain.rows(),
        });
    }
    let mut trace = run(
        pp,
        Some(&design.l_gain),
        schedule,
        noise,
        z0,
        z_hat0,
        horizon,
        opts,
    )?;
    if !trace.events.is_empty() && design.kappa_o.is_finite() {
        let sigma = sigma_o_majorant(&trace, design, opts.sigma_variant)?;
        attach_sigma(&mut trace, sigma);
    }
    Ok(trace)
}

/// Plant and observer copy without any output injection.
pub fn simulate_open_loop(
    pp: &PartitionedPlant,
    z0: &[f64],
    z_hat0: &[f64],
    horizon: f64,
    opts: &SimOptions,
) -> Result<SimTrace, SimError> {
    run(
        pp,
        None,
        &Schedule::none(),
        &NoiseStream::zero(0, pp.m()),
        z0,
        z_hat0,
        horizon,
        opts,
    )
}

#[allow(clippy::too_many_arguments)]
fn run(
    pp: &PartitionedPlant,
    l_gain: Option<&Matrix>,
    schedule: &Schedule,
    noise: &NoiseStream,
    z0: &[f64],
    z_hat0: &[f64],
    horizon: f64,
    opts: &SimOptions,
) -> Result<SimTrace, SimError> {
    let n = pp.n();
    let m = pp.m();
    for len in [z0.len(), z_hat0.len()] {
        if len != n {
            return Err(SimError::Dimension {
                expected: n,
                got: len,
            });
        }
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::Argument(format!(
            "horizon {horizon} must be positive"
        )));
    }
    if !(opts.grid_density > 0.0) {
        return Err(SimError::Argument("grid density must be positive".into()));
    }
    let instants = schedule.within(horizon);
    if noise.len() < instants.len() {
        return Err(SimError::NoiseTooShort {
            have: noise.len(),
            need: instants.len(),
        });
    }
    if let Some(w) = noise
        .values
        .iter()
        .take(instants.len())
        .find(|w| w.len() != m)
    {
        return Err(SimError::Dimension {
            expected: m,
            got: w.len(),
        });
    }
    let ode = OdeOptions::with_tolerances(opts.rel_tol, opts.abs_tol);

    let mut y: Vec<f64> = z0.to_vec();
    y.extend(z_hat0.iter().zip(z0).map(|(a, b)| a - b));

    let mut grid = vec![0.0];
    let mut states = vec![y.clone()];
    let mut events = Vec::with_capacity(instants.len());

    let mut bounds: Vec<f64> = instants.to_vec();
    if bounds.last().is_none_or(|&t| t < horizon) {
        bounds.push(horizon);
    }
    let mut t_prev = 0.0;
    let mut buf = vec![0.0; 2 * n];
    for (k, &t_next) in bounds.iter().enumerate() {
        let traj = integrate_flow(|_, y, dy| joint_field(pp, y, dy), t_prev, t_next, &y, &ode)
            .map_err(|source| SimError::Integration {
                t0: t_prev,
                t1: t_next,
                source,
            })?;
        let count = (((t_next - t_prev) * opts.grid_density).ceil() as usize).max(1);
        for j in 1..=count {
            let t = if j == count {
                t_next
            } else {
                t_prev + (t_next - t_prev) * j as f64 / count as f64
            };
            traj.eval_into(t, &mut buf);
            grid.push(t);
            states.push(buf.clone());
        }
        y.copy_from_slice(traj.final_state());

        if k < instants.len() {
            let l = l_gain.expect("sampling instants require a gain");
            let w = &noise.values[k];
            let eps_pre = y[n..].to_vec();
            let post_o = jump_map(&eps_pre[..m], l, w)?;
            y[n..n + m].copy_from_slice(&post_o);
            events.push(JumpEvent {
                k: k + 1,
                t: t_next,
                grid_index: grid.len() - 1,
                eps_pre,
                eps_post: y[n..].to_vec(),
                w: w.clone(),
            });
        }
        t_prev = t_next;
    }

    let len = grid.len();
    let mut trace = SimTrace {
        n,
        m,
        grid,
        x: Vec::with_capacity(len),
        z: Vec::with_capacity(len),
        z_hat: Vec::with_capacity(len),
        eps: Vec::with_capacity(len),
        s_o: Vec::with_capacity(len),
        s_n: Vec::with_capacity(len),
        s_total: Vec::with_capacity(len),
        sigma_o: vec![f64::NAN; len],
        sigma: None,
        events,
        meta: TraceMeta {
            schedule_seed: schedule.seed,
            noise_seed: noise.seed,
            horizon,
            options: *opts,
        },
    };
    for s in states {
        let (z, eps) = s.split_at(n);
        let so = sq_norm(&eps[..m]);
        let sn = sq_norm(&eps[m..]);
        trace.x.push(pp.to_original(z));
        trace
            .z_hat
            .push(z.iter().zip(eps).map(|(a, b)| a + b).collect());
        trace.z.push(z.to_vec());
        trace.eps.push(eps.to_vec());
        trace.s_o.push(so);
        trace.s_n.push(sn);
        trace.s_total.push(so + sn);
    }
    Ok(trace)
}

fn attach_sigma(trace: &mut SimTrace, sigma: SigmaTrace) {
    for i in 0..trace.grid.len() {
        if sigma.values[i].is_finite() {
            trace.s_total[i] = sigma.values[i] + trace.s_n[i];
        }
    }
    trace.sigma_o = sigma.values.clone();
    trace.sigma = Some(sigma);
}

/// Majorant of the measured-error storage along a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaTrace {
    pub variant: SigmaVariant,
    /// Grid-aligned, left-continuous; NaN before the first sampling instant.
    pub values: Vec<f64>,
    /// `σ_o(t_k) + γ‖w_k‖` per event.
    pub post_jump: Vec<f64>,
    /// Exact post-jump storage `‖ε_o⁺‖²` per event, for comparison.
    pub exact_post: Vec<f64>,
}

/// `(I0, I1/h)` with `I0 = ∫₀ʰ e^{−κ(h−s)} ds`, `I1 = ∫₀ʰ e^{−κ(h−s)} s ds`.
fn forcing_weights(kappa: f64, h: f64) -> (f64, f64) {
    let x = kappa * h;
    if x.abs() < 0.1 {
        // Series: I0 = h Σ (−x)^k/(k+1)!, I1/h = h Σ (−x)^k/(k+2)!.
        let mut i0 = 0.0;
        let mut i1 = 0.0;
        let mut term = 1.0; // (−x)^k / k!
        for k in 0..12 {
            i0 += term / (k + 1) as f64;
            i1 += term / ((k + 1) * (k + 2)) as f64;
            term *= -x / (k + 1) as f64;
        }
        (h * i0, h * i1)
    } else {
        let e = (-x).exp();
        let i0 = -(-x).exp_m1() / kappa;
        let i1 = h * i0 - (1.0 - e - x * e) / (kappa * kappa);
        (i0, i1 / h)
    }
}

/// Integrates `σ̇_o = −κ_o σ_o + c β λ*_on ‖ε_o‖‖ε_n‖` along the stored grid,
/// starting from `σ_o(t_1) = ‖ε_o(t_1)‖²` and adding `γ‖w_k‖` at each jump.
///
/// The forcing is interpolated linearly between grid points and each grid
/// step is solved in closed form.
pub fn sigma_o_majorant(
    trace: &SimTrace,
    design: &ObserverDesign,
    variant: SigmaVariant,
) -> Result<SigmaTrace, SimError> {
    let len = trace.grid.len();
    if trace.s_o.len() != len || trace.s_n.len() != len {
        return Err(SimError::MissingData(
            "storage traces do not match the grid".into(),
        ));
    }
    let first = trace
        .events
        .first()
        .ok_or_else(|| SimError::MissingData("no sampling instants".into()))?;
    let kappa = design.kappa_o;
    if !kappa.is_finite() {
        return Err(SimError::Argument(format!(
            "kappa_o = {kappa} is not finite"
        )));
    }
    let coupling = variant.coefficient() * design.beta * design.lambda_on;
    let forcing = |i: usize| coupling * (trace.s_o[i] * trace.s_n[i]).sqrt();

    let mut values = vec![f64::NAN; len];
    let mut post_jump = Vec::with_capacity(trace.events.len());
    let mut exact_post = Vec::with_capacity(trace.events.len());
    let mut next_event = trace.events.iter().peekable();

    let i1 = first.grid_index;
    let mut sigma = trace.s_o[i1];
    #[allow(clippy::needless_range_loop)]
    for i in i1..len {
        values[i] = sigma;
        if let Some(ev) = next_event.peek() {
            if ev.grid_index == i {
                sigma += design.gamma * norm(&ev.w);
                post_jump.push(sigma);
                exact_post.push(sq_norm(&ev.eps_post[..trace.m]));
                next_event.next();
            }
        }
        if i + 1 < len {
            let h = trace.grid[i + 1] - trace.grid[i];
            let (g0, g1) = (forcing(i), forcing(i + 1));
            let (w0, w1) = forcing_weights(kappa, h);
            sigma = (-kappa * h).exp() * sigma + g0 * w0 + (g1 - g0) * w1;
        }
    }
    Ok(SigmaTrace {
        variant,
        values,
        post_jump,
        exact_post,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallCheck {
    pub radius: f64,
    /// First time `‖ε‖ ≤ radius`.
    pub entry_time: Option<f64>,
    /// First time after entry the error leaves the ball again.
    pub exit_time: Option<f64>,
    /// Time from which the error stays inside until the end of the trace.
    pub settle_time: Option<f64>,
    /// Entered and never left afterwards (grid and post-jump points).
    pub entered_and_stayed: bool,
    /// `max ‖ε‖ − radius` over the checked points: after entry if the ball
    /// was entered, over the whole trace otherwise.
    pub sup_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// Least-squares decay rate of `S(t_k)`.
    pub rate: f64,
    pub kappa: f64,
    pub samples: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IssReport {
    pub w_inf: f64,
    pub ball: Option<BallCheck>,
    pub rate: Option<RateFit>,
    pub final_error_norm: f64,
    pub passed: bool,
}

/// Checks ball entry and invariance (noisy runs, `w_inf > 0`) or the
/// exponential rate of the storage at sampling instants (`w_inf = 0`).
pub fn verify_iss(trace: &SimTrace, design: &ObserverDesign, w_inf: f64) -> IssReport {
    let final_error_norm = trace.final_error_norm();
    if w_inf > 0.0 {
        let ball = ball_check(trace, iss_ball_radius(design.alpha, w_inf));
        let passed = ball.entered_and_stayed;
        IssReport {
            w_inf,
            ball: Some(ball),
            rate: None,
            final_error_norm,
            passed,
        }
    } else {
        let rate = fit_rate(trace, design.kappa);
        let passed = rate.as_ref().is_some_and(|r| r.passed);
        IssReport {
            w_inf,
            ball: None,
            rate,
            final_error_norm,
            passed,
        }
    }
}

/// Chronological `(t, ‖ε‖)` including post-jump values.
fn error_norm_sequence(trace: &SimTrace) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(trace.grid.len() + trace.events.len());
    let mut events = trace.events.iter().peekable();
    for (i, &t) in trace.grid.iter().enumerate() {
        out.push((t, trace.error_norm(i)));
        if let Some(ev) = events.peek() {
            if ev.grid_index == i {
                out.push((t, norm(&ev.eps_post)));
                events.next();
            }
        }
    }
    out
}

fn ball_check(trace: &SimTrace, radius: f64) -> BallCheck {
    let seq = error_norm_sequence(trace);
    let entry = seq.iter().position(|&(_, e)| e <= radius);
    let last_out = seq.iter().rposition(|&(_, e)| e > radius);
    let settle_time = match last_out {
        None => seq.first().map(|p| p.0),
        Some(i) if i + 1 < seq.len() => Some(seq[i + 1].0),
        Some(_) => None,
    };
    match entry {
        Some(i) => {
            let exit = seq[i..].iter().find(|&&(_, e)| e > radius).map(|p| p.0);
            let sup = seq[i..]
                .iter()
                .map(|p| p.1)
                .fold(f64::NEG_INFINITY, f64::max);
            BallCheck {
                radius,
                entry_time: Some(seq[i].0),
                exit_time: exit,
                settle_time,
                entered_and_stayed: exit.is_none(),
                sup_distance: sup - radius,
            }
        }
        None => BallCheck {
            radius,
            entry_time: None,
            exit_time: None,
            settle_time: None,
            entered_and_stayed: false,
            sup_distance: seq.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) - radius,
        },
    }
}

fn fit_rate(trace: &SimTrace, kappa: f64) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = trace
        .events
        .iter()
        .map(|ev| (ev.t, trace.s_total[ev.grid_index]))
        .filter(|&(_, s)| s.is_finite() && s > RATE_FLOOR)
        .map(|(t, s)| (t, s.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let nf = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let ms = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|(t, s)| (t - mt) * (s - ms)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let rate = -sxy / sxx;
    Some(RateFit {
        rate,
        kappa,
        samples: pts.len(),
        passed: rate >= RATE_FRACTION * kappa,
    })
}

/// Runs `f` for each seed in parallel; results are ordered by seed.
pub fn run_batch<T, F>(seeds: &[u64], f: F) -> Vec<(u64, T)>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let mut out: Vec<(u64, T)> = seeds.par_iter().map(|&s| (s, f(s))).collect();
    out.sort_by_key(|(s, _)| *s);
    out
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn write_meta<W: Write>(out: &mut W, trace: &SimTrace) -> std::io::Result<()> {
    let o = &trace.meta.options;
    writeln!(
        out,
        "# schedule_seed={} noise_seed={} horizon={} rel_tol={} abs_tol={} grid_density={} sigma_variant={}",
        trace.meta.schedule_seed,
        trace.meta.noise_seed,
        trace.meta.horizon,
        o.rel_tol,
        o.abs_tol,
        o.grid_density,
        o.sigma_variant.name()
    )
}

/// Trace CSV: one row per grid point, `#` comment line with the run metadata.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &SimTrace) -> Result<(), Error> {
    write_meta(&mut out, trace)?;
    let (n, m) = (trace.n, trace.m);
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("zhat_{i}")));
    header.extend((1..=n).map(|i| format!("eps_{i}")));
    header.extend(["S_o", "S_n", "S", "sigma_o", "is_event"].map(String::from));
    header.extend((1..=m).map(|i| format!("w_{i}")));
    wtr.write_record(&header)?;

    let mut events = trace.events.iter().peekable();
    for i in 0..trace.grid.len() {
        let mut row = vec![fmt_num(trace.grid[i])];
        row.extend(trace.x[i].iter().map(|&v| fmt_num(v)));
        row.extend(trace.z_hat[i].iter().map(|&v| fmt_num(v)));
        row.extend(trace.eps[i].iter().map(|&v| fmt_num(v)));
        row.push(fmt_num(trace.s_o[i]));
        row.push(fmt_num(trace.s_n[i]));
        row.push(fmt_num(trace.s_total[i]));
        row.push(fmt_num(trace.sigma_o[i]));
        match events.peek() {
            Some(ev) if ev.grid_index == i => {
                row.push("1".into());
                row.extend(ev.w.iter().map(|&v| fmt_num(v)));
                events.next();
            }
            _ => {
                row.push("0".into());
                row.extend(std::iter::repeat_n(String::new(), m));
            }
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Event sidecar CSV: pre/post error, noise sample, exact and bounded storage
/// jumps.
pub fn write_events_csv<W: Write>(mut out: W, trace: &SimTrace) -> Result<(), Error> {
    write_meta(&mut out, trace)?;
    let (n, m) = (trace.n, trace.m);
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["k".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("eps_pre_{i}")));
    header.extend((1..=n).map(|i| format!("eps_post_{i}")));
    header.extend((1..=m).map(|i| format!("w_{i}")));
    header.extend(["S_o_pre", "S_o_post", "sigma_o_pre", "sigma_o_post"].map(String::from));
    wtr.write_record(&header)?;
    for (j, ev) in trace.events.iter().enumerate() {
        let mut row = vec![ev.k.to_string(), fmt_num(ev.t)];
        row.extend(ev.eps_pre.iter().map(|&v| fmt_num(v)));
        row.extend(ev.eps_post.iter().map(|&v| fmt_num(v)));
        row.extend(ev.w.iter().map(|&v| fmt_num(v)));
        row.push(fmt_num(sq_norm(&ev.eps_pre[..m])));
        row.push(fmt_num(sq_norm(&ev.eps_post[..m])));
        let (pre, post) = match &trace.sigma {
            Some(s) => (
                s.values[ev.grid_index],
                s.post_jump.get(j).copied().unwrap_or(f64::NAN),
            ),
            None => (f64::NAN, f64::NAN),
        };
        row.push(fmt_num(pre));
        row.push(fmt_num(post));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jump_map_examples() {
        let l = Matrix::scalar(0.8);
        assert_abs_diff_eq!(
            jump_map(&[1.0], &l, &[0.0]).unwrap()[0],
            0.2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            jump_map(&[0.0], &l, &[0.1]).unwrap()[0],
            0.08,
            epsilon = 1e-15
        );
        let id = Matrix::identity(2);
        assert_eq!(
            jump_map(&[3.0, -4.0], &id, &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(matches!(
            jump_map(&[1.0, 2.0], &l, &[0.0]),
            Err(SimError::Dimension { .. })
        ));
    }

    #[test]
    fn schedule_respects_window_and_count() {
        let s = make_schedule(0.63, 1.09, 20.0, 7).unwrap();
        for g in s.gaps() {
            assert!(g > 0.63 && g < 1.09, "gap {g}");
        }
        assert!(s.times[0] > 0.63 && s.times[0] < 1.09);
        assert!((19..=32).contains(&s.len()), "{} samples", s.len());
        assert!(*s.times.last().unwrap() > 20.0);
        assert_eq!(s, make_schedule(0.63, 1.09, 20.0, 7).unwrap());
    }

    #[test]
    fn schedule_edge_cases() {
        let near = make_schedule(1.0 - 1e-9, 1.0, 10.0, 1).unwrap();
        for g in near.gaps() {
            assert!((g - 1.0).abs() < 1e-9);
        }
        let single = make_schedule(5.0, 6.0, 5.5, 3).unwrap();
        assert_eq!(single.len(), 1);
        assert!(matches!(
            make_schedule(1.0, 1.0, 5.0, 0),
            Err(SimError::EmptyWindow { .. })
        ));
        assert!(Schedule::from_times(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn noise_examples() {
        let z = make_noise(0.0, 5, 2, 9).unwrap();
        assert!(z.values.iter().flatten().all(|&v| v == 0.0));
        let w = make_noise(0.1, 10_000, 1, 4).unwrap();
        let vals: Vec<f64> = w.values.iter().map(|v| v[0]).collect();
        assert!(vals.iter().all(|v| v.abs() <= 0.1));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() <= 3.0 * 0.1 / (3.0f64 * 1e4).sqrt());
        assert_eq!(w, make_noise(0.1, 10_000, 1, 4).unwrap());
        assert!(make_noise(-1.0, 1, 1, 0).is_err());
    }

    #[test]
    fn forcing_weights_match_quadrature() {
        for &(k, h) in &[
            (0.5, 1e-3),
            (3.0, 0.2),
            (-0.7, 0.05),
            (0.0, 0.3),
            (40.0, 0.5),
        ] {
            // Composite Simpson oracle.
            let steps = 20_000;
            let dt = h / steps as f64;
            let (mut q0, mut q1) = (0.0, 0.0);
            for j in 0..=steps {
                let s = j as f64 * dt;
                let c = if j == 0 || j == steps {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let w = (-k * (h - s)).exp();
                q0 += c * w * dt / 3.0;
                q1 += c * w * s * dt / 3.0;
            }
            let (i0, i1h) = forcing_weights(k, h);
            assert!((i0 - q0).abs() < 1e-9 * q0.abs().max(1e-3), "k={k} h={h}");
            assert!(
                (i1h - q1 / h).abs() < 1e-8 * (q1 / h).abs().max(1e-3),
                "k={k} h={h}"
            );
        }
    }

    #[test]
    fn sigma_variant_parsing() {
        assert_eq!(
            "factor2".parse::<SigmaVariant>().unwrap(),
            SigmaVariant::Factor2
        );
        assert_eq!("eq15".parse::<SigmaVariant>().unwrap(), SigmaVariant::Eq15);
        assert!("x".parse::<SigmaVariant>().is_err());
        assert_eq!(SigmaVariant::default(), SigmaVariant::Factor2);
    }

    #[test]
    fn batch_is_keyed_by_seed() {
        let out = run_batch(&[5, 1, 3], |s| s * 10);
        assert_eq!(out, vec![(1, 10), (3, 30), (5, 50)]);
    }
}
