mod common;

use std::sync::Arc;

use impobs_core::design::{DesignConstants, ObserverDesign};
use impobs_core::example::{self, ExampleParams};
use impobs_core::matrix::Matrix;
use impobs_core::ode::{integrate_flow, OdeOptions};
use impobs_core::plant::{partition, Plant};
use impobs_core::sim::{
    jump_map, make_noise, make_schedule, run_batch, simulate, write_events_csv, write_trace_csv,
    Schedule, SigmaVariant, SimOptions,
};
use impobs_core::{design_pipeline, RunConfig};
use proptest::prelude::*;
use rand::Rng;

fn random_matrix(rng: &mut rand_chacha::ChaCha8Rng, n: usize, scale: f64) -> Matrix {
    let data = (0..n * n)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::new(n, n, data).unwrap()
}

fn linear_plant(a: Matrix) -> Plant {
    let n = a.rows();
    let mut c = Matrix::zeros(1, n);
    c[(0, 0)] = 1.0;
    Plant::new(a, c, Arc::new(move |_: &[f64]| vec![0.0; n]), 0.0).unwrap()
}

fn any_design(l: f64) -> ObserverDesign {
    ObserverDesign::assemble(DesignConstants {
        l_gain: Matrix::scalar(l),
        varpi_o: 0.5,
        kappa_n: 5.0,
        lambda_no: 0.0,
        lambda_on: 0.0,
        kappa: 0.3,
        alpha: 3.0,
    })
    .unwrap()
}

fn scaled_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    common::sup_diff(a, b) / scale
}

#[test]
fn flow_matches_matrix_exponential() {
    let mut rng = common::rng(1);
    for n in 1..=4 {
        let a = random_matrix(&mut rng, n, 2.0);
        let y0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let traj = integrate_flow(
            |_, y, dy| dy.copy_from_slice(&a.mul_vec(y).unwrap()),
            0.0,
            3.0,
            &y0,
            &OdeOptions::default(),
        )
        .unwrap();
        for j in 0..=30 {
            let t = 0.1 * j as f64;
            let exact = common::expm(&a.scale(t)).mul_vec(&y0).unwrap();
            assert!(scaled_err(&traj.eval(t), &exact) < 1e-7, "n = {n}, t = {t}");
        }
        assert_eq!(traj.t1(), 3.0);
        assert_eq!(traj.eval(3.0), traj.final_state().to_vec());
    }
}

#[test]
fn flow_matches_rk4_on_van_der_pol() {
    let f = |y: &[f64]| vec![y[1], 2.0 * (1.0 - y[0] * y[0]) * y[1] - y[0]];
    let traj = integrate_flow(
        |_, y, dy| dy.copy_from_slice(&f(y)),
        0.0,
        10.0,
        &[2.0, 0.0],
        &OdeOptions::default(),
    )
    .unwrap();
    for (t, y) in common::rk4_samples(&f, &[2.0, 0.0], 0.0, 10.0, 1e-4, 500) {
        assert!(common::sup_diff(&traj.eval(t), &y) < 1e-6, "t = {t}");
    }
}

#[test]
fn matching_initial_states_keep_the_error_at_zero() {
    let cfg = RunConfig::bundled("example_noiseless").unwrap();
    let pp = partition(&cfg.build_plant().unwrap()).unwrap();
    let design = cfg.build_design(&pp).unwrap();
    let schedule = cfg.build_schedule(&design, 0).unwrap();
    let noise = cfg.build_noise(schedule.len(), 1, 0).unwrap();
    let z0 = [-1.0, 3.0];
    let trace = simulate(
        &pp,
        &design,
        &schedule,
        &noise,
        &z0,
        &z0,
        10.0,
        &SimOptions::default(),
    )
    .unwrap();
    assert!(trace.eps.iter().flatten().all(|&e| e == 0.0));
    assert!(trace
        .events
        .iter()
        .all(|ev| ev.eps_post.iter().all(|&e| e == 0.0)));
    assert_eq!(trace.x, trace.z_hat);
    let sigma = trace.sigma.unwrap();
    assert!(sigma
        .values
        .iter()
        .filter(|v| v.is_finite())
        .all(|&v| v == 0.0));
}

#[test]
fn linear_error_follows_hand_recursion() {
    let mut rng = common::rng(8);
    for run in 0..5 {
        let a = random_matrix(&mut rng, 3, 1.0);
        let pp = partition(&linear_plant(a)).unwrap();
        let l = rng.random_range(0.3..0.9);
        let design = any_design(l);
        let schedule = make_schedule(0.2, 0.6, 5.0, run).unwrap();
        let noise = make_noise(0.05, schedule.len(), 1, run).unwrap();
        let z0: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let zh0: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let trace = simulate(
            &pp,
            &design,
            &schedule,
            &noise,
            &z0,
            &zh0,
            5.0,
            &SimOptions::default(),
        )
        .unwrap();

        let mut eps: Vec<f64> = zh0.iter().zip(&z0).map(|(a, b)| a - b).collect();
        let mut t_prev = 0.0;
        for (ev, w) in trace.events.iter().zip(&noise.values) {
            eps = common::expm(&pp.a_bar().scale(ev.t - t_prev))
                .mul_vec(&eps)
                .unwrap();
            assert!(
                scaled_err(&ev.eps_pre, &eps) < 1e-7,
                "run {run}, k = {}",
                ev.k
            );
            eps[0] = (1.0 - l) * eps[0] + l * w[0];
            t_prev = ev.t;
        }
        let end = common::expm(&pp.a_bar().scale(5.0 - t_prev))
            .mul_vec(&eps)
            .unwrap();
        assert!(scaled_err(trace.eps.last().unwrap(), &end) < 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn jumps_are_bit_exact_and_contract(seed in any::<u64>(), l in 0.05f64..1.95, bound in 0.0f64..0.5) {
        let mut rng = common::rng(seed);
        let sp = common::SectorPlant::random(&mut rng);
        let pp = sp.partitioned();
        let design = any_design(l);
        let gamma = design.gamma;
        let schedule = make_schedule(0.1, 0.4, 3.0, seed).unwrap();
        let noise = make_noise(bound, schedule.len(), 1, seed ^ 1).unwrap();
        let z0 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let zh0 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let opts = SimOptions { grid_density: 100.0, ..SimOptions::default() };
        let trace = simulate(&pp, &design, &schedule, &noise, &z0, &zh0, 3.0, &opts).unwrap();
        prop_assert_eq!(trace.events.len(), schedule.within(3.0).len());
        for ev in &trace.events {
            let expect = jump_map(&ev.eps_pre[..1], &design.l_gain, &ev.w).unwrap();
            prop_assert_eq!(&ev.eps_post[..1], &expect[..]);
            prop_assert_eq!(ev.eps_post[1], ev.eps_pre[1]);
            prop_assert_eq!(trace.grid[ev.grid_index], ev.t);
            prop_assert_eq!(&trace.eps[ev.grid_index], &ev.eps_pre);
            let bound_post = (1.0 - gamma) * ev.eps_pre[0].abs() + l * ev.w[0].abs();
            prop_assert!(ev.eps_post[0].abs() <= bound_post * (1.0 + 1e-15) + 1e-300);
        }
    }

    #[test]
    fn schedules_respect_the_window(seed in any::<u64>(), t_min in 0.01f64..1.0, width in 0.01f64..1.0, horizon in 1.0f64..20.0) {
        let t_max = t_min + width;
        prop_assume!(horizon > t_min);
        let s = make_schedule(t_min, t_max, horizon, seed).unwrap();
        prop_assert!(s.times[0] > t_min && s.times[0] < t_max);
        for g in s.gaps() {
            prop_assert!(g > t_min && g < t_max);
        }
        prop_assert!(*s.times.last().unwrap() > horizon);
        prop_assert!(s.times.len() == 1 || s.times[s.times.len() - 2] <= horizon);
        prop_assert_eq!(make_schedule(t_min, t_max, horizon, seed).unwrap(), s);
    }

    #[test]
    fn noise_respects_its_bound(seed in any::<u64>(), bound in 0.0f64..2.0, count in 0usize..50) {
        let w = make_noise(bound, count, 2, seed).unwrap();
        prop_assert_eq!(w.len(), count);
        prop_assert!(w.values.iter().flatten().all(|v| v.abs() <= bound));
    }
}

#[test]
fn majorant_variants_coincide_without_coupling() {
    let mut rng = common::rng(12);
    let mut sp = common::SectorPlant::random(&mut rng);
    sp.a[0][1] = 0.0;
    let pp = sp.partitioned();
    let design = design_pipeline(
        &pp,
        &[sp.cert_o(), sp.cert_n()],
        &Matrix::scalar(0.5),
        5.0,
        None,
    )
    .unwrap();
    assert!(design.feasible && design.lambda_on == 0.0);
    let schedule = make_schedule(design.t_min, design.t_max, 6.0, 4).unwrap();
    let noise = make_noise(0.0, schedule.len(), 1, 0).unwrap();
    let run = |variant| {
        let opts = SimOptions {
            sigma_variant: variant,
            ..SimOptions::default()
        };
        simulate(
            &pp,
            &design,
            &schedule,
            &noise,
            &[1.0, -2.0],
            &[-1.0, 1.0],
            6.0,
            &opts,
        )
        .unwrap()
    };
    let a = run(SigmaVariant::Factor2);
    let b = run(SigmaVariant::Eq15);
    let (sa, sb) = (a.sigma.unwrap(), b.sigma.unwrap());
    assert_eq!(sa.post_jump, sb.post_jump);
    for (x, y) in sa.values.iter().zip(&sb.values) {
        assert!(x.to_bits() == y.to_bits());
    }
    // Without coupling the majorant is an exact exponential between jumps.
    let ev = &a.events[0];
    let i = ev.grid_index;
    let h = a.grid[i + 10] - a.grid[i];
    let expect = sa.post_jump[0] * (-design.kappa_o * h).exp();
    assert!((sa.values[i + 10] - expect).abs() <= 1e-12 * expect.max(1e-300));
}

/// Fixed-step RK4 of plant and observer in original coordinates with the
/// correction applied at each sampling instant.
#[test]
fn benchmark_run_matches_impulsive_rk4() {
    let cfg = RunConfig::bundled("example_noisy").unwrap();
    let pp = partition(&cfg.build_plant().unwrap()).unwrap();
    assert_eq!(pp.t_mat, Matrix::identity(2));
    let design = cfg.build_design(&pp).unwrap();
    let (z0, zh0) = cfg.initial_states(&pp).unwrap();
    let horizon = 20.0;
    let schedule = cfg.build_schedule(&design, 3).unwrap();
    let noise = cfg.build_noise(schedule.len(), 1, 3).unwrap();
    let trace = simulate(
        &pp,
        &design,
        &schedule,
        &noise,
        &z0,
        &zh0,
        horizon,
        &cfg.sim_options(),
    )
    .unwrap();

    let p = ExampleParams::default();
    let f = |y: &[f64]| {
        let a = example::field(&p, &y[..2]);
        let b = example::field(&p, &y[2..]);
        vec![a[0], a[1], b[0], b[1]]
    };
    let l = design.l_gain[(0, 0)];
    let mut y = [z0.clone(), zh0.clone()].concat();
    let mut t = 0.0;
    let mut worst: f64 = 0.0;
    let mut stops: Vec<f64> = schedule.within(horizon).to_vec();
    stops.push(horizon);
    for (k, &stop) in stops.iter().enumerate() {
        let steps = ((stop - t) / 1e-3).ceil() as usize;
        y = common::rk4(&f, &y, t, stop, steps);
        t = stop;
        let idx = trace
            .events
            .get(k)
            .map_or(trace.grid.len() - 1, |ev| ev.grid_index);
        worst = worst.max(common::sup_diff(&y[..2], &trace.x[idx]));
        worst = worst.max(common::sup_diff(&y[2..], &trace.z_hat[idx]));
        if let Some(w) = noise.values.get(k).filter(|_| k < trace.events.len()) {
            let yk = y[0] + w[0];
            y[2] += l * (yk - y[2]);
        }
    }
    assert!(worst < 1e-6, "max deviation {worst:e}");
}

#[test]
fn outputs_are_deterministic() {
    let cfg = RunConfig::bundled("example_noisy").unwrap();
    let pp = partition(&cfg.build_plant().unwrap()).unwrap();
    let design = cfg.build_design(&pp).unwrap();
    let (z0, zh0) = cfg.initial_states(&pp).unwrap();
    let render = |seed: u64| {
        let schedule = cfg.build_schedule(&design, seed).unwrap();
        let noise = cfg.build_noise(schedule.len(), 1, seed).unwrap();
        let trace = simulate(
            &pp,
            &design,
            &schedule,
            &noise,
            &z0,
            &zh0,
            8.0,
            &cfg.sim_options(),
        )
        .unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_trace_csv(&mut a, &trace).unwrap();
        write_events_csv(&mut b, &trace).unwrap();
        (a, b)
    };
    let first = render(2);
    assert_eq!(first, render(2));
    assert_ne!(first, render(3));
    let text = String::from_utf8(first.0).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# schedule_seed="));
    assert!(lines.next().unwrap().starts_with("t,x_1,x_2,zhat_1"));

    let seeds = [5, 1, 4, 2];
    let batch = run_batch(&seeds, |s| render(s).1);
    let order: Vec<u64> = batch.iter().map(|(s, _)| *s).collect();
    assert_eq!(order, vec![1, 2, 4, 5]);
    for (s, events) in batch {
        assert_eq!(events, render(s).1);
    }
}

#[test]
fn explicit_schedule_beyond_horizon_is_ignored() {
    let sp = common::SectorPlant {
        a: [[0.1, 0.1], [0.2, -6.0]],
        k_o: 0.2,
        k_n: 0.2,
    };
    let pp = sp.partitioned();
    let schedule = Schedule::from_times(vec![0.5, 1.0, 7.0]).unwrap();
    let noise = make_noise(0.0, 3, 1, 0).unwrap();
    let trace = simulate(
        &pp,
        &any_design(0.5),
        &schedule,
        &noise,
        &[1.0, 1.0],
        &[0.0, 0.0],
        2.0,
        &SimOptions::default(),
    )
    .unwrap();
    assert_eq!(trace.events.len(), 2);
    assert_eq!(*trace.grid.last().unwrap(), 2.0);
    assert!(Schedule::from_times(vec![1.0, 1.0]).is_err());
    assert!(simulate(
        &pp,
        &any_design(0.5),
        &schedule,
        &make_noise(0.0, 1, 1, 0).unwrap(),
        &[1.0, 1.0],
        &[0.0, 0.0],
        2.0,
        &SimOptions::default()
    )
    .is_err());
}
