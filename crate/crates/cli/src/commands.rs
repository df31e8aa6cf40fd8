use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use impobs_core::design::{convergence_slack, jump_contraction, t_max_noiseless, Severity};
use impobs_core::dissipativity::{CertStatus, Counterexample, QsrCertificate, SampleBox};
use impobs_core::example::{
    equilibria, phase_portrait_grid, write_phase_portrait_csv, ExampleParams,
};
use impobs_core::matrix::{spectral_norm, Matrix};
use impobs_core::plant::PartitionedPlant;
use impobs_core::{
    certify_kappa_n, compute_varpi_o, falsify_qsr, partition, residual_nonlinearity, run_batch,
    simulate_open_loop, verify_iss, write_events_csv, write_trace_csv, IssReport, ObserverDesign,
    RunConfig, SimOptions, SimTrace, Subject,
};

use crate::Flags;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or inconsistent configuration, unknown figure id.
    Config(String),
    /// Runtime failure: integration, I/O.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<impobs_core::Error> for CliError {
    fn from(e: impobs_core::Error) -> Self {
        use impobs_core::Error as E;
        match e {
            E::Config(_) | E::Plant(_) | E::Matrix(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<impobs_core::PlantError> for CliError {
    fn from(e: impobs_core::PlantError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// A readable file path, or else the name of a bundled scenario.
fn load_config(flags: &Flags) -> Result<RunConfig> {
    let spec = flags
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config PATH is required for this command".into()))?;
    let path = Path::new(spec);
    let mut cfg = if path.exists() {
        RunConfig::load(path)?
    } else if let Some(cfg) = RunConfig::bundled(spec) {
        cfg
    } else {
        return Err(CliError::Config(format!(
            "{spec}: no such file and no bundled scenario of that name"
        )));
    };
    if let Some(v) = flags.sigma_variant {
        cfg.sigma_variant = v;
    }
    Ok(cfg)
}

fn out_dir(flags: &Flags, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let dir = flags
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.as_ref().map(PathBuf::from)))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file =
        File::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn row(label: &str, value: impl fmt::Display) {
    println!("  {label:<34} {value}");
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{v:.6}")
    }
}

fn find_cert(certs: &[QsrCertificate], subject: Subject) -> Option<&QsrCertificate> {
    certs.iter().find(|c| c.subject == subject)
}

/// `ω(ψ̃_i, ε_i) ≥ 0` on random samples. A trivial certificate claims
/// `ψ̃_i ≡ 0`, which is tested as `−‖ψ̃_i‖² ≥ 0`.
fn falsify(
    pp: &PartitionedPlant,
    cert: &QsrCertificate,
    block: std::ops::Range<usize>,
    sample_box: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<Option<Counterexample>> {
    let dim = block.len();
    let (q, s, r) = if cert.is_trivial() {
        (
            Matrix::identity(dim).scale(-1.0),
            Matrix::zeros(dim, dim),
            Matrix::zeros(dim, dim),
        )
    } else {
        (cert.q.clone(), cert.s.clone(), cert.r.clone())
    };
    let range = block.clone();
    let psi = |z: &[f64], eps: &[f64]| {
        residual_nonlinearity(pp, z, eps)
            .map(|v| v[range.clone()].to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; dim])
    };
    falsify_qsr(psi, block, &q, &s, &r, sample_box, samples, seed)
        .map_err(|e| CliError::Config(format!("falsify: {e}")))
}

fn falsify_verdict(found: &Option<Counterexample>, samples: usize) -> String {
    match found {
        None => format!("no counterexample in {samples} samples"),
        Some(ce) => format!(
            "FALSIFIED at sample {}: z = {:?}, eps = {:?}, omega = {:.3e}",
            ce.sample_index, ce.z, ce.eps, ce.omega
        ),
    }
}

fn status_name(s: CertStatus) -> &'static str {
    match s {
        CertStatus::Verified => "verified",
        CertStatus::Falsified => "falsified",
        CertStatus::Assumed => "assumed",
    }
}

pub fn certify(flags: &Flags) -> Result<bool> {
    let cfg = load_config(flags)?;
    let pp = partition(&cfg.build_plant()?)?;
    let certs = cfg.certificates()?;
    let lambda_no = spectral_norm(&pp.a_no).map_err(impobs_core::Error::from)?;
    let lambda_on = spectral_norm(&pp.a_on).map_err(impobs_core::Error::from)?;
    let gamma = cfg
        .design
        .as_ref()
        .and_then(|d| jump_contraction(&Matrix::diag(&d.l_gain)).ok());
    let beta = gamma.map(|g| 1.0 / ((1.0 - g) * (1.0 - g)));
    let mut ok = true;

    println!("certificate report: {}", cfg.name);
    println!(
        "measured block (m = {}), unmeasured block (n - m = {})",
        pp.m(),
        pp.n() - pp.m()
    );
    row("lambda*_no = |A_no|", num(lambda_no));
    row("lambda*_on = |A_on|", num(lambda_on));

    let falsify_cfg = cfg.falsify.as_ref().zip(cfg.sample_box());
    let m = pp.m();
    let n = pp.n();

    println!("unmeasured-block map:");
    match find_cert(&certs, Subject::StaticMapN) {
        None => {
            row("certificate", "MISSING");
            ok = false;
        }
        Some(cert) => {
            row("status", status_name(cert.status));
            row("trivial (psi_n = 0)", cert.is_trivial());
            match certify_kappa_n(&pp.a_nn, cert) {
                Ok(k) => {
                    row("kappa_n", num(k));
                    row("margin kappa_n - lambda*_no", num(k - lambda_no));
                    if let Some(b) = beta {
                        row(
                            "margin incl. beta lambda*_on",
                            num(k - lambda_no - b * lambda_on),
                        );
                    }
                }
                Err(e) => {
                    row("kappa_n", format!("FAILED ({e})"));
                    ok = false;
                }
            }
            if let Some((f, sb)) = &falsify_cfg {
                let found = falsify(&pp, cert, m..n, sb, f.samples, f.seed)?;
                ok &= found.is_none();
                row("falsification", falsify_verdict(&found, f.samples));
            }
        }
    }

    println!("measured-block map:");
    match find_cert(&certs, Subject::StaticMapO) {
        None => {
            row("certificate", "MISSING");
            ok = false;
        }
        Some(cert) => {
            row("status", status_name(cert.status));
            match compute_varpi_o(&pp.a_oo, cert) {
                Ok(v) => {
                    row("lambda_max(M_o)", num(v.eig_max));
                    row("varpi_o", num(v.value));
                    row(
                        "varpi_o > 0 (flow expands eps_o)",
                        if v.positive { "yes" } else { "no" },
                    );
                    if let Some(g) = gamma {
                        let t = t_max_noiseless(g, v.value).unwrap_or(f64::NAN);
                        row("noiseless T_max bound", num(t));
                    }
                }
                Err(e) => {
                    row("varpi_o", format!("FAILED ({e})"));
                    ok = false;
                }
            }
            if let Some((f, sb)) = &falsify_cfg {
                let found = falsify(&pp, cert, 0..m, sb, f.samples, f.seed)?;
                ok &= found.is_none();
                row("falsification", falsify_verdict(&found, f.samples));
            }
        }
    }
    if falsify_cfg.is_none() {
        println!("falsification: not requested (no [falsify] section)");
    }
    println!("verdict: {}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn print_design(design: &ObserverDesign, w_inf: f64) {
    let (slack_o, slack_n) = convergence_slack(design);
    row("L (diagonal)", format!("{:?}", design.l_gain.diagonal()));
    row("gamma", num(design.gamma));
    row("beta", num(design.beta));
    row("varpi_o", num(design.varpi_o));
    row("kappa_o (at T_max)", num(design.kappa_o));
    row("kappa_n", num(design.kappa_n));
    row("kappa", num(design.kappa));
    row("lambda*_no", num(design.lambda_no));
    row("lambda*_on", num(design.lambda_on));
    row("alpha", num(design.alpha));
    row("T_min", num(design.t_min));
    row("T_max", num(design.t_max));
    row("T_max without noise", num(design.t_max_noiseless()));
    if w_inf > 0.0 {
        row(
            &format!("ball radius (w_inf = {w_inf})"),
            num(design.iss_radius(w_inf)),
        );
    }
    row("convergence slack (kappa_o side)", num(slack_o));
    row("convergence slack (kappa_n side)", num(slack_n));
    row("feasible", design.feasible);
    for d in &design.diagnostics {
        let tag = match d.severity {
            Severity::Info => "info",
            Severity::Failure => "FAIL",
        };
        match d.slack {
            Some(s) => println!("  [{tag}] {}: {} (slack {s:.6})", d.stage, d.message),
            None => println!("  [{tag}] {}: {}", d.stage, d.message),
        }
    }
}

pub fn design(flags: &Flags) -> Result<bool> {
    let cfg = load_config(flags)?;
    let pp = partition(&cfg.build_plant()?)?;
    let design = cfg.build_design(&pp)?;
    println!("design: {}", cfg.name);
    print_design(&design, cfg.w_inf());
    if flags.out.is_some() || cfg.output.dir.is_some() {
        let path = out_dir(flags, Some(&cfg))?.join(format!("{}_design.toml", cfg.output_prefix()));
        let text = toml::to_string(&design)
            .map_err(|e| CliError::Runtime(format!("serializing design: {e}")))?;
        fs::write(&path, text)?;
        println!("wrote {}", path.display());
    }
    Ok(design.feasible)
}

struct SeedRun {
    offset: u64,
    schedule_seed: u64,
    noise_seed: u64,
    events: usize,
    report: IssReport,
    trace: Option<SimTrace>,
}

fn run_seed(
    cfg: &RunConfig,
    pp: &PartitionedPlant,
    design: &ObserverDesign,
    opts: &SimOptions,
    offset: u64,
) -> Result<SeedRun> {
    let sim = cfg.simulation()?;
    let (z0, zh0) = cfg.initial_states(pp)?;
    let schedule = cfg.build_schedule(design, offset)?;
    let noise = cfg.build_noise(schedule.len(), pp.m(), offset)?;
    let trace = impobs_core::simulate(pp, design, &schedule, &noise, &z0, &zh0, sim.horizon, opts)
        .map_err(|e| CliError::Runtime(format!("seed offset {offset}: {e}")))?;
    let report = verify_iss(&trace, design, cfg.w_inf());
    Ok(SeedRun {
        offset,
        schedule_seed: trace.meta.schedule_seed,
        noise_seed: trace.meta.noise_seed,
        events: trace.events.len(),
        report,
        trace: (offset == 0).then_some(trace),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_summary(path: &Path, runs: &[SeedRun]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record([
        "seed_offset",
        "schedule_seed",
        "noise_seed",
        "events",
        "w_inf",
        "final_error_norm",
        "radius",
        "entry_time",
        "settle_time",
        "entered_and_stayed",
        "fitted_rate",
        "kappa",
        "passed",
    ])?;
    for r in runs {
        let ball = r.report.ball.as_ref();
        let rate = r.report.rate.as_ref();
        wtr.write_record([
            r.offset.to_string(),
            r.schedule_seed.to_string(),
            r.noise_seed.to_string(),
            r.events.to_string(),
            r.report.w_inf.to_string(),
            r.report.final_error_norm.to_string(),
            opt(ball.map(|b| b.radius)),
            opt(ball.and_then(|b| b.entry_time)),
            opt(ball.and_then(|b| b.settle_time)),
            ball.map(|b| b.entered_and_stayed.to_string())
                .unwrap_or_default(),
            opt(rate.map(|r| r.rate)),
            opt(rate.map(|r| r.kappa)),
            r.report.passed.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

fn print_report(r: &SeedRun) {
    let rep = &r.report;
    row("sampling instants", r.events);
    row("final |eps|", format!("{:.3e}", rep.final_error_norm));
    if let Some(b) = &rep.ball {
        row("ball radius", num(b.radius));
        row("entry time", opt(b.entry_time));
        row("settle time", opt(b.settle_time));
        row("entered and stayed", b.entered_and_stayed);
    }
    match &rep.rate {
        Some(rate) => {
            row("fitted decay rate of S(t_k)", num(rate.rate));
            row("required (0.9 kappa)", num(0.9 * rate.kappa));
        }
        None if rep.w_inf == 0.0 => row("fitted decay rate of S(t_k)", "too few samples"),
        None => {}
    }
    row("ISS check", if rep.passed { "PASS" } else { "FAIL" });
}

fn run_open_loop(cfg: &RunConfig, pp: &PartitionedPlant, dir: &Path, prefix: &str) -> Result<bool> {
    let sim = cfg.simulation()?;
    let (z0, zh0) = cfg.initial_states(pp)?;
    let trace = simulate_open_loop(pp, &z0, &zh0, sim.horizon, &cfg.sim_options())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let path = dir.join(format!("{prefix}_trace.csv"));
    write_trace_csv(create(&path)?, &trace)?;
    let x = trace.final_x();
    let xh = pp.to_original(trace.z_hat.last().expect("nonempty trace"));
    let dist = x
        .iter()
        .zip(&xh)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    println!("open loop: {}", cfg.name);
    row("horizon", sim.horizon);
    row("final plant state", format!("{x:?}"));
    row("final observer state", format!("{xh:?}"));
    row("final distance", num(dist));
    println!("wrote {}", path.display());
    Ok(true)
}

fn run_closed_loop(
    cfg: &RunConfig,
    pp: &PartitionedPlant,
    seeds: u64,
    dir: &Path,
    prefix: &str,
) -> Result<bool> {
    let design = cfg.build_design(pp)?;
    if !design.feasible {
        log::warn!("design is not certified feasible; simulating its window anyway");
    }
    let opts = cfg.sim_options();
    let offsets: Vec<u64> = (0..seeds).collect();
    let mut runs = Vec::with_capacity(offsets.len());
    for (_, r) in run_batch(&offsets, |off| run_seed(cfg, pp, &design, &opts, off)) {
        runs.push(r?);
    }

    println!(
        "simulation: {} ({} seed{})",
        cfg.name,
        seeds,
        if seeds == 1 { "" } else { "s" }
    );
    println!(
        "  design feasible: {}, T_min = {}, T_max = {}",
        design.feasible,
        num(design.t_min),
        num(design.t_max)
    );
    let first = &mut runs[0];
    if let Some(trace) = first.trace.take() {
        let trace_path = dir.join(format!("{prefix}_trace.csv"));
        let events_path = dir.join(format!("{prefix}_events.csv"));
        write_trace_csv(create(&trace_path)?, &trace)?;
        write_events_csv(create(&events_path)?, &trace)?;
        println!(
            "wrote {} and {}",
            trace_path.display(),
            events_path.display()
        );
    }
    let summary = dir.join(format!("{prefix}_summary.csv"));
    write_summary(&summary, &runs)?;
    println!("wrote {}", summary.display());

    let passed = runs.iter().filter(|r| r.report.passed).count();
    if runs.len() == 1 {
        print_report(&runs[0]);
    } else {
        let stayed = runs
            .iter()
            .filter(|r| r.report.ball.as_ref().is_some_and(|b| b.entered_and_stayed))
            .count();
        if cfg.w_inf() > 0.0 {
            row("entered and stayed", format!("{stayed}/{}", runs.len()));
        }
        row("ISS checks passed", format!("{passed}/{}", runs.len()));
    }
    Ok(passed == runs.len())
}

fn run_config(cfg: &RunConfig, flags: &Flags, dir: &Path, prefix: &str) -> Result<bool> {
    let pp = partition(&cfg.build_plant()?)?;
    if cfg.simulation()?.open_loop {
        run_open_loop(cfg, &pp, dir, prefix)
    } else {
        run_closed_loop(cfg, &pp, flags.seeds, dir, prefix)
    }
}

pub fn simulate(flags: &Flags) -> Result<bool> {
    let cfg = load_config(flags)?;
    let dir = out_dir(flags, Some(&cfg))?;
    run_config(&cfg, flags, &dir, &cfg.output_prefix())
}

fn bundled(name: &str, flags: &Flags) -> RunConfig {
    let mut cfg = RunConfig::bundled(name).expect("bundled scenario");
    if let Some(v) = flags.sigma_variant {
        cfg.sigma_variant = v;
    }
    cfg
}

pub fn reproduce(flags: &Flags, figure: &str) -> Result<bool> {
    if flags.config.is_some() {
        log::warn!("--config is ignored by reproduce; figures use the bundled scenarios");
    }
    let scenario = match figure {
        "fig3" => None,
        "fig4" => Some("example_open_loop"),
        "fig5" => Some("example_noisy"),
        "fig6" => Some("example_noiseless"),
        other => {
            return Err(CliError::Config(format!(
                "unknown figure id '{other}' (expected fig3, fig4, fig5 or fig6)"
            )))
        }
    };
    let dir = out_dir(flags, None)?;
    match scenario {
        Some(name) => run_config(&bundled(name, flags), flags, &dir, figure),
        None => {
            let p = ExampleParams::default();
            let rows = phase_portrait_grid(&p, [-3.0, 3.0], [-4.0, 4.0], 41)?;
            let path = dir.join("fig3_phase.csv");
            write_phase_portrait_csv(create(&path)?, &rows)?;
            let eq_path = dir.join("fig3_equilibria.csv");
            let mut wtr = csv::Writer::from_writer(create(&eq_path)?);
            wtr.write_record(["x1", "x2"])?;
            for e in equilibria(&p)? {
                wtr.write_record(e.map(|v| v.to_string()))?;
            }
            wtr.flush()?;
            println!("phase portrait: {} grid points", rows.len());
            println!("wrote {} and {}", path.display(), eq_path.display());
            Ok(true)
        }
    }
}
