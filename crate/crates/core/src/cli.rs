//! The `trotterq` command: `bench`, `grape`, `vqa` and `trotter-check`.
//!
//! Exit status is 0 on success, 1 when a run fails or a check does not
//! hold, and 2 for configuration and validation errors.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bench::{self, EmitFormat, SweepSpec};
use crate::config::{self, Loaded, SystemConfig};
use crate::error::{Error, Result};
use crate::grape::{
    basis_state, ghz_state, random_initial_pulse, rotation_target, run_grape, GrapeConfig,
    GrapeProblem, HybridSchedule, Objective, RunTrace,
};
use crate::pauli::{Hamiltonian, Pauli};
use crate::propagator::{trotter_scheme, Branch, PropagatorMode, TrotterScheme};
use crate::stats::median;
use crate::vqa::{run_vqa, AnsatzOrder, AnsatzSpec, NelderMeadConfig, VqaConfig, VqaProblem, VqaRun};

#[derive(Debug, Parser)]
#[command(name = "trotterq", version, about = "Trotterized propagation, GRAPE and VQA experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time direct vs Trotterized propagation over a sweep.
    Bench,
    /// Optimize control pulses.
    Grape,
    /// Minimize a problem Hamiltonian's energy over ansatz circuits.
    Vqa,
    /// Check scheme coefficients and fitted error orders.
    TrotterCheck,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML experiment file (optional for trotter-check).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override a config key, e.g. `--set grape.max_iters=50`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Replace the configured seed(s) with this one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Bench => cmd_bench(c),
        Command::Grape => cmd_grape(c),
        Command::Vqa => cmd_vqa(c),
        Command::TrotterCheck => cmd_trotter_check(c),
    }
}

fn load_required<T: DeserializeOwned>(c: &CommonArgs) -> Result<Loaded<T>> {
    let path = c
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    config::load(path, &c.set)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(File::create(path)?, value)?;
    Ok(())
}

/// Runs on a fully resolved config, written to `config.json` before any work.
fn echo_config<T: Serialize>(out: &Path, value: &T) -> Result<()> {
    prepare_out(out)?;
    write_json(&out.join("config.json"), value)
}

// ---------------------------------------------------------------- bench

pub fn cmd_bench(c: &CommonArgs) -> Result<()> {
    let Loaded { mut config, .. } = load_required::<SweepSpec>(c)?;
    if let Some(s) = c.seed {
        config.seed = s;
    }
    config.validate()?;
    let result = bench::run_sweep(&config)?;
    let files = bench::emit(&result, &c.out, "bench", EmitFormat::Both)?;
    println!("{:>8} {:>9} {:>14} {:>8} {:>12}", config.variable.name(), "order", "median_time_s", "cv", "median_1-F");
    for a in &result.aggregates {
        println!(
            "{:>8} {:>9} {:>14.6e} {:>8.3} {:>12.3e}",
            a.value,
            a.order.to_string(),
            a.wall_time.median,
            a.wall_time_cv.unwrap_or(f64::NAN),
            a.infidelity.median
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

// ---------------------------------------------------------------- grape

/// What the pulse should achieve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveConfig {
    /// `|0…0>` to `(|0…0> + |1…1>)/√2`.
    Ghz,
    /// Basis state to basis state (indices, qubit 1 most significant).
    Transfer { from: usize, to: usize },
    /// `exp(-i θ σ/2)` on one qubit (numbered from 1), identity elsewhere.
    Rotation { qubit: usize, axis: Pauli, angle_pi: f64 },
}

impl ObjectiveConfig {
    pub fn build(&self, n: usize) -> Result<Objective> {
        match self {
            Self::Ghz => Objective::state(basis_state(n, 0)?, ghz_state(n)),
            Self::Transfer { from, to } => Objective::state(basis_state(n, *from)?, basis_state(n, *to)?),
            Self::Rotation { qubit, axis, angle_pi } => {
                if *qubit == 0 || *qubit > n {
                    return Err(Error::Config(format!(
                        "objective.qubit must be in 1..={n}, got {qubit}"
                    )));
                }
                Objective::gate(rotation_target(n, qubit - 1, *axis, angle_pi * PI)?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// Total duration `T` in seconds.
    pub duration: f64,
    /// Slice counts to run; `τ = T/M`.
    pub slices: Vec<usize>,
    /// Initial amplitudes are uniform in `[-u0, u0]` rad/s.
    pub initial_amplitude: f64,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrapeExperiment {
    pub system: SystemConfig,
    pub objective: ObjectiveConfig,
    pub pulse: PulseConfig,
    /// One arm per mode. `grape.mode` is ignored; `grape.hybrid` adds a hybrid arm.
    #[serde(default)]
    pub modes: Vec<PropagatorMode>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub grape: GrapeConfig,
}

/// One optimizer configuration compared across slice counts and seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub label: String,
    pub mode: PropagatorMode,
    pub hybrid: Option<HybridSchedule>,
}

impl GrapeExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() && self.grape.hybrid.is_none() {
            return Err(Error::Config("missing key `modes` (or `grape.hybrid`)".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let p = &self.pulse;
        if !(p.duration.is_finite() && p.duration > 0.0) {
            return Err(Error::Validation(format!("pulse.duration must be positive, got {}", p.duration)));
        }
        if p.slices.is_empty() || p.slices.contains(&0) {
            return Err(Error::Validation("pulse.slices must be a nonempty list of positive counts".into()));
        }
        if !(p.initial_amplitude.is_finite() && p.initial_amplitude >= 0.0) {
            return Err(Error::Validation("pulse.initial_amplitude must be >= 0".into()));
        }
        for m in &self.modes {
            m.validate()?;
        }
        self.grape.validate()
    }

    pub fn arms(&self) -> Vec<Arm> {
        let mut arms: Vec<Arm> = self
            .modes
            .iter()
            .map(|&m| Arm {
                label: m.to_string(),
                mode: m,
                hybrid: None,
            })
            .collect();
        if let Some(h) = &self.grape.hybrid {
            let stages: Vec<String> = h.stages.iter().map(|s| format!("{}@{}", s.mode, s.start)).collect();
            arms.push(Arm {
                label: format!("hybrid:{}", stages.join(",")),
                mode: h.mode_at(1),
                hybrid: Some(h.clone()),
            });
        }
        arms
    }

    pub fn run_config(&self, arm: &Arm, seed: u64) -> GrapeConfig {
        GrapeConfig {
            mode: arm.mode,
            seed,
            hybrid: arm.hybrid.clone(),
            ..self.grape.clone()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrapeRunSummary {
    pub order: String,
    #[serde(rename = "M")]
    pub slices: usize,
    pub seed: u64,
    pub iterations: usize,
    pub status: crate::grape::RunStatus,
    pub estimated_fidelity: f64,
    pub true_fidelity: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrapeSummaryRow {
    pub order: String,
    #[serde(rename = "M")]
    pub slices: usize,
    pub median_wall_time_s: f64,
    pub median_f_l: f64,
    pub median_f: f64,
}

/// Every `(arm, M, seed)` run of an experiment, in config order.
pub fn run_grape_experiment(
    exp: &GrapeExperiment,
    h_s: &Hamiltonian,
    mut on_run: impl FnMut(&Arm, usize, u64, &RunTrace) -> Result<()>,
) -> Result<(Vec<GrapeRunSummary>, Vec<GrapeSummaryRow>)> {
    exp.validate()?;
    let objective = exp.objective.build(h_s.n())?;
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for arm in exp.arms() {
        for &m in &exp.pulse.slices {
            let tau = exp.pulse.duration / m as f64;
            let mut group = Vec::new();
            for &seed in &exp.seeds {
                let initial = random_initial_pulse(h_s.n(), m, tau, exp.pulse.initial_amplitude, seed)?;
                let cfg = exp.run_config(&arm, seed);
                let trace = run_grape(
                    GrapeProblem {
                        h_s,
                        objective: &objective,
                        initial,
                    },
                    &cfg,
                )?;
                log::info!(
                    "{} M={m} seed {seed}: {} iterations, f_l = {:.6}, f = {:.6}",
                    arm.label,
                    trace.iterations(),
                    trace.estimated_fidelity,
                    trace.true_fidelity
                );
                on_run(&arm, m, seed, &trace)?;
                group.push(GrapeRunSummary {
                    order: arm.label.clone(),
                    slices: m,
                    seed,
                    iterations: trace.iterations(),
                    status: trace.status,
                    estimated_fidelity: trace.estimated_fidelity,
                    true_fidelity: trace.true_fidelity,
                    wall_time_s: trace.wall_time_s,
                });
            }
            let col = |f: fn(&GrapeRunSummary) -> f64| median(&group.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
            rows.push(GrapeSummaryRow {
                order: arm.label.clone(),
                slices: m,
                median_wall_time_s: col(|r| r.wall_time_s),
                median_f_l: col(|r| r.estimated_fidelity),
                median_f: col(|r| r.true_fidelity),
            });
            runs.extend(group);
        }
    }
    Ok((runs, rows))
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_grape(c: &CommonArgs) -> Result<()> {
    let Loaded { mut config, base_dir } = load_required::<GrapeExperiment>(c)?;
    if let Some(s) = c.seed {
        config.seeds = vec![s];
    }
    config.system = config.system.resolve(&base_dir)?;
    config.validate()?;
    let h_s = config.system.hamiltonian()?;
    echo_config(&c.out, &config)?;
    fs::create_dir_all(c.out.join("traces"))?;
    fs::create_dir_all(c.out.join("pulses"))?;
    let (runs, rows) = run_grape_experiment(&config, &h_s, |arm, m, seed, trace| {
        let stem = format!("{}_M{m}_seed{seed}", file_label(&arm.label));
        write_json(&c.out.join("traces").join(format!("{stem}.json")), trace)?;
        trace
            .final_pulse
            .write_csv(File::create(c.out.join("pulses").join(format!("{stem}.csv")))?)
    })?;
    write_rows(&c.out.join("runs.csv"), &runs)?;
    write_rows(&c.out.join("summary.csv"), &rows)?;
    println!("{:<28} {:>6} {:>14} {:>12} {:>12}", "order", "M", "median_time_s", "median_f_l", "median_f");
    for r in &rows {
        println!(
            "{:<28} {:>6} {:>14.3} {:>12.6} {:>12.6}",
            r.order, r.slices, r.median_wall_time_s, r.median_f_l, r.median_f
        );
    }
    println!("wrote {}", c.out.display());
    Ok(())
}

// ---------------------------------------------------------------- vqa

fn default_orders() -> Vec<AnsatzOrder> {
    AnsatzOrder::ALL.to_vec()
}

fn default_init_range() -> f64 {
    PI / 8.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqaExperiment {
    /// Problem Hamiltonian `H_P`.
    pub problem: SystemConfig,
    /// Free-evolution Hamiltonian `H_S` of the ansatz blocks.
    pub drive: SystemConfig,
    #[serde(default = "default_orders")]
    pub orders: Vec<AnsatzOrder>,
    /// Block counts `M`.
    pub layers: Vec<usize>,
    /// Block durations in seconds.
    pub taus: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_init_range")]
    pub init_range: f64,
    #[serde(default)]
    pub nelder_mead: NelderMeadConfig,
}

impl VqaExperiment {
    pub fn optimizer(&self) -> VqaConfig {
        VqaConfig {
            nelder_mead: self.nelder_mead.clone(),
            seeds: self.seeds.clone(),
            init_range: self.init_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() || self.layers.is_empty() || self.taus.is_empty() {
            return Err(Error::Config("orders, layers and taus must be nonempty".into()));
        }
        self.optimizer().validate()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VqaGridRow {
    pub order: u8,
    #[serde(rename = "M")]
    pub layers: usize,
    pub tau: f64,
    pub seed: u64,
    pub final_energy: f64,
    pub infidelity: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
}

impl From<&VqaRun> for VqaGridRow {
    fn from(r: &VqaRun) -> Self {
        Self {
            order: r.order.number(),
            layers: r.layers,
            tau: r.tau,
            seed: r.seed,
            final_energy: r.final_energy,
            infidelity: r.infidelity,
            iterations: r.iterations,
            wall_time_s: r.wall_time_s,
        }
    }
}

pub fn cmd_vqa(c: &CommonArgs) -> Result<()> {
    let Loaded { mut config, base_dir } = load_required::<VqaExperiment>(c)?;
    if let Some(s) = c.seed {
        config.seeds = vec![s];
    }
    config.problem = config.problem.resolve(&base_dir)?;
    config.drive = config.drive.resolve(&base_dir)?;
    config.validate()?;
    let h_p = config.problem.hamiltonian()?;
    let h_s = config.drive.hamiltonian()?;
    let opt = config.optimizer();
    let mut problems = Vec::new();
    for &tau in &config.taus {
        for &m in &config.layers {
            for &order in &config.orders {
                let spec = AnsatzSpec {
                    order,
                    layers: m,
                    tau,
                    n: h_p.n(),
                };
                problems.push(VqaProblem::new(h_p.clone(), &h_s, spec)?);
            }
        }
    }
    echo_config(&c.out, &config)?;
    let traces = c.out.join("traces");
    fs::create_dir_all(&traces)?;
    let mut grid = Vec::new();
    let mut reports = Vec::new();
    for p in &problems {
        let rep = run_vqa(p, &opt)?;
        let s = p.ansatz.spec();
        for r in &rep.runs {
            let stem = format!("order{}_M{}_tau{}_seed{}", s.order, s.layers, s.tau, r.seed);
            write_json(&traces.join(format!("{stem}.json")), r)?;
            grid.push(VqaGridRow::from(r));
        }
        println!(
            "order {} M={} tau={}: median E = {:.6}, median 1-F = {:.4} (ground E = {:.6})",
            s.order,
            s.layers,
            s.tau,
            rep.energy.map_or(f64::NAN, |e| e.median),
            rep.infidelity.map_or(f64::NAN, |e| e.median),
            rep.ground_energy
        );
        reports.push(rep);
    }
    write_rows(&c.out.join("grid.csv"), &grid)?;
    write_json(&c.out.join("summary.json"), &reports)?;
    println!("wrote {}", c.out.display());
    Ok(())
}

// ---------------------------------------------------------------- trotter-check

fn default_check_orders() -> Vec<u8> {
    vec![1, 2, 3, 4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrotterCheckConfig {
    #[serde(default = "default_check_orders")]
    pub orders: Vec<u8>,
    #[serde(default = "check_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub branch: Branch,
    #[serde(default = "check_n")]
    pub n: usize,
    #[serde(default = "check_duration")]
    pub duration: f64,
    #[serde(default = "check_slices")]
    pub slices: Vec<usize>,
    #[serde(default = "check_instances")]
    pub instances: usize,
    #[serde(default)]
    pub seed: u64,
}

fn check_gamma() -> f64 {
    crate::propagator::DEFAULT_GAMMA
}
fn check_n() -> usize {
    3
}
fn check_duration() -> f64 {
    1.0
}
fn check_slices() -> Vec<usize> {
    vec![10, 20, 40, 80, 160]
}
fn check_instances() -> usize {
    5
}

impl Default for TrotterCheckConfig {
    fn default() -> Self {
        config::from_table(toml::Table::new()).expect("all fields have defaults")
    }
}

/// Acceptable fitted slopes for a scheme of order `l`.
pub fn slope_band(order: u8) -> (f64, f64) {
    match order {
        3 => (2.5, f64::INFINITY),
        l => (l as f64 - 0.5, l as f64 + 0.7),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderCheck {
    pub order: u8,
    pub sum_alpha: f64,
    pub sum_beta: f64,
    pub coefficients_ok: bool,
    pub slopes: Vec<f64>,
    pub slope_band: (f64, f64),
    pub slopes_ok: bool,
}

pub fn schemes_for(config: &TrotterCheckConfig) -> Result<Vec<TrotterScheme>> {
    // Order 3 first: an imaginary Γ is a domain error before anything runs.
    if config.orders.contains(&3) {
        TrotterScheme::third_order(config.gamma, config.branch)?;
    }
    config
        .orders
        .iter()
        .map(|&o| match o {
            3 => TrotterScheme::third_order(config.gamma, config.branch),
            o => trotter_scheme(o, None),
        })
        .collect()
}

pub fn run_trotter_check(config: &TrotterCheckConfig) -> Result<Vec<OrderCheck>> {
    let schemes = schemes_for(config)?;
    if config.instances == 0 {
        return Err(Error::Validation("instances must be >= 1".into()));
    }
    let mut fits: Vec<Vec<f64>> = vec![Vec::new(); schemes.len()];
    for i in 0..config.instances {
        let samples = bench::order_scaling_instance(
            config.n,
            config.duration,
            &config.slices,
            &schemes,
            config.seed + i as u64,
        )?;
        for (k, s) in schemes.iter().enumerate() {
            fits[k].push(bench::fit_error_order(&samples[&s.order])?.slope);
        }
    }
    Ok(schemes
        .iter()
        .zip(fits)
        .map(|(s, slopes)| {
            let sum_alpha: f64 = s.alphas.iter().sum();
            let sum_beta: f64 = s.betas.iter().sum();
            let band = slope_band(s.order);
            OrderCheck {
                order: s.order,
                sum_alpha,
                sum_beta,
                coefficients_ok: (sum_alpha - 1.0).abs() <= 1e-12 && (sum_beta - 1.0).abs() <= 1e-12,
                slopes_ok: slopes.iter().all(|v| *v >= band.0 && *v <= band.1),
                slopes,
                slope_band: band,
            }
        })
        .collect())
}

pub fn cmd_trotter_check(c: &CommonArgs) -> Result<()> {
    let mut table = match &c.config {
        Some(p) => config::read_table(p)?,
        None => toml::Table::new(),
    };
    for o in &c.set {
        config::apply_override(&mut table, o)?;
    }
    let mut config: TrotterCheckConfig = config::from_table(table)?;
    if let Some(s) = c.seed {
        config.seed = s;
    }
    let checks = run_trotter_check(&config)?;
    echo_config(&c.out, &config)?;
    write_json(&c.out.join("trotter_check.json"), &checks)?;
    let mut failed = Vec::new();
    for ch in &checks {
        let slopes: Vec<String> = ch.slopes.iter().map(|s| format!("{s:.3}")).collect();
        println!(
            "order {}: sum alpha = {:.15}, sum beta = {:.15} [{}]; slopes {} in [{}, {}] [{}]",
            ch.order,
            ch.sum_alpha,
            ch.sum_beta,
            if ch.coefficients_ok { "ok" } else { "FAIL" },
            slopes.join(" "),
            ch.slope_band.0,
            ch.slope_band.1,
            if ch.slopes_ok { "ok" } else { "FAIL" },
        );
        if !(ch.coefficients_ok && ch.slopes_ok) {
            failed.push(ch.order.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::CheckFailed(format!("order(s) {}", failed.join(", "))))
    }
}
