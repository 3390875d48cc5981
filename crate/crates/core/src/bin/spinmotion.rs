use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::Serialize;

use spinmotion::classical::{run_classical, ClassicalState};
use spinmotion::cumulant::{run_cumulant, MomentState};
use spinmotion::diagnostics::classicality_metrics;
use spinmotion::ensemble::{run_ensemble, EnsembleSpec};
use spinmotion::hilbert::{build_operators, standard_initial_state};
use spinmotion::output::{self, EnsembleSummary, SpinSummary, Table};
use spinmotion::{parse_config, Error, Mode, ModelParams, NoiseStream, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Sse,
    Classical,
    Cumulant,
    Ensemble,
    Compare,
}

/// Continuously measured spin-oscillator trajectories.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// What to run; overrides `mode` from the configuration.
    command: Command,
    /// Configuration file (`key = value` lines).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Preset supplying defaults (desk, paper-fig1, paper-fig3, entropy-scaling).
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated spin values.
    #[arg(short = 'j', long = "spin")]
    j: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_traj: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final_periods: Option<f64>,
    /// Integer, `auto` or `weighted`.
    #[arg(long)]
    n_max: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    svg: bool,
    /// Any other key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(short, long, env = "SPINMOTION_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run(&cfg) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial) => {
            eprintln!("numerical failure: partial outputs written to {}", cfg.output_dir.display());
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } | Error::Csv(_) => EXIT_IO,
                e if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            })
        }
    }
}

fn resolve(cli: &Cli) -> spinmotion::Result<RunConfig> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    let mut overrides: Vec<(String, String)> = Vec::new();
    if let Some(p) = &cli.preset {
        // a preset from the command line replaces the file's defaults
        cfg = parse_config(&format!("preset = {p}\n{}", strip_key(&text, "preset")))?;
    }
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.push((k.to_string(), v));
        }
    };
    push("J", cli.j.clone());
    push("seed", cli.seed.map(|v| v.to_string()));
    push("n_traj", cli.n_traj.map(|v| v.to_string()));
    push("dt", cli.dt.map(|v| v.to_string()));
    push("t_final_periods", cli.t_final_periods.map(|v| v.to_string()));
    push("n_max", cli.n_max.clone());
    push("scheme", cli.scheme.clone());
    push("threads", cli.threads.clone());
    push("output_dir", cli.out_dir.as_ref().map(|p| p.display().to_string()));
    if cli.svg {
        push("svg", Some("true".into()));
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config { line: 0, msg: format!("--set expects key=value, got '{kv}'") })?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    for (k, v) in overrides {
        cfg.set(&k, &v).map_err(|msg| Error::Config { line: 0, msg: format!("command line: {msg}") })?;
    }
    cfg.mode = match cli.command {
        Command::Sse => Mode::Sse,
        Command::Classical => Mode::Classical,
        Command::Cumulant => Mode::Cumulant,
        Command::Ensemble => Mode::Ensemble,
        Command::Compare => Mode::Compare,
    };
    for &spin in &cfg.spins {
        cfg.params_for(spin)?;
    }
    Ok(cfg)
}

fn strip_key(text: &str, key: &str) -> String {
    text.lines()
        .map(|l| {
            let body = l.split('#').next().unwrap_or("");
            if body.split_once('=').is_some_and(|(k, _)| k.trim() == key) {
                ""
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

enum Status {
    Complete,
    Partial,
}

#[derive(Serialize)]
struct CompareSummary {
    j: f64,
    n_max: usize,
    rms_deviation_over_amplitude: f64,
    max_czz_over_phasespace: f64,
    failure: Option<String>,
}

fn run(cfg: &RunConfig) -> spinmotion::Result<Status> {
    let dir = &cfg.output_dir;
    if cfg.preset.long_running() {
        log::warn!("preset {} is long-running", cfg.preset.name());
    }
    output::write_text(&dir.join("resolved_config.txt"), &cfg.echo())?;
    let mut partial = false;
    let mut ensemble_rows = Vec::new();
    let mut compare_rows = Vec::new();
    for &spin in &cfg.spins {
        let params = cfg.params_for(spin)?;
        let j = spin.value();
        let t_final = cfg.t_final(&params);
        let basis = cfg.basis_for(&params);
        log::info!("J = {j}: n_max = {}, dim = {}, t_final = {t_final:.3}", basis.n_max, basis.dim());
        match cfg.mode {
            Mode::Classical => {
                let cl = classical_reference(&params, cfg)?;
                emit(dir, "classical", j, &output::classical_table(&cl, &params), cfg, &["z_classical", "Sz"])?;
            }
            Mode::Cumulant => {
                let series = cumulant(&params, cfg)?;
                emit(dir, "cumulant", j, &output::cumulant_table(&series, None)?, cfg, &["Czz", "Cpp", "CJzJz"])?;
            }
            Mode::Sse | Mode::Compare => {
                let ops = build_operators(&params, &basis)?;
                let init = standard_initial_state(&params, &basis)?;
                let mut noise = NoiseStream::new(cfg.seed, 0).with_substeps(cfg.substeps);
                let rec =
                    spinmotion::run_trajectory(&init, &ops, &cfg.sse_config(), &mut noise, t_final, cfg.sample_stride)?;
                if let Some(f) = &rec.failure {
                    log::error!("J = {j}: stopped at t = {:.3}: {}", f.time, f.message);
                    partial = true;
                }
                let hist = output::histogram_table(&rec, &params);
                hist.write(&output::spin_path(dir, "histogram", j, "csv"))?;
                if cfg.mode == Mode::Sse {
                    emit(dir, "sse", j, &output::trajectory_table(&rec, &params, None)?, cfg, &["z_mean", "jz_mean"])?;
                } else {
                    let cl = classical_reference(&params, cfg)?;
                    let cl = truncate_classical(cl, rec.len());
                    let table = output::trajectory_table(&rec, &params, Some(&cl))?;
                    emit(dir, "compare", j, &table, cfg, &["z_mean", "z_classical", "Czz"])?;
                    let mut noise = NoiseStream::new(cfg.seed, 0).with_substeps(cfg.substeps);
                    let init_m = MomentState::coherent_product(&params, params.orbit_amplitude(), 0.0);
                    match run_cumulant(&init_m, &params, cfg.dt, t_final, &mut noise, cfg.sample_stride) {
                        Ok(series) => {
                            let full_cl = classical_reference(&params, cfg)?;
                            let t = output::cumulant_table(&series, Some(&full_cl))?;
                            emit(dir, "cumulant", j, &t, cfg, &["z_mean", "z_classical", "Czz"])?;
                        }
                        Err(e) if e.is_numerical() => {
                            log::error!("J = {j}: moment closure failed: {e}");
                            partial = true;
                        }
                        Err(e) => return Err(e),
                    }
                    let czz = rec.column(|o| o.czz);
                    let m = classicality_metrics(&rec.times, &rec.z_mean(), &czz, &cl.times, &cl.z)?;
                    compare_rows.push(CompareSummary {
                        j,
                        n_max: basis.n_max,
                        rms_deviation_over_amplitude: m.rms_deviation_over_amplitude,
                        max_czz_over_phasespace: m.max_czz_over_phasespace,
                        failure: rec.failure.as_ref().map(|f| f.message.clone()),
                    });
                }
            }
            Mode::Ensemble => {
                let mut spec = EnsembleSpec::new(params, basis, cfg.sse_config(), cfg.n_traj, cfg.seed, t_final);
                spec.sample_stride = cfg.sample_stride;
                spec.substeps = cfg.substeps;
                spec.threads = cfg.threads;
                spec.entropy_norm = cfg.entropy_norm;
                let res = run_ensemble(&spec)?;
                let agg = &res.aggregates;
                if agg.is_partial() {
                    log::error!("J = {j}: {} of {} trajectories failed", agg.failed.len(), agg.n_traj);
                    partial = true;
                }
                emit(dir, "aggregate", j, &output::aggregate_table(agg, &params), cfg, &["z_mean", "jz_mean"])?;
                for rec in &res.records {
                    let t = output::trajectory_table(rec, &params, None)?;
                    t.write(&dir.join(format!("ensemble_J{j}_traj{}.csv", rec.trajectory_id)))?;
                }
                ensemble_rows.push(SpinSummary {
                    j,
                    n_max: basis.n_max,
                    n_traj: agg.n_traj,
                    n_complete: agg.n_complete,
                    failed: agg.failed.clone(),
                    up_fraction: agg.up_fraction,
                    collapsed_fraction: res.collapsed_fraction(0.98 * j * params.hbar),
                    mean_max_entropy: agg.mean_max_entropy,
                });
            }
        }
    }
    if !ensemble_rows.is_empty() {
        output::write_json(&dir.join("summary.json"), &EnsembleSummary { config: cfg.echo(), spins: ensemble_rows })?;
    }
    if !compare_rows.is_empty() {
        output::write_json(&dir.join("summary.json"), &compare_rows)?;
    }
    Ok(if partial { Status::Partial } else { Status::Complete })
}

fn classical_reference(
    params: &ModelParams,
    cfg: &RunConfig,
) -> spinmotion::Result<spinmotion::classical::ClassicalRecord> {
    let init = ClassicalState::matched(params, params.orbit_amplitude(), 0.0, [1.0, 0.0, 0.0])?;
    run_classical(&init, params, cfg.dt, cfg.t_final(params), cfg.sample_stride)
}

fn truncate_classical(
    mut cl: spinmotion::classical::ClassicalRecord,
    len: usize,
) -> spinmotion::classical::ClassicalRecord {
    cl.times.truncate(len);
    cl.z.truncate(len);
    cl.p.truncate(len);
    cl.s.truncate(len);
    cl
}

fn cumulant(params: &ModelParams, cfg: &RunConfig) -> spinmotion::Result<spinmotion::cumulant::CumulantSeries> {
    let init = MomentState::coherent_product(params, params.orbit_amplitude(), 0.0);
    let mut noise = NoiseStream::new(cfg.seed, 0).with_substeps(cfg.substeps);
    run_cumulant(&init, params, cfg.dt, cfg.t_final(params), &mut noise, cfg.sample_stride)
}

fn emit(dir: &Path, stem: &str, j: f64, table: &Table, cfg: &RunConfig, plot: &[&str]) -> spinmotion::Result<()> {
    let path = output::spin_path(dir, stem, j, "csv");
    table.write(&path)?;
    log::info!("wrote {}", path.display());
    if cfg.svg {
        let svg = output::svg_plot(table, plot, &format!("{stem}, J = {j}"))?;
        output::write_text(&output::spin_path(dir, stem, j, "svg"), &svg)?;
    }
    Ok(())
}
