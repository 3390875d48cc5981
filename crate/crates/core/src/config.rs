//! Flat `key = value` run configuration with named presets.
//!
//! Physics keys are dimensionless: lengths in units of the ground-state width
//! `z_g`, actions in units of `hbar`, rates in units of `omega`. `#` starts a
//! comment. A `preset` line supplies defaults wherever it appears; explicit
//! keys override it. Unknown keys and repeated keys are rejected.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::{BasisSpec, ModelParams, Spin};
use crate::sse::{Scheme, SseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    PaperFig1,
    PaperFig3,
    EntropyScaling,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Desk, Preset::PaperFig1, Preset::PaperFig3, Preset::EntropyScaling];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::PaperFig1 => "paper-fig1",
            Preset::PaperFig3 => "paper-fig3",
            Preset::EntropyScaling => "entropy-scaling",
        }
    }

    /// Presets too large for routine test runs.
    pub fn long_running(self) -> bool {
        matches!(self, Preset::PaperFig1 | Preset::PaperFig3)
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset '{s}' (expected desk, paper-fig1, paper-fig3 or entropy-scaling)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sse,
    Classical,
    Cumulant,
    Ensemble,
    Compare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Sse => "sse",
            Mode::Classical => "classical",
            Mode::Cumulant => "cumulant",
            Mode::Ensemble => "ensemble",
            Mode::Compare => "compare",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sse" => Ok(Mode::Sse),
            "classical" => Ok(Mode::Classical),
            "cumulant" => Ok(Mode::Cumulant),
            "ensemble" => Ok(Mode::Ensemble),
            "compare" => Ok(Mode::Compare),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

/// How the Fock cutoff is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    /// [`ModelParams::default_n_max`].
    Auto,
    /// [`ModelParams::weighted_n_max`] for the configured run length.
    Weighted,
    Fixed(usize),
}

impl FromStr for Cutoff {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Cutoff::Auto),
            "weighted" => Ok(Cutoff::Weighted),
            n => n
                .parse::<usize>()
                .map(Cutoff::Fixed)
                .map_err(|_| format!("n_max must be an integer, 'auto' or 'weighted', got '{n}'")),
        }
    }
}

impl std::fmt::Display for Cutoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cutoff::Auto => f.write_str("auto"),
            Cutoff::Weighted => f.write_str("weighted"),
            Cutoff::Fixed(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub mode: Mode,
    /// One run (or ensemble) per spin value.
    pub spins: Vec<Spin>,
    pub delta_z_over_zg: f64,
    /// Coupling `b z_g / omega`; when given it must agree with
    /// `delta_z_over_zg` for every spin.
    pub b_zg_over_omega: Option<f64>,
    pub k_zg2_over_omega: f64,
    pub action_over_hbar: f64,
    pub n_max: Cutoff,
    /// Step in units of `1/omega`.
    pub dt: f64,
    pub t_final_periods: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub n_traj: u64,
    pub sample_stride: u64,
    pub substeps: u32,
    pub threads: Option<usize>,
    pub renormalize_every: u64,
    pub tail_check_every: u64,
    pub krylov_tol: f64,
    /// Normalization of the peak entropy; `None` means `ln(2J + 1)`.
    pub entropy_norm: Option<f64>,
    pub output_dir: PathBuf,
    pub svg: bool,
}

const KEYS: &[&str] = &[
    "preset",
    "mode",
    "J",
    "delta_z_over_zg",
    "b_zg_over_omega",
    "k_zg2_over_omega",
    "action_over_hbar",
    "n_max",
    "dt",
    "t_final_periods",
    "scheme",
    "seed",
    "n_traj",
    "sample_stride",
    "substeps",
    "threads",
    "renormalize_every",
    "tail_check_every",
    "krylov_tol",
    "entropy_norm",
    "output_dir",
    "svg",
];

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let sse = SseConfig::default();
        let spins = |js: &[f64]| js.iter().map(|&j| Spin::new(j).expect("preset spins are valid")).collect();
        let desk = RunConfig {
            preset,
            mode: Mode::Sse,
            spins: spins(&[0.5, 2.0, 10.0]),
            delta_z_over_zg: 8.0,
            b_zg_over_omega: None,
            k_zg2_over_omega: 0.05,
            action_over_hbar: 50.0,
            n_max: Cutoff::Auto,
            dt: sse.dt,
            t_final_periods: 8.0,
            scheme: sse.scheme,
            seed: 1,
            n_traj: 1,
            sample_stride: 10,
            substeps: 1,
            threads: None,
            renormalize_every: sse.renormalize_every,
            tail_check_every: sse.tail_check_every,
            krylov_tol: sse.krylov_tol,
            entropy_norm: None,
            output_dir: PathBuf::from("."),
            svg: false,
        };
        match preset {
            Preset::Desk => desk,
            Preset::PaperFig1 => RunConfig {
                spins: spins(&[0.5, 2.0, 10.0, 25.0]),
                delta_z_over_zg: 22.0,
                action_over_hbar: 1000.0,
                mode: Mode::Compare,
                ..desk
            },
            Preset::PaperFig3 => RunConfig {
                spins: spins(&[25.0]),
                delta_z_over_zg: 22.0,
                action_over_hbar: 1000.0,
                mode: Mode::Cumulant,
                ..desk
            },
            Preset::EntropyScaling => RunConfig {
                spins: spins(&[2.0, 4.0, 8.0, 16.0]),
                mode: Mode::Ensemble,
                n_traj: 10,
                n_max: Cutoff::Weighted,
                t_final_periods: 2.0,
                ..desk
            },
        }
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse '{v}' as a value for {key}"))
        }
        fn positive(key: &str, v: &str) -> std::result::Result<f64, String> {
            let x: f64 = num(key, v)?;
            if x > 0.0 && x.is_finite() {
                Ok(x)
            } else {
                Err(format!("{key} must be positive, got {v}"))
            }
        }
        match key {
            "preset" => self.preset = v_parse(value)?,
            "mode" => self.mode = v_parse(value)?,
            "J" => {
                self.spins = value
                    .split(',')
                    .map(|s| {
                        let j: f64 = num("J", s.trim())?;
                        Spin::new(j).map_err(|e| e.to_string())
                    })
                    .collect::<std::result::Result<_, _>>()?;
                if self.spins.is_empty() {
                    return Err("J needs at least one value".into());
                }
            }
            "delta_z_over_zg" => self.delta_z_over_zg = num(key, value)?,
            "b_zg_over_omega" => self.b_zg_over_omega = Some(num(key, value)?),
            "k_zg2_over_omega" => {
                let k: f64 = num(key, value)?;
                if !(k >= 0.0) {
                    return Err(format!("k_zg2_over_omega must be non-negative, got {value}"));
                }
                self.k_zg2_over_omega = k;
            }
            "action_over_hbar" => {
                let a: f64 = num(key, value)?;
                if !(a >= 0.0) {
                    return Err(format!("action_over_hbar must be non-negative, got {value}"));
                }
                self.action_over_hbar = a;
            }
            "n_max" => self.n_max = v_parse(value)?,
            "dt" => self.dt = positive(key, value)?,
            "t_final_periods" => self.t_final_periods = positive(key, value)?,
            "scheme" => self.scheme = v_parse(value)?,
            "seed" => self.seed = num(key, value)?,
            "n_traj" => {
                self.n_traj = num(key, value)?;
                if self.n_traj == 0 {
                    return Err("n_traj must be at least 1".into());
                }
            }
            "sample_stride" => self.sample_stride = num::<u64>(key, value)?.max(1),
            "substeps" => self.substeps = num::<u32>(key, value)?.max(1),
            "threads" => self.threads = if value == "auto" { None } else { Some(num::<usize>(key, value)?.max(1)) },
            "renormalize_every" => self.renormalize_every = num::<u64>(key, value)?.max(1),
            "tail_check_every" => self.tail_check_every = num::<u64>(key, value)?.max(1),
            "krylov_tol" => self.krylov_tol = positive(key, value)?,
            "entropy_norm" => self.entropy_norm = if value == "auto" { None } else { Some(positive(key, value)?) },
            "output_dir" => self.output_dir = PathBuf::from(value),
            "svg" => self.svg = num(key, value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Model parameters for one spin value, checking `b` against
    /// `delta_z` when both are set.
    pub fn params_for(&self, spin: Spin) -> Result<ModelParams> {
        let p = ModelParams::dimensionless(spin, self.delta_z_over_zg, self.k_zg2_over_omega, self.action_over_hbar)?;
        if let Some(bz) = self.b_zg_over_omega {
            let b = bz * p.omega / p.z_g();
            ModelParams::from_both(p.m, p.omega, p.hbar, spin, p.k, b, p.delta_z, p.action)
        } else {
            Ok(p)
        }
    }

    pub fn t_final(&self, params: &ModelParams) -> f64 {
        self.t_final_periods * params.period()
    }

    pub fn basis_for(&self, params: &ModelParams) -> BasisSpec {
        let n_max = match self.n_max {
            Cutoff::Auto => params.default_n_max(),
            Cutoff::Weighted => params.weighted_n_max(self.t_final(params)),
            Cutoff::Fixed(n) => n,
        };
        BasisSpec::new(n_max, params.spin)
    }

    pub fn sse_config(&self) -> SseConfig {
        SseConfig {
            dt: self.dt,
            scheme: self.scheme,
            renormalize_every: self.renormalize_every,
            tail_check_every: self.tail_check_every,
            krylov_tol: self.krylov_tol,
            ..SseConfig::default()
        }
    }

    /// Fully resolved configuration in the input format; parsing it gives
    /// back the same configuration.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let js: Vec<String> = self.spins.iter().map(|j| format!("{}", j.value())).collect();
        let _ = writeln!(s, "preset = {}", self.preset.name());
        let _ = writeln!(s, "mode = {}", self.mode.name());
        let _ = writeln!(s, "J = {}", js.join(","));
        let _ = writeln!(s, "delta_z_over_zg = {:?}", self.delta_z_over_zg);
        if let Some(b) = self.b_zg_over_omega {
            let _ = writeln!(s, "b_zg_over_omega = {b:?}");
        }
        let _ = writeln!(s, "k_zg2_over_omega = {:?}", self.k_zg2_over_omega);
        let _ = writeln!(s, "action_over_hbar = {:?}", self.action_over_hbar);
        let _ = writeln!(s, "n_max = {}", self.n_max);
        let _ = writeln!(s, "dt = {:?}", self.dt);
        let _ = writeln!(s, "t_final_periods = {:?}", self.t_final_periods);
        let _ = writeln!(s, "scheme = {}", self.scheme);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "n_traj = {}", self.n_traj);
        let _ = writeln!(s, "sample_stride = {}", self.sample_stride);
        let _ = writeln!(s, "substeps = {}", self.substeps);
        let _ = writeln!(s, "threads = {}", self.threads.map_or("auto".to_string(), |t| t.to_string()));
        let _ = writeln!(s, "renormalize_every = {}", self.renormalize_every);
        let _ = writeln!(s, "tail_check_every = {}", self.tail_check_every);
        let _ = writeln!(s, "krylov_tol = {:?}", self.krylov_tol);
        let _ = writeln!(s, "entropy_norm = {}", self.entropy_norm.map_or("auto".to_string(), |e| format!("{e:?}")));
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "svg = {}", self.svg);
        s
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Preset::Desk)
    }
}

fn v_parse<T: FromStr<Err = String>>(v: &str) -> std::result::Result<T, String> {
    v.parse()
}

/// Split a line into `(key, value)`, or `None` for blank and comment lines.
fn split_line(raw: &str) -> Option<std::result::Result<(&str, &str), String>> {
    let line = raw.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => Err(format!("expected 'key = value', got '{line}'")),
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut entries = Vec::new();
    let mut preset = Preset::Desk;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(kv) = split_line(raw) else { continue };
        let (key, value) = kv.map_err(|msg| Error::Config { line, msg })?;
        if !KEYS.contains(&key) {
            return Err(Error::Config { line, msg: format!("unknown key '{key}'") });
        }
        if let Some((prev, _, _)) = entries.iter().find(|(_, k, _)| *k == key) {
            return Err(Error::Config { line, msg: format!("'{key}' already set on line {prev}") });
        }
        if key == "preset" {
            preset = value.parse().map_err(|msg| Error::Config { line, msg })?;
        }
        entries.push((line, key, value));
    }
    let mut cfg = RunConfig::preset(preset);
    for (line, key, value) in &entries {
        cfg.set(key, value).map_err(|msg| Error::Config { line: *line, msg })?;
    }
    let b_line = entries.iter().find(|(_, k, _)| *k == "b_zg_over_omega").map(|(l, _, _)| *l);
    if let Some(line) = b_line {
        for &spin in &cfg.spins {
            cfg.params_for(spin).map_err(|e| Error::Config { line, msg: e.to_string() })?;
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_desk_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::preset(Preset::Desk));
        let js: Vec<f64> = cfg.spins.iter().map(|s| s.value()).collect();
        assert_eq!(js, vec![0.5, 2.0, 10.0]);
        assert_eq!(cfg.delta_z_over_zg, 8.0);
        assert_eq!(cfg.action_over_hbar, 50.0);
        assert_eq!(cfg.k_zg2_over_omega, 0.05);
    }

    #[test]
    fn long_running_preset_values() {
        let cfg = parse_config("# figure one\npreset = paper-fig1\n").unwrap();
        assert_eq!(cfg.spins[0].value(), 0.5);
        assert_eq!(cfg.delta_z_over_zg, 22.0);
        assert_eq!(cfg.action_over_hbar, 1000.0);
        assert_eq!(cfg.k_zg2_over_omega, 0.05);
        assert!(cfg.preset.long_running());
        let fig3 = parse_config("preset = paper-fig3").unwrap();
        assert_eq!(fig3.spins, vec![Spin::new(25.0).unwrap()]);
        assert_eq!(fig3.mode, Mode::Cumulant);
    }

    #[test]
    fn explicit_keys_override_preset_regardless_of_order() {
        let cfg = parse_config("n_traj = 3\npreset = entropy-scaling\n").unwrap();
        assert_eq!(cfg.n_traj, 3);
        assert_eq!(cfg.spins.len(), 4);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = |text: &str| match parse_config(text) {
            Err(Error::Config { line, msg }) => (line, msg),
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(bad("J = 0.4").0, 1);
        assert_eq!(bad("\n\nfoo = 1").0, 3);
        assert_eq!(bad("dt = fast").0, 1);
        assert_eq!(bad("dt = 0.01\ndt = 0.02").0, 2);
        assert_eq!(bad("no equals sign").0, 1);
        let (line, msg) = bad("J = 1\ndelta_z_over_zg = 8\nb_zg_over_omega = 1.0");
        assert_eq!(line, 3);
        assert!(msg.contains("inconsistent") || msg.contains("mismatch") || msg.contains("b"), "{msg}");
    }

    #[test]
    fn consistent_coupling_is_accepted() {
        // b z_g / omega = -(delta_z / z_g) / (2 J)
        let cfg = parse_config("J = 2\ndelta_z_over_zg = 8\nb_zg_over_omega = -2").unwrap();
        let p = cfg.params_for(cfg.spins[0]).unwrap();
        assert!((p.b * p.z_g() - -2.0).abs() < 1e-12);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse_config("preset = entropy-scaling\nn_max = 300\nthreads = 2\nscheme = milstein\ndt = 0.00314")
            .unwrap();
        assert_eq!(parse_config(&cfg.echo()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(parse_config(&d.echo()).unwrap(), d);
    }
}
