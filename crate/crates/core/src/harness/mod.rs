//! Experiment presets, key-value configuration and output emission.
//!
//! A configuration is a TOML table of flat keys. Every [`SchemeConfig`]
//! field is accepted under its own name, together with `preset`,
//! `objective`, `runs`, `output_dir` and the [`Settings`] fields.

mod output;
mod run;

pub use output::{read_trajectory_csv, sha256_file, write_residual_csv, write_trajectory_csv};
pub use run::{run_experiment, DecompositionRun, GroupSummary, Manifest, ManifestEntry, Summary};

use serde::Serialize;
use std::path::PathBuf;

use crate::analysis::Axis;
use crate::cbo::SchemeConfig;
use crate::objectives::Objective;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig1,
    Fig2a,
    Fig2b,
    Fig2c,
    Fig3Sweep,
    Fig4,
    Decompose,
    Scaling(Axis),
    Custom,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self, String> {
        Ok(match s {
            "fig1" => Preset::Fig1,
            "fig2a" => Preset::Fig2a,
            "fig2b" => Preset::Fig2b,
            "fig2c" => Preset::Fig2c,
            "fig3-sweep" => Preset::Fig3Sweep,
            "fig4" => Preset::Fig4,
            "decompose" => Preset::Decompose,
            "custom" => Preset::Custom,
            _ => match s.strip_prefix("scaling-") {
                Some(axis) => Preset::Scaling(Axis::parse(axis).map_err(|e| e.to_string())?),
                None => return Err(format!("unknown preset `{s}`")),
            },
        })
    }

    pub fn name(&self) -> String {
        match self {
            Preset::Fig1 => "fig1".into(),
            Preset::Fig2a => "fig2a".into(),
            Preset::Fig2b => "fig2b".into(),
            Preset::Fig2c => "fig2c".into(),
            Preset::Fig3Sweep => "fig3-sweep".into(),
            Preset::Fig4 => "fig4".into(),
            Preset::Decompose => "decompose".into(),
            Preset::Scaling(axis) => format!("scaling-{}", axis.as_str()),
            Preset::Custom => "custom".into(),
        }
    }

    pub fn all() -> Vec<Preset> {
        let mut v = vec![
            Preset::Fig1,
            Preset::Fig2a,
            Preset::Fig2b,
            Preset::Fig2c,
            Preset::Fig3Sweep,
            Preset::Fig4,
            Preset::Decompose,
        ];
        v.extend(
            [
                Axis::NParticles,
                Axis::LambdaGap,
                Axis::SigmaSqrtDt,
                Axis::Tau,
            ]
            .map(Preset::Scaling),
        );
        v.push(Preset::Custom);
        v
    }

    /// Compiled-in defaults: objective name, scheme config, settings, runs.
    pub fn defaults(&self) -> (String, SchemeConfig, Settings, usize) {
        let fig1 = SchemeConfig::new(vec![8.0, 8.0]);
        let mut settings = Settings::default();
        let canyon = "canyon3".to_string();
        match self {
            Preset::Fig1 => (canyon, fig1, settings, 50),
            Preset::Fig2a | Preset::Fig3Sweep => {
                let mut cfg = fig1;
                cfg.sigma_tilde = Some(0.6);
                (canyon, cfg, settings, 50)
            }
            Preset::Fig2b => (canyon, fig1, settings, 5),
            Preset::Fig2c => {
                settings.success_radius = 1.0;
                (canyon, fig1, settings, 50)
            }
            Preset::Fig4 => {
                let mut cfg = fig1;
                cfg.sigma_tilde = Some(0.6);
                ("canyon2".into(), cfg, settings, 50)
            }
            Preset::Decompose => (canyon, fig1.with_coupled_tau(0.03), settings, 5),
            Preset::Scaling(axis) => {
                let mut cfg = SchemeConfig::new(vec![0.0, 0.0]);
                cfg.init_std = 1.0;
                cfg.dt = 0.1;
                cfg.lambda = 10.0;
                cfg.n_steps = 20;
                settings.seeds = 20;
                match axis {
                    Axis::NParticles => {
                        cfg.sigma = 0.05;
                        cfg.alpha = 10.0;
                        cfg.sigma_tilde = Some(0.05);
                        settings.grid = vec![25.0, 100.0, 400.0, 1600.0];
                    }
                    Axis::LambdaGap => {
                        cfg.init_mean = vec![2.0, 2.0];
                        cfg.sigma = 0.0;
                        cfg.alpha = 0.05;
                        cfg.n_particles = 10_000;
                        cfg.sigma_tilde = Some(0.0);
                        settings.grid = vec![0.1, 0.2, 0.4, 0.8];
                    }
                    Axis::SigmaSqrtDt => {
                        cfg.init_mean = vec![1.0, 1.0];
                        cfg.sigma = 0.0;
                        cfg.alpha = 1.0;
                        cfg.sigma_tilde = Some(0.0);
                        settings.grid = vec![0.01, 0.02, 0.04, 0.08, 0.16];
                    }
                    Axis::Tau => {
                        cfg.init_mean = vec![1.0, 1.0];
                        cfg.init_std = 0.5;
                        cfg.n_steps = 10;
                        cfg.n_particles = 10_000;
                        settings.grid = vec![0.2, 0.1, 0.05, 0.025, 0.0125];
                    }
                }
                ("quadratic-2".into(), cfg, settings, 1)
            }
            Preset::Custom => (canyon, fig1, settings, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomScheme {
    Cbo,
    Ch,
    Mms,
    Gd,
    Langevin,
    Triple,
}

impl CustomScheme {
    fn parse(s: &str) -> Result<Self, String> {
        Ok(match s {
            "cbo" => CustomScheme::Cbo,
            "ch" => CustomScheme::Ch,
            "mms" => CustomScheme::Mms,
            "gd" => CustomScheme::Gd,
            "langevin" => CustomScheme::Langevin,
            "triple" => CustomScheme::Triple,
            _ => return Err(format!("unknown scheme `{s}`")),
        })
    }
}

/// Experiment parameters that are not part of [`SchemeConfig`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    /// Scheme run by the `custom` preset.
    pub scheme: CustomScheme,
    /// Terminal distance to `x*` counted as a success.
    pub success_radius: f64,
    /// Sampling widths of the `fig3-sweep` preset.
    pub sigma_tilde_grid: Vec<f64>,
    pub gd_step: f64,
    pub gd_steps: usize,
    pub langevin_dt: f64,
    pub langevin_steps: usize,
    /// `beta_t = anneal_scale * log(t + 1)`.
    pub anneal_scale: f64,
    /// Grid of a scaling sweep.
    pub grid: Vec<f64>,
    /// Seeds per grid value of a scaling sweep.
    pub seeds: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            scheme: CustomScheme::Cbo,
            success_radius: 0.5,
            sigma_tilde_grid: vec![0.4, 0.6, 0.7],
            gd_step: 0.01,
            gd_steps: 10_000,
            langevin_dt: 0.001,
            langevin_steps: 10_000,
            anneal_scale: 0.02,
            grid: Vec::new(),
            seeds: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub objective: String,
    pub config: SchemeConfig,
    pub settings: Settings,
    /// Number of seeds `base_seed + i` run by the figure presets.
    pub runs: usize,
    pub output_dir: PathBuf,
}

impl ExperimentSpec {
    /// The preset with no overrides.
    pub fn preset(preset: Preset, output_dir: impl Into<PathBuf>) -> Self {
        let (objective, config, settings, runs) = preset.defaults();
        Self {
            preset,
            objective,
            config,
            settings,
            runs,
            output_dir: output_dir.into(),
        }
    }

    pub fn objective(&self) -> crate::Result<Objective> {
        Objective::by_name(&self.objective)
    }
}

#[derive(Debug, Clone)]
pub struct Validated {
    pub spec: ExperimentSpec,
    pub warnings: Vec<String>,
}

/// Parses a TOML key-value configuration, applies preset defaults and
/// checks every invariant, returning all problems found at once.
pub fn validate_config(raw: &str) -> Result<Validated, Vec<String>> {
    let table: toml::Table = raw
        .parse()
        .map_err(|e: toml::de::Error| vec![format!("parse error: {}", e.message())])?;
    spec_from_table(&table)
}

/// Parses a `key=value` override into a TOML value; bare words become strings.
pub fn parse_override(assignment: &str) -> Result<(String, toml::Value), String> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
    let key = key.trim().to_string();
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_usize(v: &toml::Value) -> Option<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Some(*i as usize),
        _ => None,
    }
}

fn as_f64_list(v: &toml::Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(as_f64).collect()
}

pub fn spec_from_table(table: &toml::Table) -> Result<Validated, Vec<String>> {
    let mut errors = Vec::new();
    let preset = match table.get("preset") {
        None => Preset::Custom,
        Some(toml::Value::String(s)) => match Preset::parse(s) {
            Ok(p) => p,
            Err(e) => return Err(vec![e]),
        },
        Some(_) => return Err(vec!["`preset` must be a string".into()]),
    };
    let mut spec = ExperimentSpec::preset(preset, "out");
    let cfg = &mut spec.config;
    let st = &mut spec.settings;

    for (key, value) in table {
        let bad = |what: &str| format!("`{key}` must be {what}, got {value}");
        macro_rules! set {
            ($target:expr, $conv:expr, $what:expr) => {
                match $conv(value) {
                    Some(v) => $target = v,
                    None => errors.push(bad($what)),
                }
            };
        }
        match key.as_str() {
            "preset" => {}
            "objective" => set!(
                spec.objective,
                |v: &toml::Value| v.as_str().map(String::from),
                "a string"
            ),
            "output_dir" => set!(
                spec.output_dir,
                |v: &toml::Value| v.as_str().map(PathBuf::from),
                "a string"
            ),
            "runs" => set!(spec.runs, as_usize, "a non-negative integer"),
            "dt" => set!(cfg.dt, as_f64, "a number"),
            "lambda" => set!(cfg.lambda, as_f64, "a number"),
            "sigma" => set!(cfg.sigma, as_f64, "a number"),
            "alpha" => set!(cfg.alpha, as_f64, "a number"),
            "tau" => set!(cfg.tau, |v| as_f64(v).map(Some), "a number"),
            "sigma_tilde" => set!(cfg.sigma_tilde, |v| as_f64(v).map(Some), "a number"),
            "init_std" => set!(cfg.init_std, as_f64, "a number"),
            "n_particles" => set!(cfg.n_particles, as_usize, "a non-negative integer"),
            "n_steps" => set!(cfg.n_steps, as_usize, "a non-negative integer"),
            "seed" => set!(
                cfg.seed,
                |v: &toml::Value| v.as_integer().and_then(|i| u64::try_from(i).ok()),
                "a non-negative integer"
            ),
            "coupled" => set!(cfg.coupled, |v: &toml::Value| v.as_bool(), "a boolean"),
            "init_mean" => set!(cfg.init_mean, as_f64_list, "an array of numbers"),
            "scheme" => match value.as_str().map(CustomScheme::parse) {
                Some(Ok(s)) => st.scheme = s,
                Some(Err(e)) => errors.push(e),
                None => errors.push(bad("a string")),
            },
            "success_radius" => set!(st.success_radius, as_f64, "a number"),
            "sigma_tilde_grid" => set!(st.sigma_tilde_grid, as_f64_list, "an array of numbers"),
            "gd_step" => set!(st.gd_step, as_f64, "a number"),
            "gd_steps" => set!(st.gd_steps, as_usize, "a non-negative integer"),
            "langevin_dt" => set!(st.langevin_dt, as_f64, "a number"),
            "langevin_steps" => set!(st.langevin_steps, as_usize, "a non-negative integer"),
            "anneal_scale" => set!(st.anneal_scale, as_f64, "a number"),
            "grid" => set!(st.grid, as_f64_list, "an array of numbers"),
            "seeds" => set!(st.seeds, as_usize, "a non-negative integer"),
            _ => errors.push(format!("unknown key `{key}`")),
        }
    }

    if cfg.coupled && !table.contains_key("sigma_tilde") {
        if let Some(tau) = cfg.tau {
            cfg.sigma_tilde = Some((tau / (2.0 * cfg.alpha)).sqrt());
        }
    }

    let obj = match Objective::by_name(&spec.objective) {
        Ok(o) => Some(o),
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    };
    if let Some(obj) = &obj {
        if !table.contains_key("init_mean") && cfg.init_mean.len() != obj.dim {
            cfg.init_mean = vec![cfg.init_mean[0]; obj.dim];
        }
    }

    let validation = cfg.check(obj.as_ref());
    errors.extend(validation.errors);
    let positive = |x: f64| x > 0.0 && x.is_finite();
    if spec.runs == 0 {
        errors.push("runs must be positive".into());
    }
    if !positive(st.success_radius) {
        errors.push("success_radius must be positive".into());
    }
    if !positive(st.gd_step) || !positive(st.langevin_dt) {
        errors.push("gd_step and langevin_dt must be positive".into());
    }
    if st.gd_steps == 0 || st.langevin_steps == 0 {
        errors.push("gd_steps and langevin_steps must be positive".into());
    }
    if !(st.anneal_scale > 0.0) {
        errors.push("anneal_scale must be positive".into());
    }
    if st.sigma_tilde_grid.is_empty() || st.sigma_tilde_grid.iter().any(|s| !(*s >= 0.0)) {
        errors.push("sigma_tilde_grid must be a non-empty list of non-negative widths".into());
    }
    let needs_sigma_tilde = matches!(preset, Preset::Fig2a | Preset::Fig4)
        || matches!(preset, Preset::Scaling(a) if a != Axis::Tau)
        || (preset == Preset::Custom && st.scheme == CustomScheme::Ch);
    if needs_sigma_tilde && cfg.sigma_tilde.is_none() {
        errors.push("this preset needs sigma_tilde".into());
    }
    let needs_tau = preset == Preset::Decompose
        || (preset == Preset::Custom
            && matches!(st.scheme, CustomScheme::Mms | CustomScheme::Triple));
    if needs_tau && cfg.tau.is_none() {
        errors.push("this preset needs tau".into());
    }
    let needs_coupling = preset == Preset::Decompose
        || (preset == Preset::Custom && st.scheme == CustomScheme::Triple);
    if needs_coupling && !cfg.coupled {
        errors.push("this preset needs coupled = true".into());
    }
    if let Preset::Scaling(_) = preset {
        if st.grid.len() < 4 {
            errors.push("scaling grid needs at least 4 values".into());
        }
        if st.seeds == 0 {
            errors.push("seeds must be positive".into());
        }
    }

    if errors.is_empty() {
        Ok(Validated {
            spec,
            warnings: validation.warnings,
        })
    } else {
        Err(errors)
    }
}
