use rayon::prelude::*;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

use super::output::{sha256_file, write_residual_csv, write_trajectory_csv};
use super::{CustomScheme, ExperimentSpec, Preset, Settings};
use crate::analysis::{
    coupled_triple_run, decompose_residual, median, scaling_sweep, ResidualRecord, ScalingReport,
    Triple,
};
use crate::baselines::{gd_run, langevin_run, AnnealSchedule};
use crate::cbo::{cbo_run, initial_point, RunRecord, Scheme, SchemeConfig};
use crate::hopping::{ch_run, mms_run};
use crate::objectives::Objective;
use crate::{dist, norm, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub output_dir: PathBuf,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn hash_of(&self, path: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|e| e.path == path)
            .map(|e| e.sha256.as_str())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub scheme: Scheme,
    pub sigma_tilde: Option<f64>,
    pub seeds: Vec<u64>,
    pub success_radius: f64,
    pub successes: usize,
    pub success_rate: f64,
    /// Runs that produced non-finite iterates.
    pub diverged: usize,
    /// `None` for diverged runs.
    pub final_distances: Vec<Option<f64>>,
    pub final_objectives: Vec<Option<f64>>,
    pub final_gradient_norms: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionRun {
    pub seed: u64,
    pub median_g_norm: f64,
    pub median_g1_norm: f64,
    pub median_g2_norm: f64,
    pub median_g3_norm: f64,
    pub max_reconstruction_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub preset: String,
    pub objective: String,
    pub base_seed: u64,
    pub runs: usize,
    pub config: SchemeConfig,
    pub settings: Settings,
    pub groups: Vec<GroupSummary>,
    pub decomposition: Vec<DecompositionRun>,
    pub scaling: Option<ScalingReport>,
}

struct Emitter {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Emitter {
    fn emit(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        write(&path)?;
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: sha256_file(&path)?,
            bytes: fs::metadata(&path)?.len(),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.emit(name, |p| write_json(p, value))
    }

    fn finish(self) -> Result<Manifest> {
        let manifest = Manifest {
            output_dir: self.dir,
            files: self.files,
        };
        write_json(&manifest.output_dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Runs the preset for seeds `base_seed + i` and writes trajectory CSVs,
/// `objective.json`, `summary.json` and `manifest.json` (which lists every
/// other file with its SHA-256).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(Manifest, Summary)> {
    let obj = spec.objective()?;
    fs::create_dir_all(&spec.output_dir)?;
    let mut out = Emitter {
        dir: spec.output_dir.clone(),
        files: Vec::new(),
    };
    out.json("objective.json", &obj)?;

    let cfg = &spec.config;
    let st = &spec.settings;
    let name = spec.preset.name();
    let mut summary = Summary {
        preset: name.clone(),
        objective: obj.name.clone(),
        base_seed: cfg.seed,
        runs: spec.runs,
        config: cfg.clone(),
        settings: st.clone(),
        groups: Vec::new(),
        decomposition: Vec::new(),
        scaling: None,
    };
    let runner = Runner { obj: &obj, spec };

    match spec.preset {
        Preset::Fig1 => summary
            .groups
            .push(runner.group(&mut out, &name, Scheme::Cbo, cfg)?),
        Preset::Fig2a => summary
            .groups
            .push(runner.group(&mut out, &name, Scheme::Ch, cfg)?),
        Preset::Fig2b => summary
            .groups
            .push(runner.group(&mut out, &name, Scheme::Gd, cfg)?),
        Preset::Fig2c => {
            summary
                .groups
                .push(runner.group(&mut out, &name, Scheme::Langevin, cfg)?)
        }
        Preset::Fig3Sweep => {
            for width in &st.sigma_tilde_grid {
                let mut c = cfg.clone();
                c.sigma_tilde = Some(*width);
                let label = format!("{name}-st{width}");
                summary
                    .groups
                    .push(runner.group(&mut out, &label, Scheme::Ch, &c)?);
            }
        }
        Preset::Fig4 => {
            for scheme in [Scheme::Cbo, Scheme::Ch, Scheme::Gd, Scheme::Langevin] {
                let label = format!("{name}-{}", scheme.as_str());
                summary
                    .groups
                    .push(runner.group(&mut out, &label, scheme, cfg)?);
            }
        }
        Preset::Decompose => runner.decompose(&mut out, &name, &mut summary)?,
        Preset::Scaling(axis) => {
            let report = scaling_sweep(axis, &obj, cfg, &st.grid, st.seeds)?;
            out.json(&format!("{name}.json"), &report)?;
            summary.scaling = Some(report);
        }
        Preset::Custom => match st.scheme {
            CustomScheme::Triple => runner.decompose(&mut out, &name, &mut summary)?,
            other => {
                let scheme = match other {
                    CustomScheme::Cbo => Scheme::Cbo,
                    CustomScheme::Ch => Scheme::Ch,
                    CustomScheme::Mms => Scheme::Mms,
                    CustomScheme::Gd => Scheme::Gd,
                    _ => Scheme::Langevin,
                };
                summary
                    .groups
                    .push(runner.group(&mut out, &name, scheme, cfg)?);
            }
        },
    }

    out.json("summary.json", &summary)?;
    Ok((out.finish()?, summary))
}

struct Runner<'a> {
    obj: &'a Objective,
    spec: &'a ExperimentSpec,
}

impl Runner<'_> {
    fn seeds(&self) -> Vec<u64> {
        (0..self.spec.runs as u64)
            .map(|i| self.spec.config.seed.wrapping_add(i))
            .collect()
    }

    /// Deterministic start for gradient descent run `i`: the mean, then
    /// +-0.5 along each axis in turn.
    fn gd_start(&self, i: usize) -> Vec<f64> {
        let mut x = self.spec.config.init_mean.clone();
        if i > 0 {
            let d = x.len();
            let axis = ((i - 1) / 2) % d;
            x[axis] += if i % 2 == 1 { -0.5 } else { 0.5 };
        }
        x
    }

    fn run_one(
        &self,
        scheme: Scheme,
        cfg: &SchemeConfig,
        index: usize,
        seed: u64,
    ) -> Result<RunRecord> {
        let st = &self.spec.settings;
        let mut c = cfg.clone();
        c.seed = seed;
        match scheme {
            Scheme::Cbo => cbo_run(self.obj, &c),
            Scheme::Ch => ch_run(self.obj, &c),
            Scheme::Mms => mms_run(self.obj, &c),
            Scheme::Gd => gd_run(self.obj, &self.gd_start(index), st.gd_step, st.gd_steps),
            Scheme::Langevin => langevin_run(
                self.obj,
                &initial_point(&c),
                st.langevin_dt,
                st.langevin_steps,
                AnnealSchedule::log(st.anneal_scale),
                seed,
            ),
            Scheme::ImplicitCh => Err(Error::InvalidInput(
                "implicit hopping runs only inside a coupled triple".into(),
            )),
        }
    }

    fn group(
        &self,
        out: &mut Emitter,
        label: &str,
        scheme: Scheme,
        cfg: &SchemeConfig,
    ) -> Result<GroupSummary> {
        let seeds = self.seeds();
        let results: Vec<Result<RunRecord>> = seeds
            .par_iter()
            .enumerate()
            .map(|(i, s)| self.run_one(scheme, cfg, i, *s))
            .collect();
        let mut records = Vec::with_capacity(results.len());
        for (seed, res) in seeds.iter().zip(results) {
            match res {
                Ok(r) => {
                    out.emit(&format!("{label}_seed{seed}.csv"), |p| {
                        write_trajectory_csv(p, &r)
                    })?;
                    records.push(Some(r));
                }
                Err(Error::NonFinite(_)) => records.push(None),
                Err(e) => return Err(e),
            }
        }
        Ok(self.summarize(
            label,
            scheme,
            cfg.sigma_tilde.filter(|_| scheme == Scheme::Ch),
            seeds,
            &records,
        ))
    }

    fn summarize(
        &self,
        label: &str,
        scheme: Scheme,
        sigma_tilde: Option<f64>,
        seeds: Vec<u64>,
        records: &[Option<RunRecord>],
    ) -> GroupSummary {
        let radius = self.spec.settings.success_radius;
        let xs = self.obj.minimizer.clone();
        let final_distances: Vec<Option<f64>> = records
            .iter()
            .map(|r| {
                r.as_ref()
                    .and_then(|r| xs.as_ref().map(|m| dist(r.last(), m)))
            })
            .collect();
        let successes = final_distances
            .iter()
            .filter(|d| d.is_some_and(|d| d <= radius))
            .count();
        GroupSummary {
            label: label.to_string(),
            scheme,
            sigma_tilde,
            success_radius: radius,
            successes,
            success_rate: successes as f64 / seeds.len().max(1) as f64,
            diverged: records.iter().filter(|r| r.is_none()).count(),
            final_distances,
            final_objectives: records
                .iter()
                .map(|r| r.as_ref().map(|r| *r.objective_values.last().unwrap()))
                .collect(),
            final_gradient_norms: records
                .iter()
                .map(|r| r.as_ref().map(|r| norm(&self.obj.grad(r.last()))))
                .collect(),
            seeds,
        }
    }

    fn decompose(&self, out: &mut Emitter, label: &str, summary: &mut Summary) -> Result<()> {
        let cfg = &self.spec.config;
        let tau = cfg
            .tau
            .ok_or_else(|| Error::InvalidInput("decomposition needs tau".into()))?;
        let seeds = self.seeds();
        let results: Vec<Result<(Triple, ResidualRecord)>> = seeds
            .par_iter()
            .map(|s| {
                let mut c = cfg.clone();
                c.seed = *s;
                let triple = coupled_triple_run(self.obj, &c)?;
                let record = decompose_residual(&triple, self.obj, tau)?;
                Ok((triple, record))
            })
            .collect();
        let mut cbo_runs = Vec::with_capacity(seeds.len());
        for (seed, res) in seeds.iter().zip(results) {
            let (triple, record) = res?;
            out.emit(&format!("{label}_seed{seed}.csv"), |p| {
                write_residual_csv(p, &record)
            })?;
            for run in [&triple.cbo, &triple.ch, &triple.ich] {
                let name = format!("{label}-{}_seed{seed}.csv", run.scheme.as_str());
                out.emit(&name, |p| write_trajectory_csv(p, run))?;
            }
            let med = |f: fn(&crate::analysis::ResidualStep) -> f64| {
                median(&record.steps.iter().map(f).collect::<Vec<_>>())
            };
            summary.decomposition.push(DecompositionRun {
                seed: *seed,
                median_g_norm: record.median_g_norm(),
                median_g1_norm: med(|s| s.g1_norm),
                median_g2_norm: med(|s| s.g2_norm),
                median_g3_norm: med(|s| s.g3_norm),
                max_reconstruction_residual: record.max_reconstruction_residual(),
            });
            cbo_runs.push(Some(triple.cbo));
        }
        summary.groups.push(self.summarize(
            &format!("{label}-cbo"),
            Scheme::Cbo,
            None,
            seeds,
            &cbo_runs,
        ));
        Ok(())
    }
}
