use std::path::PathBuf;
use std::process::ExitCode;

use cbo_core::harness::{parse_override, run_experiment, spec_from_table, Validated};
use cbo_core::objectives::validate_assumptions;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cbo",
    version,
    about = "Consensus-based optimization and consensus hopping experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset and write CSV/JSON outputs.
    Run(Common),
    /// Run coupled CBO / hopping / implicit hopping triples and decompose the residual.
    Decompose(Common),
    /// Run a scaling sweep along one axis.
    Scaling {
        /// n_particles, lambda_gap, sigma_sqrt_dt or tau.
        #[arg(long)]
        axis: String,
        #[command(flatten)]
        common: Common,
    },
    /// Check a configuration without running it, and test the objective's
    /// registered constants by sampling.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Random pairs drawn per assumption check.
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        /// Skip the assumption checks.
        #[arg(long)]
        config_only: bool,
    },
    /// List presets and registered objectives.
    List,
}

#[derive(Args)]
struct Common {
    /// TOML file of key = value settings; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    objective: Option<String>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory, default out/<preset>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a single key, e.g. --set tau=0.05 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Invalid(Vec<String>),
    Runtime(String),
}

impl Common {
    fn resolve(&self, forced_preset: Option<String>) -> Result<Validated, Failure> {
        let mut table = match &self.config {
            Some(path) => {
                let raw = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Invalid(vec![format!("{}: {e}", path.display())]))?;
                raw.parse::<toml::Table>().map_err(|e| {
                    Failure::Invalid(vec![format!("{}: {}", path.display(), e.message())])
                })?
            }
            None => toml::Table::new(),
        };
        let mut put = |k: &str, v: toml::Value| {
            table.insert(k.to_string(), v);
        };
        if let Some(p) = forced_preset.or_else(|| self.preset.clone()) {
            put("preset", p.into());
        }
        if let Some(o) = &self.objective {
            put("objective", o.clone().into());
        }
        if let Some(s) = self.seed {
            let s = i64::try_from(s)
                .map_err(|_| Failure::Invalid(vec!["seed must fit in i64".into()]))?;
            put("seed", s.into());
        }
        if let Some(r) = self.runs {
            put("runs", (r as i64).into());
        }
        if let Some(o) = &self.out {
            put("output_dir", o.display().to_string().into());
        }
        let mut errors = Vec::new();
        for o in &self.overrides {
            match parse_override(o) {
                Ok((k, v)) => put(&k, v),
                Err(e) => errors.push(e),
            }
        }
        if !errors.is_empty() {
            return Err(Failure::Invalid(errors));
        }
        let mut validated = spec_from_table(&table).map_err(Failure::Invalid)?;
        if !table.contains_key("output_dir") {
            validated.spec.output_dir = PathBuf::from("out").join(validated.spec.preset.name());
        }
        Ok(validated)
    }
}

fn execute(validated: Validated) -> Result<(), Failure> {
    for w in &validated.warnings {
        eprintln!("warning: {w}");
    }
    let spec = &validated.spec;
    let (manifest, summary) = run_experiment(spec).map_err(|e| Failure::Runtime(e.to_string()))?;
    for g in &summary.groups {
        println!(
            "{}: {}/{} within {} of x* ({} diverged)",
            g.label,
            g.successes,
            g.seeds.len(),
            g.success_radius,
            g.diverged
        );
    }
    for r in &summary.decomposition {
        println!(
            "seed {}: median |g| {:.3e}, max reconstruction residual {:.3e}",
            r.seed, r.median_g_norm, r.max_reconstruction_residual
        );
    }
    if let Some(s) = &summary.scaling {
        println!(
            "{}: slope {:.3}, 90% CI [{:.3}, {:.3}], floor error {:.3e}",
            s.swept_parameter, s.fitted_slope, s.slope_ci.0, s.slope_ci.1, s.floor_error
        );
    }
    println!(
        "wrote {} files to {}",
        manifest.files.len() + 1,
        manifest.output_dir.display()
    );
    Ok(())
}

fn validate(common: &Common, samples: usize, config_only: bool) -> Result<(), Failure> {
    let validated = common.resolve(None)?;
    for w in &validated.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "configuration ok: preset {}, objective {}",
        validated.spec.preset.name(),
        validated.spec.objective
    );
    if config_only {
        return Ok(());
    }
    let obj = validated
        .spec
        .objective()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let report = validate_assumptions(&obj, &obj.test_box, samples, validated.spec.config.seed)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    for c in &report.checks {
        println!(
            "{:<14} {} worst {:.3e}",
            c.condition,
            if c.passed { "ok  " } else { "FAIL" },
            c.worst
        );
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Invalid(vec![format!(
            "objective `{}` violates its registered constants",
            obj.name
        )]))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => c.resolve(None).and_then(execute),
        Command::Decompose(c) => c.resolve(Some("decompose".into())).and_then(execute),
        Command::Scaling { axis, common } => common
            .resolve(Some(format!("scaling-{axis}")))
            .and_then(execute),
        Command::Validate {
            common,
            samples,
            config_only,
        } => validate(&common, samples, config_only),
        Command::List => {
            println!("presets:");
            for p in cbo_core::harness::Preset::all() {
                println!("  {}", p.name());
            }
            println!("objectives:");
            for o in cbo_core::objectives::Objective::registered_names() {
                println!("  {o}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(errors)) => {
            for e in errors {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
