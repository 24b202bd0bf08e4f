use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use langevin_core::harness::{
    emit_plots, run_experiment, write_report, ExperimentConfig, OutputConfig, Overrides, PlanMode,
    SamplerKind,
};
use langevin_core::overdamped::plan_overdamped;
use langevin_core::potentials::audit_constants;
use langevin_core::underdamped::plan_underdamped;
use langevin_core::{Benchmark, Constants, Error, Potential, PotentialSpec};

/// Langevin MCMC experiments: planning, sampling, couplings, step-size sweeps.
///
/// Exit status: 0 success, 2 a reported check failed, 1 usage or runtime error.
#[derive(Parser)]
#[command(name = "langevin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Step size and iteration count from the convergence theorems.
    Plan(PlanArgs),
    /// Run an overdamped or underdamped sampler and track W1 to the target.
    Sample {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Coupled-process experiments (reflection / switched coupling).
    Couple {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Discretization-error sweeps over a step-size grid.
    Sweep {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run whatever experiment a config file describes.
    Run {
        config: PathBuf,
        /// Defaults to the config value, then $LANGEVIN_OUT_DIR, then ./langevin-out.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Render SVG plots from a report JSON.
    Plot {
        report: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Spot-check a potential's declared constants by random pairs.
    Audit {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 100_000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Od,
    Ud,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanKind {
    Od,
    Ud,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Quadratic,
    Mixture,
    DoubleWell,
}

#[derive(Args)]
struct TargetArgs {
    /// Read the potential from this experiment config instead of a preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Quadratic)]
    potential: Preset,
    #[arg(long, default_value_t = 2)]
    dim: usize,
}

impl TargetArgs {
    fn spec(&self) -> Result<PotentialSpec, Error> {
        if let Some(path) = &self.config {
            return Ok(ExperimentConfig::load(path)?.potential);
        }
        Ok(preset(self.potential, self.dim))
    }
}

fn preset(p: Preset, dim: usize) -> PotentialSpec {
    match p {
        Preset::Quadratic => PotentialSpec::Quadratic {
            dim,
            m: 1.0,
            radius: 1.0,
        },
        Preset::Mixture => {
            let mut a = vec![0.0; dim];
            let mut b = vec![0.0; dim];
            a[0] = 1.0;
            b[0] = -1.0;
            PotentialSpec::GaussianMixture {
                dim,
                centers: vec![a, b],
                variance: 1.0,
                weights: None,
            }
        }
        Preset::DoubleWell => PotentialSpec::SmoothedDoubleWell {
            dim,
            separation: 2.0,
            smoothness: 1.0,
        },
    }
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, value_enum, default_value_t = PlanKind::Both)]
    kind: PlanKind,
    /// Smoothness L.
    #[arg(long = "smoothness", short = 'L', default_value_t = 1.0)]
    smoothness: f64,
    /// Outer strong convexity m.
    #[arg(long = "convexity", short = 'm', default_value_t = 1.0)]
    convexity: f64,
    /// Nonconvexity radius R.
    #[arg(long = "radius", short = 'R', default_value_t = 1.0)]
    radius: f64,
    #[arg(long, short = 'd', default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long)]
    practical_scale: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Base experiment config (TOML); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    potential: Option<Preset>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Use the planner's δ and n verbatim.
    #[arg(long)]
    theorem: bool,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    substep: Option<f64>,
    #[arg(long)]
    projections: Option<usize>,
    #[arg(long)]
    practical_scale: Option<f64>,
    /// Friction constant for underdamped runs.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Defaults to the config value, then $LANGEVIN_OUT_DIR, then ./langevin-out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    no_plots: bool,
}

impl RunArgs {
    fn config(&self, sampler: SamplerKind) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig {
                name: default_name(sampler).into(),
                sampler,
                seed: 0,
                ensemble: 1000,
                epsilon: 0.1,
                mode: PlanMode::Practical,
                potential: preset(
                    self.potential.unwrap_or(Preset::Quadratic),
                    self.dim.unwrap_or(2),
                ),
                output: OutputConfig::default(),
                overrides: Overrides::default(),
            },
        };
        cfg.sampler = sampler;
        if self.config.is_some() && (self.potential.is_some() || self.dim.is_some()) {
            cfg.potential = preset(
                self.potential.unwrap_or(Preset::Quadratic),
                self.dim.unwrap_or(2),
            );
        }
        if let Some(v) = &self.name {
            cfg.name = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.ensemble {
            cfg.ensemble = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if self.theorem {
            cfg.mode = PlanMode::Theorem;
        }
        let o = &mut cfg.overrides;
        o.delta = self.delta.or(o.delta);
        o.n = self.n.or(o.n);
        o.substep = self.substep.or(o.substep);
        o.projections = self.projections.or(o.projections);
        o.practical_scale = self.practical_scale.or(o.practical_scale);
        o.c = self.c.or(o.c);
        o.horizon = self.horizon.or(o.horizon);
        if let Some(d) = &self.out_dir {
            cfg.output.dir = Some(d.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_name(s: SamplerKind) -> &'static str {
    match s {
        SamplerKind::Od => "sample-od",
        SamplerKind::Ud => "sample-ud",
        SamplerKind::CoupledOd => "couple-od",
        SamplerKind::CoupledUd => "couple-ud",
        SamplerKind::DiscretizationOd => "sweep-od",
        SamplerKind::DiscretizationUd => "sweep-ud",
    }
}

fn execute(cfg: ExperimentConfig, plots: bool) -> Result<i32, Error> {
    let report = run_experiment(&cfg)?;
    let dir = cfg.output_dir();
    for path in write_report(&report, &dir)? {
        println!("wrote {}", path.display());
    }
    if plots {
        let out = emit_plots(&dir.join(format!("{}.json", cfg.name)), None)?;
        for f in out.files {
            println!("wrote {}", f.display());
        }
        for w in out.warnings {
            eprintln!("warning: {w}");
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &report.planner {
        println!(
            "planner: feasible={} delta={:e} n={}",
            p.feasible,
            p.delta,
            p.n.map(|n| n.to_string())
                .unwrap_or_else(|| "overflow".into())
        );
    }
    for c in &report.checks {
        println!(
            "{} {}: value {:.6e} (threshold {:.6e}) — {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold,
            c.detail
        );
    }
    Ok(report.exit_code())
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Plan(a) => {
            let c = Constants::new(a.smoothness, a.convexity, a.radius)?;
            let mut out = serde_json::Map::new();
            if matches!(a.kind, PlanKind::Od | PlanKind::Both) {
                let mut p = plan_overdamped(&c, a.epsilon, a.dim)?;
                if let Some(s) = a.practical_scale {
                    p = p.with_practical_scale(s)?;
                }
                out.insert("overdamped".into(), serde_json::to_value(&p)?);
            }
            if matches!(a.kind, PlanKind::Ud | PlanKind::Both) {
                let mut p = plan_underdamped(&c, a.epsilon, a.dim)?;
                if let Some(s) = a.practical_scale {
                    p = p.with_practical_scale(s)?;
                }
                out.insert("underdamped".into(), serde_json::to_value(&p)?);
            }
            emit_json(&serde_json::to_string_pretty(&out)?);
            Ok(0)
        }
        Command::Sample { which, run } => {
            let s = match which {
                Which::Od => SamplerKind::Od,
                Which::Ud => SamplerKind::Ud,
            };
            execute(run.config(s)?, !run.no_plots)
        }
        Command::Couple { which, run } => {
            let s = match which {
                Which::Od => SamplerKind::CoupledOd,
                Which::Ud => SamplerKind::CoupledUd,
            };
            execute(run.config(s)?, !run.no_plots)
        }
        Command::Sweep { which, run } => {
            let s = match which {
                Which::Od => SamplerKind::DiscretizationOd,
                Which::Ud => SamplerKind::DiscretizationUd,
            };
            execute(run.config(s)?, !run.no_plots)
        }
        Command::Run {
            config,
            out_dir,
            no_plots,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(d) = out_dir {
                cfg.output.dir = Some(d);
            }
            execute(cfg, !no_plots)
        }
        Command::Plot { report, out_dir } => {
            let out = emit_plots(&report, out_dir.as_deref())?;
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            Ok(0)
        }
        Command::Audit {
            target,
            pairs,
            seed,
            tolerance,
        } => {
            let b = Benchmark::new(target.spec()?)?;
            let r = audit_constants(&b, pairs, seed, tolerance)?;
            emit_json(&serde_json::to_string_pretty(&r)?);
            eprintln!(
                "{} ({}, d = {}): {}",
                b.name(),
                if r.passed {
                    "constants consistent"
                } else {
                    "violations found"
                },
                b.dim(),
                r.violations.len()
            );
            Ok(if r.passed { 0 } else { 2 })
        }
    }
}

/// Prints to stdout, tolerating a closed pipe (`langevin plan | head`).
fn emit_json(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
