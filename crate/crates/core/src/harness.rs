//! Experiment runner: TOML config in, JSON report + CSV traces + SVG plots out.
//!
//! ```toml
//! name = "od-quadratic"
//! sampler = "od"
//! seed = 7
//! ensemble = 2000
//! epsilon = 0.1
//!
//! [potential]
//! kind = "quadratic"
//! dim = 2
//! m = 1.0
//! radius = 1.0
//!
//! [overrides]
//! delta = 0.01
//! n = 2000
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coupling_sim::{
    od_contraction_rate, od_coupling_experiment, ud_coupling_experiment, CouplingConstants,
    UdCouplingConfig,
};
use crate::discretization_lab::{
    od_discretization_sweep_with, ud_freeze_bound, ud_freeze_sweep, ScalingReport, SweepOptions,
};
use crate::distance_fn::{DistanceFn, DistanceFnParams};
use crate::error::{Error, Result};
use crate::metrics::{second_moment_check, EmpiricalMeasure, Method, SlicedReference};
use crate::overdamped::{plan_overdamped, OdEnsemble};
use crate::persist::atomic_write;
use crate::potentials::{Benchmark, Potential, PotentialSpec};
use crate::underdamped::{plan_underdamped, KernelCoefficients, UdEnsemble, DEFAULT_C};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LANGEVIN_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "langevin-out";
/// Largest `iterations × ensemble` a sampling run will execute.
const DEFAULT_MAX_WORK: f64 = 2e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Od,
    Ud,
    CoupledOd,
    CoupledUd,
    DiscretizationOd,
    DiscretizationUd,
}

/// `theorem`: step size and iteration count straight from the planner.
/// `practical`: the planner's step scaled by `practical_scale`, or explicit
/// `delta`/`n` overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    Theorem,
    #[default]
    Practical,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Falls back to `$LANGEVIN_OUT_DIR`, then `./langevin-out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substep: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub practical_scale: Option<f64>,
    /// Friction constant of the underdamped dynamics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<u64>,
    /// Snapshots taken along a sampling run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_work: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub sampler: SamplerKind,
    pub seed: u64,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub mode: PlanMode,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub overrides: Overrides,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_ensemble() -> usize {
    1000
}
fn default_epsilon() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config {
            path: e
                .span()
                .map(|s| format!("byte {}..{}", s.start, s.end))
                .unwrap_or_default(),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { path: at, message } => Error::Config {
                path: format!("{}: {at}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            path: String::new(),
            message: e.to_string(),
        })
    }

    /// Checks sampler-specific fields; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: &str| {
            Err(Error::Config {
                path: path.into(),
                message: message.into(),
            })
        };
        if self.ensemble == 0 {
            return bad("ensemble", "must be at least 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", "must be positive");
        }
        let dim = self.potential_dim();
        let o = &self.overrides;
        if let Some(x0) = &o.x0 {
            if x0.len() != dim {
                return bad("overrides.x0", "length must equal the potential dimension");
            }
        }
        for (name, v) in [
            ("overrides.delta", o.delta),
            ("overrides.substep", o.substep),
            ("overrides.practical_scale", o.practical_scale),
            ("overrides.c", o.c),
            ("overrides.horizon", o.horizon),
            ("overrides.max_work", o.max_work),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(name, "must be positive and finite");
                }
            }
        }
        if let Some(d) = &o.deltas {
            if d.is_empty() || d.windows(2).any(|w| w[1] >= w[0]) || d.iter().any(|v| !(*v > 0.0)) {
                return bad(
                    "overrides.deltas",
                    "must be a nonempty, positive, strictly decreasing list",
                );
            }
        }
        if o.record_every == Some(0) {
            return bad("overrides.record_every", "must be at least 1");
        }
        if o.record_points == Some(0) {
            return bad("overrides.record_points", "must be at least 1");
        }
        if self.mode == PlanMode::Theorem && (o.delta.is_some() || o.n.is_some()) {
            return bad(
                "mode",
                "theorem mode takes δ and n from the planner; drop overrides.delta/n",
            );
        }
        if matches!(
            self.sampler,
            SamplerKind::CoupledOd | SamplerKind::CoupledUd
        ) && self.potential.build()?.sample_exact(1, 0).is_none()
        {
            return bad(
                "potential",
                "coupling experiments need a target with an exact sampler",
            );
        }
        Ok(())
    }

    fn potential_dim(&self) -> usize {
        match &self.potential {
            PotentialSpec::Quadratic { dim, .. }
            | PotentialSpec::GaussianMixture { dim, .. }
            | PotentialSpec::SmoothedDoubleWell { dim, .. } => *dim,
        }
    }

    /// Output directory: config, then `$LANGEVIN_OUT_DIR`, then `./langevin-out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerSummary {
    pub kind: String,
    pub mode: PlanMode,
    pub theorem_delta: f64,
    pub theorem_n: Option<u64>,
    pub log_n: f64,
    pub feasible: bool,
    /// Step size and iteration count actually used.
    pub delta: f64,
    pub n: Option<u64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    /// Estimator that produced `y`.
    pub method: String,
    /// Sample count behind each `y` value.
    pub samples: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub std_error: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<PlannerSummary>,
    pub executed: bool,
    pub series: Vec<Series>,
    pub checks: Vec<Check>,
    pub passed: bool,
    /// Gradient evaluations spent (approximate for coupled runs).
    pub steps: u64,
    pub wall_clock_seconds: f64,
    pub version: String,
    pub warnings: Vec<String>,
    /// Experiment-specific raw output.
    pub details: serde_json::Value,
}

impl ExperimentReport {
    /// Process exit code: 0 when every check passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

/// Exit code for a finished (or failed) run: 0 pass, 2 failed check, 1 error.
pub fn exit_code(result: &Result<ExperimentReport>) -> i32 {
    match result {
        Ok(r) => r.exit_code(),
        Err(_) => 1,
    }
}

struct Outcome {
    planner: Option<PlannerSummary>,
    executed: bool,
    series: Vec<Series>,
    checks: Vec<Check>,
    steps: u64,
    warnings: Vec<String>,
    details: serde_json::Value,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let potential = config.potential.build()?;
    let start = Instant::now();
    let out = match config.sampler {
        SamplerKind::Od | SamplerKind::Ud => run_sampling(config, &potential)?,
        SamplerKind::CoupledOd => run_coupled_od(config, &potential)?,
        SamplerKind::CoupledUd => run_coupled_ud(config, &potential)?,
        SamplerKind::DiscretizationOd => run_sweep_od(config, &potential)?,
        SamplerKind::DiscretizationUd => run_sweep_ud(config, &potential)?,
    };
    Ok(ExperimentReport {
        config: config.clone(),
        planner: out.planner,
        executed: out.executed,
        passed: out.checks.iter().all(|c| c.passed),
        series: out.series,
        checks: out.checks,
        steps: out.steps,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        warnings: out.warnings,
        details: out.details,
    })
}

fn default_x0(potential: &Benchmark) -> Vec<f64> {
    let mut x = vec![0.0; potential.dim()];
    x[0] = potential.constants().radius;
    x
}

fn reference_samples(potential: &Benchmark, n: usize, seed: u64) -> Option<Vec<f64>> {
    match potential.spec() {
        PotentialSpec::GaussianMixture { .. } => potential.rejection_sample(n, seed),
        _ => potential.sample_exact(n, seed),
    }
}

fn run_sampling(config: &ExperimentConfig, potential: &Benchmark) -> Result<Outcome> {
    let c = potential.constants();
    let d = potential.dim();
    let o = &config.overrides;
    let ud = config.sampler == SamplerKind::Ud;
    let scale = o.practical_scale.unwrap_or(1.0);
    let (mut summary, plan_step, plan_n) = if ud {
        let p = plan_underdamped(&c, config.epsilon, d)?;
        let s = if config.mode == PlanMode::Practical {
            p.clone().with_practical_scale(scale)?
        } else {
            p.clone()
        };
        (
            summary_of(
                "underdamped",
                config.mode,
                p.delta,
                p.n,
                p.log_n,
                p.feasible,
                &p.note,
            ),
            s.step(),
            s.iterations(),
        )
    } else {
        let p = plan_overdamped(&c, config.epsilon, d)?;
        let s = if config.mode == PlanMode::Practical {
            p.clone().with_practical_scale(scale)?
        } else {
            p.clone()
        };
        (
            summary_of(
                "overdamped",
                config.mode,
                p.delta,
                p.n,
                p.log_n,
                p.feasible,
                &p.note,
            ),
            s.step(),
            s.iterations(),
        )
    };
    let delta = o.delta.unwrap_or(plan_step);
    let n = o.n.or(plan_n);
    summary.delta = delta;
    summary.n = n;
    let mut warnings = Vec::new();
    let empty = |summary, warnings| Outcome {
        planner: Some(summary),
        executed: false,
        series: Vec::new(),
        checks: Vec::new(),
        steps: 0,
        warnings,
        details: serde_json::Value::Null,
    };
    if config.mode == PlanMode::Theorem && !summary.feasible {
        warnings
            .push("planner reports the theorem's parameters as infeasible; nothing was run".into());
        return Ok(empty(summary, warnings));
    }
    let Some(n) = n else {
        warnings.push("iteration count does not fit in 64 bits; nothing was run".into());
        return Ok(empty(summary, warnings));
    };
    let max_work = o.max_work.unwrap_or(DEFAULT_MAX_WORK);
    if n as f64 * config.ensemble as f64 > max_work {
        warnings.push(format!(
            "n·ensemble = {:e} exceeds the work budget {max_work:e}; nothing was run",
            n as f64 * config.ensemble as f64
        ));
        return Ok(empty(summary, warnings));
    }

    let x0 = o.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let reference = match reference_samples(
        potential,
        o.reference_samples.unwrap_or(100_000),
        config.seed,
    ) {
        Some(r) => Some(SlicedReference::new(
            &EmpiricalMeasure::new(r, d)?,
            o.projections.unwrap_or(128),
            config.seed,
            65_536,
        )?),
        None => {
            warnings.push("no direct sampler for this target; sliced-W1 series skipped".into());
            None
        }
    };
    let bootstrap = o.bootstrap.unwrap_or(25);
    let points = o.record_points.unwrap_or(20).min(n.max(1) as usize);
    let checkpoints: Vec<u64> = (0..=points).map(|k| n * k as u64 / points as u64).collect();

    let c_fric = o.c.unwrap_or(DEFAULT_C);
    let mut od = (!ud)
        .then(|| OdEnsemble::new(&x0, config.ensemble, config.seed))
        .transpose()?;
    let mut ue = ud
        .then(|| UdEnsemble::new(&x0, config.ensemble, config.seed))
        .transpose()?;
    let kernel = if ud {
        Some(KernelCoefficients::for_potential(&c, delta, c_fric)?)
    } else {
        None
    };
    if !ud && !(delta < 1.0) {
        return Err(Error::Config {
            path: "overrides.delta".into(),
            message: format!("step size must lie in (0, 1), got {delta}"),
        });
    }
    let mut w1 = Series {
        name: "sliced_w1".into(),
        x_label: "iteration".into(),
        y_label: "sliced W1 to target".into(),
        log_x: false,
        log_y: true,
        method: "sliced".into(),
        samples: config.ensemble,
        x: vec![],
        y: vec![],
        std_error: vec![],
        slope: None,
    };
    let mut moment = Series {
        name: "mean_sq_norm".into(),
        x_label: "iteration".into(),
        y_label: "E|x|^2".into(),
        log_x: false,
        log_y: false,
        method: "ensemble-mean".into(),
        samples: config.ensemble,
        ..w1.clone()
    };
    let mut done = 0u64;
    let mut last = None;
    for &cp in &checkpoints {
        let todo = cp - done;
        if let Some(e) = od.as_mut() {
            e.advance(potential, delta, todo)?;
        }
        if let Some(e) = ue.as_mut() {
            e.advance(potential, kernel.as_ref().unwrap(), todo)?;
        }
        done = cp;
        let pos = od
            .as_ref()
            .map(|e| e.positions())
            .or_else(|| ue.as_ref().map(|e| e.positions()))
            .unwrap();
        let meas = EmpiricalMeasure::new(pos, d)?;
        if let Some(r) = &reference {
            let est = r.distance(&meas, bootstrap, config.seed ^ cp)?;
            debug_assert_eq!(est.method, Method::Sliced);
            w1.x.push(cp as f64);
            w1.y.push(est.value);
            w1.std_error.push(est.std_error.unwrap_or(0.0));
        }
        let smc = second_moment_check(&meas, potential)?;
        moment.x.push(cp as f64);
        moment.y.push(smc.mean_sq_norm);
        moment.std_error.push(smc.std_error);
        last = Some(smc);
    }
    let mut checks = Vec::new();
    if ud {
        let smc = last.unwrap();
        checks.push(Check {
            name: "second_moment_bound".into(),
            passed: smc.passed,
            value: smc.mean_sq_norm,
            threshold: smc.bound + 3.0 * smc.std_error,
            detail: "E|x|^2 <= 2d/m + 18R^2 + 3 SE at the final iterate".into(),
        });
        if let Some(e) = &ue {
            if e.clamp_count() > 0 {
                warnings.push(format!(
                    "{} kernel steps clamped a Cholesky pivot",
                    e.clamp_count()
                ));
            }
        }
    }
    let mut series = vec![moment];
    if !w1.x.is_empty() {
        series.insert(0, w1);
    }
    Ok(Outcome {
        planner: Some(summary),
        executed: true,
        series,
        checks,
        steps: n * config.ensemble as u64,
        warnings,
        details: serde_json::json!({ "delta": delta, "n": n, "x0": x0 }),
    })
}

fn summary_of(
    kind: &str,
    mode: PlanMode,
    delta: f64,
    n: Option<u64>,
    log_n: f64,
    feasible: bool,
    note: &str,
) -> PlannerSummary {
    PlannerSummary {
        kind: kind.into(),
        mode,
        theorem_delta: delta,
        theorem_n: n,
        log_n,
        feasible,
        delta,
        n,
        note: note.into(),
    }
}

fn run_coupled_od(config: &ExperimentConfig, potential: &Benchmark) -> Result<Outcome> {
    let c = potential.constants();
    let o = &config.overrides;
    let x0 = o.x0.clone().unwrap_or_else(|| default_x0(potential));
    let ys = potential
        .sample_exact(config.ensemble, config.seed)
        .expect("validated");
    let f = DistanceFn::new(DistanceFnParams::new(
        c.smoothness / 4.0,
        c.radius.max(1e-6),
    )?)?;
    let substep = o.substep.or(o.delta).unwrap_or(1e-3);
    let horizon = o.horizon.unwrap_or(5.0);
    let steps = (horizon / substep).round() as u64;
    let record_every = o.record_every.unwrap_or((steps / 100).max(1));
    let s = od_coupling_experiment(
        potential,
        &x0,
        &ys,
        &f,
        substep,
        steps,
        record_every,
        config.seed,
    )?;
    let rate = od_contraction_rate(&c);
    let mut checks = vec![Check {
        name: "contraction_slope_negative".into(),
        passed: s.fitted_rate.is_some_and(|r| r < 0.0),
        value: s.fitted_rate.unwrap_or(f64::NAN),
        threshold: 0.0,
        detail: format!(
            "least-squares slope of log E f(r_t) over {} points",
            s.fit_points
        ),
    }];
    if matches!(potential.spec(), PotentialSpec::Quadratic { .. }) {
        checks.push(Check {
            name: "contraction_rate_vs_theory".into(),
            passed: s.fitted_rate.is_some_and(|r| -r >= 0.25 * rate),
            value: s.fitted_rate.map(|r| -r).unwrap_or(f64::NAN),
            threshold: 0.25 * rate,
            detail: "fitted decay rate >= 0.25 e^{-LR^2/4} min(4/R^2, m/2)".into(),
        });
    }
    Ok(Outcome {
        planner: None,
        executed: true,
        series: vec![
            Series {
                name: "mean_f_distance".into(),
                x_label: "time".into(),
                y_label: "E f(|x_t - y_t|)".into(),
                log_x: false,
                log_y: true,
                method: "coupled-ensemble-mean".into(),
                samples: s.pairs,
                x: s.times.clone(),
                y: s.mean_f.clone(),
                std_error: s.std_error.clone(),
                slope: s.fitted_rate,
            },
            Series {
                name: "coalesced_fraction".into(),
                x_label: "time".into(),
                y_label: "fraction coalesced".into(),
                log_x: false,
                log_y: false,
                method: "coupled-ensemble-mean".into(),
                samples: s.pairs,
                x: s.times.clone(),
                y: s.coalesced_fraction.clone(),
                std_error: vec![0.0; s.times.len()],
                slope: None,
            },
        ],
        checks,
        steps: 2 * steps * config.ensemble as u64,
        warnings: Vec::new(),
        details: serde_json::json!({ "theory_rate": rate, "x0": x0, "substep": substep }),
    })
}

fn run_coupled_ud(config: &ExperimentConfig, potential: &Benchmark) -> Result<Outcome> {
    let o = &config.overrides;
    let c = o.c.unwrap_or(5.0);
    let consts = CouplingConstants::new(&potential.constants(), c)?;
    let delta = o.delta.unwrap_or(0.5);
    let substep = o.substep.unwrap_or(delta / 20.0);
    let horizon = o.horizon.unwrap_or(2.5 * consts.t_sync);
    let record_every = o
        .record_every
        .unwrap_or(((consts.t_sync / (20.0 * delta)).ceil() as u64).max(1));
    let cfg = UdCouplingConfig {
        x0: o.x0.clone().unwrap_or_else(|| default_x0(potential)),
        c,
        delta,
        substep,
        horizon,
        record_every,
        trajectories: config.ensemble,
        seed: config.seed,
    };
    let r = ud_coupling_experiment(potential, &cfg)?;
    let mut warnings = Vec::new();
    if c != DEFAULT_C {
        warnings.push(format!(
            "friction constant c = {c} instead of {DEFAULT_C} to keep T_sync simulable"
        ));
    }
    let margin = r.worst_increase_margin();
    let checks = vec![
        Check {
            name: "jump_nonpositive".into(),
            passed: r.jump_violations.is_empty(),
            value: r.jump_violations.len() as f64,
            threshold: 0.0,
            detail: format!("{} synchronous-phase ends checked", r.sync_phase_ends),
        },
        Check {
            name: "reflection_ball".into(),
            passed: r.ball_violations == 0,
            value: r.ball_violations as f64,
            threshold: 0.0,
            detail: "mu = 1 states inside the sqrt(5) R ball".into(),
        },
        Check {
            name: "lyapunov_nonincreasing".into(),
            passed: margin <= 0.0,
            value: margin,
            threshold: 0.0,
            detail: "max_k E L(t_{k+1}) - max(E L(t_k), floor) - 3 SE".into(),
        },
    ];
    let series = vec![Series {
        name: "mean_lyapunov".into(),
        x_label: "time".into(),
        y_label: "E L(theta_t)".into(),
        log_x: false,
        log_y: false,
        method: "coupled-ensemble-mean".into(),
        samples: r.trajectories,
        x: r.times.clone(),
        y: r.mean_lyapunov.clone(),
        std_error: r.std_error.clone(),
        slope: None,
    }];
    let steps = (horizon / substep) as u64 * 2 * config.ensemble as u64;
    Ok(Outcome {
        planner: None,
        executed: true,
        series,
        checks,
        steps,
        warnings,
        details: serde_json::to_value(&r)?,
    })
}

fn sweep_series(name: &str, y_label: &str, r: &ScalingReport) -> Series {
    Series {
        name: name.into(),
        x_label: "delta".into(),
        y_label: y_label.into(),
        log_x: true,
        log_y: true,
        method: "ensemble-mean".into(),
        samples: r.ensemble,
        x: r.deltas.clone(),
        y: r.errors.clone(),
        std_error: r.std_errors.clone(),
        slope: r.slope,
    }
}

fn slope_check(name: &str, r: &ScalingReport, lo: f64, hi: f64) -> Check {
    Check {
        name: name.into(),
        passed: r.slope.is_some_and(|s| (lo..=hi).contains(&s)),
        value: r.slope.unwrap_or(f64::NAN),
        threshold: lo,
        detail: format!(
            "log-log slope in [{lo}, {hi}] over {:.2} decades",
            r.span_decades
        ),
    }
}

fn run_sweep_od(config: &ExperimentConfig, potential: &Benchmark) -> Result<Outcome> {
    let c = potential.constants();
    let o = &config.overrides;
    let cap = c.convexity / (512.0 * c.smoothness * c.smoothness);
    let deltas = o
        .deltas
        .clone()
        .unwrap_or_else(|| (0..8).map(|k| cap * 0.5f64.powi(k)).collect());
    let x0 = o.x0.clone().unwrap_or_else(|| vec![0.0; potential.dim()]);
    let opts = SweepOptions {
        fine_steps: o.fine_steps.unwrap_or(256),
        zero_noise: false,
    };
    let r =
        od_discretization_sweep_with(potential, &x0, &deltas, config.ensemble, config.seed, &opts)?;
    Ok(Outcome {
        planner: None,
        executed: true,
        series: vec![sweep_series("od_one_step_error", "E|x~ - x|^2", &r)],
        checks: vec![slope_check("od_error_slope", &r, 2.7, 3.3)],
        steps: (opts.fine_steps as u64 + 1) * deltas.len() as u64 * config.ensemble as u64,
        warnings: r.warnings.clone(),
        details: serde_json::to_value(&r)?,
    })
}

fn run_sweep_ud(config: &ExperimentConfig, potential: &Benchmark) -> Result<Outcome> {
    let o = &config.overrides;
    let cap = 1.0 / (12000.0 * potential.constants().kappa());
    let deltas = o
        .deltas
        .clone()
        .unwrap_or_else(|| (0..5).map(|k| cap * 10f64.powf(-0.5 * k as f64)).collect());
    let x0 = o.x0.clone().unwrap_or_else(|| vec![0.0; potential.dim()]);
    let horizon = o.horizon.unwrap_or(0.02);
    let c = o.c.unwrap_or(DEFAULT_C);
    let r = ud_freeze_sweep(
        potential,
        &x0,
        &deltas,
        horizon,
        config.ensemble,
        c,
        8,
        config.seed,
    )?;
    let worst = r
        .deltas
        .iter()
        .zip(&r.errors)
        .map(|(&d, &e)| e / ud_freeze_bound(potential, d))
        .fold(0.0, f64::max);
    let steps: u64 = deltas
        .iter()
        .map(|d| (horizon / d).round() as u64 * 8)
        .sum::<u64>()
        * config.ensemble as u64;
    Ok(Outcome {
        planner: None,
        executed: true,
        series: vec![sweep_series(
            "ud_freeze_error",
            "E|grad U(x_t) - grad U(x_anchor)|^2",
            &r,
        )],
        checks: vec![
            slope_check("ud_freeze_slope", &r, 1.7, 2.3),
            Check {
                name: "ud_freeze_bound".into(),
                passed: worst <= 1.0,
                value: worst,
                threshold: 1.0,
                detail: "max observed/bound with bound 1e9 L^2 delta^2 (R^2 + d/m)".into(),
            },
        ],
        steps,
        warnings: r.warnings.clone(),
        details: serde_json::to_value(&r)?,
    })
}

/// Writes `<name>.json` and one `<name>.<series>.csv` per series into `dir`,
/// each atomically. Returns the written paths.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let name = &report.config.name;
    let mut written = Vec::new();
    let json = dir.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    atomic_write(&json, text.as_bytes())?;
    written.push(json);
    for s in &report.series {
        let mut csv = format!(
            "{},{},std_error\n",
            s.x_label.replace(',', ";"),
            s.y_label.replace(',', ";")
        );
        for i in 0..s.x.len() {
            let _ = writeln!(
                csv,
                "{:e},{:e},{:e}",
                s.x[i],
                s.y[i],
                s.std_error.get(i).copied().unwrap_or(0.0)
            );
        }
        let path = dir.join(format!("{name}.{}.csv", s.name));
        atomic_write(&path, csv.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Default)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Reads a report and writes one SVG per nonempty series next to it (or into
/// `out_dir`). Series that cannot be drawn are skipped with a warning.
pub fn emit_plots(report_path: &Path, out_dir: Option<&Path>) -> Result<PlotOutput> {
    let text = std::fs::read_to_string(report_path).map_err(|e| Error::io(report_path, e))?;
    let report: ExperimentReport = serde_json::from_str(&text)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| report_path.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let mut out = PlotOutput::default();
    if report.series.is_empty() {
        out.warnings
            .push(format!("{}: no series to plot", report_path.display()));
    }
    for s in &report.series {
        match svg_plot(s) {
            Some(svg) => {
                let path = dir.join(format!("{}.{}.svg", report.config.name, s.name));
                atomic_write(&path, svg.as_bytes())?;
                out.files.push(path);
            }
            None => out.warnings.push(format!(
                "series `{}` has no plottable points; skipped",
                s.name
            )),
        }
    }
    Ok(out)
}

fn svg_plot(s: &Series) -> Option<String> {
    let tx = |v: f64| if s.log_x { v.log10() } else { v };
    let ty = |v: f64| if s.log_y { v.log10() } else { v };
    let pts: Vec<(f64, f64)> =
        s.x.iter()
            .zip(&s.y)
            .filter(|(x, y)| (!s.log_x || **x > 0.0) && (!s.log_y || **y > 0.0))
            .map(|(&x, &y)| (tx(x), ty(y)))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
    if pts.is_empty() {
        return None;
    }
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let span = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(x), b.max(x))
        });
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(&mut pts.iter().map(|p| p.0));
    let (y0, y1) = span(&mut pts.iter().map(|p| p.1));
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let fmt_tick = |v: f64, log: bool| {
        if log {
            format!("1e{v:.1}")
        } else {
            format!("{v:.3}")
        }
    };
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(fx),
            h - pad + 18.0,
            fmt_tick(fx, s.log_x)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            pad - 6.0,
            py(fy) + 4.0,
            fmt_tick(fy, s.log_y)
        );
    }
    let path: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        path.join(" ")
    );
    for &(x, y) in &pts {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            px(x),
            py(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 15.0,
        escape(&s.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(&s.y_label)
    );
    let mut title = s.name.clone();
    if let Some(slope) = s.slope {
        let _ = write!(title, "  (slope {slope:.3})");
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="25" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(&title)
    );
    svg.push_str("</svg>\n");
    Some(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
