//! Step-size sweeps that measure how the discretization error of each
//! sampler scales with `δ`.
//!
//! Overdamped: one Euler–Maruyama step of size `δ` against the same SDE
//! integrated at `δ/fine_steps` on the same Brownian path. The mean squared
//! gap behaves like `δ³d` once the noise term dominates.
//!
//! Underdamped: along the chain's own continuous-time interpolation, the gap
//! `‖∇U(x_t) − ∇U(x_{⌊t/δ⌋δ})‖²` averaged over time and ensemble, which
//! should scale like `δ²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::rng::{self, purpose, GaussianSource};
use crate::underdamped::{friction_product, KernelCoefficients, UnderdampedPlan, DEFAULT_C};
use crate::vector::{dist, linear_fit, mean_and_se, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Ok,
    InsufficientPoints,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    /// Strictly decreasing.
    pub deltas: Vec<f64>,
    pub errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub status: FitStatus,
    /// `log10(δ_max/δ_min)`.
    pub span_decades: f64,
    pub ensemble: usize,
    pub warnings: Vec<String>,
}

impl ScalingReport {
    fn build(
        deltas: Vec<f64>,
        errors: Vec<f64>,
        std_errors: Vec<f64>,
        ensemble: usize,
        warnings: Vec<String>,
    ) -> Self {
        let (lx, ly): (Vec<f64>, Vec<f64>) = deltas
            .iter()
            .zip(&errors)
            .filter(|(_, &e)| e > 0.0)
            .map(|(d, e)| (d.ln(), e.ln()))
            .unzip();
        let fit = if lx.len() >= 2 {
            linear_fit(&lx, &ly)
        } else {
            None
        };
        let span_decades = match (deltas.first(), deltas.last()) {
            (Some(a), Some(b)) => (a / b).log10(),
            _ => 0.0,
        };
        Self {
            deltas,
            errors,
            std_errors,
            slope: fit.map(|f| f.0),
            intercept: fit.map(|f| f.1),
            status: if fit.is_some() {
                FitStatus::Ok
            } else {
                FitStatus::InsufficientPoints
            },
            span_decades,
            ensemble,
            warnings,
        }
    }

    /// `(δ, error, std_error)` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta,error,std_error\n");
        for i in 0..self.deltas.len() {
            s.push_str(&format!(
                "{:e},{:e},{:e}\n",
                self.deltas[i], self.errors[i], self.std_errors[i]
            ));
        }
        s
    }
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::usage("step-size list is empty"));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::domain("step sizes must be positive and finite"));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::usage("step sizes must be strictly decreasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Substeps of the reference integrator per coarse step.
    pub fine_steps: usize,
    /// Drive both integrators with zero noise (drift-only check).
    pub zero_noise: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            fine_steps: 256,
            zero_noise: false,
        }
    }
}

/// One-step overdamped error sweep with default options.
pub fn od_discretization_sweep<P: Potential + Sync + ?Sized>(
    potential: &P,
    x0: &[f64],
    deltas: &[f64],
    ensemble: usize,
    seed: u64,
) -> Result<ScalingReport> {
    od_discretization_sweep_with(
        potential,
        x0,
        deltas,
        ensemble,
        seed,
        &SweepOptions::default(),
    )
}

pub fn od_discretization_sweep_with<P: Potential + Sync + ?Sized>(
    potential: &P,
    x0: &[f64],
    deltas: &[f64],
    ensemble: usize,
    seed: u64,
    opts: &SweepOptions,
) -> Result<ScalingReport> {
    check_deltas(deltas)?;
    let d = potential.dim();
    if x0.len() != d {
        return Err(Error::usage(
            "x0 dimension differs from potential dimension",
        ));
    }
    if ensemble == 0 || opts.fine_steps == 0 {
        return Err(Error::usage("ensemble and fine_steps must be positive"));
    }
    let c = potential.constants();
    let mut warnings = Vec::new();
    if norm(x0) > c.radius {
        warnings.push(format!("‖x0‖ = {} exceeds R = {}", norm(x0), c.radius));
    }
    let cap = c.convexity / (512.0 * c.smoothness * c.smoothness);
    for &delta in deltas {
        if delta > cap {
            warnings.push(format!("δ = {delta} exceeds m/(512L²) = {cap}"));
        }
    }

    let k = opts.fine_steps;
    let mut errors = Vec::with_capacity(deltas.len());
    let mut std_errors = Vec::with_capacity(deltas.len());
    for (gi, &delta) in deltas.iter().enumerate() {
        let h = delta / k as f64;
        let sq = (2.0 * h).sqrt();
        let per: Vec<f64> = (0..ensemble)
            .into_par_iter()
            .map(|i| {
                let mut g = rng::stream(seed, purpose::SWEEP, ((gi as u64) << 32) | i as u64);
                let mut xi = vec![0.0; d];
                let mut total = vec![0.0; d];
                let mut x = x0.to_vec();
                let mut grad = vec![0.0; d];
                for _ in 0..k {
                    if !opts.zero_noise {
                        g.fill_standard_normal(&mut xi);
                    }
                    potential.grad(&x, &mut grad);
                    for j in 0..d {
                        x[j] += -h * grad[j] + sq * xi[j];
                        total[j] += xi[j];
                    }
                }
                potential.grad(x0, &mut grad);
                let coarse: Vec<f64> = (0..d)
                    .map(|j| x0[j] - delta * grad[j] + sq * total[j])
                    .collect();
                let e = dist(&coarse, &x);
                e * e
            })
            .collect();
        let (m, se) = mean_and_se(&per);
        errors.push(m);
        std_errors.push(se);
    }
    Ok(ScalingReport::build(
        deltas.to_vec(),
        errors,
        std_errors,
        ensemble,
        warnings,
    ))
}

/// Time- and ensemble-averaged `‖∇U(x_t) − ∇U(x_{⌊t/δ⌋δ})‖²` for one `δ`.
///
/// The chain starts at `(x0, 0)` and runs `round(horizon/δ)` steps. Each
/// step is split into `substeps` exact sub-transitions with the anchor force
/// held fixed, which reproduces the chain's continuous interpolation; the gap
/// is sampled at the end of every sub-transition.
pub fn ud_freeze_gap<P: Potential + Sync + ?Sized>(
    potential: &P,
    x0: &[f64],
    delta: f64,
    horizon: f64,
    ensemble: usize,
    c: f64,
    substeps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let d = potential.dim();
    if x0.len() != d {
        return Err(Error::usage(
            "x0 dimension differs from potential dimension",
        ));
    }
    if ensemble == 0 || substeps == 0 {
        return Err(Error::usage("ensemble and substeps must be positive"));
    }
    if !(horizon > 0.0 && delta > 0.0) {
        return Err(Error::domain("horizon and δ must be positive"));
    }
    let ckl = friction_product(&potential.constants(), c)?;
    let kern = KernelCoefficients::new(delta / substeps as f64, ckl)?;
    let [l11, l21, l22] = kern.cholesky();
    let steps = ((horizon / delta).round() as u64).max(1);
    let per: Vec<f64> = (0..ensemble)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, purpose::SWEEP, i as u64);
            let mut x = x0.to_vec();
            let mut u = vec![0.0; d];
            let mut anchor_grad = vec![0.0; d];
            let mut gx = vec![0.0; d];
            let mut acc = 0.0;
            for _ in 0..steps {
                potential.grad(&x, &mut anchor_grad);
                for _ in 0..substeps {
                    for j in 0..d {
                        let (e1, e2) = (g.standard_normal(), g.standard_normal());
                        let (xj, uj, gj) = (x[j], u[j], anchor_grad[j]);
                        x[j] = xj + kern.mean_x_u * uj + kern.mean_x_grad * gj + l11 * e1;
                        u[j] = kern.mean_u_u * uj + kern.mean_u_grad * gj + l21 * e1 + l22 * e2;
                    }
                    potential.grad(&x, &mut gx);
                    let gap = dist(&gx, &anchor_grad);
                    acc += gap * gap;
                }
            }
            acc / (steps as f64 * substeps as f64)
        })
        .collect();
    Ok(mean_and_se(&per))
}

/// Gradient-freeze error across a decreasing `δ` grid at a fixed horizon.
#[allow(clippy::too_many_arguments)]
pub fn ud_freeze_sweep<P: Potential + Sync + ?Sized>(
    potential: &P,
    x0: &[f64],
    deltas: &[f64],
    horizon: f64,
    ensemble: usize,
    c: f64,
    substeps: usize,
    seed: u64,
) -> Result<ScalingReport> {
    check_deltas(deltas)?;
    let cap = 1.0 / (12000.0 * potential.constants().kappa());
    let warnings = deltas
        .iter()
        .filter(|&&d| d > cap)
        .map(|d| format!("δ = {d} exceeds 1/(12000κ) = {cap}"))
        .collect();
    let mut errors = Vec::new();
    let mut std_errors = Vec::new();
    for &delta in deltas {
        let (m, se) = ud_freeze_gap(potential, x0, delta, horizon, ensemble, c, substeps, seed)?;
        errors.push(m);
        std_errors.push(se);
    }
    Ok(ScalingReport::build(
        deltas.to_vec(),
        errors,
        std_errors,
        ensemble,
        warnings,
    ))
}

/// `10⁹ L² δ² (R² + d/m)`.
pub fn ud_freeze_bound(potential: &(impl Potential + ?Sized), delta: f64) -> f64 {
    let c = potential.constants();
    let d = potential.dim() as f64;
    1e9 * c.smoothness * c.smoothness * delta * delta * (c.radius * c.radius + d / c.convexity)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreezeCheck {
    pub delta: f64,
    pub observed: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `observed / bound`.
    pub ratio: f64,
    pub passed: bool,
    pub warnings: Vec<String>,
}

/// Compares the observed gradient-freeze error at the plan's step size
/// against `10⁹L²δ²(R² + d/m)`, starting from the origin.
pub fn ud_velocity_moment_check<P: Potential + Sync + ?Sized>(
    potential: &P,
    plan: &UnderdampedPlan,
    horizon: f64,
    ensemble: usize,
    seed: u64,
) -> Result<FreezeCheck> {
    let delta = plan.step();
    let cap = 1.0 / (12000.0 * potential.constants().kappa());
    let mut warnings = Vec::new();
    if delta > cap {
        warnings.push(format!("δ = {delta} exceeds 1/(12000κ) = {cap}"));
    }
    let x0 = vec![0.0; potential.dim()];
    let (observed, std_error) =
        ud_freeze_gap(potential, &x0, delta, horizon, ensemble, DEFAULT_C, 8, seed)?;
    let bound = ud_freeze_bound(potential, delta);
    Ok(FreezeCheck {
        delta,
        observed,
        std_error,
        bound,
        ratio: observed / bound,
        passed: observed <= bound,
        warnings,
    })
}
