//! Overdamped Langevin MCMC: `x' = x − δ∇U(x) + √(2δ) ξ`.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{Constants, Potential};
use crate::rng::{self, purpose, GaussianSource};
use crate::vector::{first_non_finite, norm};

/// Exponents beyond this (natural log) are reported as infeasible rather
/// than evaluated.
pub const MAX_LOG: f64 = 700.0;

#[derive(Debug, Clone)]
pub struct ChainState<G = ChaCha8Rng> {
    pub x: Vec<f64>,
    pub step_index: u64,
    pub rng: G,
    grad: Vec<f64>,
}

impl ChainState<ChaCha8Rng> {
    /// Member `index` of an ensemble seeded by `seed`.
    pub fn new(x0: &[f64], seed: u64, index: u64) -> Self {
        Self::with_source(x0, rng::stream(seed, purpose::CHAIN, index))
    }
}

impl<G: GaussianSource> ChainState<G> {
    pub fn with_source(x0: &[f64], rng: G) -> Self {
        Self {
            x: x0.to_vec(),
            step_index: 0,
            rng,
            grad: vec![0.0; x0.len()],
        }
    }
}

/// One step of the chain, in place.
pub fn od_step<P: Potential + ?Sized, G: GaussianSource>(
    potential: &P,
    state: &mut ChainState<G>,
    delta: f64,
) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!(
            "step size must be positive, got {delta}"
        )));
    }
    if state.x.len() != potential.dim() {
        return Err(Error::usage(
            "state dimension differs from potential dimension",
        ));
    }
    potential.grad(&state.x, &mut state.grad);
    if let Some(i) = first_non_finite(&state.grad) {
        return Err(Error::NonFinite {
            quantity: "gradient",
            coordinate: i,
            step: state.step_index,
        });
    }
    let s = (2.0 * delta).sqrt();
    for (x, g) in state.x.iter_mut().zip(&state.grad) {
        *x += -delta * g + s * state.rng.standard_normal();
    }
    state.step_index += 1;
    Ok(())
}

/// Independent chains sharing a start point and a seed.
#[derive(Debug, Clone)]
pub struct OdEnsemble {
    members: Vec<ChainState>,
    dim: usize,
}

impl OdEnsemble {
    pub fn new(x0: &[f64], size: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::usage("ensemble size must be at least 1"));
        }
        Ok(Self {
            members: (0..size as u64)
                .map(|i| ChainState::new(x0, seed, i))
                .collect(),
            dim: x0.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn advance<P: Potential + ?Sized>(
        &mut self,
        potential: &P,
        delta: f64,
        steps: u64,
    ) -> Result<()> {
        self.members.par_iter_mut().try_for_each(|m| {
            for _ in 0..steps {
                od_step(potential, m, delta)?;
            }
            Ok(())
        })
    }

    /// Current positions, row-major `len × d`.
    pub fn positions(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.members.len() * self.dim);
        for m in &self.members {
            out.extend_from_slice(&m.x);
        }
        out
    }
}

/// Samples from `ensemble` chains after `n` steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub dim: usize,
    /// Row-major `ensemble × d`.
    pub positions: Vec<f64>,
    /// Row-major velocities (underdamped runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

pub(crate) fn start_warnings(x0: &[f64], c: &Constants) -> Vec<String> {
    let r = norm(x0);
    if r > c.radius {
        vec![format!(
            "‖x0‖ = {r} exceeds R = {}; the convergence guarantee does not apply",
            c.radius
        )]
    } else {
        Vec::new()
    }
}

pub fn od_run<P: Potential + ?Sized>(
    potential: &P,
    x0: &[f64],
    delta: f64,
    n: u64,
    ensemble: usize,
    seed: u64,
) -> Result<RunOutput> {
    if x0.len() != potential.dim() {
        return Err(Error::usage(
            "x0 dimension differs from potential dimension",
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!(
            "step size must lie in (0, 1), got {delta}"
        )));
    }
    let warnings = start_warnings(x0, &potential.constants());
    let mut e = OdEnsemble::new(x0, ensemble, seed)?;
    e.advance(potential, delta, n)?;
    Ok(RunOutput {
        dim: x0.len(),
        positions: e.positions(),
        velocities: None,
        warnings,
    })
}

/// Step size and iteration count from the convergence theorem.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OverdampedPlan {
    pub epsilon: f64,
    pub dim: usize,
    pub constants: Constants,
    /// `R̄² = max(R², 8/m)`.
    pub r_bar_sq: f64,
    pub delta: f64,
    pub log_delta: f64,
    /// Real-valued iteration bound before rounding up.
    pub n_bound: f64,
    pub log_n: f64,
    /// `⌈n_bound⌉`, absent when it does not fit in a `u64`.
    pub n: Option<u64>,
    pub feasible: bool,
    /// Largest natural-log exponent met while evaluating the formulas.
    pub max_exponent: f64,
    /// The step size with the constants that appear inside the proof.
    pub proof_delta: f64,
    pub practical_scale: f64,
    pub note: String,
}

impl OverdampedPlan {
    /// Step size actually used: `delta · practical_scale`.
    pub fn step(&self) -> f64 {
        self.delta * self.practical_scale
    }

    /// Iterations actually run: `⌈n_bound / practical_scale⌉`.
    pub fn iterations(&self) -> Option<u64> {
        ceil_u64(self.n_bound / self.practical_scale)
    }

    pub fn with_practical_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain("practical scale must be positive"));
        }
        self.practical_scale = scale;
        if self.step() >= 1.0 {
            return Err(Error::domain("scaled step size must stay below 1"));
        }
        Ok(self)
    }
}

pub(crate) fn ceil_u64(v: f64) -> Option<u64> {
    (v.is_finite() && (0.0..1.8e19).contains(&v)).then(|| v.ceil() as u64)
}

pub(crate) fn check_plan_args(c: &Constants, epsilon: f64, d: usize) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if d == 0 {
        return Err(Error::usage("dimension must be positive"));
    }
    Constants::new(c.smoothness, c.convexity, c.radius).map(|_| ())
}

/// Evaluates the theorem's step size and iteration count in the log domain.
pub fn plan_overdamped(c: &Constants, epsilon: f64, d: usize) -> Result<OverdampedPlan> {
    check_plan_args(c, epsilon, d)?;
    let (l, m, r) = (c.smoothness, c.convexity, c.radius);
    let lr2 = l * r * r;
    let d_f = d as f64;
    let rb2 = (r * r).max(8.0 / m);
    let spread = (r * r + d_f / m).sqrt();

    let log_d1 = 2.0 * epsilon.ln() - lr2 - (64.0 * l * l * rb2 * rb2 * d_f).ln();
    let log_d2 =
        epsilon.ln() - 0.5 * lr2 - (2.0 * l * l * rb2 * (60.0 * r * r + 6.0 * d_f / m).sqrt()).ln();
    let log_delta = log_d1.min(log_d2);

    let log_a = (64.0 * rb2.powi(3) * d_f).ln() + 1.25 * lr2 - 2.0 * epsilon.ln();
    let log_b = (16.0 * rb2 * spread).ln() + 0.75 * lr2 - epsilon.ln();
    let inner = (24.0 * spread).ln() + 0.25 * lr2 - epsilon.ln();
    let (log_n, n_bound) = if inner > 0.0 {
        let log_n = 2.0 * l.ln() + log_a.max(log_b) + inner.ln();
        (log_n, log_n.exp())
    } else {
        // ε exceeds the initial W₁ bound: no iterations are needed.
        (f64::NEG_INFINITY, 0.0)
    };
    let max_exponent = 1.25 * lr2;
    let feasible = max_exponent <= MAX_LOG && log_n <= MAX_LOG && log_delta >= -MAX_LOG;

    let q = rb2 / 4.0;
    let proof_delta = (2.0 * epsilon.ln() - lr2 - (1024.0 * l * l * d_f * q * q).ln())
        .min(
            epsilon.ln()
                - 0.5 * lr2
                - (32.0 * l * l * q * (60.0 * r * r + 6.0 * d_f / m).sqrt()).ln(),
        )
        .exp();

    let delta = log_delta.exp();
    let n_bound = if feasible { n_bound } else { f64::INFINITY };
    Ok(OverdampedPlan {
        epsilon,
        dim: d,
        constants: *c,
        r_bar_sq: rb2,
        delta,
        log_delta,
        n_bound,
        log_n,
        n: if feasible { ceil_u64(n_bound) } else { None },
        feasible,
        max_exponent,
        proof_delta,
        practical_scale: 1.0,
        note: if feasible {
            "theorem constants (64, 2); proof_delta uses the in-proof constants (1024, 32)".into()
        } else {
            format!("infeasible: exponent e^{{{max_exponent:.1}}} or log n = {log_n:.1} exceeds {MAX_LOG}")
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Benchmark;
    use crate::rng::ZeroNoise;
    use crate::vector::mean_and_se;

    #[test]
    fn zero_noise_steps_follow_the_drift() {
        let q = Benchmark::quadratic(2, 1.0, 0.0).unwrap();
        let mut s = ChainState::with_source(&[1.0, 0.0], ZeroNoise);
        od_step(&q, &mut s, 0.1).unwrap();
        assert_eq!(s.x, vec![0.9, 0.0]);
        assert_eq!(s.step_index, 1);
        let mut s = ChainState::with_source(&[0.0, 0.0], ZeroNoise);
        od_step(&q, &mut s, 0.1).unwrap();
        assert_eq!(s.x, vec![0.0, 0.0]);
        assert!(od_step(&q, &mut s, 0.0).is_err());
    }

    #[test]
    fn non_finite_gradient_names_the_coordinate() {
        let q = Benchmark::quadratic(2, 1.0, 0.0).unwrap();
        let mut s = ChainState::with_source(&[1.0, f64::INFINITY], ZeroNoise);
        match od_step(&q, &mut s, 0.1) {
            Err(Error::NonFinite {
                coordinate: 1,
                step: 0,
                ..
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stationary_variance_of_linear_chain() {
        let q = Benchmark::quadratic(1, 1.0, 1.0).unwrap();
        let out = od_run(&q, &[0.0], 0.1, 300, 8000, 5).unwrap();
        let sq: Vec<f64> = out.positions.iter().map(|x| x * x).collect();
        let (mean, _) = mean_and_se(&out.positions);
        let (var, se) = mean_and_se(&sq);
        let target = 1.0 / 0.95;
        assert!(
            (var - target).abs() < 3.0 * se,
            "{var} vs {target} (se {se})"
        );
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn runs_are_deterministic() {
        let q = Benchmark::quadratic(2, 1.0, 1.0).unwrap();
        let a = od_run(&q, &[0.5, 0.0], 0.01, 50, 16, 42).unwrap();
        let b = od_run(&q, &[0.5, 0.0], 0.01, 50, 16, 42).unwrap();
        assert_eq!(a.positions, b.positions);
        let z = od_run(&q, &[0.5, 0.0], 0.01, 0, 3, 42).unwrap();
        assert_eq!(z.positions, vec![0.5, 0.0, 0.5, 0.0, 0.5, 0.0]);
        let far = od_run(&q, &[5.0, 0.0], 0.01, 1, 1, 0).unwrap();
        assert_eq!(far.warnings.len(), 1);
    }

    #[test]
    fn planner_example() {
        let c = Constants::new(1.0, 1.0, 1.0).unwrap();
        let p = plan_overdamped(&c, 0.1, 2).unwrap();
        assert_eq!(p.r_bar_sq, 8.0);
        assert!((p.delta / 4.490715834612333e-7 - 1.0).abs() < 1e-12);
        let half = plan_overdamped(&c, 0.05, 2).unwrap();
        let ratio = half.n_bound / p.n_bound;
        assert!(ratio > 4.0 && ratio < 4.6, "{ratio}");
        assert!(plan_overdamped(&c, 0.0, 2).is_err());
    }

    #[test]
    fn planner_flags_overflow() {
        let c = Constants::new(10.0, 1.0, 10.0).unwrap();
        let p = plan_overdamped(&c, 0.1, 2).unwrap();
        assert!(!p.feasible);
        assert!(p.n.is_none());
        assert!(p.note.contains("infeasible"));
    }

    #[test]
    fn practical_scale_rescales() {
        let c = Constants::new(1.0, 1.0, 1.0).unwrap();
        let p = plan_overdamped(&c, 0.1, 2)
            .unwrap()
            .with_practical_scale(100.0)
            .unwrap();
        assert!((p.step() / p.delta - 100.0).abs() < 1e-9);
        assert!(p.iterations().unwrap() < p.n.unwrap() / 99);
    }
}
