//! Underdamped Langevin MCMC with the exact Gaussian transition of the
//! gradient-frozen kinetic diffusion
//!
//! ```text
//! dx = u dt,   du = −2u dt − (1/(cκL)) ∇U(x₀) dt + 2/√(cκL) dB.
//! ```

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overdamped::{ceil_u64, check_plan_args, start_warnings, RunOutput, MAX_LOG};
use crate::potentials::{Constants, Potential};
use crate::rng::{self, purpose, GaussianSource};
use crate::vector::first_non_finite;

/// The absolute friction constant `c` in `1/(cκL)`.
pub const DEFAULT_C: f64 = 1000.0;

/// Below this step size the near-cancelling moment expressions switch to
/// their Taylor series.
const SERIES_CUTOFF: f64 = 0.25;

/// `δ − ½(1 − e^{−2δ})`.
fn drift_gap(delta: f64) -> f64 {
    if delta < SERIES_CUTOFF {
        // ½ Σ_{k≥2} (−2δ)^k / k!
        let mut term = -delta; // k = 1 term, not summed
        let mut sum = 0.0;
        for k in 2..40 {
            term *= -2.0 * delta / k as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        delta - 0.5 * (-(-2.0 * delta).exp_m1())
    }
}

/// `δ − ¼e^{−4δ} − ¾ + e^{−2δ}`.
fn position_variance_unit(delta: f64) -> f64 {
    if delta < SERIES_CUTOFF {
        // Σ_{k≥3} (−2)^k (1 − 2^{k−2}) δ^k / k!
        let mut pow = 1.0; // (−2δ)^k / k!
        let mut sum = 0.0;
        for k in 1..60 {
            pow *= -2.0 * delta / k as f64;
            if k >= 3 {
                let t = pow * (1.0 - 2f64.powi(k - 2));
                sum += t;
                if t.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
        }
        sum
    } else {
        let e2 = (-2.0 * delta).exp();
        delta - 0.25 * e2 * e2 - 0.75 + e2
    }
}

/// Scalar coefficients of one exact step; positions and velocities map as
/// `E[x'] = x + mean_x_u·u + mean_x_grad·∇U(x)`,
/// `E[u'] = mean_u_u·u + mean_u_grad·∇U(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelCoefficients {
    pub delta: f64,
    /// `c·κ·L`.
    pub ckl: f64,
    pub mean_u_u: f64,
    pub mean_u_grad: f64,
    pub mean_x_u: f64,
    pub mean_x_grad: f64,
    pub var_xx: f64,
    pub var_uu: f64,
    pub cov_xu: f64,
    chol: [f64; 3],
    /// Whether a Cholesky pivot had to be clamped to zero.
    pub clamped: bool,
}

impl KernelCoefficients {
    pub fn new(delta: f64, ckl: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::domain(format!(
                "step size must be positive, got {delta}"
            )));
        }
        if !(ckl > 0.0 && ckl.is_finite()) {
            return Err(Error::domain("c·κ·L must be positive"));
        }
        let one_minus_e2 = -(-2.0 * delta).exp_m1();
        let var_xx = position_variance_unit(delta) / ckl;
        let var_uu = -(-4.0 * delta).exp_m1() / ckl;
        let cov_xu = one_minus_e2 * one_minus_e2 / (2.0 * ckl);

        let mut clamped = false;
        let l11 = if var_xx > 0.0 {
            var_xx.sqrt()
        } else {
            clamped = true;
            0.0
        };
        let l21 = if l11 > 0.0 { cov_xu / l11 } else { 0.0 };
        let rest = var_uu - l21 * l21;
        let l22 = if rest >= 0.0 {
            rest.sqrt()
        } else {
            clamped = true;
            0.0
        };
        Ok(Self {
            delta,
            ckl,
            mean_u_u: 1.0 - one_minus_e2,
            mean_u_grad: -one_minus_e2 / (2.0 * ckl),
            mean_x_u: 0.5 * one_minus_e2,
            mean_x_grad: -drift_gap(delta) / (2.0 * ckl),
            var_xx,
            var_uu,
            cov_xu,
            chol: [l11, l21, l22],
            clamped,
        })
    }

    pub fn for_potential(constants: &Constants, delta: f64, c: f64) -> Result<Self> {
        Self::new(delta, friction_product(constants, c)?)
    }

    /// Lower Cholesky factor `[l11, l21, l22]` of the `(x, u)` covariance.
    pub fn cholesky(&self) -> [f64; 3] {
        self.chol
    }

    /// `var_xx·var_uu − cov_xu²`.
    pub fn determinant(&self) -> f64 {
        self.var_xx * self.var_uu - self.cov_xu * self.cov_xu
    }
}

/// `c·κ·L`.
pub fn friction_product(constants: &Constants, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!(
            "friction constant c must be positive, got {c}"
        )));
    }
    Ok(c * constants.kappa() * constants.smoothness)
}

/// Mean and covariance of one exact step from `(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub mean_x: Vec<f64>,
    pub mean_u: Vec<f64>,
    pub var_xx: f64,
    pub var_uu: f64,
    pub cov_xu: f64,
    pub c: f64,
    pub ckl: f64,
}

pub fn ud_kernel_moments<P: Potential + ?Sized>(
    potential: &P,
    x: &[f64],
    u: &[f64],
    delta: f64,
    c: f64,
) -> Result<KernelMoments> {
    if u.len() != x.len() {
        return Err(Error::usage("position and velocity lengths differ"));
    }
    let k = KernelCoefficients::for_potential(&potential.constants(), delta, c)?;
    let (_, g) = potential.eval(x)?;
    let mean_x = (0..x.len())
        .map(|i| x[i] + k.mean_x_u * u[i] + k.mean_x_grad * g[i])
        .collect();
    let mean_u = (0..x.len())
        .map(|i| k.mean_u_u * u[i] + k.mean_u_grad * g[i])
        .collect();
    Ok(KernelMoments {
        mean_x,
        mean_u,
        var_xx: k.var_xx,
        var_uu: k.var_uu,
        cov_xu: k.cov_xu,
        c,
        ckl: k.ckl,
    })
}

#[derive(Debug, Clone)]
pub struct PhaseState<G = ChaCha8Rng> {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub step_index: u64,
    pub rng: G,
    /// Steps on which the covariance factor had to be clamped.
    pub clamp_count: u64,
    grad: Vec<f64>,
}

impl PhaseState<ChaCha8Rng> {
    /// Member `index` of an ensemble seeded by `seed`, starting at rest.
    pub fn new(x0: &[f64], seed: u64, index: u64) -> Self {
        Self::with_source(
            x0,
            &vec![0.0; x0.len()],
            rng::stream(seed, purpose::CHAIN, index),
        )
    }
}

impl<G: GaussianSource> PhaseState<G> {
    pub fn with_source(x0: &[f64], u0: &[f64], rng: G) -> Self {
        Self {
            x: x0.to_vec(),
            u: u0.to_vec(),
            step_index: 0,
            rng,
            clamp_count: 0,
            grad: vec![0.0; x0.len()],
        }
    }
}

/// One exact step with precomputed coefficients, in place.
pub fn ud_step<P: Potential + ?Sized, G: GaussianSource>(
    potential: &P,
    state: &mut PhaseState<G>,
    k: &KernelCoefficients,
) -> Result<()> {
    if state.x.len() != potential.dim() || state.u.len() != state.x.len() {
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
    let [l11, l21, l22] = k.chol;
    for i in 0..state.x.len() {
        let (x, u, g) = (state.x[i], state.u[i], state.grad[i]);
        let e1 = state.rng.standard_normal();
        let e2 = state.rng.standard_normal();
        state.x[i] = x + k.mean_x_u * u + k.mean_x_grad * g + l11 * e1;
        state.u[i] = k.mean_u_u * u + k.mean_u_grad * g + l21 * e1 + l22 * e2;
    }
    if k.clamped {
        state.clamp_count += 1;
    }
    state.step_index += 1;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct UdEnsemble {
    members: Vec<PhaseState>,
}

impl UdEnsemble {
    pub fn new(x0: &[f64], size: usize, seed: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::usage("ensemble size must be at least 1"));
        }
        Ok(Self {
            members: (0..size as u64)
                .map(|i| PhaseState::new(x0, seed, i))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[PhaseState] {
        &self.members
    }

    pub fn advance<P: Potential + ?Sized>(
        &mut self,
        potential: &P,
        k: &KernelCoefficients,
        steps: u64,
    ) -> Result<()> {
        self.members.par_iter_mut().try_for_each(|m| {
            for _ in 0..steps {
                ud_step(potential, m, k)?;
            }
            Ok(())
        })
    }

    pub fn positions(&self) -> Vec<f64> {
        self.members
            .iter()
            .flat_map(|m| m.x.iter().copied())
            .collect()
    }

    pub fn velocities(&self) -> Vec<f64> {
        self.members
            .iter()
            .flat_map(|m| m.u.iter().copied())
            .collect()
    }

    pub fn clamp_count(&self) -> u64 {
        self.members.iter().map(|m| m.clamp_count).sum()
    }
}

/// Runs `ensemble` chains from `(x0, 0)` for `n` exact steps of size `delta`.
pub fn ud_run<P: Potential + ?Sized>(
    potential: &P,
    x0: &[f64],
    delta: f64,
    n: u64,
    ensemble: usize,
    seed: u64,
    c: f64,
) -> Result<RunOutput> {
    if x0.len() != potential.dim() {
        return Err(Error::usage(
            "x0 dimension differs from potential dimension",
        ));
    }
    let k = KernelCoefficients::for_potential(&potential.constants(), delta, c)?;
    let mut warnings = start_warnings(x0, &potential.constants());
    let mut e = UdEnsemble::new(x0, ensemble, seed)?;
    e.advance(potential, &k, n)?;
    if e.clamp_count() > 0 {
        warnings.push(format!(
            "covariance factor clamped on {} steps",
            e.clamp_count()
        ));
    }
    Ok(RunOutput {
        dim: x0.len(),
        positions: e.positions(),
        velocities: Some(e.velocities()),
        warnings,
    })
}

/// Stationary per-coordinate covariance `(Σ_xx, Σ_xu, Σ_uu)` of the chain on
/// `U = m‖x‖²/2`, from the discrete Lyapunov equation `Σ = AΣAᵀ + Q`.
pub fn stationary_covariance_quadratic(m: f64, k: &KernelCoefficients) -> [f64; 3] {
    let (a, b) = (1.0 + k.mean_x_grad * m, k.mean_x_u);
    let (c, d) = (k.mean_u_grad * m, k.mean_u_u);
    // (I − M) s = q for s = (Σ_xx, Σ_xu, Σ_uu)
    let mut sys = [
        [1.0 - a * a, -2.0 * a * b, -b * b, k.var_xx],
        [-a * c, 1.0 - (a * d + b * c), -b * d, k.cov_xu],
        [-c * c, -2.0 * c * d, 1.0 - d * d, k.var_uu],
    ];
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| sys[i][col].abs().total_cmp(&sys[j][col].abs()))
            .unwrap();
        sys.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = sys[row][col] / sys[col][col];
                for k in col..4 {
                    sys[row][k] -= f * sys[col][k];
                }
            }
        }
    }
    [
        sys[0][3] / sys[0][0],
        sys[1][3] / sys[1][1],
        sys[2][3] / sys[2][2],
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct UnderdampedPlan {
    pub epsilon: f64,
    pub dim: usize,
    pub constants: Constants,
    pub delta: f64,
    pub log_delta: f64,
    pub n_bound: f64,
    pub log_n: f64,
    pub n: Option<u64>,
    pub feasible: bool,
    pub max_exponent: f64,
    pub practical_scale: f64,
    pub note: String,
}

impl UnderdampedPlan {
    pub fn step(&self) -> f64 {
        self.delta * self.practical_scale
    }

    pub fn iterations(&self) -> Option<u64> {
        ceil_u64(self.n_bound / self.practical_scale)
    }

    pub fn with_practical_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain("practical scale must be positive"));
        }
        self.practical_scale = scale;
        Ok(self)
    }
}

pub fn plan_underdamped(c: &Constants, epsilon: f64, d: usize) -> Result<UnderdampedPlan> {
    check_plan_args(c, epsilon, d)?;
    let (l, m, r) = (c.smoothness, c.convexity, c.radius);
    let lr2 = l * r * r;
    let kappa = c.kappa();
    let big = kappa.max(lr2);
    let spread = (r * r + d as f64 / m).sqrt();
    let ln10 = std::f64::consts::LN_10;

    let log_delta = -2.75 * lr2 + epsilon.ln() - 8.0 * ln10 - big.ln() - spread.ln();
    let inner = 30f64.ln() + 2.75 * lr2 + spread.ln() - epsilon.ln();
    let (log_n, n_bound) = if inner > 0.0 {
        let log_n =
            18.0 * ln10 + 5.5 * lr2 + kappa.ln() + 2.0 * big.ln() + inner.ln() + spread.ln()
                - epsilon.ln();
        (log_n, log_n.exp())
    } else {
        (f64::NEG_INFINITY, 0.0)
    };
    let max_exponent = 5.5 * lr2;
    let feasible = max_exponent <= MAX_LOG && log_n <= MAX_LOG && log_delta >= -MAX_LOG;
    let n_bound = if feasible { n_bound } else { f64::INFINITY };
    Ok(UnderdampedPlan {
        epsilon,
        dim: d,
        constants: *c,
        delta: log_delta.exp(),
        log_delta,
        n_bound,
        log_n,
        n: if feasible { ceil_u64(n_bound) } else { None },
        feasible,
        max_exponent,
        practical_scale: 1.0,
        note: if feasible {
            match ceil_u64(n_bound) {
                Some(_) => "theorem constants".into(),
                None => format!(
                    "n ≈ 10^{:.1} does not fit in 64 bits; see n_bound",
                    log_n / ln10
                ),
            }
        } else {
            format!("infeasible: exponent e^{{{max_exponent:.1}}} or log n = {log_n:.1} exceeds {MAX_LOG}")
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overdamped::plan_overdamped;
    use crate::potentials::Benchmark;
    use crate::rng::ZeroNoise;
    use crate::vector::mean_and_se;

    #[test]
    fn series_and_direct_forms_agree_at_the_cutoff() {
        let d = SERIES_CUTOFF;
        let e2 = (-2.0 * d).exp();
        let direct_var = d - 0.25 * e2 * e2 - 0.75 + e2;
        let direct_gap = d - 0.5 * (1.0 - e2);
        assert!((position_variance_unit(d * (1.0 - 1e-15)) / direct_var - 1.0).abs() < 1e-12);
        assert!((drift_gap(d * (1.0 - 1e-15)) / direct_gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_stays_psd_and_vanishes_as_step_shrinks() {
        let mut prev = 0.0;
        for e in 0..=60 {
            let delta = 10f64.powf(-6.0 + 6.0 * e as f64 / 60.0);
            let k = KernelCoefficients::new(delta, 1000.0).unwrap();
            assert!(k.determinant() >= -1e-18);
            assert!(!k.clamped, "clamped at {delta}");
            assert!(k.var_xx > prev);
            prev = k.var_xx;
        }
        let k = KernelCoefficients::new(1e-9, 1000.0).unwrap();
        assert!(k.var_uu < 1e-11 && k.cov_xu < 1e-20 && k.var_xx < 1e-29);
        assert!((k.mean_u_u - 1.0).abs() < 1e-8 && k.mean_x_u < 1e-8);
    }

    #[test]
    fn moments_at_rest_are_fixed() {
        let q = Benchmark::quadratic(2, 1.0, 1.0).unwrap();
        let k = ud_kernel_moments(&q, &[0.0, 0.0], &[0.0, 0.0], 0.1, DEFAULT_C).unwrap();
        assert_eq!(k.mean_x, vec![0.0, 0.0]);
        assert_eq!(k.mean_u, vec![0.0, 0.0]);
        assert!(ud_kernel_moments(&q, &[0.0, 0.0], &[0.0, 0.0], 0.0, DEFAULT_C).is_err());
    }

    #[test]
    fn zero_noise_step_lands_on_the_mean() {
        let q = Benchmark::quadratic(2, 1.0, 1.0).unwrap();
        let (x, u) = ([0.3, -0.2], [0.01, 0.02]);
        let mom = ud_kernel_moments(&q, &x, &u, 0.2, DEFAULT_C).unwrap();
        let k = KernelCoefficients::for_potential(&q.constants(), 0.2, DEFAULT_C).unwrap();
        let mut s = PhaseState::with_source(&x, &u, ZeroNoise);
        ud_step(&q, &mut s, &k).unwrap();
        assert_eq!(s.x, mom.mean_x);
        assert_eq!(s.u, mom.mean_u);
    }

    #[test]
    fn stationary_moments_match_lyapunov_fixed_point() {
        // A small friction constant keeps the mixing time short.
        let q = Benchmark::quadratic(1, 1.0, 1.0).unwrap();
        let c = 1.0;
        let k = KernelCoefficients::for_potential(&q.constants(), 0.5, c).unwrap();
        let [sxx, _, suu] = stationary_covariance_quadratic(1.0, &k);
        let out = ud_run(&q, &[0.0], 0.5, 400, 6000, 9, c).unwrap();
        let x2: Vec<f64> = out.positions.iter().map(|v| v * v).collect();
        let u2: Vec<f64> = out.velocities.unwrap().iter().map(|v| v * v).collect();
        let (mx, sx) = mean_and_se(&x2);
        let (mu, su) = mean_and_se(&u2);
        assert!((mx - sxx).abs() < 3.0 * sx, "{mx} vs {sxx}");
        assert!((mu - suu).abs() < 3.0 * su, "{mu} vs {suu}");
        // velocity marginal ≈ 1/(cκL) at small steps
        let fine = KernelCoefficients::new(1e-3, 1000.0).unwrap();
        let [_, _, suu] = stationary_covariance_quadratic(1.0, &fine);
        assert!((suu * 1000.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn runs_are_deterministic_and_start_at_rest() {
        let q = Benchmark::quadratic(2, 1.0, 1.0).unwrap();
        let a = ud_run(&q, &[0.5, 0.0], 0.1, 20, 8, 3, DEFAULT_C).unwrap();
        let b = ud_run(&q, &[0.5, 0.0], 0.1, 20, 8, 3, DEFAULT_C).unwrap();
        assert_eq!(a.positions, b.positions);
        let z = ud_run(&q, &[0.5, 0.0], 0.1, 0, 2, 3, DEFAULT_C).unwrap();
        assert_eq!(z.positions, vec![0.5, 0.0, 0.5, 0.0]);
        assert_eq!(z.velocities.unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn planner_example_and_scaling() {
        let c = Constants::new(1.0, 1.0, 1.0).unwrap();
        let p = plan_underdamped(&c, 0.1, 2).unwrap();
        assert!((p.delta / 3.690876787640965e-11 - 1.0).abs() < 1e-12);
        let p4 = plan_underdamped(&c, 0.1, 8).unwrap();
        let r = p4.n_bound / p.n_bound;
        assert!(r > 1.8 && r < 2.2, "{r}");
        let h = plan_underdamped(&c, 0.05, 2).unwrap();
        let r = h.n_bound / p.n_bound;
        assert!(r > 2.0 && r < 2.3, "{r}");
        // the ratio to the overdamped count shrinks as ε does
        let ratio = |e: f64| {
            plan_underdamped(&c, e, 2).unwrap().n_bound / plan_overdamped(&c, e, 2).unwrap().n_bound
        };
        assert!(ratio(0.01) < ratio(0.1) && ratio(0.001) < ratio(0.01));
    }
}
