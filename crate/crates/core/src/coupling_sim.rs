//! Coupled simulations behind the contraction arguments.
//!
//! * Overdamped: two Euler–Maruyama chains driven by one Brownian path, the
//!   second one reflected across the hyperplane orthogonal to `x − y`.
//! * Underdamped: the joint state `θ = (x, u, y, v, τ, ρ, μ, ξ)` where
//!   `(x, u)` follows the gradient-frozen dynamics of the sampler, `(y, v)`
//!   the exact diffusion, and `μ` switches between reflection (`μ = 1`) and
//!   synchronous (`μ = 0`) coupling.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance_fn::{DistanceFn, DistanceFnParams};
use crate::error::{Error, Result};
use crate::potentials::{Benchmark, Constants, Potential};
use crate::rng::{self, purpose, GaussianSource};
use crate::underdamped::{friction_product, KernelCoefficients};
use crate::vector::{dist, dot, mean_and_se, norm, pairwise_sum};

/// Relative threshold below which a direction is treated as undefined.
const DEGENERATE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Overdamped reflection coupling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdCoupledPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub time: f64,
    pub substep: f64,
    pub coalesced: bool,
}

impl OdCoupledPair {
    pub fn new(x: Vec<f64>, y: Vec<f64>, substep: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::usage("x and y differ in length"));
        }
        if !(substep > 0.0) {
            return Err(Error::domain("substep must be positive"));
        }
        let coalesced = x == y;
        Ok(Self {
            x,
            y,
            time: 0.0,
            substep,
            coalesced,
        })
    }

    pub fn distance(&self) -> f64 {
        if self.coalesced {
            0.0
        } else {
            dist(&self.x, &self.y)
        }
    }
}

/// Scratch buffers for [`od_coupled_step`].
#[derive(Debug, Clone, Default)]
pub struct OdScratch {
    gx: Vec<f64>,
    gy: Vec<f64>,
    noise: Vec<f64>,
}

/// One Euler–Maruyama step of the reflection-coupled pair.
///
/// The pair is merged (`y := x`) when the new separation falls below
/// `1e−9·max(R, 1)`, when the step carries `y` across `x` along the
/// reflection direction, or when the Brownian bridge of the separation
/// would have hit zero inside the step (probability `exp(−r r'/(4h))`).
pub fn od_coupled_step<P: Potential + ?Sized, G: GaussianSource>(
    potential: &P,
    pair: &mut OdCoupledPair,
    rng: &mut G,
    scratch: &mut OdScratch,
) -> Result<()> {
    let d = pair.x.len();
    if d != potential.dim() {
        return Err(Error::usage(
            "pair dimension differs from potential dimension",
        ));
    }
    let h = pair.substep;
    let s = (2.0 * h).sqrt();
    scratch.gx.resize(d, 0.0);
    scratch.gy.resize(d, 0.0);
    scratch.noise.resize(d, 0.0);
    rng.fill_standard_normal(&mut scratch.noise);
    potential.grad(&pair.x, &mut scratch.gx);
    if pair.coalesced {
        for i in 0..d {
            pair.x[i] += -h * scratch.gx[i] + s * scratch.noise[i];
        }
        pair.y.copy_from_slice(&pair.x);
        pair.time += h;
        return Ok(());
    }
    potential.grad(&pair.y, &mut scratch.gy);
    let r = dist(&pair.x, &pair.y);
    let gamma: Vec<f64> = pair
        .x
        .iter()
        .zip(&pair.y)
        .map(|(a, b)| (a - b) / r)
        .collect();
    let proj = dot(&gamma, &scratch.noise);
    for i in 0..d {
        let xi = scratch.noise[i];
        pair.x[i] += -h * scratch.gx[i] + s * xi;
        pair.y[i] += -h * scratch.gy[i] + s * (xi - 2.0 * proj * gamma[i]);
    }
    pair.time += h;

    let r_new = dist(&pair.x, &pair.y);
    let along: f64 = (0..d).map(|i| (pair.x[i] - pair.y[i]) * gamma[i]).sum();
    let threshold = 1e-9 * potential.constants().radius.max(1.0);
    let mut bridge_hit = || rng.uniform() < (-(r * r_new) / (4.0 * h)).exp();
    if r_new < threshold || along <= 0.0 || bridge_hit() {
        pair.y.copy_from_slice(&pair.x);
        pair.coalesced = true;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OdCouplingSeries {
    pub times: Vec<f64>,
    /// Ensemble mean of `f(‖x_t − y_t‖)`.
    pub mean_f: Vec<f64>,
    pub std_error: Vec<f64>,
    pub coalesced_fraction: Vec<f64>,
    pub pairs: usize,
    pub substep: f64,
    pub distance_fn: DistanceFnParams,
    /// Least-squares slope of `log E f` against time over the fit window.
    pub fitted_rate: Option<f64>,
    pub fit_points: usize,
}

/// Runs `pairs` reflection-coupled pairs from `x0` (fixed) and `y0` drawn from
/// `reference` (row-major), recording `E f(r_t)` every `record_every` steps.
pub fn od_coupling_experiment<P: Potential + ?Sized>(
    potential: &P,
    x0: &[f64],
    reference: &[f64],
    f: &DistanceFn,
    substep: f64,
    steps: u64,
    record_every: u64,
    seed: u64,
) -> Result<OdCouplingSeries> {
    let d = potential.dim();
    if x0.len() != d || reference.is_empty() || !reference.len().is_multiple_of(d) {
        return Err(Error::usage(
            "x0/reference shapes do not match the potential",
        ));
    }
    if record_every == 0 {
        return Err(Error::usage("record_every must be positive"));
    }
    let pairs = reference.len() / d;
    let records = (steps / record_every) as usize + 1;
    // per pair: f-values at each record time and coalescence flags
    let per_pair: Vec<Result<Vec<(f64, bool)>>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut pair =
                OdCoupledPair::new(x0.to_vec(), reference[i * d..(i + 1) * d].to_vec(), substep)?;
            let mut g = rng::stream(seed, purpose::COUPLING, i as u64);
            let mut scratch = OdScratch::default();
            let mut out = Vec::with_capacity(records);
            out.push((f.f_unchecked(pair.distance()), pair.coalesced));
            for k in 1..=steps {
                od_coupled_step(potential, &mut pair, &mut g, &mut scratch)?;
                if k % record_every == 0 {
                    out.push((f.f_unchecked(pair.distance()), pair.coalesced));
                }
            }
            Ok(out)
        })
        .collect();
    let per_pair = per_pair.into_iter().collect::<Result<Vec<_>>>()?;

    let mut times = Vec::with_capacity(records);
    let mut mean_f = Vec::with_capacity(records);
    let mut std_error = Vec::with_capacity(records);
    let mut coalesced_fraction = Vec::with_capacity(records);
    for k in 0..records {
        let vals: Vec<f64> = per_pair.iter().map(|p| p[k].0).collect();
        let (m, se) = mean_and_se(&vals);
        times.push(k as f64 * record_every as f64 * substep);
        mean_f.push(m);
        std_error.push(se);
        coalesced_fraction.push(per_pair.iter().filter(|p| p[k].1).count() as f64 / pairs as f64);
    }
    // Fit while at least 1% of the pairs (and 100 pairs) are still apart.
    let min_alive = (pairs as f64 * 0.01).max(100.0) / pairs as f64;
    let (fx, fy): (Vec<f64>, Vec<f64>) = (0..records)
        .filter(|&k| mean_f[k] > 0.0 && 1.0 - coalesced_fraction[k] >= min_alive)
        .map(|k| (times[k], mean_f[k].ln()))
        .unzip();
    let fitted_rate = if fx.len() >= 3 {
        crate::vector::linear_fit(&fx, &fy).map(|(s, _)| s)
    } else {
        None
    };
    Ok(OdCouplingSeries {
        times,
        mean_f,
        std_error,
        coalesced_fraction,
        pairs,
        substep,
        distance_fn: f.params(),
        fitted_rate,
        fit_points: fx.len(),
    })
}

/// Contraction rate `e^{−LR²/4}·min(4/R², m/2)` of `E f(r_t)` for the
/// overdamped reflection coupling (with `α_f = L/4`, `R_f = R`).
pub fn od_contraction_rate(c: &Constants) -> f64 {
    let lr2 = c.smoothness * c.radius * c.radius;
    let geometric = if c.radius > 0.0 {
        4.0 / (c.radius * c.radius)
    } else {
        f64::INFINITY
    };
    (-lr2 / 4.0).exp() * geometric.min(c.convexity / 2.0)
}

// ---------------------------------------------------------------------------
// Underdamped switched coupling

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingConstants {
    pub c: f64,
    pub kappa: f64,
    pub smoothness: f64,
    pub radius: f64,
    /// `c·κ·L`.
    pub ckl: f64,
    /// `T_sync = 3(cκ)² ln 10`.
    pub t_sync: f64,
    /// `C_sync = e^{−11LR²/4} / (600 (cκ)² ln 10)`.
    pub c_sync: f64,
    /// `C_ref = min(e^{−11LR²/4}/(1375κLR²), e^{−11LR²/4}/(4cκ))`.
    pub c_ref: f64,
}

impl CouplingConstants {
    pub fn new(constants: &Constants, c: f64) -> Result<Self> {
        let ckl = friction_product(constants, c)?;
        let kappa = constants.kappa();
        let (l, r) = (constants.smoothness, constants.radius);
        let ck = c * kappa;
        let ln10 = std::f64::consts::LN_10;
        let damp = (-11.0 * l * r * r / 4.0).exp();
        let ref_a = if r > 0.0 {
            damp / (1375.0 * kappa * l * r * r)
        } else {
            f64::INFINITY
        };
        Ok(Self {
            c,
            kappa,
            smoothness: l,
            radius: r,
            ckl,
            t_sync: 3.0 * ck * ck * ln10,
            c_sync: damp / (600.0 * ck * ck * ln10),
            c_ref: ref_a.min(damp / (4.0 * ck)),
        })
    }

    /// `√5·R`, the switching radius.
    pub fn switch_radius(&self) -> f64 {
        5f64.sqrt() * self.radius
    }

    /// `(1 + 2/(cκ))‖z‖ + ‖z + w‖`.
    pub fn weighted_distance(&self, z: &[f64], w: &[f64]) -> f64 {
        let zw: Vec<f64> = z.iter().zip(w).map(|(a, b)| a + b).collect();
        (1.0 + 2.0 / (self.c * self.kappa)) * norm(z) + norm(&zw)
    }

    /// `√(‖z‖² + ‖z + w‖²)`.
    pub fn switch_norm(z: &[f64], w: &[f64]) -> f64 {
        let zw: f64 = z.iter().zip(w).map(|(a, b)| (a + b) * (a + b)).sum();
        (dot(z, z) + zw).sqrt()
    }

    /// Parameters the Lyapunov function's `f` must be built with.
    pub fn distance_fn_params(&self) -> Result<DistanceFnParams> {
        DistanceFnParams::for_underdamped(self.smoothness, self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub tau: f64,
    pub rho: f64,
    /// `true` = reflection coupling, `false` = synchronous.
    pub mu: bool,
    pub xi: f64,
    /// `ξ` just before any reset at the current time.
    pub xi_left: f64,
    pub time: f64,
    /// Position at the last grid time `⌊t/δ⌋δ`.
    pub anchor: Vec<f64>,
    /// Substeps taken so far.
    pub substeps: u64,
    anchor_grad: Vec<f64>,
    /// `‖∇U(x_t) − ∇U(anchor)‖` at the current time.
    gap: f64,
}

impl CouplingState {
    /// Builds `θ₀` from a coupled draw of the two initial conditions.
    ///
    /// Starts in synchronous mode (`τ = 0`) when the pair is at least `√5R`
    /// apart and in reflection mode (`τ = −T_sync`) otherwise.
    pub fn initialize<P: Potential + ?Sized>(
        potential: &P,
        consts: &CouplingConstants,
        x: Vec<f64>,
        u: Vec<f64>,
        y: Vec<f64>,
        v: Vec<f64>,
    ) -> Result<Self> {
        let d = potential.dim();
        if [x.len(), u.len(), y.len(), v.len()].iter().any(|&n| n != d) {
            return Err(Error::usage(
                "coupling state vectors must all have the potential's dimension",
            ));
        }
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let far = CouplingConstants::switch_norm(&z, &w) >= consts.switch_radius();
        let (_, anchor_grad) = potential.eval(&x)?;
        Ok(Self {
            anchor: x.clone(),
            x,
            u,
            y,
            v,
            tau: if far { 0.0 } else { -consts.t_sync },
            rho: consts.weighted_distance(&z, &w),
            mu: !far,
            xi: 0.0,
            xi_left: 0.0,
            time: 0.0,
            substeps: 0,
            anchor_grad,
            gap: 0.0,
        })
    }

    pub fn z(&self) -> Vec<f64> {
        self.x.iter().zip(&self.y).map(|(a, b)| a - b).collect()
    }

    pub fn w(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(a, b)| a - b).collect()
    }
}

/// Lyapunov function
/// `μ·f((1+2/(cκ))‖z‖ + ‖z+w‖) + (1−μ)·(f(ρ)e^{−C_sync(t−τ)} + ξ)`.
pub fn lyapunov_eval(
    state: &CouplingState,
    f: &DistanceFn,
    consts: &CouplingConstants,
) -> Result<f64> {
    check_distance_fn(f, consts)?;
    Ok(lyapunov_unchecked(state, f, consts))
}

fn lyapunov_unchecked(state: &CouplingState, f: &DistanceFn, consts: &CouplingConstants) -> f64 {
    if state.mu {
        f.f_unchecked(consts.weighted_distance(&state.z(), &state.w()))
    } else {
        f.f_unchecked(state.rho) * (-consts.c_sync * (state.time - state.tau)).exp() + state.xi
    }
}

fn check_distance_fn(f: &DistanceFn, consts: &CouplingConstants) -> Result<()> {
    let want = consts.distance_fn_params()?;
    let got = f.params();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if close(want.alpha_f, got.alpha_f) && close(want.r_f, got.r_f) {
        Ok(())
    } else {
        Err(Error::usage(format!(
            "Lyapunov function needs f with alpha_f = L/4 = {} and r_f = √11·R = {} (got {}, {})",
            want.alpha_f, want.r_f, got.alpha_f, got.r_f
        )))
    }
}

/// Advances a [`CouplingState`] by substeps of a fixed size.
///
/// Each substep applies the exact Ornstein–Uhlenbeck transition with the
/// force frozen over the substep: the `x` force is `∇U` at the grid anchor
/// (so the `(x, u)` marginal is exactly the sampler's chain), the `y` force
/// is `∇U(y)` at the start of the substep. Both are driven by the same
/// Gaussian increments, reflected by `I − 2γγᵀ` for `y` while `μ = 1`.
pub struct UdCouplingIntegrator<'a, P: ?Sized> {
    potential: &'a P,
    consts: CouplingConstants,
    delta: f64,
    substep: f64,
    per_delta: u64,
    kernel: KernelCoefficients,
    xi_decay: f64,
}

impl<'a, P: Potential + ?Sized> UdCouplingIntegrator<'a, P> {
    pub fn new(
        potential: &'a P,
        consts: CouplingConstants,
        delta: f64,
        substep: f64,
    ) -> Result<Self> {
        if !(delta > 0.0 && substep > 0.0) {
            return Err(Error::domain("delta and substep must be positive"));
        }
        let ratio = delta / substep;
        let per_delta = ratio.round();
        if substep > delta || (ratio - per_delta).abs() > 1e-9 * ratio {
            return Err(Error::usage(format!(
                "substep {substep} must divide delta {delta}"
            )));
        }
        let ck = consts.c * consts.kappa;
        Ok(Self {
            potential,
            kernel: KernelCoefficients::new(substep, consts.ckl)?,
            consts,
            delta,
            substep,
            per_delta: per_delta as u64,
            xi_decay: (-substep / (3.0 * ck * ck)).exp(),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn substep(&self) -> f64 {
        self.substep
    }

    /// Advances one substep and returns `true` if a synchronous phase ended
    /// at the new time (the moment the jump inequality applies to).
    pub fn step<G: GaussianSource>(&self, s: &mut CouplingState, rng: &mut G) -> Result<bool> {
        let d = s.x.len();
        let k = &self.kernel;
        let [l11, l21, l22] = k.cholesky();
        let mut gy = vec![0.0; d];
        self.potential.grad(&s.y, &mut gy);

        let phi: Vec<f64> = (0..d).map(|i| s.x[i] - s.y[i] + s.u[i] - s.v[i]).collect();
        let phi_norm = norm(&phi);
        let scale = norm(&s.x).max(norm(&s.y)).max(1.0);
        let gamma: Option<Vec<f64>> = (s.mu && phi_norm > DEGENERATE * scale)
            .then(|| phi.iter().map(|p| p / phi_norm).collect());

        let mut e1 = vec![0.0; d];
        let mut e2 = vec![0.0; d];
        rng.fill_standard_normal(&mut e1);
        rng.fill_standard_normal(&mut e2);
        let (mut r1, mut r2) = (e1.clone(), e2.clone());
        if let Some(g) = &gamma {
            let (p1, p2) = (dot(g, &e1), dot(g, &e2));
            for i in 0..d {
                r1[i] -= 2.0 * p1 * g[i];
                r2[i] -= 2.0 * p2 * g[i];
            }
        }
        for i in 0..d {
            let (x, u, ga) = (s.x[i], s.u[i], s.anchor_grad[i]);
            s.x[i] = x + k.mean_x_u * u + k.mean_x_grad * ga + l11 * e1[i];
            s.u[i] = k.mean_u_u * u + k.mean_u_grad * ga + l21 * e1[i] + l22 * e2[i];
            let (y, v) = (s.y[i], s.v[i]);
            s.y[i] = y + k.mean_x_u * v + k.mean_x_grad * gy[i] + l11 * r1[i];
            s.v[i] = k.mean_u_u * v + k.mean_u_grad * gy[i] + l21 * r1[i] + l22 * r2[i];
        }
        s.substeps += 1;
        s.time = s.substeps as f64 * self.substep;

        // ξ: trapezoid on the exponentially discounted gradient-freeze gap.
        let mut gx = vec![0.0; d];
        self.potential.grad(&s.x, &mut gx);
        let gap_new = dist(&gx, &s.anchor_grad);
        let w = 4.0 / self.consts.ckl;
        s.xi = s.xi * self.xi_decay + w * 0.5 * self.substep * (s.gap * self.xi_decay + gap_new);
        s.xi_left = s.xi;
        if s.substeps.is_multiple_of(self.per_delta) {
            s.anchor.copy_from_slice(&s.x);
            s.anchor_grad = gx;
            s.gap = 0.0;
        } else {
            s.gap = gap_new;
        }

        // τ, ρ, μ at the new time.
        let t = s.time;
        let due = t >= s.tau + self.consts.t_sync;
        let ended_sync = !s.mu && due;
        if due {
            let (z, w) = (s.z(), s.w());
            if CouplingConstants::switch_norm(&z, &w) >= self.consts.switch_radius() {
                s.tau = t;
                s.rho = self.consts.weighted_distance(&z, &w);
                s.xi = 0.0;
            }
        }
        s.mu = t >= s.tau + self.consts.t_sync;
        Ok(ended_sync)
    }
}

/// One substep of the coupled dynamics (convenience wrapper that validates
/// the step sizes on every call).
pub fn ud_coupled_step<P: Potential + ?Sized, G: GaussianSource>(
    potential: &P,
    state: &mut CouplingState,
    consts: &CouplingConstants,
    delta: f64,
    substep: f64,
    rng: &mut G,
) -> Result<bool> {
    UdCouplingIntegrator::new(potential, *consts, delta, substep)?.step(state, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpViolation {
    pub time: f64,
    /// `f((1+2/(cκ))‖z‖ + ‖z+w‖)` right after the synchronous phase.
    pub value_after: f64,
    /// `f(ρ)·e^{−C_sync T_sync} + ξ`.
    pub bound: f64,
    pub tolerance: f64,
}

/// Checks the jump inequality at every end of a synchronous phase in `trace`.
///
/// A phase ends between consecutive states `a → b` when `a` is synchronous
/// and `b` is either in reflection mode or starts a new synchronous phase
/// (`τ` moved). Tolerance is `1e−3·f(ρ)`.
pub fn check_jump_nonpositive(
    trace: &[CouplingState],
    f: &DistanceFn,
    consts: &CouplingConstants,
) -> Result<Vec<JumpViolation>> {
    check_distance_fn(f, consts)?;
    let mut out = Vec::new();
    for pair in trace.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.mu || !(b.mu || b.tau > a.tau) {
            continue;
        }
        let f_rho = f.f_unchecked(a.rho);
        let bound = f_rho * (-consts.c_sync * consts.t_sync).exp() + b.xi_left;
        let value_after = f.f_unchecked(consts.weighted_distance(&b.z(), &b.w()));
        let tolerance = 1e-3 * f_rho;
        if value_after > bound + tolerance {
            out.push(JumpViolation {
                time: b.time,
                value_after,
                bound,
                tolerance,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UdCouplingConfig {
    pub x0: Vec<f64>,
    pub c: f64,
    pub delta: f64,
    pub substep: f64,
    /// Total simulated time.
    pub horizon: f64,
    /// Record `L(θ)` every this many `δ`-steps.
    pub record_every: u64,
    pub trajectories: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UdCouplingReport {
    pub constants: CouplingConstants,
    pub times: Vec<f64>,
    pub mean_lyapunov: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Standard error of consecutive differences (paired across trajectories).
    pub diff_std_error: Vec<f64>,
    pub started_synchronous: usize,
    pub sync_phase_ends: usize,
    pub jump_violations: Vec<JumpViolation>,
    /// Smallest `(bound − value_after)/f(ρ)` over all phase ends.
    pub min_jump_slack: f64,
    /// Same, with `ξ` left out of the bound (how much the error budget
    /// was needed).
    pub min_jump_slack_without_xi: f64,
    /// States with `μ = 1` outside the `√5R` ball.
    pub ball_violations: usize,
    pub max_ball_excess: f64,
    /// States where `L(θ) < (e^{−11LR²/4}/5)(‖z‖ + ‖w‖)`.
    pub sandwich_violations: usize,
    /// `200 δ √(R² + d/m) / κ`.
    pub discretization_floor: f64,
    pub trajectories: usize,
    pub substep: f64,
    pub initial_coupling: String,
}

struct TrajectoryOutcome {
    lyapunov: Vec<f64>,
    started_synchronous: bool,
    sync_phase_ends: usize,
    jump_violations: Vec<JumpViolation>,
    min_slack: f64,
    min_slack_no_xi: f64,
    ball_violations: usize,
    max_ball_excess: f64,
    sandwich_violations: usize,
}

/// Runs an ensemble of coupled trajectories.
///
/// `(x, u)` starts at `(x0, 0)`; `y` is an exact draw from the benchmark's
/// target and `v ~ N(0, I/(cκL))`, coupled independently of `x` (an
/// approximation of the W₁-optimal initial coupling).
pub fn ud_coupling_experiment(
    potential: &Benchmark,
    cfg: &UdCouplingConfig,
) -> Result<UdCouplingReport> {
    let consts = CouplingConstants::new(&potential.constants(), cfg.c)?;
    let f = DistanceFn::new(consts.distance_fn_params()?)?;
    let integ = UdCouplingIntegrator::new(potential, consts, cfg.delta, cfg.substep)?;
    let d = potential.dim();
    if cfg.x0.len() != d || cfg.trajectories == 0 || cfg.record_every == 0 {
        return Err(Error::usage("bad coupling experiment configuration"));
    }
    let ys = potential
        .sample_exact(cfg.trajectories, cfg.seed ^ 0x5eed)
        .ok_or_else(|| Error::usage("coupling experiments need a target with an exact sampler"))?;
    let sub_per_record = integ.per_delta * cfg.record_every;
    let records = (cfg.horizon / (cfg.delta * cfg.record_every as f64)).floor() as u64;
    let c = potential.constants();
    let sandwich_k = (-11.0 * c.smoothness * c.radius * c.radius / 4.0).exp() / 5.0;
    let v_sd = 1.0 / consts.ckl.sqrt();

    let outcomes: Vec<Result<TrajectoryOutcome>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut init = rng::stream(cfg.seed, purpose::INIT, i as u64);
            let v: Vec<f64> = (0..d).map(|_| v_sd * init.standard_normal()).collect();
            let mut s = CouplingState::initialize(
                potential,
                &consts,
                cfg.x0.clone(),
                vec![0.0; d],
                ys[i * d..(i + 1) * d].to_vec(),
                v,
            )?;
            let mut g: ChaCha8Rng = rng::stream(cfg.seed, purpose::COUPLING, i as u64);
            let mut o = TrajectoryOutcome {
                lyapunov: Vec::with_capacity(records as usize + 1),
                started_synchronous: !s.mu,
                sync_phase_ends: 0,
                jump_violations: Vec::new(),
                min_slack: f64::INFINITY,
                min_slack_no_xi: f64::INFINITY,
                ball_violations: 0,
                max_ball_excess: 0.0,
                sandwich_violations: 0,
            };
            o.lyapunov.push(lyapunov_unchecked(&s, &f, &consts));
            let mut prev = s.clone();
            for _ in 0..records {
                for _ in 0..sub_per_record {
                    let before_mu = s.mu;
                    if !before_mu {
                        prev.clone_from(&s);
                    }
                    let ended = integ.step(&mut s, &mut g)?;
                    if ended {
                        o.sync_phase_ends += 1;
                        let f_rho = f.f_unchecked(prev.rho);
                        let after = f.f_unchecked(consts.weighted_distance(&s.z(), &s.w()));
                        let base = f_rho * (-consts.c_sync * consts.t_sync).exp();
                        o.min_slack = o.min_slack.min((base + s.xi_left - after) / f_rho);
                        o.min_slack_no_xi = o.min_slack_no_xi.min((base - after) / f_rho);
                        o.jump_violations.extend(check_jump_nonpositive(
                            &[prev.clone(), s.clone()],
                            &f,
                            &consts,
                        )?);
                    }
                    if s.mu {
                        let (z, w) = (s.z(), s.w());
                        let excess =
                            CouplingConstants::switch_norm(&z, &w) - consts.switch_radius();
                        if excess > 0.0 {
                            o.ball_violations += 1;
                            o.max_ball_excess = o.max_ball_excess.max(excess);
                        }
                    }
                }
                let l = lyapunov_unchecked(&s, &f, &consts);
                if l < sandwich_k * (norm(&s.z()) + norm(&s.w())) {
                    o.sandwich_violations += 1;
                }
                o.lyapunov.push(l);
            }
            Ok(o)
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let n_rec = records as usize + 1;
    let mut times = Vec::with_capacity(n_rec);
    let mut mean_lyapunov = Vec::with_capacity(n_rec);
    let mut std_error = Vec::with_capacity(n_rec);
    let mut diff_std_error = Vec::with_capacity(n_rec);
    for k in 0..n_rec {
        let vals: Vec<f64> = outcomes.iter().map(|o| o.lyapunov[k]).collect();
        let (m, se) = mean_and_se(&vals);
        times.push(k as f64 * cfg.delta * cfg.record_every as f64);
        mean_lyapunov.push(m);
        std_error.push(se);
        if k > 0 {
            let diffs: Vec<f64> = outcomes
                .iter()
                .map(|o| o.lyapunov[k] - o.lyapunov[k - 1])
                .collect();
            diff_std_error.push(mean_and_se(&diffs).1);
        } else {
            diff_std_error.push(0.0);
        }
    }
    let floor =
        200.0 * cfg.delta * (c.radius * c.radius + d as f64 / c.convexity).sqrt() / c.kappa();
    Ok(UdCouplingReport {
        constants: consts,
        times,
        mean_lyapunov,
        std_error,
        diff_std_error,
        started_synchronous: outcomes.iter().filter(|o| o.started_synchronous).count(),
        sync_phase_ends: outcomes.iter().map(|o| o.sync_phase_ends).sum(),
        jump_violations: outcomes
            .iter()
            .flat_map(|o| o.jump_violations.clone())
            .collect(),
        min_jump_slack: outcomes
            .iter()
            .map(|o| o.min_slack)
            .fold(f64::INFINITY, f64::min),
        min_jump_slack_without_xi: outcomes
            .iter()
            .map(|o| o.min_slack_no_xi)
            .fold(f64::INFINITY, f64::min),
        ball_violations: outcomes.iter().map(|o| o.ball_violations).sum(),
        max_ball_excess: outcomes
            .iter()
            .map(|o| o.max_ball_excess)
            .fold(0.0, f64::max),
        sandwich_violations: outcomes.iter().map(|o| o.sandwich_violations).sum(),
        discretization_floor: floor,
        trajectories: cfg.trajectories,
        substep: cfg.substep,
        initial_coupling: "independent (approximates the W1-optimal coupling)".into(),
    })
}

impl UdCouplingReport {
    /// Worst `E L(t_{k+1}) − max(E L(t_k), floor) − 3·SE_diff` over the
    /// series; nonpositive means `E L` never rose above the larger of its
    /// previous value and the discretization floor by more than noise.
    pub fn worst_increase_margin(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for k in 1..self.times.len() {
            let base = self.mean_lyapunov[k - 1].max(self.discretization_floor);
            worst = worst.max(self.mean_lyapunov[k] - base - 3.0 * self.diff_std_error[k]);
        }
        worst
    }

    /// Largest raw rise of `E L` between consecutive records.
    pub fn largest_raw_increase(&self) -> f64 {
        self.mean_lyapunov
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Ensemble mean of `f` over pairwise distances (helper for reports).
pub fn mean_f_of_distances(f: &DistanceFn, distances: &[f64]) -> f64 {
    let v: Vec<f64> = distances.iter().map(|&r| f.f_unchecked(r)).collect();
    pairwise_sum(&v) / v.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ZeroNoise;

    fn mixture() -> Benchmark {
        Benchmark::symmetric_mixture(2, 1.0, 1.0).unwrap()
    }

    #[test]
    fn od_identical_pairs_stay_identical() {
        let q = Benchmark::quadratic(2, 1.0, 1.0).unwrap();
        let mut p = OdCoupledPair::new(vec![0.3, 0.1], vec![0.3, 0.1], 1e-3).unwrap();
        assert!(p.coalesced);
        let mut g = rng::stream(1, purpose::COUPLING, 0);
        let mut sc = OdScratch::default();
        for _ in 0..100 {
            od_coupled_step(&q, &mut p, &mut g, &mut sc).unwrap();
            assert_eq!(p.x, p.y);
        }
    }

    #[test]
    fn od_reflection_in_1d_negates_the_noise() {
        // Zero drift: the separation moves by exactly twice the noise.
        let flat = crate::potentials::Redeclared {
            inner: Benchmark::quadratic(1, 1e-300, 0.0).unwrap(),
            constants: Constants::new(1.0, 1.0, 1.0).unwrap(),
        };
        struct Fixed(f64);
        impl GaussianSource for Fixed {
            fn standard_normal(&mut self) -> f64 {
                self.0
            }
            fn uniform(&mut self) -> f64 {
                1.0
            }
        }
        let h = 0.01;
        let mut p = OdCoupledPair::new(vec![1.0], vec![0.0], h).unwrap();
        od_coupled_step(&flat, &mut p, &mut Fixed(0.5), &mut OdScratch::default()).unwrap();
        let s = (2.0 * h).sqrt() * 0.5;
        assert!((p.x[0] - (1.0 + s)).abs() < 1e-12);
        assert!((p.y[0] - (0.0 - s)).abs() < 1e-12);
    }

    #[test]
    fn constants_match_their_formulas() {
        let c = mixture().constants();
        let k = CouplingConstants::new(&c, 1000.0).unwrap();
        let ln10 = std::f64::consts::LN_10;
        assert!((k.t_sync - 3.0 * 4000.0f64.powi(2) * ln10).abs() < 1e-6);
        let damp = (-11.0 * 2.0 * 16.0 / 4.0f64).exp();
        assert!((k.c_sync / (damp / (600.0 * 16e6 * ln10)) - 1.0).abs() < 1e-12);
        let want = (damp / (1375.0 * 4.0 * 2.0 * 16.0)).min(damp / 4000.0);
        assert!((k.c_ref / want - 1.0).abs() < 1e-12);
        // c_sync · T_sync = e^{−11LR²/4}/200
        assert!((k.c_sync * k.t_sync / (damp / 200.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        let b = mixture();
        let k = CouplingConstants::new(&b.constants(), 10.0).unwrap();
        let f = DistanceFn::new(k.distance_fn_params().unwrap()).unwrap();
        let z = vec![0.0; 2];
        let s =
            CouplingState::initialize(&b, &k, z.clone(), z.clone(), z.clone(), z.clone()).unwrap();
        assert!(s.mu);
        assert_eq!(lyapunov_eval(&s, &f, &k).unwrap(), 0.0);
        let far =
            CouplingState::initialize(&b, &k, vec![20.0, 0.0], z.clone(), z.clone(), z.clone())
                .unwrap();
        assert!(!far.mu && far.tau == 0.0);
        let l = lyapunov_eval(&far, &f, &k).unwrap();
        assert_eq!(l, f.f_unchecked(far.rho));
        let wrong = DistanceFn::new(DistanceFnParams::new(1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(
            lyapunov_eval(&far, &wrong, &k),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn substep_must_divide_delta() {
        let b = mixture();
        let k = CouplingConstants::new(&b.constants(), 10.0).unwrap();
        assert!(matches!(
            UdCouplingIntegrator::new(&b, k, 0.1, 0.03),
            Err(Error::Usage(_))
        ));
        assert!(UdCouplingIntegrator::new(&b, k, 0.1, 0.025).is_ok());
    }

    #[test]
    fn coincident_processes_stay_together_without_freeze_error() {
        let b = mixture();
        let k = CouplingConstants::new(&b.constants(), 10.0).unwrap();
        let x = vec![0.4, -0.2];
        let u = vec![0.01, 0.0];
        let mut s = CouplingState::initialize(&b, &k, x.clone(), u.clone(), x, u).unwrap();
        // δ = substep: the anchor is refreshed every substep, so ∇̃ = ∇.
        let integ = UdCouplingIntegrator::new(&b, k, 0.05, 0.05).unwrap();
        let mut g = rng::stream(3, purpose::COUPLING, 0);
        for _ in 0..500 {
            integ.step(&mut s, &mut g).unwrap();
            assert_eq!(s.x, s.y);
            assert_eq!(s.u, s.v);
        }
    }

    #[test]
    fn xi_is_nonnegative_and_resets() {
        let b = mixture();
        let k = CouplingConstants::new(&b.constants(), 2.0).unwrap();
        let integ = UdCouplingIntegrator::new(&b, k, 0.5, 0.05).unwrap();
        let z = vec![0.0; 2];
        let mut s =
            CouplingState::initialize(&b, &k, vec![30.0, 0.0], z.clone(), z.clone(), z).unwrap();
        assert!(!s.mu);
        let mut g = rng::stream(4, purpose::COUPLING, 0);
        let mut last_tau = s.tau;
        let mut last_xi = s.xi;
        for _ in 0..20_000 {
            integ.step(&mut s, &mut g).unwrap();
            assert!(s.xi >= 0.0);
            if s.tau != last_tau {
                assert_eq!(s.xi, 0.0);
                last_tau = s.tau;
            } else if !s.mu {
                // nondecreasing up to the (tiny) exponential discount
                assert!(s.xi >= last_xi * (1.0 - 1e-3));
            }
            last_xi = s.xi;
        }
    }

    #[test]
    fn forced_violation_is_reported() {
        let b = mixture();
        let k = CouplingConstants::new(&b.constants(), 10.0).unwrap();
        let f = DistanceFn::new(k.distance_fn_params().unwrap()).unwrap();
        let z = vec![0.0; 2];
        let mut a =
            CouplingState::initialize(&b, &k, vec![20.0, 0.0], z.clone(), z.clone(), z.clone())
                .unwrap();
        a.rho = 0.01;
        let mut after = a.clone();
        after.mu = true;
        after.time = k.t_sync;
        let v = check_jump_nonpositive(&[a.clone(), after], &f, &k).unwrap();
        assert_eq!(v.len(), 1);
        assert!(check_jump_nonpositive(&[a], &f, &k).unwrap().is_empty());
    }

    #[test]
    fn zero_noise_coupling_is_deterministic() {
        let b = mixture();
        let k = CouplingConstants::new(&b.constants(), 10.0).unwrap();
        let integ = UdCouplingIntegrator::new(&b, k, 0.1, 0.05).unwrap();
        let z = vec![0.0; 2];
        let mut s1 =
            CouplingState::initialize(&b, &k, vec![1.0, 0.5], z.clone(), z.clone(), z.clone())
                .unwrap();
        let mut s2 = s1.clone();
        for _ in 0..10 {
            integ.step(&mut s1, &mut ZeroNoise).unwrap();
            integ.step(&mut s2, &mut ZeroNoise).unwrap();
        }
        assert_eq!(s1, s2);
    }
}
