//! Target potentials `U` with declared regularity constants.
//!
//! A potential is usable by the samplers when it has an `L`-Lipschitz
//! gradient, a stationary point at the origin, and is `m`-strongly convex
//! for pairs of points further than `R` apart. Those constants are declared,
//! not inferred; [`audit_constants`] searches for counterexamples.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, purpose, GaussianSource};
use crate::vector::{dist, dot, first_non_finite, norm};

/// Declared regularity constants of a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Gradient Lipschitz constant `L`.
    pub smoothness: f64,
    /// Strong convexity constant `m` outside the ball.
    pub convexity: f64,
    /// Radius `R` beyond which strong convexity holds.
    pub radius: f64,
}

impl Constants {
    pub fn new(smoothness: f64, convexity: f64, radius: f64) -> Result<Self> {
        if !(smoothness > 0.0 && convexity > 0.0 && radius >= 0.0) {
            return Err(Error::domain(format!(
                "constants need L > 0, m > 0, R >= 0 (got L={smoothness}, m={convexity}, R={radius})"
            )));
        }
        if smoothness < convexity {
            return Err(Error::domain(format!(
                "condition number L/m = {} < 1",
                smoothness / convexity
            )));
        }
        Ok(Self {
            smoothness,
            convexity,
            radius,
        })
    }

    /// Condition number `κ = L/m`.
    pub fn kappa(&self) -> f64 {
        self.smoothness / self.convexity
    }

    /// `L R²`, the nonconvexity measure every rate is exponential in.
    pub fn nonconvexity(&self) -> f64 {
        self.smoothness * self.radius * self.radius
    }
}

/// A differentiable potential on `R^d`.
///
/// `value_grad` is the unchecked hot-path entry point; [`Potential::eval`]
/// validates its input first.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;

    fn constants(&self) -> Constants;

    /// Writes `∇U(x)` into `grad` and returns `U(x)`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn grad(&self, x: &[f64], grad: &mut [f64]) {
        self.value_grad(x, grad);
    }

    /// Checked evaluation of `(U(x), ∇U(x))`.
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.dim() {
            return Err(Error::usage(format!(
                "state has length {} but the potential is {}-dimensional",
                x.len(),
                self.dim()
            )));
        }
        if let Some(i) = first_non_finite(x) {
            return Err(Error::domain(format!("non-finite input at coordinate {i}")));
        }
        let mut g = vec![0.0; x.len()];
        let v = self.value_grad(x, &mut g);
        Ok((v, g))
    }
}

impl<P: Potential + ?Sized> Potential for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn constants(&self) -> Constants {
        (**self).constants()
    }
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).value_grad(x, grad)
    }
}

impl<P: Potential + ?Sized> Potential for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn constants(&self) -> Constants {
        (**self).constants()
    }
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).value_grad(x, grad)
    }
}

/// Serializable description of a benchmark potential.
///
/// ```toml
/// kind = "gaussian-mixture"
/// dim = 2
/// centers = [[1.0, 0.0], [-1.0, 0.0]]
/// variance = 1.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `U(x) = m‖x‖²/2`. `radius` is the declared `R` (any `R ≥ 0` is valid).
    Quadratic {
        dim: usize,
        m: f64,
        #[serde(default)]
        radius: f64,
    },
    /// Negative log-density of a Gaussian mixture with shared covariance `σ² I`.
    #[serde(alias = "gaussian-mixture-equal-covariance")]
    GaussianMixture {
        dim: usize,
        centers: Vec<Vec<f64>>,
        variance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Piecewise-quadratic double well along the first axis, quadratic in the rest.
    SmoothedDoubleWell {
        dim: usize,
        separation: f64,
        smoothness: f64,
    },
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Benchmark> {
        Benchmark::new(self.clone())
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Quadratic {
        m: f64,
    },
    Mixture {
        /// Row-major `k × d`.
        centers: Vec<f64>,
        log_weights: Vec<f64>,
        inv_var: f64,
    },
    DoubleWell {
        /// Half the well separation: the barrier region is `|x₁| ≤ a/2`.
        half_gap: f64,
        l: f64,
    },
}

/// One of the shipped benchmark potentials, with constants derived from its
/// parameters.
#[derive(Debug, Clone)]
pub struct Benchmark {
    spec: PotentialSpec,
    dim: usize,
    kind: Kind,
    constants: Constants,
}

impl Benchmark {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        let (dim, kind, constants) = match &spec {
            PotentialSpec::Quadratic { dim, m, radius } => {
                if !(*m > 0.0) {
                    return Err(Error::domain("quadratic needs m > 0"));
                }
                (
                    *dim,
                    Kind::Quadratic { m: *m },
                    Constants::new(*m, *m, *radius)?,
                )
            }
            PotentialSpec::GaussianMixture {
                dim,
                centers,
                variance,
                weights,
            } => {
                if centers.is_empty() {
                    return Err(Error::usage("mixture needs at least one center"));
                }
                if centers.iter().any(|c| c.len() != *dim) {
                    return Err(Error::usage("every mixture center must have length `dim`"));
                }
                if !(*variance > 0.0) {
                    return Err(Error::domain("mixture variance must be positive"));
                }
                let w = match weights {
                    Some(w) if w.len() != centers.len() => {
                        return Err(Error::usage("mixture weights and centers differ in length"))
                    }
                    Some(w) if w.iter().any(|v| !(*v > 0.0)) => {
                        return Err(Error::domain("mixture weights must be positive"))
                    }
                    Some(w) => w.clone(),
                    None => vec![1.0; centers.len()],
                };
                let total: f64 = w.iter().sum();
                let log_weights = w.iter().map(|v| (v / total).ln()).collect();
                let mut diam: f64 = 0.0;
                for a in centers {
                    for b in centers {
                        diam = diam.max(dist(a, b));
                    }
                }
                let inv_var = 1.0 / variance;
                // Hessian = I/σ² − Cov_posterior(centers)/σ⁴, and the posterior
                // covariance is bounded by diam²/4.
                let l = inv_var + diam * diam * inv_var * inv_var / 4.0;
                // ∇U(x) − ∇U(y) = z/σ² − (difference of two points of the
                // centers' convex hull)/σ², hence ⟨·, z⟩ ≥ ‖z‖²/σ² − diam‖z‖/σ².
                let m = 0.5 * inv_var;
                let r = 2.0 * diam;
                (
                    *dim,
                    Kind::Mixture {
                        centers: centers.iter().flatten().copied().collect(),
                        log_weights,
                        inv_var,
                    },
                    Constants::new(l, m, r)?,
                )
            }
            PotentialSpec::SmoothedDoubleWell {
                dim,
                separation,
                smoothness,
            } => {
                if !(*separation > 0.0 && *smoothness > 0.0) {
                    return Err(Error::domain(
                        "double well needs positive separation and smoothness",
                    ));
                }
                // φ'(s) = L s − 2L clip(s, ±a/2), so the clipped part moves by at
                // most min(|z|, a): ⟨Δ∇U, z⟩ ≥ L‖z‖² − 2La‖z‖ ≥ (L/2)‖z‖² once ‖z‖ ≥ 4a.
                (
                    *dim,
                    Kind::DoubleWell {
                        half_gap: 0.5 * separation,
                        l: *smoothness,
                    },
                    Constants::new(*smoothness, 0.5 * smoothness, 4.0 * separation)?,
                )
            }
        };
        if dim == 0 {
            return Err(Error::usage("dimension must be positive"));
        }
        Ok(Self {
            spec,
            dim,
            kind,
            constants,
        })
    }

    pub fn quadratic(dim: usize, m: f64, radius: f64) -> Result<Self> {
        Self::new(PotentialSpec::Quadratic { dim, m, radius })
    }

    /// Equal-weight mixture of `N(±a e₁, σ² I)`.
    pub fn symmetric_mixture(dim: usize, a: f64, variance: f64) -> Result<Self> {
        let mut plus = vec![0.0; dim];
        plus[0] = a;
        let minus = plus.iter().map(|v| -v).collect();
        Self::new(PotentialSpec::GaussianMixture {
            dim,
            centers: vec![plus, minus],
            variance,
            weights: None,
        })
    }

    pub fn double_well(dim: usize, separation: f64, smoothness: f64) -> Result<Self> {
        Self::new(PotentialSpec::SmoothedDoubleWell {
            dim,
            separation,
            smoothness,
        })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::Quadratic { .. } => "quadratic",
            Kind::Mixture { .. } => "gaussian-mixture",
            Kind::DoubleWell { .. } => "smoothed-double-well",
        }
    }

    /// Exact draws from `p* ∝ e^{-U}` where a direct sampler exists
    /// (quadratic and mixture). Row-major `n × d`.
    pub fn sample_exact(&self, n: usize, seed: u64) -> Option<Vec<f64>> {
        let d = self.dim;
        let mut out = vec![0.0; n * d];
        match &self.kind {
            Kind::Quadratic { m } => {
                let s = 1.0 / m.sqrt();
                for (i, row) in out.chunks_mut(d).enumerate() {
                    let mut g = rng::stream(seed, purpose::REFERENCE, i as u64);
                    for v in row {
                        *v = s * g.standard_normal();
                    }
                }
            }
            Kind::Mixture {
                centers,
                log_weights,
                inv_var,
            } => {
                let s = (1.0 / inv_var).sqrt();
                let cum: Vec<f64> = log_weights
                    .iter()
                    .scan(0.0, |acc, lw| {
                        *acc += lw.exp();
                        Some(*acc)
                    })
                    .collect();
                for (i, row) in out.chunks_mut(d).enumerate() {
                    let mut g = rng::stream(seed, purpose::REFERENCE, i as u64);
                    let u = g.uniform() * cum[cum.len() - 1];
                    let k = cum.iter().position(|c| u < *c).unwrap_or(cum.len() - 1);
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = centers[k * d + j] + s * g.standard_normal();
                    }
                }
            }
            Kind::DoubleWell { .. } => return None,
        }
        Some(out)
    }

    /// Rejection sampler for the mixture target with proposal `N(0, 2σ² I)`.
    ///
    /// Each component satisfies `−‖x−c‖²/(2σ²) + ‖x‖²/(4σ²) ≤ ‖c‖²/(2σ²)`, which
    /// gives the envelope. Returns `None` for the other kinds.
    pub fn rejection_sample(&self, n: usize, seed: u64) -> Option<Vec<f64>> {
        let Kind::Mixture {
            centers, inv_var, ..
        } = &self.kind
        else {
            return None;
        };
        let d = self.dim;
        let log_env = centers
            .chunks(d)
            .map(|c| 0.5 * dot(c, c) * inv_var)
            .fold(f64::NEG_INFINITY, f64::max);
        let s = (2.0 / inv_var).sqrt();
        let mut g = rng::stream(seed, purpose::REFERENCE, u64::MAX);
        let mut out = Vec::with_capacity(n * d);
        let mut x = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        while out.len() < n * d {
            for v in x.iter_mut() {
                *v = s * g.standard_normal();
            }
            // log target (up to the normalisation shared by all components)
            let lt = -self.value_grad(&x, &mut scratch);
            let lq = -0.25 * dot(&x, &x) * inv_var;
            if g.uniform().ln() < lt - lq - log_env {
                out.extend_from_slice(&x);
            }
        }
        Some(out)
    }
}

impl Potential for Benchmark {
    fn dim(&self) -> usize {
        self.dim
    }

    fn constants(&self) -> Constants {
        self.constants
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match &self.kind {
            Kind::Quadratic { m } => {
                for (g, v) in grad.iter_mut().zip(x) {
                    *g = m * v;
                }
                0.5 * m * dot(x, x)
            }
            Kind::Mixture {
                centers,
                log_weights,
                inv_var,
            } => {
                let d = self.dim;
                let k = log_weights.len();
                // Two components in a couple of dimensions is the common case;
                // avoid allocating for it.
                let mut buf = [0.0f64; 8];
                let mut heap;
                let a: &mut [f64] = if k <= buf.len() {
                    &mut buf[..k]
                } else {
                    heap = vec![0.0; k];
                    &mut heap
                };
                for (j, (aj, lw)) in a.iter_mut().zip(log_weights).enumerate() {
                    let c = &centers[j * d..(j + 1) * d];
                    let r2: f64 = x.iter().zip(c).map(|(p, q)| (p - q) * (p - q)).sum();
                    *aj = lw - 0.5 * r2 * inv_var;
                }
                let amax = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for aj in a.iter_mut() {
                    *aj = (*aj - amax).exp();
                    z += *aj;
                }
                for (i, g) in grad.iter_mut().enumerate() {
                    let mut mean_c = 0.0;
                    for j in 0..k {
                        mean_c += a[j] * centers[j * d + i];
                    }
                    *g = (x[i] - mean_c / z) * inv_var;
                }
                -(amax + z.ln())
            }
            Kind::DoubleWell { half_gap, l } => {
                let s = x[0];
                let clip = s.clamp(-half_gap, *half_gap);
                grad[0] = l * s - 2.0 * l * clip;
                let mut v = if s.abs() <= *half_gap {
                    -0.5 * l * s * s
                } else {
                    0.5 * l * s * s - 2.0 * l * half_gap * s.abs() + l * half_gap * half_gap
                };
                for i in 1..self.dim {
                    grad[i] = l * x[i];
                    v += 0.5 * l * x[i] * x[i];
                }
                v
            }
        }
    }
}

/// `U(x + offset)`: moves a chosen point of `U` to the origin.
#[derive(Debug, Clone)]
pub struct Shifted<P> {
    inner: P,
    offset: Vec<f64>,
}

impl<P: Potential> Shifted<P> {
    pub fn new(inner: P, offset: Vec<f64>) -> Result<Self> {
        if offset.len() != inner.dim() {
            return Err(Error::usage(
                "offset length differs from potential dimension",
            ));
        }
        Ok(Self { inner, offset })
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Potential> Potential for Shifted<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn constants(&self) -> Constants {
        self.inner.constants()
    }
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(&self.offset).map(|(a, b)| a + b).collect();
        self.inner.value_grad(&y, grad)
    }
}

/// Runs gradient descent with step `1/L` from `start` and returns the potential
/// re-centred at the stationary point it reaches.
pub fn shift_to_local_minimum<P: Potential>(
    potential: P,
    start: &[f64],
    grad_tol: f64,
    max_iter: usize,
) -> Result<Shifted<P>> {
    if start.len() != potential.dim() {
        return Err(Error::usage("start point has the wrong dimension"));
    }
    let step = 1.0 / potential.constants().smoothness;
    let mut x = start.to_vec();
    let mut g = vec![0.0; x.len()];
    for _ in 0..max_iter {
        potential.grad(&x, &mut g);
        if norm(&g) <= grad_tol {
            return Shifted::new(potential, x);
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
    }
    Err(Error::domain(format!(
        "gradient descent did not reach ‖∇U‖ ≤ {grad_tol} in {max_iter} iterations"
    )))
}

/// Keeps the evaluator of `inner` but reports different constants; useful
/// for checking that the audit catches an under-declared `L`.
#[derive(Debug, Clone)]
pub struct Redeclared<P> {
    pub inner: P,
    pub constants: Constants,
}

impl<P: Potential> Potential for Redeclared<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn constants(&self) -> Constants {
        self.constants
    }
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.inner.value_grad(x, grad)
    }
}

/// Which assumption an audit finding refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// Lipschitz gradient.
    LipschitzGradient,
    /// Stationary point at the origin.
    StationaryOrigin,
    /// Strong convexity outside the ball.
    OuterStrongConvexity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub assumption: Assumption,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Observed ratio (or gradient norm for the origin check).
    pub observed: f64,
    /// Declared bound it was compared against.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub constants: Constants,
    pub tolerance: f64,
    pub pairs: usize,
    pub pairs_outside_radius: usize,
    /// max ‖∇U(x)−∇U(y)‖/‖x−y‖ over all pairs.
    pub max_lipschitz_ratio: f64,
    /// min ⟨∇U(x)−∇U(y), x−y⟩/‖x−y‖² over pairs with ‖x−y‖ > R.
    pub min_outer_convexity_ratio: f64,
    /// Same ratio over pairs inside the radius; negative means the potential
    /// is nonconvex there.
    pub min_inner_convexity_ratio: f64,
    pub grad_norm_at_origin: f64,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

/// `(‖∇U(x)−∇U(y)‖/‖x−y‖, ⟨∇U(x)−∇U(y), x−y⟩/‖x−y‖²)` for one pair.
pub fn pair_ratios<P: Potential + ?Sized>(potential: &P, x: &[f64], y: &[f64]) -> (f64, f64) {
    let d = potential.dim();
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    potential.grad(x, &mut gx);
    potential.grad(y, &mut gy);
    let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
    let dz: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let r2 = dot(&dz, &dz);
    (norm(&dg) / r2.sqrt(), dot(&dg, &dz) / r2)
}

fn draw_point(g: &mut ChaCha8Rng, d: usize, scale: f64, out: &mut [f64]) {
    // Half the points uniform in the ball of radius `scale`, half Gaussian
    // with the same scale (the tails).
    if g.random::<bool>() {
        g.fill_standard_normal(out);
        let n = norm(out);
        let r = scale * g.uniform().powf(1.0 / d as f64);
        for v in out.iter_mut() {
            *v *= r / n;
        }
    } else {
        for v in out.iter_mut() {
            *v = scale * g.standard_normal();
        }
    }
}

/// Searches for violations of the declared constants on random pairs.
///
/// Pairs come from three regimes in rotation: independent points in the
/// ball of radius `3·max(R, 1)` (plus Gaussian tails), close pairs probing
/// local gradient variation, and pairs separated by just over `R`.
pub fn audit_constants<P: Potential + ?Sized>(
    potential: &P,
    pair_budget: usize,
    seed: u64,
    tolerance: f64,
) -> Result<AuditReport> {
    if pair_budget == 0 {
        return Err(Error::usage("pair_budget must be at least 1"));
    }
    let c = potential.constants();
    let d = potential.dim();
    let scale = 3.0 * c.radius.max(1.0);
    let mut g = rng::stream(seed, purpose::AUDIT, 0);

    let origin = vec![0.0; d];
    let (_, g0) = potential.eval(&origin)?;
    let grad_norm_at_origin = norm(&g0);

    let mut report = AuditReport {
        constants: c,
        tolerance,
        pairs: 0,
        pairs_outside_radius: 0,
        max_lipschitz_ratio: 0.0,
        min_outer_convexity_ratio: f64::INFINITY,
        min_inner_convexity_ratio: f64::INFINITY,
        grad_norm_at_origin,
        violations: Vec::new(),
        passed: true,
    };
    if grad_norm_at_origin > tolerance * c.smoothness.max(1.0) {
        report.violations.push(Violation {
            assumption: Assumption::StationaryOrigin,
            x: origin.clone(),
            y: origin,
            observed: grad_norm_at_origin,
            bound: tolerance * c.smoothness.max(1.0),
        });
    }

    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut dir = vec![0.0; d];
    let mut worst_lip: Option<Violation> = None;
    let mut worst_conv: Option<Violation> = None;
    for i in 0..pair_budget {
        draw_point(&mut g, d, scale, &mut x);
        match i % 3 {
            0 => draw_point(&mut g, d, scale, &mut y),
            1 => {
                let h = 0.1 * scale * g.uniform().max(1e-6);
                g.fill_standard_normal(&mut dir);
                let n = norm(&dir);
                for j in 0..d {
                    y[j] = x[j] + h * dir[j] / n;
                }
            }
            _ => {
                let r = c.radius * (1.0 + 1e-9) + g.uniform() * scale;
                g.fill_standard_normal(&mut dir);
                let n = norm(&dir);
                for j in 0..d {
                    y[j] = x[j] + r * dir[j] / n;
                }
            }
        }
        let sep = dist(&x, &y);
        if sep == 0.0 {
            continue;
        }
        report.pairs += 1;
        let (lip, conv) = pair_ratios(potential, &x, &y);
        report.max_lipschitz_ratio = report.max_lipschitz_ratio.max(lip);
        if lip > c.smoothness * (1.0 + tolerance)
            && worst_lip.as_ref().is_none_or(|v| lip > v.observed)
        {
            worst_lip = Some(Violation {
                assumption: Assumption::LipschitzGradient,
                x: x.clone(),
                y: y.clone(),
                observed: lip,
                bound: c.smoothness,
            });
        }
        if sep > c.radius {
            report.pairs_outside_radius += 1;
            report.min_outer_convexity_ratio = report.min_outer_convexity_ratio.min(conv);
            if conv < c.convexity * (1.0 - tolerance)
                && worst_conv.as_ref().is_none_or(|v| conv < v.observed)
            {
                worst_conv = Some(Violation {
                    assumption: Assumption::OuterStrongConvexity,
                    x: x.clone(),
                    y: y.clone(),
                    observed: conv,
                    bound: c.convexity,
                });
            }
        } else {
            report.min_inner_convexity_ratio = report.min_inner_convexity_ratio.min(conv);
        }
    }
    report.violations.extend(worst_lip);
    report.violations.extend(worst_conv);
    report.passed = report.violations.is_empty();
    Ok(report)
}

/// Largest absolute difference between a central finite difference and the
/// analytic gradient, over coordinates.
pub fn check_gradient_fd<P: Potential + ?Sized>(potential: &P, x: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain("finite-difference step must be positive"));
    }
    let (_, g) = potential.eval(x)?;
    let mut xp = x.to_vec();
    let mut scratch = vec![0.0; x.len()];
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let up = potential.value_grad(&xp, &mut scratch);
        xp[i] = x[i] - h;
        let dn = potential.value_grad(&xp, &mut scratch);
        xp[i] = x[i];
        worst = worst.max(((up - dn) / (2.0 * h) - g[i]).abs());
    }
    Ok(worst)
}
