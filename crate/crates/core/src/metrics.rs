//! Empirical distances between sample sets: exact 1-D W₁, sliced W₁,
//! the f-warped W_f, and the second-moment bound of the target.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance_fn::DistanceFn;
use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::rng::{self, purpose, GaussianSource};
use crate::vector::{dot, mean_and_se, pairwise_sum};

pub const DEFAULT_PROJECTIONS: usize = 128;
pub const DEFAULT_BOOTSTRAP: usize = 200;

/// Uniformly weighted point cloud, row-major `n × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    dim: usize,
}

impl EmpiricalMeasure {
    pub fn new(samples: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || samples.is_empty() || !samples.len().is_multiple_of(dim) {
            return Err(Error::usage(format!(
                "{} values do not form a nonempty {dim}-column sample matrix",
                samples.len()
            )));
        }
        if let Some(i) = crate::vector::first_non_finite(&samples) {
            return Err(Error::domain(format!(
                "non-finite sample value at flat index {i}"
            )));
        }
        Ok(Self { samples, dim })
    }

    pub fn from_1d(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks(self.dim)
    }

    fn project(&self, dir: &[f64]) -> Vec<f64> {
        self.rows().map(|r| dot(r, dir)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact1d,
    Sliced,
    /// Exhaustive search over all couplings (small `n` only).
    Exhaustive,
    MonotoneUpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<usize>,
    /// Bootstrap standard error; absent when no resamples were requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub samples_a: usize,
    pub samples_b: usize,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// `∫₀¹ |Q_a(t) − Q_b(t)| dt` for sorted atoms with integer multiplicities.
/// Masses are kept as exact integers (`count_a · N_b` vs `count_b · N_a`).
fn w1_weighted_sorted(a: &[f64], ca: &[u32], b: &[f64], cb: &[u32]) -> f64 {
    let na: u64 = ca.iter().map(|&c| c as u64).sum();
    let nb: u64 = cb.iter().map(|&c| c as u64).sum();
    let (mut i, mut j) = (0usize, 0usize);
    let next = |c: &[u32], mut k: usize| {
        while k < c.len() && c[k] == 0 {
            k += 1;
        }
        k
    };
    i = next(ca, i);
    j = next(cb, j);
    let mut ra = ca[i] as u64 * nb;
    let mut rb = cb[j] as u64 * na;
    let mut total = 0.0;
    loop {
        let m = ra.min(rb);
        total += m as f64 * (a[i] - b[j]).abs();
        ra -= m;
        rb -= m;
        if ra == 0 {
            i = next(ca, i + 1);
            if i == a.len() {
                break;
            }
            ra = ca[i] as u64 * nb;
        }
        if rb == 0 {
            j = next(cb, j + 1);
            if j == b.len() {
                break;
            }
            rb = cb[j] as u64 * na;
        }
    }
    total / (na as f64 * nb as f64)
}

fn w1_equal_sorted(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    pairwise_sum(&d) / a.len() as f64
}

/// Multinomial resampling counts: `n` draws with replacement from `n` items.
fn resample_counts<R: Rng>(rng: &mut R, n: usize, out: &mut [u32]) {
    out.iter_mut().for_each(|c| *c = 0);
    for _ in 0..n {
        out[rng.random_range(0..n)] += 1;
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let (_, se) = mean_and_se(v);
    se * (v.len() as f64).sqrt()
}

/// Exact W₁ between equal-size 1-D samples: mean gap of the sorted values.
pub fn w1_exact_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<DistanceEstimate> {
    w1_exact_1d_with(a, b, DEFAULT_BOOTSTRAP, 0)
}

pub fn w1_exact_1d_with(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    bootstrap: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::usage("exact 1-D W1 needs one-dimensional samples"));
    }
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "exact 1-D W1 needs equal sample counts ({} vs {}); resample first",
            a.len(),
            b.len()
        )));
    }
    let sa = sorted(a.samples().to_vec());
    let sb = sorted(b.samples().to_vec());
    let value = w1_equal_sorted(&sa, &sb);
    let std_error = (bootstrap > 1).then(|| {
        let mut g = rng::stream(seed, purpose::BOOTSTRAP, 0);
        let (mut ca, mut cb) = (vec![0u32; sa.len()], vec![0u32; sb.len()]);
        let reps: Vec<f64> = (0..bootstrap)
            .map(|_| {
                resample_counts(&mut g, sa.len(), &mut ca);
                resample_counts(&mut g, sb.len(), &mut cb);
                w1_weighted_sorted(&sa, &ca, &sb, &cb)
            })
            .collect();
        std_dev(&reps)
    });
    Ok(DistanceEstimate {
        value,
        method: Method::Exact1d,
        projections: None,
        std_error,
        samples_a: a.len(),
        samples_b: b.len(),
    })
}

/// W₁ between 1-D samples of any sizes, through their quantile functions.
pub fn w1_1d_any_size(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::usage("empty sample"));
    }
    let sa = sorted(a.to_vec());
    let sb = sorted(b.to_vec());
    Ok(w1_weighted_sorted(
        &sa,
        &vec![1; sa.len()],
        &sb,
        &vec![1; sb.len()],
    ))
}

/// Unit vector number `k` of a projection family.
pub fn projection_direction(dim: usize, seed: u64, k: usize) -> Vec<f64> {
    let mut g = rng::stream(seed, purpose::PROJECTION, k as u64);
    loop {
        let mut v = vec![0.0; dim];
        g.fill_standard_normal(&mut v);
        let n = dot(&v, &v).sqrt();
        if n > 1e-12 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicedOptions {
    pub projections: usize,
    /// Bootstrap resamples for the standard error (0 disables).
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for SlicedOptions {
    fn default() -> Self {
        Self {
            projections: DEFAULT_PROJECTIONS,
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
        }
    }
}

/// Sliced W₁ with the default number of bootstrap resamples.
pub fn w1_sliced(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    projections: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    w1_sliced_with(
        a,
        b,
        &SlicedOptions {
            projections,
            bootstrap: DEFAULT_BOOTSTRAP,
            seed,
        },
    )
}

/// Average over random unit directions `θ` of the exact 1-D W₁ between the
/// projections `⟨θ, a⟩` and `⟨θ, b⟩`. Sample counts may differ. The
/// bootstrap resamples points (the same resample across all directions).
pub fn w1_sliced_with(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    opts: &SlicedOptions,
) -> Result<DistanceEstimate> {
    if a.dim() != b.dim() {
        return Err(Error::usage(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if opts.projections == 0 {
        return Err(Error::usage("need at least one projection"));
    }
    let (na, nb) = (a.len(), b.len());
    let boot = if opts.bootstrap > 1 {
        opts.bootstrap
    } else {
        0
    };
    // Resample counts, drawn once so every direction sees the same resample.
    let mut g = rng::stream(opts.seed, purpose::BOOTSTRAP, 0);
    let counts: Vec<(Vec<u32>, Vec<u32>)> = (0..boot)
        .map(|_| {
            let (mut ca, mut cb) = (vec![0u32; na], vec![0u32; nb]);
            resample_counts(&mut g, na, &mut ca);
            resample_counts(&mut g, nb, &mut cb);
            (ca, cb)
        })
        .collect();

    let per_dir: Vec<(f64, Vec<f64>)> = (0..opts.projections)
        .into_par_iter()
        .map(|k| {
            let dir = projection_direction(a.dim(), opts.seed, k);
            let order = |m: &EmpiricalMeasure| {
                let p = m.project(&dir);
                let mut idx: Vec<u32> = (0..p.len() as u32).collect();
                idx.sort_unstable_by(|&i, &j| p[i as usize].total_cmp(&p[j as usize]));
                let vals: Vec<f64> = idx.iter().map(|&i| p[i as usize]).collect();
                (idx, vals)
            };
            let (ia, pa) = order(a);
            let (ib, pb) = order(b);
            let value = if na == nb {
                w1_equal_sorted(&pa, &pb)
            } else {
                w1_weighted_sorted(&pa, &vec![1; na], &pb, &vec![1; nb])
            };
            let mut wa = vec![0u32; na];
            let mut wb = vec![0u32; nb];
            let reps = counts
                .iter()
                .map(|(ca, cb)| {
                    for (w, &i) in wa.iter_mut().zip(&ia) {
                        *w = ca[i as usize];
                    }
                    for (w, &i) in wb.iter_mut().zip(&ib) {
                        *w = cb[i as usize];
                    }
                    w1_weighted_sorted(&pa, &wa, &pb, &wb)
                })
                .collect();
            (value, reps)
        })
        .collect();

    let p = opts.projections as f64;
    let value = pairwise_sum(&per_dir.iter().map(|(v, _)| *v).collect::<Vec<_>>()) / p;
    let std_error = (boot > 0).then(|| {
        let reps: Vec<f64> = (0..boot)
            .map(|r| per_dir.iter().map(|(_, reps)| reps[r]).sum::<f64>() / p)
            .collect();
        std_dev(&reps)
    });
    Ok(DistanceEstimate {
        value,
        method: Method::Sliced,
        projections: Some(opts.projections),
        std_error,
        samples_a: na,
        samples_b: nb,
    })
}

/// A large reference sample pre-projected onto a fixed set of directions.
///
/// Each projection is stored as at most `max_atoms` equal-mass atoms (the
/// mean of the reference quantile function over each mass bin), which keeps
/// memory bounded for million-point references. Binning is exact when the
/// reference has at most `max_atoms` points and otherwise perturbs each 1-D
/// distance by at most the within-bin spread.
#[derive(Debug, Clone)]
pub struct SlicedReference {
    dim: usize,
    seed: u64,
    directions: Vec<Vec<f64>>,
    atoms: Vec<Vec<f64>>,
    reference_size: usize,
}

impl SlicedReference {
    pub fn new(
        reference: &EmpiricalMeasure,
        projections: usize,
        seed: u64,
        max_atoms: usize,
    ) -> Result<Self> {
        if projections == 0 || max_atoms == 0 {
            return Err(Error::usage("need at least one projection and one atom"));
        }
        let n = reference.len();
        let k = max_atoms.min(n);
        let directions: Vec<Vec<f64>> = (0..projections)
            .map(|i| projection_direction(reference.dim(), seed, i))
            .collect();
        let atoms = directions
            .par_iter()
            .map(|dir| {
                let s = sorted(reference.project(dir));
                if k == n {
                    return s;
                }
                // ∫ of the quantile function over [t0, t1], t in units of 1/n
                let mut prefix = vec![0.0; n + 1];
                for i in 0..n {
                    prefix[i + 1] = prefix[i] + s[i];
                }
                let integral = |t: f64| {
                    let i = (t.floor() as usize).min(n - 1);
                    prefix[i] + (t - i as f64) * s[i]
                };
                (0..k)
                    .map(|b| {
                        let t0 = n as f64 * b as f64 / k as f64;
                        let t1 = n as f64 * (b + 1) as f64 / k as f64;
                        (integral(t1) - integral(t0)) / (t1 - t0)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            dim: reference.dim(),
            seed,
            directions,
            atoms,
            reference_size: n,
        })
    }

    pub fn projections(&self) -> usize {
        self.directions.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sliced W₁ from `a` to the reference; the bootstrap resamples `a` only.
    pub fn distance(
        &self,
        a: &EmpiricalMeasure,
        bootstrap: usize,
        seed: u64,
    ) -> Result<DistanceEstimate> {
        if a.dim() != self.dim {
            return Err(Error::usage("dimension mismatch with the reference"));
        }
        let na = a.len();
        let boot = if bootstrap > 1 { bootstrap } else { 0 };
        let mut g = rng::stream(seed, purpose::BOOTSTRAP, 1);
        let counts: Vec<Vec<u32>> = (0..boot)
            .map(|_| {
                let mut c = vec![0u32; na];
                resample_counts(&mut g, na, &mut c);
                c
            })
            .collect();
        let per_dir: Vec<(f64, Vec<f64>)> = self
            .directions
            .par_iter()
            .zip(&self.atoms)
            .map(|(dir, atoms)| {
                let p = a.project(dir);
                let mut idx: Vec<u32> = (0..na as u32).collect();
                idx.sort_unstable_by(|&i, &j| p[i as usize].total_cmp(&p[j as usize]));
                let pa: Vec<f64> = idx.iter().map(|&i| p[i as usize]).collect();
                let ones_b = vec![1u32; atoms.len()];
                let value = w1_weighted_sorted(&pa, &vec![1; na], atoms, &ones_b);
                let mut wa = vec![0u32; na];
                let reps = counts
                    .iter()
                    .map(|c| {
                        for (w, &i) in wa.iter_mut().zip(&idx) {
                            *w = c[i as usize];
                        }
                        w1_weighted_sorted(&pa, &wa, atoms, &ones_b)
                    })
                    .collect();
                (value, reps)
            })
            .collect();
        let p = self.directions.len() as f64;
        let value = per_dir.iter().map(|(v, _)| *v).sum::<f64>() / p;
        let std_error = (boot > 0).then(|| {
            let reps: Vec<f64> = (0..boot)
                .map(|r| per_dir.iter().map(|(_, reps)| reps[r]).sum::<f64>() / p)
                .collect();
            std_dev(&reps)
        });
        Ok(DistanceEstimate {
            value,
            method: Method::Sliced,
            projections: Some(self.directions.len()),
            std_error,
            samples_a: na,
            samples_b: self.reference_size,
        })
    }
}

/// Calls `visit` with every permutation of `0..n` (Heap's algorithm).
pub fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&p);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            visit(&p);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

pub const EXHAUSTIVE_LIMIT: usize = 10;

/// Empirical `W_f = min over couplings of E f(|x − y|)` in one dimension.
///
/// Exhaustive over all `n!` couplings for `n ≤ 10`; beyond that the
/// monotone (sorted) coupling is returned, which for concave `f` is only an
/// upper bound and is labelled as such.
pub fn wf_empirical(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    f: &DistanceFn,
) -> Result<DistanceEstimate> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::usage(
            "W_f is only estimated in one dimension; in higher dimensions use \
             ½·e^{-α_f R_f²}·W1 ≤ W_f ≤ W1 (see wf_bounds_from_w1)",
        ));
    }
    if a.len() != b.len() {
        return Err(Error::usage("W_f needs equal sample counts"));
    }
    let n = a.len();
    let (x, y) = (a.samples(), b.samples());
    let (value, method) = if n <= EXHAUSTIVE_LIMIT {
        let cost: Vec<f64> = (0..n * n)
            .map(|k| f.f_unchecked((x[k / n] - y[k % n]).abs()))
            .collect();
        let mut best = f64::INFINITY;
        for_each_permutation(n, |p| {
            let s: f64 = p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
            best = best.min(s);
        });
        (best / n as f64, Method::Exhaustive)
    } else {
        let sa = sorted(x.to_vec());
        let sb = sorted(y.to_vec());
        let v: Vec<f64> = sa
            .iter()
            .zip(&sb)
            .map(|(p, q)| f.f_unchecked((p - q).abs()))
            .collect();
        (pairwise_sum(&v) / n as f64, Method::MonotoneUpperBound)
    };
    Ok(DistanceEstimate {
        value,
        method,
        projections: None,
        std_error: None,
        samples_a: n,
        samples_b: n,
    })
}

/// `(½e^{−α_f R_f²}·w1, w1)`, the interval `W_f` must lie in.
pub fn wf_bounds_from_w1(w1: f64, f: &DistanceFn) -> (f64, f64) {
    (0.5 * f.psi_cap() * w1, w1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub wf: DistanceEstimate,
    pub w1: f64,
    pub lower: f64,
    pub holds: bool,
}

/// Computes `W_f` and `W₁` together and checks `½e^{−α_f R_f²} W₁ ≤ W_f ≤ W₁`.
pub fn wf_sandwich(a: &EmpiricalMeasure, b: &EmpiricalMeasure, f: &DistanceFn) -> Result<Sandwich> {
    let wf = wf_empirical(a, b, f)?;
    let w1 = w1_exact_1d_with(a, b, 0, 0)?.value;
    let (lower, upper) = wf_bounds_from_w1(w1, f);
    let slack = 1e-12 * w1.max(1.0);
    let holds = wf.value >= lower - slack && wf.value <= upper + slack;
    Ok(Sandwich {
        wf,
        w1,
        lower,
        holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentCheck {
    pub mean_sq_norm: f64,
    pub std_error: f64,
    /// `2d/m + 18R²`.
    pub bound: f64,
    /// `bound + 3·std_error − mean_sq_norm`; nonnegative means pass.
    pub margin: f64,
    pub samples: usize,
    pub passed: bool,
}

pub fn second_moment_check<P: Potential + ?Sized>(
    samples: &EmpiricalMeasure,
    potential: &P,
) -> Result<SecondMomentCheck> {
    if samples.dim() != potential.dim() {
        return Err(Error::usage(
            "sample dimension differs from potential dimension",
        ));
    }
    let c = potential.constants();
    let sq: Vec<f64> = samples.rows().map(|r| dot(r, r)).collect();
    let (mean, se) = mean_and_se(&sq);
    let se = if se.is_finite() { se } else { 0.0 };
    let bound = 2.0 * samples.dim() as f64 / c.convexity + 18.0 * c.radius * c.radius;
    let margin = bound + 3.0 * se - mean;
    Ok(SecondMomentCheck {
        mean_sq_norm: mean,
        std_error: se,
        bound,
        margin,
        samples: samples.len(),
        passed: margin >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance_fn::DistanceFnParams;
    use crate::potentials::Benchmark;

    fn m1(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_1d(v).unwrap()
    }

    #[test]
    fn exact_1d_examples() {
        let a = m1(&[1.0, 2.0, 3.0]);
        assert_eq!(w1_exact_1d(&a, &a).unwrap().value, 0.0);
        assert_eq!(w1_exact_1d(&m1(&[0.0]), &m1(&[1.0])).unwrap().value, 1.0);
        assert!(matches!(w1_exact_1d(&a, &m1(&[1.0])), Err(Error::Usage(_))));
    }

    #[test]
    fn any_size_agrees_with_equal_size_and_with_replication() {
        let a = [0.3, -1.0, 2.5, 0.0];
        let b = [1.0, 1.5, -0.2, 0.7];
        let eq = w1_exact_1d(&m1(&a), &m1(&b)).unwrap().value;
        assert!((w1_1d_any_size(&a, &b).unwrap() - eq).abs() < 1e-15);
        let b2: Vec<f64> = b.iter().chain(&b).copied().collect();
        assert!((w1_1d_any_size(&a, &b2).unwrap() - eq).abs() < 1e-15);
        // point mass vs two atoms
        assert!((w1_1d_any_size(&[0.0], &[1.0, 3.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn permutations_are_complete() {
        let mut count = 0;
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(5, |p| {
            count += 1;
            seen.insert(p.to_vec());
        });
        assert_eq!((count, seen.len()), (120, 120));
    }

    #[test]
    fn sliced_one_projection_in_1d_is_exact() {
        let a = m1(&[0.1, 0.5, -0.3, 2.0]);
        let b = m1(&[1.1, -0.5, 0.0, 0.2]);
        let s = w1_sliced(&a, &b, 1, 3).unwrap();
        let e = w1_exact_1d(&a, &b).unwrap();
        assert!((s.value - e.value).abs() < 1e-15);
        assert!(s.std_error.is_some());
    }

    #[test]
    fn sliced_rejects_mismatch() {
        let a = EmpiricalMeasure::new(vec![0.0, 1.0], 2).unwrap();
        let b = m1(&[0.0]);
        assert!(matches!(w1_sliced(&a, &b, 4, 0), Err(Error::Usage(_))));
        assert!(w1_sliced(&a, &a, 0, 0).is_err());
    }

    #[test]
    fn reference_path_matches_direct_path_when_unbinned() {
        let q = Benchmark::quadratic(2, 1.0, 1.0).unwrap();
        let a = EmpiricalMeasure::new(q.sample_exact(300, 1).unwrap(), 2).unwrap();
        let b = EmpiricalMeasure::new(q.sample_exact(900, 2).unwrap(), 2).unwrap();
        let direct = w1_sliced_with(
            &a,
            &b,
            &SlicedOptions {
                projections: 16,
                bootstrap: 0,
                seed: 4,
            },
        )
        .unwrap();
        let r = SlicedReference::new(&b, 16, 4, 10_000).unwrap();
        let via = r.distance(&a, 0, 0).unwrap();
        assert!((direct.value - via.value).abs() < 1e-12);
        let binned = SlicedReference::new(&b, 16, 4, 300)
            .unwrap()
            .distance(&a, 0, 0)
            .unwrap();
        assert!((binned.value - direct.value).abs() < 0.02);
    }

    #[test]
    fn wf_exhaustive_and_monotone() {
        let f = DistanceFn::new(DistanceFnParams::new(0.25, 1.0).unwrap()).unwrap();
        let a = m1(&[0.0, 1.0, 2.5]);
        assert_eq!(wf_empirical(&a, &a, &f).unwrap().value, 0.0);
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let y: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos() * 2.0).collect();
        let e = wf_empirical(&m1(&x), &m1(&y), &f).unwrap();
        assert_eq!(e.method, Method::MonotoneUpperBound);
        assert!(wf_sandwich(&m1(&x), &m1(&y), &f).unwrap().holds);
        let two = EmpiricalMeasure::new(vec![0.0; 4], 2).unwrap();
        assert!(matches!(wf_empirical(&two, &two, &f), Err(Error::Usage(_))));
    }

    #[test]
    fn second_moment_examples() {
        let q = Benchmark::quadratic(2, 1.0, 0.0).unwrap();
        let s = EmpiricalMeasure::new(q.sample_exact(20_000, 3).unwrap(), 2).unwrap();
        let r = second_moment_check(&s, &q).unwrap();
        assert!(r.passed && (r.mean_sq_norm - 2.0).abs() < 0.1);
        let far = 10.0 * (4.0f64).sqrt();
        let bad = EmpiricalMeasure::new(vec![far, 0.0, 0.0, far, -far, 0.0], 2).unwrap();
        assert!(!second_moment_check(&bad, &q).unwrap().passed);
    }
}
