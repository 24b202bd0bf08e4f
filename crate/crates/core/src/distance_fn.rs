//! The concave distance warp `f` used to measure contraction of couplings.
//!
//! With `ψ(r) = exp(−α min(r, R_f)²)`, `Ψ(r) = ∫₀ʳ ψ`,
//! `g(r) = 1 − ½ ∫₀^{min(r,R_f)} Ψ/ψ ÷ ∫₀^{R_f} Ψ/ψ` and `f(r) = ∫₀ʳ ψ g`.
//!
//! Everything is tabulated once on a uniform grid over `[0, R_f]` by nested
//! adaptive Simpson quadrature. Between nodes values are cubic-Hermite
//! interpolated using the known derivatives (`Ψ' = ψ`, `g' = −Ψ/(2ψJ_R)`,
//! `f' = ψg`); past `R_f` all three are exactly affine.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::persist::atomic_write;
use crate::quadrature::adaptive_simpson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceFnParams {
    pub alpha_f: f64,
    pub r_f: f64,
}

impl DistanceFnParams {
    pub fn new(alpha_f: f64, r_f: f64) -> Result<Self> {
        if !(alpha_f > 0.0 && alpha_f.is_finite() && r_f > 0.0 && r_f.is_finite()) {
            return Err(Error::domain(format!(
                "distance function needs alpha_f > 0 and r_f > 0 (got {alpha_f}, {r_f})"
            )));
        }
        Ok(Self { alpha_f, r_f })
    }

    /// The parameters the underdamped Lyapunov function is built on:
    /// `α_f = L/4`, `R_f = √11·R`.
    pub fn for_underdamped(smoothness: f64, radius: f64) -> Result<Self> {
        Self::new(smoothness / 4.0, 11f64.sqrt() * radius)
    }
}

pub const DEFAULT_INTERVALS: usize = 2048;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DistanceFn {
    params: DistanceFnParams,
    psi_cap: f64,
    tolerance: f64,
    h: f64,
    nodes: Vec<f64>,
    cap_psi: Vec<f64>,
    /// `J(r) = ∫₀ʳ Ψ/ψ` at the nodes.
    j: Vec<f64>,
    g: Vec<f64>,
    f: Vec<f64>,
    j_r: f64,
}

#[inline]
fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

fn check_r(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "distance argument must be finite and >= 0, got {r}"
        )))
    }
}

impl DistanceFn {
    pub fn new(params: DistanceFnParams) -> Result<Self> {
        Self::with_resolution(params, DEFAULT_INTERVALS, DEFAULT_TOLERANCE)
    }

    pub fn with_resolution(
        params: DistanceFnParams,
        intervals: usize,
        tolerance: f64,
    ) -> Result<Self> {
        let params = DistanceFnParams::new(params.alpha_f, params.r_f)?;
        if intervals < 2 || !(tolerance > 0.0) {
            return Err(Error::usage(
                "need at least 2 intervals and a positive tolerance",
            ));
        }
        let a = params.alpha_f;
        let rf = params.r_f;
        let h = rf / intervals as f64;
        let tol = tolerance / intervals as f64;
        let psi = move |s: f64| (-a * s.min(rf).powi(2)).exp();
        let nodes: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();

        let mut cap_psi = vec![0.0; intervals + 1];
        let mut j = vec![0.0; intervals + 1];
        for i in 0..intervals {
            let (lo, hi) = (nodes[i], nodes[i + 1]);
            cap_psi[i + 1] = cap_psi[i] + adaptive_simpson(&psi, lo, hi, tol);
            let base = cap_psi[i];
            let ratio = |s: f64| (base + adaptive_simpson(&psi, lo, s, tol)) / psi(s);
            j[i + 1] = j[i] + adaptive_simpson(&ratio, lo, hi, tol);
        }
        let j_r = j[intervals];

        let g: Vec<f64> = j.iter().map(|v| 1.0 - v / (2.0 * j_r)).collect();
        let mut f = vec![0.0; intervals + 1];
        for i in 0..intervals {
            let (lo, hi) = (nodes[i], nodes[i + 1]);
            let (psi_base, j_base) = (cap_psi[i], j[i]);
            let ratio = |s: f64| (psi_base + adaptive_simpson(&psi, lo, s, tol)) / psi(s);
            let integrand = |s: f64| {
                let js = j_base + adaptive_simpson(&ratio, lo, s, tol);
                psi(s) * (1.0 - js / (2.0 * j_r))
            };
            f[i + 1] = f[i] + adaptive_simpson(&integrand, lo, hi, tol);
        }

        Ok(Self {
            params,
            psi_cap: (-a * rf * rf).exp(),
            tolerance,
            h,
            nodes,
            cap_psi,
            j,
            g,
            f,
            j_r,
        })
    }

    pub fn params(&self) -> DistanceFnParams {
        self.params
    }

    /// `e^{−α_f R_f²}`.
    pub fn psi_cap(&self) -> f64 {
        self.psi_cap
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// `∫₀^{R_f} Ψ/ψ`.
    pub fn j_r(&self) -> f64 {
        self.j_r
    }

    #[inline]
    fn psi_raw(&self, r: f64) -> f64 {
        let s = r.min(self.params.r_f);
        (-self.params.alpha_f * s * s).exp()
    }

    #[inline]
    fn locate(&self, r: f64) -> (usize, f64) {
        let n = self.nodes.len() - 1;
        let i = ((r / self.h) as usize).min(n - 1);
        (i, (r - self.nodes[i]) / self.h)
    }

    #[inline]
    fn g_deriv_at(&self, i: usize) -> f64 {
        -self.cap_psi[i] / (2.0 * self.j_r * self.psi_raw(self.nodes[i]))
    }

    pub fn psi(&self, r: f64) -> Result<f64> {
        check_r(r)?;
        Ok(self.psi_raw(r))
    }

    pub fn capital_psi(&self, r: f64) -> Result<f64> {
        check_r(r)?;
        Ok(self.capital_psi_unchecked(r))
    }

    fn capital_psi_unchecked(&self, r: f64) -> f64 {
        let rf = self.params.r_f;
        if r >= rf {
            return self.cap_psi[self.cap_psi.len() - 1] + self.psi_cap * (r - rf);
        }
        let (i, t) = self.locate(r);
        hermite(
            self.cap_psi[i],
            self.cap_psi[i + 1],
            self.psi_raw(self.nodes[i]),
            self.psi_raw(self.nodes[i + 1]),
            self.h,
            t,
        )
    }

    pub fn g_fn(&self, r: f64) -> Result<f64> {
        check_r(r)?;
        Ok(self.g_unchecked(r))
    }

    #[inline]
    fn g_unchecked(&self, r: f64) -> f64 {
        if r >= self.params.r_f {
            return 0.5;
        }
        let (i, t) = self.locate(r);
        hermite(
            self.g[i],
            self.g[i + 1],
            self.g_deriv_at(i),
            self.g_deriv_at(i + 1),
            self.h,
            t,
        )
    }

    /// `(f(r), f'(r))`.
    pub fn f_and_fprime(&self, r: f64) -> Result<(f64, f64)> {
        check_r(r)?;
        Ok((self.f_unchecked(r), self.fprime_unchecked(r)))
    }

    /// `f(r)` without argument validation; the hot path of every Lyapunov
    /// evaluation. Negative inputs are treated as 0.
    #[inline]
    pub fn f_unchecked(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        let rf = self.params.r_f;
        if r >= rf {
            return self.f[self.f.len() - 1] + 0.5 * self.psi_cap * (r - rf);
        }
        let (i, t) = self.locate(r);
        let d0 = self.psi_raw(self.nodes[i]) * self.g[i];
        let d1 = self.psi_raw(self.nodes[i + 1]) * self.g[i + 1];
        hermite(self.f[i], self.f[i + 1], d0, d1, self.h, t)
    }

    #[inline]
    fn fprime_unchecked(&self, r: f64) -> f64 {
        self.psi_raw(r) * self.g_unchecked(r)
    }

    /// `f''` by finite differences of `f'` with step `h`. The stencil never
    /// straddles `R_f` (where `f''` jumps) or goes below 0: it turns into a
    /// second-order one-sided difference instead.
    pub fn f_second_fd(&self, r: f64, h: f64) -> Result<f64> {
        check_r(r)?;
        if !(h > 0.0) {
            return Err(Error::domain("finite-difference step must be positive"));
        }
        let fp = |s: f64| self.fprime_unchecked(s);
        let rf = self.params.r_f;
        let backward = r > rf - h && r <= rf;
        let forward = r < h || (r > rf && r < rf + h);
        Ok(if backward {
            (3.0 * fp(r) - 4.0 * fp(r - h) + fp(r - 2.0 * h)) / (2.0 * h)
        } else if forward {
            (-3.0 * fp(r) + 4.0 * fp(r + h) - fp(r + 2.0 * h)) / (2.0 * h)
        } else {
            (fp(r + h) - fp(r - h)) / (2.0 * h)
        })
    }

    /// `f'' = ψ'g + ψg' = −2αrψg − Ψ/(2J_R)` inside `R_f`, 0 outside.
    pub fn f_second_closed(&self, r: f64) -> Result<f64> {
        check_r(r)?;
        if r > self.params.r_f {
            return Ok(0.0);
        }
        let psi = self.psi_raw(r);
        Ok(-2.0 * self.params.alpha_f * r * psi * self.g_unchecked(r)
            - self.capital_psi_unchecked(r) / (2.0 * self.j_r))
    }

    /// `Ψ(r)` by quadrature from the nearest node below `r` (no interpolation).
    pub fn capital_psi_exact(&self, r: f64) -> Result<f64> {
        check_r(r)?;
        let rf = self.params.r_f;
        if r >= rf {
            return Ok(self.capital_psi_unchecked(r));
        }
        let (i, _) = self.locate(r);
        let psi = |s: f64| self.psi_raw(s);
        Ok(self.cap_psi[i] + adaptive_simpson(&psi, self.nodes[i], r, self.tolerance))
    }

    fn j_exact(&self, r: f64) -> f64 {
        let (i, _) = self.locate(r);
        let lo = self.nodes[i];
        let base = self.cap_psi[i];
        let psi = |s: f64| self.psi_raw(s);
        let ratio = |s: f64| (base + adaptive_simpson(&psi, lo, s, self.tolerance)) / psi(s);
        self.j[i] + adaptive_simpson(&ratio, lo, r, self.tolerance)
    }

    pub fn g_exact(&self, r: f64) -> Result<f64> {
        check_r(r)?;
        if r >= self.params.r_f {
            return Ok(0.5);
        }
        Ok(1.0 - self.j_exact(r) / (2.0 * self.j_r))
    }

    pub fn f_exact(&self, r: f64) -> Result<f64> {
        check_r(r)?;
        if r >= self.params.r_f {
            return Ok(self.f_unchecked(r));
        }
        let (i, _) = self.locate(r);
        let integrand = |s: f64| self.psi_raw(s) * (1.0 - self.j_exact(s) / (2.0 * self.j_r));
        Ok(self.f[i] + adaptive_simpson(&integrand, self.nodes[i], r, self.tolerance))
    }

    /// Table rows `(r, ψ, Ψ, g, f, f')` at the quadrature nodes.
    pub fn table(&self) -> Vec<[f64; 6]> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let psi = self.psi_raw(r);
                [
                    r,
                    psi,
                    self.cap_psi[i],
                    self.g[i],
                    self.f[i],
                    psi * self.g[i],
                ]
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("r,psi,capital_psi,g,f,fprime\n");
        for row in self.table() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                row[0], row[1], row[2], row[3], row[4], row[5]
            );
        }
        atomic_write(path, s.as_bytes())
    }

    /// Checks the properties of `f` on `points` evenly spaced radii in
    /// `[0, 3R_f]`, returning the worst margin of each.
    pub fn check_properties(&self, points: usize) -> PropertyReport {
        const FD_STEP: f64 = 1e-5;
        let rf = self.params.r_f;
        let a = self.params.alpha_f;
        let cap = self.psi_cap;
        let points = points.max(2);
        let grid: Vec<f64> = (0..points)
            .map(|k| 3.0 * rf * k as f64 / (points - 1) as f64)
            .collect();

        let (f0, fp0) = (self.f_unchecked(0.0), self.fprime_unchecked(0.0));
        let mut rep = PropertyReport {
            params: self.params,
            points,
            f1: Margin::new(1e-8 - f0.abs().max((fp0 - 1.0).abs())),
            f2: Margin::new(f64::INFINITY),
            f3: Margin::new(f64::INFINITY),
            f4: Margin::new(f64::INFINITY),
            f4_doubled: Margin::new(f64::INFINITY),
            f5: Margin::new(f64::INFINITY),
            f6: None,
            monotone: Margin::new(f64::INFINITY),
            closed_form_gap: 0.0,
        };
        for &r in &grid {
            let f = self.f_unchecked(r);
            let fp = self.fprime_unchecked(r);
            rep.f2.update((fp - 0.5 * cap + 1e-8).min(1.0 + 1e-8 - fp));
            rep.f3.update((f - 0.5 * cap * r + 1e-8).min(r + 1e-8 - f));
            let fpp = self.f_second_fd(r, FD_STEP).expect("r >= 0");
            if r <= rf {
                let rhs = -(cap / (rf * rf)) * f + 1e-6;
                rep.f4.update(rhs - (fpp + a * r * fp));
                rep.f4_doubled.update(rhs - (fpp + 2.0 * a * r * fp));
                let closed = self.f_second_closed(r).expect("r >= 0");
                rep.closed_form_gap = rep.closed_form_gap.max((closed - fpp).abs());
                rep.f5.update(1e-8 - fpp);
            } else {
                rep.f5.update(1e-8 - fpp.abs());
            }
        }
        if a * rf * rf >= std::f64::consts::LN_2 {
            let mut m = Margin::new(f64::INFINITY);
            for c in [0.1, 0.5, 0.9] {
                let k = (-c * cap / 4.0).exp();
                for &r in &grid {
                    m.update(k * self.f_unchecked((1.0 + c) * r) + 1e-8 - self.f_unchecked(r));
                }
            }
            rep.f6 = Some(m);
        }
        for w in self.f.windows(2).zip(self.nodes.windows(2)).enumerate() {
            let (i, (fw, rw)) = w;
            let step = fw[1] - fw[0];
            // trapezoid estimate of ∫ψg over the cell; the gap is O(h³)
            let trap = 0.5
                * (rw[1] - rw[0])
                * (self.psi_raw(rw[0]) * self.g[i] + self.psi_raw(rw[1]) * self.g[i + 1]);
            let slack = self.h.powi(3) * (1.0 + 2.0 * a * rf).powi(2);
            rep.monotone.update(step.min(slack - (step - trap).abs()));
        }
        rep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    /// Smallest `allowed − observed` over the grid; nonnegative means pass.
    pub worst: f64,
    pub passed: bool,
}

impl Margin {
    fn new(worst: f64) -> Self {
        Self {
            worst,
            passed: worst >= 0.0,
        }
    }

    fn update(&mut self, m: f64) {
        if m < self.worst {
            self.worst = m;
            self.passed = m >= 0.0;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyReport {
    pub params: DistanceFnParams,
    pub points: usize,
    pub f1: Margin,
    pub f2: Margin,
    pub f3: Margin,
    /// `f'' + α r f' ≤ −(ψ_cap/R_f²) f` on `[0, R_f]`.
    pub f4: Margin,
    /// The same inequality with `2α` in place of `α`.
    pub f4_doubled: Margin,
    pub f5: Margin,
    /// Only checked when `α_f R_f² ≥ ln 2`.
    pub f6: Option<Margin>,
    pub monotone: Margin,
    /// Largest gap between the finite-difference and closed-form `f''`.
    pub closed_form_gap: f64,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.f1.passed
            && self.f2.passed
            && self.f3.passed
            && self.f4.passed
            && self.f5.passed
            && self.f6.is_none_or(|m| m.passed)
            && self.monotone.passed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quarter() -> DistanceFn {
        DistanceFn::new(DistanceFnParams::new(0.25, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn psi_examples() {
        let f = quarter();
        assert_eq!(f.psi(0.0).unwrap(), 1.0);
        assert_eq!(f.psi(2.0).unwrap(), (-0.25f64).exp());
        assert!((f.psi(0.5).unwrap() - (-0.0625f64).exp()).abs() < 1e-15);
        assert!(matches!(f.psi(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn matches_quadrature_oracle() {
        let f = quarter();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
        assert!(close(f.capital_psi(1.0).unwrap(), 0.922562012825585));
        assert!(close(f.j_r(), 0.544600126752224));
        assert!(close(f.g_fn(0.5).unwrap(), 0.882805611877741));
        assert!(close(f.f_and_fprime(0.5).unwrap().0, 0.471118694659948));
        assert!(close(f.f_and_fprime(1.0).unwrap().0, 0.783852169452347));
        assert!(close(f.f_and_fprime(2.0).unwrap().0, 1.17325256098805));
        assert!(close(f.g_exact(0.5).unwrap(), 0.882805611877741));
        assert!(close(f.f_exact(0.5).unwrap(), 0.471118694659948));

        let f = DistanceFn::new(DistanceFnParams::new(1.0, 2.0).unwrap()).unwrap();
        assert!(close(f.f_and_fprime(1.0).unwrap().0, 0.742633440536779));
        assert!(close(f.f_and_fprime(3.0).unwrap().0, 0.876576979946013));
        assert!(close(f.g_fn(1.0).unwrap(), 0.973658379402907));
        assert!(close(f.capital_psi(1.5).unwrap(), 0.856188393624901));
        assert!(close(f.capital_psi_exact(1.5).unwrap(), 0.856188393624901));
    }

    #[test]
    fn boundary_values() {
        let f = quarter();
        assert_eq!(f.capital_psi(0.0).unwrap(), 0.0);
        assert_eq!(f.g_fn(0.0).unwrap(), 1.0);
        assert_eq!(f.g_fn(10.0).unwrap(), 0.5);
        assert_eq!(f.f_and_fprime(0.0).unwrap(), (0.0, 1.0));
        let (v, d) = f.f_and_fprime(2.0).unwrap();
        assert!(v <= 2.0 && v >= (-0.25f64).exp());
        assert_eq!(d, 0.5 * f.psi_cap());
    }

    #[test]
    fn flat_limit_is_identity() {
        let f = DistanceFn::new(DistanceFnParams::new(1e-14, 1.0).unwrap()).unwrap();
        assert!((f.capital_psi(0.7).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(DistanceFnParams::new(0.0, 1.0).is_err());
        assert!(DistanceFnParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn properties_hold_for_reference_parameters() {
        for (a, r) in [(0.25, 1.0), (1.0, 2.0)] {
            let rep = DistanceFn::new(DistanceFnParams::new(a, r).unwrap())
                .unwrap()
                .check_properties(1000);
            assert!(rep.passed(), "{rep:?}");
            assert!(rep.closed_form_gap < 1e-7, "{rep:?}");
        }
    }

    #[test]
    fn properties_hold_for_steep_parameters() {
        // α_f R_f² = 88: ψ_cap ≈ 6e-39 and Ψ/ψ spans 38 decades.
        let rep = DistanceFn::new(DistanceFnParams::for_underdamped(2.0, 4.0).unwrap())
            .unwrap()
            .check_properties(1000);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        quarter().write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("r,psi,capital_psi,g,f,fprime\n"));
        assert_eq!(text.lines().count(), DEFAULT_INTERVALS + 2);
    }
}
