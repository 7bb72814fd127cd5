//! Radial charge densities ρ and their Fourier transforms.
//!
//! The transform convention is ρ̂(k) = (2π)^{-3/2} ∫ e^{ik·x} ρ(x) dx, shared
//! by every module in the crate.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField, Vec3};
use crate::quad::GaussLegendre;

/// (2π)^{-3/2}
pub const FOURIER_NORM: f64 = 0.063_493_635_934_240_97;

/// Below this value of |k|·R the transforms use their Taylor series.
const SERIES_SWITCH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    /// A (1 − r²/R²)² on [0, R].
    QuarticBump,
    /// A on [0, R].
    Ball,
    /// A sum of two normalized ball self-convolutions with radii R/2 and
    /// `lens_ratio`·R/2. Its transform is strictly positive.
    DoubleLens,
    /// Piecewise-linear interpolation of equispaced samples on [0, R].
    Tabulated,
}

fn default_lens_ratio() -> f64 {
    0.618_033_988_749_894_9
}

fn default_lens_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeProfile {
    pub kind: ProfileKind,
    pub amplitude: f64,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
    #[serde(default = "default_lens_ratio")]
    pub lens_ratio: f64,
    #[serde(default = "default_lens_weight")]
    pub lens_weight: f64,
}

impl Default for ChargeProfile {
    fn default() -> Self {
        ChargeProfile::quartic_bump(1.0, 2.0)
    }
}

impl ChargeProfile {
    pub fn quartic_bump(amplitude: f64, radius: f64) -> Self {
        Self::with_kind(ProfileKind::QuarticBump, amplitude, radius)
    }

    pub fn ball(amplitude: f64, radius: f64) -> Self {
        Self::with_kind(ProfileKind::Ball, amplitude, radius)
    }

    pub fn double_lens(amplitude: f64, radius: f64) -> Self {
        Self::with_kind(ProfileKind::DoubleLens, amplitude, radius)
    }

    pub fn tabulated(amplitude: f64, radius: f64, samples: Vec<f64>) -> Self {
        ChargeProfile {
            samples: Some(samples),
            ..Self::with_kind(ProfileKind::Tabulated, amplitude, radius)
        }
    }

    fn with_kind(kind: ProfileKind, amplitude: f64, radius: f64) -> Self {
        ChargeProfile {
            kind,
            amplitude,
            radius,
            samples: None,
            lens_ratio: default_lens_ratio(),
            lens_weight: default_lens_weight(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        ChargeProfile {
            amplitude: self.amplitude * c,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid("radius", format!("must be positive, got {}", self.radius)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::invalid("amplitude", "must be finite"));
        }
        match self.kind {
            ProfileKind::DoubleLens => {
                if !(self.lens_ratio > 0.0 && self.lens_ratio < 1.0) {
                    return Err(Error::invalid("lens_ratio", "must lie in (0, 1)"));
                }
                if !(self.lens_weight.is_finite() && self.lens_weight > 0.0) {
                    return Err(Error::invalid("lens_weight", "must be positive"));
                }
            }
            ProfileKind::Tabulated => {
                let s = self
                    .samples
                    .as_ref()
                    .ok_or_else(|| Error::invalid("samples", "tabulated profile needs samples"))?;
                if s.len() < 2 {
                    return Err(Error::invalid("samples", "need at least two samples"));
                }
                if s.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("samples", "non-finite sample"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Radius outside of which ρ vanishes.
    pub fn support_radius(&self) -> f64 {
        self.radius
    }

    fn lens_radii(&self) -> (f64, f64) {
        let a = 0.5 * self.radius;
        (a, self.lens_ratio * a)
    }

    /// The radial profile ρ₁(r).
    pub fn rho(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.radius {
            return 0.0;
        }
        let a = self.amplitude;
        match self.kind {
            ProfileKind::QuarticBump => {
                let s = 1.0 - (r / self.radius).powi(2);
                a * s * s
            }
            ProfileKind::Ball => a,
            ProfileKind::DoubleLens => {
                let (ra, rb) = self.lens_radii();
                a * (lens(r, ra) + self.lens_weight * lens(r, rb))
            }
            ProfileKind::Tabulated => {
                let s = self.samples.as_deref().unwrap_or(&[]);
                if s.len() < 2 {
                    return 0.0;
                }
                let x = r / self.radius * (s.len() - 1) as f64;
                let i = (x.floor() as usize).min(s.len() - 2);
                let f = x - i as f64;
                a * (s[i] * (1.0 - f) + s[i + 1] * f)
            }
        }
    }

    /// ρ̂ at a wavevector; real and even for radial profiles.
    pub fn rho_hat(&self, k: Vec3) -> f64 {
        self.rho_hat_radial(k.norm())
    }

    /// ρ̂ as a function of |k|.
    pub fn rho_hat_radial(&self, k: f64) -> f64 {
        let k = k.abs();
        let big_r = self.radius;
        let a = self.amplitude;
        match self.kind {
            ProfileKind::QuarticBump => {
                let x = k * big_r;
                if x < SERIES_SWITCH {
                    series(k, |n| {
                        let m = 2 * n as i32;
                        a * big_r.powi(m + 3)
                            * (1.0 / (m + 3) as f64 - 2.0 / (m + 5) as f64 + 1.0 / (m + 7) as f64)
                    })
                } else {
                    let (s, c) = x.sin_cos();
                    let p = x * x * x * c - 6.0 * x * x * s - 15.0 * x * c + 15.0 * s;
                    FOURIER_NORM * 4.0 * PI * 8.0 * a * p * big_r.powi(3) / x.powi(7)
                }
            }
            ProfileKind::Ball => a * ball_hat(k, big_r),
            ProfileKind::DoubleLens => {
                let (ra, rb) = self.lens_radii();
                let va = 4.0 * PI * ra.powi(3) / 3.0;
                let vb = 4.0 * PI * rb.powi(3) / 3.0;
                let ca = ball_hat(k, ra);
                let cb = ball_hat(k, rb);
                a * (2.0 * PI).powf(1.5) * (ca * ca / va + self.lens_weight * cb * cb / vb)
            }
            ProfileKind::Tabulated => self.tabulated_hat(k),
        }
    }

    fn tabulated_hat(&self, k: f64) -> f64 {
        let s = self.samples.as_deref().unwrap_or(&[]);
        if s.len() < 2 {
            return 0.0;
        }
        let g = GaussLegendre::new(8);
        let dr = self.radius / (s.len() - 1) as f64;
        let mut acc = 0.0;
        for i in 0..s.len() - 1 {
            let r0 = i as f64 * dr;
            acc += g.integrate(r0, r0 + dr, |r| r * r * sinc(k * r) * self.rho(r));
        }
        FOURIER_NORM * 4.0 * PI * acc
    }

    /// ∫ρ dx.
    pub fn total_charge(&self) -> f64 {
        self.rho_hat_radial(0.0) / FOURIER_NORM
    }

    /// Smallest scanned |k| beyond which |ρ̂| stays below `rel`·|ρ̂(0)|
    /// (checked on [k, 2k]); used to truncate k-space quadratures.
    pub fn spectral_cutoff(&self, rel: f64) -> f64 {
        let target = rel * self.rho_hat_radial(0.0).abs();
        let mut k = 10.0 / self.radius;
        let limit = 2000.0 / self.radius;
        while k < limit {
            let peak = (0..=400)
                .map(|i| self.rho_hat_radial(k * (1.0 + i as f64 / 400.0)).abs())
                .fold(0.0, f64::max);
            if peak <= target {
                return k;
            }
            k *= 1.25;
        }
        limit
    }

    /// Radial scan of |ρ̂| on [0, k_max] with `n` samples.
    pub fn wiener_check(&self, k_max: f64, n: usize, threshold_rel: f64) -> Result<WienerReport> {
        self.validate()?;
        if !(k_max > 0.0 && k_max.is_finite()) {
            return Err(Error::invalid("k_max", "must be positive"));
        }
        if n < 2 {
            return Err(Error::invalid("n", "need at least two samples"));
        }
        let ks: Vec<f64> = (0..n).map(|i| k_max * i as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> = ks.par_iter().map(|&k| self.rho_hat_radial(k)).collect();
        let (imin, min_abs) = vals
            .iter()
            .map(|v| v.abs())
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        let mut roots = Vec::new();
        for i in 0..n - 1 {
            if vals[i] == 0.0 {
                roots.push(ks[i]);
            } else if vals[i] * vals[i + 1] < 0.0 {
                roots.push(self.bisect_root(ks[i], ks[i + 1]));
            }
        }
        let rho_hat0 = vals[0];
        let threshold = threshold_rel * rho_hat0.abs();
        Ok(WienerReport {
            k_max,
            samples: n,
            rho_hat0,
            min_abs,
            argmin: ks[imin],
            threshold,
            pass: min_abs > threshold && roots.is_empty(),
            roots,
        })
    }

    fn bisect_root(&self, mut a: f64, mut b: f64) -> f64 {
        let mut fa = self.rho_hat_radial(a);
        for _ in 0..200 {
            let c = 0.5 * (a + b);
            let fc = self.rho_hat_radial(c);
            if fc == 0.0 || (b - a) < 1e-15 * b.max(1.0) {
                return c;
            }
            if fa * fc < 0.0 {
                b = c;
            } else {
                a = c;
                fa = fc;
            }
        }
        0.5 * (a + b)
    }

    /// Grid samples of ρ(x − center).
    pub fn rho_on_grid(&self, grid: &Grid, center: Vec3) -> Result<ScalarField> {
        self.validate()?;
        let reach = self.radius + center.amax();
        if reach >= grid.l {
            return Err(Error::SupportClipped {
                radius: self.radius,
                center: [center.x, center.y, center.z],
                half_width: grid.l,
            });
        }
        let n = grid.n;
        let mut values = vec![0.0; n * n * n];
        for i in 0..n {
            let x = grid.x(i) - center.x;
            for j in 0..n {
                let y = grid.x(j) - center.y;
                for l in 0..n {
                    let z = grid.x(l) - center.z;
                    values[(i * n + j) * n + l] = self.rho((x * x + y * y + z * z).sqrt());
                }
            }
        }
        Ok(ScalarField::new(grid.clone(), values))
    }
}

/// Outcome of a Wiener-condition scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerReport {
    pub k_max: f64,
    pub samples: usize,
    pub rho_hat0: f64,
    pub min_abs: f64,
    pub argmin: f64,
    pub threshold: f64,
    /// Sign changes of ρ̂ located between samples, refined by bisection.
    pub roots: Vec<f64>,
    pub pass: bool,
}

fn lens(r: f64, a: f64) -> f64 {
    if r >= 2.0 * a {
        0.0
    } else {
        (4.0 * a + r) * (2.0 * a - r).powi(2) / (16.0 * a.powi(3))
    }
}

/// Transform of the unit indicator of a ball of radius `r0`.
fn ball_hat(k: f64, r0: f64) -> f64 {
    let x = k * r0;
    if x < SERIES_SWITCH {
        series(k, |n| r0.powi(2 * n as i32 + 3) / (2 * n + 3) as f64)
    } else {
        let (s, c) = x.sin_cos();
        FOURIER_NORM * 4.0 * PI * (s - x * c) / (k * k * k)
    }
}

/// (2π)^{-3/2} 4π Σ (−1)ⁿ k²ⁿ/(2n+1)! · moment(n) with moment(n) = ∫ r^{2n+2} ρ₁ dr.
fn series(k: f64, moment: impl Fn(usize) -> f64) -> f64 {
    let k2 = k * k;
    let mut term_scale = 1.0;
    let mut acc = 0.0;
    for n in 0..30 {
        if n > 0 {
            term_scale *= -k2 / ((2 * n) * (2 * n + 1)) as f64;
        }
        let t = term_scale * moment(n);
        acc += t;
        if t.abs() < 1e-18 * acc.abs() {
            break;
        }
    }
    FOURIER_NORM * 4.0 * PI * acc
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_wavevector_gives_scaled_charge() {
        let p = ChargeProfile::quartic_bump(1.3, 1.7);
        let e = 32.0 * PI * 1.3 * 1.7f64.powi(3) / 105.0;
        assert!((p.rho_hat_radial(0.0) - FOURIER_NORM * e).abs() < 1e-15);
        assert!((p.total_charge() - e).abs() < 1e-13);
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        for p in [
            ChargeProfile::quartic_bump(1.0, 2.0),
            ChargeProfile::ball(1.0, 2.0),
        ] {
            let k = SERIES_SWITCH / p.radius;
            let below = p.rho_hat_radial(k * (1.0 - 1e-12));
            let x = k * p.radius;
            let closed = match p.kind {
                ProfileKind::Ball => {
                    FOURIER_NORM * 4.0 * PI * (x.sin() - x * x.cos()) / k.powi(3)
                }
                _ => {
                    let (s, c) = x.sin_cos();
                    let q = x.powi(3) * c - 6.0 * x * x * s - 15.0 * x * c + 15.0 * s;
                    FOURIER_NORM * 32.0 * PI * q * p.radius.powi(3) / x.powi(7)
                }
            };
            assert!((below - closed).abs() < 1e-12 * closed.abs());
        }
    }

    #[test]
    fn even_and_linear_in_amplitude() {
        let p = ChargeProfile::quartic_bump(0.7, 2.0);
        let q = p.scaled(3.0);
        for &k in &[0.0, 0.3, 1.9, 5.0, 17.0] {
            let kv = Vec3::new(k, -0.5 * k, 0.2);
            assert_eq!(p.rho_hat(kv), p.rho_hat(-kv));
            assert!((q.rho_hat(kv) - 3.0 * p.rho_hat(kv)).abs() <= 1e-15 * q.rho_hat(kv).abs());
        }
    }

    #[test]
    fn tabulated_matches_analytic_bump() {
        let p = ChargeProfile::quartic_bump(1.0, 2.0);
        let n = 4001;
        let samples: Vec<f64> = (0..n).map(|i| p.rho(2.0 * i as f64 / (n - 1) as f64)).collect();
        let t = ChargeProfile::tabulated(1.0, 2.0, samples);
        for &k in &[0.0, 0.5, 2.0, 4.0] {
            let a = p.rho_hat_radial(k);
            let b = t.rho_hat_radial(k);
            assert!((a - b).abs() < 1e-6 * p.rho_hat_radial(0.0), "k={k}: {a} vs {b}");
        }
    }

    #[test]
    fn double_lens_is_positive() {
        let p = ChargeProfile::double_lens(1.0, 2.0);
        let rep = p.wiener_check(30.0, 6001, 1e-12).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.roots.is_empty());
    }

    #[test]
    fn ball_fails_wiener() {
        let p = ChargeProfile::ball(1.0, 1.0);
        let rep = p.wiener_check(10.0, 1001, 1e-12).unwrap();
        assert!(!rep.pass);
        assert!((rep.roots[0] - 4.493_409_457_909_064).abs() < 1e-9);
    }

    #[test]
    fn nonnegative_bump_passes_near_origin() {
        let p = ChargeProfile::quartic_bump(1.0, 2.0);
        assert!(p.rho_hat_radial(0.0) > 0.0);
        assert!(p.wiener_check(1.0, 101, 1e-12).unwrap().pass);
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(ChargeProfile::quartic_bump(1.0, -1.0).validate().is_err());
        assert!(ChargeProfile::tabulated(1.0, 1.0, vec![1.0, f64::NAN]).validate().is_err());
        assert!(ChargeProfile::quartic_bump(f64::INFINITY, 1.0).validate().is_err());
    }
}
