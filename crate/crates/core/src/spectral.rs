//! Resolvent layer in coordinates aligned with v = (|v|, 0, 0).
//!
//! Diagonal matrices are stored as `[parallel, perpendicular]` pairs since
//! the second and third entries always coincide.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6};
use serde::{Deserialize, Serialize};

use crate::charge::ChargeProfile;
use crate::error::{Error, Result};
use crate::fields::{Vec3, C64};
use crate::quad::{self, GaussLegendre};
use crate::soliton::check_speed;
use crate::symplectic::aligned_rotation;

/// Relative tolerance of the k-space quadratures.
pub const SPECTRAL_TOL: f64 = 1e-10;

/// κ = γ√(λ² + μ²), principal branch (Re κ > 0 for Re λ > 0).
pub fn kappa(lambda: C64, v: Vec3, m: f64) -> Result<C64> {
    check_speed(v)?;
    let nu2 = 1.0 - v.norm_squared();
    let gamma = 1.0 / nu2.sqrt();
    Ok((lambda * lambda + m * m * nu2).sqrt() * gamma)
}

/// κ at λ = iω + 0.
pub fn kappa_boundary(omega: f64, v: Vec3, m: f64) -> Result<C64> {
    check_speed(v)?;
    let nu2 = 1.0 - v.norm_squared();
    let gamma = 1.0 / nu2.sqrt();
    let d = m * m * nu2 - omega * omega;
    Ok(if d >= 0.0 {
        C64::new(gamma * d.sqrt(), 0.0)
    } else {
        C64::new(0.0, omega.signum() * gamma * (-d).sqrt())
    })
}

/// κ₁ = γ|v|λ.
pub fn kappa1(lambda: C64, v: Vec3) -> Result<C64> {
    check_speed(v)?;
    let s = v.norm();
    Ok(lambda * (s / (1.0 - s * s).sqrt()))
}

/// Fundamental solution of k² + m² + (i|v|k₁ + λ)² in y-space:
/// γ e^{−κ|ỹ|−κ₁ỹ₁}/(4π|ỹ|), ỹ = (γy₁, y₂, y₃) with y₁ along v.
pub fn green_function(lambda: C64, v: Vec3, m: f64, y: Vec3) -> Result<C64> {
    check_speed(v)?;
    if y.norm() == 0.0 {
        return Err(Error::invalid("y", "the Green function is singular at the origin"));
    }
    let s = v.norm();
    let gamma = 1.0 / (1.0 - s * s).sqrt();
    let y1 = if s > 0.0 { y.dot(&(v / s)) } else { y.x };
    let perp2 = (y.norm_squared() - y1 * y1).max(0.0);
    let yt1 = gamma * y1;
    let r = (yt1 * yt1 + perp2).sqrt();
    let k = kappa(lambda, v, m)?;
    let k1 = kappa1(lambda, v)?;
    Ok((-(k * r) - k1 * yt1).exp() * (gamma / (4.0 * PI * r)))
}

/// Diagonal pair → 3×3 matrix in the aligned frame.
pub fn diag3(d: [f64; 2]) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vec3::new(d[0], d[1], d[1]))
}

/// Quadrature context for one (profile, m, v).
#[derive(Debug, Clone)]
pub struct Resolvent {
    pub profile: ChargeProfile,
    pub m: f64,
    pub v: Vec3,
    pub speed: f64,
    pub nu: f64,
    pub mu: f64,
    pub k_cut: f64,
    pub panel: f64,
    pub tol: f64,
}

/// λ, κ and the assembled matrices at one spectral point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventSample {
    pub lambda: C64,
    pub kappa: C64,
    pub k: [f64; 2],
    pub h: [C64; 2],
    pub m: Matrix6<C64>,
    pub det: C64,
    pub det_factored: C64,
}

/// M⁻¹(iω) ≈ R₀ + R₁s + R₂s² near a branch point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuiseuxFit {
    pub branch_point: f64,
    pub window: f64,
    pub r0: Matrix6<C64>,
    pub r1: Matrix6<C64>,
    pub r2: Matrix6<C64>,
    /// Largest residual relative to max |R₀|.
    pub residual: f64,
    pub half_power_norm: f64,
}

/// max |ω||H_jj(iω)| over a low and a high band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub low_max: f64,
    pub high_max: f64,
    pub all_finite: bool,
    pub pass: bool,
}

impl Resolvent {
    pub fn new(profile: &ChargeProfile, m: f64, v: Vec3) -> Result<Self> {
        check_speed(v)?;
        profile.validate()?;
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::invalid("m", "mass must be positive"));
        }
        let speed = v.norm();
        let nu = (1.0 - speed * speed).sqrt();
        Ok(Resolvent {
            profile: profile.clone(),
            m,
            v,
            speed,
            nu,
            mu: m * nu,
            k_cut: profile.spectral_cutoff(1e-8),
            panel: 0.5 * PI / profile.radius,
            tol: SPECTRAL_TOL,
        })
    }

    fn quad_error(what: &str) -> impl Fn(f64) -> Error + '_ {
        move |change| Error::Quadrature {
            what: what.to_string(),
            change,
        }
    }

    /// K_jj = ∫ k_j²|ρ̂|²/(k² + m² − (|v|k₁)²) dk.
    pub fn k_diag(&self) -> Result<[f64; 2]> {
        let (s, m2) = (self.speed, self.m * self.m);
        let r = quad::axisymmetric(self.k_cut, self.panel, self.tol, |k, t| {
            let rho = self.profile.rho_hat_radial(k);
            let w = rho * rho / (k * k + m2 - (s * k * t).powi(2));
            [w * k * k * t * t, 0.5 * w * k * k * (1.0 - t * t)]
        })
        .map_err(Self::quad_error("K"))?;
        Ok(r)
    }

    /// Off-diagonal entry ∫ k₁k₂|ρ̂|²/(k² + m² − (|v|k₁)²) dk, computed
    /// over the full sphere (vanishes by oddness).
    pub fn k_offdiag(&self) -> f64 {
        let (s, m2) = (self.speed, self.m * self.m);
        let gl = GaussLegendre::new(16);
        let radial = gl.composite(&quad::uniform_edges(0.0, self.k_cut, (self.k_cut / self.panel).ceil() as usize));
        let ang = GaussLegendre::new(24);
        let phi = GaussLegendre::new(32);
        let mut acc = 0.0;
        for &(k, wk) in &radial {
            let rho = self.profile.rho_hat_radial(k);
            for (&t, &wt) in ang.nodes.iter().zip(&ang.weights) {
                let st = (1.0 - t * t).sqrt();
                let w = rho * rho / (k * k + m2 - (s * k * t).powi(2));
                for (ph, wp) in phi.mapped(0.0, 2.0 * PI) {
                    acc += wk * wt * wp * k * k * w * (k * t) * (k * st * ph.cos());
                }
            }
        }
        acc
    }

    /// K in lab coordinates.
    pub fn k_matrix(&self) -> Result<Matrix3<f64>> {
        let rot = aligned_rotation(self.v);
        Ok(rot * diag3(self.k_diag()?) * rot.transpose())
    }

    /// H_jj(λ) for Re λ > 0 (or λ = 0), by quadrature in k.
    pub fn h_diag(&self, lambda: C64) -> Result<[C64; 2]> {
        if lambda.re < 0.0 || (lambda.re == 0.0 && lambda.im != 0.0) {
            return Err(Error::invalid(
                "lambda",
                "use the boundary values for Re λ = 0 and no continuation to Re λ < 0",
            ));
        }
        let (s, m2) = (self.speed, self.m * self.m);
        let [a, b, c, d] = quad::axisymmetric(self.k_cut, self.panel, self.tol, |k, t| {
            let rho = self.profile.rho_hat_radial(k);
            let z = C64::new(lambda.re, lambda.im + s * k * t);
            let w = (z * z + k * k + m2).inv() * (rho * rho);
            let k1 = k * k * t * t;
            let kp = 0.5 * k * k * (1.0 - t * t);
            [w.re * k1, w.im * k1, w.re * kp, w.im * kp]
        })
        .map_err(Self::quad_error("H(λ)"))?;
        Ok([C64::new(a, b), C64::new(c, d)])
    }

    /// Spherical average (2π/ν)∫dt [k₁², k⊥²/2]|ρ̂|² over |u| = s, where
    /// u₁ = νk₁ − |v|ω/ν, u⊥ = k⊥.
    fn shell(&self, omega: f64, s: f64, rule: &[(f64, f64)]) -> [f64; 2] {
        let c = self.speed * omega / self.nu;
        let mut acc = [0.0; 2];
        for &(t, w) in rule {
            let k1 = (s * t + c) / self.nu;
            let kp2 = s * s * (1.0 - t * t);
            let rho = self.profile.rho_hat_radial((k1 * k1 + kp2).sqrt());
            let r2 = rho * rho * w;
            acc[0] += r2 * k1 * k1;
            acc[1] += r2 * 0.5 * kp2;
        }
        let f = 2.0 * PI / self.nu;
        [acc[0] * f, acc[1] * f]
    }

    fn angular_rule(level: u32) -> Vec<(f64, f64)> {
        GaussLegendre::new(16).composite(&quad::uniform_edges(-1.0, 1.0, 8 << level))
    }

    /// (ω² − μ²)/ν², the signed squared radius of the shell D = 0.
    pub fn shell_radius_sq(&self, omega: f64) -> f64 {
        (omega * omega - self.mu * self.mu) / (self.nu * self.nu)
    }

    fn u_max(&self, omega: f64) -> f64 {
        self.k_cut * (1.0 + self.nu) + (self.speed * omega / self.nu).abs()
    }

    fn boundary_level(&self, omega: f64, level: u32) -> [C64; 2] {
        let rule = Self::angular_rule(level);
        let gl = GaussLegendre::new(16);
        let r2 = self.shell_radius_sq(omega);
        let smax = self.u_max(omega);
        let width = self.panel / f64::from(1u32 << level);
        let mut re = [0.0; 2];
        let mut im = [0.0; 2];
        if r2 <= 0.0 {
            let a2 = -r2;
            let a = a2.sqrt();
            let edges = fine_then_uniform(0.0, smax, (0.25 * a).max(1e-6 * width).min(width), width);
            for (s, w) in gl.composite(&edges) {
                let g = self.shell(omega, s, &rule);
                let f = w * s * s / (s * s + a2);
                re[0] += f * g[0];
                re[1] += f * g[1];
            }
        } else {
            let r = r2.sqrt();
            let h = |s: f64| {
                let g = self.shell(omega, s, &rule);
                let f = s * s / (s + r);
                [f * g[0], f * g[1]]
            };
            for (t, w) in gl.composite(&quad::uniform_edges(0.0, r, (r / width).ceil() as usize)) {
                let (p, q) = (h(r + t), h(r - t));
                re[0] += w * (p[0] - q[0]) / t;
                re[1] += w * (p[1] - q[1]) / t;
            }
            let top = smax.max(2.0 * r);
            let count = ((top - 2.0 * r) / width).ceil() as usize;
            for (s, w) in gl.composite(&quad::uniform_edges(2.0 * r, top, count)) {
                let g = self.shell(omega, s, &rule);
                let f = w * s * s / (s * s - r2);
                re[0] += f * g[0];
                re[1] += f * g[1];
            }
            let g = self.shell(omega, r, &rule);
            let c = -omega.signum() * PI * 0.5 * r;
            im = [c * g[0], c * g[1]];
        }
        [C64::new(re[0], im[0]), C64::new(re[1], im[1])]
    }

    /// H_jj(iω + 0): principal value plus the shell term for |ω| > μ.
    pub fn h_boundary(&self, omega: f64) -> Result<[C64; 2]> {
        if !omega.is_finite() {
            return Err(Error::invalid("omega", "must be finite"));
        }
        let mut prev = self.boundary_level(omega, 0);
        let mut change = f64::INFINITY;
        for level in 1..=3 {
            let next = self.boundary_level(omega, level);
            let scale = next[0].norm().max(next[1].norm()).max(f64::MIN_POSITIVE);
            change = ((next[0] - prev[0]).norm()).max((next[1] - prev[1]).norm()) / scale;
            prev = next;
            if change <= self.tol {
                return Ok(prev);
            }
        }
        Err(Error::Quadrature {
            what: format!("H(iω+0) at ω = {omega}"),
            change,
        })
    }

    /// Im H_jj(iω + 0) = −sgn(ω)π ∫_{T_ω} k_j²|ρ̂|²/|∇D| dS for |ω| > μ.
    pub fn im_h_surface(&self, omega: f64) -> Result<[f64; 2]> {
        let r2 = self.shell_radius_sq(omega);
        if !(r2 > 0.0) {
            return Err(Error::invalid("omega", format!("need |ω| > μ = {}", self.mu)));
        }
        let r = r2.sqrt();
        let c = -omega.signum() * PI * 0.5 * r;
        let mut prev = self.shell(omega, r, &Self::angular_rule(0));
        let mut change = f64::INFINITY;
        for level in 1..=5 {
            let next = self.shell(omega, r, &Self::angular_rule(level));
            let scale = next[0].abs().max(next[1].abs()).max(f64::MIN_POSITIVE);
            change = (next[0] - prev[0]).abs().max((next[1] - prev[1]).abs()) / scale;
            prev = next;
            if change <= self.tol {
                return Ok([c * prev[0], c * prev[1]]);
            }
        }
        Err(Error::Quadrature {
            what: format!("shell integral at ω = {omega}"),
            change,
        })
    }

    /// F(ω) = −K + H(iω + 0).
    pub fn f_diag(&self, omega: f64) -> Result<[C64; 2]> {
        let k = self.k_diag()?;
        let h = self.h_boundary(omega)?;
        Ok([h[0] - k[0], h[1] - k[1]])
    }

    /// B_v = diag(ν³, ν, ν) in the aligned frame.
    pub fn b_diag(&self) -> [f64; 2] {
        [self.nu.powi(3), self.nu]
    }

    /// M(λ) = [[λE, −B], [K − H, λE]] in the aligned frame.
    pub fn m_matrix(lambda: C64, b: [f64; 2], k: [f64; 2], h: [C64; 2]) -> Matrix6<C64> {
        let mut mm = Matrix6::from_element(C64::new(0.0, 0.0));
        for j in 0..3 {
            let d = usize::from(j > 0);
            mm[(j, j)] = lambda;
            mm[(j + 3, j + 3)] = lambda;
            mm[(j, j + 3)] = C64::new(-b[d], 0.0);
            mm[(j + 3, j)] = k[d] - h[d];
        }
        mm
    }

    fn sample(&self, lambda: C64, kap: C64, k: [f64; 2], h: [C64; 2]) -> ResolventSample {
        let b = self.b_diag();
        let m = Self::m_matrix(lambda, b, k, h);
        let det = m.clone().full_piv_lu().determinant();
        let l2 = lambda * lambda;
        let f0 = l2 + (k[0] - h[0]) * b[0];
        let f1 = l2 + (k[1] - h[1]) * b[1];
        ResolventSample {
            lambda,
            kappa: kap,
            k,
            h,
            m,
            det,
            det_factored: f0 * f1 * f1,
        }
    }

    /// Sample at λ with Re λ > 0 (or λ = 0).
    pub fn at(&self, lambda: C64) -> Result<ResolventSample> {
        let k = self.k_diag()?;
        let h = self.h_diag(lambda)?;
        Ok(self.sample(lambda, kappa(lambda, self.v, self.m)?, k, h))
    }

    /// Sample at λ = iω + 0.
    pub fn at_boundary(&self, omega: f64) -> Result<ResolventSample> {
        let k = self.k_diag()?;
        self.at_boundary_with(omega, k)
    }

    fn at_boundary_with(&self, omega: f64, k: [f64; 2]) -> Result<ResolventSample> {
        let h = self.h_boundary(omega)?;
        Ok(self.sample(
            C64::new(0.0, omega),
            kappa_boundary(omega, self.v, self.m)?,
            k,
            h,
        ))
    }

    fn inverse_at(&self, omega: f64, k: [f64; 2]) -> Result<Matrix6<C64>> {
        self.at_boundary_with(omega, k)?
            .m
            .try_inverse()
            .ok_or_else(|| Error::Singular(format!("M(iω) at ω = {omega}")))
    }

    /// Least-squares fit of M⁻¹(iω) ≈ R₀ + R₁s + R₂s² on both sides of the
    /// branch point ±μ, with s = √(μ ∓ ω) continued through the boundary
    /// values (s = ±i√(|ω| − μ) beyond the gap).
    pub fn puiseux_fit(&self, plus: bool, window: f64, per_side: usize) -> Result<PuiseuxFit> {
        if !(window > 0.0 && window < self.mu) || per_side < 2 {
            return Err(Error::invalid("window", "need 0 < window < μ and at least two samples per side"));
        }
        let k = self.k_diag()?;
        let sign = if plus { 1.0 } else { -1.0 };
        let mut pts = Vec::new();
        for j in 1..=per_side {
            let d = window * j as f64 / per_side as f64;
            pts.push((sign * (self.mu - d), C64::new(d.sqrt(), 0.0)));
            pts.push((sign * (self.mu + d), C64::new(0.0, sign * d.sqrt())));
        }
        let rows = pts.len();
        let mut a = DMatrix::from_element(rows, 3, C64::new(0.0, 0.0));
        let mut values = Vec::with_capacity(rows);
        for (i, &(omega, s)) in pts.iter().enumerate() {
            a[(i, 0)] = C64::new(1.0, 0.0);
            a[(i, 1)] = s;
            a[(i, 2)] = s * s;
            values.push(self.inverse_at(omega, k)?);
        }
        let svd = a.clone().svd(true, true);
        let sv = &svd.singular_values;
        if sv.min() <= 1e-12 * sv.max() {
            return Err(Error::IllConditioned("Puiseux design matrix".into()));
        }
        let zero = Matrix6::from_element(C64::new(0.0, 0.0));
        let (mut r0, mut r1, mut r2) = (zero, zero, zero);
        let mut resid: f64 = 0.0;
        for r in 0..6 {
            for c in 0..6 {
                let b = DVector::from_iterator(rows, values.iter().map(|m| m[(r, c)]));
                let x = svd
                    .solve(&b, 1e-14)
                    .map_err(|e| Error::IllConditioned(e.to_string()))?;
                r0[(r, c)] = x[0];
                r1[(r, c)] = x[1];
                r2[(r, c)] = x[2];
                let res = &a * &x - &b;
                resid = resid.max(res.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
        let scale = r0.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Ok(PuiseuxFit {
            branch_point: sign * self.mu,
            window,
            r0,
            r1,
            r2,
            residual: resid / scale.max(f64::MIN_POSITIVE),
            half_power_norm: r1.iter().map(|z| z.norm()).fold(0.0, f64::max),
        })
    }

    /// M⁻¹ at the branch point itself.
    pub fn inverse_at_branch(&self, plus: bool) -> Result<Matrix6<C64>> {
        let k = self.k_diag()?;
        self.inverse_at(if plus { self.mu } else { -self.mu }, k)
    }

    /// Tail audit of |ω||H_jj(iω + 0)|: the band [split, hi] may not exceed
    /// `factor` times the band [lo, split].
    pub fn tail_check(&self, lo: f64, split: f64, hi: f64, samples: usize, factor: f64) -> Result<TailReport> {
        let mut low_max: f64 = 0.0;
        let mut high_max: f64 = 0.0;
        let mut all_finite = true;
        for i in 0..samples {
            let omega = lo + (hi - lo) * i as f64 / (samples - 1).max(1) as f64;
            let h = self.h_boundary(omega)?;
            let val = omega.abs() * h[0].norm().max(h[1].norm());
            all_finite &= val.is_finite();
            if omega <= split {
                low_max = low_max.max(val);
            } else {
                high_max = high_max.max(val);
            }
        }
        Ok(TailReport {
            low_max,
            high_max,
            all_finite,
            pass: all_finite && high_max <= factor * low_max,
        })
    }
}

fn fine_then_uniform(a: f64, b: f64, finest: f64, width: f64) -> Vec<f64> {
    let mut edges = vec![a];
    let mut w = finest.min(width);
    let mut x = a;
    while x + w < b {
        x += w;
        edges.push(x);
        w = (w * 1.5).min(width);
    }
    edges.push(b);
    edges
}

/// Whether (M, r, ω) meets 0 < |ω| ≤ M − |r|, the range implied by
/// |v| < 1 and 0 < |ω| ≤ μ with M = √(m² + k²), r = |v|k₁.
pub fn gap_sum_admissible(big_m: f64, r: f64, omega: f64) -> bool {
    big_m.is_finite() && r.is_finite() && omega != 0.0 && omega.abs() <= big_m - r.abs()
}

/// The six-term expression; +∞ when a denominator vanishes.
pub fn gap_sum_value(big_m: f64, r: f64, omega: f64) -> f64 {
    let group = |n: f64| {
        if n - omega.abs() == 0.0 {
            f64::INFINITY
        } else {
            2.0 * omega * omega / ((n + omega) * (n - omega) * n)
        }
    };
    group(big_m - r) + group(big_m + r)
}

/// The positivity check; errors outside the admissible range.
pub fn gap_sum_check(big_m: f64, r: f64, omega: f64) -> Result<bool> {
    if !gap_sum_admissible(big_m, r, omega) {
        return Err(Error::invalid("omega", "outside 0 < |ω| ≤ M − |r|"));
    }
    Ok(gap_sum_value(big_m, r, omega) > 0.0)
}

/// The six-term sum written out term by term, for cross-checking the
/// grouped form.
pub fn gap_sum_terms(big_m: f64, r: f64, omega: f64) -> f64 {
    let (rp, rm) = (r + omega, r - omega);
    1.0 / (big_m - rp) + 1.0 / (big_m - rm) - 2.0 / (big_m - r) + 1.0 / (big_m + rp)
        + 1.0 / (big_m + rm)
        - 2.0 / (big_m + r)
}
