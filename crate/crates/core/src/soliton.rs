//! Solitary waves S(σ), σ = (b, v), and the tangent frame τ₁..τ₆.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldPair, FullState, Vec3, C64};
use crate::model::Model;

/// A point σ = (b, v) of the solitary manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub b: Vec3,
    pub v: Vec3,
}

impl SolitonParams {
    pub fn new(b: Vec3, v: Vec3) -> Result<Self> {
        check_speed(v)?;
        Ok(SolitonParams { b, v })
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.nu()
    }

    pub fn nu(&self) -> f64 {
        (1.0 - self.v.norm_squared()).sqrt()
    }
}

pub fn check_speed(v: Vec3) -> Result<()> {
    let s = v.norm();
    if s.is_finite() && s < 1.0 {
        Ok(())
    } else {
        Err(Error::Superluminal { speed: s })
    }
}

/// p_v = v/√(1 − v²).
pub fn momentum_of_velocity(v: Vec3) -> Result<Vec3> {
    check_speed(v)?;
    Ok(v / (1.0 - v.norm_squared()).sqrt())
}

/// v(p) = p/√(1 + p²).
pub fn velocity_of_momentum(p: Vec3) -> Vec3 {
    p / (1.0 + p.norm_squared()).sqrt()
}

/// Jacobian ∂p_v/∂v; column j is ∂_{v_j} p_v.
pub fn momentum_jacobian(v: Vec3) -> Matrix3<f64> {
    let nu2 = 1.0 - v.norm_squared();
    let g = 1.0 / nu2.sqrt();
    Matrix3::identity() * g + v * v.transpose() * g.powi(3)
}

/// Second derivatives: `[l]` column j holds ∂_{v_l}∂_{v_j} p_v.
pub fn momentum_hessian(v: Vec3) -> [Matrix3<f64>; 3] {
    let g = 1.0 / (1.0 - v.norm_squared()).sqrt();
    let g3 = g.powi(3);
    let g5 = g.powi(5);
    std::array::from_fn(|l| {
        let mut m = Matrix3::zeros();
        for j in 0..3 {
            let mut col = v * (3.0 * g5 * v[l] * v[j]);
            col[j] += g3 * v[l];
            col[l] += g3 * v[j];
            if l == j {
                col += v * g3;
            }
            m.set_column(j, &col);
        }
        m
    })
}

/// Pointwise spectral soliton data per unit ρ̂ at a wavevector.
///
/// ψ̂ and its v-derivatives are real multiples of ρ̂; π̂ and its derivatives
/// are imaginary, stored as the coefficient of i.
#[derive(Debug, Clone, Copy)]
pub struct ModeJet {
    pub psi: f64,
    pub pi: f64,
    pub dpsi: [f64; 3],
    pub dpi: [f64; 3],
}

impl ModeJet {
    #[inline]
    pub fn new(k: [f64; 3], v: Vec3, m2: f64) -> Self {
        let kv = k[0] * v.x + k[1] * v.y + k[2] * v.z;
        let d = k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + m2 - kv * kv;
        let psi = -1.0 / d;
        let dpsi = k.map(|kj| 2.0 * kv * kj / d * psi);
        let mut dpi = [0.0; 3];
        for j in 0..3 {
            dpi[j] = k[j] * psi + kv * dpsi[j];
        }
        ModeJet {
            psi,
            pi: kv * psi,
            dpsi,
            dpi,
        }
    }

    /// ∂_{v_l}∂_{v_j} of (ψ̂, π̂/i) per unit ρ̂.
    #[inline]
    pub fn second(&self, k: [f64; 3], v: Vec3, m2: f64) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
        let kv = k[0] * v.x + k[1] * v.y + k[2] * v.z;
        let d = k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + m2 - kv * kv;
        let mut d2psi = [[0.0; 3]; 3];
        let mut d2pi = [[0.0; 3]; 3];
        let c = self.psi * (2.0 / d + 8.0 * kv * kv / (d * d));
        for l in 0..3 {
            for j in 0..3 {
                d2psi[l][j] = c * k[j] * k[l];
            }
        }
        for l in 0..3 {
            for j in 0..3 {
                d2pi[l][j] = k[j] * self.dpsi[l] + k[l] * self.dpsi[j] + kv * d2psi[l][j];
            }
        }
        (d2psi, d2pi)
    }
}

/// S(σ) = (ψ_v(· − b), π_v(· − b), b, p_v), built in k-space.
pub fn soliton_state(sigma: &SolitonParams, model: &Model) -> Result<FullState> {
    check_speed(sigma.v)?;
    let grid = &model.grid;
    let reach = model.profile.support_radius() + sigma.b.amax();
    if reach >= grid.l {
        return Err(Error::SupportClipped {
            radius: model.profile.support_radius(),
            center: [sigma.b.x, sigma.b.y, sigma.b.z],
            half_width: grid.l,
        });
    }
    let mut fields = soliton_fields(sigma.v, model);
    fields.translate(sigma.b);
    Ok(FullState {
        fields,
        q: sigma.b,
        p: momentum_of_velocity(sigma.v)?,
    })
}

/// (ψ_v, π_v) centred at the origin.
pub fn soliton_fields(v: Vec3, model: &Model) -> FieldPair {
    let grid = &model.grid;
    let m2 = model.m * model.m;
    let mut f = FieldPair::zeros(grid);
    grid.for_each_k(|idx, kx, ky, kz| {
        let r = model.rho_hat[idx];
        if r == 0.0 {
            return;
        }
        let jet = ModeJet::new([kx, ky, kz], v, m2);
        f.psi[idx] = C64::new(r * jet.psi, 0.0);
        f.pi[idx] = C64::new(0.0, r * jet.pi);
    });
    f
}

/// Moving-frame tangent vectors τ₁..τ₆ at velocity v.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub v: Vec3,
    pub tau: [FullState; 6],
}

pub fn tangent_vectors(v: Vec3, model: &Model) -> Result<TangentFrame> {
    check_speed(v)?;
    let grid = &model.grid;
    let m2 = model.m * model.m;
    let dp = momentum_jacobian(v);
    let mut tau: [FullState; 6] = std::array::from_fn(|_| FullState::zeros(grid));
    for j in 0..3 {
        tau[j].q[j] = 1.0;
        tau[j + 3].p = dp.column(j).into_owned();
    }
    grid.for_each_k(|idx, kx, ky, kz| {
        let r = model.rho_hat[idx];
        if r == 0.0 {
            return;
        }
        let k = [kx, ky, kz];
        let jet = ModeJet::new(k, v, m2);
        for j in 0..3 {
            // −∂_j ↔ i k_j
            tau[j].fields.psi[idx] = C64::new(0.0, k[j] * r * jet.psi);
            tau[j].fields.pi[idx] = C64::new(-k[j] * r * jet.pi, 0.0);
            tau[j + 3].fields.psi[idx] = C64::new(r * jet.dpsi[j], 0.0);
            tau[j + 3].fields.pi[idx] = C64::new(0.0, r * jet.dpi[j]);
        }
    });
    Ok(TangentFrame { v, tau })
}

/// σ(t) = (b₀ + vt, v).
pub fn soliton_trajectory(sigma0: &SolitonParams, t: f64) -> SolitonParams {
    SolitonParams {
        b: sigma0.b + sigma0.v * t,
        v: sigma0.v,
    }
}

/// Residuals of the stationary equations on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryResidual {
    /// ‖Λψ_v + ρ‖ with Λ = −Δ + m² − (v·∇)².
    pub field: f64,
    /// ‖π_v + v·∇ψ_v‖.
    pub momentum: f64,
    /// |⟨∇ψ_v, ρ⟩|.
    pub force: f64,
}

pub fn stationary_residual(v: Vec3, model: &Model) -> Result<StationaryResidual> {
    check_speed(v)?;
    let f = soliton_fields(v, model);
    let m2 = model.m * model.m;
    let (mut a, mut b) = (0.0, 0.0);
    let mut force = Vec3::zeros();
    model.grid.for_each_k(|idx, kx, ky, kz| {
        let kv = kx * v.x + ky * v.y + kz * v.z;
        let lam = kx * kx + ky * ky + kz * kz + m2 - kv * kv;
        let psi = f.psi[idx];
        let rho = model.rho_hat[idx];
        a += (psi * lam + rho).norm_sqr();
        // v·∇ ↔ −i(k·v)
        b += (f.pi[idx] + psi * C64::new(0.0, -kv)).norm_sqr();
        let grad = [kx, ky, kz].map(|kj| psi * C64::new(0.0, -kj));
        for j in 0..3 {
            force[j] += grad[j].re * rho;
        }
    });
    let dv = model.grid.spectral_volume();
    Ok(StationaryResidual {
        field: (a * dv).sqrt(),
        momentum: (b * dv).sqrt(),
        force: (force * dv).norm(),
    })
}
