//! The symplectic form Ω, the matrix Ω(v), and projection onto the solitary
//! manifold.

use nalgebra::{Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::charge::ChargeProfile;
use crate::error::{Error, Result};
use crate::fields::{FullState, Vec3, C64};
use crate::model::Model;
use crate::quad;
use crate::soliton::{
    check_speed, momentum_hessian, momentum_jacobian, momentum_of_velocity, soliton_state,
    tangent_vectors, velocity_of_momentum, ModeJet, SolitonParams, TangentFrame,
};

/// Ω(Y₁, Y₂) = ⟨ψ₁, π₂⟩ − ⟨π₁, ψ₂⟩ + q₁·p₂ − p₁·q₂.
pub fn omega(y1: &FullState, y2: &FullState) -> Result<f64> {
    y1.grid().check_same(y2.grid())?;
    let a = &y1.fields;
    let b = &y2.fields;
    let mut s = 0.0;
    for i in 0..a.psi.len() {
        s += dot(a.psi[i], b.pi[i]) - dot(a.pi[i], b.psi[i]);
    }
    Ok(s * y1.grid().spectral_volume() + y1.q.dot(&y2.p) - y1.p.dot(&y2.q))
}

#[inline]
fn dot(a: C64, b: C64) -> f64 {
    a.re * b.re + a.im * b.im
}

/// Ω(v) from its closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaMatrix {
    pub v: Vec3,
    /// The field contribution K_Ω.
    pub k_omega: Matrix3<f64>,
    /// Ω⁺ = K_Ω + γE + γ³ v⊗v.
    pub plus: Matrix3<f64>,
    /// [[0, Ω⁺], [−Ω⁺, 0]].
    pub full: Matrix6<f64>,
}

impl OmegaMatrix {
    pub fn from_plus(v: Vec3, k_omega: Matrix3<f64>) -> Self {
        let plus = k_omega + momentum_jacobian(v);
        let mut full = Matrix6::zeros();
        full.fixed_view_mut::<3, 3>(0, 3).copy_from(&plus);
        full.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-plus));
        OmegaMatrix {
            v,
            k_omega,
            plus,
            full,
        }
    }

    pub fn min_plus_eigenvalue(&self) -> f64 {
        self.plus.symmetric_eigenvalues().min()
    }
}

/// Rotation taking e₁ to v/|v| (identity for v = 0).
pub fn aligned_rotation(v: Vec3) -> Matrix3<f64> {
    let s = v.norm();
    if s == 0.0 {
        return Matrix3::identity();
    }
    let e1 = v / s;
    let trial = if e1.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e2 = (trial - e1 * e1.dot(&trial)).normalize();
    let e3 = e1.cross(&e2);
    Matrix3::from_columns(&[e1, e2, e3])
}

/// Relative tolerance for the closed-form quadratures.
pub const QUAD_TOL: f64 = 1e-10;

/// Ω(v) with K_Ω by quadrature in coordinates aligned with v.
pub fn omega_matrix(v: Vec3, profile: &ChargeProfile, m: f64) -> Result<OmegaMatrix> {
    check_speed(v)?;
    profile.validate()?;
    let s = v.norm();
    let m2 = m * m;
    let k_max = profile.spectral_cutoff(1e-9);
    let panel = std::f64::consts::FRAC_PI_2 / profile.radius;
    let [par, perp] = quad::axisymmetric(k_max, panel, QUAD_TOL, |k, t| {
        let r = profile.rho_hat_radial(k);
        let kv = s * k * t;
        let d = k * k + m2 - kv * kv;
        let w = r * r * (k * k + m2 + 3.0 * kv * kv) / (d * d * d);
        [w * k * k * t * t, w * k * k * (1.0 - t * t) * 0.5]
    })
    .map_err(|change| Error::Quadrature {
        what: "K of the symplectic matrix".into(),
        change,
    })?;
    let rot = aligned_rotation(v);
    let k_omega = rot * Matrix3::from_diagonal(&Vec3::new(par, perp, perp)) * rot.transpose();
    Ok(OmegaMatrix::from_plus(v, k_omega))
}

/// Gram matrix G_{ij} = Ω(τ_i, τ_j) from grid inner products.
pub fn gram_matrix(v: Vec3, model: &Model) -> Result<Matrix6<f64>> {
    check_speed(v)?;
    let m2 = model.m * model.m;
    let mut g = [[0.0; 6]; 6];
    model.grid.for_each_k(|idx, kx, ky, kz| {
        let r = model.rho_hat[idx];
        if r == 0.0 {
            return;
        }
        let k = [kx, ky, kz];
        let t = frame_modes(&ModeJet::new(k, v, m2), k, r);
        for i in 0..6 {
            for j in (i + 1)..6 {
                g[i][j] += dot(t[i].0, t[j].1) - dot(t[i].1, t[j].0);
            }
        }
    });
    let dv = model.grid.spectral_volume();
    let dp = momentum_jacobian(v);
    let mut out = Matrix6::zeros();
    for i in 0..6 {
        for j in (i + 1)..6 {
            let mut val = g[i][j] * dv;
            if i < 3 && j >= 3 {
                val += dp[(i, j - 3)];
            }
            out[(i, j)] = val;
            out[(j, i)] = -val;
        }
    }
    Ok(out)
}

/// Spectral (ψ̂, π̂) of τ₁..τ₆ at one wavevector.
#[inline]
fn frame_modes(jet: &ModeJet, k: [f64; 3], r: f64) -> [(C64, C64); 6] {
    std::array::from_fn(|j| {
        if j < 3 {
            (C64::new(0.0, k[j] * r * jet.psi), C64::new(-k[j] * r * jet.pi, 0.0))
        } else {
            (C64::new(r * jet.dpsi[j - 3], 0.0), C64::new(0.0, r * jet.dpi[j - 3]))
        }
    })
}

/// Options for [`project`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Iterates with |v| at or above this speed are rejected.
    pub max_speed: f64,
    /// Include the curvature term Ω(Z, ∂τ) in the Jacobian.
    pub full_jacobian: bool,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            tolerance: 1e-10,
            max_iterations: 50,
            max_speed: 0.99,
            full_jacobian: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub sigma: SolitonParams,
    /// Y − S(σ) in lab coordinates.
    pub z: FullState,
    pub iterations: usize,
    /// max_j |Ω(Z, τ_j(σ))|.
    pub residual: f64,
    /// Scale against which the residual tolerance is measured.
    pub scale: f64,
    pub history: Vec<f64>,
}

struct Pairings {
    g: Vector6<f64>,
    jac: Matrix6<f64>,
    tau_norm: f64,
}

/// Ω(Y − S(σ), τ_j(σ)) and its derivative in σ, in one pass over k-space.
fn pairings(y: &FullState, sigma: &SolitonParams, model: &Model, curvature: bool) -> Pairings {
    let grid = &model.grid;
    let m2 = model.m * model.m;
    let v = sigma.v;
    let [px, py, pz] = grid.shift_phases(-sigma.b);
    let n = grid.n;
    let mut g = [0.0; 6];
    let mut gram = [[0.0; 6]; 6];
    let mut curv = [[0.0; 6]; 6];
    let mut tau2 = [0.0; 6];
    grid.for_each_k(|idx, kx, ky, kz| {
        let r = model.rho_hat[idx];
        let ph = px[idx / (n * n)] * py[(idx / n) % n] * pz[idx % n];
        let yp = y.fields.psi[idx] * ph;
        let yq = y.fields.pi[idx] * ph;
        if r == 0.0 {
            return;
        }
        let k = [kx, ky, kz];
        let jet = ModeJet::new(k, v, m2);
        let zp = yp - r * jet.psi;
        let zq = yq - C64::new(0.0, r * jet.pi);
        let t = frame_modes(&jet, k, r);
        let kk = 1.0 + kx * kx + ky * ky + kz * kz;
        for j in 0..6 {
            g[j] += dot(zp, t[j].1) - dot(zq, t[j].0);
            tau2[j] += kk * t[j].0.norm_sqr() + t[j].1.norm_sqr();
            for l in (j + 1)..6 {
                gram[j][l] += dot(t[j].0, t[l].1) - dot(t[j].1, t[l].0);
            }
        }
        if !curvature {
            return;
        }
        let (d2psi, d2pi) = jet.second(k, v, m2);
        for j in 0..6 {
            for l in 0..6 {
                // ∂_{σ_l} τ_j
                let (a, b) = if l < 3 {
                    let c = C64::new(0.0, k[l]);
                    (t[j].0 * c, t[j].1 * c)
                } else if j < 3 {
                    (
                        C64::new(0.0, k[j] * r * jet.dpsi[l - 3]),
                        C64::new(-k[j] * r * jet.dpi[l - 3], 0.0),
                    )
                } else {
                    (
                        C64::new(r * d2psi[l - 3][j - 3], 0.0),
                        C64::new(0.0, r * d2pi[l - 3][j - 3]),
                    )
                };
                curv[j][l] += dot(zp, b) - dot(zq, a);
            }
        }
    });
    let dv = grid.spectral_volume();
    let dp = momentum_jacobian(v);
    let big_q = y.q - sigma.b;
    let big_p = y.p - momentum_of_velocity(v).unwrap_or_else(|_| Vec3::zeros());
    let mut gv = Vector6::zeros();
    let mut jac = Matrix6::zeros();
    let mut gram_m = Matrix6::zeros();
    for j in 0..6 {
        // vector parts of τ_j: (e_j, 0) or (0, ∂_{v_j} p_v)
        let (tq, tp) = if j < 3 {
            (Vec3::ith(j, 1.0), Vec3::zeros())
        } else {
            (Vec3::zeros(), dp.column(j - 3).into_owned())
        };
        gv[j] = g[j] * dv + big_q.dot(&tp) - big_p.dot(&tq);
        for l in (j + 1)..6 {
            let mut val = gram[j][l] * dv;
            if j < 3 && l >= 3 {
                val += dp[(j, l - 3)];
            }
            gram_m[(j, l)] = val;
            gram_m[(l, j)] = -val;
        }
    }
    let hess = momentum_hessian(v);
    for j in 0..6 {
        for l in 0..6 {
            // ∂G_j/∂σ_l = −Ω(τ_l, τ_j) + Ω(Z, ∂_l τ_j)
            let mut val = -gram_m[(l, j)];
            if curvature {
                let mut c = curv[j][l] * dv;
                if j >= 3 && l >= 3 {
                    c += big_q.dot(&hess[l - 3].column(j - 3));
                }
                val += c;
            }
            jac[(j, l)] = val;
        }
    }
    let tau_norm = tau2
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let vec = if j < 3 { 1.0 } else { dp.column(j - 3).norm_squared() };
            (s * dv + vec).sqrt()
        })
        .fold(0.0, f64::max);
    Pairings {
        g: gv,
        jac,
        tau_norm,
    }
}

fn phase_norm(y: &FullState) -> f64 {
    let mut s = 0.0;
    y.grid().for_each_k(|idx, kx, ky, kz| {
        s += (1.0 + kx * kx + ky * ky + kz * kz) * y.fields.psi[idx].norm_sqr()
            + y.fields.pi[idx].norm_sqr();
    });
    (s * y.grid().spectral_volume() + y.p.norm_squared()).sqrt()
}

/// Symplectic orthogonal projection: finds σ with Ω(Y − S(σ), τ_j(σ)) = 0.
pub fn project(y: &FullState, model: &Model, opts: &ProjectionOptions) -> Result<ProjectionResult> {
    model.grid.check_same(y.grid())?;
    let v0 = velocity_of_momentum(y.p);
    project_from(y, model, opts, SolitonParams { b: y.q, v: v0 })
}

/// Projection started from a given σ.
pub fn project_from(
    y: &FullState,
    model: &Model,
    opts: &ProjectionOptions,
    start: SolitonParams,
) -> Result<ProjectionResult> {
    let mut sigma = start;
    if sigma.v.norm() >= opts.max_speed {
        return Err(Error::SuperluminalIterate {
            speed: sigma.v.norm(),
        });
    }
    let ynorm = phase_norm(y) + 1.0;
    let mut history = Vec::new();
    for it in 0..=opts.max_iterations {
        let pr = pairings(y, &sigma, model, opts.full_jacobian);
        let scale = pr.tau_norm * ynorm;
        let res = pr.g.amax();
        history.push(res);
        if res <= opts.tolerance * scale {
            let s = soliton_state(&sigma, model)?;
            let z = y.sub(&s)?;
            return Ok(ProjectionResult {
                sigma,
                z,
                iterations: it,
                residual: res,
                scale,
                history,
            });
        }
        if it == opts.max_iterations {
            break;
        }
        let step = pr
            .jac
            .lu()
            .solve(&(-pr.g))
            .ok_or_else(|| Error::Singular("projection Jacobian".into()))?;
        for l in 0..3 {
            sigma.b[l] += step[l];
            sigma.v[l] += step[l + 3];
        }
        let speed = sigma.v.norm();
        if !(speed < opts.max_speed) {
            return Err(Error::SuperluminalIterate { speed });
        }
    }
    Err(Error::ProjectionFailed {
        iterations: opts.max_iterations,
        residual: *history.last().unwrap_or(&f64::NAN),
    })
}

/// max_j |Ω(Z, τ_j(σ))| for Z = Y − S(σ), and the matching scale.
pub fn orthogonality_defect(y: &FullState, sigma: &SolitonParams, model: &Model) -> (f64, f64) {
    let pr = pairings(y, sigma, model, false);
    (pr.g.amax(), pr.tau_norm * (phase_norm(y) + 1.0))
}

/// The symplectic projector Π_v onto the tangent space and its complement
/// P_v = 1 − Π_v, acting on moving-frame states.
#[derive(Debug, Clone)]
pub struct TangentProjector {
    pub frame: TangentFrame,
    pub gram: Matrix6<f64>,
    gram_inv: Matrix6<f64>,
}

impl TangentProjector {
    pub fn new(v: Vec3, model: &Model) -> Result<Self> {
        let frame = tangent_vectors(v, model)?;
        let gram = gram_matrix(v, model)?;
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Singular("tangent Gram matrix".into()))?;
        Ok(TangentProjector {
            frame,
            gram,
            gram_inv,
        })
    }

    /// Coefficients α with Π_v Z = Σ α_j τ_j.
    pub fn coefficients(&self, z: &FullState) -> Result<Vector6<f64>> {
        let mut c = Vector6::zeros();
        for i in 0..6 {
            c[i] = omega(&self.frame.tau[i], z)?;
        }
        Ok(self.gram_inv * c)
    }

    pub fn apply(&self, z: &FullState) -> Result<FullState> {
        let a = self.coefficients(z)?;
        let mut out = FullState::zeros(z.grid());
        for j in 0..6 {
            out.axpy(a[j], &self.frame.tau[j])?;
        }
        Ok(out)
    }

    pub fn complement(&self, z: &FullState) -> Result<FullState> {
        let t = self.apply(z)?;
        z.sub(&t)
    }
}
