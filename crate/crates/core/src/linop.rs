//! Linearization at a soliton: the generator A_{v,w}, its Hamiltonian, the
//! frozen linear flow and the split Ż = AZ + T + N.
//!
//! All states here are in the moving frame y = x − b, so the soliton sits
//! at the origin.

use nalgebra::Matrix3;

use crate::error::Result;
use crate::evolve::{self, Rotation, Scheme};
use crate::fields::{FieldPair, FullState, Vec3, C64};
use crate::model::Model;
use crate::soliton::{
    check_speed, momentum_jacobian, momentum_of_velocity, soliton_fields, tangent_vectors,
    velocity_of_momentum, TangentFrame,
};
use crate::symplectic::omega;

/// A moving-frame state X = (Ψ, Π, Q, P).
pub type LinState = FullState;

/// Data of the linearization at velocity v.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    pub model: Model,
    pub v: Vec3,
    /// K_{ij} = −⟨∂_iψ_v, ∂_jρ⟩ on the grid.
    pub k: Matrix3<f64>,
    /// B_v = ν(E − v⊗v).
    pub b: Matrix3<f64>,
    pub soliton: FieldPair,
    pub frame: TangentFrame,
}

impl LinearOperator {
    pub fn new(v: Vec3, model: &Model) -> Result<Self> {
        check_speed(v)?;
        let soliton = soliton_fields(v, model);
        let mut k = Matrix3::zeros();
        model.grid.for_each_k(|idx, kx, ky, kz| {
            let r = model.rho_hat[idx];
            if r == 0.0 {
                return;
            }
            let kk = [kx, ky, kz];
            let c = -soliton.psi[idx].re * r;
            for i in 0..3 {
                for j in 0..3 {
                    k[(i, j)] += kk[i] * kk[j] * c;
                }
            }
        });
        k *= model.grid.spectral_volume();
        let nu = (1.0 - v.norm_squared()).sqrt();
        let b = (Matrix3::identity() - v * v.transpose()) * nu;
        Ok(LinearOperator {
            model: model.clone(),
            v,
            k,
            b,
            soliton,
            frame: tangent_vectors(v, model)?,
        })
    }

    /// ⟨∇Ψ, ρ⟩.
    fn grad_rho(&self, x: &LinState) -> Vec3 {
        let mut s = Vec3::zeros();
        self.model.grid.for_each_k(|idx, kx, ky, kz| {
            let r = self.model.rho_hat[idx];
            if r != 0.0 {
                let c = x.fields.psi[idx].im * r;
                s += Vec3::new(kx, ky, kz) * c;
            }
        });
        s * self.model.grid.spectral_volume()
    }

    /// A_{v,w} X.
    pub fn apply(&self, w: Vec3, x: &LinState) -> LinState {
        let m2 = self.model.m * self.model.m;
        let mut out = FullState::zeros(&self.model.grid);
        let q = x.q;
        self.model.grid.for_each_k(|idx, kx, ky, kz| {
            let kw = kx * w.x + ky * w.y + kz * w.z;
            let kq = kx * q.x + ky * q.y + kz * q.z;
            let psi = x.fields.psi[idx];
            let pi = x.fields.pi[idx];
            let dw = C64::new(0.0, -kw);
            out.fields.psi[idx] = psi * dw + pi;
            out.fields.pi[idx] = -psi * (kx * kx + ky * ky + kz * kz + m2)
                + pi * dw
                + C64::new(0.0, -kq * self.model.rho_hat[idx]);
        });
        out.q = self.b * x.p;
        out.p = -self.grad_rho(x) - self.k * x.q;
        out
    }

    /// The Hamiltonian functional H_{v,w}(X).
    pub fn hamiltonian(&self, w: Vec3, x: &LinState) -> f64 {
        let m2 = self.model.m * self.model.m;
        let (mut quad, mut cross) = (0.0, 0.0);
        self.model.grid.for_each_k(|idx, kx, ky, kz| {
            let psi = x.fields.psi[idx];
            let pi = x.fields.pi[idx];
            quad += pi.norm_sqr() + (kx * kx + ky * ky + kz * kz + m2) * psi.norm_sqr();
            let kw = kx * w.x + ky * w.y + kz * w.z;
            // Re Π̂ · conj(−i(k·w)Ψ̂)
            cross += kw * (pi.re * psi.im - pi.im * psi.re);
        });
        let dv = self.model.grid.spectral_volume();
        0.5 * quad * dv + cross * dv + x.q.dot(&self.grad_rho(x)) + 0.5 * x.p.dot(&(self.b * x.p))
            + 0.5 * x.q.dot(&(self.k * x.q))
    }

    /// H_{v,v} as ½∫|Π + v·∇Ψ|² + |Λ^{1/2}Ψ − Λ^{-1/2}Q·∇ρ|² + ½P·B_vP.
    pub fn hamiltonian_sum_of_squares(&self, x: &LinState) -> f64 {
        let m2 = self.model.m * self.model.m;
        let v = self.v;
        let q = x.q;
        let mut s = 0.0;
        self.model.grid.for_each_k(|idx, kx, ky, kz| {
            let kv = kx * v.x + ky * v.y + kz * v.z;
            let kq = kx * q.x + ky * q.y + kz * q.z;
            let lam = kx * kx + ky * ky + kz * kz + m2 - kv * kv;
            let psi = x.fields.psi[idx];
            let a = x.fields.pi[idx] + psi * C64::new(0.0, -kv);
            let sl = lam.sqrt();
            let b = psi * sl + C64::new(0.0, kq * self.model.rho_hat[idx] / sl);
            s += a.norm_sqr() + b.norm_sqr();
        });
        0.5 * s * self.model.grid.spectral_volume() + 0.5 * x.p.dot(&(self.b * x.p))
    }

    /// Ω(A X₁, X₂) + Ω(X₁, A X₂).
    pub fn skew_symmetry_residual(&self, w: Vec3, x1: &LinState, x2: &LinState) -> Result<f64> {
        Ok(omega(&self.apply(w, x1), x2)? + omega(x1, &self.apply(w, x2))?)
    }

    /// T = −Σ[(w − v)_l τ_l + v̇_l τ_{l+3}].
    pub fn t_term(&self, w: Vec3, v_dot: Vec3) -> Result<LinState> {
        let mut t = FullState::zeros(&self.model.grid);
        let c = w - self.v;
        for l in 0..3 {
            t.axpy(-c[l], &self.frame.tau[l])?;
            t.axpy(-v_dot[l], &self.frame.tau[l + 3])?;
        }
        Ok(t)
    }

    /// Ż for Y = S(σ) + Z under the full nonlinear flow, expressed in the
    /// frame moving with ḃ = w while v changes at rate v̇.
    pub fn transported_rhs(&self, w: Vec3, v_dot: Vec3, z: &LinState) -> Result<LinState> {
        let model = &self.model;
        let m2 = model.m * model.m;
        let mut full = z.clone();
        full.fields.axpy(1.0, &self.soliton)?;
        full.p += momentum_of_velocity(self.v)?;
        let tv = self.t_term(self.v, v_dot)?;
        let big_q = z.q;
        let [px, py, pz] = model.grid.shift_phases(big_q);
        let n = model.grid.n;
        let mut out = FullState::zeros(&model.grid);
        model.grid.for_each_k(|idx, kx, ky, kz| {
            let kw = kx * w.x + ky * w.y + kz * w.z;
            let dw = C64::new(0.0, -kw);
            let psi = full.fields.psi[idx];
            let pi = full.fields.pi[idx];
            let src = px[idx / (n * n)] * py[(idx / n) % n] * pz[idx % n] * model.rho_hat[idx];
            out.fields.psi[idx] = pi + psi * dw;
            out.fields.pi[idx] =
                -psi * (kx * kx + ky * ky + kz * kz + m2) - src + pi * dw;
        });
        out.fields.axpy(1.0, &tv.fields)?;
        out.q = velocity_of_momentum(full.p) - w;
        let mut probe = FullState {
            fields: full.fields,
            q: big_q,
            p: Vec3::zeros(),
        };
        evolve::kick(model, &mut probe, 1.0);
        out.p = probe.p - momentum_jacobian(self.v) * v_dot;
        Ok(out)
    }

    /// (T, N) with N = Ż − A_{v,w}Z − T.
    pub fn nonlinear_remainder(
        &self,
        w: Vec3,
        v_dot: Vec3,
        z: &LinState,
    ) -> Result<(LinState, LinState)> {
        let t = self.t_term(w, v_dot)?;
        let mut n = self.transported_rhs(w, v_dot, z)?;
        n.axpy(-1.0, &self.apply(w, z))?;
        n.axpy(-1.0, &t)?;
        Ok((t, n))
    }
}

/// Splitting integrator for Ẋ = A_{v,v}X: the moving-frame free flow
/// (with Q̇ = B_vP) alternates with the bounded coupling kicks.
#[derive(Debug, Clone)]
pub struct FrozenFlow {
    pub op: LinearOperator,
    pub scheme: Scheme,
    rotations: Vec<(Rotation, Vec<C64>)>,
}

impl FrozenFlow {
    pub fn new(op: LinearOperator, scheme: Scheme) -> Self {
        FrozenFlow {
            op,
            scheme,
            rotations: Vec::new(),
        }
    }

    fn rotation(&mut self, dt: f64) -> usize {
        if let Some(i) = self.rotations.iter().position(|r| r.0.dt == dt) {
            return i;
        }
        let grid = &self.op.model.grid;
        let rot = Rotation::new(grid, self.op.model.m, dt);
        let v = self.op.v;
        let mut shift = Vec::with_capacity(grid.len());
        grid.for_each_k(|_, kx, ky, kz| {
            shift.push(C64::from_polar(1.0, -(kx * v.x + ky * v.y + kz * v.z) * dt));
        });
        self.rotations.push((rot, shift));
        self.rotations.len() - 1
    }

    fn kick(&self, x: &mut LinState, tau: f64) {
        let q = x.q;
        let f = self.op.grad_rho(x);
        let rho = &self.op.model.rho_hat;
        self.op.model.grid.for_each_k(|idx, kx, ky, kz| {
            let kq = kx * q.x + ky * q.y + kz * q.z;
            x.fields.pi[idx] += C64::new(0.0, -kq * rho[idx] * tau);
        });
        x.p += (-f - self.op.k * q) * tau;
    }

    pub fn step(&mut self, x: &mut LinState, dt: f64) {
        for &frac in self.scheme.fractions() {
            let h = frac * dt;
            self.kick(x, 0.5 * h);
            let r = self.rotation(h);
            let (rot, shift) = &self.rotations[r];
            for idx in 0..x.fields.psi.len() {
                let (a, b) = rot.apply(idx, x.fields.psi[idx], x.fields.pi[idx]);
                x.fields.psi[idx] = a * shift[idx];
                x.fields.pi[idx] = b * shift[idx];
            }
            x.q += self.op.b * x.p * h;
            self.kick(x, 0.5 * h);
        }
    }

    /// Integrates to `t_end`, calling `observer` every `sample_every` steps.
    pub fn evolve(
        &mut self,
        x0: &LinState,
        dt: f64,
        t_end: f64,
        sample_every: usize,
        mut observer: impl FnMut(f64, &LinState),
    ) -> LinState {
        let steps = (t_end / dt).round() as usize;
        let mut x = x0.clone();
        observer(0.0, &x);
        for n in 1..=steps {
            self.step(&mut x, dt);
            if n % sample_every.max(1) == 0 || n == steps {
                observer(n as f64 * dt, &x);
            }
        }
        x
    }
}
