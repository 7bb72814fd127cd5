//! Time integration of the coupled system, energy diagnostics, and the free
//! and moving-frame Klein-Gordon groups.
//!
//! The integrator is a symmetric splitting run entirely in k-space: the
//! coupling flow (source kick on π, force kick on p) alternates with the exact
//! free flow (Klein-Gordon rotation of each mode, relativistic drift of q).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldPair, FullState, Grid, Vec3, C64};
use crate::model::Model;
use crate::soliton::{check_speed, velocity_of_momentum};

/// Splitting composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Kick–drift–kick, second order.
    #[default]
    Strang,
    /// Triple-jump composition of Strang steps, fourth order.
    Yoshida4,
}

impl Scheme {
    /// Sub-step fractions of one step.
    pub fn fractions(self) -> &'static [f64] {
        const Y1: f64 = 1.351_207_191_959_657_8;
        const Y0: f64 = -1.702_414_383_919_315_7;
        match self {
            Scheme::Strang => &[1.0],
            Scheme::Yoshida4 => &[Y1, Y0, Y1],
        }
    }
}

/// Cached free-flow rotation for one sub-step length.
#[derive(Debug, Clone)]
pub(crate) struct Rotation {
    pub dt: f64,
    pub cos: Vec<f64>,
    /// sin(ω dt)/ω
    pub sinc: Vec<f64>,
    /// ω sin(ω dt)
    pub wsin: Vec<f64>,
}

impl Rotation {
    pub fn new(grid: &Grid, m: f64, dt: f64) -> Self {
        let len = grid.len();
        let mut cos = Vec::with_capacity(len);
        let mut sinc = Vec::with_capacity(len);
        let mut wsin = Vec::with_capacity(len);
        let m2 = m * m;
        grid.for_each_k(|_, kx, ky, kz| {
            let w = (kx * kx + ky * ky + kz * kz + m2).sqrt();
            let (s, c) = (w * dt).sin_cos();
            cos.push(c);
            sinc.push(s / w);
            wsin.push(w * s);
        });
        Rotation { dt, cos, sinc, wsin }
    }

    #[inline]
    pub fn apply(&self, idx: usize, psi: C64, pi: C64) -> (C64, C64) {
        (
            psi * self.cos[idx] + pi * self.sinc[idx],
            pi * self.cos[idx] - psi * self.wsin[idx],
        )
    }
}

/// Advances the nonlinear system.
#[derive(Debug, Clone)]
pub struct Integrator {
    pub model: Model,
    pub scheme: Scheme,
    rotations: Vec<Rotation>,
}

impl Integrator {
    pub fn new(model: Model, scheme: Scheme) -> Self {
        Integrator {
            model,
            scheme,
            rotations: Vec::new(),
        }
    }

    fn rotation(&mut self, dt: f64) -> usize {
        if let Some(i) = self.rotations.iter().position(|r| r.dt == dt) {
            return i;
        }
        if self.rotations.len() >= 6 {
            self.rotations.remove(0);
        }
        self.rotations
            .push(Rotation::new(&self.model.grid, self.model.m, dt));
        self.rotations.len() - 1
    }

    /// One step of length `dt` (negative steps run backwards).
    pub fn step(&mut self, y: &mut FullState, dt: f64) {
        for &f in self.scheme.fractions() {
            let h = f * dt;
            kick(&self.model, y, 0.5 * h);
            let r = self.rotation(h);
            drift(&self.rotations[r], y, h);
            kick(&self.model, y, 0.5 * h);
        }
    }
}

/// Exact flow of the coupling term ∫ψ ρ(x − q) for time `tau`.
pub fn kick(model: &Model, y: &mut FullState, tau: f64) {
    let grid = &model.grid;
    let n = grid.n;
    let [px, py, pz] = grid.shift_phases(y.q);
    let k = grid.k_op();
    let mut force = Vec3::zeros();
    let psi = &y.fields.psi;
    let pi = &mut y.fields.pi;
    for i in 0..n {
        for j in 0..n {
            let pij = px[i] * py[j];
            let base = (i * n + j) * n;
            for l in 0..n {
                let idx = base + l;
                let r = model.rho_hat[idx];
                if r == 0.0 {
                    continue;
                }
                let s = pij * pz[l] * r;
                // Re(ψ̂ · i k conj(ŝ))
                let c = psi[idx].re * s.im - psi[idx].im * s.re;
                force.x += c * k[i];
                force.y += c * k[j];
                force.z += c * k[l];
                pi[idx] -= s * tau;
            }
        }
    }
    y.p += force * (grid.spectral_volume() * tau);
}

/// Exact free flow for time `dt` (the rotation must match `dt`).
pub(crate) fn drift(rot: &Rotation, y: &mut FullState, dt: f64) {
    let f = &mut y.fields;
    for idx in 0..f.psi.len() {
        let (a, b) = rot.apply(idx, f.psi[idx], f.pi[idx]);
        f.psi[idx] = a;
        f.pi[idx] = b;
    }
    y.q += velocity_of_momentum(y.p) * dt;
}

/// ⟨ψ, ∇ρ(· − q)⟩.
pub fn force(model: &Model, y: &FullState) -> Vec3 {
    let mut probe = y.clone();
    let p0 = probe.p;
    kick(model, &mut probe, 1.0);
    probe.p - p0
}

/// H = ½∫(π² + |∇ψ|² + m²ψ²) + ∫ψρ(x − q) + √(1 + p²).
pub fn hamiltonian(model: &Model, y: &FullState) -> f64 {
    let grid = &model.grid;
    let n = grid.n;
    let m2 = model.m * model.m;
    let [px, py, pz] = grid.shift_phases(y.q);
    let k = grid.k_op();
    let (mut free, mut coupling) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let pij = px[i] * py[j];
            let kij = k[i] * k[i] + k[j] * k[j] + m2;
            let base = (i * n + j) * n;
            for l in 0..n {
                let idx = base + l;
                let psi = y.fields.psi[idx];
                free += y.fields.pi[idx].norm_sqr() + (kij + k[l] * k[l]) * psi.norm_sqr();
                let r = model.rho_hat[idx];
                if r != 0.0 {
                    let s = pij * pz[l] * r;
                    coupling += psi.re * s.re + psi.im * s.im;
                }
            }
        }
    }
    let dv = grid.spectral_volume();
    0.5 * free * dv + coupling * dv + (1.0 + y.p.norm_squared()).sqrt()
}

/// Time-integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub dt: f64,
    pub t_end: f64,
    /// Diagnostics every this many steps.
    pub sample_every: usize,
    pub scheme: Scheme,
}

impl RunSettings {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if self.dt > grid.h / std::f64::consts::PI {
            return Err(Error::invalid(
                "dt",
                format!("{} exceeds the dispersion bound h/π = {}", self.dt, grid.h / std::f64::consts::PI),
            ));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::invalid("T", "must be nonnegative"));
        }
        if self.sample_every == 0 {
            return Err(Error::invalid("sample_every", "must be at least 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Per-sample diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub energy: f64,
    pub q: Vec3,
    pub p: Vec3,
    /// |q̇| = |v(p)|.
    pub speed: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    /// Sparse state snapshots.
    pub snapshots: Vec<(f64, FullState)>,
    pub max_speed: f64,
}

impl TrajectoryRecord {
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.samples[0].energy;
        self.samples
            .iter()
            .map(|s| (s.energy - e0).abs() / e0.abs())
            .fold(0.0, f64::max)
    }

    pub fn final_state(&self) -> Option<&FullState> {
        self.snapshots.last().map(|(_, s)| s)
    }
}

/// Integrates from `y0`, sampling diagnostics and calling `observer` at every
/// sample. Snapshots are kept at the requested times (rounded to steps) and
/// always at the final time.
pub fn run(
    y0: &FullState,
    model: &Model,
    settings: &RunSettings,
    snapshot_times: &[f64],
    mut observer: impl FnMut(f64, &FullState) -> Result<()>,
) -> Result<TrajectoryRecord> {
    settings.validate(&model.grid)?;
    model.grid.check_same(y0.grid())?;
    let steps = settings.steps();
    let snap_steps: Vec<usize> = snapshot_times
        .iter()
        .map(|t| (t / settings.dt).round() as usize)
        .collect();
    let mut integ = Integrator::new(model.clone(), settings.scheme);
    let mut y = y0.clone();
    let mut rec = TrajectoryRecord {
        samples: Vec::new(),
        snapshots: Vec::new(),
        max_speed: 0.0,
    };
    for n in 0..=steps {
        let t = n as f64 * settings.dt;
        if n > 0 {
            integ.step(&mut y, settings.dt);
        }
        let sampled = n % settings.sample_every == 0 || n == steps;
        if sampled {
            if !y.is_finite() {
                return Err(Error::BlowUp { time: t });
            }
            let speed = velocity_of_momentum(y.p).norm();
            rec.max_speed = rec.max_speed.max(speed);
            rec.samples.push(Sample {
                t,
                energy: hamiltonian(model, &y),
                q: y.q,
                p: y.p,
                speed,
            });
            observer(t, &y)?;
        }
        if snap_steps.contains(&n) || n == steps {
            if rec.snapshots.last().map(|(ts, _)| *ts) != Some(t) {
                rec.snapshots.push((t, y.clone()));
            }
        }
    }
    Ok(rec)
}

/// W₀(t): exact free Klein-Gordon propagation.
pub fn free_kg_propagate(f: &FieldPair, t: f64, m: f64) -> FieldPair {
    let rot = Rotation::new(&f.grid, m, t);
    let mut out = f.clone();
    for idx in 0..out.psi.len() {
        let (a, b) = rot.apply(idx, f.psi[idx], f.pi[idx]);
        out.psi[idx] = a;
        out.pi[idx] = b;
    }
    out
}

/// W(t): [W(t)F](x) = [W₀(t)F](x + vt).
pub fn moving_frame_propagate(f: &FieldPair, t: f64, v: Vec3, m: f64) -> Result<FieldPair> {
    check_speed(v)?;
    let mut out = free_kg_propagate(f, t, m);
    out.translate(-v * t);
    Ok(out)
}

/// ∫|Π + v·∇Ψ|² + |∇Ψ|² − (v·∇Ψ)² + m²Ψ², conserved by W(t).
pub fn moving_frame_energy(f: &FieldPair, v: Vec3, m: f64) -> f64 {
    let m2 = m * m;
    let mut s = 0.0;
    f.grid.for_each_k(|idx, kx, ky, kz| {
        let kv = kx * v.x + ky * v.y + kz * v.z;
        // v·∇ ↔ −i(k·v)
        let d = f.pi[idx] + f.psi[idx] * C64::new(0.0, -kv);
        s += d.norm_sqr() + (kx * kx + ky * ky + kz * kz + m2 - kv * kv) * f.psi[idx].norm_sqr();
    });
    s * f.grid.spectral_volume()
}

/// ‖W(t)F₀‖_{−β} at the given times, centred at the origin.
pub fn local_decay_probe(
    f0: &FieldPair,
    v: Vec3,
    m: f64,
    beta: f64,
    times: &[f64],
    data_radius: f64,
) -> Result<Vec<(f64, f64)>> {
    check_speed(v)?;
    let bound = f0.grid.l - data_radius;
    if let Some(&t) = times.iter().find(|&&t| t >= bound) {
        return Err(Error::Wraparound { time: t, bound });
    }
    times
        .iter()
        .map(|&t| {
            let w = moving_frame_propagate(f0, t, v, m)?;
            Ok((t, w.weighted_norm(-beta, Vec3::zeros())))
        })
        .collect()
}
