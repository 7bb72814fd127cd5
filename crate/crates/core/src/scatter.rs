//! Post-processing of perturbed-soliton runs: decomposition Y = S(σ) + Z
//! along the flow, decay fits, asymptotic velocity and shift, outgoing wave
//! and energy bookkeeping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{free_kg_propagate, hamiltonian, force};
use crate::fields::{random_bump_field, FieldPair, FullState, ScalarField, Vec3};
use crate::linop::LinearOperator;
use crate::model::Model;
use crate::soliton::{soliton_fields, soliton_state, velocity_of_momentum, SolitonParams};
use crate::symplectic::{project_from, ProjectionOptions, TangentProjector};

/// Power-law fit y ≈ amplitude·(1 + t)^exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t0: f64,
    pub t1: f64,
    pub exponent: f64,
    pub amplitude: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares slope of ln y against ln(1 + t) on [t0, t1].
pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let (t0, t1) = window;
    if !(t0 < t1) {
        return Err(Error::invalid("window", format!("need t0 < t1, got [{t0}, {t1}]")));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= t0 && *t <= t1)
        .map(|&(t, y)| {
            if y > 0.0 && y.is_finite() {
                Ok(((1.0 + t).ln(), y.ln()))
            } else {
                Err(Error::invalid("series", format!("nonpositive value {y} at t = {t}")))
            }
        })
        .collect::<Result<_>>()?;
    if pts.len() < 2 {
        return Err(Error::invalid("window", "fewer than two samples in the window"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::IllConditioned("all window samples at one time".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DecayFit {
        t0,
        t1,
        exponent: slope,
        amplitude: (my - slope * mx).exp(),
        r2,
        points: pts.len(),
    })
}

/// One projected sample along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSample {
    pub t: f64,
    pub sigma: SolitonParams,
    pub q: Vec3,
    pub p: Vec3,
    /// ‖Z‖_{−β} centred at b.
    pub z_norm: f64,
    /// max_j |Ω(Z, τ_j)| and its scale.
    pub orth_defect: f64,
    pub orth_scale: f64,
    pub iterations: usize,
    /// ‖N(Z)‖_β in the moving frame, when requested.
    pub n_norm: Option<f64>,
    /// ċ = ḃ − v and v̇ by differences of σ(t).
    pub c_dot: Vec3,
    pub v_dot: Vec3,
    /// |ṗ| from the coupling integral.
    pub force: f64,
}

/// Projects every observed state, warm-starting from the previous σ.
#[derive(Debug, Clone)]
pub struct Decomposer {
    pub model: Model,
    pub options: ProjectionOptions,
    pub beta: f64,
    pub with_remainder: bool,
    pub samples: Vec<DecompositionSample>,
    last: Option<SolitonParams>,
}

impl Decomposer {
    pub fn new(model: &Model, beta: f64, with_remainder: bool) -> Self {
        Decomposer {
            model: model.clone(),
            options: ProjectionOptions::default(),
            beta,
            with_remainder,
            samples: Vec::new(),
            last: None,
        }
    }

    pub fn observe(&mut self, t: f64, y: &FullState) -> Result<()> {
        let start = self.last.unwrap_or(SolitonParams {
            b: y.q,
            v: velocity_of_momentum(y.p),
        });
        let pr = project_from(y, &self.model, &self.options, start).map_err(|e| Error::AtTime {
            time: t,
            source: Box::new(e),
        })?;
        let sigma = pr.sigma;
        self.last = Some(sigma);
        let z_norm = pr.z.weighted_norm(-self.beta, sigma.b);
        let n_norm = if self.with_remainder {
            let mut zm = pr.z.clone();
            zm.fields.translate(-sigma.b);
            let op = LinearOperator::new(sigma.v, &self.model)?;
            let (_, n) = op.nonlinear_remainder(sigma.v, Vec3::zeros(), &zm)?;
            Some(n.weighted_norm(self.beta, Vec3::zeros()))
        } else {
            None
        };
        self.samples.push(DecompositionSample {
            t,
            sigma,
            q: y.q,
            p: y.p,
            z_norm,
            orth_defect: pr.residual,
            orth_scale: pr.scale,
            iterations: pr.iterations,
            n_norm,
            c_dot: Vec3::zeros(),
            v_dot: Vec3::zeros(),
            force: force(&self.model, y).norm(),
        });
        Ok(())
    }

    /// Fills ċ and v̇ by centred differences (one-sided at the ends).
    pub fn finish(mut self) -> Vec<DecompositionSample> {
        let n = self.samples.len();
        if n >= 2 {
            let s = self.samples.clone();
            for i in 0..n {
                let (a, b) = if i == 0 {
                    (0, 1)
                } else if i == n - 1 {
                    (n - 2, n - 1)
                } else {
                    (i - 1, i + 1)
                };
                let dt = s[b].t - s[a].t;
                let bdot = (s[b].sigma.b - s[a].sigma.b) / dt;
                self.samples[i].c_dot = bdot - s[i].sigma.v;
                self.samples[i].v_dot = (s[b].sigma.v - s[a].sigma.v) / dt;
            }
        }
        self.samples
    }
}

/// Largest orthogonality defect relative to its scale.
pub fn orthogonality_audit(samples: &[DecompositionSample]) -> f64 {
    samples
        .iter()
        .map(|s| s.orth_defect / s.orth_scale)
        .fold(0.0, f64::max)
}

/// sup_t (|ċ| + |v̇|).
pub fn modulation_sup(samples: &[DecompositionSample]) -> f64 {
    samples
        .iter()
        .map(|s| s.c_dot.norm() + s.v_dot.norm())
        .fold(0.0, f64::max)
}

/// (v₊, a₊) with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asymptotics {
    pub v_plus: Vec3,
    pub a_plus: Vec3,
    /// |v(T) − v(3T/4)|.
    pub cauchy: f64,
    /// |q(t) − v₊t − a₊| over the tail window.
    pub shift_residuals: Vec<(f64, f64)>,
    /// Fitted exponent of |q̇(t) − v₊| on the tail (reported only).
    pub velocity_rate: Option<f64>,
}

fn sample_near(samples: &[DecompositionSample], t: f64) -> &DecompositionSample {
    samples
        .iter()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .expect("nonempty")
}

/// v₊ = v(T), a₊ by least squares of q(t) − v₊t over [T/2, T].
pub fn extract_asymptotics(samples: &[DecompositionSample], threshold: f64) -> Result<Asymptotics> {
    let last = samples
        .last()
        .ok_or_else(|| Error::invalid("samples", "empty decomposition"))?;
    let t_end = last.t;
    let v_plus = last.sigma.v;
    let cauchy = (v_plus - sample_near(samples, 0.75 * t_end).sigma.v).norm();
    if !(cauchy <= threshold) {
        return Err(Error::NonConvergent {
            estimate: cauchy,
            threshold,
        });
    }
    let tail: Vec<&DecompositionSample> = samples.iter().filter(|s| s.t >= 0.5 * t_end).collect();
    let mut a_plus = Vec3::zeros();
    for s in &tail {
        a_plus += s.q - v_plus * s.t;
    }
    a_plus /= tail.len() as f64;
    let shift_residuals = tail
        .iter()
        .map(|s| (s.t, (s.q - v_plus * s.t - a_plus).norm()))
        .collect();
    let rate: Vec<(f64, f64)> = tail
        .iter()
        .filter(|s| s.t < t_end)
        .map(|s| (s.t, (velocity_of_momentum(s.p) - v_plus).norm()))
        .filter(|(_, y)| *y > 0.0)
        .collect();
    let velocity_rate = fit_decay(&rate, (0.5 * t_end, t_end)).ok().map(|f| f.exponent);
    Ok(Asymptotics {
        v_plus,
        a_plus,
        cauchy,
        shift_residuals,
        velocity_rate,
    })
}

/// D(t) = W₀(−t)(F(t) − F_{v(t)}), with the accompanying soliton at
/// q(t) moving with v(t) = q̇(t) = v(p(t)).
pub fn outgoing_profile(y: &FullState, t: f64, model: &Model) -> Result<FieldPair> {
    let v = velocity_of_momentum(y.p);
    let mut sol = soliton_fields(v, model);
    sol.translate(y.q);
    let mut d = y.fields.clone();
    d.axpy(-1.0, &sol)?;
    Ok(free_kg_propagate(&d, -t, model.m))
}

/// Ψ₊ = D(T) with the Cauchy audit ‖D(t) − Ψ₊‖_F.
#[derive(Debug, Clone)]
pub struct OutgoingWave {
    pub psi_plus: FieldPair,
    pub remainders: Vec<(f64, f64)>,
    pub norms: Vec<(f64, f64)>,
}

impl OutgoingWave {
    /// ‖D(T) − D(T/2)‖_F < ‖D(T/2)‖_F.
    pub fn cauchy_trend(&self) -> Option<(f64, f64)> {
        let t_end = self.remainders.last()?.0;
        let half = self
            .remainders
            .iter()
            .zip(&self.norms)
            .min_by(|a, b| (a.0 .0 - 0.5 * t_end).abs().total_cmp(&(b.0 .0 - 0.5 * t_end).abs()))?;
        Some((half.0 .1, half.1 .1))
    }
}

pub fn outgoing_wave(snapshots: &[(f64, FullState)], model: &Model) -> Result<OutgoingWave> {
    let (t_end, last) = snapshots
        .last()
        .ok_or_else(|| Error::invalid("snapshots", "none stored"))?;
    let psi_plus = outgoing_profile(last, *t_end, model)?;
    let mut remainders = Vec::new();
    let mut norms = Vec::new();
    for (t, y) in snapshots {
        let mut d = outgoing_profile(y, *t, model)?;
        norms.push((*t, d.energy_norm(model.m)));
        d.axpy(-1.0, &psi_plus)?;
        remainders.push((*t, d.energy_norm(model.m)));
    }
    Ok(OutgoingWave {
        psi_plus,
        remainders,
        norms,
    })
}

/// H(Y₀) = H(S(v₊)) + E(Ψ₊) + residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub initial: f64,
    pub soliton: f64,
    pub radiated: f64,
    pub residual: f64,
    /// |residual| / radiated.
    pub relative_to_radiation: f64,
    /// |residual| / |H(Y₀)|.
    pub relative_to_total: f64,
}

pub fn energy_budget(y0: &FullState, v_plus: Vec3, psi_plus: &FieldPair, model: &Model) -> Result<EnergyBudget> {
    let initial = hamiltonian(model, y0);
    let s = soliton_state(&SolitonParams::new(Vec3::zeros(), v_plus)?, model)?;
    let soliton = hamiltonian(model, &s);
    let radiated = 0.5 * psi_plus.energy_norm(model.m).powi(2);
    let residual = initial - soliton - radiated;
    Ok(EnergyBudget {
        initial,
        soliton,
        radiated,
        residual,
        relative_to_radiation: residual.abs() / radiated,
        relative_to_total: residual.abs() / initial.abs(),
    })
}

/// |⟨ψ_v(· − q), ∇ρ(· − q)⟩| for the soliton, which vanishes by the
/// stationary equations.
pub fn stationary_force(sigma: &SolitonParams, model: &Model) -> Result<f64> {
    Ok(force(model, &soliton_state(sigma, model)?).norm())
}

/// Recipe for a random transversal perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub seed: u64,
    /// ‖Z₀‖_β relative to ‖S‖_β.
    pub relative_size: f64,
    pub bumps: usize,
    pub spread: f64,
    pub width_min: f64,
    pub width_max: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            seed: 7,
            relative_size: 1e-2,
            bumps: 6,
            spread: 2.5,
            width_min: 1.5,
            width_max: 2.5,
        }
    }
}

/// β-weighted size of the soliton fields plus |p_v|, centred at the origin.
pub fn soliton_scale(v: Vec3, model: &Model, beta: f64) -> Result<f64> {
    let s = soliton_state(&SolitonParams::new(Vec3::zeros(), v)?, model)?;
    Ok(s.fields.weighted_norm(beta, Vec3::zeros()) + s.p.norm())
}

/// Moving-frame Z₀ = P_v(X), X a random sum of compact bumps with random
/// (Q, P), scaled to ‖Z₀‖_β = relative_size·‖S‖_β. Returns Z₀ and the
/// unscaled direction of unit β-norm.
pub fn transversal_perturbation(v: Vec3, model: &Model, beta: f64, spec: &PerturbationSpec) -> Result<(FullState, FullState)> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = &model.grid;
    let width = (spec.width_min, spec.width_max);
    let a = random_bump_field(g, &mut rng, Vec3::zeros(), spec.spread, width, spec.bumps);
    let b = random_bump_field(g, &mut rng, Vec3::zeros(), spec.spread, width, spec.bumps);
    let reach = spec.spread * 3f64.sqrt() + spec.width_max;
    if reach >= g.l {
        return Err(Error::SupportClipped {
            radius: reach,
            center: [0.0; 3],
            half_width: g.l,
        });
    }
    let mut x = FullState {
        fields: FieldPair::from_real(&a, &b)?,
        q: Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
        p: Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
    };
    x = TangentProjector::new(v, model)?.complement(&x)?;
    let unit = x.weighted_norm(beta, Vec3::zeros());
    if unit == 0.0 {
        return Err(Error::invalid("perturbation", "projects to zero"));
    }
    x.scale(1.0 / unit);
    let mut z = x.clone();
    z.scale(spec.relative_size * soliton_scale(v, model, beta)?);
    Ok((z, x))
}

/// Y₀ = S(σ₀) + Z₀ with Z₀ moved to the lab frame.
pub fn perturbed_soliton(sigma: &SolitonParams, z_moving: &FullState, model: &Model) -> Result<FullState> {
    let mut y = soliton_state(sigma, model)?;
    let mut z = z_moving.clone();
    z.fields.translate(sigma.b);
    y.axpy(1.0, &z)?;
    Ok(y)
}

/// Scattering summary for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringRecord {
    pub sigma0: SolitonParams,
    pub perturbation: PerturbationSpec,
    pub v_plus: Vec3,
    pub a_plus: Vec3,
    pub cauchy: f64,
    pub decay: Option<DecayFit>,
    pub orthogonality: f64,
    pub outgoing_cauchy: Option<(f64, f64)>,
    pub energy: Option<EnergyBudget>,
    pub velocity_rate: Option<f64>,
    pub max_speed: f64,
}

/// Real-space view of a field pair, for export.
pub fn real_fields(f: &FieldPair) -> (ScalarField, ScalarField) {
    (f.psi_real(), f.pi_real())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::ChargeProfile;
    use crate::fields::Grid;

    #[test]
    fn exact_power_law() {
        let s: Vec<(f64, f64)> = (0..50).map(|i| {
            let t = i as f64 * 0.5;
            (t, 3.0 * (1.0 + t).powf(-1.5))
        }).collect();
        let f = fit_decay(&s, (2.0, 20.0)).unwrap();
        assert!((f.exponent + 1.5).abs() < 1e-12);
        assert!((f.amplitude - 3.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_windows() {
        let s = vec![(0.0, 1.0), (1.0, 0.0)];
        assert!(fit_decay(&s, (0.0, 2.0)).is_err());
        assert!(fit_decay(&s, (2.0, 1.0)).is_err());
        assert!(fit_decay(&[(0.0, 1.0)], (0.0, 1.0)).is_err());
    }

    #[test]
    fn soliton_has_no_outgoing_wave() {
        let model = Model::new(Grid::new(32, 12.0).unwrap(), 1.0, ChargeProfile::default()).unwrap();
        let y = soliton_state(&SolitonParams::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, 0.0, 0.0)).unwrap(), &model).unwrap();
        let d = outgoing_profile(&y, 2.0, &model).unwrap();
        assert!(d.energy_norm(1.0) < 1e-12);
        let sf = stationary_force(&SolitonParams::new(Vec3::new(0.5, -0.2, 0.0), Vec3::new(0.2, 0.1, 0.0)).unwrap(), &model).unwrap();
        assert!(sf < 1e-12);
    }

    #[test]
    fn perturbation_is_transversal_and_scaled() {
        let model = Model::new(Grid::new(32, 12.0).unwrap(), 1.0, ChargeProfile::default()).unwrap();
        let v = Vec3::new(0.2, 0.0, 0.0);
        let spec = PerturbationSpec { relative_size: 1e-2, ..Default::default() };
        let (z, unit) = transversal_perturbation(v, &model, 2.0, &spec).unwrap();
        assert!((unit.weighted_norm(2.0, Vec3::zeros()) - 1.0).abs() < 1e-12);
        let scale = soliton_scale(v, &model, 2.0).unwrap();
        assert!((z.weighted_norm(2.0, Vec3::zeros()) / scale - 1e-2).abs() < 1e-12);
        let proj = TangentProjector::new(v, &model).unwrap();
        let c = proj.coefficients(&z).unwrap();
        assert!(c.amax() < 1e-10 * z.plain_norm());
    }
}
