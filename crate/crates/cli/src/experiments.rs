//! One pipeline per command. Every output except the manifest's wall time
//! is a deterministic function of the experiment config.

use std::time::Instant;

use kgscatter_core::fields::{random_bump_field, smooth_bump};
use kgscatter_core::linop::FrozenFlow;
use kgscatter_core::scatter::{self, Decomposer};
use kgscatter_core::soliton::{momentum_of_velocity, soliton_state, stationary_residual};
use kgscatter_core::symplectic::{gram_matrix, omega_matrix, TangentProjector};
use kgscatter_core::{
    evolve, FieldPair, FullState, Grid, LinearOperator, Model, Resolvent, ScalarField,
    ScatteringRecord, SolitonParams, Vec3, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Command, ExperimentSpec};
use crate::output::{Artifacts, Manifest, WrapInfo};
use crate::CliError;

type Out = Result<Option<WrapInfo>, CliError>;

/// Runs the pipeline for `spec.command`, writing into `spec.out`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Manifest, CliError> {
    spec.validate()?;
    let start = Instant::now();
    let mut art = Artifacts::create(&spec.out)?;
    let config = spec.to_toml();
    art.text("config.toml", "effective configuration", &config)?;
    let wrap = match spec.command {
        Command::Simulate => simulate(spec, &mut art),
        Command::Soliton => soliton(spec, &mut art),
        Command::Spectral => spectral(spec, &mut art),
        Command::WienerCheck => wiener(spec, &mut art),
        Command::Frozen => frozen(spec, &mut art),
        Command::Scatter => scattering(spec, &mut art),
        Command::DecayProbe => decay_probe(spec, &mut art),
    }?;
    if let Some(w) = wrap.filter(|w| w.exceeded) {
        eprintln!(
            "warning: horizon {} passes the wraparound bound {}; late samples see periodic images",
            w.horizon, w.bound
        );
    }
    art.finish(Manifest {
        command: spec.command.to_string(),
        seed: spec.seed,
        config_file: "config.toml".into(),
        config,
        core_version: kgscatter_core::VERSION.into(),
        cli_version: env!("CARGO_PKG_VERSION").into(),
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        wraparound: wrap,
        files: Vec::new(),
    })
}

fn model(spec: &ExperimentSpec) -> Result<Model, CliError> {
    let m = &spec.model;
    Ok(Model::new(Grid::new(m.n, m.l)?, m.m, m.profile.clone())?)
}

/// Time for a wave leaving a ball of radius `r` at speed 1 + |v| to reach
/// the ball's periodic image.
fn wrap_time(l: f64, r: f64, v: Vec3) -> f64 {
    (2.0 * l - 2.0 * r) / (1.0 + v.norm())
}

fn initial_state(spec: &ExperimentSpec, model: &Model, sigma: &SolitonParams) -> Result<FullState, CliError> {
    let p = &spec.perturbation;
    if p.relative_size == 0.0 {
        return Ok(soliton_state(sigma, model)?);
    }
    let (z, _) = scatter::transversal_perturbation(sigma.v, model, spec.model.beta, &p.spec(spec.seed))?;
    Ok(scatter::perturbed_soliton(sigma, &z, model)?)
}

fn data_radius(spec: &ExperimentSpec) -> f64 {
    let r = spec.model.profile.support_radius();
    if spec.perturbation.relative_size > 0.0 {
        r.max(spec.perturbation.data_radius())
    } else {
        r
    }
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    energy: f64,
    energy_drift: f64,
    q_x: f64,
    q_y: f64,
    q_z: f64,
    p_x: f64,
    p_y: f64,
    p_z: f64,
    speed: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    sigma0: SolitonParams,
    steps: usize,
    energy_drift: f64,
    max_speed: f64,
    snapshot_times: Vec<f64>,
}

fn simulate(spec: &ExperimentSpec, art: &mut Artifacts) -> Out {
    let model = model(spec)?;
    let sigma = SolitonParams::new(spec.b(), spec.v())?;
    let y0 = initial_state(spec, &model, &sigma)?;
    let settings = spec.run.settings();
    let rec = evolve::run(&y0, &model, &settings, &spec.run.snapshots, |_, _| Ok(()))?;
    let e0 = rec.samples[0].energy;
    let rows: Vec<TrajectoryRow> = rec
        .samples
        .iter()
        .map(|s| TrajectoryRow {
            t: s.t,
            energy: s.energy,
            energy_drift: (s.energy - e0).abs() / e0.abs(),
            q_x: s.q.x,
            q_y: s.q.y,
            q_z: s.q.z,
            p_x: s.p.x,
            p_y: s.p.y,
            p_z: s.p.z,
            speed: s.speed,
        })
        .collect();
    art.csv("trajectory.csv", "sampled energy, drift, position, momentum", &rows)?;
    for (i, (t, y)) in rec.snapshots.iter().enumerate() {
        art.snapshot(&format!("snapshot_{i:03}.bin"), *t, y)?;
    }
    art.json(
        "summary.json",
        "run summary",
        &SimulateSummary {
            sigma0: sigma,
            steps: settings.steps(),
            energy_drift: rec.energy_drift(),
            max_speed: rec.max_speed,
            snapshot_times: rec.snapshots.iter().map(|s| s.0).collect(),
        },
    )?;
    // the particle moves, so measure the data ball from the box centre
    let r = data_radius(spec) + spec.b().norm() + rec.max_speed * settings.t_end;
    Ok(Some(WrapInfo::new(r, wrap_time(model.grid.l, r, Vec3::zeros()), settings.t_end)))
}

#[derive(Serialize)]
struct SolitonReport {
    v: Vec3,
    p: Vec3,
    residual: kgscatter_core::soliton::StationaryResidual,
    rho_norm: f64,
    /// max |Ω_grid − Ω_closed| / max |Ω_closed|
    omega_deviation: f64,
    omega_plus_min_eigenvalue: f64,
    omega_closed: Vec<Vec<f64>>,
    omega_grid: Vec<Vec<f64>>,
}

fn rows6(m: &nalgebra::Matrix6<f64>) -> Vec<Vec<f64>> {
    (0..6).map(|i| (0..6).map(|j| m[(i, j)]).collect()).collect()
}

fn soliton(spec: &ExperimentSpec, art: &mut Artifacts) -> Out {
    let model = model(spec)?;
    let v = spec.v();
    let closed = omega_matrix(v, &model.profile, model.m)?;
    let grid = gram_matrix(v, &model)?;
    let scale = closed.full.amax();
    art.json(
        "soliton.json",
        "stationary residuals and symplectic Gram matrix",
        &SolitonReport {
            v,
            p: momentum_of_velocity(v)?,
            residual: stationary_residual(v, &model)?,
            rho_norm: model.rho_norm(),
            omega_deviation: (grid - closed.full).amax() / scale,
            omega_plus_min_eigenvalue: closed.min_plus_eigenvalue(),
            omega_closed: rows6(&closed.full),
            omega_grid: rows6(&grid),
        },
    )?;
    let y = soliton_state(&SolitonParams::new(spec.b(), v)?, &model)?;
    art.snapshot("soliton.bin", 0.0, &y)?;
    Ok(None)
}

#[derive(Serialize)]
struct SpectralRow {
    omega: f64,
    re_h_par: f64,
    im_h_par: f64,
    re_h_perp: f64,
    im_h_perp: f64,
    re_det: f64,
    im_det: f64,
    /// Eigenvalues of F(ω), inside the gap only.
    f_par: Option<f64>,
    f_perp: Option<f64>,
}

#[derive(Serialize)]
struct SpectralSummary {
    v: Vec3,
    mu: f64,
    k: [f64; 2],
    b: [f64; 2],
    /// B∥K∥(B⊥K⊥)², the size of det M at small λ without cancellation.
    det_scale: f64,
    det_at_zero: f64,
    min_relative_det: f64,
    invertible_on_scan: bool,
    f_positive_in_gap: bool,
    im_h_negative_beyond_gap: bool,
    tail: Option<kgscatter_core::spectral::TailReport>,
}

fn spectral(spec: &ExperimentSpec, art: &mut Artifacts) -> Out {
    let s = &spec.spectral;
    let res = Resolvent::new(&spec.model.profile, spec.model.m, spec.v())?;
    let k = res.k_diag()?;
    let b = res.b_diag();
    let omegas: Vec<f64> = (0..s.samples)
        .map(|i| {
            let f = if s.samples == 1 { 0.0 } else { i as f64 / (s.samples - 1) as f64 };
            s.omega_min + f * (s.omega_max - s.omega_min)
        })
        .filter(|w| (w.abs() - res.mu).abs() > 1e-9 && *w != 0.0)
        .collect();
    let samples = omegas
        .par_iter()
        .map(|&w| res.at_boundary(w))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<SpectralRow> = omegas
        .iter()
        .zip(&samples)
        .map(|(&w, r)| {
            let gap = w.abs() < res.mu;
            SpectralRow {
                omega: w,
                re_h_par: r.h[0].re,
                im_h_par: r.h[0].im,
                re_h_perp: r.h[1].re,
                im_h_perp: r.h[1].im,
                re_det: r.det.re,
                im_det: r.det.im,
                f_par: gap.then(|| (r.h[0] - k[0]).re),
                f_perp: gap.then(|| (r.h[1] - k[1]).re),
            }
        })
        .collect();
    art.csv("spectral.csv", "H(iω+0), det M(iω+0) and F(ω) along the scan", &rows)?;
    let det_scale = (b[0] * k[0] * (b[1] * k[1]).powi(2)).abs();
    let min_relative_det = samples.iter().map(|r| r.det.norm() / det_scale).fold(f64::INFINITY, f64::min);
    let tail = if s.tail {
        Some(res.tail_check(res.mu + 1.0, 0.5 * (res.mu + 1.0 + s.tail_max), s.tail_max, 40, 2.0)?)
    } else {
        None
    };
    art.json(
        "spectral.json",
        "invertibility scan summary",
        &SpectralSummary {
            v: spec.v(),
            mu: res.mu,
            k,
            b,
            det_scale,
            det_at_zero: res.at(C64::new(0.0, 0.0))?.det.norm(),
            min_relative_det,
            invertible_on_scan: min_relative_det > 1e-8,
            f_positive_in_gap: rows.iter().filter_map(|r| r.f_par.zip(r.f_perp)).all(|(a, b)| a > 0.0 && b > 0.0),
            im_h_negative_beyond_gap: rows
                .iter()
                .filter(|r| r.omega > res.mu)
                .all(|r| r.im_h_par < 0.0 && r.im_h_perp < 0.0),
            tail,
        },
    )?;
    Ok(None)
}

fn wiener(spec: &ExperimentSpec, art: &mut Artifacts) -> Out {
    let w = &spec.wiener;
    let report = spec.model.profile.wiener_check(w.k_max, w.samples, w.threshold)?;
    art.json("wiener.json", "scan of |ρ̂| for Fourier zeros", &report)?;
    Ok(None)
}

#[derive(Serialize)]
struct FrozenRow {
    t: f64,
    weighted_norm: f64,
    hamiltonian: f64,
    q_norm: f64,
    q_norm_secular: Option<f64>,
}

#[derive(Serialize)]
struct FrozenSummary {
    v: Vec3,
    initial_norm: f64,
    hamiltonian_drift: f64,
    decay: Option<kgscatter_core::DecayFit>,
    secular_growth: Option<kgscatter_core::DecayFit>,
}

fn random_state(spec: &ExperimentSpec, grid: &Grid) -> Result<FullState, CliError> {
    let p = &spec.perturbation;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = (p.width_min, p.width_max);
    let a = random_bump_field(grid, &mut rng, Vec3::zeros(), p.spread, width, p.bumps);
    let b = random_bump_field(grid, &mut rng, Vec3::zeros(), p.spread, width, p.bumps);
    Ok(FullState {
        fields: FieldPair::from_real(&a, &b)?,
        q: Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
        p: Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0)),
    })
}

fn frozen(spec: &ExperimentSpec, art: &mut Artifacts) -> Out {
    let model = model(spec)?;
    let v = spec.v();
    let beta = spec.model.beta;
    let run = &spec.run;
    let op = LinearOperator::new(v, &model)?;
    let x0 = TangentProjector::new(v, &model)?.complement(&random_state(spec, &model.grid)?)?;
    let h0 = op.hamiltonian(v, &x0);
    let mut rows = Vec::new();
    FrozenFlow::new(op.clone(), run.scheme).evolve(&x0, run.dt, run.t_end, run.sample_every, |t, x| {
        rows.push(FrozenRow {
            t,
            weighted_norm: x.weighted_norm(-beta, Vec3::zeros()),
            hamiltonian: op.hamiltonian(v, x),
            q_norm: x.q.norm(),
            q_norm_secular: None,
        });
    });
    if spec.frozen.secular {
        let mut x = x0.clone();
        x.axpy(1.0, &op.frame.tau[3])?;
        let mut i = 0;
        FrozenFlow::new(op.clone(), run.scheme).evolve(&x, run.dt, run.t_end, run.sample_every, |_, x| {
            rows[i].q_norm_secular = Some(x.q.norm());
            i += 1;
        });
    }
    art.csv("frozen.csv", "frozen linear flow diagnostics", &rows)?;
    let window = (spec.frozen.window[0], spec.frozen.window[1]);
    let decay: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.weighted_norm)).collect();
    let growth: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.q_norm_secular.map(|q| (r.t, q))).collect();
    art.json(
        "frozen.json",
        "decay and secular-growth fits",
        &FrozenSummary {
            v,
            initial_norm: x0.weighted_norm(beta, Vec3::zeros()),
            hamiltonian_drift: rows.iter().map(|r| (r.hamiltonian - h0).abs()).fold(0.0, f64::max) / h0.abs(),
            decay: Some(scatter::fit_decay(&decay, window)?),
            secular_growth: if growth.is_empty() { None } else { Some(scatter::fit_decay(&growth, window)?) },
        },
    )?;
    let r = spec.perturbation.data_radius();
    Ok(Some(WrapInfo::new(r, wrap_time(model.grid.l, r, v), window.1)))
}

#[derive(Serialize)]
struct DecompositionRow {
    t: f64,
    b_x: f64,
    b_y: f64,
    b_z: f64,
    v_x: f64,
    v_y: f64,
    v_z: f64,
    z_norm: f64,
    orth_relative: f64,
    c_dot: f64,
    v_dot: f64,
    remainder: Option<f64>,
    iterations: usize,
}

#[derive(Serialize)]
struct OutgoingRow {
    t: f64,
    remainder: f64,
    norm: f64,
}

#[derive(Serialize)]
struct ScatterSummary {
    relative_size: f64,
    modulation_sup: f64,
    remainder_sup: Option<f64>,
}

fn scattering(spec: &ExperimentSpec, art: &mut Artifacts) -> Out {
    let model = model(spec)?;
    let beta = spec.model.beta;
    let sigma0 = SolitonParams::new(spec.b(), spec.v())?;
    let y0 = initial_state(spec, &model, &sigma0)?;
    let settings = spec.run.settings();
    let t_end = settings.t_end;
    let mut snaps = spec.run.snapshots.clone();
    snaps.push(0.5 * t_end);
    snaps.sort_by(f64::total_cmp);
    let mut dec = Decomposer::new(&model, beta, spec.scatter.remainder);
    let rec = evolve::run(&y0, &model, &settings, &snaps, |t, y| dec.observe(t, y))?;
    let samples = dec.finish();
    let rows: Vec<DecompositionRow> = samples
        .iter()
        .map(|s| DecompositionRow {
            t: s.t,
            b_x: s.sigma.b.x,
            b_y: s.sigma.b.y,
            b_z: s.sigma.b.z,
            v_x: s.sigma.v.x,
            v_y: s.sigma.v.y,
            v_z: s.sigma.v.z,
            z_norm: s.z_norm,
            orth_relative: s.orth_defect / s.orth_scale,
            c_dot: s.c_dot.norm(),
            v_dot: s.v_dot.norm(),
            remainder: s.n_norm,
            iterations: s.iterations,
        })
        .collect();
    art.csv("decomposition.csv", "soliton parameters and transversal remainder", &rows)?;
    let wave = scatter::outgoing_wave(&rec.snapshots, &model)?;
    let outgoing: Vec<OutgoingRow> = wave
        .remainders
        .iter()
        .zip(&wave.norms)
        .map(|(&(t, remainder), &(_, norm))| OutgoingRow { t, remainder, norm })
        .collect();
    art.csv("outgoing.csv", "‖D(t) − Ψ₊‖_F and ‖D(t)‖_F at the snapshots", &outgoing)?;
    let rel = y0.sub(&soliton_state(&sigma0, &model)?)?.weighted_norm(beta, sigma0.b)
        / scatter::soliton_scale(sigma0.v, &model, beta)?;
    art.json(
        "summary.json",
        "perturbation size and modulation bounds",
        &ScatterSummary {
            relative_size: rel,
            modulation_sup: scatter::modulation_sup(&samples),
            remainder_sup: samples.iter().filter_map(|s| s.n_norm).reduce(f64::max),
        },
    )?;
    let series: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.z_norm)).collect();
    let window = (spec.scatter.window[0], spec.scatter.window[1]);
    let decay = if rel > 0.0 { Some(scatter::fit_decay(&series, window)?) } else { None };
    let asym = scatter::extract_asymptotics(&samples, spec.scatter.cauchy_threshold)?;
    let energy = scatter::energy_budget(&y0, asym.v_plus, &wave.psi_plus, &model)?;
    art.json(
        "record.json",
        "scattering record",
        &ScatteringRecord {
            sigma0,
            perturbation: spec.perturbation.spec(spec.seed),
            v_plus: asym.v_plus,
            a_plus: asym.a_plus,
            cauchy: asym.cauchy,
            decay,
            orthogonality: scatter::orthogonality_audit(&samples),
            outgoing_cauchy: wave.cauchy_trend(),
            energy: Some(energy),
            velocity_rate: asym.velocity_rate,
            max_speed: rec.max_speed,
        },
    )?;
    let r = data_radius(spec) + sigma0.b.norm();
    Ok(Some(WrapInfo::new(r, wrap_time(model.grid.l, r, sigma0.v), t_end)))
}

#[derive(Serialize)]
struct DecayRow {
    t: f64,
    weighted_norm: f64,
}

fn decay_probe(spec: &ExperimentSpec, art: &mut Artifacts) -> Out {
    let d = &spec.decay;
    let grid = Grid::new(spec.model.n, spec.model.l)?;
    let zero = ScalarField::new(grid.clone(), vec![0.0; grid.len()]);
    let mut f0 = FieldPair::from_real(&smooth_bump(&grid, Vec3::zeros(), d.radius), &zero)?;
    f0.drop_nyquist();
    let steps = (d.t_end / d.step).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * d.step).collect();
    let series = evolve::local_decay_probe(&f0, spec.v(), spec.model.m, spec.model.beta, &times, d.radius)?;
    let rows: Vec<DecayRow> = series.iter().map(|&(t, weighted_norm)| DecayRow { t, weighted_norm }).collect();
    art.csv("decay.csv", "‖W(t)F₀‖ with weight (1 + |x|)^(−β)", &rows)?;
    art.json("decay.json", "power-law fit", &scatter::fit_decay(&series, (d.window[0], d.window[1]))?)?;
    Ok(Some(WrapInfo::new(d.radius, grid.l - d.radius, d.t_end)))
}
