//! Periodic grid, spectral transforms, field algebra and weighted norms.
//!
//! Fields live on the box [−L, L)³ with N points per axis, stored row-major
//! with z fastest. Spectral coefficients use the continuum normalization
//!
//! ```text
//! f̂(k) = h³ (2π)^{-3/2} Σ_x e^{ik·x} f(x),   f(x) = (2π)^{-3/2} Δk³ Σ_k e^{−ik·x} f̂(k)
//! ```
//!
//! so that a sampled density transforms to an approximation of its continuum
//! transform. Wavenumbers are stored in FFT order. Derivatives and
//! translations use wavenumbers with the Nyquist entry set to zero, which keeps
//! real fields real and first derivatives skew-adjoint.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::charge::FOURIER_NORM;
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type C64 = Complex64;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k_exact: Vec<f64>,
    k_op: Vec<f64>,
}

/// Uniform periodic grid on [−L, L)³.
#[derive(Clone)]
pub struct Grid {
    pub n: usize,
    pub l: f64,
    pub h: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("l", &self.l).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.l == other.l
    }
}

impl Grid {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::invalid("N", format!("must be even and at least 4, got {n}")));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::invalid("L", format!("must be positive, got {l}")));
        }
        let mut planner = FftPlanner::new();
        let dk = std::f64::consts::PI / l;
        let k_exact: Vec<f64> = (0..n)
            .map(|i| {
                let m = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
                dk * m
            })
            .collect();
        let mut k_op = k_exact.clone();
        k_op[n / 2] = 0.0;
        Ok(Grid {
            n,
            l,
            h: 2.0 * l / n as f64,
            plans: Arc::new(Plans {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
                k_exact,
                k_op,
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of node `i` along any axis.
    pub fn x(&self, i: usize) -> f64 {
        -self.l + self.h * i as f64
    }

    /// Wavenumber spacing π/L.
    pub fn dk(&self) -> f64 {
        std::f64::consts::PI / self.l
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(3)
    }

    pub fn spectral_volume(&self) -> f64 {
        self.dk().powi(3)
    }

    /// The axis wavenumbers (π/L)·{−N/2..N/2−1} in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.plans.k_exact
    }

    /// Axis wavenumbers used by differential operators (Nyquist zeroed).
    pub fn k_op(&self) -> &[f64] {
        &self.plans.k_op
    }

    /// Largest resolved wavenumber π/h.
    pub fn k_nyquist(&self) -> f64 {
        std::f64::consts::PI / self.h
    }

    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.n + j) * self.n + l
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "N={} L={} vs N={} L={}",
                self.n, self.l, other.n, other.l
            )))
        }
    }

    /// Grid samples to spectral coefficients.
    pub fn forward(&self, values: &[f64]) -> Vec<C64> {
        assert_eq!(values.len(), self.len());
        let mut buf: Vec<C64> = values.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.fft3(&mut buf, &self.plans.inverse);
        let scale = self.cell_volume() * FOURIER_NORM;
        self.apply_checkerboard(&mut buf, scale);
        buf
    }

    /// Spectral coefficients to grid samples (real part).
    pub fn inverse(&self, coeffs: &[C64]) -> Vec<f64> {
        self.inverse_complex(coeffs).into_iter().map(|c| c.re).collect()
    }

    pub fn inverse_complex(&self, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.len());
        let mut buf = coeffs.to_vec();
        let scale = self.spectral_volume() * FOURIER_NORM;
        self.apply_checkerboard(&mut buf, scale);
        self.fft3(&mut buf, &self.plans.forward);
        buf
    }

    fn apply_checkerboard(&self, buf: &mut [C64], scale: f64) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let row = &mut buf[(i * n + j) * n..(i * n + j + 1) * n];
                for (l, c) in row.iter_mut().enumerate() {
                    let s = if (i + j + l) % 2 == 0 { scale } else { -scale };
                    *c *= s;
                }
            }
        }
    }

    fn fft3(&self, buf: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let mut tmp = vec![C64::new(0.0, 0.0); buf.len()];
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for _ in 0..3 {
            plan.process_with_scratch(buf, &mut scratch);
            // (a, b, c) -> (c, a, b)
            for a in 0..n {
                for b in 0..n {
                    let src = &buf[(a * n + b) * n..(a * n + b + 1) * n];
                    for (c, &v) in src.iter().enumerate() {
                        tmp[(c * n + a) * n + b] = v;
                    }
                }
            }
            buf.copy_from_slice(&tmp);
        }
    }

    /// Multiplier e^{ik·a}, i.e. the transform of f(x − a), as three axis factors.
    pub fn shift_phases(&self, a: Vec3) -> [Vec<C64>; 3] {
        let k = self.k_op();
        let f = |s: f64| k.iter().map(|&kk| C64::from_polar(1.0, kk * s)).collect();
        [f(a.x), f(a.y), f(a.z)]
    }

    /// Visits every spectral index with its operator wavevector.
    #[inline]
    pub fn for_each_k(&self, mut f: impl FnMut(usize, f64, f64, f64)) {
        let n = self.n;
        let k = self.k_op();
        let mut idx = 0;
        for &kx in k.iter() {
            for &ky in k.iter() {
                for &kz in k.iter() {
                    f(idx, kx, ky, kz);
                    idx += 1;
                }
            }
        }
        debug_assert_eq!(idx, n * n * n);
    }
}

/// Real grid samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(Vec3) -> f64) -> Self {
        let n = grid.n;
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    values.push(f(Vec3::new(grid.x(i), grid.x(j), grid.x(l))));
                }
            }
        }
        ScalarField::new(grid.clone(), values)
    }

    pub fn spectrum(&self) -> Vec<C64> {
        self.grid.forward(&self.values)
    }

    /// h³ Σ f g.
    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    /// Spectral partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> ScalarField {
        let mut c = self.spectrum();
        derivative_in_place(&self.grid, &mut c, axis);
        ScalarField::new(self.grid.clone(), self.grid.inverse(&c))
    }
}

/// Applies ∂_axis ↔ −ik_axis to spectral coefficients.
pub fn derivative_in_place(grid: &Grid, c: &mut [C64], axis: usize) {
    grid.for_each_k(|idx, kx, ky, kz| {
        let k = [kx, ky, kz][axis];
        c[idx] *= C64::new(0.0, -k);
    });
}

/// Δk³ Re Σ f̂ conj(ĝ), the spectral form of ⟨f, g⟩.
pub fn spectral_inner(grid: &Grid, a: &[C64], b: &[C64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum();
    s * grid.spectral_volume()
}

/// A pair (ψ, π) held in spectral form.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub grid: Grid,
    pub psi: Vec<C64>,
    pub pi: Vec<C64>,
}

impl FieldPair {
    pub fn zeros(grid: &Grid) -> Self {
        FieldPair {
            grid: grid.clone(),
            psi: vec![C64::new(0.0, 0.0); grid.len()],
            pi: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_real(psi: &ScalarField, pi: &ScalarField) -> Result<Self> {
        psi.grid.check_same(&pi.grid)?;
        Ok(FieldPair {
            grid: psi.grid.clone(),
            psi: psi.spectrum(),
            pi: pi.spectrum(),
        })
    }

    pub fn psi_real(&self) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.grid.inverse(&self.psi))
    }

    pub fn pi_real(&self) -> ScalarField {
        ScalarField::new(self.grid.clone(), self.grid.inverse(&self.pi))
    }

    pub fn scale(&mut self, c: f64) {
        self.psi.iter_mut().for_each(|x| *x *= c);
        self.pi.iter_mut().for_each(|x| *x *= c);
    }

    /// self += a·other
    pub fn axpy(&mut self, a: f64, other: &FieldPair) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        self.psi.iter_mut().zip(&other.psi).for_each(|(x, y)| *x += y * a);
        self.pi.iter_mut().zip(&other.pi).for_each(|(x, y)| *x += y * a);
        Ok(())
    }

    /// Replaces f by f(· − a).
    pub fn translate(&mut self, a: Vec3) {
        let [px, py, pz] = self.grid.shift_phases(a);
        let n = self.grid.n;
        for i in 0..n {
            for j in 0..n {
                let pij = px[i] * py[j];
                let base = (i * n + j) * n;
                for l in 0..n {
                    let ph = pij * pz[l];
                    self.psi[base + l] *= ph;
                    self.pi[base + l] *= ph;
                }
            }
        }
    }

    /// Zeroes the Nyquist planes, on which translations act trivially.
    pub fn drop_nyquist(&mut self) {
        let n = self.grid.n;
        let h = n / 2;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if i == h || j == h || l == h {
                        let idx = (i * n + j) * n + l;
                        self.psi[idx] = C64::new(0.0, 0.0);
                        self.pi[idx] = C64::new(0.0, 0.0);
                    }
                }
            }
        }
    }

    /// Free Klein-Gordon energy norm (∫|∇ψ|² + m²ψ² + π²)^{1/2}.
    pub fn energy_norm(&self, m: f64) -> f64 {
        let mut acc = 0.0;
        let m2 = m * m;
        self.grid.for_each_k(|idx, kx, ky, kz| {
            let w2 = kx * kx + ky * ky + kz * kz + m2;
            acc += w2 * self.psi[idx].norm_sqr() + self.pi[idx].norm_sqr();
        });
        (acc * self.grid.spectral_volume()).sqrt()
    }

    /// Unweighted L² norm of both components, (‖ψ‖² + ‖π‖²)^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self
            .psi
            .iter()
            .chain(&self.pi)
            .map(|c| c.norm_sqr())
            .sum();
        (s * self.grid.spectral_volume()).sqrt()
    }

    /// ‖ψ‖_{1,α} + ‖π‖_{0,α} with weight (1 + |x − center|)^α.
    pub fn weighted_norm(&self, alpha: f64, center: Vec3) -> f64 {
        let g = &self.grid;
        let psi = g.inverse(&self.psi);
        let pi = g.inverse(&self.pi);
        let grads: Vec<Vec<f64>> = (0..3)
            .map(|axis| {
                let mut c = self.psi.clone();
                derivative_in_place(g, &mut c, axis);
                g.inverse(&c)
            })
            .collect();
        let n = g.n;
        let period = 2.0 * g.l;
        let min_image = |x: f64| x - period * (x / period).round();
        let (mut a0, mut a1, mut b0) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let dx = min_image(g.x(i) - center.x);
            for j in 0..n {
                let dy = min_image(g.x(j) - center.y);
                for l in 0..n {
                    let dz = min_image(g.x(l) - center.z);
                    let idx = (i * n + j) * n + l;
                    let d = (dx * dx + dy * dy + dz * dz).sqrt();
                    let w = (1.0 + d).powf(alpha);
                    let dw = if d > 0.0 { alpha * w / (1.0 + d) / d } else { 0.0 };
                    let f = psi[idx];
                    a0 += (w * f).powi(2);
                    let gx = dw * dx * f + w * grads[0][idx];
                    let gy = dw * dy * f + w * grads[1][idx];
                    let gz = dw * dz * f + w * grads[2][idx];
                    a1 += gx * gx + gy * gy + gz * gz;
                    if d == 0.0 {
                        // |∇w| → |α| at the centre; the cross term averages out
                        a1 += (alpha * f).powi(2);
                    }
                    b0 += (w * pi[idx]).powi(2);
                }
            }
        }
        let v = g.cell_volume();
        ((a0 + a1) * v).sqrt() + (b0 * v).sqrt()
    }
}

/// A phase point Y = (ψ, π, q, p).
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub fields: FieldPair,
    pub q: Vec3,
    pub p: Vec3,
}

impl FullState {
    pub fn zeros(grid: &Grid) -> Self {
        FullState {
            fields: FieldPair::zeros(grid),
            q: Vec3::zeros(),
            p: Vec3::zeros(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.fields.grid
    }

    pub fn scale(&mut self, c: f64) {
        self.fields.scale(c);
        self.q *= c;
        self.p *= c;
    }

    pub fn axpy(&mut self, a: f64, other: &FullState) -> Result<()> {
        self.fields.axpy(a, &other.fields)?;
        self.q += other.q * a;
        self.p += other.p * a;
        Ok(())
    }

    pub fn sub(&self, other: &FullState) -> Result<FullState> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
            && self
                .fields
                .psi
                .iter()
                .chain(&self.fields.pi)
                .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// ‖ψ‖_{1,α} + ‖π‖_{0,α} + |q| + |p|.
    pub fn weighted_norm(&self, alpha: f64, center: Vec3) -> f64 {
        self.fields.weighted_norm(alpha, center) + self.q.norm() + self.p.norm()
    }

    /// Unweighted ‖ψ‖_{H¹} + ‖π‖ + |q| + |p| evaluated spectrally.
    pub fn plain_norm(&self) -> f64 {
        let f = &self.fields;
        let (mut a, mut b) = (0.0, 0.0);
        f.grid.for_each_k(|idx, kx, ky, kz| {
            a += (1.0 + kx * kx + ky * ky + kz * kz) * f.psi[idx].norm_sqr();
            b += f.pi[idx].norm_sqr();
        });
        let dv = f.grid.spectral_volume();
        (a * dv).sqrt() + (b * dv).sqrt() + self.q.norm() + self.p.norm()
    }
}

/// exp(1 − 1/(1 − |x − c|²/a²)) inside the ball of radius a, zero outside.
pub fn smooth_bump(grid: &Grid, center: Vec3, radius: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let s = (x - center).norm_squared() / (radius * radius);
        if s < 1.0 {
            (1.0 - 1.0 / (1.0 - s)).exp()
        } else {
            0.0
        }
    })
}

/// Smooth compactly supported random field: a sum of C³ bumps
/// (1 − r²/a²)⁴ with random centres, widths and signs.
pub fn random_bump_field<R: Rng>(
    grid: &Grid,
    rng: &mut R,
    center: Vec3,
    spread: f64,
    width: (f64, f64),
    count: usize,
) -> ScalarField {
    let bumps: Vec<(Vec3, f64, f64)> = (0..count)
        .map(|_| {
            let off = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ) * spread;
            let a = rng.gen_range(width.0..width.1);
            let c = rng.gen_range(-1.0..1.0);
            (center + off, a, c)
        })
        .collect();
    ScalarField::from_fn(grid, |x| {
        bumps
            .iter()
            .map(|(c, a, amp)| {
                let s = 1.0 - (x - c).norm_squared() / (a * a);
                if s > 0.0 {
                    amp * s.powi(4)
                } else {
                    0.0
                }
            })
            .sum()
    })
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"KGSNAP01";

/// Header of a binary field snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub n: usize,
    pub l: f64,
    pub count: usize,
    pub time: f64,
}

/// Writes `fields` (each N³ real samples) after a 64-byte header:
/// magic, N (u64), L (f64), count (u64), time (f64), zero padding.
/// Values are little-endian f64, row-major with z fastest.
pub fn write_snapshot(path: &Path, grid: &Grid, time: f64, fields: &[&[f64]]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = [0u8; 64];
    header[..8].copy_from_slice(SNAPSHOT_MAGIC);
    header[8..16].copy_from_slice(&(grid.n as u64).to_le_bytes());
    header[16..24].copy_from_slice(&grid.l.to_le_bytes());
    header[24..32].copy_from_slice(&(fields.len() as u64).to_le_bytes());
    header[32..40].copy_from_slice(&time.to_le_bytes());
    w.write_all(&header)?;
    for f in fields {
        if f.len() != grid.len() {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "field size mismatch"));
        }
        for v in f.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_snapshot(path: &Path) -> io::Result<(SnapshotHeader, Vec<Vec<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 64];
    r.read_exact(&mut header)?;
    if &header[..8] != SNAPSHOT_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad snapshot magic"));
    }
    let word = |i: usize| -> [u8; 8] { header[i..i + 8].try_into().unwrap() };
    let h = SnapshotHeader {
        n: u64::from_le_bytes(word(8)) as usize,
        l: f64::from_le_bytes(word(16)),
        count: u64::from_le_bytes(word(24)) as usize,
        time: f64::from_le_bytes(word(32)),
    };
    let len = h.n * h.n * h.n;
    let mut out = Vec::with_capacity(h.count);
    let mut buf = [0u8; 8];
    for _ in 0..h.count {
        let mut f = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            f.push(f64::from_le_bytes(buf));
        }
        out.push(f);
    }
    Ok((h, out))
}
