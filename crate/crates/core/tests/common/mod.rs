//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use kgscatter_core::ChargeProfile;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let f1 = f(c - h * XGK[i]);
        let f2 = f(c + h * XGK[i]);
        k += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            g += WG[i / 2] * (f1 + f2);
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod 7/15 with global bisection until the summed
/// error estimate drops below `abs_tol + rel_tol·|I|`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(&mut f, a, b))];
    for _ in 0..20_000 {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return total;
        }
        let (i, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(i);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&mut f, lo, mid)));
        parts.push((mid, hi, gk15(&mut f, mid, hi)));
    }
    panic!("adaptive quadrature did not converge on [{a}, {b}]");
}

/// Integral of f over [a, b] split at the given interior points.
pub fn integrate_split(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, cuts: &[f64], abs_tol: f64, rel_tol: f64) -> f64 {
    let mut edges = vec![a];
    edges.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.windows(2).map(|w| integrate(&mut f, w[0], w[1], abs_tol, rel_tol)).sum()
}

/// Points center ± width·4ⁿ, so that a peak of the given width is never
/// hidden inside a long interval.
pub fn geometric_cuts(center: f64, width: f64, span: f64) -> Vec<f64> {
    let mut cuts = vec![center];
    let mut d = width;
    while d < span {
        cuts.push(center - d);
        cuts.push(center + d);
        d *= 4.0;
    }
    cuts
}

/// Im H_jj(ε + iω) in cylindrical coordinates aligned with v, by nested
/// adaptive quadrature (inner variable x = k⊥²).
pub fn im_h_regularized(profile: &ChargeProfile, m: f64, speed: f64, eps: f64, omega: f64) -> [f64; 2] {
    let kc = profile.spectral_cutoff(1e-9);
    std::array::from_fn(|j| {
        let outer = |k1: f64| {
            let w = omega + speed * k1;
            let re_a = k1 * k1 + m * m + eps * eps - w * w;
            let im_a = 2.0 * eps * w;
            let x_max = kc * kc - k1 * k1;
            let inner = |x: f64| {
                let r = profile.rho_hat_radial((k1 * k1 + x).sqrt());
                let weight = if j == 0 { k1 * k1 } else { 0.5 * x };
                -weight * r * r * im_a / ((x + re_a).powi(2) + im_a * im_a)
            };
            std::f64::consts::PI * integrate_split(inner, 0.0, x_max, &geometric_cuts(-re_a, im_a.abs(), x_max), 1e-14, 1e-9)
        };
        let shell: Vec<f64> = [-1.0, 1.0]
            .iter()
            .flat_map(|&sg| {
                // (k1, k⊥ = 0) zeros of Re A bound the region where the inner peak exists
                let (a, b, c) = (1.0 - speed * speed, -2.0 * speed * omega, m * m + eps * eps - omega * omega);
                let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
                geometric_cuts((-b + sg * disc) / (2.0 * a), eps, 2.0 * kc)
            })
            .collect();
        integrate_split(outer, -kc, kc, &shell, 1e-13, 1e-8)
    })
}
