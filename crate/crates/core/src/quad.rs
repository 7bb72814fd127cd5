//! Gauss–Legendre rules and composite panels.

use std::f64::consts::PI;

/// An `n`-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule over consecutive breakpoints.
    pub fn composite(&self, edges: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len() * edges.len().saturating_sub(1));
        for pair in edges.windows(2) {
            out.extend(self.mapped(pair[0], pair[1]));
        }
        out
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `count` equal panels on [a, b].
pub fn uniform_edges(a: f64, b: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    (0..=count)
        .map(|i| a + (b - a) * i as f64 / count as f64)
        .collect()
}

/// Panels on [a, b] refined geometrically towards `a` down to width `finest`.
pub fn graded_edges(a: f64, b: f64, finest: f64, ratio: f64) -> Vec<f64> {
    let mut edges = vec![a];
    let mut w = finest;
    let mut x = a;
    while x + w < b {
        x += w;
        edges.push(x);
        w *= ratio;
    }
    edges.push(b);
    edges
}

/// Integral over the ball |k| < k_max of an integrand with rotational
/// symmetry about the first axis, in coordinates (|k|, t = cos θ):
/// 2π ∫₀^{k_max} k² dk ∫₋₁¹ dt f(k, t).
///
/// Radial panels have width at most `panel`; the rule is refined until the
/// largest relative change of any component is below `rel_tol`.
pub fn axisymmetric<const C: usize>(
    k_max: f64,
    panel: f64,
    rel_tol: f64,
    f: impl Fn(f64, f64) -> [f64; C],
) -> Result<[f64; C], f64> {
    let eval = |level: u32| -> [f64; C] {
        let count = ((k_max / panel).ceil() as usize).max(1) << level;
        let radial = GaussLegendre::new(16).composite(&uniform_edges(0.0, k_max, count));
        let angular = GaussLegendre::new(24 << level);
        let mut acc = [0.0; C];
        for &(k, wk) in &radial {
            let mut inner = [0.0; C];
            for (&t, &wt) in angular.nodes.iter().zip(&angular.weights) {
                let v = f(k, t);
                for c in 0..C {
                    inner[c] += wt * v[c];
                }
            }
            for c in 0..C {
                acc[c] += 2.0 * PI * k * k * wk * inner[c];
            }
        }
        acc
    };
    let mut prev = eval(0);
    let mut change = f64::INFINITY;
    for level in 1..=3 {
        let next = eval(level);
        let scale = next.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        change = next
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs() / scale.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        prev = next;
        if change <= rel_tol {
            return Ok(prev);
        }
    }
    Err(change)
}
