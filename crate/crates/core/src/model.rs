//! The discretized coupled system: grid, mass and charge profile.

use crate::charge::ChargeProfile;
use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField, C64};

/// Grid, mass and charge shared by every solver.
///
/// The coupling density is represented by the exact transform ρ̂ sampled at
/// the grid wavenumbers, with all Nyquist planes removed. Its inverse
/// transform is the grid charge density used throughout, so stationary
/// equations hold to rounding on the grid.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Grid,
    pub m: f64,
    pub profile: ChargeProfile,
    pub rho_hat: Vec<f64>,
}

impl Model {
    pub fn new(grid: Grid, m: f64, profile: ChargeProfile) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::invalid("m", format!("mass must be positive, got {m}")));
        }
        profile.validate()?;
        let n = grid.n;
        let nyq = n / 2;
        let k = grid.k_op().to_vec();
        let mut rho_hat = vec![0.0; grid.len()];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    if i == nyq || j == nyq || l == nyq {
                        continue;
                    }
                    let kk = (k[i] * k[i] + k[j] * k[j] + k[l] * k[l]).sqrt();
                    rho_hat[(i * n + j) * n + l] = profile.rho_hat_radial(kk);
                }
            }
        }
        Ok(Model {
            grid,
            m,
            profile,
            rho_hat,
        })
    }

    /// ‖ρ‖_{L²} of the grid density.
    pub fn rho_norm(&self) -> f64 {
        let s: f64 = self.rho_hat.iter().map(|r| r * r).sum();
        (s * self.grid.spectral_volume()).sqrt()
    }

    /// Real-space grid density centred at the origin.
    pub fn rho_grid(&self) -> ScalarField {
        let c: Vec<C64> = self.rho_hat.iter().map(|&r| C64::new(r, 0.0)).collect();
        ScalarField::new(self.grid.clone(), self.grid.inverse(&c))
    }

    /// Conservative bound on the time before waves emitted near `q0` wrap
    /// around the periodic box.
    pub fn wraparound_bound(&self, q0_norm: f64, max_speed: f64, horizon: f64) -> f64 {
        self.grid.l - self.profile.support_radius() - q0_norm - max_speed * horizon
    }
}
