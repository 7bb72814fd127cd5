//! Shared fixtures for the benchmarks.

use kgscatter_core::scatter::{perturbed_soliton, transversal_perturbation};
use kgscatter_core::{ChargeProfile, FullState, Grid, Model, PerturbationSpec, SolitonParams, Vec3};

pub fn model(n: usize, l: f64) -> Model {
    Model::new(Grid::new(n, l).expect("grid"), 1.0, ChargeProfile::double_lens(1.0, 2.0)).expect("model")
}

/// Soliton at the origin with v = 0.3e₁ plus a 1% transversal perturbation.
pub fn perturbed_state(model: &Model) -> FullState {
    let v = Vec3::new(0.3, 0.0, 0.0);
    let (z, _) = transversal_perturbation(v, model, 2.0, &PerturbationSpec::default()).expect("perturbation");
    perturbed_soliton(&SolitonParams::new(Vec3::zeros(), v).expect("speed"), &z, model).expect("state")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let m = model(32, 12.0);
        assert!(perturbed_state(&m).is_finite());
    }
}
