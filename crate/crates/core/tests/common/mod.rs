#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rl2_core::{seed, FlowArch, FlowModel};

pub fn arch(num_layers: usize, hidden: &[usize]) -> FlowArch {
    FlowArch {
        num_layers,
        hidden: hidden.to_vec(),
        scale_clamp: 2.0,
    }
}

/// A flow whose every parameter (output layers included) is drawn from N(0, std²),
/// with a non-trivial standardizer.
pub fn random_model(dim: usize, arch: &FlowArch, std: f64, seed_value: u64) -> FlowModel {
    let mut model = FlowModel::new(dim, arch, seed_value).unwrap();
    let mut rng = seed::rng(seed::derive(seed_value, "test-params"));
    let normal = Normal::new(0.0, std).unwrap();
    let params: Vec<f64> = (0..model.num_params())
        .map(|_| normal.sample(&mut rng))
        .collect();
    model.set_parameters(&params).unwrap();
    let shift = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scale = (0..dim).map(|_| rng.random_range(0.5..2.0)).collect();
    model.set_standardizer(shift, scale).unwrap();
    model
}

pub fn normal_rows(n: usize, dim: usize, seed_value: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed_value);
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng))
                .collect()
        })
        .collect()
}
