//! Synthetic two-component datasets with a tunable cross-component
//! interaction.
//!
//! For task `t` the clean label is
//! `alpha[t]·u(c) + beta[t]·v(a) + gamma·u(c)·v(a)·s`, where `u` and `v` are
//! fixed unit-norm projections of `PROJECTION_SUPPORT` seeded cation and
//! anion columns (so both have unit variance) and `s` is the temperature
//! rescaled to `[-1, 1]`. Gaussian noise is added
//! and each task is then shifted so its minimum label is exactly 1.
//! With `gamma = 0` the labels are additive across components, which a
//! simple furcated network represents exactly.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DescriptorDataset, FeatureLayout, PROPERTY_NAMES};
use crate::error::{Error, Result};

const T_MIN: f64 = 278.15;
const T_MAX: f64 = 373.15;
const P_MIN: f64 = 100.0;
const P_MAX: f64 = 20_000.0;

/// Number of descriptor columns each projection reads.
pub const PROJECTION_SUPPORT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub rows: usize,
    pub seed: u64,
    /// Strength `gamma` of the `u·v·s` interaction term.
    pub interaction: f64,
    pub noise_sd: f64,
    pub n_tasks: usize,
}

impl SynthConfig {
    pub fn new(rows: usize, seed: u64, interaction: f64, noise_sd: f64) -> Self {
        Self {
            rows,
            seed,
            interaction,
            noise_sd,
            n_tasks: 3,
        }
    }

    pub fn with_tasks(mut self, n_tasks: usize) -> Self {
        self.n_tasks = n_tasks;
        self
    }
}

/// Everything needed to recompute the clean labels from the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCoefficients {
    pub cation_projection: Vec<f64>,
    pub anion_projection: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: f64,
    pub shift: Vec<f64>,
    pub temperature_center: f64,
    pub temperature_half_range: f64,
}

impl SynthCoefficients {
    pub fn u(&self, cation: &[f64]) -> f64 {
        dot(&self.cation_projection, cation)
    }

    pub fn v(&self, anion: &[f64]) -> f64 {
        dot(&self.anion_projection, anion)
    }

    pub fn s(&self, temperature: f64) -> f64 {
        (temperature - self.temperature_center) / self.temperature_half_range
    }

    /// Noise-free, unshifted label for task `t`.
    pub fn clean_label(&self, t: usize, cation: &[f64], anion: &[f64], temperature: f64) -> f64 {
        let (u, v) = (self.u(cation), self.v(anion));
        self.alpha[t] * u + self.beta[t] * v + self.gamma * u * v * self.s(temperature)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn task_name(t: usize) -> String {
    PROPERTY_NAMES
        .get(t)
        .map_or_else(|| format!("task_{t}"), |s| s.to_string())
}

pub fn synth_generate(config: &SynthConfig) -> Result<(DescriptorDataset, SynthCoefficients)> {
    if config.rows == 0 {
        return Err(Error::Config("synthetic dataset needs at least one row".into()));
    }
    if config.n_tasks == 0 {
        return Err(Error::Config("synthetic dataset needs at least one task".into()));
    }
    if !(config.interaction >= 0.0 && config.interaction.is_finite()) {
        return Err(Error::Config(format!(
            "interaction strength must be finite and non-negative, got {}",
            config.interaction
        )));
    }
    if !(config.noise_sd >= 0.0 && config.noise_sd.is_finite()) {
        return Err(Error::Config(format!(
            "noise sd must be finite and non-negative, got {}",
            config.noise_sd
        )));
    }

    let layout = FeatureLayout::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let projection = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let k = PROJECTION_SUPPORT.min(n);
        let mut p = vec![0.0; n];
        for i in rand::seq::index::sample(rng, n, k) {
            p[i] = StandardNormal.sample(rng);
        }
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        p.iter_mut().for_each(|x| *x /= norm);
        p
    };
    let cation_projection = projection(layout.n_cation, &mut rng);
    let anion_projection = projection(layout.n_anion, &mut rng);
    let alpha: Vec<f64> = (0..config.n_tasks).map(|_| rng.random_range(0.5..1.5)).collect();
    let beta: Vec<f64> = (0..config.n_tasks).map(|_| rng.random_range(0.5..1.5)).collect();

    let width = layout.width();
    let mut features = Array2::<f64>::zeros((config.rows, width));
    for mut row in features.rows_mut() {
        for v in row.iter_mut().take(layout.n_cation + layout.n_anion) {
            *v = StandardNormal.sample(&mut rng);
        }
        row[width - 2] = rng.random_range(T_MIN..=T_MAX);
        row[width - 1] = rng.random_range(P_MIN..=P_MAX);
    }

    let mut coefficients = SynthCoefficients {
        cation_projection,
        anion_projection,
        alpha,
        beta,
        gamma: config.interaction,
        shift: vec![0.0; config.n_tasks],
        temperature_center: 0.5 * (T_MIN + T_MAX),
        temperature_half_range: 0.5 * (T_MAX - T_MIN),
    };

    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut labels = Array2::<f64>::zeros((config.rows, config.n_tasks));
    for (i, row) in features.rows().into_iter().enumerate() {
        let row = row.as_slice().expect("row-major");
        let cation = &row[layout.cation_range()];
        let anion = &row[layout.anion_range()];
        let temperature = row[width - 2];
        for t in 0..config.n_tasks {
            let mut y = coefficients.clean_label(t, cation, anion, temperature);
            if config.noise_sd > 0.0 {
                y += noise.sample(&mut rng);
            }
            labels[[i, t]] = y;
        }
    }

    for (t, mut col) in labels.columns_mut().into_iter().enumerate() {
        let min = col.fold(f64::INFINITY, |a, &b| a.min(b));
        let shift = 1.0 - min;
        col.mapv_inplace(|y| y + shift);
        coefficients.shift[t] = shift;
    }

    let names = (0..config.n_tasks).map(task_name).collect();
    let dataset = DescriptorDataset::new(layout, features, labels, names)?;
    Ok((dataset, coefficients))
}

/// Column of clean (noise-free, shifted) labels for task `t`; used by tests.
pub fn clean_labels(dataset: &DescriptorDataset, coefficients: &SynthCoefficients, t: usize) -> Array1<f64> {
    let layout = dataset.layout();
    let width = layout.width();
    dataset
        .features()
        .rows()
        .into_iter()
        .map(|row| {
            let row = row.to_vec();
            coefficients.clean_label(t, &row[layout.cation_range()], &row[layout.anion_range()], row[width - 2])
                + coefficients.shift[t]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::new(50, 4, 2.0, 0.05);
        let (a, ca) = synth_generate(&cfg).unwrap();
        let (b, cb) = synth_generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
    }

    #[test]
    fn noiseless_labels_match_coefficients() {
        let (d, c) = synth_generate(&SynthConfig::new(40, 1, 0.0, 0.0)).unwrap();
        for t in 0..3 {
            let clean = clean_labels(&d, &c, t);
            for (got, want) in d.labels().column(t).iter().zip(clean.iter()) {
                assert!((got - want).abs() < 1e-12);
            }
            let min = d.labels().column(t).fold(f64::INFINITY, |a, &b| a.min(b));
            assert!((min - 1.0).abs() < 1e-12);
        }
        assert_eq!(d.label_names(), ["cpt", "density", "viscosity"]);
    }

    #[test]
    fn gamma_zero_is_additive() {
        // Second mixed difference across components vanishes when gamma = 0.
        let (_, c) = synth_generate(&SynthConfig::new(1, 9, 0.0, 0.0)).unwrap();
        let c0 = vec![0.3; 94];
        let c1 = vec![-0.7; 94];
        let a0 = vec![0.1; 94];
        let a1 = vec![1.2; 94];
        let f = |cat: &[f64], an: &[f64]| c.clean_label(0, cat, an, 350.0);
        let mixed = f(&c1, &a1) - f(&c1, &a0) - f(&c0, &a1) + f(&c0, &a0);
        assert!(mixed.abs() < 1e-12);

        let (_, c) = synth_generate(&SynthConfig::new(1, 9, 2.0, 0.0)).unwrap();
        let f = |cat: &[f64], an: &[f64]| c.clean_label(0, cat, an, 350.0);
        let mixed = f(&c1, &a1) - f(&c1, &a0) - f(&c0, &a1) + f(&c0, &a0);
        assert!(mixed.abs() > 1e-3);
    }

    #[test]
    fn state_vars_in_physical_ranges() {
        let (d, _) = synth_generate(&SynthConfig::new(200, 2, 1.0, 0.1)).unwrap();
        for row in d.state_vars().rows() {
            assert!((T_MIN..=T_MAX).contains(&row[0]));
            assert!((P_MIN..=P_MAX).contains(&row[1]));
        }
    }

    #[test]
    fn zero_rows_rejected() {
        assert!(matches!(synth_generate(&SynthConfig::new(0, 0, 0.0, 0.0)), Err(Error::Config(_))));
        assert!(synth_generate(&SynthConfig::new(5, 0, -1.0, 0.0)).is_err());
    }
}
