//! Seeded two-class pulse dataset.
//!
//! Both classes are two-channel noise of length 100 kept inside `[-1, 1]`.
//! Class 1 additionally carries a pulse on channel 0 whose values exceed 2,
//! placed entirely inside steps `[30, 40]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::stl::Trajectory;

pub const PULSE_LENGTH: usize = 100;
pub const PULSE_WINDOW: (usize, usize) = (30, 40);

/// `per_class` trajectories of each class, interleaved (class 0, class 1, ...).
pub fn pulse_dataset(per_class: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).expect("valid");
    let mut out = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        for class in 0..2 {
            let mut channels: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..PULSE_LENGTH).map(|_| f64::clamp(noise.sample(&mut rng), -1.0, 1.0)).collect())
                .collect();
            if class == 1 {
                let width = rng.random_range(2..=5);
                let start = rng.random_range(PULSE_WINDOW.0..=PULSE_WINDOW.1 + 1 - width);
                let height = rng.random_range(2.5..3.5);
                for v in &mut channels[0][start..start + width] {
                    *v = height + 0.1 * f64::clamp(noise.sample(&mut rng), -1.0, 1.0);
                }
            }
            out.push(Trajectory::from_channels(channels, Some(class), format!("pulse-{class}-{i}")).expect("finite"));
        }
    }
    out
}

/// [`pulse_dataset`] wrapped as a [`Dataset`] with channels `0, 1` and labels `0, 1`.
pub fn pulse(per_class: usize, seed: u64) -> Dataset {
    Dataset {
        trajectories: pulse_dataset(per_class, seed),
        channel_names: vec!["0".into(), "1".into()],
        label_map: vec!["0".into(), "1".into()],
    }
}
