//! Base measure over piecewise-linear trajectories.
//!
//! A channel starts at `N(m1, s1)`, has total variation `K = N(m2, s2)^2`
//! split by `N-1` sorted uniforms on `[0, K]`, and walks those increments with a
//! sign that starts uniformly in `{-1, +1}` and flips with probability `q` at
//! every step. Simple signals (little variation, few monotonicity changes) are
//! therefore the most probable.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stl::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mu0Params {
    pub a: usize,
    pub b: usize,
    pub delta: usize,
    pub m1: f64,
    pub m2: f64,
    pub s1: f64,
    pub s2: f64,
    pub q: f64,
    pub seed: u64,
}

impl Default for Mu0Params {
    fn default() -> Self {
        Mu0Params { a: 0, b: 100, delta: 1, m1: 0.0, m2: 0.0, s1: 1.0, s2: 1.0, q: 0.1, seed: 0 }
    }
}

impl Mu0Params {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("mu0: {m}")));
        if self.b <= self.a {
            return bad("b must exceed a");
        }
        if self.delta == 0 || (self.b - self.a) % self.delta != 0 {
            return bad("delta must divide b - a");
        }
        if !(self.s1 > 0.0 && self.s2 > 0.0) {
            return bad("standard deviations must be positive");
        }
        if !(0.0..=1.0).contains(&self.q) {
            return bad("q must lie in [0, 1]");
        }
        if !(self.m1.is_finite() && self.m2.is_finite()) {
            return bad("means must be finite");
        }
        Ok(())
    }

    /// Number of steps `N`; trajectories have `N + 1` samples.
    pub fn steps(&self) -> usize {
        (self.b - self.a) / self.delta
    }

    /// Same parameters with the time span set so trajectories have `len` samples.
    pub fn with_length(mut self, len: usize) -> Self {
        self.delta = 1;
        self.b = self.a + len.saturating_sub(1).max(1);
        self
    }
}

/// One sampled channel together with the total variation it was built from.
#[derive(Debug, Clone)]
pub struct SampledChannel {
    pub values: Vec<f64>,
    pub total_variation: f64,
}

/// Samples a single channel from its own ChaCha substream.
///
/// The stream id packs `(index, channel)`, so a sample depends only on the
/// seed and its coordinates, not on how many others are drawn alongside it.
pub fn sample_channel(params: &Mu0Params, index: usize, channel: usize) -> SampledChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(((index as u64) << 16) | channel as u64);
    let n = params.steps();

    let start = Normal::new(params.m1, params.s1).expect("validated").sample(&mut rng);
    let k = Normal::new(params.m2, params.s2).expect("validated").sample(&mut rng).powi(2);

    let mut y: Vec<f64> = Vec::with_capacity(n + 1);
    y.push(0.0);
    y.extend((1..n).map(|_| rng.random::<f64>() * k));
    y.push(k);
    y[1..n].sort_by(f64::total_cmp);

    let mut sign: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut values = Vec::with_capacity(n + 1);
    values.push(start);
    for i in 0..n {
        if rng.random_bool(params.q) {
            sign = -sign;
        }
        let next = values[i] + sign * (y[i + 1] - y[i]);
        values.push(next);
    }
    SampledChannel { values, total_variation: k }
}

/// Draws `count` trajectories with `channels` independent channels each.
pub fn sample_mu0(params: &Mu0Params, count: usize, channels: usize) -> Result<Vec<Trajectory>> {
    params.validate()?;
    if count == 0 || channels == 0 {
        return Err(Error::InvalidParam("mu0: count and channels must be at least 1".into()));
    }
    let len = params.steps() + 1;
    (0..count)
        .map(|index| {
            let mut data = Vec::with_capacity(channels * len);
            for c in 0..channels {
                data.extend(sample_channel(params, index, c).values);
            }
            let values = Array2::from_shape_vec((channels, len), data).expect("shape is exact");
            Trajectory::new(values, None, format!("mu0-{index}"))
        })
        .collect()
}
