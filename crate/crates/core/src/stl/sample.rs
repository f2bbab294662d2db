use rand::Rng;

use super::{Atom, Formula, Interval, Relation};

/// Random formula generator with an exact node budget, used by property tests,
/// benchmarks and the acceptance suite.
#[derive(Debug, Clone)]
pub struct FormulaSampler {
    pub max_nodes: usize,
    pub channels: usize,
    pub max_bound: usize,
    pub threshold_range: (f64, f64),
    pub allow_not: bool,
    pub allow_true: bool,
    pub allow_until: bool,
}

impl Default for FormulaSampler {
    fn default() -> Self {
        FormulaSampler {
            max_nodes: 7,
            channels: 2,
            max_bound: 10,
            threshold_range: (-2.0, 2.0),
            allow_not: true,
            allow_true: false,
            allow_until: true,
        }
    }
}

impl FormulaSampler {
    /// Node count drawn uniformly from `1..=max_nodes`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Formula {
        let n = rng.random_range(1..=self.max_nodes.max(1));
        self.sample_with_nodes(rng, n)
    }

    /// A formula with exactly `nodes` nodes.
    pub fn sample_with_nodes<R: Rng + ?Sized>(&self, rng: &mut R, nodes: usize) -> Formula {
        if nodes <= 1 {
            return self.leaf(rng);
        }
        let n_unary = if self.allow_not { 3 } else { 2 };
        let n_binary = if nodes >= 3 {
            if self.allow_until {
                3
            } else {
                2
            }
        } else {
            0
        };
        let pick = rng.random_range(0..n_unary + n_binary);
        if pick < n_unary {
            let body = self.sample_with_nodes(rng, nodes - 1);
            match pick {
                0 => Formula::eventually(self.interval(rng), body),
                1 => Formula::globally(self.interval(rng), body),
                _ => Formula::not(body),
            }
        } else {
            let left = rng.random_range(1..=nodes - 2);
            let a = self.sample_with_nodes(rng, left);
            let b = self.sample_with_nodes(rng, nodes - 1 - left);
            match pick - n_unary {
                0 => Formula::and(a, b),
                1 => Formula::or(a, b),
                _ => Formula::until(self.interval(rng), a, b),
            }
        }
    }

    fn leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> Formula {
        if self.allow_true && rng.random_bool(0.1) {
            return Formula::True;
        }
        let var = rng.random_range(0..self.channels.max(1));
        let rel = if rng.random_bool(0.5) { Relation::Ge } else { Relation::Le };
        let (lo, hi) = self.threshold_range;
        Formula::atom(Atom::new(var, rel, rng.random_range(lo..=hi)))
    }

    fn interval<R: Rng + ?Sized>(&self, rng: &mut R) -> Interval {
        let lo = rng.random_range(0..=self.max_bound);
        let hi = rng.random_range(lo..=self.max_bound);
        Interval::new(lo, hi).expect("lo <= hi by construction")
    }
}
