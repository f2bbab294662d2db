//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stelle::stl::{Atom, Formula, FormulaSampler, Interval, Trajectory, LARGE};
use stelle::trajgen::{sample_mu0, Mu0Params};

/// Robustness by direct recursion over the definition: nested loops, no
/// sliding windows, no sharing of subresults.
pub fn brute_robustness(phi: &Formula, tau: &Trajectory, t: usize) -> f64 {
    let len = tau.len();
    match phi {
        Formula::True => LARGE,
        Formula::Atom(a) => a.eval(tau.channel(a.var)[t]).clamp(-LARGE, LARGE),
        Formula::Not(f) => -brute_robustness(f, tau, t),
        Formula::And(a, b) => brute_robustness(a, tau, t).min(brute_robustness(b, tau, t)),
        Formula::Or(a, b) => brute_robustness(a, tau, t).max(brute_robustness(b, tau, t)),
        Formula::Eventually(iv, f) => {
            let mut best = -LARGE;
            for s in t + iv.lo()..=t + iv.hi() {
                if s < len {
                    best = best.max(brute_robustness(f, tau, s));
                }
            }
            best
        }
        Formula::Globally(iv, f) => {
            let mut best = LARGE;
            for s in t + iv.lo()..=t + iv.hi() {
                if s < len {
                    best = best.min(brute_robustness(f, tau, s));
                }
            }
            best
        }
        Formula::Until(iv, a, b) => {
            let mut best = -LARGE;
            for s in t + iv.lo()..=t + iv.hi() {
                if s >= len {
                    break;
                }
                let mut v = brute_robustness(b, tau, s);
                for u in t..=s {
                    v = v.min(brute_robustness(a, tau, u));
                }
                best = best.max(v);
            }
            best
        }
    }
}

/// `count` two-channel base-measure trajectories of length 101.
pub fn mu0_trajectories(count: usize, seed: u64) -> Vec<Trajectory> {
    sample_mu0(&Mu0Params { seed, ..Mu0Params::default() }, count, 2).unwrap()
}

/// Seeded corpus of random formulae with at most `max_nodes` nodes.
pub fn formula_corpus(n: usize, max_nodes: usize, seed: u64, allow_not: bool) -> Vec<Formula> {
    let sampler = FormulaSampler { max_nodes, allow_not, ..FormulaSampler::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sampler.sample(&mut rng)).collect()
}

pub fn arb_interval(max_bound: usize) -> impl Strategy<Value = Interval> {
    (0..=max_bound, 0..=max_bound).prop_map(|(a, b)| Interval::new(a.min(b), a.max(b)).unwrap())
}

pub fn arb_atom(channels: usize) -> impl Strategy<Value = Formula> {
    (0..channels, any::<bool>(), -3.0..3.0f64).prop_map(|(v, ge, c)| {
        Formula::Atom(if ge { Atom::ge(v, c) } else { Atom::le(v, c) })
    })
}

/// Random formula trees over `channels` channels, all operators included.
pub fn arb_formula(channels: usize, with_true: bool) -> impl Strategy<Value = Formula> {
    let leaf = if with_true {
        prop_oneof![9 => arb_atom(channels), 1 => Just(Formula::True)].boxed()
    } else {
        arb_atom(channels).boxed()
    };
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (arb_interval(8), inner.clone()).prop_map(|(i, f)| Formula::eventually(i, f)),
            (arb_interval(8), inner.clone()).prop_map(|(i, f)| Formula::globally(i, f)),
            (arb_interval(8), inner.clone(), inner).prop_map(|(i, a, b)| Formula::until(i, a, b)),
        ]
    })
}

/// Random trajectory with values on a coarse grid, so that ties occur.
pub fn arb_trajectory(channels: usize, len: usize) -> impl Strategy<Value = Trajectory> {
    proptest::collection::vec(-6i32..=6, channels * len).prop_map(move |v| {
        let values = Array2::from_shape_vec((channels, len), v.into_iter().map(|x| x as f64 * 0.5).collect()).unwrap();
        Trajectory::new(values, None, "p").unwrap()
    })
}

/// Minimum total cost over all column subsets that cover every coverable row.
pub fn exhaustive_cover_cost(d: &Array2<u8>, costs: &[usize]) -> usize {
    let (rows, cols) = d.dim();
    let coverable: Vec<usize> = (0..rows).filter(|&i| (0..cols).any(|j| d[[i, j]] == 1)).collect();
    let mut best = usize::MAX;
    for mask in 0u32..(1 << cols) {
        let covers = coverable.iter().all(|&i| (0..cols).any(|j| mask & (1 << j) != 0 && d[[i, j]] == 1));
        if covers {
            let cost = (0..cols).filter(|j| mask & (1 << j) != 0).map(|j| costs[j]).sum();
            best = best.min(cost);
        }
    }
    best
}

pub fn random_cover_instance(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> (Array2<u8>, Vec<usize>) {
    let d = Array2::from_shape_fn((rows, cols), |_| u8::from(rng.random_bool(0.3)));
    let costs = (0..cols).map(|_| rng.random_range(1..=9)).collect();
    (d, costs)
}

pub fn max_relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
