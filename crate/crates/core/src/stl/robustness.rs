//! Discrete-time quantitative semantics.
//!
//! Every node is evaluated to a full robustness signal over `0..L`, bottom-up.
//! Temporal windows `[t+a, t+b]` are intersected with `0..L`; an `F` (or `U`)
//! window that becomes empty yields `-LARGE`, an empty `G` window `+LARGE`.

use std::collections::VecDeque;

use super::{Formula, Trajectory};
use crate::error::{Error, Result};

/// Finite stand-in for infinite robustness (`True`, empty windows).
pub const LARGE: f64 = 1e9;

/// Robustness of `phi` on `tau` at time step `t`.
pub fn robustness(phi: &Formula, tau: &Trajectory, t: usize) -> Result<f64> {
    if t >= tau.len() {
        return Err(Error::TimeOutOfRange { t, len: tau.len() });
    }
    Ok(robustness_signal(phi, tau)?[t])
}

/// `robustness(phi, tau, t) >= 0`; ties count as satisfied.
pub fn satisfied(phi: &Formula, tau: &Trajectory, t: usize) -> Result<bool> {
    Ok(robustness(phi, tau, t)? >= 0.0)
}

/// Robustness of `phi` at every time step of `tau`.
pub fn robustness_signal(phi: &Formula, tau: &Trajectory) -> Result<Vec<f64>> {
    check_channels(phi, tau)?;
    Ok(eval(phi, tau))
}

fn check_channels(phi: &Formula, tau: &Trajectory) -> Result<()> {
    let mut bad = None;
    phi.for_each_atom(&mut |a| {
        if a.var >= tau.channels() {
            bad.get_or_insert(a.var);
        }
    });
    match bad {
        Some(channel) => Err(Error::ChannelOutOfRange { channel, channels: tau.channels() }),
        None => Ok(()),
    }
}

fn eval(phi: &Formula, tau: &Trajectory) -> Vec<f64> {
    let len = tau.len();
    match phi {
        Formula::True => vec![LARGE; len],
        Formula::Atom(a) => tau.channel(a.var).iter().map(|&v| a.eval(v).clamp(-LARGE, LARGE)).collect(),
        Formula::Not(f) => {
            let mut s = eval(f, tau);
            s.iter_mut().for_each(|v| *v = -*v);
            s
        }
        Formula::And(a, b) => zip_with(eval(a, tau), &eval(b, tau), f64::min),
        Formula::Or(a, b) => zip_with(eval(a, tau), &eval(b, tau), f64::max),
        Formula::Eventually(iv, f) => sliding_extreme(&eval(f, tau), iv.lo(), iv.hi(), Extreme::Max),
        Formula::Globally(iv, f) => sliding_extreme(&eval(f, tau), iv.lo(), iv.hi(), Extreme::Min),
        Formula::Until(iv, a, b) => until(&eval(a, tau), &eval(b, tau), iv.lo(), iv.hi()),
    }
}

fn zip_with(mut a: Vec<f64>, b: &[f64], op: fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter_mut().zip(b).for_each(|(x, &y)| *x = op(*x, y));
    a
}

#[derive(Clone, Copy, PartialEq)]
enum Extreme {
    Max,
    Min,
}

/// Max (or min) of `s` over each window `[t+lo, min(t+hi, L-1)]`, using a
/// monotone deque so the whole signal costs O(L).
fn sliding_extreme(s: &[f64], lo: usize, hi: usize, which: Extreme) -> Vec<f64> {
    let len = s.len();
    let empty = match which {
        Extreme::Max => -LARGE,
        Extreme::Min => LARGE,
    };
    // `a` dominates `b` if `b` can never again be the extreme while `a` is in the window
    let dominates = |a: f64, b: f64| match which {
        Extreme::Max => a >= b,
        Extreme::Min => a <= b,
    };
    let mut out = vec![empty; len];
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut pushed = 0usize;
    for (t, slot) in out.iter_mut().enumerate() {
        let start = t + lo;
        if start >= len {
            break;
        }
        let end = (t + hi).min(len - 1);
        while pushed <= end {
            while deque.back().is_some_and(|&j| dominates(s[pushed], s[j])) {
                deque.pop_back();
            }
            deque.push_back(pushed);
            pushed += 1;
        }
        while deque.front().is_some_and(|&j| j < start) {
            deque.pop_front();
        }
        *slot = s[*deque.front().expect("window is non-empty")];
    }
    out
}

fn until(lhs: &[f64], rhs: &[f64], lo: usize, hi: usize) -> Vec<f64> {
    let len = lhs.len();
    (0..len)
        .map(|t| {
            let mut best = -LARGE;
            let mut running_min = LARGE;
            for tp in t..=(t + hi).min(len - 1) {
                running_min = running_min.min(lhs[tp]);
                if tp >= t + lo {
                    best = best.max(rhs[tp].min(running_min));
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    fn traj(channels: Vec<Vec<f64>>) -> Trajectory {
        Trajectory::from_channels(channels, None, "t").unwrap()
    }

    #[test]
    fn atom_on_constant_trace() {
        let tau = traj(vec![vec![2.0; 4]]);
        let phi = parse("x0 >= 0").unwrap();
        assert_eq!(robustness(&phi, &tau, 0).unwrap(), 2.0);
        assert!(satisfied(&phi, &tau, 0).unwrap());
        assert!(!satisfied(&Formula::not(phi), &tau, 0).unwrap());
    }

    #[test]
    fn eventually_takes_window_max() {
        let tau = traj(vec![vec![-1.0, 0.5, 3.0]]);
        assert_eq!(robustness(&parse("F[0,2](x0 >= 0)").unwrap(), &tau, 0).unwrap(), 3.0);
        assert_eq!(robustness(&parse("G[0,2](x0 >= 0)").unwrap(), &tau, 0).unwrap(), -1.0);
    }

    #[test]
    fn until_hand_case() {
        // t'=0: min(-5, 1) = -5; t'=1: min(4, min(1,2)) = 1; t'=2: min(10, min(1,2,-1)) = -1
        let tau = traj(vec![vec![1.0, 2.0, -1.0], vec![-5.0, 4.0, 10.0]]);
        let phi = parse("(x0 >= 0) U[0,2] (x1 >= 0)").unwrap();
        assert_eq!(robustness(&phi, &tau, 0).unwrap(), 1.0);
        assert!(satisfied(&phi, &tau, 0).unwrap());
    }

    #[test]
    fn window_clipping_uses_large_surrogates() {
        let tau = traj(vec![vec![1.0, 2.0, 3.0]]);
        let f = parse("F[5,6](x0 >= 0)").unwrap();
        let g = parse("G[5,6](x0 >= 0)").unwrap();
        assert_eq!(robustness(&f, &tau, 0).unwrap(), -LARGE);
        assert_eq!(robustness(&g, &tau, 0).unwrap(), LARGE);
        // partially clipped window keeps the valid part
        assert_eq!(robustness(&parse("G[1,10](x0 >= 0)").unwrap(), &tau, 0).unwrap(), 2.0);
        assert_eq!(robustness(&parse("F[0,10](x0 <= 0)").unwrap(), &tau, 1).unwrap(), -2.0);
    }

    #[test]
    fn errors() {
        let tau = traj(vec![vec![1.0, 2.0]]);
        assert!(matches!(
            robustness(&parse("x1 >= 0").unwrap(), &tau, 0),
            Err(Error::ChannelOutOfRange { channel: 1, channels: 1 })
        ));
        assert!(matches!(robustness(&parse("x0 >= 0").unwrap(), &tau, 2), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn sliding_matches_naive() {
        let s: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        for lo in 0..6 {
            for hi in lo..12 {
                let fast = sliding_extreme(&s, lo, hi, Extreme::Max);
                for t in 0..s.len() {
                    let naive = (t + lo..=(t + hi).min(s.len() - 1))
                        .map(|j| s[j])
                        .fold(-LARGE, f64::max);
                    assert_eq!(fast[t], naive, "lo={lo} hi={hi} t={t}");
                }
            }
        }
    }
}
