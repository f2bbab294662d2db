//! Formula postprocessing: logical simplification, data-aware constant folding,
//! and robustness-separation threshold shifts.

use std::fmt;

use crate::error::{Error, Result};
use crate::stl::{robustness, Atom, Formula, Interval, Relation, Trajectory};

/// Logical rewrite rules. `exact()` marks the rules that preserve robustness
/// exactly; the others only preserve Boolean satisfaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    DoubleNegation,
    NegatedAtom,
    NegatedEventually,
    NegatedGlobally,
    DeMorganAnd,
    DeMorganOr,
    Idempotence,
    Absorption,
    Redundancy,
    GloballyFlatten,
    EventuallyFlatten,
    UntilSame,
}

impl Rule {
    pub const ALL: [Rule; 12] = [
        Rule::DoubleNegation,
        Rule::NegatedAtom,
        Rule::NegatedEventually,
        Rule::NegatedGlobally,
        Rule::DeMorganAnd,
        Rule::DeMorganOr,
        Rule::Idempotence,
        Rule::Absorption,
        Rule::Redundancy,
        Rule::GloballyFlatten,
        Rule::EventuallyFlatten,
        Rule::UntilSame,
    ];

    /// `p U p` only differs from its rewrite when its window runs past the trace end.
    pub fn exact(self) -> bool {
        !matches!(self, Rule::UntilSame)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::DoubleNegation => "not not p -> p",
            Rule::NegatedAtom => "not (x <= c) -> x > c",
            Rule::NegatedEventually => "not F_I p -> G_I not p",
            Rule::NegatedGlobally => "not G_I p -> F_I not p",
            Rule::DeMorganAnd => "not (p and q) -> not p or not q",
            Rule::DeMorganOr => "not (p or q) -> not p and not q",
            Rule::Idempotence => "p op p -> p",
            Rule::Absorption => "p and (p or q) -> p",
            Rule::Redundancy => "p and (p and q) -> p and q",
            Rule::GloballyFlatten => "G_I G_J p -> G_{I+J} p",
            Rule::EventuallyFlatten => "F_I F_J p -> F_{I+J} p",
            Rule::UntilSame => "p U_[a,b] p -> G_[0,a] p (p when a = 0)",
        };
        f.write_str(s)
    }
}

/// Applies the logical rules to a fixpoint. Node count never increases:
/// negations are only pushed inwards when the fully pushed subterm is no larger.
pub fn simplify_logical(phi: &Formula) -> Formula {
    simplify_logical_traced(phi).0
}

/// As [`simplify_logical`], also returning the rules that fired, in order.
pub fn simplify_logical_traced(phi: &Formula) -> (Formula, Vec<Rule>) {
    let mut trace = Vec::new();
    let mut current = phi.clone();
    for _ in 0..64 {
        let next = simp(&current, &mut trace);
        if next == current {
            break;
        }
        current = next;
    }
    if current.node_count() > phi.node_count() {
        return (phi.clone(), Vec::new());
    }
    (current, trace)
}

fn simp(f: &Formula, trace: &mut Vec<Rule>) -> Formula {
    match f {
        Formula::True | Formula::Atom(_) => f.clone(),
        Formula::Not(x) => negate(simp(x, trace), trace),
        Formula::And(a, b) => conj(simp(a, trace), simp(b, trace), trace),
        Formula::Or(a, b) => disj(simp(a, trace), simp(b, trace), trace),
        Formula::Eventually(iv, x) => match simp(x, trace) {
            Formula::Eventually(inner, y) => {
                trace.push(Rule::EventuallyFlatten);
                Formula::Eventually(iv.plus(&inner), y)
            }
            y => Formula::eventually(*iv, y),
        },
        Formula::Globally(iv, x) => match simp(x, trace) {
            Formula::Globally(inner, y) => {
                trace.push(Rule::GloballyFlatten);
                Formula::Globally(iv.plus(&inner), y)
            }
            y => Formula::globally(*iv, y),
        },
        Formula::Until(iv, a, b) => {
            let (a, b) = (simp(a, trace), simp(b, trace));
            if a == b {
                trace.push(Rule::UntilSame);
                // the earliest witness t+lo needs `a` on all of [t, t+lo]
                match iv.lo() {
                    0 => a,
                    lo => Formula::globally(Interval::new(0, lo).expect("lo >= 0"), a),
                }
            } else {
                Formula::until(*iv, a, b)
            }
        }
    }
}

/// Negation of an already simplified formula.
fn negate(x: Formula, trace: &mut Vec<Rule>) -> Formula {
    let plain_nodes = x.node_count() + 1;
    let mut local = Vec::new();
    let pushed = match &x {
        Formula::Not(y) => {
            trace.push(Rule::DoubleNegation);
            return (**y).clone();
        }
        Formula::Atom(a) => {
            trace.push(Rule::NegatedAtom);
            return Formula::Atom(a.negated());
        }
        Formula::Eventually(iv, y) => {
            local.push(Rule::NegatedEventually);
            Formula::globally(*iv, negate((**y).clone(), &mut local))
        }
        Formula::Globally(iv, y) => {
            local.push(Rule::NegatedGlobally);
            Formula::eventually(*iv, negate((**y).clone(), &mut local))
        }
        Formula::And(a, b) => {
            local.push(Rule::DeMorganAnd);
            let (na, nb) = (negate((**a).clone(), &mut local), negate((**b).clone(), &mut local));
            disj(na, nb, &mut local)
        }
        Formula::Or(a, b) => {
            local.push(Rule::DeMorganOr);
            let (na, nb) = (negate((**a).clone(), &mut local), negate((**b).clone(), &mut local));
            conj(na, nb, &mut local)
        }
        Formula::True | Formula::Until(..) => return Formula::not(x),
    };
    if pushed.node_count() <= plain_nodes {
        trace.extend(local);
        pushed
    } else {
        Formula::not(x)
    }
}

fn conj(a: Formula, b: Formula, trace: &mut Vec<Rule>) -> Formula {
    if a == b {
        trace.push(Rule::Idempotence);
        return a;
    }
    if let Formula::Or(p, q) = &b {
        if **p == a || **q == a {
            trace.push(Rule::Absorption);
            return a;
        }
    }
    if let Formula::Or(p, q) = &a {
        if **p == b || **q == b {
            trace.push(Rule::Absorption);
            return b;
        }
    }
    if let Formula::And(p, q) = &b {
        if **p == a || **q == a {
            trace.push(Rule::Redundancy);
            return b;
        }
    }
    if let Formula::And(p, q) = &a {
        if **p == b || **q == b {
            trace.push(Rule::Redundancy);
            return a;
        }
    }
    Formula::and(a, b)
}

fn disj(a: Formula, b: Formula, trace: &mut Vec<Rule>) -> Formula {
    if a == b {
        trace.push(Rule::Idempotence);
        return a;
    }
    if let Formula::And(p, q) = &b {
        if **p == a || **q == a {
            trace.push(Rule::Absorption);
            return a;
        }
    }
    if let Formula::And(p, q) = &a {
        if **p == b || **q == b {
            trace.push(Rule::Absorption);
            return b;
        }
    }
    if let Formula::Or(p, q) = &b {
        if **p == a || **q == a {
            trace.push(Rule::Redundancy);
            return b;
        }
    }
    if let Formula::Or(p, q) = &a {
        if **p == b || **q == b {
            trace.push(Rule::Redundancy);
            return a;
        }
    }
    Formula::or(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    AlwaysTrue,
    AlwaysFalse,
    Undefined,
}

/// Per-atom, per-time-step status of atomic predicates over a trajectory set.
/// An atom is always-true at `t` when its robustness is strictly positive on
/// every trajectory, always-false when strictly negative on every trajectory.
#[derive(Debug, Clone)]
pub struct TruthMap {
    len: usize,
    entries: Vec<(Atom, Vec<Truth>)>,
}

impl TruthMap {
    pub fn build(phi: &Formula, taus: &[&Trajectory]) -> TruthMap {
        let len = taus.iter().map(|t| t.len()).min().unwrap_or(0);
        let mut entries: Vec<(Atom, Vec<Truth>)> = Vec::new();
        phi.for_each_atom(&mut |atom| {
            if entries.iter().any(|(a, _)| a == atom) {
                return;
            }
            let status = (0..len)
                .map(|t| {
                    let mut pos = true;
                    let mut neg = true;
                    for tau in taus {
                        let r = match tau.channels() > atom.var {
                            true => atom.eval(tau.values()[[atom.var, t]]),
                            false => 0.0,
                        };
                        pos &= r > 0.0;
                        neg &= r < 0.0;
                    }
                    match (pos, neg) {
                        (true, _) => Truth::AlwaysTrue,
                        (_, true) => Truth::AlwaysFalse,
                        _ => Truth::Undefined,
                    }
                })
                .collect();
            entries.push((*atom, status));
        });
        TruthMap { len, entries }
    }

    pub fn status(&self, atom: &Atom, t: usize) -> Truth {
        self.entries
            .iter()
            .find(|(a, _)| a == atom)
            .and_then(|(_, s)| s.get(t).copied())
            .unwrap_or(Truth::Undefined)
    }

    /// Uniform status of `atom` over the inclusive time range, if any.
    fn uniform(&self, atom: &Atom, lo: usize, hi: usize) -> Truth {
        if lo > hi || hi >= self.len {
            return Truth::Undefined;
        }
        let first = self.status(atom, lo);
        if first != Truth::Undefined && (lo..=hi).all(|t| self.status(atom, t) == first) {
            first
        } else {
            Truth::Undefined
        }
    }
}

enum Folded {
    Top,
    Bot,
    Phi(Formula),
}

impl Folded {
    fn into_formula(self) -> Formula {
        match self {
            Folded::Top => Formula::True,
            Folded::Bot => Formula::falsum(),
            Folded::Phi(f) => f,
        }
    }
}

/// Replaces atoms that are uniformly decided over `taus` (at every time step
/// they are read) by constants and folds the constants away. Boolean
/// satisfaction at `t = 0` is preserved on every trajectory in `taus`.
pub fn simplify_data_aware(phi: &Formula, taus: &[&Trajectory]) -> Formula {
    if taus.is_empty() {
        return phi.clone();
    }
    let map = TruthMap::build(phi, taus);
    let out = fold(phi, 0, 0, &map).into_formula();
    if out.node_count() <= phi.node_count() {
        out
    } else {
        phi.clone()
    }
}

fn fold(f: &Formula, lo: usize, hi: usize, map: &TruthMap) -> Folded {
    let last = map.len.saturating_sub(1);
    let clip = |t: usize| t.min(last);
    match f {
        Formula::True => Folded::Top,
        Formula::Atom(a) => match map.uniform(a, lo, hi) {
            Truth::AlwaysTrue => Folded::Top,
            Truth::AlwaysFalse => Folded::Bot,
            Truth::Undefined => Folded::Phi(f.clone()),
        },
        Formula::Not(x) => match fold(x, lo, hi, map) {
            Folded::Top => Folded::Bot,
            Folded::Bot => Folded::Top,
            Folded::Phi(y) => Folded::Phi(Formula::not(y)),
        },
        Formula::And(a, b) => match (fold(a, lo, hi, map), fold(b, lo, hi, map)) {
            (Folded::Bot, _) | (_, Folded::Bot) => Folded::Bot,
            (Folded::Top, other) | (other, Folded::Top) => other,
            (Folded::Phi(x), Folded::Phi(y)) => Folded::Phi(Formula::and(x, y)),
        },
        Formula::Or(a, b) => match (fold(a, lo, hi, map), fold(b, lo, hi, map)) {
            (Folded::Top, _) | (_, Folded::Top) => Folded::Top,
            (Folded::Bot, other) | (other, Folded::Bot) => other,
            (Folded::Phi(x), Folded::Phi(y)) => Folded::Phi(Formula::or(x, y)),
        },
        Formula::Eventually(iv, x) | Formula::Globally(iv, x) => {
            let eventually = matches!(f, Formula::Eventually(..));
            // every evaluation time sees a non-empty window
            let full = hi + iv.lo() <= last;
            if lo + iv.lo() > last {
                return Folded::Phi(f.clone());
            }
            match (fold(x, clip(lo + iv.lo()), clip(hi + iv.hi()), map), eventually) {
                (Folded::Bot, true) => Folded::Bot,
                (Folded::Top, false) => Folded::Top,
                (Folded::Top, true) if full => Folded::Top,
                (Folded::Bot, false) if full => Folded::Bot,
                (folded, true) => Folded::Phi(Formula::eventually(*iv, folded.into_formula())),
                (folded, false) => Folded::Phi(Formula::globally(*iv, folded.into_formula())),
            }
        }
        Formula::Until(iv, a, b) => {
            if lo + iv.lo() > last {
                return Folded::Phi(f.clone());
            }
            let left = fold(a, lo, clip(hi + iv.hi()), map);
            let right = fold(b, clip(lo + iv.lo()), clip(hi + iv.hi()), map);
            match (left, right) {
                (_, Folded::Bot) | (Folded::Bot, _) => Folded::Bot,
                (Folded::Top, Folded::Top) if hi + iv.lo() <= last => Folded::Top,
                (Folded::Top, right) => Folded::Phi(Formula::eventually(*iv, right.into_formula())),
                (left, Folded::Top) if iv.lo() == 0 => left,
                (left, Folded::Top) if hi + iv.lo() <= last => Folded::Phi(Formula::globally(
                    Interval::new(0, iv.lo()).expect("0 <= lo"),
                    left.into_formula(),
                )),
                (left, right) => Folded::Phi(Formula::until(*iv, left.into_formula(), right.into_formula())),
            }
        }
    }
}

/// Shifts atomic thresholds so that robustness drops by exactly `delta`
/// (`rho(result) = rho(phi) - delta` at every time step for `True`-free
/// formulae). Atoms under an odd number of negations move the other way.
pub fn shift_thresholds(phi: &Formula, delta: f64) -> Formula {
    phi.map_atoms(&mut |a, odd| {
        let d = if odd { -delta } else { delta };
        match a.rel {
            Relation::Ge => Atom::new(a.var, a.rel, a.threshold + d),
            Relation::Le => Atom::new(a.var, a.rel, a.threshold - d),
        }
    })
}

/// Re-centres each formula between the target and its closest opposing
/// trajectory, negating it first when most opposers lie above the target, and
/// negating the result if the target would end up violating it.
///
/// `trajs_by_class[k]` holds the reference trajectories of class `k`; the
/// target's own class is skipped. Every returned formula satisfies the target.
pub fn postprocess_separation(
    phis: &[Formula],
    target: &Trajectory,
    target_class: usize,
    trajs_by_class: &[Vec<&Trajectory>],
) -> Result<Vec<Formula>> {
    let opposing: Vec<&Trajectory> = trajs_by_class
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != target_class)
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    if opposing.is_empty() {
        return Err(Error::InvalidParam("separation postprocessing needs opposing trajectories".into()));
    }
    phis.iter()
        .map(|phi| {
            let r_target = robustness(phi, target, 0)?;
            let r_opp = opposing.iter().map(|tau| robustness(phi, tau, 0)).collect::<Result<Vec<_>>>()?;
            separate(phi, target, r_target, &r_opp)
        })
        .collect()
}

fn separate(phi: &Formula, target: &Trajectory, r_target: f64, r_opp: &[f64]) -> Result<Formula> {
    let below = r_opp.iter().filter(|&&r| r < r_target).count();
    let above = r_opp.iter().filter(|&&r| r > r_target).count();
    let (mut phi, r_target, r_opp): (Formula, f64, Vec<f64>) = if above > below {
        (Formula::not(phi.clone()), -r_target, r_opp.iter().map(|r| -r).collect())
    } else {
        (phi.clone(), r_target, r_opp.to_vec())
    };
    // with nothing strictly below, the target itself is the boundary
    let closest = r_opp.iter().copied().filter(|&r| r < r_target).fold(f64::NEG_INFINITY, f64::max);
    let closest = if closest.is_finite() { closest } else { r_target };
    let s = (r_target + closest) / 2.0;
    phi = shift_thresholds(&phi, s);
    if robustness(&phi, target, 0)? < 0.0 {
        phi = Formula::not(phi);
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse, robustness_signal};

    fn p(s: &str) -> Formula {
        parse(s).unwrap()
    }

    fn traj(values: Vec<f64>) -> Trajectory {
        Trajectory::from_channels(vec![values], None, "t").unwrap()
    }

    #[test]
    fn worked_example() {
        let (out, trace) = simplify_logical_traced(&p("not (G[0,20](G[5,10](x0 <= 0.3)))"));
        assert_eq!(out.to_string(), "F[5,30](x0 >= 0.3)");
        assert_eq!(trace, vec![Rule::GloballyFlatten, Rule::NegatedGlobally, Rule::NegatedAtom]);
    }

    #[test]
    fn table_rules() {
        let cases = [
            ("not (not (x0 >= 1))", "x0 >= 1"),
            ("(x0 >= 1) and ((x0 >= 1) or (x1 <= 0))", "x0 >= 1"),
            ("(x0 >= 1) or ((x0 >= 1) and (x1 <= 0))", "x0 >= 1"),
            ("(x0 >= 1) and ((x0 >= 1) and (x1 <= 0))", "(x0 >= 1) and (x1 <= 0)"),
            ("(x0 >= 1) or (x0 >= 1)", "x0 >= 1"),
            ("F[1,2](F[3,4](x0 >= 1))", "F[4,6](x0 >= 1)"),
            ("(x0 >= 1) U[0,3] (x0 >= 1)", "x0 >= 1"),
            ("(x0 >= 1) U[2,3] (x0 >= 1)", "G[0,2](x0 >= 1)"),
            ("not ((x0 >= 1) and (x1 <= 2))", "(x0 <= 1) or (x1 >= 2)"),
            ("not (F[0,3](x0 >= 1))", "G[0,3](x0 <= 1)"),
        ];
        for (input, expected) in cases {
            assert_eq!(simplify_logical(&p(input)), p(expected), "{input}");
        }
    }

    #[test]
    fn negation_kept_when_pushing_grows_the_formula() {
        let f = p("not (((x0 >= 1) U[0,2] (x1 >= 0)) and ((x1 >= 1) U[0,2] (x0 >= 0)))");
        let out = simplify_logical(&f);
        assert!(out.node_count() <= f.node_count());
        assert_eq!(out, f);
    }

    #[test]
    fn data_aware_rules() {
        let taus = [traj(vec![5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]), traj(vec![4.0, 1.0, 3.0, 2.0, 4.0, 6.0, 0.5, 9.0])];
        let refs: Vec<&Trajectory> = taus.iter().collect();
        // x0 >= 0 holds everywhere, so it is True
        assert_eq!(simplify_data_aware(&p("(x0 >= 0) and F[0,2](x0 >= 5)"), &refs), p("F[0,2](x0 >= 5)"));
        assert_eq!(simplify_data_aware(&p("True U[2,5] (x0 >= 5)"), &refs), p("F[2,5](x0 >= 5)"));
        assert_eq!(simplify_data_aware(&p("(x0 >= 5) U[3,7] (x0 >= 0)"), &refs), p("G[0,3](x0 >= 5)"));
        assert_eq!(simplify_data_aware(&p("(x0 >= 5) U[0,7] (x0 >= 0)"), &refs), p("x0 >= 5"));
        assert_eq!(simplify_data_aware(&p("(x0 >= 5) or (x0 <= -1)"), &refs), p("x0 >= 5"));
        assert_eq!(simplify_data_aware(&p("(x0 >= 5) and (x0 <= -1)"), &refs), Formula::falsum());
    }

    #[test]
    fn data_aware_preserves_satisfaction() {
        let taus = [traj(vec![5.0, 6.0, 7.0, 8.0]), traj(vec![4.0, 1.0, 3.0, 2.0])];
        let refs: Vec<&Trajectory> = taus.iter().collect();
        for s in ["F[0,3]((x0 >= 0) and (x0 <= 4.5))", "(x0 <= 100) U[1,2] (x0 >= 6.5)", "G[0,1](x0 >= 3.5)"] {
            let f = p(s);
            let g = simplify_data_aware(&f, &refs);
            for tau in &taus {
                assert_eq!(robustness_signal(&f, tau).unwrap()[0] >= 0.0, robustness_signal(&g, tau).unwrap()[0] >= 0.0);
            }
        }
    }

    #[test]
    fn threshold_shift() {
        let tau = traj(vec![0.2, 3.0, -1.0]);
        let f = p("x0 >= 1");
        assert_eq!(shift_thresholds(&f, 0.5), p("x0 >= 1.5"));
        let g = p("not (x0 >= 1)");
        assert_eq!(shift_thresholds(&g, 0.5), p("not (x0 >= 0.5)"));
        let r = robustness(&g, &tau, 0).unwrap();
        assert!((robustness(&shift_thresholds(&g, 0.5), &tau, 0).unwrap() - (r - 0.5)).abs() < 1e-12);
        assert_eq!(shift_thresholds(&f, 0.0), f);
    }

    #[test]
    fn separation_hand_case() {
        // target rho = 2, opposers rho = {-1, 0}
        let phi = p("x0 >= 0");
        let target = traj(vec![2.0]);
        let opp = [traj(vec![-1.0]), traj(vec![0.0])];
        let by_class = vec![vec![&opp[0], &opp[1]], vec![]];
        let out = postprocess_separation(&[phi], &target, 1, &by_class).unwrap();
        assert_eq!(out[0], p("x0 >= 1"));
        assert_eq!(robustness(&out[0], &target, 0).unwrap(), 1.0);
        assert_eq!(robustness(&out[0], &opp[1], 0).unwrap(), -1.0);
    }

    #[test]
    fn separation_negates_when_opposers_lie_above() {
        let phi = p("x0 >= 0");
        let target = traj(vec![-3.0]);
        let opp = [traj(vec![1.0]), traj(vec![2.0])];
        let by_class = vec![vec![], vec![&opp[0], &opp[1]]];
        let out = postprocess_separation(&[phi], &target, 0, &by_class).unwrap();
        assert!(matches!(out[0], Formula::Not(_)));
        assert!(robustness(&out[0], &target, 0).unwrap() >= 0.0);
        for o in &opp {
            assert!(robustness(&out[0], o, 0).unwrap() < 0.0);
        }
        assert!(postprocess_separation(&[p("x0 >= 0")], &target, 0, &[vec![&target]]).is_err());
    }
}
