//! Signal Temporal Logic over uniformly sampled, discrete-time trajectories.
//!
//! Formulae are built from affine atoms (`x_i >= c`, `x_i <= c`), Boolean
//! connectives and the bounded temporal operators `F`, `G` and `U`. Interval
//! bounds are inclusive integer step offsets. The concrete syntax accepted by
//! [`parse`] is exactly what [`Formula`]'s `Display` implementation prints:
//!
//! ```text
//! F[0,10]((x0 >= 25) and G[0,60](x0 >= 22))
//! ```

mod parse;
mod robustness;
mod sample;

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use parse::{parse, ParseError};
pub use robustness::{robustness, robustness_signal, satisfied, LARGE};
pub use sample::FormulaSampler;

/// Inclusive window `[lo, hi]` of integer time-step offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    lo: usize,
    hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if hi < lo {
            return Err(Error::InvalidParam(format!("interval [{lo},{hi}] has hi < lo")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    /// Minkowski sum, used when flattening nested `F`/`G` operators.
    pub fn plus(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo + other.lo, hi: self.hi + other.hi }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    /// `x_i >= c`, robustness `x_i - c`.
    Ge,
    /// `x_i <= c`, robustness `c - x_i`.
    Le,
}

impl Relation {
    pub fn flip(self) -> Relation {
        match self {
            Relation::Ge => Relation::Le,
            Relation::Le => Relation::Ge,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Ge => ">=",
            Relation::Le => "<=",
        }
    }
}

/// Affine atomic predicate over a single channel.
#[derive(Debug, Clone, Copy)]
pub struct Atom {
    pub var: usize,
    pub rel: Relation,
    pub threshold: f64,
}

impl Atom {
    pub fn new(var: usize, rel: Relation, threshold: f64) -> Self {
        // -0.0 and 0.0 must compare and hash identically
        Atom { var, rel, threshold: threshold + 0.0 }
    }

    pub fn ge(var: usize, threshold: f64) -> Self {
        Atom::new(var, Relation::Ge, threshold)
    }

    pub fn le(var: usize, threshold: f64) -> Self {
        Atom::new(var, Relation::Le, threshold)
    }

    #[inline]
    pub fn eval(&self, value: f64) -> f64 {
        match self.rel {
            Relation::Ge => value - self.threshold,
            Relation::Le => self.threshold - value,
        }
    }

    /// The atom whose robustness is exactly the negation of this one.
    pub fn negated(&self) -> Atom {
        Atom::new(self.var, self.rel.flip(), self.threshold)
    }

    fn key(&self) -> (usize, Relation, u64) {
        (self.var, self.rel, (self.threshold + 0.0).to_bits())
    }
}

impl PartialEq for Atom {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Atom {}

impl Hash for Atom {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{} {} {}", self.var, self.rel.symbol(), self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Globally(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(atom: Atom) -> Formula {
        Formula::Atom(atom)
    }

    /// `Not(True)`, the only spelling of falsity in the grammar.
    pub fn falsum() -> Formula {
        Formula::not(Formula::True)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn eventually(iv: Interval, f: Formula) -> Formula {
        Formula::Eventually(iv, Box::new(f))
    }

    pub fn globally(iv: Interval, f: Formula) -> Formula {
        Formula::Globally(iv, Box::new(f))
    }

    pub fn until(iv: Interval, a: Formula, b: Formula) -> Formula {
        Formula::Until(iv, Box::new(a), Box::new(b))
    }

    /// Left fold with `and`. `None` for an empty input.
    pub fn conjunction<I: IntoIterator<Item = Formula>>(parts: I) -> Option<Formula> {
        parts.into_iter().reduce(Formula::and)
    }

    /// Left fold with `or`. `None` for an empty input.
    pub fn disjunction<I: IntoIterator<Item = Formula>>(parts: I) -> Option<Formula> {
        parts.into_iter().reduce(Formula::or)
    }

    /// Number of AST nodes, atoms and `True` included.
    pub fn node_count(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 1,
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Globally(_, f) => {
                1 + f.node_count()
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                1 + a.node_count() + b.node_count()
            }
        }
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        let mut vars = BTreeSet::new();
        self.for_each_atom(&mut |a| {
            vars.insert(a.var);
        });
        vars
    }

    /// Furthest step offset (relative to the evaluation time) the formula reads.
    pub fn temporal_horizon(&self) -> usize {
        match self {
            Formula::True | Formula::Atom(_) => 0,
            Formula::Not(f) => f.temporal_horizon(),
            Formula::And(a, b) | Formula::Or(a, b) => a.temporal_horizon().max(b.temporal_horizon()),
            Formula::Eventually(iv, f) | Formula::Globally(iv, f) => iv.hi + f.temporal_horizon(),
            Formula::Until(iv, a, b) => iv.hi + a.temporal_horizon().max(b.temporal_horizon()),
        }
    }

    pub fn contains_true(&self) -> bool {
        match self {
            Formula::True => true,
            Formula::Atom(_) => false,
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Globally(_, f) => f.contains_true(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.contains_true() || b.contains_true()
            }
        }
    }

    pub fn for_each_atom(&self, visit: &mut impl FnMut(&Atom)) {
        match self {
            Formula::True => {}
            Formula::Atom(a) => visit(a),
            Formula::Not(f) | Formula::Eventually(_, f) | Formula::Globally(_, f) => f.for_each_atom(visit),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.for_each_atom(visit);
                b.for_each_atom(visit);
            }
        }
    }

    /// Rebuilds the tree with every atom replaced by `f(atom, negation_parity)`,
    /// where the parity is `true` under an odd number of enclosing negations.
    pub fn map_atoms(&self, f: &mut impl FnMut(&Atom, bool) -> Atom) -> Formula {
        self.map_atoms_inner(f, false)
    }

    fn map_atoms_inner(&self, f: &mut impl FnMut(&Atom, bool) -> Atom, odd: bool) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::Atom(a) => Formula::Atom(f(a, odd)),
            Formula::Not(x) => Formula::not(x.map_atoms_inner(f, !odd)),
            Formula::And(a, b) => Formula::and(a.map_atoms_inner(f, odd), b.map_atoms_inner(f, odd)),
            Formula::Or(a, b) => Formula::or(a.map_atoms_inner(f, odd), b.map_atoms_inner(f, odd)),
            Formula::Eventually(iv, x) => Formula::eventually(*iv, x.map_atoms_inner(f, odd)),
            Formula::Globally(iv, x) => Formula::globally(*iv, x.map_atoms_inner(f, odd)),
            Formula::Until(iv, a, b) => {
                Formula::until(*iv, a.map_atoms_inner(f, odd), b.map_atoms_inner(f, odd))
            }
        }
    }

    pub fn map_intervals(&self, f: &mut impl FnMut(Interval) -> Interval) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::Atom(a) => Formula::Atom(*a),
            Formula::Not(x) => Formula::not(x.map_intervals(f)),
            Formula::And(a, b) => Formula::and(a.map_intervals(f), b.map_intervals(f)),
            Formula::Or(a, b) => Formula::or(a.map_intervals(f), b.map_intervals(f)),
            Formula::Eventually(iv, x) => Formula::eventually(f(*iv), x.map_intervals(f)),
            Formula::Globally(iv, x) => Formula::globally(f(*iv), x.map_intervals(f)),
            Formula::Until(iv, a, b) => Formula::until(f(*iv), a.map_intervals(f), b.map_intervals(f)),
        }
    }

    /// Splits a left- or right-nested chain of `and` into its conjuncts.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
            match f {
                Formula::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Rescales every interval bound from a trace length of `from_len` to `to_len`,
    /// rounding half up and keeping `lo <= hi`. Thresholds are untouched.
    pub fn rescale_time(&self, from_len: usize, to_len: usize) -> Formula {
        assert!(from_len >= 1 && to_len >= 1, "lengths must be positive");
        if from_len == to_len {
            return self.clone();
        }
        let scale = |b: usize| (2 * b * to_len + from_len) / (2 * from_len);
        self.map_intervals(&mut |iv| {
            let lo = scale(iv.lo);
            let hi = scale(iv.hi).max(lo);
            Interval { lo, hi }
        })
    }

    fn is_unary_or_leaf_true(&self) -> bool {
        matches!(
            self,
            Formula::True | Formula::Not(_) | Formula::Eventually(..) | Formula::Globally(..)
        )
    }
}

/// Canonical printer. Operands of binary operators are parenthesised unless they are
/// unary nodes or `True`; operands of unary operators are always parenthesised.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(x: &Formula, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if x.is_unary_or_leaf_true() {
                write!(f, "{x}")
            } else {
                write!(f, "({x})")
            }
        }
        match self {
            Formula::True => f.write_str("True"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(x) => write!(f, "not ({x})"),
            Formula::Eventually(iv, x) => write!(f, "F{iv}({x})"),
            Formula::Globally(iv, x) => write!(f, "G{iv}({x})"),
            Formula::And(a, b) => {
                operand(a, f)?;
                f.write_str(" and ")?;
                operand(b, f)
            }
            Formula::Or(a, b) => {
                operand(a, f)?;
                f.write_str(" or ")?;
                operand(b, f)
            }
            Formula::Until(iv, a, b) => {
                operand(a, f)?;
                write!(f, " U{iv} ")?;
                operand(b, f)
            }
        }
    }
}

impl FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

/// A multivariate, uniformly sampled time series (`channels x length`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    values: Array2<f64>,
    label: Option<usize>,
    id: String,
}

impl Trajectory {
    pub fn new(values: Array2<f64>, label: Option<usize>, id: impl Into<String>) -> Result<Self> {
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::Data("trajectory must have at least one channel and one step".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("trajectory contains non-finite values".into()));
        }
        let values = if values.is_standard_layout() { values } else { values.as_standard_layout().to_owned() };
        Ok(Trajectory { values, label, id: id.into() })
    }

    /// Builds a trajectory from per-channel vectors of equal length.
    pub fn from_channels(channels: Vec<Vec<f64>>, label: Option<usize>, id: impl Into<String>) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Data("channels have different lengths".into()));
        }
        let d = channels.len();
        let flat: Vec<f64> = channels.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((d, len), flat).map_err(|e| Error::Shape(e.to_string()))?;
        Trajectory::new(values, label, id)
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn channel(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: usize, hi: usize) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn counts_nodes_vars_and_horizon() {
        let atom = Formula::atom(Atom::ge(0, 0.0));
        assert_eq!(atom.node_count(), 1);
        assert_eq!(atom.variables().into_iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(atom.temporal_horizon(), 0);

        let nested = Formula::globally(iv(0, 20), Formula::globally(iv(5, 10), Formula::atom(Atom::le(0, 0.3))));
        assert_eq!(nested.node_count(), 3);
        assert_eq!(nested.temporal_horizon(), 30);

        let room = parse("F[0,10]((x0 >= 25) and G[0,60](x0 >= 22))").unwrap();
        assert_eq!(room.node_count(), 5);
        assert_eq!(room.variables().len(), 1);
        assert_eq!(room.temporal_horizon(), 70);
    }

    #[test]
    fn rescale_time_rounds_half_up() {
        let f = parse("G[10,20](x0 >= 0)").unwrap();
        assert_eq!(f.rescale_time(100, 50), parse("G[5,10](x0 >= 0)").unwrap());
        assert_eq!(f.rescale_time(100, 100), f);
        let g = parse("F[3,7](x0 <= 1)").unwrap();
        assert_eq!(g.rescale_time(100, 30), parse("F[1,2](x0 <= 1)").unwrap());
        // 5 * 1/2 = 2.5 rounds up
        assert_eq!(parse("F[5,5](x0 <= 1)").unwrap().rescale_time(2, 1), parse("F[3,3](x0 <= 1)").unwrap());
    }

    #[test]
    fn negative_zero_threshold_is_zero() {
        assert_eq!(Atom::ge(0, -0.0), Atom::ge(0, 0.0));
        assert_eq!(Formula::atom(Atom::ge(0, -0.0)).to_string(), "x0 >= 0");
    }

    #[test]
    fn interval_rejects_inverted_bounds() {
        assert!(Interval::new(3, 2).is_err());
        assert_eq!(iv(1, 2).plus(&iv(3, 4)), iv(4, 6));
    }

    #[test]
    fn trajectory_validation() {
        assert!(Trajectory::from_channels(vec![vec![1.0, 2.0], vec![1.0]], None, "t").is_err());
        assert!(Trajectory::from_channels(vec![vec![f64::NAN]], None, "t").is_err());
        let t = Trajectory::from_channels(vec![vec![1.0, 2.0, 3.0], vec![0.0; 3]], Some(1), "t").unwrap();
        assert_eq!((t.channels(), t.len(), t.label()), (2, 3, Some(1)));
    }

    #[test]
    fn conjunct_split() {
        let f = parse("((x0 >= 1) and (x1 <= 2)) and F[0,1](x0 >= 0)").unwrap();
        assert_eq!(f.conjuncts().len(), 3);
    }
}
