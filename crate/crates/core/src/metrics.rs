//! Quality measures for explanations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::satisfaction;
use crate::stl::{robustness_signal, Formula, Trajectory};

/// Percentage of `opposers` whose satisfaction of `phi` differs from the target's.
pub fn local_separability(phi: &Formula, target: &Trajectory, opposers: &[&Trajectory]) -> Result<f64> {
    if opposers.is_empty() {
        return Err(Error::InvalidParam("local separability needs opposing trajectories".into()));
    }
    let sat = robustness_signal(phi, target)?[0] >= 0.0;
    let differ = satisfaction(phi, opposers)?.into_iter().filter(|&s| s != sat).count();
    Ok(100.0 * differ as f64 / opposers.len() as f64)
}

/// Confusion counts of "satisfies `phi`" as a predictor of class `k`.
/// A missing formula predicts nothing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn of(phi: Option<&Formula>, k: usize, taus: &[&Trajectory]) -> Result<Confusion> {
        let sat = match phi {
            Some(p) => satisfaction(p, taus)?,
            None => vec![false; taus.len()],
        };
        let mut c = Confusion::default();
        for (t, s) in taus.iter().zip(sat) {
            let pos = t.label().ok_or_else(|| Error::Data(format!("trajectory {} has no label", t.id())))? == k;
            match (pos, s) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `(TP + TN) / total`, in percent.
    pub fn separability(&self) -> f64 {
        100.0 * (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    pub per_class: Vec<f64>,
    /// Pooled over classes: total correct over total decisions.
    pub micro: f64,
}

/// Global separability of one formula per class (index = class).
pub fn global_separability(explanations: &[Option<Formula>], taus: &[&Trajectory]) -> Result<Separability> {
    let conf: Vec<Confusion> =
        explanations.iter().enumerate().map(|(k, e)| Confusion::of(e.as_ref(), k, taus)).collect::<Result<_>>()?;
    let correct: usize = conf.iter().map(|c| c.tp + c.tn).sum();
    let total: usize = conf.iter().map(Confusion::total).sum();
    Ok(Separability {
        per_class: conf.iter().map(Confusion::separability).collect(),
        micro: 100.0 * correct as f64 / total.max(1) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Classes whose formula predicted no positives (precision taken as 0).
    pub no_positive_classes: Vec<usize>,
}

/// Macro-averaged precision, recall and F1 of the per-class formulae.
pub fn global_prf(explanations: &[Option<Formula>], taus: &[&Trajectory]) -> Result<Prf> {
    if explanations.is_empty() {
        return Err(Error::InvalidParam("no class explanations".into()));
    }
    let mut sums = (0.0, 0.0, 0.0);
    let mut no_positive_classes = Vec::new();
    for (k, e) in explanations.iter().enumerate() {
        let c = Confusion::of(e.as_ref(), k, taus)?;
        let p = if c.tp + c.fp == 0 {
            no_positive_classes.push(k);
            0.0
        } else {
            c.tp as f64 / (c.tp + c.fp) as f64
        };
        let r = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        sums = (sums.0 + p, sums.1 + r, sums.2 + f);
    }
    let n = explanations.len() as f64;
    Ok(Prf { precision: sums.0 / n, recall: sums.1 / n, f1: sums.2 / n, no_positive_classes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population mean and standard deviation; zero for an empty sample.
    pub fn of(xs: &[f64]) -> MeanStd {
        if xs.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readability {
    pub nodes: MeanStd,
    pub variables: MeanStd,
}

pub fn readability<'a, I: IntoIterator<Item = &'a Formula>>(formulas: I) -> Readability {
    let (nodes, vars): (Vec<f64>, Vec<f64>) =
        formulas.into_iter().map(|f| (f.node_count() as f64, f.variables().len() as f64)).unzip();
    Readability { nodes: MeanStd::of(&nodes), variables: MeanStd::of(&vars) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    fn t(v: f64, y: usize) -> Trajectory {
        Trajectory::from_channels(vec![vec![v]], Some(y), "t").unwrap()
    }

    #[test]
    fn separability_counts() {
        let data = [t(1.0, 0), t(-1.0, 0), t(2.0, 1), t(-3.0, 1)];
        let refs: Vec<&Trajectory> = data.iter().collect();
        let phi = parse("x0 >= 0").unwrap();
        let c = Confusion::of(Some(&phi), 0, &refs).unwrap();
        assert_eq!(c, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
        let s = global_separability(&[Some(phi.clone()), None], &refs).unwrap();
        assert_eq!(s.per_class, vec![50.0, 50.0]);
        assert_eq!(s.micro, 50.0);
        assert_eq!(local_separability(&phi, &data[0], &refs[2..]).unwrap(), 50.0);
    }

    #[test]
    fn prf_flags_empty_predictions() {
        let data = [t(1.0, 0), t(-1.0, 1)];
        let refs: Vec<&Trajectory> = data.iter().collect();
        let prf = global_prf(&[Some(parse("x0 >= 0").unwrap()), Some(parse("x0 >= 5").unwrap())], &refs).unwrap();
        assert_eq!(prf.no_positive_classes, vec![1]);
        assert_eq!((prf.precision, prf.recall, prf.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn readability_stats() {
        let fs = [parse("x0 >= 0").unwrap(), parse("(x0 >= 0 and x1 <= 2)").unwrap()];
        let r = readability(&fs);
        assert_eq!((r.nodes.mean, r.nodes.std), (2.0, 1.0));
        assert_eq!((r.variables.mean, r.variables.std), (1.5, 0.5));
    }
}
