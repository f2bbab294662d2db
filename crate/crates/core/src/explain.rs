//! Local and global explanations.
//!
//! Local: Integrated Gradients over the concept-class matrix `z`, per-class
//! relevance, concept selection, threshold re-centring and simplification
//! into a conjunction the explained trajectory satisfies.
//!
//! Global: a pool of local-explanation formulae for one class, a division
//! matrix against the other classes, and a set cover turned into a disjunction.

use std::collections::HashSet;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rewrite::{postprocess_separation, simplify_data_aware, simplify_logical};
use crate::stl::{robustness_signal, Formula, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    /// Fixed number of concepts; overrides `cumulative` when set.
    pub budget: Option<usize>,
    /// Fraction of total relevance the selected prefix must reach.
    pub cumulative: f64,
    /// Fraction of training trajectories whose satisfaction a local
    /// simplification may change.
    pub local_slack: f64,
    /// Global coverage level; 0 selects the greedy separability search.
    pub global_coverage: f64,
    pub ig_steps: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig { budget: None, cumulative: 0.8, local_slack: 0.0, global_coverage: 0.0, ig_steps: 64 }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == Some(0) {
            return Err(Error::InvalidParam("budget must be at least 1".into()));
        }
        if !(self.cumulative > 0.0 && self.cumulative <= 1.0) {
            return Err(Error::InvalidParam("cumulative threshold must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.local_slack) || !(0.0..1.0).contains(&self.global_coverage) {
            return Err(Error::InvalidParam("slack and coverage must lie in [0, 1)".into()));
        }
        if self.ig_steps < 8 {
            return Err(Error::InvalidParam("ig_steps must be at least 8".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    /// Min-max normalised attributions, `C x K`.
    pub values: Array2<f64>,
    pub raw: Array2<f64>,
    pub target_class: usize,
}

/// Midpoint-Riemann Integrated Gradients of the head's class-`k` probability
/// with respect to `z` (baseline zero). The path passes through softsign.
pub fn integrated_gradients(model: &Model, z: &Array2<f64>, k: usize, steps: usize) -> Result<AttributionMatrix> {
    let (c, kk) = z.dim();
    if k >= kk {
        return Err(Error::InvalidParam(format!("class {k} out of range for {kk} classes")));
    }
    if steps == 0 {
        return Err(Error::InvalidParam("IG needs at least one step".into()));
    }
    let flat: Vec<f64> = z.iter().copied().collect();
    let rows = Array2::from_shape_fn((steps, c * kk), |(s, j)| (s as f64 + 0.5) / steps as f64 * flat[j]);
    let (_, grads) = model.head_probs_and_grad(&rows, k)?;
    let mean = grads.mean_axis(ndarray::Axis(0)).expect("steps >= 1");
    let raw = Array2::from_shape_fn((c, kk), |(i, j)| z[[i, j]] * mean[i * kk + j]);
    Ok(AttributionMatrix { values: min_max(&raw), raw, target_class: k })
}

/// Maps min to 0 and max to 1; a constant matrix maps to 0.5 everywhere.
pub fn min_max(raw: &Array2<f64>) -> Array2<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        raw.mapv(|v| (v - lo) / (hi - lo))
    } else {
        raw.mapv(|_| 0.5)
    }
}

/// `|A[:, k] - mean of the other columns|`.
pub fn relevance(a: &Array2<f64>, k: usize) -> Result<Vec<f64>> {
    let kk = a.ncols();
    if kk < 2 {
        return Err(Error::InvalidParam("relevance needs at least two classes".into()));
    }
    if k >= kk {
        return Err(Error::InvalidParam(format!("class {k} out of range")));
    }
    Ok(a.rows()
        .into_iter()
        .map(|row| {
            let others = (row.sum() - row[k]) / (kk - 1) as f64;
            (row[k] - others).abs()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalSelection {
    /// Concept indices, most relevant first.
    pub indices: Vec<usize>,
    /// Relevance was zero everywhere; index 0 was returned as a placeholder.
    pub degenerate: bool,
}

/// Budget mode takes the `budget` most relevant concepts; cumulative mode the
/// shortest relevance-sorted prefix whose sum reaches `cumulative` of the total.
/// Ties go to the lower index.
pub fn select_local(r: &[f64], cfg: &ExplainConfig) -> Result<LocalSelection> {
    if r.is_empty() {
        return Err(Error::InvalidParam("empty relevance vector".into()));
    }
    let total: f64 = r.iter().sum();
    if total <= 0.0 {
        return Ok(LocalSelection { indices: vec![0], degenerate: true });
    }
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
    let n = match cfg.budget {
        Some(b) => b.min(r.len()),
        None => {
            let goal = cfg.cumulative * total;
            let mut acc = 0.0;
            let mut n = r.len();
            for (i, &j) in order.iter().enumerate() {
                acc += r[j];
                if acc >= goal {
                    n = i + 1;
                    break;
                }
            }
            n
        }
    };
    order.truncate(n.max(1));
    Ok(LocalSelection { indices: order, degenerate: false })
}

/// Training trajectories grouped by class, used as the reference population
/// for threshold re-centring, simplification and global explanations.
#[derive(Debug, Clone)]
pub struct Reference<'a> {
    pub all: Vec<&'a Trajectory>,
    pub by_class: Vec<Vec<&'a Trajectory>>,
}

impl<'a> Reference<'a> {
    pub fn new(train: &'a [Trajectory], n_classes: usize) -> Result<Reference<'a>> {
        let mut by_class = vec![Vec::new(); n_classes];
        for t in train {
            let y = t.label().ok_or_else(|| Error::Data(format!("reference trajectory {} has no label", t.id())))?;
            if y >= n_classes {
                return Err(Error::Data(format!("label {y} out of range")));
            }
            by_class[y].push(t);
        }
        Ok(Reference { all: train.iter().collect(), by_class })
    }

    pub fn others(&self, k: usize) -> Vec<&'a Trajectory> {
        self.by_class.iter().enumerate().filter(|(c, _)| *c != k).flat_map(|(_, v)| v.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalExplanation {
    pub trajectory_id: String,
    pub target_class: usize,
    pub concept_indices: Vec<usize>,
    /// Selected concepts (as stored in the model) with their relevance.
    pub selected: Vec<(Formula, f64)>,
    /// Conjunction of the selected concepts, before postprocessing.
    pub conjunction: Formula,
    pub postprocessed: Formula,
    pub degenerate: bool,
}

/// Satisfaction at time 0 of `phi` on each trajectory.
pub fn satisfaction(phi: &Formula, taus: &[&Trajectory]) -> Result<Vec<bool>> {
    taus.iter().map(|t| Ok(robustness_signal(phi, t)?[0] >= 0.0)).collect()
}

fn changed_fraction(a: &[bool], b: &[bool]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len() as f64
}

/// Explains why `tau` belongs to `target_class`.
pub fn explain_local(
    model: &Model,
    tau: &Trajectory,
    target_class: usize,
    reference: &Reference<'_>,
    cfg: &ExplainConfig,
) -> Result<LocalExplanation> {
    cfg.validate()?;
    let fwd = model.forward(tau)?;
    let attr = integrated_gradients(model, &fwd.z, target_class, cfg.ig_steps)?;
    let r = relevance(&attr.values, target_class)?;
    let sel = select_local(&r, cfg)?;
    let concepts = &model.state().concepts;
    let selected: Vec<(Formula, f64)> = sel.indices.iter().map(|&i| (concepts[i].clone(), r[i])).collect();
    let conjunction = Formula::conjunction(selected.iter().map(|(f, _)| f.clone())).expect("at least one concept");

    let shifted = postprocess_separation(
        &selected.iter().map(|(f, _)| f.clone()).collect::<Vec<_>>(),
        tau,
        target_class,
        &reference.by_class,
    )?;
    let postprocessed = simplify_conjunction(shifted, tau, reference, cfg.local_slack)?;
    Ok(LocalExplanation {
        trajectory_id: tau.id().to_string(),
        target_class,
        concept_indices: sel.indices,
        selected,
        conjunction,
        postprocessed,
        degenerate: sel.degenerate,
    })
}

/// Simplifies each conjunct, drops duplicates, then drops conjuncts (least
/// relevant first) while satisfaction over the reference changes on at most
/// `slack` of it. The target's satisfaction is never given up.
fn simplify_conjunction(
    conjuncts: Vec<Formula>,
    tau: &Trajectory,
    reference: &Reference<'_>,
    slack: f64,
) -> Result<Formula> {
    let mut pool: Vec<&Trajectory> = reference.all.clone();
    pool.push(tau);
    let mut parts: Vec<Formula> = Vec::new();
    for phi in conjuncts {
        let simple = simplify(&phi, &pool, 0.0)?;
        if !parts.contains(&simple) {
            parts.push(simple);
        }
    }
    let bits: Vec<Vec<bool>> = parts.iter().map(|p| satisfaction(p, &reference.all)).collect::<Result<_>>()?;
    let conj_bits = |keep: &[bool]| -> Vec<bool> {
        (0..reference.all.len()).map(|j| bits.iter().zip(keep).all(|(b, &k)| !k || b[j])).collect::<Vec<_>>()
    };
    let mut keep = vec![true; parts.len()];
    let original = conj_bits(&keep);
    for i in (0..parts.len()).rev() {
        if keep.iter().filter(|&&k| k).count() == 1 {
            break;
        }
        keep[i] = false;
        if changed_fraction(&original, &conj_bits(&keep)) > slack {
            keep[i] = true;
        }
    }
    let kept = parts.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p);
    let phi = Formula::conjunction(kept).expect("one conjunct is always kept");
    simplify(&phi, &pool, 0.0)
}

/// Logical, then data-aware, then logical simplification over `pool`; the
/// result is kept only if satisfaction changes on at most `slack` of the pool.
pub fn simplify(phi: &Formula, pool: &[&Trajectory], slack: f64) -> Result<Formula> {
    let before = satisfaction(phi, pool)?;
    let mut out = simplify_logical(phi);
    if !pool.is_empty() {
        out = simplify_logical(&simplify_data_aware(&out, pool));
    }
    if out.node_count() > phi.node_count() || changed_fraction(&before, &satisfaction(&out, pool)?) > slack {
        // the approximate rules can flip satisfaction; fall back to exact ones only
        let exact = simplify_logical(phi);
        if changed_fraction(&before, &satisfaction(&exact, pool)?) <= slack {
            return Ok(exact);
        }
        return Ok(phi.clone());
    }
    Ok(out)
}

/// `D[i][j] = 1` iff `rho(phi_j, class_k[i])` lies strictly outside the closed
/// `[min, max]` envelope of `rho(phi_j, .)` over `others`.
pub fn division_matrix(formulas: &[Formula], class_k: &[&Trajectory], others: &[&Trajectory]) -> Result<Array2<u8>> {
    if others.is_empty() {
        return Err(Error::InvalidParam("division matrix needs other-class trajectories".into()));
    }
    let cols: Vec<Vec<u8>> = formulas
        .par_iter()
        .map(|phi| {
            let rho = |t: &Trajectory| Ok(robustness_signal(phi, t)?[0]);
            let other: Vec<f64> = others.iter().map(|t| rho(t)).collect::<Result<_>>()?;
            let lo = other.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = other.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            class_k.iter().map(|t| rho(t).map(|r| u8::from(r < lo || r > hi))).collect::<Result<Vec<u8>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_fn((class_k.len(), formulas.len()), |(i, j)| cols[j][i]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cover {
    /// Selected column indices, ascending.
    pub columns: Vec<usize>,
    /// Rows no column covers.
    pub uncovered: usize,
}

impl Cover {
    pub fn cost(&self, costs: &[usize]) -> usize {
        self.columns.iter().map(|&j| costs[j]).sum()
    }
}

fn coverable_rows(d: &Array2<u8>) -> Vec<usize> {
    (0..d.nrows()).filter(|&i| d.row(i).iter().any(|&v| v == 1)).collect()
}

/// Minimum-cost cover of every coverable row by depth-first branch and bound.
pub fn exact_cover(d: &Array2<u8>, costs: &[usize]) -> Cover {
    let rows = coverable_rows(d);
    let uncovered = d.nrows() - rows.len();
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut chosen = Vec::new();
    branch(d, costs, &rows, &mut chosen, 0, &mut best);
    let mut columns = best.map(|b| b.1).unwrap_or_default();
    columns.sort_unstable();
    Cover { columns, uncovered }
}

fn branch(
    d: &Array2<u8>,
    costs: &[usize],
    rows: &[usize],
    chosen: &mut Vec<usize>,
    cost: usize,
    best: &mut Option<(usize, Vec<usize>)>,
) {
    if best.as_ref().is_some_and(|(b, _)| cost >= *b) {
        return;
    }
    let open = rows.iter().find(|&&i| !chosen.iter().any(|&j| d[[i, j]] == 1));
    let Some(&row) = open else {
        *best = Some((cost, chosen.clone()));
        return;
    };
    let mut options: Vec<usize> = (0..d.ncols()).filter(|&j| d[[row, j]] == 1).collect();
    options.sort_by_key(|&j| (costs[j], j));
    for j in options {
        chosen.push(j);
        branch(d, costs, rows, chosen, cost + costs[j], best);
        chosen.pop();
    }
}

/// Repeatedly picks the column with the most newly covered rows per unit cost.
pub fn greedy_cover(d: &Array2<u8>, costs: &[usize]) -> Cover {
    let rows = coverable_rows(d);
    let uncovered = d.nrows() - rows.len();
    let mut open: HashSet<usize> = rows.into_iter().collect();
    let mut columns = Vec::new();
    while !open.is_empty() {
        let mut pick: Option<(f64, usize)> = None;
        for j in 0..d.ncols() {
            let gain = open.iter().filter(|&&i| d[[i, j]] == 1).count();
            if gain == 0 {
                continue;
            }
            let score = gain as f64 / costs[j].max(1) as f64;
            if pick.is_none_or(|(s, _)| score > s) {
                pick = Some((score, j));
            }
        }
        let (_, j) = pick.expect("open rows are coverable");
        open.retain(|&i| d[[i, j]] == 0);
        columns.push(j);
    }
    columns.sort_unstable();
    Cover { columns, uncovered }
}

/// Cover used for `coverage > 0`: exact up to 20 columns, greedy beyond.
pub fn global_cover(d: &Array2<u8>, costs: &[usize]) -> Cover {
    if d.ncols() <= 20 {
        exact_cover(d, costs)
    } else {
        greedy_cover(d, costs)
    }
}

/// Per-class global separability `(TP + TN) / total` of a disjunction given as
/// per-formula satisfaction bits (`bits[j][i]` for formula `j`, trajectory `i`).
fn separability_of(selected: &[usize], bits: &[Vec<bool>], is_k: &[bool]) -> f64 {
    let n = is_k.len();
    let correct = (0..n)
        .filter(|&i| {
            let sat = selected.iter().any(|&j| bits[j][i]);
            sat == is_k[i]
        })
        .count();
    correct as f64 / n as f64
}

/// Adds, one at a time, the formula whose disjunction most improves class-`k`
/// separability on `taus`; stops when nothing improves it. Ties prefer lower
/// cost, then lower index.
pub fn greedy_separability(formulas: &[Formula], taus: &[&Trajectory], k: usize, costs: &[usize]) -> Result<Vec<usize>> {
    let bits: Vec<Vec<bool>> = formulas.par_iter().map(|phi| satisfaction(phi, taus)).collect::<Result<_>>()?;
    let is_k: Vec<bool> = taus.iter().map(|t| t.label() == Some(k)).collect();
    let mut selected: Vec<usize> = Vec::new();
    let mut current = separability_of(&selected, &bits, &is_k);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for j in 0..formulas.len() {
            if selected.contains(&j) {
                continue;
            }
            selected.push(j);
            let s = separability_of(&selected, &bits, &is_k);
            selected.pop();
            let better = match best {
                None => true,
                Some((bs, bc, _)) => s > bs || (s == bs && costs[j] < bc),
            };
            if better {
                best = Some((s, costs[j], j));
            }
        }
        match best {
            Some((s, _, j)) if s > current => {
                selected.push(j);
                current = s;
            }
            _ => break,
        }
    }
    selected.sort_unstable();
    Ok(selected)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalExplanation {
    pub class_index: usize,
    pub disjuncts: Vec<Formula>,
    /// `None` when nothing was selected.
    pub disjunction: Option<Formula>,
    /// Class-`k` rows that no candidate distinguishes.
    pub uncovered: usize,
    pub pool_size: usize,
}

impl GlobalExplanation {
    pub fn is_empty(&self) -> bool {
        self.disjunction.is_none()
    }
}

/// Candidate formulae for class `k`: every conjunct of every class-`k`
/// training trajectory's local explanation, plus each whole conjunction.
pub fn candidate_pool(locals: &[LocalExplanation]) -> Vec<Formula> {
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    for e in locals {
        let parts = e.postprocessed.conjuncts();
        let mut push = |f: &Formula| {
            if seen.insert(f.clone()) {
                pool.push(f.clone());
            }
        };
        for p in &parts {
            push(p);
        }
        if parts.len() > 1 {
            push(&e.postprocessed);
        }
    }
    pool
}

/// Local explanations of every class-`k` training trajectory w.r.t. its true label.
pub fn class_locals(model: &Model, reference: &Reference<'_>, k: usize, cfg: &ExplainConfig) -> Result<Vec<LocalExplanation>> {
    reference.by_class[k].par_iter().map(|t| explain_local(model, t, k, reference, cfg)).collect()
}

/// Global explanation for class `k` built from training data only.
pub fn explain_global(
    model: &Model,
    reference: &Reference<'_>,
    k: usize,
    cfg: &ExplainConfig,
    locals: Option<&[LocalExplanation]>,
) -> Result<GlobalExplanation> {
    cfg.validate()?;
    if k >= reference.by_class.len() || reference.by_class[k].is_empty() {
        return Err(Error::InvalidParam(format!("class {k} has no training trajectories")));
    }
    let computed;
    let locals = match locals {
        Some(l) => l,
        None => {
            computed = class_locals(model, reference, k, cfg)?;
            &computed
        }
    };
    let pool = candidate_pool(locals);
    let costs: Vec<usize> = pool.iter().map(Formula::node_count).collect();
    let class_k = &reference.by_class[k];
    let others = reference.others(k);
    let d = division_matrix(&pool, class_k, &others)?;
    let uncovered = coverable_rows(&d).len();
    let uncovered = class_k.len() - uncovered;
    let columns = if cfg.global_coverage > 0.0 {
        global_cover(&d, &costs).columns
    } else {
        greedy_separability(&pool, &reference.all, k, &costs)?
    };
    let disjuncts = absorb(columns.iter().map(|&j| pool[j].clone()).collect());
    let disjunction = match Formula::disjunction(disjuncts.iter().cloned()) {
        Some(f) => Some(simplify(&f, &reference.all, 0.0)?),
        None => None,
    };
    Ok(GlobalExplanation { class_index: k, disjuncts, disjunction, uncovered, pool_size: pool.len() })
}

/// Drops every disjunct whose conjuncts include all conjuncts of another
/// kept disjunct, since `p or (p and q)` is `p`.
fn absorb(disjuncts: Vec<Formula>) -> Vec<Formula> {
    let sets: Vec<HashSet<&Formula>> = disjuncts.iter().map(|d| d.conjuncts().into_iter().collect()).collect();
    let absorbed = |i: usize| {
        (0..sets.len()).any(|j| j != i && sets[j].is_subset(&sets[i]) && (sets[j].len() < sets[i].len() || j < i))
    };
    let keep: Vec<bool> = (0..sets.len()).map(|i| !absorbed(i)).collect();
    drop(sets);
    disjuncts.into_iter().zip(keep).filter_map(|(d, k)| k.then_some(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    #[test]
    fn absorption_across_disjuncts() {
        let f = |s: &str| parse(s).unwrap();
        let out = absorb(vec![f("x0 >= 1"), f("x1 <= 0"), f("(x1 <= 0) and (x0 >= 1)"), f("(x0 >= 1) and (x0 <= 3)")]);
        assert_eq!(out, vec![f("x0 >= 1"), f("x1 <= 0")]);
        let alone = vec![f("(x0 >= 1) and (x0 <= 3)"), f("x1 <= 0")];
        assert_eq!(absorb(alone.clone()), alone);
    }

    fn matrix(rows: &[&[u8]]) -> Array2<u8> {
        Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
    }

    #[test]
    fn cumulative_and_budget_selection() {
        let cfg = ExplainConfig::default();
        assert_eq!(select_local(&[0.5, 0.3, 0.2], &cfg).unwrap().indices, vec![0, 1]);
        let b1 = ExplainConfig { budget: Some(1), ..cfg };
        assert_eq!(select_local(&[0.1, 0.7, 0.2], &b1).unwrap().indices, vec![1]);
        let ties = select_local(&[0.2, 0.4, 0.4], &b1).unwrap();
        assert_eq!(ties.indices, vec![1]);
        let zero = select_local(&[0.0, 0.0], &cfg).unwrap();
        assert_eq!(zero, LocalSelection { indices: vec![0], degenerate: true });
    }

    #[test]
    fn relevance_cases() {
        let a = Array2::from_shape_vec((2, 2), vec![0.9, 0.1, 0.3, 0.3]).unwrap();
        let r = relevance(&a, 0).unwrap();
        assert!((r[0] - 0.8).abs() < 1e-15 && r[1] == 0.0);
        let a3 = Array2::from_shape_vec((3, 3), vec![1.0, 0.0, 0.5, 0.2, 0.4, 0.6, 0.0, 0.0, 1.0]).unwrap();
        let r3 = relevance(&a3, 2).unwrap();
        let expect = [(0.5 - 0.5f64).abs(), (0.6 - 0.3f64).abs(), (1.0 - 0.0f64).abs()];
        for (x, y) in r3.iter().zip(expect) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(relevance(&Array2::zeros((2, 1)), 0).is_err());
    }

    #[test]
    fn normalisation() {
        let m = min_max(&Array2::from_shape_vec((1, 3), vec![-2.0, 0.0, 2.0]).unwrap());
        assert_eq!(m.row(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert!(min_max(&Array2::from_elem((2, 2), 3.0)).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn cover_cases() {
        let one = matrix(&[&[1, 0], &[1, 1], &[1, 0]]);
        assert_eq!(exact_cover(&one, &[1, 1]).columns, vec![0]);
        let halves = matrix(&[&[1, 0], &[1, 0], &[0, 1], &[0, 1]]);
        assert_eq!(exact_cover(&halves, &[2, 2]).columns, vec![0, 1]);
        assert_eq!(greedy_cover(&halves, &[2, 2]).columns, vec![0, 1]);
        let gap = matrix(&[&[1, 0], &[0, 0]]);
        let c = exact_cover(&gap, &[1, 1]);
        assert_eq!((c.columns, c.uncovered), (vec![0], 1));
    }

    #[test]
    fn division_matrix_envelope() {
        let t = |v: f64| Trajectory::from_channels(vec![vec![v]], None, "t").unwrap();
        let k = [t(5.0), t(1.0), t(-4.0), t(2.0)];
        let o = [t(0.0), t(2.0)];
        let kr: Vec<&Trajectory> = k.iter().collect();
        let or: Vec<&Trajectory> = o.iter().collect();
        let d = division_matrix(&[parse("x0 >= 0").unwrap(), Formula::True, parse("x0 <= 1").unwrap()], &kr, &or).unwrap();
        // envelope of x0 >= 0 is [0, 2]; of x0 <= 1 is [-1, 1]
        assert_eq!(d.column(0).to_vec(), vec![1, 0, 1, 0]);
        assert_eq!(d.column(1).to_vec(), vec![0, 0, 0, 0]);
        assert_eq!(d.column(2).to_vec(), vec![1, 0, 1, 0]);
    }
}
