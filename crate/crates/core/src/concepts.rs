//! Concept vocabulary: template enumeration, grid instantiation, and
//! incremental diversity-based selection on robustness signatures.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stl::{robustness_signal, Atom, Formula, Interval, Relation, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateConfig {
    pub max_nodes: usize,
    pub vars_per_formula: usize,
    /// Build generic single-variable formulae and copy them onto every channel.
    pub duplicate: bool,
    pub channels: usize,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig { max_nodes: 5, vars_per_formula: 1, duplicate: true, channels: 1 }
    }
}

impl TemplateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_nodes == 0 {
            return Err(Error::InvalidParam("max_nodes must be at least 1".into()));
        }
        if !(1..=3).contains(&self.vars_per_formula) {
            return Err(Error::InvalidParam("vars_per_formula must be 1, 2 or 3".into()));
        }
        if self.channels == 0 {
            return Err(Error::InvalidParam("channels must be at least 1".into()));
        }
        if self.duplicate && self.vars_per_formula != 1 {
            return Err(Error::InvalidParam("duplication needs one variable per formula".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub similarity_threshold: f64,
    pub per_variable_count: usize,
    pub min_total: usize,
    pub batch_size: usize,
    /// Upper bound on candidates drawn before giving up.
    pub max_candidates: usize,
    /// Trajectories used for signatures are subsampled to at most this many.
    pub max_signature_trajectories: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            similarity_threshold: 0.99,
            per_variable_count: 500,
            min_total: 1000,
            batch_size: 256,
            max_candidates: 200_000,
            max_signature_trajectories: 500,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(Error::InvalidParam("similarity threshold must lie in (0, 1]".into()));
        }
        if self.per_variable_count == 0
            || self.min_total == 0
            || self.batch_size == 0
            || self.max_signature_trajectories == 0
        {
            return Err(Error::InvalidParam("selection counts must be at least 1".into()));
        }
        Ok(())
    }

    /// Concepts wanted for `channels` channels.
    pub fn target(&self, channels: usize) -> usize {
        (self.per_variable_count * channels).max(self.min_total)
    }
}

/// An ordered list of distinct formulae plus the trajectory length their
/// intervals were chosen for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptSet {
    formulas: Vec<Formula>,
    source_length: usize,
}

impl ConceptSet {
    pub fn new(formulas: Vec<Formula>, source_length: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &formulas {
            if !seen.insert(f) {
                return Err(Error::InvalidParam(format!("duplicate concept {f}")));
            }
        }
        if source_length == 0 {
            return Err(Error::InvalidParam("source_length must be at least 1".into()));
        }
        Ok(ConceptSet { formulas, source_length })
    }

    pub fn formulas(&self) -> &[Formula] {
        &self.formulas
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    pub fn source_length(&self) -> usize {
        self.source_length
    }

    /// Largest channel index referenced, plus one.
    pub fn channels_used(&self) -> usize {
        self.formulas.iter().flat_map(|f| f.variables()).max().map_or(0, |v| v + 1)
    }

    /// Rescales every interval to a new trajectory length. Formulae that
    /// collapse onto an earlier one are dropped.
    pub fn rescaled(&self, to_len: usize) -> ConceptSet {
        if to_len == self.source_length {
            return self.clone();
        }
        let mut seen = HashSet::new();
        let formulas = self
            .formulas
            .iter()
            .map(|f| f.rescale_time(self.source_length, to_len))
            .filter(|f| seen.insert(f.clone()))
            .collect();
        ConceptSet { formulas, source_length: to_len }
    }
}

impl fmt::Display for ConceptSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "source_length={}", self.source_length)?;
        for phi in &self.formulas {
            writeln!(f, "{phi}")?;
        }
        Ok(())
    }
}

impl FromStr for ConceptSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Data("empty concept file".into()))?;
        let source_length = header
            .strip_prefix("source_length=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Data(format!("bad concept header {header:?}")))?;
        let formulas = lines.map(|l| Ok(crate::stl::parse(l)?)).collect::<Result<Vec<_>>>()?;
        ConceptSet::new(formulas, source_length)
    }
}

/// A formula shape whose thresholds and intervals are still free. Atoms
/// reference variable slots `0..N`, bound to channels at instantiation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Template {
    Atom { slot: usize, rel: Relation },
    Not(Box<Template>),
    And(Box<Template>, Box<Template>),
    Or(Box<Template>, Box<Template>),
    Eventually(Box<Template>),
    Globally(Box<Template>),
    Until(Box<Template>, Box<Template>),
}

impl Template {
    pub fn node_count(&self) -> usize {
        match self {
            Template::Atom { .. } => 1,
            Template::Not(a) | Template::Eventually(a) | Template::Globally(a) => 1 + a.node_count(),
            Template::And(a, b) | Template::Or(a, b) | Template::Until(a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Free thresholds (one per atom).
    pub fn threshold_count(&self) -> usize {
        match self {
            Template::Atom { .. } => 1,
            Template::Not(a) | Template::Eventually(a) | Template::Globally(a) => a.threshold_count(),
            Template::And(a, b) | Template::Or(a, b) | Template::Until(a, b) => a.threshold_count() + b.threshold_count(),
        }
    }

    /// Free intervals (one per temporal operator).
    pub fn interval_count(&self) -> usize {
        match self {
            Template::Atom { .. } => 0,
            Template::Not(a) => a.interval_count(),
            Template::Eventually(a) | Template::Globally(a) => 1 + a.interval_count(),
            Template::And(a, b) | Template::Or(a, b) => a.interval_count() + b.interval_count(),
            Template::Until(a, b) => 1 + a.interval_count() + b.interval_count(),
        }
    }

    pub fn max_slot(&self) -> usize {
        match self {
            Template::Atom { slot, .. } => *slot,
            Template::Not(a) | Template::Eventually(a) | Template::Globally(a) => a.max_slot(),
            Template::And(a, b) | Template::Or(a, b) | Template::Until(a, b) => a.max_slot().max(b.max_slot()),
        }
    }

    /// Fills the template left to right: atoms take thresholds from
    /// `threshold(channel)`, temporal operators take `interval()`.
    pub fn fill(
        &self,
        channels: &[usize],
        threshold: &mut impl FnMut(usize) -> f64,
        interval: &mut impl FnMut() -> Interval,
    ) -> Formula {
        match self {
            Template::Atom { slot, rel } => {
                let var = channels[*slot];
                Formula::atom(Atom::new(var, *rel, threshold(var)))
            }
            Template::Not(a) => Formula::not(a.fill(channels, threshold, interval)),
            Template::Eventually(a) => {
                let iv = interval();
                Formula::eventually(iv, a.fill(channels, threshold, interval))
            }
            Template::Globally(a) => {
                let iv = interval();
                Formula::globally(iv, a.fill(channels, threshold, interval))
            }
            Template::And(a, b) => {
                let l = a.fill(channels, threshold, interval);
                Formula::and(l, b.fill(channels, threshold, interval))
            }
            Template::Or(a, b) => {
                let l = a.fill(channels, threshold, interval);
                Formula::or(l, b.fill(channels, threshold, interval))
            }
            Template::Until(a, b) => {
                let iv = interval();
                let l = a.fill(channels, threshold, interval);
                Formula::until(iv, l, b.fill(channels, threshold, interval))
            }
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Template::Atom { slot, rel: Relation::Ge } => write!(f, "x{slot} >= c"),
            Template::Atom { slot, rel: Relation::Le } => write!(f, "x{slot} <= c"),
            Template::Not(a) => write!(f, "not ({a})"),
            Template::And(a, b) => write!(f, "({a}) and ({b})"),
            Template::Or(a, b) => write!(f, "({a}) or ({b})"),
            Template::Eventually(a) => write!(f, "F[a,b]({a})"),
            Template::Globally(a) => write!(f, "G[a,b]({a})"),
            Template::Until(a, b) => write!(f, "({a}) U[a,b] ({b})"),
        }
    }
}

/// All templates with `1..=max_nodes` nodes, grouped by increasing node count.
/// Binary operators take every ordered split of the remaining nodes.
pub fn enumerate_templates(cfg: &TemplateConfig) -> Vec<Template> {
    let n_slots = if cfg.duplicate { 1 } else { cfg.vars_per_formula.max(1) };
    let mut by_nodes: Vec<Vec<Template>> = vec![Vec::new(); cfg.max_nodes.max(1) + 1];
    for slot in 0..n_slots {
        for rel in [Relation::Ge, Relation::Le] {
            by_nodes[1].push(Template::Atom { slot, rel });
        }
    }
    for m in 2..=cfg.max_nodes {
        let mut level = Vec::new();
        for t in &by_nodes[m - 1] {
            level.push(Template::Eventually(Box::new(t.clone())));
            level.push(Template::Globally(Box::new(t.clone())));
            level.push(Template::Not(Box::new(t.clone())));
        }
        for l in 1..m.saturating_sub(1) {
            let r = m - 1 - l;
            for a in &by_nodes[l] {
                for b in &by_nodes[r] {
                    level.push(Template::And(Box::new(a.clone()), Box::new(b.clone())));
                    level.push(Template::Or(Box::new(a.clone()), Box::new(b.clone())));
                    level.push(Template::Until(Box::new(a.clone()), Box::new(b.clone())));
                }
            }
        }
        let mut seen = HashSet::new();
        level.retain(|t| seen.insert(t.clone()));
        by_nodes[m] = level;
    }
    by_nodes.into_iter().flatten().collect()
}

/// Parameter grids: thresholds per channel and a shared interval list.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub thresholds: Vec<Vec<f64>>,
    pub intervals: Vec<Interval>,
}

impl ParamGrid {
    /// Deciles (10%..90%) of each channel's values and the short/medium/long
    /// window grid. With `pooled`, every channel shares the deciles of all
    /// channels together.
    pub fn from_data(taus: &[&Trajectory], pooled: bool) -> Result<ParamGrid> {
        let first = taus.first().ok_or_else(|| Error::InvalidParam("grid needs trajectories".into()))?;
        let (d, len) = (first.channels(), first.len());
        let per_channel: Vec<Vec<f64>> =
            (0..d).map(|c| taus.iter().flat_map(|t| t.channel(c).to_vec()).collect()).collect();
        let thresholds = if pooled {
            let all: Vec<f64> = per_channel.concat();
            vec![deciles(all); d]
        } else {
            per_channel.into_iter().map(deciles).collect()
        };
        Ok(ParamGrid { thresholds, intervals: interval_grid(len) })
    }
}

fn deciles(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = (1..=9).map(|i| quantile(&values, i as f64 / 10.0)).collect();
    out.dedup();
    out
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Windows starting at `0`, `L/4`, `L/2` with widths `L/10`, `L/5`, `L/2`,
/// rounded and clamped to the trajectory.
pub fn interval_grid(len: usize) -> Vec<Interval> {
    let last = len.saturating_sub(1);
    let l = len as f64;
    let mut out: Vec<Interval> = Vec::new();
    for lo in [0.0, l / 4.0, l / 2.0] {
        for w in [l / 10.0, l / 5.0, l / 2.0] {
            let a = (lo.round() as usize).min(last);
            let b = ((lo + w).round() as usize).clamp(a, last);
            let iv = Interval::new(a, b).expect("clamped to a <= b");
            if !out.contains(&iv) {
                out.push(iv);
            }
        }
    }
    out
}

/// Every Cartesian instantiation of `template` over the grid, with variable
/// slots bound to `channels`.
pub fn instantiate(template: &Template, channels: &[usize], grid: &ParamGrid) -> Vec<Formula> {
    let thresholds: Vec<&Vec<f64>> = atom_channels(template, channels).iter().map(|&c| &grid.thresholds[c]).collect();
    let n_iv = template.interval_count();
    let mut out = Vec::new();
    let mut t_idx = vec![0usize; thresholds.len()];
    let mut i_idx = vec![0usize; n_iv];
    if thresholds.iter().any(|g| g.is_empty()) || (n_iv > 0 && grid.intervals.is_empty()) {
        return out;
    }
    loop {
        let (mut ti, mut ii) = (0, 0);
        out.push(template.fill(
            channels,
            &mut |_| {
                ti += 1;
                thresholds[ti - 1][t_idx[ti - 1]]
            },
            &mut || {
                ii += 1;
                grid.intervals[i_idx[ii - 1]]
            },
        ));
        // odometer over (thresholds, intervals)
        let mut carried = true;
        for (k, idx) in t_idx.iter_mut().enumerate() {
            *idx += 1;
            if *idx < thresholds[k].len() {
                carried = false;
                break;
            }
            *idx = 0;
        }
        if carried {
            for idx in i_idx.iter_mut() {
                *idx += 1;
                if *idx < grid.intervals.len() {
                    carried = false;
                    break;
                }
                *idx = 0;
            }
        }
        if carried {
            return out;
        }
    }
}

fn atom_channels(t: &Template, channels: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    fn walk(t: &Template, channels: &[usize], out: &mut Vec<usize>) {
        match t {
            Template::Atom { slot, .. } => out.push(channels[*slot]),
            Template::Not(a) | Template::Eventually(a) | Template::Globally(a) => walk(a, channels, out),
            Template::And(a, b) | Template::Or(a, b) | Template::Until(a, b) => {
                walk(a, channels, out);
                walk(b, channels, out);
            }
        }
    }
    walk(t, channels, &mut out);
    out
}

/// Random, duplicate-free stream of instantiated templates: node count
/// uniform, then a template of that size uniform, then grid parameters
/// uniform. Formulae whose horizon reaches past the trajectory are skipped.
pub struct CandidateStream {
    by_nodes: Vec<Vec<Template>>,
    grid: ParamGrid,
    n_channels: usize,
    len: usize,
    rng: ChaCha8Rng,
    seen: HashSet<Formula>,
    remaining: usize,
}

impl CandidateStream {
    /// `n_channels` is the number of channels variable slots may bind to
    /// (1 for generic formulae).
    pub fn new(templates: &[Template], grid: ParamGrid, n_channels: usize, len: usize, seed: u64, limit: usize) -> Self {
        let max = templates.iter().map(Template::node_count).max().unwrap_or(0);
        let mut by_nodes = vec![Vec::new(); max + 1];
        for t in templates {
            if t.max_slot() < n_channels {
                by_nodes[t.node_count()].push(t.clone());
            }
        }
        by_nodes.retain(|v| !v.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        CandidateStream { by_nodes, grid, n_channels, len, rng, seen: HashSet::new(), remaining: limit }
    }

    fn draw(&mut self) -> Formula {
        let level = self.by_nodes.choose(&mut self.rng).expect("non-empty levels");
        let template = level.choose(&mut self.rng).expect("non-empty level").clone();
        let slots = template.max_slot() + 1;
        let mut channels: Vec<usize> = Vec::with_capacity(slots);
        while channels.len() < slots {
            let c = self.rng.random_range(0..self.n_channels);
            if !channels.contains(&c) || slots > self.n_channels {
                channels.push(c);
            }
        }
        let rng = &mut self.rng;
        let grid = &self.grid;
        let mut thresholds = Vec::new();
        for _ in 0..template.threshold_count() {
            thresholds.push(rng.random::<f64>());
        }
        let mut intervals = Vec::new();
        for _ in 0..template.interval_count() {
            intervals.push(*grid.intervals.choose(rng).expect("non-empty interval grid"));
        }
        let (mut ti, mut ii) = (0, 0);
        template.fill(
            &channels,
            &mut |c| {
                let g = &grid.thresholds[c];
                ti += 1;
                g[((thresholds[ti - 1] * g.len() as f64) as usize).min(g.len() - 1)]
            },
            &mut || {
                ii += 1;
                intervals[ii - 1]
            },
        )
    }
}

impl Iterator for CandidateStream {
    type Item = Formula;

    fn next(&mut self) -> Option<Formula> {
        if self.by_nodes.is_empty() || self.grid.intervals.is_empty() {
            return None;
        }
        // a long run of rejects means the space is (nearly) used up
        let mut misses = 0;
        while self.remaining > 0 && misses < 10_000 {
            self.remaining -= 1;
            let phi = self.draw();
            if phi.temporal_horizon() >= self.len || !self.seen.insert(phi.clone()) {
                misses += 1;
                continue;
            }
            return Some(phi);
        }
        None
    }
}

/// Result of [`select_concepts`].
#[derive(Debug, Clone)]
pub struct Selection {
    pub formulas: Vec<Formula>,
    /// The stream ran dry before the target was reached.
    pub exhausted: bool,
    pub candidates_seen: usize,
}

/// Robustness signature of `phi` over `taus`; in generic mode the formula is
/// copied onto every channel and the per-channel signatures concatenated.
pub fn selection_signature(phi: &Formula, taus: &[&Trajectory], generic_channels: Option<usize>) -> Result<Vec<f64>> {
    let copies = match generic_channels {
        Some(d) => duplicate_across_variables(std::slice::from_ref(phi), d)?,
        None => vec![phi.clone()],
    };
    let mut out = Vec::with_capacity(copies.len() * taus.len());
    for f in &copies {
        for tau in taus {
            out.push(robustness_signal(f, tau)?[0]);
        }
    }
    Ok(out)
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        v.iter_mut().for_each(|x| *x /= n);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; a zero vector has similarity 0 to everything.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(&normalized(a.to_vec()), &normalized(b.to_vec()))
}

/// Greedy diversity filter over a candidate stream.
///
/// Candidates are processed in batches. Within a batch they are ordered by
/// node count (stream order breaks ties); a candidate whose signature is at
/// least `t`-similar to an earlier one in the same batch is dropped, so only
/// the smallest of a similar group competes. A surviving candidate is kept iff
/// its similarity to every kept concept is below `t`.
pub fn select_concepts(
    candidates: impl Iterator<Item = Formula>,
    taus: &[&Trajectory],
    target: usize,
    sel: &SelectionConfig,
    generic_channels: Option<usize>,
) -> Result<Selection> {
    sel.validate()?;
    if taus.is_empty() {
        return Err(Error::InvalidParam("concept selection needs trajectories".into()));
    }
    let t = sel.similarity_threshold;
    let mut kept: Vec<Formula> = Vec::new();
    let mut kept_sigs: Vec<Vec<f64>> = Vec::new();
    let mut seen = 0usize;
    let mut candidates = candidates.peekable();
    while kept.len() < target && candidates.peek().is_some() {
        let batch: Vec<Formula> = candidates.by_ref().take(sel.batch_size).collect();
        seen += batch.len();
        let sigs: Vec<Vec<f64>> = batch
            .par_iter()
            .map(|phi| selection_signature(phi, taus, generic_channels).map(normalized))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.sort_by_key(|&i| (batch[i].node_count(), i));
        let mut considered: Vec<usize> = Vec::new();
        for i in order {
            if kept.len() >= target {
                break;
            }
            let shadowed = considered.iter().any(|&j| dot(&sigs[i], &sigs[j]) >= t);
            considered.push(i);
            if shadowed {
                continue;
            }
            let similar = kept_sigs.par_iter().any(|k| dot(&sigs[i], k) >= t);
            if !similar {
                kept.push(batch[i].clone());
                kept_sigs.push(sigs[i].clone());
            }
        }
    }
    let exhausted = kept.len() < target;
    if exhausted {
        warn!("candidate stream exhausted: kept {} of {} concepts", kept.len(), target);
    }
    Ok(Selection { formulas: kept, exhausted, candidates_seen: seen })
}

/// Copies each single-variable formula onto channels `0..d`.
pub fn duplicate_across_variables(generic: &[Formula], d: usize) -> Result<Vec<Formula>> {
    let mut out = Vec::with_capacity(generic.len() * d);
    for phi in generic {
        if phi.variables().len() > 1 {
            return Err(Error::InvalidParam(format!("{phi} uses more than one variable")));
        }
        for c in 0..d {
            out.push(phi.map_atoms(&mut |a, _| Atom::new(c, a.rel, a.threshold)));
        }
    }
    Ok(out)
}

/// Outcome of [`generate_concepts`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub concepts: ConceptSet,
    pub exhausted: bool,
    pub candidates_seen: usize,
}

/// Full pipeline: grids from `train`, random template stream, diversity
/// selection on (a seeded subsample of) `train`, and duplication if enabled.
pub fn generate_concepts(train: &[Trajectory], tcfg: &TemplateConfig, sel: &SelectionConfig) -> Result<Generated> {
    tcfg.validate()?;
    sel.validate()?;
    let first = train.first().ok_or_else(|| Error::InvalidParam("no training trajectories".into()))?;
    let (d, len) = (first.channels(), first.len());
    if d != tcfg.channels {
        return Err(Error::Shape(format!("data has {d} channels, template config says {}", tcfg.channels)));
    }
    let taus = subsample(train, sel.max_signature_trajectories, sel.seed);
    let grid = ParamGrid::from_data(&taus, tcfg.duplicate)?;
    let templates = enumerate_templates(tcfg);
    let target = sel.target(d);
    let (n_channels, generic, wanted) = match tcfg.duplicate {
        true => (1, Some(d), target.div_ceil(d)),
        false => (d, None, target),
    };
    let stream = CandidateStream::new(&templates, grid, n_channels, len, sel.seed, sel.max_candidates);
    let selection = select_concepts(stream, &taus, wanted, sel, generic)?;
    let formulas = match tcfg.duplicate {
        true => duplicate_across_variables(&selection.formulas, d)?,
        false => selection.formulas,
    };
    Ok(Generated {
        concepts: ConceptSet::new(formulas, len)?,
        exhausted: selection.exhausted,
        candidates_seen: selection.candidates_seen,
    })
}

/// Uniform seeded subsample of at most `cap` trajectories, in original order.
pub fn subsample(taus: &[Trajectory], cap: usize, seed: u64) -> Vec<&Trajectory> {
    if taus.len() <= cap {
        return taus.iter().collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut idx = rand::seq::index::sample(&mut rng, taus.len(), cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| &taus[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::parse;

    fn cfg(m: usize) -> TemplateConfig {
        TemplateConfig { max_nodes: m, ..Default::default() }
    }

    #[test]
    fn template_counts() {
        let counts: Vec<usize> = (1..=5).map(|m| enumerate_templates(&cfg(m)).len()).collect();
        assert_eq!(counts, vec![2, 8, 38, 200, 1154]);
        let m2: Vec<String> = enumerate_templates(&cfg(2)).iter().map(ToString::to_string).collect();
        assert!(m2.contains(&"F[a,b](x0 >= c)".to_string()));
        assert!(m2.contains(&"not (x0 <= c)".to_string()));
    }

    #[test]
    fn instantiation_is_cartesian() {
        let grid = ParamGrid {
            thresholds: vec![vec![0.0, 1.0, 2.0]],
            intervals: vec![Interval::new(0, 5).unwrap(), Interval::new(5, 10).unwrap()],
        };
        let atom = Template::Atom { slot: 0, rel: Relation::Ge };
        assert_eq!(instantiate(&atom, &[0], &grid).len(), 3);
        let f = Template::Eventually(Box::new(atom.clone()));
        let one = ParamGrid { thresholds: vec![vec![0.0]], ..grid.clone() };
        let out = instantiate(&f, &[0], &one);
        assert_eq!(out, vec![parse("F[0,5](x0 >= 0)").unwrap(), parse("F[5,10](x0 >= 0)").unwrap()]);
        let and = Template::And(Box::new(atom.clone()), Box::new(atom));
        assert_eq!(instantiate(&and, &[0], &grid).len(), 9);
    }

    #[test]
    fn duplication() {
        let out = duplicate_across_variables(&[parse("x0 >= 3").unwrap()], 4).unwrap();
        let printed: Vec<String> = out.iter().map(ToString::to_string).collect();
        assert_eq!(printed, vec!["x0 >= 3", "x1 >= 3", "x2 >= 3", "x3 >= 3"]);
        let id = duplicate_across_variables(&[parse("F[0,2](x0 <= 1)").unwrap()], 1).unwrap();
        assert_eq!(id, vec![parse("F[0,2](x0 <= 1)").unwrap()]);
        assert!(duplicate_across_variables(&[parse("(x0 >= 1) and (x1 >= 1)").unwrap()], 2).is_err());
    }

    #[test]
    fn interval_grid_for_100_steps() {
        let g: Vec<String> = interval_grid(100).iter().map(ToString::to_string).collect();
        assert_eq!(g, ["[0,10]", "[0,20]", "[0,50]", "[25,35]", "[25,45]", "[25,75]", "[50,60]", "[50,70]", "[50,99]"]);
    }

    #[test]
    fn duplicates_rejected_and_negations_kept() {
        let taus: Vec<Trajectory> = (0..6)
            .map(|i| Trajectory::from_channels(vec![vec![i as f64 - 2.5, 1.0]], None, "t").unwrap())
            .collect();
        let refs: Vec<&Trajectory> = taus.iter().collect();
        let phi = parse("x0 >= 0.3").unwrap();
        let cands = vec![phi.clone(), Formula::not(phi.clone())];
        let sel = SelectionConfig { similarity_threshold: 1.0, batch_size: 1, ..Default::default() };
        let out = select_concepts(cands.clone().into_iter(), &refs, 10, &sel, None).unwrap();
        assert_eq!(out.formulas, cands);
        let dup = select_concepts(vec![phi.clone(), phi.clone()].into_iter(), &refs, 10, &sel, None).unwrap();
        assert_eq!(dup.formulas, vec![phi]);
        assert!(dup.exhausted);
    }

    #[test]
    fn concept_file_round_trip() {
        let set = ConceptSet::new(vec![parse("x0 >= 1.5").unwrap(), parse("F[0,3](x1 <= -2)").unwrap()], 50).unwrap();
        let text = set.to_string();
        assert!(text.starts_with("source_length=50\n"));
        assert_eq!(text.parse::<ConceptSet>().unwrap(), set);
        assert!(ConceptSet::new(vec![parse("x0 >= 1").unwrap(); 2], 5).is_err());
        assert_eq!(set.rescaled(25).formulas()[1], parse("F[0,2](x1 <= -2)").unwrap());
    }

    #[test]
    fn quantiles() {
        let v: Vec<f64> = (0..=10).map(f64::from).collect();
        assert_eq!(deciles(v), (1..=9).map(f64::from).collect::<Vec<_>>());
    }
}
