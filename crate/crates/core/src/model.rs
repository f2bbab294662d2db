//! Concept-embedding classifier: kernel embedding `H`, standardisation,
//! relevance `gamma = H_std / T`, discriminability `G`, `z = gamma * G`,
//! softsign, MLP head. Training uses weighted cross-entropy plus the
//! relevance-sharpness and locality penalties.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concepts::ConceptSet;
use crate::error::{Error, Result};
use crate::kernel::{ConceptBank, EmbeddingMode, KernelConfig, KernelEstimator};
use crate::nn::{self, Adam, MlpParams, MlpSpec};
use crate::stl::{robustness_signal, Formula, Trajectory};

pub const STATE_VERSION: u32 = 1;

/// Per-class robustness moments, plus the moments pooled over every class
/// other than `k` (row `k` of `mu_rest` / `sigma_rest`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub mu: Array2<f64>,
    pub sigma: Array2<f64>,
    pub counts: Vec<usize>,
    pub mu_rest: Array2<f64>,
    pub sigma_rest: Array2<f64>,
}

impl ClassStats {
    /// `rho` is `n x C`; standard deviations are population (divide by n).
    pub fn fit(rho: &Array2<f64>, labels: &[usize], n_classes: usize) -> Result<ClassStats> {
        if rho.nrows() != labels.len() || rho.nrows() == 0 {
            return Err(Error::Shape("robustness rows and labels differ".into()));
        }
        let c = rho.ncols();
        let mut out = ClassStats {
            mu: Array2::zeros((n_classes, c)),
            sigma: Array2::zeros((n_classes, c)),
            counts: vec![0; n_classes],
            mu_rest: Array2::zeros((n_classes, c)),
            sigma_rest: Array2::zeros((n_classes, c)),
        };
        for &y in labels {
            if y >= n_classes {
                return Err(Error::Data(format!("label {y} out of range for {n_classes} classes")));
            }
            out.counts[y] += 1;
        }
        for k in 0..n_classes {
            let (m, s) = moments(rho, labels, |y| y == k);
            out.mu.row_mut(k).assign(&m);
            out.sigma.row_mut(k).assign(&s);
            let (m, s) = moments(rho, labels, |y| y != k);
            out.mu_rest.row_mut(k).assign(&m);
            out.sigma_rest.row_mut(k).assign(&s);
        }
        Ok(out)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }
}

fn moments(rho: &Array2<f64>, labels: &[usize], keep: impl Fn(usize) -> bool) -> (Array1<f64>, Array1<f64>) {
    let c = rho.ncols();
    let rows: Vec<usize> = (0..labels.len()).filter(|&i| keep(labels[i])).collect();
    if rows.is_empty() {
        return (Array1::zeros(c), Array1::zeros(c));
    }
    let n = rows.len() as f64;
    let mut mean = Array1::zeros(c);
    for &i in &rows {
        mean += &rho.row(i);
    }
    mean /= n;
    let mut var: Array1<f64> = Array1::zeros(c);
    for &i in &rows {
        let d = &rho.row(i) - &mean;
        var += &(&d * &d);
    }
    (mean, (var / n).mapv(f64::sqrt))
}

/// `G[i][k] = |rho_i - mu_rest[k][i]| / (sigma_rest[k][i] + eps_g)`, shape `C x K`.
pub fn discriminability(rho: &[f64], stats: &ClassStats, eps_g: f64) -> Result<Array2<f64>> {
    let (k, c) = stats.mu_rest.dim();
    if rho.len() != c {
        return Err(Error::Shape(format!("{} robustness values for {c} concepts", rho.len())));
    }
    Ok(Array2::from_shape_fn((c, k), |(i, j)| (rho[i] - stats.mu_rest[[j, i]]).abs() / (stats.sigma_rest[[j, i]] + eps_g)))
}

pub fn softsign(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

/// Mean and floored standard deviation of the training embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const EMBED_STD_FLOOR: f64 = 1e-6;

impl EmbedStats {
    pub fn fit(h: &Array2<f64>) -> EmbedStats {
        let n = h.nrows() as f64;
        let mean: Vec<f64> = (0..h.ncols()).map(|j| h.column(j).sum() / n).collect();
        let std = (0..h.ncols())
            .map(|j| {
                let v = h.column(j).iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / n;
                v.sqrt().max(EMBED_STD_FLOOR)
            })
            .collect();
        EmbedStats { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub temperature: f64,
    pub eps_g: f64,
    pub lambda_t: f64,
    pub lambda_eps: f64,
    pub t_rel: f64,
    pub mode: EmbeddingMode,
    pub kernel: KernelConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dims: vec![256],
            dropout: 0.1,
            temperature: 1.0,
            eps_g: 1e-6,
            lambda_t: 0.1,
            lambda_eps: 0.01,
            t_rel: 1.0,
            mode: EmbeddingMode::Kernel,
            kernel: KernelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub lr_multiplier_aux: f64,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            patience: 10,
            val_fraction: 0.2,
            seed: 0,
            lr_multiplier_aux: 10.0,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::InvalidParam("epochs, batch size and patience must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr_multiplier_aux > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::InvalidParam("learning rates and clip norm must be positive".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidParam("val_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Everything needed to rebuild a fitted model. The Monte-Carlo kernel sample
/// is not stored; it is regenerated from `kernel` (including its seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub version: u32,
    pub concepts: Vec<Formula>,
    pub channels: usize,
    pub length: usize,
    pub n_classes: usize,
    pub class_stats: ClassStats,
    pub embed_stats: EmbedStats,
    pub temperature: f64,
    pub log_epsilon: f64,
    pub eps_g: f64,
    pub lambda_t: f64,
    pub lambda_eps: f64,
    pub t_rel: f64,
    pub mode: EmbeddingMode,
    pub kernel: KernelConfig,
    pub class_weights: Vec<f64>,
    pub spec: MlpSpec,
    pub mlp: MlpParams,
}

impl ModelState {
    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.log_epsilon.exp()
    }

    pub fn concept_set(&self) -> Result<ConceptSet> {
        ConceptSet::new(self.concepts.clone(), self.length)
    }
}

/// Per-trajectory quantities that do not depend on trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    /// `rho(phi_i, x)` at time 0.
    pub rho: Vec<f64>,
    /// Kernel embedding at `epsilon = 1` (or `rho` in raw mode).
    pub unit: Vec<f64>,
    /// Discriminability, `C x K`.
    pub g: Array2<f64>,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub h: Vec<f64>,
    pub gamma: Vec<f64>,
    pub g: Array2<f64>,
    pub z: Array2<f64>,
    pub z_bar: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

/// Gradients of the training loss.
#[derive(Debug, Clone)]
pub struct Grads {
    pub mlp: MlpParams,
    pub temperature: f64,
    pub log_epsilon: f64,
    pub lambda_t: f64,
    pub lambda_eps: f64,
}

impl Grads {
    fn norm(&self) -> f64 {
        (self.mlp.sum_sq()
            + self.temperature.powi(2)
            + self.log_epsilon.powi(2)
            + self.lambda_t.powi(2)
            + self.lambda_eps.powi(2))
        .sqrt()
    }

    fn scale(&mut self, f: f64) {
        self.mlp.scale(f);
        self.temperature *= f;
        self.log_epsilon *= f;
        self.lambda_t *= f;
        self.lambda_eps *= f;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A fitted model plus its Monte-Carlo concept bank.
#[derive(Debug, Clone)]
pub struct Model {
    state: ModelState,
    bank: Option<ConceptBank>,
}

impl Model {
    /// Rebuilds the runtime parts (kernel sample, concept robustness on it).
    pub fn from_state(state: ModelState) -> Result<Model> {
        if state.version != STATE_VERSION {
            return Err(Error::Data(format!("model version {} is not supported", state.version)));
        }
        if state.spec.input_dim != state.n_concepts() * state.n_classes {
            return Err(Error::Shape("MLP input width must equal concepts x classes".into()));
        }
        let bank = match state.mode {
            EmbeddingMode::Kernel => {
                let est = KernelEstimator::new(state.kernel, state.channels, state.length)?;
                Some(est.concept_bank(&state.concepts)?)
            }
            EmbeddingMode::RawRobustness => None,
        };
        Ok(Model { state, bank })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn into_state(self) -> ModelState {
        self.state
    }

    pub fn n_classes(&self) -> usize {
        self.state.n_classes
    }

    pub fn n_concepts(&self) -> usize {
        self.state.n_concepts()
    }

    fn check(&self, tau: &Trajectory) -> Result<()> {
        if tau.channels() != self.state.channels || tau.len() != self.state.length {
            return Err(Error::Shape(format!(
                "trajectory {} is {}x{}, model expects {}x{}",
                tau.id(),
                tau.channels(),
                tau.len(),
                self.state.channels,
                self.state.length
            )));
        }
        Ok(())
    }

    /// Robustness of every concept at time 0.
    pub fn concept_robustness(&self, tau: &Trajectory) -> Result<Vec<f64>> {
        self.check(tau)?;
        self.state.concepts.iter().map(|phi| Ok(robustness_signal(phi, tau)?[0])).collect()
    }

    pub fn features(&self, tau: &Trajectory) -> Result<Features> {
        let rho = self.concept_robustness(tau)?;
        features_from(&self.state, self.bank.as_ref(), tau, rho)
    }

    pub fn features_batch(&self, taus: &[Trajectory]) -> Result<Vec<Features>> {
        taus.par_iter().map(|t| self.features(t)).collect()
    }

    pub fn forward(&self, tau: &Trajectory) -> Result<Forward> {
        Ok(forward_features(&self.state, &self.features(tau)?))
    }

    pub fn predict(&self, tau: &Trajectory) -> Result<Prediction> {
        Ok(prediction(&self.forward(tau)?.logits))
    }

    /// Head output (softmax probabilities) for a batch of flattened, not yet
    /// squashed `z` rows, together with the input gradient of `probs[k]`.
    pub fn head_probs_and_grad(&self, z_rows: &Array2<f64>, k: usize) -> Result<(Vec<f64>, Array2<f64>)> {
        head_probs_and_grad(&self.state, z_rows, k)
    }
}

fn features_from(state: &ModelState, bank: Option<&ConceptBank>, tau: &Trajectory, rho: Vec<f64>) -> Result<Features> {
    let unit = match bank {
        Some(b) => b.unit_embedding(tau)?,
        None => rho.clone(),
    };
    let g = discriminability(&rho, &state.class_stats, state.eps_g)?;
    Ok(Features { rho, unit, g })
}

/// `argmax` of the softmax, lowest index on ties.
pub fn prediction(logits: &[f64]) -> Prediction {
    let probabilities = nn::softmax(logits);
    let mut class = 0;
    for (k, &p) in probabilities.iter().enumerate() {
        if p > probabilities[class] {
            class = k;
        }
    }
    Prediction { class, probabilities }
}

fn embedding(state: &ModelState, f: &Features) -> Vec<f64> {
    match state.mode {
        EmbeddingMode::Kernel => {
            let eps = state.epsilon();
            f.unit.iter().map(|u| u / eps).collect()
        }
        EmbeddingMode::RawRobustness => f.unit.clone(),
    }
}

fn gamma(state: &ModelState, h: &[f64]) -> Vec<f64> {
    let s = &state.embed_stats;
    h.iter().enumerate().map(|(i, v)| (v - s.mean[i]) / s.std[i] / state.temperature).collect()
}

pub fn forward_features(state: &ModelState, f: &Features) -> Forward {
    let h = embedding(state, f);
    let gamma = gamma(state, &h);
    let (c, k) = f.g.dim();
    let z = Array2::from_shape_fn((c, k), |(i, j)| gamma[i] * f.g[[i, j]]);
    let z_bar = z.mapv(softsign);
    let input = z_bar.clone().into_shape_with_order((1, c * k)).expect("contiguous");
    let logits = nn::forward(&state.mlp, &state.spec, &input, false, &mut ChaCha8Rng::seed_from_u64(0))
        .expect("validated widths")
        .0
        .row(0)
        .to_vec();
    Forward { logits, h, gamma, g: f.g.clone(), z, z_bar }
}

fn head_probs_and_grad(state: &ModelState, z_rows: &Array2<f64>, k: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    if k >= state.n_classes {
        return Err(Error::InvalidParam(format!("class {k} out of range")));
    }
    let squashed = z_rows.mapv(softsign);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, cache) = nn::forward(&state.mlp, &state.spec, &squashed, false, &mut rng)?;
    let mut probs = Vec::with_capacity(logits.nrows());
    let mut d = Array2::zeros(logits.raw_dim());
    for (r, row) in logits.rows().into_iter().enumerate() {
        let p = nn::softmax(row.as_slice().expect("contiguous"));
        // d p_k / d logit_j = p_k (1[j=k] - p_j)
        for j in 0..p.len() {
            d[[r, j]] = p[k] * (if j == k { 1.0 } else { 0.0 } - p[j]);
        }
        probs.push(p[k]);
    }
    let (_, mut dx) = nn::backward(&state.mlp, &cache, &d);
    dx.zip_mut_with(z_rows, |g, &z| *g /= (1.0 + z.abs()).powi(2));
    Ok((probs, dx))
}

/// Loss and gradients over a batch. `training` enables dropout.
pub fn batch_loss(
    state: &ModelState,
    feats: &[&Features],
    labels: &[usize],
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Grads)> {
    let b = feats.len();
    if b == 0 || b != labels.len() {
        return Err(Error::InvalidParam("batch must be non-empty and labelled".into()));
    }
    let (c, k) = (state.n_concepts(), state.n_classes);
    let mut h = Array2::zeros((b, c));
    let mut gam = Array2::zeros((b, c));
    let mut z = Array2::zeros((b, c * k));
    for (r, f) in feats.iter().enumerate() {
        let hv = embedding(state, f);
        let gv = gamma(state, &hv);
        for i in 0..c {
            h[[r, i]] = hv[i];
            gam[[r, i]] = gv[i];
            for j in 0..k {
                z[[r, i * k + j]] = gv[i] * f.g[[i, j]];
            }
        }
    }
    let z_bar = z.mapv(softsign);
    let (logits, cache) = nn::forward(&state.mlp, &state.spec, &z_bar, training, rng)?;
    let mut ce = 0.0;
    let mut d_logits = Array2::zeros(logits.raw_dim());
    for (r, row) in logits.rows().into_iter().enumerate() {
        let (l, g) = nn::weighted_cross_entropy(row.as_slice().expect("contiguous"), labels[r], &state.class_weights);
        ce += l / b as f64;
        for (j, gj) in g.into_iter().enumerate() {
            d_logits[[r, j]] = gj / b as f64;
        }
    }
    let (mlp_grads, mut dz) = nn::backward(&state.mlp, &cache, &d_logits);
    dz.zip_mut_with(&z, |g, &zv| *g /= (1.0 + zv.abs()).powi(2));

    let (t, theta) = (state.temperature, state.log_epsilon);
    let mut d_t = 0.0;
    let mut d_theta = 0.0;
    for (r, f) in feats.iter().enumerate() {
        for i in 0..c {
            let d_gamma: f64 = (0..k).map(|j| dz[[r, i * k + j]] * f.g[[i, j]]).sum();
            d_t -= d_gamma * gam[[r, i]] / t;
            if state.mode == EmbeddingMode::Kernel {
                d_theta -= d_gamma * h[[r, i]] / (state.embed_stats.std[i] * t);
            }
        }
    }
    let sharp = sigmoid(-t / state.t_rel);
    let cosh2 = theta.exp() + (-theta).exp();
    let loss = ce + state.lambda_t * sharp + state.lambda_eps * cosh2;
    d_t -= state.lambda_t * sharp * (1.0 - sharp) / state.t_rel;
    d_theta += state.lambda_eps * (theta.exp() - (-theta).exp());
    Ok((loss, Grads { mlp: mlp_grads, temperature: d_t, log_epsilon: d_theta, lambda_t: sharp, lambda_eps: cosh2 }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

/// Inverse-frequency class weights `N / (K * n_k)`.
pub fn class_weights(labels: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        counts[y] += 1;
    }
    let n = labels.len() as f64;
    counts.iter().map(|&c| if c == 0 { 0.0 } else { n / (n_classes as f64 * c as f64) }).collect()
}

/// Seeded stratified split: roughly `fraction` of each class goes to
/// validation, always leaving at least one example per class for fitting.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let (mut fit, mut val) = (Vec::new(), Vec::new());
    for k in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..n_val]);
        fit.extend_from_slice(&idx[n_val..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Fits class statistics and embedding statistics on `train`, then trains the
/// head and the auxiliary scalars with Adam, early stopping on a stratified
/// validation split and restoring the best checkpoint.
pub fn fit(
    train: &[Trajectory],
    concepts: &ConceptSet,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    tcfg.validate()?;
    mcfg.kernel.validate()?;
    let first = train.first().ok_or_else(|| Error::InvalidParam("empty training set".into()))?;
    let (channels, length) = (first.channels(), first.len());
    if concepts.is_empty() {
        return Err(Error::InvalidParam("no concepts".into()));
    }
    if concepts.channels_used() > channels {
        return Err(Error::ChannelOutOfRange { channel: concepts.channels_used() - 1, channels });
    }
    let labels: Vec<usize> = train
        .iter()
        .map(|t| t.label().ok_or_else(|| Error::Data(format!("trajectory {} has no label", t.id()))))
        .collect::<Result<_>>()?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let present = class_weights(&labels, n_classes).iter().filter(|&&w| w > 0.0).count();
    if present < 2 {
        return Err(Error::Data("training data must contain at least two classes".into()));
    }

    let (c, k) = (concepts.len(), n_classes);
    let spec = MlpSpec { input_dim: c * k, output_dim: k, hidden_dims: mcfg.hidden_dims.clone(), dropout: mcfg.dropout };
    let mut init_rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mlp = MlpParams::init(&spec, &mut init_rng)?;
    let state = ModelState {
        version: STATE_VERSION,
        concepts: concepts.formulas().to_vec(),
        channels,
        length,
        n_classes,
        class_stats: ClassStats {
            mu: Array2::zeros((k, c)),
            sigma: Array2::zeros((k, c)),
            counts: vec![0; k],
            mu_rest: Array2::zeros((k, c)),
            sigma_rest: Array2::zeros((k, c)),
        },
        embed_stats: EmbedStats { mean: vec![0.0; c], std: vec![1.0; c] },
        temperature: mcfg.temperature,
        log_epsilon: mcfg.kernel.epsilon.ln(),
        eps_g: mcfg.eps_g,
        lambda_t: mcfg.lambda_t,
        lambda_eps: mcfg.lambda_eps,
        t_rel: mcfg.t_rel,
        mode: mcfg.mode,
        kernel: mcfg.kernel,
        class_weights: class_weights(&labels, n_classes),
        spec,
        mlp,
    };
    let mut model = Model::from_state(state)?;

    for t in train {
        model.check(t)?;
    }
    let rho_rows: Vec<Vec<f64>> = train.par_iter().map(|t| model.concept_robustness(t)).collect::<Result<_>>()?;
    let rho = Array2::from_shape_fn((train.len(), c), |(i, j)| rho_rows[i][j]);
    model.state.class_stats = ClassStats::fit(&rho, &labels, n_classes)?;
    let feats: Vec<Features> = train
        .par_iter()
        .zip(rho_rows.into_par_iter())
        .map(|(t, r)| features_from(&model.state, model.bank.as_ref(), t, r))
        .collect::<Result<_>>()?;
    let h0 = Array2::from_shape_fn((train.len(), c), |(i, j)| embedding(&model.state, &feats[i])[j]);
    model.state.embed_stats = EmbedStats::fit(&h0);

    let history = train_head(&mut model.state, &feats, &labels, tcfg)?;
    Ok((model, history))
}

fn train_head(state: &mut ModelState, feats: &[Features], labels: &[usize], cfg: &TrainConfig) -> Result<TrainHistory> {
    let (fit_idx, val_idx) = stratified_split(labels, cfg.val_fraction, cfg.seed);
    let monitor = if val_idx.is_empty() { fit_idx.clone() } else { val_idx };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(4);
    let mut adam = Adam::new(cfg.lr, state.mlp.n_params() + 4);
    let mut best = (f64::INFINITY, state.clone(), 0usize);
    let mut history = TrainHistory { train_loss: Vec::new(), val_loss: Vec::new(), best_epoch: 0 };
    let mut order = fit_idx.clone();
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let fb: Vec<&Features> = chunk.iter().map(|&i| &feats[i]).collect();
            let lb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, mut g) = batch_loss(state, &fb, &lb, true, &mut rng)?;
            epoch_loss += loss * chunk.len() as f64;
            let norm = g.norm();
            if norm > cfg.clip_norm {
                g.scale(cfg.clip_norm / norm);
            }
            apply_step(state, &g, &mut adam, cfg.lr_multiplier_aux);
        }
        history.train_loss.push(epoch_loss / order.len() as f64);
        let val = eval_loss(state, feats, labels, &monitor)?;
        history.val_loss.push(val);
        if val < best.0 {
            best = (val, state.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    *state = best.1;
    history.best_epoch = best.2;
    Ok(history)
}

fn eval_loss(state: &ModelState, feats: &[Features], labels: &[usize], idx: &[usize]) -> Result<f64> {
    let fb: Vec<&Features> = idx.iter().map(|&i| &feats[i]).collect();
    let lb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    Ok(batch_loss(state, &fb, &lb, false, &mut ChaCha8Rng::seed_from_u64(0))?.0)
}

fn apply_step(state: &mut ModelState, g: &Grads, adam: &mut Adam, aux_mult: f64) {
    let mut aux = [state.temperature, state.log_epsilon, state.lambda_t, state.lambda_eps];
    let aux_g = [g.temperature, g.log_epsilon, g.lambda_t, g.lambda_eps];
    let grads: Vec<&[f64]> = g.mlp.slices().into_iter().chain(std::iter::once(&aux_g[..])).collect();
    let mut params: Vec<&mut [f64]> = state.mlp.slices_mut();
    let mut mults = vec![1.0; params.len()];
    params.push(&mut aux[..]);
    mults.push(aux_mult);
    adam.step(&mut params, &grads, &mults);
    state.temperature = aux[0].max(1e-3);
    state.log_epsilon = aux[1];
    state.lambda_t = aux[2].max(0.0);
    state.lambda_eps = aux[3].max(0.0);
}
