//! Monte-Carlo estimators of the formula/formula and trajectory/formula kernels,
//! plus robustness signature matrices.
//!
//! All estimates made through one [`KernelEstimator`] share the same sample of
//! base-measure trajectories, so identities such as symmetry or
//! `k(phi, not psi) = -k(phi, psi)` hold exactly, not just in expectation.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stl::{robustness, robustness_signal, Formula, Trajectory, LARGE};
use crate::trajgen::{sample_mu0, Mu0Params};

/// Rows are formulae, columns trajectories; entries are robustness at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMatrix {
    pub values: Array2<f64>,
    pub formula_ids: Vec<String>,
    pub trajectory_ids: Vec<String>,
}

/// Robustness of every formula on every trajectory at time 0.
pub fn signature(phis: &[Formula], taus: &[Trajectory]) -> Result<SignatureMatrix> {
    let rows: Vec<Vec<f64>> = phis
        .par_iter()
        .map(|phi| taus.iter().map(|tau| robustness(phi, tau, 0)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((phis.len(), taus.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    Ok(SignatureMatrix {
        values,
        formula_ids: phis.iter().map(ToString::to_string).collect(),
        trajectory_ids: taus.iter().map(|t| t.id().to_string()).collect(),
    })
}

/// How the trajectory embedding `H(x)` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Trajectory/formula kernel over the Monte-Carlo sample.
    #[default]
    Kernel,
    /// Raw robustness `rho(phi_i, x)` of each concept.
    RawRobustness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub mc_trajectories: usize,
    pub mu0: Mu0Params,
    pub epsilon: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { mc_trajectories: 512, mu0: Mu0Params::default(), epsilon: 1.0 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_trajectories == 0 {
            return Err(Error::InvalidParam("mc_trajectories must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParam("epsilon must be positive".into()));
        }
        self.mu0.validate()
    }
}

/// A cached Monte-Carlo sample from the base measure at a fixed shape.
#[derive(Debug, Clone)]
pub struct KernelEstimator {
    cfg: KernelConfig,
    sample: Vec<Trajectory>,
}

impl KernelEstimator {
    /// Draws `cfg.mc_trajectories` samples with `channels` channels and `len` steps.
    pub fn new(cfg: KernelConfig, channels: usize, len: usize) -> Result<Self> {
        cfg.validate()?;
        let mu0 = cfg.mu0.with_length(len);
        let mut sample = sample_mu0(&mu0, cfg.mc_trajectories, channels)?;
        if len == 1 {
            // a one-step base measure is its starting point
            sample = sample
                .into_iter()
                .map(|t| {
                    let v = t.values().column(0).to_owned().insert_axis(ndarray::Axis(1));
                    Trajectory::new(v, None, t.id().to_string()).expect("finite")
                })
                .collect();
        }
        Ok(KernelEstimator { cfg, sample })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn sample(&self) -> &[Trajectory] {
        &self.sample
    }

    pub fn channels(&self) -> usize {
        self.sample[0].channels()
    }

    pub fn len(&self) -> usize {
        self.sample[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    /// `rho(phi, xi)` at time 0 for every sample trajectory, clamped to `+-LARGE`.
    pub fn robustness_profile(&self, phi: &Formula) -> Result<Vec<f64>> {
        self.sample
            .iter()
            .map(|xi| Ok(robustness_signal(phi, xi)?[0].clamp(-LARGE, LARGE)))
            .collect()
    }

    /// `(1/M) sum_xi rho(phi, xi) rho(psi, xi)`.
    pub fn formula_formula(&self, phi: &Formula, psi: &Formula) -> Result<f64> {
        let a = self.robustness_profile(phi)?;
        let b = self.robustness_profile(psi)?;
        Ok(mean_product(&a, &b))
    }

    /// Squared L2 distance from `tau` to every sample trajectory.
    pub fn distances(&self, tau: &Trajectory) -> Result<Vec<f64>> {
        if tau.channels() != self.channels() || tau.len() != self.len() {
            return Err(Error::Shape(format!(
                "trajectory is {}x{}, kernel sample is {}x{}",
                tau.channels(),
                tau.len(),
                self.channels(),
                self.len()
            )));
        }
        Ok(self
            .sample
            .iter()
            .map(|xi| xi.values().iter().zip(tau.values().iter()).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect())
    }

    /// `(1/M) sum_xi (||xi - tau||^2 / epsilon) rho(phi, xi)`.
    pub fn trajectory_formula(&self, tau: &Trajectory, phi: &Formula, epsilon: f64) -> Result<f64> {
        let d = self.distances(tau)?;
        let r = self.robustness_profile(phi)?;
        Ok(mean_product(&d, &r) / epsilon)
    }

    /// Trajectory/formula kernel against every concept, on this estimator's sample.
    pub fn embed_trajectory(&self, tau: &Trajectory, concepts: &[Formula], epsilon: f64) -> Result<Vec<f64>> {
        if concepts.is_empty() {
            return Err(Error::InvalidParam("embedding needs at least one concept".into()));
        }
        let d = self.distances(tau)?;
        concepts.iter().map(|phi| Ok(mean_product(&d, &self.robustness_profile(phi)?) / epsilon)).collect()
    }

    /// Precomputes concept robustness on the sample for fast repeated embedding.
    pub fn concept_bank(&self, concepts: &[Formula]) -> Result<ConceptBank> {
        let rows: Vec<Vec<f64>> =
            concepts.par_iter().map(|phi| self.robustness_profile(phi)).collect::<Result<_>>()?;
        let m = self.sample.len();
        let mut rho = Array2::zeros((concepts.len(), m));
        for (i, row) in rows.into_iter().enumerate() {
            rho.row_mut(i).assign(&ndarray::Array1::from(row));
        }
        Ok(ConceptBank { estimator: self.clone(), rho })
    }
}

/// Concept robustness over a fixed Monte-Carlo sample (`concepts x samples`).
#[derive(Debug, Clone)]
pub struct ConceptBank {
    estimator: KernelEstimator,
    rho: Array2<f64>,
}

impl ConceptBank {
    pub fn estimator(&self) -> &KernelEstimator {
        &self.estimator
    }

    pub fn n_concepts(&self) -> usize {
        self.rho.nrows()
    }

    /// Kernel embedding at `epsilon = 1`; divide by `epsilon` for any other locality.
    pub fn unit_embedding(&self, tau: &Trajectory) -> Result<Vec<f64>> {
        let d = ndarray::Array1::from(self.estimator.distances(tau)?);
        let m = d.len() as f64;
        Ok(self.rho.dot(&d).iter().map(|v| v / m).collect())
    }
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}
