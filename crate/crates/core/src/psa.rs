//! Probabilistic sensitivity analysis.
//!
//! Each uncertain parameter is described by a mean and standard error and
//! moment-matched to its family:
//!
//! * beta: `k = m(1 - m)/se^2 - 1`, `alpha = m k`, `beta = (1 - m) k`
//! * gamma: `shape = m^2/se^2`, `scale = se^2/m`
//! * lognormal: `sigma^2 = ln(1 + se^2/m^2)`, `mu = ln m - sigma^2/2`
//!
//! Sample `i` draws from a ChaCha8 generator seeded with the user seed on
//! stream `i`, so results do not depend on how samples are scheduled.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution as _, Gamma, LogNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::ParameterSet;
use crate::pipeline::{Model, ModelVariant};
use crate::{Error, Result};

/// Draws per sample before giving up on finding a valid parameter set.
pub const MAX_DRAW_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Distribution {
    Beta { mean: f64, se: f64 },
    Gamma { mean: f64, se: f64 },
    Lognormal { mean: f64, se: f64 },
    Uniform { min: f64, max: f64 },
    Fixed { value: f64 },
}

fn dist_err(name: &str, reason: impl Into<String>) -> Error {
    Error::Distribution {
        name: name.to_string(),
        reason: reason.into(),
    }
}

fn check_mean_se(name: &str, mean: f64, se: f64) -> Result<()> {
    if !(mean.is_finite() && se.is_finite() && se > 0.0) {
        return Err(dist_err(name, format!("need finite mean and positive se, got mean {mean}, se {se}")));
    }
    Ok(())
}

pub fn beta_params(mean: f64, se: f64) -> Result<(f64, f64)> {
    check_mean_se("beta", mean, se)?;
    if !(mean > 0.0 && mean < 1.0) {
        return Err(dist_err("beta", format!("mean must lie in (0, 1), got {mean}")));
    }
    let k = mean * (1.0 - mean) / (se * se) - 1.0;
    if k <= 0.0 {
        return Err(dist_err("beta", format!("se {se} too large for mean {mean}")));
    }
    Ok((mean * k, (1.0 - mean) * k))
}

pub fn gamma_params(mean: f64, se: f64) -> Result<(f64, f64)> {
    check_mean_se("gamma", mean, se)?;
    if mean <= 0.0 {
        return Err(dist_err("gamma", format!("mean must be positive, got {mean}")));
    }
    Ok((mean * mean / (se * se), se * se / mean))
}

pub fn lognormal_params(mean: f64, se: f64) -> Result<(f64, f64)> {
    check_mean_se("lognormal", mean, se)?;
    if mean <= 0.0 {
        return Err(dist_err("lognormal", format!("mean must be positive, got {mean}")));
    }
    let s2 = (1.0 + se * se / (mean * mean)).ln();
    Ok((mean.ln() - s2 / 2.0, s2.sqrt()))
}

enum Sampler {
    Beta(Beta<f64>),
    Gamma(Gamma<f64>),
    LogNormal(LogNormal<f64>),
    Uniform(Uniform<f64>),
    Fixed(f64),
}

impl Sampler {
    fn new(name: &str, d: &Distribution) -> Result<Self> {
        let wrap = |e: Error| match e {
            Error::Distribution { reason, .. } => dist_err(name, reason),
            other => other,
        };
        Ok(match *d {
            Distribution::Beta { mean, se } => {
                let (a, b) = beta_params(mean, se).map_err(wrap)?;
                Sampler::Beta(Beta::new(a, b).map_err(|e| dist_err(name, e.to_string()))?)
            }
            Distribution::Gamma { mean, se } => {
                let (shape, scale) = gamma_params(mean, se).map_err(wrap)?;
                Sampler::Gamma(Gamma::new(shape, scale).map_err(|e| dist_err(name, e.to_string()))?)
            }
            Distribution::Lognormal { mean, se } => {
                let (mu, sigma) = lognormal_params(mean, se).map_err(wrap)?;
                Sampler::LogNormal(LogNormal::new(mu, sigma).map_err(|e| dist_err(name, e.to_string()))?)
            }
            Distribution::Uniform { min, max } => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return Err(dist_err(name, format!("uniform needs min < max, got [{min}, {max}]")));
                }
                Sampler::Uniform(Uniform::new(min, max).map_err(|e| dist_err(name, e.to_string()))?)
            }
            Distribution::Fixed { value } => {
                if !value.is_finite() {
                    return Err(dist_err(name, "fixed value must be finite"));
                }
                Sampler::Fixed(value)
            }
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Beta(d) => d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::LogNormal(d) => d.sample(rng),
            Sampler::Uniform(d) => d.sample(rng),
            Sampler::Fixed(v) => *v,
        }
    }
}

/// Distributions for the uncertain parameters. Parameters not listed keep
/// their base-case value; draws are independent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    #[serde(default)]
    pub parameters: BTreeMap<String, Distribution>,
}

impl DistributionSpec {
    /// Everything fixed at the base case.
    pub fn fixed() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in &self.parameters {
            Sampler::new(name, d)?;
        }
        Ok(())
    }
}

/// `n` parameter sets drawn around `base`. A draw that breaks a parameter
/// bound is redrawn, up to [`MAX_DRAW_ATTEMPTS`] times.
pub fn sample_parameters(
    base: &ParameterSet,
    dists: &DistributionSpec,
    n: usize,
    seed: u64,
) -> Result<Vec<ParameterSet>> {
    let samplers = dists
        .parameters
        .iter()
        .map(|(name, d)| {
            if !base.contains(name) {
                return Err(Error::UnknownParameter(name.clone()));
            }
            Ok((name.as_str(), Sampler::new(name, d)?))
        })
        .collect::<Result<Vec<_>>>()?;

    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for _ in 0..MAX_DRAW_ATTEMPTS {
                let mut params = base.clone();
                for (name, s) in &samplers {
                    params.set(*name, s.sample(&mut rng));
                }
                if params.validate().is_pass() {
                    return Ok(params);
                }
            }
            Err(Error::RetryCapExceeded {
                sample: i,
                attempts: MAX_DRAW_ATTEMPTS,
            })
        })
        .collect()
}

/// Discounted totals per sample (rows) and strategy (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct PsaResult {
    pub strategies: Vec<String>,
    pub costs: Array2<f64>,
    pub effects: Array2<f64>,
    pub seed: u64,
    pub parameters: Vec<ParameterSet>,
}

impl PsaResult {
    pub fn n_samples(&self) -> usize {
        self.costs.nrows()
    }

    pub fn mean_cost(&self, s: usize) -> f64 {
        self.costs.column(s).mean().unwrap_or(f64::NAN)
    }

    pub fn mean_effect(&self, s: usize) -> f64 {
        self.effects.column(s).mean().unwrap_or(f64::NAN)
    }
}

pub fn run_psa(
    model: &Model,
    dists: &DistributionSpec,
    n: usize,
    seed: u64,
    variant: ModelVariant,
) -> Result<PsaResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of samples must be at least 1".into()));
    }
    let samples = sample_parameters(&model.spec().parameters, dists, n, seed)?;
    let totals = samples
        .par_iter()
        .enumerate()
        .map(|(i, params)| {
            model
                .with_parameters(params.clone())
                .and_then(|m| m.totals(variant))
                .map_err(|e| Error::Sample {
                    sample: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let strategies: Vec<String> = model.spec().strategies.iter().map(|s| s.name.clone()).collect();
    let n_s = strategies.len();
    let mut costs = Array2::zeros((n, n_s));
    let mut effects = Array2::zeros((n, n_s));
    for (i, row) in totals.iter().enumerate() {
        for (s, t) in row.iter().enumerate() {
            costs[[i, s]] = t.cost;
            effects[[i, s]] = t.qaly;
        }
    }
    Ok(PsaResult {
        strategies,
        costs,
        effects,
        seed,
        parameters: samples,
    })
}

/// Inclusive grid `min, min + step, ...` up to `max`.
pub fn wtp_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!("WTP step must be positive, got {step}")));
    }
    if !(min.is_finite() && max.is_finite() && min >= 0.0 && max >= min) {
        return Err(Error::InvalidArgument(format!(
            "WTP range must satisfy 0 <= min <= max, got [{min}, {max}]"
        )));
    }
    let k = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=k).map(|i| min + i as f64 * step).collect())
}

fn check_grid(wtp: &[f64]) -> Result<()> {
    if wtp.is_empty() {
        return Err(Error::InvalidArgument("WTP grid is empty".into()));
    }
    if wtp.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("WTP values must be finite and non-negative".into()));
    }
    Ok(())
}

fn nmb_row(res: &PsaResult, i: usize, wtp: f64, out: &mut [f64]) {
    for (s, v) in out.iter_mut().enumerate() {
        *v = res.effects[[i, s]] * wtp - res.costs[[i, s]];
    }
}

/// CEAC and CEAF over a WTP grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Acceptability {
    pub wtp: Vec<f64>,
    /// `[wtp, strategy]`: share of samples in which the strategy has the
    /// highest net monetary benefit. Ties split the sample equally.
    pub ceac: Array2<f64>,
    /// `[wtp, strategy]`: mean net monetary benefit.
    pub expected_nmb: Array2<f64>,
    /// Strategy index with the highest mean net monetary benefit.
    pub ceaf: Vec<usize>,
}

pub fn ceac_ceaf(res: &PsaResult, wtp: &[f64]) -> Result<Acceptability> {
    check_grid(wtp)?;
    let n = res.n_samples();
    let n_s = res.strategies.len();
    let mut ceac = Array2::zeros((wtp.len(), n_s));
    let mut expected_nmb = Array2::zeros((wtp.len(), n_s));
    let mut nmb = vec![0.0; n_s];
    for (k, &w) in wtp.iter().enumerate() {
        for i in 0..n {
            nmb_row(res, i, w, &mut nmb);
            let max = nmb.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let winners = nmb.iter().filter(|v| **v == max).count() as f64;
            for s in 0..n_s {
                expected_nmb[[k, s]] += nmb[s];
                if nmb[s] == max {
                    ceac[[k, s]] += 1.0 / winners;
                }
            }
        }
    }
    ceac /= n as f64;
    expected_nmb /= n as f64;
    let ceaf = expected_nmb
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for s in 1..n_s {
                if row[s] > row[best] {
                    best = s;
                }
            }
            best
        })
        .collect();
    Ok(Acceptability {
        wtp: wtp.to_vec(),
        ceac,
        expected_nmb,
        ceaf,
    })
}

/// Expected loss curves and EVPI over a WTP grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedLoss {
    pub wtp: Vec<f64>,
    /// `[wtp, strategy]`: mean of `max NMB - NMB_s` over samples.
    pub loss: Array2<f64>,
    /// Lower envelope of the loss curves.
    pub evpi: Vec<f64>,
}

pub fn elc_evpi(res: &PsaResult, wtp: &[f64]) -> Result<ExpectedLoss> {
    check_grid(wtp)?;
    let n = res.n_samples();
    let n_s = res.strategies.len();
    let mut loss = Array2::zeros((wtp.len(), n_s));
    let mut nmb = vec![0.0; n_s];
    for (k, &w) in wtp.iter().enumerate() {
        for i in 0..n {
            nmb_row(res, i, w, &mut nmb);
            let max = nmb.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for s in 0..n_s {
                loss[[k, s]] += max - nmb[s];
            }
        }
    }
    loss /= n as f64;
    let evpi = loss
        .rows()
        .into_iter()
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    Ok(ExpectedLoss {
        wtp: wtp.to_vec(),
        loss,
        evpi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionCurves {
    pub strategies: Vec<String>,
    pub acceptability: Acceptability,
    pub loss: ExpectedLoss,
}

impl DecisionCurves {
    pub fn compute(res: &PsaResult, wtp: &[f64]) -> Result<Self> {
        Ok(Self {
            strategies: res.strategies.clone(),
            acceptability: ceac_ceaf(res, wtp)?,
            loss: elc_evpi(res, wtp)?,
        })
    }

    /// WTP values at which the CEAF changes strategy, with the strategies on
    /// either side.
    pub fn ceaf_switches(&self) -> Vec<(f64, usize, usize)> {
        let a = &self.acceptability;
        a.ceaf
            .windows(2)
            .zip(a.wtp.windows(2))
            .filter(|(s, _)| s[0] != s[1])
            .map(|(s, w)| (w[1], s[0], s[1]))
            .collect()
    }
}
