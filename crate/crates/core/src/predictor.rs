//! Probabilistic forecasters of per-second bandwidth and loss.
//!
//! Every predictor produces, for each of the next `horizon` seconds, a
//! bandwidth PMF and a loss-ratio PMF. The step `k` of a prediction made from a
//! history ending at second `t` describes second `t + 1 + k`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{Grid, Pmf};
use crate::error::{Error, Result};
use crate::traces::{is_reallocation_second, NetworkSample, NetworkTrace};

/// Fewest samples a regime needs for its own histogram.
pub const MIN_REGIME_SAMPLES: usize = 30;
pub const MAX_HORIZON: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionStep {
    pub bandwidth: Pmf,
    pub loss: Pmf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub input_length: usize,
    pub horizon: usize,
    pub ewma_factor: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            input_length: 180,
            horizon: 5,
            ewma_factor: 0.3,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 {
            return Err(Error::config("input_length", "must be >= 1"));
        }
        if !(1..=MAX_HORIZON).contains(&self.horizon) {
            return Err(Error::config("horizon", format!("must be in [1, {MAX_HORIZON}]")));
        }
        if !(self.ewma_factor > 0.0 && self.ewma_factor <= 1.0) {
            return Err(Error::config("ewma_factor", "must be in (0, 1]"));
        }
        Ok(())
    }
}

/// The last `input_length` samples of `history`, front-padded with the first
/// sample when the history is shorter. The flag reports whether padding
/// happened.
pub fn history_window(history: &[NetworkSample], input_length: usize) -> Result<(Vec<NetworkSample>, bool)> {
    let first = *history.first().ok_or(Error::EmptyHistory)?;
    if history.len() >= input_length {
        return Ok((history[history.len() - input_length..].to_vec(), false));
    }
    let mut window = vec![first; input_length - history.len()];
    window.extend_from_slice(history);
    Ok((window, true))
}

pub trait Predictor: Send + Sync {
    /// Forecast for the `horizon` seconds following the last history sample.
    fn predict(&self, history: &[NetworkSample], horizon: usize) -> Result<Vec<PredictionStep>>;
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, history: &[NetworkSample], horizon: usize) -> Result<Vec<PredictionStep>> {
        (**self).predict(history, horizon)
    }
}

/// Knows the future: point masses at the true values of the trace.
///
/// Past the end of the trace the last sample repeats.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    trace: NetworkTrace,
    bandwidth_grid: Grid,
    loss_grid: Grid,
}

impl OraclePredictor {
    pub fn new(trace: NetworkTrace, bandwidth_grid: Grid, loss_grid: Grid) -> Result<Self> {
        if trace.is_empty() {
            return Err(Error::NoSamples);
        }
        Ok(Self {
            trace,
            bandwidth_grid,
            loss_grid,
        })
    }

    fn sample_at(&self, t: u64) -> &NetworkSample {
        let samples = self.trace.samples();
        let idx = samples.partition_point(|s| s.t < t).min(samples.len() - 1);
        &samples[idx]
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, history: &[NetworkSample], horizon: usize) -> Result<Vec<PredictionStep>> {
        let last = history.last().ok_or(Error::EmptyHistory)?;
        Ok((0..horizon as u64)
            .map(|k| {
                let s = self.sample_at(last.t + 1 + k);
                PredictionStep {
                    bandwidth: Pmf::point_mass(self.bandwidth_grid, s.bandwidth_kbps),
                    loss: Pmf::point_mass(self.loss_grid, s.loss_ratio),
                }
            })
            .collect())
    }
}

/// Exponentially weighted moving average, emitted as point masses.
#[derive(Debug, Clone)]
pub struct EwmaPredictor {
    config: PredictorConfig,
    bandwidth_grid: Grid,
    loss_grid: Grid,
}

impl EwmaPredictor {
    pub fn new(config: PredictorConfig, bandwidth_grid: Grid, loss_grid: Grid) -> Self {
        Self {
            config,
            bandwidth_grid,
            loss_grid,
        }
    }

    /// Smoothed `(bandwidth, loss)` over the input window.
    pub fn estimate(&self, history: &[NetworkSample]) -> Result<(f64, f64)> {
        let (window, _) = history_window(history, self.config.input_length)?;
        Ok(ewma(&window, self.config.ewma_factor))
    }
}

/// EWMA of bandwidth and loss, seeded with the first sample.
pub fn ewma(samples: &[NetworkSample], factor: f64) -> (f64, f64) {
    let mut bw = samples[0].bandwidth_kbps;
    let mut loss = samples[0].loss_ratio;
    for s in &samples[1..] {
        bw = factor * s.bandwidth_kbps + (1.0 - factor) * bw;
        loss = factor * s.loss_ratio + (1.0 - factor) * loss;
    }
    (bw, loss)
}

impl Predictor for EwmaPredictor {
    fn predict(&self, history: &[NetworkSample], horizon: usize) -> Result<Vec<PredictionStep>> {
        let estimate = self.estimate(history)?;
        Ok(as_point_mass(
            &vec![estimate; horizon],
            self.bandwidth_grid,
            self.loss_grid,
        ))
    }
}

/// Regime-conditional histograms of a labeled trace.
///
/// The anomalous histograms come from anomalous reallocation seconds and the
/// normal histograms from all non-anomalous seconds. A future second is
/// forecast as the mixture of the two, weighted by the anomaly frequency of its
/// kind of second (reallocation or not).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalModel {
    pub bandwidth_anomaly: Pmf,
    pub bandwidth_normal: Pmf,
    pub loss_anomaly: Pmf,
    pub loss_normal: Pmf,
    /// Anomaly frequency among reallocation seconds.
    pub p_anomaly_reallocation: f64,
    /// Anomaly frequency among all other seconds.
    pub p_anomaly_normal: f64,
    pub schedule: Vec<u32>,
    /// Set when a regime had too few samples and both use the pooled histogram.
    pub pooled: bool,
}

impl BimodalModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Forecast for second `t`.
    pub fn step_for(&self, t: u64) -> PredictionStep {
        let p = if is_reallocation_second(t, &self.schedule) {
            self.p_anomaly_reallocation
        } else {
            self.p_anomaly_normal
        };
        PredictionStep {
            bandwidth: Pmf::mix(&self.bandwidth_anomaly, &self.bandwidth_normal, p)
                .expect("same grid, weight in [0, 1]"),
            loss: Pmf::mix(&self.loss_anomaly, &self.loss_normal, p).expect("same grid, weight in [0, 1]"),
        }
    }
}

/// Fits the regime histograms and frequencies of a labeled trace.
pub fn fit_bimodal(
    trace: &NetworkTrace,
    schedule: &[u32],
    bandwidth_grid: Grid,
    loss_grid: Grid,
) -> Result<BimodalModel> {
    if !trace.is_labeled() {
        return Err(Error::Unlabeled);
    }
    if trace.is_empty() {
        return Err(Error::NoSamples);
    }
    let samples = trace.samples();
    let anomalous: Vec<&NetworkSample> = samples.iter().filter(|s| s.is_anomaly && s.is_reallocation).collect();
    let normal: Vec<&NetworkSample> = samples.iter().filter(|s| !s.is_anomaly).collect();

    let frequency = |realloc: bool| {
        let (hits, total) = samples
            .iter()
            .filter(|s| s.is_reallocation == realloc)
            .fold((0usize, 0usize), |(h, n), s| (h + s.is_anomaly as usize, n + 1));
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    };

    let histograms = |set: &[&NetworkSample]| -> Result<(Pmf, Pmf)> {
        let bw: Vec<f64> = set.iter().map(|s| s.bandwidth_kbps).collect();
        let loss: Vec<f64> = set.iter().map(|s| s.loss_ratio).collect();
        Ok((
            Pmf::from_samples(&bw, bandwidth_grid)?,
            Pmf::from_samples(&loss, loss_grid)?,
        ))
    };

    let pooled = anomalous.len() < MIN_REGIME_SAMPLES || normal.len() < MIN_REGIME_SAMPLES;
    let (bandwidth_anomaly, loss_anomaly, bandwidth_normal, loss_normal) = if pooled {
        let all: Vec<&NetworkSample> = samples.iter().collect();
        let (bw, loss) = histograms(&all)?;
        (bw.clone(), loss.clone(), bw, loss)
    } else {
        let (bwa, la) = histograms(&anomalous)?;
        let (bwn, ln) = histograms(&normal)?;
        (bwa, la, bwn, ln)
    };

    Ok(BimodalModel {
        bandwidth_anomaly,
        bandwidth_normal,
        loss_anomaly,
        loss_normal,
        p_anomaly_reallocation: frequency(true),
        p_anomaly_normal: frequency(false),
        schedule: schedule.to_vec(),
        pooled,
    })
}

#[derive(Debug, Clone)]
pub struct BimodalPredictor {
    model: BimodalModel,
}

impl BimodalPredictor {
    pub fn new(model: BimodalModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &BimodalModel {
        &self.model
    }
}

impl Predictor for BimodalPredictor {
    fn predict(&self, history: &[NetworkSample], horizon: usize) -> Result<Vec<PredictionStep>> {
        let last = history.last().ok_or(Error::EmptyHistory)?;
        Ok((0..horizon as u64)
            .map(|k| self.model.step_for(last.t + 1 + k))
            .collect())
    }
}

/// Point-mass steps at the given `(bandwidth, loss)` values, clamped to the grids.
pub fn as_point_mass(values: &[(f64, f64)], bandwidth_grid: Grid, loss_grid: Grid) -> Vec<PredictionStep> {
    values
        .iter()
        .map(|&(bw, loss)| PredictionStep {
            bandwidth: Pmf::point_mass(bandwidth_grid, bw),
            loss: Pmf::point_mass(loss_grid, loss),
        })
        .collect()
}

/// Expected `(bandwidth, loss)` of each step.
pub fn collapse_to_expectation(steps: &[PredictionStep]) -> Vec<(f64, f64)> {
    steps.iter().map(|s| (s.bandwidth.expect(), s.loss.expect())).collect()
}

/// Wraps a predictor and replaces each step by a point mass at its expectation.
pub struct ExpectationPredictor<P> {
    inner: P,
    bandwidth_grid: Grid,
    loss_grid: Grid,
}

impl<P: Predictor> ExpectationPredictor<P> {
    pub fn new(inner: P, bandwidth_grid: Grid, loss_grid: Grid) -> Self {
        Self {
            inner,
            bandwidth_grid,
            loss_grid,
        }
    }
}

impl<P: Predictor> Predictor for ExpectationPredictor<P> {
    fn predict(&self, history: &[NetworkSample], horizon: usize) -> Result<Vec<PredictionStep>> {
        let steps = self.inner.predict(history, horizon)?;
        Ok(as_point_mass(
            &collapse_to_expectation(&steps),
            self.bandwidth_grid,
            self.loss_grid,
        ))
    }
}
