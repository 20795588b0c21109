//! Sliding-window bitrate distribution per CRF.
//!
//! For each CRF the model keeps the bitrates observed over the last 55 seconds
//! and fits a two-component Gaussian mixture to them once enough samples exist.
//! Before that a pre-recorded default distribution answers queries.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::traces::{crf_index, VideoTrace, CRF_SET};

pub const WINDOW_S: u64 = 55;
pub const DEFAULT_STARTUP_THRESHOLD: usize = 10;
pub const EM_MAX_ITERATIONS: usize = 100;
pub const EM_TOLERANCE: f64 = 1e-6;
/// Smallest standard deviation a component may have, in kbps.
pub const STD_FLOOR_KBPS: f64 = 1.0;
pub const MIN_COMPONENT_WEIGHT: f64 = 0.02;

const DEFAULT_TABLE_JSON: &str = include_str!("../data/default_crf_bitrates.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

impl Component {
    fn cdf(&self, x: f64) -> f64 {
        0.5 * erfc(-(x - self.mean) / (self.std * std::f64::consts::SQRT_2))
    }

    fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z - self.std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Gaussian mixture with one or two components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub components: Vec<Component>,
}

impl Mixture {
    pub fn single(mean: f64, std: f64) -> Self {
        Self {
            components: vec![Component {
                weight: 1.0,
                mean,
                std: std.max(STD_FLOOR_KBPS),
            }],
        }
    }

    /// Probability that a draw falls below `b`; zero for `b <= 0`.
    pub fn cdf_below(&self, b: f64) -> f64 {
        if b <= 0.0 {
            return 0.0;
        }
        self.components
            .iter()
            .map(|c| c.weight * c.cdf(b))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Fits a two-component Gaussian mixture by expectation-maximization.
///
/// Components start at the 25% and 75% sample quantiles with the pooled
/// standard deviation and equal weights. When a component degenerates (std
/// below 1 kbps or weight below 0.02) the fit collapses to one Gaussian with
/// the sample mean and standard deviation, floored at 1 kbps.
pub fn fit_mixture(samples: &[f64], min_samples: usize) -> Result<Mixture> {
    if samples.is_empty() || samples.len() < min_samples {
        return Err(Error::InvalidParams(format!(
            "mixture fit needs at least {} samples, got {}",
            min_samples.max(1),
            samples.len()
        )));
    }
    let (mean, std) = mean_std(samples);
    let single = Mixture::single(mean, std);
    if std < STD_FLOOR_KBPS || samples.len() < 2 {
        return Ok(single);
    }

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut comps = [
        Component {
            weight: 0.5,
            mean: quantile(&sorted, 0.25),
            std,
        },
        Component {
            weight: 0.5,
            mean: quantile(&sorted, 0.75),
            std,
        },
    ];
    if comps[0].mean == comps[1].mean {
        return Ok(single);
    }

    let n = samples.len() as f64;
    let mut resp = vec![0.0; samples.len()];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERATIONS {
        // E-step: responsibility of the first component
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(samples) {
            let a = comps[0].weight.ln() + comps[0].log_density(x);
            let b = comps[1].weight.ln() + comps[1].log_density(x);
            let total = log_sum_exp(a, b);
            *r = (a - total).exp();
            ll += total;
        }
        // M-step
        for (k, comp) in comps.iter_mut().enumerate() {
            let w = |r: f64| if k == 0 { r } else { 1.0 - r };
            let nk: f64 = resp.iter().map(|&r| w(r)).sum();
            if nk <= 0.0 {
                return Ok(single);
            }
            let mu = resp.iter().zip(samples).map(|(&r, &x)| w(r) * x).sum::<f64>() / nk;
            let var = resp
                .iter()
                .zip(samples)
                .map(|(&r, &x)| w(r) * (x - mu).powi(2))
                .sum::<f64>()
                / nk;
            *comp = Component {
                weight: nk / n,
                mean: mu,
                std: var.sqrt(),
            };
        }
        if comps
            .iter()
            .any(|c| c.std < STD_FLOOR_KBPS || c.weight < MIN_COMPONENT_WEIGHT)
        {
            return Ok(single);
        }
        if (ll - prev_ll).abs() < EM_TOLERANCE {
            break;
        }
        prev_ll = ll;
    }
    Ok(Mixture {
        components: comps.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefaultEntry {
    pub mean_kbps: f64,
    pub std_kbps: f64,
}

/// Default single-Gaussian bitrate distribution for every CRF.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultTable {
    entries: [DefaultEntry; CRF_SET.len()],
}

impl DefaultTable {
    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_TABLE_JSON).expect("shipped default table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: BTreeMap<String, DefaultEntry> = serde_json::from_str(text)?;
        let mut entries = [DefaultEntry {
            mean_kbps: 0.0,
            std_kbps: 0.0,
        }; CRF_SET.len()];
        for (k, crf) in CRF_SET.iter().enumerate() {
            let e = map
                .get(&crf.to_string())
                .ok_or_else(|| Error::InvalidParams(format!("default table lacks crf {crf}")))?;
            if !(e.mean_kbps > 0.0) || !(e.std_kbps >= 0.0) {
                return Err(Error::InvalidParams(format!(
                    "default table entry for crf {crf} is invalid"
                )));
            }
            entries[k] = *e;
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Mean and standard deviation of each CRF's bitrate over a video trace.
    pub fn from_video(video: &VideoTrace) -> Result<Self> {
        if video.is_empty() {
            return Err(Error::NoSamples);
        }
        let mut entries = [DefaultEntry {
            mean_kbps: 0.0,
            std_kbps: 0.0,
        }; CRF_SET.len()];
        for (k, e) in entries.iter_mut().enumerate() {
            let rates: Vec<f64> = video.seconds().iter().map(|s| s.records[k].bitrate_kbps).collect();
            let (mean_kbps, std_kbps) = mean_std(&rates);
            *e = DefaultEntry { mean_kbps, std_kbps };
        }
        Ok(Self { entries })
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, DefaultEntry> = CRF_SET
            .iter()
            .zip(&self.entries)
            .map(|(c, e)| (c.to_string(), *e))
            .collect();
        serde_json::to_string_pretty(&map).expect("plain map serializes")
    }

    pub fn entry(&self, crf: u32) -> Option<DefaultEntry> {
        crf_index(crf).map(|k| self.entries[k])
    }
}

/// Per-CRF bitrate windows and their fitted distributions.
#[derive(Debug, Clone)]
pub struct CrfBitrateModel {
    startup_threshold: usize,
    queues: Vec<VecDeque<(u64, f64)>>,
    fitted: Vec<Option<Mixture>>,
    defaults: Vec<Mixture>,
    newest_t: Option<u64>,
}

impl CrfBitrateModel {
    pub fn new(defaults: &DefaultTable, startup_threshold: usize) -> Self {
        Self {
            startup_threshold,
            queues: vec![VecDeque::new(); CRF_SET.len()],
            fitted: vec![None; CRF_SET.len()],
            defaults: defaults
                .entries
                .iter()
                .map(|e| Mixture::single(e.mean_kbps, e.std_kbps))
                .collect(),
            newest_t: None,
        }
    }

    pub fn with_builtin_defaults() -> Self {
        Self::new(&DefaultTable::builtin(), DEFAULT_STARTUP_THRESHOLD)
    }

    /// Records the bitrate of `crf` at second `t`.
    ///
    /// Samples at or before `newest - 55` are evicted from every queue, where
    /// `newest` is the latest second observed for any CRF; each changed queue is
    /// refitted, or falls back to the default below the startup threshold.
    pub fn observe(&mut self, crf: u32, bitrate_kbps: f64, t: u64) -> Result<()> {
        let k = crf_index(crf).ok_or(Error::UnknownCrf(crf))?;
        if !(bitrate_kbps > 0.0) || !bitrate_kbps.is_finite() {
            return Err(Error::InvalidParams(format!("bitrate {bitrate_kbps} must be > 0")));
        }
        self.queues[k].push_back((t, bitrate_kbps));
        let newest = self.newest_t.map_or(t, |n| n.max(t));
        self.newest_t = Some(newest);

        let mut changed = vec![false; CRF_SET.len()];
        changed[k] = true;
        for (q, flag) in self.queues.iter_mut().zip(changed.iter_mut()) {
            let before = q.len();
            q.retain(|&(ts, _)| ts + WINDOW_S > newest);
            *flag |= q.len() != before;
        }
        for (i, flag) in changed.into_iter().enumerate() {
            if flag {
                self.refit(i);
            }
        }
        Ok(())
    }

    fn refit(&mut self, k: usize) {
        let samples: Vec<f64> = self.queues[k].iter().map(|(_, b)| *b).collect();
        self.fitted[k] = if samples.len() >= self.startup_threshold {
            fit_mixture(&samples, self.startup_threshold).ok()
        } else {
            None
        };
    }

    pub fn queue_len(&self, crf: u32) -> Option<usize> {
        crf_index(crf).map(|k| self.queues[k].len())
    }

    pub fn is_fitted(&self, crf: u32) -> bool {
        crf_index(crf).is_some_and(|k| self.fitted[k].is_some())
    }

    /// Fitted mixture when available, the default otherwise.
    pub fn distribution_for(&self, crf: u32) -> Result<&Mixture> {
        let k = crf_index(crf).ok_or(Error::UnknownCrf(crf))?;
        Ok(self.fitted[k].as_ref().unwrap_or(&self.defaults[k]))
    }

    pub fn cdf_below(&self, crf: u32, b: f64) -> Result<f64> {
        Ok(self.distribution_for(crf)?.cdf_below(b))
    }

    pub fn expected_bitrate(&self, crf: u32) -> Result<f64> {
        Ok(self.distribution_for(crf)?.mean())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::{gen_synthetic_video, RdParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn model() -> CrfBitrateModel {
        CrfBitrateModel::with_builtin_defaults()
    }

    #[test]
    fn window_holds_55_seconds() {
        let mut m = model();
        for t in 0..56 {
            m.observe(36, 3000.0 + t as f64, t).unwrap();
        }
        assert_eq!(m.queue_len(36), Some(55));
    }

    #[test]
    fn default_until_threshold() {
        let mut m = model();
        for t in 0..9 {
            m.observe(26, 5000.0, t).unwrap();
        }
        assert!(!m.is_fitted(26));
        assert_eq!(
            m.expected_bitrate(26).unwrap(),
            DefaultTable::builtin().entry(26).unwrap().mean_kbps
        );
        m.observe(26, 5000.0, 9).unwrap();
        assert!(m.is_fitted(26));
        assert!((m.expected_bitrate(26).unwrap() - 5000.0).abs() < 1e-9);
    }

    #[test]
    fn eviction_follows_global_clock() {
        let mut m = model();
        for t in 0..20 {
            m.observe(31, 4000.0, t).unwrap();
        }
        assert!(m.is_fitted(31));
        m.observe(26, 9000.0, 80).unwrap();
        assert_eq!(m.queue_len(31), Some(0));
        assert!(!m.is_fitted(31));
    }

    #[test]
    fn unknown_crf_rejected() {
        let mut m = model();
        assert!(matches!(m.observe(30, 1000.0, 0), Err(Error::UnknownCrf(30))));
        assert!(m.observe(26, 0.0, 0).is_err());
    }

    #[test]
    fn identical_samples_collapse_with_std_floor() {
        let mix = fit_mixture(&[3000.0; 20], 10).unwrap();
        assert_eq!(mix, Mixture::single(3000.0, 1.0));
        assert!(fit_mixture(&[3000.0; 9], 10).is_err());
    }

    #[test]
    fn em_recovers_separated_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (a, b) = (Normal::new(2000.0, 100.0).unwrap(), Normal::new(8000.0, 100.0).unwrap());
        let samples: Vec<f64> = (0..1000)
            .map(|i| {
                if i % 2 == 0 {
                    a.sample(&mut rng)
                } else {
                    b.sample(&mut rng)
                }
            })
            .collect();
        let mix = fit_mixture(&samples, 10).unwrap();
        assert_eq!(mix.components.len(), 2);
        let mut means: Vec<f64> = mix.components.iter().map(|c| c.mean).collect();
        means.sort_by(f64::total_cmp);
        assert!(
            (means[0] - 2000.0).abs() < 100.0 && (means[1] - 8000.0).abs() < 100.0,
            "{means:?}"
        );
        let total: f64 = mix.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_examples() {
        let single = Mixture::single(4000.0, 300.0);
        assert!((single.cdf_below(4000.0) - 0.5).abs() < 1e-6);
        assert_eq!(single.cdf_below(f64::INFINITY), 1.0);
        assert_eq!(single.cdf_below(0.0), 0.0);
        let pair = Mixture {
            components: vec![
                Component {
                    weight: 0.5,
                    mean: 2000.0,
                    std: 100.0,
                },
                Component {
                    weight: 0.5,
                    mean: 8000.0,
                    std: 100.0,
                },
            ],
        };
        // numeric oracle: trapezoidal integration of the density up to 5000
        let density = |x: f64| {
            pair.components
                .iter()
                .map(|c| c.weight * c.log_density(x).exp())
                .sum::<f64>()
        };
        let steps = 200_000;
        let h = 5000.0 / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| 0.5 * h * (density(i as f64 * h) + density((i + 1) as f64 * h)))
            .sum();
        assert!((pair.cdf_below(5000.0) - integral).abs() < 1e-3);
        assert!((pair.cdf_below(5000.0) - 0.5).abs() < 1e-3);
        assert!((pair.mean() - 5000.0).abs() < 1e-9);
        assert!(pair.cdf_below(pair.mean() - 5.0 * 3000.0) < 1e-9);
    }

    #[test]
    fn stationary_source_mean_within_five_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = Normal::new(6000.0, 900.0).unwrap();
        let mut m = model();
        let mut seen = Vec::new();
        for t in 0..40 {
            let x: f64 = d.sample(&mut rng);
            seen.push(x);
            m.observe(41, x, t).unwrap();
        }
        let sample_mean = seen.iter().sum::<f64>() / seen.len() as f64;
        assert!((m.expected_bitrate(41).unwrap() - sample_mean).abs() < 0.05 * sample_mean);
    }

    #[test]
    fn shipped_table_matches_generator() {
        let generated = DefaultTable::from_video(&gen_synthetic_video(3600, 0, &RdParams::default())).unwrap();
        let shipped = DefaultTable::builtin();
        for crf in CRF_SET {
            let (g, s) = (generated.entry(crf).unwrap(), shipped.entry(crf).unwrap());
            assert!((g.mean_kbps - s.mean_kbps).abs() < 1e-6 * g.mean_kbps, "crf {crf}");
            assert!((g.std_kbps - s.std_kbps).abs() < 1e-6 * g.mean_kbps, "crf {crf}");
        }
        assert_eq!(DefaultTable::from_json(&shipped.to_json()).unwrap(), shipped);
    }
}
