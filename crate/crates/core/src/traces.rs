//! Per-second network traces and per-second rate-distortion video traces.
//!
//! Network traces carry bandwidth, loss ratio and latency for each second and
//! are labeled with two flags: whether the second is a scheduled satellite
//! reallocation second, and whether it is a network anomaly (loss at or above
//! the anomaly threshold). Video traces carry, for each second and each CRF, the
//! encoded bitrate, PSNR and the 60 per-frame sizes of a one-second GOP.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder quality levels, best quality first.
pub const CRF_SET: [u32; 6] = [26, 31, 36, 41, 46, 51];
/// Frames per second at full frame rate; also the GOP length.
pub const GAMMA_MAX: usize = 60;
/// Seconds within each minute at which the uplink is reallocated.
pub const DEFAULT_REALLOCATION_SCHEDULE: [u32; 4] = [12, 27, 42, 57];
/// Loss ratio at or above which a second is an anomaly.
pub const DEFAULT_ANOMALY_THRESHOLD: f64 = 0.02;

pub const NETWORK_CSV_HEADER: &str = "t,bandwidth_kbps,loss_ratio,latency_ms";
pub const LABELED_NETWORK_CSV_HEADER: &str = "t,bandwidth_kbps,loss_ratio,latency_ms,is_reallocation,is_anomaly";
pub const VIDEO_CSV_HEADER: &str = "t,crf,bitrate_kbps,psnr_db,frame_sizes_bits";

pub fn crf_index(crf: u32) -> Option<usize> {
    CRF_SET.iter().position(|c| *c == crf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSample {
    pub t: u64,
    pub bandwidth_kbps: f64,
    pub loss_ratio: f64,
    pub latency_ms: f64,
    #[serde(default)]
    pub is_reallocation: bool,
    #[serde(default)]
    pub is_anomaly: bool,
}

impl NetworkSample {
    pub fn new(t: u64, bandwidth_kbps: f64, loss_ratio: f64, latency_ms: f64) -> Self {
        Self {
            t,
            bandwidth_kbps,
            loss_ratio,
            latency_ms,
            is_reallocation: false,
            is_anomaly: false,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.bandwidth_kbps >= 0.0) || !self.bandwidth_kbps.is_finite() {
            return Err(format!(
                "bandwidth_kbps {} must be a finite value >= 0",
                self.bandwidth_kbps
            ));
        }
        if !(0.0..=1.0).contains(&self.loss_ratio) {
            return Err(format!("loss_ratio {} outside [0, 1]", self.loss_ratio));
        }
        if !(self.latency_ms >= 0.0) || !self.latency_ms.is_finite() {
            return Err(format!("latency_ms {} must be a finite value >= 0", self.latency_ms));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkTrace {
    samples: Vec<NetworkSample>,
    labeled: bool,
}

impl NetworkTrace {
    /// Builds a trace, checking sample invariants and strictly increasing time.
    pub fn new(samples: Vec<NetworkSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            s.validate().map_err(Error::InvalidParams)?;
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::InvalidParams(format!(
                    "non-monotone timestamp {} at index {i}",
                    s.t
                )));
            }
        }
        Ok(Self {
            samples,
            labeled: false,
        })
    }

    pub fn samples(&self) -> &[NetworkSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labeled
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_network_trace(path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// CSV text; labeled traces carry the two flag columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.labeled {
            out.push_str(LABELED_NETWORK_CSV_HEADER);
        } else {
            out.push_str(NETWORK_CSV_HEADER);
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{},{},{},{}", s.t, s.bandwidth_kbps, s.loss_ratio, s.latency_ms);
            if self.labeled {
                let _ = write!(out, ",{},{}", s.is_reallocation as u8, s.is_anomaly as u8);
            }
            out.push('\n');
        }
        out
    }
}

/// Sets the reallocation and anomaly flags on every sample.
///
/// A second is a reallocation second iff `t mod 60` is in `schedule`; it is an
/// anomaly iff its loss ratio is at least `anomaly_threshold`.
pub fn label_regimes(trace: &NetworkTrace, schedule: &[u32], anomaly_threshold: f64) -> NetworkTrace {
    let samples = trace
        .samples
        .iter()
        .map(|s| NetworkSample {
            is_reallocation: is_reallocation_second(s.t, schedule),
            is_anomaly: s.loss_ratio >= anomaly_threshold,
            ..*s
        })
        .collect();
    NetworkTrace { samples, labeled: true }
}

/// [`label_regimes`] with the default schedule and 2% threshold.
pub fn label_default(trace: &NetworkTrace) -> NetworkTrace {
    label_regimes(trace, &DEFAULT_REALLOCATION_SCHEDULE, DEFAULT_ANOMALY_THRESHOLD)
}

pub fn is_reallocation_second(t: u64, schedule: &[u32]) -> bool {
    schedule.contains(&((t % 60) as u32))
}

/// Parameters of the two-regime synthetic uplink.
///
/// Bandwidth and latency are log-normal with the given means; loss is an
/// exponential. The anomalous regime scales the normal means by the factors
/// below and its loss is shifted to start at the anomaly threshold, so an
/// anomalous draw always labels as an anomaly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeParams {
    pub start_t: u64,
    pub schedule: Vec<u32>,
    pub anomaly_threshold: f64,
    /// Probability that a reallocation second is drawn from the anomalous regime.
    pub p_anomaly_reallocation: f64,
    /// Probability that any other second is drawn from the anomalous regime.
    pub p_anomaly_normal: f64,
    pub normal_bandwidth_mean_kbps: f64,
    pub normal_bandwidth_log_sigma: f64,
    pub anomaly_bandwidth_factor: f64,
    pub anomaly_bandwidth_log_sigma: f64,
    /// Loss floor of the normal regime; the exponential part sits on top of it.
    pub normal_loss_floor: f64,
    pub normal_loss_mean: f64,
    pub anomaly_loss_factor: f64,
    pub normal_latency_mean_ms: f64,
    pub latency_log_sigma: f64,
    pub anomaly_latency_factor: f64,
}

impl Default for RegimeParams {
    fn default() -> Self {
        Self {
            start_t: 0,
            schedule: DEFAULT_REALLOCATION_SCHEDULE.to_vec(),
            anomaly_threshold: DEFAULT_ANOMALY_THRESHOLD,
            p_anomaly_reallocation: 0.3073,
            p_anomaly_normal: 0.0432,
            normal_bandwidth_mean_kbps: 8_000.0,
            normal_bandwidth_log_sigma: 0.12,
            anomaly_bandwidth_factor: 0.76,
            anomaly_bandwidth_log_sigma: 0.2,
            normal_loss_floor: 0.01,
            normal_loss_mean: 0.012,
            anomaly_loss_factor: 16.0,
            normal_latency_mean_ms: 40.0,
            latency_log_sigma: 0.2,
            anomaly_latency_factor: 4.49,
        }
    }
}

impl RegimeParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        let non_negative = [
            ("normal_bandwidth_mean_kbps", self.normal_bandwidth_mean_kbps),
            ("normal_bandwidth_log_sigma", self.normal_bandwidth_log_sigma),
            ("anomaly_bandwidth_factor", self.anomaly_bandwidth_factor),
            ("anomaly_bandwidth_log_sigma", self.anomaly_bandwidth_log_sigma),
            ("normal_loss_floor", self.normal_loss_floor),
            ("normal_loss_mean", self.normal_loss_mean),
            ("anomaly_loss_factor", self.anomaly_loss_factor),
            ("normal_latency_mean_ms", self.normal_latency_mean_ms),
            ("latency_log_sigma", self.latency_log_sigma),
            ("anomaly_latency_factor", self.anomaly_latency_factor),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        for (name, p) in [
            ("p_anomaly_reallocation", self.p_anomaly_reallocation),
            ("p_anomaly_normal", self.p_anomaly_normal),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(self.anomaly_threshold > 0.0 && self.anomaly_threshold < 1.0) {
            return bad(format!(
                "anomaly_threshold must be in (0, 1), got {}",
                self.anomaly_threshold
            ));
        }
        if self.normal_loss_mean < self.normal_loss_floor {
            return bad("normal_loss_mean must be >= normal_loss_floor".into());
        }
        if self.anomaly_loss_mean() <= self.anomaly_threshold {
            return bad(format!(
                "anomalous loss mean {} must exceed the anomaly threshold {}",
                self.anomaly_loss_mean(),
                self.anomaly_threshold
            ));
        }
        if self.schedule.iter().any(|s| *s >= 60) {
            return bad("schedule entries must be seconds within a minute (< 60)".into());
        }
        Ok(())
    }

    pub fn anomaly_loss_mean(&self) -> f64 {
        self.normal_loss_mean * self.anomaly_loss_factor
    }

    pub fn anomaly_bandwidth_mean_kbps(&self) -> f64 {
        self.normal_bandwidth_mean_kbps * self.anomaly_bandwidth_factor
    }
}

/// A synthetic trace together with the regime each second was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticNetwork {
    pub trace: NetworkTrace,
    pub injected_anomaly: Vec<bool>,
}

fn log_normal_with_mean(mean: f64, log_sigma: f64) -> LogNormal<f64> {
    let mu = mean.max(f64::MIN_POSITIVE).ln() - log_sigma * log_sigma / 2.0;
    LogNormal::new(mu, log_sigma).expect("validated parameters")
}

/// Draws `duration_s` seconds of the two-regime uplink; deterministic in `seed`.
pub fn gen_synthetic_network(duration_s: usize, seed: u64, params: &RegimeParams) -> Result<SyntheticNetwork> {
    if duration_s == 0 {
        return Err(Error::InvalidParams("duration must be >= 1 s".into()));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let bw_normal = log_normal_with_mean(params.normal_bandwidth_mean_kbps, params.normal_bandwidth_log_sigma);
    let bw_anomaly = log_normal_with_mean(params.anomaly_bandwidth_mean_kbps(), params.anomaly_bandwidth_log_sigma);
    let lat_normal = log_normal_with_mean(params.normal_latency_mean_ms, params.latency_log_sigma);
    let lat_anomaly = log_normal_with_mean(
        params.normal_latency_mean_ms * params.anomaly_latency_factor,
        params.latency_log_sigma,
    );
    let normal_excess = params.normal_loss_mean - params.normal_loss_floor;
    let loss_normal = (normal_excess > 0.0).then(|| Exp::new(1.0 / normal_excess).expect("positive rate"));
    let loss_anomaly = Exp::new(1.0 / (params.anomaly_loss_mean() - params.anomaly_threshold)).expect("positive rate");

    let mut samples = Vec::with_capacity(duration_s);
    let mut injected = Vec::with_capacity(duration_s);
    for i in 0..duration_s {
        let t = params.start_t + i as u64;
        let p = if is_reallocation_second(t, &params.schedule) {
            params.p_anomaly_reallocation
        } else {
            params.p_anomaly_normal
        };
        let anomalous = rng.random::<f64>() < p;
        let (bandwidth_kbps, loss_ratio, latency_ms) = if anomalous {
            (
                bw_anomaly.sample(&mut rng),
                params.anomaly_threshold + loss_anomaly.sample(&mut rng),
                lat_anomaly.sample(&mut rng),
            )
        } else {
            let excess = loss_normal.map_or(0.0, |d| d.sample(&mut rng));
            (
                bw_normal.sample(&mut rng),
                params.normal_loss_floor + excess,
                lat_normal.sample(&mut rng),
            )
        };
        samples.push(NetworkSample::new(t, bandwidth_kbps, loss_ratio.min(1.0), latency_ms));
        injected.push(anomalous);
    }
    Ok(SyntheticNetwork {
        trace: NetworkTrace::new(samples)?,
        injected_anomaly: injected,
    })
}

/// [`gen_synthetic_network`] without the regime ground truth.
pub fn gen_synthetic_trace(duration_s: usize, seed: u64, params: &RegimeParams) -> Result<NetworkTrace> {
    Ok(gen_synthetic_network(duration_s, seed, params)?.trace)
}

pub fn load_network_trace(path: impl AsRef<Path>) -> Result<NetworkTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_network_csv(&text, path)
}

pub fn parse_network_csv(text: &str, path: &Path) -> Result<NetworkTrace> {
    let mut lines = text.lines().enumerate();
    let labeled = match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == NETWORK_CSV_HEADER => false,
        Some((_, h)) if h.trim_end_matches('\r') == LABELED_NETWORK_CSV_HEADER => true,
        Some((_, h)) => return Err(Error::parse(path, 1, format!("unexpected header `{h}`"))),
        None => return Err(Error::parse(path, 1, "missing header")),
    };
    let columns = if labeled { 6 } else { 4 };
    let mut samples: Vec<NetworkSample> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {columns} fields, found {}", fields.len()),
            ));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(path, line_no, format!("{name}: {e}")))
        };
        let t = fields[0]
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::parse(path, line_no, format!("t: {e}")))?;
        let mut sample = NetworkSample::new(
            t,
            num(1, "bandwidth_kbps")?,
            num(2, "loss_ratio")?,
            num(3, "latency_ms")?,
        );
        if labeled {
            let flag = |i: usize, name: &str| -> Result<bool> {
                match fields[i].trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::parse(
                        path,
                        line_no,
                        format!("{name}: expected 0 or 1, got `{other}`"),
                    )),
                }
            };
            sample.is_reallocation = flag(4, "is_reallocation")?;
            sample.is_anomaly = flag(5, "is_anomaly")?;
        }
        sample.validate().map_err(|m| Error::parse(path, line_no, m))?;
        if let Some(prev) = samples.last() {
            if sample.t <= prev.t {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("non-monotone timestamp {} after {}", sample.t, prev.t),
                ));
            }
        }
        samples.push(sample);
    }
    Ok(NetworkTrace { samples, labeled })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameType {
    I,
    P,
}

/// GOP layout of one second: an I-frame followed by P-frames.
pub fn gop_frame_types() -> [FrameType; GAMMA_MAX] {
    let mut types = [FrameType::P; GAMMA_MAX];
    types[0] = FrameType::I;
    types
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfRecord {
    pub crf: u32,
    pub bitrate_kbps: f64,
    pub psnr_db: f64,
    pub frame_sizes_bits: Vec<u64>,
}

impl CrfRecord {
    pub fn frame_types(&self) -> [FrameType; GAMMA_MAX] {
        gop_frame_types()
    }
}

/// One second of video encoded at every CRF, records ordered as [`CRF_SET`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSecond {
    pub t: u64,
    pub records: Vec<CrfRecord>,
}

impl VideoSecond {
    pub fn record(&self, crf: u32) -> Option<&CrfRecord> {
        self.records.iter().find(|r| r.crf == crf)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.records.len() != CRF_SET.len() {
            return Err(format!(
                "second {} has {} CRF records, expected {}",
                self.t,
                self.records.len(),
                CRF_SET.len()
            ));
        }
        for (r, crf) in self.records.iter().zip(CRF_SET) {
            if r.crf != crf {
                return Err(format!("second {}: expected crf {crf}, found {}", self.t, r.crf));
            }
            if r.frame_sizes_bits.len() != GAMMA_MAX {
                return Err(format!(
                    "second {} crf {}: {} frame sizes, expected {GAMMA_MAX}",
                    self.t,
                    crf,
                    r.frame_sizes_bits.len()
                ));
            }
            if !(r.bitrate_kbps > 0.0) || !r.bitrate_kbps.is_finite() || !r.psnr_db.is_finite() {
                return Err(format!("second {} crf {}: invalid bitrate or psnr", self.t, crf));
            }
            let total_kbit = r.frame_sizes_bits.iter().sum::<u64>() as f64 / 1000.0;
            if (total_kbit - r.bitrate_kbps).abs() > 0.01 * r.bitrate_kbps {
                return Err(format!(
                    "second {} crf {}: frame sizes sum to {total_kbit} kbit, bitrate is {}",
                    self.t, crf, r.bitrate_kbps
                ));
            }
        }
        if self.records.windows(2).any(|w| w[1].psnr_db > w[0].psnr_db) {
            return Err(format!("second {}: psnr increases with crf", self.t));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VideoTrace {
    seconds: Vec<VideoSecond>,
}

impl VideoTrace {
    pub fn new(seconds: Vec<VideoSecond>) -> Result<Self> {
        for (i, s) in seconds.iter().enumerate() {
            s.validate().map_err(Error::InvalidParams)?;
            if i > 0 && s.t <= seconds[i - 1].t {
                return Err(Error::InvalidParams(format!(
                    "non-monotone timestamp {} at index {i}",
                    s.t
                )));
            }
        }
        Ok(Self { seconds })
    }

    pub fn seconds(&self) -> &[VideoSecond] {
        &self.seconds
    }

    pub fn len(&self) -> usize {
        self.seconds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seconds.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_video_trace(path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.seconds.len() * CRF_SET.len() * 400);
        out.push_str(VIDEO_CSV_HEADER);
        out.push('\n');
        for s in &self.seconds {
            for r in &s.records {
                let _ = write!(out, "{},{},{},{},", s.t, r.crf, r.bitrate_kbps, r.psnr_db);
                for (i, size) in r.frame_sizes_bits.iter().enumerate() {
                    if i > 0 {
                        out.push(';');
                    }
                    let _ = write!(out, "{size}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Constant-bitrate counterpart of this (VBR) trace.
    ///
    /// Each CRF level becomes a CBR rung whose bitrate is the trace-wide mean of
    /// the VBR bitrate, so file sizes match. The CBR quality deficit is largest
    /// in complex scenes: per second it is
    /// `penalty_mean + penalty_std * z_t`, where `z_t` is the standardized log
    /// bitrate of the best-quality level at that second.
    pub fn cbr_variant(&self, rd: &RdParams) -> VideoTrace {
        if self.seconds.is_empty() {
            return VideoTrace::default();
        }
        let n = self.seconds.len() as f64;
        let rates: Vec<f64> = (0..CRF_SET.len())
            .map(|k| self.seconds.iter().map(|s| s.records[k].bitrate_kbps).sum::<f64>() / n)
            .collect();
        let log_complexity: Vec<f64> = self.seconds.iter().map(|s| s.records[0].bitrate_kbps.ln()).collect();
        let mean = log_complexity.iter().sum::<f64>() / n;
        let var = log_complexity.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();

        let seconds = self
            .seconds
            .iter()
            .zip(&log_complexity)
            .map(|(s, lc)| {
                let z = if sd > 0.0 { (lc - mean) / sd } else { 0.0 };
                let penalty = rd.cbr_penalty_mean_db + rd.cbr_penalty_std_db * z;
                let records = s
                    .records
                    .iter()
                    .zip(&rates)
                    .map(|(r, &rate)| CrfRecord {
                        crf: r.crf,
                        bitrate_kbps: rate,
                        psnr_db: r.psnr_db - penalty,
                        frame_sizes_bits: split_frames(rate, rd.i_frame_weight, &[1.0; GAMMA_MAX - 1]),
                    })
                    .collect();
                VideoSecond { t: s.t, records }
            })
            .collect();
        VideoTrace { seconds }
    }
}

/// Rate-distortion model of the synthetic encoder.
///
/// Bitrate at CRF `c` is `base_kbps * 2^(-(c - 26) / crf_halving_step) * x_t`,
/// where the complexity `x_t` follows scenes drawn from a two-component
/// log-normal mixture (static and dynamic content). PSNR is
/// `psnr_intercept_db - psnr_slope_db * c` plus a scene offset and per-second
/// noise shared by all CRFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RdParams {
    pub start_t: u64,
    pub base_kbps: f64,
    pub crf_halving_step: f64,
    pub dynamic_scene_probability: f64,
    pub static_complexity: f64,
    pub dynamic_complexity: f64,
    pub scene_log_sigma: f64,
    pub second_log_sigma: f64,
    pub mean_scene_s: f64,
    pub psnr_intercept_db: f64,
    pub psnr_slope_db: f64,
    pub static_psnr_offset_db: f64,
    pub dynamic_psnr_offset_db: f64,
    pub psnr_noise_db: f64,
    pub i_frame_weight: f64,
    pub p_frame_log_sigma: f64,
    pub cbr_penalty_mean_db: f64,
    pub cbr_penalty_std_db: f64,
}

impl Default for RdParams {
    fn default() -> Self {
        Self {
            start_t: 0,
            base_kbps: 8_000.0,
            crf_halving_step: 6.0,
            dynamic_scene_probability: 0.4,
            static_complexity: 0.75,
            dynamic_complexity: 1.5,
            scene_log_sigma: 0.15,
            second_log_sigma: 0.08,
            mean_scene_s: 20.0,
            psnr_intercept_db: 57.0,
            psnr_slope_db: 0.45,
            static_psnr_offset_db: 1.0,
            dynamic_psnr_offset_db: -1.0,
            psnr_noise_db: 0.3,
            i_frame_weight: 4.0,
            p_frame_log_sigma: 0.2,
            cbr_penalty_mean_db: 2.35,
            cbr_penalty_std_db: 3.27,
        }
    }
}

/// Splits `bitrate_kbps` into an I-frame of weight `i_weight` followed by P-frames
/// with the given relative weights; sizes are integers summing to the rounded
/// bit count.
fn split_frames(bitrate_kbps: f64, i_weight: f64, p_weights: &[f64]) -> Vec<u64> {
    let total_bits = (bitrate_kbps * 1000.0).round() as u64;
    let weight_sum = i_weight + p_weights.iter().sum::<f64>();
    let mut sizes = Vec::with_capacity(p_weights.len() + 1);
    let mut assigned = 0u64;
    for w in std::iter::once(&i_weight).chain(p_weights) {
        let size = (total_bits as f64 * w / weight_sum).floor() as u64;
        sizes.push(size);
        assigned += size;
    }
    // rounding remainder goes to the I-frame
    sizes[0] += total_bits - assigned;
    sizes
}

/// Synthesizes a VBR video trace; deterministic in `seed`.
pub fn gen_synthetic_video(duration_s: usize, seed: u64, rd: &RdParams) -> VideoTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seconds = Vec::with_capacity(duration_s);
    let mut scene_left = 0usize;
    let mut scene_complexity = 1.0;
    let mut scene_offset = 0.0;
    for i in 0..duration_s {
        if scene_left == 0 {
            let dynamic = rng.random::<f64>() < rd.dynamic_scene_probability;
            let center = if dynamic {
                rd.dynamic_complexity
            } else {
                rd.static_complexity
            };
            let z: f64 = rng.sample(StandardNormal);
            scene_complexity = center * (rd.scene_log_sigma * z).exp();
            scene_offset = if dynamic {
                rd.dynamic_psnr_offset_db
            } else {
                rd.static_psnr_offset_db
            };
            let u: f64 = rng.random();
            scene_left = 1 + (-(1.0 - u).ln() * (rd.mean_scene_s - 1.0).max(0.0)).floor() as usize;
        }
        scene_left -= 1;

        let z: f64 = rng.sample(StandardNormal);
        let complexity = scene_complexity * (rd.second_log_sigma * z - rd.second_log_sigma.powi(2) / 2.0).exp();
        let noise: f64 = rd.psnr_noise_db * rng.sample::<f64, _>(StandardNormal);
        let p_weights: Vec<f64> = (0..GAMMA_MAX - 1)
            .map(|_| (rd.p_frame_log_sigma * rng.sample::<f64, _>(StandardNormal)).exp())
            .collect();

        let records = CRF_SET
            .iter()
            .map(|&crf| {
                let bitrate = rd.base_kbps * 2f64.powf(-(crf as f64 - 26.0) / rd.crf_halving_step) * complexity;
                let frame_sizes_bits = split_frames(bitrate, rd.i_frame_weight, &p_weights);
                CrfRecord {
                    crf,
                    bitrate_kbps: bitrate,
                    psnr_db: rd.psnr_intercept_db - rd.psnr_slope_db * crf as f64 + scene_offset + noise,
                    frame_sizes_bits,
                }
            })
            .collect();
        seconds.push(VideoSecond {
            t: rd.start_t + i as u64,
            records,
        });
    }
    VideoTrace { seconds }
}

pub fn load_video_trace(path: impl AsRef<Path>) -> Result<VideoTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_video_csv(&text, path)
}

pub fn parse_video_csv(text: &str, path: &Path) -> Result<VideoTrace> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == VIDEO_CSV_HEADER => {}
        Some((_, h)) => return Err(Error::parse(path, 1, format!("unexpected header `{h}`"))),
        None => return Err(Error::parse(path, 1, "missing header")),
    }
    let mut seconds: Vec<VideoSecond> = Vec::new();
    let mut last_line = 1;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let err = |m: String| Error::parse(path, line_no, m);
        let t: u64 = fields[0].trim().parse().map_err(|e| err(format!("t: {e}")))?;
        let crf: u32 = fields[1].trim().parse().map_err(|e| err(format!("crf: {e}")))?;
        let bitrate_kbps: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| err(format!("bitrate_kbps: {e}")))?;
        let psnr_db: f64 = fields[3].trim().parse().map_err(|e| err(format!("psnr_db: {e}")))?;
        let frame_sizes_bits = fields[4]
            .split(';')
            .map(|s| s.trim().parse::<u64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(format!("frame_sizes_bits: {e}")))?;
        if crf_index(crf).is_none() {
            return Err(err(format!("crf {crf} not in {CRF_SET:?}")));
        }
        let record = CrfRecord {
            crf,
            bitrate_kbps,
            psnr_db,
            frame_sizes_bits,
        };
        match seconds.last_mut() {
            Some(s) if s.t == t => s.records.push(record),
            Some(s) if t < s.t => return Err(err(format!("non-monotone timestamp {t} after {}", s.t))),
            prev => {
                if let Some(s) = prev {
                    s.validate().map_err(|m| Error::parse(path, line_no - 1, m))?;
                }
                seconds.push(VideoSecond {
                    t,
                    records: vec![record],
                });
            }
        }
        last_line = line_no;
    }
    if let Some(s) = seconds.last() {
        s.validate().map_err(|m| Error::parse(path, last_line, m))?;
    }
    Ok(VideoTrace { seconds })
}
