//! Experiment configuration, execution, aggregation and output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    ControllerKind, Encoding, FbraController, FbraParams, LightFecController, RfecController, RfecParams,
    SchedulerController,
};
use crate::crf_model::{CrfBitrateModel, DefaultTable, DEFAULT_STARTUP_THRESHOLD};
use crate::distributions::Grid;
use crate::error::{Error, Result};
use crate::predictor::{
    fit_bimodal, BimodalModel, BimodalPredictor, EwmaPredictor, ExpectationPredictor, OraclePredictor, Predictor,
    PredictorConfig,
};
use crate::scheduler::{solve_horizon, QoeWeights};
use crate::simnet::{run_experiment, Controller, DecodePolicy, SecondReport, SimConfig};
use crate::traces::{
    gen_synthetic_network, gen_synthetic_video, label_regimes, load_network_trace, load_video_trace, NetworkTrace,
    RdParams, RegimeParams, VideoTrace,
};

pub const CDF_POINTS: usize = 101;
pub const SECONDS_CSV_HEADER: &str =
    "t,crf,gamma,alpha,sent_data,sent_parity,lost,recovered,frames_delivered,psnr_db,stall";

const STREAM_NETWORK: u64 = 1;
const STREAM_VIDEO: u64 = 2;
const STREAM_TRAINING: u64 = 3;
const STREAM_BENCH: u64 = 4;

/// Seed of an independent stream derived from a root seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSource {
    /// Trace CSV; when absent a synthetic trace is drawn per seed.
    pub path: Option<PathBuf>,
    pub synthetic: RegimeParams,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoSource {
    /// VBR trace CSV; when absent a synthetic trace is drawn per seed.
    pub path: Option<PathBuf>,
    pub synthetic: RdParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSource {
    /// Fitted bimodal model JSON; takes precedence over fitting.
    pub model_path: Option<PathBuf>,
    /// Trace CSV to fit on; otherwise a synthetic trace from the network parameters.
    pub path: Option<PathBuf>,
    pub duration_s: usize,
}

impl Default for TrainingSource {
    fn default() -> Self {
        Self {
            model_path: None,
            path: None,
            duration_s: 21_600,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorChoice {
    #[default]
    Bimodal,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub bandwidth: Grid,
    pub loss: Grid,
    pub fec: Grid,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            bandwidth: Grid::bandwidth_default(),
            loss: Grid::loss_default(),
            fec: Grid::fec_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    pub fbra: FbraParams,
    pub rfec: RfecParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub duration_s: usize,
    pub seeds: Vec<u64>,
    pub controllers: Vec<ControllerKind>,
    pub network: NetworkSource,
    pub video: VideoSource,
    pub training: TrainingSource,
    pub predictor: PredictorChoice,
    pub predictor_config: PredictorConfig,
    pub grids: Grids,
    pub qoe_weights: QoeWeights,
    pub decode_policy: DecodePolicy,
    pub calibration: Calibration,
    /// Default per-CRF bitrate table JSON; the shipped table when absent.
    pub crf_defaults: Option<PathBuf>,
    pub startup_threshold: usize,
    pub bench_calls: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            duration_s: 1440,
            seeds: vec![1, 2, 3, 4, 5],
            controllers: ControllerKind::ALL.to_vec(),
            network: NetworkSource::default(),
            video: VideoSource::default(),
            training: TrainingSource::default(),
            predictor: PredictorChoice::default(),
            predictor_config: PredictorConfig::default(),
            grids: Grids::default(),
            qoe_weights: QoeWeights::default(),
            decode_policy: DecodePolicy::default(),
            calibration: Calibration::default(),
            crf_defaults: None,
            startup_threshold: DEFAULT_STARTUP_THRESHOLD,
            bench_calls: 1000,
        }
    }
}

fn check_file(field: &str, path: &Option<PathBuf>) -> Result<()> {
    match path {
        Some(p) if !p.is_file() => Err(Error::config(field, format!("file {} does not exist", p.display()))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::config("--config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration_s == 0 {
            return Err(Error::config("duration_s", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        if self.controllers.is_empty() {
            return Err(Error::config("controllers", "must not be empty"));
        }
        let mut seen = self.controllers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.controllers.len() {
            return Err(Error::config("controllers", "duplicate controller"));
        }
        if self.training.duration_s == 0 {
            return Err(Error::config("training.duration_s", "must be >= 1"));
        }
        if self.startup_threshold == 0 {
            return Err(Error::config("startup_threshold", "must be >= 1"));
        }
        check_file("network.path", &self.network.path)?;
        check_file("video.path", &self.video.path)?;
        check_file("training.path", &self.training.path)?;
        check_file("training.model_path", &self.training.model_path)?;
        check_file("crf_defaults", &self.crf_defaults)?;
        self.network
            .synthetic
            .validate()
            .map_err(|e| Error::config("network.synthetic", e.to_string()))?;
        self.predictor_config.validate()?;
        self.qoe_weights.validate()?;
        Ok(())
    }

    pub fn default_table(&self) -> Result<DefaultTable> {
        match &self.crf_defaults {
            Some(p) => DefaultTable::load(p),
            None => Ok(DefaultTable::builtin()),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            decode_policy: self.decode_policy,
            shed: true,
            default_table: self.default_table()?,
            startup_threshold: self.startup_threshold,
        })
    }

    pub fn network_trace(&self, seed: u64) -> Result<NetworkTrace> {
        match &self.network.path {
            Some(p) => load_network_trace(p),
            None => Ok(gen_synthetic_network(
                self.duration_s,
                derive_seed(seed, STREAM_NETWORK),
                &self.network.synthetic,
            )?
            .trace),
        }
    }

    pub fn video_trace(&self, seed: u64, duration_s: usize) -> Result<VideoTrace> {
        match &self.video.path {
            Some(p) => load_video_trace(p),
            None => Ok(gen_synthetic_video(
                duration_s,
                derive_seed(seed, STREAM_VIDEO),
                &self.video.synthetic,
            )),
        }
    }

    /// Training trace, labeled with the configured schedule and threshold.
    pub fn training_trace(&self, seed: u64) -> Result<NetworkTrace> {
        let raw = match &self.training.path {
            Some(p) => load_network_trace(p)?,
            None => {
                gen_synthetic_network(
                    self.training.duration_s,
                    derive_seed(seed, STREAM_TRAINING),
                    &self.network.synthetic,
                )?
                .trace
            }
        };
        Ok(label_regimes(
            &raw,
            &self.network.synthetic.schedule,
            self.network.synthetic.anomaly_threshold,
        ))
    }

    pub fn bimodal_model(&self, seed: u64) -> Result<BimodalModel> {
        match &self.training.model_path {
            Some(p) => BimodalModel::load(p),
            None => fit_bimodal(
                &self.training_trace(seed)?,
                &self.network.synthetic.schedule,
                self.grids.bandwidth,
                self.grids.loss,
            ),
        }
    }
}

/// Everything a seed's runs share.
pub struct SeedInputs {
    pub seed: u64,
    pub network: NetworkTrace,
    pub vbr: VideoTrace,
    pub cbr: VideoTrace,
    pub model: BimodalModel,
}

impl SeedInputs {
    pub fn prepare(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        let network = config.network_trace(seed)?;
        let vbr = config.video_trace(seed, network.len())?;
        let cbr = vbr.cbr_variant(&config.video.synthetic);
        let model = config.bimodal_model(seed)?;
        Ok(Self {
            seed,
            network,
            vbr,
            cbr,
            model,
        })
    }

    pub fn video(&self, encoding: Encoding) -> &VideoTrace {
        match encoding {
            Encoding::Vbr => &self.vbr,
            Encoding::Cbr => &self.cbr,
        }
    }
}

fn probabilistic_predictor(config: &ExperimentConfig, inputs: &SeedInputs) -> Result<Box<dyn Predictor>> {
    let g = &config.grids;
    Ok(match config.predictor {
        PredictorChoice::Bimodal => Box::new(BimodalPredictor::new(inputs.model.clone())),
        PredictorChoice::Oracle => Box::new(OraclePredictor::new(inputs.network.clone(), g.bandwidth, g.loss)?),
    })
}

/// Builds a fresh controller for one run.
pub fn build_controller(
    kind: ControllerKind,
    config: &ExperimentConfig,
    inputs: &SeedInputs,
) -> Result<Box<dyn Controller>> {
    let g = &config.grids;
    let pc = &config.predictor_config;
    let scheduler = |predictor: Box<dyn Predictor>| -> Box<dyn Controller> {
        Box::new(SchedulerController::new(
            kind.name(),
            predictor,
            pc.clone(),
            config.qoe_weights,
            g.fec,
        ))
    };
    Ok(match kind {
        ControllerKind::Convolution => scheduler(probabilistic_predictor(config, inputs)?),
        ControllerKind::PointVbr | ControllerKind::PointCbr => {
            scheduler(Box::new(EwmaPredictor::new(pc.clone(), g.bandwidth, g.loss)))
        }
        ControllerKind::ExpectCbr => {
            let inner = probabilistic_predictor(config, inputs)?;
            scheduler(Box::new(ExpectationPredictor::new(inner, g.bandwidth, g.loss)))
        }
        ControllerKind::Fbra => Box::new(FbraController::new(config.calibration.fbra.clone())?),
        ControllerKind::Rfec => Box::new(RfecController::new(config.calibration.rfec.clone(), pc)),
        ControllerKind::LightFec => Box::new(LightFecController::new(pc)),
    })
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub controller: ControllerKind,
    pub reports: Vec<SecondReport>,
    pub elapsed_s: f64,
}

/// Runs every controller on every seed; results are ordered by seed, then by
/// the configured controller order.
pub fn run_suite(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let sim = config.sim_config()?;
    let inputs: Vec<SeedInputs> = config
        .seeds
        .par_iter()
        .map(|&s| SeedInputs::prepare(config, s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(&SeedInputs, ControllerKind)> = inputs
        .iter()
        .flat_map(|i| config.controllers.iter().map(move |k| (i, *k)))
        .collect();
    jobs.par_iter()
        .map(|&(inp, kind)| {
            let mut controller = build_controller(kind, config, inp)?;
            let start = Instant::now();
            let reports = run_experiment(
                &inp.network,
                inp.video(kind.encoding()),
                controller.as_mut(),
                inp.seed,
                &sim,
            )?;
            Ok(RunResult {
                seed: inp.seed,
                controller: kind,
                reports,
                elapsed_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Quantiles at probabilities 0, 0.01, ..., 1 (nearest rank).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub probabilities: Vec<f64>,
    pub values: Vec<f64>,
}

impl Cdf {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let probabilities: Vec<f64> = (0..CDF_POINTS).map(|i| i as f64 / (CDF_POINTS - 1) as f64).collect();
        let quantiles = if values.is_empty() {
            Vec::new()
        } else {
            let n = values.len();
            probabilities
                .iter()
                .map(|p| values[((p * (n - 1) as f64).round() as usize).min(n - 1)])
                .collect()
        };
        Self {
            probabilities,
            values: quantiles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSummary {
    pub controller: ControllerKind,
    pub seconds: usize,
    pub stalls: usize,
    /// Mean PSNR over non-stalled seconds.
    pub mean_psnr_db: f64,
    pub mean_fps: f64,
    /// Recovered over lost data packets, pooled over all seconds.
    pub recovery_ratio: f64,
    /// Recovered packets per parity packet, pooled over all seconds.
    pub parity_utility: f64,
    pub sent_data: u64,
    pub sent_parity: u64,
    pub lost: u64,
    pub lost_data: u64,
    pub recovered: u64,
    pub psnr_cdf: Cdf,
    pub fps_cdf: Cdf,
    pub recovery_cdf: Cdf,
    pub utility_cdf: Cdf,
}

impl ControllerSummary {
    pub fn from_reports<'a>(controller: ControllerKind, reports: impl IntoIterator<Item = &'a SecondReport>) -> Self {
        let reports: Vec<&SecondReport> = reports.into_iter().collect();
        let psnr: Vec<f64> = reports.iter().filter_map(|r| r.psnr_db).collect();
        let fps: Vec<f64> = reports.iter().map(|r| r.frames_delivered as f64).collect();
        let sum = |f: fn(&SecondReport) -> u64| reports.iter().map(|r| f(r)).sum::<u64>();
        let (sent_data, sent_parity, lost, lost_data, recovered) = (
            sum(|r| r.sent_data),
            sum(|r| r.sent_parity),
            sum(|r| r.lost),
            sum(|r| r.lost_data),
            sum(|r| r.recovered),
        );
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        Self {
            controller,
            seconds: reports.len(),
            stalls: reports.iter().filter(|r| r.is_stall()).count(),
            mean_psnr_db: mean(&psnr),
            mean_fps: mean(&fps),
            recovery_ratio: if lost_data == 0 {
                1.0
            } else {
                recovered as f64 / lost_data as f64
            },
            parity_utility: if sent_parity == 0 {
                0.0
            } else {
                recovered as f64 / sent_parity as f64
            },
            sent_data,
            sent_parity,
            lost,
            lost_data,
            recovered,
            psnr_cdf: Cdf::from_values(psnr),
            fps_cdf: Cdf::from_values(fps),
            recovery_cdf: Cdf::from_values(reports.iter().map(|r| r.recovery_ratio()).collect()),
            utility_cdf: Cdf::from_values(reports.iter().map(|r| r.parity_utility()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: Vec<u64>,
    pub seconds_per_seed: usize,
    /// Pooled over all seeds, in configured controller order.
    pub controllers: Vec<ControllerSummary>,
}

impl Summary {
    pub fn from_runs(config: &ExperimentConfig, runs: &[RunResult]) -> Self {
        let controllers = config
            .controllers
            .iter()
            .map(|&k| {
                ControllerSummary::from_reports(k, runs.iter().filter(|r| r.controller == k).flat_map(|r| &r.reports))
            })
            .collect();
        Self {
            seeds: config.seeds.clone(),
            seconds_per_seed: runs.first().map_or(0, |r| r.reports.len()),
            controllers,
        }
    }

    pub fn get(&self, kind: ControllerKind) -> Option<&ControllerSummary> {
        self.controllers.iter().find(|c| c.controller == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub seed: u64,
    pub controller: ControllerKind,
    pub elapsed_s: f64,
    pub mean_decision_ms: f64,
}

pub fn seconds_csv(reports: &[SecondReport]) -> String {
    let mut out = String::with_capacity(reports.len() * 64);
    out.push_str(SECONDS_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let d = &r.decision;
        let psnr = r.psnr_db.map_or(String::new(), |p| p.to_string());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            d.crf,
            d.gamma,
            d.alpha,
            r.sent_data,
            r.sent_parity,
            r.lost,
            r.recovered,
            r.frames_delivered,
            psnr,
            r.is_stall() as u8
        ));
    }
    out
}

/// Writes the resolved config, per-second CSVs, the summary and timings.
pub fn write_outputs(out: &Path, config: &ExperimentConfig, runs: &[RunResult], summary: &Summary) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(config)?)?;
    for r in runs {
        let dir = out.join(format!("seed_{}", r.seed));
        fs::create_dir_all(&dir)?;
        fs::write(
            dir.join(format!("seconds_{}.csv", r.controller)),
            seconds_csv(&r.reports),
        )?;
    }
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    let timing: Vec<RunTiming> = runs
        .iter()
        .map(|r| RunTiming {
            seed: r.seed,
            controller: r.controller,
            elapsed_s: r.elapsed_s,
            mean_decision_ms: 1000.0 * r.elapsed_s / r.reports.len().max(1) as f64,
        })
        .collect();
    fs::write(out.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
    Ok(())
}

/// Runs the suite and writes its outputs.
pub fn cmd_run(config: &ExperimentConfig, out: &Path) -> Result<Summary> {
    let runs = run_suite(config)?;
    let summary = Summary::from_runs(config, &runs);
    write_outputs(out, config, &runs, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub horizon: usize,
    pub calls: usize,
    pub median_ms: f64,
    pub std_ms: f64,
    pub mean_atoms_per_step: f64,
}

/// Times `solve_horizon` on bimodal forecasts over a minute of seconds with a
/// CRF model fitted on synthetic video.
pub fn bench_decision(config: &ExperimentConfig, seed: u64, horizon: usize, calls: usize) -> Result<BenchStats> {
    let model = config.bimodal_model(seed)?;
    let predictor = BimodalPredictor::new(model);
    let history = gen_synthetic_network(
        config.predictor_config.input_length.max(60),
        derive_seed(seed, STREAM_BENCH),
        &config.network.synthetic,
    )?
    .trace;
    let video = gen_synthetic_video(60, derive_seed(seed, STREAM_BENCH), &config.video.synthetic);
    let mut crf_model = CrfBitrateModel::new(&config.default_table()?, config.startup_threshold);
    for s in video.seconds() {
        for r in &s.records {
            crf_model.observe(r.crf, r.bitrate_kbps, s.t)?;
        }
    }
    let samples = history.samples();
    let forecasts: Vec<_> = (0..60)
        .map(|k| predictor.predict(&samples[..samples.len() - 60 + k + 1], horizon))
        .collect::<Result<_>>()?;
    let atoms: usize = forecasts
        .iter()
        .flatten()
        .map(|s| s.bandwidth.support().count() * s.loss.support().count())
        .sum();

    let mut times = Vec::with_capacity(calls);
    for i in 0..calls {
        let f = &forecasts[i % forecasts.len()];
        let start = Instant::now();
        let plan = solve_horizon(f, &crf_model, 36, &config.qoe_weights, config.grids.fec)?;
        times.push(start.elapsed().as_secs_f64() * 1000.0);
        std::hint::black_box(plan);
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let std_ms = (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n).sqrt();
    times.sort_by(f64::total_cmp);
    let median_ms = if times.len() % 2 == 1 {
        times[times.len() / 2]
    } else {
        0.5 * (times[times.len() / 2 - 1] + times[times.len() / 2])
    };
    Ok(BenchStats {
        horizon,
        calls,
        median_ms,
        std_ms,
        mean_atoms_per_step: atoms as f64 / (forecasts.len() * horizon) as f64,
    })
}

/// Writes the network trace `run` would use for `seed`.
pub fn cmd_gen_net(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let path = out.join("network.csv");
    config.network_trace(seed)?.save(&path)?;
    Ok(path)
}

/// Writes the VBR video trace `run` would use for `seed`, plus its CBR variant.
pub fn cmd_gen_video(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let vbr = config.video_trace(seed, config.duration_s)?;
    let cbr = vbr.cbr_variant(&config.video.synthetic);
    let paths = vec![out.join("video.csv"), out.join("video_cbr.csv")];
    vbr.save(&paths[0])?;
    cbr.save(&paths[1])?;
    Ok(paths)
}

/// Labels `network.path` (or a synthetic trace) and writes it with flag columns.
pub fn cmd_label(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let raw = config.network_trace(seed)?;
    let labeled = label_regimes(
        &raw,
        &config.network.synthetic.schedule,
        config.network.synthetic.anomaly_threshold,
    );
    let path = out.join("network_labeled.csv");
    labeled.save(&path)?;
    Ok(path)
}

pub fn cmd_fit_predictor(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<(PathBuf, BimodalModel)> {
    fs::create_dir_all(out)?;
    let model = fit_bimodal(
        &config.training_trace(seed)?,
        &config.network.synthetic.schedule,
        config.grids.bandwidth,
        config.grids.loss,
    )?;
    let path = out.join("bimodal_model.json");
    model.save(&path)?;
    Ok((path, model))
}

pub fn cmd_bench(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<BenchStats> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let stats = bench_decision(config, seed, config.predictor_config.horizon, config.bench_calls.max(1))?;
    fs::write(out.join("bench.json"), serde_json::to_string_pretty(&stats)?)?;
    Ok(stats)
}
