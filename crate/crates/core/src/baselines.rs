//! Controllers: the distribution-convolution scheduler and the reference
//! schemes it is compared against.
//!
//! - `convolution`: bimodal probabilistic forecast, horizon scheduler, VBR video.
//! - `fbra`: bitrate/FEC state machine on CBR video.
//! - `rfec`: fills half the estimated bandwidth with video and the rest with parity, CBR.
//! - `lightfec`: FEC ratio from an EWMA loss estimate, CBR.
//! - `point-vbr`, `expect-cbr`, `point-cbr`: the scheduler fed with point forecasts
//!   (EWMA, or the expectation of the bimodal forecast) on VBR or CBR video.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::Grid;
use crate::error::{Error, Result};
use crate::predictor::{ewma, history_window, Predictor, PredictorConfig};
use crate::scheduler::{min_fec_ratio, solve_horizon, Decision, QoeWeights, MTU_KBIT};
use crate::simnet::{Controller, DecisionContext};
use crate::traces::{CRF_SET, GAMMA_MAX};

/// Upper bound on the FEC ratio of every controller.
pub const ALPHA_CAP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Vbr,
    Cbr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "convolution")]
    Convolution,
    #[serde(rename = "fbra")]
    Fbra,
    #[serde(rename = "rfec")]
    Rfec,
    #[serde(rename = "lightfec")]
    LightFec,
    #[serde(rename = "point-vbr")]
    PointVbr,
    #[serde(rename = "expect-cbr")]
    ExpectCbr,
    #[serde(rename = "point-cbr")]
    PointCbr,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 7] = [
        ControllerKind::Convolution,
        ControllerKind::Fbra,
        ControllerKind::Rfec,
        ControllerKind::LightFec,
        ControllerKind::PointVbr,
        ControllerKind::ExpectCbr,
        ControllerKind::PointCbr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Convolution => "convolution",
            ControllerKind::Fbra => "fbra",
            ControllerKind::Rfec => "rfec",
            ControllerKind::LightFec => "lightfec",
            ControllerKind::PointVbr => "point-vbr",
            ControllerKind::ExpectCbr => "expect-cbr",
            ControllerKind::PointCbr => "point-cbr",
        }
    }

    pub fn encoding(self) -> Encoding {
        match self {
            ControllerKind::Convolution | ControllerKind::PointVbr => Encoding::Vbr,
            _ => Encoding::Cbr,
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("controllers", format!("unknown controller `{s}`")))
    }
}

/// The horizon scheduler driven by any predictor.
pub struct SchedulerController {
    name: String,
    predictor: Box<dyn Predictor>,
    config: PredictorConfig,
    weights: QoeWeights,
    fec_grid: Grid,
    short_history_decisions: usize,
}

impl SchedulerController {
    pub fn new(
        name: impl Into<String>,
        predictor: Box<dyn Predictor>,
        config: PredictorConfig,
        weights: QoeWeights,
        fec_grid: Grid,
    ) -> Self {
        Self {
            name: name.into(),
            predictor,
            config,
            weights,
            fec_grid,
            short_history_decisions: 0,
        }
    }

    /// Decisions made with fewer than `input_length` seconds of history.
    pub fn short_history_decisions(&self) -> usize {
        self.short_history_decisions
    }
}

impl Controller for SchedulerController {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        if ctx.history.is_empty() {
            return Ok(Decision::fallback());
        }
        if ctx.history.len() < self.config.input_length {
            self.short_history_decisions += 1;
        }
        let steps = self.predictor.predict(ctx.history, self.config.horizon)?;
        let plan = solve_horizon(&steps, ctx.crf_model, ctx.crf_prev, &self.weights, self.fec_grid)?;
        Ok(plan.decision)
    }
}

fn ewma_estimate(ctx: &DecisionContext<'_>, input_length: usize, factor: f64) -> Option<(f64, f64)> {
    let (window, _) = history_window(ctx.history, input_length).ok()?;
    Some(ewma(&window, factor))
}

/// Best-quality CRF whose expected bitrate times `scale` fits `budget_kbps`;
/// the lowest quality when none fits.
fn best_crf_within(ctx: &DecisionContext<'_>, budget_kbps: f64, scale: f64) -> Result<u32> {
    for crf in CRF_SET {
        if scale * ctx.crf_model.expected_bitrate(crf)? <= budget_kbps {
            return Ok(crf);
        }
    }
    Ok(*CRF_SET.last().expect("non-empty crf set"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfecParams {
    /// Share of the estimated bandwidth given to video.
    pub video_share: f64,
}

impl Default for RfecParams {
    fn default() -> Self {
        Self { video_share: 0.5 }
    }
}

/// Saturating FEC: video gets a fixed share of the EWMA bandwidth estimate and
/// parity fills what remains after per-frame packet overhead.
pub struct RfecController {
    params: RfecParams,
    input_length: usize,
    ewma_factor: f64,
}

impl RfecController {
    pub fn new(params: RfecParams, config: &PredictorConfig) -> Self {
        Self {
            params,
            input_length: config.input_length,
            ewma_factor: config.ewma_factor,
        }
    }

    /// Decision for a bandwidth estimate `w`.
    pub fn decide_for(&self, ctx: &DecisionContext<'_>, w: f64) -> Result<Decision> {
        let crf = best_crf_within(ctx, self.params.video_share * w, 1.0)?;
        let e = ctx.crf_model.expected_bitrate(crf)?;
        let residual = w - e - GAMMA_MAX as f64 * MTU_KBIT;
        Ok(Decision {
            crf,
            gamma: GAMMA_MAX as u32,
            alpha: (residual / e).clamp(0.0, ALPHA_CAP),
            predicted_bitrate_kbps: e,
        })
    }
}

impl Controller for RfecController {
    fn name(&self) -> &str {
        ControllerKind::Rfec.name()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        match ewma_estimate(ctx, self.input_length, self.ewma_factor) {
            Some((w, _)) => self.decide_for(ctx, w),
            None => Ok(Decision::fallback()),
        }
    }
}

/// FEC ratio covering the EWMA loss estimate; the best CRF whose bitrate plus
/// parity fits the EWMA bandwidth estimate.
pub struct LightFecController {
    input_length: usize,
    ewma_factor: f64,
}

impl LightFecController {
    pub fn new(config: &PredictorConfig) -> Self {
        Self {
            input_length: config.input_length,
            ewma_factor: config.ewma_factor,
        }
    }

    pub fn decide_for(&self, ctx: &DecisionContext<'_>, w: f64, loss: f64) -> Result<Decision> {
        let alpha = min_fec_ratio(loss.min(1.0)).map_or(ALPHA_CAP, |a| a.min(ALPHA_CAP));
        let crf = best_crf_within(ctx, w, 1.0 + alpha)?;
        Ok(Decision {
            crf,
            gamma: GAMMA_MAX as u32,
            alpha,
            predicted_bitrate_kbps: ctx.crf_model.expected_bitrate(crf)?,
        })
    }
}

impl Controller for LightFecController {
    fn name(&self) -> &str {
        ControllerKind::LightFec.name()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        match ewma_estimate(ctx, self.input_length, self.ewma_factor) {
            Some((w, loss)) => self.decide_for(ctx, w, loss),
            None => Ok(Decision::fallback()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FbraState {
    Up,
    Stay,
    Down,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FbraParams {
    pub initial_crf: u32,
    pub loss_threshold: f64,
    /// Consecutive lossy seconds that trigger DOWN.
    pub down_after_s: u32,
    /// Consecutive clean seconds that trigger an UP step (or PROBE from DOWN).
    pub up_after_s: u32,
    pub probe_s: u32,
    pub stay_alpha: f64,
    pub down_alpha: f64,
}

impl Default for FbraParams {
    fn default() -> Self {
        Self {
            initial_crf: 41,
            loss_threshold: 0.02,
            down_after_s: 3,
            up_after_s: 10,
            probe_s: 5,
            stay_alpha: 0.05,
            down_alpha: 0.1,
        }
    }
}

/// Four-state bitrate and FEC state machine driven by the last observed second.
///
/// STAY holds the current CRF and steps it one level worse when its expected
/// bitrate with parity exceeds the last observed bandwidth. Sustained loss sends
/// it to DOWN (lowest quality, more parity). A clean run from STAY passes
/// through UP, which improves quality by one level; from DOWN it starts a
/// PROBE one level better, which settles into STAY if it stays clean.
pub struct FbraController {
    params: FbraParams,
    state: FbraState,
    crf_index: usize,
    lossy_run: u32,
    clean_run: u32,
    probe_left: u32,
}

impl FbraController {
    pub fn new(params: FbraParams) -> Result<Self> {
        let crf_index = CRF_SET
            .iter()
            .position(|c| *c == params.initial_crf)
            .ok_or(Error::UnknownCrf(params.initial_crf))?;
        Ok(Self {
            params,
            state: FbraState::Stay,
            crf_index,
            lossy_run: 0,
            clean_run: 0,
            probe_left: 0,
        })
    }

    pub fn state(&self) -> FbraState {
        self.state
    }

    pub fn crf(&self) -> u32 {
        CRF_SET[self.crf_index]
    }

    fn alpha(&self) -> f64 {
        match self.state {
            FbraState::Down | FbraState::Probe => self.params.down_alpha,
            FbraState::Up | FbraState::Stay => self.params.stay_alpha,
        }
    }

    /// Advances the machine with the last observed `(bandwidth, loss)`.
    pub fn step(&mut self, bandwidth_kbps: f64, loss: f64, expected_bitrate: impl Fn(u32) -> f64) {
        let lossy = loss > self.params.loss_threshold;
        if lossy {
            self.lossy_run += 1;
            self.clean_run = 0;
        } else {
            self.clean_run += 1;
            self.lossy_run = 0;
        }
        let worst = CRF_SET.len() - 1;

        if self.lossy_run >= self.params.down_after_s {
            self.state = FbraState::Down;
            self.crf_index = worst;
            return;
        }
        match self.state {
            FbraState::Down => {
                if self.clean_run >= self.params.up_after_s {
                    self.state = FbraState::Probe;
                    self.crf_index = worst.saturating_sub(1);
                    self.probe_left = self.params.probe_s;
                    self.clean_run = 0;
                }
            }
            FbraState::Probe => {
                if lossy {
                    self.state = FbraState::Down;
                    self.crf_index = worst;
                } else {
                    self.probe_left = self.probe_left.saturating_sub(1);
                    if self.probe_left == 0 {
                        self.state = FbraState::Stay;
                        self.clean_run = 0;
                    }
                }
            }
            FbraState::Up | FbraState::Stay => {
                self.state = FbraState::Stay;
                let need = (1.0 + self.alpha()) * expected_bitrate(CRF_SET[self.crf_index]);
                if need > bandwidth_kbps && self.crf_index < worst {
                    self.crf_index += 1;
                    self.clean_run = 0;
                } else if self.clean_run >= self.params.up_after_s && self.crf_index > 0 {
                    self.state = FbraState::Up;
                    self.crf_index -= 1;
                    self.clean_run = 0;
                }
            }
        }
    }
}

impl Controller for FbraController {
    fn name(&self) -> &str {
        ControllerKind::Fbra.name()
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        if let Some(last) = ctx.history.last() {
            let model = ctx.crf_model;
            self.step(last.bandwidth_kbps, last.loss_ratio, |c| {
                model.expected_bitrate(c).unwrap_or(f64::INFINITY)
            });
        }
        Ok(Decision {
            crf: self.crf(),
            gamma: GAMMA_MAX as u32,
            alpha: self.alpha(),
            predicted_bitrate_kbps: ctx.crf_model.expected_bitrate(self.crf())?,
        })
    }
}
