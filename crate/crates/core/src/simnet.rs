//! Packet-level delivery simulator.
//!
//! Each simulated second the controller picks `(crf, gamma, alpha)`. The GOP of
//! the chosen CRF is trimmed to `gamma` frames, frames are shed until data plus
//! parity fits the actual bandwidth, every packet is dropped independently at
//! the actual loss ratio, and a frame is recovered when at least as many of its
//! packets arrive as it has data packets (ideal erasure code).
//!
//! Every random draw is a pure function of `(seed, second, ...)`, so two
//! controllers run on the same seed see the same packet fates: packet `j` of
//! frame `f` is lost for one controller iff it is lost for the other.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crf_model::{CrfBitrateModel, DefaultTable};
use crate::error::{Error, Result};
use crate::scheduler::{parity_count, Decision, MTU_BITS};
use crate::traces::{gop_frame_types, FrameType, NetworkSample, NetworkTrace, VideoTrace, CRF_SET, GAMMA_MAX};

const STREAM_TRIM: u64 = 0xffff_0001;
const STREAM_SHED: u64 = 0xffff_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodePolicy {
    /// A P-frame decodes whenever it and its second's I-frame arrive.
    #[default]
    IndependentP,
    /// A P-frame also needs every earlier frame of its second.
    Cascade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramePackets {
    /// Position in the 60-frame GOP.
    pub index: usize,
    pub frame_type: FrameType,
    pub data: u64,
    pub parity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondReport {
    pub t: u64,
    pub decision: Decision,
    pub sent_data: u64,
    pub sent_parity: u64,
    /// Lost packets, data and parity.
    pub lost: u64,
    /// Lost data packets.
    pub lost_data: u64,
    pub recovered: u64,
    pub frames_offered: u32,
    pub frames_delivered: u32,
    /// PSNR weighted by the delivered fraction; `None` marks a stall.
    pub psnr_db: Option<f64>,
}

impl SecondReport {
    pub fn is_stall(&self) -> bool {
        self.psnr_db.is_none()
    }

    /// Recovered over lost data packets; 1.0 when no data packet was lost.
    pub fn recovery_ratio(&self) -> f64 {
        if self.lost_data == 0 {
            1.0
        } else {
            self.recovered as f64 / self.lost_data as f64
        }
    }

    /// Recovered packets per parity packet; 0 without parity.
    pub fn parity_utility(&self) -> f64 {
        if self.sent_parity == 0 {
            0.0
        } else {
            self.recovered as f64 / self.sent_parity as f64
        }
    }
}

/// What a controller sees when deciding second `t`.
pub struct DecisionContext<'a> {
    pub t: u64,
    /// Network samples of all seconds before `t`.
    pub history: &'a [NetworkSample],
    pub crf_model: &'a CrfBitrateModel,
    pub crf_prev: u32,
}

pub trait Controller: Send {
    fn name(&self) -> &str;
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision>;
    /// Called with the outcome of each second after it is simulated.
    fn observe(&mut self, _report: &SecondReport) {}
}

pub fn packetize(frame_size_bits: u64) -> u64 {
    frame_size_bits.div_ceil(MTU_BITS)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_key(seed: u64, t: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ t) ^ (a << 32 | (b & 0xffff_ffff)))
}

/// Uniform draw in [0, 1) for packet `packet` of frame `frame` at second `t`.
pub fn packet_draw(seed: u64, t: u64, frame: usize, packet: u64) -> f64 {
    (draw_key(seed, t, frame as u64, packet) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn stream_rng(seed: u64, t: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(draw_key(seed, t, stream, 0))
}

/// Keeps the I-frame and `gamma - 1` uniformly chosen P-frames; nothing for `gamma = 0`.
pub fn trim_to_frame_rate(frames: Vec<FramePackets>, gamma: u32, rng: &mut impl Rng) -> Vec<FramePackets> {
    let gamma = gamma as usize;
    if gamma >= frames.len() {
        return frames;
    }
    if gamma == 0 {
        return Vec::new();
    }
    let p_positions: Vec<usize> = (0..frames.len())
        .filter(|i| frames[*i].frame_type == FrameType::P)
        .collect();
    let drop = frames.len() - gamma;
    let mut dropped = vec![false; frames.len()];
    for k in sample(rng, p_positions.len(), drop.min(p_positions.len())) {
        dropped[p_positions[k]] = true;
    }
    frames
        .into_iter()
        .zip(dropped)
        .filter(|(_, d)| !d)
        .map(|(f, _)| f)
        .collect()
}

/// Removes random P-frames (then I-frames) until data and parity fit `budget_kbps`.
pub fn shed_frames(mut frames: Vec<FramePackets>, budget_kbps: f64, rng: &mut impl Rng) -> Vec<FramePackets> {
    let budget_bits = budget_kbps * 1000.0;
    let mut load: u64 = frames.iter().map(|f| (f.data + f.parity) * MTU_BITS).sum();
    while load as f64 > budget_bits {
        let p_positions: Vec<usize> = (0..frames.len())
            .filter(|i| frames[*i].frame_type == FrameType::P)
            .collect();
        let victim = if p_positions.is_empty() {
            0
        } else {
            p_positions[rng.random_range(0..p_positions.len())]
        };
        let f = frames.remove(victim);
        load -= (f.data + f.parity) * MTU_BITS;
    }
    frames
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub delivered: Vec<bool>,
    pub lost: u64,
    pub lost_data: u64,
    pub recovered: u64,
}

/// Bernoulli loss per packet; data packets are `0..data`, parity follows.
pub fn transmit_and_recover(frames: &[FramePackets], loss: f64, seed: u64, t: u64) -> Transmission {
    let mut out = Transmission {
        delivered: Vec::with_capacity(frames.len()),
        lost: 0,
        lost_data: 0,
        recovered: 0,
    };
    for f in frames {
        let mut lost_data = 0;
        let mut lost_parity = 0;
        for j in 0..f.data + f.parity {
            if packet_draw(seed, t, f.index, j) < loss {
                if j < f.data {
                    lost_data += 1;
                } else {
                    lost_parity += 1;
                }
            }
        }
        let ok = f.data + f.parity - lost_data - lost_parity >= f.data;
        out.lost += lost_data + lost_parity;
        out.lost_data += lost_data;
        if ok {
            out.recovered += lost_data;
        }
        out.delivered.push(ok);
    }
    out
}

/// Decodable frames given arrival flags of the retained frames, in GOP order.
pub fn decode_accounting(frames: &[FramePackets], delivered: &[bool], policy: DecodePolicy) -> u32 {
    let Some(first) = frames.first() else {
        return 0;
    };
    if first.frame_type != FrameType::I || !delivered[0] {
        return 0;
    }
    match policy {
        DecodePolicy::IndependentP => delivered.iter().filter(|d| **d).count() as u32,
        DecodePolicy::Cascade => delivered.iter().take_while(|d| **d).count() as u32,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub decode_policy: DecodePolicy,
    /// Enables congestion shedding against the actual bandwidth.
    pub shed: bool,
    pub default_table: DefaultTable,
    pub startup_threshold: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            decode_policy: DecodePolicy::default(),
            shed: true,
            default_table: DefaultTable::builtin(),
            startup_threshold: crate::crf_model::DEFAULT_STARTUP_THRESHOLD,
        }
    }
}

fn check_decision(d: &Decision) -> Result<()> {
    if !CRF_SET.contains(&d.crf) {
        return Err(Error::UnknownCrf(d.crf));
    }
    if d.gamma as usize > GAMMA_MAX {
        return Err(Error::InvalidParams(format!(
            "frame rate {} above {GAMMA_MAX}",
            d.gamma
        )));
    }
    if !(d.alpha >= 0.0) || !d.alpha.is_finite() {
        return Err(Error::InvalidParams(format!("fec ratio {} must be >= 0", d.alpha)));
    }
    Ok(())
}

/// Simulates one second for an already made decision.
pub fn simulate_second(
    t: u64,
    decision: Decision,
    frame_sizes_bits: &[u64],
    psnr_db: f64,
    actual: &NetworkSample,
    seed: u64,
    config: &SimConfig,
) -> SecondReport {
    let frames: Vec<FramePackets> = frame_sizes_bits
        .iter()
        .zip(gop_frame_types())
        .enumerate()
        .filter_map(|(index, (&bits, frame_type))| {
            let data = packetize(bits);
            (data > 0).then(|| FramePackets {
                index,
                frame_type,
                data,
                parity: parity_count(decision.alpha, data),
            })
        })
        .collect();

    let frames = trim_to_frame_rate(frames, decision.gamma, &mut stream_rng(seed, t, STREAM_TRIM));
    let frames_offered = frames.len() as u32;
    let frames = if config.shed {
        shed_frames(frames, actual.bandwidth_kbps, &mut stream_rng(seed, t, STREAM_SHED))
    } else {
        frames
    };
    let tx = transmit_and_recover(&frames, actual.loss_ratio, seed, t);
    let frames_delivered = decode_accounting(&frames, &tx.delivered, config.decode_policy);
    SecondReport {
        t,
        decision,
        sent_data: frames.iter().map(|f| f.data).sum(),
        sent_parity: frames.iter().map(|f| f.parity).sum(),
        lost: tx.lost,
        lost_data: tx.lost_data,
        recovered: tx.recovered,
        frames_offered,
        frames_delivered,
        psnr_db: (frames_delivered > 0).then(|| psnr_db * frames_delivered as f64 / decision.gamma as f64),
    }
}

/// Runs `controller` over the traces and returns one report per second.
///
/// The loop owns the CRF bitrate model and feeds it the realized bitrate of the
/// chosen CRF after each second.
pub fn run_experiment(
    network: &NetworkTrace,
    video: &VideoTrace,
    controller: &mut dyn Controller,
    seed: u64,
    config: &SimConfig,
) -> Result<Vec<SecondReport>> {
    if network.len() != video.len() {
        return Err(Error::DurationMismatch {
            network: network.len(),
            video: video.len(),
        });
    }
    let mut model = CrfBitrateModel::new(&config.default_table, config.startup_threshold);
    let mut crf_prev = *CRF_SET.last().expect("non-empty crf set");
    let samples = network.samples();
    let mut reports = Vec::with_capacity(samples.len());
    for (i, (actual, second)) in samples.iter().zip(video.seconds()).enumerate() {
        let ctx = DecisionContext {
            t: actual.t,
            history: &samples[..i],
            crf_model: &model,
            crf_prev,
        };
        let decision = controller.decide(&ctx)?;
        check_decision(&decision)?;
        let record = second.record(decision.crf).ok_or(Error::UnknownCrf(decision.crf))?;
        let report = simulate_second(
            actual.t,
            decision,
            &record.frame_sizes_bits,
            record.psnr_db,
            actual,
            seed,
            config,
        );
        controller.observe(&report);
        reports.push(report);
        model.observe(decision.crf, record.bitrate_kbps, actual.t)?;
        crf_prev = decision.crf;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(sizes: &[(u64, u64)]) -> Vec<FramePackets> {
        sizes
            .iter()
            .enumerate()
            .map(|(index, &(data, parity))| FramePackets {
                index,
                frame_type: if index == 0 { FrameType::I } else { FrameType::P },
                data,
                parity,
            })
            .collect()
    }

    #[test]
    fn packetize_examples() {
        assert_eq!(packetize(12_000), 1);
        assert_eq!(packetize(12_001), 2);
        assert_eq!(packetize(360_000), 30);
        assert_eq!(packetize(0), 0);
    }

    #[test]
    fn shedding_budget_cases() {
        let fs = frames(&[(3, 1); 60]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(shed_frames(fs.clone(), 1e9, &mut rng).len(), 60);
        assert!(shed_frames(fs.clone(), 0.0, &mut rng).is_empty());
        // 30 frames of 4 packets of 12 kbit
        let kept = shed_frames(fs.clone(), 30.0 * 4.0 * 12.0, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(kept.len(), 30);
        assert_eq!(kept[0].frame_type, FrameType::I);
        assert_eq!(
            kept,
            shed_frames(fs, 30.0 * 4.0 * 12.0, &mut ChaCha8Rng::seed_from_u64(7))
        );
    }

    #[test]
    fn trimming_keeps_i_frame() {
        let fs = frames(&[(2, 0); 60]);
        let kept = trim_to_frame_rate(fs.clone(), 24, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(kept.len(), 24);
        assert_eq!(kept[0].index, 0);
        assert!(kept.windows(2).all(|w| w[0].index < w[1].index));
        assert!(trim_to_frame_rate(fs, 0, &mut ChaCha8Rng::seed_from_u64(3)).is_empty());
    }

    #[test]
    fn lossless_transmission() {
        let fs = frames(&[(10, 2); 5]);
        let tx = transmit_and_recover(&fs, 0.0, 1, 0);
        assert!(tx.delivered.iter().all(|d| *d));
        assert_eq!((tx.lost, tx.lost_data, tx.recovered), (0, 0, 0));
    }

    #[test]
    fn recovery_threshold() {
        // find seconds where frame 0 loses exactly 2 or exactly 3 of its 12 packets
        let fs = frames(&[(10, 2)]);
        let loss = 0.2;
        let lost_at = |t: u64| (0..12).filter(|j| packet_draw(9, t, 0, *j) < loss).count();
        let t2 = (0..).find(|t| lost_at(*t) == 2).unwrap();
        let t3 = (0..).find(|t| lost_at(*t) == 3).unwrap();
        assert!(transmit_and_recover(&fs, loss, 9, t2).delivered[0]);
        assert!(!transmit_and_recover(&fs, loss, 9, t3).delivered[0]);
        let no_parity = frames(&[(10, 0)]);
        let t1 = (0..)
            .find(|t| (0..10).any(|j| packet_draw(9, *t, 0, j) < loss))
            .unwrap();
        assert!(!transmit_and_recover(&no_parity, loss, 9, t1).delivered[0]);
    }

    #[test]
    fn decode_examples() {
        let fs = frames(&[(1, 0); 60]);
        let all = vec![true; 60];
        assert_eq!(decode_accounting(&fs, &all, DecodePolicy::IndependentP), 60);
        let mut no_i = all.clone();
        no_i[0] = false;
        assert_eq!(decode_accounting(&fs, &no_i, DecodePolicy::IndependentP), 0);
        let mut gap = all.clone();
        gap[10] = false;
        assert_eq!(decode_accounting(&fs, &gap, DecodePolicy::IndependentP), 59);
        assert_eq!(decode_accounting(&fs, &gap, DecodePolicy::Cascade), 10);
    }

    #[test]
    fn report_ratios() {
        let r = SecondReport {
            t: 0,
            decision: Decision::fallback(),
            sent_data: 10,
            sent_parity: 0,
            lost: 0,
            lost_data: 0,
            recovered: 0,
            frames_offered: 60,
            frames_delivered: 60,
            psnr_db: Some(30.0),
        };
        assert_eq!(r.recovery_ratio(), 1.0);
        assert_eq!(r.parity_utility(), 0.0);
    }
}
