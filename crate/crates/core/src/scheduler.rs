//! Distribution-convolution scheduling of CRF, frame rate and FEC ratio.
//!
//! Predicted bandwidth and loss PMFs are turned into a distribution of the
//! bitrate left for video after per-frame packet overhead and parity. Each CRF is
//! scored by its expected reward over that distribution, the best-scoring atom
//! gives the concrete frame rate and FEC ratio, and a small dynamic program over
//! the prediction horizon trades quality against quality switches.

use serde::{Deserialize, Serialize};

use crate::crf_model::CrfBitrateModel;
use crate::distributions::{Grid, Pmf, Transformed};
use crate::error::{Error, Result};
use crate::predictor::PredictionStep;
use crate::traces::{CRF_SET, GAMMA_MAX};

/// Packet size in kbit.
pub const MTU_KBIT: f64 = 12.0;
pub const MTU_BITS: u64 = 12_000;
pub const CRF_MAX: u32 = 51;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub crf: u32,
    pub gamma: u32,
    pub alpha: f64,
    /// Bitrate the scheduler expects to be available for video, in kbps.
    pub predicted_bitrate_kbps: f64,
}

impl Decision {
    /// Lowest quality, full frame rate, no parity.
    pub fn fallback() -> Self {
        Self {
            crf: CRF_MAX,
            gamma: GAMMA_MAX as u32,
            alpha: 0.0,
            predicted_bitrate_kbps: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QoeWeights {
    pub frame_rate: f64,
    pub quality: f64,
    pub smoothness: f64,
}

impl Default for QoeWeights {
    fn default() -> Self {
        Self {
            frame_rate: 1.0,
            quality: 1.0,
            smoothness: 0.5,
        }
    }
}

impl QoeWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("frame_rate", self.frame_rate),
            ("quality", self.quality),
            ("smoothness", self.smoothness),
        ] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::config(
                    format!("qoe_weights.{name}"),
                    format!("{w} outside [0, 1]"),
                ));
            }
        }
        Ok(())
    }
}

/// One point of the available-bitrate distribution with the values it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitrateAtom {
    pub b: f64,
    pub probability: f64,
    pub w: f64,
    pub gamma: u32,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRateMass {
    pub w: f64,
    pub gamma: u32,
    pub probability: f64,
}

/// Smallest FEC ratio whose parity covers a loss ratio `l`: `1 / (1 - l) - 1`.
pub fn min_fec_ratio(l: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&l) {
        return Err(Error::InvalidParams(format!("loss ratio {l} outside [0, 1]")));
    }
    if l >= 1.0 {
        return Err(Error::TotalLoss);
    }
    Ok(1.0 / (1.0 - l) - 1.0)
}

/// Parity packets for `u` data packets at ratio `alpha`: `ceil(alpha * u)`.
///
/// A tolerance of 1e-9 keeps products that land on an integer up to rounding
/// error from gaining a spurious extra packet.
pub fn parity_count(alpha: f64, u: u64) -> u64 {
    let x = alpha * u as f64 - 1e-9;
    if x <= 0.0 {
        0
    } else {
        x.ceil() as u64
    }
}

/// FEC ratio distribution of a loss PMF; mass at total loss goes to the top of
/// `fec_grid` and is reported.
pub fn fec_ratio_distribution(loss: &Pmf, fec_grid: Grid) -> Transformed {
    loss.transform(|l| min_fec_ratio(l).ok(), fec_grid)
}

/// Largest frame rate whose per-frame packet overhead stays strictly below `w`
/// kbps, capped at 60.
pub fn frame_rate(w: f64) -> u32 {
    if !(w > 0.0) {
        return 0;
    }
    let gamma = (w / MTU_KBIT).ceil() - 1.0;
    gamma.clamp(0.0, GAMMA_MAX as f64) as u32
}

pub fn frame_rate_distribution(bandwidth: &Pmf) -> Vec<FrameRateMass> {
    bandwidth
        .support()
        .map(|(w, probability)| FrameRateMass {
            w,
            gamma: frame_rate(w),
            probability,
        })
        .collect()
}

/// Product of the frame-rate and FEC distributions, as bitrate atoms.
///
/// Atoms are ordered by bandwidth, then FEC ratio. Infeasible atoms keep their
/// probability with `b` clamped to 0.
pub fn available_bitrate_distribution(frame_rates: &[FrameRateMass], fec: &Pmf) -> Vec<BitrateAtom> {
    let fec_support: Vec<(f64, f64)> = fec.support().collect();
    let mut atoms = Vec::with_capacity(frame_rates.len() * fec_support.len());
    for fr in frame_rates {
        let goodput = fr.w - fr.gamma as f64 * MTU_KBIT;
        for &(alpha, pa) in &fec_support {
            atoms.push(BitrateAtom {
                b: (goodput / (1.0 + alpha)).max(0.0),
                probability: fr.probability * pa,
                w: fr.w,
                gamma: fr.gamma,
                alpha,
            });
        }
    }
    atoms
}

/// Atoms of one prediction step.
pub fn step_atoms(step: &PredictionStep, fec_grid: Grid) -> (Vec<BitrateAtom>, f64) {
    let fec = fec_ratio_distribution(&step.loss, fec_grid);
    let frame_rates = frame_rate_distribution(&step.bandwidth);
    (available_bitrate_distribution(&frame_rates, &fec.pmf), fec.clamped_mass)
}

/// Per-atom reward `P(b) * F_c(b) * E[M_c]` for every CRF.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    /// `scores[k][i]`: atom `i` under `CRF_SET[k]`.
    pub scores: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
}

impl ScoreTable {
    pub fn new(atoms: &[BitrateAtom], model: &CrfBitrateModel) -> Self {
        let mut scores = Vec::with_capacity(CRF_SET.len());
        let mut totals = Vec::with_capacity(CRF_SET.len());
        for crf in CRF_SET {
            let mix = model.distribution_for(crf).expect("crf from the crf set");
            let expected = mix.mean();
            let row: Vec<f64> = atoms
                .iter()
                .map(|a| a.probability * mix.cdf_below(a.b) * expected)
                .collect();
            totals.push(row.iter().sum());
            scores.push(row);
        }
        Self { scores, totals }
    }

    /// CRF with the highest total score; ties go to the larger CRF.
    pub fn best_crf(&self) -> u32 {
        let mut best = 0;
        for k in 1..CRF_SET.len() {
            if self.totals[k] >= self.totals[best] {
                best = k;
            }
        }
        CRF_SET[best]
    }

    /// Highest-scoring atom under `crf`; ties prefer larger `b`, then larger
    /// frame rate, then smaller FEC ratio.
    pub fn best_atom<'a>(&self, crf: u32, atoms: &'a [BitrateAtom]) -> &'a BitrateAtom {
        let k = CRF_SET.iter().position(|c| *c == crf).expect("crf from the crf set");
        let row = &self.scores[k];
        let mut best = 0;
        for i in 1..atoms.len() {
            let (a, b) = (&atoms[i], &atoms[best]);
            let better = row[i] > row[best]
                || (row[i] == row[best]
                    && (a.b > b.b || (a.b == b.b && (a.gamma > b.gamma || (a.gamma == b.gamma && a.alpha < b.alpha)))));
            if better {
                best = i;
            }
        }
        &atoms[best]
    }
}

pub fn select_crf(atoms: &[BitrateAtom], model: &CrfBitrateModel) -> Result<u32> {
    if atoms.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    Ok(ScoreTable::new(atoms, model).best_crf())
}

/// `(b, gamma, alpha)` of the best atom for `crf`.
pub fn backtrack_decision(crf: u32, atoms: &[BitrateAtom], table: &ScoreTable) -> Result<(f64, u32, f64)> {
    if atoms.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    if !CRF_SET.contains(&crf) {
        return Err(Error::UnknownCrf(crf));
    }
    let a = table.best_atom(crf, atoms);
    Ok((a.b, a.gamma, a.alpha))
}

/// Normalized per-second QoE: frame rate reward minus quality and switch penalties.
pub fn qoe_step(gamma: u32, crf: u32, crf_prev: u32, weights: &QoeWeights) -> f64 {
    let c_max = CRF_MAX as f64;
    weights.frame_rate * gamma as f64 / GAMMA_MAX as f64
        - weights.quality * crf as f64 / c_max
        - weights.smoothness * (crf as f64 - crf_prev as f64).abs() / c_max
}

/// A candidate decision at one horizon step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub crf: u32,
    pub gamma: u32,
    pub alpha: f64,
    pub b: f64,
}

impl Candidate {
    pub fn decision(&self) -> Decision {
        Decision {
            crf: self.crf,
            gamma: self.gamma,
            alpha: self.alpha,
            predicted_bitrate_kbps: self.b,
        }
    }
}

/// Candidates of every horizon step: CRFs no better than the step's best one,
/// each with its backtracked frame rate and FEC ratio.
#[derive(Debug, Clone)]
pub struct HorizonCandidates {
    pub steps: Vec<Vec<Candidate>>,
    pub clamped_loss_mass: f64,
}

pub fn horizon_candidates(
    predictions: &[PredictionStep],
    model: &CrfBitrateModel,
    fec_grid: Grid,
) -> Result<HorizonCandidates> {
    if predictions.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    let mut steps = Vec::with_capacity(predictions.len());
    let mut clamped_loss_mass = 0.0;
    for p in predictions {
        let (atoms, clamped) = step_atoms(p, fec_grid);
        clamped_loss_mass += clamped;
        let table = ScoreTable::new(&atoms, model);
        let best = table.best_crf();
        let cands = CRF_SET
            .iter()
            .filter(|c| **c >= best)
            .map(|&crf| {
                let a = table.best_atom(crf, &atoms);
                Candidate {
                    crf,
                    gamma: a.gamma,
                    alpha: a.alpha,
                    b: a.b,
                }
            })
            .collect();
        steps.push(cands);
    }
    Ok(HorizonCandidates {
        steps,
        clamped_loss_mass,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonPlan {
    pub decision: Decision,
    pub total_qoe: f64,
    pub path: Vec<Candidate>,
    /// Predicted loss mass at total loss, summed over steps.
    pub clamped_loss_mass: f64,
}

/// Best candidate path by cumulative QoE; ties go to larger CRFs.
pub fn best_path(candidates: &[Vec<Candidate>], crf_prev: u32, weights: &QoeWeights) -> (f64, Vec<Candidate>) {
    // value[t][j]: best cumulative QoE ending at candidate j of step t
    let mut value: Vec<Vec<f64>> = Vec::with_capacity(candidates.len());
    let mut parent: Vec<Vec<usize>> = Vec::with_capacity(candidates.len());
    for (t, cands) in candidates.iter().enumerate() {
        let mut v = Vec::with_capacity(cands.len());
        let mut par = Vec::with_capacity(cands.len());
        for cand in cands {
            if t == 0 {
                v.push(qoe_step(cand.gamma, cand.crf, crf_prev, weights));
                par.push(0);
                continue;
            }
            let mut best_j = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (j, prev) in candidates[t - 1].iter().enumerate() {
                let x = value[t - 1][j] + qoe_step(cand.gamma, cand.crf, prev.crf, weights);
                if x >= best_v {
                    best_v = x;
                    best_j = j;
                }
            }
            v.push(best_v);
            par.push(best_j);
        }
        value.push(v);
        parent.push(par);
    }

    let last = value.len() - 1;
    let mut j = 0;
    for (i, v) in value[last].iter().enumerate() {
        if *v >= value[last][j] {
            j = i;
        }
    }
    let total = value[last][j];
    let mut path = vec![candidates[last][j]; candidates.len()];
    for t in (0..last).rev() {
        j = parent[t + 1][j];
        path[t] = candidates[t][j];
    }
    (total, path)
}

/// Plans the horizon and returns the decision for its first second.
pub fn solve_horizon(
    predictions: &[PredictionStep],
    model: &CrfBitrateModel,
    crf_prev: u32,
    weights: &QoeWeights,
    fec_grid: Grid,
) -> Result<HorizonPlan> {
    let cands = horizon_candidates(predictions, model, fec_grid)?;
    let (total_qoe, path) = best_path(&cands.steps, crf_prev, weights);
    Ok(HorizonPlan {
        decision: path[0].decision(),
        total_qoe,
        path,
        clamped_loss_mass: cands.clamped_loss_mass,
    })
}
