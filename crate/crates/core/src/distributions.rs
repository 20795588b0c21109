//! Discrete probability mass functions on uniform value grids.
//!
//! Every forecast and every scheduling intermediate in this crate is a [`Pmf`]:
//! bandwidth and loss forecasts, the FEC-ratio distribution derived from a loss
//! forecast, and so on. A [`Grid`] fixes the support `{min, min + step, ..., max}`
//! and all operations here are pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total probability of a valid [`Pmf`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Half-cell bias used when snapping so that exact ties land on the upper point
/// even after floating point division rounds them down.
const TIE_EPSILON: f64 = 1e-9;

/// A uniform grid `min_value, min_value + interval, ..., max_value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr")]
pub struct Grid {
    min_value: f64,
    max_value: f64,
    interval: f64,
}

#[derive(Deserialize)]
struct GridRepr {
    min_value: f64,
    max_value: f64,
    interval: f64,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        Grid::new(r.min_value, r.max_value, r.interval)
    }
}

impl Grid {
    pub fn new(min_value: f64, max_value: f64, interval: f64) -> Result<Self> {
        if !(interval > 0.0) || !interval.is_finite() {
            return Err(Error::InvalidGrid(format!("interval must be > 0, got {interval}")));
        }
        if !(max_value > min_value) || !min_value.is_finite() || !max_value.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "max_value ({max_value}) must exceed min_value ({min_value})"
            )));
        }
        let cells = (max_value - min_value) / interval;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "range {} is not a multiple of interval {interval}",
                max_value - min_value
            )));
        }
        Ok(Self {
            min_value,
            max_value,
            interval,
        })
    }

    /// Bandwidth grid in kbps: 0..=15000 step 500.
    pub fn bandwidth_default() -> Self {
        Self::new(0.0, 15_000.0, 500.0).expect("static grid")
    }

    /// Loss-ratio grid: 0..=1 step 0.02.
    pub fn loss_default() -> Self {
        Self::new(0.0, 1.0, 0.02).expect("static grid")
    }

    /// FEC-ratio grid: 0..=2 step 0.01.
    pub fn fec_default() -> Self {
        Self::new(0.0, 2.0, 0.01).expect("static grid")
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    /// Number of grid points (the class count).
    pub fn len(&self) -> usize {
        ((self.max_value - self.min_value) / self.interval).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, index: usize) -> f64 {
        if index + 1 == self.len() {
            self.max_value
        } else {
            self.min_value + index as f64 * self.interval
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.value(i))
    }

    /// Index of the nearest grid point; out-of-range values clamp to the ends
    /// and ties go to the upper point.
    pub fn index_of(&self, x: f64) -> usize {
        if x.is_nan() {
            return 0;
        }
        let pos = ((x - self.min_value) / self.interval + 0.5 + TIE_EPSILON).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(self.len() - 1)
        }
    }

    pub fn snap(&self, x: f64) -> f64 {
        self.value(self.index_of(x))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min_value && x <= self.max_value
    }
}

/// A probability mass function over the points of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmfRepr")]
pub struct Pmf {
    grid: Grid,
    probabilities: Vec<f64>,
}

#[derive(Deserialize)]
struct PmfRepr {
    grid: Grid,
    probabilities: Vec<f64>,
}

impl TryFrom<PmfRepr> for Pmf {
    type Error = Error;

    fn try_from(r: PmfRepr) -> Result<Self> {
        Pmf::new(r.grid, r.probabilities)
    }
}

/// Result of pushing a [`Pmf`] through a value map.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub pmf: Pmf,
    /// Probability whose image was undefined (or non-finite) and was placed on
    /// the top output grid point instead.
    pub clamped_mass: f64,
}

impl Pmf {
    pub fn new(grid: Grid, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() != grid.len() {
            return Err(Error::InvalidPmf(format!(
                "{} probabilities for a grid of {} points",
                probabilities.len(),
                grid.len()
            )));
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidPmf(format!(
                "probability {p} is not a finite non-negative number"
            )));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidPmf(format!("probabilities sum to {total}")));
        }
        Ok(Self { grid, probabilities })
    }

    /// Normalizes non-negative weights into a PMF.
    pub fn from_weights(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidPmf(format!("weights sum to {total}")));
        }
        Self::new(grid, weights.into_iter().map(|w| w / total).collect())
    }

    /// All mass on the grid point nearest to `x`.
    pub fn point_mass(grid: Grid, x: f64) -> Self {
        let mut probabilities = vec![0.0; grid.len()];
        probabilities[grid.index_of(x)] = 1.0;
        Self { grid, probabilities }
    }

    /// Histogram estimator: each sample is snapped to its nearest grid point.
    pub fn from_samples(samples: &[f64], grid: Grid) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::NoSamples);
        }
        let mut counts = vec![0usize; grid.len()];
        for &s in samples {
            counts[grid.index_of(s)] += 1;
        }
        let total = samples.len() as f64;
        let probabilities = counts.into_iter().map(|c| c as f64 / total).collect();
        Ok(Self { grid, probabilities })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability_at(&self, x: f64) -> f64 {
        self.probabilities[self.grid.index_of(x)]
    }

    /// `(value, probability)` for every grid point with non-zero probability,
    /// in ascending value order.
    pub fn support(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, p)| (self.grid.value(i), *p))
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn expect(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| self.grid.value(i) * p)
            .sum()
    }

    /// Convex combination `weight_a * a + (1 - weight_a) * b`, renormalized.
    pub fn mix(a: &Pmf, b: &Pmf, weight_a: f64) -> Result<Pmf> {
        if a.grid != b.grid {
            return Err(Error::GridMismatch);
        }
        if !(0.0..=1.0).contains(&weight_a) {
            return Err(Error::InvalidWeight(weight_a));
        }
        if weight_a == 1.0 {
            return Ok(a.clone());
        }
        if weight_a == 0.0 {
            return Ok(b.clone());
        }
        let mixed: Vec<f64> = a
            .probabilities
            .iter()
            .zip(&b.probabilities)
            .map(|(pa, pb)| weight_a * pa + (1.0 - weight_a) * pb)
            .collect();
        let total: f64 = mixed.iter().sum();
        Ok(Pmf {
            grid: a.grid,
            probabilities: mixed.into_iter().map(|p| p / total).collect(),
        })
    }

    /// Pushes the distribution through `f`, accumulating each input point's
    /// probability onto the output point nearest to its image.
    ///
    /// Points where `f` returns `None` (or a non-finite value) send their mass to
    /// the top of `out_grid`; the amount is reported in
    /// [`Transformed::clamped_mass`]. Only points with non-zero probability are
    /// evaluated.
    pub fn transform(&self, f: impl Fn(f64) -> Option<f64>, out_grid: Grid) -> Transformed {
        let mut out = vec![0.0; out_grid.len()];
        let mut clamped_mass = 0.0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            match f(self.grid.value(i)).filter(|y| y.is_finite()) {
                Some(y) => out[out_grid.index_of(y)] += p,
                None => {
                    out[out_grid.len() - 1] += p;
                    clamped_mass += p;
                }
            }
        }
        Transformed {
            pmf: Pmf {
                grid: out_grid,
                probabilities: out,
            },
            clamped_mass,
        }
    }

    /// Cumulative probabilities `F(x_i)` at each grid point.
    pub fn cdf(&self) -> Vec<f64> {
        self.probabilities
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    /// Grid-discretized continuous ranked probability score of this forecast
    /// against the observation `y`: `sum_i (F(x_i) - 1[x_i >= y])^2 * interval`.
    pub fn crps(&self, y: f64) -> f64 {
        self.cdf()
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let step = if self.grid.value(i) >= y { 1.0 } else { 0.0 };
                (f - step).powi(2)
            })
            .sum::<f64>()
            * self.grid.interval
    }
}
