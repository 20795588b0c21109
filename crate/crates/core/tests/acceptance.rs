//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

// NaN must count as a failed comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use livecast_lab::baselines::ControllerKind;
use livecast_lab::crf_model::{CrfBitrateModel, DefaultTable};
use livecast_lab::harness::{bench_decision, cmd_run, ExperimentConfig, Summary};
use livecast_lab::predictor::{
    fit_bimodal, BimodalPredictor, EwmaPredictor, PredictionStep, Predictor, PredictorConfig,
};
use livecast_lab::scheduler::{horizon_candidates, min_fec_ratio, parity_count, qoe_step, solve_horizon, QoeWeights};
use livecast_lab::traces::{
    gen_synthetic_network, gen_synthetic_trace, label_default, label_regimes, RegimeParams, CRF_SET,
    DEFAULT_REALLOCATION_SCHEDULE,
};
use livecast_lab::{Grid, Pmf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1. ceil(alpha * u) equals the brute-force minimal parity count.
fn fec_minimality() -> Outcome {
    let start = Instant::now();
    let grid = Grid::loss_default();
    let mut mismatches = 0;
    let mut checked = 0;
    for k in 0..grid.len() {
        let l = grid.value(k);
        if l >= 1.0 {
            continue;
        }
        let alpha = min_fec_ratio(l).expect("l < 1");
        // l = k/50 exactly; survivors floor((u + p)(1 - l)) >= u in integers
        let keep = 50 - k as u64;
        for u in 1..=200u64 {
            let brute = (0..).find(|p| (u + p) * keep >= 50 * u).expect("finite");
            checked += 1;
            if parity_count(alpha, u) != brute {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(1),
        format!(
            "{checked} (u, l) pairs, {mismatches} mismatches, {:.3} s (limit 1 s)",
            secs(elapsed)
        ),
    )
}

fn random_model(rng: &mut ChaCha8Rng) -> CrfBitrateModel {
    let mut mean = rng.random_range(6000.0..14000.0);
    let mut entries = Vec::new();
    for crf in CRF_SET {
        let std = mean * rng.random_range(0.05..0.5);
        entries.push(format!("\"{crf}\": {{\"mean_kbps\": {mean}, \"std_kbps\": {std}}}"));
        mean *= rng.random_range(0.4..0.8);
    }
    let table = DefaultTable::from_json(&format!("{{{}}}", entries.join(","))).expect("valid table");
    CrfBitrateModel::new(&table, 10)
}

fn random_pmf(rng: &mut ChaCha8Rng, grid: Grid, max_index: usize, points: usize) -> Pmf {
    let mut w = vec![0.0; grid.len()];
    for _ in 0..points {
        w[rng.random_range(0..=max_index.min(grid.len() - 1))] += rng.random_range(0.01..1.0);
    }
    Pmf::from_weights(grid, w).expect("positive weights")
}

fn random_step(rng: &mut ChaCha8Rng) -> PredictionStep {
    let bg = Grid::bandwidth_default();
    let lg = Grid::loss_default();
    let nb = rng.random_range(1..=6);
    let nl = rng.random_range(1..=4);
    PredictionStep {
        bandwidth: random_pmf(rng, bg, bg.len() - 1, nb),
        loss: random_pmf(rng, lg, 25, nl),
    }
}

// 2. DP total equals exhaustive enumeration over candidate CRF sequences.
fn dp_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let fec = Grid::fec_default();
    let mut failures = 0;
    for case in 0..100 {
        let horizon = 1 + case % 3;
        let model = random_model(&mut rng);
        let steps: Vec<PredictionStep> = (0..horizon).map(|_| random_step(&mut rng)).collect();
        let weights = QoeWeights {
            frame_rate: rng.random_range(0.0..=1.0),
            quality: rng.random_range(0.0..=1.0),
            smoothness: rng.random_range(0.0..=1.0),
        };
        let crf_prev = CRF_SET[rng.random_range(0..CRF_SET.len())];
        let plan = solve_horizon(&steps, &model, crf_prev, &weights, fec).expect("non-empty");
        let cands = horizon_candidates(&steps, &model, fec).expect("non-empty").steps;

        let mut best = f64::NEG_INFINITY;
        let mut idx = vec![0usize; horizon];
        loop {
            let mut total = 0.0;
            let mut prev = crf_prev;
            for (t, &i) in idx.iter().enumerate() {
                let c = cands[t][i];
                total += qoe_step(c.gamma, c.crf, prev, &weights);
                prev = c.crf;
            }
            best = best.max(total);
            // odometer over candidate indices
            let mut t = horizon;
            loop {
                if t == 0 {
                    break;
                }
                t -= 1;
                idx[t] += 1;
                if idx[t] < cands[t].len() {
                    break;
                }
                idx[t] = 0;
            }
            if idx.iter().all(|i| *i == 0) {
                break;
            }
        }
        if plan.total_qoe != best {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(10),
        format!(
            "100 cases, eta 1..3, {failures} mismatches, {:.3} s (limit 10 s)",
            secs(elapsed)
        ),
    )
}

fn brute_nearest(grid: &Grid, y: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, v) in grid.values().enumerate() {
        let d = (v - y).abs();
        if d <= best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

fn random_grid(rng: &mut ChaCha8Rng) -> Grid {
    let interval = [0.01, 0.02, 0.5, 1.0, 250.0][rng.random_range(0..5)];
    let n = rng.random_range(2..120) as f64;
    let min = (rng.random_range(-20..20) as f64) * interval;
    Grid::new(min, min + n * interval, interval).expect("valid grid")
}

// 3. Randomized PMF operations stay normalized and transforms conserve mass.
fn pmf_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_norm: f64 = 0.0;
    let mut worst_point: f64 = 0.0;
    let ops = 10_000;
    for _ in 0..ops {
        let g = random_grid(&mut rng);
        let n = rng.random_range(1..20);
        let a = random_pmf(&mut rng, g, g.len() - 1, n);
        let result = match rng.random_range(0..4) {
            0 => a,
            1 => {
                let b = random_pmf(&mut rng, g, g.len() - 1, 5);
                Pmf::mix(&a, &b, rng.random_range(0.0..=1.0)).expect("same grid")
            }
            2 => {
                let samples: Vec<f64> = (0..rng.random_range(1..200))
                    .map(|_| rng.random_range(g.min_value() - 5.0..g.max_value() + 5.0))
                    .collect();
                Pmf::from_samples(&samples, g).expect("non-empty")
            }
            _ => {
                let out = random_grid(&mut rng);
                let (scale, shift) = (rng.random_range(-3.0..3.0), rng.random_range(-50.0..50.0));
                let cut = rng.random_range(g.min_value()..=g.max_value());
                let f = |x: f64| (x < cut).then(|| scale * x * x.abs().sqrt() + shift);
                let t = a.transform(f, out);
                let mut expect = vec![0.0; out.len()];
                for (i, &p) in a.probabilities().iter().enumerate() {
                    match f(g.value(i)) {
                        Some(y) => expect[brute_nearest(&out, y)] += p,
                        None => expect[out.len() - 1] += p,
                    }
                }
                for (got, want) in t.pmf.probabilities().iter().zip(&expect) {
                    worst_point = worst_point.max((got - want).abs());
                }
                t.pmf
            }
        };
        worst_norm = worst_norm.max((result.total() - 1.0).abs());
    }
    outcome(
        worst_norm <= 1e-9 && worst_point <= 1e-12,
        format!("{ops} ops, max |sum - 1| {worst_norm:.2e} (limit 1e-9), max transform point error {worst_point:.2e} (limit 1e-12)"),
    )
}

fn seconds_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut seeds: Vec<_> = fs::read_dir(dir)
        .expect("out dir")
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    seeds.sort();
    for s in seeds {
        let mut csvs: Vec<_> = fs::read_dir(&s)
            .expect("seed dir")
            .flatten()
            .map(|e| e.path())
            .collect();
        csvs.sort();
        for c in csvs {
            let name = c.strip_prefix(dir).expect("nested").display().to_string();
            files.push((name, fs::read(&c).expect("readable")));
        }
    }
    files
}

// 4. and 5./6. share the default experiment.
fn experiment() -> (Outcome, Outcome, Outcome) {
    let config = ExperimentConfig::default();
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let summary = cmd_run(&config, a.path()).expect("run");
    let elapsed = start.elapsed();
    cmd_run(&config, b.path()).expect("second run");

    let (fa, fb) = (seconds_files(a.path()), seconds_files(b.path()));
    let identical = !fa.is_empty() && fa == fb;
    let det = outcome(
        identical,
        format!("{} seconds CSVs compared, byte-identical: {identical}", fa.len()),
    );
    (det, ordering(&config, &summary, elapsed), ablation(&summary))
}

fn psnr(s: &Summary, k: ControllerKind) -> f64 {
    s.get(k).expect("controller ran").mean_psnr_db
}

fn ordering(config: &ExperimentConfig, s: &Summary, elapsed: Duration) -> Outcome {
    use ControllerKind::*;
    let conv = psnr(s, Convolution);
    let mut notes = Vec::new();
    let mut pass = true;
    for k in [Fbra, Rfec, LightFec, PointVbr, ExpectCbr, PointCbr] {
        let other = psnr(s, k);
        if !(conv > other) {
            pass = false;
            notes.push(format!("psnr convolution {conv:.3} <= {} {other:.3}", k.name()));
        }
    }
    let util = |k| s.get(k).expect("ran").parity_utility;
    if !(util(Convolution) > util(Rfec)) {
        pass = false;
        notes.push(format!(
            "utility convolution {:.4} <= rfec {:.4}",
            util(Convolution),
            util(Rfec)
        ));
    }
    let rec = |k| s.get(k).expect("ran").recovery_ratio;
    let rfec_rec = rec(Rfec);
    for c in &s.controllers {
        if c.controller != Rfec && c.recovery_ratio >= rfec_rec {
            pass = false;
            notes.push(format!(
                "recovery {} {:.4} >= rfec {rfec_rec:.4}",
                c.controller.name(),
                c.recovery_ratio
            ));
        }
    }
    let simulated_s = config.duration_s * config.seeds.len();
    if simulated_s < 7200 || config.seeds.len() < 5 {
        pass = false;
        notes.push("experiment shorter than 2 h or fewer than 5 seeds".into());
    }
    if elapsed >= Duration::from_secs(300) {
        pass = false;
        notes.push("runtime over 5 min".into());
    }
    let mut detail = format!(
        "{} seeds x {} s; psnr convolution {conv:.3}, next best {:.3}; utility {:.4} vs rfec {:.4}; rfec recovery {rfec_rec:.4}; {:.1} s (limit 300 s)",
        config.seeds.len(),
        config.duration_s,
        [Fbra, Rfec, LightFec, PointVbr, ExpectCbr, PointCbr].iter().map(|k| psnr(s, *k)).fold(f64::NEG_INFINITY, f64::max),
        util(Convolution),
        util(Rfec),
        secs(elapsed)
    );
    if !notes.is_empty() {
        detail.push_str("; ");
        detail.push_str(&notes.join("; "));
    }
    outcome(pass, detail)
}

fn ablation(s: &Summary) -> Outcome {
    use ControllerKind::*;
    let (conv, pvbr, pcbr, ecbr) = (
        psnr(s, Convolution),
        psnr(s, PointVbr),
        psnr(s, PointCbr),
        psnr(s, ExpectCbr),
    );
    outcome(
        conv >= pvbr && pvbr >= pcbr && conv >= ecbr,
        format!("psnr convolution {conv:.3}, point-vbr {pvbr:.3}, point-cbr {pcbr:.3}, expect-cbr {ecbr:.3}"),
    )
}

// 7. Bimodal forecasts beat EWMA point forecasts in CRPS.
fn predictor_quality() -> Outcome {
    let params = RegimeParams::default();
    let (bg, lg) = (Grid::bandwidth_default(), Grid::loss_default());
    let train = label_default(&gen_synthetic_trace(21_600, 101, &params).expect("trace"));
    let model = fit_bimodal(&train, &DEFAULT_REALLOCATION_SCHEDULE, bg, lg).expect("fit");
    let bimodal = BimodalPredictor::new(model);
    let ewma = EwmaPredictor::new(PredictorConfig::default(), bg, lg);
    let test = gen_synthetic_trace(10_500, 202, &params).expect("trace");
    let s = test.samples();
    let (mut bw, mut bl, mut ew, mut el) = (0.0, 0.0, 0.0, 0.0);
    let mut n = 0usize;
    for i in 180..s.len() {
        let pb = &bimodal.predict(&s[..i], 1).expect("history")[0];
        let pe = &ewma.predict(&s[..i], 1).expect("history")[0];
        bw += pb.bandwidth.crps(s[i].bandwidth_kbps);
        bl += pb.loss.crps(s[i].loss_ratio);
        ew += pe.bandwidth.crps(s[i].bandwidth_kbps);
        el += pe.loss.crps(s[i].loss_ratio);
        n += 1;
    }
    let nf = n as f64;
    outcome(
        n >= 10_000 && bw < ew && bl < el,
        format!(
            "p_anomaly {}, {n} predictions; bandwidth CRPS {:.1} vs {:.1}, loss CRPS {:.5} vs {:.5}",
            params.p_anomaly_reallocation,
            bw / nf,
            ew / nf,
            bl / nf,
            el / nf
        ),
    )
}

// 8. Median decision time at the default grids and horizon 5.
fn decision_latency() -> Outcome {
    let config = ExperimentConfig::default();
    let stats = bench_decision(&config, 1, 5, 1000).expect("bench");
    outcome(
        stats.median_ms < 20.0,
        format!(
            "median {:.3} ms over {} calls (limit 20 ms)",
            stats.median_ms, stats.calls
        ),
    )
}

// 9. Labeling recovers the injected anomalies.
fn labeling() -> Outcome {
    let params = RegimeParams::default();
    let syn = gen_synthetic_network(100_000, 9, &params).expect("trace");
    let labeled = label_regimes(&syn.trace, &params.schedule, params.anomaly_threshold);
    let injected = syn.injected_anomaly.iter().filter(|a| **a).count();
    let found = labeled
        .samples()
        .iter()
        .zip(&syn.injected_anomaly)
        .filter(|(s, inj)| **inj && s.is_anomaly)
        .count();
    let ratio = found as f64 / injected as f64;
    outcome(
        ratio >= 0.99,
        format!("{found}/{injected} injected anomalies labeled ({ratio:.4}, limit 0.99)"),
    )
}

fn main() {
    let (det, order, abl) = experiment();
    let results = [
        ("1 fec minimality", fec_minimality()),
        ("2 dp exactness", dp_exactness()),
        ("3 pmf algebra", pmf_algebra()),
        ("4 determinism", det),
        ("5 directional ordering", order),
        ("6 ablation monotonicity", abl),
        ("7 predictor crps", predictor_quality()),
        ("8 decision latency", decision_latency()),
        ("9 anomaly labeling", labeling()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
