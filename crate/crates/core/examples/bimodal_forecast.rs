//! Fits the bimodal predictor on a training trace and compares its CRPS with an
//! EWMA point forecast on a held-out trace.

use livecast_lab::predictor::{fit_bimodal, BimodalPredictor, EwmaPredictor, Predictor, PredictorConfig};
use livecast_lab::traces::{gen_synthetic_trace, label_default, RegimeParams, DEFAULT_REALLOCATION_SCHEDULE};
use livecast_lab::Grid;

fn main() -> livecast_lab::Result<()> {
    let params = RegimeParams::default();
    let (bg, lg) = (Grid::bandwidth_default(), Grid::loss_default());
    let train = label_default(&gen_synthetic_trace(21_600, 1, &params)?);
    let model = fit_bimodal(&train, &DEFAULT_REALLOCATION_SCHEDULE, bg, lg)?;
    println!(
        "p_anomaly reallocation {:.4}, other {:.4}",
        model.p_anomaly_reallocation, model.p_anomaly_normal
    );
    println!(
        "E[bandwidth] normal {:.0}, anomaly {:.0}; E[loss] normal {:.4}, anomaly {:.4}",
        model.bandwidth_normal.expect(),
        model.bandwidth_anomaly.expect(),
        model.loss_normal.expect(),
        model.loss_anomaly.expect()
    );

    let test = gen_synthetic_trace(7200, 2, &params)?;
    let bimodal = BimodalPredictor::new(model);
    let ewma = EwmaPredictor::new(PredictorConfig::default(), bg, lg);
    let samples = test.samples();
    let (mut crps_b, mut crps_e, mut n) = (0.0, 0.0, 0);
    for i in 180..samples.len() {
        let truth = samples[i].loss_ratio;
        crps_b += bimodal.predict(&samples[..i], 1)?[0].loss.crps(truth);
        crps_e += ewma.predict(&samples[..i], 1)?[0].loss.crps(truth);
        n += 1;
    }
    println!(
        "loss CRPS over {n} one-step forecasts: bimodal {:.5}, ewma {:.5}",
        crps_b / n as f64,
        crps_e / n as f64
    );
    Ok(())
}
