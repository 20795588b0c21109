//! Draws a synthetic uplink and video trace, labels the uplink and reports
//! regime statistics.

use livecast_lab::traces::{
    gen_synthetic_network, gen_synthetic_video, label_default, RdParams, RegimeParams, CRF_SET,
};

fn main() -> livecast_lab::Result<()> {
    let params = RegimeParams::default();
    let syn = gen_synthetic_network(3600, 7, &params)?;
    let labeled = label_default(&syn.trace);

    let (mut realloc, mut realloc_anom, mut other, mut other_anom) = (0, 0, 0, 0);
    for s in labeled.samples() {
        match (s.is_reallocation, s.is_anomaly) {
            (true, a) => {
                realloc += 1;
                realloc_anom += a as usize;
            }
            (false, a) => {
                other += 1;
                other_anom += a as usize;
            }
        }
    }
    println!(
        "reallocation seconds: {realloc}, anomalous {:.3}",
        realloc_anom as f64 / realloc as f64
    );
    println!(
        "other seconds: {other}, anomalous {:.3}",
        other_anom as f64 / other as f64
    );
    let recovered = labeled
        .samples()
        .iter()
        .zip(&syn.injected_anomaly)
        .filter(|(s, inj)| **inj && s.is_anomaly)
        .count();
    let injected = syn.injected_anomaly.iter().filter(|a| **a).count();
    println!("injected anomalies recovered by labeling: {recovered}/{injected}");

    let rd = RdParams::default();
    let video = gen_synthetic_video(600, 7, &rd);
    let cbr = video.cbr_variant(&rd);
    for crf in CRF_SET {
        let mean = |v: &livecast_lab::traces::VideoTrace, f: fn(&livecast_lab::traces::CrfRecord) -> f64| {
            v.seconds()
                .iter()
                .map(|s| f(s.record(crf).expect("all CRFs present")))
                .sum::<f64>()
                / v.len() as f64
        };
        println!(
            "crf {crf}: {:>7.0} kbps, VBR {:.2} dB, CBR {:.2} dB",
            mean(&video, |r| r.bitrate_kbps),
            mean(&video, |r| r.psnr_db),
            mean(&cbr, |r| r.psnr_db)
        );
    }
    Ok(())
}
