//! Fits the per-CRF bitrate mixture over a synthetic VBR trace and prints the
//! default-distribution table derived from the generator.
//!
//! `cargo run --example crf_bitrate_model -- --table` prints only the JSON table.

use livecast_lab::crf_model::{CrfBitrateModel, DefaultTable};
use livecast_lab::traces::{gen_synthetic_video, RdParams, CRF_SET};

fn main() -> livecast_lab::Result<()> {
    let video = gen_synthetic_video(3600, 0, &RdParams::default());
    let table = DefaultTable::from_video(&video)?;
    if std::env::args().any(|a| a == "--table") {
        println!("{}", table.to_json());
        return Ok(());
    }

    let mut model = CrfBitrateModel::with_builtin_defaults();
    for s in &video.seconds()[..120] {
        for r in &s.records {
            model.observe(r.crf, r.bitrate_kbps, s.t)?;
        }
        if s.t % 30 == 29 {
            println!("t={}", s.t);
            for crf in CRF_SET {
                let mix = model.distribution_for(crf)?;
                println!(
                    "  crf {crf}: E={:.0} kbps  P(M < 3000)={:.3}  components={}",
                    mix.mean(),
                    mix.cdf_below(3000.0),
                    mix.components.len()
                );
            }
        }
    }
    Ok(())
}
