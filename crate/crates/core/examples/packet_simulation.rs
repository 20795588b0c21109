//! Sends one second of video through a lossy link at increasing FEC ratios.

use livecast_lab::scheduler::Decision;
use livecast_lab::simnet::{simulate_second, SimConfig};
use livecast_lab::traces::{gen_synthetic_video, NetworkSample, RdParams};

fn main() {
    let video = gen_synthetic_video(1, 3, &RdParams::default());
    let rec = video.seconds()[0].record(31).expect("crf 31 present");
    let link = NetworkSample::new(0, 12_000.0, 0.08, 40.0);
    let config = SimConfig::default();
    println!("crf 31 at {:.0} kbps over 8% loss", rec.bitrate_kbps);
    for alpha in [0.0, 0.05, 0.1, 0.2, 0.4] {
        let d = Decision {
            crf: 31,
            gamma: 60,
            alpha,
            predicted_bitrate_kbps: rec.bitrate_kbps,
        };
        let r = simulate_second(0, d, &rec.frame_sizes_bits, rec.psnr_db, &link, 11, &config);
        println!(
            "alpha {alpha:.2}: parity {:>3}, lost {:>3}, recovered {:>3}, frames {:>2}/{}, psnr {}",
            r.sent_parity,
            r.lost,
            r.recovered,
            r.frames_delivered,
            r.frames_offered,
            r.psnr_db.map_or("stall".to_string(), |p| format!("{p:.2}"))
        );
    }
}
