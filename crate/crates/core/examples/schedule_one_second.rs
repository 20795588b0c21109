//! Plans a five-second horizon for a forecast whose third second is a likely
//! reallocation burst, and prints the score table of the first second.

use livecast_lab::crf_model::CrfBitrateModel;
use livecast_lab::predictor::PredictionStep;
use livecast_lab::scheduler::{solve_horizon, step_atoms, QoeWeights, ScoreTable};
use livecast_lab::traces::CRF_SET;
use livecast_lab::{Grid, Pmf};

fn main() -> livecast_lab::Result<()> {
    let (bg, lg, fg) = (Grid::bandwidth_default(), Grid::loss_default(), Grid::fec_default());
    let calm = PredictionStep {
        bandwidth: Pmf::from_samples(&[7500.0, 8000.0, 8000.0, 8500.0], bg)?,
        loss: Pmf::point_mass(lg, 0.02),
    };
    let burst = PredictionStep {
        bandwidth: Pmf::mix(&Pmf::point_mass(bg, 6000.0), &calm.bandwidth, 0.6)?,
        loss: Pmf::mix(&Pmf::point_mass(lg, 0.2), &calm.loss, 0.6)?,
    };
    let steps = vec![calm.clone(), calm.clone(), burst, calm.clone(), calm];
    let model = CrfBitrateModel::with_builtin_defaults();

    let (atoms, _) = step_atoms(&steps[0], fg);
    let table = ScoreTable::new(&atoms, &model);
    for (crf, score) in CRF_SET.iter().zip(&table.totals) {
        println!("crf {crf}: score {score:.1}");
    }

    let plan = solve_horizon(&steps, &model, 41, &QoeWeights::default(), fg)?;
    println!("total QoE {:.3}", plan.total_qoe);
    for (k, c) in plan.path.iter().enumerate() {
        let d = c.decision();
        println!(
            "  step {k}: crf {} gamma {} alpha {:.2} b {:.0} kbps",
            d.crf, d.gamma, d.alpha, d.predicted_bitrate_kbps
        );
    }
    Ok(())
}
