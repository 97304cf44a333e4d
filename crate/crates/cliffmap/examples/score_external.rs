//! Score externally produced predictions through the interchange CSV
//! (`instance_id,sample_idx,t,x,y`). Any predictor that can write this file
//! is benchmarked with exactly the same Top-K aggregation as the built-in
//! methods; here the "external" predictor is the constant velocity baseline
//! plus a deliberately degraded copy of it.
//!
//! Run with: `cargo run --example score_external`

use cliffmap::eval::{score_external, write_predictions_csv, ExternalPredictions};
use cliffmap::ingest::make_windows;
use cliffmap::predictor::{cvm_predict, PredictionSet};
use cliffmap::synth::{generate, ScenarioSpec};
use cliffmap::traj::PlanarVector;

fn main() -> cliffmap::Result<()> {
    println!("External prediction scoring");
    println!("===========================\n");

    let ds = generate(&ScenarioSpec::two_class_crossing(42))?;
    let instances = make_windows(&ds, 8, 12, 1);
    println!("{} instances to cover", instances.len());

    // Pretend an external model produced K = 2 samples per instance: the
    // baseline and the baseline shifted half a unit sideways.
    let sets: Vec<PredictionSet> = instances
        .iter()
        .map(|inst| {
            let base = cvm_predict(inst, 12, ds.dt);
            let shifted: Vec<PlanarVector> = base
                .iter()
                .map(|p| *p + PlanarVector::new(0.0, 0.5))
                .collect();
            PredictionSet {
                instance_id: inst.id(),
                samples: vec![base, shifted],
                used_fallback: false,
            }
        })
        .collect();

    let out = std::path::Path::new("target/examples-out/score_external");
    std::fs::create_dir_all(out)?;
    let pred_path = out.join("predictions.csv");
    write_predictions_csv(&sets, &pred_path)?;
    println!("wrote {}", pred_path.display());

    let preds = ExternalPredictions::load(&pred_path)?;
    let result = score_external(&preds, &instances, 2)?;
    println!("\nTop-2 scores:");
    for rec in result.records() {
        println!(
            "  {:<7}  ADE {:.4}  FDE {:.4}",
            rec.class_label(),
            rec.ade_mean,
            rec.fde_mean
        );
    }
    println!("\nthe min over samples picks the unshifted baseline, so the Top-2");
    println!("scores equal the baseline's despite the degraded second sample");
    Ok(())
}
