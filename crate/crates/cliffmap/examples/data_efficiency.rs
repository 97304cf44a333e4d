//! Data-efficiency sweep: how Top-1 ADE behaves as the train fraction drops
//! from 90% to 10%. Map-based predictors stay nearly flat once the major
//! motion patterns are captured.
//!
//! Run with: `cargo run --example data_efficiency`

use cliffmap::eval::{data_efficiency_sweep, write_aggregated_csv, EvalConfig, Method, WindowSpec};
use cliffmap::map::{FitConfig, GridSpec};
use cliffmap::predictor::{PredictionMode, PredictorParams};
use cliffmap::synth::{generate, ScenarioSpec};
use cliffmap::traj::PlanarVector;

fn main() -> cliffmap::Result<()> {
    println!("Data-efficiency sweep (Top-1, 10 iterations per ratio)");
    println!("=====================================================\n");

    let ds = generate(&ScenarioSpec::two_class_crossing(42))?;
    let cfg = EvalConfig {
        window: WindowSpec {
            o_p: 8,
            t_p: 12,
            stride: 1,
        },
        grid: GridSpec::new(2.5, PlanarVector::new(0.0, 0.0))?,
        fit: FitConfig {
            seed: 42,
            ..FitConfig::default()
        },
        predictor: PredictorParams::new(5.0, 2.5, ds.dt, 12, 1, PredictionMode::MostLikely)?,
    };
    let ratios = [0.1, 0.3, 0.5, 0.7, 0.9];

    let mut all = Vec::new();
    for method in [Method::Mod, Method::Cmod] {
        let results = data_efficiency_sweep(&ds, method, &ratios, 10, 42, &cfg, None)?;
        print!("{:<5}", method.to_string());
        for r in &results {
            print!("  p={:.1}: {:.4}", r.train_ratio, r.global_ade());
        }
        println!();
        all.extend(results);
    }

    let mod_results: Vec<_> = all.iter().filter(|r| r.method == Method::Mod).collect();
    let lo = mod_results.first().unwrap().global_ade();
    let hi = mod_results.last().unwrap().global_ade();
    println!(
        "\nMoD at p=0.1 is within {:.1}% of its p=0.9 value ({:.4} vs {:.4})",
        100.0 * (lo - hi).abs() / hi,
        lo,
        hi
    );

    let out = std::path::Path::new("target/examples-out/data_efficiency");
    std::fs::create_dir_all(out)?;
    write_aggregated_csv(&all, &out.join("sweep_agg.csv"))?;
    println!("wrote {}", out.join("sweep_agg.csv").display());
    Ok(())
}
