//! Generate a synthetic heterogeneous dataset and write it in the standard
//! trajectory CSV schema with its manifest.
//!
//! Run with: `cargo run --example synthesize_dataset`

use cliffmap::ingest::{class_proportions, make_windows, write_trajectory_csv};
use cliffmap::synth::{generate, ScenarioSpec};

fn main() -> cliffmap::Result<()> {
    println!("Two-class crossing scenario");
    println!("===========================\n");

    let spec = ScenarioSpec::two_class_crossing(42);
    let ds = generate(&spec)?;

    println!(
        "generated {} trajectories ({} steps each, dt {}s, unit {})",
        ds.trajectories.len(),
        spec.steps_per_traj,
        ds.dt,
        ds.unit
    );
    for c in &spec.classes {
        println!(
            "  class {:<4} {:?} at {:.1} units/s, heading {:.3} rad, {} agents",
            c.label, c.shape, c.speed, c.heading, c.count
        );
    }

    println!("\nclass proportions:");
    for (class, fraction) in class_proportions(&ds)? {
        println!("  {:<4} {:5.1}%", class.label, fraction * 100.0);
    }

    let instances = make_windows(&ds, 8, 12, 1);
    println!(
        "\nwindows: {} instances (8 observed + 12 future steps)",
        instances.len()
    );

    let out = std::path::Path::new("target/examples-out/synthesize_dataset");
    std::fs::create_dir_all(out)?;
    let csv = out.join("trajectories.csv");
    write_trajectory_csv(&ds.trajectories, &csv)?;
    std::fs::write(
        out.join("manifest.toml"),
        format!(
            "name = \"{}\"\nunit = \"meter\"\ndt = {}\nfiles = [\"trajectories.csv\"]\n",
            ds.name, ds.dt
        ),
    )?;
    println!("\nwrote {}", csv.display());
    println!("wrote {}", out.join("manifest.toml").display());
    Ok(())
}
