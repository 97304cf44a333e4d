//! Build general and class-conditioned CLiFF-maps from synthetic data, save
//! them to the self-describing map container and round-trip it.
//!
//! Run with: `cargo run --example build_maps`

use cliffmap::map::{
    build_conditioned, export_field_to_path, load_map, save_map, FitConfig, GridSpec,
};
use cliffmap::synth::{generate, ScenarioSpec};
use cliffmap::traj::PlanarVector;

fn main() -> cliffmap::Result<()> {
    println!("CLiFF-map construction");
    println!("======================\n");

    let ds = generate(&ScenarioSpec::two_class_crossing(42))?;
    let grid = GridSpec::new(2.5, PlanarVector::new(0.0, 0.0))?;
    let cfg = FitConfig {
        seed: 42,
        ..FitConfig::default()
    };

    let set = build_conditioned(&ds.trajectories, &grid, ds.unit, &cfg)?;

    let describe = |name: &str, map: &cliffmap::CliffMap| {
        let total: usize = map.intensity().values().sum();
        let multimodal = map
            .cells()
            .values()
            .filter(|m| m.num_components() > 1)
            .count();
        println!(
            "  {:<8} {:>3} cells, {:>5} observations, {:>2} multimodal cells",
            name,
            map.len(),
            total,
            multimodal
        );
    };
    println!("built maps (resolution {}):", grid.resolution);
    describe("general", &set.general);
    for (class, map) in &set.per_class {
        describe(&class.label, map);
    }

    // Where the corridors cross, the general map carries both motion modes.
    println!("\ncrossing cells in the general map:");
    for (cell, mixture) in set.general.cells() {
        if mixture.num_components() > 1 {
            let center = set.general.grid().cell_center(*cell);
            print!("  cell {cell:?} at ({:.1}, {:.1}):", center.x, center.y);
            for c in mixture.components() {
                print!(
                    "  [w {:.2}, {:.2} units/s @ {:.2} rad]",
                    c.weight, c.mean_speed, c.mean_heading
                );
            }
            println!();
        }
    }

    let out = std::path::Path::new("target/examples-out/build_maps");
    std::fs::create_dir_all(out)?;
    let map_path = out.join("maps.json");
    save_map(&set, &map_path)?;
    let restored = load_map(&map_path)?;
    println!(
        "\nsaved and reloaded {} (identical: {})",
        map_path.display(),
        restored == set
    );

    let field_path = out.join("field_general.csv");
    export_field_to_path(&set.general, &field_path)?;
    println!("wrote arrow-field export {}", field_path.display());
    Ok(())
}
