//! Random forest on a noisy world: the train/val gap shows how much it memorizes.

use labelreach::models::{accuracy_on, fit_random_forest, ForestConfig};
use labelreach::prep::{assign_splits, extract_pixels, make_tile_grid, SplitKind};
use labelreach::{generate_world, SynthConfig};

fn main() -> labelreach::Result<()> {
    let world = generate_world(&SynthConfig {
        noise_sigma: 2.0,
        ..Default::default()
    })?;
    let grid = make_tile_grid(128, 128, 16)?;
    let split = assign_splits(&grid, (0.9, 0.1), 0, |_| true)?;
    let train = extract_pixels(&world.embeddings, &world.labels, &split, SplitKind::Train)?;
    let val = extract_pixels(&world.embeddings, &world.labels, &split, SplitKind::Val)?;

    let cfg = ForestConfig {
        n_trees: 50,
        ..Default::default()
    };
    let model = fit_random_forest(&train, &cfg)?;
    let depth = model.trees.iter().map(|t| t.depth()).max().unwrap_or(0);
    println!("{} trees, mtry {}, deepest {depth}", model.trees.len(), model.mtry);
    println!(
        "train acc {:.4}, val acc {:.4}",
        accuracy_on(&model, &train),
        accuracy_on(&model, &val)
    );
    Ok(())
}
