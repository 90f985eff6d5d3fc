//! Fits multinomial logistic regression on train tiles and scores the val tiles.

use labelreach::models::{accuracy_on, fit_logreg, LogRegConfig};
use labelreach::prep::{assign_splits, extract_pixels, make_tile_grid, SplitKind};
use labelreach::{generate_world, SynthConfig};

fn main() -> labelreach::Result<()> {
    let world = generate_world(&SynthConfig::default())?;
    let grid = make_tile_grid(128, 128, 16)?;
    let split = assign_splits(&grid, (0.9, 0.1), 0, |_| true)?;
    let train = extract_pixels(&world.embeddings, &world.labels, &split, SplitKind::Train)?;
    let val = extract_pixels(&world.embeddings, &world.labels, &split, SplitKind::Val)?;

    let model = fit_logreg(&train, &LogRegConfig::default())?;
    println!(
        "{} iterations, loss {:.4} -> {:.4}",
        model.history.len() - 1,
        model.history[0],
        model.history.last().unwrap()
    );
    println!(
        "train acc {:.4}, val acc {:.4}",
        accuracy_on(&model, &train),
        accuracy_on(&model, &val)
    );
    Ok(())
}
