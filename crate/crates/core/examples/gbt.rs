//! Histogram gradient boosting; prints the training loss every ten rounds.

use labelreach::models::{accuracy_on, fit_gbt, GbtConfig};
use labelreach::prep::{assign_splits, extract_pixels, make_tile_grid, SplitKind};
use labelreach::{generate_world, SynthConfig};

fn main() -> labelreach::Result<()> {
    let world = generate_world(&SynthConfig {
        noise_sigma: 1.0,
        ..Default::default()
    })?;
    let grid = make_tile_grid(128, 128, 16)?;
    let split = assign_splits(&grid, (0.9, 0.1), 0, |_| true)?;
    let train = extract_pixels(&world.embeddings, &world.labels, &split, SplitKind::Train)?;
    let val = extract_pixels(&world.embeddings, &world.labels, &split, SplitKind::Val)?;

    let model = fit_gbt(
        &train,
        &GbtConfig {
            n_rounds: 50,
            ..Default::default()
        },
    )?;
    for (round, loss) in model.round_losses.iter().enumerate().step_by(10) {
        println!("round {round:3}  loss {loss:.5}");
    }
    println!("val acc {:.4}", accuracy_on(&model, &val));
    Ok(())
}
