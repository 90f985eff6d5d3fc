//! The tile context model against per-pixel logistic regression on a noisy world.

use labelreach::models::{fit_context, fit_logreg, ContextConfig, Pixelwise, TrainConfig};
use labelreach::prep::{assign_splits, extract_pixels, make_tile_grid, SplitKind};
use labelreach::{argmax_map, confusion, generate_world, metrics_report, predict_raster_tiled, SynthConfig};

fn main() -> labelreach::Result<()> {
    let world = generate_world(&SynthConfig {
        noise_sigma: 3.0,
        ..Default::default()
    })?;
    let (emb, labels) = (&world.embeddings, &world.labels);
    let grid = make_tile_grid(128, 128, 32)?;
    let split = assign_splits(&grid, (0.75, 0.25), 0, |_| true)?;
    let cfg = TrainConfig {
        context: ContextConfig {
            window: 5,
            epochs: 100,
            ..Default::default()
        },
        ..Default::default()
    };

    let ctx = fit_context(emb, labels, &split, &cfg)?;
    println!("context: {} epochs, window {}", ctx.epochs_run, ctx.window);
    let lr = fit_logreg(&extract_pixels(emb, labels, &split, SplitKind::Train)?, &cfg.logreg)?;

    let ctx_map = argmax_map(&predict_raster_tiled(&ctx, emb, 32, 16)?)?;
    let lr_map = argmax_map(&predict_raster_tiled(&Pixelwise(&lr), emb, 32, 16)?)?;
    for (name, pred) in [("context", ctx_map), ("logreg", lr_map)] {
        let r = metrics_report(&confusion(labels, &pred, 5)?)?;
        println!("{name:8} acc {:.4}  macro F1 {:.4}", r.accuracy, r.macro_f1);
    }
    Ok(())
}
