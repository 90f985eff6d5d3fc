//! Trains on the northern half of a drifting world and evaluates by latitude band.

use labelreach::models::{fit_logreg, LogRegConfig};
use labelreach::prep::{assign_bands, assign_splits, extract_pixels, make_tile_grid, BandSpec, SplitKind};
use labelreach::{argmax_map, evaluate_by_band, generate_world, predict_raster_pixelwise, SynthConfig};

fn main() -> labelreach::Result<()> {
    let config = SynthConfig {
        noise_sigma: 1.0,
        drift: 8.0,
        seed: 3,
        ..Default::default()
    };
    let world = generate_world(&config)?;
    let grid = make_tile_grid(128, 128, 16)?;
    let split = assign_splits(&grid, (0.9, 0.1), 0, grid.tiles_within_rows(0, 64))?;
    let train = extract_pixels(&world.embeddings, &world.labels, &split, SplitKind::Train)?;
    let model = fit_logreg(&train, &LogRegConfig::default())?;

    let pred = argmax_map(&predict_raster_pixelwise(&model, &world.embeddings, None)?)?;
    let edges = vec![64, 85, 106, 128];
    let bands = assign_bands(128, &BandSpec { edges: edges.clone() })?;
    for b in evaluate_by_band(&world.labels, &pred, &bands, 5)? {
        if let Some(r) = &b.report {
            println!(
                "rows {:3}..{:3}: {} px, acc {:.4}, macro J {:.4}",
                edges[b.band],
                edges[b.band + 1],
                b.pixels,
                r.accuracy,
                r.macro_jaccard
            );
        }
    }
    Ok(())
}
