//! Rare-class filtering, tiling and a seeded train/val split.

use labelreach::prep::{
    assign_splits, filter_rare_classes, histogram_classes, make_tile_grid, tile_has_labels, SplitKind,
};
use labelreach::{generate_world, SynthConfig};

fn main() -> labelreach::Result<()> {
    let config = SynthConfig {
        classes: 6,
        rare_boost: vec![(5, 0.88)],
        ..Default::default()
    };
    let world = generate_world(&config)?;
    let table = histogram_classes(&world.labels)?;
    let (labels, kept, remap) = filter_rare_classes(&world.labels, &table, 0.01)?;
    println!("{} classes before, {} after", table.len(), kept.len());
    for (src, dst) in remap.pairs() {
        println!("  {src} -> {dst}");
    }

    let grid = make_tile_grid(labels.width(), labels.height(), 32)?;
    let split = assign_splits(&grid, (0.9, 0.1), 0, tile_has_labels(&grid, &labels))?;
    println!(
        "{} tiles: {} train, {} val",
        grid.len(),
        split.count(SplitKind::Train),
        split.count(SplitKind::Val)
    );
    Ok(())
}
