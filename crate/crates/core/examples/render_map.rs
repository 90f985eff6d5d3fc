//! Renders the synthetic label map to a PPM and prints a metrics table.

use labelreach::report::{metrics_table, render_class_map, Palette, TableRow};
use labelreach::{confusion, generate_world, metrics_report, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = generate_world(&SynthConfig::default())?;
    let palette = Palette::for_table(&world.class_table());
    let out = std::env::temp_dir().join("labelreach-labels.ppm");
    std::fs::write(&out, render_class_map(&world.labels, &palette)?)?;
    println!("wrote {}", out.display());

    let perfect = metrics_report(&confusion(&world.labels, &world.labels, 5)?)?;
    print!(
        "{}",
        metrics_table(&[TableRow {
            model: "Ground truth",
            split: "All",
            report: &perfect
        }])
    );
    Ok(())
}
