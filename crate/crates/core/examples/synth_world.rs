//! Generates the default synthetic world and prints its class histogram.

use labelreach::{generate_world, SynthConfig};

fn main() -> labelreach::Result<()> {
    let config = SynthConfig {
        drift: 2.0,
        ..Default::default()
    };
    let world = generate_world(&config)?;
    println!(
        "{}x{} pixels, {} bands, {} labeled",
        world.embeddings.width(),
        world.embeddings.height(),
        world.embeddings.bands(),
        world.labels.valid_count()
    );
    print!("{}", world.class_table().to_csv()?);
    Ok(())
}
