//! Writes a label raster and an embedding raster to GRD1 and reads them back.

use labelreach::raster::{read_grid, write_grid, Grid};
use labelreach::{EmbeddingRaster, LabelRaster, NODATA};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("labelreach-grid-io");
    std::fs::create_dir_all(&dir)?;

    let labels = LabelRaster::new(3, 2, vec![0, 1, 2, NODATA, 1, 0])?;
    let emb = EmbeddingRaster::from_pixels(2, 1, 3, &[vec![0.5, -1.0, 2.0], vec![0.0, 0.25, 8.0]])?;
    write_grid(&labels, dir.join("labels.grd"))?;
    write_grid(&emb, dir.join("emb.grd"))?;

    for name in ["labels.grd", "emb.grd"] {
        let bytes = std::fs::read(dir.join(name))?;
        match read_grid(dir.join(name))? {
            Grid::Labels(l) => println!("{name}: {} bytes, labels {:?}", bytes.len(), l.ids()),
            // band-planar: all of band 0, then band 1, ...
            Grid::Embedding(e) => println!("{name}: {} bytes, planes {:?}", bytes.len(), e.values()),
        }
    }
    Ok(())
}
