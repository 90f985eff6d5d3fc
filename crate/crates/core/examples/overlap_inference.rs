//! Tile origins and per-pixel cover counts for overlapping sliding-window inference.

use labelreach::infer::tile_origins;

fn main() {
    let (len, tile) = (100u32, 32u32);
    for stride in [32, 16, 24] {
        let origins = tile_origins(len, tile, stride);
        let mut cover = vec![0u32; len as usize];
        for &o in &origins {
            for c in &mut cover[o as usize..(o + tile) as usize] {
                *c += 1;
            }
        }
        println!(
            "stride {stride}: origins {origins:?}, cover min {} max {}",
            cover.iter().min().unwrap(),
            cover.iter().max().unwrap()
        );
    }
}
