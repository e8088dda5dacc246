//! Save a checkpoint, reload it, and draw a reproducible image grid.
use freqgan::container::{load_checkpoint, save_checkpoint};
use freqgan::models::{Architecture, GanModel};
use freqgan::report::{image_grid, write_png};
use freqgan::trainer::sample;

fn main() -> freqgan::Result<()> {
    let dir = std::env::temp_dir().join("freqgan-sample");
    freqgan::report::ensure_dir(&dir)?;
    let ckpt = dir.join("init.ckpt");
    save_checkpoint(&ckpt, &GanModel::init(Architecture::default(), 3)?, 0)?;
    let (model, iteration) = load_checkpoint(&ckpt)?;
    let images = sample(&model, 16, 7)?;
    assert_eq!(images, sample(&model, 16, 7)?);
    write_png(&dir.join("grid.png"), &image_grid(&images, 4)?)?;
    println!("16 samples from iteration {iteration} written to {}", dir.join("grid.png").display());
    Ok(())
}
