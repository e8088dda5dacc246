//! Mean DCT magnitude spectrum of a texture set, saved as a PGM.
use freqgan::analysis::mean_spectrum;
use freqgan::data::{load_dataset, DatasetDescriptor};
use freqgan::report::write_pgm;

fn main() -> freqgan::Result<()> {
    let images = load_dataset(&DatasetDescriptor {
        count: 200,
        ..DatasetDescriptor::default()
    })?;
    let s = mean_spectrum(&images)?;
    let max = s.display.data().iter().copied().fold(0.0, f64::max);
    let path = std::env::temp_dir().join("freqgan-spectrum.pgm");
    write_pgm(&path, s.display.data(), 16, 16, max)?;
    for u in (0..16).step_by(3) {
        let row: Vec<String> = (0..16).step_by(3).map(|v| format!("{:6.3}", s.values.data()[u * 16 + v])).collect();
        println!("u={u:2} {}", row.join(" "));
    }
    println!("log spectrum written to {}", path.display());
    Ok(())
}
