//! Low-pass a texture image at several thresholds and show how much
//! spectral energy each mask keeps.
use freqgan::data::{load_dataset, DatasetDescriptor};
use freqgan::report::write_png;
use freqgan::spectral::{build_mask, dct2, f_drop};

fn main() -> freqgan::Result<()> {
    let out = std::env::temp_dir().join("freqgan-filter");
    freqgan::report::ensure_dir(&out)?;
    let images = load_dataset(&DatasetDescriptor {
        count: 1,
        band_limit: 1.0,
        ..DatasetDescriptor::default()
    })?;
    let image = images.select0(&[0])?.reshape(vec![3, 16, 16])?;
    let total: f64 = image.data().iter().map(|v| v * v).sum();
    for gamma in [1.0, 0.8, 0.5, 0.2, 0.0] {
        let mask = build_mask(gamma, 16, 16)?;
        let kept = f_drop(&image, gamma)?;
        let energy: f64 = dct2(&kept)?.0.data().iter().map(|v| v * v).sum();
        println!(
            "gamma {gamma:.1}: {:3}/256 coefficients, {:5.1}% of the energy",
            mask.kept(),
            100.0 * energy / total
        );
        write_png(&out.join(format!("gamma_{gamma}.png")), &kept)?;
    }
    println!("images in {}", out.display());
    Ok(())
}
