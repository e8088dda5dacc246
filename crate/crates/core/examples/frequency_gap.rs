//! Frequency gap between texture sets, over all bands and the lower band.
use freqgan::analysis::frequency_gap;
use freqgan::data::{load_dataset, DatasetDescriptor};

fn main() -> freqgan::Result<()> {
    let set = |seed, noise_std, band_limit| {
        load_dataset(&DatasetDescriptor {
            count: 500,
            seed,
            noise_std,
            band_limit,
            ..DatasetDescriptor::default()
        })
    };
    let real = set(0, 0.02, 0.5)?;
    for (name, other) in [
        ("independent draw", set(1, 0.02, 0.5)?),
        ("wider band", set(1, 0.02, 0.9)?),
        ("noisier", set(1, 0.2, 0.5)?),
    ] {
        let g = frequency_gap(&real, &other, Some(0.5))?;
        println!("{name:<17} all-band {:.5}  lower-band {:.5}", g.all_band_gap, g.lower_band_gap.unwrap());
    }
    Ok(())
}
