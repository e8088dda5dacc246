//! Evaluate every F-Match variant between a real batch and two candidate
//! fake batches: one with the right spectrum, one with extra high frequencies.
use freqgan::data::{load_dataset, DatasetDescriptor};
use freqgan::objectives::{f_match_loss, MatchVariant};

fn main() -> freqgan::Result<()> {
    let real = load_dataset(&DatasetDescriptor {
        count: 64,
        ..DatasetDescriptor::default()
    })?;
    let similar = load_dataset(&DatasetDescriptor {
        count: 64,
        seed: 1,
        ..DatasetDescriptor::default()
    })?;
    let noisy = load_dataset(&DatasetDescriptor {
        count: 64,
        seed: 1,
        noise_std: 0.3,
        ..DatasetDescriptor::default()
    })?;
    println!("{:<14} {:>12} {:>12}", "variant", "similar", "noisy");
    for variant in MatchVariant::all() {
        println!(
            "{:<14} {:>12.6} {:>12.6}",
            format!("{}/{}", variant.transform, variant.distance),
            f_match_loss(&real, &similar, variant)?,
            f_match_loss(&real, &noisy, variant)?
        );
    }
    Ok(())
}
