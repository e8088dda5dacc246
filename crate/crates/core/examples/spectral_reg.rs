//! Spectral-regularisation loss between texture sets. The loss is a negated
//! cross-entropy, so it is at most zero and rises as the spectra drift apart.
use freqgan::data::{load_dataset, DatasetDescriptor};
use freqgan::objectives::sr_loss;

fn main() -> freqgan::Result<()> {
    let base = DatasetDescriptor {
        count: 32,
        ..DatasetDescriptor::default()
    };
    let real = load_dataset(&base)?;
    for noise in [0.02, 0.1, 0.3] {
        let fake = load_dataset(&DatasetDescriptor {
            seed: 1,
            noise_std: noise,
            ..base.clone()
        })?;
        println!("fake noise {noise:.2}: SR loss {:.5}", sr_loss(&real, &fake)?);
    }
    Ok(())
}
