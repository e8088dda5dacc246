//! Linear real/fake probe in the spatial and frequency domains. The second
//! fake set carries a faint checkerboard, the kind of fixed pattern that
//! transposed convolutions leave behind.
use freqgan::analysis::{fake_detection_probe, ProbeConfig, ProbeDomain};
use freqgan::data::{load_dataset, DatasetDescriptor};

fn main() -> freqgan::Result<()> {
    let set = |seed, noise_std| {
        load_dataset(&DatasetDescriptor {
            count: 400,
            seed,
            noise_std,
            ..DatasetDescriptor::default()
        })
    };
    let real = set(0, 0.02)?;
    let cfg = ProbeConfig::default();
    let mut marked = set(1, 0.02)?;
    for (k, v) in marked.data_mut().iter_mut().enumerate() {
        let (i, j) = ((k / 16) % 16, k % 16);
        *v += if (i + j) % 2 == 0 { 0.03 } else { -0.03 };
    }
    for (name, fake) in [("same distribution", set(1, 0.02)?), ("checkerboard", marked)] {
        for domain in [ProbeDomain::Spatial, ProbeDomain::Frequency] {
            let r = fake_detection_probe(&real, &fake, domain, 0, &cfg)?;
            println!(
                "{name:<18} {domain:?}: train {:.3}  test {:.3}",
                r.train_accuracy, r.test_accuracy
            );
        }
    }
    Ok(())
}
