//! Single-Fourier-attack perturbation and a discriminator sensitivity map.
use freqgan::analysis::{sfa_delta, sfa_sensitivity_map};
use freqgan::data::{load_dataset, DatasetDescriptor};
use freqgan::models::{Architecture, GanModel};

fn main() -> freqgan::Result<()> {
    let eps = 10.0 / 255.0;
    let d = sfa_delta(1, 2, eps, 8)?;
    println!("delta(1, 2) on 8x8, first row: {:?}", &d.values.data()[..8]);

    let model = GanModel::init(Architecture::default(), 0)?;
    let images = load_dataset(&DatasetDescriptor {
        count: 32,
        ..DatasetDescriptor::default()
    })?;
    let map = sfa_sensitivity_map(&model, &images, eps)?;
    println!("untrained discriminator: max {:.2e}, top-20% band mean {:.2e}", map.max(), map.high_band_mean(0.2));
    for u in (0..16).step_by(4) {
        let row: Vec<String> = (0..16).step_by(4).map(|v| format!("{:.2e}", map.get(u, v))).collect();
        println!("u={u:2} {}", row.join(" "));
    }
    Ok(())
}
