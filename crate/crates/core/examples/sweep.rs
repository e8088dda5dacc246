//! Small grid over the drop threshold and the match weight.
use freqgan::data::load_dataset;
use freqgan::trainer::{sweep, sweep_csv, ExperimentConfig, SweepGrid};

fn main() -> freqgan::Result<()> {
    let mut base = ExperimentConfig {
        iterations: 100,
        eval_every: 100,
        eval_samples: 64,
        ..ExperimentConfig::default()
    };
    base.dataset.count = 300;
    let data = load_dataset(&base.dataset)?;
    let grid = SweepGrid {
        gammas: vec![0.6, 0.8, 1.0],
        lambdas: vec![0.0, 1e-2],
    };
    print!("{}", sweep_csv(&sweep(&base, &grid, &data, None)?));
    Ok(())
}
