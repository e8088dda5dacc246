//! Short training run with F-Drop and F-Match, writing the usual run files.
use freqgan::data::load_dataset;
use freqgan::trainer::{train_gan, ExperimentConfig, RunFiles};

fn main() -> freqgan::Result<()> {
    let mut cfg = ExperimentConfig {
        iterations: 300,
        eval_every: 100,
        eval_samples: 128,
        ..ExperimentConfig::default()
    };
    cfg.dataset.count = 500;
    let data = load_dataset(&cfg.dataset)?;
    let dir = std::env::temp_dir().join("freqgan-train");
    freqgan::report::ensure_dir(&dir)?;
    let files = RunFiles { dir: dir.clone() };
    let out = train_gan(&cfg, &data, Some(&files))?;
    print!("{}", out.log.to_csv());
    println!("run files in {}", dir.display());
    Ok(())
}
