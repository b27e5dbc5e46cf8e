//! Writes a synthetic dataset to CSV, reads it back, and shows the config
//! text format that the command line accepts.

use std::path::Path;

use turntaking::config;
use turntaking::eval::ExperimentConfig;
use turntaking::io::{read_dataset, write_dataset};
use turntaking::synthgen::{generate_dataset, SynthConfig};

fn main() {
    let synth = SynthConfig {
        turns: 200,
        seed: 17,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&synth, 0).unwrap();
    let dir = std::env::temp_dir().join("turntaking_dataset");
    write_dataset(&dir, &data).unwrap();

    let back = read_dataset(&dir).unwrap();
    assert_eq!(back.training_set(), data.training_set());
    println!("round trip ok: {} train, {} val, {} test groups in {}",
        back.train.len(), back.validation.len(), back.test.len(), dir.display());

    let head: String = std::fs::read_to_string(dir.join("test/conversations.csv"))
        .unwrap()
        .lines()
        .take(4)
        .map(|l| format!("  {l}\n"))
        .collect();
    print!("test/conversations.csv:\n{head}");

    let mut cfg = ExperimentConfig::default();
    cfg.synth = synth;
    let text = config::to_text(&cfg);
    println!("\nconfig file:\n{text}");
    assert_eq!(config::parse(&text, Path::new("inline")).unwrap(), cfg);
}
