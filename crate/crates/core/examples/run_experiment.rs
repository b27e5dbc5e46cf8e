//! A reduced multi-trial comparison of all variants. Pass `sigmoid` to use
//! the sigmoid ground truth and a trial count to change the default of 3.

use turntaking::eval::{run_experiment, ExperimentConfig, Method, Metric};
use turntaking::synthgen::TrueProclivity;

fn main() {
    let mut args = std::env::args().skip(1);
    let proclivity = args.next().and_then(|s| TrueProclivity::parse(&s)).unwrap_or_default();
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);

    let mut config = ExperimentConfig::default();
    config.synth.proclivity = proclivity;
    config.synth.trials = trials;
    config.synth.seed = 2025;
    config.parallel_trials = std::thread::available_parallelism().map_or(1, |n| n.get());

    let report = run_experiment(&config).expect("experiment");
    println!("{} trials, {} proclivity", trials, proclivity.name());
    println!("{:<6} {:>10} {:>10} {:>10} {:>10}", "method", "loss", "q1", "q3", "loss_turn");
    for method in Method::ALL {
        let loss = report.stats(method, Metric::Loss).unwrap();
        let turn = report.stats(method, Metric::TurnLoss).unwrap();
        println!("{:<6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", method.name(), loss.median, loss.q1, loss.q3, turn.median);
    }

    let out = std::env::temp_dir().join(format!("turntaking_experiment_{}", proclivity.name()));
    report.write(&out).unwrap();
    println!("report written to {}", out.display());
}
