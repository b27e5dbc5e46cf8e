//! Fits the learned-proclivity model and the fixed exponential model on
//! data whose true proclivity is a slowly decaying sigmoid, then compares
//! test losses and the learned proclivity.

use turntaking::eval::{evaluate, true_model, EvalGroup, Metric};
use turntaking::proclivity::{w_sig, Proclivity, ScoreModel};
use turntaking::synthgen::{derived_seed, generate_dataset, SynthConfig, TrueProclivity};
use turntaking::training::{fit, FitConfig, ModelBundle, Variant};

fn main() {
    let synth = SynthConfig {
        proclivity: TrueProclivity::Sigmoid,
        seed: 3,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&synth, 0).expect("generate");
    let training = data.training_set();
    let test: Vec<EvalGroup> = data.test.iter().map(EvalGroup::from).collect();

    let truth = evaluate(&true_model(Proclivity::Sigmoid), &test).unwrap();
    println!("true : loss {:.4}  loss_turn {:.4}", truth.aggregate(Metric::Loss), truth.aggregate(Metric::TurnLoss));

    for (slot, variant) in [(1, Variant::Pro), (2, Variant::Exp)] {
        let config = FitConfig {
            seed: derived_seed(synth.seed, 0, slot),
            ..FitConfig::default()
        };
        let outcome = fit(&ModelBundle::new(variant, &config).unwrap(), &training, &config).expect("fit");
        let e = evaluate(&outcome.bundle, &test).unwrap();
        println!(
            "{variant}  : loss {:.4}  loss_turn {:.4}  (best val {:.4} at outer iteration {})",
            e.aggregate(Metric::Loss),
            e.aggregate(Metric::TurnLoss),
            outcome.best_val_loss(),
            outcome.best_iteration
        );
        if variant == Variant::Pro {
            println!("  delta   learned nu   true w_sig");
            for delta in [2, 5, 10, 15, 20, 25, 30, 40] {
                println!("  {delta:>5}   {:>10.4}   {:>10.4}", outcome.bundle.proclivity().at(delta), w_sig(delta));
            }
        }
    }
}
