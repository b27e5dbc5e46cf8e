//! The memoryless baseline on a simulated 5-member conversation: every
//! eligible member is equally likely, so the per-turn loss is known in
//! closed form.

use turntaking::eval::{evaluate, EvalGroup, Metric};
use turntaking::synthgen::{generate_dataset, SynthConfig};
use turntaking::training::ModelBundle;

fn main() {
    let config = SynthConfig {
        seed: 1,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&config, 0).expect("generate");
    let test: Vec<EvalGroup> = data.test.iter().map(EvalGroup::from).collect();

    let result = evaluate(&ModelBundle::no_memory(), &test).expect("evaluate");
    let t = config.turns as f64;
    let analytic = 4f64.ln() + (5f64.ln() - 4f64.ln()) / t;

    for g in &result.groups {
        println!("group {:>2}: loss {:.12}  loss_turn {:.6}", g.group_id, g.loss, g.turn_loss);
    }
    println!("analytic  : loss {analytic:.12}");
    println!("aggregate : loss {:.12}", result.aggregate(Metric::Loss));
}
