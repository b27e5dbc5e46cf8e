//! Compares the hand-written gradients of the per-turn loss against central
//! finite differences for every parameter of a small learned-proclivity
//! model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use turntaking::model::{sample_conversation, Roster, ScoreParams, LIKELIHOOD_FLOOR};
use turntaking::neural::{Activation, DenseNet};
use turntaking::proclivity::Proclivity;
use turntaking::training::{conversation_nll_gradients, mean_nll, Block, Group, ModelBundle, Variant};

fn random_net(rng: &mut ChaCha8Rng) -> DenseNet {
    let mut net = DenseNet::new(&[1, 4, 4, 1], Activation::Tanh, rng.random()).unwrap();
    for layer in net.layers_mut() {
        for v in layer.parameters_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    net
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let nets = [random_net(&mut rng), random_net(&mut rng), random_net(&mut rng)];
    let bundle = ModelBundle::from_networks(Variant::Pro, nets[0].clone(), nets[1].clone(), Some(nets[2].clone())).unwrap();

    let roster = Roster::new(vec![0.2, 0.5, 0.9]).unwrap();
    let truth = ScoreParams::new(vec![0.4, 0.6, 0.9], vec![3.0, 5.0, 1.0]).unwrap();
    let conversation = sample_conversation(&truth, &Proclivity::ExpDecay, 30, &mut rng).unwrap();
    let group = Group::new(1, roster.clone(), conversation.clone()).unwrap();
    let groups = std::slice::from_ref(&group);

    let h = 1e-5;
    for (block, which, name) in [(Block::Scores, 0, "f"), (Block::Scores, 1, "g"), (Block::Proclivity, 2, "nu")] {
        let grads = conversation_nll_gradients(&bundle, &roster, &conversation, block).unwrap();
        let set = [&grads.inherent, &grads.memory, &grads.proclivity][which].as_ref().unwrap();
        let mut worst = 0f64;
        for (j, analytic) in set.values().enumerate() {
            let bump = |delta: f64| {
                let mut nets = nets.clone();
                let p = nets[which].layers_mut().iter_mut().flat_map(|l| l.parameters_mut()).nth(j).unwrap();
                *p += delta;
                let [f, g, nu] = nets;
                let b = ModelBundle::from_networks(Variant::Pro, f, g, Some(nu)).unwrap();
                mean_nll(&b, groups, LIKELIHOOD_FLOOR).unwrap()
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3));
        }
        println!("{name:>2}: {} parameters, max relative error {worst:.2e}", set.values().count());
    }
}
