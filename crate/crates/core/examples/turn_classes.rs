//! Floor, broken-floor, regain and nonfloor turns, their balancing weights,
//! and how the class-weighted loss differs from the plain one.

use turntaking::model::{class_weights, likelihood_sequence, nll_loss, weighted_loss, Conversation, ScoreParams};
use turntaking::proclivity::Proclivity;

fn main() {
    let c = Conversation::from_one_based(&[1, 2, 1, 2, 1, 3, 2, 3, 1, 3, 1, 4, 2, 4], 4).unwrap();
    let w = class_weights(&c);
    for (t, (&s, class)) in c.speakers().iter().zip(w.classes()).enumerate() {
        println!("turn {:>2}  speaker {}  {:<12}  weight {:.3}", t + 1, s + 1, class.name(), w.weights()[t]);
    }
    println!("counts (floor, broken_floor, regain, nonfloor): {:?}", w.counts());

    let params = ScoreParams::constant(4, 0.01, 1.0).unwrap();
    let u = likelihood_sequence(&params, &Proclivity::ExpDecay, &c).unwrap();
    println!("high-memory model: loss {:.4}, loss_turn {:.4}",
        nll_loss(&u, &c).unwrap(),
        weighted_loss(&u, &c).unwrap());
}
