//! Simulates one group with the synthetic trait-to-score maps and prints
//! the opening turns with each member's speaking probability.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use turntaking::model::{sample_conversation, speaking_probabilities, speaking_scores, GapTracker, Roster};
use turntaking::proclivity::Proclivity;
use turntaking::synthgen::traits_to_scores;

fn main() {
    let roster = Roster::new(vec![0.15, 0.4, 0.55, 0.8, 1.0]).unwrap();
    let scores = traits_to_scores(&roster).unwrap();
    println!("member  trait    pi        d");
    for (i, x) in roster.traits().iter().enumerate() {
        println!("{:>6}  {x:.2}  {:.4}  {:>8.4}", i + 1, scores.inherent()[i], scores.memory()[i]);
    }

    for proclivity in [Proclivity::ExpDecay, Proclivity::Sigmoid] {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let conversation = sample_conversation(&scores, &proclivity, 800, &mut rng).unwrap();

        println!("\n{proclivity} proclivity, first 12 turns:");
        let mut tracker = GapTracker::new(roster.len());
        for &speaker in conversation.speakers().iter().take(12) {
            let u = speaking_scores(&scores, &proclivity, &tracker.gaps());
            let p = speaking_probabilities(&u).unwrap();
            let shown: Vec<String> = p.iter().map(|x| format!("{x:.3}")).collect();
            println!("  turn {:>2}: speaker {}  p = [{}]", tracker.turn() + 1, speaker + 1, shown.join(", "));
            tracker.advance(speaker);
        }

        let mut share = vec![0usize; roster.len()];
        for &s in conversation.speakers() {
            share[s] += 1;
        }
        println!("  turns per member over 800: {share:?}");
    }
}
