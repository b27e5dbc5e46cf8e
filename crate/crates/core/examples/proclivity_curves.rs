//! Rescaled proclivity curves, mean(d)/mean(pi) * w(delta), for the ground
//! truth and the two fixed baselines, written as CSV.

use turntaking::proclivity::{default_gap_grid, default_trait_grid, rescaled_curve, Proclivity};
use turntaking::synthgen::TrueScoreMap;
use turntaking::training::ModelBundle;

fn main() {
    let traits = default_trait_grid();
    let gaps = default_gap_grid();
    let out = std::env::temp_dir().join("turntaking_curves");
    std::fs::create_dir_all(&out).unwrap();

    let true_exp = TrueScoreMap { proclivity: Proclivity::ExpDecay };
    let true_sig = TrueScoreMap { proclivity: Proclivity::Sigmoid };
    let hm = ModelBundle::high_memory();
    let nm = ModelBundle::no_memory();

    let curves = [
        ("true_exp", rescaled_curve(&true_exp, &traits, &gaps).unwrap()),
        ("true_sigmoid", rescaled_curve(&true_sig, &traits, &gaps).unwrap()),
        ("hm", rescaled_curve(&hm, &traits, &gaps).unwrap()),
        ("nm", rescaled_curve(&nm, &traits, &gaps).unwrap()),
    ];
    println!("delta {:>12} {:>12} {:>12} {:>12}", "true_exp", "true_sig", "hm", "nm");
    for k in [0, 3, 8, 13, 18, 23, 28, 38] {
        print!("{:>5}", gaps[k]);
        for (_, c) in &curves {
            print!(" {:>12.5}", c.values()[k]);
        }
        println!();
    }
    for (name, c) in &curves {
        std::fs::write(out.join(format!("{name}.csv")), c.to_csv()).unwrap();
    }
    println!("wrote {} curves to {}", curves.len(), out.display());
}
