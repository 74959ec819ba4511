//! Error probabilities on infinite regular trees against published tables
//! (two significant figures, so a 10% relative tolerance).

use cavity_learning::cavity::CavityEngine;
use cavity_learning::model::{Decider, SignalModel, TieBreakRule, UpdateRule};

fn errors(d: usize, noise: f64, rule: UpdateRule<f64>, rounds: usize) -> Vec<f64> {
    let m = SignalModel::binary_symmetric(noise).unwrap();
    let dec = Decider::identity(&m, TieBreakRule::OwnSignal).unwrap();
    let mut e = CavityEngine::regular(d, m, dec, rule).unwrap();
    e.advance_to(rounds).unwrap();
    (0..=rounds).map(|t| e.error_probability(0, t).unwrap()).collect()
}

fn assert_close(got: &[f64], want: &[f64]) {
    for (t, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= 0.1 * w, "round {t}: {g:.4e} vs {w:.1e}");
    }
}

#[test]
fn degree_five_low_noise() {
    let bayes = errors(5, 0.15, UpdateRule::Bayesian, 3);
    assert_close(&bayes, &[0.15, 2.7e-2, 7.6e-4, 2.8e-7]);
    let majority = errors(5, 0.15, UpdateRule::Majority, 4);
    assert_close(&majority, &[0.15, 2.7e-2, 1.7e-3, 8.4e-6, 2.5e-10]);
}

#[test]
fn degree_three_low_noise_bayesian() {
    let bayes = errors(3, 0.15, UpdateRule::Bayesian, 7);
    assert_close(&bayes, &[0.15, 6.1e-2, 1.5e-2, 3.0e-3, 3.4e-4, 2.7e-5, 2.2e-6, 1.4e-7]);
}

#[test]
fn degree_three_low_noise_majority_through_round_six() {
    let majority = errors(3, 0.15, UpdateRule::Majority, 6);
    assert_close(&majority, &[0.15, 6.1e-2, 3.0e-2, 1.6e-2, 9.2e-3, 5.5e-3, 3.4e-3]);
}

#[test]
fn high_noise_curves() {
    assert_close(
        &errors(3, 0.3, UpdateRule::Bayesian, 7),
        &[0.30, 0.22, 0.13, 7.8e-2, 3.8e-2, 1.7e-2, 5.7e-3, 1.5e-3],
    );
    assert_close(&errors(5, 0.3, UpdateRule::Bayesian, 4), &[0.30, 0.16, 5.1e-2, 4.1e-3, 1.6e-5]);
    assert_close(&errors(7, 0.3, UpdateRule::Bayesian, 3), &[0.30, 0.13, 1.3e-2, 4.4e-6]);
}

#[test]
fn bayesian_never_worse_than_majority() {
    for (d, rounds) in [(5, 4), (3, 7)] {
        let b = errors(d, 0.15, UpdateRule::Bayesian, rounds);
        let m = errors(d, 0.15, UpdateRule::Majority, rounds);
        let report = cavity_learning::bounds::conjecture_check(&b, &m).unwrap();
        assert!(report.holds(), "d={d}: {:?}", report.violations);
    }
}

#[test]
fn majority_stays_below_undirected_bound() {
    let exact = errors(5, 0.15, UpdateRule::Majority, 4);
    let bound = cavity_learning::bounds::undirected_bound_sequence(5, 0.15, 4).unwrap();
    for (t, (e, b)) in exact.iter().zip(&bound.values).enumerate() {
        assert!(e <= b, "round {t}: {e} > {b}");
    }
}
