mod common;

use byzsprt::adversary::{AttackSpec, AttackerView, Placement};
use byzsprt::detection::{DetectorRule, Thresholds};
use byzsprt::models::{Hypothesis, HypothesisModel};
use byzsprt::montecarlo::{importance_sampled_error, plain_error, ErrorKind};
use byzsprt::oracle::{exact_voting_operating_point, OracleAttack};
use byzsprt::trial::Scenario;
use common::{kolmogorov_tail, ks_one_sample, ks_two_sample, mean_and_stderr};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn gauss() -> HypothesisModel<f64> {
    HypothesisModel::gaussian("gauss", -1.0, 1.0, 1.0).unwrap()
}

fn bern() -> HypothesisModel<f64> {
    HypothesisModel::bernoulli("bern", 0.2, 0.8).unwrap()
}

fn llr_draws(model: &HypothesisModel<f64>, theta: Hypothesis, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| model.log_likelihood_ratio(model.sample(theta, &mut rng)).unwrap()).collect()
}

#[test]
fn change_of_measure_identities() {
    for (k, model) in [gauss(), bern()].iter().enumerate() {
        let (i0, i1) = model.kl_divergences().unwrap();
        let l0 = llr_draws(model, Hypothesis::H0, 400_000, 10 + k as u64);
        let (m, se) = mean_and_stderr(&l0.iter().map(|l| l.exp()).collect::<Vec<_>>());
        assert!((m - 1.0).abs() < 4.0 * se, "{}: E0[e^L] = {m} ± {se}", model.name());
        let l1 = llr_draws(model, Hypothesis::H1, 400_000, 20 + k as u64);
        let (m, se) = mean_and_stderr(&l1.iter().map(|l| l * (-l).exp()).collect::<Vec<_>>());
        // E1[L e^-L] = E0[L] = -I0, and mirrored E0[L e^L] = E1[L] = I1
        assert!((m + i0).abs() < 4.0 * se, "{}: E1[L e^-L] = {m} ± {se}", model.name());
        let (m, se) = mean_and_stderr(&l0.iter().map(|l| l * l.exp()).collect::<Vec<_>>());
        assert!((m - i1).abs() < 4.0 * se, "{}: E0[L e^L] = {m} ± {se}", model.name());
    }
}

#[test]
fn single_sensor_wald_bound() {
    let sc = Scenario::new(gauss(), 1, DetectorRule::Voting { r: 1 }, AttackSpec::none()).unwrap();
    let thr = Thresholds::symmetric(5.0).unwrap();
    let alpha = plain_error(&sc, &thr, ErrorKind::TypeI, 1_000_000, 3).unwrap();
    let bound = (-5.0f64).exp();
    assert!(alpha.value <= bound + 3.0 * alpha.stderr, "alpha {} vs e^-b {bound}", alpha.value);
    let beta = plain_error(&sc, &thr, ErrorKind::TypeII, 1_000_000, 3).unwrap();
    assert!(beta.value <= bound + 3.0 * beta.stderr);
}

fn assert_consistent(label: &str, sc: &Scenario<f64>, level: f64, plain_trials: u64, is_trials: u64) {
    let thr = Thresholds::symmetric(level).unwrap();
    for kind in [ErrorKind::TypeI, ErrorKind::TypeII] {
        let p = plain_error(sc, &thr, kind, plain_trials, 41).unwrap();
        let q = importance_sampled_error(sc, &thr, kind, is_trials, 43, None).unwrap();
        assert!(p.events >= 50, "{label}: only {} plain events", p.events);
        let sigma = (p.stderr.powi(2) + q.stderr.powi(2)).sqrt();
        assert!(
            (p.value - q.value).abs() <= 3.0 * sigma,
            "{label} {kind:?}: plain {:e} ± {:e}, importance {:e} ± {:e}",
            p.value,
            p.stderr,
            q.value,
            q.stderr
        );
    }
}

#[test]
fn importance_and_plain_agree_single_sensor() {
    let sc = Scenario::new(gauss(), 1, DetectorRule::Voting { r: 1 }, AttackSpec::none()).unwrap();
    assert_consistent("single", &sc, 4.0, 400_000, 50_000);
}

#[test]
fn importance_and_plain_agree_voting() {
    let none = Scenario::new(gauss(), 3, DetectorRule::Voting { r: 2 }, AttackSpec::none()).unwrap();
    assert_consistent("voting", &none, 3.0, 1_000_000, 50_000);
    let flip = Scenario::new(gauss(), 5, DetectorRule::Voting { r: 4 }, AttackSpec::flip(1, Placement::Random)).unwrap();
    assert_consistent("voting vs flip", &flip, 1.5, 1_000_000, 50_000);
    let stress = Scenario::new(
        gauss(),
        5,
        DetectorRule::Voting { r: 3 },
        AttackSpec::suppression(2, 10.0, Placement::Random),
    )
    .unwrap();
    assert_consistent("voting vs suppression", &stress, 3.0, 1_000_000, 50_000);
}

#[test]
fn importance_and_plain_agree_sum_sprt() {
    let flip = Scenario::new(gauss(), 10, DetectorRule::sum_all(10), AttackSpec::flip(2, Placement::Random)).unwrap();
    assert_consistent("sum-sprt vs flip", &flip, 6.0, 1_000_000, 100_000);
    let partial = Scenario::new(gauss(), 4, DetectorRule::SumSprt { sensors: vec![0, 2] }, AttackSpec::none()).unwrap();
    assert_consistent("sum-sprt subset", &partial, 4.0, 400_000, 50_000);
}

#[test]
fn importance_sampling_reduces_variance() {
    let sc = Scenario::new(gauss(), 1, DetectorRule::Voting { r: 1 }, AttackSpec::none()).unwrap();
    let thr = Thresholds::symmetric(15.0).unwrap();
    let n = 20_000;
    let q = importance_sampled_error(&sc, &thr, ErrorKind::TypeI, n, 5, None).unwrap();
    // relative standard error plain MC would have at the same trial count
    let plain_rel = ((1.0 - q.value) / (n as f64 * q.value)).sqrt();
    assert!(q.rel_stderr / plain_rel < 0.1, "{} vs {plain_rel}", q.rel_stderr);
    assert!(q.value < (-15.0f64).exp());
}

#[test]
fn simulator_matches_oracle_under_flip() {
    let ln4 = 4f64.ln();
    let thr = Thresholds::symmetric(2.0 * ln4).unwrap();
    let exact = exact_voting_operating_point(&bern(), 3, 2, &thr, 200, OracleAttack::Flip(1)).unwrap();
    assert!(exact.under_h0.residual < 1e-12);
    let sc = Scenario::new(bern(), 3, DetectorRule::Voting { r: 2 }, AttackSpec::flip(1, Placement::Random)).unwrap();
    let p = plain_error(&sc, &thr, ErrorKind::TypeI, 400_000, 9).unwrap();
    assert!((p.value - exact.alpha()).abs() < 3.0 * p.stderr, "{} vs {}", p.value, exact.alpha());
    let q = importance_sampled_error(&sc, &thr, ErrorKind::TypeII, 100_000, 9, None).unwrap();
    assert!((q.value - exact.beta()).abs() < 3.0 * q.stderr, "{} vs {}", q.value, exact.beta());
}

/// Delivered observations of the flip attack's two groups and of one
/// untouched sensor, over `steps` steps under `theta`.
fn delivered(theta: Hypothesis, steps: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let model = gauss();
    let (s, c) = (5, 2);
    let spec = AttackSpec::flip(c, Placement::Fixed(vec![0, 1]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = spec.resolve_support(s, theta, &mut rng);
    let mut attack = spec.instantiate(support.clone());
    let (mut o1, mut o2, mut mid) = (Vec::new(), Vec::new(), Vec::new());
    let mut bias = vec![0.0; s];
    for k in 1..=steps {
        let obs: Vec<f64> = (0..s).map(|_| model.sample(theta, &mut rng)).collect();
        let own: Vec<f64> = support.iter().map(|&i| obs[i]).collect();
        bias.fill(0.0);
        let view = AttackerView {
            theta,
            k: k as u64,
            sensors: s,
            model: &model,
            compromised_obs: &own,
            forgery_tilt: None,
        };
        attack.bias(&view, &mut rng, &mut bias);
        let x: Vec<f64> = obs.iter().zip(&bias).map(|(o, b)| o + b).collect();
        o1.extend_from_slice(&x[0..2]);
        o2.extend_from_slice(&x[3..5]);
        mid.push(x[2]);
    }
    (o1, o2, mid)
}

#[test]
fn flip_attack_forges_opposite_law() {
    let nu = Normal::new(-1.0, 1.0).unwrap();
    let mu = Normal::new(1.0, 1.0).unwrap();
    let (o1, o2, _) = delivered(Hypothesis::H0, 5000, 1);
    let (_, p) = ks_one_sample(&o1, |x| mu.cdf(x));
    assert!(p > 1e-3, "O1 under state 0 vs mu: p = {p}");
    let (_, p) = ks_one_sample(&o2, |x| nu.cdf(x));
    assert!(p > 1e-3, "O2 under state 0 vs nu: p = {p}");
    let (o1, o2, _) = delivered(Hypothesis::H1, 5000, 2);
    let (_, p) = ks_one_sample(&o2, |x| nu.cdf(x));
    assert!(p > 1e-3, "O2 under state 1 vs nu: p = {p}");
    let (_, p) = ks_one_sample(&o1, |x| mu.cdf(x));
    assert!(p > 1e-3, "O1 under state 1 vs mu: p = {p}");
}

#[test]
fn flipped_groups_carry_no_information() {
    let (o1_0, o2_0, mid_0) = delivered(Hypothesis::H0, 5000, 3);
    let (o1_1, o2_1, mid_1) = delivered(Hypothesis::H1, 5000, 4);
    let (_, p) = ks_two_sample(&o1_0, &o1_1);
    assert!(p > 1e-3, "O1 across states: p = {p}");
    let (_, p) = ks_two_sample(&o2_0, &o2_1);
    assert!(p > 1e-3, "O2 across states: p = {p}");
    // the remaining sensor is honest under both states and does differ
    let (_, p) = ks_two_sample(&mid_0, &mid_1);
    assert!(p < 1e-10, "untouched sensor across states: p = {p}");
}

#[test]
fn kolmogorov_tail_known_points() {
    // standard critical values
    assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-4);
    assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-4);
    assert!((kolmogorov_tail(0.5) - 0.9639).abs() < 1e-3);
}
