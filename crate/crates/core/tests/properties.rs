use auction_ewa::fp::{self, LearningParams};
use auction_ewa::market::{matching_prob, score_moments, trading_price, validity_prob};
use auction_ewa::sim::{self, Population, SimConfig, Simulation};
use auction_ewa::stats::Histogram;
use auction_ewa::{Aggregates, Class, GameModel, GameParams, Side};
use proptest::prelude::*;

fn symmetric_params() -> impl Strategy<Value = GameParams> {
    (0.05..0.95f64, 0.05..0.45f64).prop_map(|(t, pb)| GameParams::symmetric(t, pb))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn price_lies_between_mean_ask_and_mean_bid(theta in 0.0..=1.0f64, ask in 5.0..10.0f64, spread in 0.0..5.0f64) {
        let bid = ask + spread;
        let pi = trading_price(theta, bid, ask);
        prop_assert!(pi >= ask - 1e-12 && pi <= bid + 1e-12);
    }

    #[test]
    fn validity_is_monotone_in_price(pi in 6.0..13.0f64, step in 0.001..1.0f64) {
        let p = GameParams::symmetric(0.3, 0.2);
        prop_assert!(validity_prob(Side::Bid, pi + step, &p) <= validity_prob(Side::Bid, pi, &p));
        prop_assert!(validity_prob(Side::Ask, pi + step, &p) >= validity_prob(Side::Ask, pi, &p));
    }

    #[test]
    fn score_moments_have_nonnegative_variance(pi in 6.0..13.0f64, side in prop_oneof![Just(Side::Bid), Just(Side::Ask)]) {
        let p = GameParams::symmetric(0.3, 0.2);
        let m = score_moments(side, pi, &p).unwrap();
        prop_assert!(m.mean >= 0.0);
        prop_assert!(m.mean_square >= m.mean * m.mean * (1.0 - 1e-12));
    }

    #[test]
    fn expected_matches_pair_up(f in 0.01..50.0f64, v_a in 0.01..1.0f64, v_b in 0.01..1.0f64) {
        let m_a = matching_prob(Side::Ask, f, v_a, v_b).unwrap();
        let m_b = matching_prob(Side::Bid, f, v_a, v_b).unwrap();
        prop_assert!((0.0..=1.0).contains(&m_a) && (0.0..=1.0).contains(&m_b));
        // Sellers matched per seller equals buyers matched per seller.
        prop_assert!((v_a * m_a - f * v_b * m_b).abs() <= 1e-12 * (1.0 + v_a));
    }

    #[test]
    fn mirror_swaps_class_payoffs(params in symmetric_params(), x in 0.05..0.95f64, y in 0.05..0.95f64) {
        let model = GameModel::new(params).unwrap();
        let aggr = Aggregates::new(x, y).unwrap();
        let one = model.payoffs(Class::One, aggr);
        let two = model.payoffs(Class::Two, aggr.mirrored()).swapped();
        prop_assert!((one.p_1 - two.p_1).abs() < 1e-9 && (one.p_2 - two.p_2).abs() < 1e-9, "{one:?} vs {two:?}");
        let back = aggr.mirrored().mirrored();
        prop_assert!((back.pbar_1 - x).abs() < 1e-15 && (back.pbar_2 - y).abs() < 1e-15);
    }

    #[test]
    fn choice_is_a_logistic_in_the_gap(delta in -5.0..5.0f64, beta in 0.0..50.0f64) {
        let p = fp::softmax_choice(delta, beta);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + fp::softmax_choice(-delta, beta) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drift_zero_count_is_odd(p1 in 0.1..1.5f64, p2 in 0.1..1.5f64, alpha in 0.001..1.0f64, beta in 1.0..30.0f64) {
        let n = fp::fixed_point_count(p1, p2, &LearningParams { r: 0.01, alpha, beta });
        prop_assert_eq!(n % 2, 1);
    }

    #[test]
    fn histogram_conserves_mass(values in prop::collection::vec(-10.0..10.0f64, 1..300), bins in 2usize..50) {
        let h = Histogram::new(&values, bins, None).unwrap();
        prop_assert_eq!(h.total(), values.len() as u64);
        let clamped = Histogram::new(&values, bins, Some((-1.0, 1.0))).unwrap();
        prop_assert_eq!(clamped.total(), values.len() as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rounds_pair_orders_and_score_nonnegatively(params in symmetric_params(), half in 10usize..150, seed in any::<u64>(), beta in 0.5..20.0f64) {
        let cfg = SimConfig::new(2 * half, params, LearningParams { r: 0.1, alpha: 0.5, beta }, 5, seed);
        let mut sim = Simulation::new(cfg).unwrap();
        for _ in 0..5 {
            let s = sim.step();
            for m in 0..2 {
                prop_assert!(s.matched[m] <= s.valid_bids[m] && s.matched[m] <= s.valid_asks[m]);
                prop_assert!(s.matched[m] == s.valid_bids[m].min(s.valid_asks[m]));
                prop_assert!((0.0..=1.0).contains(&s.pbar[m]));
            }
        }
        // Scores are nonnegative, so attractions started at zero stay nonnegative.
        prop_assert!(sim.population.attractions().iter().all(|a| a.a_1 >= 0.0 && a.a_2 >= 0.0));
    }

    #[test]
    fn frozen_learning_keeps_attractions(params in symmetric_params(), seed in any::<u64>()) {
        let mut cfg = SimConfig::new(100, params, LearningParams { r: 0.0, alpha: 0.3, beta: 5.0 }, 3, seed);
        cfg.initial = [fp::AttractionState::new(0.4, 0.1), fp::AttractionState::new(0.2, 0.6)];
        let mut sim = Simulation::new(cfg.clone()).unwrap();
        for _ in 0..3 {
            sim.step();
        }
        let fresh = Population::new(&cfg).unwrap();
        prop_assert_eq!(sim.population.attractions(), fresh.attractions());
    }

    #[test]
    fn same_seed_same_trace(params in symmetric_params(), seed in any::<u64>()) {
        let mut cfg = SimConfig::new(150, params, LearningParams { r: 0.05, alpha: 0.2, beta: 8.0 }, 40, seed);
        cfg.snapshot_times = vec![1.0, 2.0];
        prop_assert_eq!(sim::simulate(&cfg).unwrap(), sim::simulate(&cfg).unwrap());
    }
}

#[test]
fn frozen_learning_share_matches_choice_probability() {
    // With r = 0 every agent keeps the same choice probability, so the realized
    // share is binomial around it.
    let params = GameParams::symmetric(0.3, 0.2);
    let mut cfg = SimConfig::new(20_000, params, LearningParams { r: 0.0, alpha: 0.0, beta: 4.0 }, 50, 11);
    cfg.initial = [fp::AttractionState::new(0.3, 0.1), fp::AttractionState::new(0.1, 0.3)];
    let p = fp::softmax_choice(0.2, 4.0);
    let mut sim = Simulation::new(cfg).unwrap();
    let se = (p * (1.0 - p) / 10_000.0).sqrt();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let s = sim.step();
        worst = worst.max(((s.pbar[0] - p) / se).abs());
        assert!((s.expected_pbar[0] - p).abs() < 1e-12);
    }
    assert!(worst < 4.5, "worst z {worst}");
}

#[test]
fn nash_share_is_an_equal_payoff_point() {
    let model = GameModel::new(GameParams::symmetric(0.3, 0.2)).unwrap();
    let eq = auction_ewa::nash::symmetric_equilibrium(&model, 256).unwrap();
    assert!(model.payoff_gap(Class::One, eq.aggregates).abs() < 1e-8);
    assert!(model.payoff_gap(Class::Two, eq.aggregates).abs() < 1e-8);
}
