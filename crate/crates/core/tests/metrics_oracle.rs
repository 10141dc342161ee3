mod common;

use common::{level_set, planted_truth_metrics, random_walk_series};
use deepsupp::baselines::DetectorSpec;
use deepsupp::evaluation::{
    compare_methods_with, evaluate_levels, find_touch_events, overall_score, EvaluationConfig, MetricWeights, Metrics, Outcome,
    DEFAULT_REGIME_THRESHOLD, DEFAULT_REGIME_WINDOW,
};
use deepsupp::exec::Execution;
use deepsupp::market_data::{
    generate_band_series, generate_synthetic_series, BandSeriesConfig, BarSeries, PlantedLevel, PlantedTruth, ScriptedEvent,
    ScriptedOutcome, SyntheticConfig,
};
use proptest::prelude::*;

/// Reference per-method metric rows and their overall scores.
const REFERENCE_ROWS: [([f64; 6], f64); 7] = [
    ([0.483, 0.759, 0.349, 0.299, 0.846, 0.800], 0.554),
    ([0.408, 0.826, 0.348, 0.299, 0.859, 0.800], 0.550),
    ([0.603, 0.362, 0.351, 0.299, 0.857, 0.800], 0.507),
    ([0.583, 0.262, 0.350, 0.299, 0.831, 0.800], 0.478),
    ([0.570, 0.137, 0.349, 0.299, 0.832, 0.800], 0.449),
    ([0.311, 0.168, 0.349, 0.297, 0.796, 0.800], 0.385),
    ([0.197, 0.182, 0.301, 0.297, 0.744, 0.684], 0.336),
];

fn ev(outcome: ScriptedOutcome, high_volume: bool) -> ScriptedEvent {
    ScriptedEvent { outcome, high_volume }
}

fn scripted(levels: Vec<PlantedLevel>, noise_scale: f64, seed: u64, length: usize) -> (BarSeries, PlantedTruth) {
    generate_synthetic_series(&SyntheticConfig {
        length,
        planted_levels: levels,
        noise_scale,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn oracle(series: &BarSeries, truth: &PlantedTruth) -> [f64; 6] {
    let cfg = EvaluationConfig::default();
    planted_truth_metrics(series, truth, DEFAULT_REGIME_WINDOW, DEFAULT_REGIME_THRESHOLD, cfg.events.break_tolerance)
}

fn measured(series: &BarSeries, truth: &PlantedTruth) -> [f64; 6] {
    let levels = level_set(series.ticker(), &truth.levels);
    evaluate_levels(series, &levels, &EvaluationConfig::default()).unwrap().metrics.to_array()
}

fn outcome_of(o: ScriptedOutcome) -> Outcome {
    match o {
        ScriptedOutcome::Bounce => Outcome::Bounce,
        ScriptedOutcome::ShallowBreakRecovered => Outcome::ShallowBreakRecovered,
        ScriptedOutcome::ShallowBreakFailed => Outcome::ShallowBreakFailed,
        ScriptedOutcome::Break => Outcome::Break,
    }
}

fn assert_events_match_script(series: &BarSeries, truth: &PlantedTruth) {
    let cfg = EvaluationConfig::default();
    let found = find_touch_events(series, &level_set(series.ticker(), &truth.levels), &cfg.events);
    assert_eq!(found.len(), truth.events.len(), "{found:?}");
    for (f, p) in found.iter().zip(&truth.events) {
        assert_eq!(f.level, p.level);
        assert_eq!(f.touch_bar, p.touch_bar);
        assert_eq!(f.touch_low, p.touch_low);
        assert_eq!(f.outcome, outcome_of(p.outcome));
        assert_eq!(f.outcome_bar, p.outcome_bar);
        assert_eq!(f.volume_ratio_at_touch >= cfg.volume_threshold, p.high_volume);
    }
}

#[test]
fn reference_overall_scores_reproduce() {
    let w = MetricWeights::default();
    for (row, expected) in REFERENCE_ROWS {
        let got = overall_score(&Metrics::from_array(row), &w).unwrap();
        assert!((got - expected).abs() <= 0.0005 + 1e-12, "{row:?}: {got} vs {expected}");
    }
}

#[test]
fn three_bounces_and_a_break() {
    use ScriptedOutcome::*;
    let level = PlantedLevel {
        price: 90.0,
        events: vec![ev(Bounce, false), ev(Bounce, false), ev(Break, false), ev(Bounce, false)],
    };
    let (s, truth) = scripted(vec![level], 0.0, 0, 300);
    assert_events_match_script(&s, &truth);
    let m = measured(&s, &truth);
    assert_eq!(m[0], 0.75);
    assert_eq!(m, oracle(&s, &truth));
}

#[test]
fn half_of_the_bounces_on_volume() {
    use ScriptedOutcome::*;
    let level = PlantedLevel {
        price: 90.0,
        events: vec![ev(Bounce, true), ev(Bounce, false), ev(Bounce, true), ev(Bounce, false)],
    };
    let (s, truth) = scripted(vec![level], 0.01, 4, 300);
    assert_events_match_script(&s, &truth);
    let m = measured(&s, &truth);
    assert_eq!(m[2], 0.5);
    assert_eq!(m, oracle(&s, &truth));
}

#[test]
fn four_recovered_one_failed() {
    use ScriptedOutcome::*;
    let events = vec![
        ev(ShallowBreakRecovered, false),
        ev(ShallowBreakFailed, false),
        ev(ShallowBreakRecovered, false),
        ev(ShallowBreakRecovered, false),
        ev(ShallowBreakRecovered, false),
    ];
    let (s, truth) = scripted(vec![PlantedLevel { price: 85.0, events }], 0.0, 0, 300);
    assert_events_match_script(&s, &truth);
    let m = measured(&s, &truth);
    assert_eq!(m[5], 0.8);
    assert_eq!(m, oracle(&s, &truth));
}

#[test]
fn untouched_level_changes_only_proximity() {
    use ScriptedOutcome::*;
    let level = PlantedLevel {
        price: 90.0,
        events: vec![ev(Bounce, true), ev(ShallowBreakRecovered, false), ev(Break, false), ev(Bounce, false)],
    };
    let (s, truth) = scripted(vec![level], 0.01, 9, 300);
    let cfg = EvaluationConfig::default();
    let base = evaluate_levels(&s, &level_set("SYNTH", &truth.levels), &cfg).unwrap();
    let far_below = s.price_range().0 * 0.5;
    let more = evaluate_levels(&s, &level_set("SYNTH", &[far_below, 90.0]), &cfg).unwrap();
    assert_eq!(base.event_counts, more.event_counts);
    let (a, b) = (base.metrics.to_array(), more.metrics.to_array());
    for i in [0, 2, 3, 4, 5] {
        assert_eq!(a[i], b[i], "metric {i}");
    }
    assert_ne!(a[1], b[1]);
}

fn outcome_strategy() -> impl Strategy<Value = ScriptedEvent> {
    (0..4usize, any::<bool>()).prop_map(|(k, hv)| {
        let outcome = [
            ScriptedOutcome::Bounce,
            ScriptedOutcome::ShallowBreakRecovered,
            ScriptedOutcome::ShallowBreakFailed,
            ScriptedOutcome::Break,
        ][k];
        ev(outcome, hv)
    })
}

fn script_strategy() -> impl Strategy<Value = (Vec<PlantedLevel>, f64, u64, usize)> {
    let levels = prop::collection::vec(prop::collection::vec(outcome_strategy(), 0..6), 1..=3).prop_map(|per_level| {
        per_level
            .into_iter()
            .enumerate()
            .map(|(i, events)| PlantedLevel {
                price: 88.0 / 1.12f64.powi(i as i32),
                events,
            })
            .collect::<Vec<_>>()
    });
    (levels, 0.0..=0.02f64, any::<u64>(), 0..200usize)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scripted_metrics_equal_planted_truth((levels, noise, seed, extra) in script_strategy()) {
        let events: usize = levels.iter().map(|l| l.events.len()).sum();
        let length = (21 + 16 * events).max(120) + extra;
        let (s, truth) = scripted(levels, noise, seed, length);
        assert_events_match_script(&s, &truth);
        prop_assert_eq!(measured(&s, &truth), oracle(&s, &truth));
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed in any::<u64>(), len in 30..260usize, fractions in prop::collection::vec(-0.2..1.2f64, 0..8)) {
        let s = random_walk_series(seed, len);
        let (lo, hi) = s.price_range();
        let prices: Vec<f64> = fractions.iter().map(|f| (lo + f * (hi - lo)).max(1e-3)).collect();
        let r = evaluate_levels(&s, &level_set(s.ticker(), &prices), &EvaluationConfig::default()).unwrap();
        for m in r.metrics.to_array() {
            prop_assert!((0.0..=1.0).contains(&m));
        }
        let recomputed: f64 = r.metrics.to_array().iter().zip(MetricWeights::default().to_array()).map(|(m, w)| m * w).sum();
        prop_assert!((r.overall - recomputed).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&r.overall));
    }
}

fn universe() -> Vec<BarSeries> {
    let mut u = vec![random_walk_series(11, 200), random_walk_series(12, 240)];
    u.push(generate_band_series(&BandSeriesConfig::two_bands(2)).unwrap());
    // Too short for the hidden-state detector.
    u.push(random_walk_series(13, 40));
    u
}

#[test]
fn comparison_ignores_ticker_order_and_mode() {
    let specs: Vec<DetectorSpec> = ["local_minima", "fractal", "fibonacci", "moving_average", "hmm"]
        .iter()
        .map(|n| n.parse().unwrap())
        .collect();
    let cfg = EvaluationConfig::default();
    let u = universe();
    let forward = compare_methods_with(&specs, &u, &cfg, Execution::Sequential).unwrap();
    let mut reversed = u.clone();
    reversed.reverse();
    let backward = compare_methods_with(&specs, &reversed, &cfg, Execution::Parallel).unwrap();
    assert_eq!(forward, backward);
    assert_eq!(forward.to_csv(), backward.to_csv());

    let means: Vec<f64> = forward.rows.iter().map(|r| r.overall_mean.unwrap()).collect();
    assert!(means.windows(2).all(|w| w[0] >= w[1]), "{means:?}");
    let hmm = forward.rows.iter().find(|r| r.method == "hmm").unwrap();
    assert_eq!(hmm.excluded_ticker_count, 1);
    assert_eq!(hmm.excluded_tickers, vec!["RW13".to_string()]);
    assert_eq!(hmm.tickers_evaluated, 3);
}

#[test]
fn comparison_csv_columns() {
    let specs = vec![DetectorSpec::new("fibonacci")];
    let table = compare_methods_with(&specs, &universe()[..1], &EvaluationConfig::default(), Execution::Sequential).unwrap();
    let csv = table.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,overall_mean,overall_std,support_accuracy,price_proximity,volume_confirmation,regime_sensitivity,hold_duration,breakout_recovery,excluded_ticker_count"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "fibonacci");
    assert_eq!(row[2], "0");
    assert!(table.to_text().starts_with("method"));
}

#[test]
fn comparison_rejects_bad_input() {
    let cfg = EvaluationConfig::default();
    let u = universe();
    assert!(compare_methods_with(&[], &u, &cfg, Execution::Sequential).is_err());
    assert!(compare_methods_with(&[DetectorSpec::new("fractal")], &[], &cfg, Execution::Sequential).is_err());
    let dup = vec![u[0].clone(), u[0].clone()];
    assert!(compare_methods_with(&[DetectorSpec::new("fractal")], &dup, &cfg, Execution::Sequential).is_err());
    let mut bad = cfg.clone();
    bad.weights.support_accuracy = 0.15;
    assert!(compare_methods_with(&[DetectorSpec::new("fractal")], &u, &bad, Execution::Sequential).is_err());
    assert!(compare_methods_with(&[DetectorSpec::new("nope")], &u, &cfg, Execution::Sequential).is_err());
}
