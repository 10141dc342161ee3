//! Independent reference implementations shared by the integration and
//! acceptance tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// DBSCAN from a full distance matrix with union-find over core pairs.
/// Non-core points within `eps` of a core point take the cluster of the
/// nearest such core (ties to the lower cluster id).
pub fn reference_dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<i64> {
    let n = points.len();
    let dist: Vec<Vec<f64>> = points
        .iter()
        .map(|a| {
            points
                .iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
                .collect()
        })
        .collect();
    let eps2 = eps * eps;
    let core: Vec<bool> = (0..n)
        .map(|i| dist[i].iter().filter(|&&d| d <= eps2).count() >= min_samples)
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && dist[i][j] <= eps2 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    // Roots are the smallest index of each component; number them in order.
    let mut id_of_root = vec![-1i64; n];
    let mut next = 0;
    let mut labels = vec![-1i64; n];
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            if id_of_root[r] < 0 {
                id_of_root[r] = next;
                next += 1;
            }
            labels[i] = id_of_root[r];
        }
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        let best = (0..n)
            .filter(|&j| core[j] && dist[i][j] <= eps2)
            .map(|j| (dist[i][j], labels[j]))
            .min_by(|a, b| a.partial_cmp(b).unwrap());
        if let Some((_, id)) = best {
            labels[i] = id;
        }
    }
    labels
}

/// Renumbers clusters in order of first appearance; noise stays `-1`.
pub fn canonical(labels: &[i64]) -> Vec<i64> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                -1
            } else {
                let next = map.len() as i64;
                *map.entry(l).or_insert(next)
            }
        })
        .collect()
}

/// Blobs plus uniform background in 2 to 4 dimensions.
pub fn random_instance(seed: u64) -> (Vec<Vec<f64>>, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=200);
    let dim = rng.random_range(2..=4);
    let blobs: Vec<Vec<f64>> = (0..rng.random_range(1..=5))
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..4.0)).collect())
        .collect();
    let points = (0..n)
        .map(|_| {
            if rng.random_bool(0.8) {
                let c = &blobs[rng.random_range(0..blobs.len())];
                let spread = rng.random_range(0.05..0.6);
                c.iter().map(|&x| x + rng.random_range(-spread..spread)).collect()
            } else {
                (0..dim).map(|_| rng.random_range(0.0..4.0)).collect()
            }
        })
        .collect();
    let eps = rng.random_range(0.05..0.8);
    let min_samples = rng.random_range(1..=12);
    (points, eps, min_samples)
}

/// Spearman rho from the closed form `1 - 6 Σd² / (n(n² - 1))`, valid only
/// without ties.
pub fn closed_form_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = (k + 1) as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

/// Pearson correlation of average ranks, computed with explicit tie groups.
pub fn tied_rank_pearson(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let below = v.iter().filter(|&&b| b < a).count() as f64;
                let equal = v.iter().filter(|&&b| b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Geometric random walk with wicks and random volume.
pub fn random_walk_series(seed: u64, len: usize) -> deepsupp::market_data::BarSeries {
    use deepsupp::market_data::{Bar, BarSeries, Timestamp};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut close: f64 = rng.random_range(20.0..200.0);
    let bars = (0..len)
        .map(|i| {
            let open = close;
            close = open * (1.0 + rng.random_range(-0.03..0.03));
            Bar {
                timestamp: Timestamp::Epoch(i as i64 * 86_400),
                open,
                high: open.max(close) * (1.0 + rng.random_range(0.0..0.01)),
                low: open.min(close) * (1.0 - rng.random_range(0.0..0.01)),
                close,
                volume: rng.random_range(1e5..1e6),
            }
        })
        .collect();
    BarSeries::new(format!("RW{seed}"), bars).unwrap()
}

/// Level set holding exactly the given prices.
pub fn level_set(ticker: &str, prices: &[f64]) -> deepsupp::clustering::SupportLevelSet {
    use deepsupp::clustering::{SupportLevel, SupportLevelSet};
    let candidates = prices
        .iter()
        .enumerate()
        .map(|(i, &price)| SupportLevel {
            price,
            cluster_id: i as i64,
            member_count: 1,
            method: "planted".into(),
        })
        .collect();
    SupportLevelSet::from_candidates(ticker, "planted", candidates)
}

/// The six metrics a scripted series must score on its planted levels,
/// derived from the script rather than from detected events. Event-based
/// metrics read the planted outcomes and volume flags; regimes and hold
/// spans come straight from the closes; proximity counts closes.
pub fn planted_truth_metrics(
    series: &deepsupp::market_data::BarSeries,
    truth: &deepsupp::market_data::PlantedTruth,
    regime_window: usize,
    regime_threshold: f64,
    break_tolerance: f64,
) -> [f64; 6] {
    use deepsupp::market_data::ScriptedOutcome as O;
    let closes = series.closes();
    let events = &truth.events;
    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let is = |o: O| move |e: &&deepsupp::market_data::PlantedEvent| e.outcome == o;

    let bounces = events.iter().filter(is(O::Bounce)).count();
    let accuracy = frac(bounces, events.len());

    let proximity = if truth.levels.is_empty() {
        0.0
    } else {
        let mut ascending = truth.levels.clone();
        ascending.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for &level in &ascending {
            let mut below = 0usize;
            let mut equal = 0usize;
            for &c in &closes {
                if c < level {
                    below += 1;
                } else if c == level {
                    equal += 1;
                }
            }
            let pct = 100.0 * (below as f64 + 0.5 * equal as f64) / closes.len() as f64;
            let gap = if pct < 5.0 {
                5.0 - pct
            } else if pct > 35.0 {
                pct - 35.0
            } else {
                0.0
            };
            total += (1.0 - gap / 35.0).max(0.0);
        }
        total / truth.levels.len() as f64
    };

    let loud = events.iter().filter(is(O::Bounce)).filter(|e| e.high_volume).count();
    let volume = frac(loud, bounces);

    // Regime buckets in bull, bear, sideways order.
    let mut buckets = [(0usize, 0usize); 3];
    for e in events {
        let t = e.touch_bar;
        let bucket = if t < regime_window {
            2
        } else {
            let r = closes[t] / closes[t - regime_window] - 1.0;
            if r > regime_threshold {
                0
            } else if r < -regime_threshold {
                1
            } else {
                2
            }
        };
        buckets[bucket].1 += 1;
        if e.outcome == O::Bounce {
            buckets[bucket].0 += 1;
        }
    }
    let accs: Vec<f64> = buckets.iter().filter(|b| b.1 > 0).map(|b| frac(b.0, b.1)).collect();
    let regime = if accs.is_empty() {
        0.0
    } else {
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        (mean * (1.0 - std)).clamp(0.0, 1.0)
    };

    // Summed in ascending price order, as a level set is stored.
    let last = closes.len() - 1;
    let mut by_price: Vec<(usize, f64)> = truth.levels.iter().copied().enumerate().collect();
    by_price.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut spans = Vec::new();
    for (i, level) in by_price {
        let Some(first) = events.iter().filter(|e| e.level_index == i).map(|e| e.touch_bar).min() else {
            continue;
        };
        let remaining = last - first;
        let floor = level * (1.0 - break_tolerance);
        let broken = closes[first..].iter().position(|&c| c < floor);
        spans.push(match broken {
            _ if remaining == 0 => 1.0,
            Some(k) => k as f64 / remaining as f64,
            None => 1.0,
        });
    }
    let hold = if spans.is_empty() {
        0.0
    } else {
        spans.iter().sum::<f64>() / spans.len() as f64
    };

    let recovered = events.iter().filter(is(O::ShallowBreakRecovered)).count();
    let failed = events.iter().filter(is(O::ShallowBreakFailed)).count();
    let recovery = if recovered + failed == 0 { 0.8 } else { frac(recovered, recovered + failed) };

    [accuracy, proximity, volume, regime, hold, recovery]
}

/// Correlation sequence with `windows` windows of the default length, cut
/// from the two-band synthetic series.
pub fn band_sequence(seed: u64, windows: usize) -> deepsupp::correlation::CorrSequence {
    use deepsupp::correlation::{rolling_correlation_matrices, DEFAULT_WINDOW};
    use deepsupp::features::{build_feature_matrix, minmax_scale};
    use deepsupp::market_data::{generate_band_series, BandSeriesConfig};
    let series = generate_band_series(&BandSeriesConfig::two_bands(seed)).unwrap();
    let (scaled, _) = minmax_scale(&build_feature_matrix(&series).unwrap());
    let mut seq = rolling_correlation_matrices(&scaled, DEFAULT_WINDOW, 1).unwrap();
    seq.matrices.truncate(windows);
    seq
}
