//! Acceptance suite: one line per criterion, non-zero exit if any fails.

#[path = "../../core/tests/common/mod.rs"]
#[allow(dead_code)]
mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    band_sequence, canonical, closed_form_spearman, level_set, planted_truth_metrics, random_instance,
    reference_dbscan, tied_rank_pearson,
};
use deepsupp::attention_net::{gradient_check, init_model, train, ModelConfig};
use deepsupp::clustering::{dbscan, run_deepsupp, DeepSuppConfig};
use deepsupp::correlation::spearman_rho;
use deepsupp::evaluation::{evaluate_levels, overall_score, EvaluationConfig, MetricWeights, Metrics};
use deepsupp::exec::Execution;
use deepsupp::market_data::{
    generate_band_series, generate_synthetic_series, BandSeriesConfig, PlantedLevel, ScriptedEvent, ScriptedOutcome,
    SyntheticConfig,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn weighted_score_reproduction() -> Outcome {
    let rows: [([f64; 6], f64); 7] = [
        ([0.483, 0.759, 0.349, 0.299, 0.846, 0.800], 0.554),
        ([0.408, 0.826, 0.348, 0.299, 0.859, 0.800], 0.550),
        ([0.603, 0.362, 0.351, 0.299, 0.857, 0.800], 0.507),
        ([0.583, 0.262, 0.350, 0.299, 0.831, 0.800], 0.478),
        ([0.570, 0.137, 0.349, 0.299, 0.832, 0.800], 0.449),
        ([0.311, 0.168, 0.349, 0.297, 0.796, 0.800], 0.385),
        ([0.197, 0.182, 0.301, 0.297, 0.744, 0.684], 0.336),
    ];
    let w = MetricWeights::default();
    let mut worst: f64 = 0.0;
    for (m, expected) in rows {
        let got = overall_score(&Metrics::from_array(m), &w).map_err(|e| e.to_string())?;
        worst = worst.max((got - expected).abs());
    }
    check(worst <= 0.0005 + 1e-12, format!("7 rows, max deviation {worst:.2e}"))
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let seq = band_sequence(7, 50);
    let cfg = ModelConfig {
        epochs: 10,
        ..ModelConfig::default()
    };
    let fresh = init_model(&cfg).map_err(|e| e.to_string())?;
    let trained = train(&fresh, &seq, &cfg).map_err(|e| e.to_string())?.model;
    let mut worst: f64 = 0.0;
    for (i, model) in [&fresh, &trained].into_iter().enumerate() {
        for (j, m) in [&seq.matrices[0], &seq.matrices[49]].into_iter().enumerate() {
            let r = gradient_check(model, &m.padded, 110, (2 * i + j) as u64).map_err(|e| e.to_string())?;
            worst = worst.max(r.max_relative_error);
        }
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-4 && within(elapsed, 10),
        format!("max relative error {worst:.2e} at init and after 10 epochs, {:.1} s", elapsed.as_secs_f64()),
    )
}

fn spearman_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=16);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let got = spearman_rho(&x, &y).map_err(|e| e.to_string())?;
        worst = worst.max((got - closed_form_spearman(&x, &y)).abs());
    }
    let mut worst_tied: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=16);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let got = spearman_rho(&x, &y).map_err(|e| e.to_string())?;
        worst_tied = worst_tied.max((got - tied_rank_pearson(&x, &y)).abs());
    }
    check(
        worst <= 1e-12 && worst_tied <= 1e-12,
        format!("1000 tie-free cases max error {worst:.1e}, 1000 tied cases max error {worst_tied:.1e}"),
    )
}

fn dbscan_oracle() -> Outcome {
    let mut mismatched = Vec::new();
    for seed in 0..200 {
        let (points, eps, min_samples) = random_instance(seed);
        let got = dbscan(&points, eps, min_samples).map_err(|e| e.to_string())?;
        if canonical(&got.labels) != canonical(&reference_dbscan(&points, eps, min_samples)) {
            mismatched.push(seed);
        }
    }
    check(mismatched.is_empty(), format!("200 instances, mismatches {mismatched:?}"))
}

fn attention_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let model = init_model(&ModelConfig::default()).map_err(|e| e.to_string())?;
    let x = Array2::from_shape_fn((32, 32), |_| rng.random_range(-1.0..1.0));
    let (out, maps) = model.multi_head_attention(&x).map_err(|e| e.to_string())?;
    let emb = model.encode(&x).map_err(|e| e.to_string())?;
    let row_dev = maps
        .iter()
        .flat_map(|m| m.rows().into_iter().map(|r| (r.sum() - 1.0).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let mut out_dev: f64 = 0.0;
    let mut emb_dev: f64 = 0.0;
    let mut perm: Vec<usize> = (0..32).collect();
    for _ in 0..100 {
        perm.shuffle(&mut rng);
        let xp = x.select(Axis(0), &perm);
        let (outp, _) = model.multi_head_attention(&xp).map_err(|e| e.to_string())?;
        let expected = out.select(Axis(0), &perm);
        out_dev = out_dev.max((&outp - &expected).iter().fold(0.0, |m, v| m.max(v.abs())));
        let embp = model.encode(&xp).map_err(|e| e.to_string())?;
        emb_dev = emb_dev.max((&embp - &emb).iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    check(
        row_dev <= 1e-9 && out_dev <= 1e-9 && emb_dev <= 1e-9,
        format!(
            "row-sum deviation {row_dev:.1e}; over 100 permutations output {out_dev:.1e}, embedding {emb_dev:.1e}"
        ),
    )
}

fn overfit_sanity() -> Outcome {
    let start = Instant::now();
    let seq = band_sequence(0, 1);
    let cfg = ModelConfig {
        epochs: 200,
        batch_size: 1,
        ..ModelConfig::default()
    };
    let m = init_model(&cfg).map_err(|e| e.to_string())?;
    let input = &seq.matrices[0].padded;
    let before = m.loss(input).map_err(|e| e.to_string())?;
    let trained = train(&m, &seq, &cfg).map_err(|e| e.to_string())?.model;
    let after = trained.loss(input).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        before >= 10.0 * after && within(elapsed, 30),
        format!("MSE {before:.3e} -> {after:.3e} ({:.0}x), {:.1} s", before / after, elapsed.as_secs_f64()),
    )
}

fn metric_oracle() -> Outcome {
    use ScriptedOutcome::*;
    let kinds = [Bounce, ShallowBreakRecovered, ShallowBreakFailed, Break];
    let cfg = EvaluationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    for case in 0..40 {
        let levels: Vec<PlantedLevel> = (0..rng.random_range(1..=3))
            .map(|i| PlantedLevel {
                price: 88.0 / 1.12f64.powi(i),
                events: (0..rng.random_range(1..=5))
                    .map(|_| ScriptedEvent {
                        outcome: kinds[rng.random_range(0..kinds.len())],
                        high_volume: rng.random_bool(0.5),
                    })
                    .collect(),
            })
            .collect();
        let events: usize = levels.iter().map(|l| l.events.len()).sum();
        let (series, truth) = generate_synthetic_series(&SyntheticConfig {
            length: (21 + 16 * events).max(120) + rng.random_range(0..100),
            planted_levels: levels,
            noise_scale: rng.random_range(0.0..0.02),
            seed: case,
            ..SyntheticConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let report = evaluate_levels(&series, &level_set(series.ticker(), &truth.levels), &cfg).map_err(|e| e.to_string())?;
        let want = planted_truth_metrics(&series, &truth, cfg.regime_window, cfg.regime_threshold, cfg.events.break_tolerance);
        if report.metrics.to_array() != want {
            return Err(format!("case {case}: measured {:?}, planted truth {want:?}", report.metrics.to_array()));
        }
        checked += 1;
    }
    Ok(format!("{checked} scripted series, all six metrics exactly equal"))
}

fn end_to_end() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for seed in [0u64, 1, 2] {
        let bands = BandSeriesConfig::two_bands(seed);
        let series = generate_band_series(&bands).map_err(|e| e.to_string())?;
        let mut cfg = DeepSuppConfig::default();
        cfg.model.seed = seed;
        let start = Instant::now();
        let a = run_deepsupp(&series, &cfg, Execution::Sequential).map_err(|e| e.to_string())?.levels;
        let elapsed = start.elapsed();
        let b = run_deepsupp(&series, &cfg, Execution::Parallel).map_err(|e| e.to_string())?.levels;
        let prices = a.prices();
        let covered = bands
            .segments
            .iter()
            .all(|s| prices.iter().any(|&p| (s.low..=s.high).contains(&p)));
        ok &= covered && a == b && within(elapsed, 60) && series.len() == 300;
        details.push(format!("seed {seed}: {} levels, {:.1} s", prices.len(), elapsed.as_secs_f64()));
    }
    check(ok, details.join("; "))
}

fn files_under(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pipeline_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_deepsupp");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |args: &[&str]| -> Result<(), String> {
        let status = Command::new(bin)
            .args(args)
            .current_dir(tmp.path())
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        if status.success() {
            Ok(())
        } else {
            Err(format!("{args:?} exited with {status}"))
        }
    };
    run(&["synth", "--output-dir", "synth", "--synth-count", "2"])?;
    run(&[
        "compare",
        "--data-dir",
        "synth/data",
        "--output-dir",
        "first",
        "--methods",
        "deepsupp,hmm,local_minima,fractal,fibonacci,moving_average,quantile_regression",
        "--seed",
        "4",
    ])?;
    run(&["compare", "--config", "first/run_manifest.txt", "--output-dir", "second"])?;
    run(&["compare", "--config", "first/run_manifest.txt", "--output-dir", "third", "--jobs", "1"])?;
    let first = files_under(&tmp.path().join("first"));
    let second = files_under(&tmp.path().join("second"));
    let third = files_under(&tmp.path().join("third"));
    check(
        !first.is_empty() && first == second && first == third,
        format!("{} files byte-identical across a manifest rerun and a sequential rerun", first.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("weighted-score reproduction", weighted_score_reproduction),
        ("gradient correctness", gradient_correctness),
        ("spearman oracle", spearman_oracle),
        ("dbscan oracle", dbscan_oracle),
        ("attention invariants", attention_invariants),
        ("overfit sanity", overfit_sanity),
        ("metric oracle", metric_oracle),
        ("end-to-end", end_to_end),
        ("full pipeline determinism", pipeline_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(d) => println!("criterion {} {name}: PASS ({d})", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({d})", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
