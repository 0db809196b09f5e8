//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use mo_ensemble::combiner::{
    init_state, CombinerConfig, ForecastBlock, Method, Rule, Strategy, WeightMatrix,
};
use mo_ensemble::ensemble::{fit_with_pruning, EnsembleConfig};
use mo_ensemble::evaluation::{
    average_rank, fold_segments, mccv_folds, per_horizon_breakdown, percentage_difference, win_draw_loss,
    RankScope, WinDrawLoss,
};
use mo_ensemble::experiment::{run_experiment, RunConfig};
use mo_ensemble::learners::{default_pool, fit_elastic_net, fit_ridge, KnnModel, KnnWeighting};
use mo_ensemble::rng::{derive_seed, rng_from};
use mo_ensemble::synthetic::{generate_synthetic, SyntheticKind};
use mo_ensemble::Matrix;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mat(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn simplex_suite() -> Outcome {
    let cfg = CombinerConfig { lambda: 10, ..Default::default() };
    let (mut computed, mut violations, mut worst) = (0usize, 0usize, 0.0f64);
    let mut seed = 0u64;
    while computed < 10_000 {
        let mut rng = rng_from(derive_seed(1, &format!("simplex/{seed}")));
        seed += 1;
        let (k, h, n) = (rng.gen_range(1..9), rng.gen_range(1..7), rng.gen_range(5..15));
        let stream = Stream::random(&mut rng, k, h, n);
        let losses = random_train_losses(&mut rng, k, h);
        let meta = random_meta(&mut rng, k, h);
        for method in Method::all() {
            for w in drive(&mut new_state(method, &stream, &losses, &meta, &cfg), &stream) {
                computed += 1;
                let v = w.simplex_violation();
                worst = worst.max(v);
                if !(v <= 1e-9) {
                    violations += 1;
                }
            }
        }
    }
    ensure(violations == 0, || format!("{violations} of {computed} weight rows off the simplex (worst {worst:e})"))?;
    Ok(format!("{computed} weight computations, worst deviation {worst:e}"))
}

fn solver_oracles() -> Outcome {
    let mut rng = rng_from(2);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut worst_ridge = 0.0f64;
    for _ in 0..100 {
        let (m, q, h) = (rng.gen_range(10..60), rng.gen_range(1..8), rng.gen_range(1..5));
        let lambda = rng.gen_range(0.0..5.0);
        let x = random_matrix(&mut rng, m, q);
        let y = random_matrix(&mut rng, m, h);
        let model = fit_ridge(&mat(&x), &mat(&y), lambda).map_err(|e| e.to_string())?;
        for k in 0..h {
            let col: Vec<f64> = y.iter().map(|r| r[k]).collect();
            let (coef, b0) = ridge_oracle(&x, &col, lambda);
            for (j, c) in coef.iter().enumerate() {
                worst_ridge = worst_ridge.max(rel(model.coef.get(j, k), *c));
            }
            worst_ridge = worst_ridge.max(rel(model.intercept[k], b0));
        }
    }
    ensure(worst_ridge <= 1e-6, || format!("ridge off by {worst_ridge:e}"))?;

    let mut worst_kkt = 0.0f64;
    for _ in 0..100 {
        let (m, q) = (rng.gen_range(10..60), rng.gen_range(1..8));
        let x = random_matrix(&mut rng, m, q);
        let y: Vec<f64> = x
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| v * (j as f64 - 1.5)).sum::<f64>() + rng.gen_range(-1.0..1.0))
            .collect();
        let lambda = rng.gen_range(0.01..2.0);
        let ym: Vec<Vec<f64>> = y.iter().map(|v| vec![*v]).collect();
        let model = fit_elastic_net(&mat(&x), &mat(&ym), lambda, 1.0).map_err(|e| e.to_string())?;
        let coef: Vec<f64> = (0..q).map(|j| model.coef.get(j, 0)).collect();
        worst_kkt = worst_kkt.max(elastic_net_kkt_violation(&x, &y, &coef, lambda, 1.0));
    }
    ensure(worst_kkt <= 1e-5, || format!("lasso KKT violation {worst_kkt:e}"))?;

    let mut mismatches = 0;
    for trial in 0..100 {
        let (m, q, k) = (rng.gen_range(10..80), rng.gen_range(1..6), rng.gen_range(1..10));
        // a coarse grid makes distance ties common
        let x: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..q).map(|_| if trial % 2 == 0 { rng.gen_range(-2..3) as f64 } else { rng.gen_range(-2.0..2.0) }).collect())
            .collect();
        let y = random_matrix(&mut rng, m, 2);
        let model = KnnModel::fit(&mat(&x), &mat(&y), k, KnnWeighting::Uniform).map_err(|e| e.to_string())?;
        let query: Vec<f64> = (0..q).map(|_| rng.gen_range(-2..3) as f64).collect();
        let expected: Vec<(f64, usize)> = brute_force_neighbors(&x, &query).into_iter().take(k).collect();
        if model.neighbors(&query) != expected {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} of 100 kNN queries differ from brute force"))?;
    Ok(format!("ridge max rel err {worst_ridge:.1e}, lasso max KKT {worst_kkt:.1e}, kNN 100/100 exact"))
}

fn strategy_identities() -> Outcome {
    let cfg = CombinerConfig { lambda: 8, ..Default::default() };
    let mut checked = 0usize;
    for i in 0..1000u64 {
        let mut rng = rng_from(derive_seed(3, &format!("identities/{i}")));
        let unit = i % 2 == 1;
        let (k, h, n) = (rng.gen_range(1..7), if unit { 1 } else { rng.gen_range(2..7) }, rng.gen_range(1..20));
        let stream = Stream::random(&mut rng, k, h, n);
        let losses = random_train_losses(&mut rng, k, h);
        let meta = random_meta(&mut rng, k, h);
        for rule in Rule::PERFORMANCE_BASED {
            let run = |s| drive(&mut new_state(Method::new(rule, s), &stream, &losses, &meta, &cfg), &stream);
            let ih = run(Strategy::IndividualHorizon);
            let fhf = run(Strategy::FirstHorizonForward);
            let lhb = run(Strategy::LastHorizonBackward);
            for t in 0..n {
                for row in 0..h {
                    ensure(fhf[t].row(row) == ih[t].row(0), || format!("{rule:?} FHF row {row} differs from IH row 1"))?;
                    ensure(lhb[t].row(row) == ih[t].row(h - 1), || format!("{rule:?} LHB row {row} differs from IH row H"))?;
                }
            }
            if unit {
                let ch = run(Strategy::CompleteHorizon);
                ensure(ch == ih && fhf == ih && lhb == ih, || format!("{rule:?} strategies differ at H=1"))?;
            }
            checked += 1;
        }
    }
    Ok(format!("1000 histories, {checked} rule/history pairs, all identities exact"))
}

/// Feeds a loss stream through a combiner with zero actuals, so a member's
/// forecast is its loss. Returns the weights used and the combined losses.
fn run_loss_stream(method: Method, losses: &[Vec<f64>], horizon: usize, cfg: &CombinerConfig) -> (Vec<WeightMatrix>, Vec<f64>) {
    let k = losses[0].len();
    let ids: std::sync::Arc<[String]> = (0..k).map(|i| format!("m{i}")).collect();
    let actuals = Matrix::zeros(losses.len(), horizon);
    let mut state = init_state(method, k, horizon, None, None, cfg).unwrap();
    let mut weights = Vec::new();
    let mut combined = Vec::new();
    for (t, l) in losses.iter().enumerate() {
        state.advance(t, &actuals).unwrap();
        let block = Matrix::from_rows(&l.iter().map(|v| vec![*v; horizon]).collect::<Vec<_>>()).unwrap();
        let block = ForecastBlock::new(block, ids.clone()).unwrap();
        weights.push(state.weights(&[]).unwrap());
        combined.push(state.forecast(t, &[], &block).unwrap()[0].abs());
    }
    (weights, combined)
}

fn convergence() -> Outcome {
    let lambda = 50;
    let cfg = CombinerConfig { lambda, ..Default::default() };
    let mut rng = rng_from(4);
    let losses: Vec<Vec<f64>> = (0..300)
        .map(|_| (0..5).map(|j| if j == 0 { 0.0 } else { rng.gen_range(0.2..1.0) }).collect())
        .collect();
    let mut lowest = [f64::INFINITY; 3];
    for strategy in Strategy::ALL {
        for (slot, rule) in [Rule::Window, Rule::Blast, Rule::Ewa].into_iter().enumerate() {
            let (w, _) = run_loss_stream(Method::new(rule, strategy), &losses, 3, &cfg);
            // with optimistic feedback origin t sees t complete records
            let from = if rule == Rule::Ewa { 200 } else { lambda };
            for (t, wt) in w.iter().enumerate().skip(from) {
                for row in 0..3 {
                    let w1 = wt.row(row)[0];
                    lowest[slot] = lowest[slot].min(w1);
                    let ok = if rule == Rule::Ewa { w1 > 0.99 } else { w1 >= 0.99 };
                    ensure(ok, || format!("{} weight on member 1 is {w1} at t={t}", Method::new(rule, strategy)))?;
                }
            }
        }
    }
    Ok(format!(
        "min weight on member 1: Window {:.6}, Blast {:.6} (t>=50), EWA {:.6} (t>=200)",
        lowest[0], lowest[1], lowest[2]
    ))
}

fn regret() -> Outcome {
    let (k, t) = (10usize, 1000usize);
    let bound = (t as f64 / 2.0 * (k as f64).ln()).sqrt() * 1.05;
    let cfg = CombinerConfig::default();
    let mut worst_regret = f64::NEG_INFINITY;
    for s in 0..20u64 {
        let mut rng = rng_from(derive_seed(5, &format!("regret/{s}")));
        let means: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..0.8)).collect();
        let switch = rng.gen_range(100..900);
        let losses: Vec<Vec<f64>> = (0..t)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        // odd streams swap the best and worst members halfway through
                        let m = if s % 2 == 1 && i >= switch { 1.0 - means[j] } else { means[j] };
                        (m + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0)
                    })
                    .collect()
            })
            .collect();
        let (_, combined) = run_loss_stream(Method::new(Rule::Ewa, Strategy::IndividualHorizon), &losses, 1, &cfg);
        let ensemble: f64 = combined.iter().sum();
        let best = (0..k).map(|j| losses.iter().map(|l| l[j]).sum::<f64>()).fold(f64::INFINITY, f64::min);
        let r = ensemble - best;
        worst_regret = worst_regret.max(r);
        ensure(r <= bound, || format!("stream {s}: regret {r:.3} exceeds {bound:.3}"))?;
    }
    Ok(format!("20 streams, worst regret {worst_regret:.3} <= bound {bound:.3}"))
}

fn pruning_contract() -> Outcome {
    let cfg = EnsembleConfig::default();
    ensure(cfg.pool.len() == 39 && default_pool().len() == 39, || format!("default pool has {} members", cfg.pool.len()))?;
    let mut kept_sizes = Vec::new();
    for s in 0..3u64 {
        let series = generate_synthetic(SyntheticKind::RegimeSwitch, "p", 600, s).map_err(|e| e.to_string())?;
        let fold = mccv_folds(series.len(), 1, 0.6, 0.1, s).map_err(|e| e.to_string())?[0];
        let (train, _) = fold_segments(series.values(), &fold, cfg.lags).map_err(|e| e.to_string())?;
        let ens = fit_with_pruning(&train, &cfg, "p").map_err(|e| e.to_string())?;
        let p = ens.pruning();
        let score = |id: &String| p.scores.iter().find(|(s, _)| s == id).unwrap().1;
        let worst_kept = p.kept.iter().map(score).fold(f64::NEG_INFINITY, f64::max);
        let best_dropped = p.discarded.iter().map(score).fold(f64::INFINITY, f64::min);
        ensure(p.kept.len() == 30 && p.discarded.len() == 9, || format!("kept {}, discarded {}", p.kept.len(), p.discarded.len()))?;
        ensure(worst_kept <= best_dropped, || format!("kept MAE {worst_kept} above discarded MAE {best_dropped}"))?;
        kept_sizes.push(p.kept.len());
    }
    Ok(format!("39 -> {:?} kept on 3 series, ordering holds", kept_sizes))
}

fn write_regime_catalog(path: &Path, count: usize, n: usize, seed: u64) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    w.write_record(["series_id", "timestamp", "value"]).map_err(|e| e.to_string())?;
    for i in 0..count {
        let s = generate_synthetic(SyntheticKind::RegimeSwitch, format!("regime_switch_{i:03}"), n, derive_seed(seed, &format!("synth/{i}")))
            .map_err(|e| e.to_string())?;
        for (t, v) in s.values().iter().enumerate() {
            w.write_record([s.id(), &t.to_string(), &v.to_string()]).map_err(|e| e.to_string())?;
        }
    }
    w.flush().map_err(|e| e.to_string())
}

fn run_config(data: &Path, out: &Path, folds: usize, seed: u64) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    cfg.data = Some(data.to_path_buf());
    cfg.out = Some(out.to_path_buf());
    cfg.folds = folds;
    cfg.ensemble.seed = seed;
    cfg.finalize().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn desk_replication(dir: &Path) -> Outcome {
    let data = dir.join("regime.csv");
    write_regime_catalog(&data, 20, 1000, 2024)?;
    let cfg = run_config(&data, &dir.join("desk"), 10, 2024)?;
    ensure(
        cfg.ensemble.lags == 5 && cfg.ensemble.horizon == 18 && cfg.ensemble.combiner.lambda == 50 && cfg.ensemble.methods.len() == 33,
        || "desk configuration differs from q=5, H=18, lambda=50, 33 methods".into(),
    )?;
    let started = Instant::now();
    let outcome = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 1800.0, || format!("run took {secs:.0}s"))?;
    ensure(outcome.meta.series_evaluated == 20, || format!("{} series evaluated", outcome.meta.series_evaluated))?;

    let per_h = per_horizon_breakdown(&outcome.table).map_err(|e| e.to_string())?;
    let mut counts = std::collections::BTreeMap::<&str, Vec<usize>>::new();
    for r in &per_h {
        counts.entry(r.method.as_str()).or_default().push(r.horizon);
    }
    ensure(counts.len() == 32, || format!("per-horizon report covers {} methods", counts.len()))?;
    for (m, hs) in &counts {
        ensure(*hs == (1..=18).collect::<Vec<_>>(), || format!("{m} has {} horizons", hs.len()))?;
    }

    let ranks = average_rank(&outcome.table, RankScope::SeriesFold).map_err(|e| e.to_string())?;
    let rank_of = |m: &str| ranks.iter().find(|r| r.method == m).map(|r| r.mean_rank).unwrap();
    let simple = rank_of("Simple");
    let best: Vec<(String, f64)> = Strategy::ALL
        .iter()
        .map(|&s| {
            let m = Method::new(Rule::Best, s).to_string();
            let r = rank_of(&m);
            (m, r)
        })
        .collect();
    let listing = best.iter().map(|(m, r)| format!("{m} {r:.2}")).collect::<Vec<_>>().join(", ");
    ensure(best.iter().all(|(_, r)| simple < *r), || {
        format!("Simple mean rank {simple:.2} not strictly better than [{listing}] ({secs:.0}s)")
    })?;
    Ok(format!("{secs:.0}s, Simple {simple:.2} vs [{listing}], 18 horizons x 32 methods"))
}

fn percentage_machinery() -> Outcome {
    let pd = |a, b| percentage_difference(a, b).map_err(|e| e.to_string());
    ensure(pd(1.2, 1.0)? == 20.0, || "pd(1.2, 1.0) != 20".into())?;
    ensure(pd(1.0, 1.0)? == 0.0, || "pd(1.0, 1.0) != 0".into())?;
    ensure(pd(0.5, 1.0)? == -50.0, || "pd(0.5, 1.0) != -50".into())?;
    ensure(percentage_difference(0.5, 0.0).is_err(), || "zero baseline accepted".into())?;
    let wdl = |v: &[f64]| win_draw_loss(v).map_err(|e| e.to_string());
    let third = 1.0 / 3.0;
    ensure(wdl(&[-5.0, 0.2, 3.0])? == WinDrawLoss { win: third, draw: third, loss: third }, || "[-5, 0.2, 3]".into())?;
    let draw = WinDrawLoss { win: 0.0, draw: 1.0, loss: 0.0 };
    ensure(wdl(&[-0.5])? == draw, || "[-0.5] is not a draw".into())?;
    ensure(wdl(&[-1.0])? == draw, || "[-1.0] is not a draw".into())?;
    ensure(wdl(&[1.0])? == draw, || "[1.0] is not a draw".into())?;
    Ok("hand cases exact".into())
}

fn determinism(dir: &Path) -> Outcome {
    let data = dir.join("det.csv");
    write_regime_catalog(&data, 4, 500, 77)?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = run_config(&data, &dir.join(run), 3, 77)?;
        cfg.threads = Some(4);
        run_experiment(&cfg).map_err(|e| e.to_string())?;
        outputs.push(std::fs::read(dir.join(run).join("metrics.csv")).map_err(|e| e.to_string())?);
    }
    ensure(outputs[0] == outputs[1], || "metrics.csv differs between runs".into())?;
    Ok(format!("{} bytes identical across two runs", outputs[0].len()))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("simplex suite", Box::new(simplex_suite)),
        ("solver oracles", Box::new(solver_oracles)),
        ("strategy identities", Box::new(strategy_identities)),
        ("convergence", Box::new(convergence)),
        ("regret sanity", Box::new(regret)),
        ("pruning contract", Box::new(pruning_contract)),
        ("desk-scale replication", Box::new(|| desk_replication(dir.path()))),
        ("percentage difference", Box::new(percentage_machinery)),
        ("end-to-end determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS  {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
