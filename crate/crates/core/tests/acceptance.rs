//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line each.
//!
//! The process exits 0 even when a criterion fails so `cargo test` stays
//! usable; set `TSP_ACCEPTANCE_STRICT=1` to turn failures into a nonzero exit.
//! `TSP_ACCEPTANCE_ONLY=1,4` runs a subset.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use tsp_core::harness::{
    build_skb_from, config_hash, desk_classes, eval_closed, eval_open, examples,
    open_sweep_unknown_count, snr_grid, split_dataset, train_baseline, write_csv, BaselineConfig, Decision,
    OpenSetProtocol, SplitSpec, BASELINE_METHOD, SEMANTIC_METHOD, UPDATE_OFF, UPDATE_ON,
};
use tsp_core::net::{
    encode_params, extract_feature, grad, loss, normalize_counts, train, Architecture, Example, LossSpec,
    ModelParams, ReconLoss, SemanticFeature, TrainConfig,
};
use tsp_core::photon_sim::{
    encode_dataset, expected_counts, ideal_intensity, record_scene, sample_histogram, simulate_dataset, Dataset,
    DatasetConfig, PulseModel, TimeAxis,
};
use tsp_core::seed::derive;
use tsp_core::skb::{
    absorb_unknown, build_skb, calibrate_tau, detect, encode_skb, Detection, Provenance, Skb, UnknownBuffer,
};

/// Model settings shared by the desk runs.
fn desk_model(seed: u64) -> TrainConfig {
    TrainConfig {
        latent_dim: LATENT_DIM,
        beta: 0.01,
        recon: ReconLoss::PoissonNll,
        seed,
        ..Default::default()
    }
}

const LATENT_DIM: usize = 16;
const DESK_SEED: u64 = 7;
const ORDER_SEED: u64 = 5;

fn desk_dataset_config(n_classes: usize) -> DatasetConfig {
    DatasetConfig {
        classes: desk_classes()[..n_classes].to_vec(),
        samples_per_cell: 100,
        snr_db: snr_grid(-16.0, 13.0, 8),
        photon_budget: 2e5,
        axis: TimeAxis::default(),
        pulse: PulseModel::default(),
        repetition_rate_hz: 20e6,
        scene_width: 32,
        scene_height: 32,
        master_seed: DESK_SEED,
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn gradient_check() -> Verdict {
    let start = Instant::now();
    let arch = Architecture {
        input_dim: 8,
        latent_dim: 3,
        encoder_hidden: vec![6],
        decoder_hidden: vec![6],
    };
    let classes = [0u32, 1, 2];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for point in 0..100 {
        let mut p = ModelParams::init(&arch, &classes, rng.random()).unwrap();
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        let counts: Vec<u32> = (0..8).map(|_| rng.random_range(1..60)).collect();
        let ex = Example {
            x: normalize_counts(&counts).unwrap(),
            label: classes[point % 3],
        };
        let eps: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
        let spec = LossSpec {
            beta: rng.random_range(0.01..2.0),
            recon: if point % 2 == 0 { ReconLoss::SquaredError } else { ReconLoss::PoissonNll },
        };
        let (g, _) = grad(&p, &[&ex], std::slice::from_ref(&eps), spec).unwrap();
        let analytic: Vec<f64> = g.tensors().iter().flat_map(|t| t.iter().copied()).collect();
        let f = |q: &ModelParams| loss(&ex.x, ex.label, q, &eps, spec).unwrap().total;
        let mut k = 0;
        for ti in 0..p.tensors().len() {
            for j in 0..p.tensors()[ti].len() {
                let at = |step: f64| {
                    let mut q = p.clone();
                    q.tensors_mut()[ti][j] += step;
                    f(&q)
                };
                // fourth-order central stencil
                let numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
                let a = analytic[k];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
                k += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!("max relative error {worst:.3e} over 100 points in {elapsed:.1?}"),
    )
}

// ---------------------------------------------------------------- 2

/// Adaptive Simpson on a smooth integrand.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    step(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

fn likelihood_quadrature() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=6);
        let center: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let var: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..4.0)).collect();
        let z: Vec<f64> = center
            .iter()
            .zip(&var)
            .map(|(c, v)| c + rng.random_range(-3.0..3.0) * v.sqrt())
            .collect();
        let entry = tsp_core::skb::SkbEntry {
            class_id: 0,
            center: center.clone(),
            var: var.clone(),
            provenance: Provenance::Trained,
            support: 2,
        };
        let closed = tsp_core::skb::likelihood(&z, &entry).unwrap();
        // product over dimensions of the Gaussian mass within |t - k| < |z - k|
        let mut prod = 1.0;
        for i in 0..d {
            let s = var[i].sqrt();
            let r = (z[i] - center[i]).abs();
            let pdf = move |t: f64| (-(t * t) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
            prod *= 2.0 * simpson(&pdf, 0.0, r, 1e-14);
        }
        worst = worst.max((closed - (1.0 - prod)).abs());
    }
    verdict(worst < 1e-8, format!("max abs difference {worst:.3e} over 100 pairs"))
}

// ---------------------------------------------------------------- 3

fn forward_model_statistics() -> Verdict {
    let cfg = desk_dataset_config(3);
    let map = record_scene(&cfg, 2, 0, 0).unwrap();
    let s = ideal_intensity(&map, &cfg.pulse, &cfg.axis).unwrap();
    let (snr, budget) = (0.0, cfg.photon_budget);
    let lambda = expected_counts(&s, snr, budget);
    let total: f64 = lambda.iter().sum();
    let mass_ok = (total - budget).abs() <= 1e-9 * budget;

    let draws = 10_000u64;
    let b = lambda.len();
    let mut sum = vec![0f64; b];
    let mut sq = vec![0f64; b];
    for k in 0..draws {
        let h = sample_histogram(&s, snr, budget, 2, derive(303, k)).unwrap();
        for i in 0..b {
            let c = h.counts[i] as f64;
            sum[i] += c;
            sq[i] += c * c;
        }
    }
    let n = draws as f64;
    let mut worst_z = 0.0f64;
    let mut beyond = 0;
    let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..b {
        let mean = sum[i] / n;
        let var = (sq[i] - n * mean * mean) / (n - 1.0);
        let z = (mean - lambda[i]).abs() / (lambda[i] / n).sqrt();
        beyond += usize::from(z >= 3.0);
        worst_z = worst_z.max(z);
        let dispersion = var / mean;
        dmin = dmin.min(dispersion);
        dmax = dmax.max(dispersion);
    }
    verdict(
        mass_ok && worst_z < 3.0 && dmin >= 0.9 && dmax <= 1.1,
        format!(
            "sum lambda - budget = {:.2e}; worst mean deviation {worst_z:.2} SE, {beyond} of {b} bins beyond 3 SE ({:.2} expected by chance); dispersion in [{dmin:.4}, {dmax:.4}]",
            total - budget,
            b as f64 * 0.0026998
        ),
    )
}

// ---------------------------------------------------------------- 4

/// Every artifact of a small end-to-end run, with the pool size fixed.
fn small_run(workers: usize) -> Vec<(&'static str, Vec<u8>)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
    pool.install(|| {
        let cfg = DatasetConfig {
            classes: desk_classes()[..4].to_vec(),
            samples_per_cell: 20,
            snr_db: vec![0.0, 13.0],
            scene_width: 16,
            scene_height: 16,
            ..desk_dataset_config(4)
        };
        let (ds, _) = simulate_dataset(&cfg, workers).unwrap();
        let split = split_dataset(&ds, &SplitSpec { seed: 9, ..Default::default() }).unwrap();
        let known: Vec<usize> = split.train.iter().copied().filter(|&i| ds.records[i].label < 3).collect();
        let ex = examples(&ds, &known).unwrap();
        let tc = TrainConfig {
            latent_dim: 3,
            encoder_hidden: vec![16],
            decoder_hidden: vec![16],
            epochs: 4,
            batch_size: 16,
            seed: 11,
            ..desk_model(11)
        };
        let model = train(&ex, &tc).unwrap().params;
        let base = train_baseline(
            &ex,
            &BaselineConfig {
                hidden: vec![16],
                epochs: 4,
                seed: 12,
                ..Default::default()
            },
        )
        .unwrap();
        let val: Vec<usize> = split.val.iter().copied().filter(|&i| ds.records[i].label < 3).collect();
        let skb = build_skb_from(&ds, &val, &model).unwrap();
        let closed = eval_closed(&ds, &split.test, &model, &skb, Some(&base), "h").unwrap();
        let proto = OpenSetProtocol {
            known: vec![0, 1, 2],
            unknown: vec![3],
            update: false,
            target_acceptance: 0.95,
            order_seed: 1,
            maturity: 3,
            radius: 0.15,
        };
        let (open, _) = open_sweep_unknown_count(&ds, &split, &model, &proto, "h").unwrap();
        vec![
            ("dataset", encode_dataset(&ds)),
            ("checkpoint", encode_params(&model)),
            ("skb", encode_skb(&skb)),
            ("closed table", write_csv(&closed).unwrap()),
            ("open table", write_csv(&open).unwrap()),
        ]
    })
}

fn determinism() -> Verdict {
    let a = small_run(1);
    let b = small_run(1);
    let c = small_run(4);
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .zip(&c)
        .filter(|((x, y), z)| x.1 != y.1 || x.1 != z.1)
        .map(|((x, _), _)| x.0)
        .collect();
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            "dataset, checkpoint, SKB and tables identical across reruns and 1 vs 4 workers".to_string()
        } else {
            format!("differing artifacts: {differing:?}")
        },
    )
}

// ---------------------------------------------------------------- 5

fn closed_set_trend() -> Verdict {
    let start = Instant::now();
    let cfg = desk_dataset_config(10);
    let (ds, _) = simulate_dataset(&cfg, rayon::current_num_threads()).unwrap();
    let split = split_dataset(&ds, &SplitSpec { seed: derive(DESK_SEED, 1), ..Default::default() }).unwrap();
    let ex = examples(&ds, &split.train).unwrap();
    let model = train(&ex, &desk_model(derive(DESK_SEED, 2))).unwrap().params;
    let base = train_baseline(
        &ex,
        &BaselineConfig {
            seed: derive(DESK_SEED, 3),
            ..Default::default()
        },
    )
    .unwrap();
    let skb = build_skb_from(&ds, &split.val, &model).unwrap();
    let table = eval_closed(&ds, &split.test, &model, &skb, Some(&base), &config_hash(&cfg)).unwrap();
    let elapsed = start.elapsed();

    let sem = table.series(SEMANTIC_METHOD);
    let bas = table.series(BASELINE_METHOD);
    let top = sem.last().unwrap().1;
    let a = top >= 0.90;
    let b = sem.windows(2).all(|w| w[1].1 >= w[0].1 - 0.05);
    let low: Vec<(f64, f64, f64)> = sem
        .iter()
        .zip(&bas)
        .filter(|(s, _)| s.0 <= -10.0)
        .map(|(s, b)| (s.0, s.1, b.1))
        .collect();
    let c = low.iter().all(|(_, s, b)| s - b >= 0.05);
    let fast = elapsed <= Duration::from_secs(30 * 60);
    let fmt = |v: &[(f64, f64)]| v.iter().map(|(x, y)| format!("{x:.1}:{y:.3}")).collect::<Vec<_>>().join(" ");
    verdict(
        a && b && c && fast,
        format!(
            "(a) top-SNR accuracy {top:.3} [{}]; (b) monotone within 5 points [{}]; (c) margin at SNR <= -10 dB {} [{}]; runtime {elapsed:.0?} [{}]\n      semantic: {}\n      baseline: {}",
            ok(a),
            ok(b),
            low.iter().map(|(x, s, b)| format!("{x:.1}:{:+.3}", s - b)).collect::<Vec<_>>().join(" "),
            ok(c),
            ok(fast),
            fmt(&sem),
            fmt(&bas)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

// ---------------------------------------------------------------- 6, 7

struct OpenFixture {
    ds: Dataset,
    split: tsp_core::harness::Split,
    model: ModelParams,
    proto: OpenSetProtocol,
}

fn open_fixture() -> OpenFixture {
    let cfg = desk_dataset_config(12);
    let (ds, _) = simulate_dataset(&cfg, rayon::current_num_threads()).unwrap();
    let split = split_dataset(&ds, &SplitSpec { seed: derive(DESK_SEED, 1), ..Default::default() }).unwrap();
    let known: Vec<u32> = (0..8).collect();
    let idx: Vec<usize> = split
        .train
        .iter()
        .copied()
        .filter(|&i| known.contains(&ds.records[i].label))
        .collect();
    let model = train(&examples(&ds, &idx).unwrap(), &desk_model(derive(DESK_SEED, 2))).unwrap().params;
    let proto = OpenSetProtocol {
        known,
        unknown: vec![8, 9, 10, 11],
        update: false,
        target_acceptance: 0.95,
        order_seed: ORDER_SEED,
        maturity: 20,
        radius: 0.15,
    };
    OpenFixture { ds, split, model, proto }
}

fn open_set_trend(fx: &OpenFixture) -> Verdict {
    let (_, settings) = open_sweep_unknown_count(&fx.ds, &fx.split, &fx.model, &fx.proto, "acceptance").unwrap();
    let wins = settings.iter().filter(|s| s.on.accuracy > s.off.accuracy).count();
    let floor = settings.iter().all(|s| s.on.accuracy >= 0.85);
    let rows = settings
        .iter()
        .map(|s| format!("k={}: {UPDATE_ON} {:.3} / {UPDATE_OFF} {:.3}", s.x, s.on.accuracy, s.off.accuracy))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        wins >= 3 && floor,
        format!("on > off in {wins}/4 [{}]; on >= 0.85 everywhere [{}]\n      {rows}", ok(wins >= 3), ok(floor)),
    )
}

fn soundness(fx: &OpenFixture) -> Verdict {
    let (ds, split, model) = (&fx.ds, &fx.split, &fx.model);
    let mut proto = fx.proto.clone();
    proto.unknown = vec![8, 9];
    let top = *ds.snr_levels().last().unwrap();
    let (skb, tau, stream) = proto.prepare(ds, split, model, Some(top)).unwrap();

    // update off leaves the knowledge base untouched
    let before = encode_skb(&skb);
    let off = eval_open(ds, model, &skb, tau.tau, &stream, &proto).unwrap();
    let untouched = encode_skb(&skb) == before && encode_skb(&off.skb_after) == before;

    // centers come from validation records only
    let val: Vec<usize> = split
        .val
        .iter()
        .copied()
        .filter(|&i| ds.records[i].snr_db == top && proto.known.contains(&ds.records[i].label))
        .collect();
    let in_val = |i: &usize| split.val.binary_search(i).is_ok();
    let disjoint = !split.train.iter().any(in_val) && !split.test.iter().any(in_val);
    let labeled: Vec<(u32, SemanticFeature)> = val
        .iter()
        .map(|&i| (ds.records[i].label, extract_feature(&ds.records[i], model).unwrap()))
        .collect();
    let from_val = disjoint && encode_skb(&build_skb(&labeled).unwrap()) == before;

    // absorbed-cluster means against offline averages of the logged members
    proto.update = true;
    let on = eval_open(ds, model, &skb, tau.tau, &stream, &proto).unwrap();
    let mut mirror = skb.clone();
    let mut buffer = UnknownBuffer::new(proto.maturity, proto.radius).unwrap();
    let mut pending: Vec<Vec<usize>> = Vec::new();
    let mut promoted: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for r in on.log.iter().filter(|r| r.decision == Decision::Unknown) {
        let z = extract_feature(&ds.records[r.sample_id], model).unwrap();
        let out = absorb_unknown(z.as_slice(), &mut buffer, &mut mirror).unwrap();
        if out.cluster == pending.len() {
            pending.push(Vec::new());
        }
        pending[out.cluster].push(r.sample_id);
        if let Some(id) = out.promoted {
            promoted.insert(id, pending.remove(out.cluster));
        }
    }
    let mut worst = 0.0f64;
    for (id, members) in &promoted {
        let entry = on.skb_after.entry(*id).unwrap();
        let mut mean = vec![0.0; skb.dim];
        for &i in members.iter().rev() {
            let z = extract_feature(&ds.records[i], model).unwrap();
            mean.iter_mut().zip(z.as_slice()).for_each(|(m, v)| *m += v);
        }
        for (m, c) in mean.iter().zip(&entry.center) {
            worst = worst.max((m / members.len() as f64 - c).abs());
        }
    }
    let replay_matches = encode_skb(&mirror) == encode_skb(&on.skb_after);
    let means_ok = worst <= 1e-12 && replay_matches;
    verdict(
        untouched && from_val && means_ok,
        format!(
            "update-off SKB byte-identical [{}]; centers from validation only [{}]; {} promoted clusters, max mean error {worst:.1e} [{}]",
            ok(untouched),
            ok(from_val),
            promoted.len(),
            ok(means_ok)
        ),
    )
}

// ---------------------------------------------------------------- 8

fn synthetic_closure() -> Verdict {
    let d = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let centers: Vec<Vec<f64>> = vec![
        vec![2.0, 0.0, 0.0, 0.0],
        vec![0.0, 2.0, 0.0, 0.0],
        vec![0.0, 0.0, 2.0, 0.0],
    ];
    let far = vec![-1.5, -1.5, -1.5, 2.0];
    let mut draw = |c: &[f64]| -> Vec<f64> { c.iter().map(|v| v + noise.sample(&mut rng)).collect() };

    let val: Vec<(u32, SemanticFeature)> = (0..60)
        .map(|i| (i % 3, SemanticFeature(draw(&centers[i as usize % 3]))))
        .collect();
    let mut skb: Skb = build_skb(&val).unwrap();
    let calib: Vec<SemanticFeature> = (0..300).map(|i| SemanticFeature(draw(&centers[i % 3]))).collect();
    let tau = calibrate_tau(&calib, &skb, 0.95).unwrap().tau;

    let mut buffer = UnknownBuffer::new(20, 0.15).unwrap();
    let mut absorbed = Vec::new();
    let mut new_id = None;
    for _ in 0..1000 {
        if new_id.is_some() {
            break;
        }
        let z = draw(&far);
        if detect(&z, &skb, tau).unwrap() == Detection::Unknown {
            new_id = absorb_unknown(&z, &mut buffer, &mut skb).unwrap().promoted;
            absorbed.push(z);
        }
        if absorbed.len() > 20 {
            break;
        }
    }
    let Some(id) = new_id else {
        return verdict(false, format!("no entry after {} absorptions", absorbed.len()));
    };
    let entry = skb.entry(id).unwrap();
    let mut worst = 0.0f64;
    for j in 0..d {
        let m = absorbed.iter().map(|z| z[j]).sum::<f64>() / absorbed.len() as f64;
        worst = worst.max((m - entry.center[j]).abs());
    }
    let n_after = 200;
    let hits = (0..n_after)
        .filter(|_| detect(&draw(&far), &skb, tau).unwrap() == Detection::Known(id))
        .count();
    let frac = hits as f64 / n_after as f64;
    verdict(
        absorbed.len() == 20 && worst <= 1e-12 && frac >= 0.9,
        format!(
            "entry {id} after {} absorptions; center error {worst:.1e}; {hits}/{n_after} later samples matched to it ({frac:.3}) at tau {tau:.4}",
            absorbed.len()
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let only: Option<Vec<u32>> = std::env::var("TSP_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let strict = std::env::var("TSP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {n} [{}] {name} ({:.1?}): {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed(),
            v.detail
        );
        results.push((n, name, v));
    };

    run(1, "gradient correctness", &mut gradient_check);
    run(2, "likelihood vs quadrature", &mut likelihood_quadrature);
    run(3, "forward-model statistics", &mut forward_model_statistics);
    run(4, "determinism", &mut determinism);
    run(5, "closed-set trend", &mut closed_set_trend);
    let fixture = if wanted(6) || wanted(7) {
        let start = Instant::now();
        let fx = open_fixture();
        println!("open-set fixture (dataset + 8-class model) built in {:.1?}", start.elapsed());
        Some(fx)
    } else {
        None
    };
    if let Some(fx) = &fixture {
        run(6, "open-set update trend", &mut || open_set_trend(fx));
        run(7, "open-set soundness", &mut || soundness(fx));
    }
    run(8, "absorption exactness and closure", &mut synthetic_closure);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
