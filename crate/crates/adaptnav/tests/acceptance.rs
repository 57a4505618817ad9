//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use adaptnav::report::Summary;
use adaptnav::runner::{episode_specs, episode_stream, PreparedEnv, Workbench};
use adaptnav::RunConfig;
use adaptnav_core::flops::cost_full_view;
use adaptnav_core::lsh::{CacheConfig, CacheTable, HashFamily};
use adaptnav_core::pipeline::{observe, run_episode, EpisodeContext};
use adaptnav_core::simenv::Corruption;
use adaptnav_core::spatial::{build_plan, k_extension};
use adaptnav_core::subgoal::{sinkhorn_divergence, view_point, DiscreteDistribution, SinkhornConfig};
use adaptnav_core::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cos64(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let na: f64 = a.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Test-side threshold: round(T0 exp(-A R), 3), with >= 0.998 lifted to 1.
fn oracle_threshold(a: f64, rank: usize) -> f64 {
    let t = (1000.0 * (-a * rank as f64).exp()).round() / 1000.0;
    if t >= 0.998 {
        1.0
    } else {
        t
    }
}

fn threshold_table() -> Outcome {
    // Published threshold rows; the printed row label is 10x the applied A.
    let printed: [(f64, [f64; 4]); 5] = [
        (0.0, [1.0, 1.0, 1.0, 1.0]),
        (7e-4, [1.0, 1.0, 1.0, 0.997]),
        (9e-4, [1.0, 1.0, 0.997, 0.996]),
        (1.5e-3, [1.0, 0.997, 0.996, 0.993]),
        (2.2e-3, [0.997, 0.996, 0.993, 0.990]),
    ];
    // Cells the formula cannot reproduce under any cutoff reading.
    let excluded = [(1.5e-3, 4), (2.2e-3, 1), (2.2e-3, 4)];
    let mut checked = 0;
    for (a, row) in printed {
        let policy = ThresholdPolicy::with_aggressiveness(a);
        for (r, &cell) in (1..=4).zip(&row) {
            let got = policy.threshold_for_rank(r).map_err(|e| e.to_string())?;
            if got != oracle_threshold(a, r) {
                return Err(format!("A={a} R={r}: {got} differs from the oracle"));
            }
            if excluded.contains(&(a, r)) {
                if got == cell {
                    return Err(format!("A={a} R={r} was expected to differ from the table"));
                }
                continue;
            }
            if got != cell {
                return Err(format!("A={a} R={r}: {got} vs printed {cell}"));
            }
            checked += 1;
        }
    }
    let p = ThresholdPolicy::default();
    let row: Vec<f64> = (1..=4).map(|r| p.threshold_for_rank(r).unwrap()).collect();
    check(
        row == [1.0, 1.0, 0.997, 0.996] && checked == 17,
        format!("A=9e-4 -> {row:?}; {checked} printed cells match, 3 excluded"),
    )
}

fn cost_calibration() -> Outcome {
    let per_step = 36.0 * cost_full_view(&EncoderConfig::vit_b16());
    check(
        (546.0..=668.0).contains(&per_step),
        format!("36 full views = {per_step:.2} GFLOPs"),
    )
}

fn small_suite(cfg: &mut RunConfig, seeds: Vec<u64>, episodes: usize) {
    cfg.suite.seeds = seeds;
    cfg.suite.episodes = episodes;
}

fn component_share() -> Outcome {
    let mut base = RunConfig::baseline();
    small_suite(&mut base, vec![0], 1);
    let mut adaptive = RunConfig::adaptive();
    small_suite(&mut adaptive, vec![0], 1);
    let bench = Workbench::new(&base).map_err(|e| e.to_string())?;
    let envs = bench.generate(&base).map_err(|e| e.to_string())?;
    let share = |c: &RunConfig| -> Result<f64, String> {
        let r = bench
            .run(&envs, &c.agent(), &c.suite.suite_params())
            .map_err(|e| e.to_string())?;
        Ok(Summary::of(&r).encoder_share)
    };
    let b = share(&base)?;
    let a = share(&adaptive)?;
    check(
        b >= 0.99,
        format!(
            "encoder share {:.2}% (adaptive agent, for reference: {:.2}%)",
            100.0 * b,
            100.0 * a
        ),
    )
}

fn batch_equivalence() -> Outcome {
    let encoder = Encoder::new(EncoderConfig::desk(Seed(7))).unwrap();
    let renderer = adaptnav_core::simenv::Renderer::new(32, 32).unwrap();
    let mut s = Stream::new(Seed(2024)).fork("batches");
    let mut samples = 0;
    for b in 0..100 {
        let size = 1 + s.below(36);
        let images: Vec<ViewImage> = (0..size)
            .map(|_| {
                let z: Vec<f64> = (0..32).map(|_| s.normal()).collect();
                renderer.render(&z).unwrap()
            })
            .collect();
        let thresholds: Vec<f64> = (0..size)
            .map(|_| match s.below(4) {
                0 => 1.0,
                1 => ThresholdPolicy::with_aggressiveness(2.2e-3)
                    .threshold_for_rank(1 + s.below(6))
                    .unwrap(),
                2 => s.uniform_in(0.9, 1.0),
                _ => s.uniform_in(0.99, 0.9999),
            })
            .collect();
        let batch = encoder.encode_batch_budgeted(&images, &thresholds).unwrap();
        for (i, (img, &t)) in images.iter().zip(&thresholds).enumerate() {
            let solo = encoder.encode_mue(img, t).unwrap();
            let rec = &batch.records[i];
            if rec.exit_layer != solo.exit_layer || rec.embedding != solo.embedding {
                return Err(format!("batch {b} sample {i} diverges from the per-sample encoder"));
            }
            samples += 1;
        }
    }
    Ok(format!("100 batches, {samples} samples bit-identical"))
}

fn k_extension_cases() -> Outcome {
    let mut s = Stream::new(Seed(5)).fork("kext");
    for case in 0..10_000 {
        let nav_count = 1 + s.below(8);
        let mut v = ViewSet::default();
        for _ in 0..nav_count {
            v.insert(1 + s.below(36)).unwrap();
        }
        let k = s.below(12);
        let got = k_extension(v, k).unwrap();
        let brute: Vec<usize> = (1..=36)
            .filter(|&j| {
                v.iter()
                    .any(|i| i.saturating_sub(k).max(1) <= j && j <= (i + k).min(36))
            })
            .collect();
        if got.iter().collect::<Vec<_>>() != brute {
            return Err(format!("case {case}: V={v:?} k={k}"));
        }
        if got.len() > (v.len() * (2 * k + 1)).min(36) {
            return Err(format!("case {case}: bound violated"));
        }
        if !got.is_subset(&k_extension(v, k + 1).unwrap()) {
            return Err(format!("case {case}: not monotone in k"));
        }
        let mut wider = v;
        wider.insert(1 + s.below(36)).unwrap();
        if !got.is_subset(&k_extension(wider, k).unwrap()) {
            return Err(format!("case {case}: not monotone in V"));
        }
        let plan = build_plan(v, k).unwrap();
        for (j, rank) in plan.extended() {
            let true_rank = v.iter().map(|i| i.abs_diff(j)).min().unwrap();
            if rank != true_rank {
                return Err(format!("case {case}: view {j} rank {rank} vs {true_rank}"));
            }
        }
    }
    Ok("10000 cases match brute force; bound and monotonicity hold".into())
}

fn simhash_angle_law() -> Outcome {
    let dim = 64;
    let mut s = Stream::new(Seed(6)).fork("angles");
    let mut details = Vec::new();
    let mut ok = true;
    for theta in [
        std::f64::consts::PI / 8.0,
        std::f64::consts::PI / 4.0,
        std::f64::consts::PI / 2.0,
    ] {
        let mut differing = 0u64;
        let pairs = 10_000;
        for _ in 0..pairs {
            // u; w orthogonal to u; v = cos(theta) u + sin(theta) w.
            let u: Vec<f64> = (0..dim).map(|_| s.normal()).collect();
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
            let r: Vec<f64> = (0..dim).map(|_| s.normal()).collect();
            let proj: f64 = r.iter().zip(&u).map(|(a, b)| a * b).sum();
            let w: Vec<f64> = r.iter().zip(&u).map(|(a, b)| a - proj * b).collect();
            let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let v: Vec<f32> = u
                .iter()
                .zip(&w)
                .map(|(a, b)| (theta.cos() * a + theta.sin() * b / nw) as f32)
                .collect();
            let u: Vec<f32> = u.iter().map(|&x| x as f32).collect();
            let family = HashFamily::new(10, dim, &mut s).unwrap();
            let ku = family.hash_slice(&u).unwrap();
            let kv = family.hash_slice(&v).unwrap();
            differing += u64::from(ku.hamming(&kv));
        }
        let frac = differing as f64 / (pairs * 10) as f64;
        let expected = theta / std::f64::consts::PI;
        ok &= (frac - expected).abs() <= 0.05;
        details.push(format!("{expected:.3}->{frac:.3}"));
    }
    check(
        ok,
        format!("theta/pi -> differing-bit fraction: {}", details.join(", ")),
    )
}

fn cache_soundness() -> Outcome {
    let mut cfg = RunConfig::adaptive();
    small_suite(&mut cfg, vec![0], 50);
    let bench = Workbench::new(&cfg).map_err(|e| e.to_string())?;
    let prepared = bench.generate(&cfg).map_err(|e| e.to_string())?.remove(0);
    let env = prepared.env();
    let agent = cfg.agent();
    let cache_cfg = agent.cache.expect("adaptive agent has a cache");
    let traces = prepared.shared.traces_for(&bench, &agent).map_err(|e| e.to_string())?;
    let side = bench.renderer.resolution();
    let ctx = EpisodeContext {
        env,
        encoder: &bench.encoder,
        renderer: &bench.renderer,
        cost: &bench.cost,
        traces: traces.as_deref(),
    };
    let (mut hits, mut min_margin) = (0usize, f64::INFINITY);
    for (i, spec) in episode_specs(env, &cfg.suite.suite_params(), 0)
        .map_err(|e| e.to_string())?
        .iter()
        .enumerate()
    {
        let stream = episode_stream(0, i);
        let ep = run_episode(&ctx, spec, &agent, &stream).map_err(|e| e.to_string())?;
        // Replay the cache sequentially and check every reuse independently.
        let family = HashFamily::new(
            cache_cfg.hyperplanes,
            ViewImage::CHANNELS * side * side,
            &mut stream.fork("hash"),
        )
        .unwrap();
        let mut table = CacheTable::new(family, &cache_cfg).unwrap();
        for (t, step) in ep.steps.iter().enumerate() {
            let views = observe(
                &ctx,
                step.node,
                &agent,
                &stream.fork("corrupt").fork_indexed("step", t as u64),
            )
            .map_err(|e| e.to_string())?;
            let plan = build_plan(step.navigable, agent.adaptive.k).unwrap();
            for (j, _) in plan.extended() {
                let view = &views[j - 1];
                let key = table.hash(view).unwrap();
                let best = table.best_in_bucket(key, view).unwrap();
                let hit = best.filter(|b| b.similarity > cache_cfg.similarity_threshold);
                let cached = step.dispositions[j - 1] == Disposition::Cached;
                match hit {
                    Some(b) => {
                        let stored = &table.bucket(key)[b.position].view;
                        let c = cos64(view.data(), stored.data());
                        if !cached || c <= cache_cfg.similarity_threshold {
                            return Err(format!("episode {i} step {t} view {j}: reuse at cosine {c}"));
                        }
                        hits += 1;
                        min_margin = min_margin.min(c - cache_cfg.similarity_threshold);
                    }
                    None => {
                        if cached {
                            return Err(format!("episode {i} step {t} view {j}: cached without a match"));
                        }
                        table.insert_keyed(key, view.clone(), Embedding::masked(1));
                    }
                }
            }
        }
    }
    // One 3x224x224 view plus a 197x768 embedding, 4 bytes per value.
    let expected_bytes = (3 * 224 * 224 + 197 * 768) * 4;
    let mut big = CacheTable::new(
        HashFamily::new(10, 3 * 224 * 224, &mut Stream::new(Seed(1))).unwrap(),
        &CacheConfig::standard(),
    )
    .unwrap();
    big.insert(
        ViewImage::filled(224, 224, 0.5).unwrap(),
        Embedding::new(vec![0.1; 197 * 768]),
    )
    .unwrap();
    let bytes = big.stats().bytes;
    check(
        hits > 0 && bytes == expected_bytes as u64 && bytes == 1_207_296,
        format!("{hits} reuses all above threshold (min margin {min_margin:.4}); one pair = {bytes} bytes"),
    )
}

fn run_summary(bench: &Workbench, envs: &[PreparedEnv], cfg: &RunConfig) -> Result<Summary, String> {
    let r = bench
        .run(envs, &cfg.agent(), &cfg.suite.suite_params())
        .map_err(|e| e.to_string())?;
    Ok(Summary::of(&r))
}

fn compute_savings() -> Outcome {
    let mut base = RunConfig::baseline();
    small_suite(&mut base, vec![0], 50);
    let mut adaptive = RunConfig::adaptive();
    small_suite(&mut adaptive, vec![0], 50);
    let bench = Workbench::new(&base).map_err(|e| e.to_string())?;
    let envs = bench.generate(&base).map_err(|e| e.to_string())?;
    let env = envs[0].env();
    let mean_nav = (0..env.node_count())
        .map(|u| env.navigable_views(u).len())
        .sum::<usize>() as f64
        / env.node_count() as f64;
    let b = run_summary(&bench, &envs, &base)?;
    let a = run_summary(&bench, &envs, &adaptive)?;
    let ratio = a.total_gflops / b.total_gflops;
    let sr_gap = b.metrics.sr - a.metrics.sr;
    check(
        ratio <= 0.55 && sr_gap.abs() <= 0.15,
        format!(
            "mean |V| {mean_nav:.2}; GFLOPs {:.0} vs {:.0} (ratio {ratio:.3}); SR {:.3} vs {:.3}",
            a.total_gflops, b.total_gflops, a.metrics.sr, b.metrics.sr
        ),
    )
}

fn sinkhorn_identities() -> Outcome {
    let cfg = SinkhornConfig::default();
    let pts = |views: &[usize]| views.iter().map(|&j| view_point(j)).collect::<Vec<_>>();
    let mu = DiscreteDistribution::new(pts(&[3, 9, 20]), vec![0.5, 0.3, 0.2]).unwrap();
    let nu = DiscreteDistribution::new(pts(&[5, 27]), vec![0.6, 0.4]).unwrap();
    let self_div = sinkhorn_divergence(&mu, &mu, &cfg).map_err(|e| e.to_string())?;
    let ab = sinkhorn_divergence(&mu, &nu, &cfg).map_err(|e| e.to_string())?;
    let ba = sinkhorn_divergence(&nu, &mu, &cfg).map_err(|e| e.to_string())?;
    // Two uniform two-point measures: the exact plan is the cheaper of the
    // two matchings, under squared Euclidean cost.
    let (a, b) = (pts(&[2, 14]), pts(&[8, 30]));
    let d2 = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
    let exact = (0.5 * (d2(a[0], b[0]) + d2(a[1], b[1]))).min(0.5 * (d2(a[0], b[1]) + d2(a[1], b[0])));
    let small = SinkhornConfig {
        epsilon: 0.01 * exact,
        ..cfg
    };
    let ta = DiscreteDistribution::new(a, vec![0.5, 0.5]).unwrap();
    let tb = DiscreteDistribution::new(b, vec![0.5, 0.5]).unwrap();
    let approx = sinkhorn_divergence(&ta, &tb, &small).map_err(|e| e.to_string())?;
    let rel = (approx - exact).abs() / exact;
    check(
        self_div.abs() <= 1e-6 && (ab - ba).abs() <= 1e-8 && rel <= 0.05,
        format!(
            "S(mu,mu)={self_div:.2e}; |S(a,b)-S(b,a)|={:.2e}; two-point {approx:.5} vs exact {exact:.5} ({:.2}%)",
            (ab - ba).abs(),
            100.0 * rel
        ),
    )
}

fn degradation_and_corruption() -> Outcome {
    let seeds: Vec<u64> = (0..20).collect();
    let mut full = RunConfig::baseline();
    small_suite(&mut full, seeds.clone(), 50);
    let mut k4 = RunConfig::adaptive();
    small_suite(&mut k4, seeds.clone(), 50);
    let mut k1 = k4.clone();
    k1.k = 1;
    let bench = Workbench::new(&full).map_err(|e| e.to_string())?;
    let envs = bench.generate(&full).map_err(|e| e.to_string())?;
    let (sf, s4, s1) = (
        run_summary(&bench, &envs, &full)?,
        run_summary(&bench, &envs, &k4)?,
        run_summary(&bench, &envs, &k1)?,
    );
    let ordering = sf.metrics.sr >= s4.metrics.sr && s4.metrics.sr >= s1.metrics.sr;

    let mut clean = RunConfig::adaptive();
    small_suite(&mut clean, seeds, 5);
    let mut speckle = clean.clone();
    speckle.corruption.kind = Some(Corruption::Speckle);
    speckle.corruption.severity = 3;
    let mut denoised = speckle.clone();
    denoised.corruption.denoise_kernel = Some(5);
    let (c, sp, dn) = (
        run_summary(&bench, &envs, &clean)?,
        run_summary(&bench, &envs, &speckle)?,
        run_summary(&bench, &envs, &denoised)?,
    );
    let more_compute = sp.gflops_per_episode.total_gflops > c.gflops_per_episode.total_gflops;
    let denoise_ok = dn.metrics.sr >= sp.metrics.sr;
    check(
        ordering && more_compute && denoise_ok,
        format!(
            "SR full/k4/k1 {:.3}/{:.3}/{:.3}; adaptive GFLOPs/ep clean {:.0} -> speckle {:.0} \
             ({:.1} -> {:.1} per step); SR speckle {:.3}, +median {:.3} (OSR {:.3}, {:.3})",
            sf.metrics.sr,
            s4.metrics.sr,
            s1.metrics.sr,
            c.gflops_per_episode.total_gflops,
            sp.gflops_per_episode.total_gflops,
            c.gflops_per_step,
            sp.gflops_per_step,
            sp.metrics.sr,
            dn.metrics.sr,
            sp.metrics.osr,
            dn.metrics.osr,
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<String, String> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_adaptnav"))
            .args(["--jobs", "2", "run", "--seeds", "0,1", "--episodes", "10", "-o"])
            .arg(&out)
            .env_remove("SOURCE_DATE_EPOCH")
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
        Ok(text
            .lines()
            .filter(|l| !l.trim_start().starts_with("\"generated_at\""))
            .collect::<Vec<_>>()
            .join("\n"))
    };
    let a = run("a.json")?;
    let b = run("b.json")?;
    check(
        a == b && a.len() > 1000,
        format!("two runs, {} bytes identical outside the timestamp", a.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("threshold table reproduction", threshold_table),
        ("cost-model calibration", cost_calibration),
        ("component share", component_share),
        ("budgeted-batch oracle equivalence", batch_equivalence),
        ("k-extension correctness", k_extension_cases),
        ("SimHash angle law", simhash_angle_law),
        ("cache soundness and storage", cache_soundness),
        ("compute savings at desk scale", compute_savings),
        ("Sinkhorn identities", sinkhorn_identities),
        ("degradation ordering and corruption trend", degradation_and_corruption),
        ("determinism", determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|p| !name.contains(p)) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2}. {name}: {d} [{secs:.1}s]", n + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2}. {name}: {d} [{secs:.1}s]", n + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
