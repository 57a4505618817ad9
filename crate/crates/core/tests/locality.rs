//! Temporal-overlap knob versus cache hit rate along random walks.

use adaptnav_core::lsh::{CacheConfig, CacheTable, HashFamily};
use adaptnav_core::simenv::{generate_env, EnvParams, Renderer};
use adaptnav_core::spatial::build_plan;
use adaptnav_core::{Embedding, Seed, Stream};

/// Hit rate of a k = 4 cache driven along a seeded random walk. Hits and
/// misses depend only on the views, so no encoder is needed.
fn walk_hit_rate(rho: f64, seed: u64) -> f64 {
    let env = generate_env(&EnvParams {
        temporal_overlap: rho,
        seed: Seed(seed),
        ..EnvParams::default()
    })
    .unwrap();
    let renderer = Renderer::new(32, 32).unwrap();
    let mut stream = Stream::new(Seed(seed)).fork("walk");
    let family = HashFamily::new(10, 3 * 32 * 32, &mut stream.fork("hash")).unwrap();
    let mut cache = CacheTable::new(family, &CacheConfig::standard()).unwrap();
    let mut node = stream.below(env.node_count());
    for _ in 0..15 {
        let navigable = env.navigable_views(node);
        let plan = build_plan(navigable, 4).unwrap();
        for (j, _) in plan.extended() {
            let img = renderer.render(&env.node(node).views[j - 1]).unwrap();
            if cache.find_similar(&img).unwrap().is_none() {
                cache.insert(img, Embedding::masked(1)).unwrap();
            }
        }
        let links = &env.node(node).links;
        node = links[stream.below(links.len())].neighbor;
    }
    cache.stats().hit_rate()
}

/// Average ranks, ties sharing the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn spearman_helper_on_known_data() {
    assert_eq!(ranks(&[3.0, 1.0, 2.0, 2.0]), vec![4.0, 1.0, 2.5, 2.5]);
    let rho = pearson(&ranks(&[1.0, 2.0, 3.0]), &ranks(&[10.0, 30.0, 20.0]));
    assert!((rho - 0.5).abs() < 1e-12);
}

#[test]
fn hit_rate_rises_with_temporal_overlap() {
    let levels = [0.0, 0.4, 0.8];
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut means = [0.0; 3];
    for (li, &rho) in levels.iter().enumerate() {
        for seed in 0..20 {
            let h = walk_hit_rate(rho, seed);
            x.push(rho);
            y.push(h);
            means[li] += h / 20.0;
        }
    }
    let spearman = pearson(&ranks(&x), &ranks(&y));
    println!("mean hit rate by overlap {levels:?}: {means:?}, spearman {spearman:.3}");
    assert!(spearman > 0.0);
    assert!(means[0] <= means[1] && means[1] <= means[2]);
}
