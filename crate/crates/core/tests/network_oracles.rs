mod common;

use iohunter::simnet::{fuse, project_similarity, tfidf, TfidfVariant, TraceKind};
use iohunter::train::eigenvector_centrality;
use proptest::prelude::*;

use common::*;

#[test]
fn sparse_projection_matches_dense_oracle() {
    let mut r = rng(2024);
    for case in 0..200 {
        let bg = random_bipartite(&mut r, 20, 15);
        let variant = if case % 2 == 0 { TfidfVariant::Standard } else { TfidfVariant::Sublinear };
        let vectors = tfidf(&bg, variant);
        for tau in [0.0, 0.1, 0.5] {
            let got = project_similarity(&vectors, tau);
            let want = dense_projection(&bg, variant, tau);
            let got_keys: Vec<(u32, u32)> = got.edges.iter().map(|&(i, j, _)| (i, j)).collect();
            let want_keys: Vec<(u32, u32)> = want.keys().copied().collect();
            // a dense weight within rounding of tau may fall on either side
            let borderline = |k: &(u32, u32)| {
                let w = dense_projection(&bg, variant, f64::NEG_INFINITY).get(k).copied().unwrap_or(0.0);
                (w - tau).abs() < 1e-12
            };
            for k in got_keys.iter().filter(|k| !want.contains_key(k)) {
                assert!(borderline(k), "case {case} tau {tau}: extra edge {k:?}");
            }
            for k in want_keys.iter().filter(|k| !got_keys.contains(k)) {
                assert!(borderline(k), "case {case} tau {tau}: missing edge {k:?}");
            }
            for &(i, j, w) in &got.edges {
                if let Some(d) = want.get(&(i, j)) {
                    assert!((w - d).abs() < 1e-9, "case {case}: ({i},{j}) {w} vs {d}");
                }
            }
        }
    }
}

#[test]
fn users_sharing_only_universal_entities_get_no_edge() {
    // every user holds entity 0, so its idf is zero
    let mut r = rng(5);
    let mut bg = random_bipartite(&mut r, 6, 4);
    for row in &mut bg.counts {
        row.retain(|&(e, _)| e != 0);
        row.insert(0, (0, 1));
    }
    let v = tfidf(&bg, TfidfVariant::Standard);
    assert!(v.rows.iter().all(|row| row.iter().all(|&(e, _)| e != 0)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fused_edges_are_the_union_in_any_layer_order(seed in any::<u64>(), n in 2usize..25, k in 1usize..5) {
        let mut r = rng(seed);
        let layers: Vec<_> = TraceKind::ALL[..k]
            .iter()
            .map(|&kind| random_layer(&mut r, kind, n, 0.2))
            .collect();
        let fused = fuse(n, &layers).unwrap();
        prop_assert_eq!(edge_set(&fused), union_oracle(&layers));
        for e in &fused.edges {
            let contributing: Vec<f64> = layers
                .iter()
                .filter_map(|l| l.edges.iter().find(|&&(i, j, _)| (i, j) == (e.src, e.dst)).map(|&(_, _, w)| w))
                .collect();
            prop_assert_eq!(e.weight, contributing.iter().copied().fold(f64::MIN, f64::max));
            prop_assert_eq!(e.provenance_mask.count_ones() as usize, contributing.len());
        }
        let mut reversed = layers.clone();
        reversed.reverse();
        prop_assert_eq!(fuse(n, &reversed).unwrap(), fused.clone());
        reversed.rotate_left(k / 2);
        prop_assert_eq!(fuse(n, &reversed).unwrap(), fused);
    }

    #[test]
    fn projection_is_symmetric_in_user_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bg = random_bipartite(&mut r, 12, 10);
        let n = bg.user_count;
        let mut flipped = bg.clone();
        flipped.counts.reverse();
        let a = project_similarity(&tfidf(&bg, TfidfVariant::Standard), 0.0);
        let b = project_similarity(&tfidf(&flipped, TfidfVariant::Standard), 0.0);
        let map = |i: u32| (n - 1) as u32 - i;
        let mut moved: Vec<(u32, u32)> = b.edges.iter().map(|&(i, j, _)| (map(i).min(map(j)), map(i).max(map(j)))).collect();
        moved.sort_unstable();
        let orig: Vec<(u32, u32)> = a.edges.iter().map(|&(i, j, _)| (i, j)).collect();
        prop_assert_eq!(orig, moved);
    }
}

#[test]
fn centrality_matches_dense_power_iteration() {
    let mut r = rng(77);
    for case in 0..60 {
        let n = 2 + case % 49;
        let p = [0.05, 0.1, 0.3][case % 3];
        let net = random_graph(&mut r, n, p);
        let got = eigenvector_centrality(&net);
        assert!(got.converged);
        let want = dense_centrality(&net);
        for (a, b) in got.values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6, "case {case}: {a} vs {b}");
        }
    }
}

fn net(n: usize, edges: &[(u32, u32)]) -> iohunter::simnet::FusedNetwork {
    let layer = iohunter::simnet::SimilarityNetwork {
        kind: TraceKind::CoUrl,
        n,
        edges: edges.iter().map(|&(i, j)| (i, j, 1.0)).collect(),
    };
    fuse(n, &[layer]).unwrap()
}

#[test]
fn star_and_cycle_centrality_are_analytic() {
    // star with k leaves: hub/leaf ratio sqrt(k), unit norm
    let k = 6usize;
    let star = net(k + 1, &(1..=k as u32).map(|j| (0, j)).collect::<Vec<_>>());
    let c = eigenvector_centrality(&star).values;
    let leaf = 1.0 / (2.0 * k as f64).sqrt();
    let hub = (k as f64).sqrt() * leaf;
    assert!((c[0] - hub).abs() < 1e-8);
    assert!(c[1..].iter().all(|&v| (v - leaf).abs() < 1e-8));

    let n = 9usize;
    let cycle = net(n, &(0..n as u32).map(|i| (i.min((i + 1) % n as u32), i.max((i + 1) % n as u32))).collect::<Vec<_>>());
    let c = eigenvector_centrality(&cycle).values;
    assert!(c.iter().all(|&v| (v - 1.0 / (n as f64).sqrt()).abs() < 1e-8));
}
