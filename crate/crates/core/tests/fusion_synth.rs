mod common;

use iohunter::model::{fuse_modalities, load_checkpoint, save_checkpoint, Ablation, Architecture, Conv, ModelConfig};
use iohunter::pipeline::{prepare, PipelineConfig};
use iohunter::simnet::{build_bipartite, project_similarity, tfidf, TfidfVariant, TraceKind, FAST_RETWEET_MAX_LATENCY};
use iohunter::synth::{generate, preset, SynthConfig};
use iohunter::tensor::Tape;
use iohunter::trace::DatasetBundle;
use iohunter::train::evaluate_params;
use proptest::prelude::*;

use common::*;

#[test]
fn fusion_block_matches_scalar_oracle() {
    let mut r = rng(9);
    for draw in 0..100u64 {
        let ab = Ablation::ALL[draw as usize % 4];
        let mut cfg = ModelConfig::new(6, 5);
        cfg.hidden = 7;
        cfg.ablation = ab;
        let arch = Architecture::IoHunter(cfg);
        let p = random_params(&arch, draw);
        let (c, g) = random_features(&mut r, 4, 6, 5);
        let (c, g) = (c.mapv(f64::from), g.mapv(f64::from));
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let cv = tape.constant(c.clone());
        let gv = tape.constant(g.clone());
        let z = fuse_modalities(&mut tape, &bound, cv, gv, ab);
        let z = tape.value(z);
        for i in 0..4 {
            let want = scalar_fusion(&p, ab, c.row(i).as_slice().unwrap(), g.row(i).as_slice().unwrap());
            for (k, w) in want.iter().enumerate() {
                assert!((z[[i, k]] - w).abs() < 1e-6, "draw {draw} {ab:?} [{i},{k}]");
            }
        }
    }
}

#[test]
fn full_model_gradients_match_central_differences() {
    for conv in [Conv::Gcn, Conv::Sage] {
        let (arch, p, inputs, rows, targets) = gradient_fixture(conv);
        let err = max_gradient_error(&arch, &p, &inputs, &rows, &targets, 1e-5, 1e-6);
        assert!(err < 1e-4, "{conv:?}: {err}");
    }
}

fn layer_edges(bundle: &DatasetBundle, kind: TraceKind) -> Vec<(u32, u32)> {
    let net = project_similarity(&tfidf(&build_bipartite(bundle, kind), TfidfVariant::Standard), 0.0);
    net.edges.iter().map(|&(i, j, _)| (i, j)).collect()
}

fn tiny() -> SynthConfig {
    preset("tiny").unwrap()
}

#[test]
fn certain_fast_retweets_are_all_fast() {
    let cfg = SynthConfig { p_fast: 1.0, noise: 0.0, ..tiny() };
    let b = generate(&cfg).unwrap();
    let mut seen = 0;
    for rec in &b.records {
        if b.labels[&rec.user_id] == 1 && rec.is_retweet() {
            seen += 1;
            assert!(rec.retweet_latency.unwrap() <= FAST_RETWEET_MAX_LATENCY);
        }
    }
    assert!(seen > 0);
}

#[test]
fn separated_populations_share_no_projection_edges() {
    let cfg = SynthConfig {
        noise: 0.0,
        organic_io_retweet: 0.0,
        ..preset("bench").unwrap()
    };
    let b = generate(&cfg).unwrap();
    let labels = b.label_vec();
    for kind in TraceKind::BIPARTITE {
        let cross = layer_edges(&b, kind)
            .into_iter()
            .filter(|&(i, j)| labels[i as usize] != labels[j as usize])
            .count();
        assert_eq!(cross, 0, "{kind:?}");
    }
}

#[test]
fn smaller_io_url_pools_give_denser_io_co_url_layers() {
    let mut counts = Vec::new();
    for pool in [4, 40, 400] {
        let cfg = SynthConfig { io_url_pool: pool, ..preset("bench").unwrap() };
        let b = generate(&cfg).unwrap();
        let labels = b.label_vec();
        let io_io = layer_edges(&b, TraceKind::CoUrl)
            .into_iter()
            .filter(|&(i, j)| labels[i as usize] == Some(1) && labels[j as usize] == Some(1))
            .count();
        counts.push(io_io);
    }
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generation_is_a_function_of_the_config(seed in any::<u64>()) {
        let cfg = SynthConfig { seed, ..tiny() };
        let a = generate(&cfg).unwrap();
        prop_assert_eq!(&a, &generate(&cfg).unwrap());
        prop_assert_eq!(a.io_count(), cfg.n_io);
        prop_assert_eq!(a.num_users(), cfg.n_io + cfg.n_organic);
        let other = generate(&SynthConfig { seed: seed.wrapping_add(1), ..cfg }).unwrap();
        prop_assert_ne!(a.records, other.records);
    }
}

#[test]
fn checkpoint_scores_another_bundle_with_matching_signature() {
    let a = prepare(&generate(&tiny()).unwrap(), &PipelineConfig::default(), None).unwrap().prepared;
    let b_cfg = SynthConfig { seed: 11, campaign: 3, ..tiny() };
    let b = prepare(&generate(&b_cfg).unwrap(), &PipelineConfig::default(), None).unwrap().prepared;
    let mut m = a.model_config();
    m.hidden = 16;
    let arch = Architecture::IoHunter(m);
    let params = arch.init::<f32>(5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.iock");
    save_checkpoint(&path, &m, &params).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    ck.ensure_signature(b.d_c(), b.d_g()).unwrap();
    assert_eq!(ck.params, params);
    let cfg = iohunter::train::TrainConfig { seeds: vec![0, 1], ..Default::default() };
    let direct = evaluate_params(&b, &arch, &params, &cfg, "x").unwrap();
    let loaded = evaluate_params(&b, &Architecture::IoHunter(ck.config), &ck.params, &cfg, "x").unwrap();
    assert_eq!(direct, loaded);
    assert!(ck.ensure_signature(b.d_c() + 1, b.d_g()).is_err());
}

#[test]
fn io_users_cluster_in_the_fused_network() {
    let b = generate(&preset("bench").unwrap()).unwrap();
    let p = prepare(&b, &PipelineConfig::default(), None).unwrap().prepared;
    let h = iohunter::simnet::edge_homophily(&p.network, &p.labels).unwrap();
    assert!(h.edge > 0.7, "{}", h.edge);
}
