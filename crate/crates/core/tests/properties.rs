use std::collections::{HashMap, HashSet};

use lgdumap::config::ExperimentConfig;
use lgdumap::encoder::knn::{build_knn, exact_knn};
use lgdumap::encoder::umap::q_ij;
use lgdumap::encoder::{align_loss, text_embed_mock, TextMatrix};
use lgdumap::federation::{aggregate_markers, quantize, unmask_sum, ClientUpdate, MaskScheme, MaskedUpdate};
use lgdumap::graph::{partition_noniid, synth_graph, SplitConfig, SynthParams};
use lgdumap::llmguide::{admit, brier, ece, CalibrationModel, MockOracleProposer, Proposer, ECE_BINS, TAU_SWEEP};
use lgdumap::markers::{link_prob, soft_assign, LossWeights, MarkerSet, Polarity};
use lgdumap::metrics::{accuracy, cka, continuity, micro_f1, procrustes, trustworthiness};
use lgdumap::model::{loss_only, GradcheckInstance};
use lgdumap::privacy::{clip, epsilon_for, l2_norm};
use lgdumap::rng::rng_for;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_for(seed, &[]);
    Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal))
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian draw.
fn orthogonal(d: usize, seed: u64) -> Array2<f64> {
    let a = gaussian(d, d, seed);
    let mut q = Array2::<f64>::zeros((d, d));
    for j in 0..d {
        let mut v = a.column(j).to_owned();
        for k in 0..j {
            let u = q.column(k).to_owned();
            v = &v - &(&u * u.dot(&v));
        }
        let n = v.dot(&v).sqrt();
        q.column_mut(j).assign(&(v / n));
    }
    q
}

fn small_graph(seed: u64) -> lgdumap::graph::ClientGraph {
    synth_graph(&SynthParams {
        n_nodes: 120,
        n_classes: 4,
        intra_p: 0.1,
        inter_p: 0.02,
        seed,
        ..Default::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partition_preserves_labels_and_never_shares_edges(seed in 0u64..1000, n_clients in 1usize..6, alpha in 0.1f64..5.0) {
        let g = small_graph(seed);
        let parts = partition_noniid(&g, &SplitConfig { n_clients, label_skew_alpha: alpha, seed, ..Default::default() }).unwrap();
        let mut global: HashMap<Option<usize>, usize> = HashMap::new();
        for l in &g.labels {
            *global.entry(*l).or_default() += 1;
        }
        let mut local: HashMap<Option<usize>, usize> = HashMap::new();
        for p in &parts {
            for l in &p.labels {
                *local.entry(*l).or_default() += 1;
            }
        }
        prop_assert_eq!(global, local);
        let total: usize = parts.iter().map(|p| p.edges.len()).sum();
        prop_assert!(total <= g.edges.len());
    }

    #[test]
    fn synth_graph_is_bit_deterministic(seed in 0u64..10_000) {
        prop_assert_eq!(small_graph(seed), small_graph(seed));
    }

    #[test]
    fn q_is_a_symmetric_probability(
        zi in prop::collection::vec(-5.0f64..5.0, 3),
        zj in prop::collection::vec(-5.0f64..5.0, 3),
        a in 0.1f64..3.0,
        b in 0.3f64..1.5,
    ) {
        let q = q_ij(&zi, &zj, a, b);
        prop_assert!(q > 0.0 && q <= 1.0);
        prop_assert_eq!(q, q_ij(&zj, &zi, a, b));
    }

    #[test]
    fn fuzzy_memberships_dominate_directed_and_pin_edges(seed in 0u64..1000, k in 2usize..6) {
        let n = 15;
        let x = gaussian(n, 3, seed);
        let edges = vec![(0, 7), (3, 11)];
        let ng = build_knn(&x, k, &edges).unwrap();
        let directed = |i: usize, j: usize| {
            ng.knn[i].iter().find(|e| e.index == j).map_or(0.0f64, |e| e.membership)
        };
        for &(i, j, p) in &ng.pairs {
            prop_assert!(p >= directed(i, j).max(directed(j, i)) - 1e-15);
            prop_assert!(p <= 1.0);
        }
        for &(i, j) in &edges {
            prop_assert_eq!(ng.weight(i, j), Some(1.0));
        }
        prop_assert_eq!(exact_knn(&x, k).len(), n);
    }

    #[test]
    fn alignment_ignores_row_scale(seed in 0u64..1000, scales in prop::collection::vec(0.01f64..100.0, 6)) {
        let z = gaussian(6, 4, seed);
        let text = TextMatrix { rows: gaussian(6, 4, seed + 1), present: vec![true, true, false, true, true, true] };
        let mut zs = z.clone();
        for (i, s) in scales.iter().enumerate() {
            zs.row_mut(i).mapv_inplace(|v| v * s);
        }
        let (a, b) = (align_loss(&z, &text).unwrap(), align_loss(&zs, &text).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn mock_text_embedding_is_pure(text in "[a-z ]{0,40}", seed in 0u64..100) {
        prop_assert_eq!(text_embed_mock(&text, 16, seed), text_embed_mock(&text, 16, seed));
    }

    #[test]
    fn soft_assignment_is_a_shift_invariant_distribution(
        locs in prop::collection::vec(0.0f64..10.0, 2..8),
        s in 0.0f64..10.0,
        sigma in 0.2f64..3.0,
        shift in -50.0f64..50.0,
    ) {
        let pol = vec![Polarity::Positive; locs.len()];
        let m = MarkerSet::new(locs.clone(), pol, sigma).unwrap();
        let p = soft_assign(s, &m);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // a constant added to every squared distance, i.e. to every logit
        let logits: Vec<f64> = locs.iter().map(|l| -((s - l).powi(2) + shift) / (2.0 * sigma * sigma)).collect();
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        for (a, b) in p.iter().zip(&e) {
            prop_assert!((a - b / z).abs() < 1e-12);
        }
    }

    #[test]
    fn link_prob_grows_toward_the_positive_marker(
        pos in 0.5f64..3.0,
        gap in 1.0f64..5.0,
        s in 0.0f64..10.0,
        step in 0.0f64..1.0,
    ) {
        let neg = pos + gap;
        let m = MarkerSet::new(vec![pos, neg], vec![Polarity::Positive, Polarity::Negative], 1.0).unwrap();
        let s = pos + s;
        let closer = s - step * (s - pos);
        prop_assert!(link_prob(closer, &m).unwrap() >= link_prob(s, &m).unwrap());
    }

    #[test]
    fn objective_drops_exactly_the_zeroed_term(seed in 0u64..200, which in 0usize..5) {
        let inst = GradcheckInstance::random(seed).unwrap();
        let w = LossWeights::default();
        let full = loss_only(&inst.params, &inst.view(), &inst.batch(w)).unwrap();
        let mut w0 = w;
        let removed = match which {
            0 => { w0.nll = 0.0; w.nll * full.nll }
            1 => { w0.bce = 0.0; w.bce * full.bce }
            2 => { w0.lambda = 0.0; w.lambda * full.kl }
            3 => { w0.gamma = 0.0; w.gamma * full.align }
            _ => { w0.eta = 0.0; w.eta * full.umap }
        };
        let part = loss_only(&inst.params, &inst.view(), &inst.batch(w0)).unwrap();
        prop_assert!((full.total - removed - part.total).abs() < 1e-10 * full.total.abs().max(1.0));
    }

    #[test]
    fn admission_sets_are_nested_over_tau(seed in 0u64..500, temperature in 0.3f64..4.0) {
        let g = small_graph(seed);
        let g = lgdumap::graph::make_fewshot_split(&g, 5, seed).unwrap();
        let g = lgdumap::graph::make_edge_split(&g, 0.1, 0.2, seed).unwrap();
        let base = MockOracleProposer { seed, ..Default::default() }.propose(&g, 0).unwrap();
        let mut prev: Option<HashSet<usize>> = None;
        for tau in TAU_SWEEP {
            let mut props = base.clone();
            admit(&mut props, &CalibrationModel { temperature, tau }).unwrap();
            let acc: HashSet<usize> = props.iter().enumerate().filter(|(_, p)| p.accepted).map(|(i, _)| i).collect();
            if let Some(prev) = &prev {
                prop_assert!(acc.is_subset(prev));
            }
            prev = Some(acc);
        }
    }

    #[test]
    fn sharp_correct_predictor_scores_zero(outcomes in prop::collection::vec(any::<bool>(), 1..60)) {
        let conf: Vec<f64> = outcomes.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
        prop_assert_eq!(brier(&conf, &outcomes).unwrap(), 0.0);
        // confidence of the predicted class is 1 and it is always right
        let ones = vec![1.0; outcomes.len()];
        let right = vec![true; outcomes.len()];
        prop_assert_eq!(ece(&ones, &right, ECE_BINS).unwrap(), 0.0);
    }

    #[test]
    fn aggregation_is_permutation_invariant_and_weight_homogeneous(
        current in prop::collection::vec(0.0f64..5.0, 4),
        payloads in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 4), 1..8),
        weights in prop::collection::vec(0.1f64..50.0, 8),
        c in 0.01f64..100.0,
        rot in 0usize..8,
    ) {
        let ups: Vec<ClientUpdate> = payloads
            .iter()
            .enumerate()
            .map(|(k, p)| ClientUpdate { client: k, weight: weights[k], payload: p.clone() })
            .collect();
        let base = aggregate_markers(&current, &ups).unwrap();
        let mut perm = ups.clone();
        perm.rotate_left(rot % ups.len());
        perm.reverse();
        let scaled: Vec<ClientUpdate> = ups.iter().map(|u| ClientUpdate { weight: c * u.weight, ..u.clone() }).collect();
        for (a, b) in base.iter().zip(aggregate_markers(&current, &perm).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in base.iter().zip(aggregate_markers(&current, &scaled).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_sum_equals_plain_fixed_point_sum(
        payloads in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 5), 2..12),
        seed in any::<u64>(),
        round in 0u64..1000,
    ) {
        let ids: Vec<usize> = (0..payloads.len()).map(|k| 3 * k + 1).collect();
        let scheme = MaskScheme::new(&ids, seed, round);
        let masked: Vec<Vec<i64>> = ids
            .iter()
            .zip(&payloads)
            .map(|(&id, p)| {
                MaskedUpdate::from_update(&ClientUpdate { client: id, weight: 1.0, payload: p.clone() }, &scheme)
                    .unwrap()
                    .masked
            })
            .collect();
        let plain: Vec<i64> = (0..5)
            .map(|d| payloads.iter().fold(0i64, |acc, p| acc.wrapping_add(quantize(p[d]))))
            .collect();
        prop_assert_eq!(unmask_sum(&masked).unwrap(), plain);
    }

    #[test]
    fn epsilon_is_monotone(q in 0.05f64..0.9, sigma in 0.5f64..3.0, t in 1u64..60) {
        let e = epsilon_for(q, sigma, t, 1e-5);
        prop_assert!(epsilon_for(q, sigma * 1.2, t, 1e-5) <= e + 1e-12);
        prop_assert!(epsilon_for(q, sigma, t + 5, 1e-5) >= e - 1e-12);
        prop_assert!(epsilon_for((q * 1.1).min(1.0), sigma, t, 1e-5) >= e - 1e-12);
        prop_assert!(epsilon_for(q, sigma, t, 1e-7) >= e - 1e-12);
    }

    #[test]
    fn clip_is_idempotent_and_contracting(v in prop::collection::vec(-100.0f64..100.0, 0..10), c in 0.01f64..50.0) {
        let once = clip(&v, c);
        prop_assert!(l2_norm(&once) <= l2_norm(&v) + 1e-12);
        prop_assert!(l2_norm(&once) <= c * (1.0 + 1e-12));
        let twice = clip(&once, c);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn manifold_scores_ignore_isometries(seed in 0u64..500, k in 1usize..6, shift in -10.0f64..10.0) {
        let x = gaussian(25, 4, seed);
        let z = gaussian(25, 3, seed + 7);
        let zi = z.dot(&orthogonal(3, seed + 9)) + shift;
        let (t, c) = (trustworthiness(&x, &z, k).unwrap(), continuity(&x, &z, k).unwrap());
        prop_assert!((t - trustworthiness(&x, &zi, k).unwrap()).abs() < 1e-12);
        prop_assert!((c - continuity(&x, &zi, k).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn similarity_invariances(seed in 0u64..500, scale in 0.05f64..20.0, shift in -5.0f64..5.0) {
        let x = gaussian(30, 3, seed);
        let y = gaussian(30, 3, seed + 1) + &(&x * 0.5);
        let q = orthogonal(3, seed + 2);
        let yt = y.dot(&q) * scale + shift;
        prop_assert!((cka(&x, &y).unwrap() - cka(&x, &yt).unwrap()).abs() < 1e-10);
        prop_assert!((procrustes(&x, &y).unwrap() - procrustes(&x, &yt).unwrap()).abs() < 1e-9);
        prop_assert!((procrustes(&x, &y).unwrap() - procrustes(&(x.dot(&q) * scale), &y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn micro_f1_equals_accuracy_for_single_label(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..80)) {
        let (p, y): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        prop_assert!((micro_f1(&p, &y, 5).unwrap() - accuracy(&p, &y).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn config_round_trips(rounds in 1usize..200, noise in 0.0f64..3.0, seeds in prop::collection::vec(0u64..100, 1..6)) {
        let mut cfg = ExperimentConfig::default();
        cfg.train.rounds = rounds;
        cfg.privacy.noise_sigma_dp = noise;
        cfg.seeds = seeds;
        let back = ExperimentConfig::from_yaml(&cfg.to_yaml()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
