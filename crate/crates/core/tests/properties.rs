use std::collections::BTreeMap;

use jamgraph::primitives::{glcm_energy, segment_congestion, watershed_split, Mask, Origin};
use jamgraph::relgraph::TriggerTolerance;
use jamgraph::retrieval::RecordMetadata;
use jamgraph::similarity::{deletion_cost, hungarian, logistic, node_sim, replacement_sim, MatchNode, Sense};
use jamgraph::speedmap::synth::scenarios::Family;
use jamgraph::speedmap::{asm_reconstruct, load_csv_str, synth_generate, to_csv_string, AsmConfig, DetectorSeries, GridSpec};
use jamgraph::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(seed: u64, max_nodes: usize, unit_weights: bool) -> RelationGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..=max_nodes);
    let kinds = [Kind::Bottleneck, Kind::Disturbance, Kind::Homogeneous];
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for k in 0..n {
        let w = if unit_weights { 1 } else { rng.gen_range(1..=5u32) };
        nodes.push(RelationNode {
            id: k as u32,
            tau: kinds[rng.gen_range(0..3)],
            s_abs: rng.gen_range(0.5..15.0),
            s_prop: 0.0,
            w,
            origin: Origin { t: k as f64, x: 0.0 },
        });
        if k > 0 && rng.gen_bool(0.7) {
            edges.push(RelationEdge {
                from: rng.gen_range(0..k) as u32,
                to: k as u32,
                weight: w,
            });
        }
    }
    let used: f64 = nodes.iter().map(|n| n.w as f64 * n.s_abs).sum();
    let total = used + rng.gen_range(0.0..10.0);
    for node in &mut nodes {
        node.s_prop = node.w as f64 * node.s_abs / total * 100.0;
    }
    RelationGraph {
        pattern_id: format!("g{seed}"),
        total_area: total,
        nodes,
        edges,
    }
}

fn params_strategy() -> impl Strategy<Value = SimilarityParams> {
    (0.0..2.0f64, 0.0..1.0f64, 0.0..2.0f64, 0.0..3.0f64, 0.0..2.0f64, any::<bool>()).prop_map(
        |(theta_s, theta_g, theta_t, theta_w, theta_i, proportion)| SimilarityParams {
            theta_s,
            theta_g,
            theta_t,
            theta_w,
            theta_i,
            size_mode: if proportion { SizeMode::Proportion } else { SizeMode::Absolute },
            ..SimilarityParams::default()
        },
    )
}

fn brute_force_max(m: &[Vec<f64>]) -> f64 {
    fn go(row: usize, used: &mut Vec<bool>, m: &[Vec<f64>], acc: f64, best: &mut f64) {
        if row == m.len() {
            *best = best.max(acc);
            return;
        }
        for c in 0..m.len() {
            if !used[c] {
                used[c] = true;
                go(row + 1, used, m, acc + m[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(0, &mut vec![false; m.len()], m, 0.0, &mut best);
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn logistic_is_bounded_and_monotone(
        b1 in 0.1..10.0f64, b0 in -5.0..5.0f64, theta in 0.1..2.0f64,
        x in 0.0..1.0f64, dx in 0.01..0.2f64,
    ) {
        // kept clear of saturation so strict comparisons are meaningful
        let up = (b1, b0);
        let down = (-b1, -b0);
        for beta in [up, down] {
            let y = logistic(beta, theta, x);
            prop_assert!(y > 0.0 && y < 1.0);
        }
        prop_assert!(logistic(up, theta, x + dx) > logistic(up, theta, x));
        prop_assert!(logistic(down, theta, x + dx) < logistic(down, theta, x));
    }

    #[test]
    fn deletion_cost_is_linear(w in 1.0..10.0f64, a in 0.1..50.0f64, theta_t in 0.0..3.0f64, k in 0.1..4.0f64) {
        let p = SimilarityParams { theta_t, ..SimilarityParams::default() };
        let n = MatchNode { tau: Kind::Disturbance, w, a };
        let base = deletion_cost(&n, &p);
        let scaled_theta = deletion_cost(&n, &SimilarityParams { theta_t: theta_t * k, ..p });
        let scaled_area = deletion_cost(&MatchNode { a: a * k, ..n }, &p);
        let tol = 1e-12 * base.abs().max(1.0) * k;
        prop_assert!((scaled_theta - k * base).abs() <= tol);
        prop_assert!((scaled_area - k * base).abs() <= tol);
    }

    #[test]
    fn hungarian_matches_brute_force(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-30..=30) as f64).collect()).collect();
        prop_assert_eq!(hungarian(&m, Sense::Maximize).unwrap().total, brute_force_max(&m));
        let neg: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        prop_assert_eq!(hungarian(&m, Sense::Minimize).unwrap().total, -brute_force_max(&neg));
    }

    #[test]
    fn matching_against_empty_deletes_everything(seed in any::<u64>(), p in params_strategy()) {
        let g = random_graph(seed, 6, false);
        let want: f64 = g.nodes.iter().map(|n| -deletion_cost(&MatchNode::of(n, p.size_mode), &p)).sum();
        let empty = RelationGraph::empty("empty");
        prop_assert_eq!(pattern_sim(&g, &empty, &p).unwrap(), want);
        prop_assert_eq!(pattern_sim(&empty, &g, &p).unwrap(), want);
    }

    #[test]
    fn null_node_similarity_is_negative_deletion_cost(seed in any::<u64>(), p in params_strategy()) {
        let g = random_graph(seed, 6, false);
        let other = random_graph(seed ^ 1, 3, false);
        for n in &g.nodes {
            let cd = deletion_cost(&MatchNode::of(n, p.size_mode), &p);
            prop_assert_eq!(node_sim(Some(n.id), None, &g, &other, &p).unwrap(), -cd);
            prop_assert_eq!(node_sim(None, Some(n.id), &other, &g, &p).unwrap(), -cd);
        }
    }

    #[test]
    fn size_mode_only_swaps_inputs(seed in any::<u64>(), p in params_strategy()) {
        let normalize = |mut g: RelationGraph| {
            let used: f64 = g.nodes.iter().map(|n| n.s_abs).sum();
            let scale = if used > 0.0 { 90.0 / used } else { 1.0 };
            for n in &mut g.nodes {
                n.s_abs *= scale;
                n.s_prop = n.s_abs;
            }
            g.total_area = 100.0;
            g
        };
        let ga = normalize(random_graph(seed, 5, true));
        let gb = normalize(random_graph(seed.wrapping_add(7), 5, true));
        prop_assert!(ga.validate().is_empty() && gb.validate().is_empty());
        let abs = pattern_sim(&ga, &gb, &SimilarityParams { size_mode: SizeMode::Absolute, ..p }).unwrap();
        let prop = pattern_sim(&ga, &gb, &SimilarityParams { size_mode: SizeMode::Proportion, ..p }).unwrap();
        prop_assert_eq!(abs, prop);
    }

    #[test]
    fn self_match_beats_disjoint_types(seed in any::<u64>()) {
        let g = random_graph(seed, 5, false);
        prop_assume!(!g.nodes.is_empty());
        let mut other = random_graph(seed ^ 99, 5, false);
        let used: Vec<Kind> = g.nodes.iter().map(|n| n.tau).collect();
        let spare = [Kind::Bottleneck, Kind::Disturbance, Kind::Homogeneous]
            .into_iter()
            .find(|k| !used.contains(k));
        prop_assume!(spare.is_some() && !other.nodes.is_empty());
        for n in &mut other.nodes {
            n.tau = spare.unwrap();
        }
        let p = SimilarityParams::default();
        prop_assert!(pattern_sim(&g, &g, &p).unwrap() > pattern_sim(&g, &other, &p).unwrap());
    }

    #[test]
    fn graph_json_round_trips(seed in any::<u64>()) {
        let g = random_graph(seed, 8, false);
        prop_assert_eq!(RelationGraph::from_json(&g.to_json()).unwrap(), g.clone());
        prop_assert_eq!(RelationGraph::from_json(&g.to_json_pretty()).unwrap(), g);
    }

    #[test]
    fn csv_round_trips(ns in 1usize..12, nt in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..ns * nt).map(|_| rng.gen_range(0.0..150.0)).collect();
        let meta = GridMeta::default();
        let f = SpeedField::new(meta.clone(), ns, nt, values).unwrap();
        prop_assert_eq!(load_csv_str(&to_csv_string(&f), &meta).unwrap(), f);
    }

    #[test]
    fn asm_output_is_a_convex_combination(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let detectors: Vec<DetectorSeries> = (0..rng.gen_range(1..5))
            .map(|d| DetectorSeries {
                position_km: d as f64 * 1.2,
                timestamps_min: (0..10).map(|k| k as f64).collect(),
                speeds_kmh: (0..10).map(|_| rng.gen_range(5.0..120.0)).collect(),
            })
            .collect();
        let (lo, hi) = detectors
            .iter()
            .flat_map(|d| d.speeds_kmh.iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let grid = GridSpec { meta: GridMeta::default(), n_space: 40, n_time: 20 };
        let f = asm_reconstruct(&detectors, &grid, &AsmConfig::default()).unwrap();
        prop_assert!(f.values().iter().all(|&v| v >= lo - 1e-9 && v <= hi + 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn truth_masks_carry_interior_speed(family in 0usize..4, seed in 0u64..10_000) {
        let (field, truth) = synth_generate(&Family::ALL[family].spec(seed)).unwrap();
        for p in &truth.primitives {
            for (i, j) in p.mask.cells() {
                prop_assert!((field.get(i, j) - p.interior_speed).abs() <= p.noise_amplitude + 1e-12);
            }
        }
    }

    #[test]
    fn extracted_instances_are_well_formed(family in 0usize..4, seed in 0u64..10_000) {
        let (field, _) = synth_generate(&Family::ALL[family].spec(seed)).unwrap();
        let set = extract_primitives(&field, &ExtractConfig::default()).unwrap();
        let cell = field.cell_area();
        for inst in &set.instances {
            prop_assert_eq!(inst.area, inst.mask.count() as f64 * cell);
            let e = glcm_energy(&field, &inst.mask, 8, (0, 1));
            if let Ok(e) = e {
                prop_assert!(e > 0.0 && e <= 1.0);
            }
        }
        let g = build_graph(&set, &infer_triggers(&set, TriggerTolerance::default()), "p").unwrap();
        prop_assert!(g.validate().is_empty());
        prop_assert!(g.topological_order().is_some());
        let mut parents: BTreeMap<u32, usize> = BTreeMap::new();
        for e in &g.edges {
            *parents.entry(e.to).or_default() += 1;
        }
        for e in &g.edges {
            if parents[&e.to] == 1 {
                prop_assert_eq!(e.weight, g.node(e.to).unwrap().w);
            }
        }
    }

    #[test]
    fn grouping_ignores_instance_order(family in 0usize..4, seed in 0u64..10_000, shuffle in any::<u64>()) {
        let (field, truth) = synth_generate(&Family::ALL[family].spec(seed)).unwrap();
        let (set, triggers) = truth.to_primitive_set(&field).unwrap();
        let g = build_graph(&set, &triggers, "p").unwrap();
        prop_assert_eq!(&build_graph(&set, &triggers, "p").unwrap(), &g);

        let mut order: Vec<usize> = (0..set.instances.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        for k in (1..order.len()).rev() {
            order.swap(k, rng.gen_range(0..=k));
        }
        let mut new_pos = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_pos[old] = new;
        }
        let mut shuffled = set.clone();
        shuffled.instances = order.iter().map(|&k| set.instances[k].clone()).collect();
        let remapped: Vec<(usize, usize)> = triggers.iter().map(|&(p, c)| (new_pos[p], new_pos[c])).collect();
        let h = build_graph(&shuffled, &remapped, "p").unwrap();
        prop_assert_eq!(shape(&g), shape(&h));
    }

    #[test]
    fn watershed_partitions_the_foreground(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ns, nt) = (30, 40);
        let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..6))
            .map(|_| (rng.gen_range(0.0..ns as f64), rng.gen_range(0.0..nt as f64), rng.gen_range(40.0..90.0)))
            .collect();
        let values: Vec<f64> = (0..ns * nt)
            .map(|idx| {
                let (i, j) = ((idx / nt) as f64, (idx % nt) as f64);
                let dip: f64 = bumps
                    .iter()
                    .map(|&(ci, cj, depth)| depth * (-((i - ci).powi(2) + (j - cj).powi(2)) / 30.0).exp())
                    .sum();
                (100.0 - dip + rng.gen_range(-2.0..2.0)).max(0.0)
            })
            .collect();
        let field = SpeedField::new(GridMeta::default(), ns, nt, values).unwrap();
        let fg = segment_congestion(&field, 65.0).foreground;
        let regions = watershed_split(&field, &fg, 5.0);
        let mut union = Mask::empty(ns, nt);
        for (a, ra) in regions.iter().enumerate() {
            prop_assert!(!ra.is_empty());
            for rb in &regions[a + 1..] {
                prop_assert!(ra.is_disjoint(rb));
            }
            union = union.union(ra);
        }
        prop_assert_eq!(union, fg);
    }

    #[test]
    fn ranking_is_deterministic_and_prefilter_keeps_order(seed in any::<u64>(), band in 0.0..1.5f64) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = PatternStore::open_or_create(dir.path()).unwrap();
        for k in 0..12u64 {
            let mut g = random_graph(seed.wrapping_add(k), 5, false);
            g.pattern_id = format!("r{k:02}");
            store.add(PatternRecord::new(g, RecordMetadata::default()), None).unwrap();
        }
        let q = random_graph(seed ^ 0xFF, 4, false);
        let p = SimilarityParams::default();
        let kept = store.prefilter(q.graph_size(), band).unwrap();
        let positions: Vec<usize> = kept
            .iter()
            .map(|r| store.records().iter().position(|s| s.pattern_id == r.pattern_id).unwrap())
            .collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));

        let first = store.query_topk(&Query::Graph(q.clone()), 100, &p, band).unwrap();
        let second = store.query_topk(&Query::Graph(q), 100, &p, band).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(first.len(), kept.len());
        for (k, r) in first.iter().enumerate() {
            prop_assert_eq!(r.rank, k + 1);
        }
        for w in first.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].pattern_id < w[1].pattern_id));
        }
    }
}

/// Graph contents up to node renumbering.
fn shape(g: &RelationGraph) -> (Vec<String>, Vec<String>) {
    let label = |id: u32| {
        let n = g.node(id).unwrap();
        format!("{}:{}:{:.9}:{:.9}", n.tau.symbol(), n.w, n.s_abs, n.s_prop)
    };
    let mut nodes: Vec<String> = g.nodes.iter().map(|n| label(n.id)).collect();
    let mut edges: Vec<String> = g
        .edges
        .iter()
        .map(|e| format!("{}>{}:{}", label(e.from), label(e.to), e.weight))
        .collect();
    nodes.sort();
    edges.sort();
    (nodes, edges)
}

#[test]
fn size_logistic_strictly_decreases_match_score() {
    let p = SimilarityParams { theta_g: 0.0, ..SimilarityParams::default() };
    let a_min = 4.0;
    let mut previous = f64::INFINITY;
    for k in 0..100 {
        // relative difference r = (a_max - a_min) / (a_max + a_min)
        let r = k as f64 / 100.0 * 0.99;
        let a_max = a_min * (1.0 + r) / (1.0 - r);
        let na = MatchNode { tau: Kind::Disturbance, w: 3.0, a: a_min };
        let nb = MatchNode { a: a_max, ..na };
        let m = replacement_sim(&na, &nb, &p);
        assert!(m < previous, "step {k}: {m} !< {previous}");
        previous = m;
    }
}

#[test]
fn deep_chains_terminate() {
    let chain = |n: usize, id: &str| {
        let nodes: Vec<RelationNode> = (0..n)
            .map(|k| RelationNode {
                id: k as u32,
                tau: if k == 0 { Kind::Bottleneck } else { Kind::Disturbance },
                s_abs: 1.0 + k as f64 * 0.01,
                s_prop: 0.1,
                w: 1,
                origin: Origin { t: k as f64, x: 0.0 },
            })
            .collect();
        let edges = (1..n as u32).map(|k| RelationEdge { from: k - 1, to: k, weight: 1 }).collect();
        RelationGraph { pattern_id: id.into(), total_area: 10_000.0, nodes, edges }
    };
    let (a, b) = (chain(300, "a"), chain(250, "b"));
    let s = pattern_sim(&a, &b, &SimilarityParams::default()).unwrap();
    assert!(s.is_finite());
}
