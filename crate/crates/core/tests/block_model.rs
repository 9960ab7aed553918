//! Statistical checks on sampled block-model networks.

use relprop::baselines::{derive_affinity_from_blocks, linbp};
use relprop::eval::{split_labels, LabelledSize};
use relprop::sbm::{build_block_spec, sample_network};
use relprop::StructureTemplate;

#[test]
fn block_edge_counts_within_three_standard_errors() {
    for template in StructureTemplate::ALL {
        let spec = build_block_spec(template, 2000, 15.0, 0.3).unwrap();
        let net = sample_network(&spec, 17).unwrap();
        let k = spec.num_groups();
        let mut counts = vec![vec![0.0f64; k]; k];
        for (a, b) in net.graph.edges() {
            let (ga, gb) = (net.groups[a], net.groups[b]);
            counts[ga][gb] += 1.0;
            if !net.graph.is_directed() && ga != gb {
                counts[gb][ga] += 1.0;
            }
        }
        for a in 0..k {
            for b in 0..k {
                let (sa, sb) = (spec.group_sizes[a] as f64, spec.group_sizes[b] as f64);
                let pairs = if a == b {
                    if net.graph.is_directed() {
                        sa * (sa - 1.0)
                    } else {
                        sa * (sa - 1.0) / 2.0
                    }
                } else {
                    sa * sb
                };
                let p = spec.omega[a][b];
                let expected = pairs * p;
                let se = (pairs * p * (1.0 - p)).sqrt();
                assert!(
                    (counts[a][b] - expected).abs() <= 3.0 * se.max(1e-9),
                    "{template} block ({a},{b}): {} vs {expected} ± {se}",
                    counts[a][b]
                );
            }
        }
    }
}

#[test]
fn mean_degree_hits_target_across_seeds() {
    for template in StructureTemplate::ALL {
        let spec = build_block_spec(template, 1000, 15.0, 0.1).unwrap();
        let mut total = 0.0;
        for seed in 0..20 {
            let g = sample_network(&spec, seed).unwrap().graph;
            let per_node = if g.is_directed() { 1.0 } else { 2.0 };
            let mean = per_node * g.num_edges() as f64 / g.num_nodes() as f64;
            assert!((mean - 15.0).abs() < 1.0, "{template} seed {seed}: {mean}");
            total += mean;
        }
        assert!((total / 20.0 - 15.0).abs() < 0.3);
    }
}

#[test]
fn sampling_ignores_worker_count() {
    let spec = build_block_spec(StructureTemplate::Cyclic, 1500, 15.0, 0.2).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| sample_network(&spec, 99).unwrap())
    };
    let (one, four) = (run(1), run(4));
    assert!(one.graph.edges().eq(four.graph.edges()));
    assert_eq!(one.labels, four.labels);
}

#[test]
fn heterogeneous_classes_look_alike_at_class_level() {
    let spec = build_block_spec(StructureTemplate::Heterogeneous, 2000, 15.0, 0.1).unwrap();
    let density = spec.class_density();
    let first = density[(0, 0)];
    for v in density.as_slice() {
        assert!((v - first).abs() < 1e-15);
    }
    let net = sample_network(&spec, 3).unwrap();
    let mut same = 0.0_f64;
    let mut cross = 0.0_f64;
    for (a, b) in net.graph.edges() {
        if net.labels.label(a) == net.labels.label(b) {
            same += 1.0;
        } else {
            cross += 1.0;
        }
    }
    // equal class densities: same-class pairs are slightly fewer than cross pairs
    let n = 2000.0_f64;
    let same_pairs = 2.0 * (n / 2.0) * (n / 2.0 - 1.0) / 2.0;
    let cross_pairs = (n / 2.0) * (n / 2.0);
    let ratio = (same / same_pairs) / (cross / cross_pairs);
    assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
}

#[test]
fn scaled_linbp_stays_bounded_on_block_model_graphs() {
    for template in StructureTemplate::ALL {
        for ratio in [0.0, 0.5, 1.0] {
            let spec = build_block_spec(template, 1000, 15.0, ratio).unwrap();
            let net = sample_network(&spec, 5).unwrap();
            let labels = split_labels(&net.labels, LabelledSize::Fraction(0.1), 5).unwrap();
            let h = derive_affinity_from_blocks(&spec)
                .unwrap()
                .scaled_for(&net.graph);
            // a vanishing tolerance forces the full 1000 iterations
            let f = linbp(&net.graph, &labels, &h, f64::MIN_POSITIVE, 1000);
            assert!(f.is_ok(), "{template} ratio {ratio}: {:?}", f.err());
        }
    }
}
