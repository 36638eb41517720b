mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    block_violations, pattern_language, planted_component, random_block_graph, random_component, random_model,
};
use genescan_core::blocking::{contains_block, extract_blocks, BlockGraph, BlockSignatures};
use genescan_core::canonicalize::{apply_rules, default_rules, parse_rules};
use genescan_core::graph::{construct_agnostic_graph, AgnosticGraph, ConstantOps, NodeId};
use genescan_core::ingest::{export_json_graph, load_model, read_json_graph, ModelFormat, ModelSource};
use genescan_core::matcher::{check_signature, match_block_pattern, scan, ScanMode, ScanOptions};
use genescan_core::signature::{
    parse_signatures, to_canonical_json, BlockPattern, ComponentSignature, FamilySignature, OpPattern,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_graph(seed: u64, max: usize) -> AgnosticGraph {
    let mut r = rng(seed);
    let n = r.gen_range(1..=max);
    let (ops, decl) = random_model(&mut r, n);
    construct_agnostic_graph(&ops, &decl).unwrap()
}

/// Appends one block fed by an existing block.
fn grow(bg: &BlockGraph, r: &mut impl Rng) -> BlockGraph {
    let mut seqs: Vec<Vec<String>> = bg.blocks().iter().map(|b| b.op_types.clone()).collect();
    let mut edges: Vec<(usize, usize, usize)> = bg.edges().iter().map(|e| (e.src, e.dst, e.multiplicity)).collect();
    let from = r.gen_range(0..seqs.len());
    edges.push((from, seqs.len(), 1));
    seqs.push(vec!["A".into()]);
    BlockGraph::from_op_sequences(seqs, &edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn adjacency_is_symmetric(seed in any::<u64>()) {
        let g = random_graph(seed, 30);
        for n in g.nodes() {
            for s in &n.outputs {
                prop_assert!(g.nodes()[s.0].inputs.contains(&n.id));
            }
            for p in &n.inputs {
                prop_assert!(g.nodes()[p.0].outputs.contains(&n.id));
            }
        }
        let listed: usize = g.nodes().iter().map(|n| n.outputs.len()).sum();
        prop_assert_eq!(listed, g.edges().len());
    }

    #[test]
    fn construction_is_deterministic(seed in any::<u64>()) {
        prop_assert_eq!(random_graph(seed, 30), random_graph(seed, 30));
    }

    #[test]
    fn blocks_partition_the_graph(seed in any::<u64>()) {
        let g = random_graph(seed, 30);
        let consts = ConstantOps::default();
        let bg = extract_blocks(&g, &consts);
        let bad = block_violations(&g, &bg, &consts);
        prop_assert!(bad.is_empty(), "{:?}", bad);
        prop_assert_eq!(&bg, &extract_blocks(&g, &consts));
    }

    #[test]
    fn block_identity_is_order_sensitive(ids in proptest::collection::vec(0usize..50, 1..6)) {
        let seq: Vec<NodeId> = ids.iter().copied().map(NodeId).collect();
        let mut seen = BlockSignatures::new();
        prop_assert!(!contains_block(&mut seen, &seq));
        prop_assert!(contains_block(&mut seen, &seq));
        let mut reversed = seq.clone();
        reversed.reverse();
        prop_assert_eq!(contains_block(&mut seen, &reversed), reversed == seq);
    }

    #[test]
    fn json_export_round_trips(seed in any::<u64>()) {
        let g = random_graph(seed, 30);
        let doc = export_json_graph(&g, Some(17)).unwrap();
        let parsed = read_json_graph(doc.to_string().as_bytes()).unwrap();
        prop_assert_eq!(parsed.opset_version, Some(17));
        prop_assert!(parsed.into_graph(true).unwrap().same_structure(&g));
    }

    #[test]
    fn sequence_matching_agrees_with_language(
        items in proptest::collection::vec(0u8..7, 1..4),
        repeats in (1usize..3, 0usize..2),
        seq in proptest::collection::vec(prop_oneof![Just("A"), Just("B")], 0..=12),
    ) {
        let ops = items.iter().map(|i| match i {
            0 => OpPattern::AnyOne,
            1 => OpPattern::AnyMany,
            2 => OpPattern::Alternation(vec!["A".into(), "C".into()]),
            3 => OpPattern::Literal("C".into()),
            k if k % 2 == 0 => OpPattern::Literal("A".into()),
            _ => OpPattern::Literal("B".into()),
        }).collect();
        let mut pattern = BlockPattern::new(0, ops);
        pattern.repeats = (repeats.0, repeats.0 + repeats.1);
        let language = pattern_language(&pattern, &["A", "B"], seq.len());
        let owned: Vec<String> = seq.iter().map(|s| s.to_string()).collect();
        prop_assert_eq!(match_block_pattern(&pattern, &seq), language.contains(&owned));
    }

    #[test]
    fn ignored_ops_are_invisible(seq in proptest::collection::vec(prop_oneof![Just("A"), Just("B"), Just("X")], 0..10)) {
        let mut pattern = BlockPattern::new(0, vec![OpPattern::Literal("A".into()), OpPattern::AnyMany]);
        pattern.ignored_ops.insert("X".into());
        let kept: Vec<&str> = seq.iter().copied().filter(|s| *s != "X").collect();
        let plain = BlockPattern::new(0, pattern.ops.clone());
        prop_assert_eq!(match_block_pattern(&pattern, &seq), match_block_pattern(&plain, &kept));
    }

    #[test]
    fn planted_components_match(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bg = random_block_graph(&mut r, 20);
        if let Some(c) = planted_component(&mut r, &bg) {
            prop_assert!(check_signature(&c, &bg).unwrap().matched);
        }
    }

    #[test]
    fn wildcards_never_lose_matches(seed in any::<u64>(), pick in any::<usize>(), many in any::<bool>()) {
        let mut r = rng(seed);
        let bg = random_block_graph(&mut r, 20);
        let Some(c) = planted_component(&mut r, &bg) else { return Ok(()) };
        let mut blocks = c.blocks.clone();
        let b = pick % blocks.len();
        let i = (pick / 7) % blocks[b].ops.len();
        blocks[b].ops[i] = if many { OpPattern::AnyMany } else { OpPattern::AnyOne };
        let loose = ComponentSignature::new(blocks, c.edges.clone(), c.min_repeats).unwrap();
        prop_assert!(check_signature(&loose, &bg).unwrap().matched);
    }

    #[test]
    fn matches_survive_added_blocks(seed in any::<u64>()) {
        let mut r = rng(seed);
        let bg = random_block_graph(&mut r, 15);
        let c = random_component(&mut r);
        let before = check_signature(&c, &bg).unwrap();
        let after = check_signature(&c, &grow(&bg, &mut r)).unwrap();
        prop_assert!(!before.matched || after.matched);
        prop_assert!(after.occurrences >= before.occurrences);
        prop_assert_eq!(&before, &check_signature(&c, &bg).unwrap());
    }

    #[test]
    fn best_match_is_first_of_all(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(seed, 40);
        let bg = extract_blocks(&g, &ConstantOps::default());
        let db: Vec<FamilySignature> = (0..6).map(|k| {
            let component = planted_component(&mut r, &bg).unwrap_or_else(|| random_component(&mut r));
            FamilySignature { name: format!("F{k}"), components: vec![component], metadata: None }
        }).collect();
        let all = scan(&g, &db, &ScanOptions::default(), "m");
        let best = scan(&g, &db, &ScanOptions { mode: ScanMode::BestMatch, ..ScanOptions::default() }, "m");
        prop_assert!(best.detections.len() <= 1);
        prop_assert_eq!(best.detections.first(), all.detections.first());
        for pair in all.detections.windows(2) {
            prop_assert!((std::cmp::Reverse(pair[0].specificity), &pair[0].family)
                < (std::cmp::Reverse(pair[1].specificity), &pair[1].family));
        }
    }

    #[test]
    fn canonical_signatures_round_trip(seed in any::<u64>(), count in 1usize..4, with_meta in any::<bool>()) {
        let mut r = rng(seed);
        let db: Vec<FamilySignature> = (0..3).map(|k| FamilySignature {
            name: format!("F{k}"),
            components: (0..count).map(|_| random_component(&mut r)).collect(),
            metadata: with_meta.then(|| serde_json::json!({"source": "test"})),
        }).collect();
        let text = to_canonical_json(&db).to_string();
        let back = parse_signatures(text.as_bytes()).unwrap();
        prop_assert_eq!(back, db);
    }

    #[test]
    fn canonicalization_is_idempotent(seed in any::<u64>()) {
        let g = random_graph(seed, 40);
        let consts = ConstantOps::default();
        let rules = default_rules();
        let once = apply_rules(&g, &rules, &consts);
        prop_assert_eq!(once.fused, 0);
        prop_assert_eq!(&once.graph, &g);
        let twice = apply_rules(&once.graph, &rules, &consts);
        prop_assert_eq!(twice.graph, once.graph);
    }

    #[test]
    fn parsers_are_total(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = parse_signatures(&bytes);
        let _ = parse_rules(&bytes);
        let _ = read_json_graph(&bytes);
        for format in [ModelFormat::Onnx, ModelFormat::JsonGraph] {
            let source = ModelSource { format, payload: bytes.clone(), origin: "p".into() };
            let _ = load_model(&source, false);
        }
    }

    #[test]
    fn json_shaped_noise_never_panics(text in r#"\{("[a-z_]{1,8}":(\[[^\]]{0,20}\]|[0-9]{1,3}|null|"[A-Za-z?*|]{0,6}"),?){0,4}\}"#) {
        let _ = parse_signatures(text.as_bytes());
        let _ = read_json_graph(text.as_bytes());
    }
}

#[test]
fn fusion_rule_applies_wherever_planted() {
    let consts = ConstantOps::default();
    let rules = default_rules();
    let mut r = rng(11);
    for _ in 0..50 {
        let n = r.gen_range(1..5);
        let mut doc = serde_json::json!({"nodes": [], "inputs": ["x0"], "outputs": [], "initializers": []});
        let nodes = doc["nodes"].as_array_mut().unwrap();
        for k in 0..n {
            let (x, p) = (format!("x{k}"), format!("ln{k}"));
            let op = |name: &str, ty: &str, ins: Vec<String>| serde_json::json!({"name": format!("{p}/{name}"), "op": ty, "inputs": ins, "outputs": [format!("{p}/{name}:0")]});
            let v = |name: &str| format!("{p}/{name}:0");
            nodes.push(op("ReduceMean", "ReduceMean", vec![x.clone()]));
            nodes.push(op("Sub", "Sub", vec![x.clone(), v("ReduceMean")]));
            nodes.push(op("Pow", "Pow", vec![v("Sub")]));
            nodes.push(op("ReduceMean_1", "ReduceMean", vec![v("Pow")]));
            nodes.push(op("Add", "Add", vec![v("ReduceMean_1")]));
            nodes.push(op("Sqrt", "Sqrt", vec![v("Add")]));
            nodes.push(op("Div", "Div", vec![v("Sub"), v("Sqrt")]));
            nodes.push(op("Mul", "Mul", vec![v("Div")]));
            nodes.push(op("Add_1", "Add", vec![v("Mul")]));
            nodes.push(serde_json::json!({"name": format!("next{k}"), "op": "Relu", "inputs": [v("Add_1")], "outputs": [format!("x{}", k + 1)]}));
        }
        doc["outputs"] = serde_json::json!([format!("x{n}")]);
        let g = read_json_graph(doc.to_string().as_bytes())
            .unwrap()
            .into_graph(true)
            .unwrap();
        let out = apply_rules(&g, &rules, &consts);
        assert_eq!(out.fused, n);
        assert_eq!(g.len() - out.graph.len(), 8 * n);
        let ops: BTreeMap<&str, usize> = out.graph.nodes().iter().fold(BTreeMap::new(), |mut m, node| {
            *m.entry(node.op_type.as_str()).or_default() += 1;
            m
        });
        assert_eq!(ops.get("LayerNormalization"), Some(&n));
        assert_eq!(ops.get("ReduceMean"), None);
    }
}
