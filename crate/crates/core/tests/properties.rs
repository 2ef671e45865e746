//! Cross-module invariants as properties.

mod common;

use std::collections::BTreeSet;

use common::*;
use knight::builder::{build_kg, BuildContext};
use knight::config::PipelineConfig;
use knight::fixtures::Fixtures;
use knight::model::{enumerate_paths, normalize_name, KnowledgeGraph, Topic};
use knight::pipeline::Services;
use knight::store::{self, GraphSnapshot, GraphStore, MemoryStore};
use knight::synthesis::{dedup_triples, Triple};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn history_pool() -> Vec<Triple> {
    let t = |h: &str, r: &str, tl: &str| Triple::new(h, r, tl).unwrap();
    vec![
        t("History", "covers", "Second World War"),
        t("History", "studies", "World War II"),
        t("History", "covers", "WORLD WAR II"),
        t("History", "covers", "Renaissance"),
        t("History", "covers", "Industrial Revolution"),
        t("History", "covers", "Cold War"),
        t("History", "studies", "Ottoman Empire"),
        t("History", "covers", "Silk Road"),
        t("Hafez", "born_in", "Persian language"),
        t("Hafez", "born_in", "Shiraz"),
        t("Photosynthesis", "explained_by", "Phlogiston"),
        t("History", "covers", "History"),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paths_match_brute_force(seed in any::<u64>(), d in 1usize..4) {
        let mut rng = rng(seed);
        let g = random_graph(&mut rng, 8, 20);
        for v0 in g.node_ids() {
            let paths = enumerate_paths(&g, v0, d);
            prop_assert_eq!(&paths, &brute_force_paths(&g, v0, d));
            for p in &paths {
                prop_assert!(p.is_valid_in(&g) && p.is_simple());
                prop_assert_eq!(p.hops(), d);
                let r = p.reversed();
                prop_assert!(r.is_valid_in(&g));
                prop_assert_eq!(r.answer_node(), p.origin());
                prop_assert_eq!(r.reversed(), p.clone());
            }
        }
    }

    #[test]
    fn memory_store_agrees_with_graph(seed in any::<u64>()) {
        let g = random_graph(&mut rng(seed), 10, 25);
        let mut s = MemoryStore::default();
        store::save_graph(&mut s, &g).unwrap();
        prop_assert_eq!(store::load_graph(&mut s, g.seed_id()).unwrap(), g.clone());
        for d in 1..=3 {
            prop_assert_eq!(s.query_paths(g.seed_id(), d).unwrap(), enumerate_paths(&g, g.seed_id(), d));
        }
    }

    #[test]
    fn snapshots_are_lossless_and_stable(seed in any::<u64>()) {
        let g = random_graph(&mut rng(seed), 12, 30);
        let text = store::snapshot_to_string(&GraphSnapshot::new(&g, "T", &PipelineConfig::default(), None)).unwrap();
        let back = store::parse_snapshot(&text).unwrap();
        prop_assert_eq!(back.graph().unwrap(), g);
        prop_assert_eq!(store::snapshot_to_string(&back).unwrap(), text);
    }

    #[test]
    fn curation_survivors_ignore_order(shuffle in any::<u64>(), keep in proptest::collection::vec(any::<bool>(), 12)) {
        let config = PipelineConfig::default();
        let services = Services::mock(&Fixtures::builtin(), &config);
        let g = KnowledgeGraph::new("History");
        let raw: Vec<Triple> = history_pool().into_iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| t).collect();
        let survivors = |raw: &[Triple]| -> Result<BTreeSet<String>, TestCaseError> {
            let out = services.curator.curate(&g, g.seed_id(), raw, &config).unwrap();
            prop_assert_eq!(out.accepted.len() + out.merged.len() + out.rejected.len(), raw.len());
            Ok(out.accepted.iter().map(|t| normalize_name(&t.tail)).collect())
        };
        let mut perm = raw.clone();
        perm.shuffle(&mut rng(shuffle));
        prop_assert_eq!(survivors(&raw)?, survivors(&perm)?);
    }

    #[test]
    fn dedup_pair_matches_dp(a in "[a-c ]{1,12}", b in "[a-c ]{1,12}", lambda in 0.0f64..0.6) {
        prop_assume!(!a.trim().is_empty() && !b.trim().is_empty());
        let (ta, tb) = (Triple::new(&a, "r", "x").unwrap(), Triple::new(&b, "r", "x").unwrap());
        let (ka, kb) = (ta.key(), tb.key());
        let longest = ka.chars().count().max(kb.chars().count());
        let dup = levenshtein_dp(&ka, &kb) as f64 / longest as f64 <= lambda;
        prop_assert_eq!(dedup_triples(&[ta, tb], lambda).len(), if dup { 1 } else { 2 });
    }

    #[test]
    fn builds_respect_depth_ball(seed in 0u64..1000, topic in 0usize..4, d_max in 1usize..4, branches in 1usize..4) {
        let config = PipelineConfig { d_max, max_branches: branches, rng_seed: seed, ..Default::default() };
        let services = Services::mock(&Fixtures::builtin(), &config);
        let ctx = BuildContext {
            gateway: &services.gateway,
            retriever: &services.retriever,
            curator: &services.curator,
            config: &config,
        };
        let out = build_kg(&Topic::new(TOPICS[topic]).unwrap(), &ctx);
        let bound: usize = (0..=d_max).map(|l| branches.pow(l as u32)).sum();
        prop_assert!(out.graph.node_count() <= bound);
        prop_assert!(out.graph.nodes().all(|n| n.depth <= d_max));
        let names: BTreeSet<&str> = out.graph.nodes().map(|n| n.normalized_name.as_str()).collect();
        prop_assert_eq!(names.len(), out.graph.node_count());
    }
}
