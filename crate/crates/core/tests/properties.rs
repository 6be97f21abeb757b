use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use synthex::evalkit::{classify_slot, score_run, ConditionOutcome};
use synthex::extractor::{is_null_marker, parse_output};
use synthex::normalize::{levenshtein, similarity_ratio};
use synthex::retrieval::{bm25_score, random_select, top_k, Bm25Index, Bm25Params, Bm25Scorer, Demonstration, DemonstrationPool};
use synthex::searchql::{evaluate, parse, search, Field, QueryAst, SearchRecord};
use synthex::{Slot, SynthesisRecord};

const VOCAB: &[&str] = &["dmf", "water", "zn", "cu", "heat", "stir", "h2bdc"];

fn corpus() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec(prop::sample::select(VOCAB).prop_map(str::to_string), 1..7), 1..9)
}

fn pool_of(docs: &[Vec<String>]) -> DemonstrationPool {
    DemonstrationPool::new(
        docs.iter()
            .enumerate()
            .map(|(i, d)| Demonstration::finalized(&format!("d{i}"), &d.join(" "), SynthesisRecord::new()))
            .collect(),
    )
    .unwrap()
}

fn value() -> impl Strategy<Value = Option<String>> {
    prop::option::of(prop::sample::select(vec!["DMF", "dmf ", "water", "120 °C", "24 h"]).prop_map(str::to_string))
}

fn record() -> impl Strategy<Value = SynthesisRecord> {
    prop::collection::vec(value(), 10).prop_map(|vs| {
        let mut r = SynthesisRecord::new();
        for (slot, v) in Slot::ALL.iter().zip(vs) {
            r.set(*slot, v);
        }
        r
    })
}

proptest! {
    #[test]
    fn bm25_scores_are_nonnegative_and_zero_without_overlap(docs in corpus(), q in prop::collection::vec(prop::sample::select(VOCAB), 1..4)) {
        let q: Vec<String> = q.into_iter().map(str::to_string).collect();
        let ids: Vec<String> = (0..docs.len()).map(|i| format!("d{i}")).collect();
        let idx = Bm25Index::from_tokens(ids.iter().map(String::as_str).zip(docs.iter().cloned()), Bm25Params::default()).unwrap();
        for (i, d) in docs.iter().enumerate() {
            let s = bm25_score(&idx, &q, &format!("d{i}")).unwrap();
            prop_assert!(s >= 0.0);
            if !q.iter().any(|t| d.contains(t)) {
                prop_assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn bm25_ignores_repeated_query_terms(docs in corpus(), t in prop::sample::select(VOCAB)) {
        let ids: Vec<String> = (0..docs.len()).map(|i| format!("d{i}")).collect();
        let idx = Bm25Index::from_tokens(ids.iter().map(String::as_str).zip(docs.iter().cloned()), Bm25Params::default()).unwrap();
        let once = idx.score_all_tokens(&[t.to_string()]);
        let twice = idx.score_all_tokens(&[t.to_string(), t.to_string()]);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn top_k_is_sorted_and_excludes(docs in corpus(), q in prop::sample::select(VOCAB), k in 1usize..10, ex in 0usize..8) {
        let pool = pool_of(&docs);
        let exclude = format!("d{ex}");
        let got = top_k(&Bm25Scorer::default(), &pool, q, k, Some(&exclude)).unwrap();
        let available = docs.len() - usize::from(ex < docs.len());
        prop_assert_eq!(got.len(), k.min(available));
        prop_assert!(got.iter().all(|s| s.demo_id != exclude));
        for w in got.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].demo_id < w[1].demo_id));
        }
    }

    #[test]
    fn random_select_is_seeded_and_self_excluding(docs in corpus(), seed: u64, k in 0usize..10) {
        let pool = pool_of(&docs);
        let a = random_select(&pool, k, seed, Some("d0"));
        prop_assert_eq!(&a, &random_select(&pool, k, seed, Some("d0")));
        prop_assert!(a.iter().all(|s| s.demo_id != "d0"));
        let distinct: BTreeSet<_> = a.iter().map(|s| s.demo_id.clone()).collect();
        prop_assert_eq!(distinct.len(), a.len());
    }

    #[test]
    fn levenshtein_matches_reference(a in "[a-dH2O()·. ]{0,12}", b in "[a-dH2O()·. ]{0,12}") {
        prop_assert_eq!(levenshtein(&a, &b), strsim::levenshtein(&a, &b));
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        let r = similarity_ratio(&a, &b);
        prop_assert!((0.0..=100.0).contains(&r));
        prop_assert_eq!(r == 100.0, a == b);
    }

    #[test]
    fn every_slot_lands_in_one_cell(p in record(), g in record()) {
        let gold = BTreeMap::from([("x".to_string(), g.clone())]);
        let s = score_run([("x", &p)], &gold).unwrap();
        prop_assert_eq!(s.matrix.total(), 10);
        let wrong = Slot::ALL.iter().filter(|&&sl| classify_slot(p.get(sl), g.get(sl)) == ConditionOutcome::FP).count();
        prop_assert_eq!(s.matrix.fp as usize, wrong);
        for m in [s.metrics.precision, s.metrics.recall, s.metrics.f1, s.metrics.acc].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn self_scoring_is_perfect(g in record()) {
        let gold = BTreeMap::from([("x".to_string(), g.clone())]);
        let s = score_run([("x", &g)], &gold).unwrap();
        prop_assert_eq!(s.matrix.fp + s.matrix.fn_, 0);
    }

    #[test]
    fn serialized_records_parse_back(r in record()) {
        let parsed = parse_output(&r.to_json()).unwrap();
        let mut expected = SynthesisRecord::new();
        for (slot, v) in r.iter() {
            expected.set(slot, v.filter(|s| !is_null_marker(s)).map(|s| s.trim().to_string()));
        }
        prop_assert_eq!(&parsed.record, &expected);
        // Parsing is a fixed point.
        prop_assert_eq!(parse_output(&parsed.record.to_json()).unwrap().record, parsed.record);
    }

    #[test]
    fn output_survives_prose_and_fences(r in record(), prefix in "[A-Za-z ,.]{0,30}") {
        let wrapped = format!("{prefix}\n```json\n{}\n```\nHope this helps.", r.to_json());
        prop_assert_eq!(parse_output(&wrapped).unwrap().record, parse_output(&r.to_json()).unwrap().record);
    }
}

fn ast() -> impl Strategy<Value = QueryAst> {
    let word = prop::sample::select(vec!["zinc", "DMF", "room temp", "OR", "x\"y", "a\\b", "4,4'-bpy"]);
    let leaf = prop_oneof![
        word.clone().prop_map(QueryAst::text),
        (prop::sample::select(Field::ALL.to_vec()), word).prop_map(|(f, w)| QueryAst::field(f, w)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| QueryAst::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| QueryAst::or(a, b)),
            inner.prop_map(QueryAst::not),
        ]
    })
}

fn search_records() -> Vec<SearchRecord> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/search/records.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn query_round_trips(q in ast()) {
        let printed = q.to_string();
        prop_assert_eq!(parse(&printed).unwrap(), q, "{}", printed);
    }

    #[test]
    fn de_morgan(a in ast(), b in ast()) {
        let records = search_records();
        let lhs = QueryAst::not(QueryAst::and(a.clone(), b.clone()));
        let rhs = QueryAst::or(QueryAst::not(a), QueryAst::not(b));
        for r in &records {
            prop_assert_eq!(evaluate(&lhs, r), evaluate(&rhs, r));
        }
    }

    #[test]
    fn pages_partition_the_hits(q in ast(), limit in 1usize..7) {
        let records = search_records();
        let all = search(&records, &q, usize::MAX, 0);
        let mut paged = Vec::new();
        let mut offset = 0;
        loop {
            let page = search(&records, &q, limit, offset);
            prop_assert_eq!(page.total, all.total);
            if page.hits.is_empty() {
                break;
            }
            prop_assert!(page.hits.len() <= limit);
            offset += page.hits.len();
            paged.extend(page.hits);
        }
        prop_assert_eq!(paged, all.hits);
    }
}
