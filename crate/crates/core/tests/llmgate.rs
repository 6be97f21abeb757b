use std::sync::Arc;

use proptest::prelude::*;
use serde::Deserialize;
use synthex::llmgate::{fingerprint, ChatRequest, ChatResponse, FnProvider, Gateway, RecordingSleeper, RetryPolicy};

#[derive(Deserialize)]
struct Golden {
    request: ChatRequest,
    fingerprint: String,
}

#[test]
fn fingerprints_match_golden_fixture() {
    // Hashes computed by a separate Python script over the same canonical form.
    let golden: Vec<Golden> = serde_json::from_str(include_str!("fixtures/fingerprints.golden.json")).unwrap();
    assert_eq!(golden.len(), 10);
    for g in golden {
        assert_eq!(fingerprint(&g.request), g.fingerprint, "{:?}", g.request);
    }
}

#[test]
fn concurrent_callers_keep_ledger_consistent() {
    let provider = FnProvider(|req: &ChatRequest| Ok(ChatResponse::text("{}", req.user.len() as u64, 7)));
    let gw = Arc::new(Gateway::live(provider).with_max_inflight(3));
    let handles: Vec<_> = (0..16)
        .map(|i| {
            let gw = gw.clone();
            std::thread::spawn(move || gw.complete(&ChatRequest::new("m", "s", &"x".repeat(i + 1))).unwrap())
        })
        .collect();
    let responses: Vec<ChatResponse> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let ledger = gw.ledger();
    assert_eq!(ledger.requests, 16);
    assert_eq!(ledger.prompt_tokens, responses.iter().map(|r| r.prompt_tokens).sum::<u64>());
    assert_eq!(ledger.completion_tokens, 16 * 7);
}

proptest! {
    #[test]
    fn backoff_total_never_exceeds_ceiling(
        retries in 0u32..20,
        base in 1u64..2_000,
        max in 1u64..10_000,
        ceiling in 0u64..30_000,
    ) {
        let p = RetryPolicy {
            max_retries: retries,
            base_delay: std::time::Duration::from_millis(base),
            max_delay: std::time::Duration::from_millis(max),
            ceiling: std::time::Duration::from_millis(ceiling),
        };
        let total: std::time::Duration = p.delays().sum();
        prop_assert!(total <= p.ceiling);
        prop_assert!(p.delays().count() <= retries as usize);
    }

    #[test]
    fn ledger_equals_sum_of_responses(tokens in proptest::collection::vec((0u64..10_000, 0u64..10_000), 1..20)) {
        let script: Vec<_> = tokens.iter().map(|&(p, c)| Ok(ChatResponse::text("x", p, c))).collect();
        let provider = synthex::llmgate::ScriptedProvider::new(script);
        let gw = Gateway::live(provider).with_sleeper(Arc::new(RecordingSleeper::default()));
        for i in 0..tokens.len() {
            gw.complete(&ChatRequest::new("m", "s", &format!("u{i}"))).unwrap();
        }
        let l = gw.ledger();
        prop_assert_eq!(l.prompt_tokens, tokens.iter().map(|t| t.0).sum::<u64>());
        prop_assert_eq!(l.completion_tokens, tokens.iter().map(|t| t.1).sum::<u64>());
    }
}
