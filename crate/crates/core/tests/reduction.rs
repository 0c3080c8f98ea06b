mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use optpick::embed::{embed, EmbeddingSource};
use optpick::eval::hit_at_k;
use optpick::gateway::ScriptedOracleConfig;
use optpick::reduce::{reduce, reduce_cbwr, reduce_itr, reduce_self_consistency, reduce_standard};
use optpick::{Gateway, LabelCatalog, LabelId, ReductionConfig, Strategy};

fn cfg(strategy: Strategy) -> ReductionConfig {
    ReductionConfig {
        strategy,
        ..Default::default()
    }
}

fn label_embeddings(catalog: &LabelCatalog) -> optpick::embed::EmbeddingMatrix {
    let items: Vec<String> = catalog.ids().iter().map(|l| l.to_string()).collect();
    embed(&items, &EmbeddingSource::default()).unwrap()
}

#[test]
fn small_option_sets_pass_through_without_calls() {
    let gw = Gateway::new(Arc::new(Canned("CHOICE: x".into())));
    let y = ids(&["a", "b", "c"]);
    for s in Strategy::ALL {
        let emb = optpick::embed::EmbeddingMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let r = reduce("t", &y, &cfg(s), &gw, Some(&emb)).unwrap();
        assert_eq!(r.reduced, y);
        assert_eq!(r.calls, 0);
    }
    assert_eq!(gw.stats().invocations, 0);
}

#[test]
fn faithful_oracle_keeps_gold_for_every_strategy() {
    let cat = catalog(20);
    let insts = instances(&cat, 30, 1);
    let gw = gateway(ScriptedOracleConfig::faithful(), &insts);
    let emb = label_embeddings(&cat);
    for s in Strategy::ALL {
        for inst in &insts {
            let r = reduce(&inst.text, &cat.ids(), &cfg(s), &gw, Some(&emb)).unwrap();
            assert!(r.reduced.contains(&inst.gold), "{s:?}");
            assert_eq!(r.reduced.len(), 5);
        }
    }
}

#[test]
fn standard_keeps_reply_order() {
    let y = ids(&["a", "b", "c", "d", "e", "f", "g"]);
    let gw = Gateway::new(Arc::new(Canned("CHOICE: g, e, c, a, b".into())));
    let r = reduce_standard("t", &y, &cfg(Strategy::Standard), &gw).unwrap();
    assert_eq!(r.reduced, ids(&["g", "e", "c", "a", "b"]));
    assert_eq!(r.calls, 1);
    assert_eq!(r.trace[0].padded, 0);
}

#[test]
fn unparseable_reply_is_padded_in_prompt_order() {
    let y = ids(&["a", "b", "c", "d", "e", "f", "g"]);
    let gw = Gateway::new(Arc::new(Canned("CHOICE: f. Nothing else fits.".into())));
    let r = reduce_standard("t", &y, &cfg(Strategy::Standard), &gw).unwrap();
    assert_eq!(r.reduced, ids(&["f", "a", "b", "c", "d"]));
    assert_eq!(r.trace[0].padded, 4);
}

#[test]
fn self_consistency_unanimous() {
    let y = ids(&["a", "b", "c", "d", "e", "f", "g"]);
    let gw = Gateway::new(Arc::new(Canned("CHOICE: c, b, a, e, d".into())));
    let c = ReductionConfig {
        votes: 3,
        ..cfg(Strategy::SelfConsistency)
    };
    let r = reduce_self_consistency("t", &y, &c, &gw).unwrap();
    assert_eq!(r.reduced, ids(&["c", "b", "a", "e", "d"]));
    assert_eq!(r.calls, 3);
}

#[test]
fn self_consistency_tie_break_by_mean_rank() {
    let replies = ["a, b, c, e", "a, b, d, f", "c, d, e, a", "b, c, d, f"];
    let n = AtomicUsize::new(0);
    let gw = Gateway::new(Arc::new(FnBackend(move |_q: &optpick::ModelQuery| {
        format!("CHOICE: {}", replies[n.fetch_add(1, Ordering::SeqCst)])
    })));
    let c = ReductionConfig {
        votes: 4,
        ..cfg(Strategy::SelfConsistency)
    };
    let y = ids(&["a", "b", "c", "d", "e", "f", "g", "h"]);
    let r = reduce_self_consistency("t", &y, &c, &gw).unwrap();
    let mut got = r.reduced.clone();
    got.sort();
    assert_eq!(got, ids(&["a", "b", "c", "d", "e"]));
    assert_eq!(r.reduced[4], LabelId::new("e"));
}

#[test]
fn self_consistency_with_no_usable_vote_fails() {
    let y = ids(&["a", "b", "c", "d", "e", "f"]);
    let gw = Gateway::new(Arc::new(Canned("no idea".into())));
    assert!(reduce_self_consistency("t", &y, &cfg(Strategy::SelfConsistency), &gw).is_err());
}

#[test]
fn voting_does_not_lose_hits_against_a_single_call() {
    let cat = catalog(60);
    let insts = instances(&cat, 500, 2);
    let gw = gateway(ScriptedOracleConfig::default(), &insts);
    let golds: Vec<LabelId> = insts.iter().map(|i| i.gold.clone()).collect();
    let run = |s: Strategy| -> Vec<Vec<LabelId>> {
        insts
            .iter()
            .map(|i| {
                let c = ReductionConfig {
                    seed: i.id as u64,
                    ..cfg(s)
                };
                reduce(&i.text, &cat.ids(), &c, &gw, None).unwrap().reduced
            })
            .collect()
    };
    let single = hit_at_k(&run(Strategy::Standard), &golds, 5).unwrap();
    let voted = hit_at_k(&run(Strategy::SelfConsistency), &golds, 5).unwrap();
    assert!(voted >= single, "voting {voted} < single {single}");
}

#[test]
fn itr_schedule_and_calls() {
    let names: Vec<String> = (0..77).map(|i| format!("intent_{i:02}")).collect();
    let cat = LabelCatalog::new(names).unwrap();
    let insts: Vec<_> = (0..20)
        .map(|i| optpick::Instance::new(i, format!("q{i}"), cat.ids()[(i * 7) % 77].clone()))
        .collect();
    let gw = gateway(ScriptedOracleConfig::faithful(), &insts);
    for inst in &insts {
        let r = reduce_itr(&inst.text, &cat.ids(), &cfg(Strategy::Itr), &gw).unwrap();
        assert_eq!(r.calls, 4);
        let sizes: Vec<usize> = r.trace.iter().map(|s| s.kept.len()).collect();
        assert_eq!(sizes, vec![39, 20, 10, 5]);
        assert!(r.reduced.contains(&inst.gold));
        // Each step only sees the previous step's survivors.
        for w in r.trace.windows(2) {
            assert!(w[1].window.iter().all(|o| w[0].kept.contains(o)));
        }
    }
    let six = ids(&["a", "b", "c", "d", "e", "f"]);
    let gw = Gateway::new(Arc::new(Canned("CHOICE: a, b, c, d, e".into())));
    assert_eq!(reduce_itr("t", &six, &cfg(Strategy::Itr), &gw).unwrap().calls, 1);
}

/// |S| after each window, following the loop by hand.
fn cbwr_schedule(y: usize, n: usize, k: usize, c: usize, t: usize) -> (Vec<usize>, u64) {
    let (mut s, mut windows, mut steps) = (y, Vec::new(), 0);
    while s > n && steps < t {
        let w = s.min(k * c);
        windows.push(w);
        s -= w - n;
        steps += 1;
    }
    if s > n {
        windows.push(s);
    }
    let calls = windows.len() as u64;
    (windows, calls)
}

#[test]
fn cbwr_follows_the_hand_traced_schedule() {
    for (y, expect_calls) in [(20usize, 1u64), (60, 4)] {
        let cat = catalog(y);
        let insts = instances(&cat, 20, 3);
        let gw = gateway(ScriptedOracleConfig::default(), &insts);
        let emb = label_embeddings(&cat);
        let (windows, calls) = cbwr_schedule(y, 5, 5, 4, 10);
        assert_eq!(calls, expect_calls);
        for inst in &insts {
            let r = reduce_cbwr(&inst.text, &cat.ids(), &cfg(Strategy::Cbwr), &gw, &emb).unwrap();
            assert_eq!(r.calls, calls);
            let sizes: Vec<usize> = r.trace.iter().map(|s| s.window.len()).collect();
            assert_eq!(sizes, windows);
            // Discarded options never come back.
            for (i, step) in r.trace.iter().enumerate() {
                for later in &r.trace[i + 1..] {
                    assert!(step.discarded.iter().all(|d| !later.window.contains(d)));
                }
            }
            assert_eq!(&r.reduced, &r.trace.last().unwrap().kept);
        }
    }
}

#[test]
fn cbwr_step_limit_forces_a_final_selection() {
    let cat = catalog(60);
    let insts = instances(&cat, 5, 4);
    let gw = gateway(ScriptedOracleConfig::faithful(), &insts);
    let emb = label_embeddings(&cat);
    let c = ReductionConfig {
        steps: 1,
        ..cfg(Strategy::Cbwr)
    };
    let (windows, calls) = cbwr_schedule(60, 5, 5, 4, 1);
    assert_eq!(windows, vec![20, 45]);
    for inst in &insts {
        let r = reduce_cbwr(&inst.text, &cat.ids(), &c, &gw, &emb).unwrap();
        assert_eq!(r.calls, calls);
        assert!(r.reduced.contains(&inst.gold));
    }
}

#[test]
fn cbwr_faithful_gold_preserved_across_seeds() {
    let cat = catalog(60);
    let insts = instances(&cat, 10, 5);
    let gw = gateway(ScriptedOracleConfig::faithful(), &insts);
    let emb = label_embeddings(&cat);
    for seed in 0..20 {
        for inst in &insts {
            let c = ReductionConfig {
                seed,
                ..cfg(Strategy::Cbwr)
            };
            let r = reduce_cbwr(&inst.text, &cat.ids(), &c, &gw, &emb).unwrap();
            assert!(r.reduced.contains(&inst.gold));
        }
    }
}

#[test]
fn reductions_are_deterministic() {
    let cat = catalog(60);
    let insts = instances(&cat, 10, 6);
    let gw = gateway(ScriptedOracleConfig::default(), &insts);
    let emb = label_embeddings(&cat);
    for s in Strategy::ALL {
        for inst in &insts {
            let a = reduce(&inst.text, &cat.ids(), &cfg(s), &gw, Some(&emb)).unwrap();
            let b = reduce(&inst.text, &cat.ids(), &cfg(s), &gw, Some(&emb)).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn iterative_strategies_beat_a_single_call_under_a_biased_oracle() {
    let cat = catalog(60);
    let insts = instances(&cat, 500, 7);
    let oc = ScriptedOracleConfig {
        position_bias: vec![0.8, 0.6, 0.4, 0.2],
        ..Default::default()
    };
    let gw = gateway(oc, &insts);
    let emb = label_embeddings(&cat);
    let golds: Vec<LabelId> = insts.iter().map(|i| i.gold.clone()).collect();
    let hit = |s: Strategy| {
        let sets: Vec<Vec<LabelId>> = insts
            .iter()
            .map(|i| {
                let c = ReductionConfig {
                    seed: i.id as u64,
                    ..cfg(s)
                };
                reduce(&i.text, &cat.ids(), &c, &gw, Some(&emb)).unwrap().reduced
            })
            .collect();
        hit_at_k(&sets, &golds, 5).unwrap()
    };
    let standard = hit(Strategy::Standard);
    let itr = hit(Strategy::Itr);
    let cbwr = hit(Strategy::Cbwr);
    assert!(itr > standard, "itr {itr} vs standard {standard}");
    assert!(cbwr > standard, "cbwr {cbwr} vs standard {standard}");
}
