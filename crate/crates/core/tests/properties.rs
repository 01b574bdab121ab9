use std::collections::HashSet;

use lexsimp_core::control_tokens::TokenValue;
use lexsimp_core::corpus::{
    aggregate_gold, parse_instance, split_dataset, GoldEntry, Instance, InstanceFormat, Language, SplitSpec,
};
use lexsimp_core::generation::postfilter;
use lexsimp_core::metrics::{evaluate_all, normalize_term, GoldView};
use lexsimp_core::token_search::TokenValueSet;
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "cause", "Cause", "aim", "reason", "goal.", "AIM", "purpose", "motive", "object",
    ])
    .prop_map(String::from)
}

fn gold_list() -> impl Strategy<Value = Vec<(String, u32)>> {
    prop::collection::vec((word(), 1u32..6), 1..8).prop_filter_map("unique normalized gold", |v| {
        let mut seen = HashSet::new();
        let unique: Vec<_> = v.into_iter().filter(|(w, _)| seen.insert(normalize_term(w))).collect();
        Some(unique)
    })
}

fn view(gold: &[(String, u32)]) -> GoldView {
    GoldView::from_counts(gold.iter().map(|(s, c)| (s.as_str(), *c))).unwrap()
}

fn instances(n: usize) -> Vec<Instance> {
    (0..n)
        .map(|i| {
            Instance::new(
                format!("en-{i}"),
                Language::En,
                &format!("word{i} here"),
                &format!("word{i}"),
                vec![GoldEntry::new("x", 1)],
            )
            .unwrap()
        })
        .collect()
}

proptest! {
    #[test]
    fn aggregated_counts_sum_to_annotations(raw in prop::collection::vec(word(), 1..40)) {
        let gold = aggregate_gold(&raw).unwrap();
        prop_assert_eq!(gold.iter().map(|g| g.count as usize).sum::<usize>(), raw.len());
        prop_assert!(gold.windows(2).all(|w| w[0].count >= w[1].count));
        let keys: HashSet<_> = gold.iter().map(|g| normalize_term(&g.substitute)).collect();
        prop_assert_eq!(keys.len(), gold.len());
    }

    #[test]
    fn aggregated_round_trip(raw in prop::collection::vec(word(), 1..20)) {
        let mut line = "The motive was unclear.\tmotive".to_string();
        for w in &raw {
            line.push('\t');
            line.push_str(w);
        }
        let raw_instance = parse_instance(&line, InstanceFormat::TsarRaw, Language::En, 1).unwrap();
        let text = raw_instance.to_tsar_aggregated();
        let back = parse_instance(&text, InstanceFormat::TsarAggregated, Language::En, 1).unwrap();
        prop_assert_eq!(back, raw_instance);
    }

    #[test]
    fn split_is_a_partition(n in 1usize..120, seed in any::<u64>(), val in 0.0f64..0.4, test in 0.0f64..0.4) {
        let data = instances(n);
        let spec = SplitSpec::new(1.0 - val - test, val, test, seed);
        let split = split_dataset(&data, &spec).unwrap();
        let (a, b, c) = spec.sizes(n);
        prop_assert_eq!((split.train.len(), split.validation.len(), split.test.len()), (a, b, c));
        let mut ids: Vec<_> = split.train.iter().chain(&split.validation).chain(&split.test).map(|i| i.id.clone()).collect();
        ids.sort();
        let mut expected: Vec<_> = data.iter().map(|i| i.id.clone()).collect();
        expected.sort();
        prop_assert_eq!(ids, expected);
        prop_assert_eq!(split_dataset(&data, &spec).unwrap(), split);
    }

    #[test]
    fn postfilter_is_idempotent(raw in prop::collection::vec(word(), 0..20), limit in 0usize..12) {
        let once = postfilter(&raw, "motive", limit);
        prop_assert!(once.len() <= limit);
        prop_assert!(!once.iter().any(|c| normalize_term(c) == "motive"));
        prop_assert_eq!(postfilter(&once, "motive", limit), once);
    }

    #[test]
    fn quantize_lands_on_grid(raw in 0.0f64..50.0) {
        let v = TokenValue::quantize(raw).unwrap();
        prop_assert!(v >= TokenValue::MIN && v <= TokenValue::MAX);
        prop_assert_eq!(v.to_string().parse::<TokenValue>().unwrap(), v);
        if (0.5..=2.0).contains(&raw) {
            prop_assert!((v.as_f64() - raw).abs() <= 0.025 + 1e-9);
        }
    }

    #[test]
    fn grid_index_round_trip(index in 0u32..lexsimp_core::token_search::GRID_SIZE) {
        let set = TokenValueSet::from_grid_index(index);
        prop_assert!(set.is_on_search_grid());
        prop_assert_eq!(set.grid_index(), index);
    }

    #[test]
    fn metrics_ignore_instance_order(cases in prop::collection::vec((prop::collection::vec(word(), 0..10), gold_list()), 1..8)) {
        let (predictions, gold): (Vec<_>, Vec<_>) = cases.iter().cloned().unzip();
        let views: Vec<_> = gold.iter().map(|g| view(g)).collect();
        let report = evaluate_all(&predictions, &views).unwrap();
        let mut rp = predictions.clone();
        let mut rv = views.clone();
        rp.reverse();
        rv.reverse();
        prop_assert_eq!(evaluate_all(&rp, &rv).unwrap(), report);
    }

    #[test]
    fn appending_beyond_cutoff_changes_nothing(preds in prop::collection::vec(word(), 10..12), gold in gold_list(), extra in prop::collection::vec(word(), 1..5)) {
        let views = vec![view(&gold)];
        let base = evaluate_all(std::slice::from_ref(&preds), &views).unwrap();
        let mut longer = preds.clone();
        longer.extend(extra);
        prop_assert_eq!(evaluate_all(&[longer], &views).unwrap(), base);
    }

    #[test]
    fn surface_variants_score_the_same(preds in prop::collection::vec(word(), 0..10), gold in gold_list()) {
        let views = vec![view(&gold)];
        let shouted: Vec<String> = preds.iter().map(|p| format!("  {}!", p.to_uppercase())).collect();
        prop_assert_eq!(
            evaluate_all(&[shouted], &views).unwrap(),
            evaluate_all(&[preds], &views).unwrap()
        );
    }
}
