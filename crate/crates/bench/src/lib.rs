//! Shared fixtures for the benchmarks.

use lexsimp_core::corpus::{GoldEntry, Instance, Language};

/// `n` instances over a fixed sentence template, each with `gold` substitutes.
pub fn synthetic_instances(n: usize, gold: usize) -> Vec<Instance> {
    (0..n)
        .map(|i| {
            let sentence = format!("sentence {i} has a rather perplexing target word inside it");
            let entries = (0..gold)
                .map(|g| GoldEntry::new(format!("sub{g}"), (gold - g) as u32))
                .collect();
            Instance::new(format!("en-{i}"), Language::En, &sentence, "perplexing", entries).unwrap()
        })
        .collect()
}
