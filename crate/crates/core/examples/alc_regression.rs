//! Learn a linear map from averaged context vectors to word vectors, then use
//! it to embed a word seen in only two sentences.

use std::collections::HashSet;

use fewvec::corpus::{Episode, PLACEHOLDER};
use fewvec::embedstore::neighbors;
use fewvec::fewshot::{alc_infer, build_training_pairs, fit_alc_linear, AdditiveOptions, ContextMap};
use fewvec::sgns::{train_background, TrainMode};
use fewvec::synthetic::{Suite, SuiteConfig};

fn main() -> fewvec::Result<()> {
    let cfg = SuiteConfig::default();
    let suite = Suite::generate(&cfg)?;
    let space = train_background(&suite.corpus, &cfg.train_params(TrainMode::Standard))?.to_space(false)?;
    let opts = AdditiveOptions::plain();

    let pairs = build_training_pairs(&suite.corpus, &space, &opts, None, 5)?;
    let map = fit_alc_linear(&pairs, 1e-2, true)?;
    println!("fitted on {} words, dim {}", pairs.len(), pairs.dim());

    // Borrow two sentences from the first topic and hide a new word in them.
    let topic = &suite.topics[0];
    let lines = [
        format!("{} {} {PLACEHOLDER} {}", topic[0], topic[5], topic[10]),
        format!("{PLACEHOLDER} {} {} {}", topic[15], topic[20], topic[1]),
    ];
    let ep = Episode::from_lines("newword", &lines)?;
    let v = alc_infer(&ep, &space, &opts, &ContextMap::Linear(map), None)?;
    println!("neighbours of the inferred vector:");
    for (w, cos) in &neighbors(&space, v.view(), 5, &HashSet::new())?.entries {
        println!("  {w:<10} {cos:.3}");
    }
    Ok(())
}
