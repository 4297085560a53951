//! Embed a new word by continuing skip-gram training on its few contexts,
//! comparing full, selective and Nonce2Vec-style updates.

use std::collections::HashSet;

use fewvec::embedstore::rank_of;
use fewvec::sgns::{fewshot_update, train_background, TrainMode};
use fewvec::synthetic::{Suite, SuiteConfig};

fn main() -> fewvec::Result<()> {
    let cfg = SuiteConfig::default();
    let suite = Suite::generate(&cfg)?;
    let base = cfg.train_params(TrainMode::Standard);
    let model = train_background(&suite.corpus, &base)?;
    let space = model.to_space(false)?;

    for mode in [TrainMode::Standard, TrainMode::Selective, TrainMode::Nonce2vec] {
        let params = fewvec::sgns::TrainParams { mode, ..base.clone() };
        let mut ranks = Vec::new();
        for item in &suite.dn.items {
            // Each episode starts from an untouched copy of the background model.
            let mut m = model.clone();
            let v = fewshot_update(&mut m, &item.episode, &params)?;
            ranks.push(rank_of(&space, v.view(), &item.gold, &HashSet::new())?);
        }
        ranks.sort_unstable();
        println!(
            "{mode:?}: median rank {} of {}",
            ranks[(ranks.len() - 1) / 2],
            space.len()
        );
    }
    Ok(())
}
