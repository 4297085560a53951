//! Infer a vector for a held-out word by summing its context vectors, with
//! and without position, frequency and negative-sampling corrections.

use std::collections::HashSet;

use fewvec::corpus::NegativeDistribution;
use fewvec::embedstore::{rank_of, EmbeddingSpace};
use fewvec::fewshot::{AdditiveOptions, ContextEncoder};
use fewvec::sgns::{train_background, TrainMode};
use fewvec::synthetic::{Suite, SuiteConfig};

fn main() -> fewvec::Result<()> {
    let cfg = SuiteConfig::default();
    let suite = Suite::generate(&cfg)?;
    let model = train_background(&suite.corpus, &cfg.train_params(TrainMode::Standard))?;
    let space: EmbeddingSpace = model.to_space(false)?;
    let dist = NegativeDistribution::from_counts(space.counts())?;

    for (name, opts) in [
        ("plain", AdditiveOptions::plain()),
        ("windowed", AdditiveOptions::windowed()),
        ("weighted", AdditiveOptions::weighted()),
    ] {
        let enc = ContextEncoder::new(&space, &opts, Some(&dist))?;
        let mut ranks = Vec::new();
        for item in &suite.dn.items {
            let v = enc.infer(&item.episode)?;
            ranks.push(rank_of(&space, v.view(), &item.gold, &HashSet::new())?);
        }
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64;
        println!("{name:<9} MRR {mrr:.3} over {} items", ranks.len());
    }
    Ok(())
}
