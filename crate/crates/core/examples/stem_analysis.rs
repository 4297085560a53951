//! How often do a word's nearest neighbours share its stem?

use fewvec::eval::stem_neighbor_proportions;
use fewvec::sgns::{train_background, TrainMode};
use fewvec::synthetic::{Suite, SuiteConfig};

fn main() -> fewvec::Result<()> {
    let cfg = SuiteConfig::default();
    let suite = Suite::generate(&cfg)?;
    let space = train_background(&suite.corpus, &cfg.train_params(TrainMode::Standard))?.to_space(false)?;
    let test: Vec<String> = suite.dn.items.iter().map(|i| i.gold.clone()).collect();
    for (k, p) in stem_neighbor_proportions(&space, &test, &[1, 2, 5, 10])? {
        println!(
            "k={k:<3} {:.1}% of test words have a same-stem word among their top-k",
            100.0 * p
        );
    }
    Ok(())
}
