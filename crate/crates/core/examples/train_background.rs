//! Train skip-gram vectors on a two-topic toy corpus and inspect neighbours.

use std::collections::HashSet;

use fewvec::embedstore::neighbors;
use fewvec::sgns::{mean_cosine, train_background, TrainParams};
use fewvec::synthetic::two_cluster_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = two_cluster_corpus(5000, 10, 1);
    let params = TrainParams {
        dim: 20,
        epochs: 5,
        min_count: 1,
        subsample: None,
        seed: 3,
        ..TrainParams::default()
    };
    let model = train_background(&corpus, &params)?;
    let space = model.to_space(false)?;

    let a = ["a1", "a2", "a3", "a4", "a5"];
    let b = ["b1", "b2", "b3", "b4", "b5"];
    println!("within a: {:.3}", mean_cosine(&space, &a, &a)?);
    println!("a vs b:   {:.3}", mean_cosine(&space, &a, &b)?);

    let query = space.vector("a1").expect("trained word");
    let skip: HashSet<String> = ["a1".to_string()].into();
    for (w, cos) in &neighbors(&space, query, 4, &skip)?.entries {
        println!("  {w:<4} {cos:.3}");
    }

    let dir = std::env::temp_dir().join("fewvec-train-background");
    std::fs::create_dir_all(&dir)?;
    model.save(dir.join("toy.vec"), dir.join("toy.counts"))?;
    println!("saved to {}", dir.display());
    Ok(())
}
