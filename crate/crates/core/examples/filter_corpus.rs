//! Remove every token that shares a stem with a test word, keeping an allow-list.

use std::collections::HashSet;

use fewvec::corpus::{filter_corpus, snowball_stem, Corpus};

fn main() {
    let corpus = Corpus::from_lines([
        "the runner was running past other runners",
        "she runs every morning before work",
        "a quiet morning with coffee",
        "he walked home after the run",
    ]);
    let test: HashSet<String> = ["run".to_string()].into();
    println!("stem(run) = {}", snowball_stem("run"));

    let (out, stats) = filter_corpus(&corpus, &test, &HashSet::new());
    for s in &out.sentences {
        println!("  {}", s.join(" "));
    }
    println!(
        "removed {} of {} tokens ({:.1}%)",
        stats.tokens_removed,
        stats.tokens_total,
        100.0 * stats.fraction()
    );

    // `runs` shares the stem but is explicitly kept.
    let keep: HashSet<String> = ["runs".to_string()].into();
    let (kept, _) = filter_corpus(&corpus, &test, &keep);
    println!("with keep-list: {}", kept.sentences[1].join(" "));
}
