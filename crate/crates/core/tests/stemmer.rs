//! Porter2 stems checked against a frozen table produced by NLTK's
//! `SnowballStemmer("english")` over ~8000 words.

use fewvec::corpus::snowball_stem;

#[test]
fn matches_reference_table() {
    let table = include_str!("data/porter2_nltk.tsv");
    let mut mismatches = Vec::new();
    let mut n = 0;
    for line in table.lines() {
        let (word, stem) = line.split_once('\t').unwrap();
        n += 1;
        let got = snowball_stem(word);
        if got != stem {
            mismatches.push(format!("{word}: want {stem}, got {got}"));
        }
    }
    assert!(n > 5000);
    assert!(
        mismatches.is_empty(),
        "{} mismatches:\n{}",
        mismatches.len(),
        mismatches.join("\n")
    );
}
