//! English Snowball (Porter2) stemmer.
//!
//! The region bookkeeping follows NLTK's `SnowballStemmer("english")` rather
//! than the reference Snowball compiler output: when a suffix replacement
//! is longer than R1 or R2, that region collapses to empty (or to the final
//! `e` for the `-ate`/`-ive` rewrites). The two differ on a handful of words
//! such as `quantization`; matching NLTK keeps stem-filtered corpora
//! comparable with ones built in Python.

const SPECIAL_WORDS: &[(&str, &str)] = &[
    ("skis", "ski"),
    ("skies", "sky"),
    ("dying", "die"),
    ("lying", "lie"),
    ("tying", "tie"),
    ("idly", "idl"),
    ("gently", "gentl"),
    ("ugly", "ugli"),
    ("early", "earli"),
    ("only", "onli"),
    ("singly", "singl"),
    ("sky", "sky"),
    ("news", "news"),
    ("howe", "howe"),
    ("atlas", "atlas"),
    ("cosmos", "cosmos"),
    ("bias", "bias"),
    ("andes", "andes"),
    ("inning", "inning"),
    ("innings", "inning"),
    ("outing", "outing"),
    ("outings", "outing"),
    ("canning", "canning"),
    ("cannings", "canning"),
    ("herring", "herring"),
    ("herrings", "herring"),
    ("earring", "earring"),
    ("earrings", "earring"),
    ("proceed", "proceed"),
    ("proceeds", "proceed"),
    ("proceeded", "proceed"),
    ("proceeding", "proceed"),
    ("exceed", "exceed"),
    ("exceeds", "exceed"),
    ("exceeded", "exceed"),
    ("exceeding", "exceed"),
    ("succeed", "succeed"),
    ("succeeds", "succeed"),
    ("succeeded", "succeed"),
    ("succeeding", "succeed"),
];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Word under construction with R1/R2 start offsets.
struct Word {
    w: Vec<char>,
    p1: usize,
    p2: usize,
}

impl Word {
    fn len(&self) -> usize {
        self.w.len()
    }

    fn ends_with(&self, suffix: &str) -> bool {
        let n = suffix.chars().count();
        n <= self.w.len() && self.w[self.w.len() - n..].iter().copied().eq(suffix.chars())
    }

    fn longest<'a>(&self, list: &[&'a str]) -> Option<&'a str> {
        list.iter()
            .copied()
            .filter(|s| self.ends_with(s))
            .max_by_key(|s| s.len())
    }

    fn r1_has(&self, suffix: &str) -> bool {
        self.len() - self.p1.min(self.len()) >= suffix.len()
    }

    fn r2_has(&self, suffix: &str) -> bool {
        self.len() - self.p2.min(self.len()) >= suffix.len()
    }

    fn char_before(&self, suffix: &str) -> Option<char> {
        let start = self.len() - suffix.len();
        start.checked_sub(1).map(|i| self.w[i])
    }

    /// Drop the last `k` characters; regions shrink with the word.
    fn slice(&mut self, k: usize) {
        let n = self.len() - k;
        self.w.truncate(n);
        self.p1 = self.p1.min(n);
        self.p2 = self.p2.min(n);
    }

    /// Replace `suffix`; a region shorter than the suffix collapses.
    fn swap(&mut self, suffix: &str, with: &str, r2_keeps_e: bool) {
        let r1_ok = self.r1_has(suffix);
        let r2_ok = self.r2_has(suffix);
        self.w.truncate(self.len() - suffix.len());
        self.w.extend(with.chars());
        let n = self.len();
        if !r1_ok {
            self.p1 = n;
        }
        if !r2_ok {
            self.p2 = if r2_keeps_e { n - 1 } else { n };
        }
    }

    fn ends_short_syllable(&self) -> bool {
        let w = &self.w;
        let n = w.len();
        (n >= 3
            && !is_vowel(w[n - 1])
            && !matches!(w[n - 1], 'w' | 'x' | 'Y')
            && is_vowel(w[n - 2])
            && !is_vowel(w[n - 3]))
            || (n == 2 && is_vowel(w[0]) && !is_vowel(w[1]))
    }
}

fn region_after(w: &[char], from: usize) -> usize {
    (from + 1..w.len())
        .find(|&i| is_vowel(w[i - 1]) && !is_vowel(w[i]))
        .map_or(w.len(), |i| i + 1)
}

fn mark_regions(w: &[char]) -> (usize, usize) {
    let starts = |p: &str| w.len() >= p.len() && w[..p.len()].iter().copied().eq(p.chars());
    let p1 = ["gener", "commun", "arsen"]
        .iter()
        .find(|p| starts(p))
        .map(|p| p.len())
        .unwrap_or_else(|| region_after(w, 0));
    let p2 = if p1 < w.len() { region_after(w, p1) } else { w.len() };
    (p1, p2)
}

fn step_0(word: &mut Word) {
    if let Some(s) = word.longest(&["'s'", "'s", "'"]) {
        word.slice(s.len());
    }
}

fn step_1a(word: &mut Word) {
    match word.longest(&["sses", "ied", "ies", "us", "ss", "s"]) {
        Some("sses") => word.slice(2),
        Some(s @ ("ied" | "ies")) => {
            if word.len() - s.len() > 1 {
                word.slice(2);
            } else {
                word.slice(1);
            }
        }
        Some("s") => {
            let n = word.len();
            if n >= 2 && word.w[..n - 2].iter().any(|&c| is_vowel(c)) {
                word.slice(1);
            }
        }
        _ => {}
    }
}

fn step_1b(word: &mut Word) {
    let Some(s) = word.longest(&["eedly", "ingly", "edly", "eed", "ing", "ed"]) else {
        return;
    };
    if matches!(s, "eed" | "eedly") {
        if word.r1_has(s) {
            word.swap(s, "ee", false);
        }
        return;
    }
    let stem_len = word.len() - s.len();
    if !word.w[..stem_len].iter().any(|&c| is_vowel(c)) {
        return;
    }
    word.slice(s.len());
    if word.ends_with("at") || word.ends_with("bl") || word.ends_with("iz") {
        word.w.push('e');
        let n = word.len();
        let r1_len = n - word.p1.min(n);
        if !(n > 5 || r1_len >= 3) {
            word.p2 = n;
        }
    } else if ["bb", "dd", "ff", "gg", "mm", "nn", "pp", "rr", "tt"]
        .iter()
        .any(|d| word.ends_with(d))
    {
        word.slice(1);
    } else if word.p1 >= word.len() && word.ends_short_syllable() {
        word.w.push('e');
        word.p1 = word.len();
        word.p2 = word.len();
    }
}

fn step_1c(word: &mut Word) {
    let n = word.len();
    if n > 2 && matches!(word.w[n - 1], 'y' | 'Y') && !is_vowel(word.w[n - 2]) {
        word.w[n - 1] = 'i';
    }
}

fn step_2(word: &mut Word) {
    const SUFFIXES: &[&str] = &[
        "ization", "ational", "fulness", "ousness", "iveness", "tional", "biliti", "lessli", "entli", "ation", "alism",
        "aliti", "ousli", "iviti", "fulli", "enci", "anci", "abli", "izer", "ator", "alli", "bli", "ogi", "li",
    ];
    let Some(s) = word.longest(SUFFIXES) else {
        return;
    };
    if !word.r1_has(s) {
        return;
    }
    match s {
        "tional" | "entli" | "fulli" | "lessli" => word.slice(2),
        "fulness" => word.slice(4),
        "enci" | "anci" | "abli" => {
            let n = word.len();
            word.w[n - 1] = 'e';
        }
        "izer" | "ization" => word.swap(s, "ize", false),
        "ational" | "ation" | "ator" => word.swap(s, "ate", true),
        "alism" | "aliti" | "alli" => word.swap(s, "al", false),
        "ousli" | "ousness" => word.swap(s, "ous", false),
        "iveness" | "iviti" => word.swap(s, "ive", true),
        "biliti" | "bli" => word.swap(s, "ble", false),
        "ogi" => {
            if word.char_before(s) == Some('l') {
                word.slice(1);
            }
        }
        "li" => {
            if word.char_before(s).is_some_and(|c| "cdeghkmnrt".contains(c)) {
                word.slice(2);
            }
        }
        _ => unreachable!(),
    }
}

fn step_3(word: &mut Word) {
    const SUFFIXES: &[&str] = &[
        "ational", "tional", "alize", "icate", "iciti", "ative", "ical", "ness", "ful",
    ];
    let Some(s) = word.longest(SUFFIXES) else {
        return;
    };
    if !word.r1_has(s) {
        return;
    }
    match s {
        "tional" => word.slice(2),
        "ational" => word.swap(s, "ate", false),
        "alize" => word.slice(3),
        "icate" | "iciti" | "ical" => word.swap(s, "ic", false),
        "ful" | "ness" => word.slice(s.len()),
        "ative" => {
            if word.r2_has(s) {
                word.slice(5);
            }
        }
        _ => unreachable!(),
    }
}

fn step_4(word: &mut Word) {
    const SUFFIXES: &[&str] = &[
        "ement", "ance", "ence", "able", "ible", "ment", "ant", "ent", "ism", "ate", "iti", "ous", "ive", "ize", "ion",
        "al", "er", "ic",
    ];
    let Some(s) = word.longest(SUFFIXES) else {
        return;
    };
    if !word.r2_has(s) {
        return;
    }
    if s == "ion" && !matches!(word.char_before(s), Some('s' | 't')) {
        return;
    }
    word.slice(s.len());
}

fn step_5(word: &mut Word) {
    let n = word.len();
    let w = &word.w;
    if n == 0 {
        return;
    }
    let double_l = word.r2_has("l") && w[n - 1] == 'l' && n >= 2 && w[n - 2] == 'l';
    if double_l || (word.r2_has("e") && w[n - 1] == 'e') {
        word.w.pop();
    } else if word.r1_has("e") && w[n - 1] == 'e' {
        let short = n >= 4
            && !is_vowel(w[n - 4])
            && is_vowel(w[n - 3])
            && !is_vowel(w[n - 2])
            && !matches!(w[n - 2], 'w' | 'x' | 'Y');
        if n >= 4 && !short {
            word.w.pop();
        }
    }
}

/// Stem a lowercase token.
pub fn snowball_stem(token: &str) -> String {
    if token.chars().count() <= 2 {
        return token.to_string();
    }
    if let Some((_, stem)) = SPECIAL_WORDS.iter().find(|(w, _)| *w == token) {
        return stem.to_string();
    }
    let mut chars: Vec<char> = token
        .chars()
        .map(|c| {
            if matches!(c, '\u{2019}' | '\u{2018}' | '\u{201b}') {
                '\''
            } else {
                c
            }
        })
        .collect();
    if chars.first() == Some(&'\'') {
        chars.remove(0);
    }
    if chars.first() == Some(&'y') {
        chars[0] = 'Y';
    }
    for i in 1..chars.len() {
        if chars[i] == 'y' && is_vowel(chars[i - 1]) {
            chars[i] = 'Y';
        }
    }

    let (p1, p2) = mark_regions(&chars);
    let mut word = Word { w: chars, p1, p2 };
    step_0(&mut word);
    step_1a(&mut word);
    step_1b(&mut word);
    step_1c(&mut word);
    step_2(&mut word);
    step_3(&mut word);
    step_4(&mut word);
    step_5(&mut word);

    word.w.into_iter().map(|c| if c == 'Y' { 'y' } else { c }).collect()
}
