//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fewvec::cli::dispatch_with;
use fewvec::eval::MethodId;
use fewvec::synthetic::SuitePaths;

pub fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

pub fn cli(args: &[String]) -> (i32, String) {
    let mut argv = vec!["fewvec".to_string(), "--quiet".to_string()];
    argv.extend_from_slice(args);
    let mut out = Vec::new();
    let code = dispatch_with(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

pub fn args(list: &[&str]) -> Vec<String> {
    list.iter().map(|a| a.to_string()).collect()
}

pub struct Fitted {
    pub linear: PathBuf,
    pub neural: PathBuf,
    pub form: PathBuf,
    pub fcm: PathBuf,
    pub fcm_neural: PathBuf,
}

pub fn fit_all(p: &SuitePaths) -> Fitted {
    let d = &p.dir;
    let f = Fitted {
        linear: d.join("alc.map"),
        neural: d.join("alc_neural.map"),
        form: d.join("form.model"),
        fcm: d.join("fcm.model"),
        fcm_neural: d.join("fcm_neural.model"),
    };
    let space = [
        "--embeddings".to_string(),
        s(&p.vectors),
        "--counts".to_string(),
        s(&p.counts),
    ];
    let mut a = args(&[
        "fit-alc",
        "--corpus",
        &s(&p.corpus),
        "--min-count",
        "5",
        "--out",
        &s(&f.linear),
    ]);
    a.extend_from_slice(&space);
    assert_eq!(cli(&a).0, 0);
    let mut a = args(&[
        "fit-alc",
        "--corpus",
        &s(&p.corpus),
        "--min-count",
        "5",
        "--neural",
        "--hidden",
        "64",
        "--out",
        &s(&f.neural),
    ]);
    a.extend_from_slice(&space);
    assert_eq!(cli(&a).0, 0);
    let mut a = args(&["fit-form", "--min-count", "5", "--out", &s(&f.form)]);
    a.extend_from_slice(&space);
    assert_eq!(cli(&a).0, 0);
    for (map, out) in [(&f.linear, &f.fcm), (&f.neural, &f.fcm_neural)] {
        let mut a = args(&[
            "fit-fcm",
            "--corpus",
            &s(&p.corpus),
            "--form",
            &s(&f.form),
            "--context-map",
            &s(map),
            "--min-count",
            "5",
            "--out",
            &s(out),
        ]);
        a.extend_from_slice(&space);
        assert_eq!(cli(&a).0, 0);
    }
    f
}

pub fn method_args(m: MethodId, p: &SuitePaths, f: &Fitted) -> Vec<String> {
    let subword = m.train_mode().is_some_and(|t| t.uses_subwords());
    let (v, c) = if subword {
        (&p.ft_vectors, &p.ft_counts)
    } else {
        (&p.vectors, &p.counts)
    };
    let mut a = args(&[
        "--method",
        m.as_str(),
        "--embeddings",
        &s(v),
        "--counts",
        &s(c),
        "--epochs",
        "1",
    ]);
    let extra: Vec<String> = match m {
        MethodId::Alc => args(&["--context-map", &s(&f.linear)]),
        MethodId::AlcNeural => args(&["--context-map", &s(&f.neural)]),
        MethodId::Form => args(&["--form", &s(&f.form)]),
        MethodId::Fcm => args(&["--fcm", &s(&f.fcm)]),
        MethodId::FcmNeural => args(&["--fcm", &s(&f.fcm_neural)]),
        MethodId::Oracle => args(&["--gold", &s(&p.gold_vectors), "--gold-counts", &s(&p.gold_counts)]),
        _ => Vec::new(),
    };
    a.extend(extra);
    a
}
