//! Generate the synthetic benchmark, fit the learned maps through the CLI and
//! score a few methods on every task.

use fewvec::cli::dispatch_with;
use fewvec::eval::EvalReport;
use fewvec::synthetic::{build_suite, SuiteConfig};

fn run(args: &[String]) -> i32 {
    let argv = ["fewvec", "--quiet"]
        .iter()
        .map(|s| s.to_string())
        .chain(args.iter().cloned());
    dispatch_with(argv, &mut std::io::sink())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile_dir()?;
    let (_, p) = build_suite(&SuiteConfig::default(), &dir)?;
    let s = |x: &std::path::Path| x.display().to_string();
    let space = [s(&p.vectors), s(&p.counts)];
    let map = s(&dir.join("alc.json"));

    let fit = [
        "fit-alc",
        "--embeddings",
        &space[0],
        "--counts",
        &space[1],
        "--corpus",
        &s(&p.corpus),
        "--min-count",
        "5",
        "--out",
        &map,
    ];
    assert_eq!(run(&fit.map(String::from)), 0);

    let tasks = [
        ("dn", vec!["--data".to_string(), s(&p.dn)]),
        ("chimera", vec!["--data".to_string(), s(&p.chimera)]),
        (
            "crw",
            vec![
                "--data".to_string(),
                s(&p.crw_pairs),
                "--contexts".into(),
                s(&p.crw_contexts),
            ],
        ),
    ];
    for method in ["additive", "alc", "w2v-selective"] {
        for (task, data) in &tasks {
            let out = s(&dir.join(format!("{method}-{task}.json")));
            let mut a: Vec<String> = [
                "eval", "--task", task, "--method", method, "--epochs", "1", "--out", &out,
            ]
            .map(String::from)
            .to_vec();
            a.extend([
                "--embeddings".into(),
                space[0].clone(),
                "--counts".into(),
                space[1].clone(),
            ]);
            a.extend(["--context-map".into(), map.clone()]);
            a.extend(data.iter().cloned());
            if run(&a) != 0 {
                println!("{method:<14} {task:<8} failed");
                continue;
            }
            let r = EvalReport::load(&out)?;
            let agg: Vec<String> = r.aggregates.iter().map(|(k, v)| format!("{k}={v:.3}")).collect();
            println!("{method:<14} {task:<8} {}", agg.join(" "));
        }
    }
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join("fewvec-benchmark");
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
