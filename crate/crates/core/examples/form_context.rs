//! Combine a subword (form) estimate with a context estimate through a
//! learned gate, and compare each path on held-out words.

use std::collections::HashSet;

use fewvec::embedstore::rank_of;
use fewvec::fewshot::{
    build_training_pairs, fcm_infer, fit_alc_linear, fit_fcm, fit_form_model, AdditiveOptions, ContextEncoder,
    ContextMap, FcmFitConfig, FormFitConfig, Gate, GateMode,
};
use fewvec::sgns::{train_background, TrainMode};
use fewvec::synthetic::{Suite, SuiteConfig};

fn main() -> fewvec::Result<()> {
    let cfg = SuiteConfig::default();
    let suite = Suite::generate(&cfg)?;
    let space = train_background(&suite.corpus, &cfg.train_params(TrainMode::Standard))?.to_space(false)?;
    let opts = AdditiveOptions::plain();

    let form = fit_form_model(
        &space,
        &FormFitConfig {
            min_count: 5,
            epochs: 100,
            ..FormFitConfig::default()
        },
    )?;
    let pairs = build_training_pairs(&suite.corpus, &space, &opts, None, 5)?;
    let context = ContextMap::Linear(fit_alc_linear(&pairs, 1e-2, true)?);
    let enc = ContextEncoder::new(&space, &opts, None)?;

    for mode in [GateMode::Fixed, GateMode::Gated] {
        let fit = FcmFitConfig {
            mode,
            ..FcmFitConfig::default()
        };
        let fcm = fit_fcm(&pairs, form.clone(), context.clone(), &fit)?;
        if let Gate::Fixed(a) = fcm.gate {
            println!("fixed gate: alpha = {a:.3}");
        }
        let mut rr = [0.0; 3];
        let n = suite.dn.items.len() as f64;
        for item in &suite.dn.items {
            let none = HashSet::new();
            let vs = [
                form.infer(&item.episode.target)?,
                context.apply(enc.infer_mean(&item.episode)?.view())?,
                fcm_infer(&item.episode.target, &item.episode, &fcm, &enc)?,
            ];
            for (acc, v) in rr.iter_mut().zip(&vs) {
                *acc += 1.0 / rank_of(&space, v.view(), &item.gold, &none)? as f64 / n;
            }
        }
        println!(
            "{mode:?}: MRR form {:.3}  context {:.3}  combined {:.3}",
            rr[0], rr[1], rr[2]
        );
    }
    Ok(())
}
