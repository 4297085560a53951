//! Inference methods behind one interface, selected by id.

use std::collections::HashSet;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::corpus::{Episode, NegativeDistribution, StemIndex};
use crate::embedstore::EmbeddingSpace;
use crate::error::{Error, Result};
use crate::fewshot::{fcm_infer, stem_infer, AdditiveOptions, ContextEncoder, ContextMap, FcmModel, FormModel};
use crate::sgns::{fewshot_update, SgnsModel, TrainMode, TrainParams};

/// Produces a vector for an episode's target.
pub trait Method: Sync {
    fn id(&self) -> &str;
    fn infer(&self, episode: &Episode) -> Result<Array1<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodId {
    Additive,
    Alc,
    AlcNeural,
    Form,
    Fcm,
    FcmNeural,
    Stem,
    W2v,
    W2vSelective,
    Nonce2vec,
    Fasttext,
    FasttextSelective,
    /// Returns the gold vector; a ceiling for sanity checks.
    Oracle,
}

impl MethodId {
    pub const ALL: [MethodId; 13] = [
        MethodId::Additive,
        MethodId::Alc,
        MethodId::AlcNeural,
        MethodId::Form,
        MethodId::Fcm,
        MethodId::FcmNeural,
        MethodId::Stem,
        MethodId::W2v,
        MethodId::W2vSelective,
        MethodId::Nonce2vec,
        MethodId::Fasttext,
        MethodId::FasttextSelective,
        MethodId::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Additive => "additive",
            MethodId::Alc => "alc",
            MethodId::AlcNeural => "alc-neural",
            MethodId::Form => "form",
            MethodId::Fcm => "fcm",
            MethodId::FcmNeural => "fcm-neural",
            MethodId::Stem => "stem",
            MethodId::W2v => "w2v",
            MethodId::W2vSelective => "w2v-selective",
            MethodId::Nonce2vec => "nonce2vec",
            MethodId::Fasttext => "fasttext",
            MethodId::FasttextSelective => "fasttext-selective",
            MethodId::Oracle => "oracle",
        }
    }

    /// Continued-training mode for the SGNS-based methods.
    pub fn train_mode(self) -> Option<TrainMode> {
        Some(match self {
            MethodId::W2v => TrainMode::Standard,
            MethodId::W2vSelective => TrainMode::Selective,
            MethodId::Nonce2vec => TrainMode::Nonce2vec,
            MethodId::Fasttext => TrainMode::Fasttext,
            MethodId::FasttextSelective => TrainMode::FasttextSelective,
            _ => return None,
        })
    }

    pub fn is_form_only(self) -> bool {
        self == MethodId::Form
    }

    pub fn uses_context_map(self) -> bool {
        matches!(self, MethodId::Alc | MethodId::AlcNeural)
    }

    pub fn uses_fcm(self) -> bool {
        matches!(self, MethodId::Fcm | MethodId::FcmNeural)
    }
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Everything a method may need; unused fields stay `None`.
#[derive(Clone)]
pub struct Resources<'a> {
    pub space: &'a EmbeddingSpace,
    pub dist: Option<&'a NegativeDistribution>,
    pub opts: AdditiveOptions,
    pub model: Option<&'a SgnsModel>,
    pub train: TrainParams,
    pub context_map: Option<&'a ContextMap>,
    pub form: Option<&'a FormModel>,
    pub fcm: Option<&'a FcmModel>,
    pub stems: Option<&'a StemIndex>,
    /// Gold vectors for the oracle; defaults to `space`.
    pub gold: Option<&'a EmbeddingSpace>,
}

impl<'a> Resources<'a> {
    pub fn new(space: &'a EmbeddingSpace) -> Self {
        Resources {
            space,
            dist: None,
            opts: AdditiveOptions::default(),
            model: None,
            train: TrainParams::default(),
            context_map: None,
            form: None,
            fcm: None,
            stems: None,
            gold: None,
        }
    }
}

fn need<T>(v: Option<T>, what: &str, id: MethodId) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("method `{id}` needs {what}")))
}

struct Additive<'a> {
    enc: ContextEncoder<'a>,
}

impl Method for Additive<'_> {
    fn id(&self) -> &str {
        "additive"
    }

    fn infer(&self, episode: &Episode) -> Result<Array1<f64>> {
        self.enc.infer(episode)
    }
}

struct Alc<'a> {
    id: MethodId,
    enc: ContextEncoder<'a>,
    map: &'a ContextMap,
}

impl Method for Alc<'_> {
    fn id(&self) -> &str {
        self.id.as_str()
    }

    fn infer(&self, episode: &Episode) -> Result<Array1<f64>> {
        self.map.apply(self.enc.infer_mean(episode)?.view())
    }
}

struct Form<'a> {
    form: &'a FormModel,
}

impl Method for Form<'_> {
    fn id(&self) -> &str {
        "form"
    }

    fn infer(&self, episode: &Episode) -> Result<Array1<f64>> {
        self.form.infer(&episode.target)
    }
}

struct Fcm<'a> {
    id: MethodId,
    enc: ContextEncoder<'a>,
    fcm: &'a FcmModel,
}

impl Method for Fcm<'_> {
    fn id(&self) -> &str {
        self.id.as_str()
    }

    fn infer(&self, episode: &Episode) -> Result<Array1<f64>> {
        fcm_infer(&episode.target, episode, self.fcm, &self.enc)
    }
}

struct Stem<'a> {
    space: &'a EmbeddingSpace,
    stems: &'a StemIndex,
}

impl Method for Stem<'_> {
    fn id(&self) -> &str {
        "stem"
    }

    /// The target itself never counts as its own stem neighbour.
    fn infer(&self, episode: &Episode) -> Result<Array1<f64>> {
        let ex: HashSet<String> = [episode.target.clone()].into();
        stem_infer(&episode.target, self.space, self.stems, &ex)
    }
}

struct Continued<'a> {
    id: MethodId,
    model: &'a SgnsModel,
    params: TrainParams,
}

impl Method for Continued<'_> {
    fn id(&self) -> &str {
        self.id.as_str()
    }

    /// Each episode trains a private copy of the background model.
    fn infer(&self, episode: &Episode) -> Result<Array1<f64>> {
        let mut m = self.model.clone();
        fewshot_update(&mut m, episode, &self.params)
    }
}

struct Oracle<'a> {
    gold: &'a EmbeddingSpace,
}

impl Method for Oracle<'_> {
    fn id(&self) -> &str {
        "oracle"
    }

    fn infer(&self, episode: &Episode) -> Result<Array1<f64>> {
        self.gold
            .vector(&episode.target)
            .map(|v| v.to_owned())
            .ok_or_else(|| Error::UnknownWord(episode.target.clone()))
    }
}

/// Instantiate a method from shared resources.
pub fn build<'a>(id: MethodId, res: &Resources<'a>) -> Result<Box<dyn Method + 'a>> {
    let space = res.space;
    let encoder = || ContextEncoder::new(space, &res.opts, res.dist);
    Ok(match id {
        MethodId::Additive => Box::new(Additive { enc: encoder()? }),
        MethodId::Alc | MethodId::AlcNeural => {
            let map = need(res.context_map, "a fitted context map", id)?;
            let neural = matches!(map, ContextMap::Neural(_));
            if neural != (id == MethodId::AlcNeural) {
                return Err(Error::Config(format!(
                    "method `{id}` got a {} context map",
                    if neural { "neural" } else { "linear" }
                )));
            }
            dim_check(space.dim(), map.input_dim())?;
            dim_check(space.dim(), map.output_dim())?;
            Box::new(Alc {
                id,
                enc: encoder()?,
                map,
            })
        }
        MethodId::Form => {
            let form = need(res.form, "a fitted form model", id)?;
            dim_check(space.dim(), form.dim())?;
            Box::new(Form { form })
        }
        MethodId::Fcm | MethodId::FcmNeural => {
            let fcm = need(res.fcm, "a fitted form-context model", id)?;
            dim_check(space.dim(), fcm.dim())?;
            dim_check(space.dim(), fcm.context.input_dim())?;
            Box::new(Fcm {
                id,
                enc: encoder()?,
                fcm,
            })
        }
        MethodId::Stem => Box::new(Stem {
            space,
            stems: need(res.stems, "a stem index", id)?,
        }),
        MethodId::Oracle => Box::new(Oracle {
            gold: res.gold.unwrap_or(space),
        }),
        _ => {
            let model = need(res.model, "a background SGNS model", id)?;
            dim_check(space.dim(), model.dim())?;
            let mut params = res.train.clone();
            params.mode = id.train_mode().expect("remaining ids are SGNS methods");
            if params.mode.uses_subwords() && model.ngrams.is_none() {
                return Err(Error::Config(format!(
                    "method `{id}` needs a model with n-gram buckets"
                )));
            }
            params.validate()?;
            Box::new(Continued { id, model, params })
        }
    })
}

fn dim_check(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
