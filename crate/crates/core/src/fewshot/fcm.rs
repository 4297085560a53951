//! Form-context hybrid: `α · v_context + (1 − α) · v_form`.
//!
//! Fitting is two-stage. The form model and the context map are taken as
//! given and only the mixing gate is learned.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{array, Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::form::FormModel;
use super::{ContextEncoder, ContextMap, TrainingPairSet};
use crate::corpus::Episode;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState};
use crate::textmat::{SectionReader, SectionWriter};

/// Logit bound keeping the gated α strictly inside (0, 1) in f64.
const LOGIT_BOUND: f64 = 30.0;

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z.clamp(-LOGIT_BOUND, LOGIT_BOUND)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    #[default]
    Fixed,
    Gated,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Fixed(f64),
    /// Weights over `[v_form; v_context]` and a bias.
    Gated {
        w: Array1<f64>,
        b: f64,
    },
}

impl Gate {
    pub fn alpha(&self, form: ArrayView1<'_, f64>, context: ArrayView1<'_, f64>) -> f64 {
        match self {
            Gate::Fixed(a) => *a,
            Gate::Gated { w, b } => {
                let d = form.len();
                let z = w.slice(ndarray::s![..d]).dot(&form) + w.slice(ndarray::s![d..]).dot(&context) + b;
                logistic(z)
            }
        }
    }
}

/// Convex combination; `α ∈ {0, 1}` returns an exact copy of one side.
pub fn combine(alpha: f64, form: ArrayView1<'_, f64>, context: ArrayView1<'_, f64>) -> Array1<f64> {
    if alpha == 1.0 {
        return context.to_owned();
    }
    if alpha == 0.0 {
        return form.to_owned();
    }
    let mut v = context.to_owned() * alpha;
    v.scaled_add(1.0 - alpha, &form);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmModel {
    pub form: FormModel,
    pub context: ContextMap,
    pub gate: Gate,
}

impl FcmModel {
    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let f = File::create(path).map_err(io)?;
        let mut s = SectionWriter::new(BufWriter::new(f));
        match &self.gate {
            Gate::Fixed(a) => s.matrix("gate-fixed", &array![[*a]]).map_err(io)?,
            Gate::Gated { w, b } => {
                let mut row = w.to_vec();
                row.push(*b);
                let n = row.len();
                let m = Array2::from_shape_vec((1, n), row).expect("one row");
                s.matrix("gate-gated", &m).map_err(io)?
            }
        }
        let w = self.form.write_sections(s.into_inner()).map_err(io)?;
        let mut w = self.context.write_sections(w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = SectionReader::new(BufReader::new(f), path);
        let g = r.section(false)?.ok_or_else(|| Error::Empty("missing gate".into()))?;
        let gate = match g.name.as_str() {
            "gate-fixed" if g.data.len() == 1 => Gate::Fixed(g.data[[0, 0]]),
            "gate-gated" if g.data.nrows() == 1 && g.data.ncols() >= 1 => {
                let row = g.data.row(0);
                let n = row.len() - 1;
                Gate::Gated {
                    w: row.slice(ndarray::s![..n]).to_owned(),
                    b: row[n],
                }
            }
            other => return Err(Error::Config(format!("unknown gate section `{other}`"))),
        };
        let form = FormModel::read_sections(&mut r)?;
        let context = ContextMap::read_sections(&mut r)?;
        let m = FcmModel { form, context, gate };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.form.dim();
        if self.context.output_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.context.output_dim(),
            });
        }
        match &self.gate {
            Gate::Fixed(a) if !(0.0..=1.0).contains(a) => {
                Err(Error::InvalidArgument(format!("fixed alpha {a} outside [0, 1]")))
            }
            Gate::Gated { w, .. } if w.len() != 2 * d => Err(Error::DimensionMismatch {
                expected: 2 * d,
                actual: w.len(),
            }),
            _ => Ok(()),
        }
    }

    /// Combine precomputed paths, falling back to whichever one exists.
    pub fn combine_paths(&self, form: Result<Array1<f64>>, context: Result<Array1<f64>>) -> Result<Array1<f64>> {
        match (form, context) {
            (Ok(f), Ok(c)) => Ok(combine(self.gate.alpha(f.view(), c.view()), f.view(), c.view())),
            (Err(_), Ok(c)) => Ok(c),
            (Ok(f), Err(_)) => Ok(f),
            (Err(fe), Err(ce)) => Err(Error::Degenerate(format!("form path: {fe}; context path: {ce}"))),
        }
    }
}

/// `α·context + (1-α)·form` with the context path from the encoder and map, the form path from `word`.
pub fn fcm_infer(word: &str, episode: &Episode, fcm: &FcmModel, encoder: &ContextEncoder<'_>) -> Result<Array1<f64>> {
    let form = fcm.form.infer(word);
    let context = encoder.infer_mean(episode).and_then(|x| fcm.context.apply(x.view()));
    fcm.combine_paths(form, context)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcmFitConfig {
    pub mode: GateMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for FcmFitConfig {
    fn default() -> Self {
        FcmFitConfig {
            mode: GateMode::Fixed,
            epochs: 200,
            batch_size: 64,
            seed: 1,
            adam: AdamConfig {
                rate: 0.1,
                ..AdamConfig::default()
            },
        }
    }
}

/// Fit the gate by minimizing the mean squared error of the combination.
///
/// Pairs whose word has no known n-gram are skipped.
pub fn fit_fcm(pairs: &TrainingPairSet, form: FormModel, context: ContextMap, cfg: &FcmFitConfig) -> Result<FcmModel> {
    let d = form.dim();
    if context.output_dim() != d || context.input_dim() != pairs.dim() {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: context.output_dim(),
        });
    }
    let mut fs = Vec::new();
    let mut cs = Vec::new();
    let mut gs = Vec::new();
    for (i, w) in pairs.words.iter().enumerate() {
        let Ok(f) = form.infer(w) else { continue };
        fs.push(f);
        cs.push(context.apply(pairs.x.row(i))?);
        gs.push(pairs.y.row(i).to_owned());
    }
    if fs.is_empty() {
        return Err(Error::Empty("no training pair has a usable form vector".into()));
    }
    let gate = fit_gate(&fs, &cs, &gs, cfg)?;
    Ok(FcmModel { form, context, gate })
}

/// Fit the gate. A fixed α has a closed-form minimizer (the loss is quadratic
/// in α), clamped to `[0, 1]`; the gated form runs Adam over logit weights.
pub fn fit_gate(
    forms: &[Array1<f64>],
    contexts: &[Array1<f64>],
    golds: &[Array1<f64>],
    cfg: &FcmFitConfig,
) -> Result<Gate> {
    let n = forms.len();
    if n == 0 || contexts.len() != n || golds.len() != n {
        return Err(Error::Empty("gate fitting needs aligned, non-empty samples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let d = forms[0].len();
    if cfg.mode == GateMode::Fixed {
        let (mut num, mut den) = (0.0, 0.0);
        for ((f, c), g) in forms.iter().zip(contexts).zip(golds) {
            let diff = c - f;
            num += diff.dot(&(g - f));
            den += diff.dot(&diff);
        }
        // Identical paths make every α optimal.
        let a = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.5 };
        return Ok(Gate::Fixed(a));
    }
    let np = match cfg.mode {
        GateMode::Fixed => 1,
        GateMode::Gated => 2 * d + 1,
    };
    let mut params = vec![0.0; np];
    let mut adam = AdamState::new(cfg.adam, &[np]);
    let mut grad = vec![0.0; np];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let logit = |p: &[f64], i: usize| -> f64 {
        match cfg.mode {
            GateMode::Fixed => p[0],
            GateMode::Gated => {
                let w = ArrayView1::from(&p[..2 * d]);
                w.slice(ndarray::s![..d]).dot(&forms[i]) + w.slice(ndarray::s![d..]).dot(&contexts[i]) + p[2 * d]
            }
        }
    };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let z = logit(&params, i);
                let a = logistic(z);
                let (f, c, g) = (&forms[i], &contexts[i], &golds[i]);
                // d/dα of mean_k (α c + (1-α) f - g)^2
                let mut da = 0.0;
                for k in 0..d {
                    let e = a * c[k] + (1.0 - a) * f[k] - g[k];
                    da += 2.0 * e * (c[k] - f[k]);
                }
                let dz = if z.abs() >= LOGIT_BOUND {
                    0.0
                } else {
                    da / (d * batch.len()) as f64 * a * (1.0 - a)
                };
                match cfg.mode {
                    GateMode::Fixed => grad[0] += dz,
                    GateMode::Gated => {
                        for k in 0..d {
                            grad[k] += dz * f[k];
                            grad[d + k] += dz * c[k];
                        }
                        grad[2 * d] += dz;
                    }
                }
            }
            adam.update(&mut [&mut params[..]], &[&grad[..]]);
        }
    }
    Ok(match cfg.mode {
        GateMode::Fixed => Gate::Fixed(logistic(params[0])),
        GateMode::Gated => Gate::Gated {
            w: Array1::from(params[..2 * d].to_vec()),
            b: params[2 * d],
        },
    })
}

/// Mean squared error of `gate` on samples.
pub fn gate_mse(gate: &Gate, forms: &[Array1<f64>], contexts: &[Array1<f64>], golds: &[Array1<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for ((f, c), g) in forms.iter().zip(contexts).zip(golds) {
        let v = combine(gate.alpha(f.view(), c.view()), f.view(), c.view());
        total += (&v - g).mapv(|e| e * e).sum();
        count += g.len();
    }
    total / count.max(1) as f64
}
