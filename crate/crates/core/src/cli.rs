//! Command-line front end: subcommands, configuration and dispatch.
//!
//! Every run resolves one [`RunConfig`] from an optional TOML (or report
//! JSON) file plus flags; flags win. Reports embed the resolved config.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_stem_index, filter_corpus, read_episodes, Corpus, NegativeDistribution, Stopwords, SubsampleMode,
};
use crate::embedstore::{load_space, read_vectors, write_vectors, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::eval::data::{ChimeraDataset, CrwDataset, DnDataset};
use crate::eval::methods::{build, Resources};
use crate::eval::{
    eval_chimera, eval_crw, eval_dn, permutation_test, stem_neighbor_proportions, CrwOptions, EvalReport, MethodId,
    Task,
};
use crate::fewshot::{
    build_training_pairs, fit_alc_linear, fit_alc_neural, fit_fcm, fit_form_model, AdditiveOptions, ContextMap,
    FcmFitConfig, FcmModel, FormFitConfig, FormModel, GateMode,
};
use crate::nn::{TrainConfig, DEFAULT_HIDDEN};
use crate::sgns::{train_background, SgnsModel, TrainMode, TrainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    TrainBackground,
    FilterCorpus,
    StemAnalysis,
    FitAlc,
    FitForm,
    FitFcm,
    Infer,
    Eval,
    PermTest,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub counts: Option<PathBuf>,
    /// Dataset files: DN or chimera trials (several are concatenated), CRW pairs, or episodes.
    pub data: Vec<PathBuf>,
    /// CRW context directory.
    pub contexts: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub test_words: Option<PathBuf>,
    pub keep: Option<PathBuf>,
    /// Background SGNS model (vectors file with sidecars); defaults to `embeddings`.
    pub model: Option<PathBuf>,
    pub model_counts: Option<PathBuf>,
    pub context_map: Option<PathBuf>,
    pub form: Option<PathBuf>,
    pub fcm: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub gold_counts: Option<PathBuf>,
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_counts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlcConfig {
    pub neural: bool,
    pub lambda: f64,
    pub bias: bool,
    pub hidden: usize,
    pub min_count: u64,
    pub train: TrainConfig,
}

impl Default for AlcConfig {
    fn default() -> Self {
        AlcConfig {
            neural: false,
            lambda: 1e-8,
            bias: false,
            hidden: DEFAULT_HIDDEN,
            min_count: 50,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StemConfig {
    pub ks: Vec<usize>,
}

impl Default for StemConfig {
    fn default() -> Self {
        StemConfig { ks: (1..=20).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermConfig {
    pub iterations: usize,
}

impl Default for PermConfig {
    fn default() -> Self {
        PermConfig { iterations: 10_000 }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    pub seed: u64,
    pub threads: usize,
    pub method: Option<MethodId>,
    pub task: Option<Task>,
    pub paths: PathsConfig,
    pub sgns: TrainParams,
    pub additive: AdditiveOptions,
    pub alc: AlcConfig,
    pub form: FormFitConfig,
    pub fcm: FcmFitConfig,
    pub crw: CrwOptions,
    pub stem: StemConfig,
    pub perm: PermConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            seed: 1,
            threads: 1,
            method: None,
            task: None,
            paths: PathsConfig::default(),
            sgns: TrainParams::default(),
            additive: AdditiveOptions::default(),
            alc: AlcConfig::default(),
            form: FormFitConfig::default(),
            fcm: FcmFitConfig::default(),
            crw: CrwOptions::default(),
            stem: StemConfig::default(),
            perm: PermConfig::default(),
        }
    }
}

impl RunConfig {
    /// Read a TOML config, or the config embedded in a JSON report.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut v: serde_json::Value = serde_json::from_str(&text)?;
            if v.get("per_item").is_some() {
                v = v["config"].take();
            }
            return Ok(serde_json::from_value(v)?);
        }
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Propagate the single seed and thread count to every component.
    fn propagate(&mut self) {
        self.sgns.seed = self.seed;
        self.sgns.threads = self.threads;
        self.alc.train.seed = self.seed;
        self.form.seed = self.seed;
        self.fcm.seed = self.seed;
        self.crw.seed = self.seed;
    }

    fn model_paths(&self) -> Option<(PathBuf, PathBuf)> {
        let p = &self.paths;
        let v = p.model.clone().or_else(|| p.embeddings.clone())?;
        let c = p.model_counts.clone().or_else(|| p.counts.clone())?;
        Some((v, c))
    }

    fn stopwords(&self) -> Result<Stopwords> {
        match &self.paths.stopwords {
            Some(p) => Stopwords::read(p),
            None => Ok(Stopwords::english()),
        }
    }

    fn additive_options(&self) -> Result<AdditiveOptions> {
        let mut o = self.additive.clone();
        o.stopwords = self.stopwords()?;
        Ok(o)
    }
}

fn parse_kebab<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "fewvec", version, about = "Few-shot word embedding inference and evaluation")]
pub struct Cli {
    /// TOML config file, or a JSON report whose embedded config is reused.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train SGNS background embeddings on a corpus.
    TrainBackground(TrainBackgroundArgs),
    /// Remove tokens sharing a stem with any test word.
    FilterCorpus(FilterArgs),
    /// Proportion of test words with a same-stem neighbour.
    StemAnalysis(StemArgs),
    /// Fit the context transformation.
    FitAlc(FitAlcArgs),
    /// Fit n-gram form vectors.
    FitForm(FitFormArgs),
    /// Fit the form-context gate.
    FitFcm(FitFcmArgs),
    /// Infer vectors for episodes.
    Infer(InferArgs),
    /// Evaluate a method on a task.
    Eval(EvalArgs),
    /// Paired permutation test between two reports.
    PermTest(PermArgs),
}

#[derive(Debug, Args, Default)]
pub struct SpaceArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub counts: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SgnsArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long, conflicts_with = "subsample")]
    pub no_subsample: bool,
    #[arg(long)]
    pub buckets: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct AdditiveArgs {
    /// Preset: plain, windowed or weighted.
    #[arg(long)]
    pub additive: Option<String>,
    #[arg(long)]
    pub ctx_window: Option<usize>,
    #[arg(long)]
    pub ctx_subsample: Option<f64>,
    #[arg(long, value_parser = parse_kebab::<SubsampleMode>)]
    pub subsample_mode: Option<SubsampleMode>,
    #[arg(long)]
    pub neg_rate: Option<f64>,
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Keep stopwords in context sums.
    #[arg(long)]
    pub keep_stopwords: bool,
}

#[derive(Debug, Args, Default)]
pub struct ArtifactArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub model_counts: Option<PathBuf>,
    #[arg(long)]
    pub context_map: Option<PathBuf>,
    #[arg(long)]
    pub form: Option<PathBuf>,
    #[arg(long)]
    pub fcm: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub gold_counts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainBackgroundArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_counts: Option<PathBuf>,
    #[arg(long, value_parser = parse_kebab::<TrainMode>)]
    pub mode: Option<TrainMode>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[command(flatten)]
    pub sgns: SgnsArgs,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub test_words: Option<PathBuf>,
    #[arg(long)]
    pub keep: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StemArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub test_words: Option<PathBuf>,
    /// Comma-separated neighbourhood sizes.
    #[arg(long, value_delimiter = ',')]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitAlcArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub additive: AdditiveArgs,
    #[arg(long)]
    pub neural: bool,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub bias: bool,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitFormArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitFcmArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub additive: AdditiveArgs,
    #[arg(long)]
    pub form: Option<PathBuf>,
    #[arg(long)]
    pub context_map: Option<PathBuf>,
    #[arg(long, value_parser = parse_kebab::<GateMode>)]
    pub gate: Option<GateMode>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long, value_parser = parse_kebab::<MethodId>)]
    pub method: Option<MethodId>,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Episodes file (`word<TAB>sentence`, lines grouped by word).
    #[arg(long)]
    pub episodes: Option<PathBuf>,
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[command(flatten)]
    pub additive: AdditiveArgs,
    #[command(flatten)]
    pub sgns: SgnsArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_parser = parse_kebab::<Task>)]
    pub task: Option<Task>,
    #[arg(long, value_parser = parse_kebab::<MethodId>)]
    pub method: Option<MethodId>,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Dataset file; repeat to concatenate chimera trial files.
    #[arg(long)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    /// Comma-separated context counts.
    #[arg(long, value_delimiter = ',')]
    pub ns: Vec<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[command(flatten)]
    pub additive: AdditiveArgs,
    #[command(flatten)]
    pub sgns: SgnsArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PermArgs {
    #[arg(long)]
    pub a: Option<PathBuf>,
    #[arg(long)]
    pub b: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl SpaceArgs {
    fn apply(self, c: &mut RunConfig) {
        set_opt(&mut c.paths.embeddings, self.embeddings);
        set_opt(&mut c.paths.counts, self.counts);
    }
}

impl SgnsArgs {
    fn apply(self, c: &mut RunConfig) {
        let s = &mut c.sgns;
        set(&mut s.dim, self.dim);
        set(&mut s.learning_rate, self.lr);
        set(&mut s.window, self.window);
        set(&mut s.negatives, self.negatives);
        set(&mut s.epochs, self.epochs);
        set(&mut s.buckets, self.buckets);
        if self.subsample.is_some() {
            s.subsample = self.subsample;
        }
        if self.no_subsample {
            s.subsample = None;
        }
    }
}

impl AdditiveArgs {
    fn apply(self, c: &mut RunConfig) -> Result<()> {
        let a = &mut c.additive;
        if let Some(p) = self.additive.as_deref() {
            *a = match p {
                "plain" => AdditiveOptions::plain(),
                "windowed" => AdditiveOptions::windowed(),
                "weighted" => AdditiveOptions::weighted(),
                _ => return Err(Error::Config(format!("unknown additive preset `{p}`"))),
            };
        }
        if self.ctx_window.is_some() {
            a.window = self.ctx_window;
        }
        if self.ctx_subsample.is_some() {
            a.subsample_t = self.ctx_subsample;
        }
        set(&mut a.subsample_mode, self.subsample_mode);
        if self.neg_rate.is_some() {
            a.negative_rate = self.neg_rate;
        }
        if self.keep_stopwords {
            a.drop_stopwords = false;
        }
        set_opt(&mut c.paths.stopwords, self.stopwords);
        Ok(())
    }
}

impl ArtifactArgs {
    fn apply(self, c: &mut RunConfig) {
        let p = &mut c.paths;
        set_opt(&mut p.model, self.model);
        set_opt(&mut p.model_counts, self.model_counts);
        set_opt(&mut p.context_map, self.context_map);
        set_opt(&mut p.form, self.form);
        set_opt(&mut p.fcm, self.fcm);
        set_opt(&mut p.gold, self.gold);
        set_opt(&mut p.gold_counts, self.gold_counts);
    }
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::TrainBackground(_) => CommandKind::TrainBackground,
            Command::FilterCorpus(_) => CommandKind::FilterCorpus,
            Command::StemAnalysis(_) => CommandKind::StemAnalysis,
            Command::FitAlc(_) => CommandKind::FitAlc,
            Command::FitForm(_) => CommandKind::FitForm,
            Command::FitFcm(_) => CommandKind::FitFcm,
            Command::Infer(_) => CommandKind::Infer,
            Command::Eval(_) => CommandKind::Eval,
            Command::PermTest(_) => CommandKind::PermTest,
        }
    }

    /// Fold this command's flags into `c`.
    fn apply(self, c: &mut RunConfig) -> Result<()> {
        match self {
            Command::TrainBackground(a) => {
                set_opt(&mut c.paths.corpus, a.corpus);
                set_opt(&mut c.paths.out, a.out);
                set_opt(&mut c.paths.out_counts, a.out_counts);
                set(&mut c.sgns.mode, a.mode);
                set(&mut c.sgns.min_count, a.min_count);
                a.sgns.apply(c);
            }
            Command::FilterCorpus(a) => {
                set_opt(&mut c.paths.corpus, a.corpus);
                set_opt(&mut c.paths.test_words, a.test_words);
                set_opt(&mut c.paths.keep, a.keep);
                set_opt(&mut c.paths.out, a.out);
            }
            Command::StemAnalysis(a) => {
                a.space.apply(c);
                set_opt(&mut c.paths.test_words, a.test_words);
                if !a.ks.is_empty() {
                    c.stem.ks = a.ks;
                }
                set_opt(&mut c.paths.out, a.out);
            }
            Command::FitAlc(a) => {
                set_opt(&mut c.paths.corpus, a.corpus);
                a.space.apply(c);
                a.additive.apply(c)?;
                c.alc.neural |= a.neural;
                c.alc.bias |= a.bias;
                set(&mut c.alc.lambda, a.lambda);
                set(&mut c.alc.hidden, a.hidden);
                set(&mut c.alc.min_count, a.min_count);
                set(&mut c.alc.train.epochs, a.epochs);
                set_opt(&mut c.paths.out, a.out);
            }
            Command::FitForm(a) => {
                a.space.apply(c);
                set(&mut c.form.min_count, a.min_count);
                set(&mut c.form.epochs, a.epochs);
                set_opt(&mut c.paths.out, a.out);
            }
            Command::FitFcm(a) => {
                set_opt(&mut c.paths.corpus, a.corpus);
                a.space.apply(c);
                a.additive.apply(c)?;
                set_opt(&mut c.paths.form, a.form);
                set_opt(&mut c.paths.context_map, a.context_map);
                set(&mut c.fcm.mode, a.gate);
                set(&mut c.alc.min_count, a.min_count);
                set(&mut c.fcm.epochs, a.epochs);
                set_opt(&mut c.paths.out, a.out);
            }
            Command::Infer(a) => {
                set_opt(&mut c.method, a.method);
                a.space.apply(c);
                if let Some(e) = a.episodes {
                    c.paths.data = vec![e];
                }
                a.artifacts.apply(c);
                a.additive.apply(c)?;
                a.sgns.apply(c);
                set_opt(&mut c.paths.out, a.out);
            }
            Command::Eval(a) => {
                set_opt(&mut c.task, a.task);
                set_opt(&mut c.method, a.method);
                a.space.apply(c);
                if !a.data.is_empty() {
                    c.paths.data = a.data;
                }
                set_opt(&mut c.paths.contexts, a.contexts);
                if !a.ns.is_empty() {
                    c.crw.ns = a.ns;
                }
                set(&mut c.crw.repeats, a.repeats);
                a.artifacts.apply(c);
                a.additive.apply(c)?;
                a.sgns.apply(c);
                set_opt(&mut c.paths.out, a.out);
            }
            Command::PermTest(a) => {
                set_opt(&mut c.paths.a, a.a);
                set_opt(&mut c.paths.b, a.b);
                set(&mut c.perm.iterations, a.iters);
            }
        }
        Ok(())
    }
}

/// Merge the config file (if any) and flags into one resolved config.
pub fn resolve(cli: Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut c.seed, cli.seed);
    set(&mut c.threads, cli.threads);
    c.command = Some(cli.command.kind());
    cli.command.apply(&mut c)?;
    c.propagate();
    Ok(c)
}

/// Dimension declared in a vectors file header.
fn header_dim(path: &Path) -> Result<usize> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::new();
    BufReader::new(f).read_line(&mut line).map_err(|e| Error::io(path, e))?;
    line.split_whitespace()
        .nth(1)
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| Error::format(path, 1, "header must be `<vocab_size> <dim>`"))
}

struct Checker<'a> {
    cfg: &'a RunConfig,
    errors: Vec<String>,
}

impl Checker<'_> {
    fn fail(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    /// Require a path to be set and to exist.
    fn file(&mut self, name: &str, p: &Option<PathBuf>) -> Option<PathBuf> {
        match p {
            None => {
                self.fail(format!("missing required path `{name}`"));
                None
            }
            Some(p) if !p.exists() => {
                self.fail(format!("{name}: {} does not exist", p.display()));
                None
            }
            Some(p) => Some(p.clone()),
        }
    }

    fn optional(&mut self, name: &str, p: &Option<PathBuf>) {
        if p.is_some() {
            self.file(name, p);
        }
    }

    fn output(&mut self, name: &str, p: &Option<PathBuf>) {
        match p {
            None => self.fail(format!("missing required output path `{name}`")),
            Some(p) => {
                let parent = p.parent().filter(|d| !d.as_os_str().is_empty());
                if parent.is_some_and(|d| !d.is_dir()) {
                    self.fail(format!("{name}: directory of {} does not exist", p.display()));
                }
            }
        }
    }

    fn space_dim(&mut self) -> Option<usize> {
        let e = self.file("embeddings", &self.cfg.paths.embeddings);
        self.file("counts", &self.cfg.paths.counts);
        let e = e?;
        match header_dim(&e) {
            Ok(d) => Some(d),
            Err(err) => {
                self.fail(err.to_string());
                None
            }
        }
    }

    fn dims(&mut self, what: &str, space: Option<usize>, found: &[usize]) {
        if let Some(d) = space {
            for &f in found {
                if f != d {
                    self.fail(format!(
                        "dimension mismatch: embeddings have {d} dimensions, {what} has {f}"
                    ));
                    return;
                }
            }
        }
    }

    fn context_map(&mut self, space: Option<usize>, neural: Option<bool>) {
        let Some(p) = self.file("context_map", &self.cfg.paths.context_map) else {
            return;
        };
        match ContextMap::load(&p) {
            Ok(m) => {
                self.dims("the context map", space, &[m.input_dim(), m.output_dim()]);
                if let Some(want) = neural {
                    let is = matches!(m, ContextMap::Neural(_));
                    if is != want {
                        self.fail(format!(
                            "method `{}` needs a {} context map",
                            self.cfg.method.map_or("?", |m| m.as_str()),
                            if want { "neural" } else { "linear" }
                        ));
                    }
                }
            }
            Err(e) => self.fail(e.to_string()),
        }
    }

    fn form(&mut self, space: Option<usize>) {
        let Some(p) = self.file("form", &self.cfg.paths.form) else {
            return;
        };
        match FormModel::load(&p) {
            Ok(f) => self.dims("the form model", space, &[f.dim()]),
            Err(e) => self.fail(e.to_string()),
        }
    }

    fn method(&mut self, space: Option<usize>) {
        let Some(m) = self.cfg.method else {
            self.fail("missing required `method`");
            return;
        };
        let p = &self.cfg.paths;
        match m {
            MethodId::Alc | MethodId::AlcNeural => self.context_map(space, Some(m == MethodId::AlcNeural)),
            MethodId::Form => self.form(space),
            MethodId::Fcm | MethodId::FcmNeural => {
                if let Some(f) = self.file("fcm", &p.fcm) {
                    match FcmModel::load(&f) {
                        Ok(fcm) => {
                            self.dims("the form-context model", space, &[fcm.dim(), fcm.context.input_dim()]);
                            let neural = matches!(fcm.context, ContextMap::Neural(_));
                            if neural != (m == MethodId::FcmNeural) {
                                self.fail(format!(
                                    "method `{m}` does not match the context map inside the form-context model"
                                ));
                            }
                        }
                        Err(e) => self.fail(e.to_string()),
                    }
                }
            }
            MethodId::Oracle => {
                self.optional("gold", &p.gold);
                self.optional("gold_counts", &p.gold_counts);
            }
            MethodId::Additive | MethodId::Stem => {}
            _ => match self.cfg.model_paths() {
                Some((v, c)) => {
                    if !v.exists() || !SgnsModel::has_sidecars(&v) {
                        self.fail(format!(
                            "model: {} is missing or has no output-vector sidecar",
                            v.display()
                        ));
                    } else if let Ok(d) = header_dim(&v) {
                        self.dims("the background model", space, &[d]);
                        let subword = m.train_mode().is_some_and(TrainMode::uses_subwords);
                        if subword && !SgnsModel::ngrams_path(&v).exists() {
                            self.fail(format!("method `{m}` needs a subword model with n-gram buckets"));
                        }
                    }
                    if !c.exists() {
                        self.fail(format!("model_counts: {} does not exist", c.display()));
                    }
                }
                None => self.fail("missing background model paths"),
            },
        }
        if let Err(e) = self.cfg.additive.validate() {
            self.fail(e.to_string());
        }
    }
}

/// Check paths, dimensions and method/task compatibility; returns every problem found.
pub fn validate_config(cfg: &RunConfig) -> std::result::Result<(), Vec<String>> {
    let mut ck = Checker {
        cfg,
        errors: Vec::new(),
    };
    let p = &cfg.paths;
    if cfg.threads == 0 {
        ck.fail("threads must be at least 1");
    }
    match cfg.command {
        None => ck.fail("no command"),
        Some(CommandKind::TrainBackground) => {
            ck.file("corpus", &p.corpus);
            ck.output("out", &p.out);
            ck.output("out_counts", &p.out_counts);
            if let Err(e) = cfg.sgns.validate() {
                ck.fail(e.to_string());
            }
        }
        Some(CommandKind::FilterCorpus) => {
            ck.file("corpus", &p.corpus);
            ck.file("test_words", &p.test_words);
            ck.optional("keep", &p.keep);
            ck.output("out", &p.out);
        }
        Some(CommandKind::StemAnalysis) => {
            ck.space_dim();
            ck.file("test_words", &p.test_words);
            ck.output("out", &p.out);
            if cfg.stem.ks.is_empty() || cfg.stem.ks.contains(&0) {
                ck.fail("ks must be positive");
            }
        }
        Some(CommandKind::FitAlc) => {
            ck.file("corpus", &p.corpus);
            ck.space_dim();
            ck.output("out", &p.out);
            if !(cfg.alc.lambda >= 0.0) {
                ck.fail("lambda must be non-negative");
            }
            if cfg.alc.neural && cfg.alc.hidden == 0 {
                ck.fail("hidden size must be positive");
            }
        }
        Some(CommandKind::FitForm) => {
            ck.space_dim();
            ck.output("out", &p.out);
        }
        Some(CommandKind::FitFcm) => {
            ck.file("corpus", &p.corpus);
            let d = ck.space_dim();
            ck.form(d);
            ck.context_map(d, None);
            ck.output("out", &p.out);
        }
        Some(CommandKind::Infer) => {
            let d = ck.space_dim();
            ck.method(d);
            if p.data.len() != 1 {
                ck.fail("infer needs exactly one episodes file");
            }
            for f in &p.data {
                ck.file("episodes", &Some(f.clone()));
            }
            ck.output("out", &p.out);
        }
        Some(CommandKind::Eval) => {
            let d = ck.space_dim();
            ck.method(d);
            match cfg.task {
                None => ck.fail("missing required `task`"),
                Some(t) => {
                    if let Some(m) = cfg.method {
                        if t.is_chimera() && m.is_form_only() {
                            ck.fail(format!("method `{m}` is form-only and cannot run on the chimera tasks"));
                        }
                        if t.is_filtered() && m == MethodId::Stem {
                            ck.fail(format!("method `stem` is not compatible with the filtered task `{t}`"));
                        }
                    }
                    let files = p.data.len();
                    if files == 0 {
                        ck.fail("missing dataset file (`data`)");
                    } else if files > 1 && !t.is_chimera() {
                        ck.fail(format!("task `{t}` takes a single dataset file"));
                    }
                    let crw = matches!(t, Task::Crw | Task::FilteredCrw);
                    if crw {
                        ck.file("contexts", &p.contexts);
                        if cfg.crw.ns.is_empty() || cfg.crw.ns.contains(&0) || cfg.crw.repeats == 0 {
                            ck.fail("CRW context counts and repeats must be positive");
                        }
                    }
                }
            }
            for f in &p.data {
                ck.file("data", &Some(f.clone()));
            }
            ck.output("out", &p.out);
        }
        Some(CommandKind::PermTest) => {
            ck.file("a", &p.a);
            ck.file("b", &p.b);
            if cfg.perm.iterations == 0 {
                ck.fail("iterations must be positive");
            }
        }
    }
    if ck.errors.is_empty() {
        Ok(())
    } else {
        Err(ck.errors)
    }
}

fn required(p: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    p.clone().ok_or_else(|| Error::Config(format!("missing path `{name}`")))
}

fn read_word_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.split_whitespace().map(|w| w.to_lowercase()).collect())
}

fn load_cfg_space(cfg: &RunConfig) -> Result<EmbeddingSpace> {
    load_space(
        required(&cfg.paths.embeddings, "embeddings")?,
        required(&cfg.paths.counts, "counts")?,
    )
}

fn load_gold(cfg: &RunConfig) -> Result<Option<EmbeddingSpace>> {
    let Some(v) = &cfg.paths.gold else {
        return Ok(None);
    };
    if let Some(c) = &cfg.paths.gold_counts {
        return load_space(v, c).map(Some);
    }
    let f = File::open(v).map_err(|e| Error::io(v, e))?;
    let (words, m) = read_vectors(BufReader::new(f), v)?;
    let n = words.len();
    EmbeddingSpace::new(words, m, vec![0; n]).map(Some)
}

fn negative_dist(space: &EmbeddingSpace) -> Option<NegativeDistribution> {
    NegativeDistribution::from_counts(space.counts()).ok()
}

/// Owned artifacts backing a [`Resources`] view.
struct Loaded {
    dist: Option<NegativeDistribution>,
    opts: AdditiveOptions,
    model: Option<SgnsModel>,
    context_map: Option<ContextMap>,
    form: Option<FormModel>,
    fcm: Option<FcmModel>,
    stems: Option<crate::corpus::StemIndex>,
    gold: Option<EmbeddingSpace>,
}

impl Loaded {
    fn new(cfg: &RunConfig, space: &EmbeddingSpace, method: MethodId) -> Result<Self> {
        let p = &cfg.paths;
        let mut l = Loaded {
            dist: negative_dist(space),
            opts: cfg.additive_options()?,
            model: None,
            context_map: None,
            form: None,
            fcm: None,
            stems: None,
            gold: None,
        };
        match method {
            MethodId::Alc | MethodId::AlcNeural => {
                l.context_map = Some(ContextMap::load(required(&p.context_map, "context_map")?)?)
            }
            MethodId::Form => l.form = Some(FormModel::load(required(&p.form, "form")?)?),
            MethodId::Fcm | MethodId::FcmNeural => l.fcm = Some(FcmModel::load(required(&p.fcm, "fcm")?)?),
            MethodId::Stem => l.stems = Some(build_stem_index(space.words())),
            MethodId::Oracle => l.gold = load_gold(cfg)?,
            MethodId::Additive => {}
            _ => {
                let (v, c) = cfg
                    .model_paths()
                    .ok_or_else(|| Error::Config("missing model paths".into()))?;
                l.model = Some(SgnsModel::load(v, c)?);
            }
        }
        Ok(l)
    }

    fn resources<'a>(&'a self, cfg: &RunConfig, space: &'a EmbeddingSpace) -> Resources<'a> {
        Resources {
            space,
            dist: self.dist.as_ref(),
            opts: self.opts.clone(),
            model: self.model.as_ref(),
            train: cfg.sgns.clone(),
            context_map: self.context_map.as_ref(),
            form: self.form.as_ref(),
            fcm: self.fcm.as_ref(),
            stems: self.stems.as_ref(),
            gold: self.gold.as_ref(),
        }
    }
}

fn config_value(cfg: &RunConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

fn run_train_background(cfg: &RunConfig) -> Result<()> {
    let corpus = Corpus::read(required(&cfg.paths.corpus, "corpus")?)?;
    log::info!(
        "training on {} sentences ({} tokens)",
        corpus.len(),
        corpus.token_count()
    );
    let model = train_background(&corpus, &cfg.sgns)?;
    model.save(
        required(&cfg.paths.out, "out")?,
        required(&cfg.paths.out_counts, "out_counts")?,
    )?;
    log::info!("wrote {} vectors", model.vocab().len());
    Ok(())
}

fn run_filter(cfg: &RunConfig) -> Result<()> {
    let corpus = Corpus::read(required(&cfg.paths.corpus, "corpus")?)?;
    let test: HashSet<String> = read_word_list(&required(&cfg.paths.test_words, "test_words")?)?
        .into_iter()
        .collect();
    let keep: HashSet<String> = match &cfg.paths.keep {
        Some(k) => read_word_list(k)?.into_iter().collect(),
        None => HashSet::new(),
    };
    let (out, stats) = filter_corpus(&corpus, &test, &keep);
    out.write(required(&cfg.paths.out, "out")?)?;
    log::info!(
        "removed {} of {} tokens ({:.4}%)",
        stats.tokens_removed,
        stats.tokens_total,
        100.0 * stats.fraction()
    );
    Ok(())
}

#[derive(Serialize)]
struct StemReport {
    config: serde_json::Value,
    proportions: Vec<StemPoint>,
}

#[derive(Serialize)]
struct StemPoint {
    k: usize,
    proportion: f64,
}

fn run_stem_analysis(cfg: &RunConfig) -> Result<()> {
    let space = load_cfg_space(cfg)?;
    let words = read_word_list(&required(&cfg.paths.test_words, "test_words")?)?;
    let props = stem_neighbor_proportions(&space, &words, &cfg.stem.ks)?;
    let report = StemReport {
        config: config_value(cfg)?,
        proportions: props
            .into_iter()
            .map(|(k, proportion)| StemPoint { k, proportion })
            .collect(),
    };
    write_json(&required(&cfg.paths.out, "out")?, &report)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn training_pairs(cfg: &RunConfig, space: &EmbeddingSpace) -> Result<crate::fewshot::TrainingPairSet> {
    let corpus = Corpus::read(required(&cfg.paths.corpus, "corpus")?)?;
    let dist = negative_dist(space);
    let pairs = build_training_pairs(
        &corpus,
        space,
        &cfg.additive_options()?,
        dist.as_ref(),
        cfg.alc.min_count,
    )?;
    log::info!("{} training pairs", pairs.len());
    Ok(pairs)
}

fn run_fit_alc(cfg: &RunConfig) -> Result<()> {
    let space = load_cfg_space(cfg)?;
    let pairs = training_pairs(cfg, &space)?;
    let map: ContextMap = if cfg.alc.neural {
        fit_alc_neural(&pairs, cfg.alc.hidden, &cfg.alc.train)?.into()
    } else {
        fit_alc_linear(&pairs, cfg.alc.lambda, cfg.alc.bias)?.into()
    };
    map.save(required(&cfg.paths.out, "out")?)
}

fn run_fit_form(cfg: &RunConfig) -> Result<()> {
    let space = load_cfg_space(cfg)?;
    let form = fit_form_model(&space, &cfg.form)?;
    log::info!("{} n-gram vectors", form.len());
    form.save(required(&cfg.paths.out, "out")?)
}

fn run_fit_fcm(cfg: &RunConfig) -> Result<()> {
    let space = load_cfg_space(cfg)?;
    let pairs = training_pairs(cfg, &space)?;
    let form = FormModel::load(required(&cfg.paths.form, "form")?)?;
    let context = ContextMap::load(required(&cfg.paths.context_map, "context_map")?)?;
    let fcm = fit_fcm(&pairs, form, context, &cfg.fcm)?;
    fcm.save(required(&cfg.paths.out, "out")?)
}

fn run_infer(cfg: &RunConfig) -> Result<()> {
    let space = load_cfg_space(cfg)?;
    let id = cfg.method.ok_or_else(|| Error::Config("missing method".into()))?;
    let loaded = Loaded::new(cfg, &space, id)?;
    let method = build(id, &loaded.resources(cfg, &space))?;
    let episodes = read_episodes(&cfg.paths.data[0])?;
    let mut words = Vec::new();
    let mut rows = Vec::new();
    for ep in &episodes {
        match method.infer(ep) {
            Ok(v) => {
                words.push(ep.target.clone());
                rows.push(v);
            }
            Err(e) if e.is_abstention() => log::warn!("{}: no vector for `{}`: {e}", method.id(), ep.target),
            Err(e) => return Err(e),
        }
    }
    let mut m = Array2::zeros((rows.len(), space.dim()));
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).assign(r);
    }
    let out = required(&cfg.paths.out, "out")?;
    let f = File::create(&out).map_err(|e| Error::io(&out, e))?;
    let mut w = BufWriter::new(f);
    write_vectors(&mut w, &words, &m).map_err(|e| Error::io(&out, e))?;
    w.flush().map_err(|e| Error::io(&out, e))?;
    log::info!("inferred {} of {} episodes", words.len(), episodes.len());
    Ok(())
}

/// Run the configured evaluation and return its report (not written).
pub fn evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    let space = load_cfg_space(cfg)?;
    let id = cfg.method.ok_or_else(|| Error::Config("missing method".into()))?;
    let task = cfg.task.ok_or_else(|| Error::Config("missing task".into()))?;
    let loaded = Loaded::new(cfg, &space, id)?;
    let method = build(id, &loaded.resources(cfg, &space))?;
    let config = config_value(cfg)?;
    let data = &cfg.paths.data;
    match task {
        Task::Dn | Task::FilteredDn => eval_dn(method.as_ref(), &DnDataset::load(&data[0])?, &space, task, config),
        Task::Chimera | Task::FullChimera => {
            eval_chimera(method.as_ref(), &ChimeraDataset::load_all(data)?, &space, task, config)
        }
        Task::Crw | Task::FilteredCrw => {
            let ds = CrwDataset::load(&data[0], required(&cfg.paths.contexts, "contexts")?)?;
            eval_crw(method.as_ref(), &ds, &space, &cfg.crw, task, config)
        }
    }
}

fn run_eval(cfg: &RunConfig) -> Result<()> {
    let report = evaluate(cfg)?;
    for (k, v) in &report.aggregates {
        log::info!("{} {}: {k} = {v:.4}", report.method, report.task);
    }
    report.save(required(&cfg.paths.out, "out")?)
}

/// p-value of the paired test between two reports over the same items.
pub fn perm_test_reports(a: &EvalReport, b: &EvalReport, iterations: usize, seed: u64) -> Result<f64> {
    if a.per_item.len() != b.per_item.len() || a.per_item.iter().zip(&b.per_item).any(|(x, y)| x.id != y.id) {
        return Err(Error::InvalidArgument(
            "reports do not cover the same items in the same order".into(),
        ));
    }
    permutation_test(&a.scores(0.0), &b.scores(0.0), iterations, seed)
}

fn run_perm(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let a = EvalReport::load(required(&cfg.paths.a, "a")?)?;
    let b = EvalReport::load(required(&cfg.paths.b, "b")?)?;
    let p = perm_test_reports(&a, &b, cfg.perm.iterations, cfg.seed)?;
    writeln!(out, "p={p}").map_err(|e| Error::io("<stdout>", e))
}

/// Execute a validated config.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    if cfg.command == Some(CommandKind::PermTest) {
        return run_perm(cfg, stdout);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match cfg.command {
        Some(CommandKind::TrainBackground) => run_train_background(cfg),
        Some(CommandKind::FilterCorpus) => run_filter(cfg),
        Some(CommandKind::StemAnalysis) => run_stem_analysis(cfg),
        Some(CommandKind::FitAlc) => run_fit_alc(cfg),
        Some(CommandKind::FitForm) => run_fit_form(cfg),
        Some(CommandKind::FitFcm) => run_fit_fcm(cfg),
        Some(CommandKind::Infer) => run_infer(cfg),
        Some(CommandKind::Eval) => run_eval(cfg),
        Some(CommandKind::PermTest) | None => Err(Error::Config("no command".into())),
    })
}

/// Parse `argv`, validate and run. Returns the process exit code:
/// 0 success, 1 usage or validation error, 2 runtime error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    dispatch_with(argv, &mut std::io::stdout())
}

/// [`dispatch`] with machine output sent to `stdout`.
pub fn dispatch_with<I, T>(argv: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        log::LevelFilter::Info
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    log::set_max_level(level);

    let cfg = match resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Err(errors) = validate_config(&cfg) {
        for e in &errors {
            eprintln!("error: {e}");
        }
        return 1;
    }
    match run(&cfg, stdout) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
