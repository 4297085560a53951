//! One-hidden-layer regression network: `W2·relu(W1·x + b1) + b2`, trained
//! with mean squared error and Adam.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textmat::{SectionReader, SectionWriter};

pub const DEFAULT_HIDDEN: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Gradients (or Adam moments) shaped like an [`Mlp`].
pub type Gradients = Mlp;

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..=a))
        };
        let w1 = glorot(hidden, input);
        let w2 = glorot(output, hidden);
        Mlp {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(output),
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            w1: Array2::zeros((hidden, input)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((output, hidden)),
            b2: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        if self.b1.len() != h || self.w2.ncols() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                actual: self.w2.ncols(),
            });
        }
        if self.b2.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: self.b2.len(),
            });
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("mlp parameter".into()));
        }
        Ok(())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(x.len())?;
        let h = (self.w1.dot(&x) + &self.b1).mapv(relu);
        Ok(self.w2.dot(&h) + &self.b2)
    }

    /// Row-wise forward pass; also returns hidden pre-activations.
    fn forward_batch(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let pre = x.dot(&self.w1.t()) + &self.b1;
        let y = pre.mapv(relu).dot(&self.w2.t()) + &self.b2;
        (pre, y)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.forward_batch(x).1)
    }

    /// Gradients of the batch-mean MSE.
    fn backward_batch(&self, x: ArrayView2<'_, f64>, t: ArrayView2<'_, f64>) -> (f64, Gradients) {
        let (pre, y) = self.forward_batch(x);
        let n = x.nrows() as f64;
        let d = y.ncols() as f64;
        let diff = &y - &t;
        let loss = diff.iter().map(|e| e * e).sum::<f64>() / (n * d);
        let dy = diff * (2.0 / (n * d));
        let h = pre.mapv(relu);
        let w2 = dy.t().dot(&h).as_standard_layout().into_owned();
        let b2 = dy.sum_axis(Axis(0));
        let mut dh = dy.dot(&self.w2);
        Zip::from(&mut dh).and(&pre).for_each(|g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        let w1 = dh.t().dot(&x).as_standard_layout().into_owned();
        let b1 = dh.sum_axis(Axis(0));
        (loss, Mlp { w1, b1, w2, b2 })
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    fn params(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    pub fn write<W: Write>(&self, w: W) -> std::io::Result<W> {
        let mut s = SectionWriter::new(w);
        s.matrix("w1", &self.w1)?;
        s.matrix("b1", &self.b1.clone().insert_axis(Axis(0)))?;
        s.matrix("w2", &self.w2)?;
        s.matrix("b2", &self.b2.clone().insert_axis(Axis(0)))?;
        Ok(s.into_inner())
    }

    pub fn read<R: std::io::BufRead>(r: &mut SectionReader<R>) -> Result<Self> {
        let w1 = r.expect("w1", false)?.data;
        let b1 = r.expect("b1", false)?.data.row(0).to_owned();
        let w2 = r.expect("w2", false)?.data;
        let b2 = r.expect("b2", false)?.data.row(0).to_owned();
        let m = Mlp { w1, b1, w2, b2 };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = self.write(BufWriter::new(f)).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Mlp::read(&mut SectionReader::new(BufReader::new(f), path))
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub fn forward(mlp: &Mlp, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    mlp.forward(x)
}

pub fn mse_loss(pred: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.len(),
            actual: target.len(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

/// Exact gradients of `mse_loss(forward(x), target)`; relu'(0) is taken as 0.
pub fn backward(mlp: &Mlp, x: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> Result<Gradients> {
    mlp.check_input(x.len())?;
    if target.len() != mlp.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: mlp.output_dim(),
            actual: target.len(),
        });
    }
    let x = x.insert_axis(Axis(0));
    let t = target.insert_axis(Axis(0));
    Ok(mlp.backward_batch(x, t).1)
}

/// Largest relative gap between analytic and central-difference gradients.
///
/// Entries where both gradients are below 1e-7 in magnitude are skipped.
pub fn max_gradient_error(mlp: &Mlp, x: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>, step: f64) -> Result<f64> {
    let g = backward(mlp, x, target)?;
    let loss = |m: &Mlp| -> Result<f64> { mse_loss(m.forward(x)?.view(), target) };
    let mut worst: f64 = 0.0;
    let mut probe = mlp.clone();
    for slot in 0..4 {
        for i in 0..g.params()[slot].len() {
            let orig = probe.params()[slot][i];
            probe.params_mut()[slot][i] = orig + step;
            let up = loss(&probe)?;
            probe.params_mut()[slot][i] = orig - step;
            let down = loss(&probe)?;
            probe.params_mut()[slot][i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = g.params()[slot][i];
            let scale = numeric.abs().max(analytic.abs());
            if scale > 1e-7 {
                worst = worst.max((numeric - analytic).abs() / scale);
            }
        }
    }
    Ok(worst)
}

/// Mean of per-sample MSE across the rows of `x`/`y`.
pub fn dataset_loss(mlp: &Mlp, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    let pred = mlp.predict(x)?;
    if pred.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: pred.ncols(),
            actual: y.ncols(),
        });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok((&pred - &y).iter().map(|e| e * e).sum::<f64>() / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments over flat parameter slices.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_mlp(config: AdamConfig, mlp: &Mlp) -> Self {
        let sizes: Vec<usize> = mlp.params().iter().map(|p| p.len()).collect();
        AdamState::new(config, &sizes)
    }

    /// One bias-corrected update; `params[i]` and `grads[i]` pair with slot `i`.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        let AdamConfig {
            rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }

    /// Sparse variant touching only `rows` of a row-major slot with `cols` columns.
    pub fn update_rows(&mut self, slot: usize, param: &mut [f64], grad: &[f64], rows: &[usize], cols: usize) {
        let AdamConfig {
            rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for &r in rows {
            for i in r * cols..(r + 1) * cols {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                param[i] -= rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }

    /// Advance the step counter without touching moments (for [`Self::update_rows`]).
    pub fn tick(&mut self) {
        self.step += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Fraction of samples held out for early stopping; 0 disables it.
    pub holdout: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            seed: 1,
            adam: AdamConfig::default(),
            holdout: 0.1,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// Mean training loss per completed epoch.
    pub train_loss: Vec<f64>,
    pub holdout_loss: Vec<f64>,
    /// Epoch whose parameters were returned (0 = initial).
    pub best_epoch: usize,
}

/// Mini-batch Adam on rows of `x` → rows of `y`.
///
/// With a non-empty holdout the parameters with the lowest holdout loss are
/// returned and training stops after `patience` epochs without improvement.
pub fn train(
    mlp: &Mlp,
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainTrace)> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Empty("no training samples".into()));
    }
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.nrows(),
        });
    }
    mlp.check_input(x.ncols())?;
    if y.ncols() != mlp.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: mlp.output_dim(),
            actual: y.ncols(),
        });
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.holdout) {
        return Err(Error::InvalidArgument(
            "batch size must be positive and holdout in [0, 1)".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_hold = ((n as f64) * cfg.holdout).floor() as usize;
    let n_hold = if n - n_hold == 0 { 0 } else { n_hold };
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let mut train_idx = train_idx.to_vec();
    let hx = x.select(Axis(0), hold_idx);
    let hy = y.select(Axis(0), hold_idx);

    let mut cur = mlp.clone();
    let mut adam = AdamState::for_mlp(cfg.adam, &cur);
    let mut best = cur.clone();
    let mut best_loss = if n_hold > 0 {
        dataset_loss(&cur, hx.view(), hy.view())?
    } else {
        f64::INFINITY
    };
    let mut trace = TrainTrace {
        train_loss: Vec::new(),
        holdout_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), batch);
            let by = y.select(Axis(0), batch);
            let (loss, g) = cur.backward_batch(bx.view(), by.view());
            total += loss * batch.len() as f64;
            let grads = g.params();
            adam.update(&mut cur.params_mut(), &grads);
        }
        trace.train_loss.push(total / train_idx.len() as f64);
        if n_hold == 0 {
            best = cur.clone();
            trace.best_epoch = epoch;
            continue;
        }
        let hl = dataset_loss(&cur, hx.view(), hy.view())?;
        trace.holdout_loss.push(hl);
        if hl < best_loss {
            best_loss = hl;
            best = cur.clone();
            trace.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log::debug!("early stop at epoch {epoch}, best {}", trace.best_epoch);
                break;
            }
        }
    }
    best.validate()?;
    Ok((best, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn random_mlp(d: usize, h: usize, rng: &mut ChaCha8Rng) -> Mlp {
        let mut r = |rows, cols| Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0));
        let w1 = r(h, d);
        let b1 = r(1, h).row(0).to_owned();
        let w2 = r(d, h);
        let b2 = r(1, d).row(0).to_owned();
        Mlp { w1, b1, w2, b2 }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(3, 4, 3);
        assert_eq!(
            m.forward(array![1.0, -2.0, 3.0].view()).unwrap(),
            Array1::<f64>::zeros(3)
        );
    }

    #[test]
    fn identity_network_passes_nonnegative_input() {
        let mut m = Mlp::zeros(3, 3, 3);
        m.w1 = Array2::eye(3);
        m.w2 = Array2::eye(3);
        let x = array![0.5, 0.0, 2.0];
        assert_eq!(m.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn forward_matches_loop_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_mlp(5, 7, &mut rng);
        let x = Array1::from_shape_simple_fn(5, || rng.random_range(-1.0..1.0));
        let mut want = vec![0.0; 5];
        for (o, w) in want.iter_mut().enumerate() {
            let mut s = m.b2[o];
            for j in 0..7 {
                let mut a = m.b1[j];
                for i in 0..5 {
                    a += m.w1[[j, i]] * x[i];
                }
                s += m.w2[[o, j]] * a.max(0.0);
            }
            *w = s;
        }
        let got = m.forward(x.view()).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert_abs_diff_eq!(g, w, epsilon = 1e-12);
        }
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(array![1.0, 2.0].view(), array![1.0, 2.0].view()).unwrap(), 0.0);
        assert_eq!(mse_loss(array![0.0, 0.0].view(), array![1.0, 1.0].view()).unwrap(), 1.0);
        assert_eq!(
            mse_loss(array![1.0, -1.0, 4.0].view(), array![0.0, 1.0, 2.0].view()).unwrap(),
            3.0
        );
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_mlp(3, 4, &mut rng);
        let x = array![0.1, 0.2, 0.3];
        let t = m.forward(x.view()).unwrap();
        let g = backward(&m, x.view(), t.view()).unwrap();
        assert!(g.params().iter().all(|p| p.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_unit_closed_form() {
        // y = w2 * relu(w1 x + b1) + b2, loss = (y - t)^2
        let m = Mlp {
            w1: array![[2.0]],
            b1: array![0.5],
            w2: array![[3.0]],
            b2: array![0.25],
        };
        let (x, t) = (1.0, 1.0);
        let hidden = 2.0 * x + 0.5;
        let y = 3.0 * hidden + 0.25;
        let e = 2.0 * (y - t);
        let g = backward(&m, array![x].view(), array![t].view()).unwrap();
        assert_abs_diff_eq!(g.b2[0], e, epsilon = 1e-12);
        assert_abs_diff_eq!(g.w2[[0, 0]], e * hidden, epsilon = 1e-12);
        assert_abs_diff_eq!(g.b1[0], e * 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.w1[[0, 0]], e * 3.0 * x, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_mlp(8, 16, &mut rng);
            let x = Array1::from_shape_simple_fn(8, || rng.random_range(-1.0..1.0));
            let t = Array1::from_shape_simple_fn(8, || rng.random_range(-1.0..1.0));
            let err = max_gradient_error(&m, x.view(), t.view(), 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = vec![1.0, -2.0];
        let mut adam = AdamState::new(AdamConfig::default(), &[2]);
        adam.update(&mut [&mut p[..]], &[&[0.0, 0.0]]);
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(adam.step, 1);
    }

    fn linear_data(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_simple_fn((d, d), || rng.random_range(-1.0..1.0) / (d as f64).sqrt());
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0));
        let y = x.dot(&a.t());
        (x, y)
    }

    #[test]
    fn zero_epochs_keeps_parameters() {
        let (x, y) = linear_data(20, 3, 1);
        let m = Mlp::new(3, 8, 3, 2);
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert_eq!(train(&m, x.view(), y.view(), &cfg).unwrap().0, m);
    }

    #[test]
    fn learns_linear_map_deterministically() {
        let (x, y) = linear_data(500, 10, 7);
        let m = Mlp::new(10, 64, 10, 3);
        let cfg = TrainConfig {
            epochs: 400,
            batch_size: 32,
            holdout: 0.1,
            patience: 20,
            adam: AdamConfig {
                rate: 0.003,
                ..Default::default()
            },
            ..Default::default()
        };
        let (a, trace) = train(&m, x.view(), y.view(), &cfg).unwrap();
        let mse = dataset_loss(&a, x.view(), y.view()).unwrap();
        assert!(mse < 1e-3, "mse {mse}");
        assert!(mse <= dataset_loss(&m, x.view(), y.view()).unwrap());
        assert!(trace.best_epoch > 0);
        let (b, _) = train(&m, x.view(), y.view(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_samples_rejected() {
        let m = Mlp::new(2, 2, 2, 0);
        let x = Array2::<f64>::zeros((0, 2));
        assert!(train(&m, x.view(), x.view(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let m = Mlp::new(4, 6, 3, 9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mlp.txt");
        m.save(&p).unwrap();
        assert_eq!(Mlp::load(&p).unwrap(), m);
    }
}
