//! Single-layer LSTM encoder over the previous week with an affine head
//! producing `k·24` hourly forecasts, trained by minibatch SGD.
//!
//! Gate blocks are stacked in the order input, forget, candidate, output.
//! Training runs the recurrence over a whole minibatch column-wise, so a
//! step is one `4H×D` and one `4H×H` matrix product.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Forecaster;
use crate::timeseries::{ForecastResult, SeriesView, HOURS_PER_DAY, HOURS_PER_WEEK};

/// Hours fed to the encoder.
pub const INPUT_HOURS: usize = HOURS_PER_WEEK;

/// Windows per parallel gradient chunk; fixed so the reduction order, and
/// hence the result, does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    /// `4H × D` input weights.
    pub wx: DMatrix<f64>,
    /// `4H × H` recurrent weights.
    pub wh: DMatrix<f64>,
    /// `4H` gate biases.
    pub bias: DVector<f64>,
    /// `O × H` head matrix.
    pub head: DMatrix<f64>,
    pub head_bias: DVector<f64>,
}

impl LstmWeights {
    pub fn zeros(input_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Self {
            wx: DMatrix::zeros(4 * hidden_dim, input_dim),
            wh: DMatrix::zeros(4 * hidden_dim, hidden_dim),
            bias: DVector::zeros(4 * hidden_dim),
            head: DMatrix::zeros(out_dim, hidden_dim),
            head_bias: DVector::zeros(out_dim),
        }
    }

    /// Every entry drawn from `uniform(−s, s)` with `s = 1/√H`.
    pub fn random(input_dim: usize, hidden_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let s = 1.0 / (hidden_dim as f64).sqrt();
        let mut w = Self::zeros(input_dim, hidden_dim, out_dim);
        for slice in w.slices_mut() {
            for v in slice.iter_mut() {
                *v = rng.random_range(-s..s);
            }
        }
        w
    }

    pub fn input_dim(&self) -> usize {
        self.wx.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.wh.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.head.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        let consistent = self.wx.nrows() == 4 * h
            && self.wh.nrows() == 4 * h
            && self.bias.len() == 4 * h
            && self.head.ncols() == h
            && self.head_bias.len() == self.out_dim();
        if !consistent {
            return Err(Error::invalid("weights", "inconsistent dimensions"));
        }
        if self.slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("weights", "non-finite entry"));
        }
        Ok(())
    }

    pub fn slices(&self) -> [&[f64]; 5] {
        [
            self.wx.as_slice(),
            self.wh.as_slice(),
            self.bias.as_slice(),
            self.head.as_slice(),
            self.head_bias.as_slice(),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.wx.as_mut_slice(),
            self.wh.as_mut_slice(),
            self.bias.as_mut_slice(),
            self.head.as_mut_slice(),
            self.head_bias.as_mut_slice(),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self += a · other`.
    pub fn add_scaled(&mut self, a: f64, other: &LstmWeights) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step for a single input vector.
pub fn lstm_cell(
    h: &DVector<f64>,
    c: &DVector<f64>,
    x: &DVector<f64>,
    w: &LstmWeights,
) -> (DVector<f64>, DVector<f64>) {
    let n = w.hidden_dim();
    let z = &w.wx * x + &w.wh * h + &w.bias;
    let i = z.rows(0, n).map(sigmoid);
    let f = z.rows(n, n).map(sigmoid);
    let g = z.rows(2 * n, n).map(f64::tanh);
    let o = z.rows(3 * n, n).map(sigmoid);
    let c_next = f.component_mul(c) + i.component_mul(&g);
    let h_next = o.component_mul(&c_next.map(f64::tanh));
    (h_next, c_next)
}

/// Per-feature affine scaling applied to model inputs and targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub count_mean: f64,
    pub count_scale: f64,
    pub tmax_mean: f64,
    pub tmax_scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            count_mean: 0.0,
            count_scale: 1.0,
            tmax_mean: 0.0,
            tmax_scale: 1.0,
        }
    }
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 1.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

impl Normalization {
    /// Z-score constants from observed training hours; temperature is
    /// scaled independently of counts.
    pub fn from_view(view: &SeriesView<'_>) -> Self {
        let counts = view
            .counts
            .iter()
            .zip(view.valid)
            .filter(|(_, ok)| **ok)
            .map(|(c, _)| f64::from(*c));
        let (count_mean, count_scale) = mean_and_scale(counts);
        let (tmax_mean, tmax_scale) = view.tmax.map_or((0.0, 1.0), |t| mean_and_scale(t.iter().copied()));
        Self {
            count_mean,
            count_scale,
            tmax_mean,
            tmax_scale,
        }
    }

    pub fn count(&self, c: f64) -> f64 {
        (c - self.count_mean) / self.count_scale
    }

    pub fn count_inverse(&self, z: f64) -> f64 {
        z * self.count_scale + self.count_mean
    }

    pub fn tmax(&self, t: f64) -> f64 {
        (t - self.tmax_mean) / self.tmax_scale
    }
}

/// A supervised example: normalized input vectors oldest first and the
/// normalized targets that follow them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

/// Folds [`lstm_cell`] over the inputs oldest first from a zero state.
pub fn encode_window(inputs: &[Vec<f64>], w: &LstmWeights) -> DVector<f64> {
    let n = w.hidden_dim();
    let mut h = DVector::zeros(n);
    let mut c = DVector::zeros(n);
    for x in inputs {
        let x = DVector::from_column_slice(x);
        (h, c) = lstm_cell(&h, &c, &x, w);
    }
    h
}

/// Affine head in normalized space.
pub fn head_output(h: &DVector<f64>, w: &LstmWeights) -> DVector<f64> {
    &w.head * h + &w.head_bias
}

/// Head output mapped back to counts; not clamped.
pub fn predict_head(h: &DVector<f64>, w: &LstmWeights, norm: &Normalization) -> Vec<f64> {
    head_output(h, w).iter().map(|z| norm.count_inverse(*z)).collect()
}

fn feature_vector(view: &SeriesView<'_>, hour: usize, norm: &Normalization, use_weather: bool) -> Vec<f64> {
    let mut x = vec![norm.count(f64::from(view.counts[hour]))];
    if use_weather {
        let t = view.tmax.expect("weather checked by caller")[hour];
        x.push(norm.tmax(t));
    }
    x
}

/// Cuts `INPUT_HOURS`-long inputs with `k·24`-hour targets every `stride`
/// hours from the start of `view`, keeping only fully observed windows.
pub fn make_windows(
    view: &SeriesView<'_>,
    k_days: usize,
    stride: usize,
    norm: &Normalization,
    use_weather: bool,
) -> Result<Vec<TrainingWindow>> {
    if stride == 0 {
        return Err(Error::invalid("stride", "must be positive"));
    }
    if use_weather && view.tmax.is_none() {
        return Err(Error::invalid("weather", "series has no temperature feature"));
    }
    let out = k_days * HOURS_PER_DAY;
    let span = INPUT_HOURS + out;
    if view.len() < span {
        return Ok(Vec::new());
    }
    Ok((0..=view.len() - span)
        .step_by(stride)
        .filter(|&s| view.valid[s..s + span].iter().all(|v| *v))
        .map(|s| TrainingWindow {
            inputs: (s..s + INPUT_HOURS)
                .map(|t| feature_vector(view, t, norm, use_weather))
                .collect(),
            targets: (s + INPUT_HOURS..s + span)
                .map(|t| norm.count(f64::from(view.counts[t])))
                .collect(),
        })
        .collect())
}

struct StepCache {
    x: DMatrix<f64>,
    h_prev: DMatrix<f64>,
    c_prev: DMatrix<f64>,
    i: DMatrix<f64>,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    o: DMatrix<f64>,
    tanh_c: DMatrix<f64>,
}

fn add_bias_columns(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in m.column_iter_mut() {
        col += b;
    }
}

/// Runs the recurrence for a batch; all windows must share a length.
fn forward_batch(windows: &[&TrainingWindow], w: &LstmWeights, keep: bool) -> (DMatrix<f64>, Vec<StepCache>) {
    let n = w.hidden_dim();
    let d = w.input_dim();
    let b = windows.len();
    let steps = windows[0].inputs.len();
    let mut h = DMatrix::zeros(n, b);
    let mut c = DMatrix::zeros(n, b);
    let mut cache = Vec::with_capacity(if keep { steps } else { 0 });
    for t in 0..steps {
        let x = DMatrix::from_fn(d, b, |r, col| windows[col].inputs[t][r]);
        let mut z = &w.wx * &x + &w.wh * &h;
        add_bias_columns(&mut z, &w.bias);
        let i = z.rows(0, n).map(sigmoid);
        let f = z.rows(n, n).map(sigmoid);
        let g = z.rows(2 * n, n).map(f64::tanh);
        let o = z.rows(3 * n, n).map(sigmoid);
        let c_next = f.component_mul(&c) + i.component_mul(&g);
        let tanh_c = c_next.map(f64::tanh);
        let h_next = o.component_mul(&tanh_c);
        if keep {
            cache.push(StepCache {
                x,
                h_prev: h,
                c_prev: c,
                i,
                f,
                g,
                o,
                tanh_c,
            });
        }
        h = h_next;
        c = c_next;
    }
    (h, cache)
}

fn target_matrix(windows: &[&TrainingWindow]) -> DMatrix<f64> {
    let o = windows[0].targets.len();
    DMatrix::from_fn(o, windows.len(), |r, col| windows[col].targets[r])
}

/// Loss and gradient contributions of `windows`, each scaled by
/// `1/denominator` so chunk results add up to batch means.
fn chunk_gradients(windows: &[&TrainingWindow], w: &LstmWeights, denominator: f64) -> (f64, LstmWeights) {
    let n = w.hidden_dim();
    let (h_last, cache) = forward_batch(windows, w, true);
    let mut pred = &w.head * &h_last;
    add_bias_columns(&mut pred, &w.head_bias);
    let err = pred - target_matrix(windows);
    let loss = err.norm_squared() / denominator;

    let mut grad = LstmWeights::zeros(w.input_dim(), n, w.out_dim());
    let d_pred = err * (2.0 / denominator);
    grad.head = &d_pred * h_last.transpose();
    grad.head_bias = d_pred.column_sum();
    let mut dh = w.head.transpose() * &d_pred;
    let mut dc = DMatrix::zeros(n, windows.len());
    let mut dz = DMatrix::zeros(4 * n, windows.len());
    for s in cache.iter().rev() {
        let d_o = dh.component_mul(&s.tanh_c);
        dc += dh.component_mul(&s.o).component_mul(&s.tanh_c.map(|t| 1.0 - t * t));
        let d_i = dc.component_mul(&s.g);
        let d_g = dc.component_mul(&s.i);
        let d_f = dc.component_mul(&s.c_prev);
        dz.rows_mut(0, n)
            .copy_from(&d_i.component_mul(&s.i.map(|v| v * (1.0 - v))));
        dz.rows_mut(n, n)
            .copy_from(&d_f.component_mul(&s.f.map(|v| v * (1.0 - v))));
        dz.rows_mut(2 * n, n)
            .copy_from(&d_g.component_mul(&s.g.map(|v| 1.0 - v * v)));
        dz.rows_mut(3 * n, n)
            .copy_from(&d_o.component_mul(&s.o.map(|v| v * (1.0 - v))));
        grad.wx += &dz * s.x.transpose();
        grad.wh += &dz * s.h_prev.transpose();
        grad.bias += dz.column_sum();
        dh = w.wh.transpose() * &dz;
        dc.component_mul_assign(&s.f);
    }
    (loss, grad)
}

/// Mean over windows of the summed squared error across outputs (in
/// normalized space) and its exact gradient by backpropagation through
/// time. Windows are processed in fixed-size chunks in parallel and
/// reduced in order.
pub fn loss_and_gradients(windows: &[TrainingWindow], w: &LstmWeights) -> Result<(f64, LstmWeights)> {
    let refs: Vec<&TrainingWindow> = windows.iter().collect();
    batch_loss_and_gradients(&refs, w)
}

fn check_batch(windows: &[&TrainingWindow], w: &LstmWeights) -> Result<()> {
    let Some(first) = windows.first() else {
        return Err(Error::InsufficientData { required: 1, actual: 0 });
    };
    let steps = first.inputs.len();
    let ok = windows.iter().all(|win| {
        win.inputs.len() == steps
            && win.targets.len() == w.out_dim()
            && win.inputs.iter().all(|x| x.len() == w.input_dim())
    });
    if ok && steps > 0 {
        Ok(())
    } else {
        Err(Error::invalid("window", "shape does not match the weights"))
    }
}

fn batch_loss_and_gradients(windows: &[&TrainingWindow], w: &LstmWeights) -> Result<(f64, LstmWeights)> {
    check_batch(windows, w)?;
    let denom = windows.len() as f64;
    let parts: Vec<(f64, LstmWeights)> = windows
        .par_chunks(CHUNK)
        .map(|chunk| chunk_gradients(chunk, w, denom))
        .collect();
    let mut parts = parts.into_iter();
    let (mut loss, mut grad) = parts.next().expect("non-empty batch");
    for (l, g) in parts {
        loss += l;
        grad.add_scaled(1.0, &g);
    }
    Ok((loss, grad))
}

/// Loss without gradients.
pub fn batch_loss(windows: &[TrainingWindow], w: &LstmWeights) -> Result<f64> {
    let refs: Vec<&TrainingWindow> = windows.iter().collect();
    check_batch(&refs, w)?;
    let denom = windows.len() as f64;
    let parts: Vec<f64> = refs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (h, _) = forward_batch(chunk, w, false);
            let mut pred = &w.head * h;
            add_bias_columns(&mut pred, &w.head_bias);
            (pred - target_matrix(chunk)).norm_squared() / denom
        })
        .collect();
    Ok(parts.into_iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    /// Forecast days; the head emits `k·24` values.
    pub k_days: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub use_weather: bool,
    /// Hours between successive training windows.
    pub stride: usize,
    /// Heavy-ball momentum; zero gives plain SGD.
    pub momentum: f64,
    /// Rescale each minibatch gradient to at most this norm.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        LstmSettings::default().train_config(3, false)
    }
}

impl TrainConfig {
    pub fn out_dim(&self) -> usize {
        self.k_days * HOURS_PER_DAY
    }

    pub fn input_dim(&self) -> usize {
        1 + usize::from(self.use_weather)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.k_days == 0 || self.batch_size == 0 || self.stride == 0 {
            return Err(Error::invalid(
                "lstm",
                "hidden_dim, k_days, batch_size and stride must be positive",
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::invalid("clip_norm", "must be positive"));
        }
        Ok(())
    }
}

/// Model-section settings shared by every LSTM variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmSettings {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub stride: usize,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for LstmSettings {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            stride: 24,
            momentum: 0.0,
            clip_norm: None,
            seed: 11,
        }
    }
}

impl LstmSettings {
    pub fn train_config(&self, k_days: usize, use_weather: bool) -> TrainConfig {
        TrainConfig {
            hidden_dim: self.hidden_dim,
            k_days,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            use_weather,
            stride: self.stride,
            momentum: self.momentum,
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: LstmWeights,
    /// Full-data loss at initialization, then after every epoch.
    pub loss_trace: Vec<f64>,
}

/// Minibatch SGD over pre-built windows from a seeded initialization
/// with a seeded shuffle each epoch.
pub fn train_on_windows(windows: &[TrainingWindow], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::InsufficientData { required: 1, actual: 0 });
    }
    let input_dim = windows[0].inputs.first().map_or(0, |x| x.len());
    let out_dim = windows[0].targets.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = LstmWeights::random(input_dim, cfg.hidden_dim, out_dim, &mut rng);
    let mut velocity = LstmWeights::zeros(input_dim, cfg.hidden_dim, out_dim);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut loss_trace = vec![batch_loss(windows, &w)?];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let refs: Vec<&TrainingWindow> = batch.iter().map(|&i| &windows[i]).collect();
            let (_, mut grad) = batch_loss_and_gradients(&refs, &w)?;
            if let Some(max) = cfg.clip_norm {
                let norm = grad.norm();
                if norm > max {
                    let scale = max / norm;
                    for s in grad.slices_mut() {
                        s.iter_mut().for_each(|v| *v *= scale);
                    }
                }
            }
            if cfg.momentum > 0.0 {
                for s in velocity.slices_mut() {
                    s.iter_mut().for_each(|v| *v *= cfg.momentum);
                }
                velocity.add_scaled(1.0, &grad);
                w.add_scaled(-cfg.learning_rate, &velocity);
            } else {
                w.add_scaled(-cfg.learning_rate, &grad);
            }
        }
        let loss = batch_loss(windows, &w)?;
        if !loss.is_finite() {
            return Err(Error::Degenerate("training loss diverged".into()));
        }
        loss_trace.push(loss);
    }
    Ok(TrainOutcome { weights: w, loss_trace })
}

/// A trained network with the scaling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmArtifact {
    pub weights: LstmWeights,
    pub norm: Normalization,
    pub use_weather: bool,
}

const ARTIFACT_MAGIC: &str = "arrivalcast-lstm 1";

impl LstmArtifact {
    /// Header with the dimensions and scaling, then one value per line in
    /// column-major order for each parameter block.
    pub fn to_text(&self) -> String {
        let w = &self.weights;
        let n = &self.norm;
        let mut out = format!(
            "{ARTIFACT_MAGIC}\ndims {} {} {}\nweather {}\nnorm {} {} {} {}\n",
            w.input_dim(),
            w.hidden_dim(),
            w.out_dim(),
            u8::from(self.use_weather),
            n.count_mean,
            n.count_scale,
            n.tmax_mean,
            n.tmax_scale
        );
        for s in w.slices() {
            for v in s {
                writeln!(out, "{v}").expect("write to string");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Artifact(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(ARTIFACT_MAGIC) {
            return Err(bad("missing header"));
        }
        let mut fields = |tag: &str, n: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(tag) {
                return Err(bad(&format!("expected {tag} line")));
            }
            let vals = parts
                .map(|p| p.parse::<f64>().map_err(|e| bad(&e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != n {
                return Err(bad(&format!("{tag} needs {n} values")));
            }
            Ok(vals)
        };
        let dims = fields("dims", 3)?;
        let weather = fields("weather", 1)?[0] != 0.0;
        let norm = fields("norm", 4)?;
        let [d, h, o] = [dims[0], dims[1], dims[2]].map(|v| v as usize);
        let mut weights = LstmWeights::zeros(d, h, o);
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|e| bad(&e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != weights.param_count() {
            return Err(bad(&format!(
                "expected {} parameters, found {}",
                weights.param_count(),
                values.len()
            )));
        }
        let mut it = values.into_iter();
        for s in weights.slices_mut() {
            for v in s.iter_mut() {
                *v = it.next().expect("counted");
            }
        }
        weights.validate()?;
        Ok(Self {
            weights,
            norm: Normalization {
                count_mean: norm[0],
                count_scale: norm[1],
                tmax_mean: norm[2],
                tmax_scale: norm[3],
            },
            use_weather: weather,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Trains once on the training span; each forecast encodes the last week
/// of observed context.
#[derive(Debug, Clone)]
pub struct LstmForecaster {
    pub config: TrainConfig,
    pub artifact: Option<LstmArtifact>,
    pub loss_trace: Vec<f64>,
}

impl LstmForecaster {
    pub fn new(config: TrainConfig) -> Self {
        Self {
            config,
            artifact: None,
            loss_trace: Vec::new(),
        }
    }

    pub fn from_artifact(config: TrainConfig, artifact: LstmArtifact) -> Self {
        Self {
            config,
            artifact: Some(artifact),
            loss_trace: Vec::new(),
        }
    }
}

impl Forecaster for LstmForecaster {
    fn context_hours(&self) -> usize {
        INPUT_HOURS
    }

    fn fit(&mut self, train: SeriesView<'_>) -> Result<()> {
        self.config.validate()?;
        let norm = Normalization::from_view(&train);
        let windows = make_windows(
            &train,
            self.config.k_days,
            self.config.stride,
            &norm,
            self.config.use_weather,
        )?;
        let outcome = train_on_windows(&windows, &self.config)?;
        self.loss_trace = outcome.loss_trace;
        self.artifact = Some(LstmArtifact {
            weights: outcome.weights,
            norm,
            use_weather: self.config.use_weather,
        });
        Ok(())
    }

    fn forecast(&mut self, context: SeriesView<'_>, horizon: usize) -> Result<ForecastResult> {
        let art = self.artifact.as_ref().ok_or(Error::NotFitted)?;
        if horizon > art.weights.out_dim() {
            return Err(Error::invalid(
                "horizon",
                format!("{horizon} exceeds the trained output length {}", art.weights.out_dim()),
            ));
        }
        let recent = context.tail(INPUT_HOURS).ok_or(Error::InsufficientData {
            required: INPUT_HOURS,
            actual: context.len(),
        })?;
        if !recent.all_valid() {
            return Err(Error::MaskedInput);
        }
        if art.use_weather && recent.tmax.is_none() {
            return Err(Error::invalid("weather", "context has no temperature feature"));
        }
        let inputs: Vec<Vec<f64>> = (0..INPUT_HOURS)
            .map(|t| feature_vector(&recent, t, &art.norm, art.use_weather))
            .collect();
        let h = encode_window(&inputs, &art.weights);
        let point = predict_head(&h, &art.weights, &art.norm)
            .into_iter()
            .take(horizon)
            .map(|v| v.max(0.0))
            .collect();
        ForecastResult::new(context.end().add_hours(-1), point, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_windows(n: usize, len: usize, d: usize, o: usize, seed: u64) -> Vec<TrainingWindow> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| TrainingWindow {
                inputs: (0..len)
                    .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
                    .collect(),
                targets: (0..o).map(|_| r.random_range(-1.0..1.0)).collect(),
            })
            .collect()
    }

    #[test]
    fn zero_weights_fixed_point() {
        let w = LstmWeights::zeros(2, 4, 3);
        let (h, c) = lstm_cell(
            &DVector::zeros(4),
            &DVector::zeros(4),
            &DVector::from_vec(vec![3.0, -2.0]),
            &w,
        );
        assert_eq!(h, DVector::zeros(4));
        assert_eq!(c, DVector::zeros(4));
    }

    #[test]
    fn scalar_hand_case() {
        let mut w = LstmWeights::zeros(1, 1, 1);
        w.wx.copy_from_slice(&[0.5, -0.3, 0.8, 0.1]);
        w.wh.copy_from_slice(&[0.2, 0.4, -0.6, 0.7]);
        w.bias.copy_from_slice(&[0.1, 0.2, -0.1, 0.05]);
        let (h0, c0, x) = (0.3, -0.4, 1.5);
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x + 0.2 * h0 + 0.1);
        let f = s(-0.3 * x + 0.4 * h0 + 0.2);
        let g = (0.8 * x - 0.6 * h0 - 0.1).tanh();
        let o = s(0.1 * x + 0.7 * h0 + 0.05);
        let c1 = f * c0 + i * g;
        let h1 = o * c1.tanh();
        let (h, c) = lstm_cell(
            &DVector::from_vec(vec![h0]),
            &DVector::from_vec(vec![c0]),
            &DVector::from_vec(vec![x]),
            &w,
        );
        assert!((h[0] - h1).abs() < 1e-12 && (c[0] - c1).abs() < 1e-12);
    }

    #[test]
    fn head_is_affine_and_sized() {
        let w = LstmWeights::random(1, 5, 72, &mut rng(1));
        let h1 = DVector::from_fn(5, |i, _| i as f64 * 0.1);
        let h2 = DVector::from_fn(5, |i, _| 1.0 - i as f64 * 0.2);
        let (a, b) = (0.7, -1.3);
        let lhs = head_output(&(&h1 * a + &h2 * b), &w);
        let rhs = head_output(&h1, &w) * a + head_output(&h2, &w) * b - &w.head_bias * (a + b - 1.0);
        assert!((lhs - rhs).amax() < 1e-12);
        assert_eq!(head_output(&h1, &w).len(), 72);

        let mut zero_head = w.clone();
        zero_head.head.fill(0.0);
        let norm = Normalization {
            count_mean: 8.0,
            count_scale: 2.0,
            ..Normalization::default()
        };
        let out = predict_head(&h1, &zero_head, &norm);
        for (o, b) in out.iter().zip(w.head_bias.iter()) {
            assert!((o - (b * 2.0 + 8.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn order_matters() {
        let w = LstmWeights::random(1, 6, 2, &mut rng(2));
        let win = &random_windows(1, 20, 1, 2, 3)[0];
        let mut rev = win.inputs.clone();
        rev.reverse();
        assert_ne!(encode_window(&win.inputs, &w), encode_window(&rev, &w));
    }

    #[test]
    fn perfect_prediction_zero_loss() {
        let w = LstmWeights::random(1, 4, 3, &mut rng(4));
        let mut windows = random_windows(3, 10, 1, 3, 5);
        for win in &mut windows {
            win.targets = head_output(&encode_window(&win.inputs, &w), &w)
                .iter()
                .copied()
                .collect();
        }
        let (loss, grad) = loss_and_gradients(&windows, &w).unwrap();
        assert!(loss < 1e-24);
        assert!(grad.head_bias.amax() < 1e-12);
    }

    #[test]
    fn batch_forward_matches_single() {
        let w = LstmWeights::random(2, 5, 4, &mut rng(6));
        let windows = random_windows(11, 12, 2, 4, 7);
        let direct: f64 = windows
            .iter()
            .map(|win| {
                let y = head_output(&encode_window(&win.inputs, &w), &w);
                y.iter().zip(&win.targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
            / windows.len() as f64;
        let (loss, _) = loss_and_gradients(&windows, &w).unwrap();
        assert!((loss - direct).abs() < 1e-12 * direct.max(1.0));
        assert!((batch_loss(&windows, &w).unwrap() - direct).abs() < 1e-12 * direct.max(1.0));
    }

    #[test]
    fn make_windows_counting_and_masking() {
        let start = crate::timeseries::HourStamp::new(2004, 1, 5, 0).unwrap();
        let counts: Vec<u32> = (0..240).map(|i| (i % 7) as u32).collect();
        let tmax = vec![20.0; 240];
        let norm = Normalization::default();
        let view = |valid: &[bool], weather: bool| -> Vec<TrainingWindow> {
            let v = SeriesView {
                start,
                counts: &counts,
                valid,
                tmax: weather.then_some(tmax.as_slice()),
            };
            make_windows(&v, 3, 24, &norm, weather).unwrap()
        };
        let mut valid = vec![true; 240];
        assert_eq!(view(&valid, false).len(), 1);
        let no_weather = SeriesView {
            start,
            counts: &counts,
            valid: &valid,
            tmax: None,
        };
        assert!(make_windows(&no_weather, 3, 24, &norm, true).is_err());
        let w = view(&valid, true);
        assert_eq!(w[0].inputs[0].len(), 2);
        assert_eq!(w[0].targets.len(), 72);
        valid[200] = false;
        assert!(view(&valid, false).is_empty());
    }

    #[test]
    fn artifact_round_trip() {
        let art = LstmArtifact {
            weights: LstmWeights::random(2, 3, 24, &mut rng(8)),
            norm: Normalization {
                count_mean: 8.6,
                count_scale: 3.1,
                tmax_mean: 21.0,
                tmax_scale: 5.5,
            },
            use_weather: true,
        };
        assert_eq!(LstmArtifact::from_text(&art.to_text()).unwrap(), art);
        assert!(LstmArtifact::from_text("nonsense").is_err());
        let truncated: String = art.to_text().lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(LstmArtifact::from_text(&truncated).is_err());
    }
}
