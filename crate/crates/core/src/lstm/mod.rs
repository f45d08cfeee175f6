//! LSTM autoencoder with hand-written forward pass and backpropagation
//! through time.
//!
//! Encoder: dense `N → d₀` (tanh) followed by stacked LSTM layers whose last
//! hidden sequence is the latent embedding `Y` (T×C). Decoder: stacked LSTM
//! layers fed with `Y`, then a dense `h → N` tanh head. All parameters live
//! in one flat vector so the optimizer, checkpoints and gradient checks can
//! treat them uniformly.

mod adam;
mod checkpoint;
mod train;

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::stream_rng;
use crate::types::{DataMatrix, LatentEmbedding};

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC};
pub use train::{train, SessionScale, TrainConfig, TrainReport};

/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

/// Layer sizes of the autoencoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    /// Output width of the encoder's dense layer.
    pub fc_size: usize,
    /// Encoder LSTM sizes; the last one is the latent order C.
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            fc_size: 64,
            encoder: vec![64, 32, 16],
            decoder: vec![32, 64, 64],
        }
    }
}

impl Architecture {
    /// Default layout with the bottleneck set to `c`.
    pub fn with_latent(c: usize) -> Self {
        let mut a = Self::default();
        *a.encoder.last_mut().expect("non-empty") = c;
        a
    }

    pub fn latent(&self) -> usize {
        self.encoder.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fc_size == 0 || self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::InvalidInput(
                "architecture needs a dense size and at least one encoder and decoder layer".into(),
            ));
        }
        if self.encoder.iter().chain(&self.decoder).any(|&h| h == 0) {
            return Err(Error::InvalidInput("LSTM layer sizes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LayerKind {
    Dense,
    Lstm,
}

/// Position of one layer's parameters in the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Layer {
    kind: LayerKind,
    name: String,
    inputs: usize,
    /// Output width (hidden size for LSTM layers).
    size: usize,
    offset: usize,
}

impl Layer {
    fn len(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.size * self.inputs + self.size,
            LayerKind::Lstm => 4 * self.size * (self.inputs + self.size + 1),
        }
    }
}

/// Gate parameters of one LSTM layer, gate order (i, f, g, o).
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayerParams {
    /// 4h×d input weights.
    pub w_x: Array2<f64>,
    /// 4h×h recurrent weights.
    pub w_h: Array2<f64>,
    /// 4h biases.
    pub b: Array1<f64>,
}

impl LstmLayerParams {
    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn inputs(&self) -> usize {
        self.w_x.ncols()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell(
    x: ArrayView1<'_, f64>,
    h_prev: ArrayView1<'_, f64>,
    c_prev: ArrayView1<'_, f64>,
    p: &LstmLayerParams,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let h = p.hidden();
    if p.w_h.nrows() != 4 * h || p.w_x.nrows() != 4 * h || p.b.len() != 4 * h {
        return Err(Error::Shape("LSTM parameters must have 4h rows".into()));
    }
    if x.len() != p.inputs() || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Shape(format!(
            "LSTM cell expects input {} and state {h}, got {} / {} / {}",
            p.inputs(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let a = p.w_x.dot(&x) + p.w_h.dot(&h_prev) + &p.b;
    let mut h_t = Array1::zeros(h);
    let mut c_t = Array1::zeros(h);
    for j in 0..h {
        let i = sigmoid(a[j]);
        let f = sigmoid(a[h + j]);
        let g = a[2 * h + j].tanh();
        let o = sigmoid(a[3 * h + j]);
        c_t[j] = f * c_prev[j] + i * g;
        h_t[j] = o * c_t[j].tanh();
    }
    if let Some(j) = h_t.iter().chain(c_t.iter()).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            layer: format!("lstm cell unit {}", j % h),
            step: 0,
        });
    }
    Ok((h_t, c_t))
}

/// Activations of one LSTM layer over a sequence.
#[derive(Clone, Debug)]
struct LstmCache {
    /// Activated gates (i, f, g, o), T×4h.
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// T×N output in the scaled domain.
    pub reconstruction: Array2<f64>,
    /// T×C latent embedding.
    pub embedding: Array2<f64>,
    fc_out: Array2<f64>,
    lstm: Vec<LstmCache>,
}

/// The autoencoder: architecture plus flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmAe {
    n_inputs: usize,
    arch: Architecture,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

impl LstmAe {
    fn layout(n_inputs: usize, arch: &Architecture) -> Result<(Vec<Layer>, usize)> {
        arch.validate()?;
        if n_inputs == 0 {
            return Err(Error::InvalidInput("model needs at least one input pixel".into()));
        }
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |kind, name: String, inputs, size| {
            let l = Layer {
                kind,
                name,
                inputs,
                size,
                offset,
            };
            offset += l.len();
            layers.push(l);
        };
        push(LayerKind::Dense, "enc_fc".into(), n_inputs, arch.fc_size);
        let mut d = arch.fc_size;
        for (k, &h) in arch.encoder.iter().enumerate() {
            push(LayerKind::Lstm, format!("enc_lstm{k}"), d, h);
            d = h;
        }
        for (k, &h) in arch.decoder.iter().enumerate() {
            push(LayerKind::Lstm, format!("dec_lstm{k}"), d, h);
            d = h;
        }
        push(LayerKind::Dense, "dec_fc".into(), d, n_inputs);
        Ok((layers, offset))
    }

    /// All parameters zero.
    pub fn zeros(n_inputs: usize, arch: &Architecture) -> Result<Self> {
        let (layers, total) = Self::layout(n_inputs, arch)?;
        Ok(LstmAe {
            n_inputs,
            arch: arch.clone(),
            layers,
            params: vec![0.0; total],
        })
    }

    /// Seeded initialization: weights uniform in ±1/√fan (hidden size for
    /// LSTM layers, fan-in for dense layers), biases zero except the
    /// forget gate at [`FORGET_BIAS`].
    pub fn new(n_inputs: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(n_inputs, arch)?;
        let mut rng = stream_rng(seed, &[0x15]);
        for l in &model.layers {
            let p = &mut model.params[l.offset..l.offset + l.len()];
            match l.kind {
                LayerKind::Dense => {
                    let bound = 1.0 / (l.inputs as f64).sqrt();
                    let nw = l.size * l.inputs;
                    p[..nw].iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
                }
                LayerKind::Lstm => {
                    let h = l.size;
                    let bound = 1.0 / (h as f64).sqrt();
                    let nw = 4 * h * (l.inputs + h);
                    p[..nw].iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
                    p[nw + h..nw + 2 * h].fill(FORGET_BIAS);
                }
            }
        }
        Ok(model)
    }

    /// Rebuilds a model from its parts; the parameter count must match.
    pub fn from_params(n_inputs: usize, arch: &Architecture, params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(n_inputs, arch)?;
        if params.len() != m.params.len() {
            return Err(Error::Shape(format!(
                "architecture needs {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn latent(&self) -> usize {
        self.arch.latent()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Names and parameter ranges of each layer, in forward order.
    pub fn layer_ranges(&self) -> Vec<(String, std::ops::Range<usize>)> {
        self.layers
            .iter()
            .map(|l| (l.name.clone(), l.offset..l.offset + l.len()))
            .collect()
    }

    fn dense_view(&self, l: &Layer) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let nw = l.size * l.inputs;
        let p = &self.params[l.offset..l.offset + l.len()];
        (
            ArrayView2::from_shape((l.size, l.inputs), &p[..nw]).expect("layout"),
            ArrayView1::from(&p[nw..]),
        )
    }

    fn lstm_view(&self, l: &Layer) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let h = l.size;
        let (nx, nh) = (4 * h * l.inputs, 4 * h * h);
        let p = &self.params[l.offset..l.offset + l.len()];
        (
            ArrayView2::from_shape((4 * h, l.inputs), &p[..nx]).expect("layout"),
            ArrayView2::from_shape((4 * h, h), &p[nx..nx + nh]).expect("layout"),
            ArrayView1::from(&p[nx + nh..]),
        )
    }

    /// Copy of the gate parameters of LSTM layer `k` (encoder layers first).
    pub fn lstm_params(&self, k: usize) -> Option<LstmLayerParams> {
        let l = self.layers.iter().filter(|l| l.kind == LayerKind::Lstm).nth(k)?;
        let (w_x, w_h, b) = self.lstm_view(l);
        Some(LstmLayerParams {
            w_x: w_x.to_owned(),
            w_h: w_h.to_owned(),
            b: b.to_owned(),
        })
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.n_inputs {
            return Err(Error::Shape(format!(
                "model expects {} pixels, got {}",
                self.n_inputs,
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Shape("empty sequence".into()));
        }
        Ok(())
    }

    fn encoder_layers(&self) -> &[Layer] {
        &self.layers[1..1 + self.arch.encoder.len()]
    }

    fn decoder_layers(&self) -> &[Layer] {
        let e = 1 + self.arch.encoder.len();
        &self.layers[e..e + self.arch.decoder.len()]
    }

    fn run_encoder(&self, x: ArrayView2<'_, f64>, caches: &mut Vec<LstmCache>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let fc = &self.layers[0];
        let fc_out = dense_forward(self, fc, x)?;
        let mut input = fc_out.clone();
        for l in self.encoder_layers() {
            let cache = lstm_forward(self, l, input.view())?;
            input = cache.h.clone();
            caches.push(cache);
        }
        Ok(fc_out)
    }

    /// Full forward pass on an already scaled T×N input.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Forward> {
        let mut lstm = Vec::with_capacity(self.layers.len() - 2);
        let fc_out = self.run_encoder(x, &mut lstm)?;
        let embedding = lstm.last().expect("encoder layer").h.clone();
        let mut input = embedding.clone();
        for l in self.decoder_layers() {
            let cache = lstm_forward(self, l, input.view())?;
            input = cache.h.clone();
            lstm.push(cache);
        }
        let head = self.layers.last().expect("head");
        let reconstruction = dense_forward(self, head, input.view())?;
        Ok(Forward {
            reconstruction,
            embedding,
            fc_out,
            lstm,
        })
    }

    /// Latent embedding of an already scaled input; the decoder is skipped.
    pub fn encode_scaled(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut lstm = Vec::with_capacity(self.arch.encoder.len());
        self.run_encoder(x, &mut lstm)?;
        Ok(lstm.pop().expect("encoder layer").h)
    }

    /// Latent embedding of a session, after its own [`SessionScale`].
    pub fn encode(&self, m: &DataMatrix) -> Result<LatentEmbedding> {
        let scale = SessionScale::fit(m.values());
        LatentEmbedding::new(self.encode_scaled(scale.apply(m.values()).view())?)
    }

    /// Reconstruction of a session in its original units.
    pub fn reconstruct(&self, m: &DataMatrix) -> Result<DataMatrix> {
        let scale = SessionScale::fit(m.values());
        let f = self.forward(scale.apply(m.values()).view())?;
        m.with_values(scale.invert(f.reconstruction.view()))
    }

    /// Gradient of [`mse_loss`] with respect to every parameter, in the
    /// layout of [`LstmAe::params`].
    pub fn backward(&self, fwd: &Forward, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.backward_scaled(fwd, x, 1.0)
    }

    /// Gradient of `loss_scale · mse_loss`.
    pub fn backward_scaled(&self, fwd: &Forward, x: ArrayView2<'_, f64>, loss_scale: f64) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if fwd.reconstruction.dim() != x.dim() {
            return Err(Error::Shape("forward cache does not match the input".into()));
        }
        let mut grad = vec![0.0; self.params.len()];
        let scale = 2.0 * loss_scale / x.len() as f64;
        let mut d_out = (&fwd.reconstruction - &x) * scale;

        let n_lstm = fwd.lstm.len();
        let head = self.layers.last().expect("head");
        let head_in = fwd.lstm[n_lstm - 1].h.view();
        let mut d = dense_backward(self, head, head_in, fwd.reconstruction.view(), &mut d_out, &mut grad, true)
            .expect("input gradient requested");

        let lstm_layers = &self.layers[1..self.layers.len() - 1];
        for (k, l) in lstm_layers.iter().enumerate().rev() {
            let input = if k == 0 { fwd.fc_out.view() } else { fwd.lstm[k - 1].h.view() };
            d = lstm_backward(self, l, &fwd.lstm[k], input, d.view(), &mut grad);
        }
        let mut d_fc = d;
        dense_backward(self, &self.layers[0], x, fwd.fc_out.view(), &mut d_fc, &mut grad, false);
        Ok(grad)
    }
}

fn non_finite_row(a: &Array2<f64>) -> Option<usize> {
    a.axis_iter(Axis(0)).position(|r| r.iter().any(|v| !v.is_finite()))
}

fn dense_forward(model: &LstmAe, l: &Layer, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (w, b) = model.dense_view(l);
    let mut out = input.dot(&w.t());
    out += &b;
    out.mapv_inplace(f64::tanh);
    if let Some(step) = non_finite_row(&out) {
        return Err(Error::NonFinite {
            layer: l.name.clone(),
            step,
        });
    }
    Ok(out)
}

/// Accumulates the dense layer's gradients; `d_out` is overwritten with the
/// pre-activation gradient. Returns the input gradient when requested.
fn dense_backward(
    model: &LstmAe,
    l: &Layer,
    input: ArrayView2<'_, f64>,
    out: ArrayView2<'_, f64>,
    d_out: &mut Array2<f64>,
    grad: &mut [f64],
    want_input: bool,
) -> Option<Array2<f64>> {
    let (w, _) = model.dense_view(l);
    ndarray::Zip::from(&mut *d_out).and(out).for_each(|d, &y| *d *= 1.0 - y * y);
    let nw = l.size * l.inputs;
    let g = &mut grad[l.offset..l.offset + l.len()];
    let dw = d_out.t().dot(&input);
    g[..nw].copy_from_slice(dw.as_slice().expect("standard layout"));
    let db = d_out.sum_axis(Axis(0));
    g[nw..].copy_from_slice(db.as_slice().expect("contiguous"));
    want_input.then(|| d_out.dot(&w))
}

fn lstm_forward(model: &LstmAe, l: &Layer, input: ArrayView2<'_, f64>) -> Result<LstmCache> {
    let (w_x, w_h, b) = model.lstm_view(l);
    let (t, h) = (input.nrows(), l.size);
    let mut gates = input.dot(&w_x.t());
    gates += &b;
    let mut c = Array2::zeros((t, h));
    let mut tanh_c = Array2::zeros((t, h));
    let mut hs = Array2::zeros((t, h));
    for step in 0..t {
        if step > 0 {
            general_mat_vec_mul(1.0, &w_h, &hs.row(step - 1), 1.0, &mut gates.row_mut(step));
        }
        let row = gates.row_mut(step);
        let gr = row.into_slice().expect("contiguous");
        for j in 0..h {
            let i = sigmoid(gr[j]);
            let f = sigmoid(gr[h + j]);
            let g = gr[2 * h + j].tanh();
            let o = sigmoid(gr[3 * h + j]);
            gr[j] = i;
            gr[h + j] = f;
            gr[2 * h + j] = g;
            gr[3 * h + j] = o;
            let cp = if step > 0 { c[(step - 1, j)] } else { 0.0 };
            let cv = f * cp + i * g;
            let tc = cv.tanh();
            c[(step, j)] = cv;
            tanh_c[(step, j)] = tc;
            hs[(step, j)] = o * tc;
        }
        if hs.row(step).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                layer: l.name.clone(),
                step,
            });
        }
    }
    Ok(LstmCache {
        gates,
        c,
        tanh_c,
        h: hs,
    })
}

/// Backpropagation through time for one layer. `d_h` is the loss gradient
/// with respect to the layer's hidden sequence; returns the gradient with
/// respect to its input sequence.
fn lstm_backward(
    model: &LstmAe,
    l: &Layer,
    cache: &LstmCache,
    input: ArrayView2<'_, f64>,
    d_h: ArrayView2<'_, f64>,
    grad: &mut [f64],
) -> Array2<f64> {
    let (w_x, w_h, _) = model.lstm_view(l);
    let w_h_t = w_h.t().as_standard_layout().into_owned();
    let (t, h) = (input.nrows(), l.size);
    let mut d_gates = Array2::<f64>::zeros((t, 4 * h));
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dc_next = Array1::<f64>::zeros(h);
    for step in (0..t).rev() {
        let gr = cache.gates.row(step);
        let mut dg = d_gates.row_mut(step);
        for j in 0..h {
            let (i, f, g, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
            let tc = cache.tanh_c[(step, j)];
            let dh = d_h[(step, j)] + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            let cp = if step > 0 { cache.c[(step - 1, j)] } else { 0.0 };
            dc_next[j] = dc * f;
            dg[j] = dc * g * i * (1.0 - i);
            dg[h + j] = dc * cp * f * (1.0 - f);
            dg[2 * h + j] = dc * i * (1.0 - g * g);
            dg[3 * h + j] = d_o * o * (1.0 - o);
        }
        general_mat_vec_mul(1.0, &w_h_t, &dg, 0.0, &mut dh_next);
    }
    let (nx, nh) = (4 * h * l.inputs, 4 * h * h);
    let g = &mut grad[l.offset..l.offset + l.len()];
    let dwx = d_gates.t().dot(&input);
    g[..nx].copy_from_slice(dwx.as_slice().expect("standard layout"));
    if t > 1 {
        let dwh = d_gates.slice(s![1.., ..]).t().dot(&cache.h.slice(s![..t - 1, ..]));
        g[nx..nx + nh].copy_from_slice(dwh.as_slice().expect("standard layout"));
    }
    let db = d_gates.sum_axis(Axis(0));
    g[nx + nh..].copy_from_slice(db.as_slice().expect("contiguous"));
    d_gates.dot(&w_x)
}

/// Mean squared error over all entries.
pub fn mse_loss(x_hat: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>) -> Result<f64> {
    if x_hat.dim() != x.dim() {
        return Err(Error::Shape(format!(
            "mse_loss: shapes {:?} and {:?} differ",
            x_hat.dim(),
            x.dim()
        )));
    }
    if x.is_empty() {
        return Err(Error::Shape("mse_loss of empty matrices".into()));
    }
    Ok(ndarray::Zip::from(&x_hat)
        .and(&x)
        .fold(0.0, |acc, a, b| acc + (a - b) * (a - b))
        / x.len() as f64)
}
