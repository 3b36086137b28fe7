//! Small feed-forward network toolkit: dense and 2-D convolution layers,
//! activations, dropout, max pooling, SGD and binary cross-entropy.
//!
//! Tensors are flat `f64` buffers in channel-major `(c, h, w)` order. Dense
//! layers read their input flattened.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Dense { input: usize, output: usize },
    /// Stride-1 convolution with explicit zero padding (top, bottom, left, right).
    Conv2d { in_ch: usize, out_ch: usize, kh: usize, kw: usize, pad: (usize, usize, usize, usize) },
    Relu,
    Sigmoid,
    /// Inverted dropout with drop probability `p`.
    Dropout { p: f64 },
    Flatten,
    /// Non-overlapping max pooling (stride = kernel, remainder dropped).
    MaxPool2d { kh: usize, kw: usize },
}

impl LayerKind {
    /// Padding that keeps the spatial size for a `kh x kw` kernel; the extra
    /// row/column of an even kernel goes to the bottom/right.
    pub fn same_pad(kh: usize, kw: usize) -> (usize, usize, usize, usize) {
        ((kh - 1) / 2, kh / 2, (kw - 1) / 2, kw / 2)
    }

    fn param_len(&self) -> usize {
        match *self {
            LayerKind::Dense { input, output } => input * output + output,
            LayerKind::Conv2d { in_ch, out_ch, kh, kw, .. } => out_ch * in_ch * kh * kw + out_ch,
            _ => 0,
        }
    }

    fn out_shape(&self, s: Shape) -> Result<Shape> {
        let n = s.0 * s.1 * s.2;
        Ok(match *self {
            LayerKind::Dense { input, output } => {
                if n != input {
                    return Err(Error::Shape(format!("dense expects {input} inputs, got {n}")));
                }
                (output, 1, 1)
            }
            LayerKind::Conv2d { in_ch, out_ch, kh, kw, pad } => {
                if s.0 != in_ch {
                    return Err(Error::Shape(format!("conv expects {in_ch} channels, got {}", s.0)));
                }
                let (h, w) = (s.1 + pad.0 + pad.1, s.2 + pad.2 + pad.3);
                if h < kh || w < kw {
                    return Err(Error::Shape(format!("conv kernel {kh}x{kw} larger than padded input {h}x{w}")));
                }
                (out_ch, h - kh + 1, w - kw + 1)
            }
            LayerKind::MaxPool2d { kh, kw } => {
                if s.1 < kh || s.2 < kw {
                    return Err(Error::Shape(format!("pool {kh}x{kw} larger than input {}x{}", s.1, s.2)));
                }
                (s.0, s.1 / kh, s.2 / kw)
            }
            LayerKind::Flatten => (n, 1, 1),
            LayerKind::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::Shape(format!("dropout probability {p} outside [0, 1)")));
                }
                s
            }
            LayerKind::Relu | LayerKind::Sigmoid => s,
        })
    }

    fn spec(&self) -> String {
        match *self {
            LayerKind::Dense { input, output } => format!("dense {input} {output}"),
            LayerKind::Conv2d { in_ch, out_ch, kh, kw, pad } => {
                format!("conv {in_ch} {out_ch} {kh} {kw} {} {} {} {}", pad.0, pad.1, pad.2, pad.3)
            }
            LayerKind::Relu => "relu".into(),
            LayerKind::Sigmoid => "sigmoid".into(),
            LayerKind::Dropout { p } => format!("dropout {p}"),
            LayerKind::Flatten => "flatten".into(),
            LayerKind::MaxPool2d { kh, kw } => format!("maxpool {kh} {kw}"),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<usize> {
            parts.get(i).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse(format!("bad layer spec '{s}'")))
        };
        Ok(match parts.first().copied() {
            Some("dense") => LayerKind::Dense { input: num(1)?, output: num(2)? },
            Some("conv") => LayerKind::Conv2d {
                in_ch: num(1)?,
                out_ch: num(2)?,
                kh: num(3)?,
                kw: num(4)?,
                pad: (num(5)?, num(6)?, num(7)?, num(8)?),
            },
            Some("relu") => LayerKind::Relu,
            Some("sigmoid") => LayerKind::Sigmoid,
            Some("dropout") => LayerKind::Dropout {
                p: parts.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse(format!("bad layer spec '{s}'")))?,
            },
            Some("flatten") => LayerKind::Flatten,
            Some("maxpool") => LayerKind::MaxPool2d { kh: num(1)?, kw: num(2)? },
            _ => return Err(Error::Parse(format!("unknown layer '{s}'"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub kind: LayerKind,
    pub params: Vec<f64>,
    pub grads: Vec<f64>,
    pub in_shape: Shape,
    pub out_shape: Shape,
    mask: Vec<f64>,
    argmax: Vec<usize>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>, mask: Option<&[f64]>, argmax: Option<&mut Vec<usize>>) {
        out.clear();
        let (c, h, w) = self.in_shape;
        match self.kind {
            LayerKind::Dense { input, output } => {
                let (wt, b) = self.params.split_at(input * output);
                out.extend(b.iter().copied());
                for (o, row) in wt.chunks_exact(input).enumerate() {
                    out[o] += dot(row, x);
                }
            }
            LayerKind::Conv2d { in_ch, out_ch, kh, kw, pad } => {
                let (_, oh, ow) = self.out_shape;
                let k = in_ch * kh * kw;
                let (wt, b) = self.params.split_at(out_ch * k);
                out.resize(out_ch * oh * ow, 0.0);
                // one output row of zero-padded patches at a time
                let mut patch = vec![0.0; ow * k];
                for y in 0..oh {
                    for (xx, p) in patch.chunks_exact_mut(k).enumerate() {
                        for (r, row) in p.chunks_exact_mut(kw).enumerate() {
                            let (i, ky) = (r / kh, r % kh);
                            let sy = (y + ky).wrapping_sub(pad.0);
                            if sy >= h {
                                row.fill(0.0);
                                continue;
                            }
                            let src = &x[(i * h + sy) * w..(i * h + sy + 1) * w];
                            for (kx, v) in row.iter_mut().enumerate() {
                                let sx = (xx + kx).wrapping_sub(pad.2);
                                *v = if sx < w { src[sx] } else { 0.0 };
                            }
                        }
                    }
                    for (o, wrow) in wt.chunks_exact(k).enumerate() {
                        let orow = &mut out[(o * oh + y) * ow..(o * oh + y + 1) * ow];
                        for (v, p) in orow.iter_mut().zip(patch.chunks_exact(k)) {
                            *v = b[o] + dot(wrow, p);
                        }
                    }
                }
            }
            LayerKind::Relu => out.extend(x.iter().map(|&v| v.max(0.0))),
            LayerKind::Sigmoid => out.extend(x.iter().map(|&v| sigmoid(v))),
            LayerKind::Dropout { .. } => match mask {
                Some(m) => out.extend(x.iter().zip(m).map(|(a, b)| a * b)),
                None => out.extend_from_slice(x),
            },
            LayerKind::Flatten => out.extend_from_slice(x),
            LayerKind::MaxPool2d { kh, kw } => {
                let (_, oh, ow) = self.out_shape;
                let mut am = argmax;
                if let Some(a) = am.as_deref_mut() {
                    a.clear();
                }
                for ch in 0..c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut bi = 0;
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    let idx = ch * h * w + (y * kh + dy) * w + xx * kw + dx;
                                    if x[idx] > best {
                                        best = x[idx];
                                        bi = idx;
                                    }
                                }
                            }
                            out.push(best);
                            if let Some(a) = am.as_deref_mut() {
                                a.push(bi);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, x: &[f64], y: &[f64], g: &[f64]) -> Vec<f64> {
        let (_, h, w) = self.in_shape;
        match self.kind {
            LayerKind::Dense { input, output } => {
                let mut gx = vec![0.0; input];
                let (gw, gb) = self.grads.split_at_mut(input * output);
                for o in 0..output {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    gb[o] += go;
                    let row = &self.params[o * input..(o + 1) * input];
                    let grow = &mut gw[o * input..(o + 1) * input];
                    for k in 0..input {
                        grow[k] += go * x[k];
                        gx[k] += go * row[k];
                    }
                }
                gx
            }
            LayerKind::Conv2d { in_ch, out_ch, kh, kw, pad } => {
                let (_, oh, ow) = self.out_shape;
                let mut gx = vec![0.0; x.len()];
                let nw = out_ch * in_ch * kh * kw;
                let (gw, gb) = self.grads.split_at_mut(nw);
                for o in 0..out_ch {
                    let gplane = &g[o * oh * ow..(o + 1) * oh * ow];
                    gb[o] += gplane.iter().sum::<f64>();
                    for i in 0..in_ch {
                        let src = &x[i * h * w..(i + 1) * h * w];
                        let base = (o * in_ch + i) * kh * kw;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let wv = self.params[base + ky * kw + kx];
                                let y0 = pad.0.saturating_sub(ky);
                                let y1 = (h + pad.0).saturating_sub(ky).min(oh);
                                let x0 = pad.2.saturating_sub(kx);
                                let x1 = (w + pad.2).saturating_sub(kx).min(ow);
                                let mut acc = 0.0;
                                for yy in y0..y1 {
                                    let sy = yy + ky - pad.0;
                                    for xx in x0..x1 {
                                        let sx = xx + kx - pad.2;
                                        let gv = gplane[yy * ow + xx];
                                        acc += gv * src[sy * w + sx];
                                        gx[i * h * w + sy * w + sx] += gv * wv;
                                    }
                                }
                                gw[base + ky * kw + kx] += acc;
                            }
                        }
                    }
                }
                gx
            }
            LayerKind::Relu => x.iter().zip(g).map(|(&a, &b)| if a > 0.0 { b } else { 0.0 }).collect(),
            LayerKind::Sigmoid => y.iter().zip(g).map(|(&s, &b)| b * s * (1.0 - s)).collect(),
            LayerKind::Dropout { .. } => {
                if self.mask.len() == g.len() {
                    g.iter().zip(&self.mask).map(|(a, b)| a * b).collect()
                } else {
                    g.to_vec()
                }
            }
            LayerKind::Flatten => g.to_vec(),
            LayerKind::MaxPool2d { .. } => {
                let mut gx = vec![0.0; x.len()];
                for (k, &i) in self.argmax.iter().enumerate() {
                    gx[i] += g[k];
                }
                gx
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0; 4];
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    pub input_shape: Shape,
    pub layers: Vec<Layer>,
    pub training: bool,
    rng: ChaCha8Rng,
    acts: Vec<Vec<f64>>,
}

impl Network {
    /// Builds a network with uniform Glorot initialization and zero biases.
    pub fn new(input_shape: Shape, kinds: Vec<LayerKind>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape;
        let mut layers = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let out = kind.out_shape(shape)?;
            let n = kind.param_len();
            let mut params = vec![0.0; n];
            let (nw, fan_in, fan_out) = match kind {
                LayerKind::Dense { input, output } => (input * output, input, output),
                LayerKind::Conv2d { in_ch, out_ch, kh, kw, .. } => {
                    (out_ch * in_ch * kh * kw, in_ch * kh * kw, out_ch * kh * kw)
                }
                _ => (0, 1, 1),
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in params.iter_mut().take(nw) {
                *p = rng.random_range(-limit..limit);
            }
            layers.push(Layer {
                kind,
                params,
                grads: vec![0.0; n],
                in_shape: shape,
                out_shape: out,
                mask: Vec::new(),
                argmax: Vec::new(),
            });
            shape = out;
        }
        Ok(Network { input_shape, layers, training: false, rng, acts: Vec::new() })
    }

    pub fn input_len(&self) -> usize {
        let s = self.input_shape;
        s.0 * s.1 * s.2
    }

    pub fn output_len(&self) -> usize {
        let s = self.layers.last().map_or(self.input_shape, |l| l.out_shape);
        s.0 * s.1 * s.2
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params.len()).sum()
    }

    pub fn set_training(&mut self, on: bool) {
        self.training = on;
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Shape(format!("network expects {} inputs, got {}", self.input_len(), x.len())));
        }
        Ok(())
    }

    /// Forward pass that caches activations for [`Network::backward`].
    pub fn forward(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let n = self.layers.len();
        self.acts.resize(n + 1, Vec::new());
        self.acts[0].clear();
        self.acts[0].extend_from_slice(x);
        for i in 0..n {
            let training = self.training;
            let layer = &mut self.layers[i];
            if let LayerKind::Dropout { p } = layer.kind {
                layer.mask.clear();
                if training && p > 0.0 {
                    let keep = 1.0 / (1.0 - p);
                    let len = self.acts[i].len();
                    for _ in 0..len {
                        let m = if self.rng.random::<f64>() < p { 0.0 } else { keep };
                        layer.mask.push(m);
                    }
                }
            }
            let (before, after) = self.acts.split_at_mut(i + 1);
            let layer = &mut self.layers[i];
            let mask = if layer.mask.is_empty() { None } else { Some(std::mem::take(&mut layer.mask)) };
            let mut am = std::mem::take(&mut layer.argmax);
            layer.forward(&before[i], &mut after[0], mask.as_deref(), Some(&mut am));
            layer.argmax = am;
            if let Some(m) = mask {
                layer.mask = m;
            }
        }
        Ok(self.acts[n].clone())
    }

    /// Inference pass: no dropout, no caching.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward(&cur, &mut next, None, None);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Back-propagates `grad_out` (gradient of the loss w.r.t. the output of
    /// layer `upto - 1`) through layers `0..upto`, accumulating parameter
    /// gradients. Requires a preceding [`Network::forward`].
    fn backward_from(&mut self, upto: usize, grad_out: &[f64]) -> Result<()> {
        if self.acts.len() != self.layers.len() + 1 {
            return Err(Error::Training("backward without forward".into()));
        }
        let mut g = grad_out.to_vec();
        for i in (0..upto).rev() {
            let (x, y) = (&self.acts[i], &self.acts[i + 1]);
            g = self.layers[i].backward(x, y, &g);
        }
        Ok(())
    }

    pub fn backward(&mut self, grad_out: &[f64]) -> Result<()> {
        if grad_out.len() != self.output_len() {
            return Err(Error::Shape("output gradient has wrong length".into()));
        }
        self.backward_from(self.layers.len(), grad_out)
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.grads.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params.iter().copied()).collect()
    }

    pub fn grads(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.grads.iter().copied()).collect()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.param_count(), p.len())));
        }
        let mut k = 0;
        for l in &mut self.layers {
            let n = l.params.len();
            l.params.copy_from_slice(&p[k..k + n]);
            k += n;
        }
        Ok(())
    }

    /// Plain SGD: every parameter moves by `-lr` times its gradient.
    pub fn sgd_step(&mut self, lr: f64) -> Result<()> {
        if self.layers.iter().any(|l| l.grads.iter().any(|g| !g.is_finite())) {
            return Err(Error::Training("non-finite gradient".into()));
        }
        for l in &mut self.layers {
            for (p, g) in l.params.iter_mut().zip(&l.grads) {
                *p -= lr * g;
            }
        }
        Ok(())
    }

    /// Textual architecture description, one layer per line after the input shape.
    pub fn spec(&self) -> String {
        let s = self.input_shape;
        let mut out = format!("input {} {} {}\n", s.0, s.1, s.2);
        for l in &self.layers {
            out.push_str(&l.kind.spec());
            out.push('\n');
        }
        out
    }

    pub fn from_spec(spec: &str, seed: u64) -> Result<Self> {
        let mut lines = spec.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| Error::Parse("empty network spec".into()))?;
        let dims: Vec<usize> = head.split_whitespace().skip(1).filter_map(|v| v.parse().ok()).collect();
        if !head.starts_with("input") || dims.len() != 3 {
            return Err(Error::Parse(format!("bad input line '{head}'")));
        }
        let kinds = lines.map(LayerKind::parse).collect::<Result<Vec<_>>>()?;
        Network::new((dims[0], dims[1], dims[2]), kinds, seed)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.spec();
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        b.push(CHECKPOINT_VERSION);
        b.extend_from_slice(&fnv1a(spec.as_bytes()).to_le_bytes());
        b.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        b.extend_from_slice(spec.as_bytes());
        let params = self.params();
        b.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            b.extend_from_slice(&p.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (net, used) = Self::read_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Decode("trailing bytes after checkpoint".into()));
        }
        Ok(net)
    }

    /// Decodes a checkpoint at the start of `bytes`; returns it and its length.
    pub fn read_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let err = |m: &str| Error::Decode(format!("checkpoint: {m}"));
        let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(|| err("truncated"));
        if take(0, 4)? != CHECKPOINT_MAGIC {
            return Err(err("bad magic"));
        }
        if take(4, 1)?[0] != CHECKPOINT_VERSION {
            return Err(err("unsupported version"));
        }
        let digest = u64::from_le_bytes(take(5, 8)?.try_into().unwrap());
        let len = u32::from_le_bytes(take(13, 4)?.try_into().unwrap()) as usize;
        let spec = std::str::from_utf8(take(17, len)?).map_err(|_| err("spec is not utf-8"))?;
        if fnv1a(spec.as_bytes()) != digest {
            return Err(err("spec digest mismatch"));
        }
        let mut net = Network::from_spec(spec, 0)?;
        let mut at = 17 + len;
        let n = u64::from_le_bytes(take(at, 8)?.try_into().unwrap()) as usize;
        at += 8;
        if n != net.param_count() {
            return Err(err("parameter count does not match spec"));
        }
        let raw = take(at, 8 * n)?;
        let params: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        net.set_params(&params)?;
        Ok((net, at + 8 * n))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"EVNN";
pub const CHECKPOINT_VERSION: u8 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

const PROB_EPS: f64 = 1e-12;

/// Binary cross-entropy of prediction `p` for target `y`.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Forward + backward with a BCE loss on a single sigmoid output. When the
/// last layer is a sigmoid the gradient enters at its input as `p - y`.
pub fn bce_step(net: &mut Network, x: &[f64], y: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Training(format!("target {y} outside [0, 1]")));
    }
    let out = net.forward(x)?;
    if out.len() != 1 {
        return Err(Error::Shape("binary cross-entropy needs a single output".into()));
    }
    let p = out[0];
    let n = net.layers.len();
    if n > 0 && net.layers[n - 1].kind == LayerKind::Sigmoid {
        net.backward_from(n - 1, &[p - y])?;
    } else {
        let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        net.backward(&[(pc - y) / (pc * (1.0 - pc))])?;
    }
    Ok((bce(p, y), p))
}

/// Forward + backward with the loss `0.5 * |out - target|^2`.
pub fn mse_step(net: &mut Network, x: &[f64], target: &[f64]) -> Result<f64> {
    let out = net.forward(x)?;
    if out.len() != target.len() {
        return Err(Error::Shape("target length differs from output".into()));
    }
    let g: Vec<f64> = out.iter().zip(target).map(|(o, t)| o - t).collect();
    net.backward(&g)?;
    Ok(0.5 * g.iter().map(|v| v * v).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_dense_passes_input_through() {
        let mut net = Network::new((3, 1, 1), vec![LayerKind::Dense { input: 3, output: 3 }], 1).unwrap();
        net.set_params(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.predict(&[1.5, -2.0, 3.0]).unwrap(), vec![1.5, -2.0, 3.0]);
    }

    #[test]
    fn hand_computed_convolution() {
        let mut net = Network::new(
            (1, 3, 3),
            vec![LayerKind::Conv2d { in_ch: 1, out_ch: 1, kh: 2, kw: 2, pad: (0, 0, 0, 0) }],
            1,
        )
        .unwrap();
        net.set_params(&[1.0, 2.0, 3.0, 4.0, 0.5]).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        // top-left: 1*1 + 2*2 + 3*4 + 4*5 = 37
        assert_eq!(net.predict(&x).unwrap(), vec![37.5, 47.5, 67.5, 77.5]);
    }

    #[test]
    fn same_padding_keeps_size() {
        let net = Network::new(
            (2, 7, 8),
            vec![LayerKind::Conv2d { in_ch: 2, out_ch: 3, kh: 7, kw: 6, pad: LayerKind::same_pad(7, 6) }],
            1,
        )
        .unwrap();
        assert_eq!(net.layers[0].out_shape, (3, 7, 8));
    }

    #[test]
    fn sigmoid_output_in_open_interval() {
        let net = Network::new(
            (4, 1, 1),
            vec![LayerKind::Dense { input: 4, output: 1 }, LayerKind::Sigmoid],
            3,
        )
        .unwrap();
        for k in 0..20 {
            let x: Vec<f64> = (0..4).map(|i| ((k * 7 + i) as f64 - 30.0) * 0.1).collect();
            let p = net.predict(&x).unwrap()[0];
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn bce_at_half() {
        assert!((bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_net_at_target_has_zero_head_gradient() {
        let mut net = Network::new(
            (2, 1, 1),
            vec![LayerKind::Dense { input: 2, output: 1 }, LayerKind::Sigmoid],
            1,
        )
        .unwrap();
        net.set_params(&[0.0, 0.0, 0.0]).unwrap();
        net.zero_grad();
        bce_step(&mut net, &[1.0, 2.0], 0.5).unwrap();
        assert!(net.grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut net = Network::new((1, 1, 1), vec![LayerKind::Dense { input: 1, output: 1 }], 1).unwrap();
        net.set_params(&[1.0, 0.0]).unwrap();
        net.layers[0].grads = vec![2.0, 0.0];
        net.sgd_step(0.001).unwrap();
        assert!((net.params()[0] - 0.998).abs() < 1e-15);
        net.sgd_step(0.0).unwrap();
        assert!((net.params()[0] - 0.998).abs() < 1e-15);
        net.layers[0].grads = vec![f64::NAN, 0.0];
        assert!(net.sgd_step(0.1).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Network::new((3, 1, 1), vec![LayerKind::Dense { input: 4, output: 1 }], 1).is_err());
        let net = Network::new((3, 1, 1), vec![LayerKind::Dense { input: 3, output: 1 }], 1).unwrap();
        assert!(net.predict(&[1.0]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Network::new(
            (2, 4, 4),
            vec![
                LayerKind::Conv2d { in_ch: 2, out_ch: 3, kh: 3, kw: 3, pad: (1, 1, 1, 1) },
                LayerKind::Relu,
                LayerKind::MaxPool2d { kh: 2, kw: 2 },
                LayerKind::Flatten,
                LayerKind::Dropout { p: 0.25 },
                LayerKind::Dense { input: 12, output: 1 },
                LayerKind::Sigmoid,
            ],
            9,
        )
        .unwrap();
        let b = net.to_bytes();
        let back = Network::from_bytes(&b).unwrap();
        assert_eq!(back.params(), net.params());
        assert_eq!(back.spec(), net.spec());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Network::from_bytes(&bad).is_err());
        assert!(Network::from_bytes(&b[..b.len() - 3]).is_err());
    }

    #[test]
    fn dropout_is_inverted_and_off_at_inference() {
        let mut net = Network::new((1000, 1, 1), vec![LayerKind::Dropout { p: 0.25 }], 5).unwrap();
        let x = vec![1.0; 1000];
        assert_eq!(net.predict(&x).unwrap(), x);
        net.set_training(true);
        let y = net.forward(&x).unwrap();
        let zeros = y.iter().filter(|&&v| v == 0.0).count();
        assert!((200..300).contains(&zeros), "{zeros}");
        assert!(y.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
    }
}
