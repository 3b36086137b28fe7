//! Shear force from dot displacements: a linear model over the summed
//! displacement and a two-layer network over all per-dot displacements.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{mse_step, LayerKind, Network};

pub const HIDDEN: usize = 128;
pub const DROPOUT: f64 = 0.25;
pub const EPOCHS: usize = 50;
pub const BATCH: usize = 16;
pub const LEARNING_RATE: f64 = 0.001;
pub const SAMPLES_PER_TRAJECTORY: usize = 200;

/// One sample: displacements `[dx_0, dy_0, dx_1, dy_1, ...]` and the force.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceSample {
    pub disp: Vec<f64>,
    pub force: (f64, f64),
}

impl ForceSample {
    pub fn sums(&self) -> (f64, f64) {
        self.disp.chunks_exact(2).fold((0.0, 0.0), |(a, b), d| (a + d[0], b + d[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForceTrajectory {
    pub samples: Vec<ForceSample>,
}

impl ForceTrajectory {
    /// Evenly subsamples a recorded run to `count` points. `centers[i]` are
    /// the dot centers and `forces[i]` the force at tick `i`.
    pub fn from_run(
        centers: &[Vec<(f64, f64)>],
        rest: &[(f64, f64)],
        forces: &[(f64, f64)],
        count: usize,
    ) -> Result<Self> {
        if centers.len() != forces.len() || centers.is_empty() || count == 0 {
            return Err(Error::InvalidInput("run needs equal, non-empty center and force series".into()));
        }
        let n = centers.len();
        let samples = (0..count.min(n))
            .map(|k| {
                let i = (k + 1) * n / count.min(n) - 1;
                if centers[i].len() != rest.len() {
                    return Err(Error::Shape("dot count differs from rest positions".into()));
                }
                let disp = centers[i].iter().zip(rest).flat_map(|(c, r)| [c.0 - r.0, c.1 - r.1]).collect();
                Ok(ForceSample { disp, force: forces[i] })
            })
            .collect::<Result<_>>()?;
        Ok(ForceTrajectory { samples })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForceDataset {
    pub trajectories: Vec<ForceTrajectory>,
}

impl ForceDataset {
    /// Input dimension (2 x dot count); errors when samples disagree or a
    /// value is not finite.
    pub fn input_len(&self) -> Result<usize> {
        let mut len = None;
        for s in self.trajectories.iter().flat_map(|t| &t.samples) {
            if *len.get_or_insert(s.disp.len()) != s.disp.len() || s.disp.len() % 2 != 0 {
                return Err(Error::Shape("inconsistent displacement length".into()));
            }
            if !s.force.0.is_finite() || !s.force.1.is_finite() || s.disp.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite value in force dataset".into()));
            }
        }
        len.ok_or_else(|| Error::InvalidInput("empty force dataset".into()))
    }

    pub fn samples(&self) -> impl Iterator<Item = &ForceSample> {
        self.trajectories.iter().flat_map(|t| &t.samples)
    }

    /// CSV with columns `trajectory,fx,fy,d0x,d0y,...`.
    pub fn to_csv(&self) -> String {
        let n = self.trajectories.iter().flat_map(|t| t.samples.first()).map(|s| s.disp.len() / 2).next().unwrap_or(0);
        let mut out = String::from("trajectory,fx,fy");
        for k in 0..n {
            out.push_str(&format!(",d{k}x,d{k}y"));
        }
        out.push('\n');
        for (i, t) in self.trajectories.iter().enumerate() {
            for s in &t.samples {
                out.push_str(&format!("{i},{},{}", s.force.0, s.force.1));
                for v in &s.disp {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty force csv".into()))?;
        if !header.starts_with("trajectory,fx,fy") {
            return Err(Error::Parse("force csv header must start with trajectory,fx,fy".into()));
        }
        let cols = header.split(',').count();
        let mut ds = ForceDataset::default();
        let mut ids: Vec<String> = Vec::new();
        for (ln, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols {
                return Err(Error::Parse(format!("force csv line {}: {} fields, expected {cols}", ln + 2, f.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("force csv line {}: bad number '{s}'", ln + 2)));
            if ids.last().map(String::as_str) != Some(f[0]) {
                ids.push(f[0].to_string());
                ds.trajectories.push(ForceTrajectory::default());
            }
            let disp = f[3..].iter().map(|s| num(s)).collect::<Result<Vec<f64>>>()?;
            ds.trajectories.last_mut().unwrap().samples.push(ForceSample { disp, force: (num(f[1])?, num(f[2])?) });
        }
        ds.input_len()?;
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// `F = coef * (sum dx, sum dy) + bias`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearForceModel {
    pub coef: [[f64; 2]; 2],
    pub bias: [f64; 2],
}

impl LinearForceModel {
    pub fn predict(&self, s: &ForceSample) -> (f64, f64) {
        let (sx, sy) = s.sums();
        (
            self.coef[0][0] * sx + self.coef[0][1] * sy + self.bias[0],
            self.coef[1][0] * sx + self.coef[1][1] * sy + self.bias[1],
        )
    }
}

/// Least squares via Householder QR of the `n x 3` design `[sum dx, sum dy, 1]`.
pub fn fit_linear(trajectories: &[ForceTrajectory]) -> Result<LinearForceModel> {
    let samples: Vec<&ForceSample> = trajectories.iter().flat_map(|t| &t.samples).collect();
    if samples.len() < 2 {
        return Err(Error::Fit("linear fit needs at least two samples".into()));
    }
    let n = samples.len();
    let mut a: Vec<[f64; 3]> = samples.iter().map(|s| {
        let (x, y) = s.sums();
        [x, y, 1.0]
    }).collect();
    let mut b: Vec<[f64; 2]> = samples.iter().map(|s| [s.force.0, s.force.1]).collect();
    if a.iter().flatten().chain(b.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite value in design".into()));
    }
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut r = [[0.0; 3]; 3];
    let mut rank_ok = true;
    for j in 0..3 {
        let norm = (j..n).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
        if norm <= 1e-12 * scale * (n as f64).sqrt() {
            rank_ok = false;
            break;
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|i| a[i][j]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        for c in j..3 {
            let d: f64 = (j..n).map(|i| v[i - j] * a[i][c]).sum::<f64>() * 2.0 / vv;
            for i in j..n {
                a[i][c] -= d * v[i - j];
            }
        }
        for c in 0..2 {
            let d: f64 = (j..n).map(|i| v[i - j] * b[i][c]).sum::<f64>() * 2.0 / vv;
            for i in j..n {
                b[i][c] -= d * v[i - j];
            }
        }
        for c in j..3 {
            r[j][c] = a[j][c];
        }
    }
    if !rank_ok {
        // zero targets are fit exactly by the zero model
        if samples.iter().all(|s| s.force == (0.0, 0.0)) {
            return Ok(LinearForceModel { coef: [[0.0; 2]; 2], bias: [0.0; 2] });
        }
        return Err(Error::Fit("rank-deficient displacement design".into()));
    }
    let mut sol = [[0.0; 2]; 3];
    for c in 0..2 {
        for j in (0..3).rev() {
            let acc: f64 = (j + 1..3).map(|k| r[j][k] * sol[k][c]).sum();
            sol[j][c] = (b[j][c] - acc) / r[j][j];
        }
    }
    Ok(LinearForceModel {
        coef: [[sol[0][0], sol[1][0]], [sol[0][1], sol[1][1]]],
        bias: [sol[2][0], sol[2][1]],
    })
}

/// `2N -> 128 -> 128 -> 2` with ReLU and dropout after each hidden layer.
pub fn force_network(input: usize, seed: u64) -> Result<Network> {
    Network::new(
        (input, 1, 1),
        vec![
            LayerKind::Dense { input, output: HIDDEN },
            LayerKind::Relu,
            LayerKind::Dropout { p: DROPOUT },
            LayerKind::Dense { input: HIDDEN, output: HIDDEN },
            LayerKind::Relu,
            LayerKind::Dropout { p: DROPOUT },
            LayerKind::Dense { input: HIDDEN, output: 2 },
        ],
        seed,
    )
}

#[derive(Debug, Clone)]
pub struct NetworkFit {
    pub network: Network,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
}

fn mean_loss(net: &Network, samples: &[&ForceSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let out = net.predict(&s.disp)?;
        total += 0.5 * ((out[0] - s.force.0).powi(2) + (out[1] - s.force.1).powi(2));
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Trains on all but the last trajectory, keeps the epoch with the lowest
/// loss on the last one.
pub fn fit_network(trajectories: &[ForceTrajectory], epochs: usize, seed: u64) -> Result<NetworkFit> {
    if trajectories.len() < 2 {
        return Err(Error::Fit("network fit needs at least one training and one test trajectory".into()));
    }
    let (train, test) = trajectories.split_at(trajectories.len() - 1);
    let ds = ForceDataset { trajectories: trajectories.to_vec() };
    let input = ds.input_len()?;
    let train: Vec<&ForceSample> = train.iter().flat_map(|t| &t.samples).collect();
    let test: Vec<&ForceSample> = test[0].samples.iter().collect();
    if train.is_empty() || test.is_empty() {
        return Err(Error::Fit("empty training or test split".into()));
    }
    let mut net = force_network(input, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf0ce);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::INFINITY, net.clone(), 0);
    let (mut train_loss, mut test_loss) = (Vec::new(), Vec::new());
    for epoch in 1..=epochs {
        net.set_training(true);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(BATCH) {
            net.zero_grad();
            for &i in batch {
                total += mse_step(&mut net, &train[i].disp, &[train[i].force.0, train[i].force.1])?;
            }
            net.sgd_step(LEARNING_RATE / batch.len() as f64)?;
        }
        net.set_training(false);
        let tl = mean_loss(&net, &test)?;
        if !total.is_finite() || !tl.is_finite() {
            return Err(Error::Training(format!("force network diverged at epoch {epoch}")));
        }
        train_loss.push(total / train.len() as f64);
        test_loss.push(tl);
        if tl < best.0 {
            best = (tl, net.clone(), epoch);
        }
    }
    Ok(NetworkFit { network: best.1, best_epoch: best.2, train_loss, test_loss })
}

#[derive(Debug, Clone)]
pub enum ForceModel {
    Linear(LinearForceModel),
    Network(Network),
}

const LINEAR_MAGIC: &[u8; 4] = b"EVLF";

impl ForceModel {
    pub fn predict(&self, s: &ForceSample) -> Result<(f64, f64)> {
        match self {
            ForceModel::Linear(m) => Ok(m.predict(s)),
            ForceModel::Network(n) => {
                let o = n.predict(&s.disp)?;
                Ok((o[0], o[1]))
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            ForceModel::Linear(m) => {
                let mut b = LINEAR_MAGIC.to_vec();
                for v in [m.coef[0][0], m.coef[0][1], m.coef[1][0], m.coef[1][1], m.bias[0], m.bias[1]] {
                    b.extend_from_slice(&v.to_le_bytes());
                }
                b
            }
            ForceModel::Network(n) => n.to_bytes(),
        }
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        if b.starts_with(LINEAR_MAGIC) {
            if b.len() != 4 + 48 {
                return Err(Error::Decode("linear force model must be 52 bytes".into()));
            }
            let v: Vec<f64> = b[4..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            return Ok(ForceModel::Linear(LinearForceModel { coef: [[v[0], v[1]], [v[2], v[3]]], bias: [v[4], v[5]] }));
        }
        let net = Network::from_bytes(b)?;
        if net.output_len() != 2 {
            return Err(Error::Shape("force network must have two outputs".into()));
        }
        Ok(ForceModel::Network(net))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForceEvaluation {
    pub mae: (f64, f64),
    /// (true, predicted) per sample.
    pub trace: Vec<((f64, f64), (f64, f64))>,
}

impl ForceEvaluation {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample,fx_true,fy_true,fx_pred,fy_pred\n");
        for (i, (t, p)) in self.trace.iter().enumerate() {
            s.push_str(&format!("{i},{},{},{},{}\n", t.0, t.1, p.0, p.1));
        }
        s
    }
}

pub fn evaluate(model: &ForceModel, trajectory: &ForceTrajectory) -> Result<ForceEvaluation> {
    if trajectory.samples.is_empty() {
        return Err(Error::InvalidInput("empty evaluation trajectory".into()));
    }
    let mut trace = Vec::with_capacity(trajectory.samples.len());
    let (mut ex, mut ey) = (0.0, 0.0);
    for s in &trajectory.samples {
        let p = model.predict(s)?;
        ex += (p.0 - s.force.0).abs();
        ey += (p.1 - s.force.1).abs();
        trace.push((s.force, p));
    }
    let n = trajectory.samples.len() as f64;
    Ok(ForceEvaluation { mae: (ex / n, ey / n), trace })
}
