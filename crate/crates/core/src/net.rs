//! Distance-bounded residual maps.
//!
//! Each map computes `H(x) = x + ε‖x‖·F(x)` with
//! `F(x) = 2σ(W2·relu(W1·x + b1) + b2) − 1`. Because `F` lands in
//! `(−1, 1)^d`, the relative displacement `‖H(x) − x‖ / ‖x‖` never exceeds
//! `ε·√d`.
//!
//! Parameters are held as `f64` for computation, but every stored value is
//! exactly representable as `f32`; initialisation and optimiser updates
//! round to `f32`, which is what checkpoints persist.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Toggles, TrainConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSWM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMap {
    pub epsilon: f64,
    /// `hidden × dim`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `dim × hidden`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Gradients for one map, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl MapGradients {
    pub fn zeros_like(map: &ResidualMap) -> Self {
        Self {
            w1: Array2::zeros(map.w1.raw_dim()),
            b1: Array1::zeros(map.b1.raw_dim()),
            w2: Array2::zeros(map.w2.raw_dim()),
            b2: Array1::zeros(map.b2.raw_dim()),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Gradients of both maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub context: MapGradients,
    pub sense: MapGradients,
}

/// Intermediate values kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    norms: Array1<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
    sig: Array2<f64>,
    residual: Array2<f64>,
}

impl ForwardCache {
    /// `F(x)` for every row, each entry in `(−1, 1)`.
    pub fn residual(&self) -> ArrayView2<'_, f64> {
        self.residual.view()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn round_f32(v: &mut f64) {
    *v = f64::from(*v as f32);
}

impl ResidualMap {
    /// `W1`, `b1` uniform in `±1/√dim`; `W2 = 0`, `b2 = 0`, so the map
    /// starts as the exact identity.
    pub fn init(dim: usize, hidden: usize, epsilon: f64, rng: &mut impl Rng) -> Self {
        let bound = (1.0 / (dim as f64).sqrt()) as f32;
        let mut sample = || f64::from(rng.gen_range(-bound..=bound));
        let w1 = Array2::from_shape_simple_fn((hidden, dim), &mut sample);
        let b1 = Array1::from_shape_simple_fn(hidden, &mut sample);
        Self {
            epsilon,
            w1,
            b1,
            w2: Array2::zeros((dim, hidden)),
            b2: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    /// Maximum relative displacement `ε·√dim`.
    pub fn displacement_bound(&self) -> f64 {
        self.epsilon * (self.dim() as f64).sqrt()
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }

    pub(crate) fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(round_f32);
        }
    }

    fn check_rows(&self, x: &ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        let mut norms = Array1::zeros(x.nrows());
        for (row, n) in x.rows().into_iter().zip(norms.iter_mut()) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
            *n = row.dot(&row).sqrt();
            if *n == 0.0 {
                return Err(Error::ZeroNormInput);
            }
        }
        Ok(norms)
    }

    /// Applies the map to every row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let norms = self.check_rows(&x)?;
        let pre = x.dot(&self.w1.t()) + &self.b1;
        let hidden = pre.mapv(|v| v.max(0.0));
        let z = hidden.dot(&self.w2.t()) + &self.b2;
        let sig = z.mapv(sigmoid);
        let residual = sig.mapv(|s| 2.0 * s - 1.0);
        let mut out = x.to_owned();
        for ((mut o, f), &n) in out.rows_mut().into_iter().zip(residual.rows()).zip(norms.iter()) {
            o.scaled_add(self.epsilon * n, &f);
        }
        let cache = ForwardCache {
            input: x.to_owned(),
            norms,
            pre,
            hidden,
            sig,
            residual,
        };
        Ok((out, cache))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let (out, _) = self.forward_batch(view)?;
        Ok(out.into_raw_vec_and_offset().0)
    }

    /// Exact gradients of `Σ upstream ⊙ H(x)` with respect to the
    /// parameters and to the inputs, including the dependence of `ε‖x‖`
    /// on `x`.
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<f64>) -> Result<(MapGradients, Array2<f64>)> {
        if upstream.dim() != cache.input.dim() {
            return Err(Error::Shape {
                expected: cache.input.len(),
                actual: upstream.len(),
            });
        }
        let eps = self.epsilon;
        // dL/dz = ε‖x‖ g ⊙ 2σ(1 − σ)
        let mut dz = upstream.to_owned();
        Zip::from(dz.rows_mut()).and(&cache.norms).for_each(|mut r, &n| r *= eps * n);
        Zip::from(&mut dz).and(&cache.sig).for_each(|d, &s| *d *= 2.0 * s * (1.0 - s));

        let grad_w2 = dz.t().dot(&cache.hidden);
        let grad_b2 = dz.sum_axis(Axis(0));
        let mut dpre = dz.dot(&self.w2);
        Zip::from(&mut dpre).and(&cache.pre).for_each(|d, &p| {
            if p <= 0.0 {
                *d = 0.0;
            }
        });
        let grad_w1 = dpre.t().dot(&cache.input);
        let grad_b1 = dpre.sum_axis(Axis(0));

        let mut dx = upstream.to_owned() + dpre.dot(&self.w1);
        for (((mut d, g), f), (x, &n)) in dx
            .rows_mut()
            .into_iter()
            .zip(upstream.rows())
            .zip(cache.residual.rows())
            .zip(cache.input.rows().into_iter().zip(cache.norms.iter()))
        {
            let coeff = eps * g.dot(&f) / n;
            d.scaled_add(coeff, &x);
        }

        Ok((
            MapGradients {
                w1: grad_w1,
                b1: grad_b1,
                w2: grad_w2,
                b2: grad_b2,
            },
            dx,
        ))
    }
}

/// The context map `H_w` and the sense map `H_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecializationNet {
    pub context_map: ResidualMap,
    pub sense_map: ResidualMap,
}

impl SpecializationNet {
    pub fn init(dim: usize, hidden: usize, epsilon: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let context_map = ResidualMap::init(dim, hidden, epsilon, &mut rng);
        let sense_map = ResidualMap::init(dim, hidden, epsilon, &mut rng);
        Self { context_map, sense_map }
    }

    /// A net that leaves every embedding untouched.
    pub fn identity(dim: usize) -> Self {
        let map = ResidualMap {
            epsilon: 0.0,
            w1: Array2::zeros((1, dim)),
            b1: Array1::zeros(1),
            w2: Array2::zeros((dim, 1)),
            b2: Array1::zeros(dim),
        };
        Self {
            context_map: map.clone(),
            sense_map: map,
        }
    }

    pub fn dim(&self) -> usize {
        self.sense_map.dim()
    }

    pub fn hidden(&self) -> usize {
        self.sense_map.hidden()
    }

    pub fn epsilon(&self) -> f64 {
        self.sense_map.epsilon
    }

    pub fn ensure_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::Checkpoint(format!(
                "model dim {} does not match embedding dim {dim}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn specialize_context(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.context_map.forward(x)
    }

    pub fn specialize_sense(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.sense_map.forward(x)
    }

    pub fn encode_checkpoint(&self, config: &TrainConfig) -> Result<Vec<u8>> {
        let meta = CheckpointMeta {
            dim: self.dim(),
            hidden: self.hidden(),
            epsilon: self.epsilon(),
            alpha: config.alpha,
            beta: config.beta,
            seed: config.seed,
            toggles: config.toggles,
            config: config.clone(),
        };
        let meta = serde_json::to_vec(&meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        for map in [&self.context_map, &self.sense_map] {
            for t in map.tensors() {
                for &v in t {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Self, TrainConfig)> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 16 || &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let meta_end = 16usize
            .checked_add(meta_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated metadata".into()))?;
        let meta: CheckpointMeta = serde_json::from_slice(&bytes[16..meta_end])?;
        let (dim, hidden) = (meta.dim, meta.hidden);
        if dim == 0 || hidden == 0 {
            return Err(bad("zero dim or hidden width".into()));
        }
        let per_map = 2 * dim * hidden + dim + hidden;
        let payload = &bytes[meta_end..];
        if payload.len() != 2 * per_map * 4 {
            return Err(bad(format!(
                "parameter payload is {} bytes, expected {} for dim {dim} and hidden {hidden}",
                payload.len(),
                2 * per_map * 4
            )));
        }
        let mut values = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())));
        let mut read_map = || {
            let mut map = ResidualMap {
                epsilon: meta.epsilon,
                w1: Array2::zeros((hidden, dim)),
                b1: Array1::zeros(hidden),
                w2: Array2::zeros((dim, hidden)),
                b2: Array1::zeros(dim),
            };
            for t in map.tensors_mut() {
                t.iter_mut().for_each(|v| *v = values.next().unwrap());
            }
            map
        };
        let context_map = read_map();
        let sense_map = read_map();
        Ok((Self { context_map, sense_map }, meta.config))
    }

    pub fn save_checkpoint(&self, config: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode_checkpoint(config)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Self, TrainConfig)> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_checkpoint(&bytes)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    dim: usize,
    hidden: usize,
    epsilon: f64,
    alpha: f64,
    beta: f64,
    seed: u64,
    toggles: Toggles,
    config: TrainConfig,
}

/// Relative displacement `‖H(x) − x‖ / ‖x‖`.
pub fn relative_displacement(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let diff = &y - &x;
    diff.dot(&diff).sqrt() / x.dot(&x).sqrt()
}
