//! Small 3D CNN: blocks of conv3d -> maxpool -> batchnorm -> ReLU, then the
//! flattened features plus two coordinates pass through pointwise (kernel 1)
//! 1D convolutions, which act as dense layers, down to one scalar.
//!
//! Activations are stored per sample as `[channel][x][y][z]` with z
//! contiguous. Convolutions pad x and y to keep their size and are valid
//! in z.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub input: [usize; 3],
    pub kernel: usize,
    pub pool: usize,
    pub channels: Vec<usize>,
    pub hidden: Vec<usize>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input: super::CUBE_SHAPE,
            kernel: 3,
            pool: 2,
            channels: vec![8, 16, 32],
            hidden: vec![64, 32],
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch normalization.
    Train,
    /// Running statistics in batch normalization.
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    cin: usize,
    cout: usize,
    input: [usize; 3],
    conv: [usize; 3],
    out: [usize; 3],
    w: usize,
    gamma: usize,
    beta: usize,
    /// Offset of running mean; running variance follows.
    stat: usize,
}

impl Block {
    fn in_len(&self) -> usize {
        self.cin * self.input.iter().product::<usize>()
    }
    fn conv_len(&self) -> usize {
        self.cout * self.conv.iter().product::<usize>()
    }
    fn spatial(&self) -> usize {
        self.out.iter().product()
    }
    fn out_len(&self) -> usize {
        self.cout * self.spatial()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    nin: usize,
    nout: usize,
    w: usize,
    b: usize,
    relu: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeismicNet {
    config: NetConfig,
    blocks: Vec<Block>,
    dense: Vec<Dense>,
    params: Vec<f64>,
    stats: Vec<f64>,
    pub target_mean: f64,
    pub target_sd: f64,
    pub seed: u64,
}

/// Intermediate values of one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Cache {
    n: usize,
    mode: Mode,
    blocks: Vec<BlockCache>,
    dense_in: Vec<Vec<f64>>,
    dense_pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Vec<f64>,
    argmax: Vec<u32>,
    xhat: Vec<f64>,
    pre: Vec<f64>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl SeismicNet {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        let k = config.kernel;
        if k == 0 || k % 2 == 0 {
            return Err(Error::InvalidConfig("kernel size must be odd".into()));
        }
        if config.pool == 0 || config.channels.contains(&0) || config.hidden.contains(&0) {
            return Err(Error::InvalidConfig("pool, channels and hidden widths must be >= 1".into()));
        }
        let mut n_params = 0;
        let mut n_stats = 0;
        let mut alloc = |n: usize| {
            let o = n_params;
            n_params += n;
            o
        };
        let mut blocks = Vec::new();
        let (mut shape, mut cin) = (config.input, 1usize);
        for &cout in &config.channels {
            if shape[2] < k {
                return Err(Error::InvalidConfig(format!("depth {} too small for kernel {k}", shape[2])));
            }
            let conv = [shape[0], shape[1], shape[2] - k + 1];
            let out = conv.map(|d| d / config.pool);
            if out.contains(&0) {
                return Err(Error::InvalidConfig(format!("layer shapes do not compose at {conv:?}")));
            }
            // no conv bias: batch norm removes any per-channel offset
            let w = alloc(cout * cin * k * k * k);
            let gamma = alloc(cout);
            let beta = alloc(cout);
            blocks.push(Block { cin, cout, input: shape, conv, out, w, gamma, beta, stat: n_stats });
            n_stats += 2 * cout;
            shape = out;
            cin = cout;
        }
        let features = cin * shape.iter().product::<usize>() + 2;
        let mut dense = Vec::new();
        let mut nin = features;
        for (i, &nout) in config.hidden.iter().chain(std::iter::once(&1)).enumerate() {
            let w = alloc(nout * nin);
            let b = alloc(nout);
            dense.push(Dense { nin, nout, w, b, relu: i < config.hidden.len() });
            nin = nout;
        }

        let mut params = vec![0.0; n_params];
        let mut stats = vec![0.0; n_stats];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for bl in &blocks {
            let std = (2.0 / (bl.cin * k * k * k) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in &mut params[bl.w..bl.w + bl.cout * bl.cin * k * k * k] {
                *v = normal.sample(&mut rng);
            }
            params[bl.gamma..bl.gamma + bl.cout].fill(1.0);
            stats[bl.stat + bl.cout..bl.stat + 2 * bl.cout].fill(1.0);
        }
        for d in &dense {
            let gain = if d.relu { 2.0 } else { 1.0 };
            let normal = Normal::new(0.0, (gain / d.nin as f64).sqrt()).expect("finite std");
            for v in &mut params[d.w..d.w + d.nin * d.nout] {
                *v = normal.sample(&mut rng);
            }
        }
        Ok(Self { config, blocks, dense, params, stats, target_mean: 0.0, target_sd: 1.0, seed })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Batch-norm running means and variances, block by block.
    pub fn running_stats(&self) -> &[f64] {
        &self.stats
    }

    pub fn input_len(&self) -> usize {
        self.config.input.iter().product()
    }

    /// Length of the flattened feature vector including the coordinates.
    pub fn feature_len(&self) -> usize {
        self.dense[0].nin
    }

    /// Forward pass on a batch. `cubes` are flat `[x][y][z]` arrays, the
    /// outputs are in standardized target units.
    pub fn forward(&self, cubes: &[&[f64]], coords: &[[f64; 2]], mode: Mode) -> Result<(Vec<f64>, Cache)> {
        let n = cubes.len();
        if coords.len() != n {
            return Err(Error::LengthMismatch(coords.len(), n));
        }
        if let Some(c) = cubes.iter().find(|c| c.len() != self.input_len()) {
            return Err(Error::SizeMismatch { expected: self.input_len(), actual: c.len() });
        }
        let k = self.config.kernel;
        let mut x: Vec<f64> = cubes.iter().flat_map(|c| c.iter().copied()).collect();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for (bi, bl) in self.blocks.iter().enumerate() {
            let w = &self.params[bl.w..bl.w + bl.cout * bl.cin * k * k * k];
            let mut conv = vec![0.0; n * bl.conv_len()];
            conv.par_chunks_mut(bl.conv_len())
                .zip(x.par_chunks(bl.in_len()))
                .for_each(|(out, inp)| conv_forward(inp, out, w, bl, k));
            let mut pooled = vec![0.0; n * bl.out_len()];
            let mut argmax = vec![0u32; n * bl.out_len()];
            for s in 0..n {
                maxpool_forward(
                    &conv[s * bl.conv_len()..(s + 1) * bl.conv_len()],
                    &mut pooled[s * bl.out_len()..(s + 1) * bl.out_len()],
                    &mut argmax[s * bl.out_len()..(s + 1) * bl.out_len()],
                    bl,
                    self.config.pool,
                );
            }
            let (mean, var) = match mode {
                Mode::Train => channel_moments(&pooled, n, bl.cout, bl.spatial()),
                Mode::Inference => (
                    self.stats[bl.stat..bl.stat + bl.cout].to_vec(),
                    self.stats[bl.stat + bl.cout..bl.stat + 2 * bl.cout].to_vec(),
                ),
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.config.bn_eps).sqrt()).collect();
            let gamma = &self.params[bl.gamma..bl.gamma + bl.cout];
            let beta = &self.params[bl.beta..bl.beta + bl.cout];
            let sp = bl.spatial();
            let mut xhat = vec![0.0; pooled.len()];
            let mut pre = vec![0.0; pooled.len()];
            let mut out = vec![0.0; pooled.len()];
            for (i, v) in pooled.iter().enumerate() {
                let c = (i / sp) % bl.cout;
                let h = (v - mean[c]) * inv_std[c];
                xhat[i] = h;
                pre[i] = gamma[c] * h + beta[c];
                out[i] = pre[i].max(0.0);
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowUp);
            }
            let input = std::mem::replace(&mut x, out);
            caches.push(BlockCache { input: if bi == 0 { Vec::new() } else { input }, argmax, xhat, pre, inv_std, mean, var });
        }

        // flatten and append coordinates
        let flat = x.len() / n.max(1);
        let mut h = Vec::with_capacity(n * (flat + 2));
        for (s, c) in coords.iter().enumerate() {
            h.extend_from_slice(&x[s * flat..(s + 1) * flat]);
            h.extend_from_slice(c);
        }
        let mut dense_in = Vec::with_capacity(self.dense.len());
        let mut dense_pre = Vec::with_capacity(self.dense.len());
        for d in &self.dense {
            let w = &self.params[d.w..d.w + d.nin * d.nout];
            let b = &self.params[d.b..d.b + d.nout];
            let mut pre = vec![0.0; n * d.nout];
            for s in 0..n {
                let xin = &h[s * d.nin..(s + 1) * d.nin];
                for o in 0..d.nout {
                    pre[s * d.nout + o] = b[o] + dot(&w[o * d.nin..(o + 1) * d.nin], xin);
                }
            }
            let out = if d.relu { pre.iter().map(|v| v.max(0.0)).collect() } else { pre.clone() };
            dense_in.push(std::mem::replace(&mut h, out));
            dense_pre.push(pre);
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowUp);
        }
        Ok((h, Cache { n, mode, blocks: caches, dense_in, dense_pre }))
    }

    /// Parameter gradients given `d loss / d output` for every sample.
    /// `cubes` must be the batch passed to `forward`.
    pub fn backward(&self, cache: &Cache, cubes: &[&[f64]], dout: &[f64]) -> Vec<f64> {
        let n = cache.n;
        let k = self.config.kernel;
        let mut grads = vec![0.0; self.params.len()];
        let mut g = dout.to_vec();
        for (li, d) in self.dense.iter().enumerate().rev() {
            if d.relu {
                for (gi, p) in g.iter_mut().zip(&cache.dense_pre[li]) {
                    if *p <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            let xin = &cache.dense_in[li];
            let w = &self.params[d.w..d.w + d.nin * d.nout];
            let mut gin = vec![0.0; n * d.nin];
            for s in 0..n {
                let x = &xin[s * d.nin..(s + 1) * d.nin];
                for o in 0..d.nout {
                    let go = g[s * d.nout + o];
                    grads[d.b + o] += go;
                    if go == 0.0 {
                        continue;
                    }
                    axpy(&mut grads[d.w + o * d.nin..d.w + (o + 1) * d.nin], go, x);
                    axpy(&mut gin[s * d.nin..(s + 1) * d.nin], go, &w[o * d.nin..(o + 1) * d.nin]);
                }
            }
            g = gin;
        }
        // drop coordinate gradients
        let flat = self.dense[0].nin - 2;
        let mut gx: Vec<f64> = (0..n).flat_map(|s| g[s * (flat + 2)..s * (flat + 2) + flat].iter().copied()).collect();

        for (bi, bl) in self.blocks.iter().enumerate().rev() {
            let bc = &cache.blocks[bi];
            let sp = bl.spatial();
            let gamma = &self.params[bl.gamma..bl.gamma + bl.cout];
            for (gi, p) in gx.iter_mut().zip(&bc.pre) {
                if *p <= 0.0 {
                    *gi = 0.0;
                }
            }
            // batch norm
            let mut sum_g = vec![0.0; bl.cout];
            let mut sum_gx = vec![0.0; bl.cout];
            for (i, (gi, h)) in gx.iter().zip(&bc.xhat).enumerate() {
                let c = (i / sp) % bl.cout;
                sum_g[c] += gi;
                sum_gx[c] += gi * h;
            }
            for c in 0..bl.cout {
                grads[bl.gamma + c] += sum_gx[c];
                grads[bl.beta + c] += sum_g[c];
            }
            let m = (n * sp) as f64;
            let mut gp = vec![0.0; gx.len()];
            for (i, gi) in gx.iter().enumerate() {
                let c = (i / sp) % bl.cout;
                gp[i] = match cache.mode {
                    Mode::Train => {
                        gamma[c] * bc.inv_std[c] / m * (m * gi - sum_g[c] - bc.xhat[i] * sum_gx[c])
                    }
                    Mode::Inference => gamma[c] * bc.inv_std[c] * gi,
                };
            }
            // max pool
            let mut gconv = vec![0.0; n * bl.conv_len()];
            for s in 0..n {
                let base = s * bl.conv_len();
                for (o, &a) in bc.argmax[s * bl.out_len()..(s + 1) * bl.out_len()].iter().enumerate() {
                    gconv[base + a as usize] += gp[s * bl.out_len() + o];
                }
            }
            // convolution
            let first = bi == 0;
            let w = &self.params[bl.w..bl.w + bl.cout * bl.cin * k * k * k];
            let per_sample: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
                .into_par_iter()
                .map(|s| {
                    let gout = &gconv[s * bl.conv_len()..(s + 1) * bl.conv_len()];
                    let inp = if first { cubes[s] } else { &bc.input[s * bl.in_len()..(s + 1) * bl.in_len()] };
                    conv_backward(inp, gout, w, bl, k, !first)
                })
                .collect();
            let mut gin = if first { Vec::new() } else { vec![0.0; n * bl.in_len()] };
            for (s, (dw, din)) in per_sample.into_iter().enumerate() {
                for (a, b) in grads[bl.w..bl.w + dw.len()].iter_mut().zip(&dw) {
                    *a += b;
                }
                if !first {
                    gin[s * bl.in_len()..(s + 1) * bl.in_len()].copy_from_slice(&din);
                }
            }
            gx = gin;
        }
        grads
    }

    /// Mean squared error against standardized targets and its gradient.
    pub fn loss_and_grad(
        &self,
        cubes: &[&[f64]],
        coords: &[[f64; 2]],
        targets: &[f64],
        mode: Mode,
    ) -> Result<(f64, Vec<f64>, Cache)> {
        let (out, cache) = self.forward(cubes, coords, mode)?;
        let n = out.len() as f64;
        let loss = out.iter().zip(targets).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / n;
        let dout: Vec<f64> = out.iter().zip(targets).map(|(o, t)| 2.0 * (o - t) / n).collect();
        let grads = self.backward(&cache, cubes, &dout);
        Ok((loss, grads, cache))
    }

    pub fn loss(&self, cubes: &[&[f64]], coords: &[[f64; 2]], targets: &[f64], mode: Mode) -> Result<f64> {
        let (out, _) = self.forward(cubes, coords, mode)?;
        Ok(out.iter().zip(targets).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / out.len() as f64)
    }

    /// Folds the batch moments of a training pass into the running stats.
    pub fn update_running_stats(&mut self, cache: &Cache) {
        let m = self.config.bn_momentum;
        for (bl, bc) in self.blocks.iter().zip(&cache.blocks) {
            let count = (cache.n * bl.spatial()) as f64;
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            for c in 0..bl.cout {
                let rm = &mut self.stats[bl.stat + c];
                *rm = (1.0 - m) * *rm + m * bc.mean[c];
                let rv = &mut self.stats[bl.stat + bl.cout + c];
                *rv = (1.0 - m) * *rv + m * bc.var[c] * unbias;
            }
        }
    }

    /// Predictions in log10 mD (inference mode).
    pub fn predict(&self, cubes: &[&[f64]], coords: &[[f64; 2]]) -> Result<Vec<f64>> {
        let (out, _) = self.forward(cubes, coords, Mode::Inference)?;
        Ok(out.iter().map(|v| v * self.target_sd + self.target_mean).collect())
    }

    pub(crate) fn set_state(&mut self, params: &[f64], stats: &[f64]) {
        self.params.copy_from_slice(params);
        self.stats.copy_from_slice(stats);
    }

    /// Writes a JSON manifest and the little-endian f32 payload (parameters
    /// then running statistics) next to it with a `.bin` extension.
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let payload_path = manifest_path.with_extension("bin");
        let manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            config: self.config.clone(),
            target_mean: self.target_mean,
            target_sd: self.target_sd,
            seed: self.seed,
            n_params: self.params.len(),
            n_stats: self.stats.len(),
            payload: payload_path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        std::fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
        let bytes: Vec<u8> =
            self.params.iter().chain(&self.stats).flat_map(|&v| (v as f32).to_le_bytes()).collect();
        std::fs::write(payload_path, bytes)?;
        Ok(())
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::InvalidConfig(format!("unknown checkpoint format {}", manifest.format)));
        }
        let mut net = Self::new(manifest.config, manifest.seed)?;
        if net.params.len() != manifest.n_params || net.stats.len() != manifest.n_stats {
            return Err(Error::SizeMismatch { expected: net.params.len(), actual: manifest.n_params });
        }
        let bytes = std::fs::read(manifest_path.with_extension("bin"))?;
        let expected = 4 * (manifest.n_params + manifest.n_stats);
        if bytes.len() != expected {
            return Err(Error::SizeMismatch { expected, actual: bytes.len() });
        }
        let vals: Vec<f64> =
            bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
        let (p, s) = vals.split_at(manifest.n_params);
        net.set_state(p, s);
        net.target_mean = manifest.target_mean;
        net.target_sd = manifest.target_sd;
        Ok(net)
    }
}

const MANIFEST_FORMAT: &str = "permfuse-seismic-net/1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: NetConfig,
    target_mean: f64,
    target_sd: f64,
    seed: u64,
    n_params: usize,
    n_stats: usize,
    payload: String,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Output x (or y) range whose input index `o + kk - p` stays in bounds.
#[inline]
fn valid_range(len: usize, kk: usize, p: usize) -> (usize, usize) {
    (p.saturating_sub(kk), (len + p - kk).min(len))
}

fn conv_forward(inp: &[f64], out: &mut [f64], w: &[f64], bl: &Block, k: usize) {
    let [x, y, z] = bl.input;
    let zo = bl.conv[2];
    let p = k / 2;
    let (ilen, olen) = (x * y * z, x * y * zo);
    for co in 0..bl.cout {
        let oc = &mut out[co * olen..(co + 1) * olen];
        oc.fill(0.0);
        for ci in 0..bl.cin {
            let ic = &inp[ci * ilen..(ci + 1) * ilen];
            let wk = &w[(co * bl.cin + ci) * k * k * k..][..k * k * k];
            for kx in 0..k {
                let (x0, x1) = valid_range(x, kx, p);
                for ky in 0..k {
                    let (y0, y1) = valid_range(y, ky, p);
                    for ox in x0..x1 {
                        let ix = ox + kx - p;
                        for oy in y0..y1 {
                            let iy = oy + ky - p;
                            let src = &ic[(ix * y + iy) * z..][..z];
                            let dst = &mut oc[(ox * y + oy) * zo..][..zo];
                            for kz in 0..k {
                                axpy(dst, wk[(kx * k + ky) * k + kz], &src[kz..kz + zo]);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Weight gradient and, when `need_input`, input gradient for one sample.
fn conv_backward(inp: &[f64], gout: &[f64], w: &[f64], bl: &Block, k: usize, need_input: bool) -> (Vec<f64>, Vec<f64>) {
    let [x, y, z] = bl.input;
    let zo = bl.conv[2];
    let p = k / 2;
    let (ilen, olen) = (x * y * z, x * y * zo);
    let mut dw = vec![0.0; w.len()];
    let mut din = if need_input { vec![0.0; inp.len()] } else { Vec::new() };
    for co in 0..bl.cout {
        let gc = &gout[co * olen..(co + 1) * olen];
        for ci in 0..bl.cin {
            let ic = &inp[ci * ilen..(ci + 1) * ilen];
            let base = (co * bl.cin + ci) * k * k * k;
            for kx in 0..k {
                let (x0, x1) = valid_range(x, kx, p);
                for ky in 0..k {
                    let (y0, y1) = valid_range(y, ky, p);
                    for ox in x0..x1 {
                        let ix = ox + kx - p;
                        for oy in y0..y1 {
                            let iy = oy + ky - p;
                            let g = &gc[(ox * y + oy) * zo..][..zo];
                            let src = &ic[(ix * y + iy) * z..][..z];
                            for kz in 0..k {
                                let wi = base + (kx * k + ky) * k + kz;
                                dw[wi] += dot(g, &src[kz..kz + zo]);
                                if need_input {
                                    let d = &mut din[ci * ilen + (ix * y + iy) * z + kz..][..zo];
                                    axpy(d, w[wi], g);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dw, din)
}

fn maxpool_forward(conv: &[f64], out: &mut [f64], argmax: &mut [u32], bl: &Block, pool: usize) {
    let [cx, cy, cz] = bl.conv;
    let [ox, oy, oz] = bl.out;
    for c in 0..bl.cout {
        for i in 0..ox {
            for j in 0..oy {
                for l in 0..oz {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0usize;
                    for a in 0..pool {
                        for b in 0..pool {
                            let row = ((c * cx + i * pool + a) * cy + j * pool + b) * cz + l * pool;
                            for (d, &v) in conv[row..row + pool].iter().enumerate() {
                                if v > best {
                                    best = v;
                                    at = row + d;
                                }
                            }
                        }
                    }
                    let o = ((c * ox + i) * oy + j) * oz + l;
                    out[o] = best;
                    argmax[o] = at as u32;
                }
            }
        }
    }
}

/// Per-channel mean and biased variance over batch and space.
fn channel_moments(v: &[f64], n: usize, channels: usize, spatial: usize) -> (Vec<f64>, Vec<f64>) {
    let m = (n * spatial) as f64;
    let mut mean = vec![0.0; channels];
    for (i, x) in v.iter().enumerate() {
        mean[(i / spatial) % channels] += x;
    }
    mean.iter_mut().for_each(|x| *x /= m);
    let mut var = vec![0.0; channels];
    for (i, x) in v.iter().enumerate() {
        let c = (i / spatial) % channels;
        var[c] += (x - mean[c]).powi(2);
    }
    var.iter_mut().for_each(|x| *x /= m);
    (mean, var)
}
