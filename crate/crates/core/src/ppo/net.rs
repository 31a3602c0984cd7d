//! Fully connected tanh network with per-hidden-layer LayerNorm and dropout.
//!
//! Hidden layer: `linear → layer norm → tanh → dropout`. Parameters live in
//! one flat vector ordered per layer as weights (row-major, `out × in`),
//! biases, then normalisation scale and shift for hidden layers.

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub dropout: f64,
}

impl NetworkSpec {
    pub fn actor(hidden: Vec<usize>, dropout: f64) -> Self {
        NetworkSpec {
            input: crate::environment::OBS_LEN,
            hidden,
            output: crate::environment::ACTION_COUNT,
            dropout,
        }
    }

    pub fn critic(hidden: Vec<usize>, dropout: f64) -> Self {
        NetworkSpec {
            input: crate::environment::OBS_LEN,
            hidden,
            output: 1,
            dropout,
        }
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input];
        d.extend(&self.hidden);
        d.push(self.output);
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(Error::InvalidConfig(format!("zero-width layer in {:?}", self.dims())));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    inp: usize,
    out: usize,
    w: usize,
    b: usize,
    /// Scale and shift offsets for hidden layers.
    norm: Option<(usize, usize)>,
}

fn layout(dims: &[usize]) -> (Vec<LayerOffsets>, usize) {
    let mut layers = Vec::with_capacity(dims.len() - 1);
    let mut off = 0;
    for l in 0..dims.len() - 1 {
        let (inp, out) = (dims[l], dims[l + 1]);
        let w = off;
        let b = w + inp * out;
        off = b + out;
        let norm = if l + 2 < dims.len() {
            let g = off;
            off += 2 * out;
            Some((g, g + out))
        } else {
            None
        };
        layers.push(LayerOffsets { inp, out, w, b, norm });
    }
    (layers, off)
}

#[inline]
pub(crate) fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [F::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = F::zero();
    for i in chunks * 8..n {
        tail = tail + a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn axpy<F: Float>(alpha: F, x: &[F], y: &mut [F]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache<F> {
    batch: usize,
    /// Input of every linear layer (`batch × in`).
    inputs: Vec<Vec<F>>,
    xhat: Vec<Vec<F>>,
    inv_std: Vec<Vec<F>>,
    /// tanh outputs before dropout.
    act: Vec<Vec<F>>,
    masks: Vec<Option<Vec<F>>>,
}

impl<F> Default for Cache<F> {
    fn default() -> Self {
        Cache {
            batch: 0,
            inputs: Vec::new(),
            xhat: Vec::new(),
            inv_std: Vec::new(),
            act: Vec::new(),
            masks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    spec: NetworkSpec,
    params: Vec<F>,
}

impl<F: Float> Mlp<F> {
    /// Uniform `±1/√fan_in` weights; the output layer is scaled by `out_scale`.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, out_scale: f64, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let dims = spec.dims();
        let (layers, total) = layout(&dims);
        let mut params = vec![F::zero(); total];
        let last = layers.len() - 1;
        for (l, lo) in layers.iter().enumerate() {
            let bound = 1.0 / (lo.inp as f64).sqrt();
            let scale = if l == last { out_scale } else { 1.0 };
            for p in &mut params[lo.w..lo.w + lo.inp * lo.out] {
                *p = F::from(rng.gen_range(-bound..bound) * scale).unwrap();
            }
            for p in &mut params[lo.b..lo.b + lo.out] {
                *p = F::from(rng.gen_range(-bound..bound) * scale).unwrap();
            }
            if let Some((g, _)) = lo.norm {
                for p in &mut params[g..g + lo.out] {
                    *p = F::one();
                }
            }
        }
        Ok(Mlp { spec, params })
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<F>) -> Result<Self> {
        spec.validate()?;
        let (_, total) = layout(&spec.dims());
        if params.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for network {:?} (expected {total})",
                params.len(),
                spec.dims()
            )));
        }
        Ok(Mlp { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Convert parameters to another float type.
    pub fn cast<G: Float>(&self) -> Mlp<G> {
        Mlp {
            spec: self.spec.clone(),
            params: self.params.iter().map(|p| G::from(*p).unwrap()).collect(),
        }
    }

    /// Forward pass of a `batch × input` row-major matrix. Dropout is applied
    /// only when `dropout_rng` is given.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &[F],
        batch: usize,
        mut dropout_rng: Option<&mut R>,
        cache: Option<&mut Cache<F>>,
    ) -> Vec<F> {
        let dims = self.spec.dims();
        let (layers, _) = layout(&dims);
        debug_assert_eq!(input.len(), batch * dims[0]);
        let p = &self.params;
        let keep = 1.0 - self.spec.dropout;
        let mut local = Cache::default();
        let cache = cache.unwrap_or(&mut local);
        *cache = Cache {
            batch,
            ..Cache::default()
        };
        let mut x = input.to_vec();
        for lo in &layers {
            let w = &p[lo.w..lo.w + lo.inp * lo.out];
            let b = &p[lo.b..lo.b + lo.out];
            let mut z = vec![F::zero(); batch * lo.out];
            for s in 0..batch {
                let xs = &x[s * lo.inp..(s + 1) * lo.inp];
                let zs = &mut z[s * lo.out..(s + 1) * lo.out];
                for o in 0..lo.out {
                    zs[o] = dot(&w[o * lo.inp..(o + 1) * lo.inp], xs) + b[o];
                }
            }
            let Some((g_off, be_off)) = lo.norm else {
                cache.inputs.push(x);
                return z;
            };
            let gamma = &p[g_off..g_off + lo.out];
            let beta = &p[be_off..be_off + lo.out];
            let n = F::from(lo.out).unwrap();
            let eps = F::from(LN_EPS).unwrap();
            let mut xhat = vec![F::zero(); batch * lo.out];
            let mut inv_std = vec![F::zero(); batch];
            let mut h = vec![F::zero(); batch * lo.out];
            for s in 0..batch {
                let zs = &z[s * lo.out..(s + 1) * lo.out];
                let mean = zs.iter().fold(F::zero(), |a, &v| a + v) / n;
                let var = zs.iter().fold(F::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
                let inv = F::one() / (var + eps).sqrt();
                inv_std[s] = inv;
                for o in 0..lo.out {
                    let xh = (zs[o] - mean) * inv;
                    xhat[s * lo.out + o] = xh;
                    h[s * lo.out + o] = (gamma[o] * xh + beta[o]).tanh();
                }
            }
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if self.spec.dropout > 0.0 => {
                    let scale = F::from(1.0 / keep).unwrap();
                    Some(
                        (0..batch * lo.out)
                            .map(|_| if rng.gen::<f64>() < keep { scale } else { F::zero() })
                            .collect::<Vec<F>>(),
                    )
                }
                _ => None,
            };
            let next = match &mask {
                Some(m) => h.iter().zip(m).map(|(a, b)| *a * *b).collect(),
                None => h.clone(),
            };
            cache.inputs.push(x);
            cache.xhat.push(xhat);
            cache.inv_std.push(inv_std);
            cache.act.push(h);
            cache.masks.push(mask);
            x = next;
        }
        unreachable!("network has an output layer")
    }

    /// Accumulate `∂loss/∂params` into `grads` given `∂loss/∂output`.
    pub fn backward(&self, cache: &Cache<F>, grad_out: &[F], grads: &mut [F]) {
        let dims = self.spec.dims();
        let (layers, _) = layout(&dims);
        let batch = cache.batch;
        let p = &self.params;
        let mut dz = grad_out.to_vec();
        for (l, lo) in layers.iter().enumerate().rev() {
            if let Some((g_off, be_off)) = lo.norm {
                // dz currently holds ∂/∂(dropout output); push back through
                // dropout, tanh and layer norm.
                let h = &cache.act[l];
                let xhat = &cache.xhat[l];
                let inv_std = &cache.inv_std[l];
                let gamma = &p[g_off..g_off + lo.out];
                let n = F::from(lo.out).unwrap();
                let mut dgamma = vec![F::zero(); lo.out];
                let mut dbeta = vec![F::zero(); lo.out];
                for s in 0..batch {
                    let r = s * lo.out..(s + 1) * lo.out;
                    let mut dxhat = vec![F::zero(); lo.out];
                    for o in 0..lo.out {
                        let i = s * lo.out + o;
                        let mut d = dz[i];
                        if let Some(m) = &cache.masks[l] {
                            d = d * m[i];
                        }
                        let dy = d * (F::one() - h[i] * h[i]);
                        dgamma[o] = dgamma[o] + dy * xhat[i];
                        dbeta[o] = dbeta[o] + dy;
                        dxhat[o] = dy * gamma[o];
                    }
                    let xs = &xhat[r.clone()];
                    let mean_d = dxhat.iter().fold(F::zero(), |a, &v| a + v) / n;
                    let mean_dx = dot(&dxhat, xs) / n;
                    for o in 0..lo.out {
                        dz[s * lo.out + o] = inv_std[s] * (dxhat[o] - mean_d - xs[o] * mean_dx);
                    }
                }
                for o in 0..lo.out {
                    grads[g_off + o] = grads[g_off + o] + dgamma[o];
                    grads[be_off + o] = grads[be_off + o] + dbeta[o];
                }
            }
            let x = &cache.inputs[l];
            let w = &p[lo.w..lo.w + lo.inp * lo.out];
            let mut dx = if l > 0 { vec![F::zero(); batch * lo.inp] } else { Vec::new() };
            for s in 0..batch {
                let xs = &x[s * lo.inp..(s + 1) * lo.inp];
                for o in 0..lo.out {
                    let d = dz[s * lo.out + o];
                    if d == F::zero() {
                        continue;
                    }
                    let gw = &mut grads[lo.w + o * lo.inp..lo.w + (o + 1) * lo.inp];
                    axpy(d, xs, gw);
                    grads[lo.b + o] = grads[lo.b + o] + d;
                    if l > 0 {
                        axpy(d, &w[o * lo.inp..(o + 1) * lo.inp], &mut dx[s * lo.inp..(s + 1) * lo.inp]);
                    }
                }
            }
            dz = dx;
        }
    }
}

/// `log softmax` of one row of logits.
pub fn log_softmax<F: Float>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
    let lse = logits.iter().fold(F::zero(), |a, &v| a + (v - max).exp()).ln() + max;
    logits.iter().map(|&v| v - lse).collect()
}
