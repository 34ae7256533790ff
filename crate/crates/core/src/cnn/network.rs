//! Forward and backward passes, generic over the float type so the same
//! code trains in `f32` and is gradient-checked in `f64`.
//!
//! Activations are kept as `(positions, channels)` matrices where positions
//! enumerate `(sample, row, column)` in row-major order. Convolutions are
//! lowered to one GEMM per layer through an im2col buffer whose rows hold the
//! `k × k × c_in` receptive field of one output position.

use std::fmt::Debug;

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::{Float, FromPrimitive, NumAssign};

pub trait Scalar:
    LinalgScalar + ScalarOperand + Float + NumAssign + FromPrimitive + Send + Sync + Debug + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<F> {
    /// `(k·k·c_in, c_out)`, rows ordered by `(ky, kx, c_in)`.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<F> {
    /// `(inputs, outputs)`.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

/// Every trainable tensor of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub conv: Vec<ConvLayer<F>>,
    pub hidden: DenseLayer<F>,
    pub output: DenseLayer<F>,
}

impl<F: Scalar> Params<F> {
    pub fn zeros_like(&self) -> Self {
        self.map(|_| F::zero())
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G + Copy) -> Params<G> {
        let conv = self
            .conv
            .iter()
            .map(|c| ConvLayer {
                weight: c.weight.mapv(f),
                bias: c.bias.mapv(f),
            })
            .collect();
        let dense = |d: &DenseLayer<F>| DenseLayer {
            weight: d.weight.mapv(f),
            bias: d.bias.mapv(f),
        };
        Params {
            conv,
            hidden: dense(&self.hidden),
            output: dense(&self.output),
        }
    }

    /// Tensors in storage order: each conv weight and bias, then the hidden
    /// and output dense layers.
    pub fn slices(&self) -> Vec<&[F]> {
        let mut out = Vec::with_capacity(2 * self.conv.len() + 4);
        for c in &self.conv {
            out.push(c.weight.as_slice().expect("standard layout"));
            out.push(c.bias.as_slice().expect("standard layout"));
        }
        for d in [&self.hidden, &self.output] {
            out.push(d.weight.as_slice().expect("standard layout"));
            out.push(d.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::with_capacity(2 * self.conv.len() + 4);
        for c in &mut self.conv {
            out.push(c.weight.as_slice_mut().expect("standard layout"));
            out.push(c.bias.as_slice_mut().expect("standard layout"));
        }
        for d in [&mut self.hidden, &mut self.output] {
            out.push(d.weight.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Spatial sizes through the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub side: usize,
    pub channels: usize,
    pub kernel: usize,
    pub filters: [usize; 3],
}

impl Geometry {
    /// Side length entering conv layer `i` (`i = 3` is the final pooled side).
    pub fn side_at(&self, i: usize) -> usize {
        self.side >> i
    }

    pub fn in_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.channels
        } else {
            self.filters[i - 1]
        }
    }

    pub fn flatten_len(&self) -> usize {
        let s = self.side_at(3);
        s * s * self.filters[2]
    }
}

/// Inverted-dropout masks: each entry is 0 or `1 / (1 - p)`.
#[derive(Debug, Clone)]
pub struct DropoutMasks<F> {
    pub pre_flatten: Array2<F>,
    pub dense: Array2<F>,
}

pub struct Cache<F> {
    cols: Vec<Array2<F>>,
    acts: Vec<Array2<F>>,
    pool_index: Vec<Vec<usize>>,
    flat: Array2<F>,
    hidden: Array2<F>,
    hidden_out: Array2<F>,
}

fn im2col<F: Scalar>(input: &[F], n: usize, side: usize, cin: usize, k: usize) -> Array2<F> {
    let pad = (k / 2) as isize;
    let row_len = k * k * cin;
    let mut cols = Array2::<F>::zeros((n * side * side, row_len));
    let out = cols.as_slice_mut().expect("fresh array");
    let s = side as isize;
    for b in 0..n {
        for y in 0..side {
            for x in 0..side {
                let row = ((b * side + y) * side + x) * row_len;
                for ky in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= s {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = x as isize + kx as isize - pad;
                        if sx < 0 || sx >= s {
                            continue;
                        }
                        let src = ((b * side + sy as usize) * side + sx as usize) * cin;
                        let dst = row + (ky * k + kx) * cin;
                        out[dst..dst + cin].copy_from_slice(&input[src..src + cin]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im<F: Scalar>(cols: &Array2<F>, n: usize, side: usize, cin: usize, k: usize) -> Array2<F> {
    let pad = (k / 2) as isize;
    let row_len = k * k * cin;
    let mut image = Array2::<F>::zeros((n * side * side, cin));
    let out = image.as_slice_mut().expect("fresh array");
    let src_all = cols.as_slice().expect("standard layout");
    let s = side as isize;
    for b in 0..n {
        for y in 0..side {
            for x in 0..side {
                let row = ((b * side + y) * side + x) * row_len;
                for ky in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= s {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = x as isize + kx as isize - pad;
                        if sx < 0 || sx >= s {
                            continue;
                        }
                        let dst = ((b * side + sy as usize) * side + sx as usize) * cin;
                        let src = row + (ky * k + kx) * cin;
                        for (d, &v) in out[dst..dst + cin].iter_mut().zip(&src_all[src..src + cin])
                        {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
    image
}

/// 2×2 stride-2 max pooling with floor output size. Returns the pooled
/// activations and, per pooled entry, the flat index of the winning input.
fn max_pool<F: Scalar>(act: &Array2<F>, n: usize, side: usize) -> (Array2<F>, Vec<usize>) {
    let c = act.ncols();
    let half = side / 2;
    let src = act.as_slice().expect("standard layout");
    let mut pooled = Array2::<F>::zeros((n * half * half, c));
    let mut index = vec![0usize; n * half * half * c];
    let dst = pooled.as_slice_mut().expect("fresh array");
    for b in 0..n {
        for y in 0..half {
            for x in 0..half {
                let out_row = ((b * half + y) * half + x) * c;
                let corners = [
                    ((b * side + 2 * y) * side + 2 * x) * c,
                    ((b * side + 2 * y) * side + 2 * x + 1) * c,
                    ((b * side + 2 * y + 1) * side + 2 * x) * c,
                    ((b * side + 2 * y + 1) * side + 2 * x + 1) * c,
                ];
                for ch in 0..c {
                    let mut best = corners[0] + ch;
                    for &corner in &corners[1..] {
                        if src[corner + ch] > src[best] {
                            best = corner + ch;
                        }
                    }
                    dst[out_row + ch] = src[best];
                    index[out_row + ch] = best;
                }
            }
        }
    }
    (pooled, index)
}

fn add_bias<F: Scalar>(m: &mut Array2<F>, bias: &Array1<F>) {
    for mut row in m.rows_mut() {
        row += bias;
    }
}

fn relu_inplace<F: Scalar>(m: &mut Array2<F>) {
    m.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

/// Runs `n` samples (NHWC, flattened) to output logits `(n, classes)`.
/// Dropout is applied when masks are given; the cache is kept on request.
pub fn forward<F: Scalar>(
    params: &Params<F>,
    geo: &Geometry,
    input: &[F],
    n: usize,
    dropout: Option<&DropoutMasks<F>>,
    keep_cache: bool,
) -> (Array2<F>, Option<Cache<F>>) {
    let mut cols_cache = Vec::new();
    let mut acts_cache = Vec::new();
    let mut index_cache = Vec::new();

    let mut current = ArrayView2::from_shape((n * geo.side * geo.side, geo.channels), input)
        .expect("input matches geometry")
        .to_owned();
    for (i, layer) in params.conv.iter().enumerate() {
        let side = geo.side_at(i);
        let cols = im2col(
            current.as_slice().expect("standard layout"),
            n,
            side,
            geo.in_channels(i),
            geo.kernel,
        );
        let mut act = cols.dot(&layer.weight);
        add_bias(&mut act, &layer.bias);
        relu_inplace(&mut act);
        let (pooled, index) = max_pool(&act, n, side);
        if keep_cache {
            cols_cache.push(cols);
            acts_cache.push(act);
            index_cache.push(index);
        }
        current = pooled;
    }

    let mut flat = current
        .into_shape_with_order((n, geo.flatten_len()))
        .expect("contiguous");
    if let Some(masks) = dropout {
        flat *= &masks.pre_flatten;
    }
    let mut hidden = flat.dot(&params.hidden.weight);
    add_bias(&mut hidden, &params.hidden.bias);
    relu_inplace(&mut hidden);
    let hidden_out = match dropout {
        Some(masks) => &hidden * &masks.dense,
        None => hidden.clone(),
    };
    let mut logits = hidden_out.dot(&params.output.weight);
    add_bias(&mut logits, &params.output.bias);

    let cache = keep_cache.then(|| Cache {
        cols: cols_cache,
        acts: acts_cache,
        pool_index: index_cache,
        flat,
        hidden,
        hidden_out,
    });
    (logits, cache)
}

/// ReLU on/off states and pooling winners for a dropout-free forward pass.
/// Two parameter sets with equal patterns lie on the same linear piece.
pub fn activation_pattern<F: Scalar>(
    params: &Params<F>,
    geo: &Geometry,
    input: &[F],
    n: usize,
) -> Vec<u8> {
    let (_, cache) = forward(params, geo, input, n, None, true);
    let cache = cache.expect("cache requested");
    let mut out = Vec::new();
    for (act, index) in cache.acts.iter().zip(&cache.pool_index) {
        out.extend(act.iter().map(|&v| u8::from(v > F::zero())));
        for &i in index {
            out.extend_from_slice(&(i as u64).to_le_bytes());
        }
    }
    out.extend(cache.hidden.iter().map(|&v| u8::from(v > F::zero())));
    out
}

/// Gradients of the loss given `d loss / d logits`.
pub fn backward<F: Scalar>(
    params: &Params<F>,
    geo: &Geometry,
    cache: &Cache<F>,
    n: usize,
    dropout: Option<&DropoutMasks<F>>,
    dlogits: &Array2<F>,
) -> Params<F> {
    let output = DenseLayer {
        weight: cache.hidden_out.t().dot(dlogits),
        bias: dlogits.sum_axis(Axis(0)),
    };
    let mut dhidden = dlogits.dot(&params.output.weight.t());
    if let Some(masks) = dropout {
        dhidden *= &masks.dense;
    }
    Zip::from(&mut dhidden)
        .and(&cache.hidden)
        .for_each(|d, &h| {
            if h <= F::zero() {
                *d = F::zero();
            }
        });
    let hidden = DenseLayer {
        weight: cache.flat.t().dot(&dhidden),
        bias: dhidden.sum_axis(Axis(0)),
    };
    let mut dflat = dhidden.dot(&params.hidden.weight.t());
    if let Some(masks) = dropout {
        dflat *= &masks.pre_flatten;
    }

    let last = geo.side_at(3);
    let mut dpooled = dflat
        .into_shape_with_order((n * last * last, geo.filters[2]))
        .expect("contiguous");
    let mut conv = Vec::with_capacity(params.conv.len());
    for i in (0..params.conv.len()).rev() {
        let act = &cache.acts[i];
        let mut dact = Array2::<F>::zeros(act.raw_dim());
        {
            let d = dact.as_slice_mut().expect("fresh array");
            let src = dpooled.as_slice().expect("standard layout");
            for (&idx, &g) in cache.pool_index[i].iter().zip(src) {
                d[idx] += g;
            }
        }
        Zip::from(&mut dact).and(act).for_each(|d, &a| {
            if a <= F::zero() {
                *d = F::zero();
            }
        });
        let cols = &cache.cols[i];
        conv.push(ConvLayer {
            weight: cols.t().dot(&dact),
            bias: dact.sum_axis(Axis(0)),
        });
        if i > 0 {
            let dcols = dact.dot(&params.conv[i].weight.t());
            dpooled = col2im(&dcols, n, geo.side_at(i), geo.in_channels(i), geo.kernel);
        }
    }
    conv.reverse();
    Params {
        conv,
        hidden,
        output,
    }
}
