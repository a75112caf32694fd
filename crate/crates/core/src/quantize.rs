//! Uniform quantization, bit-plane decomposition, and the hybrid per-filter
//! quantization scheme that allocates filters to the two cores by
//! KL divergence.
//!
//! Rounding is half-away-from-zero everywhere (`f64::round` semantics).

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Histogram bins used for the per-filter KL divergence.
pub const KL_HIST_BINS: usize = 64;
/// Additive smoothing applied to both histograms before the divergence.
pub const KL_SMOOTHING: f64 = 1e-6;

/// Parameters of the signed uniform quantizer: bit-width and step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub n_bits: u32,
    pub step: f64,
}

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("bit-width {0} outside supported range 1..=8")]
    BadBits(u32),
    #[error("step size must be positive, got {0}")]
    BadStep(f64),
    #[error("entry ({row},{col}) = {value} does not fit {n_bits}-bit {signedness}")]
    Overflow {
        row: usize,
        col: usize,
        value: i64,
        n_bits: u32,
        signedness: &'static str,
    },
    #[error("layer has no filters")]
    EmptyFilters,
    #[error("assignment for layer {assignment} does not match scheme layer {scheme}")]
    LayerMismatch { assignment: usize, scheme: usize },
    #[error("assignment does not partition filters 1..={c_out}: {reason}")]
    BadPartition { c_out: usize, reason: String },
}

impl QuantParams {
    pub fn new(n_bits: u32, step: f64) -> Result<Self, QuantError> {
        if !(1..=8).contains(&n_bits) {
            return Err(QuantError::BadBits(n_bits));
        }
        if !(step > 0.0) {
            return Err(QuantError::BadStep(step));
        }
        Ok(Self { n_bits, step })
    }

    /// Lower bound of the signed integer range.
    pub fn alpha(&self) -> i64 {
        -(1i64 << (self.n_bits - 1))
    }

    /// Upper bound of the signed integer range.
    pub fn beta(&self) -> i64 {
        (1i64 << (self.n_bits - 1)) - 1
    }

    /// Symmetric-range step size covering `max_abs` with this bit-width.
    pub fn step_for_max_abs(n_bits: u32, max_abs: f64) -> f64 {
        let beta = ((1i64 << (n_bits - 1)) - 1) as f64;
        if max_abs > 0.0 {
            max_abs / beta
        } else {
            1.0
        }
    }
}

/// Quantize one value: clip(round(x / s), alpha, beta).
pub fn quantize_uniform(x: f64, p: QuantParams) -> i64 {
    let q = (x / p.step).round() as i64;
    q.clamp(p.alpha(), p.beta())
}

/// Dequantize back to the real axis.
pub fn dequantize(q: i64, p: QuantParams) -> f64 {
    q as f64 * p.step
}

/// Per-layer bit-width selection. Activations are shared by both cores;
/// the DSP-core weight path is fixed at 4 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub layer_index: usize,
    /// Activation bit-width (2..=4, or 8 on the first/last layer).
    pub b_a: u32,
    /// LUT-core weight bit-width (2..=8).
    pub b_w_lut: u32,
    /// DSP-core weight bit-width, constant 4.
    pub b_w_dsp: u32,
}

impl QuantScheme {
    pub const DSP_WEIGHT_BITS: u32 = 4;

    pub fn new(layer_index: usize, b_a: u32, b_w_lut: u32) -> Self {
        Self { layer_index, b_a, b_w_lut, b_w_dsp: Self::DSP_WEIGHT_BITS }
    }

    /// Scheme forced on first/last layers: 8-bit weights and activations.
    pub fn first_last(layer_index: usize) -> Self {
        Self { layer_index, b_a: 8, b_w_lut: 8, b_w_dsp: Self::DSP_WEIGHT_BITS }
    }
}

/// Partition of one layer's filters between the LUT-core and DSP-core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterAssignment {
    pub layer_index: usize,
    /// Filter ids (1-based) computed by the LUT-core.
    pub lut_filters: Vec<usize>,
    /// Filter ids (1-based) computed by the DSP-core.
    pub dsp_filters: Vec<usize>,
    /// Filter_LUT / Filter_all.
    pub ratio: f64,
}

impl FilterAssignment {
    pub fn c_out(&self) -> usize {
        self.lut_filters.len() + self.dsp_filters.len()
    }

    pub fn validate(&self) -> Result<(), QuantError> {
        let c_out = self.c_out();
        let mut seen = vec![false; c_out + 1];
        for &id in self.lut_filters.iter().chain(&self.dsp_filters) {
            if id == 0 || id > c_out {
                return Err(QuantError::BadPartition {
                    c_out,
                    reason: format!("filter id {id} out of range"),
                });
            }
            if seen[id] {
                return Err(QuantError::BadPartition {
                    c_out,
                    reason: format!("filter id {id} assigned twice"),
                });
            }
            seen[id] = true;
        }
        Ok(())
    }
}

/// Binary planes of an integer matrix, ordered LSB to MSB. For signed
/// input the MSB plane carries the two's-complement weight -2^(n-1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlaneMatrix {
    pub planes: Vec<Array2<u8>>,
    pub signed: bool,
    pub shape: (usize, usize),
}

impl BitPlaneMatrix {
    pub fn n_bits(&self) -> u32 {
        self.planes.len() as u32
    }

    /// Reconstruct the source matrix: sum of 2^j * plane_j with the MSB
    /// plane negated for signed input.
    pub fn recompose(&self) -> Array2<i64> {
        let mut out = Array2::<i64>::zeros(self.shape);
        let n = self.planes.len();
        for (j, plane) in self.planes.iter().enumerate() {
            let weight = plane_weight(j, n, self.signed);
            out.zip_mut_with(plane, |acc, &bit| *acc += weight * bit as i64);
        }
        out
    }
}

/// Algebraic weight of plane `j` out of `n` planes.
pub fn plane_weight(j: usize, n_planes: usize, signed: bool) -> i64 {
    let w = 1i64 << j;
    if signed && j == n_planes - 1 {
        -w
    } else {
        w
    }
}

fn check_range(v: i64, n_bits: u32, signed: bool) -> bool {
    if signed {
        let lo = -(1i64 << (n_bits - 1));
        let hi = (1i64 << (n_bits - 1)) - 1;
        (lo..=hi).contains(&v)
    } else {
        (0..(1i64 << n_bits)).contains(&v)
    }
}

/// Decompose an integer matrix into `n_bits` binary planes.
pub fn bitplane_decompose(
    m: &ArrayView2<i64>,
    n_bits: u32,
    signed: bool,
) -> Result<BitPlaneMatrix, QuantError> {
    if !(1..=8).contains(&n_bits) {
        return Err(QuantError::BadBits(n_bits));
    }
    for ((row, col), &value) in m.indexed_iter() {
        if !check_range(value, n_bits, signed) {
            return Err(QuantError::Overflow {
                row,
                col,
                value,
                n_bits,
                signedness: if signed { "signed" } else { "unsigned" },
            });
        }
    }
    let shape = (m.nrows(), m.ncols());
    let planes = (0..n_bits)
        .map(|j| m.map(|&v| (((v as u64) >> j) & 1) as u8))
        .collect();
    Ok(BitPlaneMatrix { planes, signed, shape })
}

/// Normalized histogram over `KL_HIST_BINS` bins spanning `[lo, hi]`.
fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64) -> Vec<f64> {
    let mut bins = vec![0.0f64; KL_HIST_BINS];
    let width = (hi - lo).max(f64::MIN_POSITIVE);
    let mut count = 0u64;
    for v in values {
        let idx = (((v - lo) / width) * KL_HIST_BINS as f64) as usize;
        bins[idx.min(KL_HIST_BINS - 1)] += 1.0;
        count += 1;
    }
    if count > 0 {
        for b in bins.iter_mut() {
            *b /= count as f64;
        }
    }
    bins
}

fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let ps: f64 = p.iter().sum::<f64>() + KL_SMOOTHING * p.len() as f64;
    let qs: f64 = q.iter().sum::<f64>() + KL_SMOOTHING * q.len() as f64;
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            let pp = (pi + KL_SMOOTHING) / ps;
            let qq = (qi + KL_SMOOTHING) / qs;
            pp * (pp / qq).ln()
        })
        .sum()
}

/// KL divergence between a filter's weight distribution and its
/// quantize-dequantize image at `n_bits`, on shared 64-bin histograms.
pub fn filter_kl_divergence(filter: &ArrayView1<f64>, n_bits: u32) -> f64 {
    let lo = filter.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = filter.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return 0.0;
    }
    let max_abs = lo.abs().max(hi.abs());
    let params = QuantParams {
        n_bits,
        step: QuantParams::step_for_max_abs(n_bits, max_abs),
    };
    let p = histogram(filter.iter().cloned(), lo, hi);
    let q = histogram(
        filter.iter().map(|&w| dequantize(quantize_uniform(w, params), params)),
        lo,
        hi,
    );
    kl_divergence(&p, &q)
}

/// Split filters by descending divergence: the top filters go to the core
/// with the higher bit-width, and the LUT-core ends up with
/// round(ratio * c_out) filters. Ties break toward the lower filter id.
pub fn alloc_by_divergence(
    divergences: &[f64],
    ratio: f64,
    b_w_lut: u32,
    b_w_dsp: u32,
    layer_index: usize,
) -> FilterAssignment {
    let c_out = divergences.len();
    let n_lut = ((ratio * c_out as f64).round() as usize).min(c_out);

    let mut ranked: Vec<(usize, f64)> = divergences.iter().enumerate().map(|(k, &d)| (k + 1, d)).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });

    let n_high = if b_w_lut >= b_w_dsp { n_lut } else { c_out - n_lut };
    let high: Vec<usize> = ranked[..n_high].iter().map(|&(id, _)| id).collect();
    let low: Vec<usize> = ranked[n_high..].iter().map(|&(id, _)| id).collect();
    let (mut lut_filters, mut dsp_filters) = if b_w_lut >= b_w_dsp { (high, low) } else { (low, high) };
    lut_filters.sort_unstable();
    dsp_filters.sort_unstable();

    FilterAssignment {
        layer_index,
        lut_filters,
        dsp_filters,
        ratio: n_lut as f64 / c_out as f64,
    }
}

/// Allocate a layer's filters between the cores. Filters whose weight
/// distribution diverges most under quantization at the lower of the two
/// bit-widths go to the core with the higher bit-width; the LUT-core
/// receives round(ratio * c_out) filters.
pub fn kl_filter_alloc(
    weights: &ArrayView2<f64>,
    ratio: f64,
    b_w_lut: u32,
    b_w_dsp: u32,
    layer_index: usize,
) -> Result<FilterAssignment, QuantError> {
    let c_out = weights.nrows();
    if c_out == 0 {
        return Err(QuantError::EmptyFilters);
    }
    let probe_bits = b_w_lut.min(b_w_dsp);
    let divergences: Vec<f64> = (0..c_out)
        .map(|k| filter_kl_divergence(&weights.row(k), probe_bits))
        .collect();
    Ok(alloc_by_divergence(&divergences, ratio, b_w_lut, b_w_dsp, layer_index))
}

/// Result of hybrid-quantizing one layer: integer filters plus the step
/// size of each allocation group.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridQuantized {
    /// Quantized filters, row `k` = filter `k + 1`, in original order.
    pub values: Array2<i64>,
    pub lut_step: f64,
    pub dsp_step: f64,
}

impl HybridQuantized {
    /// Bit-width and step used for filter `id` (1-based) under `assignment`.
    pub fn params_for(&self, assignment: &FilterAssignment, scheme: &QuantScheme, id: usize) -> QuantParams {
        if assignment.lut_filters.contains(&id) {
            QuantParams { n_bits: scheme.b_w_lut, step: self.lut_step }
        } else {
            QuantParams { n_bits: scheme.b_w_dsp, step: self.dsp_step }
        }
    }
}

/// Quantize a layer's filters per the hybrid scheme: DSP-allocated filters
/// at 4 bits, LUT-allocated at `b_w_lut` bits, each group with a step size
/// covering that group's max absolute weight.
pub fn hybrid_quantize_layer(
    weights: &ArrayView2<f64>,
    assignment: &FilterAssignment,
    scheme: &QuantScheme,
) -> Result<HybridQuantized, QuantError> {
    if assignment.layer_index != scheme.layer_index {
        return Err(QuantError::LayerMismatch {
            assignment: assignment.layer_index,
            scheme: scheme.layer_index,
        });
    }
    assignment.validate()?;
    let c_out = weights.nrows();
    if assignment.c_out() != c_out {
        return Err(QuantError::BadPartition {
            c_out,
            reason: format!("assignment covers {} filters", assignment.c_out()),
        });
    }

    let group_max = |ids: &[usize]| {
        ids.iter()
            .flat_map(|&id| weights.row(id - 1).into_iter().cloned().collect::<Vec<_>>())
            .fold(0.0f64, |m, w| m.max(w.abs()))
    };
    let lut_step = QuantParams::step_for_max_abs(scheme.b_w_lut, group_max(&assignment.lut_filters));
    let dsp_step = QuantParams::step_for_max_abs(scheme.b_w_dsp, group_max(&assignment.dsp_filters));

    let mut values = Array2::<i64>::zeros(weights.raw_dim());
    for &id in &assignment.lut_filters {
        let p = QuantParams { n_bits: scheme.b_w_lut, step: lut_step };
        for (j, &w) in weights.row(id - 1).iter().enumerate() {
            values[(id - 1, j)] = quantize_uniform(w, p);
        }
    }
    for &id in &assignment.dsp_filters {
        let p = QuantParams { n_bits: scheme.b_w_dsp, step: dsp_step };
        for (j, &w) in weights.row(id - 1).iter().enumerate() {
            values[(id - 1, j)] = quantize_uniform(w, p);
        }
    }
    Ok(HybridQuantized { values, lut_step, dsp_step })
}

/// Mean squared quantization error of `values` under a symmetric uniform
/// quantizer at `n_bits` whose step covers the max absolute value.
pub fn quantization_mse(values: &[f64], n_bits: u32) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let p = QuantParams { n_bits, step: QuantParams::step_for_max_abs(n_bits, max_abs) };
    values
        .iter()
        .map(|&v| {
            let e = v - dequantize(quantize_uniform(v, p), p);
            e * e
        })
        .sum::<f64>()
        / values.len() as f64
}
