//! Value-exact functional simulation of the two computing cores: the
//! bit-serial LUT-core GEMM (binary plane products accumulated with powers
//! of two) and the bit-parallel DSP-core tiled GEMM, plus their
//! heterogeneous column-split combination.
//!
//! All three paths must equal a direct integer GEMM exactly; geometry only
//! changes the tiling order, never the values.

use crate::quantize::{bitplane_decompose, plane_weight, FilterAssignment, QuantError, QuantScheme};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// LUT-core geometry: an M-by-N array of dot-product units, each consuming
/// K bits per operand per cycle, fed by per-row/per-column buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutCoreGeometry {
    /// Rows of the DPU array.
    pub m: usize,
    /// Columns of the DPU array.
    pub n: usize,
    /// Input bit-width of one DPU (a multiple of 64 in the search space).
    pub k: usize,
    /// Depth of the activation buffers.
    pub d_lbuf_a: usize,
    /// Depth of the weight buffers. Fixed to 1024 in the search space and
    /// ignored by the latency model; the cost model still charges for it.
    pub d_lbuf_w: usize,
}

impl LutCoreGeometry {
    pub fn new(m: usize, n: usize, k: usize, d_lbuf_a: usize) -> Self {
        Self { m, n, k, d_lbuf_a, d_lbuf_w: 1024 }
    }
}

/// DSP-core geometry: an activation register array of `n_reg_row_a` x 16
/// and a 16 x 16 weight register array, fed by dedicated buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DspCoreGeometry {
    /// Rows of the activation register array.
    pub n_reg_row_a: usize,
    /// Columns of the activation register array (fixed 16).
    pub n_reg_col_a: usize,
    /// Columns of the weight register array (fixed 16).
    pub n_reg_col_w: usize,
    /// Depth of the activation buffers.
    pub d_dbuf_a: usize,
    /// Depth of the weight buffers.
    pub d_dbuf_w: usize,
}

impl DspCoreGeometry {
    pub const REG_COLS: usize = 16;

    pub fn new(n_reg_row_a: usize, d_dbuf_a: usize, d_dbuf_w: usize) -> Self {
        Self {
            n_reg_row_a,
            n_reg_col_a: Self::REG_COLS,
            n_reg_col_w: Self::REG_COLS,
            d_dbuf_a,
            d_dbuf_w,
        }
    }
}

#[derive(Debug, Error)]
pub enum GemmError {
    #[error("shape mismatch: left is {a_rows}x{a_cols}, right is {b_rows}x{b_cols}")]
    ShapeMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
    #[error("operand out of range: {0}")]
    Range(#[from] QuantError),
    #[error("assignment mismatch: {0}")]
    Assignment(String),
}

fn check_shapes(a: &ArrayView2<i64>, w: &ArrayView2<i64>) -> Result<(), GemmError> {
    if a.ncols() != w.nrows() {
        return Err(GemmError::ShapeMismatch {
            a_rows: a.nrows(),
            a_cols: a.ncols(),
            b_rows: w.nrows(),
            b_cols: w.ncols(),
        });
    }
    Ok(())
}

/// Direct integer GEMM, the oracle every core simulation must match.
pub fn direct_gemm(a: &ArrayView2<i64>, w: &ArrayView2<i64>) -> Result<Array2<i64>, GemmError> {
    check_shapes(a, w)?;
    let (rows, depth, cols) = (a.nrows(), a.ncols(), w.ncols());
    let mut out = Array2::<i64>::zeros((rows, cols));
    for i in 0..rows {
        for j in 0..cols {
            let mut acc = 0i64;
            for d in 0..depth {
                acc += a[(i, d)] * w[(d, j)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Bit-serial GEMM on the LUT-core: both operands are decomposed into
/// binary planes, all `b_a * b_w` binary products are computed by tiled
/// AND/pop-count dot products and accumulated with weights
/// `2^(i+j)` (sign-corrected on MSB planes of signed operands).
///
/// Accumulators are i64; with depth <= 2^16 and operands up to 8 bits the
/// partial sums stay far below overflow.
#[allow(clippy::too_many_arguments)]
pub fn lut_gemm(
    a: &ArrayView2<i64>,
    w: &ArrayView2<i64>,
    b_a: u32,
    b_w: u32,
    a_signed: bool,
    w_signed: bool,
    geometry: &LutCoreGeometry,
) -> Result<Array2<i64>, GemmError> {
    check_shapes(a, w)?;
    let a_planes = bitplane_decompose(a, b_a, a_signed)?;
    let w_planes = bitplane_decompose(w, b_w, w_signed)?;

    let (rows, depth, cols) = (a.nrows(), a.ncols(), w.ncols());
    let (m, n, k) = (geometry.m, geometry.n, geometry.k);
    let mut out = Array2::<i64>::zeros((rows, cols));

    // Tile the binary products M x K x N the way the DPU array consumes
    // them: M rows and N columns in parallel, K depth bits per step.
    for row0 in (0..rows).step_by(m) {
        for col0 in (0..cols).step_by(n) {
            for d0 in (0..depth).step_by(k) {
                let row1 = (row0 + m).min(rows);
                let col1 = (col0 + n).min(cols);
                let d1 = (d0 + k).min(depth);
                for (ja, ap) in a_planes.planes.iter().enumerate() {
                    let wa = plane_weight(ja, b_a as usize, a_signed);
                    for (jw, wp) in w_planes.planes.iter().enumerate() {
                        let ww = plane_weight(jw, b_w as usize, w_signed);
                        let weight = wa * ww;
                        for i in row0..row1 {
                            for j in col0..col1 {
                                // Binary dot product over one K slice.
                                let mut pop = 0i64;
                                for d in d0..d1 {
                                    pop += (ap[(i, d)] & wp[(d, j)]) as i64;
                                }
                                out[(i, j)] += weight * pop;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_dsp_range(m: &ArrayView2<i64>, what: &'static str) -> Result<(), GemmError> {
    for ((row, col), &value) in m.indexed_iter() {
        if !(-8..=7).contains(&value) {
            return Err(GemmError::Range(QuantError::Overflow {
                row,
                col,
                value,
                n_bits: 4,
                signedness: what,
            }));
        }
    }
    Ok(())
}

/// Bit-parallel GEMM on the DSP-core. Operands must fit 4-bit signed
/// (activations below 4 bits are zero-padded into the 4-bit datapath).
/// Tiles are `n_reg_row_a` x 16 activation blocks against 16 x 16 weight
/// blocks; edge tiles are zero-padded.
pub fn dsp_gemm(
    a: &ArrayView2<i64>,
    w: &ArrayView2<i64>,
    geometry: &DspCoreGeometry,
) -> Result<Array2<i64>, GemmError> {
    check_shapes(a, w)?;
    check_dsp_range(a, "signed activation (4-bit datapath)")?;
    check_dsp_range(w, "signed weight (4-bit datapath)")?;

    let (rows, depth, cols) = (a.nrows(), a.ncols(), w.ncols());
    let tile_r = geometry.n_reg_row_a;
    let tile_c = geometry.n_reg_col_w;
    let tile_d = geometry.n_reg_col_a;
    let mut out = Array2::<i64>::zeros((rows, cols));

    for row0 in (0..rows).step_by(tile_r) {
        for col0 in (0..cols).step_by(tile_c) {
            for d0 in (0..depth).step_by(tile_d) {
                let row1 = (row0 + tile_r).min(rows);
                let col1 = (col0 + tile_c).min(cols);
                let d1 = (d0 + tile_d).min(depth);
                for i in row0..row1 {
                    for j in col0..col1 {
                        let mut acc = 0i64;
                        for d in d0..d1 {
                            acc += a[(i, d)] * w[(d, j)];
                        }
                        out[(i, j)] += acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Heterogeneous GEMM: LUT-assigned output columns are computed bit-serially
/// at `(b_a, b_w_lut)`, DSP-assigned columns bit-parallel, and the column
/// strips are interleaved back into the original filter order.
#[allow(clippy::too_many_arguments)]
pub fn hetero_gemm(
    a: &ArrayView2<i64>,
    w: &ArrayView2<i64>,
    assignment: &FilterAssignment,
    scheme: &QuantScheme,
    a_signed: bool,
    w_signed: bool,
    lut: &LutCoreGeometry,
    dsp: &DspCoreGeometry,
) -> Result<Array2<i64>, GemmError> {
    check_shapes(a, w)?;
    assignment.validate()?;
    if assignment.c_out() != w.ncols() {
        return Err(GemmError::Assignment(format!(
            "assignment covers {} filters but weight matrix has {} columns",
            assignment.c_out(),
            w.ncols()
        )));
    }

    let (rows, cols) = (a.nrows(), w.ncols());
    let mut out = Array2::<i64>::zeros((rows, cols));

    let gather = |ids: &[usize]| -> Array2<i64> {
        Array2::from_shape_fn((w.nrows(), ids.len()), |(d, j)| w[(d, ids[j] - 1)])
    };

    if !assignment.lut_filters.is_empty() {
        let w_lut = gather(&assignment.lut_filters);
        let part = lut_gemm(a, &w_lut.view(), scheme.b_a, scheme.b_w_lut, a_signed, w_signed, lut)?;
        for (j, &id) in assignment.lut_filters.iter().enumerate() {
            for i in 0..rows {
                out[(i, id - 1)] = part[(i, j)];
            }
        }
    }
    if !assignment.dsp_filters.is_empty() {
        let w_dsp = gather(&assignment.dsp_filters);
        let part = dsp_gemm(a, &w_dsp.view(), dsp)?;
        for (j, &id) in assignment.dsp_filters.iter().enumerate() {
            for i in 0..rows {
                out[(i, id - 1)] = part[(i, j)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_lut() -> LutCoreGeometry {
        LutCoreGeometry::new(2, 2, 64, 1024)
    }

    fn small_dsp() -> DspCoreGeometry {
        DspCoreGeometry::new(4, 1024, 1024)
    }

    #[test]
    fn lut_gemm_two_bit_worked_example() {
        let a = array![[2i64, 0], [1, 3]];
        let w = array![[0i64, 1], [1, 2]];
        let p = lut_gemm(&a.view(), &w.view(), 2, 2, false, false, &small_lut()).unwrap();
        assert_eq!(p, array![[0i64, 2], [3, 7]]);
        assert_eq!(p, direct_gemm(&a.view(), &w.view()).unwrap());
    }

    #[test]
    fn lut_gemm_identity_passthrough() {
        let a = Array2::from_shape_fn((3, 3), |(i, j)| i64::from(i == j));
        let w = array![[1i64, 2, 3], [0, 1, 0], [2, 2, 2]];
        let p = lut_gemm(&a.view(), &w.view(), 2, 2, false, false, &small_lut()).unwrap();
        assert_eq!(p, w);
    }

    #[test]
    fn lut_gemm_random_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let rows = rng.gen_range(1..=8);
            let depth = rng.gen_range(1..=8);
            let cols = rng.gen_range(1..=8);
            let b_a = rng.gen_range(1..=4);
            let b_w = rng.gen_range(1..=4);
            let a = Array2::from_shape_fn((rows, depth), |_| {
                rng.gen_range(-(1i64 << (b_a - 1))..(1i64 << (b_a - 1)))
            });
            let w = Array2::from_shape_fn((depth, cols), |_| {
                rng.gen_range(-(1i64 << (b_w - 1))..(1i64 << (b_w - 1)))
            });
            let geom = LutCoreGeometry::new(rng.gen_range(1..=4), rng.gen_range(1..=4), 64, 1024);
            let p = lut_gemm(&a.view(), &w.view(), b_a, b_w, true, true, &geom).unwrap();
            assert_eq!(p, direct_gemm(&a.view(), &w.view()).unwrap());
        }
    }

    #[test]
    fn lut_gemm_geometry_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((7, 11), |_| rng.gen_range(-4i64..4));
        let w = Array2::from_shape_fn((11, 5), |_| rng.gen_range(-4i64..4));
        let reference = direct_gemm(&a.view(), &w.view()).unwrap();
        for (m, n, k) in [(1, 1, 64), (3, 2, 64), (7, 5, 128), (16, 16, 256)] {
            let geom = LutCoreGeometry::new(m, n, k, 2048);
            let p = lut_gemm(&a.view(), &w.view(), 3, 3, true, true, &geom).unwrap();
            assert_eq!(p, reference, "geometry ({m},{n},{k})");
        }
    }

    #[test]
    fn lut_gemm_rejects_out_of_range() {
        let a = array![[4i64]];
        let w = array![[1i64]];
        assert!(lut_gemm(&a.view(), &w.view(), 2, 2, false, false, &small_lut()).is_err());
    }

    #[test]
    fn dsp_gemm_zero_weights() {
        let a = array![[1i64, 2], [3, 4]];
        let w = Array2::<i64>::zeros((2, 3));
        let p = dsp_gemm(&a.view(), &w.view(), &small_dsp()).unwrap();
        assert!(p.iter().all(|&v| v == 0));
    }

    #[test]
    fn dsp_gemm_dot_of_ones() {
        let a = Array2::<i64>::ones((1, 16));
        let w = Array2::<i64>::ones((16, 1));
        let p = dsp_gemm(&a.view(), &w.view(), &small_dsp()).unwrap();
        assert_eq!(p, array![[16i64]]);
    }

    #[test]
    fn dsp_gemm_random_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let rows = rng.gen_range(1..=20);
            let depth = rng.gen_range(1..=20);
            let cols = rng.gen_range(1..=20);
            let a = Array2::from_shape_fn((rows, depth), |_| rng.gen_range(-8i64..=7));
            let w = Array2::from_shape_fn((depth, cols), |_| rng.gen_range(-8i64..=7));
            let geom = DspCoreGeometry::new(rng.gen_range(1..=8), 1024, 1024);
            let p = dsp_gemm(&a.view(), &w.view(), &geom).unwrap();
            assert_eq!(p, direct_gemm(&a.view(), &w.view()).unwrap());
        }
    }

    #[test]
    fn dsp_gemm_rejects_wide_operand() {
        let a = array![[8i64]];
        let w = array![[1i64]];
        assert!(dsp_gemm(&a.view(), &w.view(), &small_dsp()).is_err());
    }

    fn assignment_for_ratio(c_out: usize, ratio: f64) -> FilterAssignment {
        let n_lut = (ratio * c_out as f64).round() as usize;
        FilterAssignment {
            layer_index: 1,
            lut_filters: (1..=n_lut).collect(),
            dsp_filters: (n_lut + 1..=c_out).collect(),
            ratio,
        }
    }

    #[test]
    fn hetero_boundary_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = Array2::from_shape_fn((5, 9), |_| rng.gen_range(-4i64..4));
        let w = Array2::from_shape_fn((9, 6), |_| rng.gen_range(-4i64..4));
        let scheme = QuantScheme::new(1, 3, 4);

        let all_dsp = assignment_for_ratio(6, 0.0);
        let p0 = hetero_gemm(&a.view(), &w.view(), &all_dsp, &scheme, true, true, &small_lut(), &small_dsp()).unwrap();
        assert_eq!(p0, dsp_gemm(&a.view(), &w.view(), &small_dsp()).unwrap());

        let all_lut = assignment_for_ratio(6, 1.0);
        let p1 = hetero_gemm(&a.view(), &w.view(), &all_lut, &scheme, true, true, &small_lut(), &small_dsp()).unwrap();
        assert_eq!(
            p1,
            lut_gemm(&a.view(), &w.view(), 3, 4, true, true, &small_lut()).unwrap()
        );
    }

    #[test]
    fn hetero_256_filters_three_quarter_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = Array2::from_shape_fn((4, 18), |_| rng.gen_range(-4i64..4));
        let w = Array2::from_shape_fn((18, 256), |_| rng.gen_range(-8i64..=7));
        let assignment = assignment_for_ratio(256, 0.75);
        assert_eq!(assignment.lut_filters.len(), 192);
        assert_eq!(assignment.dsp_filters.len(), 64);
        let scheme = QuantScheme::new(1, 3, 4);
        let p = hetero_gemm(&a.view(), &w.view(), &assignment, &scheme, true, true, &small_lut(), &small_dsp()).unwrap();
        assert_eq!(p, direct_gemm(&a.view(), &w.view()).unwrap());
    }

    #[test]
    fn hetero_invariant_under_assignment_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Array2::from_shape_fn((3, 7), |_| rng.gen_range(-4i64..4));
        let w = Array2::from_shape_fn((7, 8), |_| rng.gen_range(-8i64..=7));
        let scheme = QuantScheme::new(1, 4, 5);
        let mut assignment = FilterAssignment {
            layer_index: 1,
            lut_filters: vec![2, 5, 7],
            dsp_filters: vec![1, 3, 4, 6, 8],
            ratio: 3.0 / 8.0,
        };
        let p1 = hetero_gemm(&a.view(), &w.view(), &assignment, &scheme, true, true, &small_lut(), &small_dsp()).unwrap();
        assignment.lut_filters = vec![7, 2, 5];
        assignment.dsp_filters = vec![8, 6, 4, 3, 1];
        let p2 = hetero_gemm(&a.view(), &w.view(), &assignment, &scheme, true, true, &small_lut(), &small_dsp()).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1, direct_gemm(&a.view(), &w.view()).unwrap());
    }

    #[test]
    fn hetero_rejects_bad_partition() {
        let a = array![[1i64]];
        let w = array![[1i64, 1]];
        let assignment = FilterAssignment {
            layer_index: 1,
            lut_filters: vec![1],
            dsp_filters: vec![1],
            ratio: 0.5,
        };
        let scheme = QuantScheme::new(1, 2, 2);
        assert!(hetero_gemm(&a.view(), &w.view(), &assignment, &scheme, true, true, &small_lut(), &small_dsp()).is_err());
    }
}
