//! The two matrix representations of cross-correlation and the tensor SVD.
//!
//! `UnfoldedWeights` stacks flattened filters as rows (d, ck^2); the Toeplitz
//! form embeds every filter once per output position (dn^2, cm^2). Both are
//! validated against the direct sliding-dot-product oracle in tensor.rs. The
//! Toeplitz matrix exists for validation, not performance: it can reach
//! millions of rows on real networks, so the dense buffer is only
//! materialized under a configurable element budget while rows stay
//! generatable on demand either way.

use crate::error::{DdpError, Result};
use crate::spectral;
use crate::tensor::{
    build_receptive_field_matrix, embed_receptive_field, matmul, transpose, DenseTensor,
    ReceptiveFieldMatrix, WindowGeometry,
};

/// Dense Toeplitz buffers are only materialized up to this many elements.
pub const DEFAULT_ELEMENT_BUDGET: usize = 100_000_000;

/// Weight tensor reshaped to (d, ck^2): row h is the flattened filter h.
#[derive(Debug, Clone)]
pub struct UnfoldedWeights {
    matrix: DenseTensor,
    filters: usize,
    channels: usize,
    kernel: (usize, usize),
}

impl UnfoldedWeights {
    /// The (d, ck^2) matrix.
    pub fn matrix(&self) -> &DenseTensor {
        &self.matrix
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel(&self) -> (usize, usize) {
        self.kernel
    }

    pub fn window_len(&self) -> usize {
        self.channels * self.kernel.0 * self.kernel.1
    }

    /// Back to the (d, c, kh, kw) weight tensor.
    pub fn refold(&self) -> DenseTensor {
        self.matrix
            .reshape(&[self.filters, self.channels, self.kernel.0, self.kernel.1])
            .expect("unfolding preserves the element count")
    }
}

fn weight_dims(w: &DenseTensor) -> Result<(usize, usize, usize, usize)> {
    match w.dims() {
        &[d, c, k1, k2] => Ok((d, c, k1, k2)),
        other => Err(DdpError::ShapeMismatch(format!(
            "weights must be a (filters, channels, kh, kw) tensor, got {other:?}"
        ))),
    }
}

pub fn unfold_weights(w: &DenseTensor) -> Result<UnfoldedWeights> {
    let (d, c, k1, k2) = weight_dims(w)?;
    Ok(UnfoldedWeights {
        matrix: w.reshape(&[d, c * k1 * k2])?,
        filters: d,
        channels: c,
        kernel: (k1, k2),
    })
}

/// Geometry of the Toeplitz representation over a (c, mh, mw) input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToeplitzGeometry {
    pub filters: usize,
    pub channels: usize,
    pub kernel: (usize, usize),
    pub input: (usize, usize),
    pub stride: usize,
    pub output: (usize, usize),
}

impl ToeplitzGeometry {
    /// d * n1 * n2
    pub fn rows(&self) -> usize {
        self.filters * self.output.0 * self.output.1
    }

    /// c * m1 * m2
    pub fn cols(&self) -> usize {
        self.channels * self.input.0 * self.input.1
    }
}

/// Toeplitz matrization: row (h, i, j) is filter h embedded at output
/// position (i, j) and flattened into the input space.
#[derive(Debug, Clone)]
pub struct ToeplitzWeights {
    weights: DenseTensor,
    geometry: ToeplitzGeometry,
    dense: Option<DenseTensor>,
}

impl ToeplitzWeights {
    pub fn geometry(&self) -> &ToeplitzGeometry {
        &self.geometry
    }

    /// The dense (dn^2, cm^2) matrix when it fit under the element budget.
    pub fn dense(&self) -> Option<&DenseTensor> {
        self.dense.as_ref()
    }

    /// Generate row r: the embedding of filter h at offset (i*stride, j*stride),
    /// where (h, i, j) is the row-major unflattening of r over (d, n1, n2).
    pub fn row(&self, r: usize) -> Result<Vec<f64>> {
        let g = &self.geometry;
        if r >= g.rows() {
            return Err(DdpError::IndexOutOfBounds(format!(
                "row {r} >= {}",
                g.rows()
            )));
        }
        let (n1, n2) = g.output;
        let h = r / (n1 * n2);
        let i = (r / n2) % n1;
        let j = r % n2;
        let filter = self.filter(h)?;
        let embedded =
            embed_receptive_field(&filter, i * g.stride, j * g.stride, g.input)?;
        Ok(embedded.into_data())
    }

    /// Filter h as a (c, kh, kw) tensor.
    pub fn filter(&self, h: usize) -> Result<DenseTensor> {
        let g = &self.geometry;
        if h >= g.filters {
            return Err(DdpError::IndexOutOfBounds(format!(
                "filter {h} >= {}",
                g.filters
            )));
        }
        let len = g.channels * g.kernel.0 * g.kernel.1;
        let data = self.weights.data()[h * len..(h + 1) * len].to_vec();
        DenseTensor::from_dims(&[g.channels, g.kernel.0, g.kernel.1], data)
    }
}

pub fn toeplitz_weights(
    w: &DenseTensor,
    input: (usize, usize),
    stride: usize,
) -> Result<ToeplitzWeights> {
    toeplitz_weights_with_budget(w, input, stride, DEFAULT_ELEMENT_BUDGET)
}

pub fn toeplitz_weights_with_budget(
    w: &DenseTensor,
    input: (usize, usize),
    stride: usize,
    element_budget: usize,
) -> Result<ToeplitzWeights> {
    let (d, c, k1, k2) = weight_dims(w)?;
    let window = WindowGeometry::new(c, input, (k1, k2), stride)?;
    let geometry = ToeplitzGeometry {
        filters: d,
        channels: c,
        kernel: (k1, k2),
        input,
        stride,
        output: window.output,
    };
    let mut out = ToeplitzWeights {
        weights: w.clone(),
        geometry,
        dense: None,
    };
    let elements = geometry.rows().checked_mul(geometry.cols());
    if matches!(elements, Some(e) if e <= element_budget) {
        let cols = geometry.cols();
        let mut dense = DenseTensor::zeros_from_dims(&[geometry.rows(), cols])?;
        for r in 0..geometry.rows() {
            let row = out.row(r)?;
            dense.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(&row);
        }
        out.dense = Some(dense);
    }
    Ok(out)
}

/// W1 route: plain matrix product of the unfolded weights with the
/// receptive-field matrix, giving the (d, n^2) flattened output.
pub fn conv_via_w1(wu: &UnfoldedWeights, psi: &ReceptiveFieldMatrix) -> Result<DenseTensor> {
    let expected = psi.geometry().window_len();
    if wu.window_len() != expected {
        return Err(DdpError::ShapeMismatch(format!(
            "unfolded weights have window length {} but receptive fields have {}",
            wu.window_len(),
            expected
        )));
    }
    matmul(wu.matrix(), psi.matrix())
}

/// W2 route: the Toeplitz matrix applied to the flattened input, giving the
/// (dn^2,) flattened output.
pub fn conv_via_w2(wt: &ToeplitzWeights, x_flat: &DenseTensor) -> Result<DenseTensor> {
    let cols = wt.geometry().cols();
    let flat = match x_flat.dims() {
        &[len] => {
            if len != cols {
                return Err(DdpError::ShapeMismatch(format!(
                    "flattened input length {len} != {cols}"
                )));
            }
            x_flat.data()
        }
        other => {
            return Err(DdpError::ShapeMismatch(format!(
                "expected a rank-1 flattened input, got {other:?}"
            )))
        }
    };
    let rows = wt.geometry().rows();
    let mut out = vec![0.0f64; rows];
    for (r, slot) in out.iter_mut().enumerate() {
        let row = wt.row(r)?;
        let mut acc = 0.0f64;
        for (a, b) in row.iter().zip(flat) {
            acc += a * b;
        }
        *slot = acc;
    }
    DenseTensor::from_dims(&[rows], out)
}

/// SVD factors of the unfolded weights reshaped back into 4-tensors, so a
/// convolution factors into three chained cross-correlations.
#[derive(Debug, Clone)]
pub struct TensorSvd {
    /// (d, d, 1, 1)
    pub u4: DenseTensor,
    /// (d, ck^2, 1, 1)
    pub s4: DenseTensor,
    /// (ck^2, c, kh, kw)
    pub v4: DenseTensor,
    /// Descending, length min(d, ck^2).
    pub singular_values: Vec<f64>,
}

/// Decompose a (d, c, kh, kw) weight tensor through the SVD of its unfolding.
///
/// Factors always come from the (d, ck^2) unfolding, never the Toeplitz form.
pub fn tensor_svd(w: &DenseTensor) -> Result<TensorSvd> {
    let (d, c, k1, k2) = weight_dims(w)?;
    let unfolded = unfold_weights(w)?;
    let factors = spectral::svd(unfolded.matrix())?;
    let ck2 = c * k1 * k2;

    let mut s_rect = DenseTensor::zeros_from_dims(&[d, ck2])?;
    for (i, &si) in factors.s.iter().enumerate() {
        s_rect.data_mut()[i * ck2 + i] = si;
    }

    Ok(TensorSvd {
        u4: factors.u.reshape(&[d, d, 1, 1])?,
        s4: s_rect.reshape(&[d, ck2, 1, 1])?,
        v4: transpose(&factors.v)?.reshape(&[ck2, c, k1, k2])?,
        singular_values: factors.s,
    })
}

/// Apply the factored convolution: u4 * (s4 * (v4 * x)) with stride 1 at
/// every stage. Equals the direct cross-correlation of the original weights.
pub fn apply_tensor_svd(ts: &TensorSvd, x: &DenseTensor) -> Result<DenseTensor> {
    let projected = crate::tensor::cross_correlate(&ts.v4, x, 1)?;
    let scaled = crate::tensor::cross_correlate(&ts.s4, &projected, 1)?;
    crate::tensor::cross_correlate(&ts.u4, &scaled, 1)
}

/// For each output position (i, j), the d x d Gram matrix of the Toeplitz
/// rows embedded there, ordered row-major over positions. Every block equals
/// the Gram of the unfolded weights because embedding at a common offset
/// preserves dot products.
pub fn w2_gram_diagonal_blocks(wt: &ToeplitzWeights) -> Result<Vec<DenseTensor>> {
    let g = *wt.geometry();
    let (n1, n2) = g.output;
    let d = g.filters;
    let mut blocks = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let rows: Vec<Vec<f64>> = (0..d)
                .map(|h| wt.row((h * n1 + i) * n2 + j))
                .collect::<Result<_>>()?;
            let mut block = DenseTensor::zeros_from_dims(&[d, d])?;
            let bd = block.data_mut();
            for a in 0..d {
                for b in 0..d {
                    let mut acc = 0.0f64;
                    for (x, y) in rows[a].iter().zip(&rows[b]) {
                        acc += x * y;
                    }
                    bd[a * d + b] = acc;
                }
            }
            blocks.push(block);
        }
    }
    Ok(blocks)
}

/// Convenience: full W1 pipeline from a weight tensor and raw input.
pub fn conv_w1_from_tensors(
    w: &DenseTensor,
    x: &DenseTensor,
    stride: usize,
) -> Result<DenseTensor> {
    let wu = unfold_weights(w)?;
    let psi = build_receptive_field_matrix(x, wu.kernel(), stride)?;
    conv_via_w1(&wu, &psi)
}
