//! Dense row-major tensors and the index algebra used throughout the library.
//!
//! Everything downstream (matrizations, the forward pass, signal profiles) is
//! phrased in terms of the flattening isomorphism between an s-order tensor
//! and its row-major vectorization: `flatten_index` / `unflatten_index` are
//! that isomorphism on indices, `reshape` is the induced map on tensors, and
//! the receptive-field projection/embedding pair moves windows between the
//! small (c,k,k) space and the full (c,m,m) input space.
//!
//! `cross_correlate` is the reference implementation of the sliding dot
//! product computed by convolutional layers. It is deliberately the literal
//! quadruple loop with a fixed sequential accumulation order; the matrization
//! routes are validated against it, never the other way around.

use crate::error::{DdpError, Result};

/// Ordered tuple of positive extents describing one tensor dimension layout.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(DdpError::ShapeMismatch("shape must have order >= 1".into()));
        }
        let mut count: usize = 1;
        for &d in &dims {
            if d == 0 {
                return Err(DdpError::ShapeMismatch(format!(
                    "zero extent in shape {dims:?}"
                )));
            }
            count = count.checked_mul(d).ok_or_else(|| {
                DdpError::ShapeMismatch(format!("element count of {dims:?} overflows usize"))
            })?;
        }
        Ok(Shape { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Total number of elements.
    pub fn element_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major position of a multi-index.
    pub fn flatten_index(&self, alpha: &[usize]) -> Result<usize> {
        if alpha.len() != self.dims.len() {
            return Err(DdpError::IndexOutOfBounds(format!(
                "index order {} does not match shape order {}",
                alpha.len(),
                self.dims.len()
            )));
        }
        let mut flat = 0usize;
        for (j, (&a, &extent)) in alpha.iter().zip(&self.dims).enumerate() {
            if a >= extent {
                return Err(DdpError::IndexOutOfBounds(format!(
                    "component {j} is {a} but extent is {extent}"
                )));
            }
            flat = flat * extent + a;
        }
        Ok(flat)
    }

    /// Inverse of [`flatten_index`](Self::flatten_index).
    pub fn unflatten_index(&self, flat: usize) -> Result<Vec<usize>> {
        let count = self.element_count();
        if flat >= count {
            return Err(DdpError::IndexOutOfBounds(format!(
                "flat index {flat} >= element count {count}"
            )));
        }
        let mut alpha = vec![0usize; self.dims.len()];
        let mut rest = flat;
        for (j, &extent) in self.dims.iter().enumerate().rev() {
            alpha[j] = rest % extent;
            rest /= extent;
        }
        Ok(alpha)
    }
}

/// Row-major dense tensor of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.element_count() {
            return Err(DdpError::ShapeMismatch(format!(
                "buffer length {} does not match element count {} of shape {:?}",
                data.len(),
                shape.element_count(),
                shape.dims()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn from_dims(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::new(Shape::new(dims.to_vec())?, data)
    }

    pub fn zeros(shape: Shape) -> Self {
        let data = vec![0.0; shape.element_count()];
        DenseTensor { shape, data }
    }

    pub fn zeros_from_dims(dims: &[usize]) -> Result<Self> {
        Ok(Self::zeros(Shape::new(dims.to_vec())?))
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, alpha: &[usize]) -> Result<f64> {
        Ok(self.data[self.shape.flatten_index(alpha)?])
    }

    pub fn set(&mut self, alpha: &[usize], value: f64) -> Result<()> {
        let flat = self.shape.flatten_index(alpha)?;
        self.data[flat] = value;
        Ok(())
    }

    /// Reinterpret the same buffer under a new shape with equal element count.
    pub fn reshape(&self, new_dims: &[usize]) -> Result<DenseTensor> {
        let new_shape = Shape::new(new_dims.to_vec())?;
        if new_shape.element_count() != self.shape.element_count() {
            return Err(DdpError::ShapeMismatch(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.dims(),
                self.shape.element_count(),
                new_dims,
                new_shape.element_count()
            )));
        }
        Ok(DenseTensor {
            shape: new_shape,
            data: self.data.clone(),
        })
    }

    /// a*self + b*other, elementwise.
    pub fn linear_comb(&self, a: f64, other: &DenseTensor, b: f64) -> Result<DenseTensor> {
        if self.dims() != other.dims() {
            return Err(DdpError::ShapeMismatch(format!(
                "linear combination of {:?} and {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, a: f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| a * x).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|&x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

/// Largest absolute elementwise difference between two same-shape tensors.
pub fn max_abs_diff(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(DdpError::ShapeMismatch(format!(
            "comparing {:?} with {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs())))
}

fn expect_rank3(x: &DenseTensor, what: &str) -> Result<(usize, usize, usize)> {
    match x.dims() {
        &[c, m1, m2] => Ok((c, m1, m2)),
        other => Err(DdpError::ShapeMismatch(format!(
            "{what} must be a (channels, height, width) tensor, got {other:?}"
        ))),
    }
}

fn expect_rank4(w: &DenseTensor) -> Result<(usize, usize, usize, usize)> {
    match w.dims() {
        &[d, c, k1, k2] => Ok((d, c, k1, k2)),
        other => Err(DdpError::ShapeMismatch(format!(
            "weights must be a (filters, channels, kh, kw) tensor, got {other:?}"
        ))),
    }
}

/// Copy the (c, kh, kw) window of `x` anchored at spatial offset (i, j).
pub fn extract_receptive_field(
    x: &DenseTensor,
    i: usize,
    j: usize,
    k: (usize, usize),
) -> Result<DenseTensor> {
    let (c, m1, m2) = expect_rank3(x, "input")?;
    let (k1, k2) = k;
    if k1 > m1 || k2 > m2 || i > m1 - k1 || j > m2 - k2 {
        return Err(DdpError::IndexOutOfBounds(format!(
            "window {k1}x{k2} at ({i}, {j}) exceeds spatial extent {m1}x{m2}"
        )));
    }
    let mut out = DenseTensor::zeros(Shape::new(vec![c, k1, k2])?);
    let xd = x.data();
    let od = out.data_mut();
    for r in 0..c {
        for s in 0..k1 {
            for t in 0..k2 {
                od[(r * k1 + s) * k2 + t] = xd[(r * m1 + (i + s)) * m2 + (j + t)];
            }
        }
    }
    Ok(out)
}

/// Place a (c, kh, kw) tensor inside a zero (c, mh, mw) tensor at offset (i, j).
///
/// Inverse of [`extract_receptive_field`] on its image: extracting at the same
/// offset recovers the original tensor.
pub fn embed_receptive_field(
    t: &DenseTensor,
    i: usize,
    j: usize,
    m: (usize, usize),
) -> Result<DenseTensor> {
    let (c, k1, k2) = expect_rank3(t, "window")?;
    let (m1, m2) = m;
    if k1 > m1 || k2 > m2 || i > m1 - k1 || j > m2 - k2 {
        return Err(DdpError::IndexOutOfBounds(format!(
            "window {k1}x{k2} at ({i}, {j}) exceeds spatial extent {m1}x{m2}"
        )));
    }
    let mut out = DenseTensor::zeros(Shape::new(vec![c, m1, m2])?);
    let td = t.data();
    let od = out.data_mut();
    for r in 0..c {
        for s in 0..k1 {
            for t_idx in 0..k2 {
                od[(r * m1 + (i + s)) * m2 + (j + t_idx)] = td[(r * k1 + s) * k2 + t_idx];
            }
        }
    }
    Ok(out)
}

/// Window geometry of one sliding-window pass over a (c, mh, mw) input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGeometry {
    pub channels: usize,
    pub input: (usize, usize),
    pub kernel: (usize, usize),
    pub stride: usize,
    pub output: (usize, usize),
}

impl WindowGeometry {
    pub fn new(
        channels: usize,
        input: (usize, usize),
        kernel: (usize, usize),
        stride: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(DdpError::InvalidParameter("stride must be >= 1".into()));
        }
        if kernel.0 > input.0 || kernel.1 > input.1 {
            return Err(DdpError::ShapeMismatch(format!(
                "kernel {:?} larger than input {:?}",
                kernel, input
            )));
        }
        let output = (
            (input.0 - kernel.0) / stride + 1,
            (input.1 - kernel.1) / stride + 1,
        );
        Ok(WindowGeometry {
            channels,
            input,
            kernel,
            stride,
            output,
        })
    }

    /// Number of valid window positions.
    pub fn position_count(&self) -> usize {
        self.output.0 * self.output.1
    }

    /// Flattened window length c*kh*kw.
    pub fn window_len(&self) -> usize {
        self.channels * self.kernel.0 * self.kernel.1
    }
}

/// Matrix whose columns are the flattened receptive fields of an input tensor.
#[derive(Debug, Clone)]
pub struct ReceptiveFieldMatrix {
    matrix: DenseTensor,
    geometry: WindowGeometry,
}

impl ReceptiveFieldMatrix {
    /// The (c*kh*kw, n1*n2) matrix.
    pub fn matrix(&self) -> &DenseTensor {
        &self.matrix
    }

    pub fn geometry(&self) -> &WindowGeometry {
        &self.geometry
    }

    pub fn column(&self, idx: usize) -> Result<Vec<f64>> {
        let cols = self.geometry.position_count();
        if idx >= cols {
            return Err(DdpError::IndexOutOfBounds(format!(
                "column {idx} >= {cols}"
            )));
        }
        let rows = self.geometry.window_len();
        let d = self.matrix.data();
        Ok((0..rows).map(|r| d[r * cols + idx]).collect())
    }
}

/// Build the receptive-field matrix of `x`: column i*n2 + j holds the
/// flattened window anchored at (i*stride, j*stride).
pub fn build_receptive_field_matrix(
    x: &DenseTensor,
    k: (usize, usize),
    stride: usize,
) -> Result<ReceptiveFieldMatrix> {
    let (c, m1, m2) = expect_rank3(x, "input")?;
    let geometry = WindowGeometry::new(c, (m1, m2), k, stride)?;
    let (n1, n2) = geometry.output;
    let rows = geometry.window_len();
    let cols = geometry.position_count();
    let mut matrix = DenseTensor::zeros(Shape::new(vec![rows, cols])?);
    let xd = x.data();
    let md = matrix.data_mut();
    for i in 0..n1 {
        for j in 0..n2 {
            let col = i * n2 + j;
            let (oi, oj) = (i * stride, j * stride);
            for r in 0..c {
                for s in 0..k.0 {
                    for t in 0..k.1 {
                        let row = (r * k.0 + s) * k.1 + t;
                        md[row * cols + col] = xd[(r * m1 + (oi + s)) * m2 + (oj + t)];
                    }
                }
            }
        }
    }
    Ok(ReceptiveFieldMatrix { matrix, geometry })
}

/// Direct sliding dot product: Y[h,i,j] = sum_{r,s,t} w[h,r,s,t] * x[r, i*stride+s, j*stride+t].
///
/// Reference oracle for every matrization route. The accumulation order is
/// fixed (r outer, then s, then t, sequential f64 adds) so results are
/// bit-reproducible regardless of caller-side parallelism.
pub fn cross_correlate(w: &DenseTensor, x: &DenseTensor, stride: usize) -> Result<DenseTensor> {
    let (d, wc, k1, k2) = expect_rank4(w)?;
    let (c, m1, m2) = expect_rank3(x, "input")?;
    if wc != c {
        return Err(DdpError::ShapeMismatch(format!(
            "weight channels {wc} != input channels {c}"
        )));
    }
    let geometry = WindowGeometry::new(c, (m1, m2), (k1, k2), stride)?;
    let (n1, n2) = geometry.output;
    let mut out = DenseTensor::zeros(Shape::new(vec![d, n1, n2])?);
    let wd = w.data();
    let xd = x.data();
    let od = out.data_mut();
    for h in 0..d {
        for i in 0..n1 {
            for j in 0..n2 {
                let mut acc = 0.0f64;
                for r in 0..c {
                    for s in 0..k1 {
                        for t in 0..k2 {
                            acc += wd[((h * c + r) * k1 + s) * k2 + t]
                                * xd[(r * m1 + (i * stride + s)) * m2 + (j * stride + t)];
                        }
                    }
                }
                od[(h * n1 + i) * n2 + j] = acc;
            }
        }
    }
    Ok(out)
}

/// Surround the spatial dimensions of a (c, mh, mw) tensor with `pad` zeros.
pub fn zero_pad(x: &DenseTensor, pad: usize) -> Result<DenseTensor> {
    let (c, m1, m2) = expect_rank3(x, "input")?;
    if pad == 0 {
        return Ok(x.clone());
    }
    let (p1, p2) = (m1 + 2 * pad, m2 + 2 * pad);
    let mut out = DenseTensor::zeros(Shape::new(vec![c, p1, p2])?);
    let xd = x.data();
    let od = out.data_mut();
    for r in 0..c {
        for i in 0..m1 {
            for j in 0..m2 {
                od[(r * p1 + (i + pad)) * p2 + (j + pad)] = xd[(r * m1 + i) * m2 + j];
            }
        }
    }
    Ok(out)
}

/// Row-major matrix product of two rank-2 tensors, sequential accumulation.
pub fn matmul(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (ar, ac) = match a.dims() {
        &[r, c] => (r, c),
        other => {
            return Err(DdpError::ShapeMismatch(format!(
                "matmul lhs must be rank 2, got {other:?}"
            )))
        }
    };
    let (br, bc) = match b.dims() {
        &[r, c] => (r, c),
        other => {
            return Err(DdpError::ShapeMismatch(format!(
                "matmul rhs must be rank 2, got {other:?}"
            )))
        }
    };
    if ac != br {
        return Err(DdpError::ShapeMismatch(format!(
            "matmul inner dimensions {ac} and {br} differ"
        )));
    }
    let mut out = DenseTensor::zeros(Shape::new(vec![ar, bc])?);
    let ad = a.data();
    let bd = b.data();
    let od = out.data_mut();
    for i in 0..ar {
        for j in 0..bc {
            let mut acc = 0.0f64;
            for k in 0..ac {
                acc += ad[i * ac + k] * bd[k * bc + j];
            }
            od[i * bc + j] = acc;
        }
    }
    Ok(out)
}

/// Transpose a rank-2 tensor.
pub fn transpose(m: &DenseTensor) -> Result<DenseTensor> {
    let (r, c) = match m.dims() {
        &[r, c] => (r, c),
        other => {
            return Err(DdpError::ShapeMismatch(format!(
                "transpose needs rank 2, got {other:?}"
            )))
        }
    };
    let mut out = DenseTensor::zeros(Shape::new(vec![c, r])?);
    let md = m.data();
    let od = out.data_mut();
    for i in 0..r {
        for j in 0..c {
            od[j * r + i] = md[i * c + j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(dims: &[usize], data: Vec<f64>) -> DenseTensor {
        DenseTensor::from_dims(dims, data).unwrap()
    }

    #[test]
    fn flatten_index_row_major() {
        let s = Shape::new(vec![2, 3, 4]).unwrap();
        assert_eq!(s.flatten_index(&[1, 2, 3]).unwrap(), 23);
        let s = Shape::new(vec![5]).unwrap();
        assert_eq!(s.flatten_index(&[0]).unwrap(), 0);
        let s = Shape::new(vec![2, 3]).unwrap();
        assert_eq!(s.flatten_index(&[1, 0]).unwrap(), 3);
    }

    #[test]
    fn flatten_index_rejects_out_of_range() {
        let s = Shape::new(vec![2, 3]).unwrap();
        assert!(matches!(
            s.flatten_index(&[2, 0]),
            Err(DdpError::IndexOutOfBounds(_))
        ));
        assert!(matches!(
            s.flatten_index(&[0]),
            Err(DdpError::IndexOutOfBounds(_))
        ));
    }

    #[test]
    fn unflatten_index_inverts() {
        let s = Shape::new(vec![2, 3, 4]).unwrap();
        assert_eq!(s.unflatten_index(23).unwrap(), vec![1, 2, 3]);
        let s = Shape::new(vec![7]).unwrap();
        assert_eq!(s.unflatten_index(4).unwrap(), vec![4]);
        let s = Shape::new(vec![3, 3]).unwrap();
        assert_eq!(s.unflatten_index(5).unwrap(), vec![1, 2]);
        assert!(matches!(
            s.unflatten_index(9),
            Err(DdpError::IndexOutOfBounds(_))
        ));
    }

    #[test]
    fn index_round_trip_exhaustive_small_shapes() {
        for dims in [
            vec![1],
            vec![17],
            vec![2, 3, 4],
            vec![5, 5, 5],
            vec![3, 1, 4, 1, 5],
            vec![10, 10, 10, 10],
        ] {
            let s = Shape::new(dims).unwrap();
            assert!(s.element_count() <= 10_000);
            for flat in 0..s.element_count() {
                let alpha = s.unflatten_index(flat).unwrap();
                assert_eq!(s.flatten_index(&alpha).unwrap(), flat);
            }
        }
    }

    #[test]
    fn reshape_keeps_buffer() {
        let t = tensor(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let flat = t.reshape(&[6]).unwrap();
        assert_eq!(flat.data(), t.data());
        let same = t.reshape(&[2, 3]).unwrap();
        assert_eq!(same, t);
        let t = tensor(&[4], vec![1.0, 2.0, 3.0, 4.0]);
        let sq = t.reshape(&[2, 2]).unwrap();
        assert_eq!(sq.get(&[0, 1]).unwrap(), 2.0);
        assert_eq!(sq.get(&[1, 0]).unwrap(), 3.0);
        assert!(matches!(
            t.reshape(&[3, 2]),
            Err(DdpError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn extract_window_reads_directly() {
        let x = tensor(&[1, 3, 3], (1..=9).map(f64::from).collect());
        let w = extract_receptive_field(&x, 0, 0, (2, 2)).unwrap();
        assert_eq!(w.data(), &[1.0, 2.0, 4.0, 5.0]);
        let w = extract_receptive_field(&x, 1, 1, (2, 2)).unwrap();
        assert_eq!(w.data(), &[5.0, 6.0, 8.0, 9.0]);
        let full = extract_receptive_field(&x, 0, 0, (3, 3)).unwrap();
        assert_eq!(full, x);
        assert!(matches!(
            extract_receptive_field(&x, 2, 2, (2, 2)),
            Err(DdpError::IndexOutOfBounds(_))
        ));
    }

    #[test]
    fn embed_window_zero_fills() {
        let t = tensor(&[1, 1, 1], vec![5.0]);
        let e = embed_receptive_field(&t, 1, 1, (3, 3)).unwrap();
        assert_eq!(
            e.data(),
            &[0.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0]
        );
        let t = tensor(&[2, 2, 2], (1..=8).map(f64::from).collect());
        let e = embed_receptive_field(&t, 0, 0, (3, 4)).unwrap();
        let back = extract_receptive_field(&e, 0, 0, (2, 2)).unwrap();
        assert_eq!(back, t);
        let same = embed_receptive_field(&t, 0, 0, (2, 2)).unwrap();
        assert_eq!(same, t);
    }

    #[test]
    fn extract_then_embed_round_trips() {
        let x = tensor(&[2, 4, 4], (0..32).map(f64::from).collect());
        for i in 0..2 {
            for j in 0..2 {
                let w = extract_receptive_field(&x, i, j, (3, 3)).unwrap();
                let e = embed_receptive_field(&w, i, j, (4, 4)).unwrap();
                let w2 = extract_receptive_field(&e, i, j, (3, 3)).unwrap();
                assert_eq!(w, w2);
            }
        }
    }

    #[test]
    fn receptive_field_matrix_columns() {
        let x = tensor(&[1, 3, 3], (1..=9).map(f64::from).collect());
        let psi = build_receptive_field_matrix(&x, (2, 2), 1).unwrap();
        assert_eq!(psi.matrix().dims(), &[4, 4]);
        assert_eq!(psi.column(0).unwrap(), vec![1.0, 2.0, 4.0, 5.0]);
        assert_eq!(psi.column(1).unwrap(), vec![2.0, 3.0, 5.0, 6.0]);
        assert_eq!(psi.column(2).unwrap(), vec![4.0, 5.0, 7.0, 8.0]);
        assert_eq!(psi.column(3).unwrap(), vec![5.0, 6.0, 8.0, 9.0]);

        let single = build_receptive_field_matrix(&x, (3, 3), 1).unwrap();
        assert_eq!(single.matrix().dims(), &[9, 1]);
        assert_eq!(single.column(0).unwrap(), x.data());
    }

    #[test]
    fn receptive_field_matrix_stride_two() {
        let x = tensor(&[1, 4, 4], (0..16).map(f64::from).collect());
        let psi = build_receptive_field_matrix(&x, (2, 2), 2).unwrap();
        assert_eq!(psi.geometry().output, (2, 2));
        // Brute-force window enumeration at stride offsets.
        let offsets = [(0usize, 0usize), (0, 2), (2, 0), (2, 2)];
        for (col, &(i, j)) in offsets.iter().enumerate() {
            let expected = extract_receptive_field(&x, i, j, (2, 2)).unwrap();
            assert_eq!(psi.column(col).unwrap(), expected.data());
        }
    }

    #[test]
    fn every_column_matches_extracted_window() {
        let x = tensor(&[2, 5, 6], (0..60).map(|v| v as f64 * 0.5 - 7.0).collect());
        let psi = build_receptive_field_matrix(&x, (3, 2), 1).unwrap();
        let (n1, n2) = psi.geometry().output;
        for i in 0..n1 {
            for j in 0..n2 {
                let w = extract_receptive_field(&x, i, j, (3, 2)).unwrap();
                assert_eq!(psi.column(i * n2 + j).unwrap(), w.data());
            }
        }
    }

    #[test]
    fn cross_correlate_identity_kernel() {
        let w = tensor(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let x = tensor(&[1, 3, 3], (1..=9).map(f64::from).collect());
        let y = cross_correlate(&w, &x, 1).unwrap();
        assert_eq!(y.dims(), &[1, 2, 2]);
        assert_eq!(y.data(), &[6.0, 8.0, 12.0, 14.0]);
    }

    #[test]
    fn cross_correlate_zero_kernel() {
        let w = DenseTensor::zeros_from_dims(&[3, 2, 2, 2]).unwrap();
        let x = tensor(&[2, 4, 4], (0..32).map(f64::from).collect());
        let y = cross_correlate(&w, &x, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_correlate_channel_mismatch() {
        let w = DenseTensor::zeros_from_dims(&[1, 2, 2, 2]).unwrap();
        let x = DenseTensor::zeros_from_dims(&[3, 4, 4]).unwrap();
        assert!(matches!(
            cross_correlate(&w, &x, 1),
            Err(DdpError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn cross_correlate_is_bilinear() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rand_tensor = |dims: &[usize]| {
            let n: usize = dims.iter().product();
            DenseTensor::from_dims(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .unwrap()
        };
        let w1 = rand_tensor(&[2, 3, 2, 2]);
        let w2 = rand_tensor(&[2, 3, 2, 2]);
        let x1 = rand_tensor(&[3, 5, 5]);
        let x2 = rand_tensor(&[3, 5, 5]);
        let (a, b) = (0.37, -1.21);

        let lhs = cross_correlate(&w1.linear_comb(a, &w2, b).unwrap(), &x1, 1).unwrap();
        let rhs = cross_correlate(&w1, &x1, 1)
            .unwrap()
            .linear_comb(a, &cross_correlate(&w2, &x1, 1).unwrap(), b)
            .unwrap();
        assert!(max_abs_diff(&lhs, &rhs).unwrap() < 1e-12);

        let lhs = cross_correlate(&w1, &x1.linear_comb(a, &x2, b).unwrap(), 1).unwrap();
        let rhs = cross_correlate(&w1, &x1, 1)
            .unwrap()
            .linear_comb(a, &cross_correlate(&w1, &x2, 1).unwrap(), b)
            .unwrap();
        assert!(max_abs_diff(&lhs, &rhs).unwrap() < 1e-12);
    }

    #[test]
    fn zero_pad_surrounds() {
        let x = tensor(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let p = zero_pad(&x, 1).unwrap();
        assert_eq!(p.dims(), &[1, 4, 4]);
        assert_eq!(p.get(&[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(p.get(&[0, 2, 2]).unwrap(), 4.0);
        assert_eq!(p.get(&[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(zero_pad(&x, 0).unwrap(), x);
    }

    #[test]
    fn matmul_and_transpose() {
        let a = tensor(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = tensor(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
        let at = transpose(&a).unwrap();
        assert_eq!(at.dims(), &[3, 2]);
        assert_eq!(at.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert!(matches!(
            matmul(&a, &a),
            Err(DdpError::ShapeMismatch(_))
        ));
    }
}
