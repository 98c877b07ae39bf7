//! Matrix SVD with a deterministic convention, Gram-matrix spectra,
//! heavy-tailed power-law fitting, and the capacity metric built from both.
//!
//! The SVD itself is delegated to nalgebra's Golub-Kahan implementation; this
//! module owns everything that makes the output a usable contract: descending
//! order, completion of the thin factors to full orthonormal bases, the sign
//! convention (largest-magnitude component of every right singular vector is
//! nonnegative, ties broken by lowest index), and the numerical-rank rule.

use nalgebra::DMatrix;

use crate::error::{DdpError, Result};
use crate::tensor::DenseTensor;

/// Minimum number of tail samples accepted by the power-law estimator.
pub const MIN_TAIL_SAMPLES: usize = 50;

fn to_dmatrix(t: &DenseTensor) -> Result<DMatrix<f64>> {
    match t.dims() {
        &[r, c] => Ok(DMatrix::from_row_slice(r, c, t.data())),
        other => Err(DdpError::ShapeMismatch(format!(
            "expected a rank-2 tensor, got {other:?}"
        ))),
    }
}

fn from_dmatrix(m: &DMatrix<f64>) -> DenseTensor {
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            data.push(m[(i, j)]);
        }
    }
    DenseTensor::from_dims(&[m.nrows(), m.ncols()], data)
        .expect("matrix dimensions are consistent by construction")
}

/// Extend a matrix with orthonormal columns to a full orthonormal basis.
///
/// The first `thin.ncols()` columns of the result are `thin` itself; the rest
/// are generated from the Householder reflectors of its QR factorization, so
/// the completion is deterministic and orthogonal to the existing columns.
fn complete_orthonormal_basis(thin: &DMatrix<f64>) -> DMatrix<f64> {
    let n = thin.nrows();
    let r = thin.ncols();
    assert!(r <= n);
    if r == n {
        return thin.clone();
    }

    // Householder QR of the thin factor; reflectors stored as (start, v, tau).
    let mut work = thin.clone();
    let mut reflectors: Vec<(usize, Vec<f64>, f64)> = Vec::with_capacity(r);
    for j in 0..r {
        let mut v: Vec<f64> = (j..n).map(|i| work[(i, j)]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push((j, v, 0.0));
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vsq = v.iter().map(|x| x * x).sum::<f64>();
        let tau = if vsq == 0.0 { 0.0 } else { 2.0 / vsq };
        // Apply to the remaining columns so later reflectors see updated data.
        for col in j..r {
            let dot: f64 = v.iter().enumerate().map(|(i, &vi)| vi * work[(j + i, col)]).sum();
            let scale = tau * dot;
            for (i, &vi) in v.iter().enumerate() {
                work[(j + i, col)] -= scale * vi;
            }
        }
        reflectors.push((j, v, tau));
    }

    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (n, r)).copy_from(thin);
    // Complement columns are Q e_i for i >= r, applying reflectors inside out.
    let mut col = vec![0.0f64; n];
    for i in r..n {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[i] = 1.0;
        for (start, v, tau) in reflectors.iter().rev() {
            if *tau == 0.0 {
                continue;
            }
            let dot: f64 = v.iter().enumerate().map(|(k, &vk)| vk * col[start + k]).sum();
            let scale = tau * dot;
            for (k, &vk) in v.iter().enumerate() {
                col[start + k] -= scale * vk;
            }
        }
        for k in 0..n {
            full[(k, i)] = col[k];
        }
    }
    full
}

/// Flip column signs so the largest-magnitude component of every column of V
/// is nonnegative (ties broken by lowest index). Paired U columns flip with
/// their V columns; completed U columns get the same rule directly.
fn apply_sign_convention(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>, paired: usize) {
    let dominant_is_negative = |m: &DMatrix<f64>, j: usize| -> bool {
        let mut best = 0usize;
        let mut best_abs = m[(0, j)].abs();
        for i in 1..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        m[(best, j)] < 0.0
    };
    for j in 0..v.ncols() {
        if dominant_is_negative(v, j) {
            for i in 0..v.nrows() {
                v[(i, j)] = -v[(i, j)];
            }
            if j < paired {
                for i in 0..u.nrows() {
                    u[(i, j)] = -u[(i, j)];
                }
            }
        }
    }
    for j in paired..u.ncols() {
        if dominant_is_negative(u, j) {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
}

/// Full singular value decomposition M = U diag(s) V^T with deterministic
/// ordering and sign conventions.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// Full (rows, rows) orthonormal left factor.
    pub u: DenseTensor,
    /// min(rows, cols) singular values, descending.
    pub s: Vec<f64>,
    /// Full (cols, cols) orthonormal right factor (columns are v_i).
    pub v: DenseTensor,
}

pub fn svd(m: &DenseTensor) -> Result<SvdFactors> {
    let mat = to_dmatrix(m)?;
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(DdpError::InvalidInput(
            "matrix contains non-finite entries".into(),
        ));
    }
    let (rows, cols) = (mat.nrows(), mat.ncols());
    let r = rows.min(cols);

    let svd = mat
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| DdpError::NumericalFailure("SVD did not converge".into()))?;
    let u_thin = svd.u.expect("u requested");
    let v_t_thin = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;

    // Descending order, stable under duplicates.
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(std::cmp::Ordering::Equal));
    let s: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
    let mut u_sorted = DMatrix::zeros(rows, r);
    let mut v_sorted = DMatrix::zeros(cols, r);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u_thin.column(src));
        v_sorted.set_column(dst, &v_t_thin.row(src).transpose());
    }

    let mut u_full = complete_orthonormal_basis(&u_sorted);
    let mut v_full = complete_orthonormal_basis(&v_sorted);
    apply_sign_convention(&mut u_full, &mut v_full, r);

    if let Some(s0) = s.first().copied() {
        for w in s.windows(2) {
            if (w[0] - w[1]).abs() <= 1e-9 * s0 {
                log::warn!(
                    "near-duplicate singular values {} and {}; subspace pairing fixed by convention",
                    w[0],
                    w[1]
                );
                break;
            }
        }
    }

    Ok(SvdFactors {
        u: from_dmatrix(&u_full),
        s,
        v: from_dmatrix(&v_full),
    })
}

/// SVD of one layer's unfolded weight matrix plus the numerical-rank rule.
#[derive(Debug, Clone)]
pub struct LayerSvd {
    pub layer_id: String,
    /// Full (d, d) left factor.
    pub u: DenseTensor,
    /// Descending singular values, length min(d, ck^2).
    pub s: Vec<f64>,
    /// Full (ck^2, ck^2) right factor.
    pub v: DenseTensor,
    /// Threshold below which a singular value counts as zero.
    pub rank_tolerance: f64,
}

impl LayerSvd {
    pub fn rows(&self) -> usize {
        self.u.dims()[0]
    }

    pub fn cols(&self) -> usize {
        self.v.dims()[0]
    }

    /// Number of singular values counted with multiplicity, min(d, ck^2).
    pub fn singular_value_count(&self) -> usize {
        self.s.len()
    }

    /// Numerical rank: singular values above the tolerance.
    pub fn nonzero_count(&self) -> usize {
        self.s.iter().filter(|&&v| v > self.rank_tolerance).count()
    }

    /// Column i of V.
    pub fn right_singular_vector(&self, i: usize) -> Result<Vec<f64>> {
        let n = self.cols();
        if i >= n {
            return Err(DdpError::IndexOutOfBounds(format!(
                "singular vector {i} >= {n}"
            )));
        }
        let d = self.v.data();
        Ok((0..n).map(|row| d[row * n + i]).collect())
    }

    /// The rectangular (d, ck^2) singular-value matrix.
    pub fn s_matrix(&self) -> DenseTensor {
        let (rows, cols) = (self.rows(), self.cols());
        let mut out = DenseTensor::zeros_from_dims(&[rows, cols]).expect("valid dims");
        let od = out.data_mut();
        for (i, &si) in self.s.iter().enumerate() {
            od[i * cols + i] = si;
        }
        out
    }
}

pub fn layer_svd(layer_id: &str, m: &DenseTensor) -> Result<LayerSvd> {
    let factors = svd(m)?;
    let (rows, cols) = (m.dims()[0], m.dims()[1]);
    let s0 = factors.s.first().copied().unwrap_or(0.0);
    let rank_tolerance = rows.max(cols) as f64 * f64::EPSILON * s0;
    Ok(LayerSvd {
        layer_id: layer_id.to_string(),
        u: factors.u,
        s: factors.s,
        v: factors.v,
        rank_tolerance,
    })
}

/// Eigenvalues of the Gram matrix M M^T, descending. Computed by symmetric
/// eigendecomposition of the smaller Gram side, padded with exact zeros, so
/// it stays an independent route from [`svd`].
pub fn gram_eigenvalues(m: &DenseTensor) -> Result<Vec<f64>> {
    let mat = to_dmatrix(m)?;
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(DdpError::InvalidInput(
            "matrix contains non-finite entries".into(),
        ));
    }
    let (rows, cols) = (mat.nrows(), mat.ncols());
    let gram = if rows <= cols {
        &mat * mat.transpose()
    } else {
        mat.transpose() * &mat
    };
    let eigen = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&v| if v > 0.0 { v } else { 0.0 })
        .collect::<Vec<f64>>();
    let mut values = eigen;
    values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    values.resize(rows, 0.0);
    Ok(values)
}

/// Continuous maximum-likelihood power-law fit of a sample tail.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    /// Exponent of the fitted density ~ x^-alpha, always > 1.
    pub alpha: f64,
    /// Lower cutoff of the fitted tail.
    pub xmin: f64,
    /// Kolmogorov-Smirnov distance between the empirical and fitted tails.
    pub ks_distance: f64,
    /// Number of samples >= xmin.
    pub n_tail: usize,
}

fn validate_samples(samples: &[f64]) -> Result<()> {
    if samples.iter().any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(DdpError::InvalidInput(
            "power-law samples must be finite and > 0".into(),
        ));
    }
    Ok(())
}

fn ks_distance(tail_sorted: &[f64], xmin: f64, alpha: f64) -> f64 {
    let n = tail_sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in tail_sorted.iter().enumerate() {
        let fitted = 1.0 - (xmin / x).powf(alpha - 1.0);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((fitted - lo).abs()).max((hi - fitted).abs());
    }
    d
}

/// MLE exponent with the cutoff fixed by the caller.
pub fn fit_power_law_fixed_xmin(samples: &[f64], xmin: f64) -> Result<PowerLawFit> {
    validate_samples(samples)?;
    if !xmin.is_finite() || xmin <= 0.0 {
        return Err(DdpError::InvalidParameter("xmin must be > 0".into()));
    }
    let mut tail: Vec<f64> = samples.iter().copied().filter(|&v| v >= xmin).collect();
    if tail.len() < MIN_TAIL_SAMPLES {
        return Err(DdpError::InsufficientSamples {
            needed: MIN_TAIL_SAMPLES,
            got: tail.len(),
        });
    }
    tail.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_tail = tail.len();
    let sum_ln: f64 = tail.iter().map(|&v| (v / xmin).ln()).sum();
    if sum_ln <= 0.0 {
        return Err(DdpError::NumericalFailure(
            "degenerate tail: zero logarithmic spread above xmin".into(),
        ));
    }
    let alpha = 1.0 + n_tail as f64 / sum_ln;
    Ok(PowerLawFit {
        alpha,
        xmin,
        ks_distance: ks_distance(&tail, xmin, alpha),
        n_tail,
    })
}

/// MLE exponent with the cutoff chosen over observed sample values to
/// minimize the KS distance (ties resolved toward the smallest cutoff).
pub fn fit_power_law(samples: &[f64]) -> Result<PowerLawFit> {
    validate_samples(samples)?;
    let n = samples.len();
    if n < MIN_TAIL_SAMPLES {
        return Err(DdpError::InsufficientSamples {
            needed: MIN_TAIL_SAMPLES,
            got: n,
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // suffix_ln[i] = sum of ln(sorted[j]) for j >= i
    let mut suffix_ln = vec![0.0f64; n + 1];
    for i in (0..n).rev() {
        suffix_ln[i] = suffix_ln[i + 1] + sorted[i].ln();
    }

    let mut best: Option<PowerLawFit> = None;
    let mut saw_candidate = false;
    for i in 0..n {
        if i > 0 && sorted[i] == sorted[i - 1] {
            continue;
        }
        let n_tail = n - i;
        if n_tail < MIN_TAIL_SAMPLES {
            break;
        }
        saw_candidate = true;
        let xmin = sorted[i];
        let sum_ln = suffix_ln[i] - n_tail as f64 * xmin.ln();
        if sum_ln <= 0.0 {
            continue;
        }
        let alpha = 1.0 + n_tail as f64 / sum_ln;
        let ks = ks_distance(&sorted[i..], xmin, alpha);
        let better = match &best {
            None => true,
            Some(b) => ks < b.ks_distance,
        };
        if better {
            best = Some(PowerLawFit {
                alpha,
                xmin,
                ks_distance: ks,
                n_tail,
            });
        }
    }
    match best {
        Some(fit) => Ok(fit),
        None if saw_candidate => Err(DdpError::NumericalFailure(
            "degenerate samples: every candidate tail has zero logarithmic spread".into(),
        )),
        None => Err(DdpError::InsufficientSamples {
            needed: MIN_TAIL_SAMPLES,
            got: n,
        }),
    }
}

/// Power-law fit of a layer's nonzero Gram spectrum plus its largest
/// eigenvalue s_0^2.
pub fn layer_power_law(layer: &LayerSvd) -> Result<(PowerLawFit, f64)> {
    let nz = layer.nonzero_count();
    if nz < MIN_TAIL_SAMPLES {
        return Err(DdpError::InsufficientSamples {
            needed: MIN_TAIL_SAMPLES,
            got: nz,
        });
    }
    let eigen: Vec<f64> = layer.s[..nz].iter().map(|&s| s * s).collect();
    let fit = fit_power_law(&eigen)?;
    let lambda_max = layer.s[0] * layer.s[0];
    Ok((fit, lambda_max))
}

/// Per-layer tail exponent and largest Gram eigenvalue.
pub fn layer_alpha(layer: &LayerSvd) -> Result<(f64, f64)> {
    let (fit, lambda_max) = layer_power_law(layer)?;
    Ok((fit.alpha, lambda_max))
}

/// One layer's contribution to the capacity metric.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCapacity {
    pub layer_id: String,
    pub alpha: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub per_layer: Vec<LayerCapacity>,
    /// sum over layers of alpha * ln(lambda_max); divided by the layer count
    /// when `averaged` is set. Natural logarithm throughout.
    pub alpha_hat: f64,
    pub averaged: bool,
}

pub fn capacity_metric(layers: &[LayerCapacity], averaged: bool) -> Result<CapacityReport> {
    if layers.is_empty() {
        return Err(DdpError::InvalidInput(
            "capacity metric needs at least one layer".into(),
        ));
    }
    let mut total = 0.0f64;
    for l in layers {
        if l.lambda_max.is_nan() || l.lambda_max <= 0.0 {
            return Err(DdpError::InvalidInput(format!(
                "layer {}: lambda_max must be > 0, got {}",
                l.layer_id, l.lambda_max
            )));
        }
        total += l.alpha * l.lambda_max.ln();
    }
    let alpha_hat = if averaged {
        total / layers.len() as f64
    } else {
        total
    };
    Ok(CapacityReport {
        per_layer: layers.to_vec(),
        alpha_hat,
        averaged,
    })
}

/// Log10-spaced histogram of a Gram spectrum plus the raw sorted values.
#[derive(Debug, Clone, PartialEq)]
pub struct EsdHistogram {
    /// (bin_lo, bin_hi, count); bins are left-closed right-open, the final
    /// bin is right-closed. Values below the first edge (zeros) land in the
    /// first bin.
    pub bins: Vec<(f64, f64, usize)>,
    /// Eigenvalues sorted descending.
    pub sorted: Vec<f64>,
}

pub fn esd_histogram(eigenvalues: &[f64], bins: usize) -> Result<EsdHistogram> {
    if eigenvalues.is_empty() {
        return Err(DdpError::InvalidInput("no eigenvalues to bin".into()));
    }
    if bins == 0 {
        return Err(DdpError::InvalidParameter("bins must be >= 1".into()));
    }
    if eigenvalues.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(DdpError::InvalidInput(
            "eigenvalues must be finite and >= 0".into(),
        ));
    }
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let positives: Vec<f64> = sorted.iter().copied().filter(|&v| v > 0.0).collect();
    let (lo, hi) = match (positives.last(), positives.first()) {
        (Some(&min), Some(&max)) => (min, max),
        _ => (0.0, 0.0),
    };
    let mut edges = Vec::with_capacity(bins + 1);
    if lo == hi {
        edges.resize(bins + 1, lo);
    } else {
        let (llo, lhi) = (lo.log10(), hi.log10());
        for i in 0..=bins {
            edges.push(10f64.powf(llo + (lhi - llo) * i as f64 / bins as f64));
        }
        edges[0] = lo;
        edges[bins] = hi;
    }

    let mut counts = vec![0usize; bins];
    for &v in &sorted {
        let mut b = if v <= edges[0] {
            0
        } else if v >= edges[bins] {
            bins - 1
        } else {
            let width = (edges[bins].log10() - edges[0].log10()).max(f64::MIN_POSITIVE);
            let guess = ((v.log10() - edges[0].log10()) / width * bins as f64).floor();
            (guess.max(0.0) as usize).min(bins - 1)
        };
        while b > 0 && v < edges[b] {
            b -= 1;
        }
        while b + 1 < bins && v >= edges[b + 1] {
            b += 1;
        }
        counts[b] += 1;
    }

    let bins_out = (0..bins)
        .map(|b| (edges[b], edges[b + 1], counts[b]))
        .collect();
    Ok(EsdHistogram {
        bins: bins_out,
        sorted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{matmul, max_abs_diff, transpose, DenseTensor};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tensor(dims: &[usize], data: Vec<f64>) -> DenseTensor {
        DenseTensor::from_dims(dims, data).unwrap()
    }

    fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseTensor {
        tensor(
            &[rows, cols],
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    }

    fn reconstruct(f: &SvdFactors, rows: usize, cols: usize) -> DenseTensor {
        let r = f.s.len();
        let mut s_mat = DenseTensor::zeros_from_dims(&[rows, cols]).unwrap();
        for (i, &si) in f.s.iter().enumerate().take(r) {
            s_mat.data_mut()[i * cols + i] = si;
        }
        matmul(&matmul(&f.u, &s_mat).unwrap(), &transpose(&f.v).unwrap()).unwrap()
    }

    fn orthonormality_error(m: &DenseTensor) -> f64 {
        let n = m.dims()[0];
        let gram = matmul(&transpose(m).unwrap(), m).unwrap();
        let mut id = DenseTensor::zeros_from_dims(&[n, n]).unwrap();
        for i in 0..n {
            id.data_mut()[i * n + i] = 1.0;
        }
        max_abs_diff(&gram, &id).unwrap()
    }

    #[test]
    fn svd_identity() {
        let mut id = DenseTensor::zeros_from_dims(&[3, 3]).unwrap();
        for i in 0..3 {
            id.data_mut()[i * 3 + i] = 1.0;
        }
        let f = svd(&id).unwrap();
        assert_eq!(f.s, vec![1.0, 1.0, 1.0]);
        assert!(max_abs_diff(&f.u, &id).unwrap() < 1e-12);
        assert!(max_abs_diff(&f.v, &id).unwrap() < 1e-12);
    }

    #[test]
    fn svd_diagonal_with_negative_entry() {
        let m = tensor(&[2, 2], vec![3.0, 0.0, 0.0, -2.0]);
        let f = svd(&m).unwrap();
        assert!((f.s[0] - 3.0).abs() < 1e-12);
        assert!((f.s[1] - 2.0).abs() < 1e-12);
        // Sign convention: dominant component of each V column nonnegative.
        assert!(f.v.get(&[0, 0]).unwrap() > 0.0);
        assert!(f.v.get(&[1, 1]).unwrap() > 0.0);
        let rec = reconstruct(&f, 2, 2);
        assert!(max_abs_diff(&rec, &m).unwrap() < 1e-12);
    }

    #[test]
    fn svd_random_rectangular_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = rand_matrix(&mut rng, 20, 7);
        let f = svd(&m).unwrap();
        assert_eq!(f.u.dims(), &[20, 20]);
        assert_eq!(f.v.dims(), &[7, 7]);
        assert_eq!(f.s.len(), 7);
        assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(f.s.iter().all(|&v| v >= 0.0));
        assert!(orthonormality_error(&f.u) < 1e-10);
        assert!(orthonormality_error(&f.v) < 1e-10);
        assert!(max_abs_diff(&reconstruct(&f, 20, 7), &m).unwrap() < 1e-10);
    }

    #[test]
    fn svd_wide_matrix_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = rand_matrix(&mut rng, 5, 31);
        let f = svd(&m).unwrap();
        assert_eq!(f.u.dims(), &[5, 5]);
        assert_eq!(f.v.dims(), &[31, 31]);
        assert!(orthonormality_error(&f.v) < 1e-10);
        assert!(max_abs_diff(&reconstruct(&f, 5, 31), &m).unwrap() < 1e-10);
    }

    #[test]
    fn svd_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = rand_matrix(&mut rng, 16, 9);
        let a = svd(&m).unwrap();
        let b = svd(&m).unwrap();
        assert_eq!(a.u.data(), b.u.data());
        assert_eq!(a.v.data(), b.v.data());
        assert_eq!(a.s, b.s);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let m = tensor(&[1, 2], vec![1.0, f64::NAN]);
        assert!(matches!(svd(&m), Err(DdpError::InvalidInput(_))));
    }

    #[test]
    fn gram_eigenvalues_squares() {
        let m = tensor(&[2, 2], vec![3.0, 0.0, 0.0, 4.0]);
        let e = gram_eigenvalues(&m).unwrap();
        assert!((e[0] - 16.0).abs() < 1e-9);
        assert!((e[1] - 9.0).abs() < 1e-9);

        let z = DenseTensor::zeros_from_dims(&[4, 6]).unwrap();
        assert_eq!(gram_eigenvalues(&z).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn gram_eigenvalues_match_svd_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = rand_matrix(&mut rng, 10, 30);
        let eig = gram_eigenvalues(&m).unwrap();
        let f = svd(&m).unwrap();
        assert_eq!(eig.len(), 10);
        let scale = f.s[0] * f.s[0];
        for (e, s) in eig.iter().zip(&f.s) {
            assert!((e - s * s).abs() <= 1e-8 * scale);
        }

        // Tall case: padded with exact zeros beyond the rank bound.
        let m = rand_matrix(&mut rng, 30, 10);
        let eig = gram_eigenvalues(&m).unwrap();
        assert_eq!(eig.len(), 30);
        assert!(eig[10..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn power_law_fixed_xmin_closed_form() {
        let samples = vec![std::f64::consts::E.sqrt(); 80];
        let fit = fit_power_law_fixed_xmin(&samples, 1.0).unwrap();
        assert!((fit.alpha - 3.0).abs() < 1e-12);
        assert_eq!(fit.n_tail, 80);
    }

    #[test]
    fn power_law_rejects_degenerate_and_bad_input() {
        let equal = vec![2.5; 200];
        assert!(matches!(
            fit_power_law(&equal),
            Err(DdpError::NumericalFailure(_))
        ));
        assert!(matches!(
            fit_power_law(&[1.0, -2.0]),
            Err(DdpError::InvalidInput(_))
        ));
        assert!(matches!(
            fit_power_law(&vec![1.0, 2.0, 3.0][..]),
            Err(DdpError::InsufficientSamples { .. })
        ));
    }

    fn pareto_samples(rng: &mut ChaCha8Rng, n: usize, alpha: f64, xmin: f64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random_range(0.0f64..1.0).max(f64::MIN_POSITIVE);
                xmin * u.powf(-1.0 / (alpha - 1.0))
            })
            .collect()
    }

    #[test]
    fn power_law_recovers_pareto_exponent() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples = pareto_samples(&mut rng, 10_000, 2.5, 1.0);
        let fit = fit_power_law(&samples).unwrap();
        assert!(
            fit.alpha > 2.35 && fit.alpha < 2.65,
            "fitted alpha {}",
            fit.alpha
        );
        assert!(fit.ks_distance >= 0.0 && fit.ks_distance <= 1.0);
    }

    #[test]
    fn power_law_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let samples = pareto_samples(&mut rng, 2_000, 3.0, 1.0);
        let base = fit_power_law(&samples).unwrap();
        for c in [0.5, 3.7, 1000.0] {
            let scaled: Vec<f64> = samples.iter().map(|&v| v * c).collect();
            let fit = fit_power_law(&scaled).unwrap();
            assert!((fit.alpha - base.alpha).abs() < 1e-9);
            assert!((fit.xmin - base.xmin * c).abs() < 1e-9 * base.xmin * c);
        }
    }

    #[test]
    fn layer_alpha_contract() {
        // Layer whose squared singular values are exact Pareto(3.0) samples.
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut eigen = pareto_samples(&mut rng, 512, 3.0, 1.0);
        eigen.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let n = eigen.len();
        let mut m = DenseTensor::zeros_from_dims(&[n, n]).unwrap();
        for (i, &e) in eigen.iter().enumerate() {
            m.data_mut()[i * n + i] = e.sqrt();
        }
        let layer = layer_svd("synthetic", &m).unwrap();
        let (alpha, lambda_max) = layer_alpha(&layer).unwrap();
        assert!(alpha > 2.8 && alpha < 3.2, "alpha {alpha}");
        assert!((lambda_max - eigen[0]).abs() < 1e-9 * eigen[0]);

        let small = tensor(&[2, 2], vec![3.0, 0.0, 0.0, 2.0]);
        let small_layer = layer_svd("small", &small).unwrap();
        assert!(matches!(
            layer_alpha(&small_layer),
            Err(DdpError::InsufficientSamples { .. })
        ));
        assert!((small_layer.s[0] * small_layer.s[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_metric_closed_form() {
        let layers = vec![
            LayerCapacity {
                layer_id: "a".into(),
                alpha: 2.0,
                lambda_max: std::f64::consts::E,
            },
            LayerCapacity {
                layer_id: "b".into(),
                alpha: 3.0,
                lambda_max: std::f64::consts::E * std::f64::consts::E,
            },
        ];
        let sum = capacity_metric(&layers, false).unwrap();
        assert!((sum.alpha_hat - 8.0).abs() < 1e-12);
        let mean = capacity_metric(&layers, true).unwrap();
        assert!((mean.alpha_hat - 4.0).abs() < 1e-12);

        let single = vec![LayerCapacity {
            layer_id: "only".into(),
            alpha: 17.0,
            lambda_max: 1.0,
        }];
        assert_eq!(capacity_metric(&single, false).unwrap().alpha_hat, 0.0);

        let mut reversed = layers.clone();
        reversed.reverse();
        assert_eq!(
            capacity_metric(&layers, false).unwrap().alpha_hat,
            capacity_metric(&reversed, false).unwrap().alpha_hat
        );

        let bad = vec![LayerCapacity {
            layer_id: "bad".into(),
            alpha: 2.0,
            lambda_max: 0.0,
        }];
        assert!(matches!(
            capacity_metric(&bad, false),
            Err(DdpError::InvalidInput(_))
        ));
    }

    #[test]
    fn esd_histogram_basic() {
        let h = esd_histogram(&[1.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(h.bins.len(), 1);
        assert_eq!(h.bins[0].2, 3);

        // Half-open bins, final bin closed: 10 falls in the upper bin.
        let h = esd_histogram(&[1.0, 10.0, 100.0], 2).unwrap();
        assert_eq!(h.bins[0], (1.0, 10.0, 1));
        assert_eq!(h.bins[1].2, 2);
        assert_eq!(h.sorted, vec![100.0, 10.0, 1.0]);
    }

    #[test]
    fn esd_histogram_conserves_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let values: Vec<f64> = (0..512).map(|_| rng.random_range(0.0..100.0)).collect();
        let h = esd_histogram(&values, 30).unwrap();
        let total: usize = h.bins.iter().map(|b| b.2).sum();
        assert_eq!(total, 512);

        // Zeros land in the first bin and are still counted.
        let mixed = vec![0.0, 0.0, 1.0, 5.0, 50.0];
        let h = esd_histogram(&mixed, 3).unwrap();
        let total: usize = h.bins.iter().map(|b| b.2).sum();
        assert_eq!(total, 5);
        assert!(h.bins[0].2 >= 2);

        assert!(matches!(
            esd_histogram(&[], 2),
            Err(DdpError::InvalidInput(_))
        ));
    }
}
