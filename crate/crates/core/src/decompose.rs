//! Stage-by-stage decomposition of one conv layer on one input, and the
//! heatmap emitters that render each stage row as a spatial grid.
//!
//! For a layer with unfolded weights W = U S V^T acting on receptive fields
//! Psi(X), the stages are:
//!
//!   Psi(X) -> V^T Psi(X) -> S V^T Psi(X) -> Y = W Psi(X)
//!          -> ReLU(Y + B) -> U^T ReLU(Y + B)   (rows with nonzero s only)
//!
//! `y_bar` is computed by the direct product W * Psi(X) while `y_staged`
//! chains U (S (V^T Psi(X))); agreement of the two routes is the pipeline's
//! correctness check, exposed as `stage_identity_error`.

use std::path::{Path, PathBuf};

use crate::error::{DdpError, Result};
use crate::model::{forward, LinearGeometry, ModelSpec};
use crate::spectral::LayerSvd;
use crate::tensor::{matmul, max_abs_diff, transpose, DenseTensor};

#[derive(Debug, Clone)]
pub struct LayerDecomposition {
    pub layer_id: String,
    /// Spatial grid (n1, n2) each stage row reshapes to.
    pub grid: (usize, usize),
    /// Number of nonzero singular values; row count of the final stage.
    pub nonzero_count: usize,
    /// (ck^2, n^2) receptive fields.
    pub psi: DenseTensor,
    /// (ck^2, n^2) projections onto the right singular vectors.
    pub vt_psi: DenseTensor,
    /// (d, n^2) scaled projections.
    pub s_vt_psi: DenseTensor,
    /// (d, n^2) layer output before bias, direct route W * Psi(X).
    pub y_bar: DenseTensor,
    /// (d, n^2) staged route U * (S V^T Psi(X)), kept for verification.
    pub y_staged: DenseTensor,
    /// (d, n^2) y_bar plus the per-filter bias.
    pub y_biased: DenseTensor,
    /// (d, n^2) ReLU(y_bar + bias).
    pub relu_out: DenseTensor,
    /// (r, n^2) projection of the rectified output back onto the left
    /// singular vectors with nonzero singular values.
    pub ut_relu: DenseTensor,
}

impl LayerDecomposition {
    /// Largest elementwise gap between the direct and staged output routes.
    pub fn stage_identity_error(&self) -> f64 {
        max_abs_diff(&self.y_bar, &self.y_staged).expect("stages share a shape")
    }

    /// (||U^T ReLU(Y+B)||_F, ||Y+B||_F); the first never exceeds the second.
    pub fn frobenius_pair(&self) -> (f64, f64) {
        (self.ut_relu.frobenius_norm(), self.y_biased.frobenius_norm())
    }

    /// Stage tensors in pipeline order with their emitter names.
    pub fn stages(&self) -> [(&'static str, &DenseTensor); 6] {
        [
            ("psi", &self.psi),
            ("vt_psi", &self.vt_psi),
            ("s_vt_psi", &self.s_vt_psi),
            ("y_bar", &self.y_bar),
            ("relu", &self.relu_out),
            ("ut_relu", &self.ut_relu),
        ]
    }
}

/// Decompose a conv layer on one model input, reusing a precomputed SVD.
pub fn decompose_layer_with_svd(
    model: &ModelSpec,
    svd: &LayerSvd,
    layer_id: &str,
    x: &DenseTensor,
) -> Result<LayerDecomposition> {
    let view = model.linear_view(layer_id)?;
    if !matches!(view.geometry, LinearGeometry::Conv { .. }) {
        return Err(DdpError::InvalidLayerKind(format!(
            "layer '{layer_id}' is fully connected; the stage decomposition is defined for conv layers"
        )));
    }
    let trace = forward(model, x)?;
    let x_latent = trace
        .input_of(layer_id)
        .expect("linear_view verified the layer exists");
    let psi = view.receptive_fields(x_latent)?;
    let grid = view.output_grid();

    let v_t = transpose(&svd.v)?;
    let vt_psi = matmul(&v_t, psi.matrix())?;
    let s_vt_psi = matmul(&svd.s_matrix(), &vt_psi)?;
    let y_bar = matmul(&view.unfolded, psi.matrix())?;
    let y_staged = matmul(&svd.u, &s_vt_psi)?;

    let positions = view.position_count();
    let mut y_biased = y_bar.clone();
    {
        let data = y_biased.data_mut();
        for (h, &b) in view.bias.iter().enumerate() {
            for v in &mut data[h * positions..(h + 1) * positions] {
                *v += b;
            }
        }
    }
    let mut relu_out = y_biased.clone();
    for v in relu_out.data_mut() {
        *v = v.max(0.0);
    }

    let nonzero = svd.nonzero_count();
    let ut_full = matmul(&transpose(&svd.u)?, &relu_out)?;
    // Restrict to the rows with nonzero singular values. The tensor type
    // cannot hold zero rows, so a rank-0 layer degenerates to one zero row.
    let ut_relu = if nonzero == 0 {
        DenseTensor::from_dims(&[1, positions], vec![0.0; positions])?
    } else {
        DenseTensor::from_dims(
            &[nonzero, positions],
            ut_full.data()[..nonzero * positions].to_vec(),
        )?
    };

    Ok(LayerDecomposition {
        layer_id: layer_id.to_string(),
        grid,
        nonzero_count: nonzero,
        psi: psi.matrix().clone(),
        vt_psi,
        s_vt_psi,
        y_bar,
        y_staged,
        y_biased,
        relu_out,
        ut_relu,
    })
}

/// Decompose a conv layer, computing the layer SVD in place.
pub fn decompose_layer(
    model: &ModelSpec,
    layer_id: &str,
    x: &DenseTensor,
) -> Result<LayerDecomposition> {
    let view = model.linear_view(layer_id)?;
    if !matches!(view.geometry, LinearGeometry::Conv { .. }) {
        return Err(DdpError::InvalidLayerKind(format!(
            "layer '{layer_id}' is fully connected; the stage decomposition is defined for conv layers"
        )));
    }
    let svd = view.svd()?;
    decompose_layer_with_svd(model, &svd, layer_id, x)
}

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round().clamp(0.0, 255.0) as u8
}

/// Symmetric diverging color scale centered at zero: negative values in
/// blue, positive in red, zero white. `vmax` is the per-stage |value| peak.
fn diverging_color(v: f64, vmax: f64) -> String {
    if vmax <= 0.0 || v == 0.0 {
        return "#ffffff".to_string();
    }
    let t = (v / vmax).clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (lerp(255, 178, t), lerp(255, 24, t), lerp(255, 43, t))
    } else {
        (lerp(255, 33, -t), lerp(255, 102, -t), lerp(255, 172, -t))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn svg_heatmap(values: &[f64], grid: (usize, usize), vmax: f64) -> String {
    const CELL: usize = 10;
    let (n1, n2) = grid;
    let mut svg = String::with_capacity(64 + values.len() * 64);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n",
        n2 * CELL,
        n1 * CELL
    ));
    for i in 0..n1 {
        for j in 0..n2 {
            let color = diverging_color(values[i * n2 + j], vmax);
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{color}\"/>\n",
                j * CELL,
                i * CELL
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn csv_grid(values: &[f64], grid: (usize, usize)) -> String {
    let (n1, n2) = grid;
    let mut out = String::new();
    for i in 0..n1 {
        let row: Vec<String> = (0..n2).map(|j| format!("{}", values[i * n2 + j])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Write every stage row as a CSV grid and an SVG raster under `out_dir`.
///
/// Layout: `<out_dir>/<stage>/row_<index>.{csv,svg}`. Rows of each stage
/// share a color scale normalized by the stage's largest |value|.
pub fn export_heatmaps(decomp: &LayerDecomposition, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (n1, n2) = decomp.grid;
    let positions = n1 * n2;
    let mut written = Vec::new();
    for (stage_name, tensor) in decomp.stages() {
        let stage_dir = out_dir.join(stage_name);
        std::fs::create_dir_all(&stage_dir)?;
        let rows = tensor.dims()[0];
        let vmax = tensor.max_abs();
        for r in 0..rows {
            let values = &tensor.data()[r * positions..(r + 1) * positions];
            let csv_path = stage_dir.join(format!("row_{r:03}.csv"));
            std::fs::write(&csv_path, csv_grid(values, decomp.grid))?;
            written.push(csv_path);
            let svg_path = stage_dir.join(format!("row_{r:03}.svg"));
            std::fs::write(&svg_path, svg_heatmap(values, decomp.grid, vmax))?;
            written.push(svg_path);
        }
    }
    Ok(written)
}
