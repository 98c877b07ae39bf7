use ddp_core::convmat::{
    toeplitz_weights_with_budget, unfold_weights, w2_gram_diagonal_blocks, DEFAULT_ELEMENT_BUDGET,
};
use ddp_core::error::Result;
use ddp_core::io::{fmt_g17, write_ddpt};
use ddp_core::model::{load_model, LinearGeometry, LinearLayerView, ModelSpec};
use ddp_core::spectral::{esd_histogram, fit_power_law, gram_eigenvalues, PowerLawFit};
use ddp_core::tensor::{matmul, max_abs_diff, transpose, DenseTensor};
use rayon::prelude::*;

use super::{select_layers, thread_pool, write_run_log, write_text, LayerDefault};
use crate::opts::SpectrumArgs;

const ESD_BINS: usize = 50;
/// Symmetric eigendecompositions beyond this edge length are not attempted.
const EIGEN_DIM_LIMIT: usize = 2048;

struct LayerSpectrum {
    layer_id: String,
    n_svals: usize,
    eigenvalues: Option<Vec<f64>>,
    fit: Option<PowerLawFit>,
    lambda_max: Option<f64>,
    warning: Option<String>,
    /// w2 only: (rows, cols, block count, check verdict, max deviation).
    structure: Option<(usize, usize, usize, String, Option<f64>)>,
    dump: Option<DenseTensor>,
}

fn fit_or_warn(layer_id: &str, eigenvalues: &[f64]) -> (Option<PowerLawFit>, Option<String>) {
    let positive: Vec<f64> = eigenvalues.iter().copied().filter(|&v| v > 0.0).collect();
    match fit_power_law(&positive) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (
            None,
            Some(format!("layer {layer_id}: power-law fit unavailable: {e}")),
        ),
    }
}

fn w1_spectrum(view: &LinearLayerView, dump: bool) -> Result<LayerSpectrum> {
    let eigenvalues = gram_eigenvalues(&view.unfolded)?;
    let (fit, warning) = fit_or_warn(view.layer_id, &eigenvalues);
    Ok(LayerSpectrum {
        layer_id: view.layer_id.to_string(),
        n_svals: view.filters.min(view.window_len()),
        lambda_max: eigenvalues.first().copied(),
        eigenvalues: Some(eigenvalues),
        fit,
        warning,
        structure: None,
        dump: dump.then(|| view.unfolded.clone()),
    })
}

fn w2_spectrum(model: &ModelSpec, view: &LinearLayerView, dump: bool) -> Result<LayerSpectrum> {
    // Toeplitz geometry over the padded input; fc layers degenerate to a
    // single embedding so their Toeplitz form equals the unfolding.
    let (weights4, input, stride) = match view.geometry {
        LinearGeometry::Conv {
            channels,
            kernel,
            stride,
            pad,
            ..
        } => {
            let (in_shape, _) = model
                .shapes_of(view.layer_id)
                .expect("view layers exist in the model");
            let dims = in_shape.dims();
            let padded = (dims[1] + 2 * pad, dims[2] + 2 * pad);
            let w4 = view
                .unfolded
                .reshape(&[view.filters, channels, kernel, kernel])?;
            (w4, padded, stride)
        }
        LinearGeometry::Fc { inputs } => {
            let w4 = view.unfolded.reshape(&[view.filters, inputs, 1, 1])?;
            (w4, (1, 1), 1)
        }
    };
    let wt = toeplitz_weights_with_budget(&weights4, input, stride, DEFAULT_ELEMENT_BUDGET)?;
    let g = *wt.geometry();
    let (rows, cols) = (g.rows(), g.cols());
    let n_svals = rows.min(cols);
    let analyzable = wt.dense().is_some() && n_svals <= EIGEN_DIM_LIMIT;

    if !analyzable {
        return Ok(LayerSpectrum {
            layer_id: view.layer_id.to_string(),
            n_svals,
            eigenvalues: None,
            fit: None,
            lambda_max: None,
            warning: Some(format!(
                "layer {}: Toeplitz matrix {}x{} exceeds the analysis budget; geometry reported only",
                view.layer_id, rows, cols
            )),
            structure: Some((rows, cols, g.output.0 * g.output.1, "skipped".into(), None)),
            dump: None,
        });
    }

    let dense = wt.dense().expect("checked above");
    let eigenvalues = gram_eigenvalues(dense)?;
    let (fit, warning) = fit_or_warn(view.layer_id, &eigenvalues);

    // Reordered Gram block structure: every per-position block must equal
    // the Gram of the unfolded weights.
    let blocks = w2_gram_diagonal_blocks(&wt)?;
    let wu = unfold_weights(&weights4)?;
    let w1_gram = matmul(wu.matrix(), &transpose(wu.matrix())?)?;
    let mut max_dev = 0.0f64;
    for b in &blocks {
        max_dev = max_dev.max(max_abs_diff(b, &w1_gram)?);
    }
    let verdict = if max_dev <= 1e-10 { "pass" } else { "fail" };

    Ok(LayerSpectrum {
        layer_id: view.layer_id.to_string(),
        n_svals,
        lambda_max: eigenvalues.first().copied(),
        eigenvalues: Some(eigenvalues),
        fit,
        warning,
        structure: Some((rows, cols, blocks.len(), verdict.into(), Some(max_dev))),
        dump: dump.then(|| dense.clone()),
    })
}

fn fit_columns(fit: &Option<PowerLawFit>) -> (String, String, String) {
    match fit {
        Some(f) => (fmt_g17(f.alpha), fmt_g17(f.xmin), fmt_g17(f.ks_distance)),
        None => (String::new(), String::new(), String::new()),
    }
}

/// Per-layer ESD histograms, power-law fit rows, and singular-value counts.
pub fn run(args: &SpectrumArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let layers = select_layers(&model, args.layers.as_deref(), LayerDefault::AllLinear)?;
    std::fs::create_dir_all(&args.out)?;
    let pool = thread_pool(args.threads)?;
    let use_w2 = args.matrization == "w2";

    let results: Vec<Result<LayerSpectrum>> = pool.install(|| {
        layers
            .par_iter()
            .map(|id| {
                let view = model.linear_view(id)?;
                if use_w2 {
                    w2_spectrum(&model, &view, args.dump_matrix)
                } else {
                    w1_spectrum(&view, args.dump_matrix)
                }
                .map_err(|e| super::with_layer_context(id, e))
            })
            .collect()
    });

    let tag = &args.matrization;
    let mut summary = String::from("layer_id,n_svals,alpha,xmin,ks,lambda_max\n");
    let mut structure = String::from("layer_id,rows,cols,blocks,block_check,max_block_dev\n");
    let mut warnings = Vec::new();
    for result in results {
        let spec = result?;
        let (alpha, xmin, ks) = fit_columns(&spec.fit);
        let lambda = spec.lambda_max.map(fmt_g17).unwrap_or_default();
        summary.push_str(&format!(
            "{},{},{},{},{},{}\n",
            spec.layer_id, spec.n_svals, alpha, xmin, ks, lambda
        ));
        if let Some((rows, cols, blocks, verdict, dev)) = &spec.structure {
            structure.push_str(&format!(
                "{},{},{},{},{},{}\n",
                spec.layer_id,
                rows,
                cols,
                blocks,
                verdict,
                dev.map(fmt_g17).unwrap_or_default()
            ));
        }
        if let Some(eig) = &spec.eigenvalues {
            let hist = esd_histogram(eig, ESD_BINS)?;
            let mut esd = String::from("bin_lo,bin_hi,count\n");
            for (lo, hi, count) in &hist.bins {
                esd.push_str(&format!("{},{},{count}\n", fmt_g17(*lo), fmt_g17(*hi)));
            }
            write_text(
                &args.out.join(format!("esd_{tag}_{}.csv", spec.layer_id)),
                &esd,
            )?;
            let mut raw = String::from("eigenvalue\n");
            for v in &hist.sorted {
                raw.push_str(&fmt_g17(*v));
                raw.push('\n');
            }
            write_text(
                &args
                    .out
                    .join(format!("eigenvalues_{tag}_{}.csv", spec.layer_id)),
                &raw,
            )?;
        }
        if let Some(matrix) = &spec.dump {
            write_ddpt(
                &args.out.join(format!("{}_{tag}.ddpt", spec.layer_id)),
                matrix,
            )?;
        }
        if let Some(w) = spec.warning {
            log::warn!("{w}");
            warnings.push(w);
        }
    }

    write_text(&args.out.join(format!("spectrum_{tag}.csv")), &summary)?;
    if use_w2 {
        write_text(&args.out.join("w2_structure.csv"), &structure)?;
    }
    write_run_log(&args.out, &warnings)?;
    Ok(())
}
