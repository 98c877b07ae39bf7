//! Subcommand implementations. Every command validates its inputs, does all
//! computation (parallel work included) first, then writes artifacts from a
//! single thread so reruns are bit-identical.

pub mod alpha;
pub mod decompose;
pub mod decompose_image;
pub mod exemplars;
pub mod hypergraph;
pub mod profile;
pub mod spectrum;

use std::path::Path;

use ddp_core::error::{DdpError, Result};
use ddp_core::model::ModelSpec;

/// Default layer selection when `--layers` is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LayerDefault {
    ConvOnly,
    AllLinear,
}

/// Resolve the layer selection against the model, in model order.
pub(crate) fn select_layers(
    model: &ModelSpec,
    requested: Option<&[String]>,
    default: LayerDefault,
) -> Result<Vec<String>> {
    let linear: Vec<&str> = model.linear_layer_ids();
    match requested {
        None => {
            let ids: Vec<String> = match default {
                LayerDefault::AllLinear => linear.iter().map(|s| s.to_string()).collect(),
                LayerDefault::ConvOnly => model
                    .layers
                    .iter()
                    .filter(|l| l.op.kind_name() == "conv")
                    .map(|l| l.id.clone())
                    .collect(),
            };
            if ids.is_empty() {
                return Err(DdpError::InvalidInput(
                    "model has no eligible layers".into(),
                ));
            }
            Ok(ids)
        }
        Some(ids) => {
            for id in ids {
                if !linear.contains(&id.as_str()) {
                    return Err(DdpError::InvalidInput(format!(
                        "unknown or non-linear layer '{id}'; available: {}",
                        linear.join(", ")
                    )));
                }
            }
            Ok(ids.to_vec())
        }
    }
}

/// Prefix an error message with the layer it arose in, preserving the kind.
pub(crate) fn with_layer_context(layer_id: &str, e: DdpError) -> DdpError {
    use DdpError::*;
    let tag = format!("layer '{layer_id}'");
    match e {
        IndexOutOfBounds(m) => IndexOutOfBounds(format!("{tag}: {m}")),
        ShapeMismatch(m) => ShapeMismatch(format!("{tag}: {m}")),
        NumericalFailure(m) => NumericalFailure(format!("{tag}: {m}")),
        InvalidInput(m) => InvalidInput(format!("{tag}: {m}")),
        InvalidParameter(m) => InvalidParameter(format!("{tag}: {m}")),
        InvalidLayerKind(m) => InvalidLayerKind(format!("{tag}: {m}")),
        ManifestInvalid(m) => ManifestInvalid(format!("{tag}: {m}")),
        e @ InsufficientSamples { .. } => e,
        Io(ioe) => Io(std::io::Error::new(ioe.kind(), format!("{tag}: {ioe}"))),
    }
}

pub(crate) fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| DdpError::InvalidParameter(format!("thread pool: {e}")))
}

pub(crate) fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

/// Render a parameter for file names: integers lose the fraction point.
pub(crate) fn fmt_param(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Shared run-log writer: one warning per line, always written.
pub(crate) fn write_run_log(out_dir: &Path, warnings: &[String]) -> Result<()> {
    let mut content = String::new();
    for w in warnings {
        content.push_str(w);
        content.push('\n');
    }
    write_text(&out_dir.join("run_log.txt"), &content)
}

pub(crate) fn validate_quantiles(quantiles: &[f64]) -> Result<()> {
    if quantiles.is_empty() {
        return Err(DdpError::InvalidParameter("no quantiles given".into()));
    }
    for &q in quantiles {
        if !(q > 0.0 && q < 1.0) {
            return Err(DdpError::InvalidParameter(format!(
                "quantile {q} outside (0, 1)"
            )));
        }
    }
    Ok(())
}

pub(crate) fn validate_percentiles(percentiles: &[f64]) -> Result<()> {
    if percentiles.is_empty() {
        return Err(DdpError::InvalidParameter("no percentiles given".into()));
    }
    for &p in percentiles {
        if !(p > 50.0 && p <= 100.0) {
            return Err(DdpError::InvalidParameter(format!(
                "class percentage {p} outside (50, 100]"
            )));
        }
    }
    Ok(())
}
