use ddp_core::error::{DdpError, Result};
use ddp_core::profile::{build_hypergraph, quantile_threshold, semantic_hierarchy, SignalProfile};

use super::{fmt_param, validate_percentiles, validate_quantiles, write_run_log, write_text};
use crate::opts::HypergraphArgs;

pub(crate) fn load_profile(dir: &std::path::Path) -> Result<SignalProfile> {
    let profile_path = dir.join("profile.csv");
    let layers_path = dir.join("layers.csv");
    if !profile_path.exists() || !layers_path.exists() {
        return Err(DdpError::InvalidInput(format!(
            "no stored profile in {}; run the profile command first",
            dir.display()
        )));
    }
    SignalProfile::from_csv(
        &std::fs::read_to_string(profile_path)?,
        &std::fs::read_to_string(layers_path)?,
    )
}

/// Hypergraph JSON and hierarchy DOT per (layer, quantile, percentage).
pub fn run(args: &HypergraphArgs) -> Result<()> {
    validate_quantiles(&args.quantiles)?;
    validate_percentiles(&args.percentiles)?;
    let profile = load_profile(&args.out)?;

    let layer_ids: Vec<String> = match &args.layers {
        Some(ids) => {
            for id in ids {
                if profile.layer_index(id).is_none() {
                    return Err(DdpError::InvalidInput(format!(
                        "profile has no layer '{id}'; available: {}",
                        profile
                            .layers
                            .iter()
                            .map(|m| m.layer_id.as_str())
                            .collect::<Vec<_>>()
                            .join(", ")
                    )));
                }
            }
            ids.clone()
        }
        None => profile.layers.iter().map(|m| m.layer_id.clone()).collect(),
    };

    let mut warnings = Vec::new();
    for layer_id in &layer_ids {
        let pooled = profile.pooled_signals(layer_id, None)?;
        if pooled.is_empty() {
            let w = format!("layer {layer_id}: no signals in the profile, skipped");
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        for &qf in &args.quantiles {
            let q = quantile_threshold(&pooled, qf)?;
            if q <= 0.0 {
                let w = format!(
                    "layer {layer_id}: {qf}-quantile threshold {q} is not positive; \
                     only positive signals drive significance, skipped"
                );
                log::warn!("{w}");
                warnings.push(w);
                continue;
            }
            for &p in &args.percentiles {
                let h = build_hypergraph(&profile, layer_id, q, p)?;
                let suffix = format!("{layer_id}_q{}_p{}", fmt_param(qf * 100.0), fmt_param(p));
                write_text(
                    &args.out.join(format!("hypergraph_{suffix}.json")),
                    &h.to_json_string(Some(qf)),
                )?;
                let hierarchy = semantic_hierarchy(&h);
                write_text(
                    &args.out.join(format!("hierarchy_{suffix}.dot")),
                    &hierarchy.to_dot(&suffix),
                )?;
                log::info!(
                    "layer {layer_id} q={q:.6} p={p}: {} hyperedges, {} nodes, {} classes",
                    h.hyperedges.len(),
                    h.nodes().len(),
                    hierarchy.classes.len()
                );
            }
        }
    }
    write_run_log(&args.out, &warnings)?;
    Ok(())
}
