use std::collections::{BTreeMap, BTreeSet};

use ddp_core::error::Result;
use ddp_core::io::{fmt_g17, read_ddpt, read_labels_csv};
use ddp_core::model::load_model;
use ddp_core::profile::{
    image_signals, profile_layer_meta, quantile_threshold, ImageSignals, SignalProfile,
};
use ddp_core::spectral::LayerSvd;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    select_layers, thread_pool, validate_quantiles, write_run_log, write_text, LayerDefault,
};
use crate::opts::ProfileArgs;

/// Forward passes over the dataset, producing profile.csv, layers.csv, and
/// the per-layer quantile table. Images are processed in parallel but
/// emitted in a fixed order, so the output is thread-count independent.
pub fn run(args: &ProfileArgs) -> Result<()> {
    validate_quantiles(&args.quantiles)?;
    let model = load_model(&args.model)?;
    let layers = select_layers(&model, args.layers.as_deref(), LayerDefault::AllLinear)?;
    let labels = read_labels_csv(&args.data.join("labels.csv"))?;
    std::fs::create_dir_all(&args.out)?;
    let pool = thread_pool(args.threads)?;

    let svds: BTreeMap<String, LayerSvd> = pool.install(|| {
        layers
            .par_iter()
            .map(|id| Ok((id.clone(), model.linear_view(id)?.svd()?)))
            .collect::<Result<_>>()
    })?;
    let meta = profile_layer_meta(&model, &svds, &layers)?;

    let processed: Vec<std::result::Result<ImageSignals, String>> = pool.install(|| {
        labels
            .par_iter()
            .map(|(image_id, class_label)| {
                let path = args.data.join(format!("{image_id}.ddpt"));
                let signals = read_ddpt(&path)
                    .and_then(|x| image_signals(&model, &svds, &layers, &x))
                    .map_err(|e| format!("skipped image {image_id}: {e}"))?;
                Ok(ImageSignals {
                    image_id: image_id.clone(),
                    class_label: class_label.clone(),
                    signals,
                })
            })
            .collect()
    });

    let mut images = Vec::new();
    let mut warnings = Vec::new();
    for item in processed {
        match item {
            Ok(img) => images.push(img),
            Err(w) => {
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }
    let skipped = warnings.len();
    let profile = SignalProfile {
        layers: meta,
        images,
    };
    write_text(&args.out.join("profile.csv"), &profile.to_csv())?;
    write_text(&args.out.join("layers.csv"), &profile.layers_csv())?;

    // Threshold pooling, optionally over a seed-fixed subsample of images.
    let subset: Option<BTreeSet<usize>> =
        if args.sample > 0 && args.sample < profile.images.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let picked =
                rand::seq::index::sample(&mut rng, profile.images.len(), args.sample).into_vec();
            Some(picked.into_iter().collect())
        } else {
            None
        };
    let mut quantile_rows = String::from("layer_id,quantile,q\n");
    for meta in &profile.layers {
        let pooled = profile.pooled_signals(&meta.layer_id, subset.as_ref())?;
        for &qf in &args.quantiles {
            let row = if pooled.is_empty() {
                warnings.push(format!(
                    "layer {}: no pooled signals, quantile table row left empty",
                    meta.layer_id
                ));
                format!("{},{},\n", meta.layer_id, qf)
            } else {
                format!(
                    "{},{},{}\n",
                    meta.layer_id,
                    qf,
                    fmt_g17(quantile_threshold(&pooled, qf)?)
                )
            };
            quantile_rows.push_str(&row);
        }
    }
    write_text(&args.out.join("quantiles.csv"), &quantile_rows)?;
    write_run_log(&args.out, &warnings)?;
    println!(
        "profiled {} images across {} layers ({} skipped)",
        profile.images.len(),
        profile.layers.len(),
        skipped
    );
    Ok(())
}
