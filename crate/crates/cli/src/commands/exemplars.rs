use std::collections::BTreeMap;

use ddp_core::error::{DdpError, Result};
use ddp_core::io::fmt_g17;
use ddp_core::profile::exemplars;

use super::{write_run_log, write_text};
use crate::opts::ExemplarsArgs;

/// Parse "0:1.0,3:0.5,7" into index -> weight (bare indices weigh 1).
fn parse_weights(spec: &str) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for item in spec.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        let (idx_str, weight) = match item.split_once(':') {
            Some((i, w)) => {
                let weight: f64 = w.parse().map_err(|_| {
                    DdpError::InvalidParameter(format!("bad weight in '{item}'"))
                })?;
                (i, weight)
            }
            None => (item, 1.0),
        };
        let idx: usize = idx_str.parse().map_err(|_| {
            DdpError::InvalidParameter(format!("bad vector index in '{item}'"))
        })?;
        out.insert(idx, weight);
    }
    if out.is_empty() {
        return Err(DdpError::InvalidParameter(
            "no vector indices given in --weights".into(),
        ));
    }
    Ok(out)
}

/// Rank images by weighted summed signal and copy the winners' tensors.
pub fn run(args: &ExemplarsArgs) -> Result<()> {
    let weights = parse_weights(&args.weights)?;
    let profile = super::hypergraph::load_profile(&args.out)?;
    let ranked = exemplars(&profile, &args.layers, &weights, args.topk)?;

    let mut csv = String::from("rank,image_id,score\n");
    for (rank, (image_id, score)) in ranked.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", rank + 1, image_id, fmt_g17(*score)));
    }
    write_text(&args.out.join("exemplars.csv"), &csv)?;

    let mut warnings = Vec::new();
    match &args.data {
        Some(data_dir) => {
            let copy_dir = args.out.join("exemplars");
            std::fs::create_dir_all(&copy_dir)?;
            for (rank, (image_id, _)) in ranked.iter().enumerate() {
                let src = data_dir.join(format!("{image_id}.ddpt"));
                let dst = copy_dir.join(format!("{:02}_{image_id}.ddpt", rank + 1));
                if let Err(e) = std::fs::copy(&src, &dst) {
                    let w = format!("could not copy exemplar {image_id}: {e}");
                    log::warn!("{w}");
                    warnings.push(w);
                }
            }
        }
        None => {
            let w = "no --data directory given; exemplar tensors not copied".to_string();
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    write_run_log(&args.out, &warnings)?;
    for (rank, (image_id, score)) in ranked.iter().enumerate() {
        println!("{:>3}  {image_id}  {score}", rank + 1);
    }
    Ok(())
}
