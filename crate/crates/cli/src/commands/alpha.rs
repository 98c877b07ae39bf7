use ddp_core::error::Result;
use ddp_core::io::fmt_g17;
use ddp_core::model::load_model;
use ddp_core::spectral::{capacity_metric, layer_power_law, LayerCapacity, PowerLawFit};
use rayon::prelude::*;

use super::{select_layers, thread_pool, write_run_log, write_text, LayerDefault};
use crate::opts::AlphaArgs;

/// Capacity report: per-layer power-law rows plus both capacity variants.
pub fn run(args: &AlphaArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let layers = select_layers(&model, args.layers.as_deref(), LayerDefault::AllLinear)?;
    std::fs::create_dir_all(&args.out)?;
    let pool = thread_pool(args.threads)?;

    type LayerFit = (String, usize, std::result::Result<(PowerLawFit, f64), String>);
    let fitted: Vec<LayerFit> = pool.install(|| {
        layers
            .par_iter()
            .map(|id| {
                let outcome: Result<_> = (|| {
                    let view = model.linear_view(id)?;
                    let svd = view.svd()?;
                    let n_svals = svd.s.len();
                    Ok((n_svals, layer_power_law(&svd)))
                })();
                match outcome {
                    Ok((n, Ok(fit))) => (id.clone(), n, Ok(fit)),
                    Ok((n, Err(e))) => (id.clone(), n, Err(e.to_string())),
                    Err(e) => (id.clone(), 0, Err(e.to_string())),
                }
            })
            .collect()
    });

    let mut rows = String::from("layer_id,n_svals,alpha,xmin,ks,lambda_max\n");
    let mut eligible = Vec::new();
    let mut warnings = Vec::new();
    for (id, n_svals, outcome) in &fitted {
        match outcome {
            Ok((fit, lambda_max)) => {
                rows.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    id,
                    n_svals,
                    fmt_g17(fit.alpha),
                    fmt_g17(fit.xmin),
                    fmt_g17(fit.ks_distance),
                    fmt_g17(*lambda_max)
                ));
                eligible.push(LayerCapacity {
                    layer_id: id.clone(),
                    alpha: fit.alpha,
                    lambda_max: *lambda_max,
                });
            }
            Err(msg) => {
                rows.push_str(&format!("{id},{n_svals},,,,\n"));
                let w = format!("layer {id}: excluded from the capacity metric: {msg}");
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }
    write_text(&args.out.join("alpha_layers.csv"), &rows)?;

    let mut summary = String::from("# log=natural\n");
    summary.push_str("alpha_hat_sum,alpha_hat_mean,selected_variant,layers_used\n");
    if eligible.is_empty() {
        let w = "no layer had enough nonzero Gram eigenvalues; capacity metric not computed"
            .to_string();
        log::warn!("{w}");
        warnings.push(w);
        println!("alpha_hat: not computable (no eligible layers)");
    } else {
        let sum = capacity_metric(&eligible, false)?;
        let mean = capacity_metric(&eligible, true)?;
        let variant = if args.mean { "mean" } else { "sum" };
        summary.push_str(&format!(
            "{},{},{},{}\n",
            fmt_g17(sum.alpha_hat),
            fmt_g17(mean.alpha_hat),
            variant,
            eligible.len()
        ));
        let headline = if args.mean { mean.alpha_hat } else { sum.alpha_hat };
        println!(
            "alpha_hat ({variant}) = {headline} over {} layers (sum = {}, mean = {})",
            eligible.len(),
            sum.alpha_hat,
            mean.alpha_hat
        );
    }
    write_text(&args.out.join("alpha_summary.csv"), &summary)?;
    write_run_log(&args.out, &warnings)?;
    Ok(())
}
