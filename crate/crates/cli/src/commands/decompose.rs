use ddp_core::error::Result;
use ddp_core::io::{fmt_g17, write_ddpt};
use ddp_core::model::load_model;
use ddp_core::tensor::DenseTensor;

use super::{select_layers, with_layer_context, write_text, LayerDefault};
use crate::opts::DecomposeArgs;

/// Write U, S, V factors per selected layer plus `svd_summary.csv`.
pub fn run(args: &DecomposeArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let layers = select_layers(&model, args.layers.as_deref(), LayerDefault::ConvOnly)?;
    std::fs::create_dir_all(&args.out)?;

    let mut summary = String::from("layer_id,d,ck2,n_svals,s0,s_min_nonzero\n");
    for id in &layers {
        let row = (|| -> Result<String> {
            let view = model.linear_view(id)?;
            let svd = view.svd()?;

            write_ddpt(&args.out.join(format!("{id}_u.ddpt")), &svd.u)?;
            let s_tensor = DenseTensor::from_dims(&[svd.s.len()], svd.s.clone())?;
            write_ddpt(&args.out.join(format!("{id}_s.ddpt")), &s_tensor)?;
            write_ddpt(&args.out.join(format!("{id}_v.ddpt")), &svd.v)?;
            if args.dump_matrix {
                write_ddpt(&args.out.join(format!("{id}_w1.ddpt")), &view.unfolded)?;
            }

            let s0 = svd.s.first().copied().unwrap_or(0.0);
            let nonzero = svd.nonzero_count();
            let s_min_nonzero = if nonzero > 0 {
                fmt_g17(svd.s[nonzero - 1])
            } else {
                String::new()
            };
            log::info!("decomposed layer {id}: {} singular values", svd.s.len());
            Ok(format!(
                "{},{},{},{},{},{}\n",
                id,
                view.filters,
                view.window_len(),
                svd.s.len(),
                fmt_g17(s0),
                s_min_nonzero
            ))
        })()
        .map_err(|e| with_layer_context(id, e))?;
        summary.push_str(&row);
    }
    write_text(&args.out.join("svd_summary.csv"), &summary)?;
    Ok(())
}
