use ddp_core::decompose::{decompose_layer, export_heatmaps};
use ddp_core::error::{DdpError, Result};
use ddp_core::io::read_ddpt;
use ddp_core::model::load_model;

use crate::opts::DecomposeImageArgs;

/// Six-stage heatmap export for one conv layer applied to one image.
pub fn run(args: &DecomposeImageArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let x = read_ddpt(&args.image)?;
    let decomp = decompose_layer(&model, &args.layers, &x)?;

    let stem = args
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string());
    let target = args.out.join(format!("{}_{stem}", args.layers));
    let files = export_heatmaps(&decomp, &target)?;

    for (name, tensor) in decomp.stages() {
        println!(
            "{name}: {} rows of {}x{}",
            tensor.dims()[0],
            decomp.grid.0,
            decomp.grid.1
        );
    }
    println!("wrote {} heatmap files under {}", files.len(), target.display());

    if args.check {
        let err = decomp.stage_identity_error();
        let (post, pre) = decomp.frobenius_pair();
        println!("stage identity |W*Psi - U(S V^T Psi)|_inf = {err}");
        println!("rectified projection norm {post} vs pre-activation norm {pre}");
        if err > 1e-9 {
            return Err(DdpError::NumericalFailure(format!(
                "staged reconstruction deviates by {err} (tolerance 1e-9)"
            )));
        }
        if post > pre * (1.0 + 1e-12) {
            return Err(DdpError::NumericalFailure(format!(
                "rectified projection norm {post} exceeds pre-activation norm {pre}"
            )));
        }
        println!("check passed");
    }
    Ok(())
}
