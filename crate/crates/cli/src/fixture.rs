//! Generation of self-contained model/dataset fixtures.
//!
//! Two architectures ship:
//!  - `mnist`: the small digit-classifier layout (conv1 32x1x3x3, relu,
//!    conv2 16x32x3x3, relu, maxpool 2/2, fc1 64x2304, relu, fc2 10x64,
//!    softmax) over 1x28x28 inputs, plus a synthetic labeled dataset with
//!    class-dependent spatial patterns. The conv2/fc sizes are fixed,
//!    documented choices; only conv1's 32x1x3x3 shape is load-bearing for
//!    the 26x26 stage grids.
//!  - `vgg16-conv`: the standard 13-conv VGG-16 stack (3x3 kernels, pad 1,
//!    five 2x2 maxpools) with random weights, used for shape-level spectrum
//!    bookkeeping. No dataset.
//!
//! Everything is derived from one 64-bit seed; identical seeds give
//! bit-identical fixtures.

use std::path::Path;

use ddp_core::error::{DdpError, Result};
use ddp_core::io::write_ddpt;
use ddp_core::tensor::DenseTensor;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureArch {
    Mnist,
    Vgg16Conv,
}

impl std::str::FromStr for FixtureArch {
    type Err = DdpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(FixtureArch::Mnist),
            "vgg16-conv" => Ok(FixtureArch::Vgg16Conv),
            other => Err(DdpError::InvalidParameter(format!(
                "unknown fixture architecture '{other}' (expected mnist or vgg16-conv)"
            ))),
        }
    }
}

fn uniform_tensor(rng: &mut ChaCha8Rng, dims: &[usize], scale: f64) -> DenseTensor {
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    DenseTensor::from_dims(dims, data).expect("fixture dims are valid")
}

fn write_conv(
    rng: &mut ChaCha8Rng,
    dir: &Path,
    id: &str,
    d: usize,
    c: usize,
    k: usize,
    pad: usize,
) -> Result<serde_json::Value> {
    let fan_in = (c * k * k) as f64;
    let scale = (6.0 / fan_in).sqrt();
    write_ddpt(
        &dir.join(format!("{id}_w.ddpt")),
        &uniform_tensor(rng, &[d, c, k, k], scale),
    )?;
    write_ddpt(
        &dir.join(format!("{id}_b.ddpt")),
        &uniform_tensor(rng, &[d], 0.05),
    )?;
    Ok(json!({
        "id": id,
        "kind": "conv",
        "params": {"d": d, "c": c, "k": k, "stride": 1, "pad": pad},
        "weights": format!("{id}_w.ddpt"),
        "bias": format!("{id}_b.ddpt"),
    }))
}

fn write_fc(
    rng: &mut ChaCha8Rng,
    dir: &Path,
    id: &str,
    out: usize,
    inputs: usize,
) -> Result<serde_json::Value> {
    let scale = (6.0 / inputs as f64).sqrt();
    write_ddpt(
        &dir.join(format!("{id}_w.ddpt")),
        &uniform_tensor(rng, &[out, inputs], scale),
    )?;
    write_ddpt(
        &dir.join(format!("{id}_b.ddpt")),
        &uniform_tensor(rng, &[out], 0.05),
    )?;
    Ok(json!({
        "id": id,
        "kind": "fc",
        "params": {"out": out, "in": inputs},
        "weights": format!("{id}_w.ddpt"),
        "bias": format!("{id}_b.ddpt"),
    }))
}

/// One 28x28 image: a class-dependent plane wave plus seeded noise in [0, 1].
fn synthetic_digit_image(rng: &mut ChaCha8Rng, class: usize) -> DenseTensor {
    let fx = 1.0 + (class % 3) as f64;
    let fy = 1.0 + ((class / 3) % 3) as f64;
    let phase = class as f64 * 0.7;
    let mut data = Vec::with_capacity(28 * 28);
    for y in 0..28 {
        for x in 0..28 {
            let wave = (std::f64::consts::PI * (fx * x as f64 + fy * y as f64) / 14.0 + phase)
                .cos();
            let noise: f64 = rng.random_range(-1.0..1.0);
            data.push((0.5 + 0.35 * wave + 0.15 * noise).clamp(0.0, 1.0));
        }
    }
    DenseTensor::from_dims(&[1, 28, 28], data).expect("28x28 image")
}

fn generate_mnist(out_dir: &Path, images: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    layers.push(write_conv(&mut rng, out_dir, "conv1", 32, 1, 3, 0)?);
    layers.push(json!({"id": "relu1", "kind": "relu"}));
    layers.push(write_conv(&mut rng, out_dir, "conv2", 16, 32, 3, 0)?);
    layers.push(json!({"id": "relu2", "kind": "relu"}));
    layers.push(json!({"id": "pool1", "kind": "maxpool", "params": {"k": 2, "stride": 2}}));
    layers.push(write_fc(&mut rng, out_dir, "fc1", 64, 16 * 12 * 12)?);
    layers.push(json!({"id": "relu3", "kind": "relu"}));
    layers.push(write_fc(&mut rng, out_dir, "fc2", 10, 64)?);
    layers.push(json!({"id": "softmax", "kind": "softmax"}));

    let manifest = json!({
        "name": "mnist-fixture",
        "input": [1, 28, 28],
        "layers": layers,
    });
    std::fs::write(
        out_dir.join("model.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    if images > 0 {
        let data_dir = out_dir.join("dataset");
        std::fs::create_dir_all(&data_dir)?;
        let mut labels = String::from("image_id,class_label\n");
        for i in 0..images {
            let class = i % 10;
            let image_id = format!("img_{i:03}");
            write_ddpt(
                &data_dir.join(format!("{image_id}.ddpt")),
                &synthetic_digit_image(&mut rng, class),
            )?;
            labels.push_str(&format!("{image_id},{class}\n"));
        }
        std::fs::write(data_dir.join("labels.csv"), labels)?;
    }
    Ok(())
}

/// The 13 conv layers of VGG-16: (id, filters, channels).
pub const VGG16_CONV_LAYERS: [(&str, usize, usize); 13] = [
    ("conv1_1", 64, 3),
    ("conv1_2", 64, 64),
    ("conv2_1", 128, 64),
    ("conv2_2", 128, 128),
    ("conv3_1", 256, 128),
    ("conv3_2", 256, 256),
    ("conv3_3", 256, 256),
    ("conv4_1", 512, 256),
    ("conv4_2", 512, 512),
    ("conv4_3", 512, 512),
    ("conv5_1", 512, 512),
    ("conv5_2", 512, 512),
    ("conv5_3", 512, 512),
];

fn generate_vgg16_conv(out_dir: &Path, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let pool_after = ["conv1_2", "conv2_2", "conv3_3", "conv4_3", "conv5_3"];
    for (i, (id, d, c)) in VGG16_CONV_LAYERS.iter().enumerate() {
        layers.push(write_conv(&mut rng, out_dir, id, *d, *c, 3, 1)?);
        layers.push(json!({"id": format!("relu{}", i + 1), "kind": "relu"}));
        if let Some(pos) = pool_after.iter().position(|p| p == id) {
            layers.push(json!({
                "id": format!("pool{}", pos + 1),
                "kind": "maxpool",
                "params": {"k": 2, "stride": 2},
            }));
        }
    }
    let manifest = json!({
        "name": "vgg16-conv-shapes",
        "input": [3, 224, 224],
        "layers": layers,
    });
    std::fs::write(
        out_dir.join("model.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(())
}

/// Write a model fixture (and for mnist, a labeled dataset) under `out_dir`.
pub fn generate_fixture(
    arch: FixtureArch,
    out_dir: &Path,
    images: usize,
    seed: u64,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    match arch {
        FixtureArch::Mnist => generate_mnist(out_dir, images, seed),
        FixtureArch::Vgg16Conv => generate_vgg16_conv(out_dir, seed),
    }
}
