use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{read_json, read_tensor, write_json, write_tensor, Tensor};

use super::ToyModelParams;

const WEIGHT_NAMES: [&str; 3] = ["mu", "d", "p"];

/// Writes `meta.json` plus one `[out, F+1]` tensor per head block
/// (`det.uqt`, or `mu.uqt`, `d.uqt`, `p.uqt`); the last column is the bias.
pub fn save_model(dir: impl AsRef<Path>, params: &ToyModelParams) -> Result<()> {
    params.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(dir.join("meta.json"), params)?;
    let f = params.feature_len();
    for (block, name) in params.blocks().into_iter().zip(block_names(params)) {
        let mut data = Vec::with_capacity(block.out * (f + 1));
        for o in 0..block.out {
            data.extend_from_slice(&params.weights[block.w + o * f..block.w + (o + 1) * f]);
            data.push(params.weights[block.b + o]);
        }
        let t = Tensor::from_f64(vec![block.out, f + 1], data)?;
        write_tensor(dir.join(format!("{name}.uqt")), &t)?;
    }
    Ok(())
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<ToyModelParams> {
    let dir = dir.as_ref();
    let mut params: ToyModelParams = read_json(dir.join("meta.json"))?;
    params.weights = vec![0.0; params.num_weights()];
    let f = params.feature_len();
    for (block, name) in params.blocks().into_iter().zip(block_names(&params)) {
        let t = read_tensor(dir.join(format!("{name}.uqt")))?;
        t.expect_dims(&[block.out, f + 1], name)?;
        let data = t.as_f64()?;
        for o in 0..block.out {
            let row = &data[o * (f + 1)..(o + 1) * (f + 1)];
            params.weights[block.w + o * f..block.w + (o + 1) * f].copy_from_slice(&row[..f]);
            params.weights[block.b + o] = row[f];
        }
    }
    params.validate()?;
    Ok(params)
}

fn block_names(params: &ToyModelParams) -> Vec<&'static str> {
    match params.kind {
        super::HeadKind::Deterministic => vec!["det"],
        super::HeadKind::Gaussian => WEIGHT_NAMES.to_vec(),
    }
}
