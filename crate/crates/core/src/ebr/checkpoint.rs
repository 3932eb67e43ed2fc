use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tower::{Activation, Mlp, TowerParams};
use super::train::{EbrModel, EpochStats};
use crate::data::{read_emb1, write_emb1};
use crate::error::{Error, Result};
use crate::Matrix;

const MANIFEST_FILE: &str = "manifest.json";
const ITEMS_FILE: &str = "items.txt";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    activation: Activation,
    profile_features: usize,
    blocks: Vec<String>,
    epochs: Vec<EpochStats>,
    /// Free-form record of the run that produced the checkpoint.
    #[serde(default)]
    run: serde_json::Value,
}

/// Writes every parameter block as an EMB1 file plus `items.txt` and `manifest.json`.
pub fn write_checkpoint(dir: impl AsRef<Path>, model: &EbrModel, run: serde_json::Value) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let p = &model.params;
    let names = p.block_names();
    let mut mats: Vec<Matrix> = vec![p.item_emb.clone()];
    mats.extend(p.profile_emb.iter().cloned());
    for mlp in [&p.user_mlp, &p.item_mlp] {
        mats.push(mlp.w1.clone());
        mats.push(Matrix::new(1, mlp.b1.len(), mlp.b1.clone())?);
        mats.push(mlp.w2.clone());
        mats.push(Matrix::new(1, mlp.b2.len(), mlp.b2.clone())?);
    }
    for (m, name) in mats.iter().zip(&names) {
        write_emb1(dir.join(format!("{name}.emb")), m)?;
    }
    fs::write(dir.join(ITEMS_FILE), model.items.join("\n") + "\n")?;
    let manifest = Manifest { activation: p.activation, profile_features: p.profile_emb.len(), blocks: names, epochs: model.epochs.clone(), run };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<EbrModel> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let read = |name: &str| -> Result<Matrix> { Ok(read_emb1(dir.join(format!("{name}.emb")))?.cast::<f64>()) };
    let mlp = |t: &str| -> Result<Mlp> {
        let w1 = read(&format!("{t}_w1"))?;
        let b1 = read(&format!("{t}_b1"))?.as_slice().to_vec();
        let w2 = read(&format!("{t}_w2"))?;
        let b2 = read(&format!("{t}_b2"))?.as_slice().to_vec();
        Error::dims(w1.cols(), b1.len())?;
        Error::dims(w1.cols(), w2.rows())?;
        Error::dims(w2.cols(), b2.len())?;
        Ok(Mlp { w1, b1, w2, b2 })
    };
    let item_emb = read("item_emb")?;
    let profile_emb = (0..manifest.profile_features).map(|f| read(&format!("profile_emb_{f}"))).collect::<Result<Vec<_>>>()?;
    let params = TowerParams { item_emb, profile_emb, user_mlp: mlp("user")?, item_mlp: mlp("item")?, activation: manifest.activation };
    if params.block_names() != manifest.blocks {
        return Err(Error::InvalidArg("checkpoint block list does not match its files".into()));
    }
    let d_e = params.d_e();
    Error::dims(d_e * (1 + params.profile_emb.len()), params.user_mlp.w1.rows())?;
    Error::dims(d_e, params.item_mlp.w1.rows())?;
    Error::dims(params.user_mlp.w2.cols(), params.item_mlp.w2.cols())?;
    let items: Vec<String> = fs::read_to_string(dir.join(ITEMS_FILE))?.lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
    if items.len() != params.num_items() {
        return Err(Error::ManifestMismatch { manifest: items.len(), rows: params.num_items() });
    }
    Ok(EbrModel { params, items, epochs: manifest.epochs })
}
