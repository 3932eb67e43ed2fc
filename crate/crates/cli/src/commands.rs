use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use esans_core::behavior::pretrain_behavior;
use esans_core::data::{
    generate_synthetic, load_embedding_table, load_interactions, load_profiles, manifest_path, split_train_eval, write_embedding_table,
    write_groups, write_interactions, write_profiles, EmbeddingTable, EvalSet, InteractionLog, ProfileTable,
};
use esans_core::ebr::{load_checkpoint, train_ebr, write_checkpoint, NegativeStrategy};
use esans_core::eval::{compare_runs, recall_report, CompareInputs, Method};
use esans_core::msac::{build_semantic_index, load_index, load_model, train_msac, write_index, write_model, MsacInputs, SemanticIndex};
use esans_core::sampler::{cluster_distribution, draw_negatives};
use esans_core::tensor::RngState;

use crate::config::{digest, echo, ConfigError, RunConfig};
use crate::{Command, View};

pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const PROFILES_FILE: &str = "profiles.tsv";
pub const GROUPS_FILE: &str = "groups.tsv";
const VIEW_FILES: [&str; 3] = ["image.emb", "text.emb", "behavior.emb"];
/// Written by `train-msac` so `build-index` projects the same tables.
const VIEWS_FILE: &str = "views.txt";

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::ValidateConfig { common } => {
            let cfg = load(&common.config)?;
            let text = cfg.to_toml();
            print!("{text}");
            println!("# sha256 {}", digest(&text));
            Ok(())
        }
        Command::SynthData { common, out } => synth_data(&load(&common.config)?, &out),
        Command::PretrainBehavior { common, data, out } => {
            let mut cfg = load(&common.config)?;
            cfg.paths.data = Some(input_dir(data, cfg.paths.data.take(), "data")?);
            pretrain(&cfg, &out)
        }
        Command::TrainMsac { common, data, behavior, single_modality, out } => {
            let mut cfg = load(&common.config)?;
            cfg.paths.data = Some(input_dir(data, cfg.paths.data.take(), "data")?);
            if let Some(b) = behavior.or(cfg.paths.behavior.take()) {
                cfg.paths.behavior = Some(existing(b, "behavior")?);
            }
            msac(&cfg, single_modality, &out)
        }
        Command::BuildIndex { common, msac, out } => {
            let mut cfg = load(&common.config)?;
            cfg.paths.msac = Some(input_dir(msac, cfg.paths.msac.take(), "msac")?);
            build_index(&cfg, &out)
        }
        Command::TrainEbr { common, data, index, out } => {
            let mut cfg = load(&common.config)?;
            cfg.paths.data = Some(input_dir(data, cfg.paths.data.take(), "data")?);
            let index = index.or(cfg.paths.index.take());
            cfg.paths.index = match (cfg.ebr.strategy, index) {
                (NegativeStrategy::Esans, i) => Some(input_dir(i, None, "index")?),
                (_, Some(i)) => Some(existing(i, "index")?),
                (_, None) => None,
            };
            train(&cfg, &out)
        }
        Command::Evaluate { common, data, model, out } => {
            let mut cfg = load(&common.config)?;
            cfg.paths.data = Some(input_dir(data, cfg.paths.data.take(), "data")?);
            cfg.paths.model = Some(input_dir(model, cfg.paths.model.take(), "model")?);
            evaluate(&cfg, &out)
        }
        Command::Compare { common, data, index, single_modality_index, methods, out } => {
            let mut cfg = load(&common.config)?;
            if let Some(names) = methods {
                let parsed: Result<Vec<Method>, _> = names.iter().map(|n| n.parse::<Method>()).collect();
                cfg.eval.methods = parsed.map_err(|e| ConfigError { errors: vec![format!("--methods: {e}")] })?;
            }
            if cfg.eval.methods.is_empty() {
                return Err(ConfigError { errors: vec!["eval.methods must not be empty".into()] }.into());
            }
            cfg.paths.data = Some(input_dir(data, cfg.paths.data.take(), "data")?);
            let needs_index = cfg.eval.methods.iter().any(|m| !matches!(m, Method::Uns | Method::Pns | Method::EsansSingleModality));
            let index = index.or(cfg.paths.index.take());
            cfg.paths.index = if needs_index { Some(input_dir(index, None, "index")?) } else { index.map(|i| existing(i, "index")).transpose()? };
            let single = single_modality_index.or(cfg.paths.single_modality_index.take());
            cfg.paths.single_modality_index = if cfg.eval.methods.contains(&Method::EsansSingleModality) {
                Some(input_dir(single, None, "single-modality-index")?)
            } else {
                single.map(|i| existing(i, "single-modality-index")).transpose()?
            };
            compare(&cfg, &out)
        }
        Command::SampleInspect { common, index, items, count, out } => {
            let mut cfg = load(&common.config)?;
            cfg.paths.index = Some(input_dir(index, cfg.paths.index.take(), "index")?);
            sample_inspect(&cfg, items, count, out.as_deref())
        }
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    Ok(RunConfig::load(path)?)
}

fn existing(p: PathBuf, what: &str) -> Result<PathBuf> {
    p.canonicalize().map_err(|e| ConfigError { errors: vec![format!("{what} path {}: {e}", p.display())] }.into())
}

/// Flag, else config entry, else a config error naming both.
fn input_dir(flag: Option<PathBuf>, from_config: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    match flag.or(from_config) {
        Some(p) => existing(p, what),
        None => Err(ConfigError { errors: vec![format!("missing --{what} (or paths.{})", what.replace('-', "_"))] }.into()),
    }
}

fn data_dir(cfg: &RunConfig) -> &Path {
    cfg.paths.data.as_deref().expect("data path resolved")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_log(dir: &Path) -> Result<(InteractionLog, ProfileTable)> {
    let path = dir.join(INTERACTIONS_FILE);
    let mut log = load_interactions(&path).with_context(|| format!("loading {}", path.display()))?;
    // items nobody interacted with exist only in the embedding manifests
    let ids = manifest_path(&dir.join(VIEW_FILES[0]));
    if ids.exists() {
        let mut items: Vec<String> = fs::read_to_string(&ids)?.lines().map(str::to_owned).collect();
        items.extend(log.items().iter().cloned());
        log = InteractionLog::with_items(log.interactions().to_vec(), items)?;
    }
    let p = dir.join(PROFILES_FILE);
    let profiles = if p.exists() { load_profiles(&p).with_context(|| format!("loading {}", p.display()))? } else { ProfileTable::empty() };
    Ok((log, profiles))
}

fn split(cfg: &RunConfig, log: &InteractionLog) -> Result<(InteractionLog, EvalSet)> {
    Ok(split_train_eval(log, cfg.eval.holdout_per_user)?)
}

fn synth_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    echo(out, cfg)?;
    let d = generate_synthetic(&cfg.synthetic)?;
    write_interactions(out.join(INTERACTIONS_FILE), d.log.interactions())?;
    write_profiles(out.join(PROFILES_FILE), &d.profiles)?;
    for (t, name) in d.tables.iter().zip(VIEW_FILES) {
        write_embedding_table(out.join(name), t)?;
    }
    write_groups(out.join(GROUPS_FILE), d.log.items(), &d.groups, &d.subgroups)?;
    log::info!("synth-data: {} users, {} items, {} interactions", d.log.users().len(), d.log.num_items(), d.log.len());
    Ok(())
}

fn pretrain(cfg: &RunConfig, out: &Path) -> Result<()> {
    let digest = echo(out, cfg)?;
    let (log, _) = load_log(data_dir(cfg))?;
    let result = pretrain_behavior(&log, &cfg.behavior)?;
    write_embedding_table(out.join("behavior.emb"), &result.table)?;
    write_json(&out.join("behavior_losses.json"), &json!({ "config_digest": digest, "epoch_losses": result.epoch_losses }))
}

fn view_paths(cfg: &RunConfig, single: Option<View>) -> [PathBuf; 3] {
    let data = data_dir(cfg);
    let mut paths = VIEW_FILES.map(|f| data.join(f));
    if let Some(b) = &cfg.paths.behavior {
        paths[2] = if b.is_dir() { b.join(VIEW_FILES[2]) } else { b.clone() };
    }
    match single {
        None => paths,
        Some(v) => {
            let p = paths[v as usize].clone();
            [p.clone(), p.clone(), p]
        }
    }
}

fn load_views(paths: &[PathBuf]) -> Result<MsacInputs> {
    let mut tables: Vec<EmbeddingTable<f32>> = Vec::new();
    for p in paths {
        tables.push(load_embedding_table(p).with_context(|| format!("loading {}", p.display()))?);
    }
    Ok(MsacInputs::prepare([&tables[0], &tables[1], &tables[2]])?)
}

fn msac(cfg: &RunConfig, single: Option<View>, out: &Path) -> Result<()> {
    let paths = view_paths(cfg, single);
    echo(out, cfg)?;
    let inputs = load_views(&paths)?;
    log::info!("train-msac: {} items", inputs.len());
    let model = train_msac(&inputs, &cfg.msac)?;
    write_model(out, &model)?;
    let listing: String = paths.iter().map(|p| format!("{}\n", p.display())).collect();
    fs::write(out.join(VIEWS_FILE), listing)?;
    Ok(())
}

fn build_index(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dir = cfg.paths.msac.as_deref().expect("msac path resolved");
    let listing = fs::read_to_string(dir.join(VIEWS_FILE)).with_context(|| format!("{} is not a train-msac output", dir.display()))?;
    let paths: Vec<PathBuf> = listing.lines().map(PathBuf::from).collect();
    if paths.len() != 3 {
        bail!("{} must list three tables", dir.join(VIEWS_FILE).display());
    }
    echo(out, cfg)?;
    let model = load_model(dir)?;
    let inputs = load_views(&paths)?;
    let index = build_semantic_index(&model.params, &model.codebooks, &inputs)?;
    write_index(out, &index, &model.codebooks)?;
    let occupied: BTreeSet<usize> = index.primary_assignments().iter().copied().collect();
    log::info!("build-index: {} items over {} of {} primary clusters", index.len(), occupied.len(), index.k_p());
    Ok(())
}

fn load_semantic_index(p: &Option<PathBuf>) -> Result<Option<SemanticIndex>> {
    p.as_ref().map(|p| load_index(p).with_context(|| format!("loading index {}", p.display()))).transpose()
}

fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let digest = echo(out, cfg)?;
    let (log, profiles) = load_log(data_dir(cfg))?;
    let (train, _) = split(cfg, &log)?;
    let index = load_semantic_index(&cfg.paths.index)?;
    let model = train_ebr(&train, &profiles, index.as_ref(), &cfg.ebr)?;
    for (e, s) in model.epochs.iter().enumerate() {
        log::info!("train-ebr: epoch {e} loss {:.5} negatives/positive {:.1}", s.loss, s.mean_negatives);
    }
    let run = json!({ "config_digest": digest, "strategy": cfg.ebr.strategy, "seed": cfg.ebr.seed });
    write_checkpoint(out, &model, run)?;
    Ok(())
}

fn evaluate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let digest = echo(out, cfg)?;
    let (log, profiles) = load_log(data_dir(cfg))?;
    let (train, eval) = split(cfg, &log)?;
    let model = load_checkpoint(cfg.paths.model.as_deref().expect("model path resolved"))?;
    if model.items != train.items() {
        bail!("checkpoint item vocabulary does not match the dataset");
    }
    let report = recall_report(&model.params, &train, &eval, &profiles, cfg.ebr.tower.seq_cap, &cfg.eval.ks, cfg.ebr.seed, &digest)?;
    let mut tsv = String::from("K\trecall\n");
    for (k, r) in report.ks.iter().zip(&report.recall) {
        tsv.push_str(&format!("{k}\t{r:.6}\n"));
        println!("Recall@{k}\t{r:.6}");
    }
    fs::write(out.join("recall.tsv"), tsv)?;
    write_json(&out.join("report.json"), &report)
}

fn compare(cfg: &RunConfig, out: &Path) -> Result<()> {
    let digest = echo(out, cfg)?;
    let (log, profiles) = load_log(data_dir(cfg))?;
    let (train, eval) = split(cfg, &log)?;
    let index = load_semantic_index(&cfg.paths.index)?;
    let single = load_semantic_index(&cfg.paths.single_modality_index)?;
    let inputs = CompareInputs { train: &train, eval: &eval, profiles: &profiles, index: index.as_ref(), single_modality_index: single.as_ref() };
    let c = compare_runs(&inputs, &cfg.ebr, &cfg.eval.methods, &cfg.eval.ks, &digest)?;
    fs::write(out.join("comparison.tsv"), c.to_tsv())?;
    fs::write(out.join("comparison.txt"), c.to_table())?;
    write_json(&out.join("comparison.json"), &json!({ "config_digest": digest, "seed": cfg.ebr.seed, "rows": c.rows, "reports": c.reports }))?;
    print!("{}", c.to_table());
    Ok(())
}

#[derive(Serialize)]
struct GroupRecord<'a> {
    cluster: usize,
    probability: f64,
    items: Vec<&'a str>,
}

#[derive(Serialize)]
struct DrawRecord<'a> {
    positive: &'a str,
    primary: usize,
    secondary: usize,
    groups: Vec<GroupRecord<'a>>,
    hard: Vec<&'a str>,
    cluster_probabilities: Vec<f64>,
}

fn sample_inspect(cfg: &RunConfig, items: Option<Vec<String>>, count: usize, out: Option<&Path>) -> Result<()> {
    let index = load_semantic_index(&cfg.paths.index)?.expect("index path resolved");
    let sampler = &cfg.ebr.sampler;
    let root = RngState::new(sampler.seed);
    let positives: Vec<usize> = match items {
        Some(ids) => ids
            .iter()
            .map(|id| index.item_idx(id).ok_or_else(|| anyhow::anyhow!("item {id:?} is not in the index")))
            .collect::<Result<_>>()?,
        None => root.fork(1).choose_distinct(index.len(), count),
    };
    let mut rng = root.fork(2);
    let mut lines = String::new();
    for &p in &positives {
        let draw = draw_negatives(&index, p, sampler, &mut rng)?;
        let probs = cluster_distribution(&index, index.primary(p), sampler.gamma, sampler.epsilon_d)?;
        let id = |i: usize| index.items()[i].as_str();
        let record = DrawRecord {
            positive: id(p),
            primary: index.primary(p),
            secondary: index.secondary(p),
            groups: draw
                .simple
                .iter()
                .map(|g| GroupRecord { cluster: g.cluster, probability: probs[g.cluster], items: g.items.iter().map(|&i| id(i)).collect() })
                .collect(),
            hard: draw.hard.iter().map(|&i| id(i)).collect(),
            cluster_probabilities: probs,
        };
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    match out {
        Some(dir) => {
            echo(dir, cfg)?;
            fs::write(dir.join("draws.jsonl"), lines)?;
        }
        None => io::stdout().write_all(lines.as_bytes())?,
    }
    Ok(())
}
