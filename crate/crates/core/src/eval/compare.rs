use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::recall::{recall_report, RecallReport};
use crate::data::{EvalSet, InteractionLog, ProfileTable};
use crate::ebr::{train_ebr, EbrConfig, NegativeStrategy};
use crate::error::{Error, Result};
use crate::msac::SemanticIndex;
use crate::tensor::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Uns,
    Pns,
    Esans,
    /// Primary clusters replaced by a uniform random assignment.
    EsansNoMsac,
    EsansNoEdis,
    EsansNoSimple,
    EsansNoHard,
    EsansNoSecondary,
    /// Index built from one modality fed to all three views.
    EsansSingleModality,
    /// Hard interpolation weight 0.5 instead of the configured value.
    EsansLambdaHalf,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Uns,
        Method::Pns,
        Method::Esans,
        Method::EsansNoMsac,
        Method::EsansNoEdis,
        Method::EsansNoSimple,
        Method::EsansNoHard,
        Method::EsansNoSecondary,
        Method::EsansSingleModality,
        Method::EsansLambdaHalf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Uns => "uns",
            Method::Pns => "pns",
            Method::Esans => "esans",
            Method::EsansNoMsac => "esans-no-msac",
            Method::EsansNoEdis => "esans-no-edis",
            Method::EsansNoSimple => "esans-no-simple",
            Method::EsansNoHard => "esans-no-hard",
            Method::EsansNoSecondary => "esans-no-secondary",
            Method::EsansSingleModality => "esans-single-modality",
            Method::EsansLambdaHalf => "esans-lambda-half",
        }
    }

    /// Training config of this method derived from the full ESANS config.
    pub fn config(self, base: &EbrConfig) -> EbrConfig {
        let mut c = base.clone();
        match self {
            Method::Uns => c.strategy = NegativeStrategy::Uniform,
            Method::Pns => c.strategy = NegativeStrategy::Popularity,
            Method::EsansNoEdis => {
                c.simple_interpolation = false;
                c.hard_interpolation = false;
            }
            Method::EsansNoSimple => c.simple_interpolation = false,
            Method::EsansNoHard => c.hard_interpolation = false,
            Method::EsansNoSecondary => c.sampler.use_secondary = false,
            Method::EsansLambdaHalf => c.interpolation.lambda = 0.5,
            Method::Esans | Method::EsansNoMsac | Method::EsansSingleModality => {}
        }
        if !matches!(self, Method::Uns | Method::Pns) {
            c.strategy = NegativeStrategy::Esans;
        }
        c
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::InvalidArg(format!("unknown method {s:?}")))
    }
}

/// Same index with every item moved to a uniformly random primary cluster.
pub fn random_primary(index: &SemanticIndex, seed: u64) -> Result<SemanticIndex> {
    let mut rng = RngState::new(seed);
    let k_p = index.k_p();
    index.with_primary((0..index.len()).map(|_| rng.below(k_p)).collect())
}

pub struct CompareInputs<'a> {
    pub train: &'a InteractionLog,
    pub eval: &'a EvalSet,
    pub profiles: &'a ProfileTable,
    pub index: Option<&'a SemanticIndex>,
    pub single_modality_index: Option<&'a SemanticIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub k: usize,
    pub recall: f64,
    /// `(recall − uns) / uns`; absent without a UNS run or when UNS recall is 0.
    pub ri_vs_uns: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<(Method, RecallReport)>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn from_reports(reports: Vec<(Method, RecallReport)>) -> Self {
        let uns = reports.iter().find(|(m, _)| *m == Method::Uns).map(|(_, r)| r.clone());
        let mut rows = Vec::new();
        for (m, r) in &reports {
            for (&k, &recall) in r.ks.iter().zip(&r.recall) {
                let ri_vs_uns = uns.as_ref().and_then(|u| u.at(k)).filter(|&u| u > 0.0).map(|u| (recall - u) / u);
                rows.push(ComparisonRow { method: *m, k, recall, ri_vs_uns });
            }
        }
        Self { reports, rows }
    }

    pub fn recall(&self, method: Method, k: usize) -> Option<f64> {
        self.reports.iter().find(|(m, _)| *m == method).and_then(|(_, r)| r.at(k))
    }

    /// `method\tK\trecall\tri_vs_uns` with a header line; missing RI is written as `NA`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tK\trecall\tri_vs_uns\n");
        for r in &self.rows {
            let ri = r.ri_vs_uns.map_or("NA".to_string(), |x| format!("{x:.6}"));
            let _ = writeln!(out, "{}\t{}\t{:.6}\t{}", r.method, r.k, r.recall, ri);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<24} {:>5} {:>9} {:>9}\n", "method", "K", "recall", "RI%");
        for r in &self.rows {
            let ri = r.ri_vs_uns.map_or("-".to_string(), |x| format!("{:+.2}", 100.0 * x));
            let _ = writeln!(out, "{:<24} {:>5} {:>9.4} {:>9}", r.method.as_str(), r.k, r.recall, ri);
        }
        out
    }
}

/// Index used by one method, or `None` for the baselines.
pub fn method_index(method: Method, inputs: &CompareInputs<'_>, seed: u64) -> Result<Option<SemanticIndex>> {
    let need = |i: Option<&SemanticIndex>, what: &str| i.cloned().ok_or_else(|| Error::InvalidArg(format!("{method} needs {what}")));
    Ok(match method {
        Method::Uns | Method::Pns => None,
        Method::EsansSingleModality => Some(need(inputs.single_modality_index, "a single-modality index")?),
        Method::EsansNoMsac => Some(random_primary(&need(inputs.index, "a semantic index")?, seed)?),
        _ => Some(need(inputs.index, "a semantic index")?),
    })
}

/// Trains and evaluates each method with the same seeds, epochs and data.
pub fn compare_runs(inputs: &CompareInputs<'_>, base: &EbrConfig, methods: &[Method], ks: &[usize], config_digest: &str) -> Result<Comparison> {
    let mut reports = Vec::with_capacity(methods.len());
    for &m in methods {
        let cfg = m.config(base);
        let index = method_index(m, inputs, base.seed)?;
        log::info!("compare: training {m}");
        let model = train_ebr(inputs.train, inputs.profiles, index.as_ref(), &cfg)?;
        let report = recall_report(&model.params, inputs.train, inputs.eval, inputs.profiles, cfg.tower.seq_cap, ks, base.seed, config_digest)?;
        reports.push((m, report));
    }
    Ok(Comparison::from_reports(reports))
}
