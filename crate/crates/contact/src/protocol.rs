//! End-to-end evaluation runs: relabel, preprocess, split, tune, train,
//! evaluate.

use serde::{Deserialize, Serialize};

use crate::data::{ContactError, Replicate};
use crate::eval::{evaluate, ConfusionStats, TableRow};
use crate::forest::{train_forest, tune_mtry, ForestParams};
use crate::label::{label_approaching, ApproachWindow};
use crate::preprocess::{preprocess, PreprocessConfig};
use crate::split::{build_split, SplitScheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Contact,
    Approaching,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Contact => "contact",
            Task::Approaching => "approaching",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub task: Task,
    pub scheme: SplitScheme,
    pub preprocess: PreprocessConfig,
    pub window: ApproachWindow,
    pub n_trees: usize,
    /// Fixed `mtry`; `None` tunes it per group over `mtry_candidates`.
    pub mtry: Option<usize>,
    pub mtry_candidates: Vec<usize>,
    pub probe_trees: usize,
    pub seed: u64,
}

impl ProtocolConfig {
    pub fn new(task: Task, scheme: SplitScheme) -> Self {
        Self {
            task,
            scheme,
            preprocess: PreprocessConfig::default(),
            window: ApproachWindow::default(),
            n_trees: 500,
            mtry: None,
            mtry_candidates: (2..=8).collect(),
            probe_trees: 100,
            seed: scheme.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub row: TableRow,
    pub mtry: usize,
    pub oob_error: f64,
    pub train_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub groups: Vec<GroupResult>,
    /// Cells summed over groups.
    pub overall: ConfusionStats,
    pub removed_outliers: usize,
}

pub fn run_protocol(replicates: &[Replicate], cfg: &ProtocolConfig) -> Result<ProtocolResult, ContactError> {
    let relabeled: Vec<Replicate>;
    let input = match cfg.task {
        Task::Contact => replicates,
        Task::Approaching => {
            relabeled = replicates.iter().map(|r| label_approaching(r, &cfg.window)).collect();
            &relabeled
        }
    };
    let pre = preprocess(input, &cfg.preprocess)?;
    let groups = build_split(&pre.replicates, &cfg.scheme)?;
    let mut out = Vec::with_capacity(groups.len());
    let mut overall = ConfusionStats::default();
    for (gi, g) in groups.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(gi as u64 * 0x9E37_79B9);
        let mtry = match cfg.mtry {
            Some(m) => m,
            None => tune_mtry(&g.train, &cfg.mtry_candidates, cfg.probe_trees, seed)?.best,
        };
        let model = train_forest(&g.train, &ForestParams { n_trees: cfg.n_trees, mtry, seed })?;
        let stats = evaluate(&model, &g.test);
        overall = overall.merge(&stats);
        out.push(GroupResult {
            row: TableRow {
                task: cfg.task.as_str().into(),
                protocol: cfg.scheme.kind.as_str().into(),
                cut_type: g.cut_type.map_or("all".into(), |c| c.to_string()),
                stats,
            },
            mtry,
            oob_error: model.oob_error,
            train_size: g.train.len(),
        });
    }
    Ok(ProtocolResult { groups: out, overall, removed_outliers: pre.removed.iter().sum() })
}
