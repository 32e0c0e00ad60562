//! JSON file formats. Matrices are row-major with optional label arrays.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Primitive, SceneGraph, TaskHierarchy};
use crate::prob::{CondTable, Dist};
use crate::solver::{HibProblem, HibState, Init, SolveOptions, SolveReport, UpdateRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_labels: Option<Vec<String>>,
}

impl MatrixFile {
    pub fn from_table(t: &CondTable) -> Self {
        Self {
            rows: t.to_rows(),
            row_labels: t.row_labels().map(<[String]>::to_vec),
            col_labels: t.col_labels().map(<[String]>::to_vec),
        }
    }

    pub fn to_table(&self, field: &str) -> Result<CondTable> {
        let relabel = |e: Error| match e {
            Error::Validation { what, reason } => {
                Error::invalid(format!("{field}: {what}"), reason)
            }
            Error::Dimension {
                context,
                expected,
                found,
            } => Error::dim(format!("{field}: {context}"), expected, found),
            other => other,
        };
        let mut t = CondTable::from_rows(&self.rows).map_err(relabel)?;
        if let Some(l) = &self.row_labels {
            t = t.with_row_labels(l.clone()).map_err(relabel)?;
        }
        if let Some(l) = &self.col_labels {
            t = t.with_col_labels(l.clone()).map_err(relabel)?;
        }
        Ok(t)
    }
}

/// Solver settings a problem file may carry; command-line flags win over them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptionDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Init>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<UpdateRule>,
}

impl OptionDefaults {
    pub fn apply(&self, mut opts: SolveOptions) -> SolveOptions {
        if let Some(v) = self.beta {
            opts.beta = v;
        }
        if let Some(v) = self.alpha {
            opts.alpha = v;
        }
        if let Some(v) = self.min_iter {
            opts.min_iter = v;
        }
        if let Some(v) = self.max_iter {
            opts.max_iter = v;
        }
        if let Some(v) = self.tol {
            opts.tol = v;
        }
        if let Some(v) = self.init {
            opts.init = v;
        }
        if let Some(v) = self.rule {
            opts.rule = v;
        }
        opts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n: usize,
    pub prior: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_labels: Option<Vec<String>>,
    pub task_conditionals: Vec<MatrixFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<OptionDefaults>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl ProblemFile {
    pub fn from_problem(p: &HibProblem) -> Self {
        Self {
            n: p.n(),
            prior: p.prior().values().to_vec(),
            prior_labels: p.prior().labels().map(<[String]>::to_vec),
            task_conditionals: p
                .task_conditionals()
                .iter()
                .map(MatrixFile::from_table)
                .collect(),
            cluster_sizes: Some(p.cluster_sizes().to_vec()),
            options: None,
            notes: None,
        }
    }

    pub fn to_problem(&self) -> Result<HibProblem> {
        if self.n != self.task_conditionals.len() {
            return Err(Error::dim(
                "n vs task_conditionals",
                self.n,
                self.task_conditionals.len(),
            ));
        }
        let mut prior =
            Dist::new(self.prior.clone()).map_err(|e| Error::invalid("prior", e.to_string()))?;
        if let Some(l) = &self.prior_labels {
            prior = prior.with_labels(l.clone())?;
        }
        let tasks = self
            .task_conditionals
            .iter()
            .enumerate()
            .map(|(k, m)| m.to_table(&format!("task_conditionals[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        HibProblem::new(prior, tasks, self.cluster_sizes.clone())
    }

    pub fn options(&self) -> SolveOptions {
        self.options
            .clone()
            .unwrap_or_default()
            .apply(SolveOptions::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelFile {
    pub encoder: MatrixFile,
    pub marginal: Vec<f64>,
    pub decoder: MatrixFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub options: SolveOptions,
    pub prior: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_labels: Option<Vec<String>>,
    pub levels: Vec<LevelFile>,
    pub report: SolveReport,
}

impl SolutionFile {
    pub fn new(options: &SolveOptions, state: &HibState, report: &SolveReport) -> Self {
        Self {
            options: options.clone(),
            prior: state.prior().values().to_vec(),
            prior_labels: state.prior().labels().map(<[String]>::to_vec),
            levels: (1..=state.n())
                .map(|k| LevelFile {
                    encoder: MatrixFile::from_table(state.encoder(k)),
                    marginal: state.marginal(k).values().to_vec(),
                    decoder: MatrixFile::from_table(state.decoder(k)),
                })
                .collect(),
            report: report.clone(),
        }
    }

    pub fn to_state(&self) -> Result<HibState> {
        let prior =
            Dist::new(self.prior.clone()).map_err(|e| Error::invalid("prior", e.to_string()))?;
        let mut enc = Vec::new();
        let mut marg = Vec::new();
        let mut dec = Vec::new();
        for (k, l) in self.levels.iter().enumerate() {
            enc.push(l.encoder.to_table(&format!("levels[{k}].encoder"))?);
            marg.push(
                Dist::new(l.marginal.clone())
                    .map_err(|e| Error::invalid(format!("levels[{k}].marginal"), e.to_string()))?,
            );
            dec.push(l.decoder.to_table(&format!("levels[{k}].decoder"))?);
        }
        HibState::from_parts(prior, enc, marg, dec)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub primitives: Vec<Primitive>,
}

impl SceneFile {
    pub fn validate(&self) -> Result<()> {
        self.primitives.iter().try_for_each(Primitive::validate)
    }
}

/// One line of a solve trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
}

/// Trace records as JSON lines.
pub fn trace_lines(report: &SolveReport) -> String {
    report
        .objective_trace
        .iter()
        .zip(&report.residual_trace)
        .enumerate()
        .map(|(i, (&objective, &residual))| {
            let rec = TraceRecord {
                iteration: i + 1,
                objective,
                residual,
            };
            serde_json::to_string(&rec).expect("plain record") + "\n"
        })
        .collect()
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn parse_json<T: DeserializeOwned>(path: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_string(),
        line: e.line(),
        column: e.column(),
        reason: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: shown.clone(),
        reason: e.to_string(),
    })?;
    parse_json(&shown, &text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn read_hierarchy(path: &Path) -> Result<TaskHierarchy> {
    read_json::<TaskHierarchy>(path)?.reindex()
}

pub fn read_scene(path: &Path) -> Result<SceneFile> {
    let scene: SceneFile = read_json(path)?;
    scene.validate()?;
    Ok(scene)
}

pub fn read_graph(path: &Path) -> Result<SceneGraph> {
    let g: SceneGraph = read_json(path)?;
    g.validate()?;
    Ok(g)
}
