//! Commands behind the `hib` binary.

use std::path::{Path, PathBuf};

use hib_core::graph::{bottom_up_construct, build_graph};
use hib_core::hierarchy::SceneGraph;
use hib_core::io::{
    read_graph, read_hierarchy, read_json, read_scene, to_json, trace_lines, write_json,
    write_text, ProblemFile, SolutionFile,
};
use hib_core::metrics::{
    grounding_accuracy, grounding_from_graph, hierarchy_from_graph, hta_metrics,
    GroundingPrediction, PredictedHierarchy, ReferenceAnnotation,
};
use hib_core::task_update::{run_pipeline, MockOracle, PipelineOptions, WordBank};
use hib_core::{solve_hdib, solve_hib, solve_ib, Error, Init, SolveOptions, UpdateRule};
use serde::Serialize;
use thiserror::Error as ThisError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_MAX_ITER: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if matches!(e.root(), Error::DegenerateColumn { .. }) => {
                EXIT_DEGENERATE
            }
            _ => EXIT_INPUT,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Hib,
    Hdib,
    Ib,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    Delta,
    Perturb,
}

/// Solver flags; unset fields fall back to the problem file, then to defaults.
#[derive(Clone, Debug, Default)]
pub struct SolveFlags {
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub min_iter: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub init: Option<InitKind>,
    pub seed: Option<u64>,
    pub rule: Option<UpdateRule>,
}

impl SolveFlags {
    pub fn resolve(&self, base: SolveOptions) -> SolveOptions {
        let mut o = base;
        if let Some(v) = self.beta {
            o.beta = v;
        }
        if let Some(v) = self.alpha {
            o.alpha = v;
        }
        if let Some(v) = self.min_iter {
            o.min_iter = v;
        }
        if let Some(v) = self.max_iter {
            o.max_iter = v;
        }
        if let Some(v) = self.tol {
            o.tol = v;
        }
        if let Some(v) = self.rule {
            o.rule = v;
        }
        let seed = self.seed.or(match o.init {
            Init::SeededPerturbation { seed } => Some(seed),
            Init::KroneckerDelta => None,
        });
        match self.init {
            Some(InitKind::Delta) => o.init = Init::KroneckerDelta,
            Some(InitKind::Perturb) => {
                o.init = Init::SeededPerturbation {
                    seed: seed.unwrap_or(0),
                }
            }
            None => {
                if let (Init::SeededPerturbation { .. }, Some(seed)) = (o.init, self.seed) {
                    o.init = Init::SeededPerturbation { seed };
                }
            }
        }
        o
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => Ok(write_text(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Solves a problem file. Returns the exit code: 0 when converged, 2 when
/// `max_iter` ran out first.
pub fn cmd_solve(
    input: &Path,
    mode: Mode,
    flags: &SolveFlags,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> CliResult<i32> {
    let file: ProblemFile = read_json(input)?;
    let problem = file.to_problem()?;
    let opts = flags.resolve(file.options());
    let (state, report) = match mode {
        Mode::Hib => solve_hib(&problem, &opts)?,
        Mode::Hdib => solve_hdib(&problem, &opts)?,
        Mode::Ib => {
            if problem.n() != 1 {
                return Err(CliError::Usage(format!(
                    "--mode ib needs a one-level problem, this one has {}",
                    problem.n()
                )));
            }
            solve_ib(
                problem.prior(),
                &problem.task_conditionals()[0],
                Some(problem.cluster_sizes()[0]),
                &opts,
            )?
        }
    };
    if let Some(t) = trace {
        write_text(t, &trace_lines(&report))?;
    }
    emit(out, &to_json(&SolutionFile::new(&opts, &state, &report)))?;
    Ok(if report.converged {
        EXIT_OK
    } else {
        EXIT_MAX_ITER
    })
}

/// Builds a scene graph from a solution; `prune = false` keeps the raw
/// bottom-up graph.
pub fn cmd_build_graph(
    solution: &Path,
    hierarchy: &Path,
    scene: &Path,
    prune: bool,
    out: Option<&Path>,
) -> CliResult<i32> {
    let scene = read_scene(scene)?;
    let hierarchy = read_hierarchy(hierarchy)?;
    let graph = if scene.primitives.is_empty() {
        SceneGraph::default()
    } else {
        let sol: SolutionFile = read_json(solution)?;
        let state = sol.to_state()?;
        if prune {
            build_graph(&state, &hierarchy, &scene.primitives)?
        } else {
            bottom_up_construct(&state, &hierarchy, &scene.primitives)?
        }
    };
    emit(out, &to_json(&graph))?;
    Ok(EXIT_OK)
}

pub struct PipelineArgs<'a> {
    pub scene: &'a Path,
    pub hierarchy: &'a Path,
    pub word_bank: &'a Path,
    pub oracle: &'a Path,
    pub out_dir: &'a Path,
    pub options: PipelineOptions,
}

/// Runs the alternating pipeline and writes `graph.json`, `hierarchy.json`
/// and `rounds.json` into the output directory.
pub fn cmd_pipeline(args: &PipelineArgs<'_>) -> CliResult<i32> {
    let scene = read_scene(args.scene)?;
    let hierarchy = read_hierarchy(args.hierarchy)?;
    let bank: WordBank = read_json(args.word_bank)?;
    let oracle: MockOracle = read_json(args.oracle)?;
    let out = run_pipeline(&scene.primitives, &hierarchy, &bank, &oracle, &args.options)?;
    std::fs::create_dir_all(args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.display().to_string(),
        reason: e.to_string(),
    })?;
    write_json(&args.out_dir.join("graph.json"), &out.graph)?;
    write_json(&args.out_dir.join("hierarchy.json"), &out.hierarchy)?;
    write_json(&args.out_dir.join("rounds.json"), &out.rounds)?;
    Ok(EXIT_OK)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Grounding,
    Hta,
}

pub enum Prediction {
    Graph { graph: PathBuf, hierarchy: PathBuf },
    File(PathBuf),
}

#[derive(Serialize)]
struct MetricReport<T: Serialize> {
    metric: &'static str,
    #[serde(flatten)]
    values: T,
}

pub fn cmd_eval(
    metric: Metric,
    prediction: &Prediction,
    reference: &Path,
    out: Option<&Path>,
) -> CliResult<i32> {
    let reference: ReferenceAnnotation = read_json(reference)?;
    let loaded = match prediction {
        Prediction::Graph { graph, hierarchy } => {
            Some((read_graph(graph)?, read_hierarchy(hierarchy)?))
        }
        Prediction::File(_) => None,
    };
    let text = match metric {
        Metric::Grounding => {
            let pred: GroundingPrediction = match (&loaded, prediction) {
                (Some((g, h)), _) => grounding_from_graph(g, h),
                (None, Prediction::File(p)) => read_json(p)?,
                _ => unreachable!(),
            };
            to_json(&MetricReport {
                metric: "grounding",
                values: grounding_accuracy(&pred, &reference)?,
            })
        }
        Metric::Hta => {
            let pred: PredictedHierarchy = match (&loaded, prediction) {
                (Some((g, h)), _) => hierarchy_from_graph(g, h),
                (None, Prediction::File(p)) => read_json(p)?,
                _ => unreachable!(),
            };
            to_json(&MetricReport {
                metric: "hta",
                values: hta_metrics(&pred, &reference)?,
            })
        }
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}
