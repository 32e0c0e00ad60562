use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hib_cli::{
    cmd_build_graph, cmd_eval, cmd_pipeline, cmd_solve, InitKind, Metric, Mode, PipelineArgs,
    Prediction, SolveFlags, EXIT_INPUT,
};
use hib_core::task_update::PipelineOptions;
use hib_core::UpdateRule;

#[derive(Parser)]
#[command(
    name = "hib",
    version,
    about = "Hierarchical information bottleneck solver and scene-graph tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hib,
    Hdib,
    Ib,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Delta,
    Perturb,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    SourceFirst,
    ClusterFirst,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Grounding,
    Hta,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and write the solution as JSON.
    Solve {
        problem: PathBuf,
        #[arg(long, value_enum, default_value = "hib")]
        mode: ModeArg,
        #[arg(long)]
        beta: Option<f64>,
        /// H-DIB weight; 1 is H-IB, 0 gives hard assignments.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        min_iter: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum)]
        init: Option<InitArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        rule: Option<RuleArg>,
        /// Solution path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-sweep trace, one JSON record per line.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build a scene graph from a solution.
    BuildGraph {
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Emit the graph before top-down and primitive pruning.
        #[arg(long)]
        no_prune: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Alternate hierarchy and task updates over a scene.
    Pipeline {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
        #[arg(long)]
        word_bank: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        #[arg(long, default_value_t = 0.8)]
        rs: f64,
        #[arg(long, default_value_t = 0.8)]
        rt: f64,
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
        /// Cosine threshold for primitive selection.
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score predictions against a reference annotation.
    Eval {
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, requires = "hierarchy", conflicts_with = "predictions")]
        graph: Option<PathBuf>,
        #[arg(long, requires = "graph")]
        hierarchy: Option<PathBuf>,
        /// Prediction file in place of a graph and hierarchy.
        #[arg(long, required_unless_present = "graph")]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> hib_cli::CliResult<i32> {
    match cli.command {
        Command::Solve {
            problem,
            mode,
            beta,
            alpha,
            min_iter,
            max_iter,
            tol,
            init,
            seed,
            rule,
            out,
            trace,
        } => {
            let mode = match mode {
                ModeArg::Hib => Mode::Hib,
                ModeArg::Hdib => Mode::Hdib,
                ModeArg::Ib => Mode::Ib,
            };
            let flags = SolveFlags {
                beta,
                alpha,
                min_iter,
                max_iter,
                tol,
                init: init.map(|i| match i {
                    InitArg::Delta => InitKind::Delta,
                    InitArg::Perturb => InitKind::Perturb,
                }),
                seed,
                rule: rule.map(|r| match r {
                    RuleArg::SourceFirst => UpdateRule::SourceFirst,
                    RuleArg::ClusterFirst => UpdateRule::ClusterFirst,
                }),
            };
            cmd_solve(&problem, mode, &flags, out.as_deref(), trace.as_deref())
        }
        Command::BuildGraph {
            solution,
            hierarchy,
            scene,
            no_prune,
            out,
        } => cmd_build_graph(&solution, &hierarchy, &scene, !no_prune, out.as_deref()),
        Command::Pipeline {
            scene,
            hierarchy,
            word_bank,
            oracle,
            rounds,
            rs,
            rt,
            beta,
            threshold,
            temperature,
            top_k,
            out_dir,
        } => {
            let mut options = PipelineOptions {
                rounds,
                r_s: rs,
                r_t: rt,
                threshold,
                temperature,
                top_k,
                ..Default::default()
            };
            options.solver.beta = beta;
            cmd_pipeline(&PipelineArgs {
                scene: &scene,
                hierarchy: &hierarchy,
                word_bank: &word_bank,
                oracle: &oracle,
                out_dir: &out_dir,
                options,
            })
        }
        Command::Eval {
            metric,
            reference,
            graph,
            hierarchy,
            predictions,
            out,
        } => {
            let metric = match metric {
                MetricArg::Grounding => Metric::Grounding,
                MetricArg::Hta => Metric::Hta,
            };
            let prediction = match (graph, hierarchy, predictions) {
                (Some(graph), Some(hierarchy), _) => Prediction::Graph { graph, hierarchy },
                (_, _, Some(p)) => Prediction::File(p),
                _ => {
                    return Err(hib_cli::CliError::Usage(
                        "pass --graph and --hierarchy, or --predictions".into(),
                    ))
                }
            };
            cmd_eval(metric, &prediction, &reference, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            // 2 is reserved for an exhausted iteration budget
            return ExitCode::from(EXIT_INPUT as u8);
        }
        Err(e) => e.exit(),
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(EXIT_INPUT as u8))
}
