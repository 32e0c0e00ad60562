//! Spatial grounding of task entities, spatially-informed conditionals, and
//! oracle-driven hierarchy refinement, plus the alternating pipeline.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::build_graph;
use crate::hierarchy::{
    cosine, distance, embedding_conditional, hierarchy_step_conditional, lift_conditional, norm,
    select_relevant_primitives, Aabb, EntityKind, Layer, Membership, Primitive, SceneGraph,
    Spatial, TaskEntity, TaskHierarchy, NULL_ITEM_WORDS,
};
use crate::prob::{CondTable, Dist};
use crate::solver::{solve_hib, HibProblem, SolveOptions, SolveReport};

/// Radii never drop below this, so degenerate boxes stay usable.
pub const MIN_RADIUS: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordEntry {
    pub word: String,
    pub embedding: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordBank {
    pub entries: Vec<WordEntry>,
}

impl WordBank {
    pub fn new(entries: Vec<WordEntry>) -> Result<Self> {
        let bank = Self { entries };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("word bank", "empty"));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.word.as_str()) {
                return Err(Error::invalid(
                    "word bank",
                    format!("duplicate word `{}`", e.word),
                ));
            }
            if norm(&e.embedding) == 0.0 {
                return Err(Error::invalid(
                    "word bank",
                    format!("`{}` has a zero embedding", e.word),
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&WordEntry> {
        self.entries.iter().find(|e| e.word == word)
    }
}

/// Scoring request: how relevant is each item to `context`?
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub context: String,
    pub items: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

/// Proposal request: new subtasks for `task` that use only `items`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposeRequest {
    pub task: String,
    pub items: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposedSubtask {
    pub text: String,
    pub items: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposeResponse {
    pub subtasks: Vec<ProposedSubtask>,
}

/// Scores item relevance and proposes subtasks. Implementations must be
/// deterministic for the pipeline to be reproducible.
pub trait RefinementOracle {
    fn score_items(&self, req: &ScoreRequest) -> std::result::Result<ScoreResponse, String>;
    fn propose_subtasks(
        &self,
        req: &ProposeRequest,
    ) -> std::result::Result<ProposeResponse, String>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRule {
    pub context: String,
    pub item: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalRule {
    pub task: String,
    pub subtask: String,
    pub items: Vec<String>,
}

/// Table-driven oracle. Unknown `(context, item)` pairs score 0; a proposal
/// rule fires when every one of its items was offered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MockOracle {
    #[serde(default)]
    pub scores: Vec<ScoreRule>,
    #[serde(default)]
    pub proposals: Vec<ProposalRule>,
}

impl RefinementOracle for MockOracle {
    fn score_items(&self, req: &ScoreRequest) -> std::result::Result<ScoreResponse, String> {
        let scores = req
            .items
            .iter()
            .map(|item| {
                self.scores
                    .iter()
                    .find(|r| r.context == req.context && &r.item == item)
                    .map_or(0.0, |r| r.score)
            })
            .collect();
        Ok(ScoreResponse { scores })
    }

    fn propose_subtasks(
        &self,
        req: &ProposeRequest,
    ) -> std::result::Result<ProposeResponse, String> {
        let subtasks = self
            .proposals
            .iter()
            .filter(|r| {
                r.task == req.task
                    && !r.items.is_empty()
                    && r.items.iter().all(|i| req.items.contains(i))
            })
            .map(|r| ProposedSubtask {
                text: r.subtask.clone(),
                items: r.items.clone(),
            })
            .collect();
        Ok(ProposeResponse { subtasks })
    }
}

fn scene_box(graph: &SceneGraph) -> Option<Aabb> {
    Aabb::union_all(graph.nodes.iter().filter_map(|n| n.bbox.as_ref()))
}

/// Grounds every aligned entity at its node's centroid. Items take the norm
/// of their box extents as radius; tasks and subtasks take the distance to
/// the nearest other grounded node of their layer, or a tenth of the scene
/// diagonal when they are alone. Unaligned entities keep their old value.
pub fn spatial_update(graph: &SceneGraph, hierarchy: &TaskHierarchy) -> Result<TaskHierarchy> {
    let mut h = hierarchy.clone();
    let fallback = scene_box(graph)
        .map_or(1.0, |b| b.diagonal() / 10.0)
        .max(MIN_RADIUS);
    for layer in [Layer::Item, Layer::Subtask, Layer::Task] {
        let grounded: Vec<_> = graph
            .layer(layer)
            .filter(|n| n.entity.is_some() && n.centroid.is_some())
            .collect();
        for n in &grounded {
            let entity = n.entity.as_deref().expect("filtered");
            if h.get(entity).is_none() {
                return Err(Error::hierarchy(
                    entity,
                    "graph node aligned to an unknown entity",
                ));
            }
            let c = n.centroid.expect("filtered");
            let radius = match layer {
                Layer::Item => n.bbox.map_or(fallback, |b| norm(&b.extents())),
                _ => grounded
                    .iter()
                    .filter(|o| o.id != n.id)
                    .map(|o| distance(&c, &o.centroid.expect("filtered")))
                    .fold(None, |acc: Option<f64>, d| {
                        Some(acc.map_or(d, |a| a.min(d)))
                    })
                    .unwrap_or(fallback),
            };
            h.set_spatial(
                entity,
                Some(Spatial {
                    position: c,
                    radius: radius.max(MIN_RADIUS),
                }),
            )?;
        }
    }
    Ok(h)
}

/// Unnormalized spatial weight of a primitive at `point` for an entity.
pub fn spatial_conditional(point: &[f64; 3], spatial: &Spatial) -> Result<f64> {
    let r = spatial.radius;
    if !(r > 0.0) {
        return Err(Error::invalid("radius", format!("{r} must be positive")));
    }
    let d = distance(point, &spatial.position);
    if d < r {
        Ok(1.0)
    } else {
        Ok((-(d - r).powi(2) / (r * r)).exp())
    }
}

/// `p_s(t|s)` over `entities` (rows) and `primitives` (columns).
///
/// A grounded entity spreads `p_s(s|t) ∝ w(s, t)` over the primitives, an
/// ungrounded one spreads uniformly; columns are then normalized over `t`.
pub fn spatial_table(primitives: &[&Primitive], entities: &[&TaskEntity]) -> Result<CondTable> {
    let n = primitives.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(entities.len());
    for e in entities {
        let row = match &e.spatial {
            Some(s) => {
                let w: Vec<f64> = primitives
                    .iter()
                    .map(|p| spatial_conditional(&p.centroid, s))
                    .collect::<Result<_>>()?;
                let z: f64 = w.iter().sum();
                if z > 0.0 {
                    w.into_iter().map(|v| v / z).collect()
                } else {
                    vec![1.0 / n as f64; n]
                }
            }
            None => vec![1.0 / n as f64; n],
        };
        rows.push(row);
    }
    let columns = (0..n)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let z: f64 = col.iter().sum();
            col.into_iter().map(|v| v / z).collect()
        })
        .collect();
    Ok(CondTable::from_computed_columns(entities.len(), columns))
}

/// Elementwise product renormalized per column.
pub fn combine_conditionals(p_spatial: &CondTable, p_embedding: &CondTable) -> Result<CondTable> {
    if (p_spatial.rows(), p_spatial.cols()) != (p_embedding.rows(), p_embedding.cols()) {
        return Err(Error::dim(
            "combine_conditionals",
            p_embedding.rows() * p_embedding.cols(),
            p_spatial.rows() * p_spatial.cols(),
        ));
    }
    let mut columns = Vec::with_capacity(p_embedding.cols());
    for j in 0..p_embedding.cols() {
        let col: Vec<f64> = (0..p_embedding.rows())
            .map(|i| p_spatial.get(i, j) * p_embedding.get(i, j))
            .collect();
        let z: f64 = col.iter().sum();
        if !(z > 0.0) {
            return Err(Error::DegenerateColumn {
                level: 1,
                column: j,
            });
        }
        columns.push(col.into_iter().map(|v| v / z).collect());
    }
    let mut out = CondTable::from_computed_columns(p_embedding.rows(), columns);
    out.set_labels(
        p_embedding.row_labels().map(<[String]>::to_vec),
        p_embedding.col_labels().map(<[String]>::to_vec),
    );
    Ok(out)
}

/// A word suggested for an unmatched primitive, with its bank embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub word: String,
    pub embedding: Vec<f64>,
}

/// Top `top_k` bank words per primitive, merged and ordered by best score
/// (descending) then word.
pub fn suggest_words<P: AsRef<[f64]>>(
    unmatched: &[P],
    bank: &WordBank,
    top_k: usize,
) -> Vec<Suggestion> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for p in unmatched {
        let mut scored: Vec<(&str, f64)> = bank
            .entries
            .iter()
            .map(|e| (e.word.as_str(), cosine(p.as_ref(), &e.embedding)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        for (w, s) in scored.into_iter().take(top_k) {
            let slot = best.entry(w).or_insert(f64::NEG_INFINITY);
            *slot = slot.max(s);
        }
    }
    let mut out: Vec<(&str, f64)> = best.into_iter().collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    out.into_iter()
        .map(|(w, _)| Suggestion {
            word: w.to_string(),
            embedding: bank.get(w).expect("from bank").embedding.clone(),
        })
        .collect()
}

fn query_scores(
    oracle: &dyn RefinementOracle,
    context: &str,
    items: &[String],
) -> Result<Vec<f64>> {
    let query = format!("score `{context}`");
    let resp = oracle
        .score_items(&ScoreRequest {
            context: context.to_string(),
            items: items.to_vec(),
        })
        .map_err(|reason| Error::Refinement {
            query: query.clone(),
            reason,
        })?;
    if resp.scores.len() != items.len() {
        return Err(Error::Refinement {
            query,
            reason: format!("expected {} scores, got {}", items.len(), resp.scores.len()),
        });
    }
    if let Some(s) = resp.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Refinement {
            query,
            reason: format!("score {s} is outside [0, 1]"),
        });
    }
    Ok(resp.scores)
}

/// Adds suggested items to subtasks that score them above `r_s`, then asks
/// for new subtasks over leftovers that score above `r_t` for their task.
/// Within a task an item text appears under at most one subtask; the first
/// subtask in document order wins a contested item.
///
/// Returns the refined hierarchy and the suggestions no task accepted.
pub fn refine_hierarchy(
    hierarchy: &TaskHierarchy,
    suggestions: &[Suggestion],
    oracle: &dyn RefinementOracle,
    r_s: f64,
    r_t: f64,
) -> Result<(TaskHierarchy, Vec<Suggestion>)> {
    for (name, r) in [("r_s", r_s), ("r_t", r_t)] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invalid(name, format!("{r} is outside [0, 1]")));
        }
    }
    let mut h = hierarchy.clone();
    let embedding_of: BTreeMap<&str, &Vec<f64>> = suggestions
        .iter()
        .map(|s| (s.word.as_str(), &s.embedding))
        .collect();
    let mut accepted: BTreeSet<String> = BTreeSet::new();
    let tasks: Vec<String> = hierarchy.roots().to_vec();
    for task_id in &tasks {
        let task = hierarchy.get(task_id).expect("validated").clone();
        let mut present: BTreeSet<String> = h
            .items_under(task_id)
            .iter()
            .map(|e| e.text.clone())
            .collect();
        let candidates: Vec<String> = suggestions
            .iter()
            .map(|s| s.word.clone())
            .filter(|w| !present.contains(w))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let mut claimed: BTreeSet<String> = BTreeSet::new();
        for sub_id in &task.children {
            let sub = hierarchy.get(sub_id).expect("validated").clone();
            let scores = query_scores(oracle, &sub.text, &candidates)?;
            for (word, s) in candidates.iter().zip(scores) {
                if s > r_s && !claimed.contains(word) {
                    claimed.insert(word.clone());
                    let id = h.fresh_id(&format!("{sub_id}/{word}"));
                    h.add_child(
                        sub_id,
                        TaskEntity::new(id, EntityKind::Item, word)
                            .with_embedding(embedding_of[word.as_str()].clone()),
                    )?;
                }
            }
        }
        present.extend(claimed.iter().cloned());
        accepted.extend(claimed);

        let leftovers: Vec<String> = candidates
            .into_iter()
            .filter(|w| !present.contains(w))
            .collect();
        if leftovers.is_empty() {
            continue;
        }
        let scores = query_scores(oracle, &task.text, &leftovers)?;
        let relevant: Vec<String> = leftovers
            .into_iter()
            .zip(scores)
            .filter(|(_, s)| *s > r_t)
            .map(|(w, _)| w)
            .collect();
        if relevant.is_empty() {
            continue;
        }
        let resp = oracle
            .propose_subtasks(&ProposeRequest {
                task: task.text.clone(),
                items: relevant.clone(),
            })
            .map_err(|reason| Error::Refinement {
                query: format!("propose `{}`", task.text),
                reason,
            })?;
        for proposal in resp.subtasks {
            let items: Vec<&String> = proposal
                .items
                .iter()
                .filter(|i| relevant.contains(i) && !present.contains(*i))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            if items.is_empty() {
                continue;
            }
            let sub_id = h.fresh_id(&format!("{task_id}/{}", proposal.text));
            h.add_child(
                task_id,
                TaskEntity::new(&sub_id, EntityKind::Subtask, &proposal.text),
            )?;
            for word in items {
                let id = h.fresh_id(&format!("{sub_id}/{word}"));
                h.add_child(
                    &sub_id,
                    TaskEntity::new(id, EntityKind::Item, word)
                        .with_embedding(embedding_of[word.as_str()].clone()),
                )?;
                present.insert(word.clone());
                accepted.insert(word.clone());
            }
        }
    }
    let rejected = suggestions
        .iter()
        .filter(|s| !accepted.contains(&s.word))
        .cloned()
        .collect();
    Ok((h, rejected))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub rounds: usize,
    pub r_s: f64,
    pub r_t: f64,
    /// Cosine threshold for primitive selection.
    pub threshold: f64,
    pub temperature: f64,
    /// Bank words suggested per unmatched primitive.
    pub top_k: usize,
    /// Rounds a rejected suggestion is offered again.
    pub persist_rejected: usize,
    pub solver: SolveOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            rounds: 3,
            r_s: 0.8,
            r_t: 0.8,
            threshold: 0.8,
            temperature: 1.0,
            top_k: 1,
            persist_rejected: 1,
            solver: SolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub selected_primitives: Vec<String>,
    pub solve: Option<SolveReport>,
    /// Real (non-null) subtasks aligned to a node of the final graph.
    pub grounded_subtasks: Vec<String>,
    pub grounded_items: Vec<String>,
    pub suggestions: Vec<String>,
    pub hierarchy_changed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub hierarchy: TaskHierarchy,
    pub graph: SceneGraph,
    pub rounds: Vec<RoundReport>,
}

/// Solver inputs for one round.
pub fn round_problem(
    selected: &[&Primitive],
    hierarchy: &TaskHierarchy,
    opts: &PipelineOptions,
    spatial: bool,
) -> Result<HibProblem> {
    let items = hierarchy.embeddings(EntityKind::Item)?;
    let prim_emb: Vec<&[f64]> = selected.iter().map(|p| p.embedding.as_slice()).collect();
    let mut t1 = embedding_conditional(&prim_emb, &items, opts.temperature)?;
    if spatial {
        let ents = hierarchy.of_kind(EntityKind::Item);
        t1 = combine_conditionals(&spatial_table(selected, &ents)?, &t1)?;
    }
    let t2 = lift_conditional(
        &t1,
        &hierarchy_step_conditional(
            hierarchy,
            EntityKind::Item,
            EntityKind::Subtask,
            Membership::Hard,
        )?,
    )?;
    let t3 = lift_conditional(
        &t2,
        &hierarchy_step_conditional(
            hierarchy,
            EntityKind::Subtask,
            EntityKind::Task,
            Membership::Hard,
        )?,
    )?;
    HibProblem::new(Dist::uniform(selected.len()), vec![t1, t2, t3], None)
}

fn grounded(graph: &SceneGraph, hierarchy: &TaskHierarchy, kind: EntityKind) -> Vec<String> {
    hierarchy
        .of_kind(kind)
        .into_iter()
        .filter(|e| !hierarchy.is_null(&e.id) && graph.aligned(&e.id).is_some())
        .map(|e| e.id.clone())
        .collect()
}

/// Alternates scene-hierarchy and task updates for up to `opts.rounds`
/// rounds, stopping early once a round changes neither the hierarchy nor the
/// graph alignment. A null task is added from the bank's `item` and `thing`
/// entries when the hierarchy has none.
pub fn run_pipeline(
    primitives: &[Primitive],
    initial: &TaskHierarchy,
    bank: &WordBank,
    oracle: &dyn RefinementOracle,
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    if opts.rounds == 0 {
        return Err(Error::invalid("rounds", "must be at least 1"));
    }
    bank.validate()?;
    for p in primitives {
        p.validate()?;
    }
    let mut hierarchy = match initial.null_task() {
        Some(_) => initial.clone(),
        None => {
            let emb = NULL_ITEM_WORDS.map(|w| {
                bank.get(w)
                    .map(|e| crate::hierarchy::normalized(&e.embedding))
                    .ok_or_else(|| {
                        Error::invalid("word bank", format!("needs `{w}` to build the null task"))
                    })
            });
            let [a, b] = emb;
            initial.clone().with_null_task([a?, b?])?
        }
    };
    let mut graph = SceneGraph::default();
    let mut reports: Vec<RoundReport> = Vec::new();
    let mut carried: Vec<(Suggestion, usize)> = Vec::new();
    let mut prev_alignment: Option<Vec<(String, String)>> = None;

    for round in 1..=opts.rounds {
        let wrap = |e: Error| Error::Round {
            round,
            source: Box::new(e),
        };
        let items = hierarchy.embeddings(EntityKind::Item).map_err(wrap)?;
        let selected = select_relevant_primitives(primitives, &items, opts.threshold);
        let mut solve = None;
        graph = if selected.is_empty() {
            SceneGraph::default()
        } else {
            let problem = round_problem(&selected, &hierarchy, opts, round > 1).map_err(wrap)?;
            let (state, report) = solve_hib(&problem, &opts.solver).map_err(wrap)?;
            solve = Some(report);
            let owned: Vec<Primitive> = selected.iter().map(|p| (*p).clone()).collect();
            build_graph(&state, &hierarchy, &owned).map_err(wrap)?
        };
        let spatial = spatial_update(&graph, &hierarchy).map_err(wrap)?;

        let in_graph: BTreeSet<&str> = graph
            .layer(Layer::Primitive)
            .filter_map(|n| n.primitive.as_deref())
            .collect();
        let unmatched: Vec<&[f64]> = primitives
            .iter()
            .filter(|p| !in_graph.contains(p.id.as_str()))
            .map(|p| p.embedding.as_slice())
            .collect();
        let mut suggestions = suggest_words(&unmatched, bank, opts.top_k);
        for (s, _) in &carried {
            if !suggestions.iter().any(|x| x.word == s.word) {
                suggestions.push(s.clone());
            }
        }
        let (refined, rejected) =
            refine_hierarchy(&spatial, &suggestions, oracle, opts.r_s, opts.r_t).map_err(wrap)?;
        let changed = refined.entities().len() != hierarchy.entities().len();

        let mut next_carried = Vec::new();
        for s in rejected {
            let age = carried
                .iter()
                .find(|(c, _)| c.word == s.word)
                .map_or(0, |(_, a)| a + 1);
            if age < opts.persist_rejected {
                next_carried.push((s, age));
            }
        }
        carried = next_carried;

        reports.push(RoundReport {
            round,
            selected_primitives: selected.iter().map(|p| p.id.clone()).collect(),
            solve,
            grounded_subtasks: grounded(&graph, &hierarchy, EntityKind::Subtask),
            grounded_items: grounded(&graph, &hierarchy, EntityKind::Item),
            suggestions: suggestions.iter().map(|s| s.word.clone()).collect(),
            hierarchy_changed: changed,
        });
        let alignment = graph.alignment();
        let settled = !changed && prev_alignment.as_ref() == Some(&alignment);
        prev_alignment = Some(alignment);
        hierarchy = refined;
        if settled {
            break;
        }
    }
    Ok(PipelineOutput {
        hierarchy,
        graph,
        rounds: reports,
    })
}
