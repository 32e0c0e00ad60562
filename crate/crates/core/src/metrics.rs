//! Grounding accuracy and hierarchical-task-analysis metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Aabb, EntityKind, Layer, SceneGraph, TaskHierarchy, Vec3};

/// A ground-truth object, by primitive id or by box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectRef {
    Id { id: String },
    Box { bbox: Aabb },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSubtask {
    pub text: String,
    pub objects: Vec<ObjectRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTask {
    pub task: String,
    pub subtasks: Vec<ReferenceSubtask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAnnotation {
    pub tasks: Vec<ReferenceTask>,
}

impl ReferenceAnnotation {
    pub fn validate(&self) -> Result<()> {
        for t in &self.tasks {
            if t.subtasks.is_empty() {
                return Err(Error::invalid(
                    "reference",
                    format!("task `{}` has no subtasks", t.task),
                ));
            }
        }
        Ok(())
    }

    fn find(&self, task: &str) -> Option<&ReferenceTask> {
        self.tasks.iter().find(|t| t.task == task)
    }
}

/// A predicted object: the primitives it covers and its box centroid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictedObject {
    #[serde(default)]
    pub primitives: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<Vec3>,
}

impl PredictedObject {
    pub fn matches(&self, r: &ObjectRef) -> bool {
        match r {
            ObjectRef::Id { id } => self.primitives.contains(id),
            ObjectRef::Box { bbox } => self.centroid.is_some_and(|c| bbox.contains_point(&c)),
        }
    }
}

/// Groundings for a task's reference subtasks, by position; `None` is ungrounded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundedTask {
    pub task: String,
    pub groundings: Vec<Option<PredictedObject>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundingPrediction {
    pub tasks: Vec<GroundedTask>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedSubtask {
    pub text: String,
    pub objects: Vec<PredictedObject>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedTask {
    pub task: String,
    pub subtasks: Vec<PredictedSubtask>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictedHierarchy {
    pub tasks: Vec<PredictedTask>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundingMetrics {
    pub s_acc: f64,
    pub t_acc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HtaMetrics {
    pub s_rec: f64,
    pub s_prec: f64,
    pub t_acc: f64,
    pub correct: usize,
    pub incorrect: usize,
    pub missed: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Subtask accuracy over every reference subtask, and the fraction of tasks
/// whose subtasks are all grounded correctly. Reference tasks missing from
/// the prediction count as ungrounded.
pub fn grounding_accuracy(
    predicted: &GroundingPrediction,
    reference: &ReferenceAnnotation,
) -> Result<GroundingMetrics> {
    reference.validate()?;
    for p in &predicted.tasks {
        let r = reference.find(&p.task).ok_or_else(|| {
            Error::invalid(
                "prediction",
                format!("task `{}` is not in the reference", p.task),
            )
        })?;
        if p.groundings.len() > r.subtasks.len() {
            return Err(Error::dim(
                format!("groundings of `{}`", p.task),
                r.subtasks.len(),
                p.groundings.len(),
            ));
        }
    }
    let (mut correct, mut total, mut tasks_ok) = (0, 0, 0);
    for r in &reference.tasks {
        let p = predicted.tasks.iter().find(|p| p.task == r.task);
        let mut all = true;
        for (i, sub) in r.subtasks.iter().enumerate() {
            total += 1;
            let hit = p
                .and_then(|p| p.groundings.get(i))
                .and_then(Option::as_ref)
                .is_some_and(|obj| sub.objects.iter().any(|o| obj.matches(o)));
            if hit {
                correct += 1;
            } else {
                all = false;
            }
        }
        if all {
            tasks_ok += 1;
        }
    }
    Ok(GroundingMetrics {
        s_acc: ratio(correct, total),
        t_acc: ratio(tasks_ok, reference.tasks.len()),
    })
}

/// One-to-one match between predicted objects and reference objects.
fn same_objects(pred: &[PredictedObject], reference: &[ObjectRef]) -> bool {
    fn assign(
        i: usize,
        pred: &[PredictedObject],
        reference: &[ObjectRef],
        used: &mut [bool],
    ) -> bool {
        if i == pred.len() {
            return true;
        }
        for j in 0..reference.len() {
            if !used[j] && pred[i].matches(&reference[j]) {
                used[j] = true;
                if assign(i + 1, pred, reference, used) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    pred.len() == reference.len() && assign(0, pred, reference, &mut vec![false; reference.len()])
}

/// Subtask recall `C/(C+M)`, precision `C/(C+I)` and the fraction of tasks
/// with at least one predicted subtask and no incorrect ones.
///
/// A predicted subtask is correct when its objects match those of a not yet
/// matched reference subtask of the same task; predictions are taken in order
/// and claim the first such reference subtask.
pub fn hta_metrics(
    predicted: &PredictedHierarchy,
    reference: &ReferenceAnnotation,
) -> Result<HtaMetrics> {
    reference.validate()?;
    let (mut c, mut i, mut ref_total) = (0, 0, 0);
    let mut tasks_ok = 0;
    for r in &reference.tasks {
        ref_total += r.subtasks.len();
        let mut used = vec![false; r.subtasks.len()];
        let mut wrong = 0;
        let mut count = 0;
        for p in predicted.tasks.iter().filter(|p| p.task == r.task) {
            for sub in &p.subtasks {
                count += 1;
                match (0..r.subtasks.len())
                    .find(|&j| !used[j] && same_objects(&sub.objects, &r.subtasks[j].objects))
                {
                    Some(j) => {
                        used[j] = true;
                        c += 1;
                    }
                    None => wrong += 1,
                }
            }
        }
        i += wrong;
        if count > 0 && wrong == 0 {
            tasks_ok += 1;
        }
    }
    for p in &predicted.tasks {
        if reference.find(&p.task).is_none() {
            i += p.subtasks.len();
        }
    }
    let m = ref_total - c;
    Ok(HtaMetrics {
        s_rec: ratio(c, c + m),
        s_prec: ratio(c, c + i),
        t_acc: ratio(tasks_ok, reference.tasks.len()),
        correct: c,
        incorrect: i,
        missed: m,
    })
}

fn object_for(graph: &SceneGraph, item: &str) -> Option<PredictedObject> {
    let node = graph.aligned(item).filter(|n| n.layer == Layer::Item)?;
    Some(PredictedObject {
        primitives: graph.primitives_under(&node.id),
        centroid: node.centroid,
    })
}

/// Grounding prediction read off a graph: each subtask is grounded at its
/// first item (in document order) that has an aligned node.
pub fn grounding_from_graph(graph: &SceneGraph, hierarchy: &TaskHierarchy) -> GroundingPrediction {
    let tasks = hierarchy
        .roots()
        .iter()
        .map(|t| GroundedTask {
            task: t.clone(),
            groundings: hierarchy
                .get(t)
                .map(|e| e.children.as_slice())
                .unwrap_or_default()
                .iter()
                .map(|s| {
                    hierarchy
                        .items_under(s)
                        .iter()
                        .find_map(|i| object_for(graph, &i.id))
                })
                .collect(),
        })
        .collect();
    GroundingPrediction { tasks }
}

/// Predicted hierarchy read off a graph: every subtask with its grounded items.
/// Subtasks with no grounded item are left out.
pub fn hierarchy_from_graph(graph: &SceneGraph, hierarchy: &TaskHierarchy) -> PredictedHierarchy {
    let tasks = hierarchy
        .roots()
        .iter()
        .map(|t| PredictedTask {
            task: t.clone(),
            subtasks: hierarchy
                .of_kind(EntityKind::Subtask)
                .into_iter()
                .filter(|s| hierarchy.task_of(&s.id).is_some_and(|r| &r.id == t))
                .filter_map(|s| {
                    let objects: Vec<_> = hierarchy
                        .items_under(&s.id)
                        .iter()
                        .filter_map(|i| object_for(graph, &i.id))
                        .collect();
                    (!objects.is_empty()).then(|| PredictedSubtask {
                        text: s.text.clone(),
                        objects,
                    })
                })
                .collect(),
        })
        .collect();
    PredictedHierarchy { tasks }
}
