//! Task hierarchies, scene primitives, scene graphs, and the embedding-based
//! conditionals that feed the solver.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{self, CondTable};

const UNIT_NORM_TOL: f64 = 1e-6;

pub type Vec3 = [f64; 3];

/// Axis-aligned box. Intersection tests treat boxes as closed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for axis in 0..3 {
            if !(self.min[axis].is_finite() && self.max[axis].is_finite())
                || self.min[axis] > self.max[axis]
            {
                return Err(Error::invalid(
                    "bounding box",
                    format!("{:?} .. {:?}", self.min, self.max),
                ));
            }
        }
        Ok(())
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }

    pub fn center(&self) -> Vec3 {
        [0, 1, 2].map(|a| 0.5 * (self.min[a] + self.max[a]))
    }

    pub fn extents(&self) -> Vec3 {
        [0, 1, 2].map(|a| self.max[a] - self.min[a])
    }

    pub fn diagonal(&self) -> f64 {
        norm(&self.extents())
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        self.contains_point(&other.min) && self.contains_point(&other.max)
    }

    /// Smallest box around every box in `boxes`, if any.
    pub fn union_all<'a>(boxes: impl IntoIterator<Item = &'a Aabb>) -> Option<Aabb> {
        boxes
            .into_iter()
            .fold(None, |acc, b| Some(acc.map_or(*b, |a: Aabb| a.union(b))))
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

/// Cosine similarity; zero vectors give 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / denom
}

fn validate_embedding(id: &str, e: &[f64]) -> Result<()> {
    if e.is_empty() || e.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            format!("embedding of `{id}`"),
            "empty or non-finite",
        ));
    }
    let n = norm(e);
    if n == 0.0 {
        return Err(Error::invalid(
            format!("embedding of `{id}`"),
            "zero vector",
        ));
    }
    if (n - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::invalid(
            format!("embedding of `{id}`"),
            format!("norm {n} is not 1"),
        ));
    }
    Ok(())
}

/// Scales `v` to unit length.
pub fn normalized(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|x| x / n).collect()
}

/// A boxed, embedding-bearing scene segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub id: String,
    pub centroid: Vec3,
    pub bbox: Aabb,
    pub embedding: Vec<f64>,
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        validate_embedding(&self.id, &self.embedding)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Task,
    Subtask,
    Item,
}

impl EntityKind {
    fn child_kind(self) -> Option<EntityKind> {
        match self {
            EntityKind::Task => Some(EntityKind::Subtask),
            EntityKind::Subtask => Some(EntityKind::Item),
            EntityKind::Item => None,
        }
    }

    /// Solver level at which this kind of entity is a task variable.
    pub fn level(self) -> usize {
        match self {
            EntityKind::Item => 1,
            EntityKind::Subtask => 2,
            EntityKind::Task => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spatial {
    pub position: Vec3,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEntity {
    pub id: String,
    pub kind: EntityKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<Spatial>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<String>,
}

impl TaskEntity {
    pub fn new(id: impl Into<String>, kind: EntityKind, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind,
            text: text.into(),
            embedding: None,
            spatial: None,
            children: Vec::new(),
        }
    }

    pub fn with_embedding(mut self, e: Vec<f64>) -> Self {
        self.embedding = Some(e);
        self
    }

    pub fn with_children(mut self, children: &[&str]) -> Self {
        self.children = children.iter().map(|c| c.to_string()).collect();
        self
    }
}

/// Tree of tasks, subtasks and items, with an optional null task that
/// absorbs scene content no real task cares about.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskHierarchy {
    entities: Vec<TaskEntity>,
    roots: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    null_task: Option<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

pub const NULL_ITEM_WORDS: [&str; 2] = ["item", "thing"];

impl TaskHierarchy {
    pub fn new(
        entities: Vec<TaskEntity>,
        roots: Vec<String>,
        null_task: Option<String>,
    ) -> Result<Self> {
        let mut h = Self {
            entities,
            roots,
            null_task,
            index: BTreeMap::new(),
        };
        h.rebuild()?;
        Ok(h)
    }

    fn rebuild(&mut self) -> Result<()> {
        self.index.clear();
        for (i, e) in self.entities.iter().enumerate() {
            if self.index.insert(e.id.clone(), i).is_some() {
                return Err(Error::hierarchy(&e.id, "duplicate id"));
            }
        }
        self.validate()
    }

    /// Restores the id index after deserialization and validates.
    pub fn reindex(mut self) -> Result<Self> {
        self.rebuild()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
        for e in &self.entities {
            if e.text.is_empty() {
                return Err(Error::hierarchy(&e.id, "empty text"));
            }
            if let Some(emb) = &e.embedding {
                validate_embedding(&e.id, emb)?;
            }
            if let Some(s) = &e.spatial {
                if !(s.radius > 0.0 && s.radius.is_finite()) {
                    return Err(Error::hierarchy(
                        &e.id,
                        format!("radius {} must be positive", s.radius),
                    ));
                }
            }
            let expected = e.kind.child_kind();
            for c in &e.children {
                let child = self
                    .get(c)
                    .ok_or_else(|| Error::hierarchy(&e.id, format!("unknown child `{c}`")))?;
                if Some(child.kind) != expected {
                    return Err(Error::hierarchy(
                        c,
                        format!("a {:?} cannot be a child of a {:?}", child.kind, e.kind),
                    ));
                }
                if let Some(prev) = parent.insert(c, &e.id) {
                    return Err(Error::hierarchy(
                        c,
                        format!("has two parents, `{prev}` and `{}`", e.id),
                    ));
                }
            }
        }
        let mut roots = BTreeSet::new();
        for r in self.roots.iter().chain(self.null_task.iter()) {
            let e = self
                .get(r)
                .ok_or_else(|| Error::hierarchy(r, "unknown root"))?;
            if e.kind != EntityKind::Task {
                return Err(Error::hierarchy(r, "roots must be tasks"));
            }
            if parent.contains_key(r.as_str()) {
                return Err(Error::hierarchy(r, "a root cannot have a parent"));
            }
            if !roots.insert(r.as_str()) {
                return Err(Error::hierarchy(r, "listed as a root twice"));
            }
        }
        // kinds strictly descend, so parent links cannot cycle
        for e in &self.entities {
            if !parent.contains_key(e.id.as_str()) && !roots.contains(e.id.as_str()) {
                return Err(Error::hierarchy(&e.id, "orphaned entity"));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&TaskEntity> {
        self.index.get(id).map(|&i| &self.entities[i])
    }

    fn get_mut(&mut self, id: &str) -> Option<&mut TaskEntity> {
        let i = *self.index.get(id)?;
        Some(&mut self.entities[i])
    }

    pub fn entities(&self) -> &[TaskEntity] {
        &self.entities
    }

    pub fn roots(&self) -> &[String] {
        &self.roots
    }

    pub fn null_task(&self) -> Option<&str> {
        self.null_task.as_deref()
    }

    /// Every entity in depth-first document order: real roots first, the null task last.
    pub fn document_order(&self) -> Vec<&TaskEntity> {
        fn walk<'a>(h: &'a TaskHierarchy, id: &str, out: &mut Vec<&'a TaskEntity>) {
            let e = h.get(id).expect("validated");
            out.push(e);
            for c in &e.children {
                walk(h, c, out);
            }
        }
        let mut out = Vec::with_capacity(self.entities.len());
        for r in self.roots.iter().chain(self.null_task.iter()) {
            walk(self, r, &mut out);
        }
        out
    }

    /// Entities of one kind in document order; this is the row order of `T_k`.
    pub fn of_kind(&self, kind: EntityKind) -> Vec<&TaskEntity> {
        self.document_order()
            .into_iter()
            .filter(|e| e.kind == kind)
            .collect()
    }

    pub fn parent_of(&self, id: &str) -> Option<&TaskEntity> {
        self.entities
            .iter()
            .find(|e| e.children.iter().any(|c| c == id))
    }

    /// Root task above `id`, or `id` itself for a task.
    pub fn task_of(&self, id: &str) -> Option<&TaskEntity> {
        let mut cur = self.get(id)?;
        while let Some(p) = self.parent_of(&cur.id) {
            cur = p;
        }
        Some(cur)
    }

    /// Whether `id` is the null task or one of its descendants.
    pub fn is_null(&self, id: &str) -> bool {
        match (self.null_task.as_deref(), self.task_of(id)) {
            (Some(n), Some(t)) => t.id == n,
            _ => false,
        }
    }

    /// Items beneath `id` in document order.
    pub fn items_under(&self, id: &str) -> Vec<&TaskEntity> {
        let mut out = Vec::new();
        if let Some(e) = self.get(id) {
            if e.kind == EntityKind::Item {
                out.push(e);
            }
            for c in &e.children {
                out.extend(self.items_under(c));
            }
        }
        out
    }

    /// Embeddings of the entities of `kind`, in row order.
    pub fn embeddings(&self, kind: EntityKind) -> Result<Vec<Vec<f64>>> {
        self.of_kind(kind)
            .into_iter()
            .map(|e| {
                e.embedding
                    .clone()
                    .ok_or_else(|| Error::hierarchy(&e.id, "missing embedding"))
            })
            .collect()
    }

    pub fn set_spatial(&mut self, id: &str, spatial: Option<Spatial>) -> Result<()> {
        if let Some(s) = &spatial {
            if !(s.radius > 0.0 && s.radius.is_finite()) {
                return Err(Error::hierarchy(
                    id,
                    format!("radius {} must be positive", s.radius),
                ));
            }
        }
        let e = self
            .get_mut(id)
            .ok_or_else(|| Error::hierarchy(id, "unknown entity"))?;
        e.spatial = spatial;
        Ok(())
    }

    /// Appends `child` under `parent`.
    pub fn add_child(&mut self, parent: &str, child: TaskEntity) -> Result<()> {
        let p = self
            .get(parent)
            .ok_or_else(|| Error::hierarchy(parent, "unknown parent"))?;
        if p.kind.child_kind() != Some(child.kind) {
            return Err(Error::hierarchy(
                &child.id,
                format!("a {:?} cannot be a child of a {:?}", child.kind, p.kind),
            ));
        }
        if self.get(&child.id).is_some() {
            return Err(Error::hierarchy(&child.id, "duplicate id"));
        }
        let id = child.id.clone();
        self.entities.push(child);
        self.get_mut(parent).expect("checked").children.push(id);
        self.rebuild()
    }

    /// An id not yet used, built from `base`.
    pub fn fresh_id(&self, base: &str) -> String {
        if self.get(base).is_none() {
            return base.to_string();
        }
        (2..)
            .map(|i| format!("{base}#{i}"))
            .find(|c| self.get(c).is_none())
            .expect("unbounded")
    }

    /// Adds a null task with one null subtask over the items `item` and `thing`.
    pub fn with_null_task(mut self, item_embeddings: [Vec<f64>; 2]) -> Result<Self> {
        if self.null_task.is_some() {
            return Ok(self);
        }
        let task = self.fresh_id("null");
        let sub = self.fresh_id("null/step");
        let mut items = Vec::new();
        for (word, emb) in NULL_ITEM_WORDS.iter().zip(item_embeddings) {
            let id = self.fresh_id(&format!("null/{word}"));
            self.entities
                .push(TaskEntity::new(&id, EntityKind::Item, *word).with_embedding(emb));
            items.push(id);
        }
        let mut s = TaskEntity::new(&sub, EntityKind::Subtask, "null action");
        s.children = items;
        self.entities.push(s);
        let mut t = TaskEntity::new(&task, EntityKind::Task, "null task");
        t.children = vec![sub];
        self.entities.push(t);
        self.null_task = Some(task);
        self.rebuild()?;
        Ok(self)
    }
}

/// Column `j` is the softmax over items of `cos(item_i, primitive_j) / temperature`.
pub fn embedding_conditional<P, I>(
    primitives: &[P],
    items: &[I],
    temperature: f64,
) -> Result<CondTable>
where
    P: AsRef<[f64]>,
    I: AsRef<[f64]>,
{
    if items.is_empty() {
        return Err(Error::invalid("embedding conditional", "no items"));
    }
    if primitives.is_empty() {
        return Err(Error::invalid("embedding conditional", "no primitives"));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid("temperature", "must be positive"));
    }
    let columns = primitives
        .iter()
        .map(|p| {
            let logits: Vec<f64> = items
                .iter()
                .map(|i| cosine(i.as_ref(), p.as_ref()) / temperature)
                .collect();
            let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - peak).exp()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        })
        .collect();
    Ok(CondTable::from_computed_columns(items.len(), columns))
}

/// `P(T_{k+1}|S_0) = Σ_{t_k} P(T_{k+1}|t_k) P(t_k|S_0)`.
pub fn lift_conditional(lower: &CondTable, step: &CondTable) -> Result<CondTable> {
    prob::chain(step, lower)
}

/// How tree membership becomes `P(parent|child)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Membership {
    /// All mass on the tree ancestor.
    #[default]
    Hard,
    /// `(1 - eps)` on the ancestor, `eps` spread evenly over every row.
    Smoothed(f64),
}

/// `P(to|from)` from tree membership, columns over `from` entities and rows
/// over `to` entities, both in document order.
pub fn hierarchy_step_conditional(
    h: &TaskHierarchy,
    from: EntityKind,
    to: EntityKind,
    membership: Membership,
) -> Result<CondTable> {
    if to >= from {
        return Err(Error::invalid(
            "step conditional",
            format!("{to:?} is not above {from:?}"),
        ));
    }
    let rows: Vec<&TaskEntity> = h.of_kind(to);
    let cols: Vec<&TaskEntity> = h.of_kind(from);
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::invalid(
            "step conditional",
            "no entities of the requested kind",
        ));
    }
    let row_of: BTreeMap<&str, usize> = rows
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect();
    let mut columns = Vec::with_capacity(cols.len());
    for c in &cols {
        let mut anc = h.parent_of(&c.id);
        while let Some(a) = anc {
            if a.kind == to {
                break;
            }
            anc = h.parent_of(&a.id);
        }
        let a = anc.ok_or_else(|| Error::hierarchy(&c.id, format!("no {to:?} ancestor")))?;
        let mut col = vec![0.0; rows.len()];
        col[row_of[a.id.as_str()]] = 1.0;
        if let Membership::Smoothed(eps) = membership {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::invalid(
                    "membership smoothing",
                    format!("{eps} is outside [0, 1]"),
                ));
            }
            let spread = eps / rows.len() as f64;
            col.iter_mut().for_each(|v| *v = *v * (1.0 - eps) + spread);
        }
        columns.push(col);
    }
    let mut t = CondTable::from_computed_columns(rows.len(), columns);
    t.set_labels(
        Some(rows.iter().map(|e| e.id.clone()).collect()),
        Some(cols.iter().map(|e| e.id.clone()).collect()),
    );
    Ok(t)
}

/// Primitives whose best cosine against any item embedding exceeds `threshold`.
pub fn select_relevant_primitives<'a, I: AsRef<[f64]>>(
    primitives: &'a [Primitive],
    items: &[I],
    threshold: f64,
) -> Vec<&'a Primitive> {
    primitives
        .iter()
        .filter(|p| {
            items
                .iter()
                .any(|i| cosine(&p.embedding, i.as_ref()) > threshold)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Primitive,
    Item,
    Subtask,
    Task,
}

impl Layer {
    pub fn entity_kind(self) -> Option<EntityKind> {
        match self {
            Layer::Primitive => None,
            Layer::Item => Some(EntityKind::Item),
            Layer::Subtask => Some(EntityKind::Subtask),
            Layer::Task => Some(EntityKind::Task),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Layer::Primitive => "primitive",
            Layer::Item => "item",
            Layer::Subtask => "subtask",
            Layer::Task => "task",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub layer: Layer,
    /// Cluster index at this layer; the source index for primitives.
    pub cluster: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    /// Aligned to the null task or one of its descendants.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub null: bool,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Aabb>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid: Option<Vec3>,
    /// Source primitive id, primitive layer only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive: Option<String>,
}

/// Layered scene graph: primitives, items, subtasks, tasks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub nodes: Vec<GraphNode>,
}

impl SceneGraph {
    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn layer(&self, layer: Layer) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(move |n| n.layer == layer)
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a GraphNode> + 'a {
        self.nodes
            .iter()
            .filter(move |n| n.parent.as_deref() == Some(id))
    }

    /// Node aligned to `entity`, if any.
    pub fn aligned(&self, entity: &str) -> Option<&GraphNode> {
        self.nodes
            .iter()
            .find(|n| n.entity.as_deref() == Some(entity))
    }

    /// `(node id, entity id)` pairs, sorted.
    pub fn alignment(&self) -> Vec<(String, String)> {
        let mut out: Vec<_> = self
            .nodes
            .iter()
            .filter_map(|n| n.entity.as_ref().map(|e| (n.id.clone(), e.clone())))
            .collect();
        out.sort();
        out
    }

    /// Primitive ids beneath `id`.
    pub fn primitives_under(&self, id: &str) -> Vec<String> {
        let mut out = Vec::new();
        for c in self.children(id) {
            if c.layer == Layer::Primitive {
                out.extend(c.primitive.clone());
            } else {
                out.extend(self.primitives_under(&c.id));
            }
        }
        out
    }

    /// Checks parent links point one layer up and each node has at most one parent.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(Error::Structural(format!("duplicate node id `{}`", n.id)));
            }
        }
        for n in &self.nodes {
            if let Some(p) = &n.parent {
                let parent = self.node(p).ok_or_else(|| {
                    Error::Structural(format!("node `{}` has unknown parent `{p}`", n.id))
                })?;
                if parent.layer as u8 != n.layer as u8 + 1 {
                    return Err(Error::Structural(format!(
                        "edge `{}` -> `{p}` skips or reverses layers",
                        n.id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: &[f64]) -> Vec<f64> {
        normalized(v)
    }

    fn two_task_hierarchy() -> TaskHierarchy {
        let ents = vec![
            TaskEntity::new("t1", EntityKind::Task, "cook").with_children(&["s1", "s2"]),
            TaskEntity::new("s1", EntityKind::Subtask, "boil").with_children(&["i1"]),
            TaskEntity::new("s2", EntityKind::Subtask, "chop").with_children(&["i2"]),
            TaskEntity::new("t2", EntityKind::Task, "clean").with_children(&["s3", "s4"]),
            TaskEntity::new("s3", EntityKind::Subtask, "wipe").with_children(&["i3"]),
            TaskEntity::new("s4", EntityKind::Subtask, "mop").with_children(&["i4"]),
            TaskEntity::new("i1", EntityKind::Item, "pot").with_embedding(e(&[1.0, 0.0])),
            TaskEntity::new("i2", EntityKind::Item, "knife").with_embedding(e(&[0.0, 1.0])),
            TaskEntity::new("i3", EntityKind::Item, "cloth").with_embedding(e(&[1.0, 1.0])),
            TaskEntity::new("i4", EntityKind::Item, "mop").with_embedding(e(&[1.0, -1.0])),
        ];
        TaskHierarchy::new(ents, vec!["t1".into(), "t2".into()], None).unwrap()
    }

    #[test]
    fn aabb_geometry() {
        let a = Aabb::new([0.0; 3], [1.0; 3]).unwrap();
        let touching = Aabb::new([1.0, 0.0, 0.0], [2.0, 1.0, 1.0]).unwrap();
        let apart = Aabb::new([1.5, 0.0, 0.0], [2.0, 1.0, 1.0]).unwrap();
        assert!(a.intersects(&touching));
        assert!(!a.intersects(&apart));
        let u = a.union(&apart);
        assert!(u.contains(&a) && u.contains(&apart));
        assert_eq!(u.center(), [1.0, 0.5, 0.5]);
        assert!(Aabb::new([1.0; 3], [0.0; 3]).is_err());
    }

    #[test]
    fn single_item_is_all_ones() {
        let t = embedding_conditional(&[e(&[1.0, 0.0]), e(&[0.3, 0.7])], &[e(&[0.5, 0.5])], 1.0)
            .unwrap();
        assert_eq!(t.row(0), &[1.0, 1.0]);
    }

    #[test]
    fn matching_item_softmax() {
        let t = embedding_conditional(&[vec![1.0, 0.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0)
            .unwrap();
        let ee = std::f64::consts::E;
        assert!((t.get(0, 0) - ee / (ee + 1.0)).abs() < 1e-12);
        assert!((t.get(0, 0) - 0.731).abs() < 1e-3);
        assert!((t.get(1, 0) - 0.269).abs() < 1e-3);
        assert!(embedding_conditional::<Vec<f64>, Vec<f64>>(&[vec![1.0]], &[], 1.0).is_err());
    }

    #[test]
    fn step_conditional_is_one_hot() {
        let h = two_task_hierarchy();
        let t =
            hierarchy_step_conditional(&h, EntityKind::Subtask, EntityKind::Task, Membership::Hard)
                .unwrap();
        assert_eq!(
            t.to_rows(),
            vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]]
        );
        let it =
            hierarchy_step_conditional(&h, EntityKind::Item, EntityKind::Task, Membership::Hard)
                .unwrap();
        assert_eq!(it.row(1), &[0.0, 0.0, 1.0, 1.0]);
        let smooth = hierarchy_step_conditional(
            &h,
            EntityKind::Subtask,
            EntityKind::Task,
            Membership::Smoothed(0.1),
        )
        .unwrap();
        assert!((smooth.get(0, 0) - 0.95).abs() < 1e-12);
        assert!(hierarchy_step_conditional(
            &h,
            EntityKind::Task,
            EntityKind::Item,
            Membership::Hard
        )
        .is_err());
    }

    #[test]
    fn null_items_point_to_null_subtask() {
        let h = two_task_hierarchy()
            .with_null_task([e(&[0.2, 1.0]), e(&[1.0, 0.2])])
            .unwrap();
        let t =
            hierarchy_step_conditional(&h, EntityKind::Item, EntityKind::Subtask, Membership::Hard)
                .unwrap();
        let items = h.of_kind(EntityKind::Item);
        assert_eq!(items.len(), 6);
        assert_eq!(t.rows(), 5);
        // null subtask is last in document order, as are its items
        assert_eq!(t.column(4)[4], 1.0);
        assert_eq!(t.column(5)[4], 1.0);
        assert!(h.is_null("null/item") && !h.is_null("i1"));
    }

    #[test]
    fn rejects_bad_hierarchies() {
        let bad_kind = vec![
            TaskEntity::new("t", EntityKind::Task, "t").with_children(&["i"]),
            TaskEntity::new("i", EntityKind::Item, "i"),
        ];
        let err = TaskHierarchy::new(bad_kind, vec!["t".into()], None).unwrap_err();
        assert!(matches!(err, Error::Hierarchy { ref id, .. } if id == "i"));

        let orphan = vec![
            TaskEntity::new("t", EntityKind::Task, "t"),
            TaskEntity::new("s", EntityKind::Subtask, "s"),
        ];
        let err = TaskHierarchy::new(orphan, vec!["t".into()], None).unwrap_err();
        assert!(
            matches!(err, Error::Hierarchy { ref id, ref reason } if id == "s" && reason.contains("orphan"))
        );

        let two_parents = vec![
            TaskEntity::new("t", EntityKind::Task, "t").with_children(&["s", "u"]),
            TaskEntity::new("s", EntityKind::Subtask, "s").with_children(&["i"]),
            TaskEntity::new("u", EntityKind::Subtask, "u").with_children(&["i"]),
            TaskEntity::new("i", EntityKind::Item, "i"),
        ];
        assert!(TaskHierarchy::new(two_parents, vec!["t".into()], None).is_err());

        let zero = vec![TaskEntity::new("t", EntityKind::Task, "t").with_embedding(vec![0.0, 0.0])];
        assert!(TaskHierarchy::new(zero, vec!["t".into()], None).is_err());
    }

    #[test]
    fn selection_threshold() {
        let item = vec![1.0, 0.0];
        let mk = |id: &str, cos: f64| Primitive {
            id: id.into(),
            centroid: [0.0; 3],
            bbox: Aabb::new([0.0; 3], [0.0; 3]).unwrap(),
            embedding: vec![cos, (1.0 - cos * cos).sqrt()],
        };
        let prims = vec![mk("a", 0.85), mk("b", 0.79), mk("c", 0.81)];
        let ids: Vec<_> = select_relevant_primitives(&prims, std::slice::from_ref(&item), 0.8)
            .iter()
            .map(|p| p.id.as_str())
            .collect();
        assert_eq!(ids, ["a", "c"]);
        assert!(
            select_relevant_primitives(&prims, std::slice::from_ref(&item), 1.0 - 1e-12).is_empty()
        );
        let same = vec![mk("d", 1.0)];
        assert_eq!(select_relevant_primitives(&same, &[item], 0.8).len(), 1);
    }
}
