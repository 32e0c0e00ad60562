//! Bottom-up scene-graph construction from a solved state, and top-down pruning.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::hierarchy::{Aabb, EntityKind, GraphNode, Layer, Primitive, SceneGraph, TaskHierarchy};
use crate::prob::{argmax, matvec};
use crate::solver::HibState;

const LAYERS: [Layer; 3] = [Layer::Item, Layer::Subtask, Layer::Task];

/// Stable node id for cluster `cluster` at `layer`.
pub fn node_id(layer: Layer, cluster: usize) -> String {
    format!("{}/{cluster}", layer.name())
}

/// `p(s|t) = p(t|s) p(s) / p(t)`.
pub fn confidence(p_t_given_s: f64, p_s: f64, p_t: f64) -> Result<f64> {
    if p_t <= 0.0 {
        return Err(Error::UndefinedConfidence);
    }
    Ok(p_t_given_s * p_s / p_t)
}

/// Builds the layered graph from a three-level state: items at level 1,
/// subtasks at 2, tasks at 3.
///
/// A cluster becomes a node when at least one existing node below picks it
/// as the argmax of its encoder column. Each node aligns to the argmax of its
/// decoder column.
pub fn bottom_up_construct(
    state: &HibState,
    hierarchy: &TaskHierarchy,
    primitives: &[Primitive],
) -> Result<SceneGraph> {
    if primitives.is_empty() {
        return Ok(SceneGraph::default());
    }
    if state.n() != 3 {
        return Err(Error::dim("state levels", 3, state.n()));
    }
    if state.prior().len() != primitives.len() {
        return Err(Error::dim(
            "primitives",
            state.prior().len(),
            primitives.len(),
        ));
    }
    let entities: Vec<Vec<&str>> = [EntityKind::Item, EntityKind::Subtask, EntityKind::Task]
        .iter()
        .map(|&k| {
            hierarchy
                .of_kind(k)
                .into_iter()
                .map(|e| e.id.as_str())
                .collect()
        })
        .collect();
    for k in 1..=3 {
        if state.decoder(k).rows() != entities[k - 1].len() {
            return Err(Error::dim(
                format!("decoder {k} rows"),
                entities[k - 1].len(),
                state.decoder(k).rows(),
            ));
        }
    }

    let mut nodes: Vec<GraphNode> = Vec::new();
    let enc1 = state.encoder(1);
    let m1 = state.marginal(1);
    let px = state.prior();
    let mut occupied: BTreeSet<usize> = BTreeSet::new();
    for (x, p) in primitives.iter().enumerate() {
        let s = enc1.argmax_column(x);
        occupied.insert(s);
        let conf = if m1.get(s) > 0.0 {
            enc1.get(s, x) * px.get(x) / m1.get(s)
        } else {
            0.0
        };
        nodes.push(GraphNode {
            id: format!("{}/{x}", Layer::Primitive.name()),
            layer: Layer::Primitive,
            cluster: x,
            parent: Some(node_id(Layer::Item, s)),
            entity: None,
            null: false,
            confidence: conf,
            bbox: Some(p.bbox),
            centroid: Some(p.centroid),
            primitive: Some(p.id.clone()),
        });
    }

    for (li, &layer) in LAYERS.iter().enumerate() {
        let k = li + 1;
        let dec = state.decoder(k);
        let marg = state.marginal(k);
        // p(t_k) = Σ_s p(t_k|s) p(s)
        let pt = matvec(dec, marg.values());
        let mut next: BTreeSet<usize> = BTreeSet::new();
        for &s in &occupied {
            let parent = if k < 3 {
                let up = state.encoder(k + 1).argmax_column(s);
                next.insert(up);
                Some(node_id(LAYERS[li + 1], up))
            } else {
                None
            };
            let t = argmax(&dec.column(s));
            let entity = entities[li][t];
            let bbox = Aabb::union_all(
                nodes
                    .iter()
                    .filter(|n| n.parent.as_deref() == Some(node_id(layer, s).as_str()))
                    .filter_map(|n| n.bbox.as_ref()),
            );
            nodes.push(GraphNode {
                id: node_id(layer, s),
                layer,
                cluster: s,
                parent,
                entity: Some(entity.to_string()),
                null: hierarchy.is_null(entity),
                confidence: confidence(dec.get(t, s), marg.get(s), pt[t])?,
                centroid: bbox.map(|b| b.center()),
                bbox,
                primitive: None,
            });
        }
        occupied = next;
    }
    Ok(SceneGraph { nodes })
}

fn descendants(graph: &SceneGraph, roots: &BTreeSet<String>) -> BTreeSet<String> {
    let mut out = roots.clone();
    loop {
        let before = out.len();
        for n in &graph.nodes {
            if n.parent.as_ref().is_some_and(|p| out.contains(p)) {
                out.insert(n.id.clone());
            }
        }
        if out.len() == before {
            return out;
        }
    }
}

fn remove_subtrees(graph: &mut SceneGraph, roots: BTreeSet<String>) {
    if roots.is_empty() {
        return;
    }
    let gone = descendants(graph, &roots);
    graph.nodes.retain(|n| !gone.contains(&n.id));
}

/// Merges same-layer nodes aligned to the same entity whose boxes touch.
/// The survivor is the earlier node; it takes the higher confidence, the
/// union box and every child of the absorbed node.
fn merge_overlapping(graph: &mut SceneGraph) {
    loop {
        let mut pair = None;
        'scan: for i in 0..graph.nodes.len() {
            let a = &graph.nodes[i];
            if a.layer == Layer::Primitive || a.entity.is_none() {
                continue;
            }
            for j in i + 1..graph.nodes.len() {
                let b = &graph.nodes[j];
                if b.layer == a.layer && b.entity == a.entity {
                    if let (Some(ba), Some(bb)) = (&a.bbox, &b.bbox) {
                        if ba.intersects(bb) {
                            pair = Some((i, j));
                            break 'scan;
                        }
                    }
                }
            }
        }
        let Some((i, j)) = pair else { return };
        let absorbed = graph.nodes.remove(j);
        let keep = &mut graph.nodes[i];
        keep.confidence = keep.confidence.max(absorbed.confidence);
        keep.bbox = match (keep.bbox, absorbed.bbox) {
            (Some(a), Some(b)) => Some(a.union(&b)),
            (a, b) => a.or(b),
        };
        keep.centroid = keep.bbox.map(|b| b.center());
        let keep_id = keep.id.clone();
        for n in &mut graph.nodes {
            if n.parent.as_deref() == Some(absorbed.id.as_str()) {
                n.parent = Some(keep_id.clone());
            }
        }
    }
}

/// Top-down pruning: merge touching same-entity nodes, drop null-task
/// subtrees, then keep only the most confident node per entity, layer by
/// layer from tasks down to items.
pub fn top_down_prune(graph: &SceneGraph) -> SceneGraph {
    let mut g = graph.clone();
    merge_overlapping(&mut g);
    let null_roots = g
        .nodes
        .iter()
        .filter(|n| n.null)
        .map(|n| n.id.clone())
        .collect();
    remove_subtrees(&mut g, null_roots);
    for layer in LAYERS.iter().rev() {
        let mut best: BTreeMap<&str, &GraphNode> = BTreeMap::new();
        for n in g.layer(*layer) {
            let Some(e) = n.entity.as_deref() else {
                continue;
            };
            match best.get(e) {
                Some(b) if b.confidence >= n.confidence => {}
                _ => {
                    best.insert(e, n);
                }
            }
        }
        let losers = g
            .layer(*layer)
            .filter(|n| n.entity.as_deref().is_some_and(|e| best[e].id != n.id))
            .map(|n| n.id.clone())
            .collect();
        remove_subtrees(&mut g, losers);
    }
    g
}

/// Per item node, keeps the most confident primitive and every primitive
/// whose box touches it, then refits the node's box to what is left.
/// Subtask and task boxes are refit to their children afterwards.
pub fn prune_primitives(graph: &SceneGraph) -> Result<SceneGraph> {
    let mut g = graph.clone();
    let items: Vec<String> = g.layer(Layer::Item).map(|n| n.id.clone()).collect();
    let mut dropped = BTreeSet::new();
    for item in &items {
        let prims: Vec<&GraphNode> = g
            .children(item)
            .filter(|n| n.layer == Layer::Primitive)
            .collect();
        let best = prims
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (i, p)| match acc {
                Some((_, c)) if c >= p.confidence => acc,
                _ => Some((i, p.confidence)),
            })
            .map(|(i, _)| prims[i])
            .ok_or_else(|| Error::Structural(format!("item node `{item}` has no primitives")))?;
        let anchor = best
            .bbox
            .ok_or_else(|| Error::Structural(format!("primitive node `{}` has no box", best.id)))?;
        for p in &prims {
            let touches = p.bbox.is_some_and(|b| b.intersects(&anchor));
            if p.id != best.id && !touches {
                dropped.insert(p.id.clone());
            }
        }
    }
    g.nodes.retain(|n| !dropped.contains(&n.id));
    refit_boxes(&mut g);
    Ok(g)
}

fn refit_boxes(g: &mut SceneGraph) {
    for layer in LAYERS {
        let ids: Vec<String> = g.layer(layer).map(|n| n.id.clone()).collect();
        for id in ids {
            let bbox = Aabb::union_all(g.children(&id).filter_map(|c| c.bbox.as_ref()));
            let node = g.nodes.iter_mut().find(|n| n.id == id).expect("listed");
            node.bbox = bbox;
            node.centroid = bbox.map(|b| b.center());
        }
    }
}

/// Construct, prune top-down, then prune primitives.
pub fn build_graph(
    state: &HibState,
    hierarchy: &TaskHierarchy,
    primitives: &[Primitive],
) -> Result<SceneGraph> {
    let g = bottom_up_construct(state, hierarchy, primitives)?;
    prune_primitives(&top_down_prune(&g))
}
