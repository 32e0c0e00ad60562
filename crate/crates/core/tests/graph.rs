mod common;

use common::fixture;
use hib_core::graph::{bottom_up_construct, build_graph, confidence, top_down_prune};
use hib_core::hierarchy::{
    Aabb, EntityKind, GraphNode, Layer, Primitive, SceneGraph, TaskEntity, TaskHierarchy,
};
use hib_core::io::{read_hierarchy, read_json, read_scene, ProblemFile};
use hib_core::{solve_hib, CondTable, Dist, HibProblem, HibState};
use proptest::prelude::*;

fn tutorial_graph(prune: bool) -> (SceneGraph, TaskHierarchy) {
    let f: ProblemFile = read_json(&fixture("tutorial_problem.json")).unwrap();
    let (state, _) = solve_hib(&f.to_problem().unwrap(), &f.options()).unwrap();
    let h = read_hierarchy(&fixture("tutorial_hierarchy.json")).unwrap();
    let scene = read_scene(&fixture("tutorial_scene.json")).unwrap();
    let g = if prune {
        build_graph(&state, &h, &scene.primitives).unwrap()
    } else {
        bottom_up_construct(&state, &h, &scene.primitives).unwrap()
    };
    (g, h)
}

fn entity<'a>(g: &'a SceneGraph, id: &str) -> &'a str {
    g.node(id).and_then(|n| n.entity.as_deref()).unwrap()
}

#[test]
fn tutorial_graph_matches_the_worked_hierarchy() {
    let (g, _) = tutorial_graph(false);
    g.validate().unwrap();
    let items: Vec<&GraphNode> = g.layer(Layer::Item).collect();
    assert_eq!(items.len(), 4);
    let item_of = |x: usize| {
        g.node(&format!("primitive/{x}"))
            .unwrap()
            .parent
            .clone()
            .unwrap()
    };
    assert_eq!(item_of(2), item_of(3));
    let labels: Vec<&str> = (0..5).map(|x| entity(&g, &item_of(x))).collect();
    assert_eq!(labels, ["p", "p", "s", "s", "q"]);
    let sub = |x: usize| g.node(&item_of(x)).unwrap().parent.clone().unwrap();
    let subs: Vec<&str> = (0..5).map(|x| entity(&g, &sub(x))).collect();
    assert_eq!(subs, ["A", "A", "C", "C", "B"]);
    let task = |x: usize| entity(&g, g.node(&sub(x)).unwrap().parent.as_deref().unwrap());
    assert_eq!(
        (0..5).map(task).collect::<Vec<_>>(),
        ["Gamma", "Gamma", "Omega", "Omega", "Omega"]
    );
}

#[test]
fn tutorial_subtask_confidence_is_bayes_inversion() {
    let f: ProblemFile = read_json(&fixture("tutorial_problem.json")).unwrap();
    let (state, _) = solve_hib(&f.to_problem().unwrap(), &f.options()).unwrap();
    let (g, _) = tutorial_graph(false);
    let node = g
        .layer(Layer::Subtask)
        .find(|n| n.entity.as_deref() == Some("B"))
        .unwrap();
    let (dec, m) = (state.decoder(2), state.marginal(2));
    // B is row 1 of the subtask decoder
    let pb: f64 = (0..m.len()).map(|s| dec.get(1, s) * m.get(s)).sum();
    let want = dec.get(1, node.cluster) * m.get(node.cluster) / pb;
    assert!((node.confidence - want).abs() < 1e-12);
    assert!((node.confidence - 0.42).abs() < 0.01);
}

#[test]
fn tutorial_pruning_keeps_one_node_per_entity() {
    let (g, _) = tutorial_graph(true);
    let mut seen = std::collections::BTreeSet::new();
    for n in &g.nodes {
        if let Some(e) = &n.entity {
            assert!(seen.insert(e.clone()), "{e} twice");
        }
    }
    assert_eq!(top_down_prune(&g), g);
}

#[test]
fn single_cluster_layers_form_a_chain() {
    let h = TaskHierarchy::new(
        vec![
            TaskEntity::new("t", EntityKind::Task, "t").with_children(&["s"]),
            TaskEntity::new("s", EntityKind::Subtask, "s").with_children(&["i"]),
            TaskEntity::new("i", EntityKind::Item, "i"),
        ],
        vec!["t".into()],
        None,
    )
    .unwrap();
    let all = CondTable::uniform(1, 3);
    let p = HibProblem::new(
        Dist::uniform(3),
        vec![all.clone(), all.clone(), all.clone()],
        Some(vec![1, 1, 1]),
    )
    .unwrap();
    let s = HibState::from_encoders(
        &p,
        vec![all, CondTable::identity(1), CondTable::identity(1)],
    )
    .unwrap();
    let prims: Vec<Primitive> = (0..3)
        .map(|i| {
            let b = Aabb::new([i as f64; 3], [i as f64 + 0.5; 3]).unwrap();
            Primitive {
                id: format!("x{i}"),
                centroid: b.center(),
                bbox: b,
                embedding: vec![1.0],
            }
        })
        .collect();
    let g = bottom_up_construct(&s, &h, &prims).unwrap();
    let ids: Vec<(&str, Option<&str>)> = g
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), n.parent.as_deref()))
        .collect();
    assert_eq!(
        ids,
        [
            ("primitive/0", Some("item/0")),
            ("primitive/1", Some("item/0")),
            ("primitive/2", Some("item/0")),
            ("item/0", Some("subtask/0")),
            ("subtask/0", Some("task/0")),
            ("task/0", None),
        ]
    );
    assert_eq!(
        g.node("task/0").unwrap().bbox,
        Aabb::new([0.0; 3], [2.5; 3]).ok()
    );
}

#[test]
fn empty_scene_gives_empty_graph() {
    let f: ProblemFile = read_json(&fixture("tutorial_problem.json")).unwrap();
    let (state, _) = solve_hib(&f.to_problem().unwrap(), &f.options()).unwrap();
    let h = read_hierarchy(&fixture("tutorial_hierarchy.json")).unwrap();
    assert!(build_graph(&state, &h, &[]).unwrap().nodes.is_empty());
}

proptest! {
    #[test]
    fn confidence_under_independence_is_the_prior(pt in 0.01f64..1.0, ps in 0.0f64..1.0) {
        prop_assert!((confidence(pt, ps, pt).unwrap() - ps).abs() < 1e-12);
    }
}
