mod common;

use common::{assert_stochastic, fixture};
use hib_core::graph::build_graph;
use hib_core::hierarchy::{
    normalized, select_relevant_primitives, Aabb, EntityKind, GraphNode, Layer, Primitive,
    SceneGraph, Spatial, TaskEntity, TaskHierarchy, NULL_ITEM_WORDS,
};
use hib_core::io::{read_hierarchy, read_json, read_scene};
use hib_core::solve_hib;
use hib_core::task_update::{
    combine_conditionals, refine_hierarchy, round_problem, run_pipeline, spatial_conditional,
    spatial_table, spatial_update, MockOracle, PipelineOptions, ProposalRule, ScoreRule,
    Suggestion, WordBank,
};
use hib_core::CondTable;
use proptest::prelude::*;

struct Bathroom {
    prims: Vec<Primitive>,
    hierarchy: TaskHierarchy,
    bank: WordBank,
    oracle: MockOracle,
}

fn bathroom() -> Bathroom {
    Bathroom {
        prims: read_scene(&fixture("bathroom_scene.json"))
            .unwrap()
            .primitives,
        hierarchy: read_hierarchy(&fixture("bathroom_hierarchy.json")).unwrap(),
        bank: read_json(&fixture("bathroom_word_bank.json")).unwrap(),
        oracle: read_json(&fixture("bathroom_oracle.json")).unwrap(),
    }
}

fn opts(rounds: usize) -> PipelineOptions {
    PipelineOptions {
        rounds,
        temperature: 0.1,
        ..Default::default()
    }
}

#[test]
fn bathroom_rounds_ground_more_subtasks() {
    let b = bathroom();
    let out = run_pipeline(&b.prims, &b.hierarchy, &b.bank, &b.oracle, &opts(2)).unwrap();
    let counts: Vec<usize> = out
        .rounds
        .iter()
        .map(|r| r.grounded_subtasks.len())
        .collect();
    assert_eq!(counts, [1, 4]);
    assert!(out.rounds[0].hierarchy_changed);
    out.graph.validate().unwrap();
    let again = run_pipeline(&b.prims, &b.hierarchy, &b.bank, &b.oracle, &opts(2)).unwrap();
    assert_eq!(out, again);
}

#[test]
fn one_round_without_refinement_is_a_plain_build() {
    let b = bathroom();
    let silent = MockOracle::default();
    let out = run_pipeline(&b.prims, &b.hierarchy, &b.bank, &silent, &opts(1)).unwrap();

    let null = NULL_ITEM_WORDS.map(|w| normalized(&b.bank.get(w).unwrap().embedding));
    let h = b.hierarchy.clone().with_null_task(null).unwrap();
    let o = opts(1);
    let selected = select_relevant_primitives(
        &b.prims,
        &h.embeddings(EntityKind::Item).unwrap(),
        o.threshold,
    );
    let problem = round_problem(&selected, &h, &o, false).unwrap();
    let (state, _) = solve_hib(&problem, &o.solver).unwrap();
    let owned: Vec<Primitive> = selected.into_iter().cloned().collect();
    assert_eq!(out.graph, build_graph(&state, &h, &owned).unwrap());
    assert!(!out.rounds[0].hierarchy_changed);
}

#[test]
fn silent_oracle_settles_early() {
    let b = bathroom();
    let out = run_pipeline(
        &b.prims,
        &b.hierarchy,
        &b.bank,
        &MockOracle::default(),
        &opts(6),
    )
    .unwrap();
    assert!(out.rounds.len() < 6);
    let last = out.rounds.last().unwrap();
    assert!(!last.hierarchy_changed);
    let more = run_pipeline(
        &b.prims,
        &b.hierarchy,
        &b.bank,
        &MockOracle::default(),
        &opts(out.rounds.len() + 3),
    )
    .unwrap();
    assert_eq!(out.graph, more.graph);
    assert_eq!(out.rounds.len(), more.rounds.len());
}

#[test]
fn zero_rounds_is_rejected() {
    let b = bathroom();
    assert!(run_pipeline(&b.prims, &b.hierarchy, &b.bank, &b.oracle, &opts(0)).is_err());
}

fn node(id: &str, layer: Layer, entity: &str, lo: [f64; 3], hi: [f64; 3]) -> GraphNode {
    let bbox = Aabb::new(lo, hi).unwrap();
    GraphNode {
        id: id.into(),
        layer,
        entity: Some(entity.into()),
        centroid: Some(bbox.center()),
        bbox: Some(bbox),
        cluster: 0,
        parent: None,
        null: false,
        confidence: 1.0,
        primitive: None,
    }
}

fn small_hierarchy() -> TaskHierarchy {
    TaskHierarchy::new(
        vec![
            TaskEntity::new("t", EntityKind::Task, "t").with_children(&["a", "b"]),
            TaskEntity::new("a", EntityKind::Subtask, "a").with_children(&["i"]),
            TaskEntity::new("b", EntityKind::Subtask, "b").with_children(&["j"]),
            TaskEntity::new("i", EntityKind::Item, "i").with_embedding(vec![1.0, 0.0]),
            TaskEntity::new("j", EntityKind::Item, "j").with_embedding(vec![0.0, 1.0]),
        ],
        vec!["t".into()],
        None,
    )
    .unwrap()
}

#[test]
fn spatial_radii_follow_layer_rules() {
    let h = small_hierarchy();
    let g = SceneGraph {
        nodes: vec![
            node("item/0", Layer::Item, "i", [0.0; 3], [3.0, 4.0, 0.0]),
            node("subtask/0", Layer::Subtask, "a", [0.0; 3], [0.0; 3]),
            node(
                "subtask/1",
                Layer::Subtask,
                "b",
                [2.0, 0.0, 0.0],
                [2.0, 0.0, 0.0],
            ),
            node("task/0", Layer::Task, "t", [0.0; 3], [2.0, 0.0, 0.0]),
        ],
    };
    let s = spatial_update(&g, &h).unwrap();
    let r = |id: &str| s.get(id).unwrap().spatial.unwrap().radius;
    assert!((r("i") - 5.0).abs() < 1e-12);
    assert!((r("a") - 2.0).abs() < 1e-12 && (r("b") - 2.0).abs() < 1e-12);
    // alone in its layer: a tenth of the 5-unit scene diagonal
    assert!((r("t") - 0.5).abs() < 1e-12);
    assert!(s.get("j").unwrap().spatial.is_none());
}

#[test]
fn combining_with_flat_spatial_keeps_embedding() {
    let p = CondTable::from_rows(&[vec![0.2, 0.9], vec![0.8, 0.1]]).unwrap();
    let out = combine_conditionals(&CondTable::uniform(2, 2), &p).unwrap();
    assert!(out.max_abs_diff(&p) < 1e-15);
    let h = small_hierarchy();
    let prims: Vec<Primitive> = (0..3)
        .map(|i| {
            let b = Aabb::new([i as f64; 3], [i as f64 + 1.0; 3]).unwrap();
            Primitive {
                id: format!("p{i}"),
                centroid: b.center(),
                bbox: b,
                embedding: vec![1.0, 0.0],
            }
        })
        .collect();
    let refs: Vec<&Primitive> = prims.iter().collect();
    let t = spatial_table(&refs, &h.of_kind(EntityKind::Item)).unwrap();
    assert!(t.max_abs_diff(&CondTable::uniform(2, 3)) < 1e-15);
}

fn suggestion(word: &str) -> Suggestion {
    Suggestion {
        word: word.into(),
        embedding: normalized(&[0.5, 0.5]),
    }
}

proptest! {
    #[test]
    fn spatial_weight_is_continuous_and_falls_off(r in 0.01f64..5.0, d in 0.0f64..20.0, step in 0.0f64..1.0) {
        let s = Spatial { position: [0.0; 3], radius: r };
        let w = |d: f64| spatial_conditional(&[d, 0.0, 0.0], &s).unwrap();
        prop_assert!(w(d) >= w(d + step));
        prop_assert!((0.0..=1.0).contains(&w(d)));
        prop_assert!((w(r * (1.0 - 1e-9)) - w(r * (1.0 + 1e-9))).abs() < 1e-9);
    }

    #[test]
    fn refinement_only_adds(
        scores in prop::collection::vec((0usize..3, 0usize..4, 0.0f64..1.0), 0..12),
        r_s in 0.0f64..1.0,
        r_t in 0.0f64..1.0,
    ) {
        let h = small_hierarchy();
        let ctx = ["t", "a", "b"];
        let words = ["i", "x", "y", "z"];
        let oracle = MockOracle {
            scores: scores
                .iter()
                .map(|&(c, w, s)| ScoreRule { context: ctx[c].into(), item: words[w].into(), score: s })
                .collect(),
            proposals: vec![ProposalRule { task: "t".into(), subtask: "new".into(), items: vec!["y".into(), "z".into()] }],
        };
        let sugg: Vec<Suggestion> = words.iter().map(|w| suggestion(w)).collect();
        let (out, rejected) = refine_hierarchy(&h, &sugg, &oracle, r_s, r_t).unwrap();
        for e in h.entities() {
            prop_assert!(out.get(&e.id).is_some());
        }
        for t in out.of_kind(EntityKind::Task) {
            let texts: Vec<&str> = out.items_under(&t.id).iter().map(|e| e.text.as_str()).collect();
            let mut dedup = texts.clone();
            dedup.sort();
            dedup.dedup();
            prop_assert_eq!(texts.len(), dedup.len());
        }
        prop_assert!(rejected.len() <= sugg.len());
    }

    #[test]
    fn spatial_table_is_stochastic(
        cs in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 1..6),
        pos in prop::array::uniform3(-5.0f64..5.0),
        r in 0.01f64..3.0,
    ) {
        let mut h = small_hierarchy();
        h.set_spatial("i", Some(Spatial { position: pos, radius: r })).unwrap();
        let prims: Vec<Primitive> = cs
            .iter()
            .enumerate()
            .map(|(k, c)| Primitive {
                id: format!("p{k}"),
                centroid: *c,
                bbox: Aabb::new(*c, *c).unwrap(),
                embedding: vec![1.0, 0.0],
            })
            .collect();
        let refs: Vec<&Primitive> = prims.iter().collect();
        assert_stochastic(&spatial_table(&refs, &h.of_kind(EntityKind::Item)).unwrap());
    }
}
