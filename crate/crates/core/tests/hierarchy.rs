mod common;

use common::{assert_stochastic, fixture, table};
use hib_core::hierarchy::{
    embedding_conditional, hierarchy_step_conditional, lift_conditional, normalized,
    select_relevant_primitives, Aabb, EntityKind, Membership, Primitive, TaskEntity, TaskHierarchy,
};
use hib_core::io::read_json;
use hib_core::{CondTable, Error};
use proptest::prelude::*;

#[derive(serde::Deserialize)]
struct Steps {
    objects: hib_core::io::MatrixFile,
    subtasks_given_objects: hib_core::io::MatrixFile,
}

fn prim(id: &str, emb: &[f64]) -> Primitive {
    Primitive {
        id: id.into(),
        centroid: [0.5; 3],
        bbox: Aabb::new([0.0; 3], [1.0; 3]).unwrap(),
        embedding: normalized(emb),
    }
}

/// Unit vector at angle `acos(c)` from the first axis.
fn at_cos(c: f64) -> Vec<f64> {
    vec![c, (1.0 - c * c).sqrt(), 0.0]
}

#[test]
fn tutorial_lift_of_subtask_over_objects() {
    let steps: Steps = read_json(&fixture("tutorial_steps.json")).unwrap();
    let lifted = lift_conditional(
        &steps.objects.to_table("objects").unwrap(),
        &steps.subtasks_given_objects.to_table("subtasks").unwrap(),
    )
    .unwrap();
    // A: .8*.7 + .2*.1 + .1*.1 + .1*.1; B: .1*.7 + .7*.1 + .1*.1 + .1*.1
    for (i, w) in [0.60, 0.16, 0.24].into_iter().enumerate() {
        assert!((lifted.get(i, 0) - w).abs() < 1e-12);
    }
}

#[test]
fn identity_and_uniform_steps() {
    let lower = CondTable::from_rows(&[vec![0.7, 0.2], vec![0.3, 0.8]]).unwrap();
    assert_eq!(
        lift_conditional(&lower, &CondTable::identity(2)).unwrap(),
        lower
    );
    let flat = lift_conditional(&lower, &CondTable::uniform(3, 2)).unwrap();
    assert!(flat.max_abs_diff(&CondTable::uniform(3, 2)) < 1e-15);
}

#[test]
fn planted_softmax_matches_direct_evaluation() {
    let items = [at_cos(1.0), at_cos(0.2), vec![0.0, 0.0, 1.0]];
    let prims = [
        at_cos(0.9),
        at_cos(0.1),
        normalized(&[0.0, 1.0, 1.0]),
        at_cos(-0.5),
    ];
    let t = embedding_conditional(&prims, &items, 0.5).unwrap();
    for (j, p) in prims.iter().enumerate() {
        let logits: Vec<f64> = items
            .iter()
            .map(|i| i.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() / 0.5)
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for (i, l) in logits.iter().enumerate() {
            assert!((t.get(i, j) - l.exp() / z).abs() < 1e-12);
        }
    }
    let empty: [Vec<f64>; 0] = [];
    assert!(embedding_conditional(&prims, &empty, 1.0).is_err());
}

#[test]
fn planted_similarities_against_threshold() {
    let items = [vec![1.0, 0.0, 0.0]];
    let prims = [
        prim("a", &at_cos(0.85)),
        prim("b", &at_cos(0.79)),
        prim("c", &at_cos(0.81)),
    ];
    let picked: Vec<&str> = select_relevant_primitives(&prims, &items, 0.8)
        .iter()
        .map(|p| p.id.as_str())
        .collect();
    assert_eq!(picked, ["a", "c"]);
    assert!(select_relevant_primitives(&prims, &items, 1.0 - 1e-9).is_empty());
    let same = [prim("same", &[1.0, 0.0, 0.0])];
    assert_eq!(select_relevant_primitives(&same, &items, 0.8).len(), 1);
}

#[test]
fn two_tasks_with_two_subtasks_each() {
    let mut ents = Vec::new();
    for t in ["t1", "t2"] {
        let subs = [format!("{t}/a"), format!("{t}/b")];
        for s in &subs {
            ents.push(TaskEntity::new(s, EntityKind::Subtask, s));
        }
        let refs: Vec<&str> = subs.iter().map(String::as_str).collect();
        ents.push(TaskEntity::new(t, EntityKind::Task, t).with_children(&refs));
    }
    let h = TaskHierarchy::new(ents, vec!["t1".into(), "t2".into()], None).unwrap();
    let step =
        hierarchy_step_conditional(&h, EntityKind::Subtask, EntityKind::Task, Membership::Hard)
            .unwrap();
    assert_eq!(
        step.to_rows(),
        vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]]
    );
}

#[test]
fn validation_names_the_offender() {
    let kind_swap = TaskHierarchy::new(
        vec![
            TaskEntity::new("t", EntityKind::Task, "t").with_children(&["i"]),
            TaskEntity::new("i", EntityKind::Item, "i"),
        ],
        vec!["t".into()],
        None,
    );
    assert!(matches!(kind_swap, Err(Error::Hierarchy { ref id, .. }) if id == "i" || id == "t"));
    let cycle = TaskHierarchy::new(
        vec![
            TaskEntity::new("t", EntityKind::Task, "t").with_children(&["s"]),
            TaskEntity::new("s", EntityKind::Subtask, "s").with_children(&["t"]),
        ],
        vec!["t".into()],
        None,
    );
    assert!(cycle.is_err());
    let again = TaskHierarchy::new(
        vec![
            TaskEntity::new("t", EntityKind::Task, "t").with_children(&["s"]),
            TaskEntity::new("s", EntityKind::Subtask, "s").with_children(&["t"]),
        ],
        vec!["t".into()],
        None,
    );
    assert_eq!(
        format!("{:?}", cycle.unwrap_err()),
        format!("{:?}", again.unwrap_err())
    );
}

fn unit_vectors(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), n).prop_map(|vs| {
        vs.into_iter()
            .map(|v| {
                if v.iter().all(|x| x.abs() < 1e-3) {
                    vec![1.0, 0.0, 0.0, 0.0]
                } else {
                    normalized(&v)
                }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn softmax_is_stochastic_and_permutation_equivariant(
        items in (1..=5usize).prop_flat_map(unit_vectors),
        prims in (1..=5usize).prop_flat_map(unit_vectors),
        temperature in 0.05f64..2.0,
        rot in 0usize..5,
    ) {
        let t = embedding_conditional(&prims, &items, temperature).unwrap();
        assert_stochastic(&t);
        let mut shuffled = items.clone();
        shuffled.rotate_left(rot % items.len());
        let s = embedding_conditional(&prims, &shuffled, temperature).unwrap();
        for i in 0..items.len() {
            let from = (i + rot % items.len()) % items.len();
            for j in 0..prims.len() {
                prop_assert!((s.get(i, j) - t.get(from, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lifting_stays_stochastic(
        (lower, step) in (1..=5usize, 1..=5usize, 1..=5usize).prop_flat_map(|(a, b, c)| (table(a, b), table(c, a)))
    ) {
        assert_stochastic(&lift_conditional(&lower, &step).unwrap());
    }

    #[test]
    fn raising_the_threshold_never_adds(
        items in (1..=3usize).prop_flat_map(unit_vectors),
        embs in (1..=8usize).prop_flat_map(unit_vectors),
        lo in -1.0f64..1.0,
        gap in 0.0f64..1.0,
    ) {
        let prims: Vec<Primitive> = embs.iter().enumerate().map(|(i, e)| prim(&format!("p{i}"), e)).collect();
        let low: Vec<&str> = select_relevant_primitives(&prims, &items, lo).iter().map(|p| p.id.as_str()).collect();
        let high = select_relevant_primitives(&prims, &items, (lo + gap).min(1.0));
        prop_assert!(high.iter().all(|p| low.contains(&p.id.as_str())));
    }
}
