use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use digknow::action::{ActionStep, Verb};
use digknow::distiller::select_keyframes;
use digknow::eval::{levenshtein, normalized_levenshtein};
use digknow::scene_graph::{
    compute_relations, graphs_equal, parse_text, serialize_compact, serialize_text, GeometryParams, Relation, SceneGraph,
};
use digknow::simulator::{bundled_scenario, render_frame, FaultConfig, World, SCENARIO_NAMES};

/// A world reached by `n` random feasible actions from a bundled scenario.
fn random_world(scenario: usize, variation: u64, n: usize, seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = bundled_scenario(SCENARIO_NAMES[scenario]).unwrap().instantiate(variation).unwrap();
    let objects: Vec<String> = w.objects().keys().cloned().collect();
    let containers: Vec<String> = w.containers().keys().cloned().collect();
    let surfaces: Vec<String> = w.surfaces().keys().cloned().collect();
    let mut applied = 0;
    for _ in 0..n * 20 {
        if applied == n {
            break;
        }
        let o = objects.choose(&mut rng).unwrap();
        let step = match rng.random_range(0..6) {
            0 => ActionStep::pick(o),
            1 if !containers.is_empty() => ActionStep::place_in(o, containers.choose(&mut rng).unwrap()),
            2 => ActionStep::place_on(o, surfaces.choose(&mut rng).unwrap()),
            3 if !containers.is_empty() => ActionStep::open(containers.choose(&mut rng).unwrap()),
            4 if !containers.is_empty() => ActionStep::close(containers.choose(&mut rng).unwrap()),
            _ => ActionStep::give(o),
        };
        if w.apply(&step, &FaultConfig::none()).is_ok() {
            applied += 1;
        }
    }
    w
}

fn world_strategy() -> impl Strategy<Value = World> {
    (0..SCENARIO_NAMES.len(), 0u64..5, 0usize..12, any::<u64>()).prop_map(|(s, v, n, seed)| random_world(s, v, n, seed))
}

fn support_edges(g: &SceneGraph) -> Vec<String> {
    g.edges()
        .iter()
        .filter(|e| matches!(e.relation, Relation::In | Relation::On | Relation::Held))
        .map(|e| e.to_string())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn text_serialization_round_trips(w in world_strategy()) {
        let g = w.observe();
        let back = parse_text(&serialize_text(&g)).unwrap();
        prop_assert!(graphs_equal(&g, &back));
        let compact = parse_text(&serialize_compact(&g)).unwrap();
        prop_assert!(graphs_equal(&g, &compact));
    }

    #[test]
    fn worlds_rebuild_from_their_graphs(w in world_strategy()) {
        let g = w.observe();
        let rebuilt = World::from_graph(&g).unwrap();
        prop_assert_eq!(rebuilt.observe(), g);
    }

    #[test]
    fn geometry_recovers_symbolic_support(w in world_strategy(), frame in 0u64..1000) {
        let geo = compute_relations(&render_frame(&w, frame), &GeometryParams::default()).unwrap();
        let sym = w.observe();
        prop_assert_eq!(support_edges(&geo), support_edges(&sym));
        prop_assert_eq!(geo.nodes(), sym.nodes());
    }

    #[test]
    fn keyframes_start_at_zero_and_always_change(seq in prop::collection::vec((0u64..2, 0usize..3), 1..30)) {
        let graphs: Vec<SceneGraph> = seq.iter().map(|&(v, n)| random_world(0, v, n, 7).observe()).collect();
        let keys = select_keyframes(&graphs).unwrap();
        prop_assert_eq!(keys[0].0, 0);
        for pair in keys.windows(2) {
            prop_assert!(pair[0].0 < pair[1].0);
            prop_assert!(!graphs_equal(&pair[0].1, &pair[1].1));
        }
        for (i, g) in &keys {
            prop_assert!(graphs_equal(g, &graphs[*i]));
        }
    }

    #[test]
    fn edit_distance_is_a_metric(
        a in prop::collection::vec(0u8..4, 0..8),
        b in prop::collection::vec(0u8..4, 0..8),
        c in prop::collection::vec(0u8..4, 0..8),
    ) {
        let ab = levenshtein(&a, &b);
        prop_assert_eq!(ab, levenshtein(&b, &a));
        prop_assert_eq!(ab == 0, a == b);
        prop_assert!(ab <= a.len().max(b.len()));
        prop_assert!(ab >= a.len().abs_diff(b.len()));
        prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
    }

    #[test]
    fn normalized_score_is_bounded(
        a in prop::collection::vec(0usize..3, 0..8),
        b in prop::collection::vec(0usize..3, 0..8),
    ) {
        let to_steps = |v: &[usize]| v.iter().map(|&k| ActionStep::new(Verb::ALL[k], vec!["x".into(); Verb::ALL[k].arity()]).unwrap()).collect::<Vec<_>>();
        let s = normalized_levenshtein(&to_steps(&a), &to_steps(&b));
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s == 1.0, a == b);
    }
}
