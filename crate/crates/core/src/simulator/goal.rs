use serde::{Deserialize, Serialize};

use super::{ContainerState, Location, World};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalPlace {
    In(String),
    On(String),
    Held,
    Given,
}

/// One literal over the final state. `object` matches an instance id or,
/// failing that, any instance of the named class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GoalLiteral {
    At { object: String, place: GoalPlace },
    ContainerState { container: String, state: ContainerState },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalSpec {
    pub literals: Vec<GoalLiteral>,
}

impl GoalSpec {
    pub fn new(literals: Vec<GoalLiteral>) -> Self {
        GoalSpec { literals }
    }
}

fn place_holds(loc: &Location, place: &GoalPlace) -> bool {
    match (loc, place) {
        (Location::InContainer(c), GoalPlace::In(want)) => c == want,
        (Location::OnSurface(s), GoalPlace::On(want)) => s == want,
        (Location::InGripper, GoalPlace::Held) => true,
        (Location::InHumanZone, GoalPlace::Given) => true,
        _ => false,
    }
}

fn literal_holds(world: &World, literal: &GoalLiteral) -> bool {
    match literal {
        GoalLiteral::At { object, place } => {
            if let Some(o) = world.objects().get(object) {
                return place_holds(&o.location, place);
            }
            world
                .objects()
                .values()
                .any(|o| &o.class_label == object && place_holds(&o.location, place))
        }
        GoalLiteral::ContainerState { container, state } => world.container_state(container) == Some(*state),
    }
}

/// True iff every literal holds; the empty conjunction is vacuously true.
pub fn goal_satisfied(world: &World, goal: &GoalSpec) -> bool {
    goal.literals.iter().all(|l| literal_holds(world, l))
}

#[cfg(test)]
mod tests {
    use super::super::{bundled_scenario, FaultConfig};
    use super::*;
    use crate::action::ActionStep;
    use std::collections::BTreeMap;

    fn task1_goal() -> GoalSpec {
        GoalSpec::new(vec![
            GoalLiteral::At { object: "pen".into(), place: GoalPlace::In("right_drawer".into()) },
            GoalLiteral::ContainerState { container: "right_drawer".into(), state: ContainerState::Closed },
        ])
    }

    #[test]
    fn pre_opened_drawer_task() {
        let states = BTreeMap::from([("right_drawer".to_string(), ContainerState::Open)]);
        let mut w = bundled_scenario("desk")
            .unwrap()
            .instantiate_with(0, &BTreeMap::new(), &states)
            .unwrap();
        assert!(!goal_satisfied(&w, &task1_goal()));
        for step in [
            ActionStep::pick("pen"),
            ActionStep::place_in("pen", "right_drawer"),
            ActionStep::close("right_drawer"),
        ] {
            assert!(w.apply(&step, &FaultConfig::none()).unwrap().success);
        }
        assert!(goal_satisfied(&w, &task1_goal()));
    }

    #[test]
    fn empty_goal_is_true() {
        let w = bundled_scenario("desk").unwrap().instantiate(0).unwrap();
        assert!(goal_satisfied(&w, &GoalSpec::default()));
    }

    #[test]
    fn class_literal_matches_any_instance() {
        let w = bundled_scenario("desk").unwrap().instantiate(0).unwrap();
        let g = GoalSpec::new(vec![GoalLiteral::At { object: "pen".into(), place: GoalPlace::On("table".into()) }]);
        assert!(goal_satisfied(&w, &g));
        let json = serde_json::to_string(&task1_goal()).unwrap();
        assert_eq!(
            json,
            r#"[{"kind":"at","object":"pen","place":{"in":"right_drawer"}},{"kind":"container_state","container":"right_drawer","state":"closed"}]"#
        );
    }
}
