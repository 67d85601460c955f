use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Container, ContainerState, Location, SimError, World, WorldObject, HAND_ID, HUMAN_ZONE_ID};

pub const SCENARIO_NAMES: [&str; 4] = ["desk", "kitchen", "toolbox", "tidy"];

const VARIATION_SALT: u64 = 0x05ee_dd15_c0b7_ec75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub id: String,
    #[serde(rename = "class")]
    pub class_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerSpec {
    pub id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    /// Absent for open-topped containers.
    #[serde(default)]
    pub state: Option<ContainerState>,
    #[serde(default)]
    pub contents: Vec<String>,
    #[serde(default)]
    pub qualifier: Option<String>,
    #[serde(default)]
    pub on: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    /// Surface id, container id, `human_zone` or `hand`. May be omitted
    /// when the object is listed in a container's contents.
    #[serde(default)]
    pub location: Option<String>,
}

/// Scenario file: fixtures, objects and the legal alternative placements
/// of distractor objects used to vary initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub surfaces: Vec<SurfaceSpec>,
    #[serde(default)]
    pub containers: Vec<ContainerSpec>,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub human_zone: bool,
    #[serde(default)]
    pub distractors: BTreeMap<String, Vec<String>>,
}

pub fn bundled_scenario(name: &str) -> Option<Scenario> {
    let text = match name {
        "desk" => include_str!("../../fixtures/scenarios/desk.json"),
        "kitchen" => include_str!("../../fixtures/scenarios/kitchen.json"),
        "toolbox" => include_str!("../../fixtures/scenarios/toolbox.json"),
        "tidy" => include_str!("../../fixtures/scenarios/tidy.json"),
        _ => return None,
    };
    Some(serde_json::from_str(text).expect("bundled scenario parses"))
}

/// Load a scenario file and build the world for `variation_seed`.
pub fn reset(scenario_file: &Path, variation_seed: u64) -> Result<World, SimError> {
    let text = std::fs::read_to_string(scenario_file)
        .map_err(|e| SimError::InvalidScenario(format!("{}: {e}", scenario_file.display())))?;
    let scenario: Scenario =
        serde_json::from_str(&text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
    scenario.instantiate(variation_seed)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))
    }

    pub fn resolve_location(&self, place: &str) -> Result<Location, SimError> {
        if self.surfaces.iter().any(|s| s.id == place) {
            Ok(Location::OnSurface(place.into()))
        } else if self.containers.iter().any(|c| c.id == place) {
            Ok(Location::InContainer(place.into()))
        } else if place == HUMAN_ZONE_ID && self.human_zone {
            Ok(Location::InHumanZone)
        } else if place == HAND_ID {
            Ok(Location::InGripper)
        } else {
            Err(SimError::InvalidScenario(format!("unknown location `{place}`")))
        }
    }

    fn base_world(&self) -> Result<World, SimError> {
        let surfaces: BTreeMap<String, String> =
            self.surfaces.iter().map(|s| (s.id.clone(), s.class_label.clone())).collect();
        let mut containers = BTreeMap::new();
        let mut listed: BTreeMap<&str, &str> = BTreeMap::new();
        for c in &self.containers {
            if let Some(q) = &c.qualifier {
                if super::qualifier_position(q).is_none() {
                    return Err(SimError::InvalidScenario(format!("unknown qualifier `{q}` on `{}`", c.id)));
                }
            }
            for item in &c.contents {
                if listed.insert(item, &c.id).is_some() {
                    return Err(SimError::InvalidScenario(format!("`{item}` listed in two containers")));
                }
            }
            let container = Container {
                class_label: c.class_label.clone(),
                state: c.state,
                on: c.on.clone(),
                qualifier: c.qualifier.clone(),
            };
            if containers.insert(c.id.clone(), container).is_some() {
                return Err(SimError::InvalidScenario(format!("duplicate container `{}`", c.id)));
            }
        }
        let mut objects = BTreeMap::new();
        for o in &self.objects {
            let from_contents = listed.remove(o.id.as_str()).map(|c| Location::InContainer(c.into()));
            let location = match (&o.location, from_contents) {
                (Some(place), Some(listed_loc)) => {
                    let loc = self.resolve_location(place)?;
                    if loc != listed_loc {
                        return Err(SimError::InvalidScenario(format!("conflicting locations for `{}`", o.id)));
                    }
                    loc
                }
                (Some(place), None) => self.resolve_location(place)?,
                (None, Some(loc)) => loc,
                (None, None) => return Err(SimError::InvalidScenario(format!("object `{}` has no location", o.id))),
            };
            let obj = WorldObject { class_label: o.class_label.clone(), location };
            if objects.insert(o.id.clone(), obj).is_some() {
                return Err(SimError::InvalidScenario(format!("duplicate object `{}`", o.id)));
            }
        }
        if let Some((item, _)) = listed.into_iter().next() {
            return Err(SimError::InvalidScenario(format!("container lists unknown object `{item}`")));
        }
        World::build(&self.name, surfaces, containers, objects, self.human_zone)
    }

    /// All legal distractor placements in a fixed pseudo-random order.
    /// Variation seed `s` selects entry `s mod len`.
    pub fn variations(&self) -> Result<Vec<BTreeMap<String, String>>, SimError> {
        let mut combos: Vec<BTreeMap<String, String>> = vec![BTreeMap::new()];
        for (object, places) in &self.distractors {
            if !self.objects.iter().any(|o| &o.id == object) {
                return Err(SimError::InvalidScenario(format!("distractor `{object}` is not an object")));
            }
            if places.is_empty() {
                return Err(SimError::InvalidScenario(format!("distractor `{object}` has no placements")));
            }
            let unique: BTreeSet<&String> = places.iter().collect();
            let mut next = Vec::new();
            for combo in &combos {
                for place in &unique {
                    self.resolve_location(place)?;
                    let mut c = combo.clone();
                    c.insert(object.clone(), (*place).clone());
                    next.push(c);
                }
            }
            combos = next;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(VARIATION_SALT);
        combos.shuffle(&mut rng);
        Ok(combos)
    }

    pub fn instantiate(&self, variation_seed: u64) -> Result<World, SimError> {
        self.instantiate_with(variation_seed, &BTreeMap::new(), &BTreeMap::new())
    }

    /// Build the world for a variation, then apply per-task overrides of
    /// object locations and container states.
    pub fn instantiate_with(
        &self,
        variation_seed: u64,
        locations: &BTreeMap<String, String>,
        states: &BTreeMap<String, ContainerState>,
    ) -> Result<World, SimError> {
        let mut world = self.base_world()?;
        let variations = self.variations()?;
        let combo = &variations[(variation_seed % variations.len() as u64) as usize];
        for (object, place) in combo.iter().chain(locations.iter()) {
            let loc = self.resolve_location(place)?;
            if !world.objects.contains_key(object) {
                return Err(SimError::InvalidScenario(format!("override names unknown object `{object}`")));
            }
            world.set_location(object, loc)?;
        }
        for (container, state) in states {
            world.set_container_state(container, *state)?;
        }
        Ok(world)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_are_valid() {
        for name in SCENARIO_NAMES {
            let s = bundled_scenario(name).unwrap();
            assert_eq!(s.name, name);
            for seed in 0..5 {
                s.instantiate(seed).unwrap().check_invariants().unwrap();
            }
        }
    }

    #[test]
    fn same_seed_same_world() {
        let s = bundled_scenario("kitchen").unwrap();
        assert_eq!(s.instantiate(3).unwrap(), s.instantiate(3).unwrap());
    }

    #[test]
    fn object_in_missing_container_is_rejected() {
        let text = r#"{"name":"x","surfaces":[{"id":"table","class":"table"}],
            "objects":[{"id":"pen","class":"pen","location":"drawer"}]}"#;
        let s = Scenario::from_json(text).unwrap();
        assert!(matches!(s.instantiate(0), Err(SimError::InvalidScenario(_))));
        let text = r#"{"name":"x","surfaces":[{"id":"table","class":"table"}],
            "containers":[{"id":"box","class":"box","state":"closed","contents":["ghost"]}]}"#;
        assert!(Scenario::from_json(text).unwrap().instantiate(0).is_err());
    }
}
