//! Geometric rendering of a symbolic world into frame observations, and
//! synthesis of demonstration recordings from a plan.

use std::collections::BTreeMap;

use super::{FaultConfig, Location, SimError, World, HAND_ID, HUMAN_ZONE_CLASS};
use crate::action::ActionStep;
use crate::scene_graph::{Aabb, DetectedObject, FrameObservation, Recording, HAND_CLASS};

/// Frames emitted per world state in a synthesized demonstration. Any
/// downsampling scale up to this value samples every state at least once.
pub const FRAMES_PER_STATE: u64 = 8;

const SURFACE_SPACING: f64 = 4.0;
const SURFACE_SIZE: [f64; 3] = [3.0, 1.6, 0.75];
const SMALL_CONTAINER: [f64; 3] = [0.25, 0.25, 0.2];
const FLOOR_CONTAINER: [f64; 3] = [0.7, 0.7, 1.2];
const LOOSE_SIZE: [f64; 3] = [0.08, 0.06, 0.05];
const INNER_SIZE: [f64; 3] = [0.05, 0.05, 0.05];
const HAND_REST: [f64; 3] = [0.0, -1.4, 1.3];

fn qualified_offset(q: &str) -> Option<(f64, f64)> {
    Some(match q {
        "left" => (-0.3, 0.2),
        "right" => (0.3, 0.2),
        "front" => (0.0, -0.35),
        "back" => (0.0, 0.55),
        _ => return None,
    })
}

fn on_top(center_xy: (f64, f64), top: f64, size: [f64; 3]) -> Aabb {
    Aabb::new(
        [center_xy.0 - size[0] / 2.0, center_xy.1 - size[1] / 2.0, top],
        [center_xy.0 + size[0] / 2.0, center_xy.1 + size[1] / 2.0, top + size[2]],
    )
}

/// Slot `m` inside a receptacle: a 3-wide grid lifted off the floor so the
/// item never touches whatever the receptacle stands on.
fn inner_slot(container: &Aabb, m: usize) -> Aabb {
    let col = (m % 3) as f64;
    let row = (m / 3) as f64;
    let x = container.min[0] + 0.065 + 0.07 * col;
    let y = container.min[1] + 0.05 + 0.08 * row;
    let z = container.min[2] + 0.05;
    Aabb::new(
        [x - INNER_SIZE[0] / 2.0, y - INNER_SIZE[1] / 2.0, z],
        [x + INNER_SIZE[0] / 2.0, y + INNER_SIZE[1] / 2.0, z + INNER_SIZE[2]],
    )
}

struct Layout {
    surfaces: BTreeMap<String, Aabb>,
    containers: BTreeMap<String, Aabb>,
    zone: Option<Aabb>,
}

fn layout(world: &World) -> Layout {
    let mut surfaces = BTreeMap::new();
    for (i, id) in world.surfaces().keys().enumerate() {
        let cx = i as f64 * SURFACE_SPACING;
        surfaces.insert(
            id.clone(),
            Aabb::new(
                [cx - SURFACE_SIZE[0] / 2.0, -SURFACE_SIZE[1] / 2.0, 0.0],
                [cx + SURFACE_SIZE[0] / 2.0, SURFACE_SIZE[1] / 2.0, SURFACE_SIZE[2]],
            ),
        );
    }
    let mut containers = BTreeMap::new();
    let mut unqualified_slots: BTreeMap<&str, usize> = BTreeMap::new();
    let mut floor_slot = 0usize;
    for (id, c) in world.containers() {
        let aabb = match c.on.as_deref().and_then(|s| surfaces.get(s).map(|b: &Aabb| (s, *b))) {
            Some((s, surface)) => {
                let cx = surface.centroid()[0];
                let offset = c.qualifier.as_deref().and_then(qualified_offset).unwrap_or_else(|| {
                    let k = unqualified_slots.entry(s).or_insert(0);
                    let off = (-1.1 + 0.45 * *k as f64, 0.6);
                    *k += 1;
                    off
                });
                on_top((cx + offset.0, offset.1), surface.max[2], SMALL_CONTAINER)
            }
            None => {
                let x = -3.0 - 1.2 * floor_slot as f64;
                floor_slot += 1;
                on_top((x, 0.0), 0.0, FLOOR_CONTAINER)
            }
        };
        containers.insert(id.clone(), aabb);
    }
    let zone = world.has_human_zone().then(|| {
        let x = surfaces.len().saturating_sub(1) as f64 * SURFACE_SPACING + 2.2;
        on_top((x, 0.0), SURFACE_SIZE[2], [0.5, 0.5, 0.3])
    });
    Layout { surfaces, containers, zone }
}

/// Render the world as a frame observation with axis-aligned boxes whose
/// geometric relations reproduce the world's In / On / Held facts.
pub fn render_frame(world: &World, frame_index: u64) -> FrameObservation {
    let lay = layout(world);
    let mut objects = Vec::new();
    for (id, b) in &lay.surfaces {
        objects.push(DetectedObject::new(id, &world.surfaces()[id], *b));
    }
    for (id, b) in &lay.containers {
        let c = &world.containers()[id];
        let mut d = DetectedObject::new(id, &c.class_label, *b);
        d.state = c.state.map(|s| s.as_str().to_string());
        objects.push(d);
    }
    if let Some(z) = lay.zone {
        objects.push(DetectedObject::new(super::HUMAN_ZONE_ID, HUMAN_ZONE_CLASS, z));
    }
    let hand_box = Aabb::centered(HAND_REST, [0.08, 0.08, 0.08]);
    let mut fill: BTreeMap<String, usize> = BTreeMap::new();
    for (j, (id, o)) in world.objects().iter().enumerate() {
        let aabb = match &o.location {
            Location::OnSurface(s) => {
                let top = lay.surfaces[s];
                let x = top.centroid()[0] - 1.3 + 0.18 * j as f64;
                on_top((x, -0.65), top.max[2], LOOSE_SIZE)
            }
            Location::InContainer(c) => {
                let m = fill.entry(c.clone()).or_insert(0);
                let b = inner_slot(&lay.containers[c], *m);
                *m += 1;
                b
            }
            Location::InHumanZone => {
                let m = fill.entry(super::HUMAN_ZONE_ID.into()).or_insert(0);
                let b = inner_slot(&lay.zone.expect("given objects imply a human zone"), *m);
                *m += 1;
                b
            }
            Location::InGripper => Aabb::centered(
                [HAND_REST[0] + 0.03, HAND_REST[1], HAND_REST[2]],
                INNER_SIZE,
            ),
        };
        objects.push(DetectedObject::new(id, &o.class_label, aabb));
    }
    FrameObservation {
        frame_index,
        objects,
        hand: Some(DetectedObject::new(HAND_ID, HAND_CLASS, hand_box)),
    }
}

/// A demonstration of `plan` starting from `world`: each intermediate state
/// is held for [`FRAMES_PER_STATE`] frames.
pub fn synthesize_demo(
    world: &World,
    plan: &[ActionStep],
    id: &str,
    instruction: Option<&str>,
) -> Result<Recording, SimError> {
    let mut w = world.clone();
    let mut frames = Vec::new();
    let mut index = 0;
    let mut emit = |w: &World, frames: &mut Vec<FrameObservation>| {
        for _ in 0..FRAMES_PER_STATE {
            frames.push(render_frame(w, index));
            index += 1;
        }
    };
    emit(&w, &mut frames);
    for step in plan {
        w.apply(step, &FaultConfig::none())?;
        emit(&w, &mut frames);
    }
    Ok(Recording {
        id: Some(id.to_string()),
        instruction: instruction.map(str::to_string),
        frames,
    })
}
