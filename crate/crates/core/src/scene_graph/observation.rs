use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SceneGraphError;

/// Axis-aligned box in the world frame (meters, z-up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    /// Box centered at `center` with the given full extents.
    pub fn centered(center: [f64; 3], size: [f64; 3]) -> Self {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for k in 0..3 {
            min[k] = center[k] - size[k] / 2.0;
            max[k] = center[k] + size[k] / 2.0;
        }
        Aabb { min, max }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|k| self.min[k] <= self.max[k] && self.min[k].is_finite() && self.max[k].is_finite())
    }

    pub fn centroid(&self) -> [f64; 3] {
        [
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
            (self.min[2] + self.max[2]) / 2.0,
        ]
    }

    pub fn half_extents(&self) -> [f64; 3] {
        [
            (self.max[0] - self.min[0]) / 2.0,
            (self.max[1] - self.min[1]) / 2.0,
            (self.max[2] - self.min[2]) / 2.0,
        ]
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|k| self.max[k] - self.min[k]).product()
    }

    pub fn intersection_volume(&self, other: &Aabb) -> f64 {
        (0..3)
            .map(|k| (self.max[k].min(other.max[k]) - self.min[k].max(other.min[k])).max(0.0))
            .product()
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|k| other.min[k] >= self.min[k] && other.max[k] <= self.max[k])
    }

    /// Horizontal footprints overlap with positive area.
    pub fn footprint_overlaps(&self, other: &Aabb) -> bool {
        (0..2).all(|k| self.min[k].max(other.min[k]) < self.max[k].min(other.max[k]))
    }

    pub fn translated(&self, offset: [f64; 3]) -> Aabb {
        let mut out = *self;
        for (k, d) in offset.iter().enumerate() {
            out.min[k] += d;
            out.max[k] += d;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    #[serde(rename = "id")]
    pub instance_id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    #[serde(default)]
    pub state: Option<String>,
    pub aabb: Aabb,
}

impl DetectedObject {
    pub fn new(id: &str, class_label: &str, aabb: Aabb) -> Self {
        DetectedObject {
            instance_id: id.to_string(),
            class_label: class_label.to_string(),
            state: None,
            aabb,
        }
    }

    pub fn with_state(mut self, state: &str) -> Self {
        self.state = Some(state.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObservation {
    pub frame_index: u64,
    pub objects: Vec<DetectedObject>,
    #[serde(default)]
    pub hand: Option<DetectedObject>,
}

/// One demonstration recording, the on-disk frame-observation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    pub frames: Vec<FrameObservation>,
}

impl Recording {
    pub fn validate(&self) -> Result<(), SceneGraphError> {
        for pair in self.frames.windows(2) {
            if pair[1].frame_index <= pair[0].frame_index {
                return Err(SceneGraphError::FrameOrder {
                    prev: pair[0].frame_index,
                    next: pair[1].frame_index,
                });
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Recording, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Recording> {
        let text = std::fs::read_to_string(path)?;
        let rec: Recording = Recording::from_json(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        rec.validate()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(rec)
    }
}
