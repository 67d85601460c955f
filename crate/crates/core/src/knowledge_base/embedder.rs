use crate::scene_graph::FrameObservation;

/// Maps a frame to a fixed-dimension visual key.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, frame: &FrameObservation) -> Vec<f64>;
}

/// Classes known to the default embedder, one slot each.
pub const DEFAULT_VOCABULARY: [&str; 29] = [
    "apple", "banana", "bottle", "bowl", "box", "cake", "chips", "cookie", "counter", "cup",
    "drawer", "eraser", "fridge", "human zone", "knife", "lunch box", "microwave", "milk",
    "pen", "pencil case", "phone", "pincers", "plate", "rag", "ruler", "sandwich",
    "screwdriver", "table", "tape",
];

/// Per-class object counts over a fixed vocabulary, L2-normalized.
/// Classes outside the vocabulary and the hand are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct BagOfClasses {
    vocabulary: Vec<String>,
}

impl BagOfClasses {
    pub const NAME: &'static str = "bag_of_classes";

    pub fn new(vocabulary: impl IntoIterator<Item = impl Into<String>>) -> Self {
        BagOfClasses { vocabulary: vocabulary.into_iter().map(Into::into).collect() }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }
}

impl Default for BagOfClasses {
    fn default() -> Self {
        BagOfClasses::new(DEFAULT_VOCABULARY)
    }
}

impl Embedder for BagOfClasses {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dimension(&self) -> usize {
        self.vocabulary.len()
    }

    fn embed(&self, frame: &FrameObservation) -> Vec<f64> {
        let mut v = vec![0.0; self.vocabulary.len()];
        for obj in &frame.objects {
            if let Some(i) = self.vocabulary.iter().position(|c| *c == obj.class_label) {
                v[i] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_graph::{Aabb, DetectedObject};

    #[test]
    fn bag_counts_and_normalizes() {
        let b = Aabb::centered([0.0; 3], [0.1; 3]);
        let frame = FrameObservation {
            frame_index: 0,
            objects: vec![
                DetectedObject::new("a", "pen", b),
                DetectedObject::new("b", "pen", b),
                DetectedObject::new("c", "ruler", b),
                DetectedObject::new("d", "spaceship", b),
            ],
            hand: None,
        };
        let e = BagOfClasses::default();
        let v = e.embed(&frame);
        assert_eq!(v.len(), 29);
        let pen = DEFAULT_VOCABULARY.iter().position(|c| *c == "pen").unwrap();
        let ruler = DEFAULT_VOCABULARY.iter().position(|c| *c == "ruler").unwrap();
        assert!((v[pen] - 2.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((v[ruler] - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_similarity_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        let empty = FrameObservation { frame_index: 0, objects: vec![], hand: None };
        assert!(BagOfClasses::default().embed(&empty).iter().all(|x| *x == 0.0));
    }
}
