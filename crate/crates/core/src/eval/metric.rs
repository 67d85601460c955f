use crate::action::ActionStep;

/// Unit-cost edit distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev(a, b) / max(|a|, |b|, 1)`; 1.0 for two empty plans.
pub fn normalized_levenshtein(a: &[ActionStep], b: &[ActionStep]) -> f64 {
    let denom = a.len().max(b.len()).max(1);
    1.0 - levenshtein(a, b) as f64 / denom as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let p = [
            ActionStep::open("d"),
            ActionStep::pick("x"),
            ActionStep::place_in("x", "d"),
            ActionStep::close("d"),
        ];
        assert_eq!(normalized_levenshtein(&p, &p), 1.0);
        let mut q = p.clone();
        q[1] = ActionStep::pick("y");
        assert_eq!(normalized_levenshtein(&p, &q), 0.75);
        assert_eq!(normalized_levenshtein(&[], &[]), 1.0);
        assert_eq!(normalized_levenshtein(&p, &[]), 0.0);
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
    }
}
