use std::collections::{HashMap, HashSet};

use super::{Dataset, Side, Triple};

/// Membership set over every split, used to filter known-true triples out
/// of rankings and negative samples.
#[derive(Debug, Clone, Default)]
pub struct KnownTripleIndex {
    triples: HashSet<Triple>,
    // (head, relation) -> known tails, (relation, tail) -> known heads
    tails: HashMap<(usize, usize), Vec<usize>>,
    heads: HashMap<(usize, usize), Vec<usize>>,
}

impl KnownTripleIndex {
    pub fn build(dataset: &Dataset) -> Self {
        Self::from_triples(dataset.all_triples().copied())
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut index = KnownTripleIndex::default();
        for t in triples {
            index.insert(t);
        }
        index
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        if !self.triples.insert(t) {
            return false;
        }
        self.tails
            .entry((t.head, t.relation))
            .or_default()
            .push(t.tail);
        self.heads
            .entry((t.relation, t.tail))
            .or_default()
            .push(t.head);
        true
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Entities `e` such that replacing `side` of `triple` with `e` gives a
    /// known triple. Includes the triple's own entity when it is known.
    pub fn known_replacements(&self, triple: &Triple, side: Side) -> &[usize] {
        let found = match side {
            Side::Head => self.heads.get(&(triple.relation, triple.tail)),
            Side::Tail => self.tails.get(&(triple.head, triple.relation)),
        };
        found.map(Vec::as_slice).unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Vocabulary;

    fn vocab(n: usize, r: usize) -> Vocabulary {
        Vocabulary::from_names(
            (0..n).map(|i| format!("e{i}")),
            (0..r).map(|i| format!("r{i}")),
        )
        .unwrap()
    }

    #[test]
    fn union_of_splits() {
        let ds = Dataset::new(
            vocab(2, 1),
            vec![Triple::new(0, 0, 1)],
            vec![],
            vec![Triple::new(1, 0, 0)],
        )
        .unwrap();
        let idx = KnownTripleIndex::build(&ds);
        assert!(idx.contains(&Triple::new(0, 0, 1)));
        assert!(idx.contains(&Triple::new(1, 0, 0)));
        assert!(!idx.contains(&Triple::new(0, 0, 0)));
        assert_eq!(idx.len(), 2);
    }

    #[test]
    fn duplicates_collapse() {
        let t = Triple::new(0, 0, 1);
        let ds = Dataset::new(vocab(2, 1), vec![t, t], vec![], vec![t]).unwrap();
        let idx = KnownTripleIndex::build(&ds);
        assert_eq!(idx.len(), 1);
        assert!(idx.contains(&t));
        assert_eq!(idx.known_replacements(&t, Side::Tail), &[1]);
    }

    #[test]
    fn replacements_by_side() {
        let idx = KnownTripleIndex::from_triples([
            Triple::new(0, 0, 1),
            Triple::new(0, 0, 2),
            Triple::new(3, 0, 2),
        ]);
        let mut tails = idx
            .known_replacements(&Triple::new(0, 0, 9), Side::Tail)
            .to_vec();
        tails.sort();
        assert_eq!(tails, vec![1, 2]);
        let mut heads = idx
            .known_replacements(&Triple::new(9, 0, 2), Side::Head)
            .to_vec();
        heads.sort();
        assert_eq!(heads, vec![0, 3]);
        assert!(idx
            .known_replacements(&Triple::new(5, 1, 5), Side::Head)
            .is_empty());
    }
}
