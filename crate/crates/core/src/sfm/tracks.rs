use std::collections::{BTreeMap, BTreeSet};

use crate::geometry::WorldPoint;

/// One-to-one feature correspondences between views `i` and `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchPair {
    pub view_i: usize,
    pub view_j: usize,
    /// `(feature in i, feature in j)`.
    pub matches: Vec<(usize, usize)>,
}

/// Observation of one scene point: `(view, feature index)`.
pub type Observation = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// Sorted by view, at most one per view.
    pub observations: Vec<Observation>,
    pub point: Option<WorldPoint>,
}

impl Track {
    pub fn feature_in(&self, view: usize) -> Option<usize> {
        self.observations.iter().find(|o| o.0 == view).map(|o| o.1)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components of the match graph. Components holding two
/// features of one view are dropped. Output is sorted by first observation.
pub fn build_tracks(pairs: &[MatchPair]) -> Vec<Track> {
    let nodes: BTreeSet<Observation> = pairs.iter().flat_map(|p| p.matches.iter().flat_map(|&(a, b)| [(p.view_i, a), (p.view_j, b)])).collect();
    let index: BTreeMap<Observation, usize> = nodes.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let nodes: Vec<Observation> = nodes.into_iter().collect();
    let mut uf = UnionFind::new(nodes.len());
    for p in pairs {
        for &(a, b) in &p.matches {
            uf.union(index[&(p.view_i, a)], index[&(p.view_j, b)]);
        }
    }
    let mut components: BTreeMap<usize, Vec<Observation>> = BTreeMap::new();
    for (i, &o) in nodes.iter().enumerate() {
        components.entry(uf.find(i)).or_default().push(o);
    }
    let mut tracks: Vec<Track> = components
        .into_values()
        .filter(|obs| obs.len() >= 2 && obs.windows(2).all(|w| w[0].0 != w[1].0))
        .map(|observations| Track { observations, point: None })
        .collect();
    tracks.sort_by(|a, b| a.observations.cmp(&b.observations));
    tracks
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(i: usize, j: usize, m: &[(usize, usize)]) -> MatchPair {
        MatchPair { view_i: i, view_j: j, matches: m.to_vec() }
    }

    #[test]
    fn transitive_chain() {
        let tracks = build_tracks(&[pair(0, 1, &[(1, 1)]), pair(1, 2, &[(1, 1)])]);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].observations, vec![(0, 1), (1, 1), (2, 1)]);
        assert_eq!(tracks[0].feature_in(2), Some(1));
    }

    #[test]
    fn inconsistent_component_is_dropped() {
        assert!(build_tracks(&[pair(0, 1, &[(1, 1), (2, 1)])]).is_empty());
    }

    #[test]
    fn empty_input() {
        assert!(build_tracks(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn order_independent(raw in proptest::collection::vec((0usize..4, 0usize..4, 0usize..6, 0usize..6), 0..40), seed in any::<u64>()) {
            let pairs: Vec<MatchPair> = raw.iter().filter(|r| r.0 < r.1).map(|&(i, j, a, b)| pair(i, j, &[(a, b)])).collect();
            let mut shuffled = pairs.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = build_tracks(&pairs);
            prop_assert_eq!(&a, &build_tracks(&shuffled));
            for t in &a {
                prop_assert!(t.observations.len() >= 2);
                prop_assert!(t.observations.windows(2).all(|w| w[0].0 < w[1].0));
            }
        }
    }
}
