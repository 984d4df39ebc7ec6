//! Online single-link clustering by cosine similarity.
//!
//! A new item joins every cluster holding an item at or above the threshold;
//! if there are several they are merged. The partition therefore always
//! equals the connected components of the threshold graph.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_with_norms, norm, EmbeddingVector};
use crate::eval::derive_seed;
use crate::Scalar;

pub type ClusterId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("item `{0}` already clustered")]
    DuplicateId(String),
    #[error("dimension mismatch: state has {expected}, item has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("item `{0}` has a zero embedding")]
    ZeroVector(String),
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representatives {
    pub medoid: String,
    pub anti_medoid: String,
    pub random: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: ClusterId,
    /// Sorted by id.
    pub members: Vec<String>,
}

impl ClusterSummary {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone)]
struct Item<T> {
    id: String,
    values: Vec<T>,
    norm: T,
}

#[derive(Debug, Clone)]
pub struct ClusterState<T = f32> {
    threshold: T,
    dim: Option<usize>,
    items: Vec<Item<T>>,
    index: HashMap<String, usize>,
    assignment: Vec<ClusterId>,
    clusters: BTreeMap<ClusterId, Vec<usize>>,
    next_id: ClusterId,
}

impl<T: Scalar> Default for ClusterState<T> {
    fn default() -> Self {
        Self::new(T::of(0.90))
    }
}

impl<T: Scalar> ClusterState<T> {
    pub fn new(threshold: T) -> Self {
        ClusterState {
            threshold,
            dim: None,
            items: Vec::new(),
            index: HashMap::new(),
            assignment: Vec::new(),
            clusters: BTreeMap::new(),
            next_id: 0,
        }
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn cluster_of(&self, id: &str) -> Option<ClusterId> {
        self.index.get(id).map(|&i| self.assignment[i])
    }

    pub fn vector(&self, id: &str) -> Option<&[T]> {
        self.index.get(id).map(|&i| self.items[i].values.as_slice())
    }

    pub fn members(&self, cluster: ClusterId) -> Result<Vec<String>, ClusterError> {
        let m = self.clusters.get(&cluster).ok_or(ClusterError::UnknownCluster(cluster))?;
        let mut ids: Vec<String> = m.iter().map(|&i| self.items[i].id.clone()).collect();
        ids.sort();
        Ok(ids)
    }

    fn check(&self, id: &str, v: &EmbeddingVector<T>) -> Result<(), ClusterError> {
        if self.index.contains_key(id) {
            return Err(ClusterError::DuplicateId(id.to_string()));
        }
        if let Some(d) = self.dim {
            if v.dim() != d {
                return Err(ClusterError::DimensionMismatch { expected: d, got: v.dim() });
            }
        }
        if v.is_zero() {
            return Err(ClusterError::ZeroVector(id.to_string()));
        }
        Ok(())
    }

    fn push(&mut self, id: &str, v: &EmbeddingVector<T>, cluster: ClusterId) {
        let i = self.items.len();
        self.dim = Some(v.dim());
        self.items.push(Item { id: id.to_string(), values: v.as_slice().to_vec(), norm: norm(v.as_slice()) });
        self.index.insert(id.to_string(), i);
        self.assignment.push(cluster);
        self.clusters.entry(cluster).or_default().push(i);
    }

    fn fresh_id(&mut self) -> ClusterId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Cosine of `v` against every stored item, in insertion order.
    pub fn similarities(&self, v: &EmbeddingVector<T>) -> Vec<(usize, T)> {
        let nv = norm(v.as_slice());
        self.items
            .iter()
            .enumerate()
            .map(|(i, it)| (i, cosine_with_norms(v.as_slice(), &it.values, nv, it.norm)))
            .collect()
    }

    /// Single-link insertion. Returns the cluster the item ends up in.
    pub fn add_item(&mut self, id: &str, v: &EmbeddingVector<T>) -> Result<ClusterId, ClusterError> {
        self.check(id, v)?;
        let mut linked: Vec<ClusterId> = self
            .similarities(v)
            .into_iter()
            .filter(|&(_, c)| c >= self.threshold)
            .map(|(i, _)| self.assignment[i])
            .collect();
        linked.sort_unstable();
        linked.dedup();
        let target = match linked.split_first() {
            None => self.fresh_id(),
            Some((&first, rest)) => {
                for &other in rest {
                    self.absorb(first, other);
                }
                first
            }
        };
        self.push(id, v, target);
        Ok(target)
    }

    /// Adds an item to `cluster`, or to a new singleton when `None`, without
    /// looking at similarities.
    pub fn insert(&mut self, id: &str, v: &EmbeddingVector<T>, cluster: Option<ClusterId>) -> Result<ClusterId, ClusterError> {
        self.check(id, v)?;
        let target = match cluster {
            Some(c) if self.clusters.contains_key(&c) => c,
            Some(c) => return Err(ClusterError::UnknownCluster(c)),
            None => self.fresh_id(),
        };
        self.push(id, v, target);
        Ok(target)
    }

    /// Re-adds an item under a known cluster id, as when loading a snapshot.
    pub fn restore(&mut self, id: &str, v: &EmbeddingVector<T>, cluster: ClusterId) -> Result<(), ClusterError> {
        self.check(id, v)?;
        self.next_id = self.next_id.max(cluster + 1);
        self.push(id, v, cluster);
        Ok(())
    }

    /// Id the next new cluster will get.
    pub fn next_cluster_id(&self) -> ClusterId {
        self.next_id
    }

    /// Raises the id counter, never lowering it.
    pub fn reserve_cluster_ids(&mut self, next: ClusterId) {
        self.next_id = self.next_id.max(next);
    }

    fn absorb(&mut self, keep: ClusterId, gone: ClusterId) {
        if let Some(moved) = self.clusters.remove(&gone) {
            for &i in &moved {
                self.assignment[i] = keep;
            }
            self.clusters.entry(keep).or_default().extend(moved);
        }
    }

    /// Merges the clusters of two items into the lower-numbered one.
    pub fn merge_items(&mut self, a: &str, b: &str) -> Result<ClusterId, ClusterError> {
        let ca = self.cluster_of(a).ok_or_else(|| ClusterError::UnknownItem(a.to_string()))?;
        let cb = self.cluster_of(b).ok_or_else(|| ClusterError::UnknownItem(b.to_string()))?;
        let (keep, gone) = if ca <= cb { (ca, cb) } else { (cb, ca) };
        if keep != gone {
            self.absorb(keep, gone);
        }
        Ok(keep)
    }

    /// Clusters with at least `min_size` members, largest first, then by id.
    pub fn clusters_of_size(&self, min_size: usize) -> Vec<ClusterSummary> {
        let mut out: Vec<ClusterSummary> = self
            .clusters
            .iter()
            .filter(|(_, m)| m.len() >= min_size)
            .map(|(&id, _)| ClusterSummary { id, members: self.members(id).expect("listed cluster") })
            .collect();
        out.sort_by(|a, b| b.size().cmp(&a.size()).then(a.id.cmp(&b.id)));
        out
    }

    /// The partition as sorted member lists, sorted; independent of ids.
    pub fn partition(&self) -> Vec<Vec<String>> {
        let mut p: Vec<Vec<String>> = self.clusters.keys().map(|&c| self.members(c).unwrap()).collect();
        p.sort();
        p
    }

    /// Mean `1 - cosine` of each member to the others, sorted by member id.
    pub fn mean_distances(&self, cluster: ClusterId) -> Result<Vec<(String, f64)>, ClusterError> {
        let m = self.clusters.get(&cluster).ok_or(ClusterError::UnknownCluster(cluster))?;
        let mut out: Vec<(String, f64)> = m
            .iter()
            .map(|&i| {
                let a = &self.items[i];
                let total: f64 = m
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| {
                        let b = &self.items[j];
                        1.0 - cosine_with_norms(&a.values, &b.values, a.norm, b.norm).as_f64()
                    })
                    .sum();
                let mean = if m.len() > 1 { total / (m.len() - 1) as f64 } else { 0.0 };
                (a.id.clone(), mean)
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    /// Medoid, anti-medoid and a seeded random member. Ties go to the
    /// smaller id.
    pub fn representatives(&self, cluster: ClusterId, seed: u64) -> Result<Representatives, ClusterError> {
        let d = self.mean_distances(cluster)?;
        let medoid = d.iter().min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))).unwrap();
        let anti = d.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, cluster));
        let random = d.choose(&mut rng).unwrap();
        Ok(Representatives { medoid: medoid.0.clone(), anti_medoid: anti.0.clone(), random: random.0.clone() })
    }

    /// `item_id<TAB>cluster_id` per item, in insertion order.
    pub fn write_assignments<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (it, c) in self.items.iter().zip(&self.assignment) {
            writeln!(w, "{}\t{}", it.id, c)?;
        }
        w.flush()
    }

    /// `(item id, cluster id)` in insertion order.
    pub fn assignments(&self) -> Vec<(String, ClusterId)> {
        self.items.iter().zip(&self.assignment).map(|(it, &c)| (it.id.clone(), c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn v(x: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    fn angle(theta: f64) -> EmbeddingVector<f64> {
        v(&[theta.cos(), theta.sin()])
    }

    // Connected components of the threshold graph by union-find.
    fn components(items: &[(String, EmbeddingVector<f64>)], t: f64) -> Vec<Vec<String>> {
        let n = items.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for i in 0..n {
            for j in i + 1..n {
                if crate::embedding::cosine(&items[i].1, &items[j].1).unwrap() >= t {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (i, item) in items.iter().enumerate() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(item.0.clone());
        }
        let mut out: Vec<Vec<String>> = groups
            .into_values()
            .map(|mut g| {
                g.sort();
                g
            })
            .collect();
        out.sort();
        out
    }

    fn random_items(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<(String, EmbeddingVector<f64>)> {
        // a few tight directions plus noise so the threshold graph has real components
        let centers: Vec<Vec<f64>> = (0..4).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        (0..n)
            .map(|i| {
                let c = &centers[rng.random_range(0..centers.len())];
                let x: Vec<f64> = c.iter().map(|&m| m + rng.random_range(-0.35..0.35)).collect();
                (format!("i{i:03}"), v(&x))
            })
            .collect()
    }

    #[test]
    fn first_and_duplicate() {
        let mut s = ClusterState::<f64>::default();
        let a = s.add_item("a", &v(&[1.0, 0.0])).unwrap();
        assert_eq!(s.add_item("b", &v(&[2.0, 0.0])).unwrap(), a);
        assert_eq!(s.partition(), vec![vec!["a".to_string(), "b".to_string()]]);
        assert!(matches!(s.add_item("a", &v(&[1.0, 0.0])), Err(ClusterError::DuplicateId(_))));
        assert!(matches!(s.add_item("c", &v(&[1.0, 0.0, 0.0])), Err(ClusterError::DimensionMismatch { .. })));
    }

    // a-b and b-c at cosine 0.92, a-c far below the threshold; c arrives
    // before the bridging b.
    #[test]
    fn chain_merges_on_bridge() {
        let theta = 0.92f64.acos();
        let (a, b, c) = (angle(0.0), angle(theta), angle(2.0 * theta));
        assert!(crate::embedding::cosine(&a, &c).unwrap() < 0.70);
        let mut s = ClusterState::<f64>::default();
        let ca = s.add_item("a", &a).unwrap();
        let cc = s.add_item("c", &c).unwrap();
        assert_ne!(ca, cc);
        assert_eq!(s.add_item("b", &b).unwrap(), ca.min(cc));
        assert_eq!(s.cluster_count(), 1);
        assert_eq!(s.members(ca).unwrap(), vec!["a", "b", "c"]);
    }

    #[test]
    fn equals_threshold_graph_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..100);
            let items = random_items(&mut rng, n, 6);
            let mut s = ClusterState::<f64>::default();
            for (id, x) in &items {
                s.add_item(id, x).unwrap();
            }
            assert_eq!(s.partition(), components(&items, 0.90));
        }
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let items = random_items(&mut rng, 60, 5);
        let mut reference = None;
        for _ in 0..50 {
            let mut order = items.clone();
            order.shuffle(&mut rng);
            let mut s = ClusterState::<f64>::default();
            for (id, x) in &order {
                s.add_item(id, x).unwrap();
            }
            let p = s.partition();
            assert_eq!(reference.get_or_insert_with(|| p.clone()), &p);
        }
    }

    #[test]
    fn no_cross_cluster_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let items = random_items(&mut rng, 80, 4);
        let mut s = ClusterState::<f64>::default();
        for (id, x) in &items {
            s.add_item(id, x).unwrap();
        }
        for (ia, a) in &items {
            for (ib, b) in &items {
                if s.cluster_of(ia) != s.cluster_of(ib) {
                    assert!(crate::embedding::cosine(a, b).unwrap() < 0.90);
                }
            }
        }
    }

    #[test]
    fn sizes_sorted() {
        let mut s = ClusterState::<f64>::default();
        assert!(s.clusters_of_size(1).is_empty());
        for (id, t) in [("a", 0.0), ("b", 0.01), ("c", 1.5), ("d", 1.51), ("e", 1.52), ("f", 3.0)] {
            s.add_item(id, &angle(t)).unwrap();
        }
        let sizes: Vec<usize> = s.clusters_of_size(1).iter().map(|c| c.size()).collect();
        assert_eq!(sizes, vec![3, 2, 1]);
        assert_eq!(s.clusters_of_size(2).len(), 2);
    }

    // Mean distances: a sits between b and c, so it is the medoid.
    #[test]
    fn representatives_hand_computed() {
        let mut s = ClusterState::<f64>::new(0.0);
        s.add_item("b", &angle(-0.2)).unwrap();
        s.add_item("a", &angle(0.0)).unwrap();
        let c = s.add_item("c", &angle(0.5)).unwrap();
        let d = s.mean_distances(c).unwrap();
        let expect_a = ((1.0 - 0.2f64.cos()) + (1.0 - 0.5f64.cos())) / 2.0;
        let expect_c = ((1.0 - 0.5f64.cos()) + (1.0 - 0.7f64.cos())) / 2.0;
        assert!((d[0].1 - expect_a).abs() < 1e-12);
        assert!((d[2].1 - expect_c).abs() < 1e-12);
        let r = s.representatives(c, 1).unwrap();
        assert_eq!((r.medoid.as_str(), r.anti_medoid.as_str()), ("a", "c"));
        assert_eq!(r, s.representatives(c, 1).unwrap());

        let mut single = ClusterState::<f64>::default();
        let id = single.add_item("x", &angle(0.0)).unwrap();
        let r = single.representatives(id, 5).unwrap();
        assert_eq!((r.medoid.as_str(), r.anti_medoid.as_str(), r.random.as_str()), ("x", "x", "x"));
        assert!(matches!(single.representatives(99, 0), Err(ClusterError::UnknownCluster(99))));
    }

    #[test]
    fn manual_operations() {
        let mut s = ClusterState::<f64>::default();
        let a = s.insert("a", &angle(0.0), None).unwrap();
        let b = s.insert("b", &angle(3.0), None).unwrap();
        assert_ne!(a, b);
        assert_eq!(s.insert("c", &angle(1.0), Some(b)).unwrap(), b);
        assert_eq!(s.merge_items("c", "a").unwrap(), a.min(b));
        assert_eq!(s.merge_items("a", "b").unwrap(), a.min(b));
        assert_eq!(s.cluster_count(), 1);
        assert!(s.merge_items("a", "zz").is_err());
        let mut out = Vec::new();
        s.write_assignments(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a\t0\nb\t0\nc\t0\n");
    }

    #[test]
    fn restore_keeps_ids() {
        let mut s = ClusterState::<f64>::default();
        s.restore("x", &angle(0.0), 4).unwrap();
        s.restore("y", &angle(2.0), 1).unwrap();
        s.reserve_cluster_ids(9);
        assert_eq!(s.cluster_of("x"), Some(4));
        assert_eq!(s.insert("z", &angle(1.0), None).unwrap(), 9);
    }
}
