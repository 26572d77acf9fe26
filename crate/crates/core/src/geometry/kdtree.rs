use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Vec3;
use crate::error::{Error, Result};

const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Clone, Copy, Debug)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        dim: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Balanced 3-d tree for exact k-nearest-neighbor queries.
///
/// Results are sorted by distance with ties broken by the lower point index,
/// so they match a brute-force scan exactly.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    dist2: f64,
    index: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        Self::with_leaf_size(points, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: &[Vec3], leaf_size: usize) -> Self {
        assert!(points.len() < u32::MAX as usize, "too many points for a KdTree");
        let leaf_size = leaf_size.max(1);
        let points: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, leaf_size, &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
            leaf_size,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn point(&self, i: usize) -> Vec3 {
        let p = self.points[i];
        Vec3::new(p[0], p[1], p[2])
    }

    /// Indices of the `min(k, n)` points nearest to `x`, nearest first.
    pub fn knn(&self, x: &Vec3, k: usize) -> Result<Vec<usize>> {
        Ok(self
            .knn_with_distances(x, k)?
            .into_iter()
            .map(|(i, _)| i)
            .collect())
    }

    /// Like [`KdTree::knn`] but also returns squared distances.
    pub fn knn_with_distances(&self, x: &Vec3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(Error::Contract("knn requires k >= 1".into()));
        }
        if self.points.is_empty() {
            return Err(Error::EmptyResult);
        }
        let q = [x.x, x.y, x.z];
        let k = k.min(self.points.len());
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, &q, k, &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        Ok(found
            .into_iter()
            .map(|c| (c.index as usize, c.dist2))
            .collect())
    }

    /// Nearest point index and its squared distance.
    pub fn nearest(&self, x: &Vec3) -> Result<(usize, f64)> {
        Ok(self.knn_with_distances(x, 1)?[0])
    }

    fn search(&self, node: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let c = Candidate {
                        dist2: dist2(&self.points[i as usize], q),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim as usize] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near as usize, q, k, heap);
                // `<=` keeps equal-distance candidates with lower indices reachable.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.search(far as usize, q, k, heap);
                }
            }
        }
    }
}

fn build(
    points: &[[f64; 3]],
    order: &mut [u32],
    offset: usize,
    leaf_size: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= leaf_size {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let dim = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][dim]
            .total_cmp(&points[b as usize][dim])
            .then(a.cmp(&b))
    });
    let value = points[order[mid] as usize][dim];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_slice, right_slice) = order.split_at_mut(mid);
    let left = build(points, left_slice, offset, leaf_size, nodes);
    let right = build(points, right_slice, offset + mid, leaf_size, nodes);
    nodes[id as usize] = Node::Split {
        dim: dim as u8,
        value,
        left,
        right,
    };
    id
}

/// Reference k-NN by a full scan, same ordering rules as [`KdTree::knn`].
#[cfg(test)]
pub(crate) fn brute_force_knn(points: &[Vec3], x: &Vec3, k: usize) -> Vec<usize> {
    let q = [x.x, x.y, x.z];
    let mut all: Vec<Candidate> = points
        .iter()
        .enumerate()
        .map(|(i, p)| Candidate {
            dist2: dist2(&[p.x, p.y, p.z], &q),
            index: i as u32,
        })
        .collect();
    all.sort_unstable();
    all.into_iter()
        .take(k)
        .map(|c| c.index as usize)
        .collect()
}
