//! Exact nearest-neighbour search and bidirectional correspondences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::PointCloud;
use crate::Vec3;

const LEAF_SIZE: usize = 8;

/// Static kd-tree over a point set. Queries are exact; ties in distance
/// resolve to the lowest point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    /// Point indices, permuted so every node owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

impl KdTree {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::from_points(cloud.points().to_vec())
    }

    pub fn from_points(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut tree = KdTree { order: (0..points.len()).collect(), points, nodes: Vec::new() };
        let n = tree.points.len();
        tree.build_node(0, n);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] - lo[axis] == 0.0 {
            // All points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis])
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, query: &Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, query, &mut best);
        best
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // Equal-distance candidates on the far side may carry a lower
                // index, so only strictly farther slabs are pruned.
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }

    /// Nearest neighbour of every query point.
    pub fn nearest_batch(&self, queries: &[Vec3]) -> Vec<(usize, f64)> {
        queries.par_iter().map(|q| self.nearest(q)).collect()
    }
}

/// Nearest-neighbour assignments in both directions between a reconstructed
/// cloud and the input vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceMap {
    pub out_to_in: Vec<usize>,
    pub in_to_out: Vec<usize>,
}

impl CorrespondenceMap {
    /// `out_to_in[i] = i` and `in_to_out[i] = i`.
    pub fn identity(n: usize) -> Self {
        Self { out_to_in: (0..n).collect(), in_to_out: (0..n).collect() }
    }
}

pub fn correspondences(output: &PointCloud, input_vertices: &PointCloud) -> Result<CorrespondenceMap> {
    let in_tree = KdTree::build(input_vertices)?;
    let out_tree = KdTree::build(output)?;
    Ok(CorrespondenceMap {
        out_to_in: in_tree.nearest_batch(output.points()).into_iter().map(|(i, _)| i).collect(),
        in_to_out: out_tree.nearest_batch(input_vertices.points()).into_iter().map(|(i, _)| i).collect(),
    })
}
