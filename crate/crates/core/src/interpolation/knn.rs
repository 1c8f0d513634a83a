//! Static k-d tree for k-nearest-neighbour queries over a point cloud.
//!
//! Neighbours are ordered by `(squared distance, row)`, so results are fully
//! determined by the cloud even with coincident or equidistant points.

use crate::cloud::PointCloud;

const BUCKET: usize = 16;

enum Node {
    Bucket {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

pub struct KnnIndex<'a> {
    cloud: &'a PointCloud,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// A neighbour: squared distance and row in the indexed cloud.
pub type Neighbor = (f64, usize);

impl<'a> KnnIndex<'a> {
    pub fn build(cloud: &'a PointCloud) -> Self {
        let mut index = Self {
            cloud,
            order: (0..cloud.len()).collect(),
            nodes: Vec::new(),
        };
        if !cloud.is_empty() {
            index.build_node(0, cloud.len());
        }
        index
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Bucket { start, end });
        if end - start <= BUCKET {
            return id;
        }
        let cloud = self.cloud;
        let d = cloud.dims();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &r in &self.order[start..end] {
            for (i, &x) in cloud.point(r).iter().enumerate() {
                lo[i] = lo[i].min(x);
                hi[i] = hi[i].max(x);
            }
        }
        let mut axis = 0;
        for i in 1..d {
            if hi[i] - lo[i] > hi[axis] - lo[axis] {
                axis = i;
            }
        }
        if hi[axis] == lo[axis] {
            // all points coincide
            return id;
        }
        let mid = (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            cloud.point(a)[axis].total_cmp(&cloud.point(b)[axis]).then(a.cmp(&b))
        });
        let value = cloud.point(self.order[start + mid])[axis];
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest rows to `query`, closest first.
    pub fn nearest(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, k, &mut best);
        }
        best
    }

    fn search(&self, node: usize, query: &[f64], k: usize, best: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Bucket { start, end } => {
                for &r in &self.order[start..end] {
                    let d2: f64 = self
                        .cloud
                        .point(r)
                        .iter()
                        .zip(query)
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum();
                    offer(best, k, (d2, r));
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, best);
                let full = best.len() == k;
                if !full || diff * diff <= best[k - 1].0 {
                    self.search(far, query, k, best);
                }
            }
        }
    }
}

fn offer(best: &mut Vec<Neighbor>, k: usize, cand: Neighbor) {
    let less = |a: &Neighbor, b: &Neighbor| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    if best.len() == k && !less(&cand, &best[k - 1]) {
        return;
    }
    let pos = best.iter().position(|b| less(&cand, b)).unwrap_or(best.len());
    best.insert(pos, cand);
    best.truncate(k);
}
