use crate::geom::Vec3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact nearest-neighbour index over a fixed point set.
///
/// Neighbours are ordered by `(squared distance, index)`, so results are
/// identical to a sorted brute-force scan, ties included.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            perm: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.perm[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] - lo[axis] <= 0.0 {
            // all coincident
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = self.points[self.perm[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Nearest point as `(index, distance)`.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.knn(q, 1).first().copied()
    }

    /// The `k` nearest points as `(index, distance)`, closest first.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.knn_rec(0, q, k, &mut best);
        }
        best.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    fn knn_rec(&self, node: usize, q: &Vec3, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    let cand = (d2, i);
                    if best.len() == k && !lex_less(cand, best[k - 1]) {
                        continue;
                    }
                    let pos = best.partition_point(|&b| lex_less(b, cand));
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, best);
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }

    /// Indices of all points with distance strictly below `r`, ascending.
    pub fn within(&self, q: &Vec3, r: f64) -> Vec<usize> {
        self.radius_query(q, r, false)
    }

    /// Indices of all points with distance at most `r`, ascending.
    pub fn within_closed(&self, q: &Vec3, r: f64) -> Vec<usize> {
        self.radius_query(q, r, true)
    }

    fn radius_query(&self, q: &Vec3, r: f64, closed: bool) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() && r >= 0.0 {
            self.within_rec(0, q, r * r, closed, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_rec(&self, node: usize, q: &Vec3, r2: f64, closed: bool, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(self.perm[start..end].iter().copied().filter(|&i| {
                    let d2 = (self.points[i] - q).norm_squared();
                    d2 < r2 || (closed && d2 == r2)
                }));
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, q, r2, closed, out);
                if diff * diff <= r2 {
                    self.within_rec(far, q, r2, closed, out);
                }
            }
        }
    }
}

fn lex_less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_points_stay_queryable() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0); 40];
        let tree = KdTree::new(&pts);
        let nn = tree.knn(&Vec3::zeros(), 3);
        assert_eq!(nn.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(tree.within_closed(&pts[0], 0.0).len(), 40);
        assert!(tree.within(&pts[0], 0.0).is_empty());
    }

    #[test]
    fn empty_tree() {
        let tree = KdTree::new(&[]);
        assert!(tree.nearest(&Vec3::zeros()).is_none());
        assert!(tree.within(&Vec3::zeros(), 1.0).is_empty());
    }
}
