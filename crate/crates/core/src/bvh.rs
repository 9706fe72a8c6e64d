//! Axis-aligned bounding-box tree for point and box queries.

/// Box in up to three dimensions; unused axes stay at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            lo: [f64::INFINITY; 3],
            hi: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn from_point(p: &[f64]) -> Self {
        let mut b = Aabb {
            lo: [0.0; 3],
            hi: [0.0; 3],
        };
        for (k, &v) in p.iter().enumerate() {
            b.lo[k] = v;
            b.hi[k] = v;
        }
        b
    }

    /// Bounding box of the listed vertices of a flat `dim`-strided array.
    pub fn of_vertices(dim: usize, x: &[f64], verts: &[usize]) -> Self {
        let mut b = Aabb::from_point(&x[verts[0] * dim..(verts[0] + 1) * dim]);
        for &v in &verts[1..] {
            b.grow_point(&x[v * dim..(v + 1) * dim]);
        }
        b
    }

    pub fn grow_point(&mut self, p: &[f64]) {
        for (k, &v) in p.iter().enumerate() {
            self.lo[k] = self.lo[k].min(v);
            self.hi[k] = self.hi[k].max(v);
        }
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        let mut b = *self;
        for k in 0..3 {
            b.lo[k] = b.lo[k].min(o.lo[k]);
            b.hi[k] = b.hi[k].max(o.hi[k]);
        }
        b
    }

    pub fn inflated(&self, r: f64) -> Aabb {
        let mut b = *self;
        for k in 0..3 {
            b.lo[k] -= r;
            b.hi[k] += r;
        }
        b
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        (0..3).all(|k| self.lo[k] <= o.hi[k] && o.lo[k] <= self.hi[k])
    }

    fn center(&self, k: usize) -> f64 {
        0.5 * (self.lo[k] + self.hi[k])
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        bbox: Aabb,
        start: usize,
        end: usize,
    },
    Inner {
        bbox: Aabb,
        left: usize,
        right: usize,
    },
}

impl Node {
    fn bbox(&self) -> &Aabb {
        match self {
            Node::Leaf { bbox, .. } | Node::Inner { bbox, .. } => bbox,
        }
    }
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    items: Vec<usize>,
    boxes: Vec<Aabb>,
}

impl Bvh {
    pub fn build(boxes: Vec<Aabb>) -> Self {
        let mut items: Vec<usize> = (0..boxes.len()).collect();
        let mut nodes = Vec::new();
        if !boxes.is_empty() {
            Self::build_rec(&boxes, &mut items, 0, boxes.len(), &mut nodes);
        }
        Bvh {
            nodes,
            items,
            boxes,
        }
    }

    fn build_rec(
        boxes: &[Aabb],
        items: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let bbox = items[start..end]
            .iter()
            .fold(Aabb::empty(), |b, &i| b.union(&boxes[i]));
        let id = nodes.len();
        if end - start <= LEAF_SIZE {
            nodes.push(Node::Leaf { bbox, start, end });
            return id;
        }
        let axis = (0..3)
            .max_by(|&a, &b| {
                (bbox.hi[a] - bbox.lo[a])
                    .partial_cmp(&(bbox.hi[b] - bbox.lo[b]))
                    .unwrap()
            })
            .unwrap();
        let mid = (start + end) / 2;
        items[start..end].sort_by(|&a, &b| {
            boxes[a]
                .center(axis)
                .partial_cmp(&boxes[b].center(axis))
                .unwrap()
                .then(a.cmp(&b))
        });
        nodes.push(Node::Leaf { bbox, start, end });
        let left = Self::build_rec(boxes, items, start, mid, nodes);
        let right = Self::build_rec(boxes, items, mid, end, nodes);
        nodes[id] = Node::Inner { bbox, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Indices of all boxes overlapping `q`, in increasing order.
    pub fn query(&self, q: &Aabb) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if !node.bbox().overlaps(q) {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    out.extend(
                        self.items[*start..*end]
                            .iter()
                            .copied()
                            .filter(|&i| self.boxes[i].overlaps(q)),
                    );
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn query_point(&self, p: &[f64]) -> Vec<usize> {
        self.query(&Aabb::from_point(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn query_matches_brute_force(
            pts in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64, 0.1..2.0f64), 1..60),
            q in (0.0..10.0f64, 0.0..10.0f64, 0.0..3.0f64),
        ) {
            let boxes: Vec<Aabb> = pts.iter().map(|&(x, y, r)| Aabb::from_point(&[x, y]).inflated(r)).collect();
            let bvh = Bvh::build(boxes.clone());
            let qb = Aabb::from_point(&[q.0, q.1]).inflated(q.2);
            let brute: Vec<usize> = (0..boxes.len()).filter(|&i| boxes[i].overlaps(&qb)).collect();
            prop_assert_eq!(bvh.query(&qb), brute);
        }
    }
}
