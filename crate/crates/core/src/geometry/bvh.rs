use super::{point_triangle_distance_squared, Aabb, TriangleMesh, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Debug)]
struct BvhNode {
    bbox: Aabb,
    /// Leaf: range into `order`. Inner: `start` is the left child, `end` the right child.
    start: u32,
    end: u32,
    leaf: bool,
}

/// Bounding-volume hierarchy over the triangles of a mesh for closest-face
/// queries.
#[derive(Clone, Debug)]
pub struct TriangleBvh {
    corners: Vec<[Vec3; 3]>,
    order: Vec<u32>,
    nodes: Vec<BvhNode>,
}

impl TriangleBvh {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let corners: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|t| mesh.corners(t)).collect();
        let centroids: Vec<Vec3> = corners.iter().map(|[a, b, c]| (a + b + c) / 3.0).collect();
        let mut order: Vec<u32> = (0..corners.len() as u32).collect();
        let mut nodes = Vec::new();
        if !corners.is_empty() {
            build(&corners, &centroids, &mut order, 0, &mut nodes);
        }
        Self {
            corners,
            order,
            nodes,
        }
    }

    /// Closest triangle to `x` and the squared distance to it. Ties go to the
    /// lower triangle index. `None` for an empty mesh.
    pub fn closest(&self, x: &Vec3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if node.bbox.distance_squared(x) > best.1 {
                continue;
            }
            if node.leaf {
                for &t in &self.order[node.start as usize..node.end as usize] {
                    let [a, b, c] = &self.corners[t as usize];
                    let d2 = point_triangle_distance_squared(x, a, b, c);
                    let t = t as usize;
                    if d2 < best.1 || (d2 == best.1 && t < best.0) {
                        best = (t, d2);
                    }
                }
            } else {
                let (l, r) = (node.start, node.end);
                let dl = self.nodes[l as usize].bbox.distance_squared(x);
                let dr = self.nodes[r as usize].bbox.distance_squared(x);
                // Push the farther child first so the nearer one is searched first.
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        Some(best)
    }
}

fn build(
    corners: &[[Vec3; 3]],
    centroids: &[Vec3],
    order: &mut [u32],
    offset: usize,
    nodes: &mut Vec<BvhNode>,
) -> u32 {
    let bbox = Aabb::from_points(
        order
            .iter()
            .flat_map(|&t| corners[t as usize].iter()),
    )
    .expect("non-empty node");
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(BvhNode {
            bbox,
            start: offset as u32,
            end: (offset + order.len()) as u32,
            leaf: true,
        });
        return id;
    }
    let cbox = Aabb::from_points(order.iter().map(|&t| &centroids[t as usize])).unwrap();
    let ext = cbox.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    nodes.push(BvhNode {
        bbox,
        start: 0,
        end: 0,
        leaf: false,
    });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build(corners, centroids, lo, offset, nodes);
    let right = build(corners, centroids, hi, offset + mid, nodes);
    nodes[id as usize].start = left;
    nodes[id as usize].end = right;
    id
}
