//! Static 3D kd-tree over point indices.
//!
//! The tree is stored implicitly in a permutation of the input indices: the
//! node of the range `lo..hi` is the element at the midpoint, split on axis
//! `depth % 3`. Queries report input indices and squared distances computed
//! as `dx·dx + dy·dy + dz·dz`; equal distances are resolved toward the lower
//! input index so results match an exhaustive scan exactly.

#[derive(Debug, Clone)]
pub struct KdTree {
    coords: Vec<[f64; 3]>,
    perm: Vec<u32>,
}

#[inline]
pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn build(coords: Vec<[f64; 3]>) -> Self {
        assert!(coords.len() < u32::MAX as usize, "too many points for kd-tree");
        let mut perm: Vec<u32> = (0..coords.len() as u32).collect();
        build_rec(&coords, &mut perm, 0);
        Self { coords, perm }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    /// Nearest point with squared distance `<= max_d2`; ties go to the lower
    /// index.
    pub fn nearest_within(&self, q: &[f64; 3], max_d2: f64) -> Option<(usize, f64)> {
        let mut best: Option<(u32, f64)> = None;
        let mut bound = max_d2;
        self.nearest_rec(q, 0, self.perm.len(), 0, &mut best, &mut bound);
        best.map(|(i, d)| (i as usize, d))
    }

    /// Nearest point overall; `None` only for an empty tree.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        self.nearest_within(q, f64::INFINITY)
    }

    fn nearest_rec(
        &self,
        q: &[f64; 3],
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut Option<(u32, f64)>,
        bound: &mut f64,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.perm[mid];
        let p = &self.coords[idx as usize];
        let d = dist2(p, q);
        if d <= *bound {
            let better = match *best {
                None => true,
                Some((bi, bd)) => d < bd || (d == bd && idx < bi),
            };
            if better {
                *best = Some((idx, d));
                *bound = d;
            }
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(q, near.0, near.1, depth + 1, best, bound);
        if diff * diff <= *bound {
            self.nearest_rec(q, far.0, far.1, depth + 1, best, bound);
        }
    }

    /// Calls `visit(index, d2)` for every point with squared distance
    /// `<= max_d2`, in unspecified order.
    pub fn for_each_within(&self, q: &[f64; 3], max_d2: f64, mut visit: impl FnMut(usize, f64)) {
        self.within_rec(q, max_d2, 0, self.perm.len(), 0, &mut visit);
    }

    fn within_rec(
        &self,
        q: &[f64; 3],
        max_d2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        visit: &mut impl FnMut(usize, f64),
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.perm[mid] as usize;
        let p = &self.coords[idx];
        let d = dist2(p, q);
        if d <= max_d2 {
            visit(idx, d);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        if diff <= 0.0 || diff * diff <= max_d2 {
            self.within_rec(q, max_d2, lo, mid, depth + 1, visit);
        }
        if diff >= 0.0 || diff * diff <= max_d2 {
            self.within_rec(q, max_d2, mid + 1, hi, depth + 1, visit);
        }
    }

    /// Sorted indices of all points within `sqrt(max_d2)`.
    pub fn within(&self, q: &[f64; 3], max_d2: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, max_d2, |i, _| out.push(i));
        out.sort_unstable();
        out
    }
}

fn build_rec(coords: &[[f64; 3]], perm: &mut [u32], depth: usize) {
    if perm.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = perm.len() / 2;
    perm.select_nth_unstable_by(mid, |&a, &b| {
        coords[a as usize][axis]
            .total_cmp(&coords[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left, right) = perm.split_at_mut(mid);
    build_rec(coords, left, depth + 1);
    build_rec(coords, &mut right[1..], depth + 1);
}
