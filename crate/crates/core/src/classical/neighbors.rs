use crate::grid::Heightmap;
use crate::maskgen::Mask;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnownPoint {
    pub x: usize,
    pub y: usize,
    pub value: f64,
    /// Squared Euclidean distance to the query pixel.
    pub dist2: u64,
}

impl KnownPoint {
    pub fn row_major(&self, width: usize) -> usize {
        self.y * width + self.x
    }
}

/// Nearest known pixels by growing square rings around the query. Ties in
/// distance resolve by row-major index so the selection is deterministic.
pub struct NeighborIndex<'a> {
    h: &'a Heightmap,
    m: &'a Mask,
    known: usize,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(h: &'a Heightmap, m: &'a Mask) -> Self {
        Self { h, m, known: m.known_count() }
    }

    pub fn known_count(&self) -> usize {
        self.known
    }

    pub fn nearest(&self, qx: usize, qy: usize, k: usize) -> Vec<KnownPoint> {
        let (w, h) = (self.h.width() as i64, self.h.height() as i64);
        let k = k.min(self.known);
        let mut found: Vec<KnownPoint> = Vec::with_capacity(4 * k + 8);
        let (qx, qy) = (qx as i64, qy as i64);
        let max_r = w.max(h);
        let mut r = 0i64;
        let visit = |x: i64, y: i64, found: &mut Vec<KnownPoint>| {
            if x < 0 || y < 0 || x >= w || y >= h {
                return;
            }
            let (ux, uy) = (x as usize, y as usize);
            if !self.m.is_masked(ux, uy) {
                let (dx, dy) = (x - qx, y - qy);
                found.push(KnownPoint {
                    x: ux,
                    y: uy,
                    value: self.h.get(ux, uy) as f64,
                    dist2: (dx * dx + dy * dy) as u64,
                });
            }
        };
        loop {
            if r == 0 {
                visit(qx, qy, &mut found);
            } else {
                for x in qx - r..=qx + r {
                    visit(x, qy - r, &mut found);
                    visit(x, qy + r, &mut found);
                }
                for y in qy - r + 1..qy + r {
                    visit(qx - r, y, &mut found);
                    visit(qx + r, y, &mut found);
                }
            }
            if found.len() >= k && k > 0 {
                // unseen pixels lie at Chebyshev distance >= r + 1
                let bound = ((r + 1) * (r + 1)) as u64;
                let mut d: Vec<u64> = found.iter().map(|p| p.dist2).collect();
                let (_, kth, _) = d.select_nth_unstable(k - 1);
                if *kth < bound {
                    break;
                }
            }
            if r > max_r {
                break;
            }
            r += 1;
        }
        let width = w as usize;
        found.sort_by_key(|p| (p.dist2, p.row_major(width)));
        found.truncate(k);
        found
    }
}
