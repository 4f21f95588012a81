//! T-block geometry in the body frame (origin at the area centroid).

use serde::{Deserialize, Serialize};

use crate::geom::{KeypointSet, Point2, Pose2};

/// Dimensions of the T: a horizontal bar on top of a vertical stem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TBlockSpec {
    pub bar_width: f64,
    pub bar_height: f64,
    pub stem_width: f64,
    pub stem_height: f64,
}

impl Default for TBlockSpec {
    fn default() -> Self {
        Self {
            bar_width: 120.0,
            bar_height: 30.0,
            stem_width: 30.0,
            stem_height: 90.0,
        }
    }
}

/// Precomputed polygon data for a [`TBlockSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct TBlock {
    pub spec: TBlockSpec,
    /// Bar then stem, each counter-clockwise.
    rects: [[Point2; 4]; 2],
    /// Counter-clockwise outline, 8 vertices.
    outline: [Point2; 8],
    area: f64,
    /// Polar moment of area divided by area.
    gyration_sq: f64,
    radius: f64,
}

/// Closest point on the block outline to a query point, in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryQuery {
    pub closest: Point2,
    /// Unit outward normal at `closest`, oriented so that moving the query
    /// point along it increases the signed distance.
    pub normal: Point2,
    /// Signed distance: positive outside the block, negative inside.
    pub signed_distance: f64,
}

impl TBlock {
    pub fn new(spec: TBlockSpec) -> Self {
        let TBlockSpec {
            bar_width: bw,
            bar_height: bh,
            stem_width: sw,
            stem_height: sh,
        } = spec;
        let bar_area = bw * bh;
        let stem_area = sw * sh;
        let area = bar_area + stem_area;
        // In a frame with the bar/stem junction at y = 0.
        let bar_cy = bh / 2.0;
        let stem_cy = -sh / 2.0;
        let cy = (bar_area * bar_cy + stem_area * stem_cy) / area;
        let yj = -cy;
        let yt = bh - cy;
        let ys = -sh - cy;
        let (hb, hs) = (bw / 2.0, sw / 2.0);
        let p = Point2::new;
        let bar = [p(-hb, yj), p(hb, yj), p(hb, yt), p(-hb, yt)];
        let stem = [p(-hs, ys), p(hs, ys), p(hs, yj), p(-hs, yj)];
        let outline = [
            p(-hs, ys),
            p(hs, ys),
            p(hs, yj),
            p(hb, yj),
            p(hb, yt),
            p(-hb, yt),
            p(-hb, yj),
            p(-hs, yj),
        ];
        let rect_moment = |w: f64, h: f64, cy: f64| w * h * ((w * w + h * h) / 12.0 + cy * cy);
        let polar = rect_moment(bw, bh, bar_cy - cy) + rect_moment(sw, sh, stem_cy - cy);
        let radius = outline.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Self {
            spec,
            rects: [bar, stem],
            outline,
            area,
            gyration_sq: polar / area,
            radius,
        }
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Squared radius of gyration about the centroid.
    pub fn gyration_sq(&self) -> f64 {
        self.gyration_sq
    }

    /// Distance from the centroid to the farthest vertex.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn outline(&self) -> &[Point2; 8] {
        &self.outline
    }

    pub fn rects(&self) -> &[[Point2; 4]; 2] {
        &self.rects
    }

    /// Centroid, both bar tips, stem tip, and the bar/stem junction.
    pub fn default_keypoints(&self) -> KeypointSet {
        let o = &self.outline;
        let bar_mid_y = (o[3].y + o[4].y) / 2.0;
        KeypointSet::new(vec![
            Point2::ZERO,
            Point2::new(-self.spec.bar_width / 2.0, bar_mid_y),
            Point2::new(self.spec.bar_width / 2.0, bar_mid_y),
            Point2::new(0.0, o[0].y),
            Point2::new(0.0, o[2].y),
        ])
    }

    /// Body-frame containment (closed set).
    pub fn contains_local(&self, q: Point2) -> bool {
        self.rects
            .iter()
            .any(|r| q.x >= r[0].x && q.x <= r[1].x && q.y >= r[0].y && q.y <= r[2].y)
    }

    pub fn contains(&self, pose: &Pose2, q: Point2) -> bool {
        self.contains_local(pose.inverse().apply(q))
    }

    pub fn world_outline(&self, pose: &Pose2) -> Vec<Point2> {
        self.outline.iter().map(|&v| pose.apply(v)).collect()
    }

    /// Closest outline point and signed distance for a body-frame query.
    pub fn query_local(&self, q: Point2) -> BoundaryQuery {
        let mut best = (f64::INFINITY, Point2::ZERO, Point2::ZERO);
        for i in 0..8 {
            let a = self.outline[i];
            let b = self.outline[(i + 1) % 8];
            let ab = b - a;
            let t = ((q - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
            let c = a + ab * t;
            let d2 = (q - c).norm_sq();
            if d2 < best.0 {
                // outward normal of a counter-clockwise edge
                let edge_normal = Point2::new(ab.y, -ab.x).normalized();
                best = (d2, c, edge_normal);
            }
        }
        let (d2, closest, edge_normal) = best;
        let dist = d2.sqrt();
        let inside = self.contains_local(q);
        let normal = if dist > 1e-12 {
            if inside {
                (closest - q) * (1.0 / dist)
            } else {
                (q - closest) * (1.0 / dist)
            }
        } else {
            edge_normal
        };
        BoundaryQuery {
            closest,
            normal,
            signed_distance: if inside { -dist } else { dist },
        }
    }

    /// World-frame version of [`TBlock::query_local`].
    pub fn query(&self, pose: &Pose2, q: Point2) -> BoundaryQuery {
        let local = self.query_local(pose.inverse().apply(q));
        BoundaryQuery {
            closest: pose.apply(local.closest),
            normal: pose.apply_vector(local.normal),
            signed_distance: local.signed_distance,
        }
    }

    /// Distance from the segment `a`–`b` (world frame) to the block; zero when
    /// the segment touches or enters it.
    pub fn segment_distance(&self, pose: &Pose2, a: Point2, b: Point2) -> f64 {
        let inv = pose.inverse();
        let (a, b) = (inv.apply(a), inv.apply(b));
        if self.contains_local(a) || self.contains_local(b) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for i in 0..8 {
            let p = self.outline[i];
            let q = self.outline[(i + 1) % 8];
            if segments_intersect(a, b, p, q) {
                return 0.0;
            }
            best = best
                .min(point_segment_distance(a, p, q))
                .min(point_segment_distance(b, p, q))
                .min(point_segment_distance(p, a, b))
                .min(point_segment_distance(q, a, b));
        }
        best
    }

    /// Outline vertices pushed out by `offset` along the miter direction, so
    /// each lies `offset` away from both adjacent edge lines.
    pub fn inflated_vertices(&self, pose: &Pose2, offset: f64) -> Vec<Point2> {
        let n = self.outline.len();
        (0..n)
            .map(|i| {
                let prev = self.outline[(i + n - 1) % n];
                let v = self.outline[i];
                let next = self.outline[(i + 1) % n];
                let n1 = edge_normal(prev, v);
                let n2 = edge_normal(v, next);
                let miter = (n1 + n2) * (offset / (1.0 + n1.dot(n2)));
                pose.apply(v + miter)
            })
            .collect()
    }

    /// Area of `self` at pose `a` intersected with `self` at pose `b`.
    pub fn intersection_area(&self, a: &Pose2, b: &Pose2) -> f64 {
        // The two rectangles only share an edge, so pairwise areas add up.
        let mut total = 0.0;
        for ra in &self.rects {
            let pa: Vec<Point2> = ra.iter().map(|&v| a.apply(v)).collect();
            for rb in &self.rects {
                let pb: Vec<Point2> = rb.iter().map(|&v| b.apply(v)).collect();
                total += polygon_area(&clip_convex(&pa, &pb));
            }
        }
        total
    }
}

fn edge_normal(a: Point2, b: Point2) -> Point2 {
    let e = b - a;
    Point2::new(e.y, -e.x).normalized()
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq > 0.0 {
        ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(a + ab * t)
}

fn segments_intersect(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = (b - a).cross(c - a);
    let d2 = (b - a).cross(d - a);
    let d3 = (d - c).cross(a - c);
    let d4 = (d - c).cross(b - c);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Shoelace area (positive for counter-clockwise input).
pub fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        s += poly[i].cross(poly[(i + 1) % poly.len()]);
    }
    0.5 * s
}

/// Sutherland–Hodgman clip of `subject` by the convex counter-clockwise `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let edge = b - a;
        let side = |p: Point2| edge.cross(p - a);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    out.push(prev + (cur - prev) * (sp / (sp - sc)));
                }
                out.push(cur);
            } else if sp >= 0.0 {
                out.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_is_origin() {
        let t = TBlock::new(TBlockSpec::default());
        let [bar, stem] = t.rects();
        let c = |r: &[Point2; 4]| (r[0] + r[2]) * 0.5;
        let a_bar = polygon_area(bar);
        let a_stem = polygon_area(stem);
        let cy = (c(bar).y * a_bar + c(stem).y * a_stem) / (a_bar + a_stem);
        assert!(cy.abs() < 1e-12);
        assert!((t.area() - 6300.0).abs() < 1e-9);
        assert!((polygon_area(t.outline()) - 6300.0).abs() < 1e-9);
    }

    #[test]
    fn gyration_matches_grid_integral() {
        let t = TBlock::new(TBlockSpec::default());
        let h = 0.25;
        let (mut area, mut moment) = (0.0, 0.0);
        let mut x = -60.0 + h / 2.0;
        while x < 60.0 {
            let mut y = -90.0 + h / 2.0;
            while y < 50.0 {
                let p = Point2::new(x, y);
                if t.contains_local(p) {
                    area += h * h;
                    moment += h * h * p.norm_sq();
                }
                y += h;
            }
            x += h;
        }
        assert!((area - t.area()).abs() < 1.0);
        assert!((moment / area - t.gyration_sq()).abs() / t.gyration_sq() < 1e-3);
    }

    #[test]
    fn query_signs_and_normals() {
        let t = TBlock::new(TBlockSpec::default());
        let top = t.outline()[4].y;
        let q = t.query_local(Point2::new(0.0, top + 5.0));
        assert!((q.signed_distance - 5.0).abs() < 1e-12);
        assert!((q.normal.y - 1.0).abs() < 1e-12);
        let inside = t.query_local(Point2::new(0.0, 0.0));
        assert!(inside.signed_distance < 0.0);
        // moving along the normal leaves the shape
        let out = Point2::ZERO + inside.normal * (-inside.signed_distance + 1.0);
        assert!(!t.contains_local(out));
    }

    #[test]
    fn segment_distance_against_sampling() {
        let t = TBlock::new(TBlockSpec::default());
        let pose = Pose2::new(10.0, -5.0, 0.4);
        let segs = [
            (Point2::new(-100.0, 80.0), Point2::new(100.0, 90.0)),
            (Point2::new(60.0, -60.0), Point2::new(90.0, 20.0)),
            (Point2::new(-200.0, 0.0), Point2::new(200.0, 0.0)),
        ];
        for (a, b) in segs {
            let exact = t.segment_distance(&pose, a, b);
            let sampled = (0..=20000)
                .map(|i| {
                    let p = a + (b - a) * (i as f64 / 20000.0);
                    t.query(&pose, p).signed_distance.max(0.0)
                })
                .fold(f64::INFINITY, f64::min);
            assert!((exact - sampled).abs() < 0.05, "{exact} vs {sampled}");
        }
    }

    #[test]
    fn inflated_vertices_keep_offset() {
        let t = TBlock::new(TBlockSpec::default());
        let pose = Pose2::new(200.0, 200.0, -1.0);
        for v in t.inflated_vertices(&pose, 18.0) {
            let d = t.query(&pose, v).signed_distance;
            assert!(d >= 18.0 - 1e-9, "{d}");
        }
    }

    #[test]
    fn self_intersection_is_full_area() {
        let t = TBlock::new(TBlockSpec::default());
        let p = Pose2::new(200.0, 300.0, 0.7);
        assert!((t.intersection_area(&p, &p) - t.area()).abs() < 1e-6);
        let far = Pose2::new(500.0, 300.0, 0.7);
        assert_eq!(t.intersection_area(&p, &far), 0.0);
    }
}
