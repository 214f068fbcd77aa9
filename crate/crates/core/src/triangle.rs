//! Exact point-to-triangle distance with the Voronoi region that produced it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::DEGENERATE_AREA;
use crate::Vec3;

/// Feature of the triangle `(v0, v1, v2)` holding the closest point.
/// Edge `k` runs from vertex `k` to vertex `(k + 1) % 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Face,
    Edge(u8),
    Vertex(u8),
}

impl Region {
    pub const ALL: [Region; 7] = [
        Region::Face,
        Region::Edge(0),
        Region::Edge(1),
        Region::Edge(2),
        Region::Vertex(0),
        Region::Vertex(1),
        Region::Vertex(2),
    ];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleProjection {
    pub sqdist: f64,
    pub closest: Vec3,
    pub region: Region,
}

/// Squared distance from `p` to the triangle, its closest point and region.
pub fn point_triangle_sqdist(p: &Vec3, tri: &[Vec3; 3]) -> Result<TriangleProjection> {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    if 0.5 * ab.cross(&ac).norm() < DEGENERATE_AREA {
        return Err(Error::DegenerateFace { face: 0 });
    }
    let (closest, region) = closest_point(p, &a, &b, &c, &ab, &ac);
    Ok(TriangleProjection { sqdist: (p - closest).norm_squared(), closest, region })
}

/// Region test on the barycentric parameters, following the usual
/// vertex / edge / interior classification.
fn closest_point(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3, ab: &Vec3, ac: &Vec3) -> (Vec3, Region) {
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Region::Vertex(0));
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Region::Vertex(1));
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (a + ab * t, Region::Edge(0));
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Region::Vertex(2));
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (a + ac * t, Region::Edge(2));
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * t, Region::Edge(1));
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Region::Face)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn unit_tri() -> [Vec3; 3] {
        [Vec3::zeros(), Vec3::x(), Vec3::y()]
    }

    /// Minimum over barycentric lattices, zooming in on the best sample.
    /// Squared distance is convex over the triangle, so the refinement
    /// converges to the true minimum.
    fn sampled_sqdist(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
        let at = |u: f64, v: f64| tri[0] * (1.0 - u - v) + tri[1] * u + tri[2] * v;
        let (mut cu, mut cv, mut half) = (0.5, 0.5, 0.5);
        let mut best = f64::INFINITY;
        for _ in 0..12 {
            let n = 60;
            let (mut bu, mut bv) = (cu, cv);
            for i in 0..=n {
                for j in 0..=n {
                    let u = (cu - half + 2.0 * half * i as f64 / n as f64).clamp(0.0, 1.0);
                    let v = (cv - half + 2.0 * half * j as f64 / n as f64).clamp(0.0, 1.0 - u);
                    let d = (p - at(u, v)).norm_squared();
                    if d < best {
                        best = d;
                        (bu, bv) = (u, v);
                    }
                }
            }
            (cu, cv) = (bu, bv);
            half *= 0.25;
        }
        best
    }

    /// Minimum over the interior projection (when it lands inside) and the
    /// three clamped segment projections.
    fn enumerated_sqdist(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
        let seg = |a: &Vec3, b: &Vec3| {
            let t = ((p - a).dot(&(b - a)) / (b - a).norm_squared()).clamp(0.0, 1.0);
            (p - (a + (b - a) * t)).norm_squared()
        };
        let mut best = seg(&tri[0], &tri[1]).min(seg(&tri[1], &tri[2])).min(seg(&tri[2], &tri[0]));
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
        let q = p - n * n.dot(&(p - tri[0]));
        let inside = (0..3).all(|k| {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            (b - a).cross(&(q - a)).dot(&n) >= 0.0
        });
        if inside {
            best = best.min((p - q).norm_squared());
        }
        best
    }

    #[test]
    fn named_cases() {
        let t = unit_tri();
        let r = point_triangle_sqdist(&Vec3::new(0.25, 0.25, 3.0), &t).unwrap();
        assert_eq!(r.region, Region::Face);
        assert!((r.sqdist - 9.0).abs() < 1e-12);
        assert!((r.closest - Vec3::new(0.25, 0.25, 0.0)).norm() < 1e-12);

        let r = point_triangle_sqdist(&Vec3::new(2.0, 0.0, 0.0), &t).unwrap();
        assert_eq!(r.region, Region::Vertex(1));
        assert_eq!(r.sqdist, 1.0);
        assert_eq!(r.closest, Vec3::x());

        let r = point_triangle_sqdist(&Vec3::new(0.5, -1.0, 0.0), &t).unwrap();
        assert_eq!(r.region, Region::Edge(0));
        assert!((r.sqdist - 1.0).abs() < 1e-12);
        assert!((r.closest - Vec3::new(0.5, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn point_on_triangle_is_zero() {
        let r = point_triangle_sqdist(&Vec3::new(0.2, 0.3, 0.0), &unit_tri()).unwrap();
        assert!(r.sqdist < 1e-24);
        assert_eq!(r.region, Region::Face);
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let t = [Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 2.0, 2.0)];
        assert!(matches!(point_triangle_sqdist(&Vec3::zeros(), &t), Err(Error::DegenerateFace { .. })));
    }

    #[test]
    fn matches_lattice_oracle_and_covers_all_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut seen = HashSet::new();
        let rand_vec = |rng: &mut ChaCha8Rng, r: f64| {
            Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
        };
        for _ in 0..1000 {
            let tri = [rand_vec(&mut rng, 1.0), rand_vec(&mut rng, 1.0), rand_vec(&mut rng, 1.0)];
            if 0.5 * (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm() < 1e-3 {
                continue;
            }
            let p = rand_vec(&mut rng, 2.0);
            let r = point_triangle_sqdist(&p, &tri).unwrap();
            seen.insert(r.region);
            let sampled = sampled_sqdist(&p, &tri);
            assert!(r.sqdist <= sampled + 1e-12);
            assert!(sampled - r.sqdist < 1e-4, "{} vs {}", r.sqdist, sampled);
            assert!((enumerated_sqdist(&p, &tri) - r.sqdist).abs() < 1e-9);
            assert!(((p - r.closest).norm_squared() - r.sqdist).abs() < 1e-12);
        }
        assert_eq!(seen.len(), 7, "{seen:?}");
    }
}
