//! Exact 2-D geometry on projection planes: convex hulls, shoelace areas and
//! hull-containment counting.
//!
//! All predicates use exact sign-of-cross-product arithmetic; only the
//! boundary classification in containment tests applies [`BOUNDARY_TOL`], so
//! a data point sitting exactly on a hull edge counts as explained.

use crate::error::{HugError, Result};

/// Absolute tolerance for classifying a point as lying on a hull boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// A point on a projection plane, in normalized (dimensionless) units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Cross product of (a - o) and (b - o); positive when o→a→b turns
/// counter-clockwise.
#[inline]
pub fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// A convex hull as a counter-clockwise vertex list without a repeated
/// endpoint. Fewer than three vertices encode a degenerate (zero-area) hull.
#[derive(Debug, Clone, PartialEq)]
pub struct Hull2 {
    vertices: Vec<Point2>,
}

impl Hull2 {
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    /// True when the hull has zero area (fewer than three vertices).
    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3
    }
}

/// Convex hull by Andrew's monotone chain. Collinear boundary points are
/// excluded from the vertex list; degenerate inputs (single point, all
/// collinear) yield a zero-area hull of one or two vertices.
pub fn monotone_chain_hull(points: &[Point2]) -> Result<Hull2> {
    if points.is_empty() {
        return Err(HugError::domain("convex hull of an empty point set"));
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(HugError::domain(format!(
            "non-finite coordinate in hull input: ({}, {})",
            p.x, p.y
        )));
    }
    let mut sorted = points.to_vec();
    let mut hull = Vec::new();
    hull_into(&mut sorted, &mut hull);
    Ok(Hull2 { vertices: hull })
}

/// Nonnegative shoelace area of a hull; zero for degenerate hulls.
pub fn hull_area(hull: &Hull2) -> f64 {
    area_of(&hull.vertices)
}

/// Number of points inside the hull, counting the boundary as inside.
pub fn count_inside(hull: &Hull2, points: &[Point2]) -> usize {
    points.iter().filter(|p| contains(&hull.vertices, **p)).count()
}

/// Boundary-inclusive containment test against a hull.
pub fn point_in_hull(hull: &Hull2, p: Point2) -> bool {
    contains(&hull.vertices, p)
}

/// Monotone chain into a reusable output buffer. `points` is sorted in place;
/// `out` receives the ccw vertex list (possibly degenerate, possibly empty
/// when `points` is empty).
pub(crate) fn hull_into(points: &mut Vec<Point2>, out: &mut Vec<Point2>) {
    out.clear();
    if points.is_empty() {
        return;
    }
    points.sort_unstable_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    points.dedup();
    let n = points.len();
    if n <= 2 {
        out.extend_from_slice(points);
        return;
    }
    // Lower chain, then upper chain; strict turns drop collinear points.
    for &p in points.iter() {
        while out.len() >= 2 && cross(out[out.len() - 2], out[out.len() - 1], p) <= 0.0 {
            out.pop();
        }
        out.push(p);
    }
    let lower_len = out.len() + 1;
    for &p in points.iter().rev() {
        while out.len() >= lower_len && cross(out[out.len() - 2], out[out.len() - 1], p) <= 0.0 {
            out.pop();
        }
        out.push(p);
    }
    out.pop();
}

pub(crate) fn area_of(vertices: &[Point2]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for (i, a) in vertices.iter().enumerate() {
        let b = vertices[(i + 1) % vertices.len()];
        twice += a.x * b.y - b.x * a.y;
    }
    (twice / 2.0).abs()
}

pub(crate) fn contains(vertices: &[Point2], p: Point2) -> bool {
    match vertices.len() {
        0 => false,
        1 => {
            let v = vertices[0];
            (p.x - v.x).abs() <= BOUNDARY_TOL && (p.y - v.y).abs() <= BOUNDARY_TOL
        }
        2 => on_segment(vertices[0], vertices[1], p),
        n => {
            let mut prev = vertices[n - 1];
            for &v in vertices {
                if cross(prev, v, p) < -BOUNDARY_TOL {
                    return false;
                }
                prev = v;
            }
            true
        }
    }
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    cross(a, b, p).abs() <= BOUNDARY_TOL
        && p.x >= a.x.min(b.x) - BOUNDARY_TOL
        && p.x <= a.x.max(b.x) + BOUNDARY_TOL
        && p.y >= a.y.min(b.y) - BOUNDARY_TOL
        && p.y <= a.y.max(b.y) + BOUNDARY_TOL
}

pub(crate) fn count_inside_slice(vertices: &[Point2], points: &[Point2]) -> usize {
    points.iter().filter(|p| contains(vertices, **p)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(coords: &[(f64, f64)]) -> Vec<Point2> {
        coords.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    /// Extreme-point oracle: a point is a hull vertex iff it lies in no
    /// triangle of other points and strictly inside no segment of other
    /// points. Runs in O(n^4); fine for the small sets tested here.
    fn oracle_hull_vertices(points: &[Point2]) -> Vec<Point2> {
        let mut dedup: Vec<Point2> = Vec::new();
        for &p in points {
            if !dedup.contains(&p) {
                dedup.push(p);
            }
        }
        let mut extremes: Vec<Point2> = Vec::new();
        'candidate: for (i, &p) in dedup.iter().enumerate() {
            let others: Vec<Point2> = dedup
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| *q)
                .collect();
            for (ai, &a) in others.iter().enumerate() {
                for &b in &others[ai + 1..] {
                    if on_segment(a, b, p) {
                        continue 'candidate;
                    }
                }
            }
            for (ai, &a) in others.iter().enumerate() {
                for (bi, &b) in others.iter().enumerate().skip(ai + 1) {
                    for &c in &others[bi + 1..] {
                        let d1 = cross(a, b, p);
                        let d2 = cross(b, c, p);
                        let d3 = cross(c, a, p);
                        let orient = cross(a, b, c);
                        if orient != 0.0
                            && d1.signum() == orient.signum()
                            && d2.signum() == orient.signum()
                            && d3.signum() == orient.signum()
                        {
                            continue 'candidate;
                        }
                    }
                }
            }
            extremes.push(p);
        }
        extremes.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
        extremes
    }

    fn sorted_vertices(hull: &Hull2) -> Vec<Point2> {
        let mut v = hull.vertices().to_vec();
        v.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
        v
    }

    #[test]
    fn square_hull_has_four_vertices() {
        let hull =
            monotone_chain_hull(&pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])).unwrap();
        assert_eq!(hull.vertices().len(), 4);
        assert_eq!(hull_area(&hull), 1.0);
    }

    #[test]
    fn collinear_points_give_zero_area() {
        let hull = monotone_chain_hull(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])).unwrap();
        assert!(hull.is_degenerate());
        assert_eq!(hull_area(&hull), 0.0);
        assert_eq!(hull.vertices().len(), 2);
    }

    #[test]
    fn interior_and_boundary_points_excluded_from_vertices() {
        // Midpoint of an edge and the centroid are not vertices.
        let hull = monotone_chain_hull(&pts(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (1.0, 1.0),
            (0.0, 1.0),
            (0.5, 0.0),
            (0.4, 0.6),
        ]))
        .unwrap();
        assert_eq!(hull.vertices().len(), 4);
    }

    #[test]
    fn triangle_area() {
        let hull = monotone_chain_hull(&pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])).unwrap();
        assert_eq!(hull_area(&hull), 0.5);
    }

    #[test]
    fn empty_input_is_a_domain_error() {
        assert!(matches!(
            monotone_chain_hull(&[]),
            Err(HugError::Domain(_))
        ));
    }

    #[test]
    fn non_finite_input_is_a_domain_error() {
        assert!(monotone_chain_hull(&pts(&[(f64::NAN, 0.0)])).is_err());
    }

    #[test]
    fn random_points_match_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let points: Vec<Point2> = (0..12)
                .map(|_| Point2::new(rng.gen::<f64>(), rng.gen::<f64>()))
                .collect();
            let hull = monotone_chain_hull(&points).unwrap();
            assert_eq!(sorted_vertices(&hull), oracle_hull_vertices(&points));
        }
    }

    #[test]
    fn hull_area_matches_monte_carlo_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points: Vec<Point2> = (0..10)
            .map(|_| Point2::new(rng.gen::<f64>(), rng.gen::<f64>()))
            .collect();
        let hull = monotone_chain_hull(&points).unwrap();
        let area = hull_area(&hull);

        // Rejection-sampling oracle over the unit square (bbox of the draw).
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| point_in_hull(&hull, Point2::new(rng.gen(), rng.gen())))
            .count();
        let p = hits as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (area - p).abs() <= 3.0 * sigma,
            "area {area} vs MC {p} (3σ = {})",
            3.0 * sigma
        );
    }

    #[test]
    fn count_inside_counts_boundary_as_inside() {
        let hull =
            monotone_chain_hull(&pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])).unwrap();
        let probes = pts(&[
            (0.5, 0.5),  // interior
            (0.0, 0.5),  // edge
            (1.0, 1.0),  // vertex
            (1.1, 0.5),  // outside
            (-0.1, 0.0), // outside
        ]);
        assert_eq!(count_inside(&hull, &probes), 3);
    }

    #[test]
    fn count_inside_matches_per_edge_sign_oracle() {
        // Oracle: triangle-fan decomposition from the first hull vertex.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let cloud: Vec<Point2> = (0..15)
                .map(|_| Point2::new(rng.gen::<f64>(), rng.gen::<f64>()))
                .collect();
            let hull = monotone_chain_hull(&cloud[..8].to_vec()).unwrap();
            let probes = &cloud[8..];
            let fan_inside = |p: Point2| -> bool {
                let v = hull.vertices();
                if v.len() < 3 {
                    return contains(v, p);
                }
                (1..v.len() - 1).any(|i| {
                    let (a, b, c) = (v[0], v[i], v[i + 1]);
                    cross(a, b, p) >= -BOUNDARY_TOL
                        && cross(b, c, p) >= -BOUNDARY_TOL
                        && cross(c, a, p) >= -BOUNDARY_TOL
                })
            };
            let expected = probes.iter().filter(|p| fan_inside(**p)).count();
            assert_eq!(count_inside(&hull, probes), expected);
        }
    }

    #[test]
    fn degenerate_segment_containment() {
        let hull = monotone_chain_hull(&pts(&[(0.0, 0.0), (1.0, 1.0), (0.5, 0.5)])).unwrap();
        assert!(point_in_hull(&hull, Point2::new(0.25, 0.25)));
        assert!(!point_in_hull(&hull, Point2::new(2.0, 2.0))); // collinear but beyond
        assert!(!point_in_hull(&hull, Point2::new(0.5, 0.6)));
    }

    proptest! {
        #[test]
        fn hull_is_permutation_invariant_and_nonnegative(
            xs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..20),
            seed in 0u64..1000,
        ) {
            let points = pts(&xs);
            let hull = monotone_chain_hull(&points).unwrap();
            prop_assert!(hull_area(&hull) >= 0.0);

            let mut shuffled = points.clone();
            // Deterministic shuffle driven by the proptest seed.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.gen_range(0..=i));
            }
            let hull2 = monotone_chain_hull(&shuffled).unwrap();
            prop_assert_eq!(sorted_vertices(&hull), sorted_vertices(&hull2));
        }

        #[test]
        fn hull_is_idempotent(
            xs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..20),
        ) {
            let hull = monotone_chain_hull(&pts(&xs)).unwrap();
            if !hull.vertices().is_empty() {
                let again = monotone_chain_hull(hull.vertices()).unwrap();
                prop_assert_eq!(hull.vertices(), again.vertices());
            }
        }

        #[test]
        fn generating_points_are_inside_their_hull(
            xs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..20),
        ) {
            let points = pts(&xs);
            let hull = monotone_chain_hull(&points).unwrap();
            prop_assert_eq!(count_inside(&hull, &points), points.len());
        }

        #[test]
        fn convexity_of_vertex_walk(
            xs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..30),
        ) {
            let hull = monotone_chain_hull(&pts(&xs)).unwrap();
            let v = hull.vertices();
            if v.len() >= 3 {
                for i in 0..v.len() {
                    let a = v[i];
                    let b = v[(i + 1) % v.len()];
                    let c = v[(i + 2) % v.len()];
                    prop_assert!(cross(a, b, c) > 0.0, "non-ccw turn at vertex {}", i);
                }
            }
        }
    }
}
