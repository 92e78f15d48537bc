use crate::geometry::{dist, PlanarPoint};

/// Convex hull vertices in counter-clockwise order, starting from the
/// lowest-x (then lowest-y) vertex. Degenerate inputs give one vertex (all
/// points equal) or two (all points collinear).
#[derive(Debug, Clone, PartialEq)]
pub struct Hull {
    vertices: Vec<PlanarPoint>,
}

impl Hull {
    pub fn vertices(&self) -> &[PlanarPoint] {
        &self.vertices
    }

    pub fn contains(&self, q: PlanarPoint) -> bool {
        distance_to_hull(q, self) == 0.0
    }
}

fn cross(o: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain.
///
/// # Panics
///
/// If `points` is empty.
pub fn convex_hull(points: &[PlanarPoint]) -> Hull {
    assert!(!points.is_empty(), "convex hull of an empty point set");
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Hull { vertices: pts };
    }

    let mut lower: Vec<PlanarPoint> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<PlanarPoint> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    Hull { vertices: lower }
}

fn closest_on_segment(q: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> PlanarPoint {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return a;
    }
    let t = (((q.x - a.x) * dx + (q.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    PlanarPoint::new(a.x + t * dx, a.y + t * dy)
}

/// Closest point of the hull (boundary or interior) to `q`.
pub fn project_onto_hull(q: PlanarPoint, hull: &Hull) -> PlanarPoint {
    let v = &hull.vertices;
    match v.len() {
        1 => return v[0],
        2 => return closest_on_segment(q, v[0], v[1]),
        _ => {}
    }
    let n = v.len();
    if (0..n).all(|i| cross(v[i], v[(i + 1) % n], q) >= 0.0) {
        return q;
    }
    (0..n)
        .map(|i| closest_on_segment(q, v[i], v[(i + 1) % n]))
        .min_by(|a, b| dist(q, *a).total_cmp(&dist(q, *b)))
        .expect("hull has edges")
}

/// Zero inside or on the hull, otherwise the distance to its boundary.
pub fn distance_to_hull(q: PlanarPoint, hull: &Hull) -> f64 {
    dist(q, project_onto_hull(q, hull))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn p(x: f64, y: f64) -> PlanarPoint {
        PlanarPoint::new(x, y)
    }

    /// Jarvis march, used as an independent check.
    fn gift_wrap(points: &[PlanarPoint]) -> Vec<PlanarPoint> {
        let start = *points
            .iter()
            .min_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)))
            .unwrap();
        let mut hull = vec![start];
        let mut current = start;
        loop {
            let mut candidate = if points[0] == current { points[1] } else { points[0] };
            for &r in points {
                if r == current {
                    continue;
                }
                let c = cross(current, candidate, r);
                // r is clockwise of candidate, or collinear and farther
                if c < 0.0 || (c == 0.0 && dist(current, r) > dist(current, candidate)) {
                    candidate = r;
                }
            }
            if candidate == start {
                break;
            }
            hull.push(candidate);
            current = candidate;
        }
        hull
    }

    #[test]
    fn triangle_is_its_own_hull() {
        let pts = [p(0.0, 0.0), p(10.0, 0.0), p(3.0, 7.0)];
        let h = convex_hull(&pts);
        assert_eq!(h.vertices(), &[p(0.0, 0.0), p(10.0, 0.0), p(3.0, 7.0)]);
    }

    #[test]
    fn interior_point_excluded() {
        let pts = [p(0.0, 0.0), p(10.0, 0.0), p(3.0, 2.0), p(3.0, 7.0)];
        assert_eq!(convex_hull(&pts).vertices().len(), 3);
        assert!(!convex_hull(&pts).vertices().contains(&p(3.0, 2.0)));
    }

    #[test]
    fn degenerate_inputs() {
        let one = convex_hull(&[p(1.0, 1.0), p(1.0, 1.0)]);
        assert_eq!(one.vertices(), &[p(1.0, 1.0)]);
        let line = convex_hull(&[p(0.0, 0.0), p(2.0, 2.0), p(1.0, 1.0), p(3.0, 3.0)]);
        assert_eq!(line.vertices(), &[p(0.0, 0.0), p(3.0, 3.0)]);
        assert_eq!(distance_to_hull(p(3.0, 0.0), &line), (4.5f64).sqrt());
        assert_eq!(distance_to_hull(p(4.0, 3.0), &line), 1.0);
        assert_eq!(distance_to_hull(p(4.0, 5.0), &one), 5.0);
    }

    #[test]
    #[should_panic]
    fn empty_input_panics() {
        convex_hull(&[]);
    }

    #[test]
    fn matches_gift_wrapping() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let pts: Vec<_> = (0..100)
                .map(|_| p(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)))
                .collect();
            let h = convex_hull(&pts);
            assert_eq!(h.vertices(), gift_wrap(&pts).as_slice());
        }
    }

    #[test]
    fn hull_distances() {
        let tri = convex_hull(&[p(0.0, 0.0), p(30.0, 0.0), p(0.0, 30.0)]);
        assert_eq!(distance_to_hull(p(30.0, 0.0), &tri), 0.0);
        assert_eq!(distance_to_hull(p(10.0, 10.0), &tri), 0.0);
        let square = convex_hull(&[p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)]);
        assert_eq!(distance_to_hull(p(0.5, -10.0), &square), 10.0);
        assert_eq!(distance_to_hull(p(11.0, 0.5), &square), 10.0);
        assert_eq!(distance_to_hull(p(4.0, 5.0), &square), 5.0);
        assert_eq!(project_onto_hull(p(0.5, -10.0), &square), p(0.5, 0.0));
    }
}
