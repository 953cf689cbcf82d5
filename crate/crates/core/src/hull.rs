//! Planar convex hull for restricting predictions to the monitoring network.

use crate::geometry::PlanarCoord;

/// Counter-clockwise hull vertices without repeated endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    vertices: Vec<PlanarCoord>,
}

fn cross(o: &PlanarCoord, a: &PlanarCoord, b: &PlanarCoord) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

impl ConvexHull {
    /// Andrew's monotone chain.
    pub fn new(points: &[PlanarCoord]) -> Self {
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup();
        if pts.len() < 3 {
            return Self { vertices: pts };
        }
        let mut lower: Vec<PlanarCoord> = Vec::new();
        for p in &pts {
            while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
                lower.pop();
            }
            lower.push(*p);
        }
        let mut upper: Vec<PlanarCoord> = Vec::new();
        for p in pts.iter().rev() {
            while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
                upper.pop();
            }
            upper.push(*p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Self { vertices: lower }
    }

    pub fn vertices(&self) -> &[PlanarCoord] {
        &self.vertices
    }

    /// True for points inside or on the boundary, with `tol` km of slack.
    pub fn contains(&self, p: &PlanarCoord, tol: f64) -> bool {
        match self.vertices.len() {
            0 => false,
            1 => self.vertices[0].distance(p) <= tol,
            2 => segment_distance(&self.vertices[0], &self.vertices[1], p) <= tol,
            n => (0..n).all(|i| {
                let a = &self.vertices[i];
                let b = &self.vertices[(i + 1) % n];
                let len = a.distance(b);
                cross(a, b, p) >= -tol * len
            }),
        }
    }
}

fn segment_distance(a: &PlanarCoord, b: &PlanarCoord, p: &PlanarCoord) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return a.distance(p);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    PlanarCoord::new(a.x + t * dx, a.y + t * dy).distance(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> ConvexHull {
        ConvexHull::new(&[
            PlanarCoord::new(0.0, 0.0),
            PlanarCoord::new(1.0, 0.0),
            PlanarCoord::new(1.0, 1.0),
            PlanarCoord::new(0.0, 1.0),
            PlanarCoord::new(0.5, 0.5),
            PlanarCoord::new(0.5, 0.0),
        ])
    }

    #[test]
    fn interior_points_dropped() {
        assert_eq!(square().vertices().len(), 4);
    }

    #[test]
    fn boundary_is_inside() {
        let h = square();
        assert!(h.contains(&PlanarCoord::new(0.5, 0.5), 0.0));
        assert!(h.contains(&PlanarCoord::new(1.0, 0.3), 0.0));
        assert!(h.contains(&PlanarCoord::new(0.0, 0.0), 0.0));
        assert!(!h.contains(&PlanarCoord::new(1.01, 0.5), 0.0));
        assert!(h.contains(&PlanarCoord::new(1.01, 0.5), 0.02));
    }

    #[test]
    fn degenerate_hulls() {
        let seg = ConvexHull::new(&[PlanarCoord::new(0.0, 0.0), PlanarCoord::new(2.0, 0.0)]);
        assert!(seg.contains(&PlanarCoord::new(1.0, 0.0), 1e-9));
        assert!(!seg.contains(&PlanarCoord::new(1.0, 0.1), 1e-9));
        assert!(!ConvexHull::new(&[]).contains(&PlanarCoord::new(0.0, 0.0), 1.0));
    }
}
