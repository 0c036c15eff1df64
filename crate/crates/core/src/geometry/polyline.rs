/// Mean Earth radius (IUGG), meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Equirectangular tangent plane anchored at a reference point. Adequate for
/// route-scale distances (tens of km) where the error is far below the
/// buffer-zone radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    anchor: LatLon,
    meters_per_deg_lat: f64,
    meters_per_deg_lon: f64,
}

impl LocalFrame {
    pub fn new(anchor: LatLon) -> Self {
        let m = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        Self {
            anchor,
            meters_per_deg_lat: m,
            meters_per_deg_lon: m * anchor.lat.to_radians().cos(),
        }
    }

    pub fn anchor(&self) -> LatLon {
        self.anchor
    }

    pub fn to_xy(&self, p: LatLon) -> [f64; 2] {
        [
            (p.lon - self.anchor.lon) * self.meters_per_deg_lon,
            (p.lat - self.anchor.lat) * self.meters_per_deg_lat,
        ]
    }

    pub fn to_latlon(&self, xy: [f64; 2]) -> LatLon {
        LatLon::new(
            self.anchor.lat + xy[1] / self.meters_per_deg_lat,
            self.anchor.lon + xy[0] / self.meters_per_deg_lon,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Meters along the polyline from its first vertex.
    pub arc_pos: f64,
    /// Distance from the query point to the nearest point on the polyline.
    pub offset: f64,
}

/// Shape points with cumulative arc length, in a local metric frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    frame: LocalFrame,
    xy: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

/// Distances within this tolerance are treated as ties.
const TIE_EPS: f64 = 1e-9;

impl Polyline {
    /// Builds from geographic points, anchoring the plane at their centroid.
    ///
    /// Panics if fewer than two points are given.
    pub fn new(points: &[LatLon]) -> Self {
        assert!(points.len() >= 2, "polyline needs at least 2 points");
        let n = points.len() as f64;
        let centroid = LatLon::new(
            points.iter().map(|p| p.lat).sum::<f64>() / n,
            points.iter().map(|p| p.lon).sum::<f64>() / n,
        );
        let frame = LocalFrame::new(centroid);
        let xy = points.iter().map(|p| frame.to_xy(*p)).collect();
        Self::from_planar(frame, xy)
    }

    /// Builds directly from planar coordinates in `frame`.
    pub fn from_planar(frame: LocalFrame, xy: Vec<[f64; 2]>) -> Self {
        assert!(xy.len() >= 2, "polyline needs at least 2 points");
        let mut cumulative = Vec::with_capacity(xy.len());
        cumulative.push(0.0);
        for w in xy.windows(2) {
            let prev = *cumulative.last().unwrap();
            cumulative.push(prev + dist(w[0], w[1]));
        }
        Self { frame, xy, cumulative }
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn vertex_count(&self) -> usize {
        self.xy.len()
    }

    pub fn vertex(&self, i: usize) -> LatLon {
        self.frame.to_latlon(self.xy[i])
    }

    pub fn vertex_arc(&self, i: usize) -> f64 {
        self.cumulative[i]
    }

    pub fn project(&self, p: LatLon) -> Projection {
        self.project_xy(self.frame.to_xy(p))
    }

    /// Nearest point over all segments; ties go to the smaller arc position.
    pub fn project_xy(&self, q: [f64; 2]) -> Projection {
        let mut best = Projection {
            arc_pos: f64::INFINITY,
            offset: f64::INFINITY,
        };
        for (i, w) in self.xy.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let seg = [b[0] - a[0], b[1] - a[1]];
            let len2 = seg[0] * seg[0] + seg[1] * seg[1];
            let t = if len2 > 0.0 {
                (((q[0] - a[0]) * seg[0] + (q[1] - a[1]) * seg[1]) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let foot = [a[0] + t * seg[0], a[1] + t * seg[1]];
            let d = dist(q, foot);
            let arc = self.cumulative[i] + t * (self.cumulative[i + 1] - self.cumulative[i]);
            if d < best.offset - TIE_EPS || ((d - best.offset).abs() <= TIE_EPS && arc < best.arc_pos) {
                best = Projection { arc_pos: arc, offset: d };
            }
        }
        best
    }

    /// Planar point at `arc` meters along the line (clamped to its extent).
    pub fn point_at_xy(&self, arc: f64) -> [f64; 2] {
        let arc = arc.clamp(0.0, self.total_length());
        let i = match self.cumulative.partition_point(|&c| c <= arc) {
            0 => 0,
            k => (k - 1).min(self.xy.len() - 2),
        };
        let span = self.cumulative[i + 1] - self.cumulative[i];
        let t = if span > 0.0 { (arc - self.cumulative[i]) / span } else { 0.0 };
        let (a, b) = (self.xy[i], self.xy[i + 1]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    pub fn point_at(&self, arc: f64) -> LatLon {
        self.frame.to_latlon(self.point_at_xy(arc))
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Arc position and perpendicular offset of `point` on `polyline`.
pub fn project_point(polyline: &Polyline, point: LatLon) -> Projection {
    polyline.project(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn north_south_1km() -> Polyline {
        let frame = LocalFrame::new(LatLon::new(29.65, -82.32));
        Polyline::new(&[frame.to_latlon([0.0, -500.0]), frame.to_latlon([0.0, 500.0])])
    }

    #[test]
    fn midpoint_projects_to_half_length() {
        let pl = north_south_1km();
        assert_abs_diff_eq!(pl.total_length(), 1000.0, epsilon = 1e-6);
        let p = project_point(&pl, pl.frame().to_latlon([0.0, 0.0]));
        assert_abs_diff_eq!(p.arc_pos, 500.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.offset, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn perpendicular_offset() {
        let pl = north_south_1km();
        let p = project_point(&pl, pl.frame().to_latlon([30.0, 0.0]));
        assert_abs_diff_eq!(p.arc_pos, 500.0, epsilon = 0.1);
        assert_abs_diff_eq!(p.offset, 30.0, epsilon = 0.1);
    }

    #[test]
    fn l_shape_tie_prefers_smaller_arc() {
        let frame = LocalFrame::new(LatLon::new(29.65, -82.32));
        let pl = Polyline::from_planar(frame, vec![[0.0, 0.0], [0.0, 100.0], [100.0, 100.0]]);
        let p = pl.project_xy([50.0, 50.0]);
        assert_abs_diff_eq!(p.arc_pos, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.offset, 50.0, epsilon = 1e-9);
    }

    #[test]
    fn point_at_inverts_arc() {
        let frame = LocalFrame::new(LatLon::new(29.65, -82.32));
        let pl = Polyline::from_planar(frame, vec![[0.0, 0.0], [300.0, 0.0], [300.0, 400.0]]);
        for arc in [0.0, 10.0, 299.0, 300.0, 450.0, 700.0] {
            let p = pl.project_xy(pl.point_at_xy(arc));
            assert_abs_diff_eq!(p.arc_pos, arc, epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn vertices_project_to_their_arc(
            steps in prop::collection::vec((10.0f64..500.0, -0.7f64..0.7), 1..8)
        ) {
            // A polyline that keeps heading roughly east never revisits itself.
            let mut pts = vec![[0.0, 0.0]];
            for (len, heading) in &steps {
                let last = *pts.last().unwrap();
                pts.push([last[0] + len * heading.cos(), last[1] + len * heading.sin()]);
            }
            let pl = Polyline::from_planar(LocalFrame::new(LatLon::new(29.65, -82.32)), pts);
            for i in 0..pl.vertex_count() {
                let p = pl.project(pl.vertex(i));
                prop_assert!((p.arc_pos - pl.vertex_arc(i)).abs() < 1e-6);
                prop_assert!(p.offset < 1e-6);
            }
        }
    }
}
