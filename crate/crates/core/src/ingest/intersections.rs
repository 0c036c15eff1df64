use std::collections::BTreeSet;
use std::path::Path;

use super::{data_lines, read_table, IngestError};
use crate::geometry::LatLon;

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: String,
    pub position: LatLon,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntersectionSet {
    pub points: Vec<Intersection>,
}

impl IntersectionSet {
    pub fn new(points: Vec<Intersection>) -> Result<Self, IngestError> {
        let mut ids = BTreeSet::new();
        for p in &points {
            if !ids.insert(p.id.as_str()) {
                return Err(IngestError::Duplicate {
                    file: "intersections".into(),
                    key: p.id.clone(),
                });
            }
        }
        Ok(Self { points })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("intersection_id,lat,lon\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.id, p.position.lat, p.position.lon));
        }
        out
    }
}

/// Reads `intersection_id,lat,lon` rows; a header row is optional.
pub fn load_intersections(path: impl AsRef<Path>) -> Result<IntersectionSet, IngestError> {
    let path = path.as_ref();
    let text = read_table(path)?;
    let source = path.display().to_string();
    let mut points = Vec::new();
    for (lineno, line) in data_lines(&text, "intersection_id") {
        let err = |message: String| IngestError::Parse {
            file: source.clone(),
            line: lineno,
            message,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 || f[0].is_empty() {
            return Err(err("expected intersection_id,lat,lon".into()));
        }
        let lat = f[1].parse().map_err(|_| err(format!("bad lat `{}`", f[1])))?;
        let lon = f[2].parse().map_err(|_| err(format!("bad lon `{}`", f[2])))?;
        points.push(Intersection {
            id: f[0].to_string(),
            position: LatLon::new(lat, lon),
        });
    }
    IntersectionSet::new(points).map_err(|e| match e {
        IngestError::Duplicate { key, .. } => IngestError::Duplicate { file: source, key },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "intersection_id,lat,lon\nI1,29.6,-82.3\nI1,29.7,-82.3\n").unwrap();
        assert!(matches!(load_intersections(&p), Err(IngestError::Duplicate { .. })));
    }

    #[test]
    fn loads_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "I1,29.6,-82.3\nI2,29.7,-82.4\n").unwrap();
        let xs = load_intersections(&p).unwrap();
        assert_eq!(xs.points.len(), 2);
        assert_eq!(xs.points[1].position, LatLon::new(29.7, -82.4));
    }
}
