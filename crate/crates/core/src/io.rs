//! File formats: CSV point data behind a one-line `# {json}` config header,
//! JSON records and JSON-lines branches.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::{ManifoldArc, ManifoldSide};
use crate::maps::Point3;
use crate::orbits::{CellClass, ChaosMap, ChaosSystem, PoincareCloud};
use crate::periodic::{BranchEvent, ContinuationBranch, PeriodicOrbit, Stability};

/// Serde adapter writing infinities and NaN as the strings "inf", "-inf", "nan".
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number, got {other:?}"
                ))),
            },
        }
    }
}

fn header_line<W: Write, C: Serialize>(w: &mut W, config: &C) -> Result<()> {
    writeln!(w, "# {}", serde_json::to_string(config)?)?;
    Ok(())
}

/// Reads the `# {json}` header line, if present, and returns it parsed.
pub fn read_header<R: BufRead>(r: &mut R) -> Result<Option<serde_json::Value>> {
    let buf = r.fill_buf()?;
    if buf.first() != Some(&b'#') {
        return Ok(None);
    }
    let mut line = String::new();
    r.read_line(&mut line)?;
    Ok(Some(serde_json::from_str(
        line.trim_start_matches('#').trim(),
    )?))
}

/// Point cloud as rows `seed_id,step,x,y,z`.
pub fn write_cloud_csv<W: Write, C: Serialize>(
    w: W,
    config: &C,
    cloud: &PoincareCloud,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    header_line(&mut w, config)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["seed_id", "step", "x", "y", "z"])?;
    for p in &cloud.points {
        csv.serialize((p.seed_id, p.step, p.point.x, p.point.y, p.point.z))?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudRow {
    pub seed_id: usize,
    pub step: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub fn read_cloud_csv<R: std::io::Read>(r: R) -> Result<Vec<CloudRow>> {
    let mut csv = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    csv.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Plain `x,y,z` rows.
pub fn write_points_csv<W: Write, C: Serialize>(w: W, config: &C, points: &[Point3]) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    header_line(&mut w, config)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["x", "y", "z"])?;
    for p in points {
        csv.serialize((p.x, p.y, p.z))?;
    }
    csv.flush()?;
    Ok(())
}

/// Chaos grid as rows `layer,i,j,lyapunov,class`; off-surface cells leave lyapunov empty.
pub fn write_chaos_csv<W: Write, C: Serialize>(w: W, config: &C, map: &ChaosMap) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    header_line(&mut w, config)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["layer", "i", "j", "lyapunov", "class"])?;
    let per_layer = map.resolution * map.resolution;
    for (index, cell) in map.cells.iter().enumerate() {
        let rem = index % per_layer;
        let class = match cell.class {
            CellClass::Chaotic => "chaotic",
            CellClass::Regular => "regular",
            CellClass::Escaped => "escaped",
            CellClass::OffSurface => "off_surface",
        };
        csv.serialize((
            index / per_layer,
            rem % map.resolution,
            rem / map.resolution,
            cell.lyapunov,
            class,
        ))?;
    }
    csv.flush()?;
    Ok(())
}

/// JSON sidecar of a chaos grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosSidecar {
    #[serde(rename = "V", skip_serializing_if = "Option::is_none", default)]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<f64>,
    pub res: usize,
    pub n: usize,
    pub threshold: f64,
    pub chaotic_fraction: f64,
    pub on_surface: usize,
    pub chaotic: usize,
}

impl From<&ChaosMap> for ChaosSidecar {
    fn from(m: &ChaosMap) -> Self {
        let (level, k) = match m.system {
            ChaosSystem::TraceMap { level, .. } => (Some(level), None),
            ChaosSystem::StandardMap { k } => (None, Some(k)),
        };
        Self {
            level,
            k,
            res: m.resolution,
            n: m.n,
            threshold: m.threshold,
            chaotic_fraction: m.chaotic_fraction(),
            on_surface: m.on_surface(),
            chaotic: m.chaotic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitRecord {
    #[serde(rename = "V")]
    pub level: f64,
    pub period: usize,
    pub points: Vec<Point3>,
    pub trace: f64,
    pub stability: Stability,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lower_period: Option<usize>,
}

impl From<&PeriodicOrbit> for PeriodicOrbitRecord {
    fn from(o: &PeriodicOrbit) -> Self {
        Self {
            level: o.level,
            period: o.period,
            points: o.points.clone(),
            trace: o.residual_trace,
            stability: o.stability,
            residual: o.newton_residual,
            lower_period: o.lower_period,
        }
    }
}

/// One JSON object per line: every branch orbit, then every event.
pub fn write_branch_jsonl<W: Write>(w: W, branch: &ContinuationBranch) -> Result<()> {
    #[derive(Serialize)]
    #[serde(tag = "record", rename_all = "lowercase")]
    enum Line<'a> {
        Orbit(PeriodicOrbitRecord),
        Event(&'a BranchEvent),
    }
    let mut w = std::io::BufWriter::new(w);
    for o in &branch.orbits {
        serde_json::to_writer(&mut w, &Line::Orbit(o.into()))?;
        w.write_all(b"\n")?;
    }
    for e in &branch.events {
        serde_json::to_writer(&mut w, &Line::Event(e))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Header of an arc file: the owning orbit and how the arc was grown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcHeader {
    pub owner: PeriodicOrbitRecord,
    pub side: ManifoldSide,
    pub arclength: f64,
    pub refinement_tol: f64,
    pub max_segment: f64,
    pub truncated: bool,
    pub unresolved: usize,
}

impl From<&ManifoldArc> for ArcHeader {
    fn from(a: &ManifoldArc) -> Self {
        Self {
            owner: (&a.owner).into(),
            side: a.side,
            arclength: a.arclength,
            refinement_tol: a.refinement_tol,
            max_segment: a.max_segment,
            truncated: a.truncated,
            unresolved: a.unresolved,
        }
    }
}

/// Arc polyline as rows `param,x,y,z`; the periodic point's parameter is written as `-inf`.
/// The header carries `config` next to the arc's own [`ArcHeader`].
pub fn write_arc_csv<W: Write, C: Serialize>(w: W, config: &C, arc: &ManifoldArc) -> Result<()> {
    #[derive(Serialize)]
    struct Header<'a, C> {
        config: &'a C,
        arc: ArcHeader,
    }
    let mut w = std::io::BufWriter::new(w);
    header_line(
        &mut w,
        &Header {
            config,
            arc: ArcHeader::from(arc),
        },
    )?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["param", "x", "y", "z"])?;
    for (u, p) in arc.params.iter().zip(&arc.vertices) {
        let u = if u.is_finite() {
            u.to_string()
        } else {
            "-inf".to_string()
        };
        csv.serialize((u, p.x, p.y, p.z))?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::{grid_seeds, poincare_cloud, stdmap_chaos_grid};

    #[test]
    fn cloud_round_trip_and_determinism() {
        let seeds = grid_seeds(-0.5, 4);
        let cloud = poincare_cloud(-0.5, &seeds, 50);
        let config = serde_json::json!({"V": -0.5, "n": 50});
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_cloud_csv(&mut a, &config, &cloud).unwrap();
        write_cloud_csv(&mut b, &config, &poincare_cloud(-0.5, &seeds, 50)).unwrap();
        assert_eq!(a, b);
        let mut reader = std::io::BufReader::new(a.as_slice());
        assert_eq!(read_header(&mut reader).unwrap().unwrap(), config);
        let rows = read_cloud_csv(a.as_slice()).unwrap();
        assert_eq!(rows.len(), cloud.points.len());
        let p = cloud.points[7];
        assert_eq!(
            (rows[7].x, rows[7].y, rows[7].z),
            (p.point.x, p.point.y, p.point.z)
        );
    }

    #[test]
    fn chaos_sidecar_fields() {
        let m = stdmap_chaos_grid(1.5, 4, 200, 0.01).unwrap();
        let s = serde_json::to_value(ChaosSidecar::from(&m)).unwrap();
        assert_eq!(s["k"], 1.5);
        assert!(s.get("V").is_none());
        assert_eq!(s["res"], 4);
        let mut out = Vec::new();
        write_chaos_csv(&mut out, &s, &m).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().lines().count(), 2 + 16);
    }

    #[test]
    fn arc_csv_has_owner_header() {
        use crate::manifolds::grow_manifold;
        use crate::periodic::{find_periodic, period_two_at_level};
        let po = find_periodic(-0.05, 2, period_two_at_level(-0.05).unwrap()).unwrap();
        let arc = grow_manifold(&po, ManifoldSide::Unstable, 1.0, 0.02).unwrap();
        let mut out = Vec::new();
        write_arc_csv(&mut out, &serde_json::json!({"run": 1}), &arc).unwrap();
        let mut reader = std::io::BufReader::new(out.as_slice());
        let mut value = read_header(&mut reader).unwrap().unwrap();
        assert_eq!(value["config"]["run"], 1);
        let header: ArcHeader = serde_json::from_value(value["arc"].take()).unwrap();
        assert_eq!(header.owner.period, 2);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2 + arc.vertices.len());
        assert!(text.lines().nth(2).unwrap().starts_with("-inf,"));
    }

    #[test]
    fn infinite_values_survive_json() {
        #[derive(Serialize, Deserialize)]
        struct W(#[serde(with = "extended_f64")] f64);
        let s = serde_json::to_string(&W(f64::INFINITY)).unwrap();
        assert_eq!(s, "\"inf\"");
        assert_eq!(serde_json::from_str::<W>(&s).unwrap().0, f64::INFINITY);
        assert_eq!(serde_json::from_str::<W>("2.5").unwrap().0, 2.5);
    }
}
