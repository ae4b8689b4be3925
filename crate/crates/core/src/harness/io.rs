//! CSV ingestion and emission.
//!
//! Sphere files use `lon_deg,lat_deg,u_east,v_north`; torus files use
//! `theta_1..theta_d,v_1..v_d` with angles in radians and coordinate components.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::gp::{Dataset, Prediction};
use crate::manifold::{east_north_components, lonlat_to_point, point_to_lonlat, tangent_from_east_north, ManifoldPoint, TangentVector};

/// Rows with |latitude| above this are dropped on ingestion.
pub const MAX_INGEST_LATITUDE_DEG: f64 = 89.9;

pub const SPHERE_HEADER: [&str; 4] = ["lon_deg", "lat_deg", "u_east", "v_north"];
pub const GRID_HEADER: [&str; 5] = ["lon_deg", "lat_deg", "mean_east", "mean_north", "std_trace"];

/// Parsed file plus the number of rows dropped for being too close to a pole.
#[derive(Clone, Debug)]
pub struct Ingested {
    pub dataset: Dataset,
    pub rejected: usize,
}

enum Layout {
    Sphere,
    Torus(usize),
}

fn detect(header: &csv::StringRecord) -> Result<Layout> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names == SPHERE_HEADER {
        return Ok(Layout::Sphere);
    }
    let n = names.len();
    if n >= 2 && n % 2 == 0 {
        let d = n / 2;
        let ok = (0..d).all(|i| names[i] == format!("theta_{}", i + 1) && names[d + i] == format!("v_{}", i + 1));
        if ok {
            return Ok(Layout::Torus(d));
        }
    }
    Err(Error::Parse {
        line: 1,
        message: format!("unrecognised header `{}`", names.join(",")),
    })
}

fn parse_field(s: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {} is not a number: `{}`", column + 1, s.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column {} is not finite", column + 1),
        });
    }
    Ok(v)
}

/// Reads a sphere or torus observation file.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Ingested> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = reader.headers()?.clone();
    if header.is_empty() || header.iter().all(|h| h.trim().is_empty()) {
        return invalid(format!("{} is empty", path.display()));
    }
    let layout = detect(&header)?;
    let width = header.len();
    let mut obs = Vec::new();
    let mut rejected = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let vals = rec
            .iter()
            .enumerate()
            .map(|(c, s)| parse_field(s, line, c))
            .collect::<Result<Vec<f64>>>()?;
        match layout {
            Layout::Sphere => {
                if vals[1].abs() > MAX_INGEST_LATITUDE_DEG {
                    rejected += 1;
                    continue;
                }
                let x = lonlat_to_point(vals[0], vals[1]).map_err(|e| Error::Parse { line, message: e.to_string() })?;
                obs.push(tangent_from_east_north(&x, vals[2], vals[3]));
            }
            Layout::Torus(d) => {
                let p = ManifoldPoint::torus(&vals[..d]);
                obs.push(TangentVector::new(p, DVector::from_column_slice(&vals[d..]))?);
            }
        }
    }
    if rejected > 0 {
        warn!("{}: rejected {rejected} rows with |lat| > {MAX_INGEST_LATITUDE_DEG}", path.display());
    }
    if obs.is_empty() {
        return invalid(format!("{} contains no usable rows", path.display()));
    }
    Ok(Ingested {
        dataset: Dataset::new(obs)?,
        rejected,
    })
}

/// Writes a dataset in the format [`ingest_csv`] reads.
pub fn emit_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match data.points.first() {
        None => return invalid("refusing to write an empty dataset"),
        Some(ManifoldPoint::Sphere(_)) => {
            w.write_record(SPHERE_HEADER)?;
            for o in &data.observations {
                let x = o.base.as_sphere()?;
                let (lon, lat) = point_to_lonlat(x);
                let (u, v) = east_north_components(x, &o.as_vec3()?);
                w.write_record([lon, lat, u, v].iter().map(f64::to_string))?;
            }
        }
        Some(p) => {
            let d = p.manifold().dim();
            let mut header: Vec<String> = (1..=d).map(|i| format!("theta_{i}")).collect();
            header.extend((1..=d).map(|i| format!("v_{i}")));
            w.write_record(&header)?;
            for o in &data.observations {
                let mut row = o.base.angles()?;
                row.extend(o.components.iter());
                w.write_record(row.iter().map(f64::to_string))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Regular lat-lon grid: latitudes −90..=90 and longitudes −180..180 (exclusive).
pub fn lonlat_grid(n_lat: usize, n_lon: usize) -> Result<Vec<(f64, f64)>> {
    if n_lat < 2 || n_lon == 0 {
        return invalid("grid needs at least two latitudes and one longitude");
    }
    let dlat = 180.0 / (n_lat - 1) as f64;
    let dlon = 360.0 / n_lon as f64;
    Ok((0..n_lat)
        .flat_map(|i| (0..n_lon).map(move |j| (-180.0 + j as f64 * dlon, -90.0 + i as f64 * dlat)))
        .collect())
}

/// Writes sphere predictions as `lon_deg,lat_deg,mean_east,mean_north,std_trace`,
/// dividing means and standard deviations by `scale` to undo normalisation.
pub fn write_grid(path: impl AsRef<Path>, predictions: &[Prediction], scale: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(GRID_HEADER)?;
    for p in predictions {
        let x = p.point.as_sphere()?;
        let (lon, lat) = point_to_lonlat(x);
        let m = p.mean_vector();
        let (u, v) = east_north_components(x, &nalgebra::Vector3::new(m[0], m[1], m[2]));
        let row = [lon, lat, u / scale, v / scale, p.std_trace() / scale];
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes raw text, creating parent directories.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    File::create(path)?.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn east_vector_at_origin() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "lon_deg,lat_deg,u_east,v_north\n0,0,1,0\n");
        let d = ingest_csv(&p).unwrap().dataset;
        let o = &d.observations[0];
        assert_abs_diff_eq!(*o.base.as_sphere().unwrap(), Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(o.as_vec3().unwrap(), Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn polar_rows_rejected_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "lon_deg,lat_deg,u_east,v_north\n0,91,1,0\n0,89.95,1,1\n10,10,0,1\n");
        let ing = ingest_csv(&p).unwrap();
        assert_eq!(ing.rejected, 2);
        assert_eq!(ing.dataset.len(), 1);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "lon_deg,lat_deg,u_east,v_north\n0,0,1,0\n1,2,x,0\n");
        match ingest_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let p = write(&dir, "b.csv", "lon_deg,lat_deg,u_east,v_north\n0,0,1\n");
        assert!(matches!(ingest_csv(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_file_is_invalid_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "");
        assert!(matches!(ingest_csv(&p), Err(Error::InvalidInput(_))));
        let p = write(&dir, "b.csv", "lon_deg,lat_deg,u_east,v_north\n");
        assert!(matches!(ingest_csv(&p), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unknown_header_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,c\n1,2,3\n");
        assert!(matches!(ingest_csv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn sphere_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pts = [Vector3::new(0.3, -0.4, 0.5).normalize(), Vector3::new(-0.9, 0.1, -0.2).normalize()];
        let vs: Vec<_> = pts.iter().map(|x| x.cross(&Vector3::new(0.2, 0.7, -0.1))).collect();
        let d = Dataset::sphere(&pts, &vs).unwrap();
        let p = dir.path().join("rt.csv");
        emit_csv(&p, &d).unwrap();
        let back = ingest_csv(&p).unwrap().dataset;
        for (a, b) in d.observations.iter().zip(&back.observations) {
            assert_abs_diff_eq!(*a.base.as_sphere().unwrap(), *b.base.as_sphere().unwrap(), epsilon = 1e-9);
            assert_abs_diff_eq!(a.components, b.components, epsilon = 1e-9);
        }
    }

    #[test]
    fn torus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let obs = vec![
            TangentVector::new(ManifoldPoint::torus(&[0.5, 6.0]), DVector::from_vec(vec![1.0, -2.0])).unwrap(),
            TangentVector::new(ManifoldPoint::torus(&[3.0, 0.1]), DVector::from_vec(vec![0.25, 0.0])).unwrap(),
        ];
        let d = Dataset::new(obs).unwrap();
        let p = dir.path().join("t.csv");
        emit_csv(&p, &d).unwrap();
        let back = ingest_csv(&p).unwrap().dataset;
        for (a, b) in d.observations.iter().zip(&back.observations) {
            for (x, y) in a.base.angles().unwrap().iter().zip(b.base.angles().unwrap()) {
                assert_abs_diff_eq!(*x, y, epsilon = 1e-9);
            }
            assert_abs_diff_eq!(a.components, b.components, epsilon = 1e-9);
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = lonlat_grid(37, 72).unwrap();
        assert_eq!(g.len(), 37 * 72);
        assert_eq!(g[0], (-180.0, -90.0));
        assert_eq!(*g.last().unwrap(), (175.0, 90.0));
    }
}
