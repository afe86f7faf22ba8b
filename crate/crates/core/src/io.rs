//! CSV and JSON output, CSV profile input. Files are written to a temporary
//! sibling and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::carleman::SweepCurve;
use crate::control::DualityRow;
use crate::error::{Error, Result};
use crate::mesh::{GradedMesh, GridFunction};
use crate::scalar::Scalar;
use crate::tridiag::Tridiagonal;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp: PathBuf = path.to_path_buf();
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    tmp.set_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn write_rows<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// `x,value` for a space field.
pub fn write_profile<T: Scalar>(path: &Path, f: &GridFunction<T>) -> Result<()> {
    f.require_space()?;
    let mesh = f.mesh();
    write_rows(
        path,
        &["x", "value"],
        mesh.nodes()
            .iter()
            .zip(f.values())
            .map(|(x, v)| (x.as_f64(), v.as_f64())),
    )
}

/// `x,t,value` for a space-time field, time-major.
pub fn write_space_time<T: Scalar>(path: &Path, f: &GridFunction<T>) -> Result<()> {
    f.require_space_time()?;
    let mesh = f.mesh();
    let rows = (0..=mesh.steps()).flat_map(|j| {
        let t = mesh.time(j).as_f64();
        mesh.nodes()
            .iter()
            .zip(f.slice(j))
            .map(move |(x, v)| (x.as_f64(), t, v.as_f64()))
    });
    write_rows(path, &["x", "t", "value"], rows)
}

/// Two columns against the time grid, e.g. `t,conormal_trace` or `t,g`.
pub fn write_time_series<T: Scalar>(path: &Path, mesh: &GradedMesh<T>, column: &str, values: &[T]) -> Result<()> {
    if values.len() != mesh.steps() + 1 {
        return Err(Error::MeshMismatch(format!(
            "{} samples for {} time nodes",
            values.len(),
            mesh.steps() + 1
        )));
    }
    write_rows(
        path,
        &["t", column],
        values
            .iter()
            .enumerate()
            .map(|(j, v)| (mesh.time(j).as_f64(), v.as_f64())),
    )
}

/// `i,lower,diag,upper`.
pub fn write_tridiagonal<T: Scalar>(path: &Path, m: &Tridiagonal<T>) -> Result<()> {
    let rows = (0..m.len()).map(|i| (i, m.lower[i].as_f64(), m.diag[i].as_f64(), m.upper[i].as_f64()));
    write_rows(path, &["i", "lower", "diag", "upper"], rows)
}

/// `s,lhs_cubic,lhs_linear,lhs_gradient,rhs,ratio`; an undefined ratio is an
/// empty field.
pub fn write_sweep<T: Scalar>(path: &Path, curve: &SweepCurve<T>) -> Result<()> {
    let rows = curve.points.iter().map(|p| {
        (
            p.s.as_f64(),
            p.sides.lhs_cubic.as_f64(),
            p.sides.lhs_linear.as_f64(),
            p.sides.lhs_gradient.as_f64(),
            p.sides.rhs.as_f64(),
            p.ratio.map(|r| r.as_f64()),
        )
    });
    write_rows(
        path,
        &["s", "lhs_cubic", "lhs_linear", "lhs_gradient", "rhs", "ratio"],
        rows,
    )
}

/// `case,lhs,rhs,gap`.
pub fn write_duality<T: Scalar>(path: &Path, rows: &[(String, DualityRow<T>)]) -> Result<()> {
    let rows = rows
        .iter()
        .map(|(name, r)| (name.as_str(), r.lhs.as_f64(), r.rhs.as_f64(), r.gap.as_f64()));
    write_rows(path, &["case", "lhs", "rhs", "gap"], rows)
}

/// Reads `x,value` pairs (header row required), sorted by `x`.
pub fn read_profile(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for rec in r.deserialize() {
        let (x, v): (f64, f64) = rec?;
        if !x.is_finite() || !v.is_finite() {
            return Err(Error::Parse(format!("non-finite entry in {}", path.display())));
        }
        out.push((x, v));
    }
    if out.len() < 2 {
        return Err(Error::Parse(format!("{} needs at least two rows", path.display())));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Piecewise-linear interpolation of `table` at `x`, constant beyond the ends.
pub fn interpolate(table: &[(f64, f64)], x: f64) -> f64 {
    let k = table.partition_point(|&(xi, _)| xi < x);
    if k == 0 {
        return table[0].1;
    }
    if k == table.len() {
        return table[k - 1].1;
    }
    let (x0, y0) = table[k - 1];
    let (x1, y1) = table[k];
    if x1 == x0 {
        return y1;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation() {
        let t = [(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)];
        assert_eq!(interpolate(&t, 0.25), 0.5);
        assert_eq!(interpolate(&t, 0.5), 1.0);
        assert_eq!(interpolate(&t, -1.0), 0.0);
        assert_eq!(interpolate(&t, 2.0), 0.0);
    }

    #[test]
    fn profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = GradedMesh::<f64>::build(8, 2.0, 4, 1.0).unwrap();
        let f = GridFunction::from_fn(mesh.clone(), |x| x * (1.0 - x)).unwrap();
        let path = dir.path().join("sub").join("p.csv");
        write_profile(&path, &f).unwrap();
        let table = read_profile(&path).unwrap();
        assert_eq!(table.len(), 9);
        for (&(x, v), &u) in table.iter().zip(f.values()) {
            assert_eq!(v, u);
            assert_eq!(interpolate(&table, x), u);
        }
        let names: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn malformed_profile_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x,value\n0.0,abc\n").unwrap();
        assert!(read_profile(&path).is_err());
        fs::write(&path, "x,value\n0.0,1.0\n").unwrap();
        assert!(matches!(read_profile(&path), Err(Error::Parse(_))));
    }
}
