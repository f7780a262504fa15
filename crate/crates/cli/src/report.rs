//! Artifact writers. Floats are always printed as `{:.16e}` (17 significant
//! digits) so reruns of one config produce byte-identical files.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use osm_lab::exchange::write_matrix;
use osm_lab::mesh::Mesh;
use osm_lab::skeleton::ConvergenceHistory;
use osm_lab::{ComplexMatrix, ComplexVector};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::RunError;

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON with fixed-width floats.
struct FixedFloats<'a>(PrettyFormatter<'a>);

impl Formatter for FixedFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloats(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("report types serialize infallibly");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

fn write(path: &Path, contents: &str) -> Result<PathBuf, RunError> {
    std::fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, RunError> {
    write(path, &to_json(value))
}

/// `iter,res` with one row per recorded residual.
pub fn write_residual_history(path: &Path, history: &ConvergenceHistory) -> Result<PathBuf, RunError> {
    let mut out = String::from("iter,res\n");
    for &(n, r) in &history.residuals {
        let _ = writeln!(out, "{n},{}", float(r));
    }
    write(path, &out)
}

/// `vertex_index,re,im`.
pub fn write_solution_csv(path: &Path, values: &ComplexVector) -> Result<PathBuf, RunError> {
    let mut out = String::from("vertex_index,re,im\n");
    for (i, z) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", float(z.re), float(z.im));
    }
    write(path, &out)
}

/// Legacy ASCII VTK unstructured grid with point scalars `re` and `im`.
pub fn write_vtk(path: &Path, mesh: &Mesh, values: &ComplexVector) -> Result<PathBuf, RunError> {
    let mut out = String::from("# vtk DataFile Version 3.0\nosm-lab solution\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.num_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(out, "{} {} 0", float(p[0]), float(p[1]));
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {}", mesh.num_vertices());
    for (name, part) in [("re", 0), ("im", 1)] {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for z in values.iter() {
            let x = if part == 0 { z.re } else { z.im };
            let _ = writeln!(out, "{}", float(x));
        }
    }
    write(path, &out)
}

/// Dense operator as `row col re im` lines.
pub fn write_operator(path: &Path, m: &ComplexMatrix) -> Result<PathBuf, RunError> {
    let mut buf = Vec::new();
    write_matrix(m, &mut buf).expect("writing to memory cannot fail");
    write(path, &String::from_utf8(buf).expect("ASCII output"))
}

/// `theta,n_theta`; runs that did not converge are written as `NA`.
pub fn write_sweep(path: &Path, rows: &[(f64, Option<usize>)]) -> Result<PathBuf, RunError> {
    let mut out = String::from("theta,n_theta\n");
    for &(theta, n) in rows {
        match n {
            Some(n) => {
                let _ = writeln!(out, "{},{n}", float(theta));
            }
            None => {
                let _ = writeln!(out, "{},NA", float(theta));
            }
        }
    }
    write(path, &out)
}
