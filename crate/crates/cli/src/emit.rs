//! File emission: CSV tables, OBJ meshes, and fixed float formatting.
//!
//! Floats are written as `{:.16e}` (17 significant digits) so that every value
//! round-trips and identical runs produce identical bytes.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Buffered file, or stdout when no path is given.
pub fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// One CSV cell.
pub enum Cell {
    F(f64),
    I(usize),
    S(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

pub fn write_csv<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(io::Error::other)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render)).map_err(io::Error::other)?;
    }
    w.flush()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeshOutput {
    pub vertices: Vec<[f64; 3]>,
    /// zero-based vertex indices
    pub faces: Vec<[usize; 3]>,
    /// polylines (OBJ `l` elements), zero-based
    pub lines: Vec<Vec<usize>>,
    pub metadata: Vec<(String, String)>,
}

fn triangle_area(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
}

impl MeshOutput {
    /// Adds the triangle unless it has zero area.
    pub fn push_face(&mut self, f: [usize; 3]) -> bool {
        let [a, b, c] = f.map(|i| self.vertices[i]);
        if triangle_area(a, b, c) > 0.0 {
            self.faces.push(f);
            true
        } else {
            false
        }
    }

    /// Quad `a b c d` (counter-clockwise) as two triangles.
    pub fn push_quad(&mut self, a: usize, b: usize, c: usize, d: usize) {
        self.push_face([a, b, c]);
        self.push_face([a, c, d]);
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn write_obj<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "# vertices: {}", self.vertices.len())?;
        writeln!(out, "# faces: {}", self.faces.len())?;
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(v[2]))?;
        }
        for f in &self.faces {
            writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        for l in &self.lines {
            let idx: Vec<String> = l.iter().map(|i| (i + 1).to_string()).collect();
            writeln!(out, "l {}", idx.join(" "))?;
        }
        out.flush()
    }
}

/// Surface of revolution of the profile `(r_i, z_i)`: vertices
/// `(r cos t, r sin t, z)` on `angular` equally spaced angles, closed in `t`.
pub fn revolve(profile: &[(f64, f64)], angular: usize) -> MeshOutput {
    let mut m = MeshOutput::default();
    for &(r, z) in profile {
        for j in 0..angular {
            let t = std::f64::consts::TAU * j as f64 / angular as f64;
            m.vertices.push([r * t.cos(), r * t.sin(), z]);
        }
    }
    for i in 0..profile.len().saturating_sub(1) {
        for j in 0..angular {
            let jn = (j + 1) % angular;
            let (a, b) = (i * angular + j, i * angular + jn);
            let (c, d) = ((i + 1) * angular + jn, (i + 1) * angular + j);
            m.push_quad(a, b, c, d);
        }
    }
    m
}

/// Boost-orbit surface `(s cosh t, s sinh t, f(s))`, `t` in `[-theta, theta]`.
pub fn boost_sweep(profile: &[(f64, f64)], angular: usize, theta: f64) -> MeshOutput {
    let mut m = MeshOutput::default();
    let count = angular.max(2);
    for &(s, f) in profile {
        for j in 0..count {
            let t = -theta + 2.0 * theta * j as f64 / (count - 1) as f64;
            m.vertices.push([s * t.cosh(), s * t.sinh(), f]);
        }
    }
    for i in 0..profile.len().saturating_sub(1) {
        for j in 0..count - 1 {
            let (a, b) = (i * count + j, i * count + j + 1);
            let (c, d) = ((i + 1) * count + j + 1, (i + 1) * count + j);
            m.push_quad(a, b, c, d);
        }
    }
    m
}

/// Height field over a square grid; `None` nodes are left out along with
/// every cell touching them.
pub fn height_field(xs: &[f64], ys: &[f64], z: impl Fn(usize, usize) -> Option<f64>) -> (MeshOutput, Vec<Vec<Option<usize>>>) {
    let mut m = MeshOutput::default();
    let mut index = vec![vec![None; ys.len()]; xs.len()];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            if let Some(v) = z(i, j) {
                index[i][j] = Some(m.vertices.len());
                m.vertices.push([x, y, v]);
            }
        }
    }
    for i in 0..xs.len().saturating_sub(1) {
        for j in 0..ys.len().saturating_sub(1) {
            if let (Some(a), Some(b), Some(c), Some(d)) =
                (index[i][j], index[i + 1][j], index[i + 1][j + 1], index[i][j + 1])
            {
                m.push_quad(a, b, c, d);
            }
        }
    }
    (m, index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 6.02e23, 5e-324, 1.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn revolve_counts() {
        let profile: Vec<(f64, f64)> = (1..=200).map(|i| (i as f64 / 20.0, (i * i) as f64 / 400.0)).collect();
        let m = revolve(&profile, 64);
        assert_eq!(m.vertices.len(), 12800);
        assert_eq!(m.faces.len(), 2 * 64 * 199);
        assert!(m.faces.iter().flatten().all(|&i| i < m.vertices.len()));
    }

    #[test]
    fn degenerate_triangles_dropped() {
        // a ring of radius zero collapses every triangle touching it on one side
        let m = revolve(&[(0.0, 0.0), (1.0, 0.5)], 8);
        assert_eq!(m.faces.len(), 8);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &["a", "b"], vec![vec![Cell::F(0.5), Cell::S("x,y".into())]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n5.0000000000000000e-1,\"x,y\"\n");
    }
}
