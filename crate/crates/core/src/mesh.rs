//! Triangular meshes: construction, validation, native and Gmsh 2.2 ASCII I/O.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Triangles with area at or below this are rejected.
pub const MIN_TRIANGLE_AREA: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("triangle {triangle} references vertex {vertex}, but the mesh has {count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("edge ({a}, {b}) is shared by {count} triangles")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("mesh has no triangles")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshFormat {
    Native,
    Msh2,
}

/// An edge owned by a single triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub triangle: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        vertex: v,
                        count: vertices.len(),
                    });
                }
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]).abs();
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(MeshError::DegenerateTriangle { triangle: t, area });
            }
        }

        let mut owners: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                owners.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default().push(t);
            }
        }
        if let Some((&(a, b), ts)) = owners.iter().find(|(_, ts)| ts.len() > 2) {
            return Err(MeshError::NonManifoldEdge { a, b, count: ts.len() });
        }

        // walk triangles in order so boundary edges keep the triangle's orientation
        let mut boundary_edges = Vec::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if owners[&edge_key(a, b)].len() == 1 {
                    boundary_edges.push(BoundaryEdge { a, b, triangle: t });
                }
            }
        }

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 2]; 3] {
        let [i, j, k] = self.triangles[t];
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.triangle_points(t);
        signed_area(p, q, r).abs()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [p, q, r] = self.triangle_points(t);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Flags vertices lying on the outer boundary.
    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for e in &self.boundary_edges {
            mask[e.a] = true;
            mask[e.b] = true;
        }
        mask
    }

    /// For each triangle, the triangles sharing an edge with it (ascending).
    pub fn triangle_adjacency(&self) -> Vec<Vec<usize>> {
        let mut owners: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                owners.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default().push(t);
            }
        }
        let mut adj = vec![Vec::new(); self.triangles.len()];
        for ts in owners.values() {
            if let [s, t] = ts[..] {
                adj[s].push(t);
                adj[t].push(s);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

/// Uniform mesh of the square `[-half_width, half_width]²` with `n × n` cells,
/// each cut along its lower-left to upper-right diagonal.
pub fn structured_square(n: usize, half_width: f64) -> Mesh {
    assert!(n >= 1 && half_width > 0.0);
    let h = 2.0 * half_width / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for row in 0..=n {
        for col in 0..=n {
            vertices.push([-half_width + col as f64 * h, -half_width + row as f64 * h]);
        }
    }
    let id = |row: usize, col: usize| row * (n + 1) + col;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for row in 0..n {
        for col in 0..n {
            let (a, b, c, d) = (id(row, col), id(row, col + 1), id(row + 1, col + 1), id(row + 1, col));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::new(vertices, triangles).expect("structured mesh is valid")
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R) -> Self {
        Self {
            inner: reader.lines(),
            line: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> MeshError {
        MeshError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    /// Next non-blank line, trimmed.
    fn next_line(&mut self) -> Result<Option<String>, MeshError> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            let t = l.trim();
            if !t.is_empty() {
                return Ok(Some(t.to_string()));
            }
        }
        Ok(None)
    }

    fn expect_line(&mut self, what: &str) -> Result<String, MeshError> {
        self.next_line()?
            .ok_or_else(|| self.err(format!("unexpected end of input, expected {what}")))
    }

    fn expect_count(&mut self, what: &str) -> Result<usize, MeshError> {
        let l = self.expect_line(what)?;
        l.parse().map_err(|_| self.err(format!("expected {what}, found {l:?}")))
    }

    fn numbers<T: std::str::FromStr>(&self, l: &str, what: &str) -> Result<Vec<T>, MeshError> {
        l.split_whitespace()
            .map(|tok| tok.parse().map_err(|_| self.err(format!("invalid {what} {tok:?}"))))
            .collect()
    }
}

pub fn load_mesh<R: BufRead>(reader: R, format: MeshFormat) -> Result<Mesh, MeshError> {
    match format {
        MeshFormat::Native => load_native(reader),
        MeshFormat::Msh2 => load_msh2(reader),
    }
}

pub fn load_mesh_file(path: &std::path::Path, format: MeshFormat) -> Result<Mesh, MeshError> {
    let file = std::fs::File::open(path)?;
    load_mesh(std::io::BufReader::new(file), format)
}

fn load_native<R: BufRead>(reader: R) -> Result<Mesh, MeshError> {
    let mut lines = Lines::new(reader);
    let header = lines.expect_line("$Vertices")?;
    if header != "$Vertices" {
        return Err(lines.err(format!("expected $Vertices, found {header:?}")));
    }
    let nv = lines.expect_count("vertex count")?;
    if nv == 0 {
        return Err(lines.err("vertex section is empty"));
    }
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let l = lines.expect_line("vertex coordinates")?;
        let xs: Vec<f64> = lines.numbers(&l, "coordinate")?;
        if xs.len() != 2 {
            return Err(lines.err(format!("expected 2 coordinates, found {}", xs.len())));
        }
        vertices.push([xs[0], xs[1]]);
    }
    let header = lines.expect_line("$Triangles")?;
    if header != "$Triangles" {
        return Err(lines.err(format!("expected $Triangles, found {header:?}")));
    }
    let nt = lines.expect_count("triangle count")?;
    if nt == 0 {
        return Err(lines.err("triangle section is empty"));
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let l = lines.expect_line("triangle indices")?;
        let ids: Vec<usize> = lines.numbers(&l, "vertex index")?;
        if ids.len() != 3 {
            return Err(lines.err(format!("expected 3 vertex indices, found {}", ids.len())));
        }
        triangles.push([ids[0], ids[1], ids[2]]);
    }
    if let Some(extra) = lines.next_line()? {
        return Err(lines.err(format!("unexpected trailing content {extra:?}")));
    }
    Mesh::new(vertices, triangles)
}

fn skip_section<R: BufRead>(lines: &mut Lines<R>, name: &str) -> Result<(), MeshError> {
    let end = format!("$End{name}");
    loop {
        let l = lines.expect_line(&end)?;
        if l == end {
            return Ok(());
        }
    }
}

fn load_msh2<R: BufRead>(reader: R) -> Result<Mesh, MeshError> {
    let mut lines = Lines::new(reader);
    let mut node_index: BTreeMap<i64, usize> = BTreeMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut raw_triangles: Vec<(usize, [i64; 3])> = Vec::new();
    let mut seen_nodes = false;
    let mut seen_elements = false;

    while let Some(l) = lines.next_line()? {
        let Some(name) = l.strip_prefix('$') else {
            return Err(lines.err(format!("expected a section header, found {l:?}")));
        };
        match name {
            "MeshFormat" => {
                let l = lines.expect_line("format version")?;
                let version = l.split_whitespace().next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(lines.err(format!("unsupported MSH version {version:?}")));
                }
                if l.split_whitespace().nth(1) != Some("0") {
                    return Err(lines.err("only ASCII MSH files are supported"));
                }
                skip_section(&mut lines, "MeshFormat")?;
            }
            "Nodes" => {
                let n = lines.expect_count("node count")?;
                if n == 0 {
                    return Err(lines.err("node section is empty"));
                }
                for _ in 0..n {
                    let l = lines.expect_line("node")?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    if toks.len() != 4 {
                        return Err(lines.err(format!("expected 'id x y z', found {l:?}")));
                    }
                    let id: i64 = toks[0]
                        .parse()
                        .map_err(|_| lines.err(format!("invalid node id {:?}", toks[0])))?;
                    let xy: Vec<f64> = lines.numbers(&toks[1..3].join(" "), "coordinate")?;
                    if node_index.insert(id, vertices.len()).is_some() {
                        return Err(lines.err(format!("duplicate node id {id}")));
                    }
                    vertices.push([xy[0], xy[1]]);
                }
                let end = lines.expect_line("$EndNodes")?;
                if end != "$EndNodes" {
                    return Err(lines.err(format!("expected $EndNodes, found {end:?}")));
                }
                seen_nodes = true;
            }
            "Elements" => {
                let n = lines.expect_count("element count")?;
                for _ in 0..n {
                    let l = lines.expect_line("element")?;
                    let toks: Vec<i64> = lines.numbers(&l, "element field")?;
                    if toks.len() < 3 {
                        return Err(lines.err(format!("truncated element record {l:?}")));
                    }
                    let (kind, ntags) = (toks[1], toks[2]);
                    if ntags < 0 {
                        return Err(lines.err("negative tag count"));
                    }
                    let nodes = &toks[(3 + ntags as usize).min(toks.len())..];
                    let expected = match kind {
                        1 => 2,
                        2 => 3,
                        other => {
                            return Err(lines.err(format!("unsupported element type {other}")));
                        }
                    };
                    if nodes.len() != expected {
                        return Err(lines.err(format!(
                            "element type {kind} needs {expected} nodes, found {}",
                            nodes.len()
                        )));
                    }
                    if kind == 2 {
                        raw_triangles.push((lines.line, [nodes[0], nodes[1], nodes[2]]));
                    }
                }
                let end = lines.expect_line("$EndElements")?;
                if end != "$EndElements" {
                    return Err(lines.err(format!("expected $EndElements, found {end:?}")));
                }
                seen_elements = true;
            }
            other => skip_section(&mut lines, other)?,
        }
    }
    if !seen_nodes {
        return Err(lines.err("missing $Nodes section"));
    }
    if !seen_elements {
        return Err(lines.err("missing $Elements section"));
    }
    let mut triangles = Vec::with_capacity(raw_triangles.len());
    for (line, ids) in raw_triangles {
        let mut tri = [0; 3];
        for (dst, id) in tri.iter_mut().zip(ids) {
            *dst = *node_index.get(&id).ok_or_else(|| MeshError::Parse {
                line,
                message: format!("unknown node id {id}"),
            })?;
        }
        triangles.push(tri);
    }
    Mesh::new(vertices, triangles)
}

/// Writes the native format; `load_mesh(write_mesh(m)) == m`.
pub fn write_mesh<W: Write>(mesh: &Mesh, mut out: W) -> std::io::Result<()> {
    writeln!(out, "$Vertices")?;
    writeln!(out, "{}", mesh.vertices.len())?;
    for [x, y] in &mesh.vertices {
        // `{:?}` prints the shortest representation that parses back exactly
        writeln!(out, "{x:?} {y:?}")?;
    }
    writeln!(out, "$Triangles")?;
    writeln!(out, "{}", mesh.triangles.len())?;
    for [i, j, k] in &mesh.triangles {
        writeln!(out, "{i} {j} {k}")?;
    }
    Ok(())
}

pub fn write_msh2<W: Write>(mesh: &Mesh, mut out: W) -> std::io::Result<()> {
    writeln!(out, "$MeshFormat\n2.2 0 8\n$EndMeshFormat")?;
    writeln!(out, "$Nodes\n{}", mesh.vertices.len())?;
    for (i, [x, y]) in mesh.vertices.iter().enumerate() {
        writeln!(out, "{} {x:?} {y:?} 0", i + 1)?;
    }
    writeln!(out, "$EndNodes")?;
    writeln!(out, "$Elements\n{}", mesh.triangles.len())?;
    for (t, [i, j, k]) in mesh.triangles.iter().enumerate() {
        writeln!(out, "{} 2 2 0 1 {} {} {}", t + 1, i + 1, j + 1, k + 1)?;
    }
    writeln!(out, "$EndElements")
}
