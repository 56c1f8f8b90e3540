//! Conforming triangular meshes of polygonal domains.
//!
//! A [`Mesh`] is validated on construction: triangles are counterclockwise
//! with positive area, every interior edge is shared by exactly two
//! triangles, every boundary edge by exactly one, and the boundary edges
//! close up into loops. Edge topology (sorted unique edges and the
//! triangle-to-edge map) is derived once and cached.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Marker carried by boundary edges that receive homogeneous Dirichlet data.
pub const DIRICHLET_MARKER: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: u32,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    h_max: f64,
    /// Unique edges as (min, max) vertex pairs, sorted lexicographically.
    edges: Vec<[usize; 2]>,
    /// `triangle_edges[t][k]` is the edge joining local vertices k and k+1.
    triangle_edges: Vec<[usize; 3]>,
    edge_on_boundary: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshMetrics {
    pub h_max: f64,
    pub h_min: f64,
    pub quasi_uniformity_ratio: f64,
    pub min_angle_deg: f64,
}

fn edge_key(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

impl Mesh {
    /// Builds a mesh and checks every invariant.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let nv = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::InvalidMesh(format!("vertex {i} has non-finite coordinates")));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&v| v >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references vertex {bad}, but the mesh has {nv} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex: {tri:?}")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {area:e} (must be counterclockwise)"
                )));
            }
        }
        for (e, be) in boundary_edges.iter().enumerate() {
            if let Some(&bad) = be.vertices.iter().find(|&&v| v >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {e} references vertex {bad}, but the mesh has {nv} vertices"
                )));
            }
        }

        // Edge usage and conformity.
        let mut usage: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                usage
                    .entry(edge_key(tri[k], tri[(k + 1) % 3]))
                    .or_default()
                    .push(t);
            }
        }
        let mut edges: Vec<[usize; 2]> = usage.keys().copied().collect();
        edges.sort_unstable();
        for e in &edges {
            let users = &usage[e];
            if users.len() > 2 {
                return Err(Error::InvalidMesh(format!(
                    "conformity: edge {e:?} is shared by {} triangles {users:?}",
                    users.len()
                )));
            }
        }

        let mut declared: HashMap<[usize; 2], usize> = HashMap::new();
        for (i, be) in boundary_edges.iter().enumerate() {
            let key = edge_key(be.vertices[0], be.vertices[1]);
            if declared.insert(key, i).is_some() {
                return Err(Error::InvalidMesh(format!("boundary edge {key:?} listed twice")));
            }
            match usage.get(&key).map(Vec::len) {
                Some(1) => {}
                Some(n) => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge {i} {key:?} is shared by {n} triangles"
                    )))
                }
                None => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge {i} {key:?} is not an edge of any triangle"
                    )))
                }
            }
        }
        for e in &edges {
            if usage[e].len() == 1 && !declared.contains_key(e) {
                return Err(Error::InvalidMesh(format!(
                    "edge {e:?} belongs to a single triangle but is not listed as a boundary edge"
                )));
            }
        }

        // Closed loops: every vertex touched by the boundary has even degree.
        let mut degree: HashMap<usize, usize> = HashMap::new();
        for be in &boundary_edges {
            *degree.entry(be.vertices[0]).or_default() += 1;
            *degree.entry(be.vertices[1]).or_default() += 1;
        }
        let mut open: Vec<usize> = degree
            .iter()
            .filter(|(_, &d)| d % 2 == 1)
            .map(|(&v, _)| v)
            .collect();
        if !open.is_empty() {
            open.sort_unstable();
            return Err(Error::InvalidMesh(format!(
                "boundary edges do not form closed loops (odd degree at vertices {open:?})"
            )));
        }

        let index: HashMap<[usize; 2], usize> =
            edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let triangle_edges = triangles
            .iter()
            .map(|tri| {
                [
                    index[&edge_key(tri[0], tri[1])],
                    index[&edge_key(tri[1], tri[2])],
                    index[&edge_key(tri[2], tri[0])],
                ]
            })
            .collect();
        let edge_on_boundary = edges.iter().map(|e| declared.contains_key(e)).collect();

        let h_max = triangles
            .iter()
            .map(|t| triangle_diameter(&vertices, t))
            .fold(0.0, f64::max);

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            h_max,
            edges,
            triangle_edges,
            edge_on_boundary,
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

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn edge_on_boundary(&self, edge: usize) -> bool {
        self.edge_on_boundary[edge]
    }

    /// Vertex coordinates of triangle `t`.
    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        signed_area(a, b, c)
    }

    /// Returns a copy with vertex `v` renamed to `perm[v]`.
    pub fn renumber_vertices(&self, perm: &[usize]) -> Result<Self> {
        let n = self.vertices.len();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                context: "vertex permutation",
                expected: n,
                got: perm.len(),
            });
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
        }
        let mut vertices = vec![[0.0; 2]; n];
        for (old, &new) in perm.iter().enumerate() {
            vertices[new] = self.vertices[old];
        }
        let triangles = self
            .triangles
            .iter()
            .map(|t| [perm[t[0]], perm[t[1]], perm[t[2]]])
            .collect();
        let boundary_edges = self
            .boundary_edges
            .iter()
            .map(|b| BoundaryEdge {
                vertices: [perm[b.vertices[0]], perm[b.vertices[1]]],
                marker: b.marker,
            })
            .collect();
        Mesh::new(vertices, triangles, boundary_edges)
    }
}

fn triangle_diameter(vertices: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    dist(a, b).max(dist(b, c)).max(dist(c, a))
}

/// Structured mesh of the unit square with `n` cells per side, every cell
/// split along its bottom-left to top-right diagonal.
pub fn generate_structured_square(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "structured mesh needs at least one cell per side".into(),
        ));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(4 * n);
    let mut push = |a, b| {
        boundary_edges.push(BoundaryEdge {
            vertices: [a, b],
            marker: DIRICHLET_MARKER,
        })
    };
    for i in 0..n {
        push(idx(i, 0), idx(i + 1, 0));
    }
    for j in 0..n {
        push(idx(n, j), idx(n, j + 1));
    }
    for i in (0..n).rev() {
        push(idx(i + 1, n), idx(i, n));
    }
    for j in (0..n).rev() {
        push(idx(0, j + 1), idx(0, j));
    }
    Mesh::new(vertices, triangles, boundary_edges)
}

/// Red refinement: every triangle is split into four similar children through
/// its edge midpoints. New vertex `V + e` sits at the midpoint of edge `e`.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let nv = mesh.n_vertices();
    let mut vertices = mesh.vertices.clone();
    vertices.extend(mesh.edges.iter().map(|&[a, b]| {
        let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }));
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for (tri, te) in mesh.triangles.iter().zip(&mesh.triangle_edges) {
        let [a, b, c] = *tri;
        let (mab, mbc, mca) = (nv + te[0], nv + te[1], nv + te[2]);
        triangles.push([a, mab, mca]);
        triangles.push([mab, b, mbc]);
        triangles.push([mca, mbc, c]);
        triangles.push([mab, mbc, mca]);
    }
    let lookup: HashMap<[usize; 2], usize> =
        mesh.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for be in &mesh.boundary_edges {
        let [a, b] = be.vertices;
        let m = nv + lookup[&edge_key(a, b)];
        boundary_edges.push(BoundaryEdge {
            vertices: [a, m],
            marker: be.marker,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [m, b],
            marker: be.marker,
        });
    }
    Mesh::new(vertices, triangles, boundary_edges)
}

pub fn mesh_metrics(mesh: &Mesh) -> MeshMetrics {
    let mut h_max: f64 = 0.0;
    let mut h_min = f64::INFINITY;
    let mut min_angle = f64::INFINITY;
    for tri in &mesh.triangles {
        let p = [mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]];
        let h = triangle_diameter(&mesh.vertices, tri);
        h_max = h_max.max(h);
        h_min = h_min.min(h);
        for k in 0..3 {
            let (o, a, b) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let u = [a[0] - o[0], a[1] - o[1]];
            let v = [b[0] - o[0], b[1] - o[1]];
            let cross = u[0] * v[1] - u[1] * v[0];
            let dot = u[0] * v[0] + u[1] * v[1];
            min_angle = min_angle.min(cross.abs().atan2(dot).to_degrees());
        }
    }
    MeshMetrics {
        h_max,
        h_min,
        quasi_uniformity_ratio: h_max / h_min,
        min_angle_deg: min_angle,
    }
}

/// Serializes to the sectioned text format: `vertices N`, `triangles M`,
/// `boundary_edges B`, each followed by its rows (0-based indices).
pub fn format_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vertices {}", mesh.vertices.len());
    for v in &mesh.vertices {
        // `{:?}` prints the shortest representation that round-trips exactly.
        let _ = writeln!(out, "{:?} {:?}", v[0], v[1]);
    }
    let _ = writeln!(out, "triangles {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "boundary_edges {}", mesh.boundary_edges.len());
    for b in &mesh.boundary_edges {
        let _ = writeln!(out, "{} {} {}", b.vertices[0], b.vertices[1], b.marker);
    }
    out
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    fs::write(path, format_mesh(mesh)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_mesh(path: &Path) -> Result<Mesh> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_mesh(&text, path)
}

struct Lines<'a> {
    inner: Box<dyn Iterator<Item = (usize, &'a str)> + 'a>,
    origin: &'a Path,
    last_line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, message: String) -> Error {
        Error::Parse {
            path: self.origin.to_path_buf(),
            line,
            message,
        }
    }

    fn next_row(&mut self, section: &str) -> Result<(usize, &'a str)> {
        match self.inner.next() {
            Some(row) => Ok(row),
            None => Err(self.err(self.last_line, format!("unexpected end of file in '{section}'"))),
        }
    }

    fn header(&mut self, name: &str) -> Result<usize> {
        let (ln, l) = self.next_row(name)?;
        let mut parts = l.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(tag), Some(count), None) if tag == name => count
                .parse()
                .map_err(|_| self.err(ln, format!("invalid count '{count}' for '{name}'"))),
            _ => Err(self.err(ln, format!("expected '{name} <count>', found '{l}'"))),
        }
    }
}

/// Parses the text format; `origin` is only used in error messages.
pub fn parse_mesh(text: &str, origin: &Path) -> Result<Mesh> {
    let mut lines = Lines {
        inner: Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty()),
        ),
        origin,
        last_line: text.lines().count(),
    };

    let nv = lines.header("vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next_row("vertices")?;
        let vals: Vec<&str> = l.split_whitespace().collect();
        if vals.len() != 2 {
            return Err(lines.err(ln, format!("expected 'x y', found '{l}'")));
        }
        let mut xy = [0.0; 2];
        for (dst, s) in xy.iter_mut().zip(&vals) {
            *dst = s
                .parse::<f64>()
                .map_err(|_| lines.err(ln, format!("invalid coordinate '{s}'")))?;
        }
        vertices.push(xy);
    }

    let nt = lines.header("triangles")?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines.next_row("triangles")?;
        let idx = parse_indices(l, 3).map_err(|m| lines.err(ln, m))?;
        triangles.push([idx[0], idx[1], idx[2]]);
    }

    let nb = lines.header("boundary_edges")?;
    let mut boundary_edges = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, l) = lines.next_row("boundary_edges")?;
        let idx = parse_indices(l, 3).map_err(|m| lines.err(ln, m))?;
        let marker = u32::try_from(idx[2]).map_err(|_| lines.err(ln, "marker out of range".into()))?;
        boundary_edges.push(BoundaryEdge {
            vertices: [idx[0], idx[1]],
            marker,
        });
    }
    if let Some((ln, l)) = lines.inner.next() {
        return Err(lines.err(ln, format!("trailing content '{l}'")));
    }
    Mesh::new(vertices, triangles, boundary_edges)
}

fn parse_indices(line: &str, count: usize) -> std::result::Result<Vec<usize>, String> {
    let vals: Vec<&str> = line.split_whitespace().collect();
    if vals.len() != count {
        return Err(format!("expected {count} integers, found '{line}'"));
    }
    vals.iter()
        .map(|s| s.parse::<usize>().map_err(|_| format!("invalid index '{s}'")))
        .collect()
}
