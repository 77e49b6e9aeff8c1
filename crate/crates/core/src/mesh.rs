//! Structured simplex meshes of the unit square and cube with their per-cell
//! affine geometry. Also the gather/scatter maps between global vectors and
//! per-cell coefficient blocks.

use std::fmt::Write as _;
use std::ops::Range;

use crate::{Error, Result};

/// Simplicial mesh with flat coordinate and connectivity storage.
///
/// Vertex `v` occupies `vertices[v * dim..(v + 1) * dim]` and cell `c`
/// occupies `cells[c * (dim + 1)..(c + 1) * (dim + 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    vertices: Vec<f64>,
    cells: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh, checking that connectivity is well formed.
    ///
    /// Orientation is not checked here; [`compute_geometry`] rejects
    /// degenerate or inverted cells.
    pub fn new(dim: usize, vertices: Vec<f64>, cells: Vec<usize>) -> Result<Self> {
        check_dim(dim)?;
        if !vertices.len().is_multiple_of(dim) {
            return Err(Error::InvalidMesh(format!(
                "{} coordinates is not a multiple of dimension {dim}",
                vertices.len()
            )));
        }
        let nv = dim + 1;
        if !cells.len().is_multiple_of(nv) {
            return Err(Error::InvalidMesh(format!(
                "{} connectivity entries is not a multiple of {nv}",
                cells.len()
            )));
        }
        if vertices.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let n_vertices = vertices.len() / dim;
        for (c, cell) in cells.chunks_exact(nv).enumerate() {
            for (i, &v) in cell.iter().enumerate() {
                if v >= n_vertices {
                    return Err(Error::InvalidMesh(format!(
                        "cell {c} references vertex {v} but mesh has {n_vertices} vertices"
                    )));
                }
                if cell[..i].contains(&v) {
                    return Err(Error::InvalidMesh(format!("cell {c} repeats vertex {v}")));
                }
            }
        }
        Ok(Self {
            dim,
            vertices,
            cells,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len() / self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    /// Vertices per cell.
    pub fn n_cell_vertices(&self) -> usize {
        self.dim + 1
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.vertices[v * self.dim..(v + 1) * self.dim]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let nv = self.dim + 1;
        &self.cells[c * nv..(c + 1) * nv]
    }

    pub fn vertices(&self) -> &[f64] {
        &self.vertices
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Affine Jacobian of cell `c`, row-major, column `k` is `v_{k+1} - v_0`.
    pub fn jacobian(&self, c: usize) -> Vec<f64> {
        let d = self.dim;
        let cell = self.cell(c);
        let v0 = self.vertex(cell[0]);
        let mut jac = vec![0.0; d * d];
        for k in 0..d {
            let vk = self.vertex(cell[k + 1]);
            for i in 0..d {
                jac[i * d + k] = vk[i] - v0[i];
            }
        }
        jac
    }

    /// Unsigned volume of cell `c`.
    pub fn cell_volume(&self, c: usize) -> f64 {
        determinant(self.dim, &self.jacobian(c)).abs() / factorial(self.dim)
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_volume(c)).sum()
    }

    /// True if vertex `v` lies on the boundary of the unit square/cube.
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        const EPS: f64 = 1e-12;
        self.vertex(v)
            .iter()
            .any(|&x| x.abs() < EPS || (x - 1.0).abs() < EPS)
    }

    /// Number of cells incident to each vertex.
    pub fn vertex_cell_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_vertices()];
        for &v in &self.cells {
            counts[v] += 1;
        }
        counts
    }

    /// Plain-text dump: header `dim n_vertices n_cells`, one line of
    /// coordinates per vertex, then one line of vertex indices per cell.
    pub fn to_dump_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {}", self.dim, self.n_vertices(), self.n_cells()).unwrap();
        for v in self.vertices.chunks_exact(self.dim) {
            write_joined(&mut out, v);
        }
        for c in self.cells.chunks_exact(self.dim + 1) {
            write_joined(&mut out, c);
        }
        out
    }

    /// Parses the format written by [`Mesh::to_dump_string`].
    pub fn from_dump_str(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (line, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header: Vec<usize> = parse_fields(line, header)?;
        let [dim, n_vertices, n_cells] = header[..] else {
            return Err(Error::Parse {
                line,
                msg: format!("header needs 3 fields, found {}", header.len()),
            });
        };
        check_dim(dim).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        // Every record needs at least one line, so larger counts cannot be
        // satisfied by this input.
        let budget = text.len();
        if n_vertices > budget || n_cells > budget {
            return Err(Error::Parse {
                line,
                msg: "declared counts exceed input size".into(),
            });
        }

        let mut vertices = Vec::with_capacity(n_vertices * dim);
        for _ in 0..n_vertices {
            let (line, l) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "unexpected end of input in vertex section".into(),
            })?;
            let coords: Vec<f64> = parse_fields(line, l)?;
            if coords.len() != dim {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {dim} coordinates, found {}", coords.len()),
                });
            }
            vertices.extend(coords);
        }
        let mut cells = Vec::with_capacity(n_cells * (dim + 1));
        for _ in 0..n_cells {
            let (line, l) = lines.next().ok_or(Error::Parse {
                line: 0,
                msg: "unexpected end of input in cell section".into(),
            })?;
            let ids: Vec<usize> = parse_fields(line, l)?;
            if ids.len() != dim + 1 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} vertex indices, found {}", dim + 1, ids.len()),
                });
            }
            cells.extend(ids);
        }
        if let Some((line, _)) = lines.next() {
            return Err(Error::Parse {
                line,
                msg: "trailing data after cell section".into(),
            });
        }
        Mesh::new(dim, vertices, cells)
    }
}

fn write_joined<T: std::fmt::Display>(out: &mut String, vals: &[T]) {
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v}").unwrap();
    }
    out.push('\n');
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|e| Error::Parse {
                line,
                msg: format!("`{tok}`: {e}"),
            })
        })
        .collect()
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    match dim {
        2 | 3 => Ok(()),
        _ => Err(Error::InvalidDimension(dim)),
    }
}

fn factorial(d: usize) -> f64 {
    (1..=d).product::<usize>() as f64
}

/// Determinant of a row-major 2x2 or 3x3 matrix.
pub(crate) fn determinant(d: usize, m: &[f64]) -> f64 {
    match d {
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => unreachable!("dimension checked at construction"),
    }
}

/// Inverse via the adjugate; the caller guarantees `det != 0`.
fn inverse(d: usize, m: &[f64], det: f64) -> Vec<f64> {
    let r = 1.0 / det;
    match d {
        2 => vec![m[3] * r, -m[1] * r, -m[2] * r, m[0] * r],
        3 => vec![
            (m[4] * m[8] - m[5] * m[7]) * r,
            (m[2] * m[7] - m[1] * m[8]) * r,
            (m[1] * m[5] - m[2] * m[4]) * r,
            (m[5] * m[6] - m[3] * m[8]) * r,
            (m[0] * m[8] - m[2] * m[6]) * r,
            (m[2] * m[3] - m[0] * m[5]) * r,
            (m[3] * m[7] - m[4] * m[6]) * r,
            (m[1] * m[6] - m[0] * m[7]) * r,
            (m[0] * m[4] - m[1] * m[3]) * r,
        ],
        _ => unreachable!("dimension checked at construction"),
    }
}

/// Structured Freudenthal/Kuhn triangulation of `[0,1]^dim` with `n`
/// subdivisions per axis.
///
/// In 2D each grid square is split into two triangles, in 3D each grid cube
/// into six tetrahedra sharing the main diagonal. All cells are positively
/// oriented.
pub fn generate_unit_simplex_mesh(dim: usize, n: usize) -> Result<Mesh> {
    check_dim(dim)?;
    if n == 0 {
        return Err(Error::InvalidMesh(
            "subdivision count must be at least 1".into(),
        ));
    }
    let np = n + 1;
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity(np.pow(dim as u32) * dim);
    let mut cells = Vec::new();

    if dim == 2 {
        let id = |i: usize, j: usize| j * np + i;
        for j in 0..np {
            for i in 0..np {
                vertices.extend([i as f64 * h, j as f64 * h]);
            }
        }
        cells.reserve(2 * n * n * 3);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                cells.extend([v00, v10, v11]);
                cells.extend([v00, v11, v01]);
            }
        }
    } else {
        let id = |i: usize, j: usize, k: usize| (k * np + j) * np + i;
        for k in 0..np {
            for j in 0..np {
                for i in 0..np {
                    vertices.extend([i as f64 * h, j as f64 * h, k as f64 * h]);
                }
            }
        }
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        // Even permutations give positive orientation; odd ones need two
        // vertices swapped.
        const ODD: [bool; 6] = [false, true, true, false, false, true];
        cells.reserve(6 * n * n * n * 4);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for (perm, &odd) in PERMS.iter().zip(&ODD) {
                        let mut p = [i, j, k];
                        let mut tet = [id(p[0], p[1], p[2]); 4];
                        for (step, &axis) in perm.iter().enumerate() {
                            p[axis] += 1;
                            tet[step + 1] = id(p[0], p[1], p[2]);
                        }
                        if odd {
                            tet.swap(2, 3);
                        }
                        cells.extend(tet);
                    }
                }
            }
        }
    }
    Mesh::new(dim, vertices, cells)
}

/// Per-cell inverse Jacobians (row-major `d x d`) and Jacobian determinants.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    dim: usize,
    inv_jacobians: Vec<f64>,
    determinants: Vec<f64>,
}

impl CellGeometry {
    /// Builds geometry from raw arrays, e.g. for synthetic test cells.
    pub fn from_parts(dim: usize, inv_jacobians: Vec<f64>, determinants: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if inv_jacobians.len() != determinants.len() * dim * dim {
            return Err(Error::Shape {
                what: "inverse Jacobians",
                expected: determinants.len() * dim * dim,
                actual: inv_jacobians.len(),
            });
        }
        Ok(Self {
            dim,
            inv_jacobians,
            determinants,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.determinants.len()
    }

    pub fn inv_jacobian(&self, c: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.inv_jacobians[c * dd..(c + 1) * dd]
    }

    pub fn determinant(&self, c: usize) -> f64 {
        self.determinants[c]
    }

    pub fn inv_jacobians(&self) -> &[f64] {
        &self.inv_jacobians
    }

    pub fn determinants(&self) -> &[f64] {
        &self.determinants
    }

    /// Borrowed view of a contiguous cell range.
    pub fn slice(&self, cells: Range<usize>) -> GeometrySlice<'_> {
        let dd = self.dim * self.dim;
        GeometrySlice {
            dim: self.dim,
            inv_jacobians: &self.inv_jacobians[cells.start * dd..cells.end * dd],
            determinants: &self.determinants[cells],
        }
    }

    pub fn as_slice(&self) -> GeometrySlice<'_> {
        self.slice(0..self.n_cells())
    }
}

/// Geometry for a contiguous range of cells.
#[derive(Debug, Clone, Copy)]
pub struct GeometrySlice<'a> {
    pub dim: usize,
    pub inv_jacobians: &'a [f64],
    pub determinants: &'a [f64],
}

impl GeometrySlice<'_> {
    pub fn n_cells(&self) -> usize {
        self.determinants.len()
    }

    pub fn inv_jacobian(&self, c: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.inv_jacobians[c * dd..(c + 1) * dd]
    }
}

/// Computes `invJ` and `detJ` for every cell; fails on the first cell whose
/// determinant is not strictly positive.
pub fn compute_geometry(mesh: &Mesh) -> Result<CellGeometry> {
    let d = mesh.dim();
    let mut inv_jacobians = Vec::with_capacity(mesh.n_cells() * d * d);
    let mut determinants = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let jac = mesh.jacobian(c);
        let det = determinant(d, &jac);
        if det.is_nan() || det <= 0.0 {
            return Err(Error::NegativeOrientation { cell: c, det });
        }
        inv_jacobians.extend(inverse(d, &jac, det));
        determinants.push(det);
    }
    Ok(CellGeometry {
        dim: d,
        inv_jacobians,
        determinants,
    })
}

/// Field layout: global vectors are `[vertex][component]`, per-cell blocks
/// are `[cell][basis][component]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldLayout {
    pub n_comp: usize,
}

impl FieldLayout {
    pub fn new(n_comp: usize) -> Self {
        Self { n_comp }
    }

    pub fn global_len(&self, mesh: &Mesh) -> usize {
        mesh.n_vertices() * self.n_comp
    }

    pub fn block_len(&self, mesh: &Mesh) -> usize {
        mesh.n_cell_vertices() * self.n_comp
    }

    pub fn cell_array_len(&self, mesh: &Mesh) -> usize {
        mesh.n_cells() * self.block_len(mesh)
    }
}

/// Copies global coefficients into per-cell blocks.
pub fn gather_coefficients(mesh: &Mesh, layout: &FieldLayout, global: &[f64]) -> Result<Vec<f64>> {
    let nc = layout.n_comp;
    let expected = layout.global_len(mesh);
    if global.len() != expected {
        return Err(Error::Shape {
            what: "global vector",
            expected,
            actual: global.len(),
        });
    }
    let mut out = Vec::with_capacity(layout.cell_array_len(mesh));
    for &v in mesh.cells() {
        out.extend_from_slice(&global[v * nc..(v + 1) * nc]);
    }
    Ok(out)
}

/// Sums per-cell element vectors into a global vector, visiting cells in
/// ascending order.
pub fn scatter_add_element_vectors(
    mesh: &Mesh,
    layout: &FieldLayout,
    elem_vecs: &[f64],
) -> Result<Vec<f64>> {
    let nc = layout.n_comp;
    let expected = layout.cell_array_len(mesh);
    if elem_vecs.len() != expected {
        return Err(Error::Shape {
            what: "element vectors",
            expected,
            actual: elem_vecs.len(),
        });
    }
    let mut global = vec![0.0; layout.global_len(mesh)];
    for (&v, vals) in mesh.cells().iter().zip(elem_vecs.chunks_exact(nc)) {
        for (g, e) in global[v * nc..(v + 1) * nc].iter_mut().zip(vals) {
            *g += e;
        }
    }
    Ok(global)
}
