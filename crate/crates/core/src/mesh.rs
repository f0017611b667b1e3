//! Conforming 2D simplicial meshes with facet topology and boundary tags.
//!
//! Cells are stored counterclockwise. Facets are ordered lexicographically by
//! their sorted vertex pair, which makes every downstream structure (DoF
//! numbering, assembly, solver output) reproducible across runs.

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned bounding box of the computational domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    /// The square (-1,1)^2 used by the built-in test problems.
    pub fn biunit() -> Self {
        Self::new([-1.0, -1.0], [1.0, 1.0])
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// A conforming triangulation of a rectangular domain.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Vertex index triples, counterclockwise.
    pub cells: Vec<[usize; 3]>,
    pub domain_box: BoundingBox,
}

/// Classification of a boundary facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// Rule assigning a tag to each boundary facet, evaluated at its midpoint.
#[derive(Clone)]
pub enum TagRule {
    AllNeumann,
    AllDirichlet,
    /// Dirichlet on the side x = min of the bounding box, Neumann elsewhere.
    DirichletLeft,
    Custom(std::sync::Arc<dyn Fn(Point) -> BoundaryTag + Send + Sync>),
}

impl TagRule {
    fn classify(&self, midpoint: Point, bbox: &BoundingBox) -> BoundaryTag {
        match self {
            TagRule::AllNeumann => BoundaryTag::Neumann,
            TagRule::AllDirichlet => BoundaryTag::Dirichlet,
            TagRule::DirichletLeft => {
                let tol = 1e-12 * (1.0 + bbox.width().abs());
                if (midpoint[0] - bbox.min[0]).abs() <= tol {
                    BoundaryTag::Dirichlet
                } else {
                    BoundaryTag::Neumann
                }
            }
            TagRule::Custom(f) => f(midpoint),
        }
    }
}

impl std::fmt::Debug for TagRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TagRule::AllNeumann => write!(f, "AllNeumann"),
            TagRule::AllDirichlet => write!(f, "AllDirichlet"),
            TagRule::DirichletLeft => write!(f, "DirichletLeft"),
            TagRule::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// One facet of the triangulation.
#[derive(Debug, Clone, Copy)]
pub struct Facet {
    /// Endpoints, sorted so `verts[0] < verts[1]`. The facet parametrization
    /// runs from `verts[0]` to `verts[1]`; every facet-moment integral uses it.
    pub verts: [usize; 2],
    /// Adjacent cell with the lower index.
    pub left: usize,
    /// Adjacent cell with the higher index; `None` on the boundary.
    pub right: Option<usize>,
    /// Unit normal, pointing from `left` into `right` (outward on the boundary).
    pub normal: Point,
    pub length: f64,
    pub midpoint: Point,
    /// Tag for boundary facets, `None` for interior ones.
    pub tag: Option<BoundaryTag>,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

/// Complete facet connectivity of a mesh.
#[derive(Debug, Clone)]
pub struct FacetTopology {
    pub facets: Vec<Facet>,
    /// For each cell, the facet opposite to each local vertex.
    pub cell_facets: Vec<[usize; 3]>,
}

impl FacetTopology {
    pub fn n_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn interior(&self) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets.iter().enumerate().filter(|(_, f)| !f.is_boundary())
    }

    pub fn boundary(&self) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets.iter().enumerate().filter(|(_, f)| f.is_boundary())
    }

    pub fn dirichlet(&self) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.tag == Some(BoundaryTag::Dirichlet))
    }

    pub fn has_dirichlet(&self) -> bool {
        self.facets.iter().any(|f| f.tag == Some(BoundaryTag::Dirichlet))
    }

    /// Local index (0..3) of `facet` within `cell`, i.e. the opposite vertex.
    pub fn local_facet_index(&self, cell: usize, facet: usize) -> Option<usize> {
        self.cell_facets[cell].iter().position(|&f| f == facet)
    }
}

/// Parameters of the structured generator, kept around for refinement.
#[derive(Debug, Clone, Copy)]
pub struct StructuredParams {
    pub nx: usize,
    pub ny: usize,
    pub bbox: BoundingBox,
}

/// Builds `nx * ny` squares over `bbox`, each split along its SW-NE diagonal.
pub fn generate_structured_mesh(nx: usize, ny: usize, bbox: BoundingBox) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "subdivision counts must be positive, got nx={nx}, ny={ny}"
        )));
    }
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "degenerate bounding box {:?}",
            bbox
        )));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // Exact endpoints keep the boundary predicates watertight.
            let x = if i == nx {
                bbox.max[0]
            } else {
                bbox.min[0] + bbox.width() * (i as f64) / (nx as f64)
            };
            let y = if j == ny {
                bbox.max[1]
            } else {
                bbox.min[1] + bbox.height() * (j as f64) / (ny as f64)
            };
            vertices.push([x, y]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (sw, se, ne, nw) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
            cells.push([sw, se, ne]);
            cells.push([sw, ne, nw]);
        }
    }
    let mesh = Mesh {
        vertices,
        cells,
        domain_box: bbox,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Parses the plain-text mesh format:
/// `vertices N`, N lines `x y`, `cells M`, M lines `i j k`; `#` starts a comment.
pub fn load_mesh(text: &str) -> Result<Mesh> {
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        for tok in content.split_whitespace() {
            tokens.push((lineno + 1, tok));
        }
    }
    let mut pos = 0usize;
    let mut expect = |what: &str| -> Result<(usize, &str)> {
        let t = tokens.get(pos).copied().ok_or_else(|| Error::Parse {
            line: tokens.last().map_or(0, |t| t.0),
            msg: format!("unexpected end of input, expected {what}"),
        })?;
        pos += 1;
        Ok(t)
    };

    let (line, kw) = expect("keyword `vertices`")?;
    if kw != "vertices" {
        return Err(Error::Parse {
            line,
            msg: format!("expected `vertices`, found `{kw}`"),
        });
    }
    let (line, n) = expect("vertex count")?;
    let n: usize = n.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid vertex count `{n}`"),
    })?;
    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        let (lx, xs) = expect("x coordinate")?;
        let (ly, ys) = expect("y coordinate")?;
        let x: f64 = xs.parse().map_err(|_| Error::Parse {
            line: lx,
            msg: format!("invalid coordinate `{xs}`"),
        })?;
        let y: f64 = ys.parse().map_err(|_| Error::Parse {
            line: ly,
            msg: format!("invalid coordinate `{ys}`"),
        })?;
        vertices.push([x, y]);
    }
    let (line, kw) = expect("keyword `cells`")?;
    if kw != "cells" {
        return Err(Error::Parse {
            line,
            msg: format!("expected `cells`, found `{kw}`"),
        });
    }
    let (line, m) = expect("cell count")?;
    let m: usize = m.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid cell count `{m}`"),
    })?;
    let mut cells = Vec::with_capacity(m);
    for _ in 0..m {
        let mut ids = [0usize; 3];
        for slot in &mut ids {
            let (l, s) = expect("vertex index")?;
            let v: usize = s.parse().map_err(|_| Error::Parse {
                line: l,
                msg: format!("invalid vertex index `{s}`"),
            })?;
            if v >= n {
                return Err(Error::Structure(format!(
                    "cell references vertex {v} but only {n} vertices are defined"
                )));
            }
            *slot = v;
        }
        cells.push(ids);
    }
    if let Some(&(line, tok)) = tokens.get(pos) {
        return Err(Error::Parse {
            line,
            msg: format!("trailing input `{tok}`"),
        });
    }

    let (lo, hi) = vertices.iter().fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(lo, hi), v| {
            (
                [lo[0].min(v[0]), lo[1].min(v[1])],
                [hi[0].max(v[0]), hi[1].max(v[1])],
            )
        },
    );
    let mut mesh = Mesh {
        vertices,
        cells,
        domain_box: BoundingBox::new(lo, hi),
    };
    // Repair clockwise cells in place; flag truly degenerate ones.
    for (c, cell) in mesh.cells.iter_mut().enumerate() {
        let a = signed_area(&mesh.vertices, cell);
        if a < 0.0 {
            log::warn!("cell {c} has clockwise orientation, swapping vertices");
            cell.swap(1, 2);
        } else if a == 0.0 {
            return Err(Error::InvalidMesh(format!("cell {c} has zero area")));
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

fn signed_area(vertices: &[Point], cell: &[usize; 3]) -> f64 {
    let [a, b, c] = [vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_vertices(&self, cell: usize) -> [Point; 3] {
        let [i, j, k] = self.cells[cell];
        [self.vertices[i], self.vertices[j], self.vertices[k]]
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        signed_area(&self.vertices, &self.cells[cell])
    }

    pub fn cell_diameter(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(cell);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Radius of the inscribed circle: 2 * area / perimeter.
    pub fn cell_inradius(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(cell);
        let per = dist(a, b) + dist(b, c) + dist(c, a);
        2.0 * self.cell_area(cell) / per
    }

    pub fn cell_barycenter(&self, cell: usize) -> Point {
        let [a, b, c] = self.cell_vertices(cell);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.n_cells())
            .map(|c| self.cell_diameter(c))
            .fold(0.0, f64::max)
    }

    /// Barycentric coordinates of `x` in `cell`.
    pub fn barycentric(&self, cell: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.cell_vertices(cell);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((b[0] - x[0]) * (c[1] - x[1]) - (c[0] - x[0]) * (b[1] - x[1])) / det;
        let l2 = ((c[0] - x[0]) * (a[1] - x[1]) - (a[0] - x[0]) * (c[1] - x[1])) / det;
        [l1, l2, 1.0 - l1 - l2]
    }

    /// Gradients of the three barycentric coordinates (constant per cell).
    pub fn barycentric_gradients(&self, cell: usize) -> [Point; 3] {
        let [a, b, c] = self.cell_vertices(cell);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ]
    }

    /// Maps barycentric coordinates back to physical space.
    pub fn point_from_barycentric(&self, cell: usize, l: [f64; 3]) -> Point {
        let [a, b, c] = self.cell_vertices(cell);
        [
            l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
            l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
        ]
    }

    pub fn contains(&self, cell: usize, x: Point, tol: f64) -> bool {
        self.barycentric(cell, x).iter().all(|&l| l >= -tol)
    }

    /// Checks all structural invariants; returns the facet count on success.
    pub fn validate(&self) -> Result<usize> {
        let nv = self.n_vertices();
        if self.n_cells() == 0 {
            return Err(Error::InvalidMesh("mesh has no cells".into()));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= nv) {
                return Err(Error::Structure(format!(
                    "cell {c} references a vertex out of range"
                )));
            }
            if cell[0] == cell[1] || cell[1] == cell[2] || cell[0] == cell[2] {
                return Err(Error::InvalidMesh(format!("cell {c} repeats a vertex")));
            }
            if signed_area(&self.vertices, cell) <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} is degenerate or clockwise"
                )));
            }
        }
        // Conformity: each undirected edge is used by at most two cells, and
        // no vertex lies strictly inside another cell's edge (hanging node).
        let mut edge_use = std::collections::HashMap::new();
        for cell in &self.cells {
            for e in cell_edges(cell) {
                *edge_use.entry(e).or_insert(0usize) += 1;
            }
        }
        for (e, count) in &edge_use {
            if *count > 2 {
                return Err(Error::Structure(format!(
                    "edge {:?} is shared by {count} cells",
                    e
                )));
            }
        }
        for &(a, b) in edge_use.keys() {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let len = dist(pa, pb);
            for (v, &p) in self.vertices.iter().enumerate() {
                if v == a || v == b {
                    continue;
                }
                let t = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1]))
                    / (len * len);
                if t <= 1e-12 || t >= 1.0 - 1e-12 {
                    continue;
                }
                let proj = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                if dist(proj, p) <= 1e-12 * len {
                    return Err(Error::Structure(format!(
                        "vertex {v} lies inside edge ({a}, {b}): hanging node"
                    )));
                }
            }
        }
        // Euler relation for a simply connected domain.
        let n_edges = edge_use.len();
        let euler = self.n_vertices() as i64 - n_edges as i64 + self.n_cells() as i64;
        if euler != 1 {
            return Err(Error::Structure(format!(
                "Euler characteristic V - E + T = {euler}, expected 1"
            )));
        }
        Ok(n_edges)
    }
}

fn cell_edges(cell: &[usize; 3]) -> [(usize, usize); 3] {
    let sorted = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    [
        sorted(cell[1], cell[2]),
        sorted(cell[2], cell[0]),
        sorted(cell[0], cell[1]),
    ]
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Max over cells of diameter / inradius.
pub fn shape_regularity(mesh: &Mesh) -> Result<f64> {
    let mut gamma: f64 = 0.0;
    for c in 0..mesh.n_cells() {
        let r = mesh.cell_inradius(c);
        if !(r > 0.0) {
            return Err(Error::InvalidMesh(format!("cell {c} has zero inradius")));
        }
        gamma = gamma.max(mesh.cell_diameter(c) / r);
    }
    Ok(gamma)
}

/// Builds the facet list with adjacency, normals, and boundary tags.
pub fn build_facets(mesh: &Mesh, tag_rule: &TagRule) -> Result<FacetTopology> {
    // Map sorted vertex pair -> adjacent cells, then order lexicographically.
    let mut by_edge: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
        std::collections::BTreeMap::new();
    for (c, cell) in mesh.cells.iter().enumerate() {
        for e in cell_edges(cell) {
            by_edge.entry(e).or_default().push(c);
        }
    }
    let mut facets = Vec::with_capacity(by_edge.len());
    let mut cell_facets = vec![[usize::MAX; 3]; mesh.n_cells()];
    for (fid, (&(v0, v1), cells)) in by_edge.iter().enumerate() {
        if cells.len() > 2 {
            return Err(Error::Structure(format!(
                "edge ({v0}, {v1}) has {} adjacent cells",
                cells.len()
            )));
        }
        let (left, right) = match cells.as_slice() {
            [a] => (*a, None),
            [a, b] => (*a.min(b), Some(*a.max(b))),
            _ => unreachable!(),
        };
        let (pa, pb) = (mesh.vertices[v0], mesh.vertices[v1]);
        let length = dist(pa, pb);
        let midpoint = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        // Normal orthogonal to the edge, oriented away from the left cell.
        let mut normal = [(pb[1] - pa[1]) / length, (pa[0] - pb[0]) / length];
        let bc = mesh.cell_barycenter(left);
        let outward = (midpoint[0] - bc[0]) * normal[0] + (midpoint[1] - bc[1]) * normal[1];
        if outward < 0.0 {
            normal = [-normal[0], -normal[1]];
        }
        let tag = if right.is_none() {
            Some(tag_rule.classify(midpoint, &mesh.domain_box))
        } else {
            None
        };
        facets.push(Facet {
            verts: [v0, v1],
            left,
            right,
            normal,
            length,
            midpoint,
            tag,
        });
        for &c in cells {
            let cell = &mesh.cells[c];
            // local facet index = local index of the opposite vertex
            let local = (0..3)
                .position(|i| {
                    let e = cell_edges(cell)[i];
                    e == (v0, v1)
                })
                .expect("edge must belong to its cell");
            cell_facets[c][local] = fid;
        }
    }
    Ok(FacetTopology { facets, cell_facets })
}

/// Structured meshes with `h` halved at each level (nx, ny doubled).
pub fn refine_sequence(base: StructuredParams, levels: usize) -> Result<Vec<Mesh>> {
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be >= 1".into()));
    }
    (0..levels)
        .map(|l| {
            let f = 1usize << l;
            generate_structured_mesh(base.nx * f, base.ny * f, base.bbox)
        })
        .collect()
}

/// Smallest nx with cell diameter at most `h_target` on `bbox` (square cells).
pub fn nx_for_target_h(h_target: f64, bbox: &BoundingBox) -> Result<usize> {
    if !(h_target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target mesh size must be positive, got {h_target}"
        )));
    }
    let w = bbox.width().max(bbox.height());
    let nx = (std::f64::consts::SQRT_2 * w / h_target - 1e-9).ceil() as usize;
    Ok(nx.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_square_counts() {
        let m = generate_structured_mesh(1, 1, BoundingBox::biunit()).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_cells(), 2);
        let topo = build_facets(&m, &TagRule::AllNeumann).unwrap();
        assert_eq!(topo.n_facets(), 5);
        assert_eq!(topo.interior().count(), 1);
        assert_eq!(topo.boundary().count(), 4);
    }

    #[test]
    fn euler_relation_2x2() {
        let m = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_cells(), 8);
        let n_edges = m.validate().unwrap();
        assert_eq!(n_edges, 16);
        assert_eq!(9 - 16 + 8, 1);
    }

    #[test]
    fn structured_mesh_size() {
        let m = generate_structured_mesh(10, 10, BoundingBox::new([0.0, 0.0], [2.0, 2.0])).unwrap();
        let h = m.mesh_size();
        assert!((h - 0.2 * std::f64::consts::SQRT_2).abs() < 1e-14, "h = {h}");
    }

    #[test]
    fn areas_sum_to_box_area() {
        let m = generate_structured_mesh(7, 5, BoundingBox::biunit()).unwrap();
        let total: f64 = (0..m.n_cells()).map(|c| m.cell_area(c)).sum();
        assert!((total - m.domain_box.area()).abs() <= 1e-12 * m.domain_box.area());
    }

    #[test]
    fn shape_regularity_closed_forms() {
        // equilateral triangle, side 1
        let m = Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]],
            cells: vec![[0, 1, 2]],
            domain_box: BoundingBox::new([0.0, 0.0], [1.0, 1.0]),
        };
        let g = shape_regularity(&m).unwrap();
        assert!((g - 2.0 * 3f64.sqrt()).abs() < 1e-12, "gamma = {g}");

        // right isoceles, legs 1: gamma = 2 + 2 sqrt(2)
        let m = Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            cells: vec![[0, 1, 2]],
            domain_box: BoundingBox::new([0.0, 0.0], [1.0, 1.0]),
        };
        let g = shape_regularity(&m).unwrap();
        assert!((g - (2.0 + 2.0 * std::f64::consts::SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn shape_regularity_uniform_over_structured() {
        // every cell of the diagonal split has the same ratio
        let m = generate_structured_mesh(4, 3, BoundingBox::biunit()).unwrap();
        let expected = 2.0 + 2.0 * std::f64::consts::SQRT_2;
        for c in 0..m.n_cells() {
            let g = m.cell_diameter(c) / m.cell_inradius(c);
            assert!((g - expected).abs() < 1e-10 * expected, "cell {c}: {g}");
        }
    }

    #[test]
    fn refinement_halves_h_and_keeps_gamma() {
        let seq = refine_sequence(
            StructuredParams {
                nx: 4,
                ny: 4,
                bbox: BoundingBox::biunit(),
            },
            3,
        )
        .unwrap();
        assert_eq!(seq.len(), 3);
        let h: Vec<f64> = seq.iter().map(|m| m.mesh_size()).collect();
        assert!((h[0] / h[1] - 2.0).abs() < 1e-12);
        assert!((h[1] / h[2] - 2.0).abs() < 1e-12);
        let g: Vec<f64> = seq.iter().map(|m| shape_regularity(m).unwrap()).collect();
        assert!((g[0] - g[1]).abs() < 1e-12 && (g[1] - g[2]).abs() < 1e-12);
    }

    #[test]
    fn target_h_table() {
        let bbox = BoundingBox::biunit();
        for (h, nx) in [(0.5, 6), (0.3, 10), (0.15, 19), (0.08, 36)] {
            assert_eq!(nx_for_target_h(h, &bbox).unwrap(), nx, "h = {h}");
        }
    }

    #[test]
    fn load_mesh_roundtrip_and_errors() {
        let m = load_mesh("vertices 3\n0 0\n1 0\n0 1\ncells 1\n0 1 2\n").unwrap();
        assert_eq!(m.n_cells(), 1);
        assert!(m.cell_area(0) > 0.0);

        // comment handling + clockwise repair
        let m = load_mesh("# demo\nvertices 3\n0 0\n1 0\n0 1\ncells 1\n0 2 1 # flipped\n").unwrap();
        assert!(m.cell_area(0) > 0.0);

        let err = load_mesh("vertices 3\n0 0\n1 0\n0 1\ncells 1\n0 1 7\n").unwrap_err();
        assert!(matches!(err, Error::Structure(_)), "{err}");

        // hanging node: vertex 3 in the middle of edge (1, 2)
        let text = "vertices 5\n0 0\n1 0\n1 2\n1 1\n2 1\ncells 2\n0 1 2\n1 4 3\n";
        let err = load_mesh(text).unwrap_err();
        assert!(matches!(err, Error::Structure(_)), "{err}");
    }

    #[test]
    fn facet_conventions() {
        let m = generate_structured_mesh(1, 1, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&m, &TagRule::AllNeumann).unwrap();
        for (_, f) in topo.facets.iter().enumerate() {
            let n = f.normal;
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-14);
            assert!(f.verts[0] < f.verts[1]);
        }
        // interior facet between cells 0 and 1: normal points from 0 into 1
        let (_, diag) = topo.interior().next().unwrap();
        assert_eq!(diag.left, 0);
        assert_eq!(diag.right, Some(1));
        let bc0 = m.cell_barycenter(0);
        let to_mid = [diag.midpoint[0] - bc0[0], diag.midpoint[1] - bc0[1]];
        assert!(to_mid[0] * diag.normal[0] + to_mid[1] * diag.normal[1] > 0.0);
    }

    #[test]
    fn interior_normal_is_minus_right_outward() {
        let m = generate_structured_mesh(3, 2, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&m, &TagRule::AllNeumann).unwrap();
        for (_, f) in topo.interior() {
            let right = f.right.unwrap();
            let bc = m.cell_barycenter(right);
            // normal must point towards the right cell's barycenter side
            let d = [f.midpoint[0] - bc[0], f.midpoint[1] - bc[1]];
            assert!(d[0] * f.normal[0] + d[1] * f.normal[1] < 0.0);
        }
    }

    #[test]
    fn tagging_rules() {
        let m = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&m, &TagRule::AllNeumann).unwrap();
        assert_eq!(topo.dirichlet().count(), 0);
        let topo = build_facets(&m, &TagRule::DirichletLeft).unwrap();
        assert_eq!(topo.dirichlet().count(), 2);
        for (_, f) in topo.dirichlet() {
            assert!((f.midpoint[0] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn determinism_rebuild() {
        let m = generate_structured_mesh(5, 4, BoundingBox::biunit()).unwrap();
        let t1 = build_facets(&m, &TagRule::AllNeumann).unwrap();
        let t2 = build_facets(&m, &TagRule::AllNeumann).unwrap();
        assert_eq!(t1.n_facets(), t2.n_facets());
        for (a, b) in t1.facets.iter().zip(&t2.facets) {
            assert_eq!(a.verts, b.verts);
            assert_eq!(a.left, b.left);
            assert_eq!(a.right, b.right);
            assert_eq!(a.normal, b.normal);
        }
    }
}
