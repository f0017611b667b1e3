//! Global Crouzeix-Raviart spaces of arbitrary order, the elementwise flux
//! space, interpolation, projection, and Dirichlet constraint bookkeeping.
//!
//! The CR space layout depends on the parity of the order k:
//! * odd k: per facet, k - 1 modal functions plus one facet bubble; per cell,
//!   dim P_{k-3} bulk modal functions;
//! * even k: one function per vertex, k - 1 modal functions per facet,
//!   dim P_{k-3} bulk modal functions per cell, and one bulk bubble per cell
//!   with the bubble of the lowest-index cell removed (the piecewise bubble
//!   is globally continuous, so keeping all of them is linearly dependent).

use std::collections::{BTreeMap, HashMap};

use crate::basis::{
    dim_pk, eval_shape, eval_shape_grad, legendre_eval, monomial_exponents, CellGeometry,
    LocalShape, OrthoPolyBasis,
};
use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::mesh::{Facet, FacetTopology, Mesh, Point};
use crate::quadrature::{quadrature_edge, quadrature_triangle, EdgeQuadrature};

/// Key identifying one global CR degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DofKey {
    Vertex(usize),
    /// Facet modal function; `j` runs from 1 to k - 1.
    FacetModal(usize, usize),
    FacetBubble(usize),
    /// Bulk modal function; the second entry indexes the P_{k-3} monomials.
    BulkModal(usize, usize),
    BulkBubble(usize),
}

/// Global Crouzeix-Raviart space of order `k` over a fixed mesh.
#[derive(Debug, Clone)]
pub struct CrSpace {
    pub k: usize,
    pub n_dofs: usize,
    pub dof_table: HashMap<DofKey, usize>,
    /// For each cell, the global dofs supported on it with their local shape.
    pub cell_dofs: Vec<Vec<(usize, LocalShape)>>,
    /// Cell whose bulk bubble was dropped (even k only).
    pub removed_bubble: Option<usize>,
    /// Constrained dofs with prescribed values; empty until `apply_dirichlet`
    /// runs (all tagged facets still count as constrained with value 0).
    pub dirichlet_dofs: BTreeMap<usize, f64>,
    /// True iff the boundary is pure Neumann, in which case the potential is
    /// only determined up to a constant and a zero-mean constraint is added.
    pub has_mean_constraint: bool,
    cell_geoms: Vec<CellGeometry>,
}

impl CrSpace {
    pub fn is_dirichlet(&self, dof: usize) -> bool {
        self.dirichlet_dofs.contains_key(&dof)
    }

    pub fn geom(&self, cell: usize) -> &CellGeometry {
        &self.cell_geoms[cell]
    }
}

/// Ordered local endpoints of a facet: local vertex indices within `cell`,
/// sorted so that the first has the smaller global id.
fn facet_local_endpoints(mesh: &Mesh, cell: usize, facet: &Facet) -> (usize, usize) {
    let cv = mesh.cells[cell];
    let lo = cv.iter().position(|&v| v == facet.verts[0]).unwrap();
    let hi = cv.iter().position(|&v| v == facet.verts[1]).unwrap();
    (lo, hi)
}

/// Builds the order-k CR space. Dirichlet facets (from the topology tags)
/// mark their attached dofs as constrained with value zero; `apply_dirichlet`
/// overwrites the values for inhomogeneous data.
pub fn build_cr_space(mesh: &Mesh, topo: &FacetTopology, k: usize) -> Result<CrSpace> {
    if k == 0 {
        return Err(Error::InvalidArgument("CR order k must be >= 1".into()));
    }
    let even = k % 2 == 0;
    let n_bulk = dim_pk(k as i64 - 3);
    let bulk_exps = monomial_exponents(k.saturating_sub(3));

    let mut dof_table = HashMap::new();
    let mut next = 0usize;
    let mut push = |key: DofKey, table: &mut HashMap<DofKey, usize>| {
        table.insert(key, next);
        next += 1;
    };
    if even {
        for v in 0..mesh.n_vertices() {
            push(DofKey::Vertex(v), &mut dof_table);
        }
    }
    for f in 0..topo.n_facets() {
        for j in 1..k {
            push(DofKey::FacetModal(f, j), &mut dof_table);
        }
        if !even {
            push(DofKey::FacetBubble(f), &mut dof_table);
        }
    }
    for c in 0..mesh.n_cells() {
        for l in 0..n_bulk {
            push(DofKey::BulkModal(c, l), &mut dof_table);
        }
    }
    let removed_bubble = if even {
        for c in 1..mesh.n_cells() {
            push(DofKey::BulkBubble(c), &mut dof_table);
        }
        Some(0)
    } else {
        None
    };
    let n_dofs = next;

    let mut cell_dofs = vec![Vec::new(); mesh.n_cells()];
    for (c, dofs) in cell_dofs.iter_mut().enumerate() {
        if even {
            for loc in 0..3 {
                let v = mesh.cells[c][loc];
                dofs.push((dof_table[&DofKey::Vertex(v)], LocalShape::Vertex { loc }));
            }
        }
        for loc_facet in 0..3 {
            let fid = topo.cell_facets[c][loc_facet];
            let facet = &topo.facets[fid];
            let (lo, hi) = facet_local_endpoints(mesh, c, facet);
            for j in 1..k {
                dofs.push((
                    dof_table[&DofKey::FacetModal(fid, j)],
                    LocalShape::FacetModal { lo, hi, j },
                ));
            }
            if !even {
                dofs.push((
                    dof_table[&DofKey::FacetBubble(fid)],
                    LocalShape::FacetBubble { loc_facet, degree: k },
                ));
            }
        }
        for (l, &(ax, ay)) in bulk_exps.iter().enumerate().take(n_bulk) {
            dofs.push((
                dof_table[&DofKey::BulkModal(c, l)],
                LocalShape::BulkModal { ax, ay },
            ));
        }
        if even && removed_bubble != Some(c) {
            dofs.push((
                dof_table[&DofKey::BulkBubble(c)],
                LocalShape::BulkBubble { degree: k },
            ));
        }
    }

    // Facets tagged Dirichlet pin their attached dofs (homogeneous for now).
    let mut dirichlet_dofs = BTreeMap::new();
    for (fid, facet) in topo.dirichlet() {
        for j in 1..k {
            dirichlet_dofs.insert(dof_table[&DofKey::FacetModal(fid, j)], 0.0);
        }
        if even {
            for v in facet.verts {
                dirichlet_dofs.insert(dof_table[&DofKey::Vertex(v)], 0.0);
            }
        } else {
            dirichlet_dofs.insert(dof_table[&DofKey::FacetBubble(fid)], 0.0);
        }
    }
    let has_mean_constraint = !topo.has_dirichlet();

    let cell_geoms = (0..mesh.n_cells()).map(|c| CellGeometry::of(mesh, c)).collect();

    Ok(CrSpace {
        k,
        n_dofs,
        dof_table,
        cell_dofs,
        removed_bubble,
        dirichlet_dofs,
        has_mean_constraint,
        cell_geoms,
    })
}

/// Maps the edge parameter t in [-1, 1] to a physical point of the facet,
/// running from the lower-id endpoint to the higher-id one.
pub fn facet_point(mesh: &Mesh, facet: &Facet, t: f64) -> Point {
    let a = mesh.vertices[facet.verts[0]];
    let b = mesh.vertices[facet.verts[1]];
    [
        0.5 * (a[0] + b[0]) + 0.5 * t * (b[0] - a[0]),
        0.5 * (a[1] + b[1]) + 0.5 * t * (b[1] - a[1]),
    ]
}

/// The facet-attached shapes of one facet, evaluated from its left cell.
fn facet_attached_shapes(
    mesh: &Mesh,
    topo: &FacetTopology,
    space: &CrSpace,
    fid: usize,
) -> Vec<(usize, LocalShape)> {
    let facet = &topo.facets[fid];
    let cell = facet.left;
    let (lo, hi) = facet_local_endpoints(mesh, cell, facet);
    let loc_facet = topo.local_facet_index(cell, fid).unwrap();
    let k = space.k;
    let mut out = Vec::with_capacity(k);
    for j in 1..k {
        out.push((
            space.dof_table[&DofKey::FacetModal(fid, j)],
            LocalShape::FacetModal { lo, hi, j },
        ));
    }
    if k % 2 == 1 {
        out.push((
            space.dof_table[&DofKey::FacetBubble(fid)],
            LocalShape::FacetBubble { loc_facet, degree: k },
        ));
    }
    out
}

/// Number of facet moments fixed per facet: all k of them for odd k; for
/// even k the endpoint values take over and k - 1 moments remain.
fn n_facet_moments(k: usize) -> usize {
    if k % 2 == 1 {
        k
    } else {
        k - 1
    }
}

/// Solves the local facet system matching the moments of `target` (trace
/// values at the edge quadrature points of the facet), minus contributions
/// already fixed (vertex functions for even k).
fn solve_facet_moments(
    mesh: &Mesh,
    topo: &FacetTopology,
    space: &CrSpace,
    fid: usize,
    eq: &EdgeQuadrature,
    target: &[f64],
) -> Result<Vec<(usize, f64)>> {
    let facet = &topo.facets[fid];
    let cell = facet.left;
    let geom = space.geom(cell);
    let shapes = facet_attached_shapes(mesh, topo, space, fid);
    let n = shapes.len();
    let n_mom = n_facet_moments(space.k);
    debug_assert_eq!(n, n_mom);
    let mut mat = vec![vec![0.0; n]; n_mom];
    let mut rhs = vec![0.0; n_mom];
    for (q, (&t, &w)) in eq.points.iter().zip(&eq.weights).enumerate() {
        let x = facet_point(mesh, facet, t);
        let l = mesh.barycentric(cell, x);
        for j in 0..n_mom {
            let s = legendre_eval(j, t);
            rhs[j] += w * target[q] * s;
            for (i, (_, shape)) in shapes.iter().enumerate() {
                mat[j][i] += w * eval_shape(shape, geom, &l) * s;
            }
        }
    }
    let coeffs = solve_dense(mat, rhs)?;
    Ok(shapes.iter().map(|&(g, _)| g).zip(coeffs).collect())
}

/// Modal interpolant onto the CR space.
///
/// Odd k: facet Legendre moments j = 0..k-1 and bulk moments of order up to
/// k - 3 of the interpolant match those of `q`. Even k: vertex values and
/// bulk moments match, the facet moments j = 0..k-2 match (the remaining
/// facet moment is obstructed for even order), and all bulk bubble
/// coefficients are zero.
pub fn cr_interpolate(
    mesh: &Mesh,
    topo: &FacetTopology,
    space: &CrSpace,
    q: &dyn Fn(Point) -> f64,
) -> Result<Vec<f64>> {
    let k = space.k;
    let even = k % 2 == 0;
    let mut coeffs = vec![0.0; space.n_dofs];

    if even {
        for v in 0..mesh.n_vertices() {
            coeffs[space.dof_table[&DofKey::Vertex(v)]] = q(mesh.vertices[v]);
        }
    }

    let eq = quadrature_edge(2 * k + 6)?;
    for fid in 0..topo.n_facets() {
        let facet = &topo.facets[fid];
        let cell = facet.left;
        let geom = space.geom(cell);
        // Trace of q minus the already-fixed vertex part.
        let mut target = Vec::with_capacity(eq.points.len());
        for &t in &eq.points {
            let x = facet_point(mesh, facet, t);
            let mut val = q(x);
            if even {
                let l = mesh.barycentric(cell, x);
                for loc in 0..3 {
                    let v = mesh.cells[cell][loc];
                    val -= coeffs[space.dof_table[&DofKey::Vertex(v)]]
                        * eval_shape(&LocalShape::Vertex { loc }, geom, &l);
                }
            }
            target.push(val);
        }
        for (g, c) in solve_facet_moments(mesh, topo, space, fid, &eq, &target)? {
            coeffs[g] = c;
        }
    }

    // Bulk moments against the P_{k-3} monomials.
    let n_bulk = dim_pk(k as i64 - 3);
    if n_bulk > 0 {
        let tq = quadrature_triangle(2 * k + 6)?;
        let bulk_exps = monomial_exponents(k - 3);
        for c in 0..mesh.n_cells() {
            let geom = space.geom(c);
            let mut mat = vec![vec![0.0; n_bulk]; n_bulk];
            let mut rhs = vec![0.0; n_bulk];
            for (l, &w) in tq.points.iter().zip(&tq.weights) {
                let x = geom.point(l);
                // residual of q after facet/vertex contributions
                let mut resid = q(x);
                for &(g, ref shape) in &space.cell_dofs[c] {
                    if matches!(shape, LocalShape::BulkModal { .. }) {
                        continue;
                    }
                    resid -= coeffs[g] * eval_shape(shape, geom, l);
                }
                let scale = w * 2.0 * geom.area;
                for (bi, &(ax, ay)) in bulk_exps.iter().enumerate() {
                    let m = eval_scaled_monomial(geom, x, ax, ay);
                    rhs[bi] += scale * resid * m;
                    for (bj, &(axj, ayj)) in bulk_exps.iter().enumerate() {
                        let phi = eval_shape(&LocalShape::BulkModal { ax: axj, ay: ayj }, geom, l);
                        mat[bi][bj] += scale * phi * m;
                    }
                }
            }
            let sol = solve_dense(mat, rhs)?;
            for (bi, cji) in sol.into_iter().enumerate() {
                coeffs[space.dof_table[&DofKey::BulkModal(c, bi)]] = cji;
            }
        }
    }
    Ok(coeffs)
}

fn eval_scaled_monomial(geom: &CellGeometry, x: Point, ax: u32, ay: u32) -> f64 {
    let xi = (x[0] - geom.barycenter[0]) / geom.diameter;
    let eta = (x[1] - geom.barycenter[1]) / geom.diameter;
    xi.powi(ax as i32) * eta.powi(ay as i32)
}

/// Fills the prescribed values of the Dirichlet-constrained dofs from the
/// boundary trace `g`. Odd k fixes each facet's modal + bubble coefficients
/// through the k facet moments; even k pins the endpoint vertex values and
/// fixes the modal coefficients through the remaining k - 1 moments.
pub fn apply_dirichlet(
    space: &mut CrSpace,
    mesh: &Mesh,
    topo: &FacetTopology,
    g: &dyn Fn(Point) -> f64,
) -> Result<()> {
    if !topo.has_dirichlet() {
        return Err(Error::InvalidArgument(
            "apply_dirichlet requires a nonempty Dirichlet boundary".into(),
        ));
    }
    let k = space.k;
    let even = k % 2 == 0;
    let eq = quadrature_edge(2 * k + 6)?;
    let mut values: BTreeMap<usize, f64> = BTreeMap::new();
    for (fid, facet) in topo.dirichlet() {
        let cell = facet.left;
        let geom = space.geom(cell);
        if even {
            for &v in &facet.verts {
                values.insert(space.dof_table[&DofKey::Vertex(v)], g(mesh.vertices[v]));
            }
        }
        let mut target = Vec::with_capacity(eq.points.len());
        for &t in &eq.points {
            let x = facet_point(mesh, facet, t);
            let mut val = g(x);
            if even {
                let l = mesh.barycentric(cell, x);
                for loc in 0..3 {
                    let v = mesh.cells[cell][loc];
                    if let Some(&gv) = values.get(&space.dof_table[&DofKey::Vertex(v)]) {
                        val -= gv * eval_shape(&LocalShape::Vertex { loc }, geom, &l);
                    }
                }
            }
            target.push(val);
        }
        for (gdof, c) in solve_facet_moments(mesh, topo, space, fid, &eq, &target)? {
            values.insert(gdof, c);
        }
    }
    for (dof, val) in values {
        if space.dirichlet_dofs.insert(dof, val).is_none() {
            return Err(Error::Data(format!(
                "dof {dof} received a Dirichlet value but was not marked constrained"
            )));
        }
    }
    Ok(())
}

/// Point value of a CR function.
pub fn eval_cr(
    mesh: &Mesh,
    space: &CrSpace,
    coeffs: &[f64],
    cell: usize,
    x: Point,
) -> Result<f64> {
    let l = mesh.barycentric(cell, x);
    if l.iter().any(|&li| li < -1e-12) {
        return Err(Error::Domain(format!("point {x:?} outside cell {cell}")));
    }
    let geom = space.geom(cell);
    Ok(space.cell_dofs[cell]
        .iter()
        .map(|&(g, ref shape)| coeffs[g] * eval_shape(shape, geom, &l))
        .sum())
}

/// Broken gradient of a CR function at a point of a cell.
pub fn eval_cr_grad(
    mesh: &Mesh,
    space: &CrSpace,
    coeffs: &[f64],
    cell: usize,
    x: Point,
) -> Result<Point> {
    let l = mesh.barycentric(cell, x);
    if l.iter().any(|&li| li < -1e-12) {
        return Err(Error::Domain(format!("point {x:?} outside cell {cell}")));
    }
    let geom = space.geom(cell);
    let mut grad = [0.0, 0.0];
    for &(g, ref shape) in &space.cell_dofs[cell] {
        let gs = eval_shape_grad(shape, geom, &l);
        grad[0] += coeffs[g] * gs[0];
        grad[1] += coeffs[g] * gs[1];
    }
    Ok(grad)
}

/// Elementwise discontinuous vector P_{k-1} space with an L2-orthonormal
/// modal basis on every physical cell.
#[derive(Debug, Clone)]
pub struct FluxSpace {
    pub k_minus_1: usize,
    /// Scalar modes per cell.
    pub modes_per_cell: usize,
    pub n_dofs: usize,
    pub bases: Vec<OrthoPolyBasis>,
    pub cell_geoms: Vec<CellGeometry>,
}

impl FluxSpace {
    /// First dof of a cell block; within the block the layout is
    /// `[mode, component]` with the component index fastest.
    pub fn cell_offset(&self, cell: usize) -> usize {
        2 * self.modes_per_cell * cell
    }

    pub fn dof(&self, cell: usize, mode: usize, comp: usize) -> usize {
        self.cell_offset(cell) + 2 * mode + comp
    }
}

pub fn build_flux_space(mesh: &Mesh, k_minus_1: usize) -> Result<FluxSpace> {
    let quad = quadrature_triangle((2 * k_minus_1 + 2).max(2))?;
    let modes = dim_pk(k_minus_1 as i64);
    let mut bases = Vec::with_capacity(mesh.n_cells());
    let mut cell_geoms = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let geom = CellGeometry::of(mesh, c);
        bases.push(OrthoPolyBasis::build(&geom, k_minus_1, &quad));
        cell_geoms.push(geom);
    }
    Ok(FluxSpace {
        k_minus_1,
        modes_per_cell: modes,
        n_dofs: 2 * modes * mesh.n_cells(),
        bases,
        cell_geoms,
    })
}

/// Value of a flux-space function at a point of a cell.
pub fn eval_flux(flux: &FluxSpace, coeffs: &[f64], cell: usize, x: Point) -> Point {
    let m = flux.modes_per_cell;
    let mut vals = vec![0.0; m];
    flux.bases[cell].eval_all(x, &mut vals);
    let off = flux.cell_offset(cell);
    let mut out = [0.0, 0.0];
    for (mode, &v) in vals.iter().enumerate() {
        out[0] += coeffs[off + 2 * mode] * v;
        out[1] += coeffs[off + 2 * mode + 1] * v;
    }
    out
}

/// Cellwise L2 projection of a vector field onto the flux space. With the
/// orthonormal basis the coefficients are plain inner products.
pub fn project_l2_flux(
    flux: &FluxSpace,
    field: &dyn Fn(Point) -> [f64; 2],
    quad_degree: usize,
) -> Result<Vec<f64>> {
    let quad = quadrature_triangle(quad_degree)?;
    let m = flux.modes_per_cell;
    let mut coeffs = vec![0.0; flux.n_dofs];
    let mut vals = vec![0.0; m];
    for (c, geom) in flux.cell_geoms.iter().enumerate() {
        let off = flux.cell_offset(c);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let x = geom.point(l);
            let f = field(x);
            flux.bases[c].eval_all(x, &mut vals);
            let scale = w * 2.0 * geom.area;
            for (mode, &v) in vals.iter().enumerate() {
                coeffs[off + 2 * mode] += scale * f[0] * v;
                coeffs[off + 2 * mode + 1] += scale * f[1] * v;
            }
        }
    }
    Ok(coeffs)
}

/// Jump of a CR function across a facet at edge parameter t: left trace minus
/// right trace on interior facets, the trace itself on boundary facets.
pub fn cr_jump(
    mesh: &Mesh,
    topo: &FacetTopology,
    space: &CrSpace,
    coeffs: &[f64],
    fid: usize,
    t: f64,
) -> Result<f64> {
    let facet = &topo.facets[fid];
    let x = facet_point(mesh, facet, t);
    let left = eval_cr(mesh, space, coeffs, facet.left, x)?;
    match facet.right {
        Some(r) => Ok(left - eval_cr(mesh, space, coeffs, r, x)?),
        None => Ok(left),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_facets, generate_structured_mesh, BoundingBox, TagRule};

    fn two_cell() -> (Mesh, FacetTopology) {
        let mesh = generate_structured_mesh(1, 1, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&mesh, &TagRule::AllNeumann).unwrap();
        (mesh, topo)
    }

    #[test]
    fn classical_cr_dimensions() {
        let (mesh, topo) = two_cell();
        let space = build_cr_space(&mesh, &topo, 1).unwrap();
        assert_eq!(space.n_dofs, 5);
        assert!(space.has_mean_constraint);
        assert!(space.removed_bubble.is_none());
    }

    #[test]
    fn single_cell_dimensions_match_pk() {
        let mesh = Mesh {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            cells: vec![[0, 1, 2]],
            domain_box: BoundingBox::new([0.0, 0.0], [1.0, 1.0]),
        };
        let topo = build_facets(&mesh, &TagRule::AllNeumann).unwrap();
        for k in 1..=5 {
            let space = build_cr_space(&mesh, &topo, k).unwrap();
            assert_eq!(space.n_dofs, dim_pk(k as i64), "k = {k}");
        }
    }

    #[test]
    fn two_cell_even_k_counts() {
        let (mesh, topo) = two_cell();
        let space = build_cr_space(&mesh, &topo, 2).unwrap();
        // 4 vertices + 5 facet modal + 0 bulk modal + 1 retained bubble
        assert_eq!(space.n_dofs, 10);
        assert_eq!(space.removed_bubble, Some(0));
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let (mesh, topo) = two_cell();
        for k in 1..=4usize {
            let space = build_cr_space(&mesh, &topo, k).unwrap();
            let q = move |p: Point| {
                // a full-degree polynomial of degree k
                (p[0] + 0.7 * p[1] + 0.3).powi(k as i32) + 0.5 * p[0]
            };
            let coeffs = cr_interpolate(&mesh, &topo, &space, &q).unwrap();
            for cell in 0..mesh.n_cells() {
                let geom = space.geom(cell);
                for l in [[0.2, 0.3, 0.5], [0.6, 0.1, 0.3], [1.0 / 3.0; 3]] {
                    let x = geom.point(&l);
                    let got = eval_cr(&mesh, &space, &coeffs, cell, x).unwrap();
                    assert!(
                        (got - q(x)).abs() < 1e-11,
                        "k={k}, cell={cell}: {got} vs {}",
                        q(x)
                    );
                }
            }
        }
    }

    #[test]
    fn interpolation_of_constant() {
        let (mesh, topo) = two_cell();
        for k in 1..=4usize {
            let space = build_cr_space(&mesh, &topo, k).unwrap();
            let coeffs = cr_interpolate(&mesh, &topo, &space, &|_| 1.0).unwrap();
            // facet bubbles (odd) and bulk bubbles (even) must stay zero
            for (key, &g) in &space.dof_table {
                match key {
                    DofKey::FacetBubble(_) | DofKey::BulkBubble(_) => {
                        assert!(coeffs[g].abs() < 1e-12, "k={k}, {key:?}")
                    }
                    _ => {}
                }
            }
            let x = [0.37, -0.21];
            let got = eval_cr(&mesh, &space, &coeffs, 0, x).unwrap();
            assert!((got - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (mesh, topo) = two_cell();
        let space = build_cr_space(&mesh, &topo, 3).unwrap();
        let q = |p: Point| (p[0] * 1.3 - 0.4 * p[1]).powi(3) + p[1];
        let coeffs = cr_interpolate(&mesh, &topo, &space, &q).unwrap();
        let x = [0.2, -0.4];
        let cell = 0;
        let g = eval_cr_grad(&mesh, &space, &coeffs, cell, x).unwrap();
        let h = 1e-6;
        let fdx = (eval_cr(&mesh, &space, &coeffs, cell, [x[0] + h, x[1]]).unwrap()
            - eval_cr(&mesh, &space, &coeffs, cell, [x[0] - h, x[1]]).unwrap())
            / (2.0 * h);
        let fdy = (eval_cr(&mesh, &space, &coeffs, cell, [x[0], x[1] + h]).unwrap()
            - eval_cr(&mesh, &space, &coeffs, cell, [x[0], x[1] - h]).unwrap())
            / (2.0 * h);
        assert!((g[0] - fdx).abs() < 1e-6 * (1.0 + fdx.abs()));
        assert!((g[1] - fdy).abs() < 1e-6 * (1.0 + fdy.abs()));
    }

    #[test]
    fn zero_coeffs_evaluate_to_zero() {
        let (mesh, topo) = two_cell();
        let space = build_cr_space(&mesh, &topo, 2).unwrap();
        let coeffs = vec![0.0; space.n_dofs];
        assert_eq!(eval_cr(&mesh, &space, &coeffs, 0, [0.1, -0.9]).unwrap(), 0.0);
    }

    #[test]
    fn interpolant_moment_identities() {
        // Facet moments: all k for odd k, k - 1 for even k; bulk moments for
        // k >= 3. Checked against a smooth non-polynomial field.
        let mesh = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&mesh, &TagRule::AllNeumann).unwrap();
        let q = |p: Point| (1.3 * p[0]).sin() * (0.9 * p[1]).cos() + 0.2 * p[0];
        for k in 1..=4usize {
            let space = build_cr_space(&mesh, &topo, k).unwrap();
            let coeffs = cr_interpolate(&mesh, &topo, &space, &q).unwrap();
            let eq = quadrature_edge(2 * k + 10).unwrap();
            let n_mom = n_facet_moments(k);
            for (fid, facet) in topo.facets.iter().enumerate() {
                let cell = facet.left;
                for j in 0..n_mom {
                    let mut m = 0.0;
                    for (&t, &w) in eq.points.iter().zip(&eq.weights) {
                        let x = facet_point(&mesh, facet, t);
                        let v = eval_cr(&mesh, &space, &coeffs, cell, x).unwrap();
                        m += w * (q(x) - v) * legendre_eval(j, t);
                    }
                    m *= 0.5; // |F|^{-1} ds = dt / 2
                    assert!(m.abs() < 1e-11, "k={k}, facet {fid}, moment {j}: {m}");
                }
            }
            if k >= 3 {
                let tq = quadrature_triangle(2 * k + 10).unwrap();
                let exps = monomial_exponents(k - 3);
                for c in 0..mesh.n_cells() {
                    let geom = space.geom(c);
                    for &(ax, ay) in &exps {
                        let mut m = 0.0;
                        for (l, &w) in tq.points.iter().zip(&tq.weights) {
                            let x = geom.point(l);
                            let v = eval_cr(&mesh, &space, &coeffs, c, x).unwrap();
                            m += w * 2.0 * geom.area * (q(x) - v)
                                * eval_scaled_monomial(geom, x, ax, ay);
                        }
                        assert!(m.abs() < 1e-11, "k={k}, cell {c}, bulk ({ax},{ay})");
                    }
                }
            }
        }
    }

    #[test]
    fn dirichlet_constraints_match_interpolant() {
        // Pin the left side; for a space-resident trace the prescribed values
        // must equal the interpolant coefficients on the Dirichlet facets.
        let mesh = generate_structured_mesh(1, 1, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&mesh, &TagRule::DirichletLeft).unwrap();
        for k in [1usize, 2, 3] {
            let mut space = build_cr_space(&mesh, &topo, k).unwrap();
            assert!(!space.has_mean_constraint);
            let g = move |p: Point| (p[1] + 0.4).powi(k as i32) - 1.0;
            apply_dirichlet(&mut space, &mesh, &topo, &g).unwrap();
            let interp = cr_interpolate(&mesh, &topo, &space, &g).unwrap();
            for (&dof, &val) in &space.dirichlet_dofs {
                assert!(
                    (val - interp[dof]).abs() < 1e-11,
                    "k={k}, dof {dof}: {val} vs {}",
                    interp[dof]
                );
            }
        }
    }

    #[test]
    fn homogeneous_dirichlet_gives_zero_values() {
        let mesh = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&mesh, &TagRule::DirichletLeft).unwrap();
        let mut space = build_cr_space(&mesh, &topo, 3).unwrap();
        apply_dirichlet(&mut space, &mesh, &topo, &|_| 0.0).unwrap();
        assert!(!space.dirichlet_dofs.is_empty());
        for (_, &v) in &space.dirichlet_dofs {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn flux_projection_is_orthogonal_and_exact() {
        let (mesh, _) = two_cell();
        let flux = build_flux_space(&mesh, 0).unwrap();
        assert_eq!(flux.n_dofs, 2 * 2);
        // constants are reproduced exactly by the order-0 space
        let coeffs = project_l2_flux(&flux, &|_| [1.0, 1.0], 4).unwrap();
        for c in 0..mesh.n_cells() {
            let v = eval_flux(&flux, &coeffs, c, mesh.cell_barycenter(c));
            assert!((v[0] - 1.0).abs() < 1e-13 && (v[1] - 1.0).abs() < 1e-13);
        }
        // projecting (x, y) onto order 0 yields the barycenter value
        let coeffs = project_l2_flux(&flux, &|p| [p[0], p[1]], 4).unwrap();
        for c in 0..mesh.n_cells() {
            let bc = mesh.cell_barycenter(c);
            let v = eval_flux(&flux, &coeffs, c, bc);
            assert!((v[0] - bc[0]).abs() < 1e-13 && (v[1] - bc[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn flux_projection_error_orthogonality() {
        let (mesh, _) = two_cell();
        let k_minus_1 = 2usize;
        let flux = build_flux_space(&mesh, k_minus_1).unwrap();
        assert_eq!(flux.modes_per_cell, 6);
        assert_eq!(flux.n_dofs, 2 * 6 * 2);
        let w = |p: Point| [(1.1 * p[0]).sin(), (0.7 * p[1]).cos()];
        let coeffs = project_l2_flux(&flux, &w, 2 * k_minus_1 + 8).unwrap();
        // error must be orthogonal to every basis function of the space
        let quad = quadrature_triangle(2 * k_minus_1 + 8).unwrap();
        let m = flux.modes_per_cell;
        let mut vals = vec![0.0; m];
        for (c, geom) in flux.cell_geoms.iter().enumerate() {
            for mode in 0..m {
                let mut dots = [0.0, 0.0];
                for (l, &wq) in quad.points.iter().zip(&quad.weights) {
                    let x = geom.point(l);
                    flux.bases[c].eval_all(x, &mut vals);
                    let uh = eval_flux(&flux, &coeffs, c, x);
                    let ue = w(x);
                    let scale = wq * 2.0 * geom.area;
                    dots[0] += scale * (ue[0] - uh[0]) * vals[mode];
                    dots[1] += scale * (ue[1] - uh[1]) * vals[mode];
                }
                assert!(dots[0].abs() < 1e-12 && dots[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jump_moments_of_all_basis_functions_vanish() {
        let mesh = generate_structured_mesh(2, 2, BoundingBox::biunit()).unwrap();
        let topo = build_facets(&mesh, &TagRule::AllNeumann).unwrap();
        for k in 1..=5usize {
            let space = build_cr_space(&mesh, &topo, k).unwrap();
            let eq = quadrature_edge(2 * k + 2).unwrap();
            let mut coeffs = vec![0.0; space.n_dofs];
            for dof in 0..space.n_dofs {
                coeffs[dof] = 1.0;
                for (fid, facet) in topo.interior() {
                    for j in 0..k {
                        let mut m = 0.0;
                        for (&t, &w) in eq.points.iter().zip(&eq.weights) {
                            m += w
                                * cr_jump(&mesh, &topo, &space, &coeffs, fid, t).unwrap()
                                * legendre_eval(j, t);
                        }
                        m *= 0.5 * facet.length;
                        assert!(m.abs() < 1e-12, "k={k}, dof {dof}, facet {fid}, j={j}");
                    }
                }
                coeffs[dof] = 0.0;
            }
        }
    }
}
