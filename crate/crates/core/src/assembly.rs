//! Assembly of the discrete dual mixed saddle-point system
//!
//!     [ M + N(u)   B^T   0 ] [u]   [ f ]
//!     [ B          0     c ] [p] = [-b + g]
//!     [ 0          c^T   0 ] [l]   [ 0 ]
//!
//! where M carries the linear Darcy weight, N the lagged Forchheimer weight,
//! B the flux/potential coupling, and the bordered row enforces the zero-mean
//! condition of the potential under pure Neumann conditions. Dirichlet dofs
//! are eliminated at assembly time: their columns are folded into the right-
//! hand side and their rows dropped.

use crate::basis::{eval_shape, eval_shape_grad};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, FacetTopology, Mesh, Point};
use crate::quadrature::{quadrature_edge, quadrature_triangle, EdgeQuadrature, TriangleQuadrature};
use crate::spaces::{eval_flux, facet_point, CrSpace, FluxSpace};

/// Inverse permeability tensor, constant or piecewise constant per cell.
#[derive(Debug, Clone)]
pub enum Permeability {
    Constant([[f64; 2]; 2]),
    PerCell(Vec<[[f64; 2]; 2]>),
}

impl Permeability {
    pub fn identity() -> Self {
        Permeability::Constant([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn kinv(&self, cell: usize) -> [[f64; 2]; 2] {
        match self {
            Permeability::Constant(k) => *k,
            Permeability::PerCell(ks) => ks[cell],
        }
    }

    /// Checks symmetry and positive definiteness; returns the smallest
    /// eigenvalue over all cells.
    pub fn validate(&self, n_cells: usize) -> Result<f64> {
        let mut lambda_min = f64::INFINITY;
        for c in 0..n_cells {
            let k = self.kinv(c);
            let scale = k.iter().flatten().fold(0.0f64, |a, &v| a.max(v.abs()));
            if (k[0][1] - k[1][0]).abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::Data(format!(
                    "permeability tensor on cell {c} is not symmetric"
                )));
            }
            let tr = k[0][0] + k[1][1];
            let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
            let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
            let lmin = 0.5 * (tr - disc);
            if !(lmin > 0.0) {
                return Err(Error::Data(format!(
                    "permeability tensor on cell {c} is not positive definite (lambda_min = {lmin})"
                )));
            }
            lambda_min = lambda_min.min(lmin);
        }
        Ok(lambda_min)
    }
}

/// Block-diagonal matrix with one square block per cell (flux-space layout).
#[derive(Debug, Clone)]
pub struct BlockDiag {
    pub block_size: usize,
    pub blocks: Vec<Vec<f64>>,
}

impl BlockDiag {
    pub fn zeros(n_cells: usize, block_size: usize) -> Self {
        Self {
            block_size,
            blocks: vec![vec![0.0; block_size * block_size]; n_cells],
        }
    }

    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        let bs = self.block_size;
        for (c, block) in self.blocks.iter().enumerate() {
            let off = c * bs;
            for i in 0..bs {
                let mut acc = 0.0;
                for j in 0..bs {
                    acc += block[i * bs + j] * x[off + j];
                }
                y[off + i] += acc;
            }
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let bs = self.block_size;
        let mut worst: f64 = 0.0;
        for block in &self.blocks {
            for i in 0..bs {
                for j in 0..i {
                    worst = worst.max((block[i * bs + j] - block[j * bs + i]).abs());
                }
            }
        }
        worst
    }
}

/// Precomputed quadrature tables shared by all assembly passes over a fixed
/// pair of spaces. The flux-basis values at the elevated (data) quadrature
/// are the per-iteration hot path and are tabulated once.
pub struct AssemblyCache {
    pub poly_quad: TriangleQuadrature,
    pub data_quad: TriangleQuadrature,
    pub edge_quad: EdgeQuadrature,
    /// `[cell][q * modes + mode]`: flux scalar basis at the data quadrature.
    flux_data_tab: Vec<Vec<f64>>,
    /// Physical quadrature points and scaled weights of the data rule.
    data_pts: Vec<Vec<Point>>,
    data_wts: Vec<Vec<f64>>,
}

impl AssemblyCache {
    pub fn new(mesh: &Mesh, flux: &FluxSpace, k: usize) -> Result<Self> {
        let poly_quad = quadrature_triangle(2 * k + 2)?;
        let data_quad = quadrature_triangle(2 * k + 6)?;
        let edge_quad = quadrature_edge(2 * k + 6)?;
        let m = flux.modes_per_cell;
        let npts = data_quad.points.len();
        let mut flux_data_tab = Vec::with_capacity(mesh.n_cells());
        let mut data_pts = Vec::with_capacity(mesh.n_cells());
        let mut data_wts = Vec::with_capacity(mesh.n_cells());
        for (c, geom) in flux.cell_geoms.iter().enumerate() {
            let mut tab = vec![0.0; npts * m];
            let mut pts = Vec::with_capacity(npts);
            let mut wts = Vec::with_capacity(npts);
            for (q, (l, &w)) in data_quad.points.iter().zip(&data_quad.weights).enumerate() {
                let x = geom.point(l);
                flux.bases[c].eval_all(x, &mut tab[q * m..(q + 1) * m]);
                pts.push(x);
                wts.push(w * 2.0 * geom.area);
            }
            flux_data_tab.push(tab);
            data_pts.push(pts);
            data_wts.push(wts);
        }
        Ok(Self {
            poly_quad,
            data_quad,
            edge_quad,
            flux_data_tab,
            data_pts,
            data_wts,
        })
    }
}

/// M with weight (mu / rho) K^{-1}; block diagonal per cell.
pub fn assemble_weighted_mass(
    cache: &AssemblyCache,
    flux: &FluxSpace,
    kinv: &Permeability,
    mu_over_rho: f64,
) -> Result<BlockDiag> {
    let n_cells = flux.cell_geoms.len();
    kinv.validate(n_cells)?;
    let m = flux.modes_per_cell;
    let bs = 2 * m;
    let mut out = BlockDiag::zeros(n_cells, bs);
    for c in 0..n_cells {
        let k = kinv.kinv(c);
        let tab = &cache.flux_data_tab[c];
        let wts = &cache.data_wts[c];
        // scalar mass on the orthonormal basis
        let mut scal = vec![0.0; m * m];
        for (q, &w) in wts.iter().enumerate() {
            for i in 0..m {
                let vi = tab[q * m + i];
                for j in 0..m {
                    scal[i * m + j] += w * vi * tab[q * m + j];
                }
            }
        }
        let block = &mut out.blocks[c];
        for i in 0..m {
            for j in 0..m {
                let s = mu_over_rho * scal[i * m + j];
                for a in 0..2 {
                    for b in 0..2 {
                        block[(2 * i + a) * bs + (2 * j + b)] = s * k[a][b];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// N with weight (beta / rho) |u_prev|^{alpha - 2}, assembled with the
/// elevated quadrature.
pub fn assemble_nonlinear_mass(
    cache: &AssemblyCache,
    flux: &FluxSpace,
    u_prev: &[f64],
    alpha: f64,
    beta_over_rho: f64,
) -> Result<BlockDiag> {
    if !(alpha > 2.0) {
        return Err(Error::InvalidArgument(format!(
            "Forchheimer exponent must satisfy alpha > 2, got {alpha}"
        )));
    }
    let n_cells = flux.cell_geoms.len();
    let m = flux.modes_per_cell;
    let bs = 2 * m;
    let mut out = BlockDiag::zeros(n_cells, bs);
    if beta_over_rho == 0.0 {
        return Ok(out);
    }
    let exp = alpha - 2.0;
    for c in 0..n_cells {
        let tab = &cache.flux_data_tab[c];
        let wts = &cache.data_wts[c];
        let off = flux.cell_offset(c);
        let mut scal = vec![0.0; m * m];
        for (q, &w) in wts.iter().enumerate() {
            let mut ux = 0.0;
            let mut uy = 0.0;
            for mode in 0..m {
                let v = tab[q * m + mode];
                ux += u_prev[off + 2 * mode] * v;
                uy += u_prev[off + 2 * mode + 1] * v;
            }
            let weight = w * beta_over_rho * (ux * ux + uy * uy).sqrt().powf(exp);
            if weight == 0.0 {
                continue;
            }
            for i in 0..m {
                let vi = tab[q * m + i];
                for j in 0..m {
                    scal[i * m + j] += weight * vi * tab[q * m + j];
                }
            }
        }
        let block = &mut out.blocks[c];
        for i in 0..m {
            for j in 0..m {
                let s = scal[i * m + j];
                block[(2 * i) * bs + 2 * j] = s;
                block[(2 * i + 1) * bs + (2 * j + 1)] = s;
            }
        }
    }
    Ok(out)
}

/// Coupling block B with entries (grad_h psi_q, phi_v), restricted to the
/// free potential rows. Columns hitting Dirichlet rows are folded into a
/// right-hand-side correction for the flux equation (via B^T).
pub struct Coupling {
    pub n_p_free: usize,
    /// CR global dof -> free row index.
    pub free_index: Vec<Option<usize>>,
    /// Entries (free p row, u column, value); duplicates sum.
    pub entries: Vec<(usize, usize, f64)>,
    /// -B^T restricted to fixed columns times their prescribed values.
    pub rhs_u_correction: Vec<f64>,
}

pub fn assemble_coupling(
    cache: &AssemblyCache,
    mesh: &Mesh,
    cr: &CrSpace,
    flux: &FluxSpace,
) -> Result<Coupling> {
    if cr.cell_dofs.len() != flux.cell_geoms.len() {
        return Err(Error::Structure(
            "potential and flux spaces live on different meshes".into(),
        ));
    }
    let mut free_index = vec![None; cr.n_dofs];
    let mut next = 0;
    for dof in 0..cr.n_dofs {
        if !cr.is_dirichlet(dof) {
            free_index[dof] = Some(next);
            next += 1;
        }
    }
    let n_p_free = next;
    let m = flux.modes_per_cell;
    let quad = &cache.poly_quad;
    let mut entries = Vec::new();
    let mut rhs_u_correction = vec![0.0; flux.n_dofs];
    let mut vals = vec![0.0; m];
    for (c, geom) in flux.cell_geoms.iter().enumerate() {
        let off = flux.cell_offset(c);
        let nloc = cr.cell_dofs[c].len();
        let mut local = vec![0.0; nloc * 2 * m];
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let x = geom.point(l);
            flux.bases[c].eval_all(x, &mut vals);
            let scale = w * 2.0 * geom.area;
            for (li, &(_, ref shape)) in cr.cell_dofs[c].iter().enumerate() {
                let grad = eval_shape_grad(shape, geom, l);
                for (mode, &v) in vals.iter().enumerate() {
                    local[li * 2 * m + 2 * mode] += scale * grad[0] * v;
                    local[li * 2 * m + 2 * mode + 1] += scale * grad[1] * v;
                }
            }
        }
        for (li, &(g, _)) in cr.cell_dofs[c].iter().enumerate() {
            match free_index[g] {
                Some(row) => {
                    for col in 0..2 * m {
                        entries.push((row, off + col, local[li * 2 * m + col]));
                    }
                }
                None => {
                    let val = cr.dirichlet_dofs[&g];
                    for col in 0..2 * m {
                        rhs_u_correction[off + col] -= val * local[li * 2 * m + col];
                    }
                }
            }
        }
    }
    Ok(Coupling {
        n_p_free,
        free_index,
        entries,
        rhs_u_correction,
    })
}

/// Load vectors: (f, phi_v) for the flux equation and
/// -(b, psi_q) + (g_N, psi_q)_{Gamma_N} for the constraint, on free rows.
#[allow(clippy::too_many_arguments)]
pub fn assemble_rhs(
    cache: &AssemblyCache,
    mesh: &Mesh,
    topo: &FacetTopology,
    cr: &CrSpace,
    flux: &FluxSpace,
    coupling: &Coupling,
    f: &dyn Fn(Point) -> [f64; 2],
    b: &dyn Fn(Point) -> f64,
    g_n: &dyn Fn(Point, Point) -> f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = flux.modes_per_cell;
    let mut rhs_u = vec![0.0; flux.n_dofs];
    let mut rhs_p = vec![0.0; coupling.n_p_free];
    for (c, geom) in flux.cell_geoms.iter().enumerate() {
        let off = flux.cell_offset(c);
        let tab = &cache.flux_data_tab[c];
        for (q, (&w, x)) in cache.data_wts[c].iter().zip(&cache.data_pts[c]).enumerate() {
            let fv = f(*x);
            for mode in 0..m {
                let v = tab[q * m + mode];
                rhs_u[off + 2 * mode] += w * fv[0] * v;
                rhs_u[off + 2 * mode + 1] += w * fv[1] * v;
            }
            let bv = b(*x);
            if bv != 0.0 {
                let l = mesh.barycentric(c, *x);
                for &(g, ref shape) in &cr.cell_dofs[c] {
                    if let Some(row) = coupling.free_index[g] {
                        rhs_p[row] -= w * bv * eval_shape(shape, geom, &l);
                    }
                }
            }
        }
    }
    // Neumann boundary term, facet-wise with the global facet parametrization.
    let eq = &cache.edge_quad;
    for (fid, facet) in topo.boundary() {
        if facet.tag != Some(BoundaryTag::Neumann) {
            continue;
        }
        let cell = facet.left;
        let geom = &flux.cell_geoms[cell];
        let _ = fid;
        for (&t, &w) in eq.points.iter().zip(&eq.weights) {
            let x = facet_point(mesh, facet, t);
            let gv = g_n(x, facet.normal);
            if gv == 0.0 {
                continue;
            }
            let l = mesh.barycentric(cell, x);
            let scale = w * 0.5 * facet.length;
            for &(g, ref shape) in &cr.cell_dofs[cell] {
                if let Some(row) = coupling.free_index[g] {
                    rhs_p[row] += scale * gv * eval_shape(shape, geom, &l);
                }
            }
        }
    }
    for (ru, corr) in rhs_u.iter_mut().zip(&coupling.rhs_u_correction) {
        *ru += corr;
    }
    Ok((rhs_u, rhs_p))
}

/// Zero-mean constraint row: integral of each free potential basis function.
pub fn assemble_mean_constraint(
    cache: &AssemblyCache,
    cr: &CrSpace,
    flux: &FluxSpace,
    coupling: &Coupling,
) -> Vec<f64> {
    let quad = &cache.poly_quad;
    let mut c_row = vec![0.0; coupling.n_p_free];
    for (c, geom) in flux.cell_geoms.iter().enumerate() {
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let scale = w * 2.0 * geom.area;
            for &(g, ref shape) in &cr.cell_dofs[c] {
                if let Some(row) = coupling.free_index[g] {
                    c_row[row] += scale * eval_shape(shape, geom, l);
                }
            }
        }
    }
    c_row
}

/// How to react to a violated pure-Neumann compatibility condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompatibilityPolicy {
    Error,
    Warn,
}

/// Checks int_Omega b = int_Gamma g_N for pure Neumann problems.
pub fn check_compatibility(
    cache: &AssemblyCache,
    mesh: &Mesh,
    topo: &FacetTopology,
    flux: &FluxSpace,
    b: &dyn Fn(Point) -> f64,
    g_n: &dyn Fn(Point, Point) -> f64,
    policy: CompatibilityPolicy,
) -> Result<(f64, f64)> {
    let mut int_b = 0.0;
    for c in 0..flux.cell_geoms.len() {
        for (&w, x) in cache.data_wts[c].iter().zip(&cache.data_pts[c]) {
            int_b += w * b(*x);
        }
    }
    let mut int_g = 0.0;
    for (_, facet) in topo.boundary() {
        for (&t, &w) in cache.edge_quad.points.iter().zip(&cache.edge_quad.weights) {
            let x = facet_point(mesh, facet, t);
            int_g += w * 0.5 * facet.length * g_n(x, facet.normal);
        }
    }
    if (int_b - int_g).abs() > 1e-10 * (1.0 + int_b.abs()) {
        let msg = format!(
            "pure-Neumann compatibility violated: int b = {int_b:.3e}, int g_N = {int_g:.3e}"
        );
        match policy {
            CompatibilityPolicy::Error => return Err(Error::Data(msg)),
            CompatibilityPolicy::Warn => log::warn!("{msg}"),
        }
    }
    Ok((int_b, int_g))
}

/// The assembled saddle-point system. `n_block` holds the current lagged
/// Forchheimer weight and is swapped by the solver between iterations.
pub struct SaddleSystem {
    pub n_u: usize,
    pub n_p_free: usize,
    pub free_index: Vec<Option<usize>>,
    pub m_block: BlockDiag,
    pub n_block: BlockDiag,
    pub b_entries: Vec<(usize, usize, f64)>,
    pub c_row: Option<Vec<f64>>,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
}

impl SaddleSystem {
    pub fn total_dim(&self) -> usize {
        self.n_u + self.n_p_free + usize::from(self.c_row.is_some())
    }

    pub fn stacked_rhs(&self) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.total_dim());
        r.extend_from_slice(&self.rhs_u);
        r.extend_from_slice(&self.rhs_p);
        if self.c_row.is_some() {
            r.push(0.0);
        }
        r
    }

    /// y = A s with the currently installed N block.
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        let (nu, np) = (self.n_u, self.n_p_free);
        let mut y = vec![0.0; self.total_dim()];
        self.m_block.apply_add(&s[..nu], &mut y[..nu]);
        self.n_block.apply_add(&s[..nu], &mut y[..nu]);
        for &(row, col, v) in &self.b_entries {
            // B^T p in the flux rows, B u in the constraint rows
            y[col] += v * s[nu + row];
            y[nu + row] += v * s[col];
        }
        if let Some(c_row) = &self.c_row {
            let lam = s[nu + np];
            for (row, &cv) in c_row.iter().enumerate() {
                y[nu + row] += cv * lam;
                y[nu + np] += cv * s[nu + row];
            }
        }
        y
    }

    /// Euclidean norm of A s - r with the currently installed N block.
    pub fn residual(&self, s: &[f64]) -> f64 {
        let y = self.apply(s);
        let r = self.stacked_rhs();
        y.iter()
            .zip(&r)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Full potential coefficient vector: solved free values scattered over
    /// the prescribed Dirichlet values.
    pub fn scatter_p(&self, cr: &CrSpace, p_free: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; cr.n_dofs];
        for dof in 0..cr.n_dofs {
            match self.free_index[dof] {
                Some(row) => p[dof] = p_free[row],
                None => p[dof] = cr.dirichlet_dofs[&dof],
            }
        }
        p
    }
}
