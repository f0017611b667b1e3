//! Numerical study of the broken Sobolev-Poincare and trace inequalities in
//! Crouzeix-Raviart spaces: averaged-jump seminorms and sampled estimates of
//! the inequality constants across refinement and order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{eval_shape, eval_shape_grad};
use crate::error::{Error, Result};
use crate::mesh::{FacetTopology, Mesh};
use crate::quadrature::{quadrature_edge, quadrature_triangle, MAX_TRIANGLE_DEGREE};
use crate::spaces::{cr_jump, eval_cr, eval_cr_grad, facet_point, CrSpace};

/// Exponent bookkeeping for the broken seminorms in two dimensions.
#[derive(Debug, Clone, Copy)]
pub struct BrokenNormSpec {
    /// Gradient exponent, in [1, 2).
    pub p: f64,
    /// Target Lebesgue exponent on the left-hand side.
    pub q: f64,
    /// p(d-1)/(d-p) with d = 2.
    pub p_sharp: f64,
    /// h_F power of the facet terms, evaluated at the facet exponent p_sharp.
    pub facet_exponent: f64,
}

impl BrokenNormSpec {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(1.0 <= p && p < 2.0) {
            return Err(Error::InvalidArgument(format!(
                "gradient exponent must lie in [1, 2), got {p}"
            )));
        }
        let p_sharp = p / (2.0 - p);
        let p_star = 2.0 * p / (2.0 - p);
        if !(1.0 <= q && q <= p_star + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "target exponent {q} outside [1, p*] with p* = {p_star}"
            )));
        }
        // -p/q' - d p/p' + d p/q' with d = 2 and q = p_sharp
        let qf_conj = p_sharp / (p_sharp - 1.0);
        let facet_exponent = p / qf_conj - 2.0 * (p - 1.0);
        Ok(Self {
            p,
            q,
            p_sharp,
            facet_exponent,
        })
    }

    pub fn p_star(&self) -> f64 {
        2.0 * self.p / (2.0 - self.p)
    }
}

fn volume_degree(q: f64, k: usize) -> usize {
    let by_power = (q * k as f64).ceil() as usize + 2;
    by_power.max(2 * k + 6).min(MAX_TRIANGLE_DEGREE)
}

/// || v ||_{L^q(Omega)} of a CR function.
pub fn lq_norm(mesh: &Mesh, cr: &CrSpace, coeffs: &[f64], q: f64) -> Result<f64> {
    let quad = quadrature_triangle(volume_degree(q, cr.k))?;
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let geom = cr.geom(c);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let x = geom.point(l);
            let v = eval_cr(mesh, cr, coeffs, c, x)?;
            acc += w * 2.0 * geom.area * v.abs().powf(q);
        }
    }
    Ok(acc.powf(1.0 / q))
}

/// || v ||_{L^q(Gamma)} over the whole boundary.
pub fn lq_boundary_norm(
    mesh: &Mesh,
    topo: &FacetTopology,
    cr: &CrSpace,
    coeffs: &[f64],
    q: f64,
) -> Result<f64> {
    let eq = quadrature_edge((q.ceil() as usize * cr.k + 2).min(crate::quadrature::MAX_EDGE_DEGREE))?;
    let mut acc = 0.0;
    for (_, facet) in topo.boundary() {
        for (&t, &w) in eq.points.iter().zip(&eq.weights) {
            let x = facet_point(mesh, facet, t);
            let v = eval_cr(mesh, cr, coeffs, facet.left, x)?;
            acc += w * 0.5 * facet.length * v.abs().powf(q);
        }
    }
    Ok(acc.powf(1.0 / q))
}

/// || grad_h v ||_{L^p(Omega)}.
pub fn broken_grad_norm(mesh: &Mesh, cr: &CrSpace, coeffs: &[f64], p: f64) -> Result<f64> {
    let quad = quadrature_triangle(volume_degree(p, cr.k))?;
    let mut acc = 0.0;
    for c in 0..mesh.n_cells() {
        let geom = cr.geom(c);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let x = geom.point(l);
            let g = eval_cr_grad(mesh, cr, coeffs, c, x)?;
            acc += w * 2.0 * geom.area * (g[0] * g[0] + g[1] * g[1]).sqrt().powf(p);
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// Averaged-jump broken seminorm: gradient part plus h-weighted facet-mean
/// jumps over interior and Dirichlet facets, measured in L^{p_sharp}.
pub fn broken_tilde_seminorm(
    mesh: &Mesh,
    topo: &FacetTopology,
    cr: &CrSpace,
    coeffs: &[f64],
    spec: &BrokenNormSpec,
) -> Result<f64> {
    let grad = broken_grad_norm(mesh, cr, coeffs, spec.p)?;
    let eq = quadrature_edge(2 * cr.k + 2)?;
    let mut facet_sum = 0.0;
    for (fid, facet) in topo.facets.iter().enumerate() {
        if facet.is_boundary() && facet.tag != Some(crate::mesh::BoundaryTag::Dirichlet) {
            continue;
        }
        let mut mean = 0.0;
        for (&t, &w) in eq.points.iter().zip(&eq.weights) {
            mean += w * 0.5 * cr_jump(mesh, topo, cr, coeffs, fid, t)?;
        }
        // || const ||_{L^q(F)} = |const| h_F^{1/q}
        let norm_q = mean.abs() * facet.length.powf(1.0 / spec.p_sharp);
        facet_sum += facet.length.powf(spec.facet_exponent) * norm_q.powf(spec.p);
    }
    Ok(grad + facet_sum.powf(1.0 / spec.p))
}

/// Full-jump broken seminorm (no facet averaging).
pub fn broken_full_seminorm(
    mesh: &Mesh,
    topo: &FacetTopology,
    cr: &CrSpace,
    coeffs: &[f64],
    spec: &BrokenNormSpec,
) -> Result<f64> {
    let grad = broken_grad_norm(mesh, cr, coeffs, spec.p)?;
    let eq = quadrature_edge(
        ((spec.p_sharp.ceil() as usize) * cr.k + 2).min(crate::quadrature::MAX_EDGE_DEGREE),
    )?;
    let mut facet_sum = 0.0;
    for (fid, facet) in topo.facets.iter().enumerate() {
        if facet.is_boundary() && facet.tag != Some(crate::mesh::BoundaryTag::Dirichlet) {
            continue;
        }
        let mut acc = 0.0;
        for (&t, &w) in eq.points.iter().zip(&eq.weights) {
            let j = cr_jump(mesh, topo, cr, coeffs, fid, t)?;
            acc += w * 0.5 * facet.length * j.abs().powf(spec.p_sharp);
        }
        let norm_q = acc.powf(1.0 / spec.p_sharp);
        facet_sum += facet.length.powf(spec.facet_exponent) * norm_q.powf(spec.p);
    }
    Ok(grad + facet_sum.powf(1.0 / spec.p))
}

/// Result of the sampled constant estimation.
#[derive(Debug, Clone, Copy)]
pub struct ConstantEstimate {
    /// max over samples of ||v||_{L^{p*}} / ||grad_h v||_{L^p}.
    pub max_poincare: f64,
    /// max over samples of ||v||_{L^{p#}(Gamma)} / ||grad_h v||_{L^p}.
    pub max_trace: f64,
    pub n_skipped: usize,
}

/// Samples random unit-coefficient functions of CR_{k,0} (Dirichlet moments
/// zeroed) and maximizes the Sobolev-Poincare and trace ratios. With
/// homogeneous Dirichlet data the facet terms of the averaged-jump seminorm
/// vanish, so the denominator reduces to the broken gradient norm.
pub fn estimate_constant(
    mesh: &Mesh,
    topo: &FacetTopology,
    cr: &CrSpace,
    p: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ConstantEstimate> {
    if !topo.has_dirichlet() {
        return Err(Error::InvalidArgument(
            "constant estimation requires a nonempty Dirichlet boundary".into(),
        ));
    }
    let spec = BrokenNormSpec::new(p, 2.0 * p / (2.0 - p))?;
    let q_star = spec.p_star();
    let q_sharp = spec.p_sharp;

    // Tabulate shape values and gradients once; the sampling loop then only
    // forms linear combinations.
    let vol_quad = quadrature_triangle(volume_degree(q_star, cr.k))?;
    let edge_quad = quadrature_edge(
        ((q_sharp.ceil() as usize) * cr.k + 2).min(crate::quadrature::MAX_EDGE_DEGREE),
    )?;
    let n_cells = mesh.n_cells();
    let nq = vol_quad.points.len();
    let mut vol_tabs: Vec<(Vec<f64>, Vec<[f64; 2]>, Vec<f64>)> = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let geom = cr.geom(c);
        let nloc = cr.cell_dofs[c].len();
        let mut vals = vec![0.0; nq * nloc];
        let mut grads = vec![[0.0; 2]; nq * nloc];
        let mut wts = vec![0.0; nq];
        for (qi, (l, &w)) in vol_quad.points.iter().zip(&vol_quad.weights).enumerate() {
            wts[qi] = w * 2.0 * geom.area;
            for (li, &(_, ref shape)) in cr.cell_dofs[c].iter().enumerate() {
                vals[qi * nloc + li] = eval_shape(shape, geom, l);
                grads[qi * nloc + li] = eval_shape_grad(shape, geom, l);
            }
        }
        vol_tabs.push((vals, grads, wts));
    }
    let neq = edge_quad.points.len();
    let mut bnd_tabs: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for (_, facet) in topo.boundary() {
        let cell = facet.left;
        let geom = cr.geom(cell);
        let nloc = cr.cell_dofs[cell].len();
        let mut vals = vec![0.0; neq * nloc];
        let mut wts = vec![0.0; neq];
        for (qi, (&t, &w)) in edge_quad.points.iter().zip(&edge_quad.weights).enumerate() {
            let x = facet_point(mesh, facet, t);
            let l = mesh.barycentric(cell, x);
            wts[qi] = w * 0.5 * facet.length;
            for (li, &(_, ref shape)) in cr.cell_dofs[cell].iter().enumerate() {
                vals[qi * nloc + li] = eval_shape(shape, geom, &l);
            }
        }
        bnd_tabs.push((cell, vals, wts));
    }

    let mut max_poincare = 0.0f64;
    let mut max_trace = 0.0f64;
    let mut n_skipped = 0usize;
    let mut coeffs = vec![0.0; cr.n_dofs];
    for sample in 0..n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(sample as u64));
        let mut norm2 = 0.0;
        for (dof, c) in coeffs.iter_mut().enumerate() {
            *c = if cr.is_dirichlet(dof) {
                0.0
            } else {
                rng.gen_range(-1.0..1.0)
            };
            norm2 += *c * *c;
        }
        let inv = 1.0 / norm2.sqrt();
        for c in coeffs.iter_mut() {
            *c *= inv;
        }

        let mut num_star = 0.0;
        let mut den_grad = 0.0;
        for c in 0..n_cells {
            let (vals, grads, wts) = &vol_tabs[c];
            let nloc = cr.cell_dofs[c].len();
            for (qi, &w) in wts.iter().enumerate() {
                let mut v = 0.0;
                let mut gx = 0.0;
                let mut gy = 0.0;
                for (li, &(g, _)) in cr.cell_dofs[c].iter().enumerate() {
                    let cg = coeffs[g];
                    v += cg * vals[qi * nloc + li];
                    gx += cg * grads[qi * nloc + li][0];
                    gy += cg * grads[qi * nloc + li][1];
                }
                num_star += w * v.abs().powf(q_star);
                den_grad += w * (gx * gx + gy * gy).sqrt().powf(p);
            }
        }
        let mut num_trace = 0.0;
        for (cell, vals, wts) in &bnd_tabs {
            let nloc = cr.cell_dofs[*cell].len();
            for (qi, &w) in wts.iter().enumerate() {
                let mut v = 0.0;
                for (li, &(g, _)) in cr.cell_dofs[*cell].iter().enumerate() {
                    v += coeffs[g] * vals[qi * nloc + li];
                }
                num_trace += w * v.abs().powf(q_sharp);
            }
        }
        let den = den_grad.powf(1.0 / p);
        if den < 1e-14 {
            n_skipped += 1;
            continue;
        }
        max_poincare = max_poincare.max(num_star.powf(1.0 / q_star) / den);
        max_trace = max_trace.max(num_trace.powf(1.0 / q_sharp) / den);
    }
    Ok(ConstantEstimate {
        max_poincare,
        max_trace,
        n_skipped,
    })
}
