//! Nonlinear solution drivers: linear Darcy initialization, the standard
//! fixed-point iteration, and the relaxed (Mann) variant, all sharing one
//! sparse LU factorization pipeline with a frozen symbolic analysis.
//!
//! The stopping criterion is || A s^n - r ||_2 <= tol, where A carries the
//! Forchheimer weight evaluated at the current iterate. Since the linear step
//! is solved directly, the residual reduces to the weight-lag defect in the
//! flux block; with the orthonormal flux basis its Euclidean norm coincides
//! with the L2(Omega) norm of that defect.

use std::time::Instant;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};

use crate::assembly::{
    assemble_nonlinear_mass, AssemblyCache, BlockDiag, SaddleSystem,
};
use crate::error::{Error, Result};
use crate::spaces::{CrSpace, FluxSpace};

/// Iterative scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Standard,
    Relaxed,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Relaxation parameter in (0, 1]; ignored by the standard scheme.
    pub omega: f64,
    pub tol: f64,
    pub n_max: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub rho: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Standard,
            omega: 1.0,
            tol: 1e-8,
            n_max: 2500,
            alpha: 3.0,
            beta: 10.0,
            mu: 1.0,
            rho: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scheme == Scheme::Relaxed && !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "relaxation parameter must lie in (0, 1], got {}",
                self.omega
            )));
        }
        if !(self.alpha > 2.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must exceed 2, got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 0.0 && self.mu > 0.0 && self.rho > 0.0) {
            return Err(Error::InvalidArgument(
                "beta must be nonnegative and mu, rho positive".into(),
            ));
        }
        if !(self.tol > 0.0) || self.n_max == 0 {
            return Err(Error::InvalidArgument(
                "tol must be positive and n_max >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    /// Flux coefficients (relaxed iterate for the relaxed scheme).
    pub u: Vec<f64>,
    /// Full potential coefficients including Dirichlet values.
    pub p: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub wall_time: f64,
}

/// Direct solver for the bordered saddle system. The sparsity pattern is
/// fixed once (including explicit zeros in the Forchheimer block), so the
/// symbolic LU analysis is reused across all iterations.
pub struct LinearSaddleSolver {
    mat: SparseColMat<usize, f64>,
    symbolic: SymbolicLu<usize>,
    /// Value slot of each cell-block entry: `[cell][i * bs + j]`.
    block_slots: Vec<Vec<usize>>,
    matrix_norm1: f64,
    dim: usize,
}

impl LinearSaddleSolver {
    pub fn new(system: &SaddleSystem) -> Result<Self> {
        let dim = system.total_dim();
        let (nu, np) = (system.n_u, system.n_p_free);
        let bs = system.m_block.block_size;
        let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
        for (c, block) in system.m_block.blocks.iter().enumerate() {
            let off = c * bs;
            for i in 0..bs {
                for j in 0..bs {
                    triplets.push(Triplet::new(off + i, off + j, block[i * bs + j]));
                }
            }
        }
        for &(row, col, v) in &system.b_entries {
            triplets.push(Triplet::new(nu + row, col, v));
            triplets.push(Triplet::new(col, nu + row, v));
        }
        if let Some(c_row) = &system.c_row {
            for (row, &cv) in c_row.iter().enumerate() {
                triplets.push(Triplet::new(nu + row, nu + np, cv));
                triplets.push(Triplet::new(nu + np, nu + row, cv));
            }
        }
        let mat = SparseColMat::try_new_from_triplets(dim, dim, &triplets)
            .map_err(|e| Error::Structure(format!("saddle matrix creation failed: {e:?}")))?;
        // Locate the value slot of every cell-block entry by binary search in
        // its (sorted) column.
        let col_ptr: Vec<usize> = mat.symbolic().col_ptr().to_vec();
        let row_idx: Vec<usize> = mat.symbolic().row_idx().to_vec();
        let slot_of = |row: usize, col: usize| -> usize {
            let lo = col_ptr[col];
            let hi = col_ptr[col + 1];
            lo + row_idx[lo..hi].binary_search(&row).expect("entry must exist")
        };
        let mut block_slots = Vec::with_capacity(system.m_block.blocks.len());
        for c in 0..system.m_block.blocks.len() {
            let off = c * bs;
            let mut slots = Vec::with_capacity(bs * bs);
            for i in 0..bs {
                for j in 0..bs {
                    slots.push(slot_of(off + i, off + j));
                }
            }
            block_slots.push(slots);
        }
        let mut col_norms = vec![0.0f64; dim];
        for col in 0..dim {
            col_norms[col] = mat.val()[col_ptr[col]..col_ptr[col + 1]]
                .iter()
                .map(|v| v.abs())
                .sum();
        }
        let matrix_norm1 = col_norms.iter().fold(0.0f64, |a, &b| a.max(b));
        let symbolic = SymbolicLu::try_new(mat.symbolic())
            .map_err(|e| Error::Singular(format!("symbolic analysis failed: {e:?}")))?;
        Ok(Self {
            mat,
            symbolic,
            block_slots,
            matrix_norm1,
            dim,
        })
    }

    /// Overwrites the flux block with M + N.
    pub fn set_weights(&mut self, m_block: &BlockDiag, n_block: &BlockDiag) {
        let vals = self.mat.val_mut();
        for (c, slots) in self.block_slots.iter().enumerate() {
            let mb = &m_block.blocks[c];
            let nb = &n_block.blocks[c];
            for (s, &slot) in slots.iter().enumerate() {
                vals[slot] = mb[s] + nb[s];
            }
        }
    }

    /// Factorizes with the frozen symbolic analysis and solves A s = rhs.
    pub fn factorize_and_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), self.mat.as_ref())
            .map_err(|e| Error::Singular(format!("LU factorization failed: {e:?}")))?;
        let b = Mat::from_fn(self.dim, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        let sol: Vec<f64> = (0..self.dim).map(|i| x[(i, 0)]).collect();
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(
                "direct solve produced non-finite entries".into(),
            ));
        }
        // backward-error guard
        let ax = self.mat.as_ref() * x.as_ref();
        let mut err = 0.0f64;
        let mut rnorm = 0.0f64;
        let mut xmax = 0.0f64;
        for i in 0..self.dim {
            err += (ax[(i, 0)] - rhs[i]).powi(2);
            rnorm += rhs[i] * rhs[i];
            xmax = xmax.max(sol[i].abs());
        }
        let err = err.sqrt();
        let scale = rnorm.sqrt() + self.matrix_norm1 * xmax;
        if err > 1e-9 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!(
                "direct solve residual {err:.3e} exceeds tolerance (scale {scale:.3e})"
            )));
        }
        Ok(sol)
    }
}

/// Solves the assembled (linear) saddle system with the currently installed
/// blocks; used directly for polynomial-exactness checks and by the drivers.
pub fn solve_linear_saddle(system: &SaddleSystem) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lin = LinearSaddleSolver::new(system)?;
    lin.set_weights(&system.m_block, &system.n_block);
    let s = lin.factorize_and_solve(&system.stacked_rhs())?;
    let (nu, np) = (system.n_u, system.n_p_free);
    Ok((s[..nu].to_vec(), s[nu..nu + np].to_vec()))
}

/// Linear Darcy initialization: the system with N = 0.
pub fn darcy_init(
    system: &SaddleSystem,
    lin: &mut LinearSaddleSolver,
) -> Result<Vec<f64>> {
    let zero = BlockDiag::zeros(system.m_block.blocks.len(), system.m_block.block_size);
    lin.set_weights(&system.m_block, &zero);
    lin.factorize_and_solve(&system.stacked_rhs())
}

/// Runs the configured fixed-point scheme until the stopping criterion or
/// the iteration cap is hit. `initial_flux`, when given, replaces the Darcy
/// flux before the first nonlinear step.
pub fn run_with_initial(
    cache: &AssemblyCache,
    flux: &FluxSpace,
    cr: &CrSpace,
    system: &mut SaddleSystem,
    config: &SolverConfig,
    initial_flux: Option<&[f64]>,
) -> Result<SolverResult> {
    config.validate()?;
    let start = Instant::now();
    let omega = match config.scheme {
        Scheme::Standard => 1.0,
        Scheme::Relaxed => config.omega,
    };
    let beta_over_rho = config.beta / config.rho;
    let (nu, np) = (system.n_u, system.n_p_free);
    let rhs = system.stacked_rhs();

    let mut lin = LinearSaddleSolver::new(system)?;
    let s0 = darcy_init(system, &mut lin)?;
    let mut u_tilde = s0[..nu].to_vec();
    if let Some(init) = initial_flux {
        u_tilde.copy_from_slice(init);
    }
    let mut p_free = s0[nu..nu + np].to_vec();
    let mut tail = s0[nu + np..].to_vec();

    // invariant: `system.n_block` always holds N at the current iterate
    system.n_block =
        assemble_nonlinear_mass(cache, flux, &u_tilde, config.alpha, beta_over_rho)?;

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = config.n_max;
    for n in 1..=config.n_max {
        lin.set_weights(&system.m_block, &system.n_block);
        let s = lin.factorize_and_solve(&rhs)?;
        for (ut, &si) in u_tilde.iter_mut().zip(&s[..nu]) {
            *ut = omega * si + (1.0 - omega) * *ut;
        }
        p_free.copy_from_slice(&s[nu..nu + np]);
        tail.copy_from_slice(&s[nu + np..]);

        system.n_block =
            assemble_nonlinear_mass(cache, flux, &u_tilde, config.alpha, beta_over_rho)?;
        let mut stacked = Vec::with_capacity(system.total_dim());
        stacked.extend_from_slice(&u_tilde);
        stacked.extend_from_slice(&p_free);
        stacked.extend_from_slice(&tail);
        let res = system.residual(&stacked);
        if !res.is_finite() {
            return Err(Error::Divergence {
                iteration: n,
                msg: format!("non-finite residual (alpha = {})", config.alpha),
            });
        }
        history.push(res);
        if res <= config.tol {
            converged = true;
            iterations = n;
            break;
        }
    }

    Ok(SolverResult {
        u: u_tilde,
        p: system.scatter_p(cr, &p_free),
        iterations,
        converged,
        residual_history: history,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub fn run(
    cache: &AssemblyCache,
    flux: &FluxSpace,
    cr: &CrSpace,
    system: &mut SaddleSystem,
    config: &SolverConfig,
) -> Result<SolverResult> {
    run_with_initial(cache, flux, cr, system, config, None)
}
