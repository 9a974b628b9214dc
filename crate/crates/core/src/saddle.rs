//! Block saddle-point systems
//!
//! ```text
//! [  A  −Bᵀ ] [x]   [f]
//! [ −B   0  ] [m] = [g]
//! ```
//!
//! with `A` invertible (`N×N`) and `B` of full row rank (`n×N`). The Schur
//! complement `C = B A⁻¹ Bᵀ` is `n×n` and nonsingular under those assumptions;
//! when `A` is symmetric positive definite so is `C`.
//!
//! Two solution routes are provided: [`SaddleSystem::solve`] factors `A` and
//! `C`, and [`SaddleSystem::block_inverse`] materializes the explicit inverse
//!
//! ```text
//! [ A⁻¹ − A⁻¹BᵀC⁻¹BA⁻¹   −A⁻¹BᵀC⁻¹ ]
//! [ −C⁻¹BA⁻¹              −C⁻¹     ]
//! ```

use std::cell::OnceCell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{check_len, DynamicsError, Result};
use crate::mechanics::singular_value_range;

/// Relative singular-value floor below which a block is declared singular.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// How the top-left block is factored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopLeftKind {
    /// Symmetric positive definite (mass matrix of a natural system).
    Spd,
    /// Any invertible matrix (velocity Hessian of a general Lagrangian).
    General,
}

enum Factor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factor {
    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factor::Cholesky(c) => c.solve(rhs),
            // invertibility is checked before the LU is stored
            Factor::Lu(lu) => lu.solve(rhs).expect("LU of a checked nonsingular matrix"),
        }
    }

    fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Cholesky(c) => c.solve(rhs),
            Factor::Lu(lu) => lu.solve(rhs).expect("LU of a checked nonsingular matrix"),
        }
    }
}

struct Factors {
    top_left: Factor,
    /// `A⁻¹ Bᵀ`
    a_inv_bt: DMatrix<f64>,
    schur: DMatrix<f64>,
    schur_factor: Factor,
}

/// Saddle system defined by its top-left and off-diagonal blocks.
///
/// Factorizations are computed on first use and cached inside the value, so a
/// `SaddleSystem` is cheap to query repeatedly but is not shared across threads.
pub struct SaddleSystem {
    top_left: DMatrix<f64>,
    off_diagonal: DMatrix<f64>,
    kind: TopLeftKind,
    top_name: &'static str,
    schur_name: &'static str,
    factors: OnceCell<Factors>,
}

/// The four blocks of the explicit inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInverse {
    pub top_left: DMatrix<f64>,
    pub top_right: DMatrix<f64>,
    pub bottom_left: DMatrix<f64>,
    pub bottom_right: DMatrix<f64>,
}

impl BlockInverse {
    pub fn assemble(&self) -> DMatrix<f64> {
        assemble_blocks(&self.top_left, &self.top_right, &self.bottom_left, &self.bottom_right)
    }

    /// Applies the inverse to `(rhs_top, rhs_bottom)`.
    pub fn apply(&self, rhs_top: &DVector<f64>, rhs_bottom: &DVector<f64>) -> SaddleSolution {
        SaddleSolution {
            primal: &self.top_left * rhs_top + &self.top_right * rhs_bottom,
            multiplier: &self.bottom_left * rhs_top + &self.bottom_right * rhs_bottom,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub primal: DVector<f64>,
    pub multiplier: DVector<f64>,
}

fn assemble_blocks(tl: &DMatrix<f64>, tr: &DMatrix<f64>, bl: &DMatrix<f64>, br: &DMatrix<f64>) -> DMatrix<f64> {
    let n = tl.nrows();
    let m = br.nrows();
    let mut out = DMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(tl);
    out.view_mut((0, n), (n, m)).copy_from(tr);
    out.view_mut((n, 0), (m, n)).copy_from(bl);
    out.view_mut((n, n), (m, m)).copy_from(br);
    out
}

fn check_nonsingular(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    let (smallest, largest) = singular_value_range(m);
    if !(largest > 0.0) || !(smallest >= DEGENERACY_TOLERANCE * largest) {
        return Err(DynamicsError::Degenerate { what, smallest, largest });
    }
    Ok(())
}

/// Nonsingularity of `m` after symmetric diagonal scaling `|diag|^{-1/2}`, so
/// that a badly scaled but regular matrix such as `diag(1, e^{200})` passes.
fn check_nonsingular_equilibrated(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    let d = m.diagonal();
    if d.iter().any(|x| !(x.abs() > 0.0) || !x.is_finite()) {
        return check_nonsingular(what, m);
    }
    let scale = d.map(|x| x.abs().sqrt().recip());
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * scale[i] * scale[j]);
    check_nonsingular(what, &scaled)
}

fn factor(kind: TopLeftKind, what: &'static str, m: &DMatrix<f64>) -> Result<Factor> {
    check_nonsingular_equilibrated(what, m)?;
    match kind {
        TopLeftKind::Spd => {
            let (smallest, largest) = singular_value_range(m);
            Cholesky::new(m.clone())
                .map(Factor::Cholesky)
                .ok_or(DynamicsError::Degenerate { what, smallest, largest })
        }
        TopLeftKind::General => Ok(Factor::Lu(m.clone().lu())),
    }
}

impl SaddleSystem {
    /// Saddle system of a natural system: `A` symmetric positive definite.
    pub fn spd(top_left: DMatrix<f64>, off_diagonal: DMatrix<f64>) -> Result<Self> {
        Self::with_kind(top_left, off_diagonal, TopLeftKind::Spd)
    }

    /// Saddle system with an invertible, not necessarily symmetric, top-left block.
    pub fn general(top_left: DMatrix<f64>, off_diagonal: DMatrix<f64>) -> Result<Self> {
        Self::with_kind(top_left, off_diagonal, TopLeftKind::General)
    }

    pub fn with_kind(top_left: DMatrix<f64>, off_diagonal: DMatrix<f64>, kind: TopLeftKind) -> Result<Self> {
        let n = top_left.nrows();
        check_len("saddle top-left columns", n, top_left.ncols())?;
        check_len("saddle off-diagonal columns", n, off_diagonal.ncols())?;
        if off_diagonal.nrows() >= n {
            return Err(DynamicsError::Usage(format!(
                "off-diagonal block must have fewer rows than columns, got {}×{}",
                off_diagonal.nrows(),
                n
            )));
        }
        let (top_name, schur_name) = match kind {
            TopLeftKind::Spd => ("mass matrix A", "Schur complement C = B A⁻¹ Bᵀ"),
            TopLeftKind::General => ("velocity Hessian S", "Schur complement R = D S⁻¹ Dᵀ"),
        };
        if kind == TopLeftKind::General {
            let defect = (&top_left - top_left.transpose()).amax();
            if defect > 1e-10 * (1.0 + top_left.amax()) {
                log::warn!("non-symmetric top-left block (defect {defect:e})");
            }
        }
        Ok(Self {
            top_left,
            off_diagonal,
            kind,
            top_name,
            schur_name,
            factors: OnceCell::new(),
        })
    }

    pub fn top_left(&self) -> &DMatrix<f64> {
        &self.top_left
    }

    pub fn off_diagonal(&self) -> &DMatrix<f64> {
        &self.off_diagonal
    }

    pub fn primal_dim(&self) -> usize {
        self.top_left.nrows()
    }

    pub fn multiplier_dim(&self) -> usize {
        self.off_diagonal.nrows()
    }

    fn factors(&self) -> Result<&Factors> {
        if let Some(f) = self.factors.get() {
            return Ok(f);
        }
        let top = factor(self.kind, self.top_name, &self.top_left)?;
        let a_inv_bt = top.solve(&self.off_diagonal.transpose());
        let schur = &self.off_diagonal * &a_inv_bt;
        let schur_factor = match self.kind {
            // C inherits symmetric positive definiteness; a failed Cholesky means rank loss
            TopLeftKind::Spd => {
                let sym = (&schur + schur.transpose()) * 0.5;
                check_nonsingular(self.schur_name, &sym)?;
                factor(TopLeftKind::Spd, self.schur_name, &sym)?
            }
            TopLeftKind::General => {
                check_nonsingular(self.schur_name, &schur)?;
                factor(TopLeftKind::General, self.schur_name, &schur)?
            }
        };
        Ok(self.factors.get_or_init(|| Factors {
            top_left: top,
            a_inv_bt,
            schur,
            schur_factor,
        }))
    }

    /// The Schur complement `B A⁻¹ Bᵀ`.
    pub fn schur(&self) -> Result<&DMatrix<f64>> {
        self.factors().map(|f| &f.schur)
    }

    /// The assembled forward matrix `[[A, −Bᵀ], [−B, 0]]`.
    pub fn forward_matrix(&self) -> DMatrix<f64> {
        let n = self.multiplier_dim();
        assemble_blocks(
            &self.top_left,
            &(-self.off_diagonal.transpose()),
            &(-&self.off_diagonal),
            &DMatrix::zeros(n, n),
        )
    }

    /// Explicit block inverse.
    pub fn block_inverse(&self) -> Result<BlockInverse> {
        let f = self.factors()?;
        let n = self.primal_dim();
        let a_inv = f.top_left.solve(&DMatrix::identity(n, n));
        let c_inv = f.schur_factor.solve(&DMatrix::identity(self.multiplier_dim(), self.multiplier_dim()));
        // A⁻¹Bᵀ C⁻¹ and C⁻¹ B A⁻¹
        let top_right = -(&f.a_inv_bt * &c_inv);
        let b_a_inv = &self.off_diagonal * &a_inv;
        let bottom_left = -(&c_inv * &b_a_inv);
        let top_left = &a_inv + &top_right * &b_a_inv;
        Ok(BlockInverse {
            top_left,
            top_right,
            bottom_left,
            bottom_right: -c_inv,
        })
    }

    /// Solves `A x − Bᵀ m = rhs_top`, `−B x = rhs_bottom` by factoring `A` and the Schur complement.
    pub fn solve(&self, rhs_top: &DVector<f64>, rhs_bottom: &DVector<f64>) -> Result<SaddleSolution> {
        check_len("saddle rhs_top", self.primal_dim(), rhs_top.len())?;
        check_len("saddle rhs_bottom", self.multiplier_dim(), rhs_bottom.len())?;
        let f = self.factors()?;
        let a_inv_f = f.top_left.solve_vec(rhs_top);
        // m = −C⁻¹ (g + B A⁻¹ f)
        let multiplier = -f.schur_factor.solve_vec(&(rhs_bottom + &self.off_diagonal * &a_inv_f));
        let primal = a_inv_f + &f.a_inv_bt * &multiplier;
        Ok(SaddleSolution { primal, multiplier })
    }

    /// Same as [`solve`](Self::solve) through the explicit block inverse.
    pub fn solve_via_block_inverse(&self, rhs_top: &DVector<f64>, rhs_bottom: &DVector<f64>) -> Result<SaddleSolution> {
        check_len("saddle rhs_top", self.primal_dim(), rhs_top.len())?;
        check_len("saddle rhs_bottom", self.multiplier_dim(), rhs_bottom.len())?;
        Ok(self.block_inverse()?.apply(rhs_top, rhs_bottom))
    }
}
