//! Operator algebra on truncated (possibly composite) Hilbert spaces.
//!
//! Everything is dense: the largest space used by the bundled scenarios is a
//! qubit times a 40-level mode, i.e. 80 dimensions.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Ket = DVector<C64>;

/// Largest population tolerated in the top Fock level of a constructed state.
pub const LEAKAGE_LIMIT: f64 = 1e-8;

/// One tensor factor of the state space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    Qubit,
    /// Bosonic mode truncated to `cutoff` Fock levels.
    Mode {
        cutoff: usize,
    },
}

impl Subsystem {
    pub fn dim(self) -> usize {
        match self {
            Subsystem::Qubit => 2,
            Subsystem::Mode { cutoff } => cutoff,
        }
    }
}

/// Ordered list of tensor factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HilbertSpec {
    subsystems: Vec<Subsystem>,
}

impl HilbertSpec {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self> {
        if subsystems.is_empty() || subsystems.len() > 2 {
            return Err(Error::param(
                "subsystems",
                format!("expected 1 or 2 factors, got {}", subsystems.len()),
            ));
        }
        for s in &subsystems {
            if s.dim() < 2 {
                return Err(Error::param(
                    "subsystems",
                    format!("every dimension must be >= 2, got {}", s.dim()),
                ));
            }
        }
        Ok(Self { subsystems })
    }

    pub fn qubit_qubit() -> Self {
        Self {
            subsystems: vec![Subsystem::Qubit, Subsystem::Qubit],
        }
    }

    pub fn qubit_mode(cutoff: usize) -> Result<Self> {
        Self::new(vec![Subsystem::Qubit, Subsystem::Mode { cutoff }])
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.dim()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.subsystems.iter().map(|s| s.dim()).product()
    }

    /// Embeds a single-factor operator at position `target`, identity elsewhere.
    pub fn embed(&self, op: &Operator, target: usize) -> Result<Operator> {
        let sub = self
            .subsystems
            .get(target)
            .ok_or_else(|| Error::param("target", format!("no subsystem {target}")))?;
        if op.dim() != sub.dim() {
            return Err(Error::DimensionMismatch {
                expected: sub.dim(),
                found: op.dim(),
            });
        }
        let mut out: Option<Operator> = None;
        for (i, s) in self.subsystems.iter().enumerate() {
            let factor = if i == target {
                op.clone()
            } else {
                Operator::identity(s.dim())
            };
            out = Some(match out {
                None => factor,
                Some(acc) => tensor(&acc, &factor),
            });
        }
        Ok(out.expect("at least one subsystem"))
    }

    /// Checks that every mode factor of `rho` keeps its top Fock population
    /// below [`LEAKAGE_LIMIT`].
    pub fn check_leakage(&self, rho: &Operator) -> Result<()> {
        if rho.dim() != self.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim(),
                found: rho.dim(),
            });
        }
        for (i, s) in self.subsystems.iter().enumerate() {
            if let Subsystem::Mode { cutoff } = *s {
                let reduced = self.partial_trace_keep(rho, i)?;
                let population = reduced.get(cutoff - 1, cutoff - 1).re;
                if population > LEAKAGE_LIMIT {
                    return Err(Error::Leakage {
                        population,
                        limit: LEAKAGE_LIMIT,
                        cutoff,
                    });
                }
            }
        }
        Ok(())
    }

    /// Reduced operator on factor `keep`, tracing out the other one.
    pub fn partial_trace_keep(&self, rho: &Operator, keep: usize) -> Result<Operator> {
        if rho.dim() != self.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.total_dim(),
                found: rho.dim(),
            });
        }
        match self.subsystems.len() {
            1 if keep == 0 => Ok(rho.clone()),
            2 if keep < 2 => {
                let (d1, d2) = (self.subsystems[0].dim(), self.subsystems[1].dim());
                let m = rho.matrix();
                let out = if keep == 0 {
                    DMatrix::from_fn(d1, d1, |a, b| {
                        (0..d2).map(|i| m[(a * d2 + i, b * d2 + i)]).sum()
                    })
                } else {
                    DMatrix::from_fn(d2, d2, |i, j| {
                        (0..d1).map(|a| m[(a * d2 + i, a * d2 + j)]).sum()
                    })
                };
                Ok(Operator(out))
            }
            _ => Err(Error::param("keep", format!("no subsystem {keep}"))),
        }
    }
}

/// Dense complex square matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator({}x{})", self.dim(), self.dim())
    }
}

impl Operator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if let Some((idx, _)) = matrix
            .iter()
            .enumerate()
            .find(|(_, z)| !(z.re.is_finite() && z.im.is_finite()))
        {
            // column-major storage
            let n = matrix.nrows();
            return Err(Error::NonFinite {
                row: idx % n,
                col: idx / n,
            });
        }
        Ok(Self(matrix))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        Self::from_fn(n, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    /// Projector |ψ⟩⟨ψ|.
    pub fn projector(ket: &Ket) -> Self {
        Self(ket * ket.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self(&self.0 * factor)
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn apply(&self, ket: &Ket) -> Ket {
        &self.0 * ket
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// ‖A − A†‖ in the max-entry norm.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// (A + A†)/2.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .hermitian_part()
            .0
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Matrix exponential (Padé scaling and squaring).
    pub fn expm(&self) -> Self {
        Self(self.0.exp())
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

pub fn pauli(axis: Axis) -> Operator {
    let (o, l, i) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0));
    let m = match axis {
        Axis::X => [[o, l], [l, o]],
        Axis::Y => [[o, -i], [i, o]],
        Axis::Z => [[l, o], [o, -l]],
    };
    Operator::from_fn(2, |r, c| m[r][c])
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 2 {
        return Err(Error::param(
            "cutoff",
            format!("need at least 2 Fock levels, got {cutoff}"),
        ));
    }
    Ok(())
}

/// Bosonic annihilation operator on `cutoff` Fock levels.
pub fn annihilation(cutoff: usize) -> Result<Operator> {
    check_cutoff(cutoff)?;
    Ok(Operator::from_fn(cutoff, |r, c| {
        if c == r + 1 {
            C64::new((c as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

pub fn creation(cutoff: usize) -> Result<Operator> {
    Ok(annihilation(cutoff)?.adjoint())
}

/// Photon number operator a†a.
pub fn number(cutoff: usize) -> Result<Operator> {
    check_cutoff(cutoff)?;
    let diag: Vec<C64> = (0..cutoff).map(|n| C64::new(n as f64, 0.0)).collect();
    Ok(Operator::diagonal(&diag))
}

/// Photon parity e^{iπ a†a} = diag((−1)ⁿ).
pub fn parity(cutoff: usize) -> Result<Operator> {
    check_cutoff(cutoff)?;
    let diag: Vec<C64> = (0..cutoff)
        .map(|n| C64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0))
        .collect();
    Ok(Operator::diagonal(&diag))
}

pub fn fock(n: usize, cutoff: usize) -> Result<Ket> {
    check_cutoff(cutoff)?;
    if n >= cutoff {
        return Err(Error::param(
            "n",
            format!("Fock level {n} outside cutoff {cutoff}"),
        ));
    }
    let mut ket = Ket::zeros(cutoff);
    ket[n] = C64::new(1.0, 0.0);
    Ok(ket)
}

fn check_vacuum_leakage(op: &Operator) -> Result<()> {
    let n = op.dim();
    let population = op.get(n - 1, 0).norm_sqr();
    if population > LEAKAGE_LIMIT {
        return Err(Error::Leakage {
            population,
            limit: LEAKAGE_LIMIT,
            cutoff: n,
        });
    }
    Ok(())
}

/// Displacement D(β) = exp(β a† − β* a) on the truncated space.
pub fn displacement(beta: C64, cutoff: usize) -> Result<Operator> {
    let a = annihilation(cutoff)?;
    let generator = &a.adjoint().scale(beta) - &a.scale(beta.conj());
    let d = generator.expm();
    check_vacuum_leakage(&d)?;
    Ok(d)
}

/// Squeezing S(ξ) = exp(ξ a†²/2 − ξ* a²/2) on the truncated space.
pub fn squeeze(xi: C64, cutoff: usize) -> Result<Operator> {
    let a = annihilation(cutoff)?;
    let a2 = &a * &a;
    let generator = &a2.adjoint().scale(xi * 0.5) - &a2.scale(xi.conj() * 0.5);
    let s = generator.expm();
    check_vacuum_leakage(&s)?;
    Ok(s)
}

/// Coherent state D(α)|0⟩.
pub fn coherent_state(alpha: C64, cutoff: usize) -> Result<Ket> {
    Ok(displacement(alpha, cutoff)?.apply(&fock(0, cutoff)?))
}

/// Squeezed coherent state D(α)S(ξ)|0⟩.
pub fn squeezed_coherent_state(alpha: C64, xi: C64, cutoff: usize) -> Result<Ket> {
    let vac = fock(0, cutoff)?;
    let ket = displacement(alpha, cutoff)?.apply(&squeeze(xi, cutoff)?.apply(&vac));
    let population = ket[cutoff - 1].norm_sqr();
    if population > LEAKAGE_LIMIT {
        return Err(Error::Leakage {
            population,
            limit: LEAKAGE_LIMIT,
            cutoff,
        });
    }
    Ok(ket)
}

/// Kronecker product.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator(a.0.kronecker(&b.0))
}

pub fn tensor_ket(a: &Ket, b: &Ket) -> Ket {
    a.kronecker(b)
}

/// Validation tolerances for density matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityTolerances {
    pub herm: f64,
    pub trace: f64,
    pub psd: f64,
}

impl Default for DensityTolerances {
    fn default() -> Self {
        Self {
            herm: 1e-8,
            trace: 1e-8,
            psd: 1e-6,
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    op: Operator,
    tols: DensityTolerances,
}

impl DensityMatrix {
    pub fn from_ket(ket: &Ket) -> Result<Self> {
        let norm = ket.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::param("ket", "zero or non-finite norm"));
        }
        let unit = ket / C64::new(norm, 0.0);
        validate_density(Operator::projector(&unit), DensityTolerances::default())
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn into_op(self) -> Operator {
        self.op
    }

    pub fn tolerances(&self) -> DensityTolerances {
        self.tols
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Tr ρ².
    pub fn purity(&self) -> f64 {
        (&self.op * &self.op).trace().re
    }
}

/// Checks the density-matrix invariants, reporting every violation.
pub fn validate_density(op: Operator, tols: DensityTolerances) -> Result<DensityMatrix> {
    let mut problems = Vec::new();
    let herm = op.hermiticity_defect();
    if herm > tols.herm {
        problems.push(format!("hermiticity defect {herm:.3e} > {:.1e}", tols.herm));
    }
    let trace = op.trace();
    let trace_dev = (trace - C64::new(1.0, 0.0)).norm();
    if trace_dev > tols.trace {
        problems.push(format!(
            "trace {trace} deviates by {trace_dev:.3e} > {:.1e}",
            tols.trace
        ));
    }
    let min_eig = op.hermitian_eigenvalues().first().copied().unwrap_or(0.0);
    if min_eig < -tols.psd {
        problems.push(format!(
            "minimum eigenvalue {min_eig:.3e} < -{:.1e}",
            tols.psd
        ));
    }
    if problems.is_empty() {
        Ok(DensityMatrix { op, tols })
    } else {
        Err(Error::InvalidDensity(problems))
    }
}
