//! Generalized Wigner function `W(Ω) = Tr[ρ Δ(Ω)]` on hybrid phase spaces.
//!
//! The kernel is a tensor product of per-subsystem kernels:
//!
//! * qubit: `Δ_q(θ, φ) = ½ U (I − √3 σ₃) U†`, `U = e^{iσ₃φ} e^{iσ₂θ}`;
//!   the third Euler factor `e^{iσ₃Φ}` commutes with the parity and drops out,
//! * mode: `Δ_p(β) = D(β) Π D(β)† = D(2β) Π` with `Π = e^{iπ a†a}`.
//!
//! The measure is `dΩ_q = |sin 2θ| dθ dφ / 2π` per qubit (the Bloch polar
//! angle of `U σ₃ U†` is 2θ, so this is the uniform sphere measure with total
//! mass 2) and `dΩ_p = (2/π) d²β` per mode. With these weights both kernels
//! resolve the identity, which fixes the normalization `∫ W dΩ = 1`.
//!
//! Kernels are cached per factor only, as real coordinates of Hermitian
//! matrices. A composite kernel is never materialized during evaluation; the
//! trace reduces to two real matrix products.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{tensor, HilbertSpec, Operator, Subsystem, C64};

/// Largest imaginary part of `Tr[ρΔ]` tolerated for a Hermitian state.
pub const IMAG_RESIDUE_LIMIT: f64 = 1e-8;

/// Default memory budget for cached kernels.
pub const DEFAULT_CACHE_BUDGET: usize = 2 << 30;

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 {
                1.0
            } else if n == 1 {
                x
            } else {
                p1
            };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Resolution of the phase-space grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_beta: usize,
    pub radius: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            n_theta: 32,
            n_phi: 16,
            n_beta: 81,
            radius: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitNode {
    pub theta: f64,
    pub phi: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeNode {
    pub beta: C64,
    pub weight: f64,
}

/// Nodes of one phase-space factor.
#[derive(Clone, Debug, PartialEq)]
pub enum FactorGrid {
    Qubit(Vec<QubitNode>),
    Mode {
        nodes: Vec<ModeNode>,
        n_beta: usize,
        radius: f64,
    },
}

impl FactorGrid {
    /// θ ∈ [0, π] split at π/2; Gauss–Legendre in cos 2θ on each half,
    /// trapezoid in φ ∈ [0, 2π).
    pub fn qubit(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || !n_theta.is_multiple_of(2) {
            return Err(Error::param(
                "n_theta",
                format!("must be even and >= 2, got {n_theta}"),
            ));
        }
        if n_phi < 1 {
            return Err(Error::param("n_phi", "must be positive"));
        }
        let (x, w) = gauss_legendre(n_theta / 2);
        let mut thetas = Vec::with_capacity(n_theta);
        for (xi, wi) in x.iter().zip(&w) {
            thetas.push((0.5 * xi.acos(), *wi));
        }
        for (xi, wi) in x.iter().zip(&w).rev() {
            thetas.push((PI - 0.5 * xi.acos(), *wi));
        }
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        for (theta, wt) in thetas {
            for j in 0..n_phi {
                let phi = 2.0 * PI * j as f64 / n_phi as f64;
                nodes.push(QubitNode {
                    theta,
                    phi,
                    weight: wt / (2.0 * n_phi as f64),
                });
            }
        }
        Ok(FactorGrid::Qubit(nodes))
    }

    /// Uniform Cartesian grid over Re β, Im β ∈ [−R, R].
    pub fn mode(n_beta: usize, radius: f64) -> Result<Self> {
        if n_beta < 2 {
            return Err(Error::param("n_beta", "need at least 2 points per axis"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param(
                "radius",
                format!("must be positive, got {radius}"),
            ));
        }
        let h = 2.0 * radius / (n_beta - 1) as f64;
        let weight = 2.0 / PI * h * h;
        let mut nodes = Vec::with_capacity(n_beta * n_beta);
        for i in 0..n_beta {
            for j in 0..n_beta {
                let beta = C64::new(-radius + i as f64 * h, -radius + j as f64 * h);
                nodes.push(ModeNode { beta, weight });
            }
        }
        Ok(FactorGrid::Mode {
            nodes,
            n_beta,
            radius,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            FactorGrid::Qubit(n) => n.len(),
            FactorGrid::Mode { nodes, .. } => nodes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self, i: usize) -> f64 {
        match self {
            FactorGrid::Qubit(n) => n[i].weight,
            FactorGrid::Mode { nodes, .. } => nodes[i].weight,
        }
    }

    fn matches(&self, sub: Subsystem) -> bool {
        matches!(
            (self, sub),
            (FactorGrid::Qubit(_), Subsystem::Qubit)
                | (FactorGrid::Mode { .. }, Subsystem::Mode { .. })
        )
    }
}

/// Composite grid; node `k` enumerates factor nodes in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceGrid {
    factors: Vec<FactorGrid>,
    weights: Vec<f64>,
}

impl PhaseSpaceGrid {
    pub fn new(factors: Vec<FactorGrid>) -> Result<Self> {
        if factors.is_empty() || factors.len() > 2 {
            return Err(Error::ShapeMismatch(format!(
                "expected 1 or 2 factors, got {}",
                factors.len()
            )));
        }
        let weights = match factors.as_slice() {
            [f] => (0..f.len()).map(|i| f.weight(i)).collect(),
            [f, g] => (0..f.len())
                .flat_map(|i| (0..g.len()).map(move |j| (i, j)))
                .map(|(i, j)| f.weight(i) * g.weight(j))
                .collect(),
            _ => unreachable!(),
        };
        Ok(Self { factors, weights })
    }

    /// One factor per subsystem of `spec`, at the given resolution.
    pub fn for_spec(spec: &HilbertSpec, params: &GridParams) -> Result<Self> {
        let factors = spec
            .subsystems()
            .iter()
            .map(|s| match s {
                Subsystem::Qubit => FactorGrid::qubit(params.n_theta, params.n_phi),
                Subsystem::Mode { .. } => FactorGrid::mode(params.n_beta, params.radius),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }

    pub fn factors(&self) -> &[FactorGrid] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Factor indices of composite node `k`.
    pub fn split(&self, k: usize) -> (usize, Option<usize>) {
        match self.factors.as_slice() {
            [_] => (k, None),
            [_, g] => (k / g.len(), Some(k % g.len())),
            _ => unreachable!(),
        }
    }
}

/// Qubit kernel `½ U (I − √3 σ₃) U†`.
pub fn qubit_kernel(theta: f64, phi: f64) -> Operator {
    let (s, c) = theta.sin_cos();
    let ep = C64::from_polar(1.0, phi);
    let z = C64::new(0.0, 0.0);
    // e^{iσ₃φ} e^{iσ₂θ}
    let u = [[ep * c, ep * s], [-ep.conj() * s, ep.conj() * c]];
    let r3 = 3f64.sqrt();
    let parity = [
        C64::new(0.5 * (1.0 - r3), 0.0),
        C64::new(0.5 * (1.0 + r3), 0.0),
    ];
    Operator::from_fn(2, |i, j| {
        let mut acc = z;
        for (k, p) in parity.iter().enumerate() {
            acc += u[i][k] * p * u[j][k].conj();
        }
        acc
    })
}

/// Fock matrix elements ⟨m|D(γ)|n⟩ of the untruncated displacement operator,
/// restricted to `m, n < cutoff`.
pub fn displacement_elements(gamma: C64, cutoff: usize) -> DMatrix<C64> {
    let x = gamma.norm_sqr();
    let r = gamma.norm();
    if r == 0.0 {
        return DMatrix::identity(cutoff, cutoff);
    }
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..cutoff).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let lower_phase = gamma / r;
    let upper_phase = -gamma.conj() / r;
    let mut out = DMatrix::zeros(cutoff, cutoff);
    for k in 0..cutoff {
        let len = cutoff - k;
        // generalized Laguerre L_n^{(k)}(x), n = 0..len
        let mut lag = Vec::with_capacity(len);
        lag.push(1.0);
        if len > 1 {
            lag.push(1.0 + k as f64 - x);
        }
        for n in 1..len.saturating_sub(1) {
            let next = ((2 * n + 1 + k) as f64 - x) * lag[n] - (n + k) as f64 * lag[n - 1];
            lag.push(next / (n + 1) as f64);
        }
        let (lp, up) = (lower_phase.powu(k as u32), upper_phase.powu(k as u32));
        for (n, l) in lag.iter().enumerate() {
            let m = n + k;
            let mag = (0.5 * (ln_fact[n] - ln_fact[m]) + k as f64 * r.ln() - 0.5 * x).exp() * l;
            out[(m, n)] = lp * mag;
            if k > 0 {
                out[(n, m)] = up * mag;
            }
        }
    }
    out
}

/// Displaced parity `D(β) Π D(β)†` on the first `cutoff` Fock levels.
///
/// Entries are those of the untruncated operator, so the kernel stays exact
/// on the retained block even where `D(β)|0⟩` would leak past the cutoff.
pub fn photonic_kernel(beta: C64, cutoff: usize) -> Result<Operator> {
    if cutoff < 2 {
        return Err(Error::param(
            "cutoff",
            format!("need at least 2 Fock levels, got {cutoff}"),
        ));
    }
    let mut m = displacement_elements(beta * 2.0, cutoff);
    for n in (1..cutoff).step_by(2) {
        m.column_mut(n).neg_mut();
    }
    Operator::new(m)
}

/// Real coordinates of the Hermitian part `H = (m + m†)/2`: the diagonal,
/// then `√2 Re H_ij, √2 Im H_ij` for `i < j` in row-major order. For
/// Hermitian `A`, `B` this is an isometry: `pack(A) · pack(B) = Tr[AB]`.
fn pack_into(m: &DMatrix<C64>, out: &mut [f64]) {
    let d = m.nrows();
    for i in 0..d {
        out[i] = m[(i, i)].re;
    }
    let mut k = d;
    for i in 0..d {
        for j in i + 1..d {
            let h = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[k] = SQRT_2 * h.re;
            out[k + 1] = SQRT_2 * h.im;
            k += 2;
        }
    }
}

fn unpack(v: &[f64], d: usize) -> Operator {
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in i + 1..d {
            let h = C64::new(v[k], v[k + 1]) / SQRT_2;
            m[(i, j)] = h;
            m[(j, i)] = h.conj();
            k += 2;
        }
    }
    Operator::new(m).expect("finite by construction")
}

/// Per-factor kernels for every node of a grid, one packed row per node.
#[derive(Debug)]
pub struct KernelCache {
    spec: HilbertSpec,
    grid: Arc<PhaseSpaceGrid>,
    kernels: Vec<DMatrix<f64>>,
}

fn packed_rows(ops: Vec<Operator>, d: usize) -> DMatrix<f64> {
    let mut rows = vec![0.0; ops.len() * d * d];
    for (row, op) in rows.chunks_mut(d * d).zip(&ops) {
        pack_into(op.matrix(), row);
    }
    DMatrix::from_row_slice(ops.len(), d * d, &rows)
}

/// Builds the kernel cache with the default memory budget.
pub fn build_cache(spec: &HilbertSpec, grid: Arc<PhaseSpaceGrid>) -> Result<KernelCache> {
    build_cache_with_budget(spec, grid, DEFAULT_CACHE_BUDGET)
}

pub fn build_cache_with_budget(
    spec: &HilbertSpec,
    grid: Arc<PhaseSpaceGrid>,
    budget: usize,
) -> Result<KernelCache> {
    let subs = spec.subsystems();
    if subs.len() != grid.factors().len()
        || !subs.iter().zip(grid.factors()).all(|(s, f)| f.matches(*s))
    {
        return Err(Error::ShapeMismatch(format!(
            "{} grid factors for subsystems {:?}",
            grid.factors().len(),
            subs
        )));
    }
    let required: usize = subs
        .iter()
        .zip(grid.factors())
        .map(|(s, f)| f.len() * s.dim() * s.dim() * std::mem::size_of::<f64>())
        .sum();
    if required > budget {
        return Err(Error::MemoryBudget { required, budget });
    }
    let kernels = subs
        .iter()
        .zip(grid.factors())
        .map(|(s, f)| -> Result<DMatrix<f64>> {
            let ops = match (s, f) {
                (Subsystem::Qubit, FactorGrid::Qubit(nodes)) => {
                    nodes.iter().map(|n| qubit_kernel(n.theta, n.phi)).collect()
                }
                (Subsystem::Mode { cutoff }, FactorGrid::Mode { nodes, .. }) => nodes
                    .par_iter()
                    .map(|n| photonic_kernel(n.beta, *cutoff))
                    .collect::<Result<Vec<_>>>()?,
                _ => unreachable!(),
            };
            Ok(packed_rows(ops, s.dim()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelCache {
        spec: spec.clone(),
        grid,
        kernels,
    })
}

impl KernelCache {
    pub fn spec(&self) -> &HilbertSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<PhaseSpaceGrid> {
        &self.grid
    }

    pub fn node_count(&self) -> usize {
        self.grid.len()
    }

    fn factor_kernel(&self, factor: usize, i: usize) -> Operator {
        let d = self.spec.subsystems()[factor].dim();
        let row: Vec<f64> = self.kernels[factor].row(i).iter().copied().collect();
        unpack(&row, d)
    }

    /// Full kernel Δ(Ω_k) on the composite space.
    pub fn composite_kernel(&self, k: usize) -> Operator {
        match self.grid.split(k) {
            (i, None) => self.factor_kernel(0, i),
            (i, Some(j)) => tensor(&self.factor_kernel(0, i), &self.factor_kernel(1, j)),
        }
    }

    /// Σ_k w_k Δ(Ω_k), assembled factor by factor.
    pub fn completeness(&self) -> Operator {
        let per_factor: Vec<Operator> = (0..self.grid.factors().len())
            .map(|f| {
                let grid = &self.grid.factors()[f];
                let d = self.spec.subsystems()[f].dim();
                let w = DVector::from_iterator(grid.len(), (0..grid.len()).map(|i| grid.weight(i)));
                let summed = self.kernels[f].tr_mul(&w);
                unpack(summed.as_slice(), d)
            })
            .collect();
        per_factor
            .iter()
            .skip(1)
            .fold(per_factor[0].clone(), |acc, op| tensor(&acc, op))
    }

    /// `Tr[H Δ(Ω_k)]` for Hermitian `H`, in grid order.
    fn hermitian_field(&self, h: &DMatrix<C64>) -> Vec<f64> {
        match self.kernels.as_slice() {
            [k] => {
                let mut v = vec![0.0; h.len()];
                pack_into(h, &mut v);
                (k * DVector::from_vec(v)).data.into()
            }
            [k1, k2] => {
                let d1 = self.spec.subsystems()[0].dim();
                let d2 = self.spec.subsystems()[1].dim();
                // ρ = Σ_μ E_μ ⊗ R_μ over the orthonormal Hermitian basis
                // E_μ dual to the packing; row μ of `m` holds pack(R_μ).
                let block = |a: usize, b: usize| h.view((a * d2, b * d2), (d2, d2)).into_owned();
                let mut comps: Vec<DMatrix<C64>> = (0..d1).map(|a| block(a, a)).collect();
                let s = C64::new(FRAC_1_SQRT_2, 0.0);
                let is = C64::new(0.0, FRAC_1_SQRT_2);
                for a in 0..d1 {
                    for b in a + 1..d1 {
                        let (ab, ba) = (block(a, b), block(b, a));
                        comps.push((&ba + &ab) * s);
                        comps.push((&ba - &ab) * is);
                    }
                }
                let mut rows = vec![0.0; d1 * d1 * d2 * d2];
                for (row, r) in rows.chunks_mut(d2 * d2).zip(&comps) {
                    pack_into(r, row);
                }
                let m = DMatrix::from_row_slice(d1 * d1, d2 * d2, &rows);
                // u[j, μ] = Tr[R_μ Δ₂(j)];  W[i, j] = Σ_μ pack(Δ₁(i))_μ u[j, μ]
                let u = k2 * m.transpose();
                let wt = u * k1.transpose();
                wt.data.into()
            }
            _ => unreachable!(),
        }
    }
}

/// Samples of a Wigner function on a grid.
#[derive(Clone, Debug)]
pub struct WignerField {
    pub grid: Arc<PhaseSpaceGrid>,
    pub values: Vec<f64>,
    /// Largest discarded imaginary part.
    pub max_imag: f64,
}

impl WignerField {
    /// Σ_k w_k W_k.
    pub fn integral(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Σ_k w_k |W_k|.
    pub fn abs_integral(&self) -> f64 {
        self.grid
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.abs())
            .sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV dump; columns depend on the grid layout.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let factors = self.grid.factors();
        let header = match factors {
            [FactorGrid::Mode { .. }] => "re_beta,im_beta,W",
            [FactorGrid::Qubit(_)] => "theta,phi,W",
            [FactorGrid::Qubit(_), FactorGrid::Qubit(_)] => "theta1,phi1,theta2,phi2,W",
            [FactorGrid::Qubit(_), FactorGrid::Mode { .. }] => "theta,phi,re_beta,im_beta,W",
            _ => return Err(Error::ShapeMismatch("unsupported grid layout".into())),
        };
        writeln!(out, "{header}")?;
        let coords = |f: &FactorGrid, i: usize| -> [f64; 2] {
            match f {
                FactorGrid::Qubit(n) => [n[i].theta, n[i].phi],
                FactorGrid::Mode { nodes, .. } => [nodes[i].beta.re, nodes[i].beta.im],
            }
        };
        for (k, v) in self.values.iter().enumerate() {
            let (i, j) = self.grid.split(k);
            let [a, b] = coords(&factors[0], i);
            write!(out, "{a:.16e},{b:.16e}")?;
            if let Some(j) = j {
                let [c, d] = coords(&factors[1], j);
                write!(out, ",{c:.16e},{d:.16e}")?;
            }
            writeln!(out, ",{v:.16e}")?;
        }
        Ok(())
    }
}

/// `W_k = Re Tr[ρ Δ(Ω_k)]` at every node of the cache's grid.
///
/// The imaginary part is evaluated only when `ρ` is not exactly Hermitian.
pub fn wigner_evaluate(rho: &Operator, cache: &KernelCache) -> Result<WignerField> {
    let total = cache.spec.total_dim();
    if rho.dim() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            found: rho.dim(),
        });
    }
    let m = rho.matrix();
    let values = cache.hermitian_field(m);
    let max_imag = if rho.hermiticity_defect() == 0.0 {
        0.0
    } else {
        // Im Tr[ρΔ] = Tr[KΔ] with K = (ρ − ρ†)/2i
        let k = (m - m.adjoint()) * C64::new(0.0, -0.5);
        cache
            .hermitian_field(&k)
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    };
    if max_imag > IMAG_RESIDUE_LIMIT {
        return Err(Error::ImaginaryResidue { residue: max_imag });
    }
    Ok(WignerField {
        grid: cache.grid.clone(),
        values,
        max_imag,
    })
}

/// Marginal over the qubit factor: `W_p(β) = Σ_n w_n W(n, β)`.
pub fn reduce_photonic(field: &WignerField) -> Result<WignerField> {
    let (qubit, mode) = match field.grid.factors() {
        [q @ FactorGrid::Qubit(_), m @ FactorGrid::Mode { .. }] => (q, m),
        other => {
            return Err(Error::ShapeMismatch(format!(
                "photonic reduction needs one qubit and one mode factor, got {} factors",
                other.len()
            )))
        }
    };
    let n_mode = mode.len();
    let values: Vec<f64> = (0..n_mode)
        .map(|j| {
            (0..qubit.len())
                .map(|i| qubit.weight(i) * field.values[i * n_mode + j])
                .sum()
        })
        .collect();
    let grid = Arc::new(PhaseSpaceGrid::new(vec![mode.clone()])?);
    Ok(WignerField {
        grid,
        values,
        max_imag: field.max_imag,
    })
}
