//! Time-dependent Lindblad master equation integrated with fixed-step RK4.
//!
//! Rates multiply unit-coefficient Lindblad operators directly, so negative
//! rates (non-Markovian intervals) are applied without ever taking a square
//! root of γ(t).

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bath::DampingSchedule;
use crate::error::{Error, Result};
use crate::hilbert::{annihilation, number, pauli, Axis, HilbertSpec, Operator, Subsystem, C64};

/// Largest trace or Hermiticity deviation tolerated during evolution.
pub const DRIFT_LIMIT: f64 = 1e-6;

/// Extent of classic RK4's stability region along the negative real axis.
pub const RK4_STABILITY_LIMIT: f64 = 2.785;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    /// σ_z on a qubit.
    QubitDephasing,
    /// Annihilation operator on a mode.
    PhotonAmplitude,
    /// Number operator on a mode.
    PhotonDephasing,
}

/// Nonzero entries of an operator, for cheap products with dense matrices.
#[derive(Clone, Debug)]
struct SparseOp {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_dense(op: &Operator) -> Self {
        let m = op.matrix();
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self { entries }
    }

    /// self · m
    fn left_mul(&self, m: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        out.fill(C64::new(0.0, 0.0));
        for &(i, k, v) in &self.entries {
            for j in 0..m.ncols() {
                out[(i, j)] += v * m[(k, j)];
            }
        }
    }

    /// m · self
    fn right_mul(&self, m: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        out.fill(C64::new(0.0, 0.0));
        for &(k, j, v) in &self.entries {
            let (src, mut dst) = (m.column(k), out.column_mut(j));
            dst.axpy(v, &src, C64::new(1.0, 0.0));
        }
    }

    /// m · self†
    fn right_mul_adjoint(&self, m: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        out.fill(C64::new(0.0, 0.0));
        for &(j, k, v) in &self.entries {
            let (src, mut dst) = (m.column(k), out.column_mut(j));
            dst.axpy(v.conj(), &src, C64::new(1.0, 0.0));
        }
    }
}

/// One decoherence channel: a Lindblad operator on the full space and the
/// rate schedule that multiplies its dissipator.
#[derive(Clone, Debug)]
pub struct Channel {
    kind: ChannelKind,
    target: usize,
    base_op: Operator,
    schedule: Arc<DampingSchedule>,
    jump: SparseOp,
    decay: SparseOp,
    stiffness: f64,
}

impl Channel {
    pub fn new(
        kind: ChannelKind,
        target: usize,
        spec: &HilbertSpec,
        schedule: Arc<DampingSchedule>,
    ) -> Result<Self> {
        let sub = *spec
            .subsystems()
            .get(target)
            .ok_or_else(|| Error::param("target", format!("no subsystem {target}")))?;
        let local = match (kind, sub) {
            (ChannelKind::QubitDephasing, Subsystem::Qubit) => pauli(Axis::Z),
            (ChannelKind::PhotonAmplitude, Subsystem::Mode { cutoff }) => annihilation(cutoff)?,
            (ChannelKind::PhotonDephasing, Subsystem::Mode { cutoff }) => number(cutoff)?,
            _ => {
                return Err(Error::param(
                    "target",
                    format!("{kind:?} cannot act on subsystem {target} ({sub:?})"),
                ));
            }
        };
        let base_op = spec.embed(&local, target)?;
        Ok(Self::from_operator(kind, target, base_op, schedule))
    }

    fn from_operator(
        kind: ChannelKind,
        target: usize,
        base_op: Operator,
        schedule: Arc<DampingSchedule>,
    ) -> Self {
        let jump = SparseOp::from_dense(&base_op);
        let decay_op = &base_op.adjoint() * &base_op;
        let decay = SparseOp::from_dense(&decay_op);
        let stiffness = dissipator_radius(&base_op, &decay_op);
        Self {
            kind,
            target,
            base_op,
            schedule,
            jump,
            decay,
            stiffness,
        }
    }

    /// Bound on the spectral radius of `D[L]` at unit rate.
    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn base_op(&self) -> &Operator {
        &self.base_op
    }

    pub fn schedule(&self) -> &DampingSchedule {
        &self.schedule
    }

    /// Adds `rate · D[L](ρ)` to `acc`.
    fn accumulate(
        &self,
        rho: &DMatrix<C64>,
        rate: f64,
        acc: &mut DMatrix<C64>,
        scratch: &mut [DMatrix<C64>; 2],
    ) {
        let [a, b] = scratch;
        self.jump.left_mul(rho, a);
        self.jump.right_mul_adjoint(a, b);
        *acc += &*b * C64::new(rate, 0.0);
        self.decay.left_mul(rho, a);
        self.decay.right_mul(rho, b);
        *acc -= (&*a + &*b) * C64::new(0.5 * rate, 0.0);
    }
}

/// Spectral radius of `D[L]` when `L` is diagonal (each coherence ρ_ij
/// decays at `|l_i l_j* − (|l_i|² + |l_j|²)/2|`), else the bound `2‖L‖²`.
fn dissipator_radius(l: &Operator, decay: &Operator) -> f64 {
    let m = l.matrix();
    let n = l.dim();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == C64::new(0.0, 0.0)));
    if diagonal {
        let d: Vec<C64> = (0..n).map(|i| m[(i, i)]).collect();
        let mut worst = 0.0f64;
        for a in &d {
            for b in &d {
                worst = worst.max((a * b.conj() - (a.norm_sqr() + b.norm_sqr()) * 0.5).norm());
            }
        }
        worst
    } else {
        2.0 * decay.hermitian_eigenvalues().last().copied().unwrap_or(0.0)
    }
}

/// L ρ L† − ½{L†L, ρ}, without any rate.
pub fn dissipator(l: &Operator, rho: &Operator) -> Result<Operator> {
    if l.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            found: rho.dim(),
        });
    }
    let ld = l.adjoint();
    let ldl = &ld * l;
    let jump = &(l * rho) * &ld;
    let anti = &(&ldl * rho) + &(rho * &ldl);
    Ok(&jump - &anti.scale(C64::new(0.5, 0.0)))
}

/// Generator of the master equation, `−i[H, ρ] + Σ γ_c(t) D[L_c](ρ)` (ħ = 1).
pub fn rhs(
    rho: &Operator,
    t: f64,
    hamiltonian: &Operator,
    channels: &[Channel],
) -> Result<Operator> {
    let n = rho.dim();
    if hamiltonian.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: hamiltonian.dim(),
        });
    }
    for ch in channels {
        if ch.base_op.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: ch.base_op.dim(),
            });
        }
    }
    let rates = channels
        .iter()
        .map(|c| c.schedule.rate_at(t))
        .collect::<Result<Vec<_>>>()?;
    let mut gen = Generator::new(hamiltonian, channels, n);
    let mut out = DMatrix::zeros(n, n);
    gen.apply(rho.matrix(), &rates, &mut out);
    Operator::new(out)
}

struct Generator<'a> {
    hamiltonian: Option<&'a DMatrix<C64>>,
    channels: &'a [Channel],
    scratch: [DMatrix<C64>; 2],
}

impl<'a> Generator<'a> {
    fn new(hamiltonian: &'a Operator, channels: &'a [Channel], n: usize) -> Self {
        let hamiltonian = (hamiltonian.max_abs() != 0.0).then(|| hamiltonian.matrix());
        Self {
            hamiltonian,
            channels,
            scratch: [DMatrix::zeros(n, n), DMatrix::zeros(n, n)],
        }
    }

    fn apply(&mut self, rho: &DMatrix<C64>, rates: &[f64], out: &mut DMatrix<C64>) {
        out.fill(C64::new(0.0, 0.0));
        if let Some(h) = self.hamiltonian {
            *out += (h * rho - rho * h) * C64::new(0.0, -1.0);
        }
        for (ch, &rate) in self.channels.iter().zip(rates) {
            if rate != 0.0 {
                ch.accumulate(rho, rate, out, &mut self.scratch);
            }
        }
    }
}

/// Fixed-step integration settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Record every `sample_stride`-th step (the final step is always kept).
    pub sample_stride: usize,
}

impl EvolutionConfig {
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::param(
                "t_max",
                format!("must be non-negative, got {}", self.t_max),
            ));
        }
        if self.sample_stride == 0 {
            return Err(Error::param("sample_stride", "must be positive"));
        }
        let steps = (self.t_max / self.dt).round();
        if (steps * self.dt - self.t_max).abs() > 1e-9 * self.t_max.max(1.0) {
            return Err(Error::param(
                "t_max",
                format!(
                    "{} is not a whole number of steps of {}",
                    self.t_max, self.dt
                ),
            ));
        }
        Ok(steps as usize)
    }
}

/// Per-snapshot health numbers, measured before symmetrization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotDiagnostics {
    pub trace_dev: f64,
    pub herm_dev: f64,
    pub min_eigenvalue: f64,
}

/// Recorded states of one evolution.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Hermitized snapshots (ρ + ρ†)/2.
    pub states: Vec<Operator>,
    pub diagnostics: Vec<SnapshotDiagnostics>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the snapshot closest to `t`.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
    }

    /// Flat CSV: `t` followed by row-major real and imaginary parts.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.dim());
        write!(out, "t")?;
        for i in 0..n {
            for j in 0..n {
                write!(out, ",re_{i}_{j},im_{i}_{j}")?;
            }
        }
        writeln!(out)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(out, "{t:.16e}")?;
            for i in 0..n {
                for j in 0..n {
                    let z = s.get(i, j);
                    write!(out, ",{:.16e},{:.16e}", z.re, z.im)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Integrates dρ/dt = ℒ(t)ρ from `rho0` with classic RK4.
pub fn evolve(
    rho0: &Operator,
    hamiltonian: &Operator,
    channels: &[Channel],
    cfg: &EvolutionConfig,
) -> Result<Trajectory> {
    let steps = cfg.steps()?;
    let n = rho0.dim();
    if hamiltonian.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: hamiltonian.dim(),
        });
    }
    for ch in channels {
        if ch.base_op.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: ch.base_op.dim(),
            });
        }
        let grid = ch.schedule.grid();
        if grid.step() > cfg.dt * (1.0 + 1e-9) {
            return Err(Error::param(
                "schedule",
                format!("step {} coarser than dt {}", grid.step(), cfg.dt),
            ));
        }
        if grid.t_end() < cfg.t_max - 1e-9 * cfg.t_max.max(1.0) {
            return Err(Error::ScheduleOutOfRange {
                t: cfg.t_max,
                t_end: grid.t_end(),
            });
        }
        let peak = ch
            .schedule
            .gamma()
            .iter()
            .enumerate()
            .take_while(|(k, _)| grid.time(*k) <= cfg.t_max + grid.step())
            .fold(0.0f64, |m, (_, g)| m.max(g.abs()));
        if peak * ch.stiffness * cfg.dt > RK4_STABILITY_LIMIT {
            let limit = RK4_STABILITY_LIMIT / (peak * ch.stiffness);
            return Err(Error::param(
                "dt",
                format!(
                    "{:?} with peak rate {peak:.4} is unstable at dt = {}; use dt < {limit:.3e}",
                    ch.kind, cfg.dt
                ),
            ));
        }
    }

    let dt = cfg.dt;
    let mut gen = Generator::new(hamiltonian, channels, n);
    let mut rho = rho0.matrix().clone();
    let zero = || DMatrix::<C64>::zeros(n, n);
    let (mut k1, mut k2, mut k3, mut k4, mut probe) = (zero(), zero(), zero(), zero(), zero());
    let rates_at = |t: f64| {
        channels
            .iter()
            .map(|c| c.schedule.rate_at(t))
            .collect::<Result<Vec<_>>>()
    };

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        diagnostics: Vec::new(),
    };
    record(&mut traj, 0.0, &rho)?;
    for step in 0..steps {
        let t = step as f64 * dt;
        let (r0, rh, r1) = (rates_at(t)?, rates_at(t + 0.5 * dt)?, rates_at(t + dt)?);
        gen.apply(&rho, &r0, &mut k1);
        probe.copy_from(&rho);
        axpy(&mut probe, C64::new(0.5 * dt, 0.0), &k1);
        gen.apply(&probe, &rh, &mut k2);
        probe.copy_from(&rho);
        axpy(&mut probe, C64::new(0.5 * dt, 0.0), &k2);
        gen.apply(&probe, &rh, &mut k3);
        probe.copy_from(&rho);
        axpy(&mut probe, C64::new(dt, 0.0), &k3);
        gen.apply(&probe, &r1, &mut k4);

        k2 += &k3;
        k1 += &k4;
        axpy(&mut rho, C64::new(dt / 6.0, 0.0), &k1);
        axpy(&mut rho, C64::new(dt / 3.0, 0.0), &k2);
        flush_subnormals(&mut rho);

        let done = step + 1;
        if done % cfg.sample_stride == 0 || done == steps {
            record(&mut traj, done as f64 * dt, &rho)?;
        }
    }
    Ok(traj)
}

/// Zeroes components below `f64::MIN_POSITIVE`. Fully dephased coherences
/// otherwise decay into subnormals, which are very slow on common hardware.
fn flush_subnormals(m: &mut DMatrix<C64>) {
    m.apply(|z| {
        if z.re.abs() < f64::MIN_POSITIVE {
            z.re = 0.0;
        }
        if z.im.abs() < f64::MIN_POSITIVE {
            z.im = 0.0;
        }
    });
}

/// y += a·x
fn axpy(y: &mut DMatrix<C64>, a: C64, x: &DMatrix<C64>) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

fn record(traj: &mut Trajectory, t: f64, rho: &DMatrix<C64>) -> Result<()> {
    let op = Operator::new(rho.clone())?;
    let trace_dev = (op.trace() - C64::new(1.0, 0.0)).norm();
    let herm_dev = op.hermiticity_defect();
    if trace_dev > DRIFT_LIMIT || herm_dev > DRIFT_LIMIT {
        return Err(Error::Drift {
            t,
            trace_dev,
            herm_dev,
        });
    }
    let snapshot = op.hermitian_part();
    let min_eigenvalue = snapshot.hermitian_eigenvalues()[0];
    traj.times.push(t);
    traj.states.push(snapshot);
    traj.diagnostics.push(SnapshotDiagnostics {
        trace_dev,
        herm_dev,
        min_eigenvalue,
    });
    Ok(())
}
