//! Negativity volume and the non-Markovianity degree built on it.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::Trajectory;
use crate::phase_space::{wigner_evaluate, KernelCache, WignerField};

/// Largest normalization defect accepted by [`negativity_volume`].
pub const NORMALIZATION_LIMIT: f64 = 1e-3;

/// Smallest quadrature tolerance attached to an NV sample.
pub const QUAD_TOL_FLOOR: f64 = 1e-9;

/// A negativity volume together with its quadrature tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Negativity {
    pub value: f64,
    /// `max(|Σ w W − 1|, QUAD_TOL_FLOOR)`.
    pub quad_tol: f64,
}

/// `½(Σ_k w_k |W_k| − 1)`, clamped at zero within the quadrature tolerance.
pub fn negativity_volume(field: &WignerField) -> Result<Negativity> {
    let integral = field.integral();
    if !integral.is_finite() || (integral - 1.0).abs() > NORMALIZATION_LIMIT {
        return Err(Error::NotNormalized { integral });
    }
    let quad_tol = (integral - 1.0).abs().max(QUAD_TOL_FLOOR);
    let raw = 0.5 * (field.abs_integral() - 1.0);
    let value = if raw < 0.0 && raw >= -quad_tol {
        0.0
    } else {
        raw
    };
    Ok(Negativity { value, quad_tol })
}

/// Time series of negativity volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativityTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub quad_tol: Vec<f64>,
}

impl NegativityTrace {
    /// Trace with a uniform tolerance; mostly useful for synthetic data.
    pub fn from_values(times: Vec<f64>, values: Vec<f64>, quad_tol: f64) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: values.len(),
            });
        }
        let quad_tol = vec![quad_tol; values.len()];
        Ok(Self {
            times,
            values,
            quad_tol,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest per-sample tolerance.
    pub fn max_quad_tol(&self) -> f64 {
        self.quad_tol.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with header `t,negativity,quad_tol`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,negativity,quad_tol")?;
        for ((t, v), q) in self.times.iter().zip(&self.values).zip(&self.quad_tol) {
            writeln!(out, "{t:.16e},{v:.16e},{q:.16e}")?;
        }
        Ok(())
    }
}

/// NV of every snapshot of a trajectory.
pub fn nv_trace(traj: &Trajectory, cache: &KernelCache) -> Result<NegativityTrace> {
    let samples: Vec<Negativity> = traj
        .states
        .iter()
        .map(|rho| wigner_evaluate(rho, cache).and_then(|f| negativity_volume(&f)))
        .collect::<Result<_>>()?;
    Ok(NegativityTrace {
        times: traj.times.clone(),
        values: samples.iter().map(|s| s.value).collect(),
        quad_tol: samples.iter().map(|s| s.quad_tol).collect(),
    })
}

/// Same as [`nv_trace`] but evaluates snapshots concurrently; results are
/// assembled in time order and are identical to the sequential version.
pub fn nv_trace_par(traj: &Trajectory, cache: &KernelCache) -> Result<NegativityTrace> {
    let samples: Vec<Negativity> = traj
        .states
        .par_iter()
        .map(|rho| wigner_evaluate(rho, cache).and_then(|f| negativity_volume(&f)))
        .collect::<Result<_>>()?;
    Ok(NegativityTrace {
        times: traj.times.clone(),
        values: samples.iter().map(|s| s.value).collect(),
        quad_tol: samples.iter().map(|s| s.quad_tol).collect(),
    })
}

/// `1 − |Σ ΔN| / Σ |ΔN|` over consecutive samples.
///
/// Steps with `|ΔN|` below twice the larger tolerance of their endpoints are
/// dropped from both sums. A trace whose remaining variation is at most
/// `10 × max quad_tol` yields 0.
pub fn nonmarkovianity_degree(trace: &NegativityTrace) -> Result<f64> {
    let n = trace.values.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    if trace.quad_tol.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: trace.quad_tol.len(),
        });
    }
    let (mut net, mut total) = (0.0, 0.0);
    for k in 0..n - 1 {
        let d = trace.values[k + 1] - trace.values[k];
        let floor = 2.0 * trace.quad_tol[k].max(trace.quad_tol[k + 1]);
        if d.abs() < floor {
            continue;
        }
        net += d;
        total += d.abs();
    }
    let eps_tv = 10.0 * trace.max_quad_tol();
    if total <= eps_tv || total == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - net.abs() / total).clamp(0.0, 1.0))
}
