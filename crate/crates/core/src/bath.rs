//! Bath spectral densities, their correlation functions and TCL damping rates.
//!
//! The second-order rate is `γ₂(t) = 2 Re ∫₀ᵗ f(u) du`. The fourth-order
//! rate is an ordered triple integral over the simplex
//! `0 < t₃ < t₂ < t₁ < t` of `f(t−t₂)f(t₁−t₃) + f(t−t₃)f(t₁−t₂)`. Writing
//! `P(x) = ∫₀ˣ f` and `Q(x) = ∫₀ˣ P`, the inner integrations can be done in
//! closed form, leaving
//!
//! ```text
//! γ₄(t) = 2 Re [ P(t) Q(t) − ∫₀ᵗ f(t − s) Q(s) ds ]
//! ```
//!
//! so one table of `f` on a uniform grid serves every node of a schedule and
//! the cost per schedule is quadratic instead of quartic in the grid size.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Bath spectral density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralDensity {
    /// Detuned cavity with coupling `δ₀`, relaxation rate `λ` and detuning `Δ`.
    Lorentzian {
        coupling: f64,
        relaxation: f64,
        detuning: f64,
        #[serde(default = "default_system_freq")]
        system_freq: f64,
    },
    /// Ohmic-type bath with coupling `η`, exponent `s` and cutoff `ω_c`.
    Ohmic {
        coupling: f64,
        ohmicity: f64,
        cutoff: f64,
        system_freq: f64,
    },
    /// Constant correlation function `f ≡ value`. Only useful for testing.
    Constant { value: f64 },
}

fn default_system_freq() -> f64 {
    5.0
}

impl SpectralDensity {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(
                    name,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        };
        match *self {
            SpectralDensity::Lorentzian {
                coupling,
                relaxation,
                detuning,
                system_freq,
            } => {
                positive("coupling", coupling)?;
                positive("relaxation", relaxation)?;
                positive("system_freq", system_freq)?;
                if !detuning.is_finite() {
                    return Err(Error::param("detuning", "must be finite"));
                }
            }
            SpectralDensity::Ohmic {
                coupling,
                ohmicity,
                cutoff,
                system_freq,
            } => {
                positive("coupling", coupling)?;
                positive("ohmicity", ohmicity)?;
                positive("cutoff", cutoff)?;
                positive("system_freq", system_freq)?;
            }
            SpectralDensity::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::param("value", "must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Spectral function J(ω); `None` for the constant stub, which has no
    /// regular density.
    pub fn density(&self, omega: f64) -> Option<f64> {
        match *self {
            SpectralDensity::Lorentzian {
                coupling,
                relaxation,
                detuning,
                system_freq,
            } => {
                let x = system_freq - detuning - omega;
                Some(
                    coupling * relaxation * relaxation
                        / (std::f64::consts::PI * (x * x + relaxation * relaxation)),
                )
            }
            SpectralDensity::Ohmic {
                coupling,
                ohmicity,
                cutoff,
                ..
            } => {
                if omega <= 0.0 {
                    return Some(0.0);
                }
                Some(
                    2.0 * std::f64::consts::PI
                        * coupling
                        * omega
                        * (omega / cutoff).powf(ohmicity - 1.0)
                        * (-omega / cutoff).exp(),
                )
            }
            SpectralDensity::Constant { .. } => None,
        }
    }

    /// Bath correlation function f(τ).
    pub fn correlation(&self, tau: f64) -> C64 {
        match *self {
            SpectralDensity::Lorentzian {
                coupling,
                relaxation,
                detuning,
                ..
            } => C64::new(-relaxation * tau.abs(), -tau * detuning).exp() * coupling,
            SpectralDensity::Ohmic {
                coupling,
                ohmicity,
                cutoff,
                system_freq,
            } => {
                let prefactor = 2.0 * coupling * std::f64::consts::PI * gamma(ohmicity + 1.0)
                    / cutoff.powf(ohmicity - 1.0);
                // principal branch; the base has positive real part
                let base = C64::new(1.0 / cutoff, tau);
                C64::new(0.0, tau * system_freq).exp() * prefactor / base.powf(1.0 + ohmicity)
            }
            SpectralDensity::Constant { value } => C64::new(value, 0.0),
        }
    }
}

/// Non-negative weights of the second- and fourth-order contributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TclCoefficients {
    pub c2: f64,
    pub c4: f64,
}

impl TclCoefficients {
    pub fn new(c2: f64, c4: f64) -> Result<Self> {
        let c = Self { c2, c4 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c2 >= 0.0 && self.c2.is_finite()) {
            return Err(Error::param(
                "c2",
                format!("must be non-negative, got {}", self.c2),
            ));
        }
        if !(self.c4 >= 0.0 && self.c4.is_finite()) {
            return Err(Error::param(
                "c4",
                format!("must be non-negative, got {}", self.c4),
            ));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.c2 == 0.0 && self.c4 == 0.0
    }
}

/// Refinement policy for the rate quadratures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// Sub-intervals on [0, t] for the first pass.
    pub initial_intervals: usize,
    /// Refinement stops with an error beyond this many sub-intervals.
    pub max_intervals: usize,
    /// Accepted change between successive refinements, relative to the
    /// magnitude of the integrand.
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            initial_intervals: 64,
            max_intervals: 512,
            rel_tol: 1e-5,
        }
    }
}

/// Uniform time grid `t_k = k·step`, `k = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    step: f64,
    len: usize,
}

impl TimeGrid {
    pub fn new(step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param(
                "step",
                format!("must be positive, got {step}"),
            ));
        }
        if len < 1 {
            return Err(Error::param("len", "grid needs at least one node"));
        }
        Ok(Self { step, len })
    }

    /// Grid covering [0, t_end] with the given step; `t_end` is rounded to a
    /// whole number of steps.
    pub fn covering(t_end: f64, step: f64) -> Result<Self> {
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::param(
                "t_end",
                format!("must be non-negative, got {t_end}"),
            ));
        }
        let steps = (t_end / step).round() as usize;
        Self::new(step, steps + 1)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_end(&self) -> f64 {
        self.step * (self.len - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.step * k as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.time(k))
    }
}

/// Sampled damping rate γ(t) on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DampingSchedule {
    grid: TimeGrid,
    gamma: Vec<f64>,
    quad_error: Vec<f64>,
    source: Option<(SpectralDensity, TclCoefficients)>,
}

impl DampingSchedule {
    /// Time-independent rate, without a bath behind it.
    pub fn constant(rate: f64, grid: TimeGrid) -> Self {
        Self {
            grid,
            gamma: vec![rate; grid.len()],
            quad_error: vec![0.0; grid.len()],
            source: None,
        }
    }

    /// Schedule from explicit samples.
    pub fn from_samples(grid: TimeGrid, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: gamma.len(),
            });
        }
        let quad_error = vec![0.0; gamma.len()];
        Ok(Self {
            grid,
            gamma,
            quad_error,
            source: None,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn quad_error(&self) -> &[f64] {
        &self.quad_error
    }

    pub fn source(&self) -> Option<&(SpectralDensity, TclCoefficients)> {
        self.source.as_ref()
    }

    /// True when no sample is below minus its error estimate.
    pub fn is_non_negative(&self) -> bool {
        self.gamma
            .iter()
            .zip(&self.quad_error)
            .all(|(g, e)| *g >= -e.max(1e-12))
    }

    pub fn changes_sign(&self) -> bool {
        let floor = |e: f64| e.max(1e-12);
        let has_pos = self
            .gamma
            .iter()
            .zip(&self.quad_error)
            .any(|(g, e)| *g > floor(*e));
        let has_neg = self
            .gamma
            .iter()
            .zip(&self.quad_error)
            .any(|(g, e)| *g < -floor(*e));
        has_pos && has_neg
    }

    /// γ(t) by linear interpolation between nodes.
    pub fn rate_at(&self, t: f64) -> Result<f64> {
        let t_end = self.grid.t_end();
        let slack = 1e-9 * self.grid.step();
        if !(t >= -slack && t <= t_end + slack) {
            return Err(Error::ScheduleOutOfRange { t, t_end });
        }
        if self.gamma.len() == 1 {
            return Ok(self.gamma[0]);
        }
        let x = (t / self.grid.step()).clamp(0.0, (self.gamma.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.gamma.len() - 2);
        let frac = x - k as f64;
        Ok(self.gamma[k] + frac * (self.gamma[k + 1] - self.gamma[k]))
    }

    /// CSV with columns `t,gamma,quad_error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,gamma,quad_error")?;
        for (k, (g, e)) in self.gamma.iter().zip(&self.quad_error).enumerate() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", self.grid.time(k), g, e)?;
        }
        Ok(())
    }
}

/// Cumulative integral of uniformly sampled data, fourth order per interval
/// (local cubic interpolation, one-sided at both ends).
fn cumulative_integral(g: &[C64], h: f64) -> Vec<C64> {
    let n = g.len();
    let mut out = vec![C64::new(0.0, 0.0); n];
    if n < 2 {
        return out;
    }
    if n < 4 {
        for k in 0..n - 1 {
            let piece = if n == 3 {
                // quadratic through all three points
                if k == 0 {
                    (g[0] * 5.0 + g[1] * 8.0 - g[2]) * (h / 12.0)
                } else {
                    (-g[0] + g[1] * 8.0 + g[2] * 5.0) * (h / 12.0)
                }
            } else {
                (g[0] + g[1]) * (h / 2.0)
            };
            out[k + 1] = out[k] + piece;
        }
        return out;
    }
    let w = h / 24.0;
    for k in 0..n - 1 {
        let piece = if k == 0 {
            g[0] * 9.0 + g[1] * 19.0 - g[2] * 5.0 + g[3]
        } else if k == n - 2 {
            g[k - 2] - g[k - 1] * 5.0 + g[k] * 19.0 + g[k + 1] * 9.0
        } else {
            -g[k - 1] + g[k] * 13.0 + g[k + 1] * 13.0 - g[k + 2]
        };
        out[k + 1] = out[k] + piece * w;
    }
    out
}

/// Composite Simpson (with a closing 3/8 panel for odd counts) over
/// `k` intervals of width `h`, integrand given by index.
fn composite_rule(k: usize, h: f64, g: impl Fn(usize) -> C64) -> C64 {
    match k {
        0 => C64::new(0.0, 0.0),
        1 => (g(0) + g(1)) * (h / 2.0),
        _ => {
            let simpson_end = if k.is_multiple_of(2) { k } else { k - 3 };
            let mut acc = C64::new(0.0, 0.0);
            if simpson_end > 0 {
                acc += g(0) + g(simpson_end);
                for j in 1..simpson_end {
                    acc += g(j) * if j % 2 == 1 { 4.0 } else { 2.0 };
                }
                acc *= h / 3.0;
            }
            if simpson_end < k {
                let s = simpson_end;
                acc += (g(s) + g(s + 1) * 3.0 + g(s + 2) * 3.0 + g(s + 3)) * (3.0 * h / 8.0);
            }
            acc
        }
    }
}

/// Rates and magnitude scales at the nodes of a fine uniform table.
struct FineRates {
    gamma: Vec<f64>,
    scale: Vec<f64>,
}

/// Evaluates `c2·γ₂ + c4·γ₄` at every `stride`-th node of a table of `f`
/// sampled with step `h`.
fn rates_from_table(f: &[C64], h: f64, coeffs: TclCoefficients, stride: usize) -> FineRates {
    let p = cumulative_integral(f, h);
    let abs_f: Vec<C64> = f.iter().map(|z| C64::new(z.norm(), 0.0)).collect();
    let abs_p = cumulative_integral(&abs_f, h);
    let (q, abs_q) = if coeffs.c4 != 0.0 {
        (cumulative_integral(&p, h), cumulative_integral(&abs_p, h))
    } else {
        (Vec::new(), Vec::new())
    };
    let nodes: Vec<usize> = (0..f.len()).step_by(stride).collect();
    let (gamma, scale) = nodes
        .par_iter()
        .map(|&k| {
            let mut value = coeffs.c2 * 2.0 * p[k].re;
            let mut scale = coeffs.c2 * 2.0 * abs_p[k].re;
            if coeffs.c4 != 0.0 {
                let conv = composite_rule(k, h, |j| f[k - j] * q[j]);
                value += coeffs.c4 * 2.0 * (p[k] * q[k] - conv).re;
                scale += coeffs.c4 * 4.0 * abs_p[k].re * abs_q[k].re;
            }
            (value, scale)
        })
        .unzip();
    FineRates { gamma, scale }
}

fn correlation_table(bath: &SpectralDensity, h: f64, n: usize) -> Vec<C64> {
    (0..=n)
        .into_par_iter()
        .map(|k| bath.correlation(k as f64 * h))
        .collect()
}

/// A rate together with its estimated quadrature error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateEstimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn converged(change: f64, value: f64, scale: f64, rel_tol: f64) -> bool {
    change <= rel_tol * value.abs().max(scale) || change <= 1e-14
}

fn rate_at(
    bath: &SpectralDensity,
    coeffs: TclCoefficients,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<RateEstimate> {
    bath.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(RateEstimate {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let mut n = quad.initial_intervals.max(2);
    let eval = |n: usize| {
        let h = t / n as f64;
        let table = correlation_table(bath, h, n);
        rates_from_table(&table, h, coeffs, n)
    };
    let mut coarse = eval(n);
    loop {
        let fine_n = 2 * n;
        if fine_n > quad.max_intervals {
            return Err(Error::QuadratureNonConvergence {
                t,
                change: f64::NAN,
                intervals: n,
            });
        }
        let fine = eval(fine_n);
        let (v, c, s) = (fine.gamma[1], coarse.gamma[1], fine.scale[1]);
        let change = (v - c).abs();
        if converged(change, v, s, quad.rel_tol) {
            return Ok(RateEstimate {
                value: v,
                error: change,
                intervals: fine_n,
            });
        }
        if 2 * fine_n > quad.max_intervals {
            return Err(Error::QuadratureNonConvergence {
                t,
                change,
                intervals: fine_n,
            });
        }
        n = fine_n;
        coarse = fine;
    }
}

/// Second-order TCL rate γ₂(t).
pub fn gamma2(bath: &SpectralDensity, t: f64, quad: &QuadratureConfig) -> Result<RateEstimate> {
    rate_at(bath, TclCoefficients { c2: 1.0, c4: 0.0 }, t, quad)
}

/// Fourth-order TCL rate γ₄(t).
pub fn gamma4(bath: &SpectralDensity, t: f64, quad: &QuadratureConfig) -> Result<RateEstimate> {
    rate_at(bath, TclCoefficients { c2: 0.0, c4: 1.0 }, t, quad)
}

/// Tabulates `γ = c2·γ₂ + c4·γ₄` on every node of `grid`.
///
/// The correlation table is refined by halving its step (starting at the
/// grid step or finer) until every node has converged.
pub fn build_schedule(
    bath: &SpectralDensity,
    coeffs: TclCoefficients,
    grid: TimeGrid,
    quad: &QuadratureConfig,
) -> Result<DampingSchedule> {
    bath.validate()?;
    coeffs.validate()?;
    let source = Some((*bath, coeffs));
    if coeffs.is_zero() || grid.len() == 1 {
        return Ok(DampingSchedule {
            grid,
            gamma: vec![0.0; grid.len()],
            quad_error: vec![0.0; grid.len()],
            source,
        });
    }
    let intervals = grid.len() - 1;
    let cap = quad.max_intervals.max(8 * intervals);
    let mut sub = quad.initial_intervals.div_ceil(intervals).max(1);
    let eval = |sub: usize| {
        let h = grid.step() / sub as f64;
        let table = correlation_table(bath, h, intervals * sub);
        rates_from_table(&table, h, coeffs, sub)
    };
    let mut coarse = eval(sub);
    loop {
        let fine_sub = 2 * sub;
        if intervals * fine_sub > cap {
            return Err(Error::QuadratureNonConvergence {
                t: grid.t_end(),
                change: f64::NAN,
                intervals: intervals * sub,
            });
        }
        let fine = eval(fine_sub);
        let quad_error: Vec<f64> = fine
            .gamma
            .iter()
            .zip(&coarse.gamma)
            .map(|(a, b)| (a - b).abs())
            .collect();
        let worst = (0..grid.len())
            .filter(|&k| !converged(quad_error[k], fine.gamma[k], fine.scale[k], quad.rel_tol))
            .max_by(|&a, &b| quad_error[a].total_cmp(&quad_error[b]));
        match worst {
            None => {
                let mut gamma = fine.gamma;
                gamma[0] = 0.0;
                return Ok(DampingSchedule {
                    grid,
                    gamma,
                    quad_error,
                    source,
                });
            }
            Some(k) if intervals * 2 * fine_sub > cap => {
                return Err(Error::QuadratureNonConvergence {
                    t: grid.time(k),
                    change: quad_error[k],
                    intervals: intervals * fine_sub,
                });
            }
            Some(_) => {
                sub = fine_sub;
                coarse = fine;
            }
        }
    }
}
