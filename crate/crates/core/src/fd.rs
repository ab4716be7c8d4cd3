//! Reference p-Laplace solver on a planar disc.
//!
//! Piecewise linear elements on the square lattice, each cell cut along its
//! main diagonal, and the regularized energy
//! `Σ_T |T| (|∇u|² + δ)^{p/2} / p` minimized by nonlinear Gauss-Seidel with
//! over-relaxation. Nodes with `|x| < ρ` are unknown; the rest carry
//! `F̄ + (|x|/ρ)(F(x̂) - F̄)`, which is exact for affine data.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FieldMeta, GridField};
use crate::game::BoundaryData;

#[derive(Clone, Debug)]
pub struct FdProblem {
    pub p: f64,
    pub h: f64,
    pub radius: f64,
    pub boundary: BoundaryData,
    pub reg: f64,
    /// Optional inner disc `(radius, value)` held fixed, for annuli.
    pub inner: Option<(f64, f64)>,
}

impl FdProblem {
    pub fn new(p: f64, h: f64, radius: f64, boundary: BoundaryData) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidConfig(format!("p must exceed 1, got {p}")));
        }
        if !(h > 0.0) || !(radius > 2.0 * h) {
            return Err(Error::InvalidConfig(format!(
                "spacing {h} does not resolve radius {radius}"
            )));
        }
        Ok(Self {
            p,
            h,
            radius,
            boundary,
            reg: 1e-12,
            inner: None,
        })
    }

    pub fn with_reg(mut self, reg: f64) -> Result<Self> {
        if !(reg >= 0.0) {
            return Err(Error::InvalidConfig(
                "regularization must be nonnegative".into(),
            ));
        }
        self.reg = reg;
        Ok(self)
    }

    pub fn with_inner(mut self, radius: f64, value: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < self.radius) {
            return Err(Error::InvalidConfig(
                "inner radius must lie in (0, radius)".into(),
            ));
        }
        self.inner = Some((radius, value));
        Ok(self)
    }

    fn coarsened(&self) -> Self {
        Self {
            h: 2.0 * self.h,
            ..self.clone()
        }
    }
}

/// Mean of the data over the unit circle.
fn circle_mean(f: &BoundaryData) -> f64 {
    let n = 4096;
    (0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            f.eval(&[t.cos(), t.sin()])
        })
        .sum::<f64>()
        / n as f64
}

struct Layout {
    side: usize,
    unknown: Vec<usize>,
    colors: [Vec<usize>; 3],
    /// Lower-left corners of cells touching an unknown.
    cells: Vec<usize>,
}

/// The six triangles around a node: triangle `k` has gradient
/// `(g[k] + t COEF[k]) / h` when the node holds `t`.
#[derive(Clone, Copy)]
struct Local {
    g: [[f64; 2]; 6],
}

const COEF: [[f64; 2]; 6] = [
    [-1.0, 0.0],
    [1.0, -1.0],
    [0.0, 1.0],
    [0.0, -1.0],
    [1.0, 0.0],
    [-1.0, 1.0],
];

#[inline]
fn gather(u: &[f64], n: usize, s: usize) -> Local {
    let e = u[n + s];
    let ne = u[n + s + 1];
    let w = u[n - s];
    let no = u[n + 1];
    let sw = u[n - s - 1];
    let so = u[n - 1];
    Local {
        g: [
            [e, ne - e],
            [-w, no],
            [so - sw, -so],
            [ne - no, no],
            [-w, w - sw],
            [e, -so],
        ],
    }
}

#[inline]
fn neighbour_range(u: &[f64], n: usize, s: usize) -> (f64, f64) {
    let vals = [
        u[n + s],
        u[n + s + 1],
        u[n - s],
        u[n + 1],
        u[n - s - 1],
        u[n - 1],
    ];
    vals.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        })
}

struct Energy {
    p: f64,
    inv_h2: f64,
    reg: f64,
}

impl Energy {
    /// `q^(p/2 - 1)`
    #[inline]
    fn weight(&self, q: f64) -> f64 {
        if self.p == 2.0 {
            1.0
        } else if self.p == 3.0 {
            q.sqrt()
        } else if self.p == 1.5 {
            1.0 / q.sqrt().sqrt()
        } else {
            q.powf(0.5 * self.p - 1.0)
        }
    }

    #[inline]
    fn q(&self, gx: f64, gy: f64) -> f64 {
        (gx * gx + gy * gy) * self.inv_h2 + self.reg
    }

    /// Local energy scaled by `2p / h²`, i.e. `Σ q^{p/2}`.
    fn local(&self, l: &Local, t: f64) -> f64 {
        let mut e = 0.0;
        for k in 0..6 {
            let q = self.q(l.g[k][0] + t * COEF[k][0], l.g[k][1] + t * COEF[k][1]);
            e += q * self.weight(q);
        }
        e
    }

    /// First and second derivative of the local energy in `t`.
    fn derivs(&self, l: &Local, t: f64) -> (f64, f64) {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for k in 0..6 {
            let (cx, cy) = (COEF[k][0], COEF[k][1]);
            let gx = l.g[k][0] + t * cx;
            let gy = l.g[k][1] + t * cy;
            let q = self.q(gx, gy);
            let w = self.weight(q);
            let gc = gx * cx + gy * cy;
            d1 += 0.5 * w * gc;
            d2 += 0.5 * (w * (cx * cx + cy * cy) + (self.p - 2.0) * w / q * gc * gc * self.inv_h2);
        }
        (d1, d2)
    }

    /// Minimizer of the convex local energy inside `[lo, hi]`.
    fn minimize(&self, l: &Local, t0: f64, mut lo: f64, mut hi: f64) -> f64 {
        if hi - lo <= 0.0 {
            return lo;
        }
        let mut t = t0.clamp(lo, hi);
        let scale = 1.0 + lo.abs().max(hi.abs());
        for _ in 0..60 {
            let (d1, d2) = self.derivs(l, t);
            if d1 == 0.0 {
                return t;
            }
            if d1 > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let mut next = if d2 > 0.0 { t - d1 / d2 } else { f64::NAN };
            if (next - t).abs() <= f64::EPSILON * scale {
                return next;
            }
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if hi - lo <= f64::EPSILON * scale {
                return next;
            }
            t = next;
        }
        t
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossReport {
    pub sup_diff: f64,
    pub mean_diff: f64,
    pub nodes: usize,
}

/// Compare two fields on the lattice nodes of the first with
/// `|x| <= radius - margin`.
pub fn cross_validate(
    field_dpp: &GridField,
    field_fd: &GridField,
    margin: f64,
) -> Result<CrossReport> {
    if field_dpp.meta.boundary != field_fd.meta.boundary {
        return Err(Error::BoundaryMismatch(
            field_dpp.meta.boundary.clone(),
            field_fd.meta.boundary.clone(),
        ));
    }
    let r = field_dpp.radius - margin;
    let mut sup = 0.0f64;
    let mut sum = 0.0;
    let mut nodes = 0;
    for i in 0..field_dpp.len() {
        let x = field_dpp.coords(i);
        if crate::geometry::norm(&x) <= r {
            let diff = (field_dpp.values[i] - field_fd.evaluate(&x)?).abs();
            sup = sup.max(diff);
            sum += diff;
            nodes += 1;
        }
    }
    if nodes == 0 {
        return Err(Error::EmptyExperiment);
    }
    Ok(CrossReport {
        sup_diff: sup,
        mean_diff: sum / nodes as f64,
        nodes,
    })
}

/// Minimize the discrete p-energy until the scaled Euler-Lagrange residual
/// drops below `tol` or `max_iter` sweeps have run on the finest level.
pub fn solve_plaplace(problem: &FdProblem, tol: f64, max_iter: u64) -> Result<GridField> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig("tolerance must be positive".into()));
    }
    let mean = circle_mean(&problem.boundary);
    solve_level(problem, tol, max_iter, mean)
}

fn layout(field: &mut GridField, problem: &FdProblem, mean: f64) -> Layout {
    let side = field.side();
    let rho = problem.radius;
    let mut unknown = Vec::new();
    let mut colors: [Vec<usize>; 3] = Default::default();
    for n in 0..field.len() {
        let x = field.coords(n);
        let r = x[0].hypot(x[1]);
        if let Some((ri, vi)) = problem.inner {
            if r <= ri {
                field.values[n] = vi;
                continue;
            }
        }
        if r < rho {
            unknown.push(n);
            let (i, j) = (n / side, n % side);
            colors[(i + j) % 3].push(n);
        } else {
            let dir = [x[0] / r, x[1] / r];
            field.values[n] = mean + (r / rho) * (problem.boundary.eval(&dir) - mean);
        }
    }
    let mut cells: Vec<usize> = unknown
        .iter()
        .flat_map(|&n| [n, n - side, n - 1, n - side - 1])
        .collect();
    cells.sort_unstable();
    cells.dedup();
    Layout {
        side,
        unknown,
        colors,
        cells,
    }
}

fn solve_level(problem: &FdProblem, tol: f64, max_iter: u64, mean: f64) -> Result<GridField> {
    let mut field = GridField::new(2, problem.h, problem.radius)?;
    let lay = layout(&mut field, problem, mean);
    let coarse_ok = lay.unknown.len() > 4096 && problem.radius > 8.0 * problem.h;
    if coarse_ok {
        let coarse = solve_level(&problem.coarsened(), 10.0 * tol, max_iter, mean)?;
        for &n in &lay.unknown {
            let x = field.coords(n);
            field.values[n] = coarse.interpolate(&x);
        }
    } else {
        for &n in &lay.unknown {
            let x = field.coords(n);
            let r = x[0].hypot(x[1]);
            field.values[n] = if r > 0.0 {
                mean + (r / problem.radius) * (problem.boundary.eval(&[x[0] / r, x[1] / r]) - mean)
            } else {
                mean
            };
        }
    }

    let en = Energy {
        p: problem.p,
        inv_h2: 1.0 / (problem.h * problem.h),
        reg: problem.reg,
    };
    let s = lay.side;
    let omega = 2.0 / (1.0 + (std::f64::consts::PI * problem.h / (2.0 * problem.radius)).sin());
    let quadratic = problem.p == 2.0;
    let mut residual = residual(&en, &field.values, &lay);
    let mut history = vec![residual];
    let mut energies = vec![total_energy(&en, &field.values, &lay, problem.h)];
    let mut rises = 0;
    let mut sweeps = 0u64;
    let mut scratch = Vec::new();
    while residual >= tol && sweeps < max_iter {
        for color in &lay.colors {
            let u: &[f64] = &field.values;
            color
                .par_iter()
                .map(|&n| {
                    let l = gather(u, n, s);
                    let old = u[n];
                    let (lo, hi) = neighbour_range(u, n, s);
                    let star = en.minimize(&l, old, lo.min(old), hi.max(old));
                    let relaxed = old + omega * (star - old);
                    if quadratic || en.local(&l, relaxed) <= en.local(&l, old) {
                        relaxed
                    } else {
                        star
                    }
                })
                .collect_into_vec(&mut scratch);
            for (&n, &v) in color.iter().zip(&scratch) {
                field.values[n] = v;
            }
        }
        sweeps += 1;
        if sweeps % 10 == 0 || sweeps == max_iter {
            residual = self::residual(&en, &field.values, &lay);
            let e = total_energy(&en, &field.values, &lay, problem.h);
            if !residual.is_finite() || !e.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite state after {sweeps} sweeps"
                )));
            }
            let last = *energies.last().unwrap();
            rises = if e > last * (1.0 + 1e-13) + 1e-300 {
                rises + 1
            } else {
                0
            };
            if rises >= 100 {
                return Err(Error::Diverged(format!(
                    "energy rose over 100 consecutive checks, now {e:.6e} with residual {residual:.3e}"
                )));
            }
            history.push(residual);
            energies.push(e);
        }
    }
    field.meta = FieldMeta {
        label: "fd".into(),
        boundary: problem.boundary.label().to_string(),
        p: problem.p,
        eps: None,
        iterations: sweeps,
        residual,
        converged: residual < tol,
        regularization: Some(problem.reg),
        residual_history: history,
        energy_history: energies,
    };
    Ok(field)
}

/// `max |∂E/∂u_n| / h²` over unknowns, with `E` the unscaled energy.
fn residual(en: &Energy, u: &[f64], lay: &Layout) -> f64 {
    lay.unknown
        .iter()
        .map(|&n| {
            let l = gather(u, n, lay.side);
            en.derivs(&l, u[n]).0.abs() * en.inv_h2
        })
        .fold(0.0, f64::max)
}

/// Discrete energy over triangles that touch an unknown.
fn total_energy(en: &Energy, u: &[f64], lay: &Layout, h: f64) -> f64 {
    let s = lay.side;
    let mut e = 0.0;
    for &c in &lay.cells {
        let (a, b, cc, d) = (u[c], u[c + s], u[c + s + 1], u[c + 1]);
        // lower triangle: (i,j),(i+1,j),(i+1,j+1); upper: (i,j),(i+1,j+1),(i,j+1)
        let q1 = en.q(b - a, cc - b);
        let q2 = en.q(cc - d, d - a);
        e += q1 * en.weight(q1) + q2 * en.weight(q2);
    }
    e * h * h / (2.0 * en.p)
}
