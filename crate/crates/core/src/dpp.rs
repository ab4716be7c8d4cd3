//! Value iteration for the game value on a lattice (d = 2 or 3).
//!
//! One Jacobi sweep replaces every interior value by
//! `½ max_v A(x, v) + ½ min_v A(x, v)`, where `A(x, v)` averages the field
//! over the noise nodes around `x + v`. Terminal nodes hold
//! `½ (sup + inf)` of the data over their boundary cap.
//!
//! Since interior nodes are lattice points, the interpolation weights of
//! `x + v + w` depend only on `v + w`; each move is precompiled into a
//! translation invariant stencil of flat offsets.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{FieldMeta, GridField};
use crate::game::{is_terminal, orthonormal_complement, terminal_arc_extremes, GameConfig};
use crate::geometry::{norm, unit, Vector};

/// Candidate moves, closed under negation.
#[derive(Clone, Debug, PartialEq)]
pub struct MoveSet {
    moves: Vec<Vector>,
}

impl MoveSet {
    /// 0 plus 32 planar directions (d = 2) or 0 plus 52 directions (d = 3).
    pub fn default_for(d: usize, eps: f64) -> Result<Self> {
        match d {
            2 => Self::planar(eps, 32),
            3 => Ok(Self::spatial(eps)),
            _ => Err(Error::UnsupportedDimension(
                d,
                "the lattice solver handles d = 2 or 3",
            )),
        }
    }

    /// `n_dir` equally spaced directions; `n_dir` must be a multiple of 4 so
    /// the set is invariant under quarter turns.
    pub fn planar(eps: f64, n_dir: usize) -> Result<Self> {
        if n_dir == 0 || n_dir % 4 != 0 {
            return Err(Error::InvalidConfig(format!(
                "direction count {n_dir} must be a positive multiple of 4"
            )));
        }
        let q = n_dir / 4;
        let mut first: Vec<[f64; 2]> = (0..q)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n_dir as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        first[0] = [1.0, 0.0];
        let mut moves = vec![Vector::zeros(2)];
        for turn in 0..4 {
            for &[x, y] in &first {
                let (a, b) = match turn {
                    0 => (x, y),
                    1 => (-y, x),
                    2 => (-x, -y),
                    _ => (y, -x),
                };
                moves.push(Vector::from([eps * a, eps * b]));
            }
        }
        Ok(Self { moves })
    }

    /// Axis, face-diagonal and body-diagonal directions plus 26 Fibonacci
    /// directions (13 and their negatives).
    pub fn spatial(eps: f64) -> Self {
        let mut moves = vec![Vector::zeros(3)];
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                for c in -1i32..=1 {
                    if (a, b, c) != (0, 0, 0) {
                        let v = Vector::from([a as f64, b as f64, c as f64]);
                        moves.push(v.scale(eps / v.norm()));
                    }
                }
            }
        }
        let n = 26.0;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        for i in 0..13 {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            let v = Vector::from([r * t.cos(), r * t.sin(), z]).scale(eps);
            moves.push(-&v);
            moves.push(v);
        }
        Self { moves }
    }

    pub fn from_moves(moves: Vec<Vector>, eps: f64) -> Result<Self> {
        for v in &moves {
            if v.norm() > eps * (1.0 + 1e-12) {
                return Err(Error::IllegalMove {
                    norm: v.norm(),
                    eps,
                });
            }
        }
        Ok(Self { moves })
    }

    pub fn moves(&self) -> &[Vector] {
        &self.moves
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }
}

/// Equal-weight quadrature nodes for the noise around move `v`.
///
/// d = 2: the two points `±Rε v̂⊥`, or 16 circle points when `v = 0`.
/// d = 3: `k` points on the circle of radius `Rε` in `v⊥`, or the 12
/// icosahedron vertices when `v = 0`.
pub fn noise_nodes(v: &Vector, cfg: &GameConfig, k: usize) -> Result<Vec<Vector>> {
    let r = cfg.noise_scale();
    let zero = v.norm() == 0.0;
    match cfg.d {
        2 if zero => Ok(quarter_symmetric_circle(16)
            .into_iter()
            .map(|[a, b]| Vector::from([r * a, r * b]))
            .collect()),
        2 => {
            let u = unit(v)?;
            let w = Vector::from([-u[1] * r, u[0] * r]);
            Ok(vec![-&w, w])
        }
        3 if zero => Ok(icosahedron().into_iter().map(|p| p.scale(r)).collect()),
        3 => {
            if k < 2 || k % 2 != 0 {
                return Err(Error::InvalidConfig(format!(
                    "circle node count {k} must be even"
                )));
            }
            let frame = orthonormal_complement(&unit(v)?);
            let mut half = Vec::with_capacity(k);
            for j in 0..k / 2 {
                let t = std::f64::consts::TAU * j as f64 / k as f64;
                half.push(frame[0].scale(r * t.cos()).axpy(r * t.sin(), &frame[1]));
            }
            let neg: Vec<Vector> = half.iter().map(|w| -w).collect();
            half.extend(neg);
            Ok(half)
        }
        d => Err(Error::UnsupportedDimension(
            d,
            "noise quadrature handles d = 2 or 3",
        )),
    }
}

fn quarter_symmetric_circle(n: usize) -> Vec<[f64; 2]> {
    let q = n / 4;
    let mut first: Vec<[f64; 2]> = (0..q)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    first[0] = [1.0, 0.0];
    let mut out = Vec::with_capacity(n);
    for &[x, y] in &first {
        out.push([x, y]);
    }
    for &[x, y] in &first {
        out.push([-y, x]);
    }
    for &[x, y] in &first {
        out.push([-x, -y]);
    }
    for &[x, y] in &first {
        out.push([y, -x]);
    }
    out
}

fn icosahedron() -> Vec<Vector> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let mut out = Vec::with_capacity(12);
    for &s in &[1.0, -1.0] {
        for &t in &[g, -g] {
            out.push(Vector::from([0.0, s, t]));
            out.push(Vector::from([s, t, 0.0]));
            out.push(Vector::from([t, 0.0, s]));
        }
    }
    let n = (1.0 + g * g).sqrt();
    out.into_iter().map(|v| v.scale(1.0 / n)).collect()
}

/// Mean of the field over the noise nodes around `x + v`.
pub fn noise_average(field: &GridField, x: &[f64], v: &Vector, cfg: &GameConfig) -> Result<f64> {
    let nodes = noise_nodes(v, cfg, 16)?;
    let mut acc = 0.0;
    for w in &nodes {
        let y: Vec<f64> = (0..x.len()).map(|k| x[k] + v[k] + w[k]).collect();
        acc += field.evaluate(&y)?;
    }
    Ok(acc / nodes.len() as f64)
}

/// Fixed value at a terminal point.
pub fn terminal_value(x: &[f64], cfg: &GameConfig) -> Result<f64> {
    let (lo, hi) = terminal_arc_extremes(x, cfg)?;
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug)]
struct Stencil {
    offsets: Vec<isize>,
    weights: Vec<f64>,
}

#[derive(Clone, Debug)]
struct Plan {
    interior: Vec<usize>,
    /// Runs of consecutive interior indices as `(start, len)`.
    runs: Vec<(usize, usize)>,
    fixed: Vec<(usize, f64)>,
    stencils: Vec<Stencil>,
}

fn build_stencils(
    field: &GridField,
    cfg: &GameConfig,
    moves: &MoveSet,
    k: usize,
) -> Result<Vec<Stencil>> {
    let strides = field.strides();
    let h = field.spacing;
    let d = field.dim;
    moves
        .moves()
        .iter()
        .map(|v| {
            let nodes = noise_nodes(v, cfg, k)?;
            let share = 1.0 / nodes.len() as f64;
            let mut acc: BTreeMap<isize, f64> = BTreeMap::new();
            for w in &nodes {
                let mut base = 0isize;
                let mut frac = [0.0; 3];
                for a in 0..d {
                    let t = (v[a] + w[a]) / h;
                    let i = t.floor();
                    frac[a] = t - i;
                    base += i as isize * strides[a] as isize;
                }
                for corner in 0..(1usize << d) {
                    let mut wt = share;
                    let mut off = base;
                    for a in 0..d {
                        if corner >> a & 1 == 1 {
                            wt *= frac[a];
                            off += strides[a] as isize;
                        } else {
                            wt *= 1.0 - frac[a];
                        }
                    }
                    if wt != 0.0 {
                        *acc.entry(off).or_insert(0.0) += wt;
                    }
                }
            }
            let (offsets, weights) = acc.into_iter().unzip();
            Ok(Stencil { offsets, weights })
        })
        .collect()
}

fn build_plan(field: &GridField, cfg: &GameConfig, moves: &MoveSet, k: usize) -> Result<Plan> {
    let r = cfg.domain_radius;
    let mut interior = Vec::new();
    let mut fixed = Vec::new();
    for i in 0..field.len() {
        let x = field.coords(i);
        let n = norm(&x);
        if n > r * (1.0 + 1e-12) {
            let proj: Vec<f64> = x.iter().map(|c| c * r / n).collect();
            fixed.push((i, terminal_value(&proj, cfg)?));
        } else if is_terminal(&x, cfg) {
            fixed.push((i, terminal_value(&x, cfg)?));
        } else {
            interior.push(i);
        }
    }
    let stencils = build_stencils(field, cfg, moves, k)?;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &i in &interior {
        match runs.last_mut() {
            Some((start, len)) if *start + *len == i => *len += 1,
            _ => runs.push((i, 1)),
        }
    }
    Ok(Plan {
        interior,
        runs,
        fixed,
        stencils,
    })
}

#[inline]
fn stencil_mean(s: &Stencil, u: &[f64], i: usize) -> f64 {
    let base = (i as isize + s.offsets[0]) as usize;
    let u0 = u[base];
    let mut acc = u0;
    for j in 1..s.offsets.len() {
        acc += s.weights[j] * (u[(i as isize + s.offsets[j]) as usize] - u0);
    }
    acc
}

fn update_node(plan: &Plan, u: &[f64], i: usize) -> f64 {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for s in &plan.stencils {
        let a = stencil_mean(s, u, i);
        hi = hi.max(a);
        lo = lo.min(a);
    }
    0.5 * hi + 0.5 * lo
}

/// Updates for one run of consecutive nodes, written move by move so the
/// inner loops run over contiguous memory.
fn update_run(plan: &Plan, u: &[f64], start: usize, len: usize) -> Vec<f64> {
    let mut hi = vec![f64::NEG_INFINITY; len];
    let mut lo = vec![f64::INFINITY; len];
    let mut acc = vec![0.0; len];
    for s in &plan.stencils {
        let at = |off: isize| (start as isize + off) as usize;
        let base = &u[at(s.offsets[0])..at(s.offsets[0]) + len];
        acc.copy_from_slice(base);
        for j in 1..s.offsets.len() {
            let w = s.weights[j];
            let uj = &u[at(s.offsets[j])..at(s.offsets[j]) + len];
            for k in 0..len {
                acc[k] += w * (uj[k] - base[k]);
            }
        }
        for k in 0..len {
            hi[k] = hi[k].max(acc[k]);
            lo[k] = lo[k].min(acc[k]);
        }
    }
    hi.iter().zip(&lo).map(|(a, b)| 0.5 * a + 0.5 * b).collect()
}

/// One sweep; returns the sup-norm change over interior nodes.
fn sweep(plan: &Plan, u: &mut [f64]) -> f64 {
    let src: &[f64] = u;
    let fresh: Vec<Vec<f64>> = plan
        .runs
        .par_iter()
        .map(|&(start, len)| update_run(plan, src, start, len))
        .collect();
    let mut res = 0.0f64;
    for (&(start, _), vals) in plan.runs.iter().zip(&fresh) {
        for (k, &v) in vals.iter().enumerate() {
            res = res.max((v - u[start + k]).abs());
            u[start + k] = v;
        }
    }
    res
}

fn check_lattice(field: &GridField, cfg: &GameConfig) -> Result<()> {
    if field.dim != cfg.d || (field.radius - cfg.domain_radius).abs() > 1e-12 {
        return Err(Error::InvalidConfig(
            "field lattice does not match the game".into(),
        ));
    }
    Ok(())
}

/// One Jacobi sweep of the one-step operator applied to `field`.
pub fn dpp_update(field: &GridField, cfg: &GameConfig, moves: &MoveSet) -> Result<GridField> {
    check_lattice(field, cfg)?;
    let plan = build_plan(field, cfg, moves, 16)?;
    let mut out = field.clone();
    for &(i, v) in &plan.fixed {
        out.values[i] = v;
    }
    for &i in &plan.interior {
        out.values[i] = update_node(&plan, &field.values, i);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub h: f64,
    /// Absolute sup-norm tolerance; `None` means `1e-8 · osc(F)`.
    pub tol: Option<f64>,
    pub max_iter: u64,
    pub moves: Option<MoveSet>,
    /// Circle nodes for the d = 3 noise quadrature.
    pub circle_nodes: usize,
    pub initial: Option<GridField>,
}

impl SolveOptions {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            tol: None,
            max_iter: 1_000_000,
            moves: None,
            circle_nodes: 16,
            initial: None,
        }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = Some(tol);
        self
    }

    pub fn max_iter(mut self, n: u64) -> Self {
        self.max_iter = n;
        self
    }
}

/// Iterate sweeps from the radial extension of the terminal values.
pub fn solve(cfg: &GameConfig, h: f64, tol: f64, max_iter: u64) -> Result<GridField> {
    solve_with(cfg, &SolveOptions::new(h).tol(tol).max_iter(max_iter))
}

pub fn solve_with(cfg: &GameConfig, opts: &SolveOptions) -> Result<GridField> {
    if !(2..=3).contains(&cfg.d) {
        return Err(Error::UnsupportedDimension(
            cfg.d,
            "the lattice solver handles d = 2 or 3",
        ));
    }
    if !(opts.h > 0.0) || opts.h > cfg.eps / 2.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "spacing {} must not exceed eps/2 = {}",
            opts.h,
            cfg.eps / 2.0
        )));
    }
    if let Some(t) = opts.tol {
        if !(t > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
    }
    let moves = match &opts.moves {
        Some(m) => m.clone(),
        None => MoveSet::default_for(cfg.d, cfg.eps)?,
    };
    let mut field = GridField::new(cfg.d, opts.h, cfg.domain_radius)?;
    let plan = build_plan(&field, cfg, &moves, opts.circle_nodes)?;
    for &(i, v) in &plan.fixed {
        field.values[i] = v;
    }
    match &opts.initial {
        Some(init) => {
            check_lattice(init, cfg)?;
            if init.half != field.half || (init.spacing - field.spacing).abs() > 1e-15 {
                return Err(Error::InvalidConfig(
                    "initial field has a different lattice".into(),
                ));
            }
            for &i in &plan.interior {
                field.values[i] = init.values[i];
            }
        }
        None => radial_extension(&mut field, &plan, cfg)?,
    }
    let (lo, hi) = plan
        .fixed
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, v)| {
            (a.min(v), b.max(v))
        });
    let osc = if plan.fixed.is_empty() { 0.0 } else { hi - lo };
    let tol = opts
        .tol
        .unwrap_or(if osc > 0.0 { 1e-8 * osc } else { 1e-12 });

    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        residual = sweep(&plan, &mut field.values);
        iterations += 1;
        history.push(residual);
        if !residual.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite residual at sweep {iterations}"
            )));
        }
        if residual < tol {
            break;
        }
    }
    field.meta = FieldMeta {
        label: "dpp".into(),
        boundary: cfg.boundary.label().to_string(),
        p: cfg.p,
        eps: Some(cfg.eps),
        iterations,
        residual,
        converged: residual < tol,
        residual_history: history,
        ..FieldMeta::default()
    };
    Ok(field)
}

/// Interior node `x != 0` starts at the terminal value of `x / |x|`; the
/// origin starts at the midrange of its axis neighbours.
fn radial_extension(field: &mut GridField, plan: &Plan, cfg: &GameConfig) -> Result<()> {
    let r = cfg.domain_radius;
    let mut origin = None;
    for &i in &plan.interior {
        let x = field.coords(i);
        let n = norm(&x);
        if n == 0.0 {
            origin = Some(i);
            continue;
        }
        let proj: Vec<f64> = x.iter().map(|c| c * r / n).collect();
        field.values[i] = terminal_value(&proj, cfg)?;
    }
    if let Some(o) = origin {
        let strides = field.strides();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in strides {
            for v in [field.values[o + s], field.values[o - s]] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        field.values[o] = 0.5 * (lo + hi);
    }
    Ok(())
}
