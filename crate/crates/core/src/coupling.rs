//! Two coupled games, one started at `x` and one at `y`.
//!
//! In the `x` game player I follows an adversary and player II answers with
//! the counter-strategy; in the `y` game the roles swap. When both intended
//! moves are within `θ0` of the difference line, a single coin drives both
//! games and the `y` noise is the `x` noise carried over by `S′S⁻¹`, where
//! `S` and `S′` rotate `span{Z}` onto the two move lines. Otherwise coins
//! and noises are independent.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{sample_noise, GameConfig};
use crate::geometry::{
    plane_rotation_span_to_span, random_unit, sample_orthogonal_sphere, unit, Vector,
};
use crate::rng::RngStream;
use crate::stats::{Estimate, Moments, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingParams {
    pub theta0: f64,
    pub beta: f64,
    pub eta: f64,
    pub c_lyap: f64,
}

impl CouplingParams {
    /// `θ0 = 0.05`, `β = 1/10`, `η = 2ε`, `C = 6000 (R² + 1)`.
    pub fn for_game(cfg: &GameConfig) -> Self {
        Self {
            theta0: 0.05,
            beta: 0.1,
            eta: 2.0 * cfg.eps,
            c_lyap: 6000.0 * (cfg.noise_radius.powi(2) + 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta0 > 0.0 && self.theta0 < 0.1) {
            return Err(Error::InvalidConfig(format!(
                "theta0 = {} must lie in (0, 0.1)",
                self.theta0
            )));
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "beta = {} must lie in (0, 1/2)",
                self.beta
            )));
        }
        if !(self.eta > 0.0) || !(self.c_lyap > 0.0) {
            return Err(Error::InvalidConfig(
                "eta and the Lyapunov constant must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Player II's answer in the `x` game.
pub fn counter_move_ii(
    u: &Vector,
    z: &Vector,
    params: &CouplingParams,
    eps: f64,
) -> Result<Vector> {
    let zh = unit(z).map_err(|_| Error::Merged)?;
    if let Ok(uh) = unit(u) {
        if zh.dot(&uh) > params.theta0.cos() {
            return Ok(-u);
        }
    }
    Ok(zh.scale(-eps))
}

/// Player I's answer in the `y` game.
pub fn counter_move_i(v: &Vector, z: &Vector, params: &CouplingParams, eps: f64) -> Result<Vector> {
    let zh = unit(z).map_err(|_| Error::Merged)?;
    if let Ok(vh) = unit(v) {
        if -zh.dot(&vh) > params.theta0.cos() {
            return Ok(-v);
        }
    }
    Ok(zh.scale(eps))
}

pub fn is_aligned(u: &Vector, v: &Vector, z: &Vector, theta0: f64) -> Result<bool> {
    let zh = unit(z)?;
    let uh = unit(u)?;
    let vh = unit(v)?;
    let c = theta0.cos();
    Ok(zh.dot(&uh) > c && -zh.dot(&vh) > c)
}

/// Rotation angles `θ1`, `θ2` and the angle `ψ` between the two rotation
/// planes, measured through the in-plane directions orthogonal to `Z`.
pub fn rotation_angles(u: &Vector, v: &Vector, z: &Vector) -> Result<(f64, f64, f64)> {
    let s = plane_rotation_span_to_span(z, u)?;
    let s2 = plane_rotation_span_to_span(z, v)?;
    let psi = if s.is_identity() || s2.is_identity() {
        0.0
    } else {
        let f1 = s.basis().1;
        let f2 = s2.basis().1;
        f1.dot(f2).clamp(-1.0, 1.0).acos()
    };
    Ok((s.angle(), s2.angle(), psi))
}

/// Noise `B ⊥ U` of radius `Rε` and its image `B′ = S′S⁻¹B ⊥ V`.
pub fn coupled_noise_pair(
    u: &Vector,
    v: &Vector,
    z: &Vector,
    cfg: &GameConfig,
    params: &CouplingParams,
    rng: &mut RngStream,
) -> Result<(Vector, Vector)> {
    if !is_aligned(u, v, z, params.theta0)? {
        return Err(Error::NotAligned);
    }
    let s = plane_rotation_span_to_span(z, u)?;
    let s2 = plane_rotation_span_to_span(z, v)?;
    let b = sample_orthogonal_sphere(u, cfg.noise_scale(), rng)?;
    let b2 = s2.apply(&s.apply_inverse(&b));
    Ok((b, b2))
}

/// Random `(U, V, Z)` with both moves strictly inside the alignment cone
/// and lengths in `[ε/2, ε]`.
pub fn random_aligned_config(
    d: usize,
    eps: f64,
    theta0: f64,
    rng: &mut RngStream,
) -> (Vector, Vector, Vector) {
    let zh = random_unit(d, rng);
    let z = zh.scale(0.05 + 0.45 * rng.uniform());
    let cone = |axis: &Vector, rng: &mut RngStream| {
        let a = theta0 * rng.uniform();
        let r = sample_orthogonal_sphere(axis, 1.0, rng).expect("unit axis");
        let len = eps * (0.5 + 0.5 * rng.uniform());
        axis.scale(len * a.cos()).axpy(len * a.sin(), &r)
    };
    let u = cone(&zh, rng);
    let v = cone(&-&zh, rng);
    (u, v, z)
}

pub fn lyapunov(x: &Vector, y: &Vector, z: &Vector, params: &CouplingParams) -> f64 {
    x.norm_sq() + y.norm_sq() + params.c_lyap * z.norm().powf(2.0 * params.beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Merged,
    XEscaped,
    YEscaped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    pub x: Vector,
    pub y: Vector,
    pub z: Vector,
    pub m: f64,
    pub n: u64,
    pub stopped: Option<StopReason>,
}

impl CoupledState {
    pub fn new(x: Vector, y: Vector, params: &CouplingParams) -> Self {
        let z = &x - &y;
        let m = lyapunov(&x, &y, &z, params);
        let mut st = Self {
            x,
            y,
            z,
            m,
            n: 0,
            stopped: None,
        };
        st.stopped = stop_reason(&st, params);
        st
    }
}

fn stop_reason(st: &CoupledState, params: &CouplingParams) -> Option<StopReason> {
    if st.z.norm() < params.eta {
        Some(StopReason::Merged)
    } else if st.x.norm() > 1.0 {
        Some(StopReason::XEscaped)
    } else if st.y.norm() > 1.0 {
        Some(StopReason::YEscaped)
    } else {
        None
    }
}

/// What happened in one coupled step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub aligned: bool,
    /// Coin of the `x` game (true: player I moves).
    pub coin_x: bool,
    /// Coin of the `y` game; equal to `coin_x` on aligned steps.
    pub coin_y: bool,
    pub theta1: f64,
    pub theta2: f64,
    pub psi: f64,
    /// `Z_{n+1} - Z_n`
    pub d: Vector,
    pub z_norm_before: f64,
    /// `|Z_{n+1}|^{2β} - |Z_n|^{2β}`
    pub dz_beta: f64,
    pub dm: f64,
}

/// Strategy of the adversarial player in both games.
pub trait Adversary: Sync {
    /// Intended move for the process at `own`; `z` is always `X - Y`.
    fn propose(
        &self,
        own: &Vector,
        other: &Vector,
        z: &Vector,
        eps: f64,
        rng: &mut RngStream,
    ) -> Vector;
    fn name(&self) -> &'static str;
}

/// Pull toward the nearest boundary point.
pub struct PullOut;

impl Adversary for PullOut {
    fn propose(
        &self,
        own: &Vector,
        _other: &Vector,
        _z: &Vector,
        eps: f64,
        rng: &mut RngStream,
    ) -> Vector {
        match unit(own) {
            Ok(d) => d.scale(eps),
            Err(_) => random_unit(own.dim(), rng).scale(eps),
        }
    }
    fn name(&self) -> &'static str {
        "pull-out"
    }
}

/// A fresh uniform direction every step.
pub struct PullRandom;

impl Adversary for PullRandom {
    fn propose(
        &self,
        own: &Vector,
        _other: &Vector,
        _z: &Vector,
        eps: f64,
        rng: &mut RngStream,
    ) -> Vector {
        random_unit(own.dim(), rng).scale(eps)
    }
    fn name(&self) -> &'static str {
        "pull-random"
    }
}

/// Just outside the alignment cone: angle in `[1.5 θ0, 2 θ0]` from the
/// direction away from the partner, in a random plane.
pub struct AdversarialSpread {
    pub theta0: f64,
}

impl Adversary for AdversarialSpread {
    fn propose(
        &self,
        own: &Vector,
        other: &Vector,
        _z: &Vector,
        eps: f64,
        rng: &mut RngStream,
    ) -> Vector {
        tilted(
            own,
            other,
            self.theta0 * (1.5 + 0.5 * rng.uniform()),
            eps,
            rng,
        )
    }
    fn name(&self) -> &'static str {
        "adversarial-spread"
    }
}

/// Straight away from the partner, always aligned.
pub struct PushApart;

impl Adversary for PushApart {
    fn propose(
        &self,
        own: &Vector,
        other: &Vector,
        _z: &Vector,
        eps: f64,
        rng: &mut RngStream,
    ) -> Vector {
        tilted(own, other, 0.0, eps, rng)
    }
    fn name(&self) -> &'static str {
        "push-apart"
    }
}

/// Away from the partner within half the alignment angle.
pub struct AlignedJitter {
    pub theta0: f64,
}

impl Adversary for AlignedJitter {
    fn propose(
        &self,
        own: &Vector,
        other: &Vector,
        _z: &Vector,
        eps: f64,
        rng: &mut RngStream,
    ) -> Vector {
        tilted(own, other, 0.5 * self.theta0 * rng.uniform(), eps, rng)
    }
    fn name(&self) -> &'static str {
        "aligned-jitter"
    }
}

/// Both processes move by `ε Ẑ`.
pub struct AlongZ;

impl Adversary for AlongZ {
    fn propose(
        &self,
        own: &Vector,
        _other: &Vector,
        z: &Vector,
        eps: f64,
        rng: &mut RngStream,
    ) -> Vector {
        unit(z)
            .map(|d| d.scale(eps))
            .unwrap_or_else(|_| random_unit(own.dim(), rng).scale(eps))
    }
    fn name(&self) -> &'static str {
        "along-z"
    }
}

fn tilted(own: &Vector, other: &Vector, angle: f64, eps: f64, rng: &mut RngStream) -> Vector {
    let d = own.dim();
    let a = unit(&(own - other)).unwrap_or_else(|_| random_unit(d, rng));
    if angle == 0.0 {
        return a.scale(eps);
    }
    let r = sample_orthogonal_sphere(&a, 1.0, rng).expect("unit axis");
    a.scale(eps * angle.cos()).axpy(eps * angle.sin(), &r)
}

/// The adversaries used by the verification experiments.
pub fn adversary_battery(theta0: f64) -> Vec<Box<dyn Adversary>> {
    vec![
        Box::new(PullOut),
        Box::new(PullRandom),
        Box::new(AdversarialSpread { theta0 }),
        Box::new(PushApart),
        Box::new(AlignedJitter { theta0 }),
    ]
}

/// One coupled step. Player I's move `U` in the `x` game and player II's
/// move `V` in the `y` game both come from `adv`.
pub fn coupled_step(
    st: &CoupledState,
    adv: &dyn Adversary,
    cfg: &GameConfig,
    params: &CouplingParams,
    rng: &mut RngStream,
) -> Result<(CoupledState, StepRecord)> {
    if st.stopped.is_some() {
        return Err(Error::Merged);
    }
    let eps = cfg.eps;
    let u = adv.propose(&st.x, &st.y, &st.z, eps, rng);
    let v = adv.propose(&st.y, &st.x, &st.z, eps, rng);
    for w in [&u, &v] {
        if w.norm() > eps * (1.0 + 1e-12) {
            return Err(Error::IllegalMove {
                norm: w.norm(),
                eps,
            });
        }
    }
    let aligned = u.norm() > 0.0 && v.norm() > 0.0 && is_aligned(&u, &v, &st.z, params.theta0)?;
    let (dx, dy, coin_x, coin_y, angles) = if aligned {
        let heads = rng.coin();
        let (b, b2) = coupled_noise_pair(&u, &v, &st.z, cfg, params, rng)?;
        let angles = rotation_angles(&u, &v, &st.z)?;
        let (mx, my) = if heads {
            (u.clone(), v.clone())
        } else {
            (-&u, -&v)
        };
        (&mx + &b, &my + &b2, heads, heads, angles)
    } else {
        let hx = rng.coin();
        let hy = rng.coin();
        let mx = if hx {
            u.clone()
        } else {
            counter_move_ii(&u, &st.z, params, eps)?
        };
        let my = if hy {
            counter_move_i(&v, &st.z, params, eps)?
        } else {
            v.clone()
        };
        let bx = sample_noise(&mx, cfg, rng)?;
        let by = sample_noise(&my, cfg, rng)?;
        (&mx + &bx, &my + &by, hx, hy, (f64::NAN, f64::NAN, f64::NAN))
    };
    let x = &st.x + &dx;
    let y = &st.y + &dy;
    let z = &x - &y;
    let m = lyapunov(&x, &y, &z, params);
    let d = &z - &st.z;
    let zb = |w: &Vector| w.norm().powf(2.0 * params.beta);
    let rec = StepRecord {
        aligned,
        coin_x,
        coin_y,
        theta1: angles.0,
        theta2: angles.1,
        psi: angles.2,
        z_norm_before: st.z.norm(),
        dz_beta: zb(&z) - zb(&st.z),
        dm: m - st.m,
        d,
    };
    let mut next = CoupledState {
        x,
        y,
        z,
        m,
        n: st.n + 1,
        stopped: None,
    };
    next.stopped = stop_reason(&next, params);
    Ok((next, rec))
}

/// The `Z` increments of the heads and tails branches of one aligned step,
/// with noise `B` on heads and `-B` on tails. The two are exact negatives.
pub fn paired_replay(
    st: &CoupledState,
    u: &Vector,
    v: &Vector,
    cfg: &GameConfig,
    params: &CouplingParams,
    rng: &mut RngStream,
) -> Result<(Vector, Vector)> {
    let (b, b2) = coupled_noise_pair(u, v, &st.z, cfg, params, rng)?;
    let heads = &(u + &b) - &(v + &b2);
    let tails = &(&(-u) + &(-&b)) - &(&(-v) + &(-&b2));
    Ok((heads, tails))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Stopped(StopReason),
    /// Step cap hit before the stopping time.
    Capped,
}

#[derive(Clone, Debug)]
pub struct CoupledTrace {
    pub states: Vec<CoupledState>,
    pub steps: Vec<StepRecord>,
    pub status: RunStatus,
}

/// Play until the stopping time or `max_steps`.
pub fn run_coupled(
    x: Vector,
    y: Vector,
    cfg: &GameConfig,
    params: &CouplingParams,
    adv: &dyn Adversary,
    max_steps: u64,
    rng: &mut RngStream,
) -> Result<CoupledTrace> {
    params.validate()?;
    let mut st = CoupledState::new(x, y, params);
    let mut states = vec![st.clone()];
    let mut steps = Vec::new();
    while st.stopped.is_none() {
        if st.n >= max_steps {
            return Ok(CoupledTrace {
                states,
                steps,
                status: RunStatus::Capped,
            });
        }
        let (next, rec) = coupled_step(&st, adv, cfg, params, rng)?;
        st = next;
        states.push(st.clone());
        steps.push(rec);
    }
    let status = RunStatus::Stopped(st.stopped.unwrap());
    Ok(CoupledTrace {
        states,
        steps,
        status,
    })
}

/// `min(1, (C + 2) δ^{2β})`, the escape probability bound from a start in `B_δ`.
pub fn escape_bound(params: &CouplingParams, delta: f64) -> f64 {
    ((params.c_lyap + 2.0) * delta.powf(2.0 * params.beta)).min(1.0)
}

pub fn write_coupled_csv(trace: &CoupledTrace, mut out: impl Write) -> Result<()> {
    let d = trace.states[0].x.dim();
    let mut cols = vec!["step".to_string()];
    cols.extend((1..=d).map(|k| format!("x_{k}")));
    cols.extend((1..=d).map(|k| format!("y_{k}")));
    cols.extend(
        [
            "z_norm", "m", "aligned", "coin", "coin_y", "theta1", "theta2", "psi",
        ]
        .map(String::from),
    );
    writeln!(out, "{}", cols.join(","))?;
    for (n, st) in trace.states.iter().enumerate() {
        let mut row = vec![n.to_string()];
        row.extend(st.x.iter().chain(st.y.iter()).map(|c| format!("{c:.17e}")));
        row.push(format!("{:.17e}", st.z.norm()));
        row.push(format!("{:.17e}", st.m));
        match n.checked_sub(1).map(|k| &trace.steps[k]) {
            Some(r) => {
                row.push((r.aligned as u8).to_string());
                row.push((r.coin_x as u8).to_string());
                row.push((r.coin_y as u8).to_string());
                for a in [r.theta1, r.theta2, r.psi] {
                    row.push(if a.is_nan() {
                        String::new()
                    } else {
                        format!("{a:.17e}")
                    });
                }
            }
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Ratio test of `E[((B′-B)·Ẑ)²] >= 3/4 E[|B′-B|²]`.
#[derive(Clone, Debug, Serialize)]
pub struct AlignmentReport {
    pub normal: f64,
    pub total: f64,
    pub ratio: f64,
    pub ci: f64,
    pub threshold: f64,
    pub samples: usize,
    pub verdict: Verdict,
}

/// CI half widths are three standard errors throughout this module.
pub const CI_SIGMAS: f64 = 3.0;

pub fn verify_alignment_inequality(
    u: &Vector,
    v: &Vector,
    z: &Vector,
    cfg: &GameConfig,
    params: &CouplingParams,
    samples: usize,
    rng: &mut RngStream,
) -> Result<AlignmentReport> {
    if cfg.d < 3 {
        return Err(Error::UnsupportedDimension(
            cfg.d,
            "the noise coupling degenerates in the plane",
        ));
    }
    if samples == 0 {
        return Err(Error::EmptyExperiment);
    }
    let zh = unit(z)?;
    let mut a = Vec::with_capacity(samples);
    let mut b = Vec::with_capacity(samples);
    for _ in 0..samples {
        let (n1, n2) = coupled_noise_pair(u, v, z, cfg, params, rng)?;
        let diff = &n2 - &n1;
        a.push(diff.dot(&zh).powi(2));
        b.push(diff.norm_sq());
    }
    let ea = Estimate::from_samples(&a);
    let eb = Estimate::from_samples(&b);
    let threshold = 0.75;
    if eb.mean == 0.0 {
        return Ok(AlignmentReport {
            normal: ea.mean,
            total: 0.0,
            ratio: 1.0,
            ci: 0.0,
            threshold,
            samples,
            verdict: Verdict::Pass,
        });
    }
    let ratio = ea.mean / eb.mean;
    // delta method: Var(a - r b) / (n mean_b^2)
    let resid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - ratio * y).collect();
    let se = Estimate::from_samples(&resid).se / eb.mean;
    let ci = CI_SIGMAS * se;
    let verdict = if ratio >= threshold - ci {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(AlignmentReport {
        normal: ea.mean,
        total: eb.mean,
        ratio,
        ci,
        threshold,
        samples,
        verdict,
    })
}

/// One stratified mean against its threshold, `PASS` iff mean <= threshold + CI.
#[derive(Clone, Debug, Serialize)]
pub struct StratumTest {
    pub quantity: String,
    pub stratum: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub ci: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl StratumTest {
    fn new(quantity: &str, stratum: &str, m: &Moments, threshold: f64) -> Option<Self> {
        if m.n < 2 {
            return None;
        }
        let e = m.estimate();
        let ci = CI_SIGMAS * e.se;
        let verdict = if e.mean <= threshold + ci {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Some(Self {
            quantity: quantity.into(),
            stratum: stratum.into(),
            n: e.n,
            mean: e.mean,
            se: e.se,
            ci,
            threshold,
            verdict,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecrementReport {
    pub tests: Vec<StratumTest>,
    /// Strata without enough steps.
    pub skipped: Vec<String>,
    /// Mean `Z` increment on aligned steps, per coordinate.
    pub aligned_drift: Vec<Estimate>,
    pub verdict: Verdict,
}

/// Sufficient statistics of the stratified step means.
#[derive(Clone, Debug, Default)]
pub struct DecrementStats {
    pub aligned_z: Moments,
    pub unaligned_z: Moments,
    pub aligned_m: Moments,
    pub unaligned_m: Moments,
    pub drift: Vec<Moments>,
}

impl DecrementStats {
    pub fn push(&mut self, r: &StepRecord) {
        if self.drift.is_empty() {
            self.drift = vec![Moments::default(); r.d.dim()];
        }
        if r.aligned {
            self.aligned_z.push(r.dz_beta);
            self.aligned_m.push(r.dm);
            for (m, c) in self.drift.iter_mut().zip(r.d.iter()) {
                m.push(*c);
            }
        } else {
            self.unaligned_z.push(r.dz_beta);
            self.unaligned_m.push(r.dm);
        }
    }

    pub fn merge(&mut self, other: &DecrementStats) {
        for (a, b) in [
            (&mut self.aligned_z, &other.aligned_z),
            (&mut self.unaligned_z, &other.unaligned_z),
            (&mut self.aligned_m, &other.aligned_m),
            (&mut self.unaligned_m, &other.unaligned_m),
        ] {
            a.n += b.n;
            a.sum += b.sum;
            a.sum_sq += b.sum_sq;
        }
        if self.drift.is_empty() {
            self.drift = other.drift.clone();
        } else {
            for (a, b) in self.drift.iter_mut().zip(&other.drift) {
                a.n += b.n;
                a.sum += b.sum;
                a.sum_sq += b.sum_sq;
            }
        }
    }

    pub fn report(&self, eps: f64) -> DecrementReport {
        let mut tests = Vec::new();
        let mut skipped = Vec::new();
        let mut all_m = self.aligned_m;
        all_m.n += self.unaligned_m.n;
        all_m.sum += self.unaligned_m.sum;
        all_m.sum_sq += self.unaligned_m.sum_sq;
        let specs = [
            ("dz_beta", "aligned", &self.aligned_z, -eps * eps / 40.0),
            ("dz_beta", "unaligned", &self.unaligned_z, -eps / 1000.0),
            ("dm", "aligned", &self.aligned_m, 0.0),
            ("dm", "unaligned", &self.unaligned_m, 0.0),
            ("dm", "all", &all_m, 0.0),
        ];
        for (q, s, m, thr) in specs {
            match StratumTest::new(q, s, m, thr) {
                Some(t) => tests.push(t),
                None => skipped.push(format!("{q}/{s}: {} steps, skipped", m.n)),
            }
        }
        let verdict = if tests.iter().all(|t| t.verdict == Verdict::Pass) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        let aligned_drift = self
            .drift
            .iter()
            .filter(|m| m.n > 1)
            .map(|m| m.estimate())
            .collect();
        DecrementReport {
            tests,
            skipped,
            aligned_drift,
            verdict,
        }
    }
}

/// Stratified decrement tests over all pre-stopping steps of `traces`.
pub fn verify_decrements(traces: &[CoupledTrace], eps: f64) -> DecrementReport {
    let mut stats = DecrementStats::default();
    for t in traces {
        for r in &t.steps {
            stats.push(r);
        }
    }
    stats.report(eps)
}

/// Settings of a decrement experiment.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentPlan {
    /// Steps wanted per stratum.
    pub target_steps: usize,
    /// Starting points are drawn uniformly from the ball of this radius.
    pub start_radius: f64,
    pub max_steps_per_run: u64,
    pub batch: usize,
    pub max_runs: usize,
    /// Give up on rare strata once this many steps are collected in total.
    pub max_total_steps: usize,
}

impl ExperimentPlan {
    pub fn new(target_steps: usize) -> Self {
        Self {
            target_steps,
            start_radius: 0.5,
            max_steps_per_run: 1_000_000,
            batch: 8,
            max_runs: 100_000,
            max_total_steps: 20 * target_steps,
        }
    }
}

fn uniform_in_ball(d: usize, r: f64, rng: &mut RngStream) -> Vector {
    let dir = random_unit(d, rng);
    dir.scale(r * rng.uniform().powf(1.0 / d as f64))
}

/// Runs coupled games from random starts until every stratum the adversary
/// reaches holds `target_steps` steps. Runs go in fixed-size batches with
/// streams `(seed, run)`, so results do not depend on the thread count.
pub fn decrement_experiment(
    cfg: &GameConfig,
    params: &CouplingParams,
    adv: &dyn Adversary,
    plan: &ExperimentPlan,
    seed: u64,
) -> Result<(DecrementStats, usize)> {
    params.validate()?;
    let mut stats = DecrementStats::default();
    let mut runs = 0;
    while runs < plan.max_runs {
        let batch: Vec<Result<DecrementStats>> = (runs..runs + plan.batch)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::derive(seed, 7, i as u64);
                let (x, y) = loop {
                    let x = uniform_in_ball(cfg.d, plan.start_radius, &mut rng);
                    let y = uniform_in_ball(cfg.d, plan.start_radius, &mut rng);
                    if (&x - &y).norm() > 2.0 * params.eta {
                        break (x, y);
                    }
                };
                let tr = run_coupled(x, y, cfg, params, adv, plan.max_steps_per_run, &mut rng)?;
                let mut s = DecrementStats::default();
                for r in &tr.steps {
                    s.push(r);
                }
                Ok(s)
            })
            .collect();
        for s in batch {
            stats.merge(&s?);
        }
        runs += plan.batch;
        let a = stats.aligned_z.n;
        let u = stats.unaligned_z.n;
        let done = |n: usize| n == 0 || n >= plan.target_steps;
        if (a + u) >= plan.max_total_steps || ((a + u) >= plan.target_steps && done(a) && done(u)) {
            break;
        }
    }
    Ok((stats, runs))
}
