//! The ε-step tug-of-war with noise on a ball.
//!
//! At every step a fair coin picks a mover. Away from the boundary the mover
//! picks `v` with `|v| <= ε` and the position jumps by `v + w`, where `w` is
//! uniform on the radius `Rε` sphere orthogonal to `v` and
//! `R = sqrt((d - 1) / (p - 1))`. Once the ball of radius `(R + 1)ε` around
//! the position meets the boundary sphere, the mover picks the exit point
//! from that cap instead and receives `F` there.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{random_unit, sample_orthogonal_sphere, unit, Vector};
use crate::rng::RngStream;

/// Boundary payoff `F` on the sphere, evaluated at unit directions.
#[derive(Clone)]
pub struct BoundaryData {
    label: String,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl BoundaryData {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c)
    }

    /// `a . x + b`
    pub fn affine(a: Vec<f64>, b: f64) -> Self {
        let label = format!("affine({a:?},{b})");
        Self::new(label, move |x| {
            a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b
        })
    }

    /// `cos θ`, i.e. the first coordinate of the unit direction.
    pub fn cosine() -> Self {
        Self::new("cos", |x| x[0])
    }

    /// Planar mode `cos(kθ + φ)`.
    pub fn planar_mode(k: u32, phase: f64) -> Self {
        Self::new(format!("mode({k},{phase})"), move |x| {
            let th = x[1].atan2(x[0]);
            (k as f64 * th + phase).cos()
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, direction: &[f64]) -> f64 {
        (self.f)(direction)
    }

    /// Sum with a constant.
    pub fn shifted(&self, c: f64) -> Self {
        let f = self.f.clone();
        Self::new(format!("{}+{c}", self.label), move |x| f(x) + c)
    }

    pub fn negated(&self) -> Self {
        let f = self.f.clone();
        Self::new(format!("-({})", self.label), move |x| -f(x))
    }
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryData")
            .field("label", &self.label)
            .finish()
    }
}

/// Parameters of one game.
#[derive(Clone, Debug)]
pub struct GameConfig {
    pub p: f64,
    pub d: usize,
    pub eps: f64,
    pub noise_radius: f64,
    pub boundary: BoundaryData,
    pub seed: u64,
    /// Radius of the ball the game is played in (1 unless stated).
    pub domain_radius: f64,
    /// Quadrature points per direction on terminal caps.
    pub arc_points: usize,
    pub max_steps: u64,
}

impl GameConfig {
    pub fn new(p: f64, d: usize, eps: f64, boundary: BoundaryData, seed: u64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidConfig(format!("p must exceed 1, got {p}")));
        }
        if d < 2 {
            return Err(Error::InvalidConfig(format!(
                "dimension must be at least 2, got {d}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step bound must be positive, got {eps}"
            )));
        }
        let noise_radius = ((d as f64 - 1.0) / (p - 1.0)).sqrt();
        let cfg = Self {
            p,
            d,
            eps,
            noise_radius,
            boundary,
            seed,
            domain_radius: 1.0,
            arc_points: 64,
            max_steps: 10_000_000,
        };
        cfg.check_interior()?;
        Ok(cfg)
    }

    pub fn with_domain_radius(mut self, r: f64) -> Result<Self> {
        self.domain_radius = r;
        self.check_interior()?;
        Ok(self)
    }

    pub fn with_arc_points(mut self, n: usize) -> Self {
        self.arc_points = n.max(2);
        self
    }

    pub fn with_max_steps(mut self, n: u64) -> Self {
        self.max_steps = n;
        self
    }

    fn check_interior(&self) -> Result<()> {
        if self.terminal_margin() >= self.domain_radius {
            return Err(Error::InvalidConfig(format!(
                "(R+1)eps = {} leaves no interior in a ball of radius {}",
                self.terminal_margin(),
                self.domain_radius
            )));
        }
        Ok(())
    }

    /// `(R + 1) ε`
    pub fn terminal_margin(&self) -> f64 {
        (self.noise_radius + 1.0) * self.eps
    }

    /// `R ε`, the noise magnitude.
    pub fn noise_scale(&self) -> f64 {
        self.noise_radius * self.eps
    }
}

/// True when the open ball of radius `(R+1)ε` around `x` meets the boundary.
pub fn is_terminal(x: &[f64], cfg: &GameConfig) -> bool {
    crate::geometry::norm(x) > cfg.domain_radius - cfg.terminal_margin()
}

/// Quadrature points on the cap `B(x, (R+1)ε) ∩ ∂B` with their payoffs.
pub fn terminal_arc_points(x: &[f64], cfg: &GameConfig) -> Result<Vec<(Vector, f64)>> {
    if !is_terminal(x, cfg) {
        return Err(Error::NotTerminal);
    }
    let r = cfg.domain_radius;
    let rho = cfg.terminal_margin();
    let nx = crate::geometry::norm(x);
    let axis = unit(&Vector::from(x))?;
    let cos_a = ((r * r + nx * nx - rho * rho) / (2.0 * r * nx)).clamp(-1.0, 1.0);
    let half = cos_a.acos();
    let dirs = cap_directions(&axis, half, cfg.arc_points);
    Ok(dirs
        .into_iter()
        .map(|u| {
            let val = cfg.boundary.eval(&u);
            (u.scale(r), val)
        })
        .collect())
}

/// Unit directions within angle `half` of `axis`.
fn cap_directions(axis: &Vector, half: f64, n: usize) -> Vec<Vector> {
    let d = axis.dim();
    if d == 2 {
        // odd count, so the cap center is a node
        let n = 2 * (n / 2) + 1;
        let phi = axis[1].atan2(axis[0]);
        return (0..n)
            .map(|k| {
                let t = phi + half * (-1.0 + 2.0 * k as f64 / (n - 1) as f64);
                Vector::from([t.cos(), t.sin()])
            })
            .collect();
    }
    let frame = orthonormal_complement(axis);
    let n_polar = (n / 4).max(4);
    let mut out = vec![axis.clone()];
    if d == 3 {
        let n_az = n / 2;
        for i in 1..n_polar {
            let t = half * i as f64 / (n_polar - 1) as f64;
            for j in 0..n_az {
                let a = std::f64::consts::TAU * j as f64 / n_az as f64;
                let dir = axis
                    .scale(t.cos())
                    .axpy(t.sin() * a.cos(), &frame[0])
                    .axpy(t.sin() * a.sin(), &frame[1]);
                out.push(dir);
            }
        }
    } else {
        for i in 1..n_polar {
            let t = half * i as f64 / (n_polar - 1) as f64;
            for f in &frame {
                out.push(axis.scale(t.cos()).axpy(t.sin(), f));
                out.push(axis.scale(t.cos()).axpy(-t.sin(), f));
            }
        }
    }
    out
}

/// Orthonormal basis of `axis`-perp via Gram-Schmidt on the standard basis.
pub fn orthonormal_complement(axis: &Vector) -> Vec<Vector> {
    let d = axis.dim();
    let mut basis = vec![axis.clone()];
    for k in 0..d {
        let mut v = Vector::basis(d, k);
        for b in &basis {
            v = v.axpy(-v.dot(b), b);
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v.scale(1.0 / n));
        }
        if basis.len() == d {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Infimum and supremum of `F` over the terminal cap around `x`.
pub fn terminal_arc_extremes(x: &[f64], cfg: &GameConfig) -> Result<(f64, f64)> {
    let pts = terminal_arc_points(x, cfg)?;
    Ok(pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| {
            (lo.min(*v), hi.max(*v))
        }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Player {
    /// The maximizer.
    One,
    /// The minimizer.
    Two,
}

/// A (stateless) strategy for one player.
pub trait Strategy: Sync {
    /// Interior move, `|v| <= ε`.
    fn choose_move(&self, x: &Vector, cfg: &GameConfig, rng: &mut RngStream) -> Vector;

    /// Index of the exit point among terminal cap candidates.
    fn choose_boundary(&self, candidates: &[(Vector, f64)], player: Player) -> usize {
        let cmp =
            |a: &&(usize, &(Vector, f64)), b: &&(usize, &(Vector, f64))| a.1 .1.total_cmp(&b.1 .1);
        let it = candidates.iter().enumerate().collect::<Vec<_>>();
        let best = match player {
            Player::One => it.iter().max_by(cmp),
            Player::Two => it.iter().min_by(cmp),
        };
        best.map(|(i, _)| *i).unwrap_or(0)
    }
}

/// Always pushes by ε in a fixed direction.
#[derive(Clone, Debug)]
pub struct PullDirection(pub Vector);

impl Strategy for PullDirection {
    fn choose_move(&self, _x: &Vector, cfg: &GameConfig, _rng: &mut RngStream) -> Vector {
        unit(&self.0)
            .map(|u| u.scale(cfg.eps))
            .unwrap_or_else(|_| Vector::zeros(cfg.d))
    }
}

/// Always plays `v = 0`.
#[derive(Clone, Copy, Debug)]
pub struct Idle;

impl Strategy for Idle {
    fn choose_move(&self, x: &Vector, _cfg: &GameConfig, _rng: &mut RngStream) -> Vector {
        Vector::zeros(x.dim())
    }
}

/// Moves by ε toward a target point.
#[derive(Clone, Debug)]
pub struct PullToward(pub Vector);

impl Strategy for PullToward {
    fn choose_move(&self, x: &Vector, cfg: &GameConfig, _rng: &mut RngStream) -> Vector {
        match unit(&(&self.0 - x)) {
            Ok(u) => u.scale(cfg.eps),
            Err(_) => Vector::zeros(cfg.d),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameState {
    pub position: Vector,
    pub step: u64,
    pub terminal: bool,
    pub payoff: Option<f64>,
}

impl GameState {
    pub fn start(x0: Vector, cfg: &GameConfig) -> Self {
        let terminal = is_terminal(&x0, cfg);
        Self {
            position: x0,
            step: 0,
            terminal,
            payoff: None,
        }
    }
}

/// Noise for move `v`; for `v = 0` the orthogonal sphere is taken around a
/// uniformly random direction.
pub fn sample_noise(v: &Vector, cfg: &GameConfig, rng: &mut RngStream) -> Result<Vector> {
    let radius = cfg.noise_scale();
    if v.norm() == 0.0 {
        let dir = random_unit(cfg.d, rng);
        return sample_orthogonal_sphere(&dir, radius, rng);
    }
    sample_orthogonal_sphere(v, radius, rng)
}

/// One interior step `X <- X + v + w`.
pub fn step(
    state: &GameState,
    mover_move: &Vector,
    cfg: &GameConfig,
    rng: &mut RngStream,
) -> Result<GameState> {
    if state.terminal {
        return Err(Error::InvalidConfig(
            "step called on a terminal state".into(),
        ));
    }
    let n = mover_move.norm();
    if n > cfg.eps * (1.0 + 1e-12) {
        return Err(Error::IllegalMove {
            norm: n,
            eps: cfg.eps,
        });
    }
    let w = sample_noise(mover_move, cfg, rng)?;
    let mut position = &state.position + mover_move;
    position += &w;
    let terminal = is_terminal(&position, cfg);
    Ok(GameState {
        position,
        step: state.step + 1,
        terminal,
        payoff: None,
    })
}

/// Positions, coins (true = player I won) and the final payoff of one game.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub positions: Vec<Vector>,
    pub coins: Vec<bool>,
    pub payoff: f64,
}

/// Play one game to termination.
pub fn run_game(
    s1: &dyn Strategy,
    s2: &dyn Strategy,
    x0: Vector,
    cfg: &GameConfig,
    rng: &mut RngStream,
) -> Result<Trace> {
    if crate::geometry::norm(&x0) > cfg.domain_radius - cfg.terminal_margin() {
        return Err(Error::InvalidConfig(
            "start point must lie inside the terminal margin".into(),
        ));
    }
    let mut state = GameState::start(x0, cfg);
    let mut positions = vec![state.position.clone()];
    let mut coins = Vec::new();
    loop {
        let heads = rng.coin();
        coins.push(heads);
        let (mover, who) = if heads {
            (s1, Player::One)
        } else {
            (s2, Player::Two)
        };
        if state.terminal {
            let cands = terminal_arc_points(&state.position, cfg)?;
            let k = mover.choose_boundary(&cands, who).min(cands.len() - 1);
            let (exit, payoff) = cands[k].clone();
            positions.push(exit);
            return Ok(Trace {
                positions,
                coins,
                payoff,
            });
        }
        if state.step >= cfg.max_steps {
            return Err(Error::NonTermination(state.step));
        }
        let v = mover.choose_move(&state.position, cfg, rng);
        state = step(&state, &v, cfg, rng)?;
        positions.push(state.position.clone());
    }
}

/// Independent rollouts, rollout `i` driven by stream `(seed, i)`.
pub fn run_games(
    s1: &dyn Strategy,
    s2: &dyn Strategy,
    x0: &Vector,
    cfg: &GameConfig,
    rollouts: usize,
) -> Vec<Result<Trace>> {
    (0..rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::derive(cfg.seed, 1, i as u64);
            run_game(s1, s2, x0.clone(), cfg, &mut rng)
        })
        .collect()
}

/// CSV with columns `rollout, step, x_1..x_d, coin`. The coin on row `n`
/// decided the move into position `n`; row 0 has an empty coin.
pub fn write_traces_csv(traces: &[Trace], mut out: impl Write) -> Result<()> {
    let d = traces.first().map(|t| t.positions[0].dim()).unwrap_or(0);
    let mut header = String::from("rollout,step");
    for k in 1..=d {
        header.push_str(&format!(",x_{k}"));
    }
    header.push_str(",coin");
    writeln!(out, "{header}")?;
    for (r, t) in traces.iter().enumerate() {
        for (n, x) in t.positions.iter().enumerate() {
            let coords: Vec<String> = x.iter().map(|c| format!("{c:.17e}")).collect();
            let coin = if n == 0 {
                String::new()
            } else {
                (t.coins[n - 1] as u8).to_string()
            };
            writeln!(out, "{r},{n},{},{coin}", coords.join(","))?;
        }
    }
    Ok(())
}
