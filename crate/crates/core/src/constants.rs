//! Closed-form constants of the Hölder-to-Harnack argument.
//!
//! Everything that can overflow is returned as a natural logarithm.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::GridField;
use crate::geometry::{norm, Vector};

/// Hypotheses of the iteration lemma: oscillation decay
/// `osc(u, B_r) <= A (r/R)^γ osc(u, B_R)` and mild growth
/// `inf_{B_r} u <= C r^{-λ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HolderParams {
    pub a: f64,
    pub gamma: f64,
    pub c_growth: f64,
    pub lambda: f64,
}

impl HolderParams {
    pub fn new(a: f64, gamma: f64, c_growth: f64, lambda: f64) -> Result<Self> {
        if !(a >= 1.0) || !(gamma > 0.0 && gamma <= 1.0) || !(c_growth > 0.0) || !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need A >= 1, gamma in (0, 1], C > 0, lambda > 0; got ({a}, {gamma}, {c_growth}, {lambda})"
            )));
        }
        Ok(Self {
            a,
            gamma,
            c_growth,
            lambda,
        })
    }

    /// `δ = (4A)^{-1/γ}`
    pub fn delta(&self) -> f64 {
        (4.0 * self.a).powf(-1.0 / self.gamma)
    }
}

/// `ln(4C) + λ(ln(4A)/γ + 2 ln(2λ))`
pub fn ln_lemma_bound(hp: &HolderParams) -> f64 {
    let l = hp.lambda;
    (4.0 * hp.c_growth).ln() + l * (4.0 * hp.a).ln() / hp.gamma + 2.0 * l * (2.0 * l).ln()
}

/// `4C (4A)^{λ/γ} (2λ)^{2λ}`, the bound on `sup_{B_1} u`.
/// Direct powers keep integer cases exact; use `ln_lemma_bound` when this overflows.
pub fn lemma_bound(hp: &HolderParams) -> f64 {
    let l = hp.lambda;
    4.0 * hp.c_growth * (4.0 * hp.a).powf(l / hp.gamma) * (2.0 * l).powf(2.0 * l)
}

/// Hölder constant of the oscillation estimate, `(10⁴ d/(p-1)) δ^{1/5}`.
pub fn holder_bound(delta: f64, p: f64, d: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) || !(p > 1.0) {
        return Err(Error::InvalidConfig(format!(
            "need 0 < delta < 1 and p > 1, got delta={delta}, p={p}"
        )));
    }
    Ok(holder_a(p, d) * delta.powf(HOLDER_GAMMA))
}

pub const HOLDER_GAMMA: f64 = 0.2;

/// `A = 10⁴ d/(p-1)`
pub fn holder_a(p: f64, d: usize) -> f64 {
    1e4 * d as f64 / (p - 1.0)
}

/// `(C, λ) = (2^{d/(p-1)}, (d-p)/(p-1))` from the fundamental solution.
pub fn mild_growth_params(p: f64, d: usize) -> Result<(f64, f64)> {
    if !(p > 1.0) {
        return Err(Error::InvalidConfig(format!("p = {p} must exceed 1")));
    }
    if p >= d as f64 {
        return Err(Error::BarrierRegime { p, d });
    }
    let x = d as f64 / (p - 1.0);
    Ok((2f64.powf(x), (d as f64 - p) / (p - 1.0)))
}

/// `(|x-z|^{-λ} - 3^{-λ}) / (|z|^{-λ} - 3^{-λ})`
pub fn barrier_eval(x: &[f64], z: &[f64], lambda: f64) -> Result<f64> {
    let r: f64 = x
        .iter()
        .zip(z)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let rz = norm(z);
    if r == 0.0 || rz == 0.0 {
        return Err(Error::DegenerateQuery);
    }
    let outer = 3f64.powf(-lambda);
    Ok((r.powf(-lambda) - outer) / (rz.powf(-lambda) - outer))
}

/// `ln H_5(p, d)`: the lemma bound with the Hölder and mild growth inputs.
pub fn harnack_h5(p: f64, d: usize) -> Result<f64> {
    let (c, lambda) = mild_growth_params(p, d)?;
    let hp = HolderParams::new(holder_a(p, d), HOLDER_GAMMA, c, lambda)?;
    Ok(ln_lemma_bound(&hp))
}

/// Centers `x_n` and distances `d_n = (5/4)^n (R - |x_0|)` to `∂B_R`, up
/// to the first `N` with `(5/4) d_N > R`.
pub fn chain_construct(x0: &Vector, r: f64) -> Result<Vec<(Vector, f64)>> {
    if !(r > 1.0) {
        return Err(Error::InvalidConfig(format!(
            "outer radius {r} must exceed 1"
        )));
    }
    if !(x0.norm() < 1.0) {
        return Err(Error::OutsideDomain);
    }
    let mut d = r - x0.norm();
    let mut out = vec![(x0.clone(), d)];
    while 1.25 * d <= r {
        let next = 1.25 * d;
        let x = out.last().unwrap().0.scale((r - next) / (r - d));
        out.push((x, next));
        d = next;
    }
    Ok(out)
}

/// `ln(1 + e^s)` without overflow.
fn ln_1p_exp(s: f64) -> f64 {
    if s > 30.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Log of the Harnack constant between `B_1` and `B_R`.
pub fn harnack_general_r(r: f64, p: f64, d: usize) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::InvalidConfig(format!(
            "outer radius {r} must exceed 1"
        )));
    }
    let h5 = harnack_h5(p, d)?;
    if r < 5.0 {
        Ok(5.0 * (r / (r - 1.0)).ln() * h5)
    } else {
        Ok(ln_1p_exp(
            holder_a(p, d).ln() + HOLDER_GAMMA * (5.0 / r).ln() + h5,
        ))
    }
}

/// Shapes of `ln H` for three routes, all with unit front constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodComparison {
    pub p: f64,
    pub d: usize,
    /// `d/(p-1)`
    pub x: f64,
    /// `x ln x`
    pub s1: f64,
    /// `x²`
    pub s2: f64,
    /// `2^d`
    pub s3: f64,
    /// Shapes only separate once `x > e`.
    pub meaningful: bool,
    pub ordered: bool,
    /// Smallest `d` from which `s1 < s2 < s3` holds on the scanned range.
    pub crossover_d: Option<usize>,
}

fn shapes(p: f64, d: usize) -> (f64, f64, f64, f64) {
    let x = d as f64 / (p - 1.0);
    (x, x * x.ln(), x * x, 2f64.powi(d as i32))
}

const CROSSOVER_SCAN: usize = 1000;

pub fn compare_methods(p: f64, d: usize) -> Result<MethodComparison> {
    if !(p > 1.0) || d < 2 {
        return Err(Error::InvalidConfig(format!(
            "need p > 1 and d >= 2, got p={p}, d={d}"
        )));
    }
    let (x, s1, s2, s3) = shapes(p, d);
    let ord = |d| {
        let (_, a, b, c) = shapes(p, d);
        a < b && b < c
    };
    let crossover_d = (2..=CROSSOVER_SCAN).rev().take_while(|&k| ord(k)).last();
    Ok(MethodComparison {
        p,
        d,
        x,
        s1,
        s2,
        s3,
        meaningful: x > std::f64::consts::E,
        ordered: s1 < s2 && s2 < s3,
        crossover_d,
    })
}

/// One `(p, d, R)` line of the constants table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantRow {
    pub p: f64,
    pub d: usize,
    pub r: f64,
    /// `None` outside the barrier regime `p < d`.
    pub log_bound_paper: Option<f64>,
    pub log_bound_lps: f64,
    pub log_log_bound_moser: f64,
    /// Chain length from the worst start on the unit sphere.
    pub chain_length: usize,
    pub ordering: String,
    pub note: String,
}

pub fn constant_row(p: f64, d: usize, r: f64) -> Result<ConstantRow> {
    let cmp = compare_methods(p, d)?;
    let (log_bound_paper, note) = match harnack_general_r(r, p, d) {
        Ok(v) => (Some(v), String::new()),
        Err(e @ Error::BarrierRegime { .. }) => (None, e.to_string()),
        Err(e) => return Err(e),
    };
    let x0 = Vector::basis(d, 0).scale(1.0 - 1e-12);
    let chain_length = chain_construct(&x0, r)?.len() - 1;
    let ordering = if !cmp.meaningful {
        "flagged: d/(p-1) <= e".to_string()
    } else {
        let mut named = [("paper", cmp.s1), ("lps", cmp.s2), ("moser", cmp.s3)];
        named.sort_by(|a, b| a.1.total_cmp(&b.1));
        named.map(|n| n.0).join("<")
    };
    Ok(ConstantRow {
        p,
        d,
        r,
        log_bound_paper,
        log_bound_lps: cmp.s2,
        log_log_bound_moser: d as f64 * 2f64.ln(),
        chain_length,
        ordering,
        note,
    })
}

/// Trace of the argmax chain `x_{k+1} = argmax_{B̄_{R_k}(x_k)} u`, `R_k = 1/k²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoublingTrace {
    pub centers: Vec<Vec<f64>>,
    pub maxima: Vec<f64>,
    /// First `k` (1-based) with `M_{k+1} < 2 M_k`.
    pub first_violation: Option<usize>,
    /// Whether `M_1 >= L`, the hypothesis the doubling would follow from.
    pub above_level: bool,
    pub truncated: Option<String>,
    /// `δ = (4A)^{-1/γ}` of the oscillation hypothesis.
    pub delta: f64,
}

const DOUBLING_STEPS: usize = 60;

pub fn doubling_diagnostic(
    field: &GridField,
    hp: &HolderParams,
    level: f64,
) -> Result<DoublingTrace> {
    if field.radius < 2.0 {
        return Err(Error::InvalidConfig(format!(
            "field radius {} is below 2",
            field.radius
        )));
    }
    let n = field.len();
    let mut x = vec![0.0; field.dim];
    let mut centers = Vec::new();
    let mut maxima = Vec::new();
    let mut truncated = None;
    for k in 1..=DOUBLING_STEPS {
        let rk = 1.0 / (k * k) as f64;
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if !field.in_ball(i) {
                continue;
            }
            let c = field.coords(i);
            let dist: f64 = c
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist <= rk + 1e-12 && best.is_none_or(|(v, _)| field.values[i] > v) {
                best = Some((field.values[i], i));
            }
        }
        let Some((m, i)) = best else {
            truncated = Some(format!("no lattice node within R_{k} = {rk} of the center"));
            break;
        };
        centers.push(x.clone());
        maxima.push(m);
        x = field.coords(i);
        if norm(&x) + rk > field.radius {
            truncated = Some(format!("chain left the field at k = {k}"));
            break;
        }
    }
    let first_violation = maxima
        .windows(2)
        .position(|w| w[1] < 2.0 * w[0])
        .map(|k| k + 1);
    Ok(DoublingTrace {
        above_level: maxima.first().is_some_and(|&m| m >= level),
        centers,
        maxima,
        first_violation,
        truncated,
        delta: hp.delta(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemma_bound_examples() {
        let hp = HolderParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(lemma_bound(&hp), 64.0);
        let tiny = HolderParams::new(7.0, 0.5, 3.0, 1e-12).unwrap();
        assert!((lemma_bound(&tiny) - 12.0).abs() < 1e-9);
        assert!(HolderParams::new(0.5, 1.0, 1.0, 1.0).is_err());
        assert!(HolderParams::new(1.0, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn lemma_bound_at_three_dimensional_inputs() {
        // ln(32) + 5 ln(1.2e5) + 2 ln 2, summed in a different order
        let hp = HolderParams::new(3e4, 0.2, 8.0, 1.0).unwrap();
        let want = 2f64.ln() * 7.0 + 5.0 * 120000f64.ln();
        assert!((ln_lemma_bound(&hp) - want).abs() < 1e-12);
        let direct = 32.0 * 120000f64.powi(5) * 4.0;
        assert!((lemma_bound(&hp) / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn holder_bound_examples() {
        assert!((holder_bound(1.0 - 1e-15, 2.0, 2).unwrap() - 2e4).abs() < 1e-6);
        assert!((holder_bound(1e-5, 2.0, 2).unwrap() - 2000.0).abs() < 1e-9);
        assert!(holder_bound(0.3, 2.0, 3).unwrap() > holder_bound(0.3, 2.5, 3).unwrap());
        assert!(holder_bound(1.0, 2.0, 3).is_err());
    }

    #[test]
    fn mild_growth_examples() {
        assert_eq!(mild_growth_params(2.0, 4).unwrap(), (16.0, 2.0));
        assert_eq!(mild_growth_params(2.0, 3).unwrap(), (8.0, 1.0));
        assert_eq!(
            mild_growth_params(3.0, 3),
            Err(Error::BarrierRegime { p: 3.0, d: 3 })
        );
    }

    #[test]
    fn barrier_level_sets() {
        let z = [0.5, 0.0, 0.0];
        let lambda = 1.0;
        assert!(barrier_eval(&[3.5, 0.0, 0.0], &z, lambda).unwrap().abs() < 1e-15);
        assert!((barrier_eval(&[1.0, 0.0, 0.0], &z, lambda).unwrap() - 1.0).abs() < 1e-12);
        assert!(barrier_eval(&z, &z, lambda).is_err());
        // 0 <= v <= 1 for |z| <= |x - z| <= 3
        for k in 0..=100 {
            let r = 0.5 + 2.5 * k as f64 / 100.0;
            let v = barrier_eval(&[0.5, r, 0.0], &z, lambda).unwrap();
            assert!((-1e-15..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn fundamental_solution_is_radially_p_harmonic() {
        for (p, d) in [(2.0, 3), (1.5, 4), (3.0, 7), (2.5, 10)] {
            let (_, lambda) = mild_growth_params(p, d).unwrap();
            let u = |r: f64| r.powf(-lambda);
            for r in [0.2, 0.7, 1.3, 2.9] {
                let h = 1e-4 * r;
                let d1 = (u(r + h) - u(r - h)) / (2.0 * h);
                let d2 = (u(r + h) - 2.0 * u(r) + u(r - h)) / (h * h);
                let res = (p - 1.0) * d2 + (d as f64 - 1.0) * d1 / r;
                assert!(
                    res.abs() < 1e-5 * d2.abs().max(1.0),
                    "p={p} d={d} r={r} res={res}"
                );
            }
        }
    }

    #[test]
    fn h5_growth() {
        let v = harnack_h5(2.0, 3).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let mut prev = 0.0;
        for d in 3..60 {
            let h = harnack_h5(2.0, d).unwrap();
            assert!(h > prev);
            prev = h;
        }
        let ratios: Vec<f64> = [10, 20, 40, 80]
            .iter()
            .map(|&d| {
                let x = d as f64;
                harnack_h5(2.0, d).unwrap() / (x * x.ln())
            })
            .collect();
        assert!(ratios.iter().all(|r| *r > 1.0 && *r < 50.0), "{ratios:?}");
        assert!(ratios.windows(2).all(|w| w[1] <= w[0]));
        assert!(harnack_h5(3.0, 3).is_err());
    }

    #[test]
    fn chain_examples() {
        let c = chain_construct(&Vector::zeros(2), 5.0).unwrap();
        assert_eq!(c, vec![(Vector::zeros(2), 5.0)]);
        let c = chain_construct(&Vector::from([0.5, 0.0]), 2.0).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c[1].1 - 1.875).abs() < 1e-15);
        assert!((c[1].0[0] - 0.125).abs() < 1e-15);
        assert!(chain_construct(&Vector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn chain_invariants_on_grid() {
        for i in 0..10 {
            for j in 0..10 {
                let r = 1.0 + 0.01 * 1.9f64.powi(i);
                let s = 0.999 * j as f64 / 9.0;
                let c = chain_construct(&Vector::from([0.0, s]), r).unwrap();
                let n = c.len() - 1;
                // direct recurrence: count multiplications until 5/4 d > R
                let mut d = r - s;
                let mut m = 0;
                while 1.25 * d <= r {
                    d *= 1.25;
                    m += 1;
                }
                assert_eq!(n, m);
                assert!(n as f64 <= 5.0 * (r / (r - 1.0)).ln());
                for w in c.windows(2) {
                    assert!((w[1].1 / w[0].1 - 1.25).abs() < 1e-12);
                }
                for (x, d) in &c {
                    assert!((x.norm() + d - r).abs() < 1e-12);
                }
                assert!(c[n].0.norm() <= r / 5.0 + 1e-12);
            }
        }
    }

    #[test]
    fn general_radius_bound() {
        let a = harnack_general_r(1.01, 2.0, 3).unwrap();
        let b = harnack_general_r(4.99, 2.0, 3).unwrap();
        assert!(a > b);
        let mut prev = f64::INFINITY;
        for r in [5.0, 10.0, 1e3, 1e6, 1e12, 1e30] {
            let v = harnack_general_r(r, 2.0, 3).unwrap();
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
        // the two branches at R = 5 differ by one factor of A (5/R)^γ and the power 5 ln(5/4)
        let h5 = harnack_h5(2.0, 3).unwrap();
        let lo = 5.0 * 1.25f64.ln() * h5;
        let hi = ln_1p_exp(holder_a(2.0, 3).ln() + h5);
        let at5 = harnack_general_r(5.0, 2.0, 3).unwrap();
        assert!((at5 - hi).abs() < 1e-9);
        assert!((hi - lo).abs() < h5 + holder_a(2.0, 3).ln());
    }

    #[test]
    fn comparator_examples() {
        let c = compare_methods(2.0, 100).unwrap();
        assert!((c.s1 - 460.517).abs() < 1e-3);
        assert_eq!(c.s2, 1e4);
        assert!(c.ordered && c.meaningful);
        assert_eq!(c.crossover_d, Some(5));
        let small = compare_methods(2.0, 2).unwrap();
        assert!(!small.meaningful);
        for d in 2..200 {
            for p in [1.1, 1.5, 2.0, 4.0] {
                let c = compare_methods(p, d).unwrap();
                if c.x >= std::f64::consts::E {
                    assert!(c.s1 <= c.s2);
                }
            }
        }
    }

    #[test]
    fn table_row_notes_barrier_regime() {
        let row = constant_row(3.0, 3, 5.0).unwrap();
        assert!(row.log_bound_paper.is_none());
        assert!(row.note.contains("barrier"));
        let row = constant_row(2.0, 10, 1.5).unwrap();
        assert!(row.log_bound_paper.unwrap() > 0.0);
        assert_eq!(row.ordering, "paper<lps<moser");
        // x = 4 > e but x² = 16 exceeds 2^d = 4
        assert_eq!(
            constant_row(1.5, 2, 5.0).unwrap().ordering,
            "moser<paper<lps"
        );
        assert!(row.chain_length >= 1);
    }

    fn field_from(f: impl Fn(&[f64]) -> f64) -> GridField {
        let mut g = GridField::new(2, 0.02, 2.0).unwrap();
        for i in 0..g.len() {
            g.values[i] = f(&g.coords(i));
        }
        g
    }

    #[test]
    fn doubling_fails_on_bounded_fields() {
        let hp = HolderParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let c = doubling_diagnostic(&field_from(|_| 3.0), &hp, 64.0).unwrap();
        assert_eq!(c.first_violation, Some(1));
        assert!(c.maxima.iter().all(|&m| m == 3.0));
        assert!(!c.above_level);

        let g = field_from(|x| 2.0 + x[0] / 2.0);
        let t = doubling_diagnostic(&g, &hp, 64.0).unwrap();
        let top = (0..g.len())
            .filter(|&i| g.in_ball(i))
            .map(|i| g.values[i])
            .fold(f64::MIN, f64::max);
        assert!(t.first_violation.is_some_and(|k| k <= 2));
        assert!(t.maxima.iter().all(|&m| m <= top));
        assert!(t.maxima.windows(2).all(|w| w[1] >= w[0]));
    }
}
