//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use decoykit::lp::{LpProblem, Row, Sense};
use decoykit::model::{LevelBounds, ObservationBounds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `a·x ≤ b`.
#[derive(Debug, Clone)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

pub fn halfspaces(p: &LpProblem) -> Vec<Halfspace> {
    let n = p.num_vars();
    let mut out = Vec::new();
    let mut push = |a: Vec<f64>, lo: f64, hi: f64| {
        if hi.is_finite() {
            out.push(Halfspace { a: a.clone(), b: hi });
        }
        if lo.is_finite() {
            out.push(Halfspace {
                a: a.iter().map(|v| -v).collect(),
                b: -lo,
            });
        }
    };
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        push(e, p.var_lower[j], p.var_upper[j]);
    }
    for r in &p.rows {
        push(r.coeffs.clone(), r.lower, r.upper);
    }
    out
}

/// Solves the square system by Gaussian elimination with partial pivoting.
pub fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                if f != 0.0 {
                    for c in col..n {
                        m[r][c] -= f * m[col][c];
                    }
                    rhs[r] -= f * rhs[col];
                }
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

fn combinations(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Every basic feasible point: `n` linearly independent active halfspaces
/// whose intersection satisfies the rest within `tol`.
pub fn vertices(n: usize, hs: &[Halfspace], tol: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    combinations(hs.len(), n, &mut |idx| {
        let m: Vec<Vec<f64>> = idx.iter().map(|&i| hs[i].a.clone()).collect();
        let rhs: Vec<f64> = idx.iter().map(|&i| hs[i].b).collect();
        if let Some(x) = solve_square(m, rhs) {
            let ok = hs
                .iter()
                .all(|h| h.a.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() <= h.b + tol);
            if ok {
                out.push(x);
            }
        }
    });
    out
}

/// Optimum over the vertices, or `None` when the polytope is empty.
pub fn vertex_optimum(p: &LpProblem) -> Option<f64> {
    let vs = vertices(p.num_vars(), &halfspaces(p), 1e-9);
    let vals = vs
        .iter()
        .map(|x| p.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>());
    match p.sense {
        Sense::Minimize => vals.reduce(f64::min),
        Sense::Maximize => vals.reduce(f64::max),
    }
}

/// Random bounded LP; roughly one in ten is infeasible by construction.
pub fn random_lp(rng: &mut ChaCha8Rng, max_vars: usize, max_rows: usize) -> LpProblem {
    let n = rng.random_range(1..=max_vars);
    let m = rng.random_range(0..=max_rows);
    let sense = if rng.random_bool(0.5) {
        Sense::Minimize
    } else {
        Sense::Maximize
    };
    let mut p = LpProblem::new(n, sense);
    p.objective = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut x0 = Vec::with_capacity(n);
    for j in 0..n {
        let lo: f64 = rng.random_range(-1.0..0.5);
        let hi = lo + rng.random_range(0.1..2.0);
        p.set_bounds(j, lo, hi);
        x0.push(rng.random_range(lo..hi));
    }
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let act: f64 = a.iter().zip(&x0).map(|(a, x)| a * x).sum();
        let (lo, hi) = match rng.random_range(0..10) {
            0 => {
                let top: f64 = a
                    .iter()
                    .enumerate()
                    .map(|(j, a)| (a * p.var_lower[j]).max(a * p.var_upper[j]))
                    .sum();
                (top + 0.1, top + 1.0)
            }
            1 => (act, act),
            2 => (f64::NEG_INFINITY, act + rng.random_range(0.0..0.5)),
            _ => (act - rng.random_range(0.0..1.0), act + rng.random_range(0.0..1.0)),
        };
        p.rows.push(Row {
            coeffs: a,
            lower: lo,
            upper: hi,
        });
    }
    p
}

pub fn poisson(mu: f64, k: usize) -> f64 {
    let fact: f64 = (1..=k).map(|v| v as f64).product();
    (-mu).exp() * mu.powi(k as i32) / fact
}

/// `max c̄_1/ȳ_1` over the joint yield/error polytope with truncation
/// `k_max`, by enumerating its vertices (a linear-fractional objective with
/// positive denominator attains its maximum at a vertex). Returns `None` if
/// no vertex has `ȳ_1 > 0`.
pub fn b1_vertex_oracle(mus: &[f64], obs: &ObservationBounds, k_max: usize) -> Option<f64> {
    let n = 2 * k_max;
    let mut hs = Vec::new();
    let unit = |j: usize, s: f64| {
        let mut a = vec![0.0; n];
        a[j] = s;
        a
    };
    for j in 0..n {
        hs.push(Halfspace { a: unit(j, 1.0), b: 1.0 });
        hs.push(Halfspace { a: unit(j, -1.0), b: 0.0 });
    }
    for k in 0..k_max {
        let mut a = vec![0.0; n];
        a[k_max + k] = 1.0;
        a[k] = -1.0;
        hs.push(Halfspace { a, b: 0.0 });
    }
    for (mu, b) in mus.iter().zip(&obs.levels) {
        let w: Vec<f64> = (0..k_max).map(|k| poisson(*mu, k)).collect();
        let tail = 1.0 - w.iter().sum::<f64>();
        for (off, lo, hi) in [(0, b.y_lo, b.y_hi), (k_max, b.b_lo, b.b_hi)] {
            let scale = if hi > 0.0 { hi } else { 1.0 };
            let mut a = vec![0.0; n];
            for k in 0..k_max {
                a[off + k] = w[k] / scale;
            }
            hs.push(Halfspace {
                a: a.clone(),
                b: hi / scale,
            });
            hs.push(Halfspace {
                a: a.iter().map(|v| -v).collect(),
                b: -(lo - tail) / scale,
            });
        }
    }
    vertices(n, &hs, 1e-10)
        .into_iter()
        .filter(|x| x[1] > 1e-9)
        .map(|x| (x[k_max + 1] / x[1]).min(1.0))
        .reduce(f64::max)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

pub fn vacuous(n: usize) -> ObservationBounds {
    ObservationBounds {
        levels: vec![LevelBounds::VACUOUS; n],
    }
}
