//! Independent oracles for the oscillator plant, written in plain `f64`
//! arithmetic without the library's linear algebra or solver.

#![allow(dead_code)]

pub type V2 = [f64; 2];
pub type M2 = [[f64; 2]; 2];

pub const A: M2 = [[1.0, 1.1], [-1.1, 1.0]];
pub const B: V2 = [0.0, 1.0];
pub const R: f64 = 1.0;

pub fn mat_vec(m: &M2, x: &V2) -> V2 {
    [
        m[0][0] * x[0] + m[0][1] * x[1],
        m[1][0] * x[0] + m[1][1] * x[1],
    ]
}

pub fn quad(p: &M2, x: &V2) -> f64 {
    let px = mat_vec(p, x);
    x[0] * px[0] + x[1] * px[1]
}

pub fn step(x: &V2, u: f64) -> V2 {
    let ax = mat_vec(&A, x);
    [ax[0] + B[0] * u, ax[1] + B[1] * u]
}

pub fn stage(x: &V2, u: f64) -> f64 {
    x[0] * x[0] + x[1] * x[1] + R * u * u
}

/// `P_1 = I`, `P_{j+1} = A'(P - P b b'P / (b'P b + r))A + I`, scalar input.
pub fn riccati(depth: usize) -> Vec<M2> {
    let mut out = vec![[[1.0, 0.0], [0.0, 1.0]]];
    while out.len() < depth {
        let p = *out.last().unwrap();
        let pb = mat_vec(&p, &B);
        let denom = B[0] * pb[0] + B[1] * pb[1] + R;
        let mut inner = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                inner[i][j] = p[i][j] - pb[i] * pb[j] / denom;
            }
        }
        let mut next = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in 0..2 {
                    for l in 0..2 {
                        s += A[k][i] * inner[k][l] * A[l][j];
                    }
                }
                next[i][j] = s;
            }
        }
        out.push(next);
    }
    out
}

/// Feedback from rung `p`: `u = -(b'P b + r)^{-1} b'P A x`.
pub fn feedback(p: &M2, x: &V2) -> f64 {
    let pb = mat_vec(p, &B);
    let ax = mat_vec(&A, x);
    -(pb[0] * ax[0] + pb[1] * ax[1]) / (B[0] * pb[0] + B[1] * pb[1] + R)
}

/// Cost of applying `controls` from `x`.
pub fn rollout_cost(x: &V2, controls: &[f64]) -> (f64, V2) {
    let mut x = *x;
    let mut cost = 0.0;
    for &u in controls {
        cost += stage(&x, u);
        x = step(&x, u);
    }
    (cost, x)
}

/// Minimizes `rollout_cost` over `controls.len()` inputs by nested grid
/// refinement: a `(2·half+1)^d` grid around the incumbent, shrunk by
/// `shrink` each round until the spacing falls below `tol`.
pub fn brute_force_minimizer(x: &V2, dim: usize, radius: f64, tol: f64) -> Vec<f64> {
    let half = 10i64;
    let shrink = 0.25;
    let mut center = vec![0.0; dim];
    let mut h = radius / half as f64;
    while h > tol {
        let mut best = (f64::INFINITY, center.clone());
        let span = (2 * half + 1) as usize;
        let total = span.pow(dim as u32);
        let mut u = vec![0.0; dim];
        for idx in 0..total {
            let mut rest = idx;
            for d in 0..dim {
                let offset = (rest % span) as i64 - half;
                rest /= span;
                u[d] = center[d] + offset as f64 * h;
            }
            let c = rollout_cost(x, &u).0;
            if c < best.0 {
                best = (c, u.clone());
            }
        }
        center = best.1;
        h *= shrink;
    }
    center
}

/// Iterates the ladder until successive rungs agree to `tol`.
pub fn riccati_fixed_point(tol: f64) -> M2 {
    let mut depth = 2;
    loop {
        let ladder = riccati(depth);
        let (p, q) = (ladder[depth - 1], ladder[depth - 2]);
        let diff = (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| (p[i][j] - q[i][j]).abs())
            .fold(0.0, f64::max);
        if diff < tol || depth > 10_000 {
            return p;
        }
        depth += 1;
    }
}

pub fn v2(x: &nalgebra::DVector<f64>) -> V2 {
    [x[0], x[1]]
}
