#![allow(dead_code)]
//! Independent oracles shared by the integration tests.

use nalgebra::{DMatrix, DVector};

/// Column sense currents of a resistive crossbar, from a dense Laplacian of
/// every node (terminals included) and a generic LU solve.
///
/// `rows[i]` is `Some(volts)` for a driven row, `None` for a floating one.
/// `sensed[j]` is false for a floating column, which reports zero current.
pub fn laplacian_currents(n: usize, m: usize, g: &[f64], r: f64, rows: &[Option<f64>], sensed: &[bool]) -> Vec<f64> {
    // node list: (name, fixed voltage)
    let mut fixed: Vec<Option<f64>> = Vec::new();
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    let add = |fixed: &mut Vec<Option<f64>>, v: Option<f64>| {
        fixed.push(v);
        fixed.len() - 1
    };
    if r == 0.0 {
        let row: Vec<usize> = (0..n).map(|i| add(&mut fixed, rows[i])).collect();
        let col: Vec<usize> = (0..m).map(|j| add(&mut fixed, if sensed[j] { Some(0.0) } else { None })).collect();
        for i in 0..n {
            for j in 0..m {
                edges.push((row[i], col[j], g[i * m + j]));
            }
        }
        let v = solve(&fixed, &edges);
        return (0..m)
            .map(|j| if sensed[j] { (0..n).map(|i| g[i * m + j] * v[row[i]]).sum() } else { 0.0 })
            .collect();
    }
    let gw = 1.0 / r;
    let rn: Vec<Vec<usize>> = (0..n).map(|_| (0..m).map(|_| add(&mut fixed, None)).collect()).collect();
    let cn: Vec<Vec<usize>> = (0..n).map(|_| (0..m).map(|_| add(&mut fixed, None)).collect()).collect();
    for i in 0..n {
        for j in 0..m {
            edges.push((rn[i][j], cn[i][j], g[i * m + j]));
            if j + 1 < m {
                edges.push((rn[i][j], rn[i][j + 1], gw));
            }
            if i + 1 < n {
                edges.push((cn[i][j], cn[i + 1][j], gw));
            }
        }
        if let Some(v) = rows[i] {
            let d = add(&mut fixed, Some(v));
            edges.push((d, rn[i][0], gw));
        }
    }
    let mut sense = vec![None; m];
    for j in 0..m {
        if sensed[j] {
            let s = add(&mut fixed, Some(0.0));
            edges.push((cn[n - 1][j], s, gw));
            sense[j] = Some(s);
        }
    }
    let v = solve(&fixed, &edges);
    (0..m).map(|j| if sense[j].is_some() { v[cn[n - 1][j]] * gw } else { 0.0 }).collect()
}

fn solve(fixed: &[Option<f64>], edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let total = fixed.len();
    let mut lap = DMatrix::<f64>::zeros(total, total);
    for &(a, b, g) in edges {
        lap[(a, a)] += g;
        lap[(b, b)] += g;
        lap[(a, b)] -= g;
        lap[(b, a)] -= g;
    }
    let unknown: Vec<usize> = (0..total).filter(|&k| fixed[k].is_none()).collect();
    let mut a = DMatrix::<f64>::zeros(unknown.len(), unknown.len());
    let mut b = DVector::<f64>::zeros(unknown.len());
    for (p, &u) in unknown.iter().enumerate() {
        for (q, &w) in unknown.iter().enumerate() {
            a[(p, q)] = lap[(u, w)];
        }
        for k in 0..total {
            if let Some(v) = fixed[k] {
                b[p] -= lap[(u, k)] * v;
            }
        }
    }
    let x = if unknown.is_empty() { DVector::zeros(0) } else { a.lu().solve(&b).expect("oracle system is singular") };
    let mut v: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for (p, &u) in unknown.iter().enumerate() {
        v[u] = x[p];
    }
    v
}

/// Brute-force integer mat-vec: `y_j = sum_i x_i * w_ij`.
pub fn int_matvec(n: usize, m: usize, w: &[u32], x: &[u32]) -> Vec<u32> {
    (0..m).map(|j| (0..n).map(|i| x[i] * w[i * m + j]).sum()).collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Element-wise relative agreement; entries that vanish are compared against
/// 1e-15 of the largest magnitude in the vector.
pub fn vec_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(0.0f64, |s, v| s.max(v.abs()));
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()) + 1e-15 * scale)
}
