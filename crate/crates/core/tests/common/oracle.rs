//! Naive reference implementations used as test oracles.
//!
//! Everything here is written from the definitions with dense loops and no
//! shared code with the library: patterns by sorting, ranks by enumerating all
//! permutations in lexicographic order, kernel sums over all index pairs.

#![allow(dead_code)]

use std::collections::HashMap;

/// All permutations of `0..=h` in lexicographic order.
pub fn lex_permutations(h: usize) -> Vec<Vec<u8>> {
    fn rec(prefix: &mut Vec<u8>, left: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let v = left.remove(i);
            prefix.push(v);
            rec(prefix, left, out);
            prefix.pop();
            left.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..=h as u8).collect(), &mut out);
    out
}

pub struct Ranks {
    pub perms: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

impl Ranks {
    pub fn new(h: usize) -> Self {
        let perms = lex_permutations(h);
        let index = perms.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        Ranks { perms, index }
    }

    pub fn rank(&self, p: &[u8]) -> usize {
        self.index[p]
    }

    pub fn count(&self) -> usize {
        self.perms.len()
    }
}

/// Positions in descending order of value; equal values put the later position first.
pub fn naive_pattern(w: &[f64]) -> Vec<u8> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap().then(b.cmp(&a)));
    idx.into_iter().map(|i| i as u8).collect()
}

pub fn naive_ranks(x: &[f64], h: usize, r: &Ranks) -> Vec<usize> {
    (0..x.len() - h).map(|i| r.rank(&naive_pattern(&x[i..=i + h]))).collect()
}

pub fn bartlett(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        1.0 - x.abs()
    } else {
        0.0
    }
}

pub fn p_hat(x: &[f64], y: &[f64], h: usize) -> f64 {
    let n = x.len();
    let mut c = 0;
    for i in 0..n - h {
        if naive_pattern(&x[i..=i + h]) == naive_pattern(&y[i..=i + h]) {
            c += 1;
        }
    }
    c as f64 / n as f64
}

pub fn marginal(x: &[f64], h: usize, r: &Ranks) -> Vec<f64> {
    let mut q = vec![0.0; r.count()];
    for k in naive_ranks(x, h, r) {
        q[k] += 1.0;
    }
    q.iter().map(|c| c / x.len() as f64).collect()
}

pub fn q_hat(x: &[f64], y: &[f64], h: usize) -> f64 {
    let r = Ranks::new(h);
    let (a, b) = (marginal(x, h, &r), marginal(y, h, &r));
    a.iter().zip(&b).map(|(u, v)| u * v).sum()
}

/// `(1/n) sum_{i,j} k((i-j)/ln n) z_i z_j` over every pair.
pub fn longrun(z: &[f64], n: usize) -> f64 {
    let b = (n as f64).ln();
    let mut t = 0.0;
    for i in 0..z.len() {
        for j in 0..z.len() {
            t += bartlett((i as f64 - j as f64) / b) * z[i] * z[j];
        }
    }
    t / n as f64
}

pub fn sigma2(x: &[f64], y: &[f64], h: usize) -> f64 {
    let p = p_hat(x, y, h);
    let z: Vec<f64> = (0..x.len() - h)
        .map(|i| (naive_pattern(&x[i..=i + h]) == naive_pattern(&y[i..=i + h])) as u8 as f64 - p)
        .collect();
    longrun(&z, x.len())
}

/// Dense kernel matrix `(1/n) sum_{i,j} k((i-j)/ln n) v_i v_j^T`.
pub fn kernel_matrix(v: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let d = v[0].len();
    let b = (n as f64).ln();
    let mut s = vec![vec![0.0; d]; d];
    for i in 0..v.len() {
        for j in 0..v.len() {
            let k = bartlett((i as f64 - j as f64) / b);
            if k == 0.0 {
                continue;
            }
            for a in 0..d {
                for c in 0..d {
                    s[a][c] += k * v[i][a] * v[j][c];
                }
            }
        }
    }
    for row in &mut s {
        for e in row {
            *e /= n as f64;
        }
    }
    s
}

fn indicator_vectors(x: &[f64], y: &[f64], h: usize, r: &Ranks) -> Vec<Vec<f64>> {
    let (qx, qy) = (marginal(x, h, r), marginal(y, h, r));
    let (rx, ry) = (naive_ranks(x, h, r), naive_ranks(y, h, r));
    let c = r.count();
    (0..rx.len())
        .map(|i| {
            let mut v = vec![0.0; 2 * c];
            for k in 0..c {
                v[k] = (rx[i] == k) as u8 as f64 - qx[k];
                v[c + k] = (ry[i] == k) as u8 as f64 - qy[k];
            }
            v
        })
        .collect()
}

pub fn cov_matrix(x: &[f64], y: &[f64], h: usize) -> Vec<Vec<f64>> {
    let r = Ranks::new(h);
    kernel_matrix(&indicator_vectors(x, y, h, &r), x.len())
}

fn quad(s: &[Vec<f64>], g: &[f64]) -> f64 {
    let mut t = 0.0;
    for a in 0..g.len() {
        for c in 0..g.len() {
            t += g[a] * s[a][c] * g[c];
        }
    }
    t
}

/// Delta-method variance of `q_hat`: the gradient of `sum_pi q_x(pi) q_y(pi)` is `(q_y, q_x)`.
pub fn gamma2(x: &[f64], y: &[f64], h: usize) -> f64 {
    let r = Ranks::new(h);
    let s = kernel_matrix(&indicator_vectors(x, y, h, &r), x.len());
    let mut g = marginal(y, h, &r);
    g.extend(marginal(x, h, &r));
    quad(&s, &g)
}

pub fn l1(a: &[u8], b: &[u8]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (*u as f64 - *v as f64).abs()).sum()
}

/// `1{0} + 0.75 1{2} + 0.5 1{4} + 0.25 1{6}`.
pub fn step_weight(d: f64) -> f64 {
    match d as i64 {
        0 => 1.0,
        2 => 0.75,
        4 => 0.5,
        6 => 0.25,
        _ => 0.0,
    }
}

pub fn weights(x: &[f64], y: &[f64], h: usize) -> Vec<f64> {
    (0..x.len() - h).map(|i| step_weight(l1(&naive_pattern(&x[i..=i + h]), &naive_pattern(&y[i..=i + h])))).collect()
}

/// `(AWOPD-value, comparison value, D_hat)` for l1 with the step weight.
pub fn awopd(x: &[f64], y: &[f64], h: usize) -> (f64, f64, f64) {
    let r = Ranks::new(h);
    let n = x.len();
    let m = (n - h) as f64;
    let w = weights(x, y, h);
    let value: f64 = w.iter().sum();
    let (qx, qy) = (marginal(x, h, &r), marginal(y, h, &r));
    let (mut cmp, mut dq) = (0.0, 0.0);
    for a in 0..r.count() {
        for b in 0..r.count() {
            let wt = step_weight(l1(&r.perms[a], &r.perms[b]));
            cmp += wt * (qx[a] * n as f64 / m) * (qy[b] * n as f64 / m);
            dq += wt * qx[a] * qy[b];
        }
    }
    (value, m * cmp, value / n as f64 - dq)
}

pub fn awopd_a(x: &[f64], y: &[f64], h: usize) -> f64 {
    let w = weights(x, y, h);
    let mean = w.iter().sum::<f64>() / x.len() as f64;
    let z: Vec<f64> = w.iter().map(|v| v - mean).collect();
    longrun(&z, x.len())
}

pub fn awopd_gamma2(x: &[f64], y: &[f64], h: usize) -> f64 {
    let r = Ranks::new(h);
    let n = x.len();
    let c = r.count();
    let w = weights(x, y, h);
    let mean = w.iter().sum::<f64>() / n as f64;
    let (qx, qy) = (marginal(x, h, &r), marginal(y, h, &r));
    let (rx, ry) = (naive_ranks(x, h, &r), naive_ranks(y, h, &r));
    let v: Vec<Vec<f64>> = (0..w.len())
        .map(|i| {
            let mut row = vec![w[i] - mean];
            row.extend((0..c).map(|k| (rx[i] == k) as u8 as f64 - qx[k]));
            row.extend((0..c).map(|k| (ry[i] == k) as u8 as f64 - qy[k]));
            row
        })
        .collect();
    let s = kernel_matrix(&v, n);
    let wt = |a: usize, b: usize| step_weight(l1(&r.perms[a], &r.perms[b]));
    let mut alpha = vec![1.0];
    alpha.extend((0..c).map(|p| -(0..c).map(|s| wt(p, s) * qy[s]).sum::<f64>()));
    alpha.extend((0..c).map(|p| -(0..c).map(|s| wt(s, p) * qx[s]).sum::<f64>()));
    quad(&s, &alpha)
}

/// Gaussian random walk values rounded to a grid, so ties occur.
pub fn fixture(seed: u64, n: usize, grid: f64) -> (Vec<f64>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let e: f64 = rng.random::<f64>() - 0.5;
        let f: f64 = rng.random::<f64>() - 0.5;
        a = 0.3 * a + e;
        b = 0.3 * b + 0.7 * e + 0.3 * f;
        x.push((a / grid).round() * grid);
        y.push((b / grid).round() * grid);
    }
    (x, y)
}
