//! Independent reference implementations and fixed datasets.
//!
//! Shared by the core integration tests and the acceptance suite; nothing
//! here calls into the library's numerics.
#![allow(dead_code)]

/// Solves `(XᵀX) b = Xᵀy` by Gauss-Jordan elimination with partial pivoting.
/// Returns `b` and `(XᵀX)⁻¹`. `rows` include the intercept.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let q = rows[0].len();
    let mut xtx = vec![vec![0.0; q]; q];
    let mut xty = vec![0.0; q];
    for (r, &yi) in rows.iter().zip(y) {
        for i in 0..q {
            xty[i] += r[i] * yi;
            for j in 0..q {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    // augmented [XᵀX | I | Xᵀy]
    let mut m: Vec<Vec<f64>> = (0..q)
        .map(|i| {
            let mut row = xtx[i].clone();
            row.extend((0..q).map(|j| if i == j { 1.0 } else { 0.0 }));
            row.push(xty[i]);
            row
        })
        .collect();
    for c in 0..q {
        let p = (c..q).max_by(|&a, &b| m[a][c].abs().partial_cmp(&m[b][c].abs()).unwrap()).unwrap();
        m.swap(c, p);
        let piv = m[c][c];
        for v in m[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..q {
            if r != c {
                let f = m[r][c];
                let pivot_row = m[c].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    let beta = m.iter().map(|r| r[2 * q]).collect();
    let inv = m.iter().map(|r| r[q..2 * q].to_vec()).collect();
    (beta, inv)
}

/// Deterministic pseudo-random values in `[-1, 1)` without any RNG crate.
fn wobble(i: usize, k: f64) -> f64 {
    let v = ((i as f64 + 1.0) * k).sin() * 43758.5453;
    2.0 * (v - v.floor()) - 1.0
}

/// A regression problem: named non-intercept columns and a response.
pub struct OlsCase {
    pub columns: Vec<(String, Vec<f64>)>,
    pub y: Vec<f64>,
}

impl OlsCase {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.y.len()).map(|i| std::iter::once(1.0).chain(self.columns.iter().map(|c| c.1[i])).collect()).collect()
    }
}

/// Five fixed small regression problems.
pub fn ols_cases() -> Vec<OlsCase> {
    let col = |name: &str, v: Vec<f64>| (name.to_string(), v);
    let mut cases = vec![
        OlsCase { columns: vec![col("x", vec![1.0, 2.0, 3.0, 4.0, 5.0])], y: vec![1.0, 3.0, 2.0, 5.0, 4.0] },
        OlsCase {
            columns: vec![
                col("x1", vec![0.5, 1.5, -2.0, 3.25, 0.0, 4.0]),
                col("x2", vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]),
            ],
            y: vec![2.0, 3.5, -1.0, 7.25, 1.5, 8.0],
        },
    ];
    let n = 12;
    let x: Vec<f64> = (0..n).map(|i| 40.0 + 20.0 * wobble(i, 1.3)).collect();
    let a: Vec<f64> = (0..n).map(|i| if wobble(i, 2.9) > 0.0 { 1.0 } else { 0.0 }).collect();
    let p: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let y: Vec<f64> = (0..n).map(|i| -3.0 + 25.0 * a[i] - 0.4 * x[i] + 2.0 * p[i] + 10.0 * wobble(i, 7.1)).collect();
    cases.push(OlsCase { columns: vec![col("A", a), col("x", x), col("period2", p)], y });
    let n = 30;
    let x1: Vec<f64> = (0..n).map(|i| wobble(i, 0.77)).collect();
    let x2: Vec<f64> = (0..n).map(|i| x1[i] + 0.3 * wobble(i, 5.5)).collect();
    let y: Vec<f64> = (0..n).map(|i| 1.0 + x1[i] - 2.0 * x2[i] + 0.1 * wobble(i, 3.3)).collect();
    cases.push(OlsCase { columns: vec![col("x1", x1), col("x2", x2)], y });
    let n = 9;
    let t: Vec<f64> = (0..n).map(|i| i as f64 - 4.0).collect();
    let t2: Vec<f64> = t.iter().map(|v| v * v / 4.0).collect();
    let y: Vec<f64> = (0..n).map(|i| 50.0 + 0.25 * t[i] + 3.0 * t2[i] + wobble(i, 9.9)).collect();
    cases.push(OlsCase { columns: vec![col("t", t), col("t2", t2)], y });
    cases
}

/// A binary-response problem.
pub struct LogisticCase {
    pub columns: Vec<(String, Vec<f64>)>,
    pub a: Vec<bool>,
}

impl LogisticCase {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.a.len()).map(|i| std::iter::once(1.0).chain(self.columns.iter().map(|c| c.1[i])).collect()).collect()
    }
}

/// Three fixed datasets with a finite MLE.
pub fn logistic_cases() -> Vec<LogisticCase> {
    let x1 = vec![-2.0, -1.5, -1.0, -0.5, 0.0, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    let a1 = vec![false, false, true, false, false, true, false, true, true, false, true, true];
    let n = 40;
    let x2: Vec<f64> = (0..n).map(|i| 41.3 + 22.4 * wobble(i, 1.1)).collect();
    let a2: Vec<bool> = (0..n).map(|i| 1.0 - 0.035 * x2[i] + 1.5 * wobble(i, 4.4) > 0.0).collect();
    let n = 30;
    let u: Vec<f64> = (0..n).map(|i| wobble(i, 2.2)).collect();
    let v: Vec<f64> = (0..n).map(|i| wobble(i, 6.6)).collect();
    let a3: Vec<bool> = (0..n).map(|i| 0.3 + 1.2 * u[i] - 0.8 * v[i] + 1.2 * wobble(i, 8.8) > 0.0).collect();
    vec![
        LogisticCase { columns: vec![("x".into(), x1)], a: a1 },
        LogisticCase { columns: vec![("baseline".into(), x2)], a: a2 },
        LogisticCase { columns: vec![("u".into(), u), ("v".into(), v)], a: a3 },
    ]
}

fn log_likelihood(rows: &[Vec<f64>], a: &[bool], b: &[f64]) -> f64 {
    rows.iter()
        .zip(a)
        .map(|(r, &ai)| {
            let eta: f64 = r.iter().zip(b).map(|(x, c)| x * c).sum();
            // log expit(±eta), evaluated stably
            let s = if ai { eta } else { -eta };
            -((-s).max(0.0) + (-(s.abs())).exp().ln_1p())
        })
        .sum()
}

/// Maximises the log-likelihood over a grid that is re-centred on the best
/// point and halved in width until the spacing falls below `1e-7`.
///
/// The search runs on standardised covariates, where the likelihood is close
/// to spherical, and maps the optimum back to the original scale.
pub fn grid_search_logistic(rows: &[Vec<f64>], a: &[bool]) -> Vec<f64> {
    let q = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..q).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> =
        (0..q).map(|j| (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt()).collect();
    let z: Vec<Vec<f64>> =
        rows.iter().map(|r| (0..q).map(|j| if j == 0 { 1.0 } else { (r[j] - mean[j]) / sd[j] }).collect()).collect();

    let steps = 6i64;
    let side = 2 * steps + 1;
    let mut centre = vec![0.0; q];
    let mut half_width = 8.0;
    while half_width / steps as f64 > 1e-7 {
        let mut best = (f64::NEG_INFINITY, centre.clone());
        for code in 0..side.pow(q as u32) {
            let mut c = code;
            let cand: Vec<f64> = (0..q)
                .map(|j| {
                    let k = c % side - steps;
                    c /= side;
                    centre[j] + half_width * k as f64 / steps as f64
                })
                .collect();
            let ll = log_likelihood(&z, a, &cand);
            if ll > best.0 {
                best = (ll, cand);
            }
        }
        centre = best.1;
        half_width *= 0.5;
    }
    let mut beta = vec![0.0; q];
    beta[0] = centre[0];
    for j in 1..q {
        beta[j] = centre[j] / sd[j];
        beta[0] -= centre[j] * mean[j] / sd[j];
    }
    beta
}

/// Standard deviation of the statistic over all `n^n` ordered resamples.
pub fn exhaustive_bootstrap_sd(data: &[f64], stat: impl Fn(&[f64]) -> f64) -> f64 {
    let n = data.len();
    let total = n.pow(n as u32);
    let mut values = Vec::with_capacity(total);
    for code in 0..total {
        let mut c = code;
        let sample: Vec<f64> = (0..n)
            .map(|_| {
                let i = c % n;
                c /= n;
                data[i]
            })
            .collect();
        values.push(stat(&sample));
    }
    let mean = values.iter().sum::<f64>() / total as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / total as f64).sqrt()
}
