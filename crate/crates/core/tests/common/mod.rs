//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

/// Solve `A x = b` by Gauss-Jordan elimination with partial pivoting and
/// return `(x, A⁻¹)`.
pub fn gauss_jordan(a: &[Vec<f64>], b: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r.push(b[i]);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        assert!(d.abs() > 1e-300, "oracle: singular system");
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n + 1 {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    let x = m.iter().map(|r| r[2 * n]).collect();
    let inv = m.iter().map(|r| r[n..2 * n].to_vec()).collect();
    (x, inv)
}

pub struct OracleFit {
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub r2: f64,
    pub sigma2: f64,
}

/// Weighted least squares through the normal equations `XᵀWX β = XᵀWy`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> OracleFit {
    let n = x.len();
    let p = x[0].len();
    let mut xtwx = vec![vec![0.0; p]; p];
    let mut xtwy = vec![0.0; p];
    for i in 0..n {
        for a in 0..p {
            xtwy[a] += w[i] * x[i][a] * y[i];
            for b in 0..p {
                xtwx[a][b] += w[i] * x[i][a] * x[i][b];
            }
        }
    }
    let (beta, inv) = gauss_jordan(&xtwx, &xtwy);
    let fitted: Vec<f64> = x
        .iter()
        .map(|row| row.iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();
    let ssr: f64 = (0..n).map(|i| w[i] * (y[i] - fitted[i]).powi(2)).sum();
    let wsum: f64 = w.iter().sum();
    let ybar: f64 = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / wsum;
    let sst: f64 = (0..n).map(|i| w[i] * (y[i] - ybar).powi(2)).sum();
    let sigma2 = ssr / (n - p) as f64;
    OracleFit {
        se: (0..p).map(|j| (sigma2 * inv[j][j]).sqrt()).collect(),
        beta,
        r2: 1.0 - ssr / sst,
        sigma2,
    }
}

/// All permutations of `0..n` by recursive insertion.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Standard normal CDF from the Maclaurin series of erf, summed until the
/// terms vanish. Accurate for moderate |z|.
pub fn normal_cdf_series(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= -x * x / n;
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * sum)
}

/// Invert `normal_cdf_series` by bisection.
pub fn normal_quantile_bisect(p: f64) -> f64 {
    let (mut lo, mut hi) = (-8.0, 8.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_series(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Count snippets whose lowercase text contains `stem` at a word start.
pub fn grep_count<'a>(texts: impl IntoIterator<Item = &'a str>, stem: &str) -> usize {
    let stem = stem.to_lowercase();
    texts
        .into_iter()
        .filter(|t| {
            let t = t.to_lowercase();
            t.match_indices(&stem).any(|(i, _)| {
                t[..i]
                    .chars()
                    .next_back()
                    .is_none_or(|c| !(c.is_alphanumeric() || c == '-'))
            })
        })
        .count()
}
