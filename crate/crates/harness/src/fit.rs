//! Least-squares fits used to judge scaling shape.

/// Coefficients lowest degree first, plus R².
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub coef: Vec<f64>,
    pub r2: f64,
}

impl Fit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Polynomial fit of the given degree via normal equations.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Option<Fit> {
    let n = degree + 1;
    if xs.len() != ys.len() || xs.len() < n {
        return None;
    }
    let mut a = vec![vec![0.0; n + 1]; n];
    for (x, y) in xs.iter().zip(ys) {
        let pows: Vec<f64> = (0..2 * n).map(|k| x.powi(k as i32)).collect();
        for (i, row) in a.iter_mut().enumerate() {
            for j in 0..n {
                row[j] += pows[i + j];
            }
            row[n] += pows[i] * y;
        }
    }
    // Gaussian elimination with partial pivoting
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        a.swap(col, pivot);
        if a[col][col].abs() < 1e-300 {
            return None;
        }
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..=n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut coef = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * coef[j]).sum();
        coef[i] = (a[i][n] - s) / a[i][i];
    }
    let mut fit = Fit { coef, r2: 0.0 };
    fit.r2 = r_squared(xs, ys, |x| fit.eval(x));
    Some(fit)
}

pub fn r_squared(xs: &[f64], ys: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - f(*x)).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// Linear fit after dropping the `fraction` of points with the largest
/// residuals from a first fit.
pub fn linear_trimmed(xs: &[f64], ys: &[f64], fraction: f64) -> Option<Fit> {
    let first = polyfit(xs, ys, 1)?;
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| {
        let ra = (ys[a] - first.eval(xs[a])).abs();
        let rb = (ys[b] - first.eval(xs[b])).abs();
        ra.total_cmp(&rb)
    });
    let keep = xs.len() - (xs.len() as f64 * fraction).floor() as usize;
    idx.truncate(keep);
    idx.sort_unstable();
    let kx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let ky: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    polyfit(&kx, &ky, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_polynomials() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 + 2.0 * x - 0.5 * x * x).collect();
        let f = polyfit(&xs, &ys, 2).unwrap();
        assert!((f.coef[0] - 3.0).abs() < 1e-6);
        assert!((f.coef[1] - 2.0).abs() < 1e-6);
        assert!((f.coef[2] + 0.5).abs() < 1e-6);
        assert!(f.r2 > 0.999_999);
    }

    #[test]
    fn trimming_removes_spikes() {
        let xs: Vec<f64> = (0..100).map(f64::from).collect();
        let mut ys: Vec<f64> = xs.iter().map(|x| 1.0 + x).collect();
        for i in [10, 40, 70, 90] {
            ys[i] += 500.0;
        }
        assert!(polyfit(&xs, &ys, 1).unwrap().r2 < 0.9);
        assert!(linear_trimmed(&xs, &ys, 0.05).unwrap().r2 > 0.999);
    }
}
