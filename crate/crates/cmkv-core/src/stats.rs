//! Small shared statistics helpers.

/// Sample mean and standard error of the mean.
pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (xs.first().copied().unwrap_or(0.0), 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of y against x.
pub(crate) fn linreg_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Slope of ln y against ln x over the strictly positive pairs.
/// NaN when fewer than two usable points remain.
pub(crate) fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    if lx.len() < 2 {
        return f64::NAN;
    }
    linreg_slope(&lx, &ly)
}

/// Nonnegative least squares for a 3-column design matrix, by enumerating
/// active sets. Returns the coefficients and the relative L2 residual.
pub(crate) fn nnls3(design: &[[f64; 3]], target: &[f64]) -> ([f64; 3], f64) {
    assert_eq!(design.len(), target.len());
    let target_norm = target.iter().map(|y| y * y).sum::<f64>().sqrt();
    let mut best: Option<([f64; 3], f64)> = None;
    for mask in 0u8..8 {
        let cols: Vec<usize> = (0..3).filter(|c| mask & (1 << c) != 0).collect();
        let coef = solve_subset_ls(design, target, &cols);
        let Some(coef) = coef else { continue };
        if coef.iter().any(|&c| c < 0.0) {
            continue;
        }
        let mut x = [0.0; 3];
        for (k, &c) in cols.iter().enumerate() {
            x[c] = coef[k];
        }
        let resid = residual(design, target, &x);
        if best.map_or(true, |(_, r)| resid < r) {
            best = Some((x, resid));
        }
    }
    let (x, resid) = best.unwrap_or(([0.0; 3], target_norm));
    let rel = if target_norm > 0.0 {
        resid / target_norm
    } else {
        0.0
    };
    (x, rel)
}

fn residual(design: &[[f64; 3]], target: &[f64], x: &[f64; 3]) -> f64 {
    design
        .iter()
        .zip(target)
        .map(|(row, y)| {
            let fit: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            (fit - y) * (fit - y)
        })
        .sum::<f64>()
        .sqrt()
}

/// Unconstrained least squares restricted to `cols`, via normal equations.
fn solve_subset_ls(design: &[[f64; 3]], target: &[f64], cols: &[usize]) -> Option<Vec<f64>> {
    let k = cols.len();
    if k == 0 {
        return Some(Vec::new());
    }
    let mut ata = vec![0.0; k * k];
    let mut atb = vec![0.0; k];
    for (row, y) in design.iter().zip(target) {
        for (a, &ca) in cols.iter().enumerate() {
            atb[a] += row[ca] * y;
            for (b, &cb) in cols.iter().enumerate() {
                ata[a * k + b] += row[ca] * row[cb];
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    let mut x = atb;
    for col in 0..k {
        let pivot = (col..k).max_by(|&a, &b| {
            ata[a * k + col]
                .abs()
                .total_cmp(&ata[b * k + col].abs())
        })?;
        if ata[pivot * k + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..k {
                ata.swap(col * k + j, pivot * k + j);
            }
            x.swap(col, pivot);
        }
        for row in col + 1..k {
            let f = ata[row * k + col] / ata[col * k + col];
            for j in col..k {
                ata[row * k + j] -= f * ata[col * k + j];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..k).rev() {
        let mut acc = x[col];
        for j in col + 1..k {
            acc -= ata[col * k + j] * x[j];
        }
        x[col] = acc / ata[col * k + col];
    }
    Some(x)
}
