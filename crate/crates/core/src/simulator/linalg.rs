use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin QR factorization of a tall design matrix, reusable across targets.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    q_t: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LeastSquares {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = x.shape();
        if cols == 0 || rows < cols {
            return Err(Error::RankDeficient {
                rank: rows.min(cols),
                cols,
            });
        }
        let qr = x.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].abs()).collect();
        let scale = diag.iter().cloned().fold(0.0, f64::max);
        let tol = scale * rows.max(cols) as f64 * f64::EPSILON;
        let rank = diag.iter().filter(|&&v| v > tol).count();
        if rank < cols {
            return Err(Error::RankDeficient { rank, cols });
        }
        Ok(LeastSquares {
            q_t: qr.q().transpose(),
            r,
        })
    }

    /// `argmin_w ||X w - y||`.
    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let qty = &self.q_t * y;
        self.r
            .solve_upper_triangular(&qty)
            .expect("R has a nonzero diagonal after the rank check")
    }
}

/// Minimum-norm least-squares fit. With full column rank this is the
/// pseudo-inverse solution `(XᵀX)⁻¹XᵀY`, computed through QR.
pub fn fit_ridgeless(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "design has {} rows but target has {}",
            x.nrows(),
            y.len()
        )));
    }
    Ok(LeastSquares::new(x)?.solve(y))
}

/// `(w - w*)ᵀ Σ (w - w*)`; `sigma = None` means the identity.
pub fn test_error(w: &DVector<f64>, w_star: &DVector<f64>, sigma: Option<&DMatrix<f64>>) -> f64 {
    let diff = w - w_star;
    match sigma {
        None => diff.norm_squared(),
        Some(s) => diff.dot(&(s * &diff)),
    }
}

/// `tr((XᵀX)⁻¹)` and `tr((XᵀX)⁻²)` from the singular values of `X`.
pub fn inverse_gram_traces(x: &DMatrix<f64>) -> (f64, f64) {
    let sv = x.clone().singular_values();
    sv.iter().fold((0.0, 0.0), |(a, b), s| {
        let inv = 1.0 / (s * s);
        (a + inv, b + inv * inv)
    })
}

/// Ordinary least-squares line through `(xs, ys)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "linear fit needs two or more paired points".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}
