//! Small dense helpers for the few places that need a direct solve.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Domain("solve needs a square system".into()));
    }
    let mut m = a.clone();
    let mut x = b.clone();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[[i, k]].abs().total_cmp(&m[[j, k]].abs())).unwrap();
        if m[[piv, k]].abs() <= 1e-13 * scale {
            return Err(Error::Singular(format!("pivot {k} vanishes")));
        }
        if piv != k {
            for j in 0..n {
                m.swap([k, j], [piv, j]);
            }
            x.swap(k, piv);
        }
        for i in k + 1..n {
            let f = m[[i, k]] / m[[k, k]];
            if f != 0.0 {
                for j in k..n {
                    m[[i, j]] -= f * m[[k, j]];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[[k, j]] * x[j];
        }
        x[k] = s / m[[k, k]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_system() {
        let a = array![[0.0, 2.0], [3.0, 1.0]];
        let x = solve(&a, &array![4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(solve(&array![[1.0, 2.0], [2.0, 4.0]], &array![1.0, 1.0]).is_err());
    }
}
