//! Two-dimensional display coordinates by principal component analysis.

use a3s::Matrix;
use nalgebra::{DMatrix, SymmetricEigen};

/// Projects every row onto the two leading principal axes.
///
/// Each axis is signed so its largest-magnitude loading is positive, which
/// makes the layout reproducible across runs and platforms.
pub fn pca_2d(features: &Matrix) -> Vec<[f64; 2]> {
    let (n, d) = (features.rows(), features.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(features.row(i)) {
            *m += x / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| features.row(i)[j] - mean[j]);
    let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
    let eigen = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]).then(a.cmp(&b)));
    let axes: Vec<Vec<f64>> = order
        .iter()
        .take(2)
        .map(|&c| {
            let v: Vec<f64> = eigen.eigenvectors.column(c).iter().copied().collect();
            let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                v.iter().map(|x| -x).collect()
            } else {
                v
            }
        })
        .collect();

    (0..n)
        .map(|i| {
            let row = centered.row(i);
            let mut out = [0.0; 2];
            for (slot, axis) in out.iter_mut().zip(&axes) {
                *slot = row.iter().zip(axis).map(|(x, a)| x * a).sum();
            }
            out
        })
        .collect()
}
