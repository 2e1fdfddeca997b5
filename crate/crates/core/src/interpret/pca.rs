use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{InterpretError, Rows};

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    pub coords: Vec<(f64, f64)>,
    /// Unit-length principal axes; the largest-magnitude entry of each is positive.
    pub components: [Vec<f64>; 2],
    /// Variance along each axis.
    pub explained: [f64; 2],
    pub mean: Vec<f64>,
}

/// Project mean-centred rows onto the top two covariance eigenvectors.
pub fn pca2(rows: &Rows) -> Result<Projection2D, InterpretError> {
    let (n, d) = (rows.len(), rows.dim);
    if n < 2 {
        return Err(InterpretError::Shape(format!("need at least 2 rows, got {n}")));
    }
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        mean.iter_mut().zip(rows.row(i)).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| rows.row(i)[j] - mean[j]);
    let cov = (centred.transpose() * &centred) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    let scale = centred.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || top <= f64::EPSILON * scale * scale * d as f64 {
        return Err(InterpretError::RankZero);
    }
    let axis = |k: usize| -> Vec<f64> {
        let col = eig.eigenvectors.column(order[k.min(d - 1)]);
        let mut v: Vec<f64> = col.iter().copied().collect();
        if d == 1 && k == 1 {
            v = vec![0.0];
        }
        let pivot = v.iter().enumerate().fold(0usize, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    let components = [axis(0), axis(1)];
    let explained = [top, if d > 1 { eig.eigenvalues[order[1]].max(0.0) } else { 0.0 }];
    let coords = (0..n)
        .map(|i| {
            let r = centred.row(i);
            let dot = |c: &[f64]| r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            (dot(&components[0]), dot(&components[1]))
        })
        .collect();
    Ok(Projection2D { coords, components, explained, mean })
}

/// `label_type<TAB>label<TAB>x<TAB>y` with a header line.
pub fn write_projection_tsv(
    proj: &Projection2D,
    labels: &[(&str, String)],
    path: &Path,
) -> Result<(), InterpretError> {
    if labels.len() != proj.coords.len() {
        return Err(InterpretError::Shape(format!("{} labels for {} points", labels.len(), proj.coords.len())));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "label_type\tlabel\tx\ty")?;
    for ((kind, label), (x, y)) in labels.iter().zip(&proj.coords) {
        writeln!(out, "{kind}\t{label}\t{x:.8e}\t{y:.8e}")?;
    }
    out.flush()?;
    Ok(())
}
