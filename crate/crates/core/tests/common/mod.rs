//! Test-side oracles shared by the integration targets.

use sla_grader::data::LoadedSplit;

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// In-sample PCC of a least-squares linear probe from chunk-averaged
/// response features to references.
pub fn linear_probe_pcc(data: &LoadedSplit) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in &data.split.records {
        let chunks = data.chunks(rec).unwrap();
        let mut x = vec![1.0];
        for d in 0..data.features.dim() {
            x.push(chunks.iter().map(|c| c[d]).sum::<f64>() / chunks.len() as f64);
        }
        xs.push(x);
        ys.push(rec.ref_score.unwrap());
    }
    let k = xs[0].len();
    let mut ata = vec![vec![0.0; k]; k];
    let mut aty = vec![0.0; k];
    for (x, y) in xs.iter().zip(&ys) {
        for i in 0..k {
            aty[i] += x[i] * y;
            for j in 0..k {
                ata[i][j] += x[i] * x[j];
            }
        }
    }
    let w = solve(ata, aty);
    let fitted: Vec<f64> = xs.iter().map(|x| x.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
    pearson(&fitted, &ys)
}

/// Covariance-formula Pearson correlation.
pub fn pearson(p: &[f64], r: &[f64]) -> f64 {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mr = r.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vr) = (0.0, 0.0, 0.0);
    for i in 0..p.len() {
        cov += (p[i] - mp) * (r[i] - mr);
        vp += (p[i] - mp).powi(2);
        vr += (r[i] - mr).powi(2);
    }
    cov / (vp * vr).sqrt()
}
