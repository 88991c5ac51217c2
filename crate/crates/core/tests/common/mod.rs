#![allow(dead_code)]

use cnls::band::BandMatrix;
use cnls::Complex64;
use rand::Rng;

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].norm().total_cmp(&a[j][k].norm()))
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k..n {
                let v = a[k][j];
                a[i][j] -= f * v;
            }
            let v = b[k];
            b[i] -= f * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    x
}

fn entry<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Random well-conditioned band matrix of bandwidths `(kl + 1, ku + 1)`:
/// a diagonally dominant `(kl, ku)` matrix with random disjoint adjacent
/// row swaps, so elimination has to pivot.
pub fn random_band<R: Rng>(rng: &mut R, n: usize, kl: usize, ku: usize) -> (BandMatrix, Vec<Vec<Complex64>>) {
    let mut dense = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for (i, row) in dense.iter_mut().enumerate() {
        let lo = i.saturating_sub(kl);
        let hi = (i + ku).min(n - 1);
        let mut sum = 0.0;
        for (j, v) in row.iter_mut().enumerate().take(hi + 1).skip(lo) {
            if j != i {
                *v = entry(rng);
                sum += v.norm();
            }
        }
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        row[i] = Complex64::from_polar(sum + rng.random_range(0.5..2.0), phase);
    }
    let mut i = 0;
    while i + 1 < n {
        if rng.random_bool(0.3) {
            dense.swap(i, i + 1);
            i += 2;
        } else {
            i += 1;
        }
    }
    let lower = (kl + 1).min(n - 1);
    let upper = (ku + 1).min(n - 1);
    let band = BandMatrix::from_dense(&dense, lower, upper).expect("entries inside the band");
    (band, dense)
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| entry(rng)).collect()
}

pub fn max_norm(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.norm()))
}
