//! Dual kernel ridge regression against a primal construction on explicit
//! eigen-features of the grid Gram matrix (nalgebra is the oracle).

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use prosto_core::gp::{krr_fit, krr_mean, krr_std};
use prosto_core::kernel::{gram, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Primal {
    features: DMatrix<f64>,
}

impl Primal {
    /// Rows are `U_r Λ_r^{1/2}` over eigenvalues above round-off.
    fn new(spec: &KernelSpec<f64>, grid: &[Vec<f64>]) -> Self {
        let g = gram(spec, grid).unwrap().values;
        let n = grid.len();
        let k = DMatrix::from_fn(n, n, |i, j| g[(i, j)]);
        let eig = SymmetricEigen::new(k);
        let top = eig.eigenvalues.max();
        let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 1e-13 * top).collect();
        let features = DMatrix::from_fn(n, keep.len(), |i, c| {
            eig.eigenvectors[(i, keep[c])] * eig.eigenvalues[keep[c]].sqrt()
        });
        Self { features }
    }

    /// Mean and variance at every grid point from anchors given as grid indices.
    fn predict(&self, anchors: &[usize], y: &[f64], ridge: f64) -> (Vec<f64>, Vec<f64>) {
        let r = self.features.ncols();
        let phi = DMatrix::from_fn(anchors.len(), r, |i, c| self.features[(anchors[i], c)]);
        let a = phi.transpose() * &phi + DMatrix::identity(r, r) * ridge;
        let a_inv = a.try_inverse().unwrap();
        let theta = &a_inv * phi.transpose() * DVector::from_column_slice(y);
        let mut mean = Vec::new();
        let mut var = Vec::new();
        for q in 0..self.features.nrows() {
            let f = self.features.row(q).transpose();
            mean.push(f.dot(&theta));
            var.push(ridge * f.dot(&(&a_inv * &f)));
        }
        (mean, var)
    }
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen()).collect()).collect()
}

#[test]
fn dual_matches_primal_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..10 {
        let nu = if trial % 2 == 0 { 1.5 } else { 2.5 };
        let spec = KernelSpec::matern(nu, rng.gen_range(0.2..0.8), 2).unwrap();
        let n = rng.gen_range(5..=20);
        let grid = random_grid(&mut rng, n, 2);
        let primal = Primal::new(&spec, &grid);
        let anchors: Vec<usize> = (0..rng.gen_range(1..=12))
            .map(|_| rng.gen_range(0..grid.len()))
            .collect();
        let y: Vec<f64> = anchors.iter().map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ridge = rng.gen_range(0.1..2.0);
        let pts: Vec<Vec<f64>> = anchors.iter().map(|&i| grid[i].clone()).collect();
        let model = krr_fit(&spec, &pts, &y, ridge).unwrap();
        let (mean, var) = primal.predict(&anchors, &y, ridge);
        for (q, z) in grid.iter().enumerate() {
            assert_abs_diff_eq!(krr_mean(&model, &spec, z).unwrap(), mean[q], epsilon = 1e-8);
            assert_abs_diff_eq!(krr_std(&model, &spec, z).unwrap().powi(2), var[q], epsilon = 1e-8);
        }
    }
}

#[test]
fn variance_never_grows_with_more_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for nu in [1.5, 2.5] {
        let spec = KernelSpec::matern(nu, 0.4, 2).unwrap();
        let grid = random_grid(&mut rng, 20, 2);
        let queries = random_grid(&mut rng, 30, 2);
        let mut anchors: Vec<Vec<f64>> = Vec::new();
        let mut prev: Vec<f64> = vec![1.0; queries.len()];
        for z in &grid {
            anchors.push(z.clone());
            let y = vec![0.0; anchors.len()];
            let model = krr_fit(&spec, &anchors, &y, 0.5).unwrap();
            for (q, p) in queries.iter().zip(prev.iter_mut()) {
                let v = krr_std(&model, &spec, q).unwrap().powi(2);
                assert!(v <= *p + 1e-10, "{v} > {p}");
                *p = v;
            }
        }
    }
}
