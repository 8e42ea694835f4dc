//! Dense symmetric-matrix utilities.
//!
//! Everything here works on small dense operators: the projected mass
//! `Π M Π` is at most `ds × ds`. The spectral factorization is the single
//! source for pseudo-inverses, pseudo-determinants and PSD square roots, so
//! all of them agree on which eigenvalues count as zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// A real symmetric `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricOperator(DMatrix<f64>);

impl SymmetricOperator {
    /// Wraps `matrix` after checking it is square and symmetric within
    /// `1e-12 · max(1, ‖A‖∞)`.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid(format!(
                "expected a square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(invalid("matrix has non-finite entries"));
        }
        let scale = inf_norm(&matrix).max(1.0);
        let n = matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let gap = (matrix[(i, j)] - matrix[(j, i)]).abs();
                if gap > SYMMETRY_TOL * scale {
                    return Err(invalid(format!(
                        "matrix is not symmetric: |A[{i},{j}] - A[{j},{i}]| = {gap:.3e}"
                    )));
                }
            }
        }
        Ok(Self(matrix))
    }

    /// Symmetrizes `(A + Aᵀ)/2` without validation. For products that are
    /// symmetric in exact arithmetic.
    pub fn symmetrized(matrix: DMatrix<f64>) -> Self {
        let t = matrix.transpose();
        Self((matrix + t) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &DVector<f64>) -> Self {
        Self(DMatrix::from_diagonal(diag))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    /// `vᵀ A v`.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }
}

impl AsRef<DMatrix<f64>> for SymmetricOperator {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// How eigenvalues are classified as numerically zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankTolerance {
    /// `n · ε_machine · max|λ|`.
    #[default]
    Standard,
    /// `r · max|λ|`.
    Relative(f64),
    Absolute(f64),
}

impl RankTolerance {
    fn resolve(self, n: usize, max_abs: f64) -> f64 {
        match self {
            RankTolerance::Standard => n as f64 * f64::EPSILON * max_abs,
            RankTolerance::Relative(r) => r * max_abs,
            RankTolerance::Absolute(a) => a,
        }
    }
}

/// `A = Q Λ Qᵀ` with eigenvalues sorted nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFactorization {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    rank: usize,
    tolerance: f64,
}

impl SpectralFactorization {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Number of eigenvalues with magnitude above the tolerance.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Raises the tolerance so that at most `k` eigenvalues are retained.
    /// Used when the rank is known structurally, e.g. `rank(ΠMΠ) ≤ rank(Π)`,
    /// and rounding lifts a null eigenvalue above the relative cutoff.
    pub fn with_max_rank(mut self, k: usize) -> Self {
        if self.rank > k {
            self.tolerance = self
                .eigenvalues
                .iter()
                .skip(k)
                .fold(self.tolerance, |t, l| t.max(l.abs()));
            self.rank = self.eigenvalues.iter().filter(|&&l| self.retained(l)).count();
        }
        self
    }

    fn retained(&self, lambda: f64) -> bool {
        lambda.abs() > self.tolerance
    }

    /// `Q f(Λ) Qᵀ` where `f` is applied to retained eigenvalues and
    /// discarded ones map to zero.
    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = if self.retained(lambda) { f(lambda) } else { 0.0 };
            scaled.column_mut(j).scale_mut(w);
        }
        let out = scaled * self.eigenvectors.transpose();
        debug_assert_eq!(out.nrows(), n);
        out
    }

    fn check_psd(&self) -> Result<()> {
        match self.eigenvalues.iter().find(|&&l| self.retained(l) && l < 0.0) {
            Some(&l) => Err(Error::NotPsd(format!("retained eigenvalue {l:.6e} < 0"))),
            None => Ok(()),
        }
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(lambda);
        }
        scaled * self.eigenvectors.transpose()
    }

    /// Moore–Penrose pseudo-inverse `Q Λ⁺ Qᵀ`.
    pub fn pseudo_inverse(&self) -> SymmetricOperator {
        SymmetricOperator::symmetrized(self.spectral_map(|l| 1.0 / l))
    }

    /// Log of the product of retained eigenvalues.
    pub fn log_pseudo_det(&self) -> Result<f64> {
        self.check_psd()?;
        Ok(self
            .eigenvalues
            .iter()
            .filter(|&&l| self.retained(l))
            .map(|l| l.ln())
            .sum())
    }

    /// Sum of the logs of the `k` largest eigenvalues, ignoring the rank
    /// tolerance. Smooth in `A` as long as the `k`-th and `(k+1)`-th
    /// eigenvalues stay separated.
    pub fn log_leading_det(&self, k: usize) -> Result<f64> {
        if k > self.dim() {
            return Err(invalid(format!("k = {k} exceeds dimension {}", self.dim())));
        }
        let head = self.eigenvalues.rows(0, k);
        if let Some(&l) = head.iter().find(|&&l| l <= 0.0) {
            return Err(Error::NotPsd(format!("leading eigenvalue {l:.6e} <= 0")));
        }
        Ok(head.iter().map(|l| l.ln()).sum())
    }

    pub fn psd_sqrt(&self) -> Result<SymmetricOperator> {
        self.check_psd()?;
        Ok(SymmetricOperator::symmetrized(self.spectral_map(f64::sqrt)))
    }

    /// `(A⁺)^{1/2}`.
    pub fn psd_inv_sqrt(&self) -> Result<SymmetricOperator> {
        self.check_psd()?;
        Ok(SymmetricOperator::symmetrized(self.spectral_map(|l| 1.0 / l.sqrt())))
    }
}

/// Eigendecomposition of a symmetric operator. Falls back to an SVD if the
/// symmetric QR iteration does not converge.
pub fn factorize(a: &SymmetricOperator, tol: RankTolerance) -> Result<SpectralFactorization> {
    let n = a.dim();
    if n == 0 {
        return Err(invalid("empty matrix"));
    }
    let m = a.matrix().clone();
    let (values, vectors) = match m.clone().try_symmetric_eigen(f64::EPSILON, 10_000) {
        Some(eig) => (eig.eigenvalues, eig.eigenvectors),
        None => svd_eigen(m)?,
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &vectors.column(src));
    }

    let max_abs = eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs()));
    let tolerance = tol.resolve(n, max_abs);
    let rank = eigenvalues.iter().filter(|l| l.abs() > tolerance).count();
    Ok(SpectralFactorization {
        eigenvalues,
        eigenvectors,
        rank,
        tolerance,
    })
}

fn svd_eigen(m: DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let svd = m
        .try_svd(true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NumericalFailure("eigensolver and SVD did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    // For symmetric A, λᵢ = ±σᵢ with the sign of uᵢ·vᵢ.
    let values = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values.iter().enumerate().map(|(i, &s)| {
            let sign = u.column(i).dot(&v_t.row(i).transpose());
            if sign < 0.0 {
                -s
            } else {
                s
            }
        }),
    );
    Ok((values, u))
}

pub fn pseudo_inverse(f: &SpectralFactorization) -> SymmetricOperator {
    f.pseudo_inverse()
}

pub fn log_pseudo_det(f: &SpectralFactorization) -> Result<f64> {
    f.log_pseudo_det()
}

pub fn psd_sqrt(f: &SpectralFactorization) -> Result<SymmetricOperator> {
    f.psd_sqrt()
}

pub fn psd_inv_sqrt(f: &SpectralFactorization) -> Result<SymmetricOperator> {
    f.psd_inv_sqrt()
}

/// The permutation `P` with `P vec(X) = vec(Xᵀ)` for every `m × n` matrix
/// `X`, stored as an index map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommutationMatrix {
    rows: usize,
    cols: usize,
    // (P y)[k] = y[source[k]]
    source: Vec<usize>,
}

impl CommutationMatrix {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(invalid("commutation matrix needs m, n >= 1"));
        }
        let mut source = vec![0; m * n];
        for i in 0..m {
            for j in 0..n {
                // X[i, j] sits at i + j·m in vec(X) and at j + i·n in vec(Xᵀ).
                source[j + i * n] = i + j * m;
            }
        }
        Ok(Self {
            rows: m,
            cols: n,
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.source.len()
    }

    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        assert_eq!(y.len(), self.dim(), "commutation matrix dimension mismatch");
        DVector::from_iterator(self.dim(), self.source.iter().map(|&k| y[k]))
    }

    /// Applies `P` to every column of `a`, i.e. returns `P a`.
    pub fn apply_rows(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(a.nrows(), self.dim(), "commutation matrix dimension mismatch");
        DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(self.source[r], c)])
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.cols, self.rows).expect("dimensions already validated")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut p = DMatrix::zeros(n, n);
        for (k, &src) in self.source.iter().enumerate() {
            p[(k, src)] = 1.0;
        }
        p
    }
}

pub fn commutation_matrix(m: usize, n: usize) -> Result<CommutationMatrix> {
    CommutationMatrix::new(m, n)
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-major vectorization.
pub fn vec(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "unvec dimension mismatch");
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn random_psd(n: usize, rank: usize, seed: u64) -> SymmetricOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = gaussian(n, rank, &mut rng);
        SymmetricOperator::symmetrized(&b * b.transpose())
    }

    fn diag(values: &[f64]) -> SymmetricOperator {
        SymmetricOperator::from_diagonal(&DVector::from_row_slice(values))
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn rejects_non_symmetric_input() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(SymmetricOperator::new(m), Err(Error::InvalidInput(_))));
        let rect = DMatrix::zeros(2, 3);
        assert!(SymmetricOperator::new(rect).is_err());
    }

    #[test]
    fn factorize_diagonal_and_identity() {
        let f = factorize(&diag(&[2.0, 0.0]), RankTolerance::Standard).unwrap();
        assert_eq!(f.eigenvalues().as_slice(), &[2.0, 0.0]);
        assert_eq!(f.rank(), 1);

        let f = factorize(&SymmetricOperator::identity(3), RankTolerance::Standard).unwrap();
        assert_eq!(f.eigenvalues().as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(f.rank(), 3);
    }

    #[test]
    fn factorization_reconstructs_random_psd() {
        let a = random_psd(5, 5, 7);
        let f = factorize(&a, RankTolerance::Standard).unwrap();
        let err = (f.reconstruct() - a.matrix()).norm();
        assert!(err <= 1e-10 * a.matrix().norm().max(1.0), "err = {err:e}");
        let qtq = f.eigenvectors().transpose() * f.eigenvectors();
        assert!(max_abs_diff(&qtq, &DMatrix::identity(5, 5)) < 1e-12);
        for w in f.eigenvalues().as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn pseudo_inverse_examples() {
        let f = factorize(&diag(&[2.0, 0.0]), RankTolerance::Standard).unwrap();
        assert_eq!(f.pseudo_inverse().matrix(), diag(&[0.5, 0.0]).matrix());

        let x = DVector::from_row_slice(&[0.6, 0.0, 0.8]);
        let proj = SymmetricOperator::symmetrized(DMatrix::identity(3, 3) - &x * x.transpose());
        let f = factorize(&proj, RankTolerance::Standard).unwrap();
        assert!(max_abs_diff(f.pseudo_inverse().matrix(), proj.matrix()) < 1e-14);
    }

    #[test]
    fn rank_cap_drops_rounding_level_eigenvalues() {
        let f = factorize(&diag(&[2.0, 1.0, 1e-14]), RankTolerance::Standard).unwrap();
        assert_eq!(f.rank(), 3);
        let f = f.with_max_rank(2);
        assert_eq!(f.rank(), 2);
        assert_eq!(f.pseudo_inverse().matrix()[(2, 2)], 0.0);
        assert!((f.log_pseudo_det().unwrap() - 2f64.ln()).abs() < 1e-15);
        let g = factorize(&diag(&[2.0, 0.0]), RankTolerance::Standard)
            .unwrap()
            .with_max_rank(2);
        assert_eq!(g.rank(), 1);
    }

    #[test]
    fn rank_deficient_pseudo_inverse_satisfies_penrose_axioms() {
        let a = random_psd(4, 2, 11);
        let f = factorize(&a, RankTolerance::Standard).unwrap();
        assert_eq!(f.rank(), 2);
        let a = a.matrix();
        let p = f.pseudo_inverse().into_matrix();
        assert!(max_abs_diff(&(a * &p * a), a) < 1e-9);
        assert!(max_abs_diff(&(&p * a * &p), &p) < 1e-9);
        let ap = a * &p;
        assert!(max_abs_diff(&ap, &ap.transpose()) < 1e-9);
    }

    #[test]
    fn log_pseudo_det_examples() {
        let f = factorize(&diag(&[2.0, 0.0]), RankTolerance::Standard).unwrap();
        assert!((f.log_pseudo_det().unwrap() - 2.0_f64.ln()).abs() < 1e-15);

        let x = DVector::from_row_slice(&[0.0, 0.6, 0.8]);
        let proj = SymmetricOperator::symmetrized(DMatrix::identity(3, 3) - &x * x.transpose());
        let f = factorize(&proj, RankTolerance::Standard).unwrap();
        assert!(f.log_pseudo_det().unwrap().abs() < 1e-12);

        let indefinite = diag(&[1.0, -1.0]);
        let f = factorize(&indefinite, RankTolerance::Standard).unwrap();
        assert!(matches!(f.log_pseudo_det(), Err(Error::NotPsd(_))));
        assert!(matches!(f.psd_sqrt(), Err(Error::NotPsd(_))));
    }

    #[test]
    fn log_pseudo_det_matches_product_of_nonzero_eigenvalues_on_tangent_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_psd(3, 3, 5);
        let x: DVector<f64> = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
        let x = x.normalize();
        let proj = DMatrix::identity(3, 3) - &x * x.transpose();
        let a = SymmetricOperator::symmetrized(&proj * m.matrix() * &proj);
        let f = factorize(&a, RankTolerance::Standard).unwrap();
        assert_eq!(f.rank(), 2);
        // Brute force: the two nonzero eigenvalues are those of the 2×2
        // compression onto an orthonormal tangent basis.
        let mut basis = DMatrix::zeros(3, 2);
        let helper = if x[0].abs() < 0.9 {
            DVector::from_row_slice(&[1.0, 0.0, 0.0])
        } else {
            DVector::from_row_slice(&[0.0, 1.0, 0.0])
        };
        let t1 = (&helper - &x * x.dot(&helper)).normalize();
        let t2 = x.cross(&t1);
        basis.set_column(0, &t1);
        basis.set_column(1, &t2);
        let c = basis.transpose() * m.matrix() * &basis;
        let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
        assert!((f.log_pseudo_det().unwrap() - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn square_roots() {
        let f = factorize(&diag(&[4.0, 0.0]), RankTolerance::Standard).unwrap();
        assert_eq!(f.psd_sqrt().unwrap().matrix(), diag(&[2.0, 0.0]).matrix());
        assert_eq!(f.psd_inv_sqrt().unwrap().matrix(), diag(&[0.5, 0.0]).matrix());

        let x = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        let proj = SymmetricOperator::symmetrized(DMatrix::identity(3, 3) - &x * x.transpose());
        let f = factorize(&proj, RankTolerance::Standard).unwrap();
        assert!(max_abs_diff(f.psd_sqrt().unwrap().matrix(), proj.matrix()) < 1e-14);
        assert!(max_abs_diff(f.psd_inv_sqrt().unwrap().matrix(), proj.matrix()) < 1e-14);

        let a = random_psd(6, 4, 21);
        let f = factorize(&a, RankTolerance::Standard).unwrap();
        let s = f.psd_sqrt().unwrap().into_matrix();
        assert!(max_abs_diff(&(&s * &s), a.matrix()) < 1e-9);
        let is = f.psd_inv_sqrt().unwrap().into_matrix();
        let pinv_sqrt = factorize(&f.pseudo_inverse(), RankTolerance::Standard)
            .unwrap()
            .psd_sqrt()
            .unwrap();
        assert!(max_abs_diff(&is, pinv_sqrt.matrix()) < 1e-9);
        assert!(max_abs_diff(&(&s * a.matrix()), &(a.matrix() * &s)) < 1e-9);
    }

    #[test]
    fn commutation_examples() {
        let p = commutation_matrix(1, 1).unwrap();
        assert_eq!(p.to_dense(), DMatrix::from_element(1, 1, 1.0));

        let p = commutation_matrix(2, 2).unwrap();
        let y = DVector::from_row_slice(&[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(p.apply(&y).as_slice(), &[1.0, 2.0, 3.0, 4.0]);

        let p = commutation_matrix(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = gaussian(3, 2, &mut rng);
            assert_eq!(p.apply(&vec(&x)), vec(&x.transpose()));
        }
        assert_eq!(p.to_dense().transpose(), p.transpose().to_dense());
        let dense = p.to_dense();
        assert_eq!(&dense * dense.transpose(), DMatrix::identity(6, 6));
        assert!(commutation_matrix(0, 2).is_err());
    }

    #[test]
    fn kron_and_vec() {
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let k = kron(&DMatrix::identity(2, 2), &swap);
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 1.0, 0.0,
            ],
        );
        assert_eq!(k, expected);

        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec(&x).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvec(&vec(&x), 2, 2), x);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = gaussian(3, 2, &mut rng);
        let xm = gaussian(2, 2, &mut rng);
        let b = gaussian(2, 4, &mut rng);
        let lhs = vec(&(&a * &xm * &b));
        let rhs = kron(&b.transpose(), &a) * vec(&xm);
        assert!((lhs - rhs).abs().max() < 1e-12);
    }

    #[test]
    fn factorization_is_deterministic() {
        let a = random_psd(7, 5, 99);
        let f1 = factorize(&a, RankTolerance::Standard).unwrap();
        let f2 = factorize(&a, RankTolerance::Standard).unwrap();
        assert_eq!(f1, f2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn penrose_axioms_on_random_psd(n in 1usize..=12, rank_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let rank = ((n as f64 * rank_frac).floor() as usize).max(1);
            let a = random_psd(n, rank, seed);
            let f = factorize(&a, RankTolerance::Standard).unwrap();
            let a = a.matrix();
            let scale = a.abs().max().max(1.0);
            let p = f.pseudo_inverse().into_matrix();
            let pscale = p.abs().max().max(1.0);
            prop_assert!(max_abs_diff(&(a * &p * a), a) < 1e-9 * scale);
            prop_assert!(max_abs_diff(&(&p * a * &p), &p) < 1e-9 * pscale);
            let ap = a * &p;
            prop_assert!(max_abs_diff(&ap, &ap.transpose()) < 1e-9);
            let pa = &p * a;
            prop_assert!(max_abs_diff(&pa, &pa.transpose()) < 1e-9);
        }

        #[test]
        fn commutation_transposes(m in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = gaussian(m, n, &mut rng);
            let p = commutation_matrix(m, n).unwrap();
            prop_assert_eq!(p.apply(&vec(&x)), vec(&x.transpose()));
            let dense = p.to_dense();
            prop_assert_eq!(&dense * dense.transpose(), DMatrix::identity(m * n, m * n));
        }
    }
}
