//! Fixed-design algebra: centering, the Gram matrix `Q_n` and the Noether
//! regularity diagnostic.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest admissible condition number of `Q_n`.
pub const MAX_CONDITION: f64 = 1e12;

/// Noether diagnostic level above which a warning is logged.
pub const NOETHER_WARN: f64 = 0.5;

/// A fixed `n × p` design with its centered form and Gram matrix.
#[derive(Debug, Clone)]
pub struct Design {
    x: DMatrix<f64>,
    x_centered: DMatrix<f64>,
    q_n: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    noether_max: f64,
}

impl Design {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Rows `x_i - x̄_n`.
    pub fn x_centered(&self) -> &DMatrix<f64> {
        &self.x_centered
    }

    /// `Q_n = n⁻¹ X⁰ᵀ X⁰`.
    pub fn q_n(&self) -> &DMatrix<f64> {
        &self.q_n
    }

    /// `n⁻¹ max_i (x_i - x̄)ᵀ Q_n⁻¹ (x_i - x̄)`, in [0, 1].
    pub fn noether_max(&self) -> f64 {
        self.noether_max
    }

    /// `L⁻¹ v` where `Q_n = L Lᵀ`.
    pub fn whiten(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.p() {
            return Err(Error::Dimension(format!("vector of length {} for p = {}", v.len(), self.p())));
        }
        self.chol
            .l_dirty()
            .solve_lower_triangular(v)
            .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))
    }

    /// `vᵀ Q_n⁻¹ v` through the Cholesky factor.
    pub fn quad_form_inverse(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.whiten(v)?.norm_squared().max(0.0))
    }

    /// `vᵀ Q_n⁻¹ v` for a plain slice.
    pub fn quad_form_inverse_slice(&self, v: &[f64]) -> Result<f64> {
        self.quad_form_inverse(&DVector::from_column_slice(v))
    }

    /// `Q_n⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }
}

/// Builds a design from rows `x_i` (all of length `p`).
pub fn build_design(rows: &[Vec<f64>]) -> Result<Design> {
    let n = rows.len();
    let p = rows.first().map_or(0, |r| r.len());
    if p == 0 {
        return Err(Error::Dimension("design needs at least one column".into()));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(Error::Dimension(format!("design row {i} has {} entries, expected {p}", rows[i].len())));
    }
    if n <= p {
        return Err(Error::InsufficientData(format!("n = {n} must exceed p = {p}")));
    }
    if let Some(i) = rows.iter().flatten().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i / p));
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    from_matrix(x)
}

/// Builds a design from an `n × p` matrix.
pub fn from_matrix(x: DMatrix<f64>) -> Result<Design> {
    let (n, p) = x.shape();
    if n <= p || p == 0 {
        return Err(Error::InsufficientData(format!("n = {n} must exceed p = {p} >= 1")));
    }
    if (1..n).all(|i| x.row(i) == x.row(0)) {
        return Err(Error::DegenerateDesign);
    }
    let mean = x.row_mean();
    let mut x_centered = x.clone();
    for mut row in x_centered.row_iter_mut() {
        row -= &mean;
    }
    let q_n = (x_centered.transpose() * &x_centered) / n as f64;
    let q_n = (&q_n + q_n.transpose()) * 0.5;

    let eig = SymmetricEigen::new(q_n.clone());
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(min_ev > 0.0) || max_ev / min_ev > MAX_CONDITION {
        return Err(Error::SingularDesign(format!(
            "Q_n eigenvalues span [{min_ev:e}, {max_ev:e}] (condition limit {MAX_CONDITION:e})"
        )));
    }
    let chol = Cholesky::new(q_n.clone())
        .ok_or_else(|| Error::SingularDesign("Cholesky factorisation of Q_n failed".into()))?;

    let l = chol.l_dirty();
    let mut noether_max: f64 = 0.0;
    for i in 0..n {
        let v: DVector<f64> = x_centered.row(i).transpose();
        if let Some(u) = l.solve_lower_triangular(&v) {
            noether_max = noether_max.max(u.norm_squared());
        }
    }
    let noether_max = noether_max / n as f64;
    if noether_max > NOETHER_WARN {
        log::warn!("Noether diagnostic {noether_max:.3} exceeds {NOETHER_WARN}: one design row dominates Q_n");
    }
    Ok(Design { x, x_centered, q_n, chol, noether_max })
}

/// Design with a single column.
pub fn build_design_1d(x: &[f64]) -> Result<Design> {
    from_matrix(DMatrix::from_column_slice(x.len(), 1, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_line() {
        let d = build_design_1d(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.x_centered().as_slice(), &[-1.0, 0.0, 1.0]);
        assert!((d.q_n()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.noether_max() - 0.5).abs() < 1e-15);
        assert!((d.quad_form_inverse_slice(&[1.0]).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn cross_design() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
        let d = build_design(&rows).unwrap();
        let q = d.q_n();
        assert!((q[(0, 0)] - 0.5).abs() < 1e-15 && (q[(1, 1)] - 0.5).abs() < 1e-15);
        assert!(q[(0, 1)].abs() < 1e-15);
        assert!((d.quad_form_inverse_slice(&[3.0, 4.0]).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn identity_gram_quadratic_form() {
        // Columns orthogonal with unit variance: Q_n = I.
        let rows = vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        let d = build_design(&rows).unwrap();
        assert!((d.quad_form_inverse_slice(&[3.0, 4.0]).unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_singular_designs() {
        assert_eq!(build_design_1d(&[2.0, 2.0, 2.0]).unwrap_err(), Error::DegenerateDesign);
        let rows = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0], vec![4.0, 8.0]];
        assert!(matches!(build_design(&rows), Err(Error::SingularDesign(_))));
        let rows = vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        assert!(matches!(build_design(&rows), Err(Error::SingularDesign(_))));
        assert!(matches!(build_design_1d(&[1.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn quadratic_form_matches_dense_inverse() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..9).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let d = build_design(&rows).unwrap();
            let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let inv = d.q_n().clone().try_inverse().unwrap();
            let oracle = (v.transpose() * inv * &v)[(0, 0)];
            assert!((d.quad_form_inverse(&v).unwrap() - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn noether_shrinks_for_uniform_designs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = [20, 100, 500]
            .iter()
            .map(|&n| {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..10.0)).collect();
                build_design_1d(&x).unwrap().noether_max()
            })
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2], "{vals:?}");
    }

    proptest! {
        #[test]
        fn gram_is_shift_invariant_and_form_nonnegative(
            xs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 6..20),
            shift in (-100.0f64..100.0, -100.0f64..100.0),
            v in (-3.0f64..3.0, -3.0f64..3.0),
        ) {
            let rows: Vec<Vec<f64>> = xs.iter().map(|&(a, b)| vec![a, b]).collect();
            let Ok(d) = build_design(&rows) else { return Ok(()) };
            let shifted: Vec<Vec<f64>> = xs.iter().map(|&(a, b)| vec![a + shift.0, b + shift.1]).collect();
            let ds = build_design(&shifted).unwrap();
            for (a, b) in d.q_n().iter().zip(ds.q_n().iter()) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            }
            let f = d.quad_form_inverse_slice(&[v.0, v.1]).unwrap();
            prop_assert!(f >= 0.0);
            prop_assert!(d.quad_form_inverse_slice(&[0.0, 0.0]).unwrap() == 0.0);
            for j in 0..2 {
                let s: f64 = d.x_centered().column(j).sum();
                prop_assert!(s.abs() < 1e-10 * 5.0 * xs.len() as f64);
            }
            prop_assert!(d.noether_max() >= 0.0 && d.noether_max() <= 1.0 + 1e-12);
        }
    }
}
