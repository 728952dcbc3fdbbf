//! Ridge regression on explicit features and kernel ridge regression on
//! precomputed kernel matrices, with sign decisions and λ tuning.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix, KernelMatrix};
use crate::ngram::{KernelKind, PresenceRule};

/// Relative tolerance used when checking that an input Gram matrix is symmetric.
const SYMMETRY_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-8;
const REFINEMENT_STEPS: usize = 3;

/// Dual coefficients over the training documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualModel {
    pub train_ids: Vec<String>,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub kind: KernelKind,
    /// n-gram length of the training kernel, 0 for linear.
    pub n: usize,
    #[serde(default)]
    pub presence: PresenceRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalModel {
    pub weights: Vec<f64>,
    pub lambda: f64,
}

/// Scores and their ±1 decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub labels: Vec<i8>,
}

impl Prediction {
    fn from_scores(scores: Vec<f64>) -> Result<Self> {
        let labels = scores.iter().map(|&s| decide(s)).collect::<Result<_>>()?;
        Ok(Prediction { scores, labels })
    }
}

/// +1 for a non-negative score, −1 otherwise.
pub fn decide(score: f64) -> Result<i8> {
    if score.is_nan() {
        return Err(Error::Numerical("cannot decide the class of a NaN score".into()));
    }
    Ok(if score >= 0.0 { 1 } else { -1 })
}

/// Lower-triangular Cholesky factor, row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors a symmetric matrix given row-major. Only the lower triangle is read.
    pub fn factor(a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix buffer does not match its order");
        let mut l = a;
        for j in 0..n {
            let (head, tail) = l.split_at_mut((j + 1) * n);
            let row_j = &mut head[j * n..];
            let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let diag = d.sqrt();
            row_j[j] = diag;
            let row_j: &[f64] = row_j;
            let update = |row_i: &mut [f64]| {
                row_i[j] = (row_i[j] - dot(&row_i[..j], &row_j[..j])) / diag;
            };
            if (n - j - 1) * j > 32_768 {
                tail.par_chunks_mut(n).for_each(update);
            } else {
                tail.chunks_mut(n).for_each(update);
            }
        }
        for i in 0..n {
            for v in &mut l[i * n + i + 1..(i + 1) * n] {
                *v = 0.0;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            z[i] = (z[i] - dot(row, &z[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }
}

fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    a.par_chunks(n).map(|row| dot(row, x)).collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the SPD system `(A + λI) x = b`, refining the solution until the
/// residual meets `‖r‖∞ ≤ 1e-8 (1 + ‖b‖∞)`.
fn solve_regularized(a: &[f64], n: usize, lambda: f64, b: &[f64]) -> Result<Vec<f64>> {
    let mut shifted = a.to_vec();
    for i in 0..n {
        shifted[i * n + i] += lambda;
    }
    let chol = Cholesky::factor(shifted, n)?;
    let mut x = chol.solve(b);
    let tol = RESIDUAL_TOL * (1.0 + max_abs(b));
    let residual = |x: &[f64]| -> Vec<f64> {
        let ax = mat_vec(a, n, x);
        b.iter()
            .zip(ax)
            .zip(x)
            .map(|((bi, axi), xi)| bi - (axi + lambda * xi))
            .collect()
    };
    let mut r = residual(&x);
    for _ in 0..REFINEMENT_STEPS {
        if max_abs(&r) <= tol {
            break;
        }
        let dx = chol.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        r = residual(&x);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("solution contains non-finite values".into()));
    }
    let res = max_abs(&r);
    if res > tol {
        return Err(Error::Numerical(format!(
            "residual {res:e} exceeds tolerance {tol:e} at lambda {lambda:e}"
        )));
    }
    Ok(x)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::arg(format!("lambda must be positive and finite, got {lambda}")));
    }
    Ok(())
}

fn check_signs(y: &[i8]) -> Result<Vec<f64>> {
    y.iter()
        .map(|&v| match v {
            1 => Ok(1.0),
            -1 => Ok(-1.0),
            other => Err(Error::arg(format!("labels must be +1 or -1, got {other}"))),
        })
        .collect()
}

/// Trains kernel ridge regression on a square training Gram matrix.
pub fn fit_krr(k_train: &KernelMatrix, y: &[i8], lambda: f64) -> Result<DualModel> {
    check_lambda(lambda)?;
    if !k_train.is_square() {
        return Err(Error::arg("training kernel must have identical row and column ids"));
    }
    let m = k_train.rows();
    for i in 0..m {
        for j in 0..i {
            let (a, b) = (k_train.get(i, j), k_train.get(j, i));
            if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::arg(format!(
                    "training kernel is not symmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    if y.len() != m {
        return Err(Error::arg(format!("{} labels for {} training documents", y.len(), m)));
    }
    let targets = check_signs(y)?;
    let coefficients = solve_regularized(k_train.values(), m, lambda, &targets)?;
    Ok(DualModel {
        train_ids: k_train.row_ids().to_vec(),
        coefficients,
        lambda,
        kind: k_train.kind(),
        n: k_train.n(),
        presence: PresenceRule::default(),
    })
}

/// Scores `K_cross · α` for documents in the rows of `k_cross`.
pub fn predict_krr(model: &DualModel, k_cross: &KernelMatrix) -> Result<Prediction> {
    if k_cross.col_ids() != model.train_ids.as_slice() {
        return Err(Error::arg(
            "kernel columns do not match the model's training ids in order",
        ));
    }
    let scores = mat_vec(k_cross.values(), k_cross.cols(), &model.coefficients);
    let scores = if k_cross.cols() == 0 {
        vec![0.0; k_cross.rows()]
    } else {
        scores
    };
    Prediction::from_scores(scores)
}

/// Trains ridge regression: `(XᵀX + λI) w = Xᵀy`.
pub fn fit_rr(x: &DenseMatrix, y: &[i8], lambda: f64) -> Result<PrimalModel> {
    check_lambda(lambda)?;
    if y.len() != x.rows() {
        return Err(Error::arg(format!("{} labels for {} rows", y.len(), x.rows())));
    }
    let targets = check_signs(y)?;
    let p = x.dim();
    let mut xtx = vec![0.0; p * p];
    xtx.par_chunks_mut(p.max(1)).enumerate().take(p).for_each(|(a, out)| {
        for r in 0..x.rows() {
            let row = x.row(r);
            let xa = row[a];
            if xa != 0.0 {
                for (o, v) in out.iter_mut().zip(row) {
                    *o += xa * v;
                }
            }
        }
    });
    let mut xty = vec![0.0; p];
    for (r, t) in targets.iter().enumerate() {
        for (o, v) in xty.iter_mut().zip(x.row(r)) {
            *o += t * v;
        }
    }
    let weights = solve_regularized(&xtx, p, lambda, &xty)?;
    Ok(PrimalModel { weights, lambda })
}

pub fn predict_rr(model: &PrimalModel, x: &DenseMatrix) -> Result<Prediction> {
    if x.dim() != model.weights.len() {
        return Err(Error::arg(format!(
            "feature dimension {} does not match model dimension {}",
            x.dim(),
            model.weights.len()
        )));
    }
    let scores = (0..x.rows()).map(|i| dot(x.row(i), &model.weights)).collect();
    Prediction::from_scores(scores)
}

/// Ordered, duplicate-free list of positive regularization strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("lambda grid is empty".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::Config(format!("lambda grid value {v} is not positive")));
            }
            if values[..i].contains(v) {
                return Err(Error::Config(format!("lambda grid repeats {v}")));
            }
        }
        Ok(LambdaGrid(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for LambdaGrid {
    /// 10⁻¹ down to 10⁻⁷.
    fn default() -> Self {
        LambdaGrid(vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7])
    }
}

impl TryFrom<Vec<f64>> for LambdaGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        LambdaGrid::new(v)
    }
}

impl From<LambdaGrid> for Vec<f64> {
    fn from(g: LambdaGrid) -> Self {
        g.0
    }
}

/// One row of a tuning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Tuned<M> {
    pub lambda: f64,
    pub accuracy: f64,
    pub model: M,
    pub curve: Vec<CurvePoint>,
}

/// Picks the λ with the best validation accuracy. Ties go to the larger λ.
/// A λ whose training fails is recorded and skipped.
pub fn tune_lambda<M>(
    grid: &LambdaGrid,
    mut trainer: impl FnMut(f64) -> Result<M>,
    mut scorer: impl FnMut(&M) -> Result<f64>,
) -> Result<Tuned<M>> {
    let mut best: Option<(f64, f64, M)> = None;
    let mut curve = Vec::with_capacity(grid.values().len());
    let mut last_err = None;
    for &lambda in grid.values() {
        let outcome = trainer(lambda).and_then(|m| scorer(&m).map(|acc| (m, acc)));
        match outcome {
            Ok((model, acc)) => {
                curve.push(CurvePoint {
                    x: lambda,
                    accuracy: Some(acc),
                    error: None,
                });
                let better = match &best {
                    None => true,
                    Some((bl, ba, _)) => acc > *ba || (acc == *ba && lambda > *bl),
                };
                if better {
                    best = Some((lambda, acc, model));
                }
            }
            Err(e) => {
                curve.push(CurvePoint {
                    x: lambda,
                    accuracy: None,
                    error: Some(e.to_string()),
                });
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((lambda, accuracy, model)) => Ok(Tuned {
            lambda,
            accuracy,
            model,
            curve,
        }),
        None => Err(last_err.unwrap_or_else(|| Error::Numerical("no lambda could be fitted".into()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::linear_kernel;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    fn kmat(m: usize, values: Vec<f64>) -> KernelMatrix {
        KernelMatrix::new(ids(m), ids(m), values, KernelKind::Linear, 0).unwrap()
    }

    /// Oracle: Gauss-Jordan inverse of a small dense matrix.
    fn inverse(a: &[f64], n: usize) -> Vec<f64> {
        let mut m = a.to_vec();
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| m[x * n + c].abs().total_cmp(&m[y * n + c].abs()))
                .unwrap();
            for k in 0..n {
                m.swap(c * n + k, p * n + k);
                inv.swap(c * n + k, p * n + k);
            }
            let d = m[c * n + c];
            for k in 0..n {
                m[c * n + k] /= d;
                inv[c * n + k] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r * n + c];
                    for k in 0..n {
                        m[r * n + k] -= f * m[c * n + k];
                        inv[r * n + k] -= f * inv[c * n + k];
                    }
                }
            }
        }
        inv
    }

    fn random_dense(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> DenseMatrix {
        let values = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseMatrix::new(ids(rows), dim, values).unwrap()
    }

    fn random_signs(rng: &mut ChaCha8Rng, m: usize) -> Vec<i8> {
        (0..m).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect()
    }

    #[test]
    fn decide_rule() {
        assert_eq!(decide(0.7).unwrap(), 1);
        assert_eq!(decide(-0.7).unwrap(), -1);
        assert_eq!(decide(0.0).unwrap(), 1);
        assert_eq!(decide(-0.0).unwrap(), 1);
        assert!(decide(f64::NAN).is_err());
        assert_eq!(decide(f64::from(decide(-1.0).unwrap())).unwrap(), -1);
    }

    #[test]
    fn krr_two_by_two() {
        let k = kmat(2, vec![2.0, 0.0, 0.0, 2.0]);
        let model = fit_krr(&k, &[1, -1], 1.0).unwrap();
        assert_relative_eq!(model.coefficients[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(model.coefficients[1], -1.0 / 3.0, epsilon = 1e-15);

        let cross = KernelMatrix::new(vec!["t".into()], ids(2), vec![2.0, 0.0], KernelKind::Linear, 0)
            .unwrap();
        let p = predict_krr(&model, &cross).unwrap();
        assert_relative_eq!(p.scores[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(p.labels, vec![1]);
    }

    #[test]
    fn krr_zero_kernel_and_scalar() {
        let k = kmat(3, vec![0.0; 9]);
        let model = fit_krr(&k, &[1, -1, 1], 1.0).unwrap();
        assert_eq!(model.coefficients, vec![1.0, -1.0, 1.0]);

        let k = kmat(1, vec![5.0]);
        let model = fit_krr(&k, &[1], 0.5).unwrap();
        assert_relative_eq!(model.coefficients[0], 1.0 / 5.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_coefficients_predict_positive() {
        let model = DualModel {
            train_ids: ids(2),
            coefficients: vec![0.0, 0.0],
            lambda: 1.0,
            kind: KernelKind::Hisk,
            n: 3,
            presence: PresenceRule::default(),
        };
        let cross = KernelMatrix::new(ids(3), ids(2), vec![1.0; 6], KernelKind::Hisk, 3).unwrap();
        let p = predict_krr(&model, &cross).unwrap();
        assert_eq!(p.scores, vec![0.0; 3]);
        assert_eq!(p.labels, vec![1; 3]);
    }

    #[test]
    fn krr_argument_errors() {
        let k = kmat(2, vec![2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(fit_krr(&k, &[1, -1], 1.0), Err(Error::Argument(_))));
        let k = kmat(2, vec![2.0, 0.0, 0.0, 2.0]);
        assert!(fit_krr(&k, &[1], 1.0).is_err());
        assert!(fit_krr(&k, &[1, 0], 1.0).is_err());
        assert!(fit_krr(&k, &[1, -1], 0.0).is_err());
        let model = fit_krr(&k, &[1, -1], 1.0).unwrap();
        let cross = KernelMatrix::new(ids(1), vec!["d1".into(), "d0".into()], vec![0.0; 2], KernelKind::Linear, 0)
            .unwrap();
        assert!(matches!(predict_krr(&model, &cross), Err(Error::Argument(_))));
    }

    #[test]
    fn non_spd_reports_pivot() {
        let k = kmat(2, vec![1.0, 0.0, 0.0, -5.0]);
        match fit_krr(&k, &[1, -1], 1.0) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected factorization failure, got {other:?}"),
        }
    }

    #[test]
    fn krr_matches_inverse_oracle_and_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let m = rng.gen_range(1..15);
            let x = random_dense(&mut rng, m, 4);
            let k = linear_kernel(&x, &x).unwrap();
            let y = random_signs(&mut rng, m);
            let lambda = 10f64.powi(-rng.gen_range(0..4));
            let model = fit_krr(&k, &y, lambda).unwrap();
            let mut shifted = k.values().to_vec();
            for i in 0..m {
                shifted[i * m + i] += lambda;
            }
            let inv = inverse(&shifted, m);
            for i in 0..m {
                let expect: f64 = (0..m).map(|j| inv[i * m + j] * f64::from(y[j])).sum();
                assert_relative_eq!(model.coefficients[i], expect, epsilon = 1e-6, max_relative = 1e-6);
            }
            let r = max_abs(
                &(0..m)
                    .map(|i| {
                        dot(&shifted[i * m..(i + 1) * m], &model.coefficients) - f64::from(y[i])
                    })
                    .collect::<Vec<_>>(),
            );
            assert!(r <= 1e-8 * 2.0, "residual {r}");
        }
    }

    #[test]
    fn interpolates_with_tiny_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_dense(&mut rng, 10, 10);
        let mut k = linear_kernel(&x, &x).unwrap().values().to_vec();
        for i in 0..10 {
            k[i * 10 + i] += 1.0;
        }
        let k = kmat(10, k);
        let y = random_signs(&mut rng, 10);
        let model = fit_krr(&k, &y, 1e-7).unwrap();
        assert_eq!(predict_krr(&model, &k).unwrap().labels, y);
    }

    #[test]
    fn rr_scalar_and_zero() {
        let x = DenseMatrix::from_rows(ids(2), vec![vec![1.0], vec![-1.0]]).unwrap();
        let m = fit_rr(&x, &[1, -1], 1.0).unwrap();
        assert_relative_eq!(m.weights[0], 2.0 / 3.0, epsilon = 1e-15);
        let p = predict_rr(&m, &DenseMatrix::from_rows(ids(1), vec![vec![3.0]]).unwrap()).unwrap();
        assert_relative_eq!(p.scores[0], 2.0, epsilon = 1e-14);
        assert_eq!(p.labels, vec![1]);

        let z = DenseMatrix::from_rows(ids(2), vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let m = fit_rr(&z, &[1, -1], 1.0).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        let p = predict_rr(&m, &z).unwrap();
        assert_eq!(p.labels, vec![1, 1]);
        assert!(predict_rr(&m, &x).is_err());
    }

    #[test]
    fn rr_orthonormal_rows_recover_labels() {
        let x = DenseMatrix::from_rows(
            ids(3),
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
        )
        .unwrap();
        let y = vec![1, -1, -1];
        let m = fit_rr(&x, &y, 1e-7).unwrap();
        assert_eq!(predict_rr(&m, &x).unwrap().labels, y);
    }

    #[test]
    fn primal_dual_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_dense(&mut rng, 20, 5);
        let y = random_signs(&mut rng, 20);
        let k = linear_kernel(&x, &x).unwrap();
        let dual = fit_krr(&k, &y, 0.1).unwrap();
        let primal = fit_rr(&x, &y, 0.1).unwrap();
        let a = predict_krr(&dual, &k).unwrap();
        let b = predict_rr(&primal, &x).unwrap();
        for (s, t) in a.scores.iter().zip(&b.scores) {
            assert_relative_eq!(s, t, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn shrinkage_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_dense(&mut rng, 12, 6);
        let k = linear_kernel(&x, &x).unwrap();
        let y = random_signs(&mut rng, 12);
        let norms: Vec<f64> = LambdaGrid::default()
            .values()
            .iter()
            .map(|&l| dot(&fit_krr(&k, &y, l).unwrap().coefficients, &fit_krr(&k, &y, l).unwrap().coefficients).sqrt())
            .collect();
        // grid runs from large to small lambda, so norms grow
        assert!(norms.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn joint_scaling_keeps_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_dense(&mut rng, 15, 4);
        let t = random_dense(&mut rng, 6, 4);
        let k = linear_kernel(&x, &x).unwrap();
        let kc = linear_kernel(&t, &x).unwrap();
        let y = random_signs(&mut rng, 15);
        let base = predict_krr(&fit_krr(&k, &y, 0.01).unwrap(), &kc).unwrap();
        let c = 37.5;
        let scaled = predict_krr(&fit_krr(&k.scaled(c), &y, 0.01 * c).unwrap(), &kc.scaled(c)).unwrap();
        assert_eq!(base.labels, scaled.labels);
    }

    #[test]
    fn grid_validation() {
        assert_eq!(LambdaGrid::default().values().len(), 7);
        assert!(LambdaGrid::new(vec![]).is_err());
        assert!(LambdaGrid::new(vec![0.1, -1.0]).is_err());
        assert!(LambdaGrid::new(vec![0.1, 0.1]).is_err());
    }

    #[test]
    fn tuning_picks_best_and_breaks_ties_up() {
        let grid = LambdaGrid::new(vec![1e-3, 1e-1, 1e-2]).unwrap();
        let t = tune_lambda(&grid, Ok, |&l| Ok(if l > 5e-3 { 0.9 } else { 0.5 })).unwrap();
        assert_eq!(t.lambda, 1e-1);
        assert_eq!(t.curve.len(), 3);

        let single = LambdaGrid::new(vec![1e-4]).unwrap();
        assert_eq!(tune_lambda(&single, Ok, |_| Ok(0.1)).unwrap().lambda, 1e-4);
    }

    #[test]
    fn tuning_skips_failures() {
        let grid = LambdaGrid::new(vec![1e-1, 1e-2]).unwrap();
        let t = tune_lambda(
            &grid,
            |l| if l > 0.05 { Err(Error::Numerical("boom".into())) } else { Ok(l) },
            |_| Ok(0.5),
        )
        .unwrap();
        assert_eq!(t.lambda, 1e-2);
        assert!(t.curve[0].error.is_some());

        let all_fail = tune_lambda(&grid, |_| Err::<f64, _>(Error::Numerical("x".into())), |_| Ok(1.0));
        assert!(all_fail.is_err());
    }
}
