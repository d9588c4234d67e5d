//! Kernel functions, Gram matrices, the RMS width heuristic and the two
//! kernel-combination rules used for multiple-kernel learning.
//!
//! RBF kernels use `k(x, y) = exp(-||x - y||^2 / (2 sigma^2))`.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dataset::{Dataset, FeatureRows};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Rbf { width: f64 },
    /// Plain inner product. Useful for checking against input-space Fisher
    /// discriminants.
    Linear,
    /// `(<x, y> + offset)^degree`.
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn rbf(width: f64) -> Result<Self> {
        let spec = KernelSpec::Rbf { width };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { width } if !(width > 0.0 && width.is_finite()) => Err(
                Error::invalid(format!("rbf width must be positive and finite, got {width}")),
            ),
            KernelSpec::Polynomial { offset, .. } if !offset.is_finite() => {
                Err(Error::invalid("polynomial offset must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Unchecked evaluation; `x` and `y` must have equal length.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match *self {
            KernelSpec::Rbf { width } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Polynomial { degree, offset } => {
                (dot(x, y) + offset).powi(degree as i32)
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Rbf { width } => write!(f, "rbf {width}"),
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree, offset } => write!(f, "poly {degree} {offset}"),
        }
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number `{t}` in kernel `{s}`")))
        };
        let spec = match parts.as_slice() {
            ["rbf", w] => KernelSpec::Rbf { width: num(w)? },
            ["linear"] => KernelSpec::Linear,
            ["poly", d, o] => KernelSpec::Polynomial {
                degree: d
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad degree in kernel `{s}`")))?,
                offset: num(o)?,
            },
            _ => return Err(Error::invalid(format!("unknown kernel `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    spec.validate()?;
    Ok(spec.eval(x, y))
}

/// Cross-kernel block `K[u][v] = k(a_u, b_v)`.
pub fn cross_gram(spec: &KernelSpec, a: &FeatureRows, b: &FeatureRows) -> Result<DMatrix<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    spec.validate()?;
    let rows: Vec<Vec<f64>> = (0..a.len())
        .into_par_iter()
        .map(|u| {
            let x = a.row(u);
            b.rows().map(|y| spec.eval(x, y)).collect()
        })
        .collect();
    Ok(DMatrix::from_fn(a.len(), b.len(), |u, v| rows[u][v]))
}

/// Square Gram over one set of rows, symmetrised as `(K + K^T) / 2`.
pub fn square_gram(spec: &KernelSpec, a: &FeatureRows) -> Result<DMatrix<f64>> {
    let k = cross_gram(spec, a, a)?;
    Ok(symmetrize(&k))
}

pub(crate) fn symmetrize(k: &DMatrix<f64>) -> DMatrix<f64> {
    (k + k.transpose()) * 0.5
}

/// A kernel block together with the dataset sample indices of its rows and
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub row_basis: Vec<usize>,
    pub col_basis: Vec<usize>,
}

impl KernelMatrix {
    pub fn is_square_basis(&self) -> bool {
        self.row_basis == self.col_basis
    }
}

pub fn gram(spec: &KernelSpec, ds: &Dataset, rows: &[usize], cols: &[usize]) -> Result<KernelMatrix> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::invalid("gram needs non-empty row and column lists"));
    }
    if let Some(&bad) = rows.iter().chain(cols).find(|&&i| i >= ds.len()) {
        return Err(Error::invalid(format!("sample index {bad} out of range")));
    }
    let a = ds.features().select(rows);
    let values = if rows == cols {
        square_gram(spec, &a)?
    } else {
        cross_gram(spec, &a, &ds.features().select(cols))?
    };
    Ok(KernelMatrix {
        values,
        row_basis: rows.to_vec(),
        col_basis: cols.to_vec(),
    })
}

/// Root-mean-square pairwise distance of the subset.
///
/// Uses `sum_{i<j} ||x_i - x_j||^2 = n * sum_i ||x_i - mean||^2`.
pub fn rms_width(ds: &Dataset, subset: &[usize]) -> Result<f64> {
    rms_width_rows(&ds.features().select(subset))
}

pub fn rms_width_rows(rows: &FeatureRows) -> Result<f64> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid("rms width needs at least two samples"));
    }
    let first = rows.row(0);
    if rows.rows().all(|r| r == first) {
        return Err(Error::invalid("all samples identical; rms width would be zero"));
    }
    let d = rows.dim();
    let mut mean = vec![0.0; d];
    for r in rows.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let spread: f64 = rows
        .rows()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum();
    let pairs = (n * (n - 1) / 2) as f64;
    let width = (n as f64 * spread / pairs).sqrt();
    if !(width > 0.0) {
        return Err(Error::numeric("rms width evaluated to zero"));
    }
    Ok(width)
}

/// `q` widths `base * m` with multipliers geometrically spaced over `[lo, hi]`.
pub fn width_grid(base: f64, q: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::invalid(format!("invalid width range [{lo}, {hi}]")));
    }
    if q < 2 {
        return Err(Error::invalid(format!("width grid needs q >= 2, got {q}")));
    }
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::invalid(format!("base width must be positive, got {base}")));
    }
    let ratio = hi / lo;
    Ok((0..q)
        .map(|k| {
            let m = if k == 0 {
                lo
            } else if k == q - 1 {
                hi
            } else {
                lo * ratio.powf(k as f64 / (q - 1) as f64)
            };
            base * m
        })
        .collect())
}

/// Base kernels evaluated over one common square basis.
#[derive(Debug, Clone)]
pub struct KernelBank {
    pub specs: Vec<KernelSpec>,
    pub matrices: Vec<KernelMatrix>,
}

impl KernelBank {
    pub fn build(specs: &[KernelSpec], ds: &Dataset, basis: &[usize]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("kernel bank needs at least one kernel"));
        }
        let matrices = specs
            .iter()
            .map(|s| gram(s, ds, basis, basis))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            specs: specs.to_vec(),
            matrices,
        })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }
}

pub(crate) fn check_convex_weights(weights: &[f64], q: usize) -> Result<()> {
    if weights.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            found: weights.len(),
        });
    }
    if weights.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
        return Err(Error::invalid("kernel weights must be non-negative"));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("kernel weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// `sum_t beta_t K_t`.
pub fn combine_convex(bank: &KernelBank, weights: &[f64]) -> Result<KernelMatrix> {
    check_convex_weights(weights, bank.len())?;
    let first = &bank.matrices[0];
    if bank
        .matrices
        .iter()
        .any(|m| m.row_basis != first.row_basis || m.col_basis != first.col_basis)
    {
        return Err(Error::invalid("kernel bank matrices do not share a basis"));
    }
    let values = weighted_sum(bank.matrices.iter().map(|m| &m.values), weights);
    Ok(KernelMatrix {
        values,
        row_basis: first.row_basis.clone(),
        col_basis: first.col_basis.clone(),
    })
}

pub(crate) fn weighted_sum<'a>(
    mats: impl Iterator<Item = &'a DMatrix<f64>>,
    weights: &[f64],
) -> DMatrix<f64> {
    let mut out: Option<DMatrix<f64>> = None;
    for (m, &b) in mats.zip(weights) {
        match out.as_mut() {
            None => out = Some(m * b),
            Some(acc) if b != 0.0 => *acc += m * b,
            Some(_) => {}
        }
    }
    out.expect("at least one matrix")
}

/// Squared-matrix combination `(K1 + K2)/2 + tau (K1 - K2)(K1 - K2)`.
pub fn combine_sm(k1: &KernelMatrix, k2: &KernelMatrix, tau: f64) -> Result<KernelMatrix> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be non-negative, got {tau}")));
    }
    if !k1.is_square_basis() || k1.row_basis != k2.row_basis || k1.col_basis != k2.col_basis {
        return Err(Error::invalid("squared-matrix combination needs two Grams over one square basis"));
    }
    for k in [k1, k2] {
        let asym = (&k.values - k.values.transpose()).amax();
        if asym > 1e-10 * k.values.amax().max(1.0) {
            return Err(Error::invalid("squared-matrix combination needs symmetric inputs"));
        }
    }
    Ok(KernelMatrix {
        values: sm_values(&k1.values, &k2.values, tau),
        row_basis: k1.row_basis.clone(),
        col_basis: k1.col_basis.clone(),
    })
}

pub(crate) fn sm_values(k1: &DMatrix<f64>, k2: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let mut out = (k1 + k2) * 0.5;
    if tau != 0.0 {
        let diff = k1 - k2;
        out += (&diff * &diff) * tau;
    }
    symmetrize(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue_relative;
    use proptest::prelude::*;

    fn ds_from(rows: &[Vec<f64>]) -> Dataset {
        let n = rows.len();
        Dataset::new(
            FeatureRows::from_rows(rows).unwrap(),
            (0..n).map(|i| format!("s{i}")).collect(),
            vec![0; n],
        )
        .unwrap()
    }

    #[test]
    fn rbf_identity_and_unit_exponent() {
        let k = KernelSpec::rbf(0.7).unwrap();
        assert_eq!(eval_kernel(&k, &[1.0, -2.0], &[1.0, -2.0]).unwrap(), 1.0);
        // ||x - y||^2 = 2 sigma^2
        let sigma: f64 = 1.5;
        let k = KernelSpec::rbf(sigma).unwrap();
        let v = eval_kernel(&k, &[0.0], &[(2.0 * sigma * sigma).sqrt()]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn linear_is_dot_product() {
        assert_eq!(eval_kernel(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(eval_kernel(&KernelSpec::Linear, &[1.0], &[3.0, 4.0]).is_err());
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::rbf(-1.0).is_err());
    }

    #[test]
    fn spec_text_round_trip() {
        for s in [KernelSpec::Rbf { width: 0.123456789 }, KernelSpec::Linear, KernelSpec::Polynomial { degree: 2, offset: 1.0 }] {
            assert_eq!(s.to_string().parse::<KernelSpec>().unwrap(), s);
        }
    }

    #[test]
    fn single_sample_gram() {
        let ds = ds_from(&[vec![3.0, 1.0], vec![0.0, 0.0]]);
        let k = gram(&KernelSpec::rbf(1.0).unwrap(), &ds, &[0], &[0]).unwrap();
        assert_eq!(k.values, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn three_point_gram_matches_scalar_loop() {
        let pts = [vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.5, 2.0]];
        let ds = ds_from(&pts);
        let idx = [0, 1, 2];
        let k = gram(&KernelSpec::rbf(1.0).unwrap(), &ds, &idx, &idx).unwrap();
        for u in 0..3 {
            for v in 0..3 {
                let d2: f64 = (0..2).map(|t| (pts[u][t] - pts[v][t]).powi(2)).sum();
                let expect = (-d2 / 2.0).exp();
                assert!((k.values[(u, v)] - expect).abs() < 1e-15);
            }
        }
        assert_eq!(k.values, k.values.transpose());
    }

    #[test]
    fn rms_width_cases() {
        let two = ds_from(&[vec![0.0, 0.0], vec![3.0, 0.0]]);
        assert!((rms_width(&two, &[0, 1]).unwrap() - 3.0).abs() < 1e-15);

        let three = ds_from(&[vec![0.0], vec![1.0], vec![3.0]]);
        // pairs: 1, 9, 4
        let expect = (14.0f64 / 3.0).sqrt();
        assert!((rms_width(&three, &[0, 1, 2]).unwrap() - expect).abs() < 1e-14);
        assert!((expect - 2.1602).abs() < 1e-4);

        let same = ds_from(&[vec![2.0, 2.0], vec![2.0, 2.0], vec![2.0, 2.0]]);
        assert!(rms_width(&same, &[0, 1, 2]).is_err());
        assert!(rms_width(&three, &[0]).is_err());
    }

    #[test]
    fn width_grid_spacing() {
        assert_eq!(width_grid(1.0, 2, 0.1, 10.0).unwrap(), vec![0.1, 10.0]);
        let g = width_grid(1.0, 3, 0.1, 10.0).unwrap();
        assert_eq!(g[0], 0.1);
        assert!((g[1] - 1.0).abs() < 1e-15);
        assert_eq!(g[2], 10.0);

        let g = width_grid(2.5, 20, 0.1, 10.0).unwrap();
        let ratio = 100f64.powf(1.0 / 19.0);
        assert_eq!(g.len(), 20);
        for w in g.windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12);
        }
        assert!((g[0] - 0.25).abs() < 1e-15 && (g[19] - 25.0).abs() < 1e-13);

        assert!(width_grid(1.0, 1, 0.1, 10.0).is_err());
        assert!(width_grid(1.0, 4, 10.0, 0.1).is_err());
        assert!(width_grid(0.0, 4, 0.1, 10.0).is_err());
    }

    fn km(values: DMatrix<f64>) -> KernelMatrix {
        let n = values.nrows();
        KernelMatrix {
            values,
            row_basis: (0..n).collect(),
            col_basis: (0..n).collect(),
        }
    }

    #[test]
    fn convex_combinations() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 4.0]);
        let bank = KernelBank {
            specs: vec![KernelSpec::Linear, KernelSpec::Linear],
            matrices: vec![km(a.clone()), km(b.clone())],
        };
        assert_eq!(combine_convex(&bank, &[0.0, 1.0]).unwrap().values, b);
        assert_eq!(combine_convex(&bank, &[1.0, 0.0]).unwrap().values, a);
        let mix = combine_convex(&bank, &[0.25, 0.75]).unwrap().values;
        // 0.25 * a + 0.75 * b by hand
        let expect = DMatrix::from_row_slice(2, 2, &[1.75, -0.625, -0.625, 3.25]);
        assert!((mix - expect).amax() < 1e-15);

        let same = KernelBank {
            specs: vec![KernelSpec::Linear; 3],
            matrices: vec![km(a.clone()), km(a.clone()), km(a.clone())],
        };
        let out = combine_convex(&same, &[0.2, 0.3, 0.5]).unwrap().values;
        assert!((out - &a).amax() < 1e-15);

        assert!(combine_convex(&bank, &[0.5, 0.6]).is_err());
        assert!(combine_convex(&bank, &[-0.5, 1.5]).is_err());
        assert!(combine_convex(&bank, &[1.0]).is_err());
    }

    #[test]
    fn squared_matrix_cases() {
        let k1 = km(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        let k2 = km(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let out = combine_sm(&k1, &k2, 1.0).unwrap().values;
        assert_eq!(out, DMatrix::from_row_slice(2, 2, &[2.5, 0.0, 0.0, 1.0]));
        assert_eq!(combine_sm(&k1, &k1, 3.0).unwrap().values, k1.values);
        assert_eq!(
            combine_sm(&k1, &k2, 0.0).unwrap().values,
            (&k1.values + &k2.values) * 0.5
        );
        assert!(combine_sm(&k1, &k2, -1.0).is_err());
        let mut other = k2.clone();
        other.row_basis = vec![5, 6];
        other.col_basis = vec![5, 6];
        assert!(combine_sm(&k1, &other, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn rbf_gram_is_psd_with_unit_diagonal(
            pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..12),
            width in 0.05f64..10.0,
        ) {
            let rows = FeatureRows::from_rows(&pts).unwrap();
            let k = square_gram(&KernelSpec::Rbf { width }, &rows).unwrap();
            prop_assert_eq!(&k, &k.transpose());
            for i in 0..k.nrows() {
                prop_assert_eq!(k[(i, i)], 1.0);
            }
            prop_assert!(k.iter().all(|&v| v >= 0.0) && k.iter().all(|&v| v <= 1.0));
            prop_assert!(min_eigenvalue_relative(&k) >= -1e-8);
        }

        #[test]
        fn kernels_are_symmetric_in_arguments(
            x in prop::collection::vec(-5.0f64..5.0, 4),
            y in prop::collection::vec(-5.0f64..5.0, 4),
            width in 0.1f64..4.0,
        ) {
            for spec in [KernelSpec::Rbf { width }, KernelSpec::Linear, KernelSpec::Polynomial { degree: 2, offset: 1.0 }] {
                prop_assert_eq!(spec.eval(&x, &y), spec.eval(&y, &x));
            }
        }

        #[test]
        fn rms_width_is_rigid_motion_invariant(
            pts in prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 2), 3..10),
            angle in 0.0f64..std::f64::consts::TAU,
            shift in prop::collection::vec(-50.0f64..50.0, 2),
        ) {
            let rows = FeatureRows::from_rows(&pts).unwrap();
            prop_assume!(rows.rows().any(|r| r != rows.row(0)));
            let (s, c) = angle.sin_cos();
            let moved: Vec<Vec<f64>> = pts
                .iter()
                .map(|p| vec![c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]])
                .collect();
            let a = rms_width_rows(&rows).unwrap();
            let b = rms_width_rows(&FeatureRows::from_rows(&moved).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }
    }
}
