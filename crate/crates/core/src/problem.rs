// SPDX-License-Identifier: Apache-2.0

//! Quadratic local costs `f_i(x) = x'A_i x / 2 + B_i'x + C_i`, the packing of
//! `(A_i, B_i)` into one sensitive vector, and exact least-squares references.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::linalg::{symmetric_eigenvalues, DenseMatrix, LinalgError};
use crate::scalar::{Field, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("length {0} is not a triangular number m(m+1)/2")]
    NotTriangular(usize),
    #[error("expected length {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("costs disagree on dimension ({0} vs {1})")]
    MixedDimensions(usize, usize),
    #[error("a problem needs at least one cost")]
    Empty,
    #[error("sum of A_i is not positive definite (smallest eigenvalue {lambda_min:e}, threshold {threshold:e})")]
    NotPositiveDefinite { lambda_min: f64, threshold: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Number of packed upper-triangle entries of an `m x m` symmetric matrix.
pub fn packed_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Length of the sensitive vector `[F(A_i); B_i]`.
pub fn theta_len(m: usize) -> usize {
    m * (m + 3) / 2
}

/// Inverse of [`packed_len`].
pub fn triangular_dim(len: usize) -> Option<usize> {
    let m = (((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (m.saturating_sub(1)..=m + 1).find(|&k| packed_len(k) == len)
}

/// 1-based slot of entry `(p, q)`, `q >= p`, in the packed vector:
/// `(2m - p + 2)(p - 1)/2 + q - (p - 1)`.
pub fn packed_slot(m: usize, p: usize, q: usize) -> usize {
    debug_assert!(1 <= p && p <= q && q <= m);
    (2 * m - p + 2) * (p - 1) / 2 + q - (p - 1)
}

/// Packs the upper triangle of a symmetric matrix row by row.
pub fn vectorize<T: Scalar>(a: &DenseMatrix<T>) -> Result<Vec<T>, ProblemError> {
    if !a.is_square() {
        return Err(ProblemError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.is_symmetric() {
        return Err(ProblemError::NotSymmetric);
    }
    let m = a.rows();
    let mut out = vec![T::zero(); packed_len(m)];
    for p in 1..=m {
        for q in p..=m {
            out[packed_slot(m, p, q) - 1] = a[(p - 1, q - 1)].clone();
        }
    }
    Ok(out)
}

/// Rebuilds the symmetric matrix from its packed upper triangle.
pub fn devectorize<T: Scalar>(theta_a: &[T]) -> Result<DenseMatrix<T>, ProblemError> {
    let m = triangular_dim(theta_a.len()).ok_or(ProblemError::NotTriangular(theta_a.len()))?;
    let mut a = DenseMatrix::zeros(m, m);
    for p in 1..=m {
        for q in p..=m {
            let v = theta_a[packed_slot(m, p, q) - 1].clone();
            a[(p - 1, q - 1)] = v.clone();
            a[(q - 1, p - 1)] = v;
        }
    }
    Ok(a)
}

/// One agent's private cost. `A_i` is held packed, so it is symmetric by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCost<T> {
    dim: usize,
    a_packed: Vec<T>,
    b: Vec<T>,
    c: T,
}

impl<T: Scalar> QuadraticCost<T> {
    pub fn new(a: &DenseMatrix<T>, b: Vec<T>, c: T) -> Result<Self, ProblemError> {
        let a_packed = vectorize(a)?;
        Self::from_packed(a_packed, b, c)
    }

    pub fn from_packed(a_packed: Vec<T>, b: Vec<T>, c: T) -> Result<Self, ProblemError> {
        let dim = triangular_dim(a_packed.len()).ok_or(ProblemError::NotTriangular(a_packed.len()))?;
        if b.len() != dim {
            return Err(ProblemError::Length {
                expected: dim,
                got: b.len(),
            });
        }
        Ok(Self { dim, a_packed, b, c })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self) -> DenseMatrix<T> {
        devectorize(&self.a_packed).expect("packed length is triangular")
    }

    pub fn a_packed(&self) -> &[T] {
        &self.a_packed
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn c(&self) -> &T {
        &self.c
    }

    pub fn value(&self, x: &[T]) -> Result<T, ProblemError> {
        let ax = self.a().mul_vec(x)?;
        let half = T::from_f64(0.5);
        Ok(half * crate::scalar::dot(x, &ax) + crate::scalar::dot(&self.b, x) + self.c.clone())
    }

    /// `A_i x + B_i`.
    pub fn gradient(&self, x: &[T]) -> Result<Vec<T>, ProblemError> {
        if x.len() != self.dim {
            return Err(ProblemError::Length {
                expected: self.dim,
                got: x.len(),
            });
        }
        let ax = self.a().mul_vec(x)?;
        Ok(crate::scalar::add_vec(&ax, &self.b))
    }

    pub fn theta(&self) -> SensitiveVector<T> {
        pack_theta(self)
    }
}

/// `theta_i = [F(A_i); B_i]`, the unit of privacy. `C_i` is never part of it.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitiveVector<T> {
    dim: usize,
    values: Vec<T>,
}

impl<T: Scalar> SensitiveVector<T> {
    pub fn new(dim: usize, values: Vec<T>) -> Result<Self, ProblemError> {
        if values.len() != theta_len(dim) {
            return Err(ProblemError::Length {
                expected: theta_len(dim),
                got: values.len(),
            });
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn a_part(&self) -> &[T] {
        &self.values[..packed_len(self.dim)]
    }

    pub fn b_part(&self) -> &[T] {
        &self.values[packed_len(self.dim)..]
    }
}

pub fn pack_theta<T: Scalar>(cost: &QuadraticCost<T>) -> SensitiveVector<T> {
    let mut values = cost.a_packed.clone();
    values.extend_from_slice(&cost.b);
    SensitiveVector {
        dim: cost.dim,
        values,
    }
}

pub fn unpack_theta<T: Scalar>(theta: &[T], m: usize) -> Result<(DenseMatrix<T>, Vec<T>), ProblemError> {
    if theta.len() != theta_len(m) {
        return Err(ProblemError::Length {
            expected: theta_len(m),
            got: theta.len(),
        });
    }
    let (a, b) = theta.split_at(packed_len(m));
    Ok((devectorize(a)?, b.to_vec()))
}

/// Scalar summary used by the noise calibrators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemShape {
    pub n: usize,
    pub m: usize,
    pub lambda_min: f64,
}

/// The network-wide problem. Construction checks that `A = sum A_i` is
/// positive definite.
#[derive(Clone, Debug)]
pub struct GlobalProblem<T> {
    costs: Vec<QuadraticCost<T>>,
    a_sum: DenseMatrix<T>,
    b_sum: Vec<T>,
    lambda_min: f64,
}

impl<T: Scalar> GlobalProblem<T> {
    pub fn new(costs: Vec<QuadraticCost<T>>) -> Result<Self, ProblemError> {
        Self::assemble(costs, true)
    }

    /// Skips the positive-definiteness check (adversarial fixtures).
    pub fn new_unchecked(costs: Vec<QuadraticCost<T>>) -> Result<Self, ProblemError> {
        Self::assemble(costs, false)
    }

    fn assemble(costs: Vec<QuadraticCost<T>>, check: bool) -> Result<Self, ProblemError> {
        let first = costs.first().ok_or(ProblemError::Empty)?;
        let m = first.dim();
        if let Some(bad) = costs.iter().find(|c| c.dim() != m) {
            return Err(ProblemError::MixedDimensions(m, bad.dim()));
        }
        let mut packed = vec![T::zero(); packed_len(m)];
        let mut b_sum = vec![T::zero(); m];
        for c in &costs {
            packed = crate::scalar::add_vec(&packed, c.a_packed());
            b_sum = crate::scalar::add_vec(&b_sum, c.b());
        }
        let a_sum = devectorize(&packed)?;
        let a64 = a_sum.to_f64();
        let eig = symmetric_eigenvalues(&a64)?;
        let lambda_min = eig[0];
        let norm = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let threshold = 1e-9 * norm;
        if check && !(lambda_min > threshold) {
            return Err(ProblemError::NotPositiveDefinite {
                lambda_min,
                threshold,
            });
        }
        Ok(Self {
            costs,
            a_sum,
            b_sum,
            lambda_min,
        })
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    pub fn dim(&self) -> usize {
        self.a_sum.rows()
    }

    pub fn costs(&self) -> &[QuadraticCost<T>] {
        &self.costs
    }

    pub fn a(&self) -> &DenseMatrix<T> {
        &self.a_sum
    }

    pub fn b(&self) -> &[T] {
        &self.b_sum
    }

    /// Smallest eigenvalue of `A`.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn shape(&self) -> ProblemShape {
        ProblemShape {
            n: self.n(),
            m: self.dim(),
            lambda_min: self.lambda_min,
        }
    }

    pub fn thetas(&self) -> Vec<SensitiveVector<T>> {
        self.costs.iter().map(pack_theta).collect()
    }

    /// `sum_i theta_i`.
    pub fn theta_sum(&self) -> Vec<T> {
        let mut v = vectorize(&self.a_sum).expect("sum of symmetric matrices is symmetric");
        v.extend_from_slice(&self.b_sum);
        v
    }
}

impl<T: Field> GlobalProblem<T> {
    /// `x* = -A^{-1} B`.
    pub fn exact_solution(&self) -> Result<Vec<T>, ProblemError> {
        let neg_b: Vec<T> = self.b_sum.iter().map(|v| -v.clone()).collect();
        Ok(self.a_sum.solve(&neg_b)?)
    }
}

/// Random instances `A_i = s (M M'/m + shift I)`, `B_i = b u` with `M`, `u`
/// uniform on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceGenerator {
    pub m: usize,
    /// Multiplier `s` applied to every `A_i`.
    pub agent_scale: f64,
    pub diag_shift: f64,
    /// Multiplier `b` applied to every `B_i`.
    pub b_scale: f64,
}

impl InstanceGenerator {
    /// Unit-scale agents with a small diagonal shift.
    pub fn plain(m: usize) -> Self {
        Self {
            m,
            agent_scale: 1.0,
            diag_shift: 0.01,
            b_scale: 1.0,
        }
    }

    /// Agents hold `1/n` shares of a global problem whose statistics do not
    /// depend on `n`: `E[A] = total_scale (1/3 + shift) I` and `B` has
    /// per-entry standard deviation `b_total / sqrt(3)`.
    pub fn normalized(m: usize, n: usize, total_scale: f64, diag_shift: f64, b_total: f64) -> Self {
        Self {
            m,
            agent_scale: total_scale / n as f64,
            diag_shift,
            b_scale: b_total / (n as f64).sqrt(),
        }
    }

    pub fn cost<R: Rng + ?Sized>(&self, rng: &mut R) -> QuadraticCost<f64> {
        let m = self.m;
        let entries: Vec<f64> = (0..m * m).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let mm = DenseMatrix::from_row_major(m, m, entries).expect("sized");
        let mut a = mm.mul_mat(&mm.transpose()).expect("square").scale(&(1.0 / m as f64));
        for i in 0..m {
            a[(i, i)] += self.diag_shift;
        }
        // Re-symmetrize exactly against rounding in the product.
        let mut packed = vec![0.0; packed_len(m)];
        for p in 1..=m {
            for q in p..=m {
                packed[packed_slot(m, p, q) - 1] = self.agent_scale * a[(p - 1, q - 1)];
            }
        }
        let b = (0..m)
            .map(|_| self.b_scale * rng.random_range(-1.0..=1.0))
            .collect();
        QuadraticCost::from_packed(packed, b, 0.0).expect("consistent sizes")
    }

    /// Draws until the sum is positive definite.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> GlobalProblem<f64> {
        loop {
            let costs = (0..n).map(|_| self.cost(rng)).collect();
            if let Ok(p) = GlobalProblem::new(costs) {
                return p;
            }
        }
    }
}

/// Plain-text fixture: `m n`, then per agent one line with the packed upper
/// triangle of `A_i` and one line with `B_i`.
pub fn write_problem(problem: &GlobalProblem<f64>) -> String {
    let mut out = format!("{} {}\n", problem.dim(), problem.n());
    for c in problem.costs() {
        let line = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{}", line(c.a_packed()));
        let _ = writeln!(out, "{}", line(c.b()));
    }
    out
}

pub fn read_problem(text: &str) -> Result<GlobalProblem<f64>, ProblemError> {
    read_problem_with(text, true)
}

/// Parses a problem file; `validate == false` accepts a singular sum.
pub fn read_problem_with(text: &str, validate: bool) -> Result<GlobalProblem<f64>, ProblemError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let parse_err = |line: usize, message: String| ProblemError::Parse {
        line: line + 1,
        message,
    };
    let (hline, header) = lines.next().ok_or_else(|| parse_err(0, "missing header".into()))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| parse_err(hline, format!("{e}"))))
        .collect::<Result<_, _>>()?;
    let [m, n] = head[..] else {
        return Err(parse_err(hline, "header must be `m n`".into()));
    };
    let mut floats = |want: usize| -> Result<Vec<f64>, ProblemError> {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(usize::MAX - 1, "unexpected end of input".into()))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| parse_err(ln, format!("{e}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != want {
            return Err(parse_err(ln, format!("expected {want} values, got {}", v.len())));
        }
        Ok(v)
    };
    let mut costs = Vec::with_capacity(n);
    for _ in 0..n {
        let a = floats(packed_len(m))?;
        let b = floats(m)?;
        costs.push(QuadraticCost::from_packed(a, b, 0.0)?);
    }
    if validate {
        GlobalProblem::new(costs)
    } else {
        GlobalProblem::new_unchecked(costs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m2() -> DenseMatrix<f64> {
        DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]])
    }

    #[test]
    fn vectorize_examples() {
        assert_eq!(vectorize(&DenseMatrix::from_rows(&[vec![5.0]])).unwrap(), vec![5.0]);
        assert_eq!(vectorize(&m2()).unwrap(), vec![1.0, 2.0, 3.0]);
        let a3 = DenseMatrix::from_rows(&[
            vec![11.0, 12.0, 13.0],
            vec![12.0, 22.0, 23.0],
            vec![13.0, 23.0, 33.0],
        ]);
        assert_eq!(vectorize(&a3).unwrap(), vec![11.0, 12.0, 13.0, 22.0, 23.0, 33.0]);
    }

    #[test]
    fn slot_formula_enumeration() {
        // Enumerate the index formula directly for m = 3.
        let slots: Vec<usize> = (1..=3)
            .flat_map(|p| (p..=3).map(move |q| packed_slot(3, p, q)))
            .collect();
        assert_eq!(slots, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn devectorize_examples() {
        assert_eq!(devectorize(&[5.0]).unwrap(), DenseMatrix::from_rows(&[vec![5.0]]));
        assert_eq!(devectorize(&[1.0, 2.0, 3.0]).unwrap(), m2());
        assert_eq!(devectorize(&[0.0; 6]).unwrap(), DenseMatrix::zeros(3, 3));
        assert_eq!(devectorize(&[1.0, 2.0]), Err(ProblemError::NotTriangular(2)));
    }

    #[test]
    fn vectorize_rejects_bad_shapes() {
        assert!(matches!(
            vectorize(&DenseMatrix::<f64>::zeros(2, 3)),
            Err(ProblemError::NotSquare { .. })
        ));
        let asym = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert_eq!(vectorize(&asym), Err(ProblemError::NotSymmetric));
    }

    #[test]
    fn pack_and_unpack() {
        let c1 = QuadraticCost::new(&DenseMatrix::from_rows(&[vec![2.0]]), vec![3.0], 7.0).unwrap();
        assert_eq!(pack_theta(&c1).as_slice(), &[2.0, 3.0]);
        let c2 = QuadraticCost::new(&m2(), vec![4.0, 5.0], 0.0).unwrap();
        assert_eq!(pack_theta(&c2).as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let (a, b) = unpack_theta(&[1.0, 2.0, 3.0, 4.0, 5.0], 2).unwrap();
        assert_eq!(a, m2());
        assert_eq!(b, vec![4.0, 5.0]);
        assert!(matches!(unpack_theta(&[1.0; 4], 2), Err(ProblemError::Length { .. })));
    }

    #[test]
    fn triangular_dims() {
        for m in 0..50 {
            assert_eq!(triangular_dim(packed_len(m)), Some(m));
        }
        assert_eq!(triangular_dim(4), None);
    }

    #[test]
    fn exact_solution_examples() {
        let eye = DenseMatrix::<f64>::identity(3);
        let p = GlobalProblem::new(vec![QuadraticCost::new(&eye, vec![0.0; 3], 0.0).unwrap()]).unwrap();
        assert_eq!(p.exact_solution().unwrap(), vec![0.0; 3]);

        let eye2 = DenseMatrix::<f64>::identity(2);
        let c = QuadraticCost::new(&eye2, vec![1.0, 0.0], 0.0).unwrap();
        let p = GlobalProblem::new(vec![c.clone(), c]).unwrap();
        assert_eq!(p.exact_solution().unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn rejects_indefinite_sum() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let c = QuadraticCost::new(&a, vec![0.0, 0.0], 0.0).unwrap();
        assert!(matches!(
            GlobalProblem::new(vec![c]),
            Err(ProblemError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn exact_solution_against_rational_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = InstanceGenerator::plain(3).generate(10, &mut rng);
        let x = p.exact_solution().unwrap();
        let exact_costs = p
            .costs()
            .iter()
            .map(|c| {
                QuadraticCost::from_packed(
                    c.a_packed().iter().map(|v| BigRational::from_f64(*v)).collect(),
                    c.b().iter().map(|v| BigRational::from_f64(*v)).collect(),
                    BigRational::from_f64(0.0),
                )
                .unwrap()
            })
            .collect();
        let xq = GlobalProblem::new(exact_costs).unwrap().exact_solution().unwrap();
        for (a, b) in x.iter().zip(&xq) {
            assert!((a - b.to_f64()).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        let res = crate::scalar::add_vec(&p.a().mul_vec(&x).unwrap(), p.b());
        let rn = crate::scalar::norm_sq(&res).sqrt();
        assert!(rn / (1.0 + crate::scalar::norm_sq(p.b()).sqrt()) <= 1e-9);
    }

    #[test]
    fn gradient_examples() {
        let eye = DenseMatrix::<f64>::identity(2);
        let c = QuadraticCost::new(&eye, vec![0.0, 0.0], 0.0).unwrap();
        assert_eq!(c.gradient(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let c = QuadraticCost::new(&m2(), vec![4.0, -5.0], 1.0).unwrap();
        assert_eq!(c.gradient(&[0.0, 0.0]).unwrap(), vec![4.0, -5.0]);
        assert!(c.gradient(&[0.0]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gen = InstanceGenerator::plain(4);
        for _ in 0..20 {
            let c = gen.cost(&mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = c.gradient(&x).unwrap();
            let h = 1e-5;
            for k in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (c.value(&xp).unwrap() - c.value(&xm).unwrap()) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * (1.0 + g[k].abs()), "{fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn fixture_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = InstanceGenerator::plain(3).generate(4, &mut rng);
        let q = read_problem(&write_problem(&p)).unwrap();
        assert_eq!(q.n(), 4);
        for (a, b) in p.costs().iter().zip(q.costs()) {
            assert_eq!(a.a_packed(), b.a_packed());
            assert_eq!(a.b(), b.b());
        }
        assert!(matches!(read_problem("2 1\n1 2\n"), Err(ProblemError::Parse { .. })));
    }

    proptest! {
        #[test]
        fn vectorize_round_trip(m in 1usize..=6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = DenseMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let v: f64 = rng.random_range(-1e3..1e3);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            let v = vectorize(&a).unwrap();
            prop_assert_eq!(v.len(), packed_len(m));
            prop_assert_eq!(devectorize(&v).unwrap(), a);
        }

        #[test]
        fn slots_form_a_permutation(m in 1usize..=12) {
            let mut seen = vec![false; packed_len(m)];
            for p in 1..=m {
                for q in p..=m {
                    let s = packed_slot(m, p, q);
                    prop_assert!(s >= 1 && s <= packed_len(m));
                    prop_assert!(!seen[s - 1]);
                    seen[s - 1] = true;
                }
            }
            prop_assert!(seen.into_iter().all(|b| b));
        }
    }
}
