//! Operator algebra on truncated tensor-product spaces and Lindblad
//! superoperators.
//!
//! Conventions used throughout the crate:
//!
//! * Subsystems are ordered cavity ⊗ qubit ⊗ phonon(s).
//! * The qubit basis is (|g⟩, |e⟩) with σ_z|e⟩ = +|e⟩.
//! * Density matrices are vectorized by stacking columns, so the superoperator
//!   of `ρ ↦ A ρ B†` is `conj(B) ⊗ A`.
//! * Hamiltonians are stored divided by ħ, in rad/s.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparse::{kron_into, CsrMatrix};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative tolerance on `max|H - H†| / max|H|`.
pub const HERMITICITY_TOL: f64 = 1e-9;

/// Tolerance used when validating density matrices.
pub const STATE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Subsystem {
    Cavity,
    Qubit,
    Phonon(usize),
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertLayout {
    dims: Vec<usize>,
    kinds: Vec<Subsystem>,
}

impl HilbertLayout {
    /// A layout of anonymous subsystems.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        let kinds = vec![Subsystem::Other; dims.len()];
        Self::with_kinds(dims, kinds)
    }

    pub fn with_kinds(dims: Vec<usize>, kinds: Vec<Subsystem>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidDimension("layout has no subsystems".into()));
        }
        if dims.len() != kinds.len() {
            return Err(Error::DimensionMismatch {
                expected: dims.len(),
                got: kinds.len(),
            });
        }
        if let Some(&d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::InvalidDimension(format!("subsystem dimension {d}")));
        }
        for (d, k) in dims.iter().zip(&kinds) {
            if *k == Subsystem::Qubit && *d != 2 {
                return Err(Error::InvalidDimension(format!(
                    "qubit slot must have dimension 2, got {d}"
                )));
            }
        }
        if kinds.iter().filter(|k| **k == Subsystem::Qubit).count() > 1 {
            return Err(Error::InvalidDimension("more than one qubit slot".into()));
        }
        Ok(HilbertLayout { dims, kinds })
    }

    /// Cavity ⊗ qubit ⊗ `n_modes` phonon modes.
    pub fn tripartite(cavity_dim: usize, n_modes: usize, phonon_dim: usize) -> Result<Self> {
        if cavity_dim < 2 || phonon_dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "truncations must be >= 2 (cavity {cavity_dim}, phonon {phonon_dim})"
            )));
        }
        let mut dims = vec![cavity_dim, 2];
        let mut kinds = vec![Subsystem::Cavity, Subsystem::Qubit];
        for k in 0..n_modes {
            dims.push(phonon_dim);
            kinds.push(Subsystem::Phonon(k));
        }
        Self::with_kinds(dims, kinds)
    }

    /// Qubit ⊗ `n_modes` phonon modes (the cavity eliminated).
    pub fn qubit_phonons(n_modes: usize, phonon_dim: usize) -> Result<Self> {
        if phonon_dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "phonon truncation must be >= 2, got {phonon_dim}"
            )));
        }
        let mut dims = vec![2];
        let mut kinds = vec![Subsystem::Qubit];
        for k in 0..n_modes {
            dims.push(phonon_dim);
            kinds.push(Subsystem::Phonon(k));
        }
        Self::with_kinds(dims, kinds)
    }

    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn kinds(&self) -> &[Subsystem] {
        &self.kinds
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn slot_of(&self, kind: Subsystem) -> Option<usize> {
        self.kinds.iter().position(|k| *k == kind)
    }

    pub fn n_phonon_modes(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| matches!(k, Subsystem::Phonon(_)))
            .count()
    }
}

/// A square operator on the space described by its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    layout: HilbertLayout,
    matrix: DMatrix<Complex64>,
}

impl OperatorMatrix {
    pub fn new(layout: HilbertLayout, matrix: DMatrix<Complex64>) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(OperatorMatrix { layout, matrix })
    }

    /// An operator on a single anonymous subsystem.
    pub fn factor(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidDimension(format!(
                "operator is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Self::new(HilbertLayout::single(matrix.nrows())?, matrix)
    }

    pub fn identity(layout: &HilbertLayout) -> Self {
        let n = layout.total_dim();
        OperatorMatrix {
            layout: layout.clone(),
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(layout: &HilbertLayout) -> Self {
        let n = layout.total_dim();
        OperatorMatrix {
            layout: layout.clone(),
            matrix: DMatrix::zeros(n, n),
        }
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix {
            layout: self.layout.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn scale(&self, factor: f64) -> Self {
        OperatorMatrix {
            layout: self.layout.clone(),
            matrix: &self.matrix * Complex64::new(factor, 0.0),
        }
    }

    pub fn try_mul(&self, rhs: &OperatorMatrix) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(OperatorMatrix {
            layout: self.layout.clone(),
            matrix: &self.matrix * &rhs.matrix,
        })
    }

    pub fn try_add(&self, rhs: &OperatorMatrix) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(OperatorMatrix {
            layout: self.layout.clone(),
            matrix: &self.matrix + &rhs.matrix,
        })
    }

    pub fn commutator(&self, rhs: &OperatorMatrix) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(OperatorMatrix {
            layout: self.layout.clone(),
            matrix: &self.matrix * &rhs.matrix - &rhs.matrix * &self.matrix,
        })
    }

    /// `max|A - A†|` relative to `max|A|`; zero for the zero matrix.
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let diff = (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        diff / scale
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= HERMITICITY_TOL
    }

    fn check_same(&self, rhs: &OperatorMatrix) -> Result<()> {
        if self.layout != rhs.layout {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rhs.dim(),
            });
        }
        Ok(())
    }
}

impl std::ops::Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.try_add(rhs).expect("operator layouts differ")
    }
}

impl std::ops::Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.try_mul(rhs).expect("operator layouts differ")
    }
}

/// Annihilation operator truncated to `dim` Fock states.
pub fn ladder(dim: usize) -> Result<OperatorMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!(
            "ladder operator needs dim >= 2, got {dim}"
        )));
    }
    let mut m = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    OperatorMatrix::factor(m)
}

/// Pauli factors on the qubit basis (|g⟩, |e⟩).
#[derive(Clone, Debug)]
pub struct QubitOps {
    pub sigma_z: OperatorMatrix,
    pub sigma_minus: OperatorMatrix,
    pub sigma_plus: OperatorMatrix,
}

pub fn qubit_ops() -> QubitOps {
    let sz = DMatrix::from_row_slice(2, 2, &[-ONE, ZERO, ZERO, ONE]);
    // σ+ = |e⟩⟨g|
    let sp = DMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO]);
    let sm = sp.adjoint();
    let f = |m| OperatorMatrix::factor(m).expect("2x2 factor");
    QubitOps {
        sigma_z: f(sz),
        sigma_minus: f(sm),
        sigma_plus: f(sp),
    }
}

/// `id ⊗ … ⊗ op ⊗ … ⊗ id` with `op` in `slot`.
pub fn embed(op: &OperatorMatrix, layout: &HilbertLayout, slot: usize) -> Result<OperatorMatrix> {
    let dims = layout.dims();
    if slot >= dims.len() {
        return Err(Error::InvalidDimension(format!(
            "slot {slot} out of range for {} subsystems",
            dims.len()
        )));
    }
    if op.dim() != dims[slot] {
        return Err(Error::DimensionMismatch {
            expected: dims[slot],
            got: op.dim(),
        });
    }
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    let mut m = DMatrix::<Complex64>::identity(left, left).kronecker(op.matrix());
    m = m.kronecker(&DMatrix::<Complex64>::identity(right, right));
    OperatorMatrix::new(layout.clone(), m)
}

/// Column-stacked `vec(ρ)`.
pub fn vectorize(m: &DMatrix<Complex64>) -> Vec<Complex64> {
    m.as_slice().to_vec()
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &[Complex64], dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_column_slice(dim, dim, v)
}

/// A linear map on column-vectorized operators.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperatorMatrix {
    layout: HilbertLayout,
    matrix: CsrMatrix,
}

impl SuperOperatorMatrix {
    pub fn new(layout: HilbertLayout, matrix: CsrMatrix) -> Result<Self> {
        let n = layout.total_dim().pow(2);
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        Ok(SuperOperatorMatrix { layout, matrix })
    }

    pub fn zeros(layout: &HilbertLayout) -> Self {
        let n = layout.total_dim().pow(2);
        SuperOperatorMatrix {
            layout: layout.clone(),
            matrix: CsrMatrix::zeros(n, n),
        }
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Side length of the superoperator matrix, `total_dim²`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Applies the map to an operator and reshapes the result.
    pub fn apply(&self, op: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let d = self.layout.total_dim();
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: op.nrows(),
            });
        }
        Ok(unvectorize(&self.matrix.mul_vec(op.as_slice()), d))
    }

    pub fn try_add(&self, other: &SuperOperatorMatrix) -> Result<Self> {
        if self.layout != other.layout {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(SuperOperatorMatrix {
            layout: self.layout.clone(),
            matrix: self.matrix.add(&other.matrix)?,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        SuperOperatorMatrix {
            layout: self.layout.clone(),
            matrix: self.matrix.scale(Complex64::new(factor, 0.0)),
        }
    }
}

/// `𝓛[o]ρ = o ρ o† − ½{o†o, ρ}` as a superoperator.
pub fn dissipator(op: &OperatorMatrix) -> SuperOperatorMatrix {
    let mut trip = Vec::new();
    push_dissipator(op.matrix(), 1.0, &mut trip);
    let n = op.dim() * op.dim();
    SuperOperatorMatrix {
        layout: op.layout().clone(),
        matrix: CsrMatrix::from_triplets(n, n, trip),
    }
}

fn push_dissipator(o: &DMatrix<Complex64>, rate: f64, out: &mut Vec<(usize, usize, Complex64)>) {
    let d = o.nrows();
    let id = DMatrix::<Complex64>::identity(d, d);
    let odo = o.adjoint() * o;
    let r = Complex64::new(rate, 0.0);
    kron_into(&o.map(|z| z.conj()), o, r, out);
    kron_into(&id, &odo, -0.5 * r, out);
    kron_into(&odo.transpose(), &id, -0.5 * r, out);
}

/// Generator of `∂ρ = −i[H, ρ] + Σ rateᵢ 𝓛[oᵢ]ρ` with `H` in rad/s.
pub fn liouvillian(
    hamiltonian: &OperatorMatrix,
    collapses: &[(f64, &OperatorMatrix)],
) -> Result<SuperOperatorMatrix> {
    let defect = hamiltonian.hermiticity_defect();
    if defect > HERMITICITY_TOL {
        return Err(Error::Model(format!(
            "Hamiltonian is not Hermitian (relative defect {defect:e})"
        )));
    }
    let layout = hamiltonian.layout();
    let d = hamiltonian.dim();
    let id = DMatrix::<Complex64>::identity(d, d);
    let mut trip = Vec::new();
    let minus_i = Complex64::new(0.0, -1.0);
    kron_into(&id, hamiltonian.matrix(), minus_i, &mut trip);
    kron_into(&hamiltonian.matrix().transpose(), &id, -minus_i, &mut trip);
    for (k, (rate, op)) in collapses.iter().enumerate() {
        if !rate.is_finite() || *rate < 0.0 {
            return Err(Error::param(
                &format!("collapse rate #{k}"),
                format!("must be finite and >= 0, got {rate}"),
            ));
        }
        if op.layout() != layout {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: op.dim(),
            });
        }
        if *rate > 0.0 {
            push_dissipator(op.matrix(), *rate, &mut trip);
        }
    }
    let n = d * d;
    SuperOperatorMatrix::new(layout.clone(), CsrMatrix::from_triplets(n, n, trip))
}

/// A density matrix on a layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState {
    layout: HilbertLayout,
    matrix: DMatrix<Complex64>,
}

impl DensityState {
    /// Validates Hermiticity, unit trace and positivity to [`STATE_TOL`].
    pub fn new(layout: HilbertLayout, matrix: DMatrix<Complex64>) -> Result<Self> {
        let state = Self::from_matrix_unchecked(layout, matrix)?;
        state.validate(STATE_TOL)?;
        Ok(state)
    }

    /// Skips the physical-state checks (only shapes are verified).
    pub fn from_matrix_unchecked(layout: HilbertLayout, matrix: DMatrix<Complex64>) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        Ok(DensityState { layout, matrix })
    }

    pub fn pure(layout: HilbertLayout, psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::Model("zero state vector".into()));
        }
        let psi = psi / Complex64::new(norm, 0.0);
        Self::new(layout, &psi * psi.adjoint())
    }

    /// `|index⟩⟨index|` for a basis index of the full space.
    pub fn basis(layout: HilbertLayout, index: usize) -> Result<Self> {
        let n = layout.total_dim();
        if index >= n {
            return Err(Error::InvalidDimension(format!("basis index {index} >= {n}")));
        }
        let mut m = DMatrix::zeros(n, n);
        m[(index, index)] = ONE;
        Ok(DensityState { layout, matrix: m })
    }

    /// Tensor product of per-subsystem density matrices in layout order.
    pub fn product(layout: HilbertLayout, factors: &[DMatrix<Complex64>]) -> Result<Self> {
        if factors.len() != layout.dims().len() {
            return Err(Error::DimensionMismatch {
                expected: layout.dims().len(),
                got: factors.len(),
            });
        }
        let mut m = DMatrix::from_element(1, 1, ONE);
        for (f, &d) in factors.iter().zip(layout.dims()) {
            if f.nrows() != d || f.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: f.nrows(),
                });
            }
            m = m.kronecker(f);
        }
        Self::new(layout, m)
    }

    /// Every subsystem in its lowest basis state (qubit in |g⟩).
    pub fn ground(layout: HilbertLayout) -> Self {
        Self::basis(layout, 0).expect("index 0 exists")
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn expect(&self, op: &OperatorMatrix) -> Result<Complex64> {
        if op.layout() != &self.layout {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.nrows(),
                got: op.dim(),
            });
        }
        Ok((op.matrix() * &self.matrix).trace())
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > tol {
            return Err(Error::Model(format!("state is not Hermitian (defect {herm:e})")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > tol {
            return Err(Error::Model(format!("state trace is {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -tol {
            return Err(Error::Model(format!("state has eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// `(ρ + ρ†)/2`.
    pub(crate) fn symmetrized(layout: HilbertLayout, m: DMatrix<Complex64>) -> Self {
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        DensityState { layout, matrix: h }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_density(d: usize, seed: u64) -> DMatrix<Complex64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        rho / tr
    }

    #[test]
    fn ladder_small_dims() {
        let a2 = ladder(2).unwrap();
        assert_eq!(a2.matrix(), &DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]));
        let a3 = ladder(3).unwrap();
        assert_eq!(a3.matrix()[(0, 1)], c(1.0));
        assert_abs_diff_eq!(a3.matrix()[(1, 2)].re, 2f64.sqrt());
        assert_eq!(a3.matrix().iter().filter(|z| z.norm() > 0.0).count(), 2);
        assert!(matches!(ladder(1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn ladder_commutator_is_truncated_identity() {
        let a = ladder(8).unwrap();
        let comm = a.commutator(&a.adjoint()).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let expected = match (i == j, i) {
                    (true, 7) => -7.0,
                    (true, _) => 1.0,
                    _ => 0.0,
                };
                assert_abs_diff_eq!(comm.matrix()[(i, j)].re, expected, epsilon = 1e-12);
                assert_abs_diff_eq!(comm.matrix()[(i, j)].im, 0.0);
            }
        }
    }

    #[test]
    fn number_operator_diagonal() {
        let a = ladder(6).unwrap();
        let n = &a.adjoint() * &a;
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i == j { i as f64 } else { 0.0 };
                assert_abs_diff_eq!(n.matrix()[(i, j)].re, expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pauli_algebra() {
        let q = qubit_ops();
        let anti = &(&q.sigma_plus * &q.sigma_minus) + &(&q.sigma_minus * &q.sigma_plus);
        assert_eq!(anti.matrix(), &DMatrix::identity(2, 2));
        let cp = q.sigma_z.commutator(&q.sigma_plus).unwrap();
        assert_eq!(cp.matrix(), &(q.sigma_plus.matrix() * c(2.0)));
        let cm = q.sigma_z.commutator(&q.sigma_minus).unwrap();
        assert_eq!(cm.matrix(), &(q.sigma_minus.matrix() * c(-2.0)));
        // ground state is index 0
        assert_eq!(q.sigma_z.matrix()[(0, 0)], c(-1.0));
        assert_eq!(q.sigma_z.matrix()[(1, 1)], c(1.0));
        assert_eq!(q.sigma_plus.matrix()[(1, 0)], c(1.0));
    }

    #[test]
    fn embed_kron_and_trace() {
        let q = qubit_ops();
        let l = HilbertLayout::new(vec![2, 2]).unwrap();
        let e = embed(&q.sigma_z, &l, 0).unwrap();
        let expected = q.sigma_z.matrix().kronecker(&DMatrix::<Complex64>::identity(2, 2));
        assert_eq!(e.matrix(), &expected);

        let a = ladder(3).unwrap();
        let l32 = HilbertLayout::new(vec![3, 2]).unwrap();
        let adag_a = &a.adjoint() * &a;
        let ea = embed(&adag_a, &l32, 0).unwrap();
        assert_abs_diff_eq!(ea.trace().re, adag_a.trace().re * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn embed_disjoint_slots_commute() {
        let l = HilbertLayout::new(vec![3, 2]).unwrap();
        let a = embed(&ladder(3).unwrap(), &l, 0).unwrap();
        let b = embed(&qubit_ops().sigma_plus, &l, 1).unwrap();
        assert!(a.commutator(&b).unwrap().matrix().camax() < 1e-15);
    }

    #[test]
    fn embed_errors() {
        let l = HilbertLayout::new(vec![3, 2]).unwrap();
        assert!(embed(&ladder(3).unwrap(), &l, 2).is_err());
        assert!(matches!(
            embed(&ladder(3).unwrap(), &l, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn layout_invariants() {
        let l = HilbertLayout::tripartite(5, 1, 5).unwrap();
        assert_eq!(l.dims(), &[5, 2, 5]);
        assert_eq!(l.total_dim(), 50);
        assert_eq!(l.slot_of(Subsystem::Qubit), Some(1));
        assert!(HilbertLayout::with_kinds(vec![3], vec![Subsystem::Qubit]).is_err());
        assert!(HilbertLayout::new(vec![2, 0]).is_err());
        assert!(HilbertLayout::tripartite(1, 1, 5).is_err());
    }

    #[test]
    fn dissipator_decays_excited_projector() {
        let q = qubit_ops();
        let d = dissipator(&q.sigma_minus);
        let ee = DMatrix::from_row_slice(2, 2, &[c(0.0), c(0.0), c(0.0), c(1.0)]);
        let out = d.apply(&ee).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
        assert!((out - expected).camax() < 1e-15);
    }

    #[test]
    fn dissipator_matches_direct_formula() {
        // independent route: evaluate o ρ o† − ½{o†o, ρ} with dense products
        let a = ladder(4).unwrap();
        let rho = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.4), c(0.3), c(0.2), c(0.1)]));
        let o = a.matrix();
        let odo = o.adjoint() * o;
        let direct = o * &rho * o.adjoint() - (&odo * &rho + &rho * &odo) * c(0.5);
        let via_super = dissipator(&a).apply(&rho).unwrap();
        assert!((direct - via_super).camax() < 1e-14);
        let rho = random_density(4, 3);
        let direct = o * &rho * o.adjoint() - (&odo * &rho + &rho * &odo) * c(0.5);
        assert!((direct - dissipator(&a).apply(&rho).unwrap()).camax() < 1e-14);
    }

    #[test]
    fn liouvillian_trace_and_hermiticity() {
        let l = HilbertLayout::new(vec![3, 2]).unwrap();
        let q = qubit_ops();
        let a = embed(&ladder(3).unwrap(), &l, 0).unwrap();
        let sm = embed(&q.sigma_minus, &l, 1).unwrap();
        let sz = embed(&q.sigma_z, &l, 1).unwrap();
        let h = (&(&a.adjoint() * &a).scale(1.3) + &(&a.adjoint() * &sm).scale(0.7))
            .try_add(&(&sm.adjoint() * &a).scale(0.7))
            .unwrap()
            .try_add(&sz.scale(-0.4))
            .unwrap();
        let lv = liouvillian(&h, &[(0.5, &a), (0.2, &sm), (0.1, &sz)]).unwrap();
        for seed in 0..5 {
            let rho = random_density(6, seed);
            let out = lv.apply(&rho).unwrap();
            assert!(out.trace().norm() < 1e-12);
            assert!((&out - out.adjoint()).camax() < 1e-12);
        }
    }

    #[test]
    fn liouvillian_rejects_bad_inputs() {
        let a = ladder(3).unwrap();
        assert!(matches!(liouvillian(&a, &[]), Err(Error::Model(_))));
        let h = OperatorMatrix::zeros(a.layout());
        assert!(matches!(
            liouvillian(&h, &[(-1.0, &a)]),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn density_state_validation() {
        let l = HilbertLayout::single(2).unwrap();
        assert!(DensityState::new(l.clone(), DMatrix::identity(2, 2) * c(0.5)).is_ok());
        assert!(DensityState::new(l.clone(), DMatrix::identity(2, 2)).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[c(1.5), c(0.0), c(0.0), c(-0.5)]);
        assert!(DensityState::new(l, bad).is_err());
    }
}
