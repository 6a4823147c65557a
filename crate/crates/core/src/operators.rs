//! States and operators on the composite target ⊗ auxiliary space.
//!
//! Basis ordering is `|m, n⟩ → m·M + n` with the target level `m` as the slow
//! index and the auxiliary level `n` as the fast one, so every `M×M` diagonal
//! block of a composite matrix belongs to a single target level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, hermitian_eigenvalues, kron, symmetrize, CMatrix, C64, ONE, ZERO};

/// Tolerance on `‖H − H†‖_max` accepted by [`HermitianOperator::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SystemKind {
    Qubit,
    Oscillator { levels: usize },
}

impl SystemKind {
    pub fn dim(&self) -> usize {
        match *self {
            SystemKind::Qubit => 2,
            SystemKind::Oscillator { levels } => levels,
        }
    }

    /// Qubit for `dim == 2`, truncated oscillator otherwise.
    pub fn from_dim(dim: usize) -> Result<Self> {
        match dim {
            0 | 1 => Err(Error::Domain(format!("target dimension must be at least 2, got {dim}"))),
            2 => Ok(SystemKind::Qubit),
            n => Ok(SystemKind::Oscillator { levels: n }),
        }
    }

    fn validate(&self) -> Result<()> {
        if let SystemKind::Oscillator { levels } = *self {
            if levels < 2 {
                return Err(Error::Domain(format!("oscillator needs at least 2 levels, got {levels}")));
            }
        }
        Ok(())
    }
}

/// A cooling scenario: target kind, auxiliary size and the rates `g`, `γ`,
/// `n̄`, `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub target: SystemKind,
    pub aux_dim: usize,
    /// Bound on the interaction eigenvalues.
    pub g: f64,
    /// Thermalization rate of the target.
    pub gamma: f64,
    /// Thermal occupancy of the target's bath.
    pub nbar: f64,
    /// Zero-temperature damping rate of the auxiliary.
    pub kappa: f64,
}

impl SystemSpec {
    pub fn new(target: SystemKind, aux_dim: usize, g: f64, gamma: f64, nbar: f64, kappa: f64) -> Result<Self> {
        let spec = SystemSpec { target, aux_dim, g, gamma, nbar, kappa };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        if self.aux_dim < 2 {
            return Err(Error::Domain(format!("auxiliary dimension must be at least 2, got {}", self.aux_dim)));
        }
        if !(self.g.is_finite() && self.g > 0.0) {
            return Err(Error::Domain(format!("g must be positive, got {}", self.g)));
        }
        for (name, v) in [("gamma", self.gamma), ("nbar", self.nbar), ("kappa", self.kappa)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Domain(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn target_dim(&self) -> usize {
        self.target.dim()
    }

    /// Composite dimension `N·M`.
    pub fn dim(&self) -> usize {
        self.target_dim() * self.aux_dim
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// Complex Hermitian matrix: Hamiltonians and Hermitian observables.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    /// Checks Hermiticity to [`HERMITIAN_TOL`] and stores the symmetrized matrix.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let defect = linalg::hermiticity_defect(&m);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(HermitianOperator(symmetrize(&m)))
    }

    /// Symmetrizes unconditionally, for matrices that are Hermitian up to
    /// accumulated rounding.
    pub(crate) fn from_symmetrized(m: CMatrix) -> Self {
        HermitianOperator(symmetrize(&m))
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianOperator(CMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.0)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |acc, l| acc.max(l.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        HermitianOperator(&self.0 * C64::new(s, 0.0))
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix on the composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-9;
    pub const POSITIVITY_TOL: f64 = 1e-9;

    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let defect = linalg::hermiticity_defect(&m);
        if defect > Self::HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {defect:e})")));
        }
        let rho = DensityMatrix(symmetrize(&m));
        let tr = rho.trace();
        if (tr - 1.0).abs() > Self::TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < -Self::POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        DensityMatrix(m)
    }

    /// Pure state `|k⟩⟨k|` of the computational basis.
    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::DimensionMismatch { expected: dim, found: k });
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = ONE;
        Ok(DensityMatrix(m))
    }

    /// `target ⊗ aux`.
    pub fn product(target: &DensityMatrix, aux: &DensityMatrix) -> Self {
        DensityMatrix(kron(&target.0, &aux.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Real diagonal (populations in the computational basis).
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.0[(k, k)].re).collect()
    }
}

/// Lowering operator `σ` (qubit) or truncated ladder operator `a` (oscillator).
pub fn lowering_operator(kind: SystemKind) -> CMatrix {
    let n = kind.dim();
    let mut a = CMatrix::zeros(n, n);
    let scale = |k: usize| match kind {
        SystemKind::Qubit => 1.0,
        SystemKind::Oscillator { .. } => (k as f64).sqrt(),
    };
    for k in 1..n {
        a[(k - 1, k)] = C64::new(scale(k), 0.0);
    }
    a
}

/// Equilibrium state of the target at occupancy `n̄`.
///
/// Qubit: `diag(1 − P_T, P_T)` with `P_T = n̄/(1 + 2n̄)`. Oscillator: the
/// Boltzmann weights `r^n`, `r = n̄/(1 + n̄)`, renormalized over the retained
/// levels.
pub fn thermal_state(kind: SystemKind, nbar: f64) -> Result<DensityMatrix> {
    if !(nbar.is_finite() && nbar >= 0.0) {
        return Err(Error::Domain(format!("thermal occupancy must be non-negative, got {nbar}")));
    }
    kind.validate()?;
    let n = kind.dim();
    let weights: Vec<f64> = match kind {
        SystemKind::Qubit => {
            let pt = excited_population(nbar);
            vec![1.0 - pt, pt]
        }
        SystemKind::Oscillator { .. } => {
            let r = nbar / (1.0 + nbar);
            let raw: Vec<f64> = (0..n).map(|k| r.powi(k as i32)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / z).collect()
        }
    };
    let diag = nalgebra::DVector::from_iterator(n, weights.into_iter().map(|w| C64::new(w, 0.0)));
    Ok(DensityMatrix::from_matrix_unchecked(CMatrix::from_diagonal(&diag)))
}

/// `P_T = n̄/(1 + 2n̄)`, the qubit's equilibrium excited population.
pub fn excited_population(nbar: f64) -> f64 {
    nbar / (1.0 + 2.0 * nbar)
}

/// Thermal target with the auxiliary in its ground state.
pub fn initial_state(spec: &SystemSpec) -> Result<DensityMatrix> {
    let target = thermal_state(spec.target, spec.nbar)?;
    let aux = DensityMatrix::basis_state(spec.aux_dim, 0)?;
    Ok(DensityMatrix::product(&target, &aux))
}

/// `op ⊗ I_M`.
pub fn embed_target(op: &CMatrix, aux_dim: usize) -> Result<CMatrix> {
    if !op.is_square() {
        return Err(Error::DimensionMismatch { expected: op.nrows(), found: op.ncols() });
    }
    if aux_dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    Ok(kron(op, &CMatrix::identity(aux_dim, aux_dim)))
}

/// `I_N ⊗ op`.
pub fn embed_aux(op: &CMatrix, target_dim: usize) -> Result<CMatrix> {
    if !op.is_square() {
        return Err(Error::DimensionMismatch { expected: op.nrows(), found: op.ncols() });
    }
    if target_dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    Ok(kron(&CMatrix::identity(target_dim, target_dim), op))
}

/// State pairs `(|0, j⟩, |m, n⟩)` coupled by the conjectured-optimal
/// interaction, as composite basis indices.
///
/// The first family swaps every excited level `|j, 0⟩` into the ground block
/// `|0, j⟩`; the second returns the population that thermalization pushes
/// from `|0, x⟩` up to `|1, x⟩` into unused auxiliary levels `|0, N−1+x⟩`.
/// Both upper limits are clamped so every index stays in range.
pub fn optimal_pairs(target_dim: usize, aux_dim: usize) -> Vec<(usize, usize)> {
    let (n, m) = (target_dim, aux_dim);
    let idx = |t: usize, a: usize| t * m + a;
    let mut pairs = Vec::new();
    let first_end = (m - 1).min(n - 1);
    for j in 1..=first_end {
        pairs.push((idx(0, j), idx(j, 0)));
    }
    let second_end = (m - 1).min(2 * n - 2);
    for j in n..=second_end {
        pairs.push((idx(0, j), idx(1, j + 1 - n)));
    }
    pairs
}

/// `G + G†` with `G = g Σ |0, j⟩⟨j, 0| + g Σ |0, j⟩⟨1, j − N + 1|`.
pub fn optimal_hamiltonian(spec: &SystemSpec) -> HermitianOperator {
    let d = spec.dim();
    let mut h = CMatrix::zeros(d, d);
    let g = C64::new(spec.g, 0.0);
    for (ket, bra) in optimal_pairs(spec.target_dim(), spec.aux_dim) {
        h[(ket, bra)] += g;
        h[(bra, ket)] += g;
    }
    HermitianOperator::from_symmetrized(h)
}

/// Removes every component of `h` that acts on one subsystem only.
///
/// The local subspace `{A ⊗ I} ∪ {I ⊗ B}` is spanned by the partial-trace
/// images, so the orthogonal projection is
/// `H − tr_B(H)/M ⊗ I − I ⊗ tr_A(H)/N + tr(H)/(NM) I`.
pub fn project_out_local(h: &CMatrix, target_dim: usize, aux_dim: usize) -> Result<CMatrix> {
    let (n, m) = (target_dim, aux_dim);
    let d = n * m;
    if h.nrows() != d || h.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: h.nrows() });
    }
    let mut tr_aux = CMatrix::zeros(n, n);
    let mut tr_target = CMatrix::zeros(m, m);
    for a in 0..n {
        for b in 0..n {
            tr_aux[(a, b)] = (0..m).map(|k| h[(a * m + k, b * m + k)]).sum();
        }
    }
    for x in 0..m {
        for y in 0..m {
            tr_target[(x, y)] = (0..n).map(|k| h[(k * m + x, k * m + y)]).sum();
        }
    }
    let total = h.trace();
    let mut out = h.clone();
    for r in 0..d {
        for c in 0..d {
            let (ra, rx) = (r / m, r % m);
            let (ca, cx) = (c / m, c % m);
            let mut local = ZERO;
            if rx == cx {
                local += tr_aux[(ra, ca)] / m as f64;
            }
            if ra == ca {
                local += tr_target[(rx, cx)] / n as f64;
            }
            if r == c {
                local -= total / d as f64;
            }
            out[(r, c)] -= local;
        }
    }
    Ok(out)
}

/// Outcome of checking `|λ_j| ≤ g` on the interaction part of a Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBound {
    pub satisfied: bool,
    pub max_abs_eigenvalue: f64,
}

/// Relative slack allowed on the eigenvalue bound.
pub const BOUND_SLACK: f64 = 1e-9;

pub fn constraint_eigenvalue_bound(
    h: &HermitianOperator,
    target_dim: usize,
    aux_dim: usize,
    g: f64,
) -> Result<SpectralBound> {
    let interaction = HermitianOperator::from_symmetrized(project_out_local(h.matrix(), target_dim, aux_dim)?);
    let max_abs = interaction.spectral_radius();
    Ok(SpectralBound { satisfied: max_abs <= g * (1.0 + BOUND_SLACK), max_abs_eigenvalue: max_abs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hs_inner, hs_norm};
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn spec(n: usize, m: usize, g: f64) -> SystemSpec {
        SystemSpec::new(SystemKind::from_dim(n).unwrap(), m, g, 0.0, 0.0, 0.0).unwrap()
    }

    fn random_hermitian(d: usize, seed: &[f64]) -> CMatrix {
        let mut h = CMatrix::zeros(d, d);
        let mut it = seed.iter().cycle();
        for r in 0..d {
            for col in r..d {
                let re = *it.next().unwrap();
                let im = if r == col { 0.0 } else { *it.next().unwrap() };
                h[(r, col)] = C64::new(re, im);
                h[(col, r)] = C64::new(re, -im);
            }
        }
        h
    }

    /// Orthonormal basis of the local operator subspace, built by
    /// Gram–Schmidt over `E_ab ⊗ I` and `I ⊗ E_xy`.
    fn local_basis(n: usize, m: usize) -> Vec<CMatrix> {
        let mut raw = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let mut e = CMatrix::zeros(n, n);
                e[(a, b)] = ONE;
                raw.push(kron(&e, &CMatrix::identity(m, m)));
            }
        }
        for x in 0..m {
            for y in 0..m {
                let mut e = CMatrix::zeros(m, m);
                e[(x, y)] = ONE;
                raw.push(kron(&CMatrix::identity(n, n), &e));
            }
        }
        let mut basis: Vec<CMatrix> = Vec::new();
        for mut v in raw {
            for b in &basis {
                let overlap = hs_inner(b, &v);
                v -= b * overlap;
            }
            let norm = hs_norm(&v);
            if norm > 1e-10 {
                basis.push(v / c(norm));
            }
        }
        basis
    }

    /// Reference projection: subtract the component along each orthonormal
    /// local basis element.
    fn oracle_projection(h: &CMatrix, n: usize, m: usize) -> CMatrix {
        let mut out = h.clone();
        for b in local_basis(n, m) {
            let overlap = hs_inner(&b, h);
            out -= &b * overlap;
        }
        out
    }

    #[test]
    fn lowering_qubit_and_small_oscillators() {
        let s = lowering_operator(SystemKind::Qubit);
        assert_eq!(s, CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]));
        let a3 = lowering_operator(SystemKind::Oscillator { levels: 3 });
        for r in 0..3 {
            for col in 0..3 {
                let want = match (r, col) {
                    (0, 1) => 1.0,
                    (1, 2) => 2f64.sqrt(),
                    _ => 0.0,
                };
                assert_eq!(a3[(r, col)], c(want));
            }
        }
        assert_eq!(lowering_operator(SystemKind::Oscillator { levels: 2 }), s);
    }

    #[test]
    fn number_operator_is_exact() {
        for n in 2..9 {
            let a = lowering_operator(SystemKind::Oscillator { levels: n });
            let num = a.adjoint() * &a;
            for r in 0..n {
                for col in 0..n {
                    let want = if r == col { r as f64 } else { 0.0 };
                    assert!((num[(r, col)] - c(want)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn thermal_qubit_values() {
        let rho = thermal_state(SystemKind::Qubit, 0.5).unwrap();
        assert_eq!(rho.populations(), vec![0.75, 0.25]);
        let cold = thermal_state(SystemKind::Qubit, 0.0).unwrap();
        assert_eq!(cold.populations(), vec![1.0, 0.0]);
    }

    #[test]
    fn thermal_truncated_oscillator() {
        let rho = thermal_state(SystemKind::Oscillator { levels: 4 }, 0.1).unwrap();
        let r: f64 = 1.0 / 11.0;
        let z = 1.0 + r + r * r + r * r * r;
        for (k, p) in rho.populations().into_iter().enumerate() {
            assert!((p - r.powi(k as i32) / z).abs() < 1e-15);
        }
    }

    #[test]
    fn thermal_rejects_negative_occupancy() {
        assert!(matches!(thermal_state(SystemKind::Qubit, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn embeddings_by_hand() {
        let id6 = CMatrix::identity(6, 6);
        assert_eq!(embed_target(&CMatrix::identity(2, 2), 3).unwrap(), id6);
        assert_eq!(embed_aux(&CMatrix::identity(3, 3), 2).unwrap(), id6);

        let s = lowering_operator(SystemKind::Qubit);
        let t = embed_target(&s, 2).unwrap();
        let a = embed_aux(&s, 2).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let tw = if (r, col) == (0, 2) || (r, col) == (1, 3) { ONE } else { ZERO };
                let aw = if (r, col) == (0, 1) || (r, col) == (2, 3) { ONE } else { ZERO };
                assert_eq!(t[(r, col)], tw);
                assert_eq!(a[(r, col)], aw);
            }
        }

        let proj = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![ZERO, ONE]));
        let e = embed_target(&proj, 3).unwrap();
        let diag: Vec<f64> = (0..6).map(|k| e[(k, k)].re).collect();
        assert_eq!(diag, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);

        let p3 = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, ZERO, ZERO]));
        let e = embed_aux(&p3, 2).unwrap();
        let diag: Vec<f64> = (0..6).map(|k| e[(k, k)].re).collect();
        assert_eq!(diag, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn embed_rejects_non_square() {
        assert!(embed_target(&CMatrix::zeros(2, 3), 2).is_err());
        assert!(embed_aux(&CMatrix::zeros(3, 2), 2).is_err());
    }

    #[test]
    fn optimal_hamiltonian_small_cases() {
        let h = optimal_hamiltonian(&spec(2, 3, 1.0));
        let m = h.matrix();
        // |0,1⟩ = 1 ↔ |1,0⟩ = 3 and |0,2⟩ = 2 ↔ |1,1⟩ = 4.
        for r in 0..6 {
            for col in 0..6 {
                let on = matches!((r, col), (1, 3) | (3, 1) | (2, 4) | (4, 2));
                assert_eq!(m[(r, col)], if on { ONE } else { ZERO }, "entry ({r},{col})");
            }
        }
        let h22 = optimal_hamiltonian(&spec(2, 2, 1.0));
        let m = h22.matrix();
        for r in 0..4 {
            for col in 0..4 {
                let on = matches!((r, col), (1, 2) | (2, 1));
                assert_eq!(m[(r, col)], if on { ONE } else { ZERO });
            }
        }
    }

    #[test]
    fn optimal_hamiltonian_spectrum_2_3() {
        let vals = optimal_hamiltonian(&spec(2, 3, 1.0)).eigenvalues();
        let want = [-1.0, -1.0, 0.0, 0.0, 1.0, 1.0];
        for (v, w) in vals.iter().zip(want) {
            assert!((v - w).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_hamiltonian_bounded_for_all_sizes() {
        for n in 2..=6 {
            for m in 2..=11 {
                let g = 0.7;
                let h = optimal_hamiltonian(&spec(n, m, g));
                let vals = h.eigenvalues();
                assert!(vals.iter().all(|l| l.abs() <= g * (1.0 + 1e-12)), "N={n} M={m}: {vals:?}");
                let pairs = optimal_pairs(n, m);
                let mut seen = std::collections::HashSet::new();
                for (a, b) in pairs {
                    assert!(a < n * m && b < n * m);
                    assert!(seen.insert(a) && seen.insert(b), "pairs overlap at N={n} M={m}");
                }
            }
        }
    }

    #[test]
    fn projection_of_local_operators_vanishes() {
        let a = random_hermitian(2, &[0.3, -1.2, 0.8, 0.5]);
        let local = kron(&a, &CMatrix::identity(3, 3));
        assert!(hs_norm(&project_out_local(&local, 2, 3).unwrap()) < 1e-14);
        let b = random_hermitian(3, &[0.1, 0.9, -0.4, 0.2, 0.6, -0.7]);
        let local = kron(&CMatrix::identity(2, 2), &b);
        assert!(hs_norm(&project_out_local(&local, 2, 3).unwrap()) < 1e-14);
        assert!(hs_norm(&project_out_local(&CMatrix::identity(6, 6), 2, 3).unwrap()) < 1e-14);
    }

    #[test]
    fn optimal_hamiltonian_has_no_local_part() {
        let h = optimal_hamiltonian(&spec(2, 3, 1.0));
        let oracle = oracle_projection(h.matrix(), 2, 3);
        assert!(hs_norm(&(&oracle - h.matrix())) < 1e-12);
        let fast = project_out_local(h.matrix(), 2, 3).unwrap();
        assert!(hs_norm(&(&fast - h.matrix())) < 1e-12);
    }

    #[test]
    fn projection_rejects_wrong_dimension() {
        assert!(matches!(
            project_out_local(&CMatrix::zeros(5, 5), 2, 3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn eigenvalue_bound_examples() {
        let s = spec(2, 3, 1.0);
        let h = optimal_hamiltonian(&s);
        let b = constraint_eigenvalue_bound(&h, 2, 3, 1.0).unwrap();
        assert!(b.satisfied);
        assert!((b.max_abs_eigenvalue - 1.0).abs() < 1e-12);

        let b = constraint_eigenvalue_bound(&HermitianOperator::zeros(6), 2, 3, 1.0).unwrap();
        assert!(b.satisfied);
        assert_eq!(b.max_abs_eigenvalue, 0.0);

        let b = constraint_eigenvalue_bound(&h.scaled(2.0), 2, 3, 1.0).unwrap();
        assert!(!b.satisfied);
        assert!((b.max_abs_eigenvalue - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hermitian_constructor_rejects_asymmetric() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = ONE;
        assert!(matches!(HermitianOperator::new(m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn density_constructor_checks() {
        let bad_trace = CMatrix::identity(2, 2);
        assert!(DensityMatrix::new(bad_trace).is_err());
        let negative = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.5), c(-0.5)]));
        assert!(DensityMatrix::new(negative).is_err());
        assert!(DensityMatrix::new(CMatrix::identity(3, 3) / c(3.0)).is_ok());
    }

    #[test]
    fn spec_validation() {
        assert!(SystemSpec::new(SystemKind::Qubit, 1, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(SystemSpec::new(SystemKind::Qubit, 3, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(SystemSpec::new(SystemKind::Qubit, 3, 1.0, -0.1, 0.0, 0.0).is_err());
        assert!(SystemSpec::new(SystemKind::Oscillator { levels: 1 }, 3, 1.0, 0.0, 0.0, 0.0).is_err());
        assert_eq!(SystemSpec::new(SystemKind::Oscillator { levels: 4 }, 7, 1.0, 0.0, 0.0, 0.0).unwrap().dim(), 28);
    }

    proptest! {
        #[test]
        fn thermal_state_is_valid_density(nbar in 0.0f64..100.0, levels in 2usize..8) {
            for kind in [SystemKind::Qubit, SystemKind::Oscillator { levels }] {
                let rho = thermal_state(kind, nbar).unwrap();
                prop_assert!(DensityMatrix::new(rho.matrix().clone()).is_ok());
            }
        }

        #[test]
        fn projection_idempotent_and_orthogonal(
            n in 2usize..4,
            m in 2usize..5,
            seed in proptest::collection::vec(-1.0f64..1.0, 64),
        ) {
            let h = random_hermitian(n * m, &seed);
            let p = project_out_local(&h, n, m).unwrap();
            let pp = project_out_local(&p, n, m).unwrap();
            prop_assert!(hs_norm(&(&pp - &p)) < 1e-12);
            prop_assert!(linalg::hermiticity_defect(&p) < 1e-12);
            for b in local_basis(n, m) {
                prop_assert!(hs_inner(&b, &p).norm() < 1e-10);
            }
            let oracle = oracle_projection(&h, n, m);
            prop_assert!(hs_norm(&(&oracle - &p)) < 1e-10);
        }

        #[test]
        fn embeddings_commute(
            sa in proptest::collection::vec(-1.0f64..1.0, 8),
            sb in proptest::collection::vec(-1.0f64..1.0, 18),
        ) {
            let a = CMatrix::from_fn(2, 2, |r, col| C64::new(sa[2 * r + col], sa[4 + 2 * r + col]));
            let b = CMatrix::from_fn(3, 3, |r, col| C64::new(sb[3 * r + col], sb[9 + 3 * r + col]));
            let ea = embed_target(&a, 3).unwrap();
            let eb = embed_aux(&b, 2).unwrap();
            prop_assert!(hs_norm(&(&ea * &eb - &eb * &ea)) < 1e-13);
        }
    }
}
