//! Truncated product basis `|n> ⊗ |s>` and the operators of the spin-boson
//! models, assembled as dense real symmetric matrices.
//!
//! Basis ordering is `k = 2n + (1 - s)/2`: spin up at even indices, spin down
//! at odd ones. With this ordering every operator built here has bandwidth
//! at most 3.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Human-readable description of the index convention, written into exports.
pub const BASIS_CONVENTION: &str = "k = 2n + (1-s)/2";

/// Physical constants and Fock truncation of one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Field frequency.
    pub omega: f64,
    /// Spin splitting.
    #[serde(rename = "Omega")]
    pub spin_splitting: f64,
    /// Spin-field coupling.
    pub g: f64,
    /// Number of Fock states kept.
    pub n_fock: usize,
}

impl ModelParams {
    pub fn new(omega: f64, spin_splitting: f64, g: f64, n_fock: usize) -> Result<Self> {
        let params = Self {
            omega,
            spin_splitting,
            g,
            n_fock,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let check_positive = |name: &'static str, v: f64| -> Result<()> {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
            if v <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                });
            }
            Ok(())
        };
        check_positive("omega", self.omega)?;
        check_positive("Omega", self.spin_splitting)?;
        if !self.g.is_finite() {
            return Err(Error::InvalidParameter {
                name: "g",
                reason: format!("must be finite, got {}", self.g),
            });
        }
        if self.n_fock < 2 {
            return Err(Error::InvalidParameter {
                name: "n_fock",
                reason: format!("must be at least 2, got {}", self.n_fock),
            });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.n_fock
    }

    pub fn with_g(self, g: f64) -> Self {
        Self { g, ..self }
    }

    pub fn with_n_fock(self, n_fock: usize) -> Self {
        Self { n_fock, ..self }
    }

    /// `omega == Omega`, the case with doubly degenerate unperturbed levels.
    pub fn is_degenerate(&self) -> bool {
        self.omega == self.spin_splitting
    }

    /// Unperturbed energy `omega (n + 1/2) + s Omega / 2`.
    pub fn bare_energy(&self, level: BasisIndex) -> f64 {
        bare_energy(level, self.omega, self.spin_splitting)
    }

    /// Default trusted window: `n_fock / 4` levels.
    pub fn default_trust_cutoff(&self) -> usize {
        (self.n_fock / 4).max(1)
    }
}

pub fn bare_energy(level: BasisIndex, omega: f64, spin_splitting: f64) -> f64 {
    omega * (level.n as f64 + 0.5) + level.s.sign() * spin_splitting / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn sign(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

impl From<Spin> for i8 {
    fn from(s: Spin) -> i8 {
        match s {
            Spin::Up => 1,
            Spin::Down => -1,
        }
    }
}

impl TryFrom<i8> for Spin {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Spin::Up),
            -1 => Ok(Spin::Down),
            other => Err(format!("spin must be +1 or -1, got {other}")),
        }
    }
}

/// A product-basis label `(n, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisIndex {
    pub n: usize,
    pub s: Spin,
}

impl BasisIndex {
    pub const fn new(n: usize, s: Spin) -> Self {
        Self { n, s }
    }

    pub const fn up(n: usize) -> Self {
        Self { n, s: Spin::Up }
    }

    pub const fn down(n: usize) -> Self {
        Self { n, s: Spin::Down }
    }

    pub fn index(self) -> usize {
        match self.s {
            Spin::Up => 2 * self.n,
            Spin::Down => 2 * self.n + 1,
        }
    }

    pub fn from_index(k: usize) -> Self {
        let s = if k.is_multiple_of(2) { Spin::Up } else { Spin::Down };
        Self { n: k / 2, s }
    }
}

impl fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{:+})", self.n, i8::from(self.s))
    }
}

pub fn product_basis(n_fock: usize) -> Vec<BasisIndex> {
    (0..2 * n_fock).map(BasisIndex::from_index).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorName {
    #[serde(rename = "H_Rabi")]
    Rabi,
    #[serde(rename = "H_JC")]
    JaynesCummings,
    /// `X ⊗ σ1`, the derivative of `H_Rabi` with respect to `g`.
    #[serde(rename = "V")]
    Interaction,
    /// `X ⊗ 1`, the control operator.
    #[serde(rename = "B_X")]
    ControlX,
    Parity,
    ExcitationNumber,
    /// Anything assembled from raw entries.
    Custom,
}

impl fmt::Display for OperatorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OperatorName::Rabi => "H_Rabi",
            OperatorName::JaynesCummings => "H_JC",
            OperatorName::Interaction => "V",
            OperatorName::ControlX => "B_X",
            OperatorName::Parity => "Parity",
            OperatorName::ExcitationNumber => "ExcitationNumber",
            OperatorName::Custom => "Custom",
        };
        f.write_str(s)
    }
}

/// A real symmetric matrix over the truncated product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledOperator {
    pub name: OperatorName,
    pub params: ModelParams,
    pub basis: Vec<BasisIndex>,
    pub entries: DMatrix<f64>,
}

impl LabeledOperator {
    fn zeros(name: OperatorName, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let dim = params.dim();
        Ok(Self {
            name,
            params: *params,
            basis: product_basis(params.n_fock),
            entries: DMatrix::zeros(dim, dim),
        })
    }

    /// Wraps an arbitrary matrix; it must be exactly symmetric.
    pub fn from_entries(name: OperatorName, params: &ModelParams, entries: DMatrix<f64>) -> Result<Self> {
        params.validate()?;
        let dim = params.dim();
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: entries.nrows(),
            });
        }
        for i in 0..dim {
            for j in 0..i {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self {
            name,
            params: *params,
            basis: product_basis(params.n_fock),
            entries,
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, a: BasisIndex, b: BasisIndex) -> f64 {
        self.entries[(a.index(), b.index())]
    }

    fn set_pair(&mut self, a: BasisIndex, b: BasisIndex, value: f64) {
        let (i, j) = (a.index(), b.index());
        self.entries[(i, j)] = value;
        self.entries[(j, i)] = value;
    }

    fn set_diag(&mut self, a: BasisIndex, value: f64) {
        let i = a.index();
        self.entries[(i, i)] = value;
    }

    /// Largest `|i - j|` with a nonzero entry.
    pub fn bandwidth(&self) -> usize {
        let dim = self.dim();
        let mut bw = 0;
        for i in 0..dim {
            for j in 0..dim {
                if self.entries[(i, j)] != 0.0 {
                    bw = bw.max(i.abs_diff(j));
                }
            }
        }
        bw
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries == self.entries.transpose()
    }

    /// Spectral norm (largest eigenvalue magnitude).
    pub fn spectral_norm(&self) -> f64 {
        self.entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

fn ladder(n: usize) -> f64 {
    ((n + 1) as f64 / 2.0).sqrt()
}

fn fill_bare_diagonal(op: &mut LabeledOperator) {
    let params = op.params;
    for k in 0..params.dim() {
        let level = BasisIndex::from_index(k);
        op.set_diag(level, params.bare_energy(level));
    }
}

/// `H_Rabi = omega (a†a + 1/2) + Omega/2 σ3 + g X ⊗ σ1`.
pub fn build_rabi(params: &ModelParams) -> Result<LabeledOperator> {
    let mut op = LabeledOperator::zeros(OperatorName::Rabi, params)?;
    fill_bare_diagonal(&mut op);
    for n in 0..params.n_fock - 1 {
        let value = params.g * ladder(n);
        for s in [Spin::Up, Spin::Down] {
            op.set_pair(BasisIndex::new(n, s), BasisIndex::new(n + 1, s.flip()), value);
        }
    }
    Ok(op)
}

/// Jaynes–Cummings Hamiltonian: the Rabi model without counter-rotating terms.
pub fn build_jc(params: &ModelParams) -> Result<LabeledOperator> {
    let mut op = LabeledOperator::zeros(OperatorName::JaynesCummings, params)?;
    fill_bare_diagonal(&mut op);
    for n in 0..params.n_fock - 1 {
        op.set_pair(BasisIndex::up(n), BasisIndex::down(n + 1), params.g * ladder(n));
    }
    Ok(op)
}

/// `V = X ⊗ σ1`, independent of `g`.
pub fn build_interaction(params: &ModelParams) -> Result<LabeledOperator> {
    let mut op = LabeledOperator::zeros(OperatorName::Interaction, params)?;
    for n in 0..params.n_fock - 1 {
        for s in [Spin::Up, Spin::Down] {
            op.set_pair(BasisIndex::new(n, s), BasisIndex::new(n + 1, s.flip()), ladder(n));
        }
    }
    Ok(op)
}

/// Control operator `B = X ⊗ 1`.
pub fn build_control(params: &ModelParams) -> Result<LabeledOperator> {
    let mut op = LabeledOperator::zeros(OperatorName::ControlX, params)?;
    for n in 0..params.n_fock - 1 {
        for s in [Spin::Up, Spin::Down] {
            op.set_pair(BasisIndex::new(n, s), BasisIndex::new(n + 1, s), ladder(n));
        }
    }
    Ok(op)
}

/// `(-1)^{a†a} ⊗ σ3`.
pub fn build_parity(params: &ModelParams) -> Result<LabeledOperator> {
    let mut op = LabeledOperator::zeros(OperatorName::Parity, params)?;
    for k in 0..params.dim() {
        let level = BasisIndex::from_index(k);
        let photon_sign = if level.n.is_multiple_of(2) { 1.0 } else { -1.0 };
        op.set_diag(level, level.s.sign() * photon_sign);
    }
    Ok(op)
}

/// Total excitation number `C = a†a ⊗ 1 + 1 ⊗ |↑><↑|`.
pub fn build_excitation(params: &ModelParams) -> Result<LabeledOperator> {
    let mut op = LabeledOperator::zeros(OperatorName::ExcitationNumber, params)?;
    for k in 0..params.dim() {
        let level = BasisIndex::from_index(k);
        let spin_part = match level.s {
            Spin::Up => 1.0,
            Spin::Down => 0.0,
        };
        op.set_diag(level, level.n as f64 + spin_part);
    }
    Ok(op)
}

/// `max |[A, B]_{ij}|`.
pub fn commutator_max(a: &LabeledOperator, b: &LabeledOperator) -> f64 {
    let c = &a.entries * &b.entries - &b.entries * &a.entries;
    c.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(g: f64) -> ModelParams {
        ModelParams::new(1.0, 1.1, g, 4).unwrap()
    }

    #[test]
    fn index_map_is_a_bijection() {
        for k in 0..40 {
            assert_eq!(BasisIndex::from_index(k).index(), k);
        }
        assert_eq!(BasisIndex::up(3).index(), 6);
        assert_eq!(BasisIndex::down(3).index(), 7);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(0.0, 1.0, 0.0, 4).is_err());
        assert!(ModelParams::new(1.0, -1.0, 0.0, 4).is_err());
        assert!(ModelParams::new(1.0, 1.0, f64::NAN, 4).is_err());
        assert!(ModelParams::new(f64::INFINITY, 1.0, 0.0, 4).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0, 1).is_err());
        let bad = ModelParams {
            omega: 1.0,
            spin_splitting: 1.0,
            g: f64::INFINITY,
            n_fock: 4,
        };
        assert!(build_rabi(&bad).is_err());
    }

    #[test]
    fn rabi_diagonal_at_two_down() {
        let h = build_rabi(&params(0.0)).unwrap();
        assert_eq!(h.get(BasisIndex::down(2), BasisIndex::down(2)), 1.95);
        assert_eq!(h.dim(), 8);
    }

    #[test]
    fn rabi_is_diagonal_at_zero_coupling() {
        let h = build_rabi(&params(0.0)).unwrap();
        assert_eq!(h.bandwidth(), 0);
    }

    #[test]
    fn rabi_rotating_element() {
        let h = build_rabi(&params(0.3)).unwrap();
        let v = h.get(BasisIndex::up(0), BasisIndex::down(1));
        assert!((v - 0.212_132_034_355_964_26).abs() < 1e-15);
        let counter = h.get(BasisIndex::down(0), BasisIndex::up(1));
        assert_eq!(counter, v);
    }

    #[test]
    fn jc_drops_counter_rotating_pairs() {
        let h = build_jc(&params(0.3)).unwrap();
        assert_eq!(h.get(BasisIndex::down(0), BasisIndex::up(1)), 0.0);
        assert!((h.get(BasisIndex::up(0), BasisIndex::down(1)) - 0.212_132_034_355_964_26).abs() < 1e-15);
        assert_eq!(build_jc(&params(0.0)).unwrap().entries, build_rabi(&params(0.0)).unwrap().entries);
    }

    #[test]
    fn control_elements() {
        let b = build_control(&params(0.7)).unwrap();
        assert!((b.get(BasisIndex::up(0), BasisIndex::up(1)) - 0.5_f64.sqrt()).abs() < 1e-15);
        assert_eq!(b.get(BasisIndex::up(0), BasisIndex::down(0)), 0.0);
        assert_eq!(b.get(BasisIndex::down(1), BasisIndex::down(2)), 1.0);
        assert_eq!(b.entries, build_control(&params(0.0)).unwrap().entries);
    }

    #[test]
    fn parity_and_excitation_diagonals() {
        let p = build_parity(&params(0.0)).unwrap();
        let c = build_excitation(&params(0.0)).unwrap();
        assert_eq!(c.get(BasisIndex::up(0), BasisIndex::up(0)), 1.0);
        assert_eq!(c.get(BasisIndex::down(0), BasisIndex::down(0)), 0.0);
        assert_eq!(p.get(BasisIndex::up(0), BasisIndex::up(0)), 1.0);
        assert_eq!(p.get(BasisIndex::down(3), BasisIndex::down(3)), 1.0);
        assert_eq!(p.bandwidth(), 0);
    }

    #[test]
    fn bandwidth_at_most_three() {
        let p = params(0.4);
        for op in [
            build_rabi(&p),
            build_jc(&p),
            build_interaction(&p),
            build_control(&p),
            build_parity(&p),
            build_excitation(&p),
        ] {
            let op = op.unwrap();
            assert!(op.bandwidth() <= 3, "{} bandwidth {}", op.name, op.bandwidth());
            assert!(op.is_symmetric());
        }
    }

    #[test]
    fn control_anticommutes_with_parity() {
        let p = params(0.0);
        let b = build_control(&p).unwrap();
        let par = build_parity(&p).unwrap();
        let conj = &par.entries * &b.entries * &par.entries;
        assert_eq!(conj, -&b.entries);
        assert!(commutator_max(&b, &par) > 0.0);
    }

    #[test]
    fn from_entries_rejects_asymmetric() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 2).unwrap();
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 1)] = 1.0;
        assert!(matches!(
            LabeledOperator::from_entries(OperatorName::Custom, &p, m),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(LabeledOperator::from_entries(OperatorName::Custom, &p, DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn params_json_keys() {
        let p = ModelParams::new(1.0, 1.1, 0.2, 8).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"omega":1.0,"Omega":1.1,"g":0.2,"n_fock":8}"#);
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<ModelParams>(r#"{"omega":1,"Omega":1,"g":0,"n_fock":4,"x":1}"#).is_err());
    }

    #[test]
    fn spin_serializes_as_sign() {
        let s = serde_json::to_string(&BasisIndex::down(2)).unwrap();
        assert_eq!(s, r#"{"n":2,"s":-1}"#);
        assert!(serde_json::from_str::<BasisIndex>(r#"{"n":2,"s":0}"#).is_err());
    }
}
