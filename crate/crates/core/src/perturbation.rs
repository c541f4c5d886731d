//! Rayleigh–Schrödinger coefficients of the Rabi eigenvalues in `g`, the
//! first-order correction of the control matrix elements, the degenerate
//! `omega == Omega` splitting, and polynomial fits of numerical branches used
//! to cross-check all of them.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockmodel::{bare_energy, build_control, BasisIndex, ModelParams, Spin};
use crate::spectral::{centered_derivative, fd_step, track_branches_with, BranchFamily, TrackOptions};

const MAX_CONDITION: f64 = 1e10;

fn require_non_degenerate(omega: f64, spin_splitting: f64) -> Result<()> {
    if omega == spin_splitting {
        Err(Error::DegenerateFrequencies)
    } else {
        Ok(())
    }
}

/// Second-order coefficient `(ω + sΩ(2n+1)) / (2(Ω² − ω²))`.
pub fn e2_closed(level: BasisIndex, omega: f64, spin_splitting: f64) -> Result<f64> {
    require_non_degenerate(omega, spin_splitting)?;
    let s = level.s.sign();
    let n = level.n as f64;
    Ok((omega + s * spin_splitting * (2.0 * n + 1.0))
        / (2.0 * (spin_splitting * spin_splitting - omega * omega)))
}

/// Polynomial `c0 + c1 n + c2 n²` in the photon number.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Quadratic([f64; 3]);

impl Quadratic {
    /// `(n + a) / 2`
    fn half_shifted(a: f64) -> [f64; 2] {
        [a / 2.0, 0.5]
    }

    fn product(p: [f64; 2], q: [f64; 2]) -> Self {
        Quadratic([p[0] * q[0], p[0] * q[1] + p[1] * q[0], p[1] * q[1]])
    }

    fn scaled(self, k: f64) -> Self {
        Quadratic(self.0.map(|c| c * k))
    }

    fn plus(self, other: Self) -> Self {
        Quadratic([self.0[0] + other.0[0], self.0[1] + other.0[1], self.0[2] + other.0[2]])
    }
}

/// Fourth-order coefficient as a quadratic in `n`, obtained by adding the two
/// surviving sums term by term (the `V_jj` terms vanish).
///
/// With `a = −ω − sΩ` and `b = ω − sΩ` the energy denominators of the
/// neighbours `(n∓1, −s)`, and `±2ω` those of `(n±2, s)`:
/// `E⁽⁴⁾ = −[a⁻²(−2ω)⁻¹ n(n−1)/4 + b⁻²(2ω)⁻¹ (n+1)(n+2)/4]
///        + [a⁻³ n²/4 + a⁻²b⁻¹ n(n+1)/4 + b⁻²a⁻¹ n(n+1)/4 + b⁻³ (n+1)²/4]`.
fn fourth_order_quadratic(s: Spin, omega: f64, spin_splitting: f64) -> Quadratic {
    let s = s.sign();
    let a = -omega - s * spin_splitting;
    let b = omega - s * spin_splitting;
    let half_n = Quadratic::half_shifted(0.0);
    let half_nm1 = Quadratic::half_shifted(-1.0);
    let half_np1 = Quadratic::half_shifted(1.0);
    let half_np2 = Quadratic::half_shifted(2.0);

    let chain_sum = Quadratic::product(half_n, half_nm1)
        .scaled(1.0 / (a * (-2.0 * omega) * a))
        .plus(Quadratic::product(half_np1, half_np2).scaled(1.0 / (b * (2.0 * omega) * b)));

    let square_sum = Quadratic::product(half_n, half_n)
        .scaled(1.0 / (a * a * a))
        .plus(Quadratic::product(half_n, half_np1).scaled(1.0 / (a * a * b)))
        .plus(Quadratic::product(half_n, half_np1).scaled(1.0 / (b * b * a)))
        .plus(Quadratic::product(half_np1, half_np1).scaled(1.0 / (b * b * b)));

    chain_sum.scaled(-1.0).plus(square_sum)
}

/// Leading coefficient `s Ω (ω² + 3Ω²) / (2 (ω² − Ω²)³)`.
pub fn c2_closed(s: Spin, omega: f64, spin_splitting: f64) -> Result<f64> {
    require_non_degenerate(omega, spin_splitting)?;
    let w2 = omega * omega;
    let o2 = spin_splitting * spin_splitting;
    Ok(s.sign() * spin_splitting * (w2 + 3.0 * o2) / (2.0 * (w2 - o2).powi(3)))
}

/// `(C0, C1, C2)` with `E⁽⁴⁾ = C0 + C1 n + C2 n²` at fixed spin. `C0` and `C1`
/// come from the summed quadratic, `C2` from its closed form.
pub fn c_coefficients(s: Spin, omega: f64, spin_splitting: f64) -> Result<(f64, f64, f64)> {
    require_non_degenerate(omega, spin_splitting)?;
    let q = fourth_order_quadratic(s, omega, spin_splitting);
    Ok((q.0[0], q.0[1], c2_closed(s, omega, spin_splitting)?))
}

/// `C2` as it falls out of the summation, for comparison with [`c2_closed`].
pub fn c2_summed(s: Spin, omega: f64, spin_splitting: f64) -> Result<f64> {
    require_non_degenerate(omega, spin_splitting)?;
    Ok(fourth_order_quadratic(s, omega, spin_splitting).0[2])
}

pub fn e4_closed(level: BasisIndex, omega: f64, spin_splitting: f64) -> Result<f64> {
    let (c0, c1, c2) = c_coefficients(level.s, omega, spin_splitting)?;
    let n = level.n as f64;
    Ok(c0 + c1 * n + c2 * n * n)
}

/// Closed-form `E⁽⁰⁾ … E⁽⁴⁾`; odd orders are identically zero.
pub fn closed_coefficients(level: BasisIndex, omega: f64, spin_splitting: f64) -> Result<[f64; 5]> {
    Ok([
        bare_energy(level, omega, spin_splitting),
        0.0,
        e2_closed(level, omega, spin_splitting)?,
        0.0,
        e4_closed(level, omega, spin_splitting)?,
    ])
}

/// First-order slope at `g = 0` of `<Φ_j^g, (X ⊗ 1) Φ_k^g>` for the cross-spin
/// pair `n(j) = n(k)`, `s(j) = −s(k)`: `ω / (Ω² − ω²)`.
pub fn coupling_slope_closed(j: BasisIndex, k: BasisIndex, omega: f64, spin_splitting: f64) -> Result<f64> {
    require_non_degenerate(omega, spin_splitting)?;
    if j.n != k.n {
        return Err(Error::InvalidLevelPair {
            j,
            k,
            reason: "photon numbers must agree",
        });
    }
    if j.s == k.s {
        return Err(Error::InvalidLevelPair {
            j,
            k,
            reason: "spins must be opposite",
        });
    }
    Ok(omega / (spin_splitting * spin_splitting - omega * omega))
}

/// Symmetric sampling window for branch fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitProtocol {
    pub half_width: f64,
    pub points: usize,
    pub degree: usize,
}

impl FitProtocol {
    /// ±0.05, 21 points, degree 6.
    pub const WIDE: FitProtocol = FitProtocol {
        half_width: 0.05,
        points: 21,
        degree: 6,
    };

    /// ±0.005, 21 points, degree 8. Needed for the second- and fourth-order
    /// coefficients near resonance, where the series radius is below 0.05.
    pub const SERIES: FitProtocol = FitProtocol {
        half_width: 0.005,
        points: 21,
        degree: 8,
    };

    /// Exactly mirror-symmetric grid containing 0.
    pub fn grid(&self) -> Vec<f64> {
        let m = self.points.max(1);
        let denom = (m - 1).max(1) as f64;
        let mut grid: Vec<f64> = (0..m)
            .map(|i| self.half_width * (2.0 * i as f64 / denom - 1.0))
            .collect();
        for i in 0..m / 2 {
            grid[m - 1 - i] = -grid[i];
        }
        if m % 2 == 1 {
            grid[m / 2] = 0.0;
        }
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitWindow {
    pub g_min: f64,
    pub g_max: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesFit {
    pub level: BasisIndex,
    /// Taylor coefficients `E⁽⁰⁾ … E⁽degree⁾`.
    pub coefficients: Vec<f64>,
    pub condition_number: f64,
    pub rms_residual: f64,
    pub window: FitWindow,
}

/// Least-squares polynomial fit of one branch `E(g)` on a symmetric window.
pub fn e_series_fit(family: &BranchFamily, level: BasisIndex, degree: usize) -> Result<SeriesFit> {
    let grid = &family.g_grid;
    let m = grid.len();
    if m < degree + 3 {
        return Err(Error::InvalidGrid(format!(
            "{m} points cannot support a degree-{degree} fit (need {})",
            degree + 3
        )));
    }
    let scale = grid.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
    if scale == 0.0 {
        return Err(Error::InvalidGrid("fit window has zero width".into()));
    }
    for i in 0..m {
        if (grid[i] + grid[m - 1 - i]).abs() > 1e-14 * scale {
            return Err(Error::InvalidGrid("fit grid must be symmetric about 0".into()));
        }
    }
    let branch = family.branch(level).ok_or(Error::UnknownLabel(level))?;

    // work in t = g / scale to keep the Vandermonde matrix well conditioned
    let a = DMatrix::from_fn(m, degree + 1, |i, k| (grid[i] / scale).powi(k as i32));
    let y = DVector::from_column_slice(&branch.eigenvalues);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition_number > MAX_CONDITION {
        return Err(Error::IllConditionedFit {
            condition: condition_number,
            suggestion: format!(
                "lower the degree below {degree} or shrink the window below ±{scale} so fewer Taylor terms are resolved"
            ),
        });
    }
    let t_coeffs = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::IllConditionedFit {
            condition: condition_number,
            suggestion: e.to_string(),
        })?;
    let residual = &a * &t_coeffs - &y;
    let rms_residual = (residual.norm_squared() / m as f64).sqrt();
    let coefficients = t_coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c / scale.powi(k as i32))
        .collect();
    Ok(SeriesFit {
        level,
        coefficients,
        condition_number,
        rms_residual,
        window: FitWindow {
            g_min: grid[0],
            g_max: grid[m - 1],
            n_points: m,
        },
    })
}

/// Number of lowest `g = 0` branches needed so that every label is tracked.
pub(crate) fn levels_covering(base: &ModelParams, labels: &[BasisIndex]) -> usize {
    let mut order: Vec<BasisIndex> = (0..base.dim()).map(BasisIndex::from_index).collect();
    order.sort_by(|a, b| {
        base.bare_energy(*a)
            .total_cmp(&base.bare_energy(*b))
            .then(a.index().cmp(&b.index()))
    });
    labels
        .iter()
        .filter_map(|l| order.iter().position(|o| o == l))
        .max()
        .map_or(1, |p| p + 1)
}

/// Branch family over the protocol grid, tracking enough levels for `labels`.
pub fn fit_family(base: &ModelParams, labels: &[BasisIndex], protocol: &FitProtocol) -> Result<BranchFamily> {
    let opts = TrackOptions {
        levels: Some(levels_covering(base, labels)),
        ..TrackOptions::default()
    };
    track_branches_with(base, &protocol.grid(), &opts)
}

/// Finite-difference slope at `g = 0` of `<v_j(g), B v_k(g)>` along tracked branches.
pub fn coupling_slope_numeric(base: &ModelParams, j: BasisIndex, k: BasisIndex) -> Result<f64> {
    Ok(coupling_slopes_numeric(base, &[(j, k)])?[0])
}

pub fn coupling_slopes_numeric(base: &ModelParams, pairs: &[(BasisIndex, BasisIndex)]) -> Result<Vec<f64>> {
    let labels: Vec<BasisIndex> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let h = fd_step(0.0);
    let grid = [-2.0 * h, -h, 0.0, h, 2.0 * h];
    let opts = TrackOptions {
        levels: Some(levels_covering(base, &labels)),
        ..TrackOptions::default()
    };
    let family = track_branches_with(base, &grid, &opts)?;
    let b_op = build_control(base)?;
    pairs
        .iter()
        .map(|&(j, k)| {
            let bj = family.branch(j).ok_or(Error::UnknownLabel(j))?;
            let bk = family.branch(k).ok_or(Error::UnknownLabel(k))?;
            let m: Vec<f64> = (0..5)
                .map(|i| bj.eigenvectors[i].dot(&(&b_op.entries * &bk.eigenvectors[i])))
                .collect();
            Ok(centered_derivative(m[0], m[1], m[3], m[4], h))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationTable {
    pub level: BasisIndex,
    pub closed: [f64; 5],
    pub fitted: [f64; 5],
    /// `ω/(Ω² − ω²)` for the pair `(n, s) ↔ (n, −s)`.
    pub coupling_slope: f64,
    /// Finite-difference value of the same slope.
    pub coupling_slope_fd: f64,
    pub condition_number: f64,
    pub fit_window: FitWindow,
}

pub fn perturbation_table(
    base: &ModelParams,
    levels: &[BasisIndex],
    protocol: &FitProtocol,
) -> Result<Vec<PerturbationTable>> {
    require_non_degenerate(base.omega, base.spin_splitting)?;
    let family = fit_family(base, levels, protocol)?;
    let pairs: Vec<(BasisIndex, BasisIndex)> = levels
        .iter()
        .map(|l| (*l, BasisIndex::new(l.n, l.s.flip())))
        .collect();
    let slopes_fd = coupling_slopes_numeric(base, &pairs)?;
    levels
        .iter()
        .zip(slopes_fd)
        .map(|(&level, coupling_slope_fd)| {
            let fit = e_series_fit(&family, level, protocol.degree)?;
            let mut fitted = [0.0; 5];
            for (k, f) in fitted.iter_mut().enumerate() {
                *f = fit.coefficients.get(k).copied().unwrap_or(0.0);
            }
            let partner = BasisIndex::new(level.n, level.s.flip());
            Ok(PerturbationTable {
                level,
                closed: closed_coefficients(level, base.omega, base.spin_splitting)?,
                fitted,
                coupling_slope: coupling_slope_closed(level, partner, base.omega, base.spin_splitting)?,
                coupling_slope_fd,
                condition_number: fit.condition_number,
                fit_window: fit.window,
            })
        })
        .collect()
}

/// `((Φ_{j,+1} + Φ_{j+1,−1})/√2, (Φ_{j,+1} − Φ_{j+1,−1})/√2)` in a truncation
/// of `n_fock` Fock states.
pub fn degenerate_basis(j: usize, n_fock: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    if j + 1 >= n_fock {
        return Err(Error::InvalidParameter {
            name: "j",
            reason: format!("pair ({j},+1)/({},-1) exceeds truncation n_fock={n_fock}", j + 1),
        });
    }
    let dim = 2 * n_fock;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b) = (BasisIndex::up(j).index(), BasisIndex::down(j + 1).index());
    let mut plus = DVector::zeros(dim);
    let mut minus = DVector::zeros(dim);
    plus[a] = r;
    plus[b] = r;
    minus[a] = r;
    minus[b] = -r;
    Ok((plus, minus))
}

/// `(+√((j+1)/2), −√((j+1)/2))`.
pub fn degenerate_slopes(j: usize) -> (f64, f64) {
    let s = ((j + 1) as f64 / 2.0).sqrt();
    (s, -s)
}

#[derive(Debug, Clone, Serialize)]
pub struct DegenerateSlope {
    pub j: usize,
    pub closed: (f64, f64),
    /// Finite-difference slopes of the `(j,+1)` and `(j+1,−1)` branches.
    pub numeric: (f64, f64),
}

/// Numerical slopes at `g = 0` of the branch pairs emanating from `ω(j+1)`.
pub fn degenerate_slopes_numeric(base: &ModelParams, j_max: usize) -> Result<Vec<DegenerateSlope>> {
    if !base.is_degenerate() {
        return Err(Error::InvalidParameter {
            name: "Omega",
            reason: "degenerate-case slopes need omega == Omega".into(),
        });
    }
    let labels: Vec<BasisIndex> = (0..=j_max).flat_map(|j| [BasisIndex::up(j), BasisIndex::down(j + 1)]).collect();
    let h = fd_step(0.0);
    let grid = [-2.0 * h, -h, 0.0, h, 2.0 * h];
    let opts = TrackOptions {
        levels: Some(levels_covering(base, &labels)),
        ..TrackOptions::default()
    };
    let family = track_branches_with(base, &grid, &opts)?;
    let slope = |label: BasisIndex| -> Result<f64> {
        let e = &family.branch(label).ok_or(Error::UnknownLabel(label))?.eigenvalues;
        Ok(centered_derivative(e[0], e[1], e[3], e[4], h))
    };
    (0..=j_max)
        .map(|j| {
            Ok(DegenerateSlope {
                j,
                closed: degenerate_slopes(j),
                numeric: (slope(BasisIndex::up(j))?, slope(BasisIndex::down(j + 1))?),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockmodel::build_interaction;

    #[test]
    fn e2_spot_values() {
        let v = e2_closed(BasisIndex::up(0), 1.0, 1.1).unwrap();
        assert!((v - 5.0).abs() < 1e-12, "{v}");
        let v = e2_closed(BasisIndex::down(0), 1.0, 1.1).unwrap();
        assert!((v + 0.238_095_238_095_238_1).abs() < 1e-12);
        assert!(e2_closed(BasisIndex::up(0), 1.0, 1.0).is_err());
    }

    #[test]
    fn e2_matches_two_term_sum() {
        for &(w, o) in &[(1.0, 1.1), (1.0, 0.9), (0.7, 2.3)] {
            for n in 0..8 {
                for s in [Spin::Up, Spin::Down] {
                    let sg = s.sign();
                    let nf = n as f64;
                    let oracle = -(nf + 1.0) / 2.0 / (w - sg * o) + nf / 2.0 / (w + sg * o);
                    let v = e2_closed(BasisIndex::new(n, s), w, o).unwrap();
                    assert!((v - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn c2_spot_value_and_summation_agree() {
        let c2 = c2_closed(Spin::Up, 1.0, 1.1).unwrap();
        assert!((c2 + 274.97).abs() < 1e-2, "{c2}");
        for &(w, o) in &[(1.0, 1.1), (1.0, 0.9), (1.3, 0.4)] {
            for s in [Spin::Up, Spin::Down] {
                let a = c2_closed(s, w, o).unwrap();
                let b = c2_summed(s, w, o).unwrap();
                assert!((a - b).abs() < 1e-10 * a.abs(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn e4_at_n_zero_has_only_upward_chain() {
        // n = 0: only the (1,-s) -> (2,s) -> (1,-s) chain and the (1,-s) square term
        let (w, o) = (1.0, 1.1);
        let b = w - o;
        let expect = -(1.0 / (b * 2.0 * w * b)) * 0.5 + 1.0 / (b * b * b) * 0.25;
        let v = e4_closed(BasisIndex::up(0), w, o).unwrap();
        assert!((v - expect).abs() < 1e-10 * expect.abs());
    }

    #[test]
    fn e4_separates_equal_photon_gaps() {
        let (w, o) = (1.0, 1.1);
        for s in [Spin::Up, Spin::Down] {
            for ni in 0..6usize {
                for nj in 0..6usize {
                    for nk in 0..6usize {
                        for nl in 0..6usize {
                            if ni as i64 - nj as i64 != nk as i64 - nl as i64 || (ni, nj) == (nk, nl) {
                                continue;
                            }
                            let e = |n| e4_closed(BasisIndex::new(n, s), w, o).unwrap();
                            let d = (e(ni) - e(nj)) - (e(nk) - e(nl));
                            if ni == nj {
                                continue;
                            }
                            assert!(d.abs() > 1e-6, "{ni} {nj} {nk} {nl}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn coupling_slope_closed_is_universal() {
        let a = coupling_slope_closed(BasisIndex::up(0), BasisIndex::down(0), 1.0, 1.1).unwrap();
        let b = coupling_slope_closed(BasisIndex::down(3), BasisIndex::up(3), 1.0, 1.1).unwrap();
        assert!((a - 4.761_904_761_904_762).abs() < 1e-9);
        assert_eq!(a, b);
        assert!(coupling_slope_closed(BasisIndex::up(0), BasisIndex::down(1), 1.0, 1.1).is_err());
        assert!(coupling_slope_closed(BasisIndex::up(0), BasisIndex::up(0), 1.0, 1.1).is_err());
    }

    #[test]
    fn coupling_slope_numeric_matches() {
        let base = ModelParams::new(1.0, 1.1, 0.0, 32).unwrap();
        let v = coupling_slope_numeric(&base, BasisIndex::up(0), BasisIndex::down(0)).unwrap();
        assert!((v - 1.0 / 0.21).abs() < 1e-3, "{v}");
    }

    #[test]
    fn protocol_grid_is_symmetric() {
        for p in [FitProtocol::WIDE, FitProtocol::SERIES] {
            let g = p.grid();
            assert_eq!(g.len(), p.points);
            assert_eq!(g[p.points / 2], 0.0);
            for i in 0..g.len() {
                assert_eq!(g[i], -g[g.len() - 1 - i]);
            }
            assert!(g.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn constant_term_of_fit() {
        let base = ModelParams::new(1.0, 1.1, 0.0, 32).unwrap();
        let fam = fit_family(&base, &[BasisIndex::up(0)], &FitProtocol::WIDE).unwrap();
        let fit = e_series_fit(&fam, BasisIndex::up(0), 6).unwrap();
        assert!((fit.coefficients[0] - 1.05).abs() < 1e-5);
        assert!(fit.coefficients[1].abs() < 1e-6 && fit.coefficients[3].abs() < 1e-6);
        assert!(fit.condition_number < 1e10);

        let fam = fit_family(&base, &[BasisIndex::up(0)], &FitProtocol::SERIES).unwrap();
        let fit = e_series_fit(&fam, BasisIndex::up(0), 8).unwrap();
        assert!((fit.coefficients[0] - 1.05).abs() < 1e-12);
        assert!((fit.coefficients[2] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn fit_rejects_bad_grids() {
        let base = ModelParams::new(1.0, 1.1, 0.0, 16).unwrap();
        let fam = track_branches_with(&base, &[0.0], &TrackOptions::default()).unwrap();
        assert!(e_series_fit(&fam, BasisIndex::down(0), 2).is_err());
        let fam = track_branches_with(&base, &[-0.01, 0.0, 0.01, 0.02, 0.03], &TrackOptions::default()).unwrap();
        assert!(matches!(e_series_fit(&fam, BasisIndex::down(0), 2), Err(Error::InvalidGrid(_))));
        let proto = FitProtocol {
            half_width: 0.05,
            points: 41,
            degree: 30,
        };
        let fam = fit_family(&base, &[BasisIndex::down(0)], &proto).unwrap();
        assert!(matches!(
            e_series_fit(&fam, BasisIndex::down(0), 30),
            Err(Error::IllConditionedFit { .. })
        ));
    }

    #[test]
    fn degenerate_basis_properties() {
        let (p, m) = degenerate_basis(0, 8).unwrap();
        assert!((p.norm() - 1.0).abs() < 1e-15 && (m.norm() - 1.0).abs() < 1e-15);
        assert_eq!(p.dot(&m), 0.0);
        let (up, down) = degenerate_slopes(0);
        assert!((up - 0.5f64.sqrt()).abs() < 1e-12 && (down + up).abs() == 0.0);

        let params = ModelParams::new(1.0, 1.0, 0.0, 8).unwrap();
        let v = build_interaction(&params).unwrap();
        for j in 0..6 {
            let (p, m) = degenerate_basis(j, 8).unwrap();
            let (sp, sm) = degenerate_slopes(j);
            assert!((p.dot(&(&v.entries * &p)) - sp).abs() < 1e-14);
            assert!((m.dot(&(&v.entries * &m)) - sm).abs() < 1e-14);
            assert!(p.dot(&(&v.entries * &m)).abs() < 1e-14);
        }
        assert!(degenerate_basis(7, 8).is_err());
    }

    #[test]
    fn table_rejects_degenerate_model() {
        let base = ModelParams::new(1.0, 1.0, 0.0, 16).unwrap();
        assert!(matches!(
            perturbation_table(&base, &[BasisIndex::up(0)], &FitProtocol::WIDE),
            Err(Error::DegenerateFrequencies)
        ));
    }
}
