//! Eigendecomposition of truncated operators, eigenpair labelling, branch
//! continuation in `g`, the Hellmann–Feynman check and Galerkin convergence.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockmodel::{build_interaction, build_rabi, BasisIndex, LabeledOperator, ModelParams};

const RESIDUAL_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-10;
const AMBIGUITY_TOL: f64 = 1e-6;
/// Eigenvalue tolerance used to group exactly degenerate unperturbed levels.
const DEGENERACY_TOL: f64 = 1e-12;
/// Drift threshold for the Galerkin trust window.
pub const TRUST_DRIFT: f64 = 1e-8;

/// Eigenpairs of one operator in ascending order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub params: ModelParams,
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DMatrix<f64>,
    pub labels: Option<Vec<Option<BasisIndex>>>,
    /// Levels `0..trust_cutoff` are considered free of truncation effects.
    pub trust_cutoff: usize,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k).into_owned()
    }

    pub fn label(&self, k: usize) -> Option<BasisIndex> {
        self.labels.as_ref().and_then(|l| l[k])
    }

    pub fn index_of(&self, label: BasisIndex) -> Option<usize> {
        self.labels
            .as_ref()?
            .iter()
            .position(|l| *l == Some(label))
    }

    pub fn with_trust_cutoff(mut self, cutoff: usize) -> Self {
        self.trust_cutoff = cutoff.min(self.dim());
        self
    }

    /// `max_k ||H v_k - λ_k v_k||_2`.
    pub fn max_residual(&self, op: &LabeledOperator) -> f64 {
        let hv = &op.entries * &self.eigenvectors;
        (0..self.dim())
            .map(|k| (hv.column(k) - self.eigenvectors.column(k) * self.eigenvalues[k]).norm())
            .fold(0.0, f64::max)
    }

    /// `max |VᵀV - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.eigenvectors)
    }

    /// `max λ - min λ`.
    pub fn diameter(&self) -> f64 {
        match (self.eigenvalues.first(), self.eigenvalues.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

fn orthonormality_error(v: &DMatrix<f64>) -> f64 {
    let gram = v.transpose() * v;
    let mut err = 0.0_f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((gram[(i, j)] - target).abs());
        }
    }
    err
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0))
}

/// Ascending eigenpairs of a symmetric matrix; diagonal input is returned
/// exactly with coordinate eigenvectors.
pub(crate) fn eigh(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = m.nrows();
    if is_diagonal(m) {
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| m[(a, a)].total_cmp(&m[(b, b)]));
        let values = order.iter().map(|&k| m[(k, k)]).collect();
        let mut vectors = DMatrix::zeros(dim, dim);
        for (col, &k) in order.iter().enumerate() {
            vectors[(k, col)] = 1.0;
        }
        return Ok((values, vectors));
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::SolverNonConvergence { dim })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (col, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).into_owned();
        // deterministic sign: largest component positive
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(col, &v);
    }
    Ok((values, vectors))
}

fn check_eigenpairs(m: &DMatrix<f64>, values: &[f64], vectors: &DMatrix<f64>) -> Result<()> {
    let norm = values.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let hv = m * vectors;
    for (k, &lambda) in values.iter().enumerate() {
        let r = (hv.column(k) - vectors.column(k) * lambda).norm();
        if r > RESIDUAL_TOL * norm {
            return Err(Error::EigenCheck(format!("residual {r:e} at level {k}")));
        }
    }
    let ortho = orthonormality_error(vectors);
    if ortho > ORTHONORMAL_TOL {
        return Err(Error::EigenCheck(format!("orthonormality error {ortho:e}")));
    }
    Ok(())
}

fn product_labels(vectors: &DMatrix<f64>, diagonal: bool) -> Result<Vec<Option<BasisIndex>>> {
    let threshold = std::f64::consts::FRAC_1_SQRT_2;
    (0..vectors.ncols())
        .map(|col| {
            let v = vectors.column(col);
            let mut best = (0usize, -1.0_f64);
            let mut second = (0usize, -1.0_f64);
            for (k, x) in v.iter().enumerate() {
                let a = x.abs();
                if a > best.1 {
                    second = best;
                    best = (k, a);
                } else if a > second.1 {
                    second = (k, a);
                }
            }
            if !diagonal && best.1 < threshold {
                return Ok(None);
            }
            if best.1 - second.1 < AMBIGUITY_TOL {
                return Err(Error::AmbiguousLabel {
                    level: col,
                    first: BasisIndex::from_index(best.0),
                    second: BasisIndex::from_index(second.0),
                });
            }
            Ok(Some(BasisIndex::from_index(best.0)))
        })
        .collect()
}

/// Full eigendecomposition with product-basis labels.
///
/// Diagonal operators (such as `H_Rabi` at `g = 0`) are labelled by maximal
/// overlap; otherwise a level is labelled only when one product state carries
/// at least half of its weight.
pub fn diagonalize(op: &LabeledOperator) -> Result<Spectrum> {
    let (values, vectors) = eigh(&op.entries)?;
    check_eigenpairs(&op.entries, &values, &vectors)?;
    let labels = product_labels(&vectors, is_diagonal(&op.entries))?;
    Ok(Spectrum {
        params: op.params,
        trust_cutoff: op.params.default_trust_cutoff().min(values.len()),
        eigenvalues: values,
        eigenvectors: vectors,
        labels: Some(labels),
    })
}

/// One label-consistent eigenpair curve over a `g` grid.
#[derive(Debug, Clone)]
pub struct Branch {
    pub label: BasisIndex,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct BranchFamily {
    /// Model constants; the `g` field is not meaningful here.
    pub params: ModelParams,
    pub g_grid: Vec<f64>,
    pub branches: Vec<Branch>,
    /// Smallest consecutive overlap accepted while tracking.
    pub overlap_floor: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    /// Number of branches followed, counted from the bottom of the `g = 0`
    /// spectrum. `None` uses the default trust cutoff.
    pub levels: Option<usize>,
    pub overlap_floor: f64,
    pub max_bisections: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            levels: None,
            overlap_floor: 0.8,
            max_bisections: 6,
        }
    }
}

/// Tracked eigenpairs at one value of `g`.
#[derive(Debug, Clone)]
struct Frame {
    g: f64,
    values: Vec<f64>,
    vectors: Vec<DVector<f64>>,
}

struct Tracker {
    base: ModelParams,
    floor: f64,
    max_bisections: usize,
    min_overlap: f64,
}

impl Tracker {
    fn hamiltonian(&self, g: f64) -> Result<DMatrix<f64>> {
        Ok(build_rabi(&self.base.with_g(g))?.entries)
    }

    fn decompose(&self, g: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
        eigh(&self.hamiltonian(g)?)
    }

    /// Advances `prev` to `g`, bisecting the interval when the overlap floor
    /// is not met.
    fn advance(&mut self, prev: &Frame, g: f64, pre: Option<&(Vec<f64>, DMatrix<f64>)>) -> Result<Frame> {
        self.advance_depth(prev, g, pre, 0)
    }

    fn advance_depth(
        &mut self,
        prev: &Frame,
        g: f64,
        pre: Option<&(Vec<f64>, DMatrix<f64>)>,
        depth: usize,
    ) -> Result<Frame> {
        let owned;
        let (values, vectors) = match pre {
            Some(p) => (&p.0, &p.1),
            None => {
                owned = self.decompose(g)?;
                (&owned.0, &owned.1)
            }
        };
        match match_frame(prev, g, values, vectors, self.floor) {
            Ok((frame, worst)) => {
                self.min_overlap = self.min_overlap.min(worst);
                Ok(frame)
            }
            Err(worst) => {
                if depth >= self.max_bisections {
                    return Err(Error::TrackingFailed {
                        from: prev.g,
                        to: g,
                        overlap: worst,
                        floor: self.floor,
                        refinements: depth,
                    });
                }
                let mid = 0.5 * (prev.g + g);
                let half = self.advance_depth(prev, mid, None, depth + 1)?;
                self.advance_depth(&half, g, pre, depth + 1)
            }
        }
    }
}

/// Matches every tracked vector to its maximal-overlap eigenvector. On
/// failure returns the worst overlap seen.
fn match_frame(
    prev: &Frame,
    g: f64,
    values: &[f64],
    vectors: &DMatrix<f64>,
    floor: f64,
) -> std::result::Result<(Frame, f64), f64> {
    let mut out_values = Vec::with_capacity(prev.vectors.len());
    let mut out_vectors = Vec::with_capacity(prev.vectors.len());
    let mut worst = f64::INFINITY;
    for v in &prev.vectors {
        let overlaps = vectors.tr_mul(v);
        let k = overlaps.iamax();
        let o = overlaps[k];
        worst = worst.min(o.abs());
        if o.abs() < floor {
            continue;
        }
        let mut w = vectors.column(k).into_owned();
        if o < 0.0 {
            w.neg_mut();
        }
        out_values.push(values[k]);
        out_vectors.push(w);
    }
    if worst < floor {
        return Err(worst);
    }
    Ok((
        Frame {
            g,
            values: out_values,
            vectors: out_vectors,
        },
        worst,
    ))
}

/// Labels and eigenvectors of the lowest `levels` branches at `g = 0`.
///
/// Exactly degenerate groups are resolved by diagonalizing `V = X ⊗ σ1`
/// inside the group; for `omega == Omega` this yields
/// `(Φ_{j,+1} ± Φ_{j+1,-1})/√2`, with the `+` combination carrying
/// the label `(j,+1)`.
fn seed_frame(base: &ModelParams, levels: usize) -> Result<(Vec<BasisIndex>, Frame)> {
    let dim = base.dim();
    let mut order: Vec<BasisIndex> = (0..dim).map(BasisIndex::from_index).collect();
    order.sort_by(|a, b| {
        base.bare_energy(*a)
            .total_cmp(&base.bare_energy(*b))
            .then(a.index().cmp(&b.index()))
    });

    let same = |a: f64, b: f64| (a - b).abs() <= DEGENERACY_TOL * a.abs().max(b.abs()).max(1.0);
    let mut groups: Vec<Vec<BasisIndex>> = Vec::new();
    for level in order {
        let e = base.bare_energy(level);
        match groups.last_mut() {
            Some(group) if same(base.bare_energy(group[0]), e) => group.push(level),
            _ => groups.push(vec![level]),
        }
    }

    let v_op = build_interaction(base)?;
    let mut labels = Vec::new();
    let mut frame = Frame {
        g: 0.0,
        values: Vec::new(),
        vectors: Vec::new(),
    };
    for group in groups {
        if labels.len() >= levels.min(dim) {
            break;
        }
        let energy = base.bare_energy(group[0]);
        if group.len() == 1 {
            let mut v = DVector::zeros(dim);
            v[group[0].index()] = 1.0;
            labels.push(group[0]);
            frame.values.push(energy);
            frame.vectors.push(v);
            continue;
        }
        let m = group.len();
        let restricted = DMatrix::from_fn(m, m, |a, b| v_op.get(group[a], group[b]));
        let eig = SymmetricEigen::new(restricted);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for w in order.windows(2) {
            if (eig.eigenvalues[w[0]] - eig.eigenvalues[w[1]]).abs() < 1e-9 {
                return Err(Error::UnresolvedDegeneracy { energy });
            }
        }
        let mut group_labels = group.clone();
        group_labels.sort_by(|a, b| b.s.sign().total_cmp(&a.s.sign()).then(a.n.cmp(&b.n)));
        let anchor = group_labels[0];
        for (rank, &col) in order.iter().enumerate() {
            let coeffs = eig.eigenvectors.column(col);
            let mut v = DVector::zeros(dim);
            for (a, level) in group.iter().enumerate() {
                v[level.index()] = coeffs[a];
            }
            let pivot = if v[anchor.index()].abs() > 1e-12 {
                v[anchor.index()]
            } else {
                v[v.iamax()]
            };
            if pivot < 0.0 {
                v.neg_mut();
            }
            labels.push(group_labels[rank]);
            frame.values.push(energy);
            frame.vectors.push(v);
        }
    }
    Ok((labels, frame))
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    if grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidGrid("non-finite grid point".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Follows the lowest branches of `H_Rabi(g)` from `g = 0` across the grid by
/// maximal-overlap continuation with positive phase fixing.
pub fn track_branches(base: &ModelParams, g_grid: &[f64]) -> Result<BranchFamily> {
    track_branches_with(base, g_grid, &TrackOptions::default())
}

pub fn track_branches_with(base: &ModelParams, g_grid: &[f64], opts: &TrackOptions) -> Result<BranchFamily> {
    base.validate()?;
    validate_grid(g_grid)?;
    let levels = opts.levels.unwrap_or_else(|| base.default_trust_cutoff());
    let (labels, seed) = seed_frame(base, levels)?;

    let mut tracker = Tracker {
        base: *base,
        floor: opts.overlap_floor,
        max_bisections: opts.max_bisections,
        min_overlap: 1.0,
    };

    // Diagonalizations at distinct grid points are independent.
    let pre: Vec<Option<(Vec<f64>, DMatrix<f64>)>> = g_grid
        .par_iter()
        .map(|&g| if g == 0.0 { Ok(None) } else { tracker_decompose(base, g).map(Some) })
        .collect::<Result<_>>()?;

    let mut frames: Vec<Option<Frame>> = vec![None; g_grid.len()];
    // outward from zero in both directions
    let mut prev = seed.clone();
    for (i, &g) in g_grid.iter().enumerate().filter(|(_, g)| **g >= 0.0) {
        let frame = if g == 0.0 {
            seed.clone()
        } else {
            tracker.advance(&prev, g, pre[i].as_ref())?
        };
        prev = frame.clone();
        frames[i] = Some(frame);
    }
    let mut prev = seed;
    for (i, &g) in g_grid.iter().enumerate().rev().filter(|(_, g)| **g < 0.0) {
        let frame = tracker.advance(&prev, g, pre[i].as_ref())?;
        prev = frame.clone();
        frames[i] = Some(frame);
    }

    let frames: Vec<Frame> = frames.into_iter().map(|f| f.expect("every grid point visited")).collect();
    let branches = labels
        .iter()
        .enumerate()
        .map(|(b, &label)| Branch {
            label,
            eigenvalues: frames.iter().map(|f| f.values[b]).collect(),
            eigenvectors: frames.iter().map(|f| f.vectors[b].clone()).collect(),
        })
        .collect();
    Ok(BranchFamily {
        params: *base,
        g_grid: g_grid.to_vec(),
        branches,
        overlap_floor: tracker.min_overlap,
    })
}

fn tracker_decompose(base: &ModelParams, g: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    eigh(&build_rabi(&base.with_g(g))?.entries)
}

impl BranchFamily {
    pub fn branch(&self, label: BasisIndex) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    pub fn labels(&self) -> Vec<BasisIndex> {
        self.branches.iter().map(|b| b.label).collect()
    }

    /// Index of the grid point equal to `g` (to 1e-14).
    pub fn grid_index(&self, g: f64) -> Option<usize> {
        self.g_grid.iter().position(|&x| (x - g).abs() <= 1e-14 * g.abs().max(1.0))
    }

    fn frame(&self, idx: usize) -> Frame {
        Frame {
            g: self.g_grid[idx],
            values: self.branches.iter().map(|b| b.eigenvalues[idx]).collect(),
            vectors: self.branches.iter().map(|b| b.eigenvectors[idx].clone()).collect(),
        }
    }

    /// Continues every branch from grid point `idx` to each of `targets`,
    /// walking outward from `g_grid[idx]`. The result has `targets` as its grid.
    pub fn continue_from(&self, idx: usize, targets: &[f64]) -> Result<BranchFamily> {
        validate_grid(targets)?;
        let start = self.frame(idx);
        let start_g = start.g;
        let mut tracker = Tracker {
            base: self.params,
            floor: 0.8,
            max_bisections: 6,
            min_overlap: 1.0,
        };
        let mut frames: Vec<Option<Frame>> = vec![None; targets.len()];
        let mut prev = start.clone();
        for (i, &g) in targets.iter().enumerate().filter(|(_, g)| **g >= start_g) {
            let f = if g == start_g { start.clone() } else { tracker.advance(&prev, g, None)? };
            prev = f.clone();
            frames[i] = Some(f);
        }
        let mut prev = start;
        for (i, &g) in targets.iter().enumerate().rev().filter(|(_, g)| **g < start_g) {
            let f = tracker.advance(&prev, g, None)?;
            prev = f.clone();
            frames[i] = Some(f);
        }
        let frames: Vec<Frame> = frames.into_iter().map(|f| f.expect("visited")).collect();
        Ok(BranchFamily {
            params: self.params,
            g_grid: targets.to_vec(),
            branches: self
                .branches
                .iter()
                .enumerate()
                .map(|(b, br)| Branch {
                    label: br.label,
                    eigenvalues: frames.iter().map(|f| f.values[b]).collect(),
                    eigenvectors: frames.iter().map(|f| f.vectors[b].clone()).collect(),
                })
                .collect(),
            overlap_floor: tracker.min_overlap,
        })
    }

    /// Full spectrum at grid point `idx`, with branch labels attached and
    /// eigenvector phases aligned to the branches.
    pub fn spectrum_at(&self, idx: usize) -> Result<Spectrum> {
        let g = self.g_grid[idx];
        let op = build_rabi(&self.params.with_g(g))?;
        let (values, mut vectors) = eigh(&op.entries)?;
        let dim = values.len();
        let mut labels: Vec<Option<BasisIndex>> = vec![None; dim];
        for branch in &self.branches {
            let v = &branch.eigenvectors[idx];
            let overlaps = vectors.tr_mul(v);
            let k = overlaps.iamax();
            if overlaps[k].abs() >= 0.8 && labels[k].is_none() {
                labels[k] = Some(branch.label);
                vectors.set_column(k, v);
                continue;
            }
            // a degenerate seed: place it inside its eigenspace
            let e = branch.eigenvalues[idx];
            let slot = (0..dim).find(|&k| {
                labels[k].is_none() && (values[k] - e).abs() <= DEGENERACY_TOL * e.abs().max(1.0)
            });
            match slot {
                Some(k) => {
                    labels[k] = Some(branch.label);
                    vectors.set_column(k, v);
                }
                None => return Err(Error::UnknownLabel(branch.label)),
            }
        }
        check_eigenpairs(&op.entries, &values, &vectors)?;
        Ok(Spectrum {
            params: op.params,
            trust_cutoff: op.params.default_trust_cutoff().min(dim),
            eigenvalues: values,
            eigenvectors: vectors,
            labels: Some(labels),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LabelOptions {
    /// Number of continuation steps from 0 to `g`.
    pub steps: usize,
    /// Branches tracked; defaults to twice the trust cutoff.
    pub levels: Option<usize>,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self { steps: 40, levels: None }
    }
}

/// Spectrum of `H_Rabi(params.g)` labelled by continuation from `g = 0`.
pub fn labelled_spectrum(params: &ModelParams, opts: &LabelOptions) -> Result<Spectrum> {
    params.validate()?;
    let levels = opts
        .levels
        .unwrap_or(2 * params.default_trust_cutoff())
        .min(params.dim());
    let track = TrackOptions {
        levels: Some(levels),
        ..TrackOptions::default()
    };
    if params.g == 0.0 {
        let family = track_branches_with(params, &[0.0], &track)?;
        return family.spectrum_at(0);
    }
    let steps = opts.steps.max(1);
    let grid: Vec<f64> = (0..=steps).map(|i| params.g * i as f64 / steps as f64).collect();
    let grid: Vec<f64> = if params.g > 0.0 { grid } else { grid.into_iter().rev().collect() };
    let family = track_branches_with(params, &grid, &track)?;
    let idx = family.grid_index(params.g).expect("endpoint on grid");
    family.spectrum_at(idx)
}

/// Fourth-order centered first derivative from samples at `g-2h..g+2h`.
pub(crate) fn centered_derivative(minus2: f64, minus1: f64, plus1: f64, plus2: f64, h: f64) -> f64 {
    (minus2 - 8.0 * minus1 + 8.0 * plus1 - plus2) / (12.0 * h)
}

/// Finite-difference step used throughout: `1e-3 · max(1, |g|)`.
pub fn fd_step(g: f64) -> f64 {
    1e-3 * g.abs().max(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct HellmannFeynmanEntry {
    pub label: BasisIndex,
    pub fd_slope: f64,
    pub rayleigh: f64,
    pub discrepancy: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HellmannFeynmanReport {
    pub g: f64,
    pub step: f64,
    pub tolerance: f64,
    pub entries: Vec<HellmannFeynmanEntry>,
    pub flagged: usize,
}

/// Compares `dE/dg` by finite differences with `<v(g), V v(g)>` on every branch.
pub fn hellmann_feynman_check(family: &BranchFamily, v_op: &LabeledOperator, g: f64) -> Result<HellmannFeynmanReport> {
    hellmann_feynman_check_with(family, v_op, g, 1e-6)
}

pub fn hellmann_feynman_check_with(
    family: &BranchFamily,
    v_op: &LabeledOperator,
    g: f64,
    tolerance: f64,
) -> Result<HellmannFeynmanReport> {
    let idx = family
        .grid_index(g)
        .ok_or_else(|| Error::InvalidGrid(format!("g = {g} is not a grid point of the family")))?;
    if v_op.dim() != family.params.dim() {
        return Err(Error::DimensionMismatch {
            expected: family.params.dim(),
            found: v_op.dim(),
        });
    }
    let h = fd_step(g);
    let local = family.continue_from(idx, &[g - 2.0 * h, g - h, g, g + h, g + 2.0 * h])?;
    let entries: Vec<HellmannFeynmanEntry> = local
        .branches
        .iter()
        .map(|b| {
            let e = &b.eigenvalues;
            let fd_slope = centered_derivative(e[0], e[1], e[3], e[4], h);
            let v = &family.branch(b.label).expect("same labels").eigenvectors[idx];
            let rayleigh = v.dot(&(&v_op.entries * v));
            let discrepancy = (fd_slope - rayleigh).abs();
            HellmannFeynmanEntry {
                label: b.label,
                fd_slope,
                rayleigh,
                discrepancy,
                flagged: discrepancy > tolerance,
            }
        })
        .collect();
    let flagged = entries.iter().filter(|e| e.flagged).count();
    Ok(HellmannFeynmanReport {
        g,
        step: h,
        tolerance,
        entries,
        flagged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub params: ModelParams,
    pub sizes: Vec<usize>,
    /// Per level, the largest change in eigenvalue between successive sizes.
    pub drift: Vec<f64>,
    pub threshold: f64,
    pub trust_cutoff: usize,
}

impl ConvergenceReport {
    pub fn is_trusted(&self, level: usize) -> bool {
        level < self.trust_cutoff
    }
}

/// Eigenvalue drift of the lowest levels as the Fock truncation grows.
pub fn convergence_scan(params: &ModelParams, sizes: &[usize]) -> Result<ConvergenceReport> {
    params.validate()?;
    if sizes.len() < 2 {
        return Err(Error::InvalidGrid("convergence scan needs at least two sizes".into()));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("sizes must be strictly increasing".into()));
    }
    let spectra: Vec<Vec<f64>> = sizes
        .par_iter()
        .map(|&n| {
            let p = params.with_n_fock(n);
            p.validate()?;
            Ok(eigh(&build_rabi(&p)?.entries)?.0)
        })
        .collect::<Result<_>>()?;
    let levels = 2 * sizes[0];
    let drift: Vec<f64> = (0..levels)
        .map(|k| {
            spectra
                .windows(2)
                .map(|w| (w[1][k] - w[0][k]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let trust_cutoff = drift.iter().take_while(|&&d| d <= TRUST_DRIFT).count();
    Ok(ConvergenceReport {
        params: *params,
        sizes: sizes.to_vec(),
        drift,
        threshold: TRUST_DRIFT,
        trust_cutoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockmodel::{build_parity, OperatorName, Spin};

    fn p(omega: f64, big: f64, g: f64, n: usize) -> ModelParams {
        ModelParams::new(omega, big, g, n).unwrap()
    }

    #[test]
    fn zero_coupling_spectrum_is_bare() {
        let params = p(1.0, 1.1, 0.0, 8);
        let s = diagonalize(&build_rabi(&params).unwrap()).unwrap();
        assert!((s.eigenvalues[0] + 0.05).abs() < 1e-12);
        for k in 0..s.dim() {
            let label = s.label(k).unwrap();
            assert!((s.eigenvalues[k] - params.bare_energy(label)).abs() < 1e-12);
        }
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn diagonal_input_gives_coordinate_vectors() {
        let params = p(1.0, 1.0, 0.0, 3);
        let mut m = DMatrix::zeros(6, 6);
        for (i, v) in [3.0, -1.0, 2.0, 2.0, 0.5, 7.0].iter().enumerate() {
            m[(i, i)] = *v;
        }
        let op = LabeledOperator::from_entries(OperatorName::Custom, &params, m).unwrap();
        let s = diagonalize(&op).unwrap();
        assert_eq!(s.eigenvalues, vec![-1.0, 0.5, 2.0, 2.0, 3.0, 7.0]);
        assert_eq!(s.label(0), Some(BasisIndex::from_index(1)));
        for k in 0..6 {
            let v = s.vector(k);
            assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
        }
    }

    #[test]
    fn degenerate_zero_coupling_multiplicities() {
        let params = p(1.0, 1.0, 0.0, 6);
        let s = diagonalize(&build_rabi(&params).unwrap()).unwrap();
        assert_eq!(s.eigenvalues[0], 0.0);
        for j in 0..5 {
            let a = s.eigenvalues[1 + 2 * j];
            let b = s.eigenvalues[2 + 2 * j];
            assert_eq!(a, b);
            assert_eq!(a, (j + 1) as f64);
        }
    }

    #[test]
    fn residual_and_orthonormality_bounds() {
        let params = p(1.0, 1.1, 0.4, 24);
        let h = build_rabi(&params).unwrap();
        let s = diagonalize(&h).unwrap();
        let norm = s.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(s.max_residual(&h) <= 1e-10 * norm);
        assert!(s.orthonormality_error() <= 1e-10);
    }

    #[test]
    fn dressed_labels_need_majority_weight() {
        let params = p(1.0, 1.0, 1.5, 24);
        let s = diagonalize(&build_rabi(&params).unwrap()).unwrap();
        // resonant doublets mix evenly and stay unlabelled
        assert!(s.labels.as_ref().unwrap().iter().any(|l| l.is_none()));
    }

    #[test]
    fn single_point_grid_equals_bare_labels() {
        let params = p(1.0, 1.1, 0.0, 8);
        let fam = track_branches(&params, &[0.0]).unwrap();
        assert_eq!(fam.branches.len(), 2);
        assert_eq!(fam.branches[0].label, BasisIndex::down(0));
        assert_eq!(fam.branches[1].label, BasisIndex::down(1));
        for b in &fam.branches {
            assert_eq!(b.eigenvalues[0], params.bare_energy(b.label));
        }
    }

    #[test]
    fn tracking_is_even_in_g() {
        let params = p(1.0, 1.1, 0.0, 24);
        let grid: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.02).collect();
        let fam = track_branches(&params, &grid).unwrap();
        let b = fam.branch(BasisIndex::down(0)).unwrap();
        for i in 0..grid.len() {
            let j = grid.len() - 1 - i;
            assert!((b.eigenvalues[i] - b.eigenvalues[j]).abs() < 1e-10);
        }
        assert!(fam.overlap_floor >= 0.8);
        for br in &fam.branches {
            for w in br.eigenvectors.windows(2) {
                assert!(w[0].dot(&w[1]) > 0.0);
            }
        }
    }

    #[test]
    fn degenerate_seeds_follow_convention() {
        let params = p(1.0, 1.0, 0.0, 8);
        let fam = track_branches_with(
            &params,
            &[0.0],
            &TrackOptions {
                levels: Some(5),
                ..Default::default()
            },
        )
        .unwrap();
        let plus = fam.branch(BasisIndex::up(0)).unwrap();
        let minus = fam.branch(BasisIndex::down(1)).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((plus.eigenvectors[0][BasisIndex::up(0).index()] - r).abs() < 1e-14);
        assert!((plus.eigenvectors[0][BasisIndex::down(1).index()] - r).abs() < 1e-14);
        assert!((minus.eigenvectors[0][BasisIndex::up(0).index()] - r).abs() < 1e-14);
        assert!((minus.eigenvectors[0][BasisIndex::down(1).index()] + r).abs() < 1e-14);
    }

    #[test]
    fn degenerate_branches_split_linearly() {
        let params = p(1.0, 1.0, 0.0, 16);
        let h = 1e-3;
        let grid = [-2.0 * h, -h, 0.0, h, 2.0 * h];
        let opts = TrackOptions {
            levels: Some(9),
            ..TrackOptions::default()
        };
        let fam = track_branches_with(&params, &grid, &opts).unwrap();
        for j in 0..4 {
            let expect = ((j + 1) as f64 / 2.0).sqrt();
            let up = &fam.branch(BasisIndex::up(j)).unwrap().eigenvalues;
            let down = &fam.branch(BasisIndex::down(j + 1)).unwrap().eigenvalues;
            let s_up = centered_derivative(up[0], up[1], up[3], up[4], h);
            let s_down = centered_derivative(down[0], down[1], down[3], down[4], h);
            assert!((s_up - expect).abs() < 1e-6, "{s_up}");
            assert!((s_down + expect).abs() < 1e-6, "{s_down}");
        }
    }

    #[test]
    fn hellmann_feynman_zero_slope_off_resonance() {
        let params = p(1.0, 1.1, 0.0, 16);
        let fam = track_branches(&params, &[0.0]).unwrap();
        let v = build_interaction(&params).unwrap();
        let rep = hellmann_feynman_check(&fam, &v, 0.0).unwrap();
        for e in &rep.entries {
            assert!(e.fd_slope.abs() < 1e-6 && e.rayleigh.abs() < 1e-6);
        }
        assert_eq!(rep.flagged, 0);
    }

    #[test]
    fn hellmann_feynman_degenerate_ground_pair() {
        let params = p(1.0, 1.0, 0.0, 16);
        let fam = track_branches(&params, &[0.0]).unwrap();
        let v = build_interaction(&params).unwrap();
        let rep = hellmann_feynman_check(&fam, &v, 0.0).unwrap();
        let e = rep.entries.iter().find(|e| e.label == BasisIndex::up(0)).unwrap();
        assert!((e.rayleigh - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(e.discrepancy < 1e-6);
    }

    #[test]
    fn hellmann_feynman_generic_coupling() {
        let params = p(1.0, 1.1, 0.0, 32);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.02).collect();
        let fam = track_branches(&params, &grid).unwrap();
        let v = build_interaction(&params).unwrap();
        let rep = hellmann_feynman_check(&fam, &v, 0.2).unwrap();
        assert_eq!(rep.flagged, 0, "{:?}", rep.entries);
        assert!(hellmann_feynman_check(&fam, &v, 0.123).is_err());
    }

    #[test]
    fn grid_validation() {
        let params = p(1.0, 1.1, 0.0, 8);
        assert!(track_branches(&params, &[]).is_err());
        assert!(track_branches(&params, &[0.0, 0.1, 0.05]).is_err());
        assert!(track_branches(&params, &[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn coarse_grid_is_refused_with_few_bisections() {
        let params = p(1.0, 1.05, 0.0, 16);
        let opts = TrackOptions {
            levels: Some(4),
            overlap_floor: 0.8,
            max_bisections: 0,
        };
        assert!(matches!(
            track_branches_with(&params, &[0.0, 0.5], &opts),
            Err(Error::TrackingFailed { .. })
        ));
        let refined = TrackOptions {
            max_bisections: 6,
            ..opts
        };
        assert!(track_branches_with(&params, &[0.0, 0.5], &refined).is_ok());
    }

    #[test]
    fn refinement_keeps_shared_points() {
        let params = p(1.0, 1.1, 0.0, 24);
        let coarse: Vec<f64> = (0..=5).map(|i| i as f64 * 0.04).collect();
        let fine: Vec<f64> = (0..=10).map(|i| i as f64 * 0.02).collect();
        let a = track_branches(&params, &coarse).unwrap();
        let b = track_branches(&params, &fine).unwrap();
        for (ba, bb) in a.branches.iter().zip(&b.branches) {
            assert_eq!(ba.label, bb.label);
            for i in 0..coarse.len() {
                assert!((ba.eigenvalues[i] - bb.eigenvalues[2 * i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn labelled_spectrum_matches_parity_sectors() {
        let params = p(1.0, 1.05, 0.2, 32);
        let s = labelled_spectrum(&params, &LabelOptions::default()).unwrap();
        let parity = build_parity(&params).unwrap();
        for k in 0..s.trust_cutoff {
            let label = s.label(k).expect("trusted levels are labelled");
            let v = s.vector(k);
            let expected = parity.get(label, label);
            let measured = v.dot(&(&parity.entries * &v));
            assert!((measured - expected).abs() < 1e-8);
        }
        assert_eq!(s.label(0), Some(BasisIndex::new(0, Spin::Down)));
    }

    #[test]
    fn convergence_at_zero_coupling_is_exact() {
        let params = p(1.0, 1.1, 0.0, 8);
        let rep = convergence_scan(&params, &[8, 16]).unwrap();
        // only the top level of the small truncation changes identity
        assert!(rep.drift[..15].iter().all(|d| *d == 0.0));
        assert!((rep.drift[15] - 0.1).abs() < 1e-12);
        assert_eq!(rep.trust_cutoff, 15);
    }

    #[test]
    fn convergence_scan_low_levels() {
        let params = p(1.0, 1.1, 0.3, 32);
        let rep = convergence_scan(&params, &[32, 64, 128]).unwrap();
        assert!(rep.trust_cutoff >= 10);
        assert!(rep.is_trusted(31));
        assert!(!rep.is_trusted(63));
        assert!(convergence_scan(&params, &[32]).is_err());
        assert!(convergence_scan(&params, &[64, 32]).is_err());
    }
}
