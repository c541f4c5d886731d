//! Non-resonance and connectivity certificates on a finite window of levels:
//! order-by-order classification of equal-gap quadruples, numerical gap
//! collision scans, the control coupling graph and its chain witness.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockmodel::{bare_energy, BasisIndex, LabeledOperator, ModelParams, Spin};
use crate::perturbation::{degenerate_slopes, e2_closed, e4_closed, levels_covering};
use crate::spectral::{track_branches_with, Spectrum, TrackOptions};

/// Finite-window caveat carried by every report.
pub const WINDOW_LIMITATION: &str =
    "gaps are compared only against pairs inside the trusted window, not against the full spectrum";

const CLASSIFY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResolutionOrder {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "unresolved")]
    Unresolved,
}

impl ResolutionOrder {
    pub fn order(self) -> Option<u32> {
        match self {
            ResolutionOrder::Zero => Some(0),
            ResolutionOrder::Two => Some(2),
            ResolutionOrder::Four => Some(4),
            ResolutionOrder::Unresolved => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapQuadruple {
    pub i: BasisIndex,
    pub j: BasisIndex,
    pub k: BasisIndex,
    pub l: BasisIndex,
    /// `|(E_i − E_j) − (E_k − E_l)|` at `g = 0`.
    pub gap_difference: f64,
    pub resolution_order: ResolutionOrder,
    /// Differences of the order-0, order-2 and order-4 coefficients.
    pub coefficient_differences: [f64; 3],
}

fn differ(d: f64, parts: [f64; 4]) -> bool {
    let scale = parts.iter().fold(1.0_f64, |a, p| a.max(p.abs()));
    d.abs() > CLASSIFY_RTOL * scale
}

/// Lowest perturbative order at which `E_i − E_j` and `E_k − E_l` separate.
pub fn classify_quadruple(
    i: BasisIndex,
    j: BasisIndex,
    k: BasisIndex,
    l: BasisIndex,
    omega: f64,
    spin_splitting: f64,
) -> Result<GapQuadruple> {
    if i == j {
        return Err(Error::MalformedQuadruple(format!("i = j = {i}")));
    }
    if (i, j) == (k, l) {
        return Err(Error::MalformedQuadruple(format!("(i,j) = (k,l) = ({i},{j})")));
    }
    if omega == spin_splitting {
        return Err(Error::DegenerateFrequencies);
    }
    let coeff = |f: &dyn Fn(BasisIndex) -> Result<f64>| -> Result<(f64, [f64; 4])> {
        let v = [f(i)?, f(j)?, f(k)?, f(l)?];
        Ok(((v[0] - v[1]) - (v[2] - v[3]), v))
    };
    let (d0, p0) = coeff(&|x| Ok(bare_energy(x, omega, spin_splitting)))?;
    let (d2, p2) = coeff(&|x| e2_closed(x, omega, spin_splitting))?;
    let (d4, p4) = coeff(&|x| e4_closed(x, omega, spin_splitting))?;
    let resolution_order = if differ(d0, p0) {
        ResolutionOrder::Zero
    } else if differ(d2, p2) {
        ResolutionOrder::Two
    } else if differ(d4, p4) {
        ResolutionOrder::Four
    } else {
        ResolutionOrder::Unresolved
    };
    Ok(GapQuadruple {
        i,
        j,
        k,
        l,
        gap_difference: d0.abs(),
        resolution_order,
        coefficient_differences: [d0, d2, d4],
    })
}

/// All ordered quadruples over the lowest `window` bare levels, classified.
pub fn classify_window(base: &ModelParams, window: usize) -> Result<Vec<GapQuadruple>> {
    let levels = lowest_bare_levels(base, window);
    let w = levels.len();
    let tuples: Vec<[BasisIndex; 4]> = (0..w * w * w * w)
        .map(|t| [levels[t / (w * w * w)], levels[(t / (w * w)) % w], levels[(t / w) % w], levels[t % w]])
        .filter(|[i, j, k, l]| i != j && (i, j) != (k, l))
        .collect();
    tuples
        .par_iter()
        .map(|&[i, j, k, l]| classify_quadruple(i, j, k, l, base.omega, base.spin_splitting))
        .collect()
}

fn lowest_bare_levels(base: &ModelParams, window: usize) -> Vec<BasisIndex> {
    let mut order: Vec<BasisIndex> = (0..base.dim()).map(BasisIndex::from_index).collect();
    order.sort_by(|a, b| {
        base.bare_energy(*a)
            .total_cmp(&base.bare_energy(*b))
            .then(a.index().cmp(&b.index()))
    });
    order.truncate(window);
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares slope of `log |(E_i − E_j) − (E_k − E_l)|` against `log g`
/// for tracked branches over `g_grid` (all points positive).
pub fn gap_difference_scaling(base: &ModelParams, quad: [BasisIndex; 4], g_grid: &[f64]) -> Result<LogLogFit> {
    if g_grid.len() < 2 || g_grid.iter().any(|g| *g <= 0.0) {
        return Err(Error::InvalidGrid("scaling fit needs at least two positive g values".into()));
    }
    let opts = TrackOptions {
        levels: Some(levels_covering(base, &quad)),
        ..TrackOptions::default()
    };
    let family = track_branches_with(base, g_grid, &opts)?;
    let e: Vec<&Vec<f64>> = quad
        .iter()
        .map(|q| family.branch(*q).map(|b| &b.eigenvalues).ok_or(Error::UnknownLabel(*q)))
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = (0..g_grid.len())
        .map(|t| {
            let d = (e[0][t] - e[1][t]) - (e[2][t] - e[3][t]);
            (g_grid[t].ln(), d.abs().ln())
        })
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    Ok(LogLogFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}

/// Two level pairs whose gaps agree within the scan tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCollision {
    pub first: (usize, usize),
    pub second: (usize, usize),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_labels: Option<(BasisIndex, BasisIndex)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_labels: Option<(BasisIndex, BasisIndex)>,
    pub difference: f64,
}

impl GapCollision {
    /// Number of level indices common to the two pairs.
    pub fn shared(&self) -> usize {
        let (a, b) = self.first;
        [self.second.0, self.second.1]
            .iter()
            .filter(|x| **x == a || **x == b)
            .count()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceScan {
    pub g: f64,
    pub window: usize,
    pub tol: f64,
    /// Every pair of distinct level pairs with equal gaps.
    pub raw: Vec<GapCollision>,
    /// Collisions that break the non-resonance definition: the pairs share
    /// exactly one level.
    pub filtered: Vec<GapCollision>,
    pub limitation: &'static str,
}

fn pair_labels(spectrum: &Spectrum, a: usize, b: usize) -> Option<(BasisIndex, BasisIndex)> {
    Some((spectrum.label(a)?, spectrum.label(b)?))
}

fn check_window(spectrum: &Spectrum, window: usize) -> Result<()> {
    if window > spectrum.trust_cutoff {
        return Err(Error::WindowExceedsTrust {
            window,
            trusted: spectrum.trust_cutoff,
        });
    }
    Ok(())
}

/// Enumerates every pair of gaps among the lowest `window` levels that agree
/// within `tol`.
pub fn numeric_resonance_scan(spectrum: &Spectrum, window: usize, tol: f64) -> Result<ResonanceScan> {
    check_window(spectrum, window)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }
    let ev = &spectrum.eigenvalues;
    let mut gaps: Vec<(f64, usize, usize)> = (0..window)
        .flat_map(|a| ((a + 1)..window).map(move |b| (a, b)))
        .map(|(a, b)| ((ev[b] - ev[a]).abs(), a, b))
        .collect();
    gaps.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let mut raw = Vec::new();
    for (p, x) in gaps.iter().enumerate() {
        for y in gaps[p + 1..].iter().take_while(|y| y.0 - x.0 < tol) {
            let (first, second) = if (x.1, x.2) < (y.1, y.2) {
                ((x.1, x.2), (y.1, y.2))
            } else {
                ((y.1, y.2), (x.1, x.2))
            };
            raw.push(GapCollision {
                first,
                second,
                first_labels: pair_labels(spectrum, first.0, first.1),
                second_labels: pair_labels(spectrum, second.0, second.1),
                difference: (y.0 - x.0).abs(),
            });
        }
    }
    raw.sort_by_key(|c| (c.first, c.second));
    let filtered = raw.iter().filter(|c| c.shared() == 1).cloned().collect();
    Ok(ResonanceScan {
        g: spectrum.params.g,
        window,
        tol,
        raw,
        filtered,
        limitation: WINDOW_LIMITATION,
    })
}

/// True when no pair sharing exactly one level with `(a, b)` has the same gap.
fn pair_is_non_resonant(ev: &[f64], window: usize, a: usize, b: usize, tol: f64) -> bool {
    let gap = (ev[a] - ev[b]).abs();
    for &shared in &[a, b] {
        for m in 0..window {
            if m == a || m == b {
                continue;
            }
            if ((ev[shared] - ev[m]).abs() - gap).abs() < tol {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphNode {
    pub level: usize,
    pub label: BasisIndex,
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphEdge {
    pub a: BasisIndex,
    pub b: BasisIndex,
    /// `<v_a, B v_b>` with the branch phase convention.
    pub weight: f64,
    pub nonzero: bool,
    pub non_resonant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionGraph {
    pub g: f64,
    pub window: usize,
    pub floor: f64,
    pub tol: f64,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    /// Levels inside the window left out for lack of a label.
    pub excluded_levels: Vec<usize>,
    pub limitation: &'static str,
}

impl TransitionGraph {
    pub fn node_index(&self, label: BasisIndex) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label)
    }

    pub fn edge(&self, a: BasisIndex, b: BasisIndex) -> Option<&GraphEdge> {
        self.edges
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GraphOptions {
    /// Levels included, counted from the bottom; defaults to the trust cutoff.
    pub window: Option<usize>,
    /// Coupling floor; defaults to `1e-8 · ‖B‖`.
    pub floor: Option<f64>,
    /// Gap tolerance; defaults to `1e-9 ·` the window's spectral diameter.
    pub tol: Option<f64>,
}

/// Graph over the labelled levels of the window, with an edge wherever the
/// control matrix element clears the floor.
pub fn coupling_graph(spectrum: &Spectrum, b_op: &LabeledOperator, opts: &GraphOptions) -> Result<TransitionGraph> {
    if b_op.dim() != spectrum.dim() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.dim(),
            found: b_op.dim(),
        });
    }
    let window = opts.window.unwrap_or(spectrum.trust_cutoff);
    check_window(spectrum, window)?;
    let floor = opts.floor.unwrap_or_else(|| 1e-8 * b_op.spectral_norm());
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter {
            name: "floor",
            reason: format!("must be positive, got {floor}"),
        });
    }
    let ev = &spectrum.eigenvalues;
    let tol = match opts.tol {
        Some(t) => t,
        None => {
            let d = if window > 0 { ev[window - 1] - ev[0] } else { 0.0 };
            1e-9 * d.max(f64::MIN_POSITIVE)
        }
    };
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: format!("must be positive, got {tol}"),
        });
    }

    let mut nodes = Vec::new();
    let mut excluded_levels = Vec::new();
    for level in 0..window {
        match spectrum.label(level) {
            Some(label) => nodes.push(GraphNode {
                level,
                label,
                energy: ev[level],
            }),
            None => excluded_levels.push(level),
        }
    }
    let vectors: Vec<_> = nodes.iter().map(|n| spectrum.vector(n.level)).collect();
    let bv: Vec<_> = vectors.iter().map(|v| &b_op.entries * v).collect();
    let mut edges = Vec::new();
    for p in 0..nodes.len() {
        for q in (p + 1)..nodes.len() {
            let weight = vectors[p].dot(&bv[q]);
            if weight.abs() > floor {
                edges.push(GraphEdge {
                    a: nodes[p].label,
                    b: nodes[q].label,
                    weight,
                    nonzero: true,
                    non_resonant: pair_is_non_resonant(ev, window, nodes[p].level, nodes[q].level, tol),
                });
            }
        }
    }
    Ok(TransitionGraph {
        g: spectrum.params.g,
        window,
        floor,
        tol,
        nodes,
        edges,
        excluded_levels,
        limitation: WINDOW_LIMITATION,
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainReport {
    /// Spanning tree of non-resonant edges.
    Witness { edges: Vec<(BasisIndex, BasisIndex)> },
    Disconnected {
        /// Components of the graph restricted to non-resonant edges.
        non_resonant_components: Vec<Vec<BasisIndex>>,
        /// Components of the full coupling graph, ignoring resonance flags.
        coupling_components: Vec<Vec<BasisIndex>>,
    },
}

impl ChainReport {
    pub fn witness(&self) -> Option<&[(BasisIndex, BasisIndex)]> {
        match self {
            ChainReport::Witness { edges } => Some(edges),
            ChainReport::Disconnected { .. } => None,
        }
    }
}

fn adjacency(graph: &TransitionGraph, non_resonant_only: bool) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); graph.nodes.len()];
    for e in &graph.edges {
        if non_resonant_only && !e.non_resonant {
            continue;
        }
        let (p, q) = (graph.node_index(e.a).unwrap(), graph.node_index(e.b).unwrap());
        adj[p].push(q);
        adj[q].push(p);
    }
    adj
}

/// Breadth-first forest; returns the tree edges and the component of each node.
fn bfs_forest(adj: &[Vec<usize>]) -> (Vec<(usize, usize)>, Vec<Vec<usize>>) {
    let mut seen = vec![false; adj.len()];
    let mut tree = Vec::new();
    let mut components = Vec::new();
    for root in 0..adj.len() {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut comp = vec![root];
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    tree.push((u, v));
                    comp.push(v);
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    (tree, components)
}

/// Spanning witness over non-resonant edges, or the components that block one.
pub fn certify_chain(graph: &TransitionGraph) -> ChainReport {
    let (tree, components) = bfs_forest(&adjacency(graph, true));
    let label = |p: usize| graph.nodes[p].label;
    if components.len() == 1 {
        return ChainReport::Witness {
            edges: tree.into_iter().map(|(p, q)| (label(p), label(q))).collect(),
        };
    }
    let (_, coupling) = bfs_forest(&adjacency(graph, false));
    let to_labels = |cs: Vec<Vec<usize>>| -> Vec<Vec<BasisIndex>> {
        cs.into_iter().map(|c| c.into_iter().map(label).collect()).collect()
    };
    ChainReport::Disconnected {
        non_resonant_components: to_labels(components),
        coupling_components: to_labels(coupling),
    }
}

/// Path of non-resonant edges between two nodes, if any.
pub fn non_resonant_path(graph: &TransitionGraph, source: BasisIndex, target: BasisIndex) -> Option<Vec<BasisIndex>> {
    let s = graph.node_index(source)?;
    let t = graph.node_index(target)?;
    let adj = adjacency(graph, true);
    let mut parent = vec![usize::MAX; adj.len()];
    parent[s] = s;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        if u == t {
            break;
        }
        for &v in &adj[u] {
            if parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    if parent[t] == usize::MAX {
        return None;
    }
    let mut path = vec![t];
    while *path.last().unwrap() != s {
        path.push(parent[*path.last().unwrap()]);
    }
    path.reverse();
    Some(path.into_iter().map(|p| graph.nodes[p].label).collect())
}

/// One branch of the `ω = Ω` model: order-0 energy and first-order slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegenerateBranch {
    pub label: BasisIndex,
    pub energy: f64,
    pub slope: f64,
}

/// Lowest `window` branches of the degenerate model: the ground state
/// `(0,−1)` with slope 0, then `(j,+1)` and `(j+1,−1)` at `ω(j+1)` with
/// slopes `±√((j+1)/2)`.
pub fn degenerate_branches(window: usize, omega: f64) -> Vec<DegenerateBranch> {
    let mut out = Vec::with_capacity(window);
    if window == 0 {
        return out;
    }
    out.push(DegenerateBranch {
        label: BasisIndex::new(0, Spin::Down),
        energy: 0.0,
        slope: 0.0,
    });
    let mut j = 0;
    while out.len() < window {
        let (up, down) = degenerate_slopes(j);
        let energy = omega * (j + 1) as f64;
        out.push(DegenerateBranch {
            label: BasisIndex::up(j),
            energy,
            slope: up,
        });
        if out.len() < window {
            out.push(DegenerateBranch {
                label: BasisIndex::down(j + 1),
                energy,
                slope: down,
            });
        }
        j += 1;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DegenerateQuadrupleReport {
    pub window: usize,
    pub omega: f64,
    pub quadruples_checked: usize,
    /// Quadruples with equal order-0 gaps and equal slope differences.
    pub violations: Vec<[BasisIndex; 4]>,
}

/// Checks that first-order slopes separate every nontrivial quadruple of
/// degenerate-case branches with equal order-0 gaps.
pub fn degenerate_quadruple_check(window: usize, omega: f64) -> Result<DegenerateQuadrupleReport> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidParameter {
            name: "omega",
            reason: format!("must be positive and finite, got {omega}"),
        });
    }
    Ok(degenerate_quadruple_check_with(&degenerate_branches(window, omega), omega, 1e-9))
}

/// Same check on caller-supplied branches; slope differences closer than
/// `tol` count as a collision.
pub fn degenerate_quadruple_check_with(branches: &[DegenerateBranch], omega: f64, tol: f64) -> DegenerateQuadrupleReport {
    let w = branches.len();
    let gap_tol = 1e-9 * omega.abs().max(1.0) * w.max(1) as f64;
    let results: Vec<(usize, Vec<[BasisIndex; 4]>)> = (0..w)
        .into_par_iter()
        .map(|i| {
            let mut checked = 0;
            let mut bad = Vec::new();
            for j in 0..w {
                if i == j {
                    continue;
                }
                let gap = branches[i].energy - branches[j].energy;
                let slope = branches[i].slope - branches[j].slope;
                for k in 0..w {
                    for l in 0..w {
                        if (i, j) == (k, l) {
                            continue;
                        }
                        if (gap - (branches[k].energy - branches[l].energy)).abs() > gap_tol {
                            continue;
                        }
                        checked += 1;
                        if (slope - (branches[k].slope - branches[l].slope)).abs() <= tol {
                            bad.push([branches[i].label, branches[j].label, branches[k].label, branches[l].label]);
                        }
                    }
                }
            }
            (checked, bad)
        })
        .collect();
    let quadruples_checked = results.iter().map(|r| r.0).sum();
    let violations = results.into_iter().flat_map(|r| r.1).collect();
    DegenerateQuadrupleReport {
        window: w,
        omega,
        quadruples_checked,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockmodel::build_control;
    use crate::spectral::{labelled_spectrum, LabelOptions};

    fn up(n: usize) -> BasisIndex {
        BasisIndex::up(n)
    }
    fn down(n: usize) -> BasisIndex {
        BasisIndex::down(n)
    }

    #[test]
    fn classify_spec_examples() {
        let q = classify_quadruple(up(0), down(0), up(1), down(1), 1.0, 1.1).unwrap();
        assert_eq!(q.resolution_order, ResolutionOrder::Two);
        let q = classify_quadruple(up(1), up(0), up(2), up(1), 1.0, 1.1).unwrap();
        assert_eq!(q.resolution_order, ResolutionOrder::Four);
        let q = classify_quadruple(down(1), down(0), down(2), down(1), 1.0, 1.1).unwrap();
        assert_eq!(q.resolution_order, ResolutionOrder::Four);
        let q = classify_quadruple(up(2), down(0), up(1), up(0), 1.0, 1.13).unwrap();
        assert_eq!(q.resolution_order, ResolutionOrder::Zero);
        assert!(q.gap_difference > 0.1);
    }

    #[test]
    fn classify_rejects_bad_input() {
        assert!(matches!(
            classify_quadruple(up(0), up(0), up(1), down(1), 1.0, 1.1),
            Err(Error::MalformedQuadruple(_))
        ));
        assert!(matches!(
            classify_quadruple(up(0), down(0), up(0), down(0), 1.0, 1.1),
            Err(Error::MalformedQuadruple(_))
        ));
        assert!(matches!(
            classify_quadruple(up(0), down(0), up(1), down(1), 1.0, 1.0),
            Err(Error::DegenerateFrequencies)
        ));
    }

    #[test]
    fn window_is_fully_resolved() {
        let base = ModelParams::new(1.0, 1.1, 0.0, 32).unwrap();
        let quads = classify_window(&base, 6).unwrap();
        assert!(quads.iter().all(|q| q.resolution_order != ResolutionOrder::Unresolved));
        assert!(quads.iter().any(|q| q.resolution_order == ResolutionOrder::Four));
    }

    #[test]
    fn zero_coupling_scan_finds_ladder_collisions() {
        let p = ModelParams::new(1.0, 1.1, 0.0, 32).unwrap();
        let s = labelled_spectrum(&p, &LabelOptions::default()).unwrap();
        let scan = numeric_resonance_scan(&s, 8, 1e-9).unwrap();
        assert!(!scan.filtered.is_empty());
        let (a, b, c) = (s.index_of(down(0)).unwrap(), s.index_of(down(1)).unwrap(), s.index_of(down(2)).unwrap());
        assert!(scan.filtered.iter().any(|x| {
            let mut f = [x.first, x.second];
            f.sort();
            let mut e = [(a.min(b), a.max(b)), (b.min(c), b.max(c))];
            e.sort();
            f == e
        }));
        assert!(scan.filtered.iter().all(|c| c.first != c.second));
    }

    #[test]
    fn huge_tolerance_collides_everything() {
        let p = ModelParams::new(1.0, 1.1, 0.2, 32).unwrap();
        let s = labelled_spectrum(&p, &LabelOptions::default()).unwrap();
        let scan = numeric_resonance_scan(&s, 6, 10.0 * s.diameter()).unwrap();
        assert_eq!(scan.raw.len(), 15 * 14 / 2);
        assert!(numeric_resonance_scan(&s, 6, 0.0).is_err());
        assert!(numeric_resonance_scan(&s, s.trust_cutoff + 1, 1e-9).is_err());
    }

    #[test]
    fn zero_coupling_graph_is_two_ladders() {
        let p = ModelParams::new(1.0, 1.05, 0.0, 32).unwrap();
        let s = labelled_spectrum(&p, &LabelOptions::default()).unwrap();
        let b = build_control(&p).unwrap();
        let graph = coupling_graph(&s, &b, &GraphOptions { window: Some(8), ..Default::default() }).unwrap();
        for e in &graph.edges {
            assert_eq!(e.a.s, e.b.s);
            assert_eq!(e.a.n.abs_diff(e.b.n), 1);
            let n = e.a.n.min(e.b.n);
            assert!((e.weight.abs() - ((n + 1) as f64 / 2.0).sqrt()).abs() < 1e-12);
        }
        match certify_chain(&graph) {
            ChainReport::Disconnected { coupling_components, .. } => assert_eq!(coupling_components.len(), 2),
            other => panic!("{other:?}"),
        }
        assert!(non_resonant_path(&graph, down(0), up(0)).is_none());
    }

    #[test]
    fn edgeless_graph_reports_singletons() {
        let p = ModelParams::new(1.0, 1.05, 0.0, 32).unwrap();
        let s = labelled_spectrum(&p, &LabelOptions::default()).unwrap();
        let b = build_control(&p).unwrap();
        let graph = coupling_graph(&s, &b, &GraphOptions { window: Some(6), floor: Some(1e6), tol: None }).unwrap();
        assert!(graph.edges.is_empty());
        match certify_chain(&graph) {
            ChainReport::Disconnected { non_resonant_components, .. } => {
                assert_eq!(non_resonant_components.len(), 6);
                assert!(non_resonant_components.iter().all(|c| c.len() == 1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dressed_graph_has_witness() {
        let p = ModelParams::new(1.0, 1.05, 0.2, 32).unwrap();
        let s = labelled_spectrum(&p, &LabelOptions::default()).unwrap();
        let b = build_control(&p).unwrap();
        let graph = coupling_graph(&s, &b, &GraphOptions { window: Some(8), ..Default::default() }).unwrap();
        let w = certify_chain(&graph);
        let edges = w.witness().expect("witness");
        assert_eq!(edges.len(), graph.nodes.len() - 1);
        assert!(graph.edge(down(0), up(0)).is_some());
        let path = non_resonant_path(&graph, down(0), up(0)).unwrap();
        assert_eq!(path.first(), Some(&down(0)));
        assert_eq!(path.last(), Some(&up(0)));
    }

    #[test]
    fn degenerate_branch_layout() {
        let b = degenerate_branches(5, 1.0);
        assert_eq!(b.len(), 5);
        assert_eq!(b[0].label, down(0));
        assert_eq!(b[1].label, up(0));
        assert_eq!(b[2].label, down(1));
        assert!((b[3].slope - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_quadruples_small_windows() {
        for w in [0, 1] {
            let r = degenerate_quadruple_check(w, 1.0).unwrap();
            assert_eq!(r.quadruples_checked, 0);
            assert!(r.violations.is_empty());
        }
        let r = degenerate_quadruple_check(6, 1.0).unwrap();
        assert!(r.quadruples_checked > 0);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn degenerate_check_detects_planted_collision() {
        let mut b = degenerate_branches(6, 1.0);
        // equal slopes inside a level group make its two members indistinguishable
        b[2].slope = b[1].slope;
        let r = degenerate_quadruple_check_with(&b, 1.0, 1e-9);
        assert!(!r.violations.is_empty());
    }
}
