//! Piecewise-constant propagation of `i ψ' = (H0 + u B) ψ` and bang-bang
//! population transfer along non-resonant coupling edges.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockmodel::{build_control, build_rabi, BasisIndex, LabeledOperator, ModelParams};
use crate::resonance::{certify_chain, coupling_graph, non_resonant_path, GraphOptions, TransitionGraph};
use crate::spectral::{eigh, labelled_spectrum, LabelOptions, Spectrum};

pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pulse {
    segments: Vec<Segment>,
    delta: f64,
}

impl Pulse {
    pub fn new(segments: Vec<Segment>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidPulse(format!("delta must be positive and finite, got {delta}")));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(Error::InvalidPulse(format!(
                    "segment {i} has duration {}; durations must be positive and finite",
                    s.duration
                )));
            }
            if !(0.0..=delta).contains(&s.amplitude) {
                return Err(Error::AmplitudeOutOfRange {
                    amplitude: s.amplitude,
                    delta,
                });
            }
        }
        Ok(Self { segments, delta })
    }

    /// Zero-length pulse; propagating it is the identity.
    pub fn empty(delta: f64) -> Result<Self> {
        Self::new(Vec::new(), delta)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn reversed(&self) -> Self {
        Self {
            segments: self.segments.iter().rev().copied().collect(),
            delta: self.delta,
        }
    }

    pub fn extend(&mut self, other: &Pulse) {
        self.segments.extend_from_slice(&other.segments);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amplitudes })
    }

    pub fn from_real(v: &DVector<f64>) -> Result<Self> {
        Self::new(v.map(|x| Complex64::new(x, 0.0)))
    }

    /// Product state `e_k` of the truncated basis.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::DimensionMismatch { expected: dim, found: k });
        }
        let mut v = DVector::zeros(dim);
        v[k] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<v, ψ>` for a real vector `v`.
    pub fn overlap(&self, v: &DVector<f64>) -> Complex64 {
        self.amplitudes.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn population(&self, v: &DVector<f64>) -> f64 {
        self.overlap(v).norm_sqr()
    }

    /// `<ψ, A ψ>` for a real symmetric `A`.
    pub fn expectation(&self, a: &DMatrix<f64>) -> f64 {
        let (re, im) = self.split();
        re.dot(&(a * &re)) + im.dot(&(a * &im))
    }

    fn split(&self) -> (DVector<f64>, DVector<f64>) {
        (self.amplitudes.map(|c| c.re), self.amplitudes.map(|c| c.im))
    }

    fn join(re: &DVector<f64>, im: &DVector<f64>) -> DVector<Complex64> {
        re.zip_map(im, Complex64::new)
    }
}

#[derive(Debug, Clone)]
struct Decomposition {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    vectors_t: DMatrix<f64>,
}

/// Segment propagator with one cached eigendecomposition of `H0 + u B` per
/// distinct amplitude.
#[derive(Debug, Clone)]
pub struct Propagator {
    h0: DMatrix<f64>,
    b: DMatrix<f64>,
    cache: HashMap<u64, Decomposition>,
}

impl Propagator {
    pub fn new(h0: &LabeledOperator, b: &LabeledOperator) -> Result<Self> {
        Self::from_matrices(h0.entries.clone(), b.entries.clone())
    }

    pub fn from_matrices(h0: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !h0.is_square() {
            return Err(Error::DimensionMismatch {
                expected: h0.nrows(),
                found: h0.ncols(),
            });
        }
        if b.shape() != h0.shape() {
            return Err(Error::DimensionMismatch {
                expected: h0.nrows(),
                found: b.nrows(),
            });
        }
        Ok(Self {
            h0,
            b,
            cache: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn h0(&self) -> &DMatrix<f64> {
        &self.h0
    }

    pub fn cached_amplitudes(&self) -> usize {
        self.cache.len()
    }

    fn decomposition(&mut self, u: f64) -> Result<&Decomposition> {
        let key = u.to_bits();
        if !self.cache.contains_key(&key) {
            let h = &self.h0 + &self.b * u;
            let (values, vectors) = eigh(&h)?;
            let vectors_t = vectors.transpose();
            self.cache.insert(
                key,
                Decomposition {
                    values,
                    vectors,
                    vectors_t,
                },
            );
        }
        Ok(&self.cache[&key])
    }

    /// Applies `exp(−i (H0 + u B) τ)` in place to `(re, im)`.
    fn step(&mut self, re: &mut DVector<f64>, im: &mut DVector<f64>, seg: Segment) -> Result<()> {
        let d = self.decomposition(seg.amplitude)?;
        let cr = &d.vectors_t * &*re;
        let ci = &d.vectors_t * &*im;
        let mut pr = cr.clone();
        let mut pi = ci.clone();
        for (k, &lambda) in d.values.iter().enumerate() {
            let (sin, cos) = (lambda * seg.duration).sin_cos();
            pr[k] = cr[k] * cos + ci[k] * sin;
            pi[k] = ci[k] * cos - cr[k] * sin;
        }
        *re = &d.vectors * pr;
        *im = &d.vectors * pi;
        Ok(())
    }

    fn check_inputs(&self, pulse: &Pulse, psi0: &StateVector) -> Result<()> {
        if psi0.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: psi0.dim(),
            });
        }
        for s in pulse.segments() {
            if !(0.0..=pulse.delta()).contains(&s.amplitude) {
                return Err(Error::AmplitudeOutOfRange {
                    amplitude: s.amplitude,
                    delta: pulse.delta(),
                });
            }
        }
        Ok(())
    }

    pub fn propagate(&mut self, pulse: &Pulse, psi0: &StateVector) -> Result<StateVector> {
        self.propagate_observed(pulse, psi0, |_, _, _| {})
    }

    /// Propagates segment by segment, calling `observe(i, t, ψ)` after each
    /// segment `i` ends at time `t`.
    pub fn propagate_observed<F>(&mut self, pulse: &Pulse, psi0: &StateVector, mut observe: F) -> Result<StateVector>
    where
        F: FnMut(usize, f64, &StateVector),
    {
        self.check_inputs(pulse, psi0)?;
        let (mut re, mut im) = psi0.split();
        let mut t = 0.0;
        for (i, &seg) in pulse.segments().iter().enumerate() {
            self.step(&mut re, &mut im, seg)?;
            t += seg.duration;
            let state = StateVector {
                amplitudes: StateVector::join(&re, &im),
            };
            let norm = state.norm();
            if (norm - 1.0).abs() > NORM_TOL {
                return Err(Error::NotNormalized { norm });
            }
            observe(i, t, &state);
        }
        StateVector::new(StateVector::join(&re, &im))
    }
}

/// One-shot propagation; builds a fresh decomposition cache.
pub fn propagate(h0: &LabeledOperator, b: &LabeledOperator, pulse: &Pulse, psi0: &StateVector) -> Result<StateVector> {
    Propagator::new(h0, b)?.propagate(pulse, psi0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferOptions {
    /// Fidelity the design is expected to reach.
    pub threshold: f64,
    /// Scan budget per edge in drive periods.
    pub max_periods: usize,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            threshold: 0.95,
            max_periods: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeDrive {
    pub from: BasisIndex,
    pub to: BasisIndex,
    pub gap: f64,
    /// Length of each constant segment, `π / |E_from − E_to|`.
    pub half_period: f64,
    pub segments: usize,
    /// `|<v_to, ψ>|²` at the end of this edge's drive.
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferDesign {
    pub source: BasisIndex,
    pub target: BasisIndex,
    pub path: Vec<BasisIndex>,
    pub edges: Vec<EdgeDrive>,
    pub pulse: Pulse,
    pub predicted_fidelity: f64,
    pub meets_threshold: bool,
}

fn eigenvector(spectrum: &Spectrum, label: BasisIndex) -> Result<(usize, DVector<f64>)> {
    let k = spectrum.index_of(label).ok_or(Error::UnknownLabel(label))?;
    Ok((k, spectrum.vector(k)))
}

/// Bang-bang drive along the non-resonant path from `source` to `target`.
///
/// Each edge `(a, b)` is driven by alternating `u = δ` and `u = 0` segments of
/// length `π/|E_a − E_b|`; the number of segments is the one maximizing the
/// population of `b` within `max_periods` drive periods.
pub fn design_transfer(
    spectrum: &Spectrum,
    graph: &TransitionGraph,
    source: BasisIndex,
    target: BasisIndex,
    delta: f64,
    opts: &TransferOptions,
) -> Result<TransferDesign> {
    let empty = Pulse::empty(delta)?;
    let (_, v_source) = eigenvector(spectrum, source)?;
    if source == target {
        return Ok(TransferDesign {
            source,
            target,
            path: vec![source],
            edges: Vec::new(),
            pulse: empty,
            predicted_fidelity: 1.0,
            meets_threshold: true,
        });
    }
    let path = non_resonant_path(graph, source, target).ok_or(Error::NoPath {
        source_level: source,
        target,
    })?;
    let params = spectrum.params;
    let mut prop = Propagator::new(&build_rabi(&params)?, &build_control(&params)?)?;
    let mut state = StateVector::from_real(&v_source)?;
    let mut pulse = empty;
    let mut edges = Vec::new();
    for hop in path.windows(2) {
        let (a, b) = (hop[0], hop[1]);
        let (ka, _) = eigenvector(spectrum, a)?;
        let (kb, v_b) = eigenvector(spectrum, b)?;
        let gap = (spectrum.eigenvalues[ka] - spectrum.eigenvalues[kb]).abs();
        let half_period = std::f64::consts::PI / gap;
        let count = 2 * opts.max_periods;
        let drive = Pulse::new(
            (0..count)
                .map(|i| Segment {
                    duration: half_period,
                    amplitude: if i % 2 == 0 { delta } else { 0.0 },
                })
                .collect(),
            delta,
        )?;
        let mut best = (0usize, state.population(&v_b), state.clone());
        prop.propagate_observed(&drive, &state, |i, _, psi| {
            let f = psi.population(&v_b);
            if f > best.1 {
                best = (i + 1, f, psi.clone());
            }
        })?;
        let (segments, fidelity, reached) = best;
        pulse.extend(&Pulse::new(drive.segments()[..segments].to_vec(), delta)?);
        state = reached;
        edges.push(EdgeDrive {
            from: a,
            to: b,
            gap,
            half_period,
            segments,
            fidelity,
        });
    }
    let (_, v_target) = eigenvector(spectrum, target)?;
    let predicted_fidelity = state.population(&v_target);
    Ok(TransferDesign {
        source,
        target,
        path,
        edges,
        pulse,
        predicted_fidelity,
        meets_threshold: predicted_fidelity >= opts.threshold,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PopulationSample {
    pub t: f64,
    pub populations: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferReport {
    pub params: ModelParams,
    pub source: BasisIndex,
    pub target: BasisIndex,
    pub delta: f64,
    pub path: Vec<BasisIndex>,
    pub final_fidelity: f64,
    pub total_time: f64,
    pub edge_fidelities: Vec<EdgeDrive>,
    pub meets_threshold: bool,
    /// Levels whose populations are sampled.
    pub tracked: Vec<BasisIndex>,
    pub populations: Vec<PopulationSample>,
    pub pulse: Pulse,
}

/// Upper bound on the number of population samples kept.
const MAX_SAMPLES: usize = 2000;

/// Diagonalize, build and certify the coupling graph, design the pulse, and
/// propagate it, reporting the fidelity with the target eigenstate.
pub fn transfer_experiment(
    params: &ModelParams,
    source: BasisIndex,
    target: BasisIndex,
    delta: f64,
    opts: &TransferOptions,
) -> Result<TransferReport> {
    params.validate().map_err(Error::at_stage("diagonalize"))?;
    let spectrum = labelled_spectrum(params, &LabelOptions::default()).map_err(Error::at_stage("diagonalize"))?;
    let b_op = build_control(params).map_err(Error::at_stage("graph"))?;
    let graph = coupling_graph(&spectrum, &b_op, &GraphOptions::default()).map_err(Error::at_stage("graph"))?;
    // a disconnected chain still allows transfers inside one component
    let _chain = certify_chain(&graph);
    let design =
        design_transfer(&spectrum, &graph, source, target, delta, opts).map_err(Error::at_stage("design"))?;

    let h0 = build_rabi(params).map_err(Error::at_stage("propagate"))?;
    let tracked: Vec<BasisIndex> = graph.nodes.iter().map(|n| n.label).collect();
    let tracked_vectors: Vec<DVector<f64>> = graph.nodes.iter().map(|n| spectrum.vector(n.level)).collect();
    let (_, v_source) = eigenvector(&spectrum, source).map_err(Error::at_stage("propagate"))?;
    let (_, v_target) = eigenvector(&spectrum, target).map_err(Error::at_stage("propagate"))?;
    let psi0 = StateVector::from_real(&v_source).map_err(Error::at_stage("propagate"))?;

    let stride = design.pulse.len().div_ceil(MAX_SAMPLES).max(1);
    let sample = |t: f64, psi: &StateVector| PopulationSample {
        t,
        populations: tracked_vectors.iter().map(|v| psi.population(v)).collect(),
    };
    let mut populations = vec![sample(0.0, &psi0)];
    let last = design.pulse.len().saturating_sub(1);
    let mut prop = Propagator::new(&h0, &b_op).map_err(Error::at_stage("propagate"))?;
    let psi = prop
        .propagate_observed(&design.pulse, &psi0, |i, t, psi| {
            if (i + 1) % stride == 0 || i == last {
                populations.push(sample(t, psi));
            }
        })
        .map_err(Error::at_stage("propagate"))?;
    let final_fidelity = psi.population(&v_target);
    Ok(TransferReport {
        params: *params,
        source,
        target,
        delta,
        path: design.path,
        final_fidelity,
        total_time: design.pulse.total_duration(),
        edge_fidelities: design.edges,
        meets_threshold: final_fidelity >= opts.threshold,
        tracked,
        populations,
        pulse: design.pulse,
    })
}
