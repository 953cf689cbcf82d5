//! Nearest-neighbor (Vecchia) approximation of a space-time Gaussian process.
//!
//! Points are ordered by time, then south to north. Node `i` conditions on a
//! small set of earlier nodes picked at fixed temporal lags, which captures the
//! daily and weekly peaks that distance-based selection would miss.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lag_triple, LagTriple, SpaceTimePoint};
use crate::kernels::Covariance;
use crate::stats::normal_log_pdf;

/// Relative diagonal jitter added to neighbor blocks, scaled by the kernel variance.
pub const JITTER: f64 = 1e-10;

/// Space-time points in reference order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    points: Vec<SpaceTimePoint>,
    original: Vec<usize>,
}

impl ReferenceSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpaceTimePoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SpaceTimePoint {
        &self.points[i]
    }

    /// Input index of the point stored at reference position `i`.
    pub fn original_index(&self, i: usize) -> usize {
        self.original[i]
    }

    /// `perm[k]` is the input index at reference position `k`.
    pub fn permutation(&self) -> &[usize] {
        &self.original
    }

    /// Indices whose time lies in `[lo, hi]`, as a half-open range.
    fn time_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.points.partition_point(|p| p.t < lo);
        let end = self.points.partition_point(|p| p.t <= hi);
        start..end.max(start)
    }
}

/// Sorts points by `(t, y, x)`. Exact duplicates are rejected.
pub fn build_reference(points: &[SpaceTimePoint]) -> Result<ReferenceSet> {
    for (i, p) in points.iter().enumerate() {
        if !(p.t.is_finite() && p.coord.x.is_finite() && p.coord.y.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i} is not finite: {p:?}")));
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        p.t.total_cmp(&q.t)
            .then(p.coord.y.total_cmp(&q.coord.y))
            .then(p.coord.x.total_cmp(&q.coord.x))
    });
    let dups: Vec<(usize, usize)> = order
        .windows(2)
        .filter(|w| points[w[0]] == points[w[1]])
        .map(|w| (w[0], w[1]))
        .collect();
    if !dups.is_empty() {
        let listed: Vec<String> = dups
            .iter()
            .take(10)
            .map(|(a, b)| format!("{a}={b}"))
            .collect();
        return Err(Error::InvalidInput(format!(
            "{} duplicate space-time point(s): {}{}",
            dups.len(),
            listed.join(", "),
            if dups.len() > 10 { ", ..." } else { "" }
        )));
    }
    Ok(ReferenceSet {
        points: order.iter().map(|&i| points[i]).collect(),
        original: order,
    })
}

/// How conditioning sets are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborSpec {
    /// Nearest locations kept at each lag, the node's own location included.
    pub n_spatial: usize,
    /// Temporal lags in hours.
    pub lags_back: Vec<f64>,
    pub include_simultaneous: bool,
    pub max_neighbors: usize,
    pub lag_tolerance: f64,
}

impl Default for NeighborSpec {
    fn default() -> Self {
        Self {
            n_spatial: 5,
            lags_back: vec![1.0, 2.0, 23.0, 24.0, 25.0, 168.0],
            include_simultaneous: true,
            max_neighbors: 34,
            lag_tolerance: 0.5,
        }
    }
}

impl NeighborSpec {
    /// Default lags applied both backward and forward, plus simultaneous neighbors.
    pub fn prediction_default() -> Self {
        Self {
            max_neighbors: 65,
            ..Self::default()
        }
    }

    /// Conditions every node on all earlier nodes, up to `n - 1` of them.
    pub fn full(n: usize) -> Self {
        Self {
            max_neighbors: n.saturating_sub(1).max(1),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_neighbors < 1 {
            return Err(Error::InvalidInput("max_neighbors must be >= 1".into()));
        }
        if self.n_spatial < 1 {
            return Err(Error::InvalidInput("n_spatial must be >= 1".into()));
        }
        if let Some(l) = self.lags_back.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::invalid_param("lags_back", *l, "lags must be positive"));
        }
        if !(self.lag_tolerance >= 0.0 && self.lag_tolerance.is_finite()) {
            return Err(Error::invalid_param(
                "lag_tolerance",
                self.lag_tolerance,
                "must be >= 0",
            ));
        }
        Ok(())
    }
}

/// Conditioning sets `N(i)`, each sorted ascending with indices `< i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborGraph {
    pub sets: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Every node conditions on all earlier nodes.
    pub fn complete(n: usize) -> Self {
        Self {
            sets: (0..n).map(|i| (0..i).collect()).collect(),
        }
    }

    /// For each node, the `(child, position in child's set)` pairs that condition on it.
    pub fn children(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.sets.len()];
        for (j, set) in self.sets.iter().enumerate() {
            for (pos, &i) in set.iter().enumerate() {
                out[i].push((j, pos));
            }
        }
        out
    }

    pub fn max_set_size(&self) -> usize {
        self.sets.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    u: f64,
    h: f64,
    idx: usize,
}

/// Shared candidate search used for training graphs and prediction targets.
///
/// `offsets` are signed hours subtracted from the target time; `pool_end`
/// limits the search to reference positions below it.
pub(crate) fn select_neighbors(
    reference: &ReferenceSet,
    target: &SpaceTimePoint,
    offsets: &[f64],
    n_simultaneous: usize,
    pool_end: usize,
    spec: &NeighborSpec,
) -> Vec<usize> {
    let mut cands: Vec<Candidate> = Vec::new();
    let mut window = |lo: f64, hi: f64, k: usize, skip_self: bool| {
        let range = reference.time_range(lo, hi);
        let range = range.start..range.end.min(pool_end);
        let mut local: Vec<Candidate> = range
            .filter_map(|j| {
                let p = reference.point(j);
                let h = p.coord.distance(&target.coord);
                if skip_self && h == 0.0 && p.t == target.t {
                    return None;
                }
                Some(Candidate {
                    u: (p.t - target.t).abs(),
                    h,
                    idx: j,
                })
            })
            .collect();
        local.sort_by(|a, b| a.h.total_cmp(&b.h).then(a.idx.cmp(&b.idx)));
        local.truncate(k);
        cands.extend(local);
    };
    let tol = spec.lag_tolerance;
    for &off in offsets {
        let center = target.t - off;
        window(center - tol, center + tol, spec.n_spatial, false);
    }
    if spec.include_simultaneous && n_simultaneous > 0 {
        window(target.t - tol, target.t + tol, n_simultaneous, true);
    }
    cands.sort_by_key(|c| c.idx);
    cands.dedup_by_key(|c| c.idx);
    if cands.len() > spec.max_neighbors {
        cands.sort_by(|a, b| {
            a.u.total_cmp(&b.u)
                .then(a.h.total_cmp(&b.h))
                .then(a.idx.cmp(&b.idx))
        });
        cands.truncate(spec.max_neighbors);
    }
    let mut out: Vec<usize> = cands.into_iter().map(|c| c.idx).collect();
    out.sort_unstable();
    out
}

/// Lag-based conditioning sets over earlier nodes.
///
/// Nodes with at most `max_neighbors` predecessors condition on all of them.
/// Simultaneous neighbors are capped at `n_spatial - 1`, since the node's own
/// location is never an earlier node at the same time.
pub fn build_neighbors(reference: &ReferenceSet, spec: &NeighborSpec) -> Result<NeighborGraph> {
    spec.validate()?;
    let n_sim = spec.n_spatial - 1;
    let sets = (0..reference.len())
        .into_par_iter()
        .map(|i| {
            if i <= spec.max_neighbors {
                (0..i).collect()
            } else {
                select_neighbors(
                    reference,
                    reference.point(i),
                    &spec.lags_back,
                    n_sim,
                    i,
                    spec,
                )
            }
        })
        .collect();
    Ok(NeighborGraph { sets })
}

/// One row of the sparse factorization: `w_i | w_N ~ N(b·w_N, f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorRow {
    pub neighbors: Vec<usize>,
    pub b: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFactors {
    pub rows: Vec<FactorRow>,
}

impl SparseFactors {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Conditional mean of node `i` given the other entries of `w`.
    pub fn conditional_mean(&self, i: usize, w: &[f64]) -> f64 {
        let row = &self.rows[i];
        row.neighbors.iter().zip(&row.b).map(|(&j, b)| b * w[j]).sum()
    }
}

/// Distinct lag triples shared by a collection of conditioning blocks.
#[derive(Debug, Clone, Default)]
pub(crate) struct LagTable {
    lags: Vec<LagTriple>,
    index: HashMap<[u64; 3], u32>,
}

/// One conditioning block as indices into a [`LagTable`].
#[derive(Debug, Clone)]
pub(crate) struct BlockLags {
    /// Lower triangle of the neighbor Gram matrix, row by row.
    gram: Vec<u32>,
    /// Neighbor-to-target lags.
    cross: Vec<u32>,
}

impl LagTable {
    fn intern(&mut self, lag: LagTriple) -> u32 {
        let key = [lag.h.to_bits(), lag.theta.to_bits(), lag.u.to_bits()];
        let next = self.lags.len() as u32;
        *self.index.entry(key).or_insert_with(|| {
            self.lags.push(lag);
            next
        })
    }

    pub(crate) fn block(&mut self, target: &SpaceTimePoint, neighbors: &[&SpaceTimePoint]) -> BlockLags {
        let k = neighbors.len();
        let mut gram = Vec::with_capacity(k * (k + 1) / 2);
        for a in 0..k {
            for b in 0..=a {
                gram.push(self.intern(lag_triple(neighbors[a], neighbors[b])));
            }
        }
        let cross = neighbors
            .iter()
            .map(|p| self.intern(lag_triple(p, target)))
            .collect();
        BlockLags { gram, cross }
    }

    pub(crate) fn len(&self) -> usize {
        self.lags.len()
    }

    pub(crate) fn evaluate<K: Covariance + ?Sized>(&self, kernel: &K) -> Vec<f64> {
        self.lags.iter().map(|l| kernel.covariance(l)).collect()
    }

    fn evaluate_par<K: Covariance + ?Sized>(&self, kernel: &K) -> Vec<f64> {
        self.lags.par_iter().map(|l| kernel.covariance(l)).collect()
    }

    fn seal(&mut self) {
        self.index = HashMap::new();
    }
}

impl BlockLags {
    pub(crate) fn len(&self) -> usize {
        self.cross.len()
    }

    /// Solves `C_N b = c_{N,i}` from tabulated covariances and returns `(b, c_{N,i})`.
    pub(crate) fn solve(&self, cov: &[f64], jitter: f64, node: usize) -> Result<(DVector<f64>, DVector<f64>)> {
        let k = self.len();
        let mut c = DMatrix::zeros(k, k);
        let mut idx = self.gram.iter();
        for a in 0..k {
            for b in 0..=a {
                let v = cov[*idx.next().expect("packed lower triangle") as usize];
                c[(a, b)] = v;
                c[(b, a)] = v;
            }
            c[(a, a)] += jitter;
        }
        let rhs = DVector::from_iterator(k, self.cross.iter().map(|&j| cov[j as usize]));
        let chol = c.cholesky().ok_or_else(|| Error::Numerical {
            node,
            reason: format!("neighbor block of size {k} is not positive definite after jitter"),
        })?;
        Ok((chol.solve(&rhs), rhs))
    }
}

/// Lags of every neighbor block of a graph, computed once and reused for
/// each new set of kernel parameters.
#[derive(Debug, Clone)]
pub struct FactorPlan {
    table: LagTable,
    blocks: Vec<BlockLags>,
    sets: Vec<Vec<usize>>,
}

impl FactorPlan {
    pub fn new(graph: &NeighborGraph, reference: &ReferenceSet) -> Result<Self> {
        if graph.len() != reference.len() {
            return Err(Error::DimensionMismatch {
                expected: reference.len(),
                found: graph.len(),
            });
        }
        let mut table = LagTable::default();
        table.intern(LagTriple::ZERO);
        let blocks = graph
            .sets
            .iter()
            .enumerate()
            .map(|(i, set)| {
                let nb: Vec<&SpaceTimePoint> = set.iter().map(|&j| reference.point(j)).collect();
                table.block(reference.point(i), &nb)
            })
            .collect();
        table.seal();
        Ok(Self {
            table,
            blocks,
            sets: graph.sets.clone(),
        })
    }

    /// Number of distinct lag triples across all blocks.
    pub fn distinct_lags(&self) -> usize {
        self.table.len()
    }

    /// Computes `B_i` and `F_i` for every node.
    pub fn factors<K: Covariance + ?Sized>(&self, kernel: &K) -> Result<SparseFactors> {
        let cov = self.table.evaluate_par(kernel);
        let c0 = cov[0];
        let jitter = JITTER * kernel.variance();
        let rows = self
            .blocks
            .par_iter()
            .zip(self.sets.par_iter())
            .enumerate()
            .map(|(i, (block, set))| {
                if set.is_empty() {
                    return Ok(FactorRow {
                        neighbors: Vec::new(),
                        b: Vec::new(),
                        f: c0,
                    });
                }
                let (b, rhs) = block.solve(&cov, jitter, i)?;
                let f = c0 + jitter - b.dot(&rhs);
                if !(f > 0.0) {
                    return Err(Error::Numerical {
                        node: i,
                        reason: format!("conditional variance {f:e} is not positive"),
                    });
                }
                Ok(FactorRow {
                    neighbors: set.clone(),
                    b: b.as_slice().to_vec(),
                    f,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SparseFactors { rows })
    }
}

/// Computes `B_i` and `F_i` for every node. Repeated calls on one graph
/// should go through a [`FactorPlan`].
pub fn factors<K: Covariance + ?Sized>(
    graph: &NeighborGraph,
    reference: &ReferenceSet,
    kernel: &K,
) -> Result<SparseFactors> {
    FactorPlan::new(graph, reference)?.factors(kernel)
}

/// `Σ_i log N(w_i | B_i w_{N(i)}, F_i)`.
pub fn log_density(w: &[f64], factors: &SparseFactors) -> Result<f64> {
    if w.len() != factors.len() {
        return Err(Error::DimensionMismatch {
            expected: factors.len(),
            found: w.len(),
        });
    }
    let terms: Vec<f64> = (0..w.len())
        .into_par_iter()
        .map(|i| normal_log_pdf(w[i], factors.conditional_mean(i, w), factors.rows[i].f))
        .collect();
    Ok(terms.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{catalog, Family, KernelSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn south_to_north_at_equal_times() {
        let pts = [SpaceTimePoint::new(0.0, 5.0, 1.0), SpaceTimePoint::new(0.0, -3.0, 1.0)];
        let r = build_reference(&pts).unwrap();
        assert_eq!(r.permutation(), &[1, 0]);
        assert_eq!(r.point(0).coord.y, -3.0);
    }

    #[test]
    fn ordering_identity_and_reversal() {
        let pts: Vec<_> = (0..5).map(|t| SpaceTimePoint::new(0.0, 0.0, t as f64)).collect();
        assert_eq!(build_reference(&pts).unwrap().permutation(), &[0, 1, 2, 3, 4]);
        let rev: Vec<_> = pts.iter().rev().copied().collect();
        assert_eq!(build_reference(&rev).unwrap().permutation(), &[4, 3, 2, 1, 0]);
    }

    #[test]
    fn duplicates_listed() {
        let p = SpaceTimePoint::new(1.0, 1.0, 3.0);
        let err = build_reference(&[p, SpaceTimePoint::new(0.0, 0.0, 0.0), p]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0=2"), "{msg}");
    }

    #[test]
    fn spec_validation() {
        assert!(NeighborSpec::default().validate().is_ok());
        let bad = NeighborSpec {
            max_neighbors: 0,
            ..NeighborSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = NeighborSpec {
            lags_back: vec![1.0, -2.0],
            ..NeighborSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn first_nodes_use_all_predecessors() {
        let pts: Vec<_> = (0..40)
            .map(|k| SpaceTimePoint::new(k as f64, 0.0, (k / 4) as f64))
            .collect();
        let r = build_reference(&pts).unwrap();
        let g = build_neighbors(&r, &NeighborSpec::default()).unwrap();
        assert!(g.sets[0].is_empty());
        for i in 1..=34 {
            assert_eq!(g.sets[i], (0..i).collect::<Vec<_>>());
        }
        for (i, s) in g.sets.iter().enumerate() {
            assert!(s.len() <= 34);
            assert!(s.iter().all(|&j| j < i));
        }
    }

    #[test]
    fn bivariate_factor() {
        let k = KernelSpec::new(Family::MaternTime, &[("c_t", 2.0)], 1.0).unwrap();
        let pts = [SpaceTimePoint::new(0.0, 0.0, 0.0), SpaceTimePoint::new(0.0, 0.0, 1.0)];
        let r = build_reference(&pts).unwrap();
        let g = NeighborGraph::complete(2);
        let f = factors(&g, &r, &k).unwrap();
        let rho = (-0.5f64).exp();
        assert_eq!(f.rows[0].f, 1.0);
        assert!(f.rows[0].b.is_empty());
        assert!((f.rows[1].b[0] - rho).abs() < 1e-9);
        assert!((f.rows[1].f - (1.0 - rho * rho)).abs() < 1e-9);
    }

    #[test]
    fn single_node_density() {
        let k = catalog::table2_model7().with_sigma2(1.0).unwrap();
        let r = build_reference(&[SpaceTimePoint::new(0.0, 0.0, 0.0)]).unwrap();
        let f = factors(&NeighborGraph::complete(1), &r, &k).unwrap();
        let ld = log_density(&[0.0], &f).unwrap();
        assert!((ld + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!(log_density(&[0.0, 1.0], &f).is_err());
    }

    #[test]
    fn independent_kernel_is_diagonal() {
        // exponential in u with a tiny range: correlations underflow to zero
        let k = KernelSpec::new(Family::MaternTime, &[("c_t", 1e-3)], 2.0).unwrap();
        let pts: Vec<_> = (0..6).map(|t| SpaceTimePoint::new(0.0, 0.0, t as f64)).collect();
        let r = build_reference(&pts).unwrap();
        let f = factors(&NeighborGraph::complete(6), &r, &k).unwrap();
        let w = [0.3, -1.0, 2.0, 0.0, 0.5, -0.2];
        let expected: f64 = w.iter().map(|x| normal_log_pdf(*x, 0.0, 2.0)).sum();
        assert!((log_density(&w, &f).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn non_pd_block_names_node() {
        let k = KernelSpec::new(Family::MaternSpace, &[("c_s", 1.0)], 0.0).unwrap();
        let pts = [SpaceTimePoint::new(0.0, 0.0, 0.0), SpaceTimePoint::new(1.0, 0.0, 0.0)];
        let r = build_reference(&pts).unwrap();
        match factors(&NeighborGraph::complete(2), &r, &k) {
            Err(Error::Numerical { node, .. }) => assert_eq!(node, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conditioning_never_inflates_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..150)
            .map(|_| {
                SpaceTimePoint::new(
                    rng.random_range(0.0..30.0),
                    rng.random_range(0.0..30.0),
                    rng.random_range(0.0..300.0),
                )
            })
            .collect();
        let r = build_reference(&pts).unwrap();
        let g = build_neighbors(&r, &NeighborSpec::default()).unwrap();
        let k = catalog::table2_model7();
        let f = factors(&g, &r, &k).unwrap();
        let cap = k.sigma2() * (1.0 + JITTER);
        assert!(f.rows.iter().all(|row| row.f > 0.0 && row.f <= cap));
        assert_eq!(g, build_neighbors(&r, &NeighborSpec::default()).unwrap());
    }
}
