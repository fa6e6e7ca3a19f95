//! Linear feature maps of grid measures into `ℓ1`, distortion audits and
//! the averaged lower-bound certificate.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dyadic::{rational_to_f64, Dyadic};
use crate::experiments::{monte_carlo, ExperimentError};
use crate::grid::GridShape;
use crate::measure::{
    build_mu_k, build_nu_k, integrate_int, sample_signs_with, DyadicMeasure, MeasureError, RandomStream,
    SignLaw,
};
use crate::transport::{tc_norm, tc_norm_1d, TransportError, TransportProblem};

const TAG_SHIFT: u64 = 16;
const TAG_EDGES: u64 = 17;
const TAG_PAIRS: u64 = 18;

/// Edge inventories above this size are sampled.
pub const MAX_EDGE_PROBES: usize = 100_000;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("shift has {got} coordinates, expected {expected} values in [0, {side})")]
    BadShift { got: usize, expected: usize, side: u64 },
    #[error("map and measure live on different grids")]
    ShapeMismatch,
    #[error("the prefix map needs d = 1, got d={0}")]
    NotOneDimensional(u32),
    #[error("measure must be balanced")]
    Unbalanced,
    #[error("probe {0} is the zero measure")]
    ZeroProbe(String),
    #[error("map is not noncontractive: edge ({0}, {1}) is sent to 0")]
    Degenerate(usize, usize),
    #[error("no probes")]
    NoProbes,
    #[error("bad probe spec `{0}`")]
    ProbeSpec(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

type Result<T> = std::result::Result<T, EmbedError>;

/// Shifted nested partitions: at level `k` the cell of `x` has coordinates
/// `⌊(x_i − 1 + s_i) / 2^{n−k}⌋`, clipped to the grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftedHierarchy {
    shape: GridShape,
    shift: Vec<u32>,
}

impl ShiftedHierarchy {
    pub fn new(shape: GridShape, shift: Vec<u32>) -> Result<Self> {
        if shift.len() != shape.d() as usize || shift.iter().any(|&s| s as u64 >= shape.side()) {
            return Err(EmbedError::BadShift {
                got: shift.len(),
                expected: shape.d() as usize,
                side: shape.side(),
            });
        }
        Ok(ShiftedHierarchy { shape, shift })
    }

    pub fn random<R: Rng>(shape: GridShape, rng: &mut R) -> Self {
        let shift = (0..shape.d()).map(|_| rng.random_range(0..shape.side() as u32)).collect();
        ShiftedHierarchy { shape, shift }
    }

    pub fn shift(&self) -> &[u32] {
        &self.shift
    }

    /// Cell id of vertex `v` at `level ∈ [0, n]`.
    pub fn cell(&self, v: usize, level: u32) -> u64 {
        let n = self.shape.n();
        let per_axis = (1u64 << level) + 1;
        let mut id = 0u64;
        for a in (0..self.shape.d()).rev() {
            let c = (self.shape.coord(v, a) + self.shift[a as usize]) >> (n - level);
            id = id * per_axis + c as u64;
        }
        id
    }
}

/// Feature coordinates are keyed by `(hierarchy, level, cell)`; maps with a
/// flat coordinate list use `(0, 0, i)`.
pub type FeatureKey = (u32, u32, u64);

/// An exact sparse vector whose entries are `value / denom`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FeatureVector {
    entries: Vec<(FeatureKey, Dyadic)>,
    denom: u64,
}

impl FeatureVector {
    fn from_map(map: HashMap<FeatureKey, i128>, exp: i32, denom: u64) -> Self {
        let mut entries: Vec<(FeatureKey, Dyadic)> = map
            .into_iter()
            .filter(|&(_, v)| v != 0)
            .map(|(k, v)| (k, Dyadic::new(v, exp)))
            .collect();
        entries.sort_unstable_by_key(|e| e.0);
        FeatureVector { entries, denom }
    }

    pub fn entries(&self) -> &[(FeatureKey, Dyadic)] {
        &self.entries
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ |entry|`, before division by the denominator.
    pub fn l1_numerator(&self) -> Dyadic {
        self.entries.iter().map(|(_, v)| v.abs()).sum()
    }

    pub fn l1(&self) -> BigRational {
        self.l1_numerator().to_big_rational() / BigInt::from(self.denom.max(1))
    }

    /// Exact sum of two vectors from the same map.
    pub fn add(&self, other: &FeatureVector) -> FeatureVector {
        let mut map: std::collections::BTreeMap<FeatureKey, Dyadic> = self.entries.iter().copied().collect();
        for &(k, v) in &other.entries {
            let e = map.entry(k).or_insert(Dyadic::ZERO);
            *e += v;
        }
        FeatureVector {
            entries: map.into_iter().filter(|(_, v)| !v.is_zero()).collect(),
            denom: self.denom.max(other.denom),
        }
    }

    pub fn scale(&self, alpha: Dyadic) -> FeatureVector {
        FeatureVector {
            entries: self
                .entries
                .iter()
                .map(|&(k, v)| (k, v * alpha))
                .filter(|(_, v)| !v.is_zero())
                .collect(),
            denom: self.denom,
        }
    }
}

/// A linear map from measures on a grid to `ℓ1`.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMap {
    /// `(1/H)·2^{n−k}·μ(Q)` over hierarchies, levels and cells.
    Shifted { shape: GridShape, hierarchies: Vec<ShiftedHierarchy> },
    /// Prefix masses `μ({1..i})`, `1 ≤ i < 2^n`, on a path.
    Prefix1d { shape: GridShape },
    /// `∫ f_i dμ` for explicit dyadic-valued coordinate functions.
    Coordinates { shape: GridShape, functions: Vec<DyadicMeasure> },
}

impl FeatureMap {
    /// `h` hierarchies with shifts from auxiliary streams of `seed`.
    pub fn shifted(shape: GridShape, h: usize, seed: u64) -> Self {
        let hierarchies = (0..h)
            .map(|i| ShiftedHierarchy::random(shape, &mut RandomStream::auxiliary(seed, TAG_SHIFT, i as u64).rng()))
            .collect();
        FeatureMap::Shifted { shape, hierarchies }
    }

    pub fn prefix1d(shape: GridShape) -> Result<Self> {
        if shape.d() != 1 {
            return Err(EmbedError::NotOneDimensional(shape.d()));
        }
        Ok(FeatureMap::Prefix1d { shape })
    }

    /// Coordinate functions given as value tables in the measure format.
    pub fn coordinates(shape: GridShape, functions: Vec<DyadicMeasure>) -> Result<Self> {
        if functions.iter().any(|f| f.shape() != shape) {
            return Err(EmbedError::ShapeMismatch);
        }
        Ok(FeatureMap::Coordinates { shape, functions })
    }

    pub fn shape(&self) -> GridShape {
        match self {
            FeatureMap::Shifted { shape, .. }
            | FeatureMap::Prefix1d { shape }
            | FeatureMap::Coordinates { shape, .. } => *shape,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureMap::Shifted { .. } => "shifted",
            FeatureMap::Prefix1d { .. } => "prefix1d",
            FeatureMap::Coordinates { .. } => "file",
        }
    }

    /// The image of any measure, balanced or not.
    pub fn apply(&self, m: &DyadicMeasure) -> Result<FeatureVector> {
        if m.shape() != self.shape() {
            return Err(EmbedError::ShapeMismatch);
        }
        let e = m.scale_exp();
        let w = m.weights();
        Ok(match self {
            FeatureMap::Shifted { shape, hierarchies } => {
                let n = shape.n();
                let mut map = HashMap::new();
                for (v, &x) in w.iter().enumerate().filter(|(_, &x)| x != 0) {
                    for (h, hier) in hierarchies.iter().enumerate() {
                        for level in 0..=n {
                            let key = (h as u32, level, hier.cell(v, level));
                            *map.entry(key).or_insert(0i128) += (x as i128) << (n - level);
                        }
                    }
                }
                FeatureVector::from_map(map, e, hierarchies.len() as u64)
            }
            FeatureMap::Prefix1d { .. } => {
                let mut map = HashMap::new();
                let mut prefix = 0i128;
                for (i, &x) in w[..w.len() - 1].iter().enumerate() {
                    prefix += x as i128;
                    map.insert((0, 0, i as u64), prefix);
                }
                FeatureVector::from_map(map, e, 1)
            }
            FeatureMap::Coordinates { functions, .. } => {
                let mut entries = Vec::new();
                for (i, f) in functions.iter().enumerate() {
                    let values: Vec<i64> = f.weights().to_vec();
                    let v = integrate_int(m, &values)? * Dyadic::pow2(-f.scale_exp());
                    if !v.is_zero() {
                        entries.push(((0, 0, i as u64), v));
                    }
                }
                FeatureVector { entries, denom: 1 }
            }
        })
    }

    /// `‖F(δ_u − δ_v)‖_1`.
    pub fn pair_norm(&self, u: usize, v: usize) -> Result<BigRational> {
        match self {
            FeatureMap::Shifted { shape, hierarchies } => {
                let n = shape.n();
                let mut total = 0u128;
                for hier in hierarchies {
                    for level in 0..=n {
                        if hier.cell(u, level) != hier.cell(v, level) {
                            total += 2u128 << (n - level);
                        }
                    }
                }
                Ok(BigRational::new(BigInt::from(total), BigInt::from(hierarchies.len().max(1))))
            }
            _ => Ok(self.apply(&DyadicMeasure::dirac_difference(self.shape(), u, v))?.l1()),
        }
    }
}

/// `F(μ)` for a balanced `μ`.
pub fn embed_measure(m: &DyadicMeasure, f: &FeatureMap) -> Result<FeatureVector> {
    if !m.is_balanced() {
        return Err(EmbedError::Unbalanced);
    }
    f.apply(m)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeKind {
    Edge { u: usize, v: usize },
    Pair { u: usize, v: usize },
    Nu { k: u32, trial: u64 },
    Custom,
}

#[derive(Clone, Debug)]
pub struct Probe {
    pub kind: ProbeKind,
    pub problem: TransportProblem,
}

impl Probe {
    pub fn label(&self) -> String {
        match &self.kind {
            ProbeKind::Edge { u, v } => format!("edge:{u}-{v}"),
            ProbeKind::Pair { u, v } => format!("pair:{u}-{v}"),
            ProbeKind::Nu { k, trial } => format!("nu:k={k}:t={trial}"),
            ProbeKind::Custom => "custom".into(),
        }
    }
}

/// Which probes to generate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbeSpec {
    pub edges: bool,
    pub pairs: usize,
    /// Trials per scale for `ν_k` probes; zero measures are dropped.
    pub nu_trials: u64,
    pub k_min: u32,
    pub k_max: Option<u32>,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            edges: true,
            pairs: 200,
            nu_trials: 32,
            k_min: 1,
            k_max: None,
        }
    }
}

impl std::str::FromStr for ProbeSpec {
    type Err = EmbedError;

    /// Comma-separated: `edges`, `no-edges`, `pairs=<count>`, `nu=<trials>`,
    /// `k=<min>..<max>`.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = ProbeSpec {
            edges: false,
            pairs: 0,
            nu_trials: 0,
            k_min: 1,
            k_max: None,
        };
        let bad = || EmbedError::ProbeSpec(s.to_string());
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('=') {
                None if part == "edges" => spec.edges = true,
                None if part == "default" => spec = ProbeSpec::default(),
                Some(("pairs", v)) => spec.pairs = v.parse().map_err(|_| bad())?,
                Some(("nu", v)) => spec.nu_trials = v.parse().map_err(|_| bad())?,
                Some(("k", v)) => {
                    let (a, b) = v.split_once("..").ok_or_else(bad)?;
                    spec.k_min = a.parse().map_err(|_| bad())?;
                    spec.k_max = Some(b.parse().map_err(|_| bad())?);
                }
                _ => return Err(bad()),
            }
        }
        Ok(spec)
    }
}

/// All grid edges, or a seeded sample of [`MAX_EDGE_PROBES`] of them.
pub fn edge_inventory(shape: GridShape, seed: u64) -> Vec<(usize, usize)> {
    if shape.edge_count() as usize <= MAX_EDGE_PROBES {
        let mut out = Vec::with_capacity(shape.edge_count() as usize);
        shape.for_each_edge(|u, v, _| out.push((u, v)));
        return out;
    }
    let mut rng = RandomStream::auxiliary(seed, TAG_EDGES, 0).rng();
    let d = shape.d();
    let top = shape.side() as u32 - 1;
    let mut out = Vec::with_capacity(MAX_EDGE_PROBES);
    while out.len() < MAX_EDGE_PROBES {
        let u = rng.random_range(0..shape.len());
        let a = rng.random_range(0..d);
        if shape.coord(u, a) < top {
            out.push((u, u + shape.stride(a)));
        }
    }
    out
}

/// `ν_k` for trial `t`, drawn exactly as in the experiments but with the
/// dimension guard lifted (`p = 2^{−4d}` for every `d`).
pub fn nu_sample(shape: GridShape, k: u32, seed: u64, trial: u64) -> Result<DyadicMeasure> {
    let signs = sample_signs_with(k, shape, SignLaw::standard(shape.d()), RandomStream::for_trial(seed, trial, k))?;
    Ok(build_nu_k(&build_mu_k(&signs)))
}

pub fn build_probes(shape: GridShape, spec: &ProbeSpec, seed: u64) -> Result<Vec<Probe>> {
    let mut probes = Vec::new();
    if spec.edges {
        for (u, v) in edge_inventory(shape, seed) {
            probes.push(Probe {
                kind: ProbeKind::Edge { u, v },
                problem: TransportProblem::new(DyadicMeasure::dirac_difference(shape, u, v))?,
            });
        }
    }
    if shape.len() > 1 {
        let mut rng = RandomStream::auxiliary(seed, TAG_PAIRS, 0).rng();
        for _ in 0..spec.pairs {
            let u = rng.random_range(0..shape.len());
            let mut v = rng.random_range(0..shape.len() - 1);
            if v >= u {
                v += 1;
            }
            probes.push(Probe {
                kind: ProbeKind::Pair { u, v },
                problem: TransportProblem::new(DyadicMeasure::dirac_difference(shape, u, v))?,
            });
        }
    }
    let k_max = spec.k_max.unwrap_or(shape.n()).min(shape.n());
    for k in spec.k_min.max(1)..=k_max {
        for trial in 0..spec.nu_trials {
            let nu = nu_sample(shape, k, seed, trial)?;
            if !nu.is_zero() {
                probes.push(Probe {
                    kind: ProbeKind::Nu { k, trial },
                    problem: TransportProblem::new(nu)?,
                });
            }
        }
    }
    Ok(probes)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeResult {
    pub label: String,
    #[serde(flatten)]
    pub kind: ProbeKind,
    pub tc: String,
    pub l1: f64,
    /// `‖F(μ)‖_1 / ‖μ‖_TC` after edge normalization.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionAudit {
    pub map: String,
    pub probes: usize,
    pub edge_probes: usize,
    /// Minimum raw edge ratio; the map is divided by it.
    pub edge_min_ratio: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub distortion: f64,
    /// `distortion / (d·n)`.
    pub kappa: f64,
    pub results: Vec<ProbeResult>,
}

fn tc_of(problem: &TransportProblem) -> Result<Dyadic> {
    if problem.shape().d() == 1 {
        Ok(tc_norm_1d(problem)?)
    } else {
        Ok(tc_norm(problem).0)
    }
}

/// Exact ratios `‖F(μ)‖_1 / ‖μ‖_TC` over the probes, normalized so the
/// smallest edge ratio (or smallest ratio, if there are no edge probes) is 1.
pub fn audit_distortion(f: &FeatureMap, probes: &[Probe], workers: usize) -> Result<DistortionAudit> {
    if probes.is_empty() {
        return Err(EmbedError::NoProbes);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EmbedError::Experiment(ExperimentError::Config(e.to_string())))?;
    let raw: Vec<(Dyadic, BigRational)> = pool.install(|| {
        probes
            .par_iter()
            .map(|p| {
                let tc = tc_of(&p.problem)?;
                if tc.is_zero() {
                    return Err(EmbedError::ZeroProbe(p.label()));
                }
                let l1 = match p.kind {
                    ProbeKind::Edge { u, v } | ProbeKind::Pair { u, v } => f.pair_norm(u, v)?,
                    _ => f.apply(p.problem.measure())?.l1(),
                };
                Ok((tc, l1))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let ratios: Vec<BigRational> = raw.iter().map(|(tc, l1)| l1 / tc.to_big_rational()).collect();
    let is_edge = |p: &Probe| matches!(p.kind, ProbeKind::Edge { .. });
    let edge_probes = probes.iter().filter(|p| is_edge(p)).count();
    let norm_pool: Vec<&BigRational> = if edge_probes > 0 {
        probes.iter().zip(&ratios).filter(|(p, _)| is_edge(p)).map(|(_, r)| r).collect()
    } else {
        ratios.iter().collect()
    };
    let edge_min = norm_pool.into_iter().min().cloned().expect("nonempty");
    if edge_min.is_zero() {
        let (u, v) = probes
            .iter()
            .zip(&ratios)
            .find_map(|(p, r)| match p.kind {
                ProbeKind::Edge { u, v } | ProbeKind::Pair { u, v } if r.is_zero() => Some((u, v)),
                _ => None,
            })
            .unwrap_or((0, 0));
        return Err(EmbedError::Degenerate(u, v));
    }
    let max = ratios.iter().max().expect("nonempty");
    let min = ratios.iter().min().expect("nonempty");
    let distortion = if min.is_zero() { f64::INFINITY } else { rational_to_f64(&(max / min)) };
    let shape = f.shape();
    let results = probes
        .iter()
        .zip(raw.iter().zip(&ratios))
        .map(|(p, ((tc, l1), r))| ProbeResult {
            label: p.label(),
            kind: p.kind.clone(),
            tc: tc.to_string(),
            l1: rational_to_f64(l1),
            ratio: rational_to_f64(&(r / &edge_min)),
        })
        .collect();
    let dn = (shape.d() * shape.n()).max(1) as f64;
    Ok(DistortionAudit {
        map: f.name().to_string(),
        probes: probes.len(),
        edge_probes,
        edge_min_ratio: rational_to_f64(&edge_min),
        expansion: rational_to_f64(&(max / &edge_min)),
        contraction: rational_to_f64(&(min / &edge_min)),
        distortion,
        kappa: distortion / dn,
        results,
    })
}

#[derive(Clone, Debug)]
pub struct CertifyConfig {
    pub k_min: u32,
    pub k_max: u32,
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateReport {
    pub map: String,
    pub n: u32,
    pub d: u32,
    pub k_min: u32,
    pub k_max: u32,
    pub trials: u64,
    /// `max_edge ‖F(δ_v − δ_u)‖_1`.
    pub op_edge: f64,
    /// `min_edge ‖F(δ_v − δ_u)‖_1`.
    pub edge_min: f64,
    /// `Σ_k 2^{−n} mean ‖ν_k‖_TC`.
    pub tc_sum: f64,
    /// `Σ_k 2^{−n} mean ‖F(ν_k)‖_1`.
    pub l1_sum: f64,
    /// `op_edge · tc_sum / l1_sum`, a lower bound on this map's distortion.
    pub lower_bound: f64,
    pub se: f64,
}

/// Lower bound on the distortion of `f` from the averaged `ν_k` argument.
///
/// Uses the same `ν_k` samples as [`build_probes`] with matching seed and
/// `nu_trials = trials`, so the bound never exceeds the audited distortion
/// on a probe set containing all edges and those samples.
pub fn certify(f: &FeatureMap, cfg: &CertifyConfig) -> Result<CertificateReport> {
    let shape = f.shape();
    let mut op = BigRational::zero();
    let mut low: Option<BigRational> = None;
    for (u, v) in edge_inventory(shape, cfg.seed) {
        let x = f.pair_norm(u, v)?;
        if x.is_zero() {
            return Err(EmbedError::Degenerate(u, v));
        }
        if x > op {
            op = x.clone();
        }
        if low.as_ref().is_none_or(|l| &x < l) {
            low = Some(x);
        }
    }
    let k_max = cfg.k_max.min(shape.n());
    if cfg.k_min == 0 || cfg.k_min > k_max {
        return Err(EmbedError::Experiment(ExperimentError::Config(format!(
            "k range {}..={} must lie in 1..={}",
            cfg.k_min,
            cfg.k_max,
            shape.n()
        ))));
    }
    // per trial: a = Σ_k ‖ν_k‖_TC, b = Σ_k (numerator of ‖F ν_k‖_1), a + b
    let stats = monte_carlo(cfg.trials, cfg.workers, 3, |t| {
        let mut a = Dyadic::ZERO;
        let mut b = Dyadic::ZERO;
        for k in cfg.k_min..=k_max {
            let nu = nu_sample(shape, k, cfg.seed, t).map_err(to_experiment)?;
            if nu.is_zero() {
                continue;
            }
            b += f.apply(&nu).map_err(to_experiment)?.l1_numerator();
            a += tc_of(&TransportProblem::new(nu)?).map_err(to_experiment)?;
        }
        Ok(vec![a, b, a + b])
    })?;
    let denom = match f {
        FeatureMap::Shifted { hierarchies, .. } => hierarchies.len().max(1) as f64,
        _ => 1.0,
    };
    let scale = 2f64.powi(-(shape.n() as i32));
    let (ma, mb) = (stats[0].mean(), stats[1].mean() / denom);
    let op_f = rational_to_f64(&op);
    let lower_bound = if mb > 0.0 { op_f * ma / mb } else { f64::INFINITY };
    // delta method for the ratio of means
    let (va, vb) = (stats[0].variance(), stats[1].variance() / (denom * denom));
    let cov = (stats[2].variance() - stats[0].variance() - stats[1].variance()) / (2.0 * denom);
    let r = if mb > 0.0 { ma / mb } else { 0.0 };
    let var_r = if mb > 0.0 {
        (va - 2.0 * r * cov + r * r * vb).max(0.0) / (mb * mb * cfg.trials as f64)
    } else {
        0.0
    };
    Ok(CertificateReport {
        map: f.name().to_string(),
        n: shape.n(),
        d: shape.d(),
        k_min: cfg.k_min,
        k_max,
        trials: cfg.trials,
        op_edge: op_f,
        edge_min: low.map_or(0.0, |l| rational_to_f64(&l)),
        tc_sum: ma * scale,
        l1_sum: mb * scale,
        lower_bound,
        se: op_f * var_r.sqrt(),
    })
}

fn to_experiment<E: Into<EmbedError>>(e: E) -> ExperimentError {
    match e.into() {
        EmbedError::Experiment(x) => x,
        EmbedError::Measure(m) => ExperimentError::Measure(m),
        EmbedError::Transport(t) => ExperimentError::Transport(t),
        other => ExperimentError::Config(other.to_string()),
    }
}

/// Probes matching a certificate run: all edges plus the nonzero `ν_k`
/// samples of its trials.
pub fn certificate_probes(shape: GridShape, cfg: &CertifyConfig) -> Result<Vec<Probe>> {
    build_probes(
        shape,
        &ProbeSpec {
            edges: true,
            pairs: 0,
            nu_trials: cfg.trials,
            k_min: cfg.k_min,
            k_max: Some(cfg.k_max),
        },
        cfg.seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(n: u32, d: u32) -> GridShape {
        GridShape::new(n, d).unwrap()
    }

    fn random_measure(rng: &mut ChaCha8Rng, g: GridShape) -> DyadicMeasure {
        let mut w: Vec<i64> = (0..g.len()).map(|_| rng.random_range(-5..=5)).collect();
        let s: i64 = w.iter().sum();
        w[0] -= s;
        DyadicMeasure::new(g, w, rng.random_range(-2..3)).unwrap()
    }

    #[test]
    fn hierarchy_cells_partition() {
        let g = shape(3, 2);
        let h = ShiftedHierarchy::new(g, vec![3, 5]).unwrap();
        for level in 0..=3 {
            let mut cells = std::collections::HashMap::new();
            for v in 0..g.len() {
                *cells.entry(h.cell(v, level)).or_insert(0) += 1;
            }
            let total: usize = cells.values().sum();
            assert_eq!(total, 64);
            if level == 3 {
                assert_eq!(cells.len(), 64);
            }
        }
        assert!(ShiftedHierarchy::new(g, vec![8, 0]).is_err());
        assert!(ShiftedHierarchy::new(g, vec![0]).is_err());
    }

    #[test]
    fn zero_and_linearity() {
        let g = shape(2, 3);
        let f = FeatureMap::shifted(g, 4, 9);
        assert!(embed_measure(&DyadicMeasure::zero(g), &f).unwrap().is_zero());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..30 {
            let a = random_measure(&mut rng, g);
            let b = random_measure(&mut rng, g);
            let fa = f.apply(&a).unwrap();
            let fb = f.apply(&b).unwrap();
            assert_eq!(f.apply(&a.add(&b).unwrap()).unwrap(), fa.add(&fb));
            let three = Dyadic::from_int(3);
            assert_eq!(f.apply(&a.scale(three).unwrap()).unwrap(), fa.scale(three));
        }
        let unbalanced = DyadicMeasure::new(g, vec![1; 64], 0).unwrap();
        assert!(matches!(embed_measure(&unbalanced, &f), Err(EmbedError::Unbalanced)));
    }

    #[test]
    fn shared_cells_cancel() {
        let g = shape(2, 2);
        let h = ShiftedHierarchy::new(g, vec![0, 0]).unwrap();
        let f = FeatureMap::Shifted {
            shape: g,
            hierarchies: vec![h],
        };
        // (1,1) and (2,1) share cells at levels 0 and 1, split at level 2
        let v = f.apply(&DyadicMeasure::dirac_difference(g, 0, 1)).unwrap();
        assert_eq!(v.entries().len(), 2);
        assert!(v.entries().iter().all(|((_, level, _), _)| *level == 2));
        assert_eq!(f.pair_norm(0, 1).unwrap(), ratio(2, 1));
    }

    #[test]
    fn hand_evaluated_two_by_two() {
        let g = shape(1, 2);
        let edge = DyadicMeasure::dirac_difference(g, 0, 1);
        let plain = FeatureMap::Shifted {
            shape: g,
            hierarchies: vec![ShiftedHierarchy::new(g, vec![0, 0]).unwrap()],
        };
        // level 1 only: 1 + 1
        assert_eq!(plain.apply(&edge).unwrap().l1(), ratio(2, 1));
        let cut = FeatureMap::Shifted {
            shape: g,
            hierarchies: vec![ShiftedHierarchy::new(g, vec![1, 0]).unwrap()],
        };
        // level 0 splits the pair: 2 + 2, level 1: 1 + 1
        assert_eq!(cut.apply(&edge).unwrap().l1(), ratio(6, 1));
        let probes = vec![Probe {
            kind: ProbeKind::Edge { u: 0, v: 1 },
            problem: TransportProblem::new(edge).unwrap(),
        }];
        let audit = audit_distortion(&cut, &probes, 1).unwrap();
        assert_eq!(audit.edge_min_ratio, 6.0);
        assert_eq!(audit.distortion, 1.0);
    }

    #[test]
    fn pair_norm_matches_apply() {
        let g = shape(2, 3);
        let f = FeatureMap::shifted(g, 3, 2);
        for (u, v) in [(0, 1), (5, 60), (17, 18)] {
            let direct = f.apply(&DyadicMeasure::dirac_difference(g, u, v)).unwrap().l1();
            assert_eq!(f.pair_norm(u, v).unwrap(), direct);
        }
    }

    #[test]
    fn prefix_map_is_isometric() {
        let g = shape(4, 1);
        let f = FeatureMap::prefix1d(g).unwrap();
        let spec = ProbeSpec {
            edges: true,
            pairs: 50,
            nu_trials: 20,
            k_min: 1,
            k_max: None,
        };
        let probes = build_probes(g, &spec, 3).unwrap();
        let audit = audit_distortion(&f, &probes, 1).unwrap();
        assert_eq!(audit.distortion, 1.0);
        assert!(audit.results.iter().all(|r| r.ratio == 1.0));
        assert!(FeatureMap::prefix1d(shape(2, 2)).is_err());
    }

    #[test]
    fn coordinate_map_from_functions() {
        let g = shape(2, 1);
        // the prefix map written as indicator functions of {1..i}
        let functions = (0..3)
            .map(|i| DyadicMeasure::new(g, (0..4).map(|x| i64::from(x <= i)).collect(), 0).unwrap())
            .collect();
        let f = FeatureMap::coordinates(g, functions).unwrap();
        let p = FeatureMap::prefix1d(g).unwrap();
        let m = DyadicMeasure::new(g, vec![3, -1, 0, -2], 1).unwrap();
        assert_eq!(f.apply(&m).unwrap().l1(), p.apply(&m).unwrap().l1());
    }

    #[test]
    fn zero_map_is_rejected() {
        let g = shape(2, 1);
        let zero = FeatureMap::coordinates(g, vec![DyadicMeasure::zero(g)]).unwrap();
        let cfg = CertifyConfig {
            k_min: 1,
            k_max: 2,
            trials: 4,
            seed: 0,
            workers: 1,
        };
        assert!(matches!(certify(&zero, &cfg), Err(EmbedError::Degenerate(..))));
        let probes = build_probes(g, &ProbeSpec::default(), 0).unwrap();
        assert!(matches!(audit_distortion(&zero, &probes, 1), Err(EmbedError::Degenerate(..))));
    }

    #[test]
    fn prefix_certificate_is_one() {
        let g = shape(4, 1);
        let f = FeatureMap::prefix1d(g).unwrap();
        let cfg = CertifyConfig {
            k_min: 1,
            k_max: 4,
            trials: 200,
            seed: 5,
            workers: 1,
        };
        let c = certify(&f, &cfg).unwrap();
        assert_eq!(c.op_edge, 1.0);
        assert!((c.lower_bound - 1.0).abs() < 1e-12);
    }

    #[test]
    fn certificate_below_audit() {
        let g = shape(2, 3);
        let f = FeatureMap::shifted(g, 4, 1);
        let cfg = CertifyConfig {
            k_min: 1,
            k_max: 2,
            trials: 400,
            seed: 7,
            workers: 2,
        };
        let c = certify(&f, &cfg).unwrap();
        let probes = certificate_probes(g, &cfg).unwrap();
        let audit = audit_distortion(&f, &probes, 2).unwrap();
        assert!(c.lower_bound <= audit.distortion * (1.0 + 1e-12));
        assert!(audit.contraction >= 0.0 && audit.expansion >= 1.0);
    }

    #[test]
    fn probe_spec_parsing() {
        let s: ProbeSpec = "edges,pairs=10,nu=3,k=2..3".parse().unwrap();
        assert_eq!(
            s,
            ProbeSpec {
                edges: true,
                pairs: 10,
                nu_trials: 3,
                k_min: 2,
                k_max: Some(3)
            }
        );
        assert_eq!("default".parse::<ProbeSpec>().unwrap(), ProbeSpec::default());
        assert!("edges,bogus".parse::<ProbeSpec>().is_err());
    }
}
