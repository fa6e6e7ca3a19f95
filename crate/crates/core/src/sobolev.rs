//! Sobolev seminorm, coarea layers, isoperimetric checks and the per-scale
//! bounds on `E|μ_k(A)|`.

use std::cmp::Ordering;
use std::collections::VecDeque;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

use crate::dyadic::{rational_to_f64, Dyadic};
use crate::grid::{boundary_edges, per_from_boundary, GridShape, VertexSet};
use crate::scalar::Scalar;

/// The isoperimetric constant used throughout.
pub const C_ISO: u32 = 2;

/// Cap on `Σ_{k≥8} E|ν_k(A)|/Per(A)`, rounded up from [`sobolev_constant`].
pub const SOBOLEV_CAP: i128 = 6100;

/// Relative guard applied to irrational bounds evaluated in `f64`.
pub const SQRT2_GUARD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SobolevError {
    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value at vertex {0}")]
    NonFinite(usize),
    #[error("exhaustive enumeration needs at most 16 vertices, grid has {0}")]
    TooManyVertices(usize),
}

/// A real-valued function on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T: Scalar> {
    shape: GridShape,
    values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(shape: GridShape, values: Vec<T>) -> Result<Self, SobolevError> {
        if values.len() != shape.len() {
            return Err(SobolevError::ShapeMismatch {
                expected: shape.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.to_f64_lossy().is_finite()) {
            return Err(SobolevError::NonFinite(i));
        }
        Ok(GridFunction { shape, values })
    }

    pub fn from_fn(shape: GridShape, f: impl FnMut(usize) -> T) -> Result<Self, SobolevError> {
        Self::new(shape, (0..shape.len()).map(f).collect())
    }

    pub fn constant(shape: GridShape, c: T) -> Self {
        GridFunction {
            shape,
            values: vec![c; shape.len()],
        }
    }

    pub fn indicator(a: &VertexSet) -> Self {
        let shape = a.shape();
        GridFunction {
            shape,
            values: (0..shape.len())
                .map(|v| if a.contains(v) { T::one() } else { T::zero() })
                .collect(),
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// `‖f‖_{W^{1,1}} = |E|^{−1} Σ_{uv ∈ E} 2^n |f(u) − f(v)|`; zero on a
/// single-vertex grid.
pub fn w11_norm<T: Scalar>(f: &GridFunction<T>) -> T {
    let shape = f.shape;
    let edges = shape.edge_count();
    if edges == 0 {
        return T::zero();
    }
    let mut total = T::zero();
    shape.for_each_edge(|u, v, _| {
        total = total.clone() + (f.values[u].clone() - f.values[v].clone()).abs();
    });
    total * <T as Scalar>::from_u64(shape.side()) / <T as Scalar>::from_u64(edges)
}

/// `‖1_A‖_{W^{1,1}} = 2^n |∂A| / |E|`, exact.
pub fn w11_indicator(a: &VertexSet) -> BigRational {
    let shape = a.shape();
    if shape.edge_count() == 0 {
        return BigRational::zero();
    }
    BigRational::new(
        BigInt::from(boundary_edges(a)) * BigInt::from(shape.side()),
        BigInt::from(shape.edge_count()),
    )
}

/// One superlevel set `{f > threshold}` with its weight in the layer-cake sum.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub threshold: T,
    pub weight: T,
    pub set: VertexSet,
}

/// Layer-cake decomposition `f = min f + Σ_i w_i 1_{A_i}` with nested
/// `A_i = {f > t_i}` over the distinct values `t_i` of `f` except the largest.
pub fn coarea_layers<T: Scalar>(f: &GridFunction<T>) -> Vec<Layer<T>> {
    let mut levels = f.values.clone();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    levels.dedup();
    levels
        .windows(2)
        .map(|w| Layer {
            threshold: w[0].clone(),
            weight: w[1].clone() - w[0].clone(),
            set: VertexSet::from_predicate(f.shape, |v| f.values[v] > w[0]),
        })
        .collect()
}

/// `m(A)`: the integer with `2^{−m} < Vol(A)^{1/d} ≤ 2^{−m+1}`; `None` for
/// the empty set.
pub fn scale_index(shape: &GridShape, size: u64) -> Option<u32> {
    if size == 0 {
        return None;
    }
    let nd = shape.n() * shape.d();
    let d = shape.d();
    let size = size as u128;
    // 2^{nd−md} < |A| ≤ 2^{nd−(m−1)d}
    (1..=shape.n() + 1).find(|&m| {
        (size << (m * d)) > (1u128 << nd) && (size << ((m - 1) * d)) <= (1u128 << nd)
    })
}

/// One inequality in integer form: `lhs ≤ rhs` when `applies`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub applies: bool,
    pub lhs: BigInt,
    pub rhs: BigInt,
}

impl Clause {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }

    pub fn pass(&self) -> bool {
        !self.applies || self.holds()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsoReport {
    pub size: u64,
    pub boundary: u64,
    pub vol: Dyadic,
    pub per: BigRational,
    pub m: Option<u32>,
    /// `Vol ≤ 2^{−2d} ⟹ Vol^{1−1/d} ≤ C·Per`, as `d^d|A|^{d−1} ≤ C^d|∂A|^d`.
    pub small: Clause,
    /// `Vol ≤ 1/2 ⟹ Vol^{1−1/d} ≤ C·d·Per`, as `|A|^{d−1} ≤ C^d|∂A|^d`.
    pub medium: Clause,
}

impl IsoReport {
    pub fn pass(&self) -> bool {
        self.small.pass() && self.medium.pass()
    }
}

/// Evaluates both isoperimetric clauses for `A` exactly. The empty set is
/// outside both hypotheses.
pub fn check_iso(a: &VertexSet) -> IsoReport {
    let shape = a.shape();
    iso_from_counts(&shape, a.len() as u64, boundary_edges(a))
}

pub fn iso_from_counts(shape: &GridShape, size: u64, boundary: u64) -> IsoReport {
    let d = shape.d();
    let nd = shape.n() * d;
    let lhs_core = BigInt::from(size).pow(d - 1);
    let rhs = BigInt::from(C_ISO).pow(d) * BigInt::from(boundary).pow(d);
    let nonempty = size > 0;
    let small_hyp = nonempty && (size as u128) << (2 * d) <= 1u128 << nd;
    let medium_hyp = nonempty && (size as u128) * 2 <= 1u128 << nd;
    IsoReport {
        size,
        boundary,
        vol: Dyadic::new(size as i128, nd as i32),
        per: per_from_boundary(shape, boundary),
        m: scale_index(shape, size),
        small: Clause {
            applies: small_hyp,
            lhs: BigInt::from(d).pow(d) * &lhs_core,
            rhs: rhs.clone(),
        },
        medium: Clause {
            applies: medium_hyp,
            lhs: lhs_core,
            rhs,
        },
    }
}

/// An exact value `q·√2^s` with `s ∈ {0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sqrt2Value {
    pub rational: BigRational,
    pub sqrt2: bool,
}

impl Sqrt2Value {
    /// `(√2)^j`.
    pub fn pow(j: i64) -> Self {
        let half = j.div_euclid(2);
        let two = BigRational::from_integer(BigInt::from(2));
        let rational = if half >= 0 {
            num_traits::pow(two, half as usize)
        } else {
            num_traits::pow(two, (-half) as usize).recip()
        };
        Sqrt2Value {
            rational,
            sqrt2: j.rem_euclid(2) == 1,
        }
    }

    pub fn times(&self, q: &BigRational) -> Self {
        Sqrt2Value {
            rational: &self.rational * q,
            sqrt2: self.sqrt2,
        }
    }

    pub fn to_f64(&self) -> f64 {
        let r = rational_to_f64(&self.rational);
        if self.sqrt2 {
            r * std::f64::consts::SQRT_2
        } else {
            r
        }
    }

    /// A value no larger than the exact one: exact when rational, else
    /// shrunk by the relative guard.
    pub fn lower_f64(&self) -> f64 {
        let v = self.to_f64();
        if self.sqrt2 {
            v - v.abs() * SQRT2_GUARD
        } else {
            v
        }
    }

    /// Exact comparison with a rational.
    pub fn cmp_rational(&self, q: &BigRational) -> Ordering {
        if !self.sqrt2 {
            return self.rational.cmp(q);
        }
        let lhs_sign = self.rational.signum();
        let rhs_sign = q.signum();
        if lhs_sign != rhs_sign {
            return lhs_sign.cmp(&rhs_sign);
        }
        // same sign: compare 2r² with q²
        let a = &self.rational * &self.rational * BigInt::from(2);
        let b = q * q;
        if lhs_sign.is_negative() {
            b.cmp(&a)
        } else {
            a.cmp(&b)
        }
    }
}

/// A per-scale bound with a flag for whether its hypotheses hold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScaleBound {
    pub value: Sqrt2Value,
    pub hypotheses_hold: bool,
}

/// `2^9·C_iso·2^{−|m(A)−k|/2}·Per(A)`; hypotheses `k ≥ 8`, `0 < Vol(A) ≤ 1/2`.
pub fn set_mass_bound(a: &VertexSet, k: u32) -> ScaleBound {
    let shape = a.shape();
    let size = a.len() as u64;
    let per = per_from_boundary(&shape, boundary_edges(a));
    set_mass_bound_from_counts(&shape, size, &per, k)
}

pub fn set_mass_bound_from_counts(shape: &GridShape, size: u64, per: &BigRational, k: u32) -> ScaleBound {
    let m = scale_index(shape, size).unwrap_or(shape.n() + 1);
    let gap = (m as i64 - k as i64).abs();
    let scale = BigRational::from_integer(BigInt::from(512 * C_ISO)) * per;
    ScaleBound {
        value: Sqrt2Value::pow(-gap).times(&scale),
        hypotheses_hold: k >= 8 && half_volume(shape, size),
    }
}

/// `(√2)^{16−k}·C_iso·Per(A)`; hypotheses `k ≥ 5`, `0 < Vol(A) ≤ 1/2`.
pub fn grid_mass_bound(a: &VertexSet, k: u32) -> ScaleBound {
    let shape = a.shape();
    let per = per_from_boundary(&shape, boundary_edges(a));
    grid_mass_bound_from_counts(&shape, a.len() as u64, &per, k)
}

pub fn grid_mass_bound_from_counts(shape: &GridShape, size: u64, per: &BigRational, k: u32) -> ScaleBound {
    let scale = BigRational::from_integer(BigInt::from(C_ISO)) * per;
    ScaleBound {
        value: Sqrt2Value::pow(16 - k as i64).times(&scale),
        hypotheses_hold: k >= 5 && half_volume(shape, size),
    }
}

fn half_volume(shape: &GridShape, size: u64) -> bool {
    size > 0 && (size as u128) * 2 <= 1u128 << (shape.n() * shape.d())
}

/// Every subset of a grid with at most 16 vertices, in mask order.
pub fn all_subsets(shape: GridShape) -> Result<impl Iterator<Item = VertexSet>, SobolevError> {
    let n = shape.len();
    if n > 16 {
        return Err(SobolevError::TooManyVertices(n));
    }
    Ok((0..1u64 << n).map(move |mask| VertexSet::from_predicate(shape, |v| mask >> v & 1 == 1)))
}

/// The sampled subset families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubsetFamily {
    CubeUnion,
    L1Ball,
    Halfspace,
    /// Each vertex independently with probability `2^{−bits}`.
    Bernoulli { bits: u32 },
    Blob,
}

impl SubsetFamily {
    /// The five kinds, with Bernoulli densities `2^{−4d}`, `1/8` and `1/2`.
    pub fn standard(d: u32) -> Vec<SubsetFamily> {
        vec![
            SubsetFamily::CubeUnion,
            SubsetFamily::L1Ball,
            SubsetFamily::Halfspace,
            SubsetFamily::Bernoulli { bits: 4 * d },
            SubsetFamily::Bernoulli { bits: 3 },
            SubsetFamily::Bernoulli { bits: 1 },
            SubsetFamily::Blob,
        ]
    }

    pub fn name(&self) -> String {
        match self {
            SubsetFamily::CubeUnion => "cubes".into(),
            SubsetFamily::L1Ball => "ball".into(),
            SubsetFamily::Halfspace => "half".into(),
            SubsetFamily::Bernoulli { bits } => format!("bern{bits}"),
            SubsetFamily::Blob => "blob".into(),
        }
    }

    pub fn sample<R: Rng>(&self, shape: GridShape, rng: &mut R) -> VertexSet {
        let n_vertices = shape.len();
        let d = shape.d();
        let side = shape.side() as u32;
        match *self {
            SubsetFamily::CubeUnion => {
                let k = rng.random_range(0..=shape.n());
                let count = shape.cube_count(k);
                let take = rng.random_range(1..=count.div_ceil(2).min(64));
                let mut chosen = Vec::with_capacity(take);
                while chosen.len() < take {
                    let c = rng.random_range(0..count);
                    if !chosen.contains(&c) {
                        chosen.push(c);
                    }
                }
                VertexSet::from_indices(shape, chosen.into_iter().flat_map(|c| shape.cube_points(k, c)))
            }
            SubsetFamily::L1Ball => {
                let center = rng.random_range(0..n_vertices);
                let radius = rng.random_range(0..=(d * side) as u64 / 2);
                let dist = shape.bfs_from([center]);
                VertexSet::from_predicate(shape, |v| dist[v] as u64 <= radius)
            }
            SubsetFamily::Halfspace => {
                if side == 1 {
                    return shape.empty_set();
                }
                if rng.random_bool(0.5) {
                    let axis = rng.random_range(0..d);
                    let t = rng.random_range(0..side - 1);
                    VertexSet::from_predicate(shape, |v| shape.coord(v, axis) <= t)
                } else {
                    let t = rng.random_range(0..d * (side - 1));
                    VertexSet::from_predicate(shape, |v| (0..d).map(|a| shape.coord(v, a)).sum::<u32>() <= t)
                }
            }
            SubsetFamily::Bernoulli { bits } => {
                let mut members = Vec::new();
                for block in 0..n_vertices.div_ceil(64) {
                    let mut any = 0u64;
                    for _ in 0..bits {
                        any |= rng.next_u64();
                    }
                    let mut hits = !any;
                    while hits != 0 {
                        let b = hits.trailing_zeros() as usize;
                        hits &= hits - 1;
                        if 64 * block + b < n_vertices {
                            members.push(64 * block + b);
                        }
                    }
                }
                VertexSet::from_indices(shape, members)
            }
            SubsetFamily::Blob => {
                let target = rng.random_range(1..=n_vertices.div_ceil(2));
                let start = rng.random_range(0..n_vertices);
                let mut inside = vec![false; n_vertices];
                let mut seen = vec![false; n_vertices];
                let mut frontier = vec![start];
                seen[start] = true;
                let mut count = 0;
                while count < target && !frontier.is_empty() {
                    let i = rng.random_range(0..frontier.len());
                    let u = frontier.swap_remove(i);
                    inside[u] = true;
                    count += 1;
                    shape.for_each_neighbor(u, |v| {
                        if !seen[v] {
                            seen[v] = true;
                            frontier.push(v);
                        }
                    });
                }
                VertexSet::from_predicate(shape, |v| inside[v])
            }
        }
    }
}

/// Whether a vertex set is connected in the grid graph.
pub fn is_connected(a: &VertexSet) -> bool {
    let shape = a.shape();
    let Some(start) = a.iter().next() else {
        return true;
    };
    let mut seen = vec![false; shape.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        shape.for_each_neighbor(u, |v| {
            if a.contains(v) && !seen[v] {
                seen[v] = true;
                reached += 1;
                queue.push_back(v);
            }
        });
    }
    reached == a.len()
}

/// `Σ_i w_i‖1_{A_i}‖_{W^{1,1}}` over exact layers.
pub fn coarea_sum(layers: &[Layer<BigRational>]) -> BigRational {
    layers
        .iter()
        .map(|l| &l.weight * w11_indicator(&l.set))
        .fold(BigRational::zero(), |a, b| a + b)
}

/// Ratio `‖f‖_{W^{1,1}} / Per`-style quotients are reported in `f64`.
pub fn ratio_f64(num: &BigRational, den: &BigRational) -> Option<f64> {
    if den.is_zero() {
        None
    } else {
        (num / den).to_f64()
    }
}

/// `2^9·C_iso·Σ_{j∈Z} 2^{−|j|/2} + C_iso·Σ_{k≥8} (√2)^{16−k}`, the constant
/// the summed per-scale ratio is capped by.
pub fn sobolev_constant() -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let two_sided = 1.0 + 2.0 * r / (1.0 - r);
    let tail = 16.0 / (1.0 - r);
    (512 * C_ISO) as f64 * two_sided + C_ISO as f64 * tail
}
