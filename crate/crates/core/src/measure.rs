//! Exact signed measures on the grid and the random dyadic construction.
//!
//! A [`DyadicMeasure`] stores one integer weight per vertex and a shared
//! exponent `e`, so the mass at `x` is `weight(x)·2^{−e}`. The random measure
//! `μ_k` puts density `p^{−1}·2^k·X_Q` on each cube `Q ∈ D_k`, where the signs
//! `X_Q` are i.i.d. with `P(X_Q = ±1) = p/2`, `p = 2^{−4d}`; `ν_k` subtracts the
//! constant-density part so that its total mass is exactly zero.

use std::fmt::Write as _;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::Dyadic;
use crate::grid::{parse_header, GridError, GridShape, VertexSet};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeasureError {
    #[error("the random construction needs d ≥ 3, got d={0}")]
    Domain(u32),
    #[error("exact sign sampling supports 4d+1 ≤ 64 (d ≤ 15), got d={0}")]
    Unsupported(u32),
    #[error("scale k={k} outside [1, {n}]")]
    ScaleOutOfRange { k: u32, n: u32 },
    #[error("measure and operand live on different grids")]
    ShapeMismatch,
    #[error("measure weights overflow 64 bits")]
    Overflow,
    #[error("malformed measure file: {0}")]
    Format(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// SplitMix64 finalizer; a bijection on `u64`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible random stream: ChaCha8 keyed by `master_seed`, using
/// `substream` as the ChaCha stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub master_seed: u64,
    pub substream: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64, substream: u64) -> Self {
        RandomStream {
            master_seed,
            substream,
        }
    }

    /// Stream for Monte Carlo trial `trial` at scale `k`:
    /// `substream = splitmix64((k << 40) ^ trial)`. Distinct for all
    /// `trial < 2^40`.
    pub fn for_trial(master_seed: u64, trial: u64, k: u32) -> Self {
        Self::new(master_seed, splitmix64(((k as u64) << 40) ^ trial))
    }

    /// Auxiliary stream (subset families, hierarchy shifts, probes),
    /// separated from trial streams by a tag in the upper bits.
    pub fn auxiliary(master_seed: u64, tag: u64, index: u64) -> Self {
        Self::new(master_seed, splitmix64((1 << 63) | (tag << 40) ^ index))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.substream);
        rng
    }
}

/// Distribution of the signs `X_Q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignLaw {
    /// `P(X_Q ≠ 0) = 2^{−zero_bits}`, signs symmetric.
    Dyadic { zero_bits: u32 },
    /// `X_Q ≡ 0`.
    Never,
}

impl SignLaw {
    /// The law with `p = 2^{−4d}`.
    pub fn standard(d: u32) -> Self {
        SignLaw::Dyadic { zero_bits: 4 * d }
    }

    /// `−log2 p` used to scale the density; `Never` keeps the standard scale.
    pub fn p_exp(&self, d: u32) -> u32 {
        match *self {
            SignLaw::Dyadic { zero_bits } => zero_bits,
            SignLaw::Never => 4 * d,
        }
    }
}

/// The family `{X_Q}` over `D_k`, stored sparsely: only nonzero signs are
/// kept, all other cubes carry 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignAssignment {
    shape: GridShape,
    k: u32,
    p_exp: u32,
    nonzero: Vec<(usize, i8)>,
    stream: Option<RandomStream>,
}

impl SignAssignment {
    /// Builds an assignment from a dense table of `2^{kd}` values in
    /// `{−1, 0, 1}` with the standard `p = 2^{−4d}` scale.
    pub fn from_values(shape: GridShape, k: u32, values: &[i8]) -> Result<Self, MeasureError> {
        check_scale(&shape, k)?;
        if values.len() != shape.cube_count(k) || values.iter().any(|v| !(-1..=1).contains(v)) {
            return Err(MeasureError::Format(format!(
                "expected {} signs in {{-1,0,1}}",
                shape.cube_count(k)
            )));
        }
        Ok(SignAssignment {
            shape,
            k,
            p_exp: 4 * shape.d(),
            nonzero: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0)
                .map(|(i, &v)| (i, v))
                .collect(),
            stream: None,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// `−log2 p`.
    pub fn p_exp(&self) -> u32 {
        self.p_exp
    }

    /// Number of entries, `2^{kd}`.
    pub fn len(&self) -> usize {
        self.shape.cube_count(self.k)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, cube: usize) -> i8 {
        match self.nonzero.binary_search_by_key(&cube, |&(c, _)| c) {
            Ok(i) => self.nonzero[i].1,
            Err(_) => 0,
        }
    }

    /// Nonzero `(cube index, sign)` pairs in increasing cube order.
    pub fn nonzero(&self) -> &[(usize, i8)] {
        &self.nonzero
    }

    pub fn sum(&self) -> i64 {
        self.nonzero.iter().map(|&(_, v)| v as i64).sum()
    }

    pub fn provenance(&self) -> Option<RandomStream> {
        self.stream
    }

    /// Cubes with `X_Q = −1`.
    pub fn negative_cubes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nonzero.iter().filter(|&&(_, v)| v < 0).map(|&(c, _)| c)
    }

    /// Mass of `μ_k` per vertex of a cube with sign +1: `2^{p_exp + k − nd}`.
    pub fn point_density(&self) -> Dyadic {
        Dyadic::pow2(self.p_exp as i32 + self.k as i32 - (self.shape.n() * self.shape.d()) as i32)
    }
}

fn check_scale(shape: &GridShape, k: u32) -> Result<(), MeasureError> {
    if k == 0 || k > shape.n() {
        Err(MeasureError::ScaleOutOfRange { k, n: shape.n() })
    } else {
        Ok(())
    }
}

/// Samples `{X_Q}_{Q ∈ D_k}` with `p = 2^{−4d}`.
pub fn sample_signs(
    k: u32,
    shape: GridShape,
    stream: RandomStream,
) -> Result<SignAssignment, MeasureError> {
    if shape.d() < 3 {
        return Err(MeasureError::Domain(shape.d()));
    }
    if 4 * shape.d() + 1 > 64 {
        return Err(MeasureError::Unsupported(shape.d()));
    }
    sample_signs_with(k, shape, SignLaw::standard(shape.d()), stream)
}

/// Sampling without the `d ≥ 3` guard, for an arbitrary dyadic law.
///
/// Exact and rejection-free: cubes are handled 64 at a time, and cube `b` of
/// a block is nonzero iff bit `b` is clear in each of `zero_bits` fresh
/// uniform words, which happens with probability exactly `2^{−zero_bits}`,
/// independently across bits. Each nonzero cube then takes its sign from the
/// top bit of one more word, in increasing cube order.
pub fn sample_signs_with(
    k: u32,
    shape: GridShape,
    law: SignLaw,
    stream: RandomStream,
) -> Result<SignAssignment, MeasureError> {
    check_scale(&shape, k)?;
    let p_exp = law.p_exp(shape.d());
    let mut nonzero = Vec::new();
    if let SignLaw::Dyadic { zero_bits } = law {
        if zero_bits + 1 > 64 {
            return Err(MeasureError::Unsupported(shape.d()));
        }
        let mut rng = stream.rng();
        let count = shape.cube_count(k);
        for block in 0..count.div_ceil(64) {
            let width = (count - 64 * block).min(64);
            let valid = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
            let mut any = 0u64;
            for _ in 0..zero_bits {
                any |= rng.next_u64();
            }
            let mut hits = !any & valid;
            while hits != 0 {
                let b = hits.trailing_zeros() as usize;
                hits &= hits - 1;
                let sign = if rng.next_u64() >> 63 == 1 { 1 } else { -1 };
                nonzero.push((64 * block + b, sign));
            }
        }
    }
    Ok(SignAssignment {
        shape,
        k,
        p_exp,
        nonzero,
        stream: Some(stream),
    })
}

/// An exact signed measure: mass at `x` is `weights[x]·2^{−scale_exp}`.
///
/// Always in canonical form: some weight is odd, or all weights are zero
/// and `scale_exp == 0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DyadicMeasure {
    shape: GridShape,
    scale_exp: i32,
    weights: Vec<i64>,
    total_weight: i64,
}

impl DyadicMeasure {
    pub fn new(shape: GridShape, weights: Vec<i64>, scale_exp: i32) -> Result<Self, MeasureError> {
        if weights.len() != shape.len() {
            return Err(MeasureError::ShapeMismatch);
        }
        let total: i128 = weights.iter().map(|&w| w as i128).sum();
        let total_weight = i64::try_from(total).map_err(|_| MeasureError::Overflow)?;
        let mut m = DyadicMeasure {
            shape,
            scale_exp,
            weights,
            total_weight,
        };
        m.normalize();
        Ok(m)
    }

    fn normalize(&mut self) {
        let tz = self
            .weights
            .iter()
            .filter(|&&w| w != 0)
            .map(|w| w.trailing_zeros())
            .min();
        match tz {
            None => self.scale_exp = 0,
            Some(0) => {}
            Some(t) => {
                for w in &mut self.weights {
                    *w >>= t;
                }
                self.total_weight >>= t;
                self.scale_exp -= t as i32;
            }
        }
    }

    pub fn zero(shape: GridShape) -> Self {
        DyadicMeasure {
            shape,
            scale_exp: 0,
            weights: vec![0; shape.len()],
            total_weight: 0,
        }
    }

    /// `δ_u − δ_v` on linear indices.
    pub fn dirac_difference(shape: GridShape, u: usize, v: usize) -> Self {
        let mut w = vec![0; shape.len()];
        w[u] += 1;
        w[v] -= 1;
        DyadicMeasure::new(shape, w, 0).expect("unit weights")
    }

    /// The normalized counting measure `Vol`.
    pub fn volume(shape: GridShape) -> Self {
        DyadicMeasure::new(shape, vec![1; shape.len()], (shape.n() * shape.d()) as i32)
            .expect("unit weights")
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn scale_exp(&self) -> i32 {
        self.scale_exp
    }

    pub fn weights(&self) -> &[i64] {
        &self.weights
    }

    pub fn total_weight(&self) -> i64 {
        self.total_weight
    }

    pub fn total_mass(&self) -> Dyadic {
        Dyadic::new(self.total_weight as i128, self.scale_exp)
    }

    pub fn mass_at(&self, idx: usize) -> Dyadic {
        Dyadic::new(self.weights[idx] as i128, self.scale_exp)
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0)
    }

    pub fn is_balanced(&self) -> bool {
        self.total_weight == 0
    }

    /// `Σ |weight|·2^{−e}`, the total variation.
    pub fn total_variation(&self) -> Dyadic {
        let s: i128 = self.weights.iter().map(|&w| (w as i128).abs()).sum();
        Dyadic::new(s, self.scale_exp)
    }

    /// `α·μ + β·ν` for dyadic scalars.
    pub fn linear_combination(
        &self,
        alpha: Dyadic,
        other: &DyadicMeasure,
        beta: Dyadic,
    ) -> Result<Self, MeasureError> {
        if self.shape != other.shape {
            return Err(MeasureError::ShapeMismatch);
        }
        let ea = self.scale_exp + alpha.exponent();
        let eb = other.scale_exp + beta.exponent();
        let e = ea.max(eb);
        let (sa, sb) = ((e - ea) as u32, (e - eb) as u32);
        let ca = alpha.numerator();
        let cb = beta.numerator();
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(&x, &y)| {
                let a = (x as i128).checked_mul(ca)?.checked_mul(1i128.checked_shl(sa)?)?;
                let b = (y as i128).checked_mul(cb)?.checked_mul(1i128.checked_shl(sb)?)?;
                i64::try_from(a.checked_add(b)?).ok()
            })
            .collect::<Option<Vec<i64>>>()
            .ok_or(MeasureError::Overflow)?;
        DyadicMeasure::new(self.shape, weights, e)
    }

    pub fn add(&self, other: &DyadicMeasure) -> Result<Self, MeasureError> {
        self.linear_combination(Dyadic::ONE, other, Dyadic::ONE)
    }

    pub fn sub(&self, other: &DyadicMeasure) -> Result<Self, MeasureError> {
        self.linear_combination(Dyadic::ONE, other, -Dyadic::ONE)
    }

    pub fn scale(&self, alpha: Dyadic) -> Result<Self, MeasureError> {
        self.linear_combination(alpha, &DyadicMeasure::zero(self.shape), Dyadic::ZERO)
    }

    /// Text form: header `measure n=<n> d=<d> e=<e>`, then `index weight`
    /// lines for the nonzero weights in increasing index order.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "measure n={} d={} e={}\n",
            self.shape.n(),
            self.shape.d(),
            self.scale_exp
        );
        for (i, &w) in self.weights.iter().enumerate() {
            if w != 0 {
                let _ = writeln!(out, "{i} {w}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MeasureError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| MeasureError::Format("missing header".into()))?;
        let fields = parse_header(header, "measure", &["n", "d", "e"])
            .map_err(|e| MeasureError::Format(e.to_string()))?;
        let shape = GridShape::new(fields[0] as u32, fields[1] as u32)?;
        let mut weights = vec![0i64; shape.len()];
        for line in lines {
            let mut it = line.split_whitespace();
            let parsed = (|| {
                let i: usize = it.next()?.parse().ok()?;
                let w: i64 = it.next()?.parse().ok()?;
                it.next().is_none().then_some((i, w))
            })();
            let (i, w) = parsed.ok_or_else(|| MeasureError::Format(format!("bad line `{line}`")))?;
            if i >= shape.len() {
                return Err(MeasureError::Format(format!("index {i} outside the grid")));
            }
            weights[i] = weights[i].checked_add(w).ok_or(MeasureError::Overflow)?;
        }
        DyadicMeasure::new(shape, weights, fields[2] as i32)
    }
}

/// `μ_k = Σ_Q p^{−1} 2^k X_Q Vol_Q`: weight `X_{Q(x)}` at exponent
/// `nd − 4d − k` (canonicalized).
pub fn build_mu_k(signs: &SignAssignment) -> DyadicMeasure {
    let shape = signs.shape();
    let mut weights = vec![0i64; shape.len()];
    for &(cube, s) in signs.nonzero() {
        for v in shape.cube_points(signs.k(), cube) {
            weights[v] = s as i64;
        }
    }
    let e = (shape.n() * shape.d()) as i32 - signs.p_exp() as i32 - signs.k() as i32;
    DyadicMeasure::new(shape, weights, e).expect("unit weights")
}

/// `ν = μ − μ(G)·Vol`; the total mass of the result is exactly zero.
pub fn build_nu_k(mu: &DyadicMeasure) -> DyadicMeasure {
    let shape = mu.shape();
    let nd = shape.n() * shape.d();
    let total = mu.total_weight() as i128;
    // mass(x) = 2^{−(e+nd)}·(w_x·2^{nd} − W)
    let weights = mu
        .weights()
        .iter()
        .map(|&w| {
            let v = ((w as i128) << nd) - total;
            i64::try_from(v).expect("ν weights exceed 64 bits")
        })
        .collect();
    DyadicMeasure::new(shape, weights, mu.scale_exp() + nd as i32).expect("balanced by construction")
}

/// `μ(A)`, exact.
pub fn measure_of_set(m: &DyadicMeasure, a: &VertexSet) -> Result<Dyadic, MeasureError> {
    if m.shape() != a.shape() {
        return Err(MeasureError::ShapeMismatch);
    }
    let s: i128 = a.iter().map(|v| m.weights()[v] as i128).sum();
    Ok(Dyadic::new(s, m.scale_exp()))
}

/// `∫ f dμ` for an integer-valued `f`, exact.
pub fn integrate_int(m: &DyadicMeasure, f: &[i64]) -> Result<Dyadic, MeasureError> {
    if f.len() != m.shape().len() {
        return Err(MeasureError::ShapeMismatch);
    }
    let s = m
        .weights()
        .iter()
        .zip(f)
        .filter(|(&w, _)| w != 0)
        .try_fold(0i128, |acc, (&w, &fx)| acc.checked_add((w as i128).checked_mul(fx as i128)?))
        .ok_or(MeasureError::Overflow)?;
    Ok(Dyadic::new(s, m.scale_exp()))
}

/// `∫ f dμ` over any scalar type.
pub fn integrate<T: Scalar>(m: &DyadicMeasure, f: &[T]) -> Result<T, MeasureError> {
    if f.len() != m.shape().len() {
        return Err(MeasureError::ShapeMismatch);
    }
    Ok(m
        .weights()
        .iter()
        .zip(f)
        .filter(|(&w, _)| w != 0)
        .map(|(&w, fx)| fx.clone() * T::from_dyadic(Dyadic::new(w as i128, m.scale_exp())))
        .sum())
}

/// `μ_k(G) = 2^{p_exp + k − kd}·Σ_Q X_Q`, without materializing `μ_k`.
pub fn mu_total_mass(signs: &SignAssignment) -> Dyadic {
    let shape = signs.shape();
    let e = signs.k() as i32 * shape.d() as i32 - signs.p_exp() as i32 - signs.k() as i32;
    Dyadic::new(signs.sum() as i128, e)
}

/// `μ_k(A) = 2^{p_exp + k − nd}·Σ_Q X_Q·|A ∩ Q|`, without materializing `μ_k`.
pub fn mu_of_set(signs: &SignAssignment, a: &VertexSet) -> Result<Dyadic, MeasureError> {
    if signs.shape() != a.shape() {
        return Err(MeasureError::ShapeMismatch);
    }
    let s: i128 = signs
        .nonzero()
        .iter()
        .map(|&(cube, x)| x as i128 * a.count_in_cube(signs.k(), cube) as i128)
        .sum();
    Ok(Dyadic::new(s, 0) * signs.point_density())
}

/// `ν_k(A) = μ_k(A) − μ_k(G)·Vol(A)`.
pub fn nu_of_set(signs: &SignAssignment, a: &VertexSet) -> Result<Dyadic, MeasureError> {
    Ok(mu_of_set(signs, a)? - mu_total_mass(signs) * crate::grid::vol(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{vol, DyadicCube};
    use proptest::prelude::*;
    use rand::Rng;

    fn shape(n: u32, d: u32) -> GridShape {
        GridShape::new(n, d).unwrap()
    }

    #[test]
    fn sampling_domain_errors() {
        let s = RandomStream::new(1, 2);
        assert_eq!(sample_signs(1, shape(2, 2), s), Err(MeasureError::Domain(2)));
        assert_eq!(sample_signs(1, shape(1, 16), s), Err(MeasureError::Unsupported(16)));
        assert!(matches!(
            sample_signs(0, shape(2, 3), s),
            Err(MeasureError::ScaleOutOfRange { .. })
        ));
        assert!(matches!(
            sample_signs(3, shape(2, 3), s),
            Err(MeasureError::ScaleOutOfRange { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let g = shape(3, 3);
        let a = sample_signs(3, g, RandomStream::for_trial(9, 4, 3)).unwrap();
        let b = sample_signs(3, g, RandomStream::for_trial(9, 4, 3)).unwrap();
        let c = sample_signs(3, g, RandomStream::for_trial(9, 5, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 512);
        assert_eq!(a.provenance(), Some(RandomStream::for_trial(9, 4, 3)));
        // different trial, different stream
        assert_ne!(RandomStream::for_trial(9, 4, 3), RandomStream::for_trial(9, 5, 3));
        let _ = c;
    }

    #[test]
    fn sign_frequencies_match_law() {
        // 2^20 cubes of D_5 on [32]^4 would exceed the grid limit; use d=3
        // draws aggregated over many independent samples instead.
        let g = shape(4, 3);
        let draws = 1_000_000usize;
        let per = g.cube_count(4);
        let reps = draws.div_ceil(per);
        let (mut nz, mut sum, mut sq) = (0u64, 0i64, 0u64);
        for r in 0..reps {
            let s = sample_signs(4, g, RandomStream::for_trial(77, r as u64, 4)).unwrap();
            nz += s.nonzero().len() as u64;
            sum += s.sum();
            sq += s.nonzero().len() as u64;
        }
        let t = (reps * per) as f64;
        let p = 2f64.powi(-12);
        let se = (p * (1.0 - p) / t).sqrt();
        assert!((nz as f64 / t - p).abs() < 4.0 * se, "P(X≠0) off");
        let se_mean = (p / t).sqrt();
        assert!((sum as f64 / t).abs() < 4.0 * se_mean, "E[X] off");
        assert!((sq as f64 / t - p).abs() < 4.0 * se, "E[X^2] off");
    }

    #[test]
    fn never_law_gives_zero() {
        let g = shape(2, 3);
        let s = sample_signs_with(2, g, SignLaw::Never, RandomStream::new(0, 0)).unwrap();
        assert!(s.nonzero().is_empty());
        assert!(build_mu_k(&s).is_zero());
        assert_eq!(mu_total_mass(&s), Dyadic::ZERO);
    }

    #[test]
    fn mu_single_positive_cube() {
        let g = shape(3, 3);
        let k = 1;
        let mut values = vec![0i8; 8];
        values[5] = 1;
        let signs = SignAssignment::from_values(g, k, &values).unwrap();
        let mu = build_mu_k(&signs);
        // per-point mass 2^{4d+k−nd} = 2^{12+1−9} = 16
        let q = DyadicCube::from_index(g, k, 5).to_set(g);
        for v in 0..g.len() {
            let expect = if q.contains(v) { Dyadic::from_int(16) } else { Dyadic::ZERO };
            assert_eq!(mu.mass_at(v), expect);
        }
        // μ(Q) = p^{−1}·2^k·2^{−kd} = 2^{12+1−3}
        assert_eq!(measure_of_set(&mu, &q).unwrap(), Dyadic::pow2(10));
        assert_eq!(mu_of_set(&signs, &q).unwrap(), Dyadic::pow2(10));
        assert_eq!(mu.total_mass(), mu_total_mass(&signs));
    }

    #[test]
    fn mu_total_formula() {
        let g = shape(2, 3);
        for seed in 0..50 {
            let values: Vec<i8> = {
                let mut rng = RandomStream::new(seed, 0).rng();
                (0..64).map(|_| rng.random_range(-1..=1)).collect()
            };
            let signs = SignAssignment::from_values(g, 2, &values).unwrap();
            let mu = build_mu_k(&signs);
            let sum: i64 = values.iter().map(|&v| v as i64).sum();
            // 2^{4d+k−kd}·ΣX = 2^{12+2−6}·ΣX
            assert_eq!(mu.total_mass(), Dyadic::new(sum as i128, -8));
        }
    }

    #[test]
    fn nu_example_one_positive() {
        let g = shape(1, 3);
        let mut values = vec![0i8; 8];
        values[2] = 1;
        let signs = SignAssignment::from_values(g, 1, &values).unwrap();
        let nu = build_nu_k(&build_mu_k(&signs));
        assert_eq!(nu.scale_exp(), -7);
        for v in 0..8 {
            assert_eq!(nu.weights()[v], if v == 2 { 7 } else { -1 });
        }
        assert_eq!(nu.total_weight(), 0);
        assert!(build_nu_k(&DyadicMeasure::zero(g)).is_zero());
    }

    #[test]
    fn nu_sums_to_exact_zero() {
        let combos: Vec<(u32, u32)> = (3..=12u32)
            .flat_map(|d| (1..=12 / d).map(move |n| (n, d)))
            .collect();
        for (n, d) in combos {
            let g = shape(n, d);
            for k in 1..=n {
                for seed in 0..10_000u64 {
                    let signs = sample_signs(k, g, RandomStream::for_trial(seed, 0, k)).unwrap();
                    if signs.nonzero().is_empty() {
                        continue;
                    }
                    let nu = build_nu_k(&build_mu_k(&signs));
                    assert_eq!(nu.total_weight(), 0);
                    assert_eq!(nu.weights().iter().map(|&w| w as i128).sum::<i128>(), 0);
                }
            }
        }
    }

    #[test]
    fn integrate_and_measure_of_set() {
        let g = shape(2, 2);
        let m = DyadicMeasure::new(g, (0..16).map(|i| i - 7).collect(), 3).unwrap();
        let ones = vec![5i64; 16];
        assert_eq!(integrate_int(&m, &ones).unwrap(), m.total_mass() * Dyadic::from_int(5));
        let a = VertexSet::from_indices(g, [1, 4, 9]);
        let ind: Vec<i64> = (0..16).map(|v| a.contains(v) as i64).collect();
        assert_eq!(integrate_int(&m, &ind).unwrap(), measure_of_set(&m, &a).unwrap());
        let vol_m = DyadicMeasure::volume(g);
        assert_eq!(measure_of_set(&vol_m, &a).unwrap(), vol(&a));
        let f64s: Vec<f64> = ind.iter().map(|&x| x as f64).collect();
        assert_eq!(integrate(&m, &f64s).unwrap(), measure_of_set(&m, &a).unwrap().to_f64());
        let other = shape(1, 2);
        assert_eq!(
            measure_of_set(&m, &other.full_set()),
            Err(MeasureError::ShapeMismatch)
        );
    }

    #[test]
    fn text_format() {
        let g = shape(1, 2);
        let m = DyadicMeasure::new(g, vec![3, 0, -1, -2], 2).unwrap();
        assert_eq!(m.to_text(), "measure n=1 d=2 e=2\n0 3\n2 -1\n3 -2\n");
        assert!(DyadicMeasure::from_text("measure n=1 d=2 e=0\n9 1\n").is_err());
        assert!(DyadicMeasure::from_text("measure n=1 d=2\n0 1\n").is_err());
        assert!(DyadicMeasure::from_text("measure n=1 d=2 e=0\n0 x\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(ws in proptest::collection::vec(-1000i64..1000, 16), e in -5i32..20) {
            let m = DyadicMeasure::new(shape(2, 2), ws, e).unwrap();
            prop_assert_eq!(DyadicMeasure::from_text(&m.to_text()).unwrap(), m);
        }

        #[test]
        fn nu_of_set_matches_materialized(seed in any::<u64>(), k in 1u32..=3, mask in any::<u64>()) {
            let g = shape(3, 3);
            let signs = sample_signs_with(k, g, SignLaw::Dyadic { zero_bits: 2 }, RandomStream::new(seed, 1)).unwrap();
            let a = VertexSet::from_predicate(g, |v| (mask >> (v % 64)) & 1 == 1);
            let mu = build_mu_k(&signs);
            let nu = build_nu_k(&mu);
            prop_assert_eq!(mu_of_set(&signs, &a).unwrap(), measure_of_set(&mu, &a).unwrap());
            prop_assert_eq!(nu_of_set(&signs, &a).unwrap(), measure_of_set(&nu, &a).unwrap());
        }
    }
}
