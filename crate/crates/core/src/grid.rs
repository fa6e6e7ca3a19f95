//! Geometry of the grid `[2^n]^d`.
//!
//! Points are addressed either by 1-based coordinates ([`Point`]) or by a
//! linear index in `0..2^{nd}`. The linear order is row-major with the first
//! coordinate varying fastest: coordinate `i` (0-based axis) of index `v` is
//! `(v >> (n·i)) & (2^n − 1)`, plus one. This order is frozen; vertex-set and
//! measure files depend on it.

use std::collections::VecDeque;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dyadic::Dyadic;

/// Largest supported `n·d`; vertex sets use one bit per vertex.
pub const MAX_VERTEX_BITS: u32 = 27;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("grid dimension must be at least 1")]
    ZeroDimension,
    #[error("grid [2^{n}]^{d} exceeds the supported 2^{limit} vertices")]
    TooLarge { n: u32, d: u32, limit: u32 },
    #[error("point {coords:?} is not a point of [{side}]^{d}")]
    PointOutOfRange { coords: Vec<u32>, side: u64, d: u32 },
    #[error("cube scale k={k} outside [0, {n}]")]
    ScaleOutOfRange { k: u32, n: u32 },
    #[error("distance to an empty vertex set is undefined")]
    EmptySet,
    #[error("edge count of [2^{n}]^{d} overflows 64 bits")]
    Overflow { n: u32, d: u32 },
    #[error("operands live on different grids")]
    ShapeMismatch,
    #[error("malformed vertex-set file: {0}")]
    Format(String),
}

/// The grid `[2^n]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    n: u32,
    d: u32,
}

impl GridShape {
    pub fn new(n: u32, d: u32) -> Result<Self, GridError> {
        if d == 0 {
            return Err(GridError::ZeroDimension);
        }
        match n.checked_mul(d) {
            Some(bits) if bits <= MAX_VERTEX_BITS => Ok(GridShape { n, d }),
            _ => Err(GridError::TooLarge {
                n,
                d,
                limit: MAX_VERTEX_BITS,
            }),
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Side length `2^n`.
    pub fn side(&self) -> u64 {
        1 << self.n
    }

    /// Vertex count `2^{nd}`.
    pub fn len(&self) -> usize {
        1 << (self.n * self.d)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Graph diameter `d(2^n − 1)`.
    pub fn diameter(&self) -> u64 {
        self.d as u64 * (self.side() - 1)
    }

    pub fn edge_count(&self) -> u64 {
        edge_count(self.n, self.d).expect("shape construction bounds the edge count")
    }

    #[inline]
    pub fn stride(&self, axis: u32) -> usize {
        1 << (self.n * axis)
    }

    /// 0-based coordinate of `idx` along `axis`.
    #[inline]
    pub fn coord(&self, idx: usize, axis: u32) -> u32 {
        ((idx >> (self.n * axis)) & ((1usize << self.n) - 1)) as u32
    }

    pub fn point(&self, idx: usize) -> Point {
        Point {
            coords: (0..self.d).map(|a| self.coord(idx, a) + 1).collect(),
        }
    }

    pub fn index(&self, p: &Point) -> Result<usize, GridError> {
        self.check_point(p)?;
        Ok(p
            .coords
            .iter()
            .enumerate()
            .map(|(a, &c)| ((c - 1) as usize) << (self.n * a as u32))
            .sum())
    }

    fn check_point(&self, p: &Point) -> Result<(), GridError> {
        let ok = p.coords.len() == self.d as usize
            && p.coords.iter().all(|&c| c >= 1 && (c as u64) <= self.side());
        if ok {
            Ok(())
        } else {
            Err(GridError::PointOutOfRange {
                coords: p.coords.clone(),
                side: self.side(),
                d: self.d,
            })
        }
    }

    /// Calls `f` on every grid neighbour of `idx`, axis by axis, lower
    /// neighbour first.
    #[inline]
    pub fn for_each_neighbor(&self, idx: usize, mut f: impl FnMut(usize)) {
        let top = (1u32 << self.n) - 1;
        for a in 0..self.d {
            let c = self.coord(idx, a);
            let s = self.stride(a);
            if c > 0 {
                f(idx - s);
            }
            if c < top {
                f(idx + s);
            }
        }
    }

    /// Calls `f(u, v, axis)` once per edge `{u, v}` with `v = u + e_axis`.
    pub fn for_each_edge(&self, mut f: impl FnMut(usize, usize, u32)) {
        let top = (1u32 << self.n) - 1;
        for a in 0..self.d {
            let s = self.stride(a);
            for u in 0..self.len() {
                if self.coord(u, a) < top {
                    f(u, u + s, a);
                }
            }
        }
    }

    pub fn neighbors(&self, p: &Point) -> Result<Vec<Point>, GridError> {
        let idx = self.index(p)?;
        let mut out = Vec::with_capacity(2 * self.d as usize);
        self.for_each_neighbor(idx, |v| out.push(self.point(v)));
        Ok(out)
    }

    pub fn degree(&self, idx: usize) -> u32 {
        let mut deg = 0;
        self.for_each_neighbor(idx, |_| deg += 1);
        deg
    }

    /// ℓ1 (= graph) distance between two linear indices.
    pub fn l1_distance_idx(&self, u: usize, v: usize) -> u64 {
        (0..self.d)
            .map(|a| (self.coord(u, a) as i64 - self.coord(v, a) as i64).unsigned_abs())
            .sum()
    }

    /// Multi-source BFS distances from `sources`; unreached entries (only
    /// possible with no sources) stay `u32::MAX`.
    pub fn bfs_from(&self, sources: impl IntoIterator<Item = usize>) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        let mut queue = VecDeque::new();
        for s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let du = dist[u] + 1;
            self.for_each_neighbor(u, |v| {
                if dist[v] == u32::MAX {
                    dist[v] = du;
                    queue.push_back(v);
                }
            });
        }
        dist
    }

    /// Exact graph distance from every point to the nearest member of `set`.
    pub fn dist_to_set(&self, set: &VertexSet) -> Result<Vec<u32>, GridError> {
        if set.shape != *self {
            return Err(GridError::ShapeMismatch);
        }
        if set.is_empty() {
            return Err(GridError::EmptySet);
        }
        Ok(self.bfs_from(set.iter()))
    }

    fn check_scale(&self, k: u32) -> Result<(), GridError> {
        if k > self.n {
            Err(GridError::ScaleOutOfRange { k, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Number of cubes in `D_k`, `2^{kd}`.
    pub fn cube_count(&self, k: u32) -> usize {
        1 << (k * self.d)
    }

    /// All `2^{kd}` cubes of scale `k`, ordered by cube index.
    pub fn cubes(&self, k: u32) -> Result<Vec<DyadicCube>, GridError> {
        self.check_scale(k)?;
        Ok((0..self.cube_count(k))
            .map(|c| DyadicCube::from_index(*self, k, c))
            .collect())
    }

    pub fn cube_of(&self, p: &Point, k: u32) -> Result<DyadicCube, GridError> {
        self.check_scale(k)?;
        let idx = self.index(p)?;
        Ok(DyadicCube::from_index(*self, k, self.cube_index_of(idx, k)))
    }

    /// Index of the scale-`k` cube containing vertex `idx`. Cube indices use
    /// the same row-major order as vertices, on the `2^k`-sided cell grid.
    #[inline]
    pub fn cube_index_of(&self, idx: usize, k: u32) -> usize {
        let shift = self.n - k;
        let mut c = 0;
        for a in 0..self.d {
            c |= ((self.coord(idx, a) >> shift) as usize) << (k * a);
        }
        c
    }

    /// Linear index of the first point of each row (along axis 0) of a cube.
    /// Rows have length `2^{n−k}` and are contiguous in the linear order.
    pub fn cube_rows(&self, k: u32, cube: usize) -> Vec<usize> {
        let side = 1usize << (self.n - k);
        let mask = (1usize << k) - 1;
        let mut base = 0usize;
        for a in 0..self.d {
            let j = (cube >> (k * a)) & mask;
            base += (j * side) << (self.n * a);
        }
        let mut rows = vec![base];
        for a in 1..self.d {
            let s = self.stride(a);
            let prev = std::mem::take(&mut rows);
            rows.reserve(prev.len() * side);
            for r in prev {
                for o in 0..side {
                    rows.push(r + o * s);
                }
            }
        }
        rows
    }

    pub fn cube_points(&self, k: u32, cube: usize) -> Vec<usize> {
        let side = 1usize << (self.n - k);
        self.cube_rows(k, cube)
            .into_iter()
            .flat_map(|r| r..r + side)
            .collect()
    }

    /// Set-to-set graph distance from cube `q0` to every cube of `D_k`,
    /// computed by one multi-source BFS from the points of `q0`.
    pub fn cube_distances(&self, k: u32, q0: usize) -> Vec<u64> {
        let dist = self.bfs_from(self.cube_points(k, q0));
        let mut best = vec![u64::MAX; self.cube_count(k)];
        for (v, &dv) in dist.iter().enumerate() {
            let c = self.cube_index_of(v, k);
            best[c] = best[c].min(dv as u64);
        }
        best
    }

    pub fn full_set(&self) -> VertexSet {
        VertexSet::from_predicate(*self, |_| true)
    }

    pub fn empty_set(&self) -> VertexSet {
        VertexSet::from_predicate(*self, |_| false)
    }
}

/// `d·2^{n(d−1)}·(2^n − 1)`, with overflow reported.
pub fn edge_count(n: u32, d: u32) -> Result<u64, GridError> {
    let overflow = GridError::Overflow { n, d };
    if d == 0 {
        return Ok(0);
    }
    let side = 1u64.checked_shl(n).filter(|_| n < 64).ok_or(overflow.clone())?;
    let face_bits = n.checked_mul(d - 1).filter(|&b| b < 64).ok_or(overflow.clone())?;
    (d as u64)
        .checked_mul(1u64 << face_bits)
        .and_then(|x| x.checked_mul(side - 1))
        .ok_or(overflow)
}

/// A point of the grid with 1-based coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub coords: Vec<u32>,
}

impl Point {
    pub fn new(coords: impl Into<Vec<u32>>) -> Self {
        Point {
            coords: coords.into(),
        }
    }
}

/// Graph distance between two points of the same grid.
pub fn l1_distance(u: &Point, v: &Point) -> u64 {
    u.coords
        .iter()
        .zip(&v.coords)
        .map(|(&a, &b)| (a as i64 - b as i64).unsigned_abs())
        .sum()
}

/// A dyadic cube `Π I^{(k)}_{j_i}` with 1-based cell coordinates `j_i ∈ [1, 2^k]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicCube {
    pub k: u32,
    pub cell: Vec<u32>,
}

impl DyadicCube {
    pub fn from_index(shape: GridShape, k: u32, index: usize) -> Self {
        let mask = (1usize << k) - 1;
        DyadicCube {
            k,
            cell: (0..shape.d())
                .map(|a| ((index >> (k * a)) & mask) as u32 + 1)
                .collect(),
        }
    }

    pub fn index(&self) -> usize {
        self.cell
            .iter()
            .enumerate()
            .map(|(a, &j)| ((j - 1) as usize) << (self.k * a as u32))
            .sum()
    }

    /// Number of points, `2^{(n−k)d}`.
    pub fn point_count(&self, shape: &GridShape) -> usize {
        1 << ((shape.n() - self.k) * shape.d())
    }

    pub fn to_set(&self, shape: GridShape) -> VertexSet {
        VertexSet::from_indices(shape, shape.cube_points(self.k, self.index()))
    }
}

/// Exact count of cubes `Q ∈ D_k` with `dist(Q0, Q) ≤ c·d·2^{n−k}`.
pub fn cube_distance_count(
    shape: &GridShape,
    q0: &DyadicCube,
    c: &BigRational,
) -> Result<u64, GridError> {
    shape.check_scale(q0.k)?;
    let dists = shape.cube_distances(q0.k, q0.index());
    Ok(count_within(shape, q0.k, &dists, c))
}

/// Counts entries of a cube-distance table within `c·d·2^{n−k}`.
pub fn count_within(shape: &GridShape, k: u32, dists: &[u64], c: &BigRational) -> u64 {
    // dist ≤ (num/den)·d·2^{n−k}  ⟺  dist·den ≤ num·d·2^{n−k}
    let limit = c.numer() * BigInt::from(shape.d()) * (BigInt::from(1u64) << (shape.n() - k));
    let den = c.denom();
    dists
        .iter()
        .filter(|&&dist| BigInt::from(dist) * den <= limit)
        .count() as u64
}

/// The volume bound `(2e(c+2))^d` on the number of nearby cubes.
pub fn cube_count_bound(c: f64, d: u32) -> f64 {
    (2.0 * std::f64::consts::E * (c + 2.0)).powi(d as i32)
}

/// A subset of the grid, one bit per vertex, with cached cardinality.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VertexSet {
    shape: GridShape,
    bits: FixedBitSet,
    len: usize,
}

impl VertexSet {
    pub fn from_bits(shape: GridShape, bits: FixedBitSet) -> Result<Self, GridError> {
        if bits.len() != shape.len() {
            return Err(GridError::ShapeMismatch);
        }
        let len = bits.count_ones(..);
        Ok(VertexSet { shape, bits, len })
    }

    pub fn from_indices(shape: GridShape, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut bits = FixedBitSet::with_capacity(shape.len());
        for i in indices {
            bits.insert(i);
        }
        let len = bits.count_ones(..);
        VertexSet { shape, bits, len }
    }

    pub fn from_predicate(shape: GridShape, mut pred: impl FnMut(usize) -> bool) -> Self {
        Self::from_indices(shape, (0..shape.len()).filter(|&v| pred(v)))
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.bits.contains(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.ones()
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.bits
    }

    pub fn complement(&self) -> VertexSet {
        let mut bits = self.bits.clone();
        bits.toggle_range(..);
        VertexSet {
            shape: self.shape,
            bits,
            len: self.shape.len() - self.len,
        }
    }

    pub fn union(&self, other: &VertexSet) -> Result<VertexSet, GridError> {
        if self.shape != other.shape {
            return Err(GridError::ShapeMismatch);
        }
        let mut bits = self.bits.clone();
        bits.union_with(&other.bits);
        VertexSet::from_bits(self.shape, bits)
    }

    /// `|A ∩ Q|` for the scale-`k` cube with index `cube`.
    pub fn count_in_cube(&self, k: u32, cube: usize) -> u64 {
        let side = 1usize << (self.shape.n() - k);
        if side == 1 {
            let v = self.shape.cube_rows(k, cube)[0];
            return self.contains(v) as u64;
        }
        self.shape
            .cube_rows(k, cube)
            .into_iter()
            .map(|r| self.bits.count_ones(r..r + side) as u64)
            .sum()
    }

    /// Text form: `grid n=<n> d=<d>` followed by one line of hex. Byte `j`
    /// holds vertices `8j..8j+8`, least significant bit first.
    pub fn to_text(&self) -> String {
        let mut bytes = vec![0u8; self.shape.len().div_ceil(8)];
        for v in self.iter() {
            bytes[v / 8] |= 1 << (v % 8);
        }
        let mut out = String::new();
        let _ = writeln!(out, "grid n={} d={}", self.shape.n(), self.shape.d());
        out.push_str(&hex::encode(bytes));
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| GridError::Format("missing header".into()))?;
        let fields = parse_header(header, "grid", &["n", "d"])?;
        let shape = GridShape::new(fields[0] as u32, fields[1] as u32)?;
        let body = lines.next().unwrap_or("");
        let bytes = hex::decode(body).map_err(|e| GridError::Format(e.to_string()))?;
        if bytes.len() != shape.len().div_ceil(8) {
            return Err(GridError::Format(format!(
                "expected {} bytes of mask, found {}",
                shape.len().div_ceil(8),
                bytes.len()
            )));
        }
        let mut indices = Vec::new();
        for (j, &b) in bytes.iter().enumerate() {
            for bit in 0..8 {
                if b >> bit & 1 == 1 {
                    let v = 8 * j + bit;
                    if v >= shape.len() {
                        return Err(GridError::Format("mask bit beyond grid".into()));
                    }
                    indices.push(v);
                }
            }
        }
        Ok(VertexSet::from_indices(shape, indices))
    }
}

/// Parses `tag key=value ...` headers with integer values in the given order.
pub(crate) fn parse_header(line: &str, tag: &str, keys: &[&str]) -> Result<Vec<i64>, GridError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(GridError::Format(format!("expected `{tag}` header, got `{line}`")));
    }
    let pairs: Vec<(&str, &str)> = parts.filter_map(|p| p.split_once('=')).collect();
    keys.iter()
        .map(|key| {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .and_then(|(_, v)| v.parse::<i64>().ok())
                .ok_or_else(|| GridError::Format(format!("header lacks integer `{key}=`")))
        })
        .collect()
}

/// `Vol(A) = |A|·2^{−nd}`.
pub fn vol(a: &VertexSet) -> Dyadic {
    let s = a.shape();
    Dyadic::new(a.len() as i128, (s.n() * s.d()) as i32)
}

/// Number of edges with exactly one endpoint in `a`.
pub fn boundary_edges(a: &VertexSet) -> u64 {
    let shape = a.shape();
    let top = (1u32 << shape.n()) - 1;
    let mut count = 0u64;
    for axis in 0..shape.d() {
        let s = shape.stride(axis);
        for u in 0..shape.len() {
            if shape.coord(u, axis) < top && a.contains(u) != a.contains(u + s) {
                count += 1;
            }
        }
    }
    count
}

/// `Per(A) = (1/d)·2^{−n(d−1)}·|∂A|`.
pub fn per(a: &VertexSet) -> BigRational {
    per_from_boundary(&a.shape(), boundary_edges(a))
}

pub fn per_from_boundary(shape: &GridShape, boundary: u64) -> BigRational {
    let den = BigInt::from(shape.d()) << (shape.n() * (shape.d() - 1)) as usize;
    BigRational::new(BigInt::from(boundary), den)
}
