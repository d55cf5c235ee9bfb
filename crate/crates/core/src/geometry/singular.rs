use super::GeometryError;

/// Axis-aligned affine piece: fixed coordinates on some axes, a closed
/// interval on every remaining axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    /// `(axis, value)` for each axis the piece is orthogonal to.
    pub fixed: Vec<(usize, f64)>,
    /// `(axis, lo, hi)` for each axis the piece extends along.
    pub free: Vec<(usize, f64, f64)>,
}

impl AffinePiece {
    pub fn point(x: &[f64]) -> Self {
        Self {
            fixed: x.iter().copied().enumerate().collect(),
            free: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    /// Per-axis distances from `x` to the piece.
    pub fn axis_gaps(&self, x: &[f64], out: &mut [f64]) {
        for &(a, c) in &self.fixed {
            out[a] = (x[a] - c).abs();
        }
        for &(a, lo, hi) in &self.free {
            out[a] = if x[a] < lo {
                lo - x[a]
            } else if x[a] > hi {
                x[a] - hi
            } else {
                0.0
            };
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.axis_gaps(x, &mut g);
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sup_distance(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.axis_gaps(x, &mut g);
        g.iter().fold(0.0, |a: f64, &b| a.max(b))
    }
}

/// Finite union of axis-aligned affine pieces of a common dimension `rank`.
/// Rank `-1` is the empty set.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredSingularSet {
    m: usize,
    rank: i32,
    pieces: Vec<AffinePiece>,
}

impl StructuredSingularSet {
    pub fn empty(m: usize) -> Self {
        Self {
            m,
            rank: -1,
            pieces: Vec::new(),
        }
    }

    pub fn new(m: usize, rank: i32, pieces: Vec<AffinePiece>) -> Result<Self, GeometryError> {
        if rank < -1 || rank >= m as i32 {
            return Err(GeometryError::InvalidArgument(format!("rank {rank} outside -1..{m}")));
        }
        if rank == -1 && !pieces.is_empty() {
            return Err(GeometryError::InvalidArgument("rank -1 must have no pieces".into()));
        }
        for p in &pieces {
            if p.dim() as i32 != rank || p.fixed.len() + p.free.len() != m {
                return Err(GeometryError::InvalidArgument(format!(
                    "piece with {} fixed and {} free axes does not match rank {rank} in dimension {m}",
                    p.fixed.len(),
                    p.free.len()
                )));
            }
            let mut seen = vec![false; m];
            for a in p.fixed.iter().map(|f| f.0).chain(p.free.iter().map(|f| f.0)) {
                if a >= m || seen[a] {
                    return Err(GeometryError::InvalidArgument(format!(
                        "axis {a} repeated or out of range"
                    )));
                }
                seen[a] = true;
            }
        }
        Ok(Self { m, rank, pieces })
    }

    pub fn points(m: usize, pts: &[Vec<f64>]) -> Self {
        if pts.is_empty() {
            return Self::empty(m);
        }
        Self {
            m,
            rank: 0,
            pieces: pts.iter().map(|p| AffinePiece::point(p)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn rank(&self) -> i32 {
        self.rank
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Euclidean distance from `x`; `+inf` for the empty set.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.distance(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn sup_distance(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.sup_distance(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when some piece comes closer than `h[a]` along every axis `a`,
    /// i.e. `x` is a corner of a grid cell of size `h` meeting the set.
    pub fn within_cell(&self, x: &[f64], h: &[f64]) -> bool {
        let mut g = vec![0.0; x.len()];
        self.pieces.iter().any(|p| {
            p.axis_gaps(x, &mut g);
            g.iter().zip(h).all(|(d, hh)| *d < hh * (1.0 - 1e-9))
        })
    }

    /// Union with another set of the same rank.
    pub fn union(&self, other: &Self) -> Self {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        assert_eq!(self.rank, other.rank, "union of different ranks");
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Self {
            m: self.m,
            rank: self.rank,
            pieces,
        }
    }
}
