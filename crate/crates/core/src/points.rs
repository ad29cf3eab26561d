//! Row-major point sets and columnar sample tables.

use crate::error::{Error, Result};

/// A set of points in R^dim, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("points must have dimension >= 1"));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(Points { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Points {
            dim: dim.max(1),
            data: Vec::new(),
        }
    }

    /// One-dimensional points from a slice of scalars.
    pub fn from_scalars(values: &[f64]) -> Self {
        Points {
            dim: 1,
            data: values.to_vec(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or(Error::EmptyInput("rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Points::new(dim, data)
    }

    /// Stacks equally long columns side by side.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let first = columns.first().ok_or(Error::EmptyInput("columns"))?;
        let n = first.len();
        let dim = columns.len();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            for c in columns {
                if c.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: c.len(),
                    });
                }
                data.push(c[i]);
            }
        }
        Points::new(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.len(),
            });
        }
        self.data.extend_from_slice(p);
        Ok(())
    }

    /// Vertical concatenation `[self; other]`.
    pub fn concat(&self, other: &Points) -> Result<Points> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Points {
            dim: self.dim,
            data,
        })
    }

    pub fn select(&self, idx: &[usize]) -> Points {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Points {
            dim: self.dim,
            data,
        }
    }

    /// Drops points lying within `tol` (Euclidean) of an earlier point.
    pub fn dedup(&self, tol: f64) -> Points {
        let mut keep: Vec<usize> = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let p = self.row(i);
            if !keep.iter().any(|&j| sq_dist(p, self.row(j)).sqrt() <= tol) {
                keep.push(i);
            }
        }
        self.select(&keep)
    }

    /// Greedy farthest-point subsample of at most `cap` points, starting from row 0.
    pub fn farthest_point_subsample(&self, cap: usize) -> Points {
        let n = self.len();
        if n <= cap || cap == 0 {
            return self.clone();
        }
        let mut chosen = vec![0usize];
        let mut best: Vec<f64> = (0..n).map(|i| sq_dist(self.row(i), self.row(0))).collect();
        while chosen.len() < cap {
            let (next, _) = best
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |acc, (i, &d)| {
                    if d > acc.1 {
                        (i, d)
                    } else {
                        acc
                    }
                });
            chosen.push(next);
            for i in 0..n {
                let d = sq_dist(self.row(i), self.row(next));
                if d < best[i] {
                    best[i] = d;
                }
            }
        }
        chosen.sort_unstable();
        self.select(&chosen)
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance; falls back to 1.0 for degenerate sets.
pub fn median_heuristic(points: &Points) -> f64 {
    let n = points.len();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(sq_dist(points.row(i), points.row(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let m = if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        0.5 * (d[d.len() / 2 - 1] + d[d.len() / 2])
    };
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

/// Columnar sample table with named columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: columns.len(),
            });
        }
        if let Some(first) = columns.first() {
            for c in &columns {
                if c.len() != first.len() {
                    return Err(Error::DimensionMismatch {
                        expected: first.len(),
                        got: c.len(),
                    });
                }
            }
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::invalid(format!("duplicate column `{n}`")));
            }
        }
        Ok(Dataset { names, columns })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Gathers the named columns into a point set (one row per sample).
    pub fn points(&self, names: &[String]) -> Result<Points> {
        if names.is_empty() {
            return Err(Error::EmptyInput("column selection"));
        }
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>>>()?;
        if self.is_empty() {
            return Ok(Points::empty(names.len()));
        }
        Points::from_columns(&cols)
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}
