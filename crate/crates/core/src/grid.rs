//! Model parameter, uniform partitions and sampled paths.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::format_f64;

/// Hurst exponent, validated to lie in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!(
                "Hurst parameter must lie in (0, 1), got {h}"
            )))
        }
    }

    /// Same as [`HurstParam::new`] but additionally requires `h < 1/2`, the
    /// range where the Volterra kernel expressions used here are valid.
    pub fn rough(h: f64) -> Result<Self> {
        let h = Self::new(h)?;
        h.require_rough()?;
        Ok(h)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn require_rough(self) -> Result<()> {
        if self.0 < 0.5 {
            Ok(())
        } else {
            Err(Error::Gate(format!("requires H < 1/2, got H = {}", self.0)))
        }
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;

    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

/// Partition `t_i = i T / n`, `i = 0..=n`, of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    horizon: f64,
    n: usize,
}

impl UniformGrid {
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if n == 0 {
            return Err(Error::Domain("grid needs at least one cell".into()));
        }
        Ok(Self { horizon, n })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of cells.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n as f64
    }

    /// Node `t_i`. The last node is exactly `T`.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n);
        if i == self.n {
            self.horizon
        } else {
            i as f64 * self.horizon / self.n as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(|i| self.node(i))
    }

    /// Index of the node equal to `t`, if `t` is a node up to round-off.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.horizon * self.n as f64;
        let i = x.round();
        if i < 0.0 || i > self.n as f64 || (x - i).abs() > 1e-9 * self.n as f64 {
            None
        } else {
            Some(i as usize)
        }
    }
}

/// One-dimensional process sampled at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealPath {
    grid: UniformGrid,
    values: Vec<f64>,
}

impl RealPath {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return Err(Error::Domain(format!(
                "path has {} values, grid needs {}",
                values.len(),
                grid.n() + 1
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "value"])?;
        for (t, v) in self.grid.nodes().zip(&self.values) {
            w.write_record([format_f64(t), format_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `d`-dimensional process on a grid, stored row-major: row `i` is the
/// position at `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPath {
    grid: UniformGrid,
    dim: usize,
    values: Vec<f64>,
}

impl MultiPath {
    pub fn new(grid: UniformGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        if values.len() != (grid.n() + 1) * dim {
            return Err(Error::Domain(format!(
                "multipath has {} values, expected {}",
                values.len(),
                (grid.n() + 1) * dim
            )));
        }
        Ok(Self { grid, dim, values })
    }

    /// Assemble from per-component paths sharing one grid.
    pub fn from_columns(columns: &[RealPath]) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::Domain("dimension must be at least 1".into()))?;
        let grid = *first.grid();
        let dim = columns.len();
        let mut values = vec![0.0; (grid.n() + 1) * dim];
        for (j, col) in columns.iter().enumerate() {
            if col.grid() != &grid {
                return Err(Error::Domain("columns live on different grids".into()));
            }
            for (i, v) in col.values().iter().enumerate() {
                values[i * dim + j] = *v;
            }
        }
        Ok(Self { grid, dim, values })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> RealPath {
        let values = self.rows().map(|r| r[j]).collect();
        RealPath {
            grid: self.grid,
            values,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|j| format!("v{j}")));
        w.write_record(&header)?;
        for (t, row) in self.grid.nodes().zip(self.rows()) {
            let mut rec = vec![format_f64(t)];
            rec.extend(row.iter().map(|&v| format_f64(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurst_validation() {
        assert!(HurstParam::new(0.0).is_err());
        assert!(HurstParam::new(1.0).is_err());
        assert!(HurstParam::new(0.3).is_ok());
        assert!(matches!(HurstParam::rough(0.5), Err(Error::Gate(_))));
    }

    #[test]
    fn grid_nodes_hit_endpoints() {
        let g = UniformGrid::new(0.7, 3).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(3), 0.7);
        let nodes: Vec<f64> = g.nodes().collect();
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.index_of(0.7), Some(3));
        assert_eq!(g.index_of(0.3), None);
        assert!(UniformGrid::new(0.0, 3).is_err());
        assert!(UniformGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = UniformGrid::new(1.0, 2).unwrap();
        let p = RealPath::new(g, vec![0.0, 1.5, -0.25]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,value\n0,0\n0.5,1.5\n1,-0.25\n"
        );

        let m = MultiPath::new(g, 2, vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,v1,v2\n0,0,0\n0.5,1,2\n1,3,4\n"
        );
        assert_eq!(m.column(1).values(), &[0.0, 2.0, 4.0]);
    }
}
