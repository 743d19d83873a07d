//! Column readout of a passive crossbar: ideal Kirchhoff sums and full nodal
//! analysis with wire resistance and floating lines.
//!
//! Network layout with line resistance `r > 0`: every cell `(i, j)` has a row
//! wire node `R(i,j)` and a column wire node `C(i,j)` joined by the cell
//! conductance. Row drivers sit left of column 0 and connect to `R(i,0)`
//! through one segment; column sense nodes sit below row `n-1` and connect to
//! `C(n-1,j)` through one segment. Adjacent wire nodes are joined by `1/r`.
//! With `r = 0` each row and column wire collapses to a single node.
//!
//! Driven rows and virtual-ground columns are fixed potentials and drop out
//! of the system; floating lines stay as unknowns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymmetricSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RowDrive {
    Driven(f64),
    Floating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnSense {
    VirtualGround,
    Floating,
}

/// Termination of lines that a read does not select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Termination {
    /// Every row is driven (0 V rows held at ground by their DAC) and every
    /// column is held at virtual ground.
    VirtualGround,
    /// Rows whose voltage is exactly 0 V are left floating; every column is
    /// sensed at virtual ground.
    #[default]
    FloatingUnselected,
}

impl Termination {
    pub fn row_drives(&self, voltages: &[f64]) -> Vec<RowDrive> {
        voltages
            .iter()
            .map(|&v| match self {
                Termination::FloatingUnselected if v == 0.0 => RowDrive::Floating,
                _ => RowDrive::Driven(v),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutKind {
    Ideal,
    Nodal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnCurrents {
    pub amps: Vec<f64>,
    pub readout: ReadoutKind,
}

/// Snapshot of read conductances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceGrid {
    pub rows: usize,
    pub cols: usize,
    pub g: Vec<f64>,
}

impl ConductanceGrid {
    pub fn new(rows: usize, cols: usize, g: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || g.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{rows}x{cols} conductances"),
                found: g.len().to_string(),
            });
        }
        if g.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("conductances must be finite and >= 0"));
        }
        Ok(ConductanceGrid { rows, cols, g })
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.cols + j]
    }

    fn check_rows(&self, len: usize) -> Result<()> {
        if len != self.rows {
            return Err(Error::DimensionMismatch {
                expected: format!("{} row voltages", self.rows),
                found: len.to_string(),
            });
        }
        Ok(())
    }
}

/// `I_j = sum_i g_ij v_i`.
pub fn column_currents_ideal(grid: &ConductanceGrid, voltages: &[f64]) -> Result<ColumnCurrents> {
    grid.check_rows(voltages.len())?;
    let mut amps = vec![0.0; grid.cols];
    for (j, out) in amps.iter_mut().enumerate() {
        let mut s = 0.0;
        for (i, v) in voltages.iter().enumerate() {
            s += grid.at(i, j) * v;
        }
        *out = s;
    }
    Ok(ColumnCurrents { amps, readout: ReadoutKind::Ideal })
}

pub fn column_currents_nodal(
    grid: &ConductanceGrid,
    line_resistance: f64,
    voltages: &[f64],
    termination: Termination,
) -> Result<ColumnCurrents> {
    grid.check_rows(voltages.len())?;
    let rows = termination.row_drives(voltages);
    let cols = vec![ColumnSense::VirtualGround; grid.cols];
    Ok(solve_network(grid, line_resistance, &rows, &cols)?.currents)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalSolution {
    pub currents: ColumnCurrents,
    pub residual: f64,
    pub unknowns: usize,
}

/// Assembled conductance system: `matrix * v = rhs` over the unknown nodes.
#[derive(Debug, Clone)]
pub struct NodalSystem {
    pub matrix: SymmetricSystem,
    pub rhs: Vec<f64>,
    layout: Layout,
}

#[derive(Debug, Clone)]
enum Layout {
    /// Zero line resistance: unknown index per row / column wire.
    Lumped { row: Vec<Option<usize>> },
    /// Distributed wires: `R(i,j)` and `C(i,j)` are all unknowns.
    Distributed { row_major: bool },
}

fn distributed_index(rows: usize, cols: usize, row_major: bool, i: usize, j: usize) -> usize {
    let p = if row_major { i * cols + j } else { j * rows + i };
    2 * p
}

struct UnionFind {
    parent: Vec<usize>,
    anchored: Vec<bool>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), anchored: vec![false; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
            self.anchored[rb] |= self.anchored[ra];
        }
    }

    fn anchor(&mut self, a: usize) {
        let r = self.find(a);
        self.anchored[r] = true;
    }

    fn all_anchored(&mut self) -> bool {
        (0..self.parent.len()).all(|x| {
            let r = self.find(x);
            self.anchored[r]
        })
    }
}

/// Build the conductance system for a read.
pub fn assemble(
    grid: &ConductanceGrid,
    line_resistance: f64,
    rows: &[RowDrive],
    cols: &[ColumnSense],
) -> Result<NodalSystem> {
    let (n, m) = (grid.rows, grid.cols);
    grid.check_rows(rows.len())?;
    if cols.len() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("{m} column terminations"),
            found: cols.len().to_string(),
        });
    }
    if !(line_resistance >= 0.0 && line_resistance.is_finite()) {
        return Err(Error::invalid("line resistance must be finite and >= 0"));
    }

    if line_resistance == 0.0 {
        let mut next = 0;
        let mut row_idx = vec![None; n];
        for (i, d) in rows.iter().enumerate() {
            if *d == RowDrive::Floating {
                row_idx[i] = Some(next);
                next += 1;
            }
        }
        let mut col_idx = vec![None; m];
        for (j, s) in cols.iter().enumerate() {
            if *s == ColumnSense::Floating {
                col_idx[j] = Some(next);
                next += 1;
            }
        }
        let mut a = SymmetricSystem::new(next);
        let mut rhs = vec![0.0; next];
        let mut uf = UnionFind::new(next);
        for i in 0..n {
            for j in 0..m {
                let g = grid.at(i, j);
                if g == 0.0 {
                    continue;
                }
                match (row_idx[i], col_idx[j]) {
                    (Some(r), Some(c)) => {
                        a.stamp(r, c, g);
                        uf.union(r, c);
                    }
                    (Some(r), None) => {
                        // sensed column at 0 V
                        a.stamp_to_fixed(r, g);
                        uf.anchor(r);
                    }
                    (None, Some(c)) => {
                        let RowDrive::Driven(v) = rows[i] else { unreachable!() };
                        a.stamp_to_fixed(c, g);
                        rhs[c] += g * v;
                        uf.anchor(c);
                    }
                    (None, None) => {}
                }
            }
        }
        if !uf.all_anchored() {
            return Err(Error::SingularNetwork(
                "a floating line has no conductive path to a driven or sensed terminal".into(),
            ));
        }
        return Ok(NodalSystem { matrix: a, rhs, layout: Layout::Lumped { row: row_idx } });
    }

    let row_major = m <= n;
    let idx = |i, j| distributed_index(n, m, row_major, i, j);
    let gw = 1.0 / line_resistance;
    let size = 2 * n * m;
    let mut a = SymmetricSystem::new(size);
    let mut rhs = vec![0.0; size];
    let mut uf = UnionFind::new(size);
    for i in 0..n {
        for j in 0..m {
            let (r, c) = (idx(i, j), idx(i, j) + 1);
            let g = grid.at(i, j);
            if g > 0.0 {
                a.stamp(r, c, g);
                uf.union(r, c);
            }
            if j + 1 < m {
                a.stamp(r, idx(i, j + 1), gw);
                uf.union(r, idx(i, j + 1));
            }
            if i + 1 < n {
                a.stamp(c, idx(i + 1, j) + 1, gw);
                uf.union(c, idx(i + 1, j) + 1);
            }
        }
        if let RowDrive::Driven(v) = rows[i] {
            let r = idx(i, 0);
            a.stamp_to_fixed(r, gw);
            rhs[r] += v * gw;
            uf.anchor(r);
        }
    }
    for (j, s) in cols.iter().enumerate() {
        if *s == ColumnSense::VirtualGround {
            let c = idx(n - 1, j) + 1;
            a.stamp_to_fixed(c, gw);
            uf.anchor(c);
        }
    }
    if !uf.all_anchored() {
        return Err(Error::SingularNetwork(
            "a floating wire segment has no conductive path to a driven or sensed terminal".into(),
        ));
    }
    Ok(NodalSystem { matrix: a, rhs, layout: Layout::Distributed { row_major } })
}

/// Solve a read with explicit per-line terminations. Floating columns report
/// zero sense current.
pub fn solve_network(
    grid: &ConductanceGrid,
    line_resistance: f64,
    rows: &[RowDrive],
    cols: &[ColumnSense],
) -> Result<NodalSolution> {
    let system = assemble(grid, line_resistance, rows, cols)?;
    let (x, residual) = system.matrix.solve(&system.rhs)?;
    let (n, m) = (grid.rows, grid.cols);
    let mut amps = vec![0.0; m];
    match &system.layout {
        Layout::Lumped { row, .. } => {
            for (j, out) in amps.iter_mut().enumerate() {
                if cols[j] == ColumnSense::Floating {
                    continue;
                }
                let mut s = 0.0;
                for i in 0..n {
                    let v = match (rows[i], row[i]) {
                        (RowDrive::Driven(v), _) => v,
                        (RowDrive::Floating, Some(k)) => x[k],
                        (RowDrive::Floating, None) => unreachable!(),
                    };
                    s += grid.at(i, j) * v;
                }
                *out = s;
            }
        }
        Layout::Distributed { row_major } => {
            for (j, out) in amps.iter_mut().enumerate() {
                if cols[j] == ColumnSense::VirtualGround {
                    *out = x[distributed_index(n, m, *row_major, n - 1, j) + 1] / line_resistance;
                }
            }
        }
    }
    Ok(NodalSolution {
        currents: ColumnCurrents { amps, readout: ReadoutKind::Nodal },
        residual,
        unknowns: system.matrix.len(),
    })
}
