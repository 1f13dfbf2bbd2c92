use std::f64::consts::PI;

use crate::dsl::Topology;

use super::GeometryError;

/// Minimum node count along a compact axis.
pub const MIN_COMPACT_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisKind {
    Periodic,
    /// Closed interval including both end points.
    Line,
    /// Offset colatitude nodes theta_j = (j + 1/2) h with h = pi / n.
    Polar { partner: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub kind: AxisKind,
    pub n: usize,
    pub lo: f64,
    pub h: f64,
}

impl Axis {
    pub fn periodic(lo: f64, period: f64, n: usize) -> Axis {
        Axis { kind: AxisKind::Periodic, n, lo, h: period / n as f64 }
    }

    pub fn line(lo: f64, hi: f64, n: usize) -> Axis {
        Axis { kind: AxisKind::Line, n, lo, h: if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 } }
    }

    pub fn polar(partner: usize, n: usize) -> Axis {
        Axis { kind: AxisKind::Polar { partner }, n, lo: 0.0, h: PI / n as f64 }
    }

    pub fn coord(&self, i: usize) -> f64 {
        match self.kind {
            AxisKind::Polar { .. } => (i as f64 + 0.5) * self.h,
            _ => self.lo + i as f64 * self.h,
        }
    }

    pub fn is_compact(&self) -> bool {
        !matches!(self.kind, AxisKind::Line)
    }
}

/// Tensor-product grid over one chart. Flat index is row-major with the last
/// axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartGrid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl ChartGrid {
    pub fn new(axes: Vec<Axis>) -> Result<ChartGrid, GeometryError> {
        if axes.is_empty() {
            return Err(GeometryError::Grid("grid needs at least one axis".into()));
        }
        for (a, ax) in axes.iter().enumerate() {
            match ax.kind {
                AxisKind::Line if ax.n < 1 => {
                    return Err(GeometryError::Grid(format!("axis {a} has no nodes")));
                }
                AxisKind::Line => {}
                _ if ax.n < MIN_COMPACT_NODES => {
                    return Err(GeometryError::Grid(format!(
                        "compact axis {a} has {} nodes, at least {MIN_COMPACT_NODES} required",
                        ax.n
                    )));
                }
                AxisKind::Polar { partner } => {
                    let ok = axes.get(partner).is_some_and(|p| {
                        p.kind == AxisKind::Periodic && p.n % 2 == 0 && (p.h * p.n as f64 - 2.0 * PI).abs() < 1e-9
                    });
                    if !ok {
                        return Err(GeometryError::Grid(format!(
                            "polar axis {a} needs a 2pi-periodic partner with an even node count"
                        )));
                    }
                }
                AxisKind::Periodic => {}
            }
        }
        let mut strides = vec![1; axes.len()];
        for a in (0..axes.len() - 1).rev() {
            strides[a] = strides[a + 1] * axes[a + 1].n;
        }
        let len = strides[0] * axes[0].n;
        Ok(ChartGrid { axes, strides, len })
    }

    /// Grid matching the chart topology; line axes span their configured extent.
    pub fn from_topology(topology: &[Topology], counts: &[usize]) -> Result<ChartGrid, GeometryError> {
        if topology.len() != counts.len() {
            return Err(GeometryError::Grid(format!(
                "{} node counts given for {} coordinates",
                counts.len(),
                topology.len()
            )));
        }
        let axes = topology
            .iter()
            .zip(counts)
            .map(|(t, &n)| match *t {
                Topology::Periodic { period } => Axis::periodic(0.0, period, n),
                Topology::Line { lo, hi } => Axis::line(lo, hi, n),
                Topology::Polar { partner } => Axis::polar(partner, n),
            })
            .collect();
        ChartGrid::new(axes)
    }

    /// Appends a periodic axis centred on 0: nodes -period/2 + j h.
    pub fn with_circle(&self, period: f64, n: usize) -> Result<ChartGrid, GeometryError> {
        let mut axes = self.axes.clone();
        axes.push(Axis::periodic(-0.5 * period, period, n));
        ChartGrid::new(axes)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn is_compact(&self) -> bool {
        self.axes.iter().all(Axis::is_compact)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        self.strides.iter().zip(&self.axes).map(|(s, ax)| (flat / s) % ax.n).collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn index_along(&self, flat: usize, a: usize) -> usize {
        (flat / self.strides[a]) % self.axes[a].n
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.axes.iter().enumerate().map(|(a, ax)| ax.coord(self.index_along(flat, a))).collect()
    }

    /// Node reached from `flat` by per-axis index `offsets`, applying periodic
    /// wrap and the pole reflection theta -> -theta, phi -> phi + pi.
    /// `None` when the step leaves a line axis.
    pub fn neighbor(&self, flat: usize, offsets: &[isize]) -> Option<usize> {
        let d = self.dim();
        let mut raw: Vec<isize> = (0..d).map(|a| self.index_along(flat, a) as isize + offsets[a]).collect();
        for a in 0..d {
            if let AxisKind::Polar { partner } = self.axes[a].kind {
                let n = self.axes[a].n as isize;
                let half = self.axes[partner].n as isize / 2;
                if raw[a] < 0 {
                    raw[a] = -raw[a] - 1;
                    raw[partner] += half;
                } else if raw[a] >= n {
                    raw[a] = 2 * n - 1 - raw[a];
                    raw[partner] += half;
                }
                if raw[a] < 0 || raw[a] >= n {
                    return None;
                }
            }
        }
        let mut out = 0;
        for a in 0..d {
            let n = self.axes[a].n as isize;
            let i = match self.axes[a].kind {
                AxisKind::Line => {
                    if raw[a] < 0 || raw[a] >= n {
                        return None;
                    }
                    raw[a]
                }
                _ => raw[a].rem_euclid(n),
            };
            out += i as usize * self.strides[a];
        }
        Some(out)
    }
}

/// Values on the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: ChartGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: ChartGrid, values: Vec<f64>) -> Result<ScalarField, GeometryError> {
        if values.len() != grid.len() {
            return Err(GeometryError::Grid(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: ChartGrid, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        ScalarField { grid, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(nt: usize, np: usize) -> ChartGrid {
        ChartGrid::new(vec![Axis::polar(1, nt), Axis::periodic(0.0, 2.0 * PI, np)]).unwrap()
    }

    #[test]
    fn offset_colatitudes() {
        let g = sphere(8, 8);
        assert!((g.axis(0).coord(0) - PI / 16.0).abs() < 1e-15);
        assert!((g.axis(0).coord(7) - 15.0 * PI / 16.0).abs() < 1e-15);
    }

    #[test]
    fn pole_wrap_shifts_longitude() {
        let g = sphere(8, 16);
        let node = g.flat_index(&[0, 3]);
        let nb = g.neighbor(node, &[-1, 0]).unwrap();
        assert_eq!(g.multi_index(nb), vec![0, 11]);
        let node = g.flat_index(&[7, 12]);
        let nb = g.neighbor(node, &[2, 0]).unwrap();
        assert_eq!(g.multi_index(nb), vec![6, 4]);
    }

    #[test]
    fn pole_wrap_is_reciprocal() {
        let g = sphere(8, 16);
        for node in 0..g.len() {
            for off in [[-1isize, -1], [-1, 1], [1, 1], [-2, 0], [2, -1]] {
                let nb = g.neighbor(node, &off).unwrap();
                let back: Vec<isize> = off.iter().map(|o| -o).collect();
                // reflected steps reverse the colatitude direction; one of the two must return
                let r1 = g.neighbor(nb, &back).unwrap();
                let r2 = g.neighbor(nb, &[off[0], -off[1]]).unwrap();
                let r3 = g.neighbor(nb, &[-off[0], -off[1]]).unwrap();
                assert!(r1 == node || r2 == node || r3 == node);
            }
        }
    }

    #[test]
    fn periodic_wrap_and_line_edges() {
        let g = ChartGrid::new(vec![Axis::periodic(0.0, 1.0, 8), Axis::line(-1.0, 1.0, 5)]).unwrap();
        let n = g.flat_index(&[0, 0]);
        assert_eq!(g.multi_index(g.neighbor(n, &[-1, 0]).unwrap()), vec![7, 0]);
        assert!(g.neighbor(n, &[0, -1]).is_none());
        assert_eq!(g.axis(1).coord(4), 1.0);
    }

    #[test]
    fn rejects_coarse_compact_axis() {
        assert!(ChartGrid::new(vec![Axis::periodic(0.0, 1.0, 4)]).is_err());
        assert!(ChartGrid::new(vec![Axis::polar(1, 8), Axis::periodic(0.0, 2.0 * PI, 9)]).is_err());
    }

    #[test]
    fn circle_axis_contains_zero() {
        let g = ChartGrid::new(vec![Axis::periodic(0.0, 1.0, 8)]).unwrap().with_circle(0.5, 32).unwrap();
        let t = g.axis(1);
        assert_eq!(t.coord(16), 0.0);
    }
}
