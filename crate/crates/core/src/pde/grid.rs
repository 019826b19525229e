use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::TimeGrid;

/// One spatial axis of the tensor grid: `count` nodes evenly spaced on
/// `[min, max]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::validation(format!("{name}: bounds must be finite")));
        }
        if self.max <= self.min {
            return Err(Error::validation(format!(
                "{name}: upper bound {} must exceed lower bound {}",
                self.max, self.min
            )));
        }
        if self.count < 4 {
            return Err(Error::validation(format!(
                "{name}: need at least 4 nodes for the stencils, got {}",
                self.count
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.count - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.spacing()
    }
}

/// Tensor grid over the ordered domain in sum and gap coordinates.
///
/// Axis 0 is the sum `s`. For `n >= 2` axis `j` is the gap
/// `x_(j) - x_(j+1) >= 0`, whose lower bound is exactly zero so that grid
/// nodes sit on the coincidence face. The upper bounds are truncation radii.
/// Node storage is s-fastest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplexGrid {
    pub n: usize,
    pub axes: Vec<Axis>,
    pub time: TimeGrid,
}

impl SimplexGrid {
    /// Interval grid for a single particle; the sum coordinate is the state.
    pub fn line(s_min: f64, s_max: f64, ns: usize, time: TimeGrid) -> Result<Self> {
        SimplexGrid::build(
            1,
            vec![Axis {
                min: s_min,
                max: s_max,
                count: ns,
            }],
            time,
        )
    }

    /// Two-particle grid in (sum, gap) coordinates.
    pub fn plane(
        s_min: f64,
        s_max: f64,
        ns: usize,
        gap_max: f64,
        ngap: usize,
        time: TimeGrid,
    ) -> Result<Self> {
        SimplexGrid::build(
            2,
            vec![
                Axis {
                    min: s_min,
                    max: s_max,
                    count: ns,
                },
                Axis {
                    min: 0.0,
                    max: gap_max,
                    count: ngap,
                },
            ],
            time,
        )
    }

    /// Three-particle grid in (sum, gap, gap) coordinates. Experimental:
    /// validated against Monte Carlo only.
    #[allow(clippy::too_many_arguments)]
    pub fn wedge(
        s_min: f64,
        s_max: f64,
        ns: usize,
        gap1_max: f64,
        ngap1: usize,
        gap2_max: f64,
        ngap2: usize,
        time: TimeGrid,
    ) -> Result<Self> {
        SimplexGrid::build(
            3,
            vec![
                Axis {
                    min: s_min,
                    max: s_max,
                    count: ns,
                },
                Axis {
                    min: 0.0,
                    max: gap1_max,
                    count: ngap1,
                },
                Axis {
                    min: 0.0,
                    max: gap2_max,
                    count: ngap2,
                },
            ],
            time,
        )
    }

    fn build(n: usize, axes: Vec<Axis>, time: TimeGrid) -> Result<Self> {
        let grid = SimplexGrid { n, axes, time };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n) {
            return Err(Error::validation(format!(
                "grid supports 1 to 3 particles, got {}",
                self.n
            )));
        }
        if self.axes.len() != self.n {
            return Err(Error::validation(format!(
                "expected {} axes for {} particles, got {}",
                self.n,
                self.n,
                self.axes.len()
            )));
        }
        self.axes[0].validate("sum axis")?;
        for (j, axis) in self.axes.iter().enumerate().skip(1) {
            axis.validate(&format!("gap axis {j}"))?;
            if axis.min != 0.0 {
                return Err(Error::validation(format!(
                    "gap axis {j} must start exactly at zero, got {}",
                    axis.min
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn nodes(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.axes[..axis].iter().map(|a| a.count).product()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (a, &c) in coords.iter().enumerate() {
            idx += c * stride;
            stride *= self.axes[a].count;
        }
        idx
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dims());
        for a in 0..self.dims() {
            let c = self.axes[a].count;
            out.push(idx % c);
            idx /= c;
        }
        out
    }

    /// Grid point in (s, gaps) coordinates.
    pub fn xi_point(&self, idx: usize) -> Vec<f64> {
        self.coords(idx)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.point(i))
            .collect()
    }

    /// Grid point in ranked coordinates, descending.
    pub fn ranked_point(&self, idx: usize) -> Vec<f64> {
        let xi = self.xi_point(idx);
        xi_to_ranked(self.n, &xi)
    }

    /// Maps a ranked point into grid coordinates, with per-axis fractional
    /// position for interpolation. Errors when the point leaves the box.
    pub fn locate(&self, ranked: &[f64]) -> Result<Vec<(usize, f64)>> {
        if ranked.len() != self.n {
            return Err(Error::validation(format!(
                "probe point has {} ranks, grid has {}",
                ranked.len(),
                self.n
            )));
        }
        for w in ranked.windows(2) {
            if w[1] > w[0] {
                return Err(Error::validation(
                    "probe point must be in descending rank order",
                ));
            }
        }
        let xi = ranked_to_xi(ranked);
        let mut out = Vec::with_capacity(self.dims());
        for (a, (&v, axis)) in xi.iter().zip(&self.axes).enumerate() {
            let pos = (v - axis.min) / axis.spacing();
            let slack = 1e-9 * (1.0 + axis.max.abs() + axis.min.abs());
            if v < axis.min - slack || v > axis.max + slack {
                return Err(Error::validation(format!(
                    "probe coordinate {v} on axis {a} is outside [{}, {}]",
                    axis.min, axis.max
                )));
            }
            let cell = (pos.floor() as usize).min(axis.count - 2);
            let frac = (pos - cell as f64).clamp(0.0, 1.0);
            out.push((cell, frac));
        }
        Ok(out)
    }
}

/// Gap coordinates of a ranked point: `(sum, x_(1)-x_(2), ...)`.
pub fn ranked_to_xi(ranked: &[f64]) -> Vec<f64> {
    let mut xi = Vec::with_capacity(ranked.len());
    xi.push(ranked.iter().sum());
    for w in ranked.windows(2) {
        xi.push(w[0] - w[1]);
    }
    xi
}

/// Inverse of [`ranked_to_xi`]; gaps must be non-negative for the result to
/// be descending.
pub fn xi_to_ranked(n: usize, xi: &[f64]) -> Vec<f64> {
    let s = xi[0];
    let gaps = &xi[1..];
    // Lowest rank first: x_n = (s - sum_j j*gap_j) / n, then climb the gaps.
    let weighted: f64 = gaps.iter().enumerate().map(|(j, g)| (j + 1) as f64 * g).sum();
    let x_low = (s - weighted) / n as f64;
    let mut out = vec![0.0; n];
    out[n - 1] = x_low;
    for k in (0..n - 1).rev() {
        out[k] = out[k + 1] + gaps[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tg() -> TimeGrid {
        TimeGrid::new(0.0, 1.0, 10).unwrap()
    }

    #[test]
    fn round_trip_between_ranked_and_gap_coordinates() {
        for ranked in [
            vec![1.5],
            vec![2.0, -1.0],
            vec![0.3, 0.3],
            vec![5.0, 1.0, -2.0],
            vec![1.0, 1.0, 1.0],
        ] {
            let xi = ranked_to_xi(&ranked);
            let back = xi_to_ranked(ranked.len(), &xi);
            for (a, b) in ranked.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12, "{ranked:?} -> {xi:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn node_enumeration_is_sum_fastest() {
        let g = SimplexGrid::plane(-1.0, 1.0, 5, 2.0, 4, tg()).unwrap();
        assert_eq!(g.nodes(), 20);
        assert_eq!(g.stride(0), 1);
        assert_eq!(g.stride(1), 5);
        assert_eq!(g.index(&[3, 2]), 13);
        assert_eq!(g.coords(13), vec![3, 2]);
        let xi = g.xi_point(13);
        assert!((xi[0] - 0.5).abs() < 1e-12);
        assert!((xi[1] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gap_axes_must_start_at_zero() {
        let bad = SimplexGrid::build(
            2,
            vec![
                Axis {
                    min: 0.0,
                    max: 1.0,
                    count: 4,
                },
                Axis {
                    min: 0.5,
                    max: 1.0,
                    count: 4,
                },
            ],
            tg(),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn locate_maps_and_rejects() {
        let g = SimplexGrid::plane(-2.0, 2.0, 9, 2.0, 5, tg()).unwrap();
        let loc = g.locate(&[0.75, 0.25]).unwrap();
        // s = 1.0 lands at position 6 of [-2, 2] with 9 nodes.
        assert_eq!(loc[0].0, 6);
        assert!(loc[0].1.abs() < 1e-9);
        // gap = 0.5 lands mid-cell on [0, 2] with 5 nodes.
        assert_eq!(loc[1].0, 1);
        assert!((loc[1].1 - 0.0).abs() < 1e-9);
        assert!(g.locate(&[5.0, 0.0]).is_err());
        assert!(g.locate(&[0.0, 0.5]).is_err(), "ascending order rejected");
    }

    #[test]
    fn ranked_nodes_are_descending() {
        let g = SimplexGrid::wedge(-3.0, 3.0, 4, 1.5, 4, 1.0, 4, tg()).unwrap();
        for idx in 0..g.nodes() {
            let x = g.ranked_point(idx);
            for w in x.windows(2) {
                assert!(w[0] >= w[1] - 1e-12);
            }
        }
    }
}
