//! Regular lattice on the probability simplex: all beliefs whose
//! coordinates are multiples of `1/r`, with Freudenthal (Kuhn)
//! triangulation for piecewise-linear interpolation and largest-remainder
//! rounding for nearest-point projection.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SimplexGrid {
    dim: usize,
    resolution: usize,
    points: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl SimplexGrid {
    /// Lattice over `dim` coordinates with resolution `r ≥ 1`.
    pub fn new(dim: usize, resolution: usize) -> Result<Self> {
        if dim == 0 || resolution == 0 {
            return Err(Error::InvalidArgument("grid needs positive dimension and resolution".into()));
        }
        let mut points = Vec::new();
        let mut current = vec![0u32; dim];
        compositions(resolution as u32, 0, &mut current, &mut points);
        let index = points.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        Ok(SimplexGrid {
            dim,
            resolution,
            points,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn counts(&self, i: usize) -> &[u32] {
        &self.points[i]
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let r = self.resolution as f64;
        self.points[i].iter().map(|&c| c as f64 / r).collect()
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    /// Convex combination of at most `dim` lattice points equal to `b`.
    pub fn interpolate(&self, b: &[f64]) -> Vec<(usize, f64)> {
        let n = self.dim;
        let r = self.resolution as f64;
        if n == 1 {
            return vec![(0, 1.0)];
        }
        // suffix sums x_i = r·Σ_{j≥i} b_j, nonincreasing, x_0 = r
        let mut x = vec![0.0; n];
        let mut acc = 0.0;
        for i in (1..n).rev() {
            acc += b[i];
            let v = (r * acc).clamp(0.0, r);
            // snap roundoff so lattice points map to a single vertex
            x[i] = if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        }
        x[0] = r;
        for i in 1..n {
            if x[i] > x[i - 1] {
                x[i] = x[i - 1];
            }
        }
        let base: Vec<f64> = x.iter().map(|v| v.floor()).collect();
        let d: Vec<f64> = x.iter().zip(&base).map(|(v, f)| v - f).collect();
        let mut order: Vec<usize> = (1..n).collect();
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));

        let mut out = Vec::with_capacity(n);
        let mut vertex: Vec<i64> = base.iter().map(|v| *v as i64).collect();
        let push = |v: &[i64], w: f64, out: &mut Vec<(usize, f64)>| {
            if w > 0.0 {
                let counts: Vec<u32> = (0..n)
                    .map(|i| (v[i] - if i + 1 < n { v[i + 1] } else { 0 }) as u32)
                    .collect();
                let idx = self.index[&counts];
                out.push((idx, w));
            }
        };
        push(&vertex, 1.0 - d[order[0]], &mut out);
        for k in 0..order.len() {
            vertex[order[k]] += 1;
            let next = if k + 1 < order.len() { d[order[k + 1]] } else { 0.0 };
            push(&vertex, d[order[k]] - next, &mut out);
        }
        out
    }

    /// Nearest lattice point by largest-remainder rounding.
    pub fn nearest(&self, b: &[f64]) -> usize {
        let r = self.resolution as f64;
        let scaled: Vec<f64> = b.iter().map(|p| p.max(0.0) * r).collect();
        let mut counts: Vec<u32> = scaled.iter().map(|v| v.floor() as u32).collect();
        let assigned: u32 = counts.iter().sum();
        let mut rest = (self.resolution as u32).saturating_sub(assigned);
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&i, &j| {
            (scaled[j] - scaled[j].floor())
                .total_cmp(&(scaled[i] - scaled[i].floor()))
                .then(i.cmp(&j))
        });
        for &i in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            counts[i] += 1;
            rest -= 1;
        }
        // roundoff can overshoot when the input is not exactly stochastic
        while counts.iter().sum::<u32>() > self.resolution as u32 {
            let i = (0..self.dim).max_by_key(|&i| counts[i]).expect("nonempty");
            counts[i] -= 1;
        }
        self.index[&counts]
    }
}

fn compositions(left: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = left;
        out.push(current.clone());
        return;
    }
    for c in (0..=left).rev() {
        current[pos] = c;
        compositions(left - c, pos + 1, current, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(SimplexGrid::new(3, 4).unwrap().len(), 15);
        assert_eq!(SimplexGrid::new(2, 10).unwrap().len(), 11);
        assert_eq!(SimplexGrid::new(1, 5).unwrap().len(), 1);
    }

    #[test]
    fn interpolation_reproduces_the_point() {
        let g = SimplexGrid::new(3, 5).unwrap();
        for b in [[0.13, 0.52, 0.35], [1.0, 0.0, 0.0], [0.2, 0.4, 0.4], [0.0, 0.91, 0.09]] {
            let parts = g.interpolate(&b);
            let total: f64 = parts.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for i in 0..3 {
                let x: f64 = parts.iter().map(|&(k, w)| w * g.point(k)[i]).sum();
                assert!((x - b[i]).abs() < 1e-12, "{b:?}");
            }
        }
    }

    #[test]
    fn lattice_points_interpolate_to_themselves() {
        let g = SimplexGrid::new(4, 3).unwrap();
        for i in 0..g.len() {
            let parts = g.interpolate(&g.point(i));
            assert_eq!(parts, vec![(i, 1.0)]);
        }
    }

    #[test]
    fn nearest_rounds_to_lattice() {
        let g = SimplexGrid::new(3, 4).unwrap();
        let i = g.nearest(&[0.3, 0.3, 0.4]);
        assert_eq!(g.counts(i), &[1, 1, 2]);
        let i = g.nearest(&[1.0, 0.0, 0.0]);
        assert_eq!(g.counts(i), &[4, 0, 0]);
    }
}
