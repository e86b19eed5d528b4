//! Interval-aligned time grids.
//!
//! Interval `k` (0-based, `k = 0..=N`) spans `[τ_k, τ_{k+1}]` with `τ_0 = 0` and
//! `τ_{N+1} = T`. Every interval carries its own `ppi` uniform nodes, so each
//! switching time appears twice in the global node list: once as the last node
//! of the interval on its left (the left limit `τ⁻`) and once as the first node
//! of the interval on its right (the right limit `τ⁺`).
//!
//! Switching-time indices are 1-based like the math: `tau(i)` for `i = 1..=N`,
//! with `tau(0) = 0` and `tau(N+1) = T`.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Which one-sided limit a query refers to at a switching time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    horizon: f64,
    breakpoints: Vec<f64>,
    ppi: usize,
    spacing: Vec<f64>,
}

/// Builds the mesh for switching times `tau` on `[0, horizon]`.
pub fn build_mesh(tau: &[f64], horizon: f64, points_per_interval: usize) -> Result<TimeMesh> {
    TimeMesh::new(tau, horizon, points_per_interval)
}

impl TimeMesh {
    pub fn new(tau: &[f64], horizon: f64, points_per_interval: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::NonPositiveHorizon(horizon));
        }
        if points_per_interval < 2 {
            return Err(Error::TooFewPoints(points_per_interval));
        }
        for (index, &value) in tau.iter().enumerate() {
            if !(value > 0.0 && value < horizon) {
                return Err(Error::TauOutOfRange { index, value });
            }
            if index > 0 && value <= tau[index - 1] {
                return Err(Error::NonMonotoneTau(index));
            }
        }
        let mut breakpoints = Vec::with_capacity(tau.len() + 2);
        breakpoints.push(0.0);
        breakpoints.extend_from_slice(tau);
        breakpoints.push(horizon);
        let spacing = breakpoints.windows(2).map(|w| (w[1] - w[0]) / (points_per_interval - 1) as f64).collect();
        Ok(Self { horizon, breakpoints, ppi: points_per_interval, spacing })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of impulses `N`.
    pub fn n_impulses(&self) -> usize {
        self.breakpoints.len() - 2
    }

    /// Number of intervals `N + 1`.
    pub fn n_intervals(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn points_per_interval(&self) -> usize {
        self.ppi
    }

    /// Switching times `τ_1..τ_N`.
    pub fn switching_times(&self) -> &[f64] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }

    /// `τ_i` for `i = 0..=N+1`.
    pub fn tau(&self, i: usize) -> f64 {
        self.breakpoints[i]
    }

    pub fn n_nodes(&self) -> usize {
        self.n_intervals() * self.ppi
    }

    pub fn interval_of(&self, p: usize) -> usize {
        p / self.ppi
    }

    pub fn local_index(&self, p: usize) -> usize {
        p % self.ppi
    }

    pub fn node_time(&self, p: usize) -> f64 {
        let k = self.interval_of(p);
        let j = self.local_index(p);
        if j == self.ppi - 1 {
            self.breakpoints[k + 1]
        } else {
            self.breakpoints[k] + j as f64 * self.spacing[k]
        }
    }

    /// First node of interval `k` (the right limit at `τ_k`).
    pub fn start_node(&self, k: usize) -> usize {
        k * self.ppi
    }

    /// Last node of interval `k`.
    pub fn last_node(&self, k: usize) -> usize {
        (k + 1) * self.ppi - 1
    }

    /// Node holding the left limit at `τ_i`, `i = 1..=N+1`.
    pub fn left_limit_node(&self, i: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.n_intervals());
        i * self.ppi - 1
    }

    /// Node holding the right limit at `τ_i`, `i = 1..=N`.
    pub fn right_limit_node(&self, i: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.n_impulses());
        i * self.ppi
    }

    pub fn is_start(&self, p: usize) -> bool {
        self.local_index(p) == 0
    }

    pub fn is_last(&self, p: usize) -> bool {
        self.local_index(p) == self.ppi - 1
    }

    pub fn interval_spacing(&self, k: usize) -> f64 {
        self.spacing[k]
    }

    /// Largest grid spacing.
    pub fn h_mesh(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest gap between consecutive breakpoints.
    pub fn h_gap(&self) -> f64 {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Half of the spacing to the previous node of the same interval (0 at a start node).
    pub fn w_left(&self, p: usize) -> f64 {
        if self.is_start(p) {
            0.0
        } else {
            0.5 * self.spacing[self.interval_of(p)]
        }
    }

    /// Half of the spacing to the next node of the same interval (0 at a last node).
    pub fn w_right(&self, p: usize) -> f64 {
        if self.is_last(p) {
            0.0
        } else {
            0.5 * self.spacing[self.interval_of(p)]
        }
    }

    /// Trapezoid weight of node `q` in `∫_0^T`.
    pub fn weight(&self, q: usize) -> f64 {
        self.w_left(q) + self.w_right(q)
    }

    /// Trapezoid weight of node `q ≤ p` in `∫_0^{s_p}`.
    pub fn weight_to(&self, p: usize, q: usize) -> f64 {
        debug_assert!(q <= p);
        if q < p {
            self.w_left(q) + self.w_right(q)
        } else {
            self.w_left(q)
        }
    }

    /// Trapezoid weight of node `p ≥ q` in `∫_{t_q}^T`.
    pub fn weight_from(&self, q: usize, p: usize) -> f64 {
        debug_assert!(p >= q);
        if p > q {
            self.w_left(p) + self.w_right(p)
        } else {
            self.w_right(p)
        }
    }

    /// Nodes of interval `k`.
    pub fn interval_nodes(&self, k: usize) -> core::ops::Range<usize> {
        self.start_node(k)..self.start_node(k) + self.ppi
    }

    /// Number of impulses acting strictly before node `p`.
    pub fn active_impulses(&self, p: usize) -> usize {
        self.interval_of(p)
    }
}
