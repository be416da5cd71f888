//! Grid posterior over the 2-D latent space.

use serde::{Deserialize, Serialize};

use super::{log_sigmoid, LatentPoint, TrainedModel};

/// Default number of grid points per axis.
pub const DEFAULT_RESOLUTION: usize = 101;

/// Relative margin added around the training projections on each side.
pub const BOUNDS_MARGIN: f64 = 0.2;

/// Half-width used when the model carries no training bounds.
pub const RANDOM_INIT_HALF_WIDTH: f64 = 3.0;

/// Smallest prior standard deviation used on any axis.
const MIN_PRIOR_STD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    /// `[[x_lo, x_hi], [y_lo, y_hi]]`.
    pub bounds: [[f64; 2]; 2],
    pub resolution: usize,
    /// Row-major (`y` outer, `x` inner) log density, normalized so that
    /// `sum(exp(log_density)) * cell_area == 1`.
    pub log_density: Vec<f64>,
}

impl PosteriorGrid {
    pub fn cell_area(&self) -> f64 {
        let step = |b: [f64; 2]| (b[1] - b[0]) / (self.resolution - 1) as f64;
        step(self.bounds[0]) * step(self.bounds[1])
    }

    pub fn total_mass(&self) -> f64 {
        self.log_density.iter().map(|l| l.exp()).sum::<f64>() * self.cell_area()
    }

    /// Sum of the posterior variances along both axes.
    pub fn variance_trace(&self) -> f64 {
        let xs = axis_from_bounds(self.bounds[0], self.resolution);
        let ys = axis_from_bounds(self.bounds[1], self.resolution);
        let (mut w, mut m1, mut m2) = (0.0, [0.0; 2], [0.0; 2]);
        for (j, y) in ys.iter().enumerate() {
            for (i, x) in xs.iter().enumerate() {
                let p = self.log_density[j * self.resolution + i].exp();
                w += p;
                m1[0] += p * x;
                m1[1] += p * y;
                m2[0] += p * x * x;
                m2[1] += p * y * y;
            }
        }
        (0..2).map(|a| m2[a] / w - (m1[a] / w).powi(2)).sum()
    }
}

fn axis_from_bounds(b: [f64; 2], resolution: usize) -> Vec<f64> {
    (0..resolution)
        .map(|i| b[0] + (b[1] - b[0]) * i as f64 / (resolution - 1) as f64)
        .collect()
}

/// Symmetric axis grid `-h..=h`; mirrored so that opposite points are exact negatives.
fn axis(half_width: f64, resolution: usize) -> Vec<f64> {
    let mut xs = vec![0.0; resolution];
    let last = (resolution - 1) as f64;
    for i in 0..resolution.div_ceil(2) {
        let v = half_width * (2.0 * i as f64 / last - 1.0);
        xs[i] = v;
        xs[resolution - 1 - i] = -v;
    }
    if resolution % 2 == 1 {
        xs[resolution / 2] = 0.0;
    }
    xs
}

/// Incrementally updated log posterior over a fixed grid.
///
/// Adding answers one at a time performs exactly the same floating-point
/// operations as evaluating all answers at once, so sequential sessions and
/// one-shot embeddings agree bit for bit.
#[derive(Debug, Clone)]
pub struct PosteriorTracker {
    xs: Vec<f64>,
    ys: Vec<f64>,
    log_post: Vec<f64>,
}

impl PosteriorTracker {
    pub fn new(model: &TrainedModel, resolution: usize) -> Self {
        assert!(resolution >= 2, "grid resolution must be at least 2");
        let half = model.grid_half_widths();
        let xs = axis(half[0], resolution);
        let ys = axis(half[1], resolution);
        let sd = model.prior_std();
        let mut log_post = Vec::with_capacity(resolution * resolution);
        for &y in &ys {
            for &x in &xs {
                log_post.push(-0.5 * ((x / sd[0]).powi(2) + (y / sd[1]).powi(2)));
            }
        }
        Self { xs, ys, log_post }
    }

    pub fn observe(&mut self, model: &TrainedModel, question: usize, value: f64) {
        let qm = &model.question_models()[question];
        let res = self.xs.len();
        for (iy, &y) in self.ys.iter().enumerate() {
            let row = &mut self.log_post[iy * res..(iy + 1) * res];
            for (cell, &x) in row.iter_mut().zip(&self.xs) {
                let t = qm.weight[0] * x + qm.weight[1] * y + qm.intercept;
                *cell += value * log_sigmoid(t) + (1.0 - value) * log_sigmoid(-t);
            }
        }
    }

    fn max_log(&self) -> f64 {
        self.log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Posterior mean of the latent position.
    pub fn mean(&self) -> LatentPoint {
        let m = self.max_log();
        let res = self.xs.len();
        let (mut wsum, mut xsum, mut ysum) = (0.0, 0.0, 0.0);
        for (iy, &y) in self.ys.iter().enumerate() {
            for (ix, &x) in self.xs.iter().enumerate() {
                let w = (self.log_post[iy * res + ix] - m).exp();
                wsum += w;
                xsum += w * x;
                ysum += w * y;
            }
        }
        LatentPoint::new(xsum / wsum, ysum / wsum)
    }

    pub fn grid(&self) -> PosteriorGrid {
        let res = self.xs.len();
        let bounds = [[self.xs[0], self.xs[res - 1]], [self.ys[0], self.ys[res - 1]]];
        let area = (bounds[0][1] - bounds[0][0]) / (res - 1) as f64 * (bounds[1][1] - bounds[1][0]) / (res - 1) as f64;
        let m = self.max_log();
        let log_z = m + (self.log_post.iter().map(|l| (l - m).exp()).sum::<f64>() * area).ln();
        PosteriorGrid {
            bounds,
            resolution: res,
            log_density: self.log_post.iter().map(|l| l - log_z).collect(),
        }
    }
}

impl TrainedModel {
    /// Prior standard deviation per axis.
    pub fn prior_std(&self) -> [f64; 2] {
        self.train_spread().map(|s| s.max(MIN_PRIOR_STD))
    }

    /// Half-widths of the symmetric evaluation grid.
    pub(crate) fn grid_half_widths(&self) -> [f64; 2] {
        match self.train_bounds() {
            None => [RANDOM_INIT_HALF_WIDTH; 2],
            Some(b) => {
                let sd = self.prior_std();
                [0, 1].map(|a| {
                    let span = b[a][1] - b[a][0];
                    let h = b[a][0].abs().max(b[a][1].abs()) + BOUNDS_MARGIN * span;
                    // Degenerate axes still need room for the prior.
                    h.max(3.0 * sd[a])
                })
            }
        }
    }
}
