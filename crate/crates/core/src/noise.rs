//! Windowed residual statistics with O(1) work per sample.
//!
//! The window keeps running sums of the last `m` residuals and of their
//! squares. Each push adds the new residual and, once the window is full,
//! subtracts the evicted one, so the mean and the adaptive noise variance
//! cost two additions per sum regardless of `m`. `1/m` is precomputed.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ResidualWindow {
    buffer: Vec<f64>,
    head: usize,
    sum: f64,
    sum_sq: f64,
    count: u64,
    m: usize,
    inv_m: f64,
    ops: u64,
}

impl ResidualWindow {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("window length must be >= 2, got {m}")));
        }
        Ok(Self {
            buffer: Vec::with_capacity(m),
            head: 0,
            sum: 0.0,
            sum_sq: 0.0,
            count: 0,
            m,
            inv_m: 1.0 / m as f64,
            ops: 0,
        })
    }

    pub fn push(&mut self, r: f64) -> Result<()> {
        if !r.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite residual {r}")));
        }
        if self.buffer.len() < self.m {
            self.buffer.push(r);
            self.sum += r;
            self.sum_sq += r * r;
            self.ops += 2;
        } else {
            let old = std::mem::replace(&mut self.buffer[self.head], r);
            self.head = (self.head + 1) % self.m;
            self.sum += r;
            self.sum -= old;
            self.sum_sq += r * r;
            self.sum_sq -= old * old;
            self.ops += 4;
        }
        self.count += 1;
        Ok(())
    }

    #[inline]
    pub fn is_ready(&self) -> bool {
        self.count >= self.m as u64
    }

    /// Running sum of buffered residuals.
    pub fn sum(&self) -> f64 {
        self.sum
    }

    /// Running sum of squared buffered residuals.
    pub fn sum_sq(&self) -> f64 {
        self.sum_sq
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.m
    }

    /// Additions and subtractions performed on the running sums so far.
    pub fn ops(&self) -> u64 {
        self.ops
    }

    /// Buffered residuals, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let (newer, older) = self.buffer.split_at(self.head);
        older.iter().chain(newer).copied()
    }

    pub fn mean(&self) -> Result<f64> {
        if !self.is_ready() {
            return Err(Error::NotReady { count: self.count, m: self.m });
        }
        Ok(self.inv_m * self.sum)
    }

    /// `sum_sq / m - hpht` without flooring; `None` until the window is full.
    pub fn raw_variance(&self, hpht: f64) -> Option<f64> {
        self.is_ready().then_some(self.inv_m * self.sum_sq - hpht)
    }

    /// Adaptive measurement-noise variance: `sigma0_sq` during warm-up,
    /// otherwise the floored windowed estimate.
    pub fn variance(&self, hpht: f64, sigma0_sq: f64, sigma_min_sq: f64) -> f64 {
        match self.raw_variance(hpht) {
            None => sigma0_sq,
            Some(v) => v.max(sigma_min_sq),
        }
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
        self.head = 0;
        self.sum = 0.0;
        self.sum_sq = 0.0;
        self.count = 0;
        self.ops = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_window_sums() {
        let mut w = ResidualWindow::new(3).unwrap();
        for r in [1.0, 2.0, 3.0] {
            w.push(r).unwrap();
        }
        assert_eq!((w.sum(), w.sum_sq()), (6.0, 14.0));
        w.push(4.0).unwrap();
        assert_eq!((w.sum(), w.sum_sq()), (9.0, 29.0));
        assert_eq!(w.iter().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn non_finite_rejected_without_change() {
        let mut w = ResidualWindow::new(3).unwrap();
        w.push(1.0).unwrap();
        assert!(w.push(f64::NAN).is_err());
        assert!(w.push(f64::INFINITY).is_err());
        assert_eq!((w.count(), w.sum()), (1, 1.0));
    }

    #[test]
    fn mean_examples() {
        let mut w = ResidualWindow::new(100).unwrap();
        assert!(matches!(w.mean(), Err(Error::NotReady { .. })));
        for r in 1..=100 {
            w.push(r as f64).unwrap();
        }
        assert_eq!(w.mean().unwrap(), 50.5);

        let mut z = ResidualWindow::new(10).unwrap();
        for _ in 0..25 {
            z.push(0.0).unwrap();
        }
        assert_eq!(z.mean().unwrap(), 0.0);
    }

    #[test]
    fn variance_examples() {
        let mut w = ResidualWindow::new(4).unwrap();
        w.push(2.0).unwrap();
        assert_eq!(w.variance(0.0, 0.7, 1e-6), 0.7);
        for _ in 0..3 {
            w.push(2.0).unwrap();
        }
        // sum_sq / m = 4
        assert_eq!(w.variance(1.0, 0.7, 1e-6), 3.0);
        let mut u = ResidualWindow::new(4).unwrap();
        for _ in 0..4 {
            u.push(1.0).unwrap();
        }
        assert_eq!(u.raw_variance(5.0), Some(-4.0));
        assert_eq!(u.variance(5.0, 0.7, 1e-6), 1e-6);
    }

    #[test]
    fn window_length_validated() {
        assert!(ResidualWindow::new(1).is_err());
    }
}
