//! Sliding-window median for impulsive outlier suppression.
//!
//! The centered window `y_k = med(x_{k-n} .. x_{k+n})` needs future samples,
//! so the filter is realised causally: after `2n + 1` samples the output is the
//! median of the most recent `2n + 1` inputs, i.e. the centered median delayed
//! by `n` samples. During warm-up the input passes straight through.

use std::cmp::Ordering;
use std::collections::VecDeque;

use crate::wire::ImuReading;

pub const DEFAULT_HALF_WIDTH: usize = 2;

#[derive(Debug, Clone)]
pub struct MedianWindow<T = f64> {
    half_width: usize,
    buffer: VecDeque<T>,
    scratch: Vec<T>,
}

impl<T: Copy + PartialOrd> MedianWindow<T> {
    /// # Panics
    /// If `half_width` is zero.
    pub fn new(half_width: usize) -> Self {
        assert!(half_width > 0, "median half width must be positive");
        let len = 2 * half_width + 1;
        Self {
            half_width,
            buffer: VecDeque::with_capacity(len),
            scratch: Vec::with_capacity(len),
        }
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn window_len(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn is_warm(&self) -> bool {
        self.buffer.len() == self.window_len()
    }

    /// Samples in arrival order, oldest first.
    pub fn buffered(&self) -> impl Iterator<Item = &T> {
        self.buffer.iter()
    }

    pub fn push(&mut self, x: T) -> T {
        if self.buffer.len() == self.window_len() {
            self.buffer.pop_front();
        }
        self.buffer.push_back(x);
        if !self.is_warm() {
            return x;
        }
        self.scratch.clear();
        self.scratch.extend(self.buffer.iter().copied());
        let mid = self.half_width;
        let (_, median, _) = self
            .scratch
            .select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        *median
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
    }
}

/// Six independent median windows, one per gyro/accel channel.
#[derive(Debug, Clone)]
pub struct ImuMedian {
    channels: [MedianWindow<f64>; 6],
}

impl ImuMedian {
    pub fn new(half_width: usize) -> Self {
        Self {
            channels: std::array::from_fn(|_| MedianWindow::new(half_width)),
        }
    }

    pub fn push(&mut self, r: &ImuReading) -> ImuReading {
        let mut out = *r;
        for i in 0..3 {
            out.gyro[i] = self.channels[i].push(r.gyro[i]);
            out.accel[i] = self.channels[3 + i].push(r.accel[i]);
        }
        out
    }
}
