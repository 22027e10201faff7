//! Parameter buffer shared between training workers without locks.
//!
//! Values are `f64` bit patterns in relaxed atomics. Concurrent updates to
//! the same coordinate may lose one of the writes, which asynchronous SGD
//! tolerates; with a single worker every update lands in program order.

use std::sync::atomic::{AtomicU64, Ordering};

pub(crate) struct SharedParams {
    cells: Vec<AtomicU64>,
}

impl SharedParams {
    pub(crate) fn from_slice(values: &[f64]) -> Self {
        SharedParams {
            cells: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    pub(crate) fn to_vec(&self) -> Vec<f64> {
        self.cells.iter().map(|c| f64::from_bits(c.load(Ordering::Relaxed))).collect()
    }

    pub(crate) fn read(&self, start: usize, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.cells[start..]) {
            *o = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }

    pub(crate) fn write(&self, start: usize, values: &[f64]) {
        for (v, c) in values.iter().zip(&self.cells[start..]) {
            c.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    /// `self[start..] += scale * delta`, one coordinate at a time.
    pub(crate) fn add_scaled(&self, start: usize, delta: &[f64], scale: f64) {
        for (d, c) in delta.iter().zip(&self.cells[start..]) {
            if *d == 0.0 {
                continue;
            }
            let old = f64::from_bits(c.load(Ordering::Relaxed));
            c.store((old + scale * d).to_bits(), Ordering::Relaxed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_and_adds() {
        let p = SharedParams::from_slice(&[1.0, -2.0, 0.5]);
        p.add_scaled(1, &[4.0, 2.0], 0.5);
        assert_eq!(p.to_vec(), vec![1.0, 0.0, 1.5]);
        let mut out = [0.0; 2];
        p.read(0, &mut out);
        assert_eq!(out, [1.0, 0.0]);
        p.write(2, &[9.0]);
        assert_eq!(p.to_vec()[2], 9.0);
    }
}
