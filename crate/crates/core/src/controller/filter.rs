//! Minimum-jerk style velocity smoothing: three identical first-order
//! unit-gain stages in cascade, discretized exactly for a zero-order hold.

use nalgebra::DVector;

use crate::scalar::{lit, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct MinJerkFilter<T: Real> {
    stages: [DVector<T>; 3],
    alpha: T,
}

impl<T: Real> MinJerkFilter<T> {
    /// `time_constant` is the overall characteristic time; each stage uses a
    /// third of it.
    pub fn new(dof: usize, period: T, time_constant: T) -> Self {
        let tau = time_constant / lit(3.0);
        let alpha = if tau > T::zero() {
            T::one() - (-period / tau).exp()
        } else {
            T::one()
        };
        Self {
            stages: [DVector::zeros(dof), DVector::zeros(dof), DVector::zeros(dof)],
            alpha,
        }
    }

    pub fn reset(&mut self) {
        for s in &mut self.stages {
            s.fill(T::zero());
        }
    }

    pub fn output(&self) -> &DVector<T> {
        &self.stages[2]
    }

    pub fn step(&mut self, input: &DVector<T>) -> DVector<T> {
        let mut u = input.clone();
        for stage in &mut self.stages {
            *stage += (&u - &*stage) * self.alpha;
            u = stage.clone();
        }
        u
    }

    /// Joint displacement the filter will still emit if its input drops to
    /// zero now: `period * sum_k y3[k]`, which for identical stages is
    /// `period * (1 - alpha) / alpha * (y1 + y2 + y3)`.
    pub fn pending_displacement(&self, period: T) -> DVector<T> {
        if self.alpha >= T::one() {
            return DVector::zeros(self.stages[0].len());
        }
        let k = period * (T::one() - self.alpha) / self.alpha;
        (&self.stages[0] + &self.stages[1] + &self.stages[2]) * k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_in_zero_out() {
        let mut f = MinJerkFilter::<f64>::new(3, 0.02, 0.1);
        for _ in 0..10 {
            assert_eq!(f.step(&DVector::zeros(3)), DVector::zeros(3));
        }
    }

    #[test]
    fn dc_gain_within_five_time_constants() {
        let mut f = MinJerkFilter::<f64>::new(1, 0.02, 0.1);
        let v = DVector::from_element(1, 0.3);
        let mut out = 0.0;
        for _ in 0..25 {
            out = f.step(&v)[0];
        }
        assert!((out - 0.3).abs() <= 0.01 * 0.3);
    }

    #[test]
    fn step_response_monotone_no_overshoot() {
        let mut f = MinJerkFilter::<f64>::new(1, 0.02, 0.1);
        let one = DVector::from_element(1, 1.0);
        let mut prev = 0.0;
        let mut peak: f64 = 0.0;
        for _ in 0..500 {
            let y = f.step(&one)[0];
            assert!(y >= prev);
            prev = y;
            peak = peak.max(y);
        }
        assert!(peak < 1.01);
    }

    #[test]
    fn pending_matches_simulated_tail() {
        let mut f = MinJerkFilter::<f64>::new(2, 0.02, 0.1);
        let input = DVector::from_vec(vec![0.4, -0.2]);
        for _ in 0..7 {
            f.step(&input);
        }
        let predicted = f.pending_displacement(0.02);
        let mut tail = DVector::zeros(2);
        let mut g = f.clone();
        for _ in 0..2000 {
            tail += g.step(&DVector::zeros(2)) * 0.02;
        }
        assert!((predicted - tail).amax() < 1e-12);
    }
}
