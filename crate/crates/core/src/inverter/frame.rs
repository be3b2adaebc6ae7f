//! Rotation between the global DQ frame and a controller's local dq frame.

use crate::model::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Global `(D, Q)` to local `(d, q)`.
    ToLocal,
    /// Local `(d, q)` to global `(D, Q)`.
    ToGlobal,
}

/// Rotates a two-vector by `-theta` (to local) or `+theta` (to global).
pub fn frame_transform(u: [f64; 2], theta: f64, direction: Direction) -> [f64; 2] {
    match direction {
        Direction::ToLocal => to_local(u, theta),
        Direction::ToGlobal => to_global(u, theta),
    }
}

pub fn to_local<D: Real>(u: [D; 2], theta: D) -> [D; 2] {
    let (s, c) = theta.sin_cos();
    [u[0] * c + u[1] * s, -u[0] * s + u[1] * c]
}

pub fn to_global<D: Real>(u: [D; 2], theta: D) -> [D; 2] {
    let (s, c) = theta.sin_cos();
    [u[0] * c - u[1] * s, u[0] * s + u[1] * c]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_rotation() {
        assert_eq!(frame_transform([1.0, 0.0], 0.0, Direction::ToLocal), [1.0, 0.0]);
        assert_eq!(frame_transform([0.3, -0.7], 0.0, Direction::ToGlobal), [0.3, -0.7]);
    }

    #[test]
    fn quarter_turn() {
        let r = frame_transform([1.0, 0.0], FRAC_PI_2, Direction::ToLocal);
        assert!(r[0].abs() < 1e-15);
        assert!((r[1] + 1.0).abs() < 1e-15);
    }
}
