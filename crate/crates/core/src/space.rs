//! Named parameter registry with nominal values, bounds and the split into
//! controllable and uncontrollable parameters.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    names: Vec<String>,
    nominal: DVector<f64>,
    controllable: Vec<bool>,
    bounds: Vec<Option<(f64, f64)>>,
}

impl ParameterSpace {
    pub fn new(
        names: Vec<String>,
        nominal: DVector<f64>,
        controllable: Vec<bool>,
        bounds: Vec<Option<(f64, f64)>>,
    ) -> Result<Self> {
        let m = names.len();
        for (what, got) in [
            ("nominal parameter vector", nominal.len()),
            ("controllable mask", controllable.len()),
            ("parameter bounds", bounds.len()),
        ] {
            if got != m {
                return Err(Error::Dimension { what, expected: m, got });
            }
        }
        let space = ParameterSpace {
            names,
            nominal,
            controllable,
            bounds,
        };
        space.check(&space.nominal)?;
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn nominal(&self) -> &DVector<f64> {
        &self.nominal
    }

    pub fn bounds(&self, i: usize) -> Option<(f64, f64)> {
        self.bounds[i]
    }

    pub fn is_controllable(&self, i: usize) -> bool {
        self.controllable[i]
    }

    pub fn controllable_mask(&self) -> &[bool] {
        &self.controllable
    }

    pub fn controllable_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.controllable[i]).collect()
    }

    pub fn uncontrollable_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.controllable[i]).collect()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Checks that every value lies within its bounds.
    pub fn check(&self, values: &DVector<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: self.len(),
                got: values.len(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name: self.names[i].clone(),
                    reason: "value is not finite".into(),
                });
            }
            if let Some((lo, hi)) = self.bounds[i] {
                if *v < lo || *v > hi {
                    return Err(Error::InvalidParameter {
                        name: self.names[i].clone(),
                        reason: format!("value {v} outside [{lo}, {hi}]"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Returns a copy of the space with a different nominal point.
    pub fn with_nominal(&self, nominal: DVector<f64>) -> Result<Self> {
        self.check(&nominal)?;
        Ok(ParameterSpace {
            nominal,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> ParameterSpace {
        ParameterSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            vec![true, false, true],
            vec![Some((0.0, 5.0)), None, None],
        )
        .unwrap()
    }

    #[test]
    fn partition() {
        let s = space();
        let mut all = s.controllable_indices();
        all.extend(s.uncontrollable_indices());
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert_eq!(s.index("b"), Some(1));
    }

    #[test]
    fn bounds_enforced() {
        let s = space();
        assert!(s.with_nominal(DVector::from_vec(vec![6.0, 0.0, 0.0])).is_err());
        assert!(s.with_nominal(DVector::from_vec(vec![5.0, -9.0, 0.0])).is_ok());
        let r = ParameterSpace::new(vec!["a".into()], DVector::from_vec(vec![-1.0]), vec![true], vec![Some((0.0, 1.0))]);
        assert!(matches!(r, Err(Error::InvalidParameter { .. })));
    }
}
