//! Sparse bivariate polynomials for the nonlinear and forcing terms.

use serde::{Deserialize, Serialize};

/// Σ c·xⁱyʲ stored as `(i, j, c)`; like terms are merged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Poly2 {
    terms: Vec<(u32, u32, f64)>,
}

impl Poly2 {
    pub fn new(terms: impl IntoIterator<Item = (u32, u32, f64)>) -> Self {
        let mut p = Self::default();
        for (i, j, c) in terms {
            p.add_term(i, j, c);
        }
        p
    }

    pub fn monomial(i: u32, j: u32, c: f64) -> Self {
        Self::new([(i, j, c)])
    }

    pub fn terms(&self) -> &[(u32, u32, f64)] {
        &self.terms
    }

    fn add_term(&mut self, i: u32, j: u32, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.iter_mut().find(|t| t.0 == i && t.1 == j) {
            Some(t) => t.2 += c,
            None => self.terms.push((i, j, c)),
        }
        self.terms.retain(|t| t.2 != 0.0);
        self.terms.sort_by_key(|t| (t.0 + t.1, t.0));
    }

    pub fn add(&self, other: &Poly2) -> Poly2 {
        let mut p = self.clone();
        for &(i, j, c) in &other.terms {
            p.add_term(i, j, c);
        }
        p
    }

    pub fn scale(&self, s: f64) -> Poly2 {
        Poly2::new(self.terms.iter().map(|&(i, j, c)| (i, j, c * s)))
    }

    pub fn mul(&self, other: &Poly2) -> Poly2 {
        let mut p = Poly2::default();
        for &(i, j, c) in &self.terms {
            for &(k, l, d) in &other.terms {
                p.add_term(i + k, j + l, c * d);
            }
        }
        p
    }

    pub fn pow(&self, n: u32) -> Poly2 {
        (0..n).fold(Poly2::monomial(0, 0, 1.0), |acc, _| acc.mul(self))
    }

    /// Lowest total degree present (`None` for the zero polynomial).
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.iter().map(|t| t.0 + t.1).min()
    }

    /// True when the polynomial and its first derivatives vanish at 0.
    pub fn is_higher_order(&self) -> bool {
        self.min_degree().is_none_or(|d| d >= 2)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms.iter().map(|&(i, j, c)| c * x.powi(i as i32) * y.powi(j as i32)).sum()
    }

    pub fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let mut gx = 0.0;
        let mut gy = 0.0;
        for &(i, j, c) in &self.terms {
            if i > 0 {
                gx += c * i as f64 * x.powi(i as i32 - 1) * y.powi(j as i32);
            }
            if j > 0 {
                gy += c * j as f64 * x.powi(i as i32) * y.powi(j as i32 - 1);
            }
        }
        (gx, gy)
    }
}
