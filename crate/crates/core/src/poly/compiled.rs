use super::Polynomial;

/// Several polynomials in the same variables, flattened for repeated
/// evaluation. Powers of each variable are shared across all terms.
#[derive(Clone, Debug)]
pub struct CompiledPolynomials {
    num_vars: usize,
    stride: usize,
    /// Per polynomial, the range into `terms`.
    ranges: Vec<(usize, usize)>,
    terms: Vec<(f64, Vec<(usize, u32)>)>,
}

impl CompiledPolynomials {
    pub fn new(polys: &[Polynomial]) -> Self {
        let num_vars = polys.first().map_or(0, Polynomial::num_vars);
        let mut max_exp = 0;
        let mut terms = Vec::new();
        let mut ranges = Vec::with_capacity(polys.len());
        for p in polys {
            assert_eq!(p.num_vars(), num_vars, "compiled polynomials share variables");
            let start = terms.len();
            for (m, c) in p.terms() {
                let factors: Vec<(usize, u32)> = m.exponents().iter().enumerate().filter(|(_, e)| **e > 0).map(|(v, e)| (v, *e)).collect();
                max_exp = factors.iter().fold(max_exp, |a, f| a.max(f.1));
                terms.push((c, factors));
            }
            ranges.push((start, terms.len()));
        }
        CompiledPolynomials {
            num_vars,
            stride: max_exp as usize + 1,
            ranges,
            terms,
        }
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Scratch buffer sized for [`Self::evaluate_into`].
    pub fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.num_vars * self.stride]
    }

    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        assert_eq!(x.len(), self.num_vars, "evaluation point dimension");
        for (v, xv) in x.iter().enumerate() {
            let row = &mut scratch[v * self.stride..(v + 1) * self.stride];
            row[0] = 1.0;
            for k in 1..self.stride {
                row[k] = row[k - 1] * xv;
            }
        }
        for (o, &(a, b)) in out.iter_mut().zip(&self.ranges) {
            *o = self.terms[a..b]
                .iter()
                .map(|(c, f)| f.iter().fold(*c, |acc, &(v, e)| acc * scratch[v * self.stride + e as usize]))
                .sum();
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut scratch = self.scratch();
        self.evaluate_into(x, &mut out, &mut scratch);
        out
    }
}
