//! Several discrete sensitive attributes treated as one product attribute.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};

/// Mixed-radix encoding of several discrete columns; the first column is the
/// most significant digit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinedSensitive {
    pub values: Vec<usize>,
    /// Alphabet size of each source column.
    pub radices: Vec<usize>,
}

impl CombinedSensitive {
    pub fn alphabet_size(&self) -> usize {
        self.radices.iter().product()
    }

    /// Component values of a combined code.
    pub fn decode(&self, code: usize) -> Result<Vec<usize>> {
        decode(code, &self.radices)
    }

    /// Every combined code with its components, in code order.
    pub fn mapping(&self) -> Vec<(usize, Vec<usize>)> {
        (0..self.alphabet_size())
            .map(|code| (code, decode(code, &self.radices).expect("code in range")))
            .collect()
    }
}

pub fn combine_sensitive(columns: &[Vec<usize>], radices: &[usize]) -> Result<CombinedSensitive> {
    if columns.is_empty() {
        return Err(invalid("at least one sensitive column is required"));
    }
    if columns.len() != radices.len() {
        return Err(shape(format!("{} columns but {} alphabet sizes", columns.len(), radices.len())));
    }
    let n = columns[0].len();
    if let Some(col) = columns.iter().find(|c| c.len() != n) {
        return Err(shape(format!("sensitive columns have lengths {n} and {}", col.len())));
    }
    if radices.contains(&0) {
        return Err(invalid("alphabet sizes must be positive"));
    }
    radices
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r))
        .ok_or_else(|| invalid("combined alphabet overflows usize"))?;
    let mut values = vec![0usize; n];
    for (col, &r) in columns.iter().zip(radices) {
        for (v, &x) in values.iter_mut().zip(col) {
            if x >= r {
                return Err(invalid(format!("sensitive value {x} outside 0..{r}")));
            }
            *v = *v * r + x;
        }
    }
    Ok(CombinedSensitive {
        values,
        radices: radices.to_vec(),
    })
}

fn decode(mut code: usize, radices: &[usize]) -> Result<Vec<usize>> {
    let total: usize = radices.iter().product();
    if code >= total {
        return Err(invalid(format!("code {code} outside 0..{total}")));
    }
    let mut out = vec![0; radices.len()];
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = code % r;
        code /= r;
    }
    Ok(out)
}
