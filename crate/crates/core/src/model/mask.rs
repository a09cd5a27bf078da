use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Whether a fixation token may attend to itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CausalMode {
    /// Fixation `i` sees fixations strictly before it.
    #[default]
    Strict,
    /// Fixation `i` also sees itself.
    Inclusive,
}

impl std::str::FromStr for CausalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(CausalMode::Strict),
            "inclusive" => Ok(CausalMode::Inclusive),
            o => Err(format!("unknown causal mode {o:?} (expected strict|inclusive)")),
        }
    }
}

/// Additive attention mask over `[peripheral tokens; fixation tokens]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeripheralCausalMask {
    pub n_peripheral: usize,
    pub t: usize,
    pub mode: CausalMode,
    /// `(N_p + T) × (N_p + T)` over `{0, -inf}`.
    pub matrix: Tensor,
}

/// Peripheral-aware causal mask: with 1-based `i, j`, entry is 0 when `j ≤ N_p` or
/// `i > j` (`i ≥ j` in inclusive mode), and `-inf` otherwise.
///
/// With `n_peripheral == 0` in strict mode the first fixation would have
/// nothing to attend to, so its diagonal entry alone is opened.
pub fn build_mask(n_peripheral: usize, t: usize, mode: CausalMode) -> PeripheralCausalMask {
    assert!(t >= 1, "need at least one fixation");
    let n = n_peripheral + t;
    let mut data = vec![f64::NEG_INFINITY; n * n];
    for i in 1..=n {
        for j in 1..=n {
            let causal = match mode {
                CausalMode::Strict => i > j,
                CausalMode::Inclusive => i >= j,
            };
            if j <= n_peripheral || causal {
                data[(i - 1) * n + (j - 1)] = 0.0;
            }
        }
    }
    if n_peripheral == 0 && mode == CausalMode::Strict {
        data[0] = 0.0;
    }
    PeripheralCausalMask {
        n_peripheral,
        t,
        mode,
        matrix: Tensor::new(vec![n, n], data).expect("shape"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEG: f64 = f64::NEG_INFINITY;

    #[test]
    fn two_by_two_examples() {
        let m = build_mask(2, 2, CausalMode::Strict).matrix;
        assert_eq!(m.row(2), &[0., 0., NEG, NEG]);
        assert_eq!(m.row(3), &[0., 0., 0., NEG]);
        let m = build_mask(2, 2, CausalMode::Inclusive).matrix;
        assert_eq!(m.row(2), &[0., 0., 0., NEG]);
        assert_eq!(m.row(3), &[0., 0., 0., 0.]);
    }

    #[test]
    fn peripheral_block_open_and_rows_nonempty() {
        for mode in [CausalMode::Strict, CausalMode::Inclusive] {
            for np in 0..4 {
                for t in 1..5 {
                    let m = build_mask(np, t, mode).matrix;
                    for i in 0..np {
                        assert!(m.row(i)[..np].iter().all(|&v| v == 0.0));
                    }
                    for i in 0..np + t {
                        assert!(m.row(i).contains(&0.0), "row {i} of ({np}, {t}, {mode:?})");
                    }
                }
            }
        }
    }
}
