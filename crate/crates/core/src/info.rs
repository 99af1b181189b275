//! Entropy and mutual information over finite alphabets (bits).

pub const LN2: f64 = std::f64::consts::LN_2;

pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// Binary entropy H_b(p) in bits.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_bits(&[p, 1.0 - p])
}

/// I(A;B) from a joint pmf given as rows indexed by `a`.
pub fn mi_from_joint_bits(joint: &[Vec<f64>]) -> f64 {
    let cols = joint.first().map_or(0, Vec::len);
    let pa: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let mut pb = vec![0.0; cols];
    for r in joint {
        for (b, &v) in r.iter().enumerate() {
            pb[b] += v;
        }
    }
    let mut mi = 0.0;
    for (a, r) in joint.iter().enumerate() {
        for (b, &v) in r.iter().enumerate() {
            if v > 0.0 {
                mi += v * (v / (pa[a] * pb[b])).ln();
            }
        }
    }
    (mi / LN2).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_basics() {
        assert_eq!(entropy_bits(&[1.0, 0.0]), 0.0);
        assert!((entropy_bits(&[0.25; 4]) - 2.0).abs() < 1e-15);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn joint_mi_of_independent_and_copied_variables() {
        let indep = vec![vec![0.06, 0.14], vec![0.24, 0.56]];
        assert!(mi_from_joint_bits(&indep) < 1e-15);
        let copy = vec![vec![0.3, 0.0], vec![0.0, 0.7]];
        assert!((mi_from_joint_bits(&copy) - binary_entropy(0.3)).abs() < 1e-12);
    }
}
