// SPDX-License-Identifier: Apache-2.0

//! Multi-index helpers shared by the Gevrey sums and the commutator tower.

/// A multi-index in `N_0^n`.
pub type MultiIndex = Vec<usize>;

pub fn order(alpha: &[usize]) -> usize {
    alpha.iter().sum()
}

/// `alpha! = prod alpha_i!`
pub fn factorial(alpha: &[usize]) -> f64 {
    alpha.iter().map(|&a| scalar_factorial(a)).product()
}

pub fn scalar_factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

pub fn scalar_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `binom(alpha, gamma) = prod binom(alpha_i, gamma_i)`
pub fn binomial(alpha: &[usize], gamma: &[usize]) -> f64 {
    alpha
        .iter()
        .zip(gamma)
        .map(|(&a, &g)| scalar_binomial(a, g))
        .product()
}

/// Componentwise `gamma <= alpha`.
pub fn leq(gamma: &[usize], alpha: &[usize]) -> bool {
    gamma.iter().zip(alpha).all(|(g, a)| g <= a)
}

pub fn unit(n: usize, i: usize) -> MultiIndex {
    let mut e = vec![0; n];
    e[i] = 1;
    e
}

pub fn add(a: &[usize], b: &[usize]) -> MultiIndex {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[usize], b: &[usize]) -> MultiIndex {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// All multi-indices of length `n` with total order `<= max_order`, sorted by
/// total order and then lexicographically.
pub fn up_to_order(n: usize, max_order: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    for k in 0..=max_order {
        out.extend(of_order(n, k));
    }
    out
}

/// All multi-indices of length `n` with total order exactly `k`.
pub fn of_order(n: usize, k: usize) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    if n == 0 {
        if k == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut current = vec![0; n];
    fill(&mut current, 0, k, &mut out);
    out
}

fn fill(current: &mut Vec<usize>, pos: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
    let n = current.len();
    if pos == n - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v;
        fill(current, pos + 1, remaining - v, out);
    }
}

/// All multi-indices `gamma <= alpha` (componentwise box).
pub fn box_below(alpha: &[usize]) -> Vec<MultiIndex> {
    let mut out = vec![Vec::with_capacity(alpha.len())];
    for &a in alpha {
        let mut next = Vec::with_capacity(out.len() * (a + 1));
        for prefix in &out {
            for v in 0..=a {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_stars_and_bars() {
        // C(k + n - 1, n - 1)
        assert_eq!(of_order(2, 4).len(), 5);
        assert_eq!(of_order(3, 2).len(), 6);
        assert_eq!(up_to_order(2, 6).len(), 28);
        assert_eq!(up_to_order(1, 0), vec![vec![0]]);
    }

    #[test]
    fn box_enumeration() {
        let b = box_below(&[2, 1]);
        assert_eq!(b.len(), 6);
        assert!(b.iter().all(|g| leq(g, &[2, 1])));
    }

    #[test]
    fn factorials_and_binomials() {
        assert_eq!(factorial(&[3, 2]), 12.0);
        assert_eq!(binomial(&[4, 2], &[2, 1]), 12.0);
        assert_eq!(scalar_binomial(5, 7), 0.0);
    }
}
