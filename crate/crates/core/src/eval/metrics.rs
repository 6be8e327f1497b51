use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} labels vs {b} cluster assignments")));
    }
    if a == 0 {
        return Err(Error::Contract("metrics need at least one node".into()));
    }
    Ok(())
}

/// `1 - H(target | given) / H(target)` with natural-log entropies; 1 when
/// `H(target) = 0`.
fn conditional_score(target: &[usize], given: &[usize]) -> f64 {
    let n = target.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut t_count: BTreeMap<usize, usize> = BTreeMap::new();
    let mut g_count: BTreeMap<usize, usize> = BTreeMap::new();
    for (&t, &g) in target.iter().zip(given) {
        *joint.entry((t, g)).or_default() += 1;
        *t_count.entry(t).or_default() += 1;
        *g_count.entry(g).or_default() += 1;
    }
    let h_target: f64 = -t_count
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>();
    if h_target == 0.0 {
        return 1.0;
    }
    let h_cond: f64 = -joint
        .iter()
        .map(|(&(_, g), &c)| {
            let c = c as f64;
            c / n * (c / g_count[&g] as f64).ln()
        })
        .sum::<f64>();
    1.0 - h_cond / h_target
}

/// Each cluster contains members of a single class.
pub fn homogeneity(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    check_lengths(labels.len(), clusters.len())?;
    Ok(conditional_score(labels, clusters))
}

/// All members of a class are assigned to the same cluster.
pub fn completeness(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    check_lengths(labels.len(), clusters.len())?;
    Ok(conditional_score(clusters, labels))
}

/// Mean silhouette over all points with Euclidean distances. Points in
/// singleton clusters score 0, as do points with `a = b = 0`.
pub fn silhouette(emb: &Tensor, clusters: &[usize]) -> Result<f64> {
    let n = emb.rows();
    if emb.shape().len() != 2 || clusters.len() != n {
        return Err(Error::Dimension(format!(
            "embedding {:?} vs {} cluster assignments",
            emb.shape(),
            clusters.len()
        )));
    }
    let ids: Vec<usize> = {
        let mut ids = clusters.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    if ids.len() < 2 {
        return Err(Error::Contract(format!("silhouette needs at least two clusters, got {}", ids.len())));
    }
    let slot = |c: usize| ids.binary_search(&c).expect("known cluster");
    let sizes = clusters.iter().fold(vec![0usize; ids.len()], |mut acc, &c| {
        acc[slot(c)] += 1;
        acc
    });

    let mut total = 0.0;
    let mut sums = vec![0.0; ids.len()];
    for i in 0..n {
        let own = slot(clusters[i]);
        if sizes[own] == 1 {
            continue;
        }
        sums.fill(0.0);
        let xi = emb.row(i);
        for j in 0..n {
            if j != i {
                let d: f64 = xi.iter().zip(emb.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                sums[slot(clusters[j])] += d;
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..ids.len())
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_trivial() {
        let l = [0, 0, 1, 1, 2];
        assert_eq!(homogeneity(&l, &l).unwrap(), 1.0);
        assert_eq!(completeness(&l, &l).unwrap(), 1.0);
        assert_eq!(homogeneity(&l, &[0; 5]).unwrap(), 0.0);
        assert_eq!(completeness(&[0; 4], &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(homogeneity(&[3; 4], &[0, 1, 2, 3]).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_homogeneity() {
        // H(L) = ln 2. Cluster 0 = {0}: pure. Cluster 1 = {0, 1, 1}:
        // H(L|C) = -(1/4) ln(1/3) - (2/4) ln(2/3).
        let h_l = 2f64.ln();
        let h_lc = -(0.25 * (1.0f64 / 3.0).ln() + 0.5 * (2.0f64 / 3.0).ln());
        let got = homogeneity(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert!((got - (1.0 - h_lc / h_l)).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(homogeneity(&[0, 1], &[0]), Err(Error::Dimension(_))));
        assert!(matches!(completeness(&[0], &[0, 1]), Err(Error::Dimension(_))));
    }

    #[test]
    fn silhouette_four_points() {
        // {0,1} vs {10,11}: a = 1 for everyone; b = 10.5, 9.5, 9.5, 10.5.
        let e = Tensor::matrix(4, 1, vec![0.0, 1.0, 10.0, 11.0]).unwrap();
        let want = (9.5 / 10.5 + 8.5 / 9.5 + 8.5 / 9.5 + 9.5 / 10.5) / 4.0;
        let got = silhouette(&e, &[0, 0, 1, 1]).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn silhouette_degenerate_cases() {
        let same = Tensor::zeros(&[4, 2]);
        assert_eq!(silhouette(&same, &[0, 0, 1, 1]).unwrap(), 0.0);
        let e = Tensor::matrix(3, 1, vec![0.0, 0.1, 5.0]).unwrap();
        // Point 2 is a singleton and scores 0.
        let want = ((1.0 - 0.1 / 5.0) + (1.0 - 0.1 / 4.9)) / 3.0;
        assert!((silhouette(&e, &[0, 0, 7]).unwrap() - want).abs() < 1e-12);
        assert!(matches!(silhouette(&e, &[1, 1, 1]), Err(Error::Contract(_))));
    }
}
