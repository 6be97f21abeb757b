use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NormalizeError;

pub const DEFAULT_THRESHOLD: f64 = 90.0;

/// Edit distance over Unicode scalar values (insert, delete, substitute).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `(1 − d / max(|a|, |b|)) · 100`; two empty strings are identical (100).
pub fn similarity_ratio(a: &str, b: &str) -> f64 {
    let m = a.chars().count().max(b.chars().count());
    if m == 0 {
        return 100.0;
    }
    (1.0 - levenshtein(a, b) as f64 / m as f64) * 100.0
}

/// `ratio ≥ threshold`, evaluated on integers so boundary cases are exact.
pub fn meets_threshold(a: &str, b: &str, threshold: f64) -> bool {
    let m = a.chars().count().max(b.chars().count());
    if m == 0 {
        return true;
    }
    let kept = m - levenshtein(a, b);
    (kept * 100) as f64 >= threshold * m as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeSource {
    EditDistance,
    Llm,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub canonical: String,
    /// Sorted, distinct.
    pub members: Vec<String>,
    /// Total occurrences of all members.
    pub frequency: usize,
    pub source: MergeSource,
}

/// Most frequent member; ties by lexicographic order.
pub(crate) fn pick_canonical<'a>(members: impl IntoIterator<Item = &'a String>, counts: &BTreeMap<String, usize>) -> String {
    members
        .into_iter()
        .max_by(|a, b| counts[*a].cmp(&counts[*b]).then_with(|| b.cmp(a)))
        .expect("cluster is non-empty")
        .clone()
}

pub fn count_names<'a>(names: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for n in names {
        *counts.entry(n.to_string()).or_default() += 1;
    }
    counts
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Single-linkage clusters of names whose pairwise ratio meets `threshold`.
///
/// `names` may repeat; repetition drives the canonical choice. Clusters
/// come back sorted by canonical name.
pub fn cluster_by_threshold<'a>(
    names: impl IntoIterator<Item = &'a str>,
    threshold: f64,
) -> Result<Vec<Cluster>, NormalizeError> {
    if !(threshold > 0.0 && threshold <= 100.0) {
        return Err(NormalizeError::Threshold(threshold));
    }
    let counts = count_names(names);
    let unique: Vec<&String> = counts.keys().collect();
    let mut parent: Vec<usize> = (0..unique.len()).collect();
    for i in 0..unique.len() {
        for j in i + 1..unique.len() {
            if meets_threshold(unique[i], unique[j], threshold) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for i in 0..unique.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(unique[i].clone());
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(|members| Cluster {
            canonical: pick_canonical(&members, &counts),
            frequency: members.iter().map(|m| counts[m]).sum(),
            members,
            source: MergeSource::EditDistance,
        })
        .collect();
    clusters.sort_by(|a, b| a.canonical.cmp(&b.canonical));
    Ok(clusters)
}

/// Raw name → canonical name. Unknown names map to themselves.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalMap {
    map: BTreeMap<String, String>,
    clusters: Vec<Cluster>,
}

impl CanonicalMap {
    pub fn from_clusters(clusters: Vec<Cluster>) -> Self {
        let mut map = BTreeMap::new();
        for c in &clusters {
            for m in &c.members {
                map.insert(m.clone(), c.canonical.clone());
            }
        }
        CanonicalMap { map, clusters }
    }

    pub fn canonical<'a>(&'a self, name: &'a str) -> &'a str {
        self.map.get(name).map_or(name, String::as_str)
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(similarity_ratio("H2O", "H2O"), 100.0);
        assert_eq!(similarity_ratio("", ""), 100.0);
        assert_eq!(similarity_ratio("abc", ""), 0.0);
        // Scratch-script oracle: distance 1 over 13 characters.
        assert!((similarity_ratio("Cd(NO3)2.4H2O", "Cd(NO3)2?4H2O") - 92.3077).abs() < 0.01);
        // distance("water", "ethanol") = 6, so 1/7 of the length survives.
        assert!((similarity_ratio("water", "ethanol") - 14.285714285714285).abs() < 1e-9);
    }

    #[test]
    fn exact_boundary() {
        // 1 edit over 10 characters is exactly 90.
        assert!(meets_threshold("abcdefghij", "abcdefghiX", 90.0));
        assert!(!meets_threshold("abcdefghi", "abcdefghX", 90.0));
    }

    #[test]
    fn clustering() {
        let names = ["Cd(NO3)2.4H2O", "Cd(NO3)2?4H2O", "Cd(NO3)2?4H2O", "DMF", "D.M.F", "water"];
        let c = cluster_by_threshold(names, 90.0).unwrap();
        assert_eq!(c.len(), 4);
        let cd = c.iter().find(|c| c.members.len() == 2).unwrap();
        assert_eq!(cd.canonical, "Cd(NO3)2?4H2O");
        assert_eq!(cd.frequency, 3);
        let map = CanonicalMap::from_clusters(c);
        assert_eq!(map.canonical("Cd(NO3)2.4H2O"), "Cd(NO3)2?4H2O");
        assert_eq!(map.canonical(map.canonical("Cd(NO3)2.4H2O")), "Cd(NO3)2?4H2O");
        assert_eq!(map.canonical("unseen"), "unseen");
    }

    #[test]
    fn degenerate_thresholds() {
        assert_eq!(cluster_by_threshold(["only"], 90.0).unwrap().len(), 1);
        let c = cluster_by_threshold(["ab", "ab", "ac"], 100.0).unwrap();
        assert_eq!(c.len(), 2);
        assert!(cluster_by_threshold(["a"], 0.0).is_err());
        assert!(cluster_by_threshold(["a"], 100.5).is_err());
    }

    #[test]
    fn canonical_tie_is_lexicographic() {
        let c = cluster_by_threshold(["abcdefghij", "abcdefghiX"], 90.0).unwrap();
        assert_eq!(c[0].canonical, "abcdefghiX");
    }
}
