use std::io::Read;

use crate::error::{invalid, Error, Result};

use super::tree::{Leaf, MergeTree, Shape};

/// A finite metric measure space given by its distance matrix.
///
/// Construction enforces the structural conditions (square, symmetric, zero
/// diagonal, non-negative entries, strictly positive masses). The strong
/// triangle inequality is reported by [`validate_ultrametric`](Self::validate_ultrametric).
#[derive(Debug, Clone, PartialEq)]
pub struct UltrametricMatrixSpace {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
    mass: Vec<f64>,
}

/// A triple breaking `d(i,j) <= max(d(i,k), d(k,j))`; `slack` is the excess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub slack: f64,
}

impl UltrametricMatrixSpace {
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>, mass: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return invalid("the empty space is not allowed");
        }
        if dist.len() != n || mass.len() != n {
            return invalid(format!(
                "{} labels but {} matrix rows and {} masses",
                n,
                dist.len(),
                mass.len()
            ));
        }
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return invalid(format!("row {i} has {} entries, expected {n}", row.len()));
            }
            if row[i] != 0.0 {
                return invalid(format!("diagonal entry {i} is {}, expected 0", row[i]));
            }
            for (j, &d) in row.iter().enumerate() {
                if !(d.is_finite() && d >= 0.0) {
                    return invalid(format!("entry ({i},{j}) = {d} is not a finite non-negative number"));
                }
                if d != dist[j][i] {
                    return invalid(format!("matrix is not symmetric at ({i},{j})"));
                }
            }
        }
        for (i, &m) in mass.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return invalid(format!("mass of point {i} is {m}; masses must be positive"));
            }
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != n {
            return invalid("labels must be unique");
        }
        Ok(UltrametricMatrixSpace { labels, dist, mass })
    }

    /// Unlabelled convenience constructor; points are named `0..n`.
    pub fn from_matrix(dist: Vec<Vec<f64>>, mass: Vec<f64>) -> Result<Self> {
        let labels = (0..dist.len()).map(|i| i.to_string()).collect();
        Self::new(labels, dist, mass)
    }

    /// Reads the CSV layout: first row labels, then `n` rows of distances,
    /// then one row of masses.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(str::to_owned).collect::<Vec<_>>());
        }
        if rows.len() < 2 {
            return invalid("matrix CSV needs a label row, distance rows and a mass row");
        }
        let labels = rows[0].clone();
        let n = labels.len();
        if rows.len() != n + 2 {
            return invalid(format!("expected {} CSV rows for {n} labels, found {}", n + 2, rows.len()));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Invalid(format!("cannot parse '{s}' as a number")))
        };
        let dist = rows[1..=n]
            .iter()
            .map(|r| r.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let mass = rows[n + 1].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
        Self::new(labels, dist, mass)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.labels.join(","));
        out.push('\n');
        for row in &self.dist {
            let cells: Vec<String> = row.iter().map(|d| format!("{d:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let cells: Vec<String> = self.mass.iter().map(|m| format!("{m:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dist(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Every triple `(i, j, k)` with `i < j` and `k` distinct from both for
    /// which the strong triangle inequality fails.
    pub fn validate_ultrametric(&self) -> Vec<Violation> {
        let n = self.len();
        let d = &self.dist;
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let bound = d[i][k].max(d[k][j]);
                    if d[i][j] > bound {
                        out.push(Violation {
                            i,
                            j,
                            k,
                            slack: d[i][j] - bound,
                        });
                    }
                }
            }
        }
        out
    }

    /// Merges points at distance zero into one point carrying their joint
    /// mass. The representative keeps the first label of its class.
    pub fn quotient_zero_distance(&self) -> Result<Self> {
        let n = self.len();
        let mut class = vec![usize::MAX; n];
        let mut reps = Vec::new();
        for i in 0..n {
            if class[i] != usize::MAX {
                continue;
            }
            class[i] = reps.len();
            for j in i + 1..n {
                if class[j] == usize::MAX && self.dist[i][j] == 0.0 {
                    class[j] = reps.len();
                }
            }
            reps.push(i);
        }
        let mut mass = vec![0.0; reps.len()];
        for i in 0..n {
            mass[class[i]] += self.mass[i];
        }
        let labels = reps.iter().map(|&i| self.labels[i].clone()).collect();
        let dist = reps
            .iter()
            .map(|&i| reps.iter().map(|&j| self.dist[i][j]).collect())
            .collect();
        Self::new(labels, dist, mass)
    }

    /// Single-linkage agglomeration. On an ultrametric this coincides with
    /// complete linkage; points tied at one level join a single multifurcation.
    pub fn to_merge_tree(&self) -> Result<MergeTree> {
        let violations = self.validate_ultrametric();
        if !violations.is_empty() {
            let worst = violations.iter().map(|v| v.slack).fold(0.0, f64::max);
            return Err(Error::NotUltrametric {
                count: violations.len(),
                worst_slack: worst,
            });
        }
        let n = self.len();
        for i in 0..n {
            for j in i + 1..n {
                if self.dist[i][j] == 0.0 {
                    return invalid(format!(
                        "points '{}' and '{}' are at distance 0; quotient the space first",
                        self.labels[i], self.labels[j]
                    ));
                }
            }
        }
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((self.dist[i][j], i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut comp: Vec<usize> = (0..n).collect();
        let mut shapes: Vec<Option<Shape>> = self
            .labels
            .iter()
            .zip(&self.mass)
            .map(|(l, &m)| Some(Shape::Leaf(Leaf::new(l.clone(), m))))
            .collect();
        fn find(comp: &mut [usize], mut x: usize) -> usize {
            while comp[x] != x {
                comp[x] = comp[comp[x]];
                x = comp[x];
            }
            x
        }
        let mut idx = 0;
        while idx < pairs.len() {
            let level = pairs[idx].0;
            let mut end = idx;
            while end < pairs.len() && pairs[end].0 == level {
                end += 1;
            }
            // Group the current components joined at this level.
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            let mut links: Vec<(usize, usize)> = Vec::new();
            for &(_, i, j) in &pairs[idx..end] {
                let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                if a != b {
                    links.push((a, b));
                }
            }
            if !links.is_empty() {
                let mut local: std::collections::BTreeMap<usize, usize> = Default::default();
                let mut nodes = Vec::new();
                for &(a, b) in &links {
                    for x in [a, b] {
                        local.entry(x).or_insert_with(|| {
                            nodes.push(x);
                            nodes.len() - 1
                        });
                    }
                }
                let mut lp: Vec<usize> = (0..nodes.len()).collect();
                for &(a, b) in &links {
                    let (x, y) = (find(&mut lp, local[&a]), find(&mut lp, local[&b]));
                    if x != y {
                        lp[x.max(y)] = x.min(y);
                    }
                }
                for (li, &c) in nodes.iter().enumerate() {
                    let r = find(&mut lp, li);
                    match groups.iter_mut().find(|g| g.0 == r) {
                        Some(g) => g.1.push(c),
                        None => groups.push((r, vec![c])),
                    }
                }
                for (_, members) in groups {
                    let head = members[0];
                    let children = members
                        .iter()
                        .map(|&c| shapes[c].take().expect("component shape present"))
                        .collect();
                    for &c in &members {
                        comp[c] = head;
                    }
                    shapes[head] = Some(Shape::node(level, children));
                }
            }
            idx = end;
        }
        let root = find(&mut comp, 0);
        MergeTree::from_shape(shapes[root].take().expect("root shape"))
    }
}

impl MergeTree {
    pub fn to_matrix(&self) -> UltrametricMatrixSpace {
        UltrametricMatrixSpace {
            labels: self.leaves().iter().map(|l| l.label.clone()).collect(),
            dist: self.distance_matrix(),
            mass: self.masses(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(d: Vec<Vec<f64>>) -> UltrametricMatrixSpace {
        let n = d.len();
        UltrametricMatrixSpace::from_matrix(d, vec![1.0; n]).unwrap()
    }

    #[test]
    fn equilateral_is_ultrametric() {
        let s = space(vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ]);
        assert!(s.validate_ultrametric().is_empty());
        let t = s.to_merge_tree().unwrap();
        assert_eq!(t.merges().len(), 1);
        assert_eq!(t.merges()[0].children.len(), 3);
        assert_eq!(t.root_height(), 1.0);
    }

    #[test]
    fn isoceles_with_longer_base_is_ultrametric() {
        let e = 1e-3;
        let s = space(vec![
            vec![0.0, 1.0, 1.0 + e],
            vec![1.0, 0.0, 1.0 + e],
            vec![1.0 + e, 1.0 + e, 0.0],
        ]);
        assert!(s.validate_ultrametric().is_empty());
    }

    #[test]
    fn scalene_triangle_violates() {
        let s = space(vec![
            vec![0.0, 1.0, 4.0],
            vec![1.0, 0.0, 2.0],
            vec![4.0, 2.0, 0.0],
        ]);
        let v = s.validate_ultrametric();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].i, v[0].j, v[0].k), (0, 2, 1));
        assert_eq!(v[0].slack, 2.0);
        assert!(matches!(s.to_merge_tree(), Err(Error::NotUltrametric { .. })));
    }

    #[test]
    fn structural_checks() {
        assert!(UltrametricMatrixSpace::from_matrix(vec![], vec![]).is_err());
        assert!(UltrametricMatrixSpace::from_matrix(vec![vec![0.0, 1.0], vec![2.0, 0.0]], vec![1.0, 1.0]).is_err());
        assert!(UltrametricMatrixSpace::from_matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 0.0]).is_err());
        assert!(UltrametricMatrixSpace::from_matrix(vec![vec![1.0]], vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = UltrametricMatrixSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                vec![0.0, 1.0, 2.5],
                vec![1.0, 0.0, 2.5],
                vec![2.5, 2.5, 0.0],
            ],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let back = UltrametricMatrixSpace::from_csv_reader(s.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn zero_distance_quotient() {
        let s = UltrametricMatrixSpace::from_matrix(
            vec![
                vec![0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 1.0, 0.0],
            ],
            vec![0.25, 0.25, 0.5],
        )
        .unwrap();
        assert!(s.to_merge_tree().is_err());
        let q = s.quotient_zero_distance().unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.mass(), &[0.5, 0.5]);
        assert_eq!(q.to_merge_tree().unwrap().root_height(), 1.0);
    }
}
