//! Weighted graphs, their step-kernel embedding and the truncation operator.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric edge-weight matrix with zero diagonal and optional non-negative
/// node weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    weights: Vec<f64>,
    node_weights: Option<Vec<f64>>,
}

impl WeightedGraph {
    /// Edgeless graph on `n` nodes.
    pub fn empty(n: usize) -> Self {
        WeightedGraph { n, weights: vec![0.0; n * n], node_weights: None }
    }

    /// Complete graph with every off-diagonal weight equal to `c`.
    pub fn complete(n: usize, c: f64) -> Self {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.set(i, j, c);
            }
        }
        g
    }

    /// Build from a dense row-major matrix, checking symmetry and the diagonal.
    pub fn from_matrix(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::Argument(format!("expected {} weights, got {}", n * n, weights.len())));
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::Argument(format!("diagonal entry ({i}, {i}) must be zero")));
            }
            for j in (i + 1)..n {
                let (a, b) = (weights[i * n + j], weights[j * n + i]);
                if a != b {
                    return Err(Error::Argument(format!("asymmetric weights at ({i}, {j}): {a} vs {b}")));
                }
                if !a.is_finite() {
                    return Err(Error::Argument(format!("non-finite weight at ({i}, {j})")));
                }
            }
        }
        Ok(WeightedGraph { n, weights, node_weights: None })
    }

    pub fn with_node_weights(mut self, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != self.n {
            return Err(Error::Argument(format!(
                "expected {} node weights, got {}",
                self.n,
                alpha.len()
            )));
        }
        if let Some((i, a)) = alpha.iter().enumerate().find(|(_, a)| !(**a >= 0.0 && a.is_finite())) {
            return Err(Error::Argument(format!("node weight {i} must be non-negative, got {a}")));
        }
        self.node_weights = Some(alpha);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Set the weight of the undirected pair `{i, j}`, `i != j`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, w: f64) {
        debug_assert_ne!(i, j);
        self.weights[i * self.n + j] = w;
        self.weights[j * self.n + i] = w;
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node_weights(&self) -> Option<&[f64]> {
        self.node_weights.as_deref()
    }

    /// Node weight `i`, defaulting to 1.
    pub fn node_weight(&self, i: usize) -> f64 {
        self.node_weights.as_ref().map_or(1.0, |a| a[i])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Mean of the `n(n-1)/2` edge weights.
    pub fn edge_mean(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                s += self.get(i, j);
            }
        }
        s / (self.n * (self.n - 1) / 2) as f64
    }

    /// Relabel nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                w[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        let node_weights = self.node_weights.as_ref().map(|a| perm.iter().map(|&p| a[p]).collect());
        WeightedGraph { n, weights: w, node_weights }
    }

    pub fn to_file(&self) -> GraphFile {
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let w = self.get(i, j);
                if w != 0.0 {
                    edges.push((i, j, w));
                }
            }
        }
        GraphFile { n: self.n, edges, node_weights: self.node_weights.clone() }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        file.into_graph()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    /// CSV edge list `i,j,weight` (header optional); `n` is one more than the
    /// largest index unless given.
    pub fn from_csv_reader<R: Read>(reader: R, n: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut edges = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Config(format!(
                    "line {}: expected 3 fields (i,j,weight), got {}",
                    line + 1,
                    rec.len()
                )));
            }
            let parsed = (rec[0].parse::<usize>(), rec[1].parse::<usize>(), rec[2].parse::<f64>());
            match parsed {
                (Ok(i), Ok(j), Ok(w)) => edges.push((i, j, w)),
                _ if line == 0 => continue, // header row
                _ => {
                    return Err(Error::Config(format!("line {}: cannot parse edge {:?}", line + 1, rec)));
                }
            }
        }
        let n = n.unwrap_or_else(|| edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0));
        GraphFile { n, edges, node_weights: None }.into_graph()
    }

    /// Read a graph from a `.json` or `.csv` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::from_csv_reader(text.as_bytes(), None),
            _ => Self::from_json_str(&text),
        }
    }
}

/// On-disk graph format: 0-based `[i, j, weight]` triples with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_weights: Option<Vec<f64>>,
}

impl GraphFile {
    pub fn into_graph(self) -> Result<WeightedGraph> {
        let mut g = WeightedGraph::empty(self.n);
        let mut seen = std::collections::HashSet::new();
        for (k, &(i, j, w)) in self.edges.iter().enumerate() {
            if i >= j || j >= self.n {
                return Err(Error::Config(format!(
                    "edge {k}: need 0 <= i < j < n = {}, got ({i}, {j})",
                    self.n
                )));
            }
            if !w.is_finite() {
                return Err(Error::Config(format!("edge {k}: non-finite weight")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Config(format!("edge {k}: duplicate pair ({i}, {j})")));
            }
            g.set(i, j, w);
        }
        match self.node_weights {
            Some(a) => g.with_node_weights(a),
            None => Ok(g),
        }
    }
}

/// Piecewise-constant symmetric function on `[0,1]²` with `n × n` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    n: usize,
    values: Vec<f64>,
}

impl StepKernel {
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * n {
            return Err(Error::Argument(format!("kernel of resolution {n} needs {} values", n * n)));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if values[i * n + j] != values[j * n + i] {
                    return Err(Error::Argument(format!("kernel not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(StepKernel { n, values })
    }

    pub fn constant(n: usize, u: f64) -> Self {
        StepKernel { n, values: vec![u; n * n] }
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Relabel cells: cell `(i, j)` of the result is `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                v[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        StepKernel { n, values: v }
    }

    /// Split every cell into `factor × factor` equal sub-cells.
    pub fn refine(&self, factor: usize) -> Self {
        let m = self.n * factor;
        let mut v = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                v[i * m + j] = self.get(i / factor, j / factor);
            }
        }
        StepKernel { n: m, values: v }
    }

    /// `(f_l(k), g_l(k))` with `f_l` clipping to `[-l, l]` and `g_l = k - f_l`.
    pub fn truncate(&self, l: f64) -> Result<(StepKernel, StepKernel)> {
        if !(l > 0.0) {
            return Err(Error::Argument(format!("truncation level must be positive, got {l}")));
        }
        let f: Vec<f64> = self.values.iter().map(|&x| x.clamp(-l, l)).collect();
        let g: Vec<f64> = self.values.iter().zip(&f).map(|(&x, &fx)| x - fx).collect();
        Ok((StepKernel { n: self.n, values: f }, StepKernel { n: self.n, values: g }))
    }

    /// Cell-wise difference `self - other` (equal resolutions).
    pub fn diff(&self, other: &StepKernel) -> Result<StepKernel> {
        if self.n != other.n {
            return Err(Error::Argument(format!(
                "resolution mismatch: {} vs {}; refine to a common resolution first",
                self.n, other.n
            )));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(StepKernel { n: self.n, values })
    }
}

/// Embed a graph as the step kernel whose cell `(i, j)` carries `w_ij`.
pub fn embed(g: &WeightedGraph) -> StepKernel {
    StepKernel { n: g.n, values: g.weights.clone() }
}

/// Bring two kernels to the common resolution `lcm(n1, n2)` by subdivision.
pub fn common_refinement(a: &StepKernel, b: &StepKernel) -> (StepKernel, StepKernel) {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let l = a.n / gcd(a.n, b.n) * b.n;
    (a.refine(l / a.n), b.refine(l / b.n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn embed_examples() {
        let mut g = WeightedGraph::empty(2);
        g.set(0, 1, 3.0);
        let k = embed(&g);
        assert_eq!(k.values(), &[0.0, 3.0, 3.0, 0.0]);
        assert_eq!(k.resolution(), 2);
        let k1 = embed(&WeightedGraph::empty(1));
        assert_eq!(k1.values(), &[0.0]);
    }

    #[test]
    fn truncate_examples() {
        let k = StepKernel::from_values(2, vec![7.0, -7.0, -7.0, 3.0]).unwrap();
        let (f, g) = k.truncate(5.0).unwrap();
        assert_eq!(f.values(), &[5.0, -5.0, -5.0, 3.0]);
        assert_eq!(g.values(), &[2.0, -2.0, -2.0, 0.0]);
        assert!(matches!(k.truncate(0.0), Err(Error::Argument(_))));
        assert!(k.truncate(-1.0).is_err());
    }

    #[test]
    fn graph_validation() {
        assert!(WeightedGraph::from_matrix(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(WeightedGraph::from_matrix(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(WeightedGraph::empty(3).with_node_weights(vec![1.0, -0.5, 2.0]).is_err());
    }

    #[test]
    fn json_and_csv_formats() {
        let g = WeightedGraph::from_json_str(
            r#"{"n": 3, "edges": [[0, 1, 1.5], [1, 2, -2.0]], "node_weights": [1, 2, 3]}"#,
        )
        .unwrap();
        assert_eq!(g.get(1, 0), 1.5);
        assert_eq!(g.get(0, 2), 0.0);
        assert_eq!(g.node_weight(2), 3.0);
        let back = WeightedGraph::from_json_str(&g.to_json_string().unwrap()).unwrap();
        assert_eq!(back, g);

        let bad = WeightedGraph::from_json_str(r#"{"n": 3, "edges": [[2, 1, 1.0]]}"#);
        assert!(matches!(bad, Err(Error::Config(_))));
        let syntax = WeightedGraph::from_json_str("{\"n\": 3,\n \"edges\": [[0, 1 1.0]]}").unwrap_err();
        assert!(syntax.to_string().contains("line 2"), "{syntax}");

        let csv = "i,j,weight\n0,1,2.5\n1,3,-1\n";
        let c = WeightedGraph::from_csv_reader(csv.as_bytes(), None).unwrap();
        assert_eq!(c.n(), 4);
        assert_eq!(c.get(3, 1), -1.0);
    }

    #[test]
    fn refinement_preserves_cell_values() {
        let a = StepKernel::from_values(2, vec![1.0, 2.0, 2.0, 3.0]).unwrap();
        let b = StepKernel::constant(3, 0.5);
        let (ra, rb) = common_refinement(&a, &b);
        assert_eq!(ra.resolution(), 6);
        assert_eq!(rb.resolution(), 6);
        assert_eq!(ra.get(5, 0), 2.0);
        assert_eq!(ra.get(2, 2), 1.0);
    }

    fn arb_kernel() -> impl Strategy<Value = StepKernel> {
        (1usize..6).prop_flat_map(|n| {
            proptest::collection::vec(-20.0f64..20.0, n * (n + 1) / 2).prop_map(move |upper| {
                let mut v = vec![0.0; n * n];
                let mut it = upper.into_iter();
                for i in 0..n {
                    for j in i..n {
                        let x = it.next().unwrap();
                        v[i * n + j] = x;
                        v[j * n + i] = x;
                    }
                }
                StepKernel::from_values(n, v).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn truncation_decomposes_and_is_idempotent(k in arb_kernel(), l in 0.1f64..15.0) {
            let (f, g) = k.truncate(l).unwrap();
            for idx in 0..k.values().len() {
                prop_assert!(f.values()[idx].abs() <= l);
                prop_assert!((f.values()[idx] + g.values()[idx] - k.values()[idx]).abs() < 1e-12);
            }
            let (ff, _) = f.truncate(l).unwrap();
            prop_assert_eq!(ff, f);
        }

        #[test]
        fn embedding_is_symmetric(n in 1usize..7, seed in 0u64..1000) {
            let mut g = WeightedGraph::empty(n);
            let mut x = seed as f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    x = (x * 1.618 + 0.3).fract();
                    g.set(i, j, x - 0.5);
                }
            }
            let k = embed(&g);
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(k.get(i, j), k.get(j, i));
                }
            }
        }
    }
}
