//! Weighted homomorphism numbers and densities, with fast paths for stars and
//! triangles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{StepKernel, WeightedGraph};

/// Brute-force limits.
pub const MAX_BRUTE_VERTICES: usize = 5;
pub const MAX_BRUTE_N: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Family {
    Edge,
    TwoStar,
    JStar { j: usize },
    Triangle,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    AllMaps,
    DistinctIndices,
}

/// Config form of a motif.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family", deny_unknown_fields)]
pub enum MotifSpec {
    Edge,
    TwoStar,
    JStar {
        j: usize,
    },
    Triangle,
    General {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vertices: Option<usize>,
        edges: Vec<(usize, usize, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node_weights: Option<Vec<f64>>,
    },
}

/// Simple graph `F` with edge weights `A^F_ij` and node weights `α_i(F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Motif {
    vertices: usize,
    edges: Vec<(usize, usize, f64)>,
    node_weights: Vec<f64>,
    family: Family,
}

impl Motif {
    pub fn edge() -> Self {
        Motif { vertices: 2, edges: vec![(0, 1, 1.0)], node_weights: vec![1.0; 2], family: Family::Edge }
    }

    pub fn two_star() -> Self {
        let mut m = Self::star(2);
        m.family = Family::TwoStar;
        m
    }

    /// Star with `j` leaves around vertex 0.
    pub fn j_star(j: usize) -> Result<Self> {
        if j == 0 {
            return Err(Error::Argument("j-star needs j >= 1".into()));
        }
        Ok(Self::star(j))
    }

    fn star(j: usize) -> Self {
        Motif {
            vertices: j + 1,
            edges: (1..=j).map(|l| (0, l, 1.0)).collect(),
            node_weights: vec![1.0; j + 1],
            family: Family::JStar { j },
        }
    }

    pub fn triangle() -> Self {
        Motif {
            vertices: 3,
            edges: vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)],
            node_weights: vec![1.0; 3],
            family: Family::Triangle,
        }
    }

    pub fn general(vertices: usize, edges: Vec<(usize, usize, f64)>, node_weights: Option<Vec<f64>>) -> Result<Self> {
        if vertices == 0 {
            return Err(Error::Argument("motif needs at least one vertex".into()));
        }
        let mut seen = std::collections::HashSet::new();
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b, w) in &edges {
            if a == b {
                return Err(Error::Argument(format!("motif self-loop at vertex {a}")));
            }
            if a >= vertices || b >= vertices {
                return Err(Error::Argument(format!("motif edge ({a}, {b}) out of range for {vertices} vertices")));
            }
            if !w.is_finite() {
                return Err(Error::Argument(format!("motif edge ({a}, {b}) has non-finite weight")));
            }
            let (a, b) = (a.min(b), a.max(b));
            if !seen.insert((a, b)) {
                return Err(Error::Argument(format!("duplicate motif edge ({a}, {b})")));
            }
            norm.push((a, b, w));
        }
        let node_weights = node_weights.unwrap_or_else(|| vec![1.0; vertices]);
        if node_weights.len() != vertices || node_weights.iter().any(|a| !a.is_finite()) {
            return Err(Error::Argument(format!("motif needs {vertices} finite node weights")));
        }
        Ok(Motif { vertices, edges: norm, node_weights, family: Family::General })
    }

    /// Replace the node weights `α_i(F)`, keeping the family tag.
    pub fn with_node_weights(mut self, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != self.vertices || alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Argument(format!("motif needs {} finite node weights", self.vertices)));
        }
        self.node_weights = alpha;
        Ok(self)
    }

    pub fn from_spec(spec: &MotifSpec) -> Result<Self> {
        match spec {
            MotifSpec::Edge => Ok(Self::edge()),
            MotifSpec::TwoStar => Ok(Self::two_star()),
            MotifSpec::JStar { j } => Self::j_star(*j),
            MotifSpec::Triangle => Ok(Self::triangle()),
            MotifSpec::General { vertices, edges, node_weights } => {
                let v = vertices.unwrap_or_else(|| {
                    edges.iter().map(|&(a, b, _)| a.max(b) + 1).max().unwrap_or(1)
                });
                Self::general(v, edges.clone(), node_weights.clone())
            }
        }
    }

    pub fn to_spec(&self) -> MotifSpec {
        match self.family {
            Family::Edge => MotifSpec::Edge,
            Family::TwoStar => MotifSpec::TwoStar,
            Family::JStar { j } => MotifSpec::JStar { j },
            Family::Triangle => MotifSpec::Triangle,
            Family::General => MotifSpec::General {
                vertices: Some(self.vertices),
                edges: self.edges.clone(),
                node_weights: Some(self.node_weights.clone()),
            },
        }
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// `e(H)`.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_edge_unweighted(&self) -> bool {
        self.edges.iter().all(|e| e.2 == 1.0)
    }

    pub fn is_node_unweighted(&self) -> bool {
        self.node_weights.iter().all(|&a| a == 1.0)
    }

    /// Number of leaves if the structure is a star centred at some vertex with
    /// every other vertex a leaf.
    pub fn star_leaves(&self) -> Option<usize> {
        let e = self.edges.len();
        if e == 0 || e + 1 != self.vertices {
            return None;
        }
        (0..self.vertices)
            .find(|&c| self.edges.iter().all(|&(a, b, _)| a == c || b == c))
            .map(|_| e)
    }

    fn star_center(&self) -> Option<usize> {
        self.star_leaves()?;
        (0..self.vertices).find(|&c| self.edges.iter().all(|&(a, b, _)| a == c || b == c))
    }

    fn is_triangle_shape(&self) -> bool {
        self.vertices == 3 && self.edges.len() == 3
    }
}

#[inline]
fn wpow(base: f64, e: f64) -> f64 {
    if e == 1.0 {
        base
    } else if e.fract() == 0.0 && e.abs() < 64.0 {
        base.powi(e as i32)
    } else {
        base.powf(e)
    }
}

fn is_nonneg_int(e: f64) -> bool {
    e >= 0.0 && e.fract() == 0.0
}

/// Check that every cell that a map can hit has a well-defined power.
fn check_edge_domain(values: &[f64], n: usize, exps: &[f64]) -> Result<()> {
    if exps.iter().all(|&e| is_nonneg_int(e)) {
        return Ok(());
    }
    for i in 0..n {
        for j in i..n {
            let w = values[i * n + j];
            for &e in exps {
                if is_nonneg_int(e) {
                    continue;
                }
                if w < 0.0 && e.fract() != 0.0 {
                    return Err(Error::WeightDomain {
                        row: i,
                        col: j,
                        detail: format!("negative weight {w} raised to non-integer power {e}"),
                    });
                }
                if w == 0.0 && e < 0.0 {
                    return Err(Error::WeightDomain {
                        row: i,
                        col: j,
                        detail: format!("zero weight raised to negative power {e}"),
                    });
                }
            }
        }
    }
    Ok(())
}

fn check_node_domain(alpha: &[f64], exps: &[f64]) -> Result<()> {
    for (i, &a) in alpha.iter().enumerate() {
        if a < 0.0 {
            return Err(Error::WeightDomain { row: i, col: i, detail: format!("negative node weight {a}") });
        }
        if a == 0.0 {
            if let Some(&e) = exps.iter().find(|&&e| e < 0.0) {
                return Err(Error::WeightDomain {
                    row: i,
                    col: i,
                    detail: format!("zero node weight raised to negative power {e}"),
                });
            }
        }
    }
    Ok(())
}

/// Σ over all maps `V(F) → [n]` of `Π α^{α(F)} Π w^{A}` on a symmetric matrix.
fn hom_sum(f: &Motif, values: &[f64], n: usize, alpha: Option<&[f64]>, fast: bool) -> Result<f64> {
    let exps: Vec<f64> = f.edges.iter().map(|e| e.2).collect();
    check_edge_domain(values, n, &exps)?;
    if let Some(a) = alpha {
        if a.len() != n {
            return Err(Error::Argument(format!("node weight function needs {n} values, got {}", a.len())));
        }
        check_node_domain(a, &f.node_weights)?;
    }
    // node factor tables, one per motif vertex
    let node: Vec<Vec<f64>> = f
        .node_weights
        .iter()
        .map(|&e| match alpha {
            Some(a) => a.iter().map(|&x| wpow(x, e)).collect(),
            None => vec![1.0; n],
        })
        .collect();
    let powered: Vec<Vec<f64>> = f.edges.iter().map(|&(_, _, e)| values.iter().map(|&w| wpow(w, e)).collect()).collect();

    if fast {
        if let Some(c) = f.star_center() {
            return Ok(star_sum(f, c, &node, &powered, n));
        }
        if f.is_triangle_shape() {
            return Ok(triangle_sum(f, &node, &powered, n));
        }
    }
    if f.vertices > MAX_BRUTE_VERTICES || n > MAX_BRUTE_N {
        return Err(Error::TooLarge(format!(
            "brute-force homomorphism count needs |V(F)| <= {MAX_BRUTE_VERTICES} and n <= {MAX_BRUTE_N}, got {} and {n}",
            f.vertices
        )));
    }
    Ok(brute_sum(f, &node, &powered, n))
}

fn star_sum(f: &Motif, c: usize, node: &[Vec<f64>], powered: &[Vec<f64>], n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let mut prod = node[c][i];
            for (k, &(a, b, _)) in f.edges.iter().enumerate() {
                let leaf = if a == c { b } else { a };
                let row = &powered[k][i * n..(i + 1) * n];
                prod *= row.iter().zip(&node[leaf]).map(|(w, x)| w * x).sum::<f64>();
            }
            prod
        })
        .sum()
}

fn triangle_sum(f: &Motif, node: &[Vec<f64>], powered: &[Vec<f64>], n: usize) -> f64 {
    // edge k joins (a_k, b_k); find matrices for the pairs (0,1), (1,2), (0,2)
    let find = |x: usize, y: usize| f.edges.iter().position(|&(a, b, _)| (a, b) == (x, y)).unwrap();
    let (p01, p12, p02) = (&powered[find(0, 1)], &powered[find(1, 2)], &powered[find(0, 2)]);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                let wij = p01[i * n + j] * node[1][j];
                if wij == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for k in 0..n {
                    inner += p12[j * n + k] * p02[i * n + k] * node[2][k];
                }
                s += wij * inner;
            }
            s * node[0][i]
        })
        .sum()
}

fn brute_sum(f: &Motif, node: &[Vec<f64>], powered: &[Vec<f64>], n: usize) -> f64 {
    let v = f.vertices;
    // edges grouped by their later endpoint
    let mut closing: Vec<Vec<(usize, usize)>> = vec![Vec::new(); v];
    for (k, &(a, b, _)) in f.edges.iter().enumerate() {
        closing[b].push((k, a));
    }
    fn rec(
        d: usize,
        phi: &mut [usize],
        acc: f64,
        n: usize,
        node: &[Vec<f64>],
        powered: &[Vec<f64>],
        closing: &[Vec<(usize, usize)>],
    ) -> f64 {
        if d == phi.len() {
            return acc;
        }
        let mut s = 0.0;
        for x in 0..n {
            let mut p = acc * node[d][x];
            for &(k, a) in &closing[d] {
                p *= powered[k][phi[a] * n + x];
            }
            if p == 0.0 {
                continue;
            }
            phi[d] = x;
            s += rec(d + 1, phi, p, n, node, powered, closing);
        }
        s
    }
    (0..n)
        .into_par_iter()
        .map(|x0| {
            let mut phi = vec![0; v];
            phi[0] = x0;
            rec(1, &mut phi, node[0][x0], n, node, powered, &closing)
        })
        .sum()
}

/// `|hom(F, α, G)|` by brute force over all maps (node weights from `g`).
pub fn hom_number(f: &Motif, g: &WeightedGraph) -> Result<f64> {
    hom_sum(f, g.weights(), g.n(), g.node_weights(), false)
}

pub enum Target<'a> {
    Graph(&'a WeightedGraph),
    Kernel(&'a StepKernel),
}

/// `t(F, α, target)`. For a kernel the integral is the exact cell sum, diagonal
/// cells included. `node_weight_fn` is a step function with one value per
/// cell; for graphs it overrides the graph's own node weights.
pub fn hom_density(f: &Motif, target: Target<'_>, node_weight_fn: Option<&[f64]>) -> Result<f64> {
    let (values, n, alpha) = match target {
        Target::Graph(g) => (g.weights(), g.n(), node_weight_fn.or(g.node_weights())),
        Target::Kernel(k) => (k.values(), k.resolution(), node_weight_fn),
    };
    if n == 0 {
        return Err(Error::Argument("empty target".into()));
    }
    let s = hom_sum(f, values, n, alpha, true)?;
    Ok(s / (n as f64).powi(f.vertices as i32))
}

/// Ordered sums over distinct indices `j! e_j(x)` from power sums
/// `p[k-1] = Σ x^k` via Newton's identities.
pub fn distinct_star_sum(p: &[f64], j: usize) -> f64 {
    let mut e = vec![0.0; j + 1];
    e[0] = 1.0;
    for k in 1..=j {
        let mut s = 0.0;
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * e[k - i] * p[i - 1];
        }
        e[k] = s / k as f64;
    }
    let fact: f64 = (1..=j).map(|x| x as f64).product();
    fact * e[j]
}

/// Closed-form statistic `t(H, k_G)` for the standard families.
pub fn fast_statistic(tag: Family, g: &WeightedGraph, convention: Convention) -> Result<f64> {
    let n = g.n();
    if n == 0 {
        return Err(Error::Argument("empty graph".into()));
    }
    let nf = n as f64;
    let star = |j: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            let row = g.row(i);
            s += match convention {
                Convention::AllMaps => row.iter().sum::<f64>().powi(j as i32),
                Convention::DistinctIndices => {
                    let p: Vec<f64> = (1..=j).map(|k| row.iter().map(|w| w.powi(k as i32)).sum()).collect();
                    distinct_star_sum(&p, j)
                }
            };
        }
        s / nf.powi(j as i32 + 1)
    };
    match tag {
        Family::Edge => Ok(g.weights().iter().sum::<f64>() / (nf * nf)),
        Family::TwoStar => Ok(star(2)),
        Family::JStar { j } if j >= 1 => Ok(star(j)),
        Family::Triangle => {
            let w = g.weights();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let wij = w[i * n + j];
                    if wij == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for k in 0..n {
                        inner += w[j * n + k] * w[k * n + i];
                    }
                    s += wij * inner;
                }
            }
            Ok(s / (nf * nf * nf))
        }
        other => Err(Error::Argument(format!("no fast path for {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_complete(n: usize) -> WeightedGraph {
        WeightedGraph::complete(n, 1.0)
    }

    #[test]
    fn triangle_count_on_complete_graph() {
        for n in 3..7 {
            let h = hom_number(&Motif::triangle(), &unit_complete(n)).unwrap();
            assert_eq!(h, (n * (n - 1) * (n - 2)) as f64);
        }
    }

    #[test]
    fn single_vertex_counts_node_weights() {
        let g = WeightedGraph::complete(4, 0.3).with_node_weights(vec![0.5, 1.0, 2.0, 4.0]).unwrap();
        let f = Motif::general(1, vec![], None).unwrap();
        assert_eq!(hom_number(&f, &g).unwrap(), 7.5);
    }

    #[test]
    fn node_weighted_triangle() {
        let g = unit_complete(3).with_node_weights(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(hom_number(&Motif::triangle(), &g).unwrap(), 36.0);
        let gen = Motif::general(3, vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)], None).unwrap();
        let d = hom_density(&gen, Target::Graph(&g), None).unwrap();
        assert!((d - 36.0 / 27.0).abs() < 1e-15);
        let fast = hom_density(&Motif::triangle(), Target::Graph(&g), None).unwrap();
        assert!((fast - d).abs() < 1e-15);
    }

    #[test]
    fn densities_on_kernels() {
        let k = StepKernel::constant(3, 0.7);
        let e = hom_density(&Motif::edge(), Target::Kernel(&k), None).unwrap();
        assert!((e - 0.7).abs() < 1e-15);
        for j in 1..5 {
            let s = hom_density(&Motif::j_star(j).unwrap(), Target::Kernel(&k), None).unwrap();
            assert!((s - 0.7f64.powi(j as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn two_star_conventions() {
        let g = unit_complete(3);
        let brute = hom_number(&Motif::two_star(), &g).unwrap() / 27.0;
        assert!((brute - 4.0 / 9.0).abs() < 1e-15);
        let all = fast_statistic(Family::TwoStar, &g, Convention::AllMaps).unwrap();
        assert!((all - 4.0 / 9.0).abs() < 1e-15);
        let dist = fast_statistic(Family::TwoStar, &g, Convention::DistinctIndices).unwrap();
        assert!((dist - 2.0 / 9.0).abs() < 1e-15);
        let c = WeightedGraph::complete(5, 1.7);
        let e = fast_statistic(Family::Edge, &c, Convention::AllMaps).unwrap();
        assert!((e - 1.7 * 4.0 / 5.0).abs() < 1e-14);
        assert!(fast_statistic(Family::General, &c, Convention::AllMaps).is_err());
    }

    #[test]
    fn distinct_star_sum_matches_enumeration() {
        let x = [0.3, -1.2, 2.0, 0.7, 1.1];
        for j in 1..=4 {
            let p: Vec<f64> = (1..=j).map(|k| x.iter().map(|v: &f64| v.powi(k as i32)).sum()).collect();
            let mut brute = 0.0;
            let idx: Vec<usize> = vec![0; j];
            fn go(d: usize, idx: &mut Vec<usize>, x: &[f64], acc: &mut f64) {
                if d == idx.len() {
                    *acc += idx.iter().map(|&i| x[i]).product::<f64>();
                    return;
                }
                for i in 0..x.len() {
                    if !idx[..d].contains(&i) {
                        idx[d] = i;
                        go(d + 1, idx, x, acc);
                    }
                }
            }
            go(0, &mut idx.clone(), &x, &mut brute);
            assert!((distinct_star_sum(&p, j) - brute).abs() < 1e-10, "j={j}");
        }
    }

    #[test]
    fn weight_domain_errors_name_the_cell() {
        let mut g = WeightedGraph::complete(3, 1.0);
        g.set(0, 2, -0.5);
        let f = Motif::general(2, vec![(0, 1, 0.5)], None).unwrap();
        match hom_number(&f, &g) {
            Err(Error::WeightDomain { row, col, .. }) => assert_eq!((row, col), (0, 2)),
            other => panic!("{other:?}"),
        }
        // integer powers are fine on signed weights, with 0^0 = 1
        let sq = Motif::general(2, vec![(0, 1, 2.0)], None).unwrap();
        assert_eq!(hom_number(&sq, &g).unwrap(), 2.0 * (1.0 + 1.0 + 0.25));
        let zero = Motif::general(2, vec![(0, 1, 0.0)], None).unwrap();
        assert_eq!(hom_number(&zero, &g).unwrap(), 9.0);
    }

    #[test]
    fn brute_force_limits() {
        let g = unit_complete(51);
        assert!(matches!(
            hom_number(&Motif::edge(), &g),
            Err(Error::TooLarge(_))
        ));
        let path6 = Motif::general(6, (0..5).map(|i| (i, i + 1, 1.0)).collect(), None).unwrap();
        assert!(hom_number(&path6, &unit_complete(3)).is_err());
    }

    #[test]
    fn motif_validation_and_specs() {
        assert!(Motif::general(2, vec![(0, 0, 1.0)], None).is_err());
        assert!(Motif::general(3, vec![(0, 1, 1.0), (1, 0, 1.0)], None).is_err());
        let spec: MotifSpec = serde_json::from_str(r#"{"family": "j_star", "j": 3}"#).unwrap();
        let m = Motif::from_spec(&spec).unwrap();
        assert_eq!((m.vertices(), m.edge_count(), m.star_leaves()), (4, 3, Some(3)));
        let spec: MotifSpec =
            serde_json::from_str(r#"{"family": "general", "edges": [[0,1,1],[1,2,1]], "node_weights": [1,1,1]}"#)
                .unwrap();
        let m = Motif::from_spec(&spec).unwrap();
        assert_eq!(m.vertices(), 3);
        assert_eq!(m.star_leaves(), Some(2));
        assert_eq!(Motif::from_spec(&m.to_spec()).unwrap(), m);
    }
}
