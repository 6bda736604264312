//! Oriented graphs and the spectral quantities built on their Laplacian.
//!
//! Edge orientation only fixes the sign convention of the incidence matrix;
//! every quantity downstream of the Laplacian is orientation-independent.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{eig_symmetric, DenseMatrix, DenseVector};

/// Relative threshold (against `λ_max`) below which a Laplacian eigenvalue counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Relative gap (against `λ_max`) under which `λ₂` and `λ₃` are considered equal.
const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrientedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl OrientedGraph {
    /// Builds a graph from `(source, target)` pairs. Rejects self-loops, duplicate
    /// undirected edges and out-of-range indices. Connectivity is checked when
    /// spectral data is computed.
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for (l, &(s, t)) in edges.iter().enumerate() {
            if s >= n || t >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {l} ({s}, {t}) references a node outside 0..{n}"
                )));
            }
            if s == t {
                return Err(Error::InvalidGraph(format!(
                    "edge {l} is a self-loop at node {s}"
                )));
            }
            if !seen.insert((s.min(t), s.max(t))) {
                return Err(Error::InvalidGraph(format!(
                    "edge {l} duplicates {{{s}, {t}}}"
                )));
            }
        }
        Ok(Self { n, edges })
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "complete graph needs n >= 2, got {n}"
            )));
        }
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::new(n, edges)
    }

    pub fn path(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "path graph needs n >= 2, got {n}"
            )));
        }
        Self::new(n, (0..n - 1).map(|i| (i, i + 1)).collect())
    }

    /// Grid graph with row-major node numbering `r * cols + c`.
    pub fn mesh(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols < 2 {
            return Err(Error::InvalidGraph(format!(
                "mesh {rows}x{cols} has fewer than 2 nodes"
            )));
        }
        let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Self::new(rows * cols, edges)
    }

    /// Random connected graph: a random spanning tree plus each remaining pair
    /// with probability `extra_edge_prob`.
    pub fn random_connected<R: Rng + ?Sized>(
        n: usize,
        extra_edge_prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!(
                "random graph needs n >= 2, got {n}"
            )));
        }
        let mut edges = Vec::new();
        let mut present = HashSet::new();
        for v in 1..n {
            let u = rng.random_range(0..v);
            edges.push((u, v));
            present.insert((u, v));
        }
        for i in 0..n {
            for j in i + 1..n {
                if !present.contains(&(i, j)) && rng.random_bool(extra_edge_prob.clamp(0.0, 1.0)) {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges
            .iter()
            .any(|&(s, t)| (s == i && t == j) || (s == j && t == i))
    }

    /// Copy of this graph with one more edge `i → j` appended.
    pub fn with_edge(&self, i: usize, j: usize) -> Result<Self> {
        let mut edges = self.edges.clone();
        edges.push((i, j));
        Self::new(self.n, edges)
    }

    /// Copy with edge `l` reversed.
    pub fn with_reversed_edge(&self, l: usize) -> Result<Self> {
        let mut edges = self.edges.clone();
        let e = edges.get_mut(l).ok_or(Error::IndexOutOfRange {
            index: l,
            n: self.m(),
        })?;
        *e = (e.1, e.0);
        Self::new(self.n, edges)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(s, t)| {
            if s == i {
                Some(t)
            } else if t == i {
                Some(s)
            } else {
                None
            }
        })
    }

    pub fn incidence_matrix(&self) -> DenseMatrix {
        let mut b = DenseMatrix::zeros(self.n, self.m());
        for (l, &(s, t)) in self.edges.iter().enumerate() {
            b[(s, l)] = 1.0;
            b[(t, l)] = -1.0;
        }
        b
    }

    pub fn laplacian(&self) -> DenseMatrix {
        let b = self.incidence_matrix();
        &b * b.transpose()
    }

    pub fn spectral_data(&self) -> Result<SpectralData> {
        SpectralData::new(self, DEFAULT_ZERO_TOL)
    }
}

/// Laplacian spectrum, pseudo-inverse and the `U1` basis of a connected graph.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub incidence: DenseMatrix,
    pub laplacian: DenseMatrix,
    pub pseudo_inverse: DenseMatrix,
    /// `n × (n−1)`, orthonormal columns orthogonal to the all-ones vector.
    pub u1: DenseMatrix,
    /// `U1ᵀ L U1`, positive definite.
    pub reduced_laplacian: DenseMatrix,
    /// Ascending; the first entry is the (numerically) zero eigenvalue.
    pub eigenvalues: DenseVector,
    pub eigenvectors: DenseMatrix,
}

/// Unit eigenvector of the algebraic connectivity.
#[derive(Debug, Clone)]
pub struct Fiedler {
    pub vector: DenseVector,
    pub lambda2: f64,
    /// Set when `λ₂` is repeated, so `vector` is one arbitrary member of its eigenspace.
    pub degenerate: bool,
    pub multiplicity: usize,
}

impl SpectralData {
    pub fn new(graph: &OrientedGraph, tol: f64) -> Result<Self> {
        let n = graph.n();
        let incidence = graph.incidence_matrix();
        let laplacian = &incidence * incidence.transpose();
        let eig = eig_symmetric(&laplacian)?;
        let lambda_max = eig.eigenvalues[n - 1];
        let threshold = tol * lambda_max;
        let zero_eigenvalues = eig.eigenvalues.iter().filter(|&&l| l <= threshold).count();
        if zero_eigenvalues != 1 {
            return Err(Error::NotConnected { zero_eigenvalues });
        }

        let u1 = eig.eigenvectors.columns(1, n - 1).into_owned();
        let inv =
            DenseVector::from_iterator(n - 1, eig.eigenvalues.iter().skip(1).map(|l| 1.0 / l));
        let pseudo_inverse = &u1 * DenseMatrix::from_diagonal(&inv) * u1.transpose();
        let reduced = u1.transpose() * &laplacian * &u1;
        let reduced_laplacian = (&reduced + reduced.transpose()) * 0.5;

        Ok(Self {
            incidence,
            laplacian,
            pseudo_inverse,
            u1,
            reduced_laplacian,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn n(&self) -> usize {
        self.laplacian.nrows()
    }

    pub fn m(&self) -> usize {
        self.incidence.ncols()
    }

    pub fn algebraic_connectivity(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    /// `U2 = 1/√n`, the normalized all-ones direction.
    pub fn u2(&self) -> DenseVector {
        let n = self.n();
        DenseVector::from_element(n, 1.0 / (n as f64).sqrt())
    }

    /// `R_ij = (e_i − e_j)ᵀ L† (e_i − e_j)`.
    pub fn resistance_distance(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.n();
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, n });
            }
        }
        if i == j {
            return Ok(0.0);
        }
        let p = &self.pseudo_inverse;
        Ok((p[(i, i)] + p[(j, j)] - p[(i, j)] - p[(j, i)]).max(0.0))
    }

    pub fn resistance_matrix(&self) -> DenseMatrix {
        let n = self.n();
        let mut r = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = self
                    .resistance_distance(i, j)
                    .expect("indices are in range");
                r[(i, j)] = v;
                r[(j, i)] = v;
            }
        }
        r
    }

    pub fn fiedler_vector(&self) -> Fiedler {
        let n = self.n();
        let lambda2 = self.eigenvalues[1];
        let gap_tol = DEGENERACY_TOL * self.lambda_max();
        let multiplicity = self
            .eigenvalues
            .iter()
            .skip(1)
            .take_while(|&&l| l - lambda2 <= gap_tol)
            .count();

        let mut vector = self.eigenvectors.column(1).into_owned();
        // remove any residual component along 1 before normalizing
        let mean = vector.sum() / n as f64;
        vector.add_scalar_mut(-mean);
        vector /= vector.norm();
        if let Some(first) = vector.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                vector = -vector;
            }
        }
        Fiedler {
            vector,
            lambda2,
            degenerate: multiplicity > 1,
            multiplicity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triangle() -> OrientedGraph {
        OrientedGraph::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn incidence_examples() {
        let g = OrientedGraph::new(2, vec![(0, 1)]).unwrap();
        assert_eq!(g.incidence_matrix().as_slice(), &[1.0, -1.0]);

        let b = triangle().incidence_matrix();
        let expected = DenseMatrix::from_row_slice(3, 3, &[1., 0., 1., -1., 1., 0., 0., -1., -1.]);
        assert_eq!(b, expected);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = OrientedGraph::random_connected(10, 0.3, &mut rng).unwrap();
        let b = g.incidence_matrix();
        for col in b.column_iter() {
            assert_eq!(col.sum(), 0.0);
        }
    }

    #[test]
    fn laplacian_examples() {
        let l = triangle().laplacian();
        let expected =
            DenseMatrix::from_row_slice(3, 3, &[2., -1., -1., -1., 2., -1., -1., -1., 2.]);
        assert_eq!(l, expected);

        let l = OrientedGraph::path(3).unwrap().laplacian();
        let expected = DenseMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(l, expected);
    }

    #[test]
    fn laplacian_rank_n_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..9 {
            let g = OrientedGraph::random_connected(n, 0.4, &mut rng).unwrap();
            assert_eq!(g.laplacian().rank(1e-9), n - 1);
        }
    }

    #[test]
    fn triangle_spectrum() {
        // det(L − λI) = −λ(λ − 3)²
        let sd = triangle().spectral_data().unwrap();
        let ev = sd.eigenvalues.as_slice();
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - 3.0).abs() < 1e-12);
        assert!((ev[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_rejected() {
        let g = OrientedGraph::new(4, vec![(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            g.spectral_data(),
            Err(Error::NotConnected {
                zero_eigenvalues: 2
            })
        ));
    }

    #[test]
    fn construction_errors() {
        assert!(OrientedGraph::new(1, vec![]).is_err());
        assert!(OrientedGraph::new(3, vec![(0, 0)]).is_err());
        assert!(OrientedGraph::new(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(OrientedGraph::new(3, vec![(0, 3)]).is_err());
        assert!(OrientedGraph::complete(1).is_err());
        assert!(OrientedGraph::path(0).is_err());
        assert!(OrientedGraph::mesh(1, 1).is_err());
        assert!(OrientedGraph::mesh(0, 5).is_err());
    }

    #[test]
    fn pseudo_inverse_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.random_range(2..12);
            let g = OrientedGraph::random_connected(n, 0.3, &mut rng).unwrap();
            let sd = g.spectral_data().unwrap();
            let l = &sd.laplacian;
            let lpl = l * &sd.pseudo_inverse * l;
            assert!((lpl - l).norm() <= 1e-10 * l.norm());
            let ones = DenseVector::from_element(n, 1.0);
            assert!((&sd.pseudo_inverse * &ones).norm() < 1e-12);

            let u1 = &sd.u1;
            assert!((u1.transpose() * u1 - DenseMatrix::identity(n - 1, n - 1)).norm() < 1e-12);
            assert!((u1.transpose() * &ones).norm() < 1e-12);
            let mut u = DenseMatrix::zeros(n, n);
            u.columns_mut(0, n - 1).copy_from(u1);
            u.set_column(n - 1, &sd.u2());
            assert!((u.transpose() * &u - DenseMatrix::identity(n, n)).norm() < 1e-12);

            let lhat = &sd.reduced_laplacian;
            assert!(lhat.clone().cholesky().is_some());
            assert!((u1 * lhat * u1.transpose() - l).norm() < 1e-10);
        }
    }

    #[test]
    fn resistance_examples() {
        let sd = OrientedGraph::path(2).unwrap().spectral_data().unwrap();
        assert!((sd.resistance_distance(0, 1).unwrap() - 1.0).abs() < 1e-12);

        // 1Ω in parallel with 2Ω
        let sd = triangle().spectral_data().unwrap();
        assert!((sd.resistance_distance(0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(sd.resistance_distance(1, 1).unwrap(), 0.0);
        assert!(matches!(
            sd.resistance_distance(0, 3),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        ));
    }

    #[test]
    fn mesh_resistances() {
        let sd = OrientedGraph::mesh(4, 6).unwrap().spectral_data().unwrap();
        let r = sd.resistance_matrix();
        assert!((r[(0, 1)] - 0.700).abs() < 0.001);
        assert!((r[(0, 23)] - 2.262).abs() < 0.001);
        assert!((&r - r.transpose()).norm() == 0.0);
    }

    #[test]
    fn fiedler_path3() {
        let f = OrientedGraph::path(3)
            .unwrap()
            .spectral_data()
            .unwrap()
            .fiedler_vector();
        let s = 1.0 / 2f64.sqrt();
        assert!((f.lambda2 - 1.0).abs() < 1e-12);
        assert!(!f.degenerate);
        for (got, want) in f.vector.iter().zip([s, 0.0, -s]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fiedler_complete_is_degenerate() {
        let f = OrientedGraph::complete(4)
            .unwrap()
            .spectral_data()
            .unwrap()
            .fiedler_vector();
        assert!(f.degenerate);
        assert_eq!(f.multiplicity, 3);
        assert!((f.lambda2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fiedler_orthogonal_to_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.random_range(2..15);
            let g = OrientedGraph::random_connected(n, 0.2, &mut rng).unwrap();
            let f = g.spectral_data().unwrap().fiedler_vector();
            assert!(f.vector.sum().abs() < 1e-12);
            assert!((f.vector.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_sizes() {
        assert_eq!(OrientedGraph::complete(3).unwrap().m(), 3);
        let mesh = OrientedGraph::mesh(4, 6).unwrap();
        assert_eq!((mesh.n(), mesh.m()), (24, 4 * 5 + 6 * 3));
        assert_eq!(
            OrientedGraph::path(2).unwrap(),
            OrientedGraph::complete(2).unwrap()
        );
        for &(s, t) in mesh.edges() {
            assert!(s < t);
        }
    }
}
