use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Brute-force nearest-neighbor regressor over standardized features.
///
/// Features are grouped (for example keypoints and proprioception); each
/// dimension is standardized by its training spread and each group is
/// rescaled so that, at weight 1, every group contributes the same total
/// variance regardless of how many dimensions it has. Constant dimensions
/// are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnIndex {
    pub dim: usize,
    pub out_dim: usize,
    pub k: usize,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    /// Scaled training features, row-major.
    pub features: Vec<f64>,
    /// Stored outputs, row-major.
    pub outputs: Vec<f64>,
}

/// A contiguous block of feature dimensions sharing one weight.
#[derive(Debug, Clone, Copy)]
pub struct Group {
    pub len: usize,
    pub weight: f64,
}

impl KnnIndex {
    pub fn build(features: Vec<f64>, outputs: Vec<f64>, groups: &[Group], out_dim: usize, k: usize) -> Result<Self> {
        let dim: usize = groups.iter().map(|g| g.len).sum();
        if dim == 0 || out_dim == 0 {
            return Err(Error::invalid("knn index needs non-empty features and outputs"));
        }
        if k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        if features.is_empty() || !features.len().is_multiple_of(dim) || outputs.len() != features.len() / dim * out_dim
        {
            return Err(Error::invalid("knn index: empty or ragged training data"));
        }
        if features.iter().chain(&outputs).any(|v| !v.is_finite()) {
            return Err(Error::invalid("knn index: non-finite training value"));
        }
        let n = features.len() / dim;
        let mut offset = vec![0.0; dim];
        let mut var = vec![0.0; dim];
        for row in features.chunks_exact(dim) {
            for (o, &v) in offset.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut offset {
            *o /= n as f64;
        }
        for row in features.chunks_exact(dim) {
            for j in 0..dim {
                var[j] += (row[j] - offset[j]).powi(2);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
        let mut scale = vec![0.0; dim];
        let mut start = 0;
        for g in groups {
            let range = start..start + g.len;
            let live = range
                .clone()
                .filter(|&j| std[j] > 1e-9 * (1.0 + offset[j].abs()))
                .count();
            for j in range {
                if live > 0 && std[j] > 1e-9 * (1.0 + offset[j].abs()) {
                    scale[j] = g.weight / (std[j] * (live as f64).sqrt());
                }
            }
            start += g.len;
        }
        let mut scaled = features;
        for row in scaled.chunks_exact_mut(dim) {
            for j in 0..dim {
                row[j] = (row[j] - offset[j]) * scale[j];
            }
        }
        Ok(Self {
            dim,
            out_dim,
            k,
            offset,
            scale,
            features: scaled,
            outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.outputs[i * self.out_dim..(i + 1) * self.out_dim]
    }

    /// Indices of the `k` nearest rows, closest first; ties keep insertion
    /// order.
    pub fn neighbors(&self, query: &[f64]) -> Vec<usize> {
        assert_eq!(query.len(), self.dim, "query dimension");
        let q: Vec<f64> = (0..self.dim)
            .map(|j| (query[j] - self.offset[j]) * self.scale[j])
            .collect();
        let k = self.k.min(self.len());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, row) in self.features.chunks_exact(self.dim).enumerate() {
            let bound = if best.len() == k { best[k - 1].0 } else { f64::INFINITY };
            let mut d = 0.0;
            for (a, b) in row.iter().zip(&q) {
                d += (a - b) * (a - b);
                if d > bound {
                    break;
                }
            }
            if d < bound {
                let pos = best.partition_point(|&(bd, _)| bd <= d);
                best.insert(pos, (d, i));
                best.truncate(k);
            }
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    /// Elementwise mean of the neighbors' outputs.
    pub fn predict(&self, query: &[f64]) -> Vec<f64> {
        let nb = self.neighbors(query);
        let mut out = vec![0.0; self.out_dim];
        for &i in &nb {
            for (o, &v) in out.iter_mut().zip(self.output(i)) {
                *o += v;
            }
        }
        let inv = nb.len() as f64;
        for o in &mut out {
            *o /= inv;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(len: usize) -> Vec<Group> {
        vec![Group { len, weight: 1.0 }]
    }

    #[test]
    fn memorizes_training_rows() {
        let f = vec![0.0, 0.0, 1.0, 5.0, 3.0, 2.0];
        let o = vec![10.0, 20.0, 30.0];
        let idx = KnnIndex::build(f.clone(), o.clone(), &groups(2), 1, 1).unwrap();
        for i in 0..3 {
            assert_eq!(idx.predict(&f[2 * i..2 * i + 2]), vec![o[i]]);
        }
    }

    #[test]
    fn averages_equidistant_pair() {
        let f = vec![-1.0, 1.0, 10.0];
        let o = vec![2.0, 4.0, 100.0];
        let idx = KnnIndex::build(f, o, &groups(1), 1, 2).unwrap();
        assert_eq!(idx.predict(&[0.0]), vec![3.0]);
    }

    #[test]
    fn ties_keep_insertion_order() {
        let f = vec![1.0, 1.0, 2.0];
        let o = vec![7.0, 8.0, 9.0];
        let idx = KnnIndex::build(f, o, &groups(1), 1, 1).unwrap();
        assert_eq!(idx.neighbors(&[1.0]), vec![0]);
    }

    #[test]
    fn constant_dims_are_ignored() {
        let f = vec![5.0, 0.0, 5.0, 1.0];
        let idx = KnnIndex::build(f, vec![0.0, 1.0], &groups(2), 1, 1).unwrap();
        assert_eq!(idx.scale[0], 0.0);
        assert_eq!(idx.predict(&[-100.0, 0.9]), vec![1.0]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(KnnIndex::build(vec![], vec![], &groups(1), 1, 1).is_err());
        assert!(KnnIndex::build(vec![1.0, 2.0, 3.0], vec![1.0], &groups(2), 1, 1).is_err());
        assert!(KnnIndex::build(vec![1.0], vec![1.0], &groups(1), 1, 0).is_err());
    }
}
