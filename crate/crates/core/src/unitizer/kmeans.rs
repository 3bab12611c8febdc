use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FeatureMatrix;
use crate::container::Container;
use crate::error::{shape_err, Error, Result};
use crate::numcore::Tensor;

/// Fitted centroids. Quantization is a pure function of this model.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerModel {
    pub k: usize,
    pub dim: usize,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct KmeansFit {
    pub model: QuantizerModel,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&c, &x)| {
            let d = c - f64::from(x);
            d * d
        })
        .sum()
}

impl QuantizerModel {
    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest centroid by Euclidean distance, lowest index on ties.
    pub fn nearest(&self, frame: &[f32]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for c in 0..self.k {
            let d = sq_dist(self.centroid(c), frame);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(format!(
            "component = \"QUANT\"\nk = {}\ndim = {}\nseed = {}\n",
            self.k, self.dim, self.seed
        ));
        let t = Tensor::new(vec![self.k, self.dim], self.centroids.clone()).expect("shape");
        c.push_tensor("centroids", &t);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let table = c.config_table("QUANT")?;
        let seed = table
            .get("seed")
            .and_then(|v| v.as_integer())
            .unwrap_or(0) as u64;
        let t: Tensor<f64> = c.tensor("centroids")?;
        if t.rank() != 2 || t.shape()[0] == 0 || t.shape()[1] == 0 {
            return Err(Error::CorruptCheckpoint("bad centroid shape".into()));
        }
        Ok(Self {
            k: t.shape()[0],
            dim: t.shape()[1],
            centroids: t.into_data(),
            seed,
        })
    }
}

/// Lloyd's algorithm with k-means++ seeding over all frames of `features`.
pub fn kmeans_fit(
    features: &[FeatureMatrix],
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KmeansFit> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let dim = match features.first() {
        Some(f) => f.dim(),
        None => {
            return Err(Error::InsufficientData(format!(
                "no frames to fit {k} clusters"
            )))
        }
    };
    if features.iter().any(|f| f.dim() != dim) {
        return Err(shape_err("feature matrices disagree on dimension"));
    }
    let points: Vec<&[f32]> = features
        .iter()
        .flat_map(|f| (0..f.frames()).map(move |t| f.frame(t)))
        .collect();
    if points.len() < k {
        return Err(Error::InsufficientData(format!(
            "{} frames for {k} clusters",
            points.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(&points, k, dim, &mut rng);
    let mut model = QuantizerModel {
        k,
        dim,
        centroids: Vec::new(),
        seed,
    };

    let mut assignment = vec![usize::MAX; points.len()];
    let mut inertia = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        model.centroids = centroids.clone();
        let mut changed = false;
        let mut total = 0.0;
        for (p, slot) in points.iter().zip(assignment.iter_mut()) {
            let (c, d) = model.nearest(p);
            total += d;
            if *slot != c {
                *slot = c;
                changed = true;
            }
        }
        inertia.push(total);
        if !changed {
            break;
        }

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(p.iter()) {
                *s += f64::from(x);
            }
        }
        for c in 0..k {
            // An empty cluster keeps its previous centroid.
            if counts[c] > 0 {
                let n = counts[c] as f64;
                for j in 0..dim {
                    centroids[c * dim + j] = sums[c * dim + j] / n;
                }
            }
        }
    }
    model.centroids = centroids;
    Ok(KmeansFit {
        model,
        inertia,
        iterations,
    })
}

fn plus_plus_init(points: &[&[f32]], k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..points.len());
    centroids.extend(points[first].iter().map(|&x| f64::from(x)));
    let mut dist: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(&centroids[..dim], p))
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        let start = c * dim;
        centroids.extend(points[pick].iter().map(|&x| f64::from(x)));
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(&centroids[start..start + dim], p));
        }
    }
    centroids
}

/// Maps each frame to its nearest centroid id.
pub fn quantize(model: &QuantizerModel, features: &FeatureMatrix) -> Result<Vec<usize>> {
    if features.dim() != model.dim {
        return Err(shape_err(format!(
            "features have dim {}, model expects {}",
            features.dim(),
            model.dim
        )));
    }
    Ok((0..features.frames())
        .map(|t| model.nearest(features.frame(t)).0)
        .collect())
}
