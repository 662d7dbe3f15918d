use serde::{Deserialize, Serialize};

use super::FeatureSequence;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and standard deviation of the training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn identity(dim: usize) -> Self {
        NormStats { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }
}

pub fn fit_norm_stats(sequences: &[FeatureSequence]) -> Result<NormStats> {
    let first = sequences.iter().find(|s| !s.is_empty()).ok_or_else(|| {
        Error::Parameter("cannot fit normalization statistics on an empty collection".into())
    })?;
    let dim = first.dim();
    let mut count = 0usize;
    let mut sum = vec![0.0; dim];
    for seq in sequences {
        if seq.dim() != dim {
            return Err(Error::Dimension(format!("feature dim {} vs {dim}", seq.dim())));
        }
        for t in 0..seq.len() {
            for (s, v) in sum.iter_mut().zip(seq.frames.row(t)) {
                *s += v;
            }
        }
        count += seq.len();
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mut sq = vec![0.0; dim];
    for seq in sequences {
        for t in 0..seq.len() {
            for ((q, v), m) in sq.iter_mut().zip(seq.frames.row(t)).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
    }
    let std = sq.iter().map(|q| (q / n).sqrt().max(STD_FLOOR)).collect();
    Ok(NormStats { mean, std })
}

fn apply(seq: &FeatureSequence, stats: &NormStats, f: impl Fn(f64, f64, f64) -> f64) -> Result<FeatureSequence> {
    if seq.dim() != stats.dim() || stats.std.len() != stats.dim() {
        return Err(Error::Dimension(format!("features have dim {}, stats have {}", seq.dim(), stats.dim())));
    }
    let dim = seq.dim();
    let data = seq
        .frames
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| f(v, stats.mean[i % dim], stats.std[i % dim]))
        .collect();
    Ok(FeatureSequence {
        frames: Tensor::new(seq.frames.shape().to_vec(), data)?,
        hop: seq.hop,
        window: seq.window,
    })
}

/// `(x - mean) / std` per dimension.
pub fn normalize(seq: &FeatureSequence, stats: &NormStats) -> Result<FeatureSequence> {
    apply(seq, stats, |v, m, s| (v - m) / s)
}

pub fn denormalize(seq: &FeatureSequence, stats: &NormStats) -> Result<FeatureSequence> {
    apply(seq, stats, |v, m, s| v * s + m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rng_normal, Rng};

    fn seq(rows: Vec<Vec<f64>>) -> FeatureSequence {
        FeatureSequence { frames: Tensor::from_rows(&rows).unwrap(), hop: 0.01, window: 0.025 }
    }

    #[test]
    fn single_frame() {
        let s = fit_norm_stats(&[seq(vec![vec![1.0, -2.0, 3.0]])]).unwrap();
        assert_eq!(s.mean, vec![1.0, -2.0, 3.0]);
        assert!(s.std.iter().all(|&v| v == STD_FLOOR));
    }

    #[test]
    fn mean_of_two() {
        let s = fit_norm_stats(&[seq(vec![vec![0.0; 4]]), seq(vec![vec![2.0; 4]])]).unwrap();
        assert_eq!(s.mean, vec![1.0; 4]);
        assert_eq!(s.std, vec![1.0; 4]);
    }

    #[test]
    fn empty_collection() {
        assert!(matches!(fit_norm_stats(&[]), Err(Error::Parameter(_))));
    }

    #[test]
    fn z_scores_training_set() {
        let mut rng = Rng::new(3);
        let seqs: Vec<_> = (0..4)
            .map(|_| FeatureSequence {
                frames: rng_normal(&mut rng, &[50, 39], 3.0, 2.0).unwrap(),
                hop: 0.01,
                window: 0.025,
            })
            .collect();
        let stats = fit_norm_stats(&seqs).unwrap();
        let normed: Vec<_> = seqs.iter().map(|s| normalize(s, &stats).unwrap()).collect();
        let refit = fit_norm_stats(&normed).unwrap();
        for d in 0..39 {
            assert!(refit.mean[d].abs() < 1e-9);
            assert!((refit.std[d] - 1.0).abs() < 1e-6);
        }
        // normalizing again with refitted stats changes nothing
        for (a, s) in normed.iter().zip(&normed) {
            let again = normalize(s, &refit).unwrap();
            assert!(again.frames.max_abs_diff(&a.frames).unwrap() < 1e-9);
        }
        let back = denormalize(&normed[0], &stats).unwrap();
        assert!(back.frames.max_abs_diff(&seqs[0].frames).unwrap() < 1e-12);
    }

    #[test]
    fn identity_stats_and_mean_input() {
        let s = seq(vec![vec![1.5, -0.5]]);
        assert_eq!(normalize(&s, &NormStats::identity(2)).unwrap(), s);
        let stats = NormStats { mean: vec![1.5, -0.5], std: vec![2.0, 3.0] };
        assert_eq!(normalize(&s, &stats).unwrap().frames.data(), &[0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(normalize(&seq(vec![vec![1.0; 3]]), &NormStats::identity(2)).is_err());
    }
}
