use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{OptimError, Result};

/// Feature rows with one label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(OptimError::Dataset {
                line: 0,
                detail: "no examples".into(),
            });
        }
        if features.len() != labels.len() {
            return Err(OptimError::Dimension {
                expected: features.len(),
                got: labels.len(),
            });
        }
        let dim = features[0].len();
        if let Some(row) = features.iter().find(|r| r.len() != dim) {
            return Err(OptimError::Dimension {
                expected: dim,
                got: row.len(),
            });
        }
        Ok(Self { features, labels })
    }

    /// Parses one example per line, fields separated by commas or
    /// whitespace, label in the last column. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut width = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| OptimError::Dataset {
                            line: i + 1,
                            detail: format!("'{f}' is not a finite number"),
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if fields.len() < 2 {
                return Err(OptimError::Dataset {
                    line: i + 1,
                    detail: "need at least one feature and a label".into(),
                });
            }
            match width {
                None => width = Some(fields.len()),
                Some(w) if w != fields.len() => {
                    return Err(OptimError::Dataset {
                        line: i + 1,
                        detail: format!("expected {w} columns, found {}", fields.len()),
                    })
                }
                _ => {}
            }
            let (x, y) = fields.split_at(fields.len() - 1);
            features.push(x.to_vec());
            labels.push(y[0]);
        }
        Self::new(features, labels)
    }

    /// Linearly separable-ish binary data: an intercept column plus `dim − 1`
    /// standard normal features, labelled by a noisy fixed hyperplane.
    pub fn synthetic(n: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let direction: Vec<f64> = (0..dim).map(|j| if j == 0 { 0.25 } else { 1.0 / j as f64 }).collect();
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut x: Vec<f64> = vec![1.0];
            x.extend((1..dim).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
            let noise: f64 = StandardNormal.sample(&mut rng);
            let score: f64 = x.iter().zip(&direction).map(|(a, b)| a * b).sum::<f64>() + 0.5 * noise;
            labels.push(if score > 0.0 { 1.0 } else { 0.0 });
            features.push(x);
        }
        Self { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }
}
