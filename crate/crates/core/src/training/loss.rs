//! Cosine-geometry losses with analytic gradients.
//!
//! Inputs are the head outputs *before* L2 normalization; gradients are with
//! respect to those raw vectors, so they already include the normalization.

use super::TrainError;

/// `cos(x, y)` and its gradients with respect to `x` and `y`.
pub fn cosine_with_grad(x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), TrainError> {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 || !nx.is_finite() || !ny.is_finite() {
        return Err(TrainError::ZeroNorm);
    }
    let d: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let c = d / (nx * ny);
    let gx = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| yi / (nx * ny) - c * xi / (nx * nx))
        .collect();
    let gy = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| xi / (nx * ny) - c * yi / (ny * ny))
        .collect();
    Ok((c, gx, gy))
}

fn cosine(x: &[f64], y: &[f64]) -> Result<f64, TrainError> {
    Ok(cosine_with_grad(x, y)?.0)
}

/// Squared-hinge contrastive loss on cosine distance `d = 1 - cos`:
/// `label * d^2 + (1 - label) * max(0, margin - d)^2`.
pub fn contrastive_loss(
    e1: &[f64],
    e2: &[f64],
    label: u8,
    margin: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>), TrainError> {
    let (c, g1, g2) = cosine_with_grad(e1, e2)?;
    let d = 1.0 - c;
    let (loss, dl_dd) = if label == 1 {
        (d * d, 2.0 * d)
    } else {
        let h = (margin - d).max(0.0);
        (h * h, -2.0 * h)
    };
    // dL/dc = -dL/dd
    let scale = -dl_dd;
    Ok((
        loss,
        g1.into_iter().map(|g| g * scale).collect(),
        g2.into_iter().map(|g| g * scale).collect(),
    ))
}

/// Gradients of a triplet loss with respect to anchor, positive, negative.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletGrads {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// `max(0, (1 - cos(a, p)) - (1 - cos(a, n)) + margin)`.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<(f64, TripletGrads), TrainError> {
    let (cap, ga_p, gp) = cosine_with_grad(a, p)?;
    let (can, ga_n, gn) = cosine_with_grad(a, n)?;
    let raw = can - cap + margin;
    if raw <= 0.0 {
        let z = vec![0.0; a.len()];
        return Ok((
            0.0,
            TripletGrads {
                anchor: z.clone(),
                positive: z.clone(),
                negative: z,
            },
        ));
    }
    Ok((
        raw,
        TripletGrads {
            anchor: ga_n.iter().zip(&ga_p).map(|(x, y)| x - y).collect(),
            positive: gp.into_iter().map(|g| -g).collect(),
            negative: gn,
        },
    ))
}

/// Which in-batch triplets an online triplet loss averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mining {
    /// Per anchor: the farthest positive and the closest negative.
    #[default]
    BatchHard,
    /// Every valid in-batch triplet.
    BatchAll,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineTripletOutput {
    pub loss: f64,
    /// One gradient per batch element.
    pub grads: Vec<Vec<f64>>,
    /// Anchors (batch-hard) or triplets (batch-all) the loss averages over.
    pub terms: usize,
    /// Set when the batch contains no anchor with both a positive and a
    /// negative; the loss is then 0.
    pub no_valid_anchor: bool,
}

/// Triplet loss mined within a batch of embeddings labelled by class.
pub fn online_triplet_batch<L: Eq>(
    embeddings: &[Vec<f64>],
    labels: &[L],
    margin: f64,
    mining: Mining,
) -> Result<OnlineTripletOutput, TrainError> {
    assert_eq!(embeddings.len(), labels.len());
    let n = embeddings.len();
    let dim = embeddings.first().map_or(0, Vec::len);
    let mut grads = vec![vec![0.0; dim]; n];
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = 1.0 - cosine(&embeddings[i], &embeddings[j])?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut chosen: Vec<(usize, usize, usize)> = Vec::new();
    let mut terms = 0usize;
    for a in 0..n {
        let pos = (0..n).filter(|&p| p != a && labels[p] == labels[a]);
        let neg = (0..n).filter(|&q| labels[q] != labels[a]);
        match mining {
            Mining::BatchHard => {
                let hardest_pos = pos.max_by(|&x, &y| dist[a][x].total_cmp(&dist[a][y]));
                let hardest_neg = neg.min_by(|&x, &y| dist[a][x].total_cmp(&dist[a][y]));
                if let (Some(p), Some(q)) = (hardest_pos, hardest_neg) {
                    terms += 1;
                    chosen.push((a, p, q));
                }
            }
            Mining::BatchAll => {
                let negs: Vec<usize> = neg.collect();
                for p in pos {
                    for &q in &negs {
                        terms += 1;
                        chosen.push((a, p, q));
                    }
                }
            }
        }
    }
    if terms == 0 {
        return Ok(OnlineTripletOutput {
            loss: 0.0,
            grads,
            terms: 0,
            no_valid_anchor: true,
        });
    }
    let scale = 1.0 / terms as f64;
    let mut total = 0.0;
    for (a, p, q) in chosen {
        let (l, g) = triplet_loss(&embeddings[a], &embeddings[p], &embeddings[q], margin)?;
        if l == 0.0 {
            continue;
        }
        total += l;
        for (dst, src) in [(a, &g.anchor), (p, &g.positive), (q, &g.negative)] {
            for (x, y) in grads[dst].iter_mut().zip(src) {
                *x += y * scale;
            }
        }
    }
    Ok(OnlineTripletOutput {
        loss: total * scale,
        grads,
        terms,
        no_valid_anchor: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences of `f` at `x`.
    fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..x.len())
            .map(|i| {
                let mut hi = x.to_vec();
                let mut lo = x.to_vec();
                hi[i] += h;
                lo[i] -= h;
                (f(&hi) - f(&lo)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale = a
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        if scale < 1e-12 {
            diff
        } else {
            diff / scale
        }
    }

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn identical_positives_have_zero_loss() {
        let e = [0.3, -0.4, 0.5];
        let (l, g1, g2) = contrastive_loss(&e, &e, 1, 0.5).unwrap();
        assert!(l < 1e-30);
        assert!(g1.iter().chain(&g2).all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn orthogonal_negative_is_past_margin() {
        let (l, g1, _) = contrastive_loss(&[1.0, 0.0], &[0.0, 1.0], 0, 0.5).unwrap();
        assert_eq!(l, 0.0);
        assert!(g1.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn worked_contrastive_example() {
        let e1 = [1.0, 0.0];
        let e2 = [0.6, 0.8];
        let (l, g1, g2) = contrastive_loss(&e1, &e2, 1, 0.5).unwrap();
        assert!((l - 0.16).abs() < 1e-12);
        let n1 = numeric_grad(|x| contrastive_loss(x, &e2, 1, 0.5).unwrap().0, &e1);
        let n2 = numeric_grad(|x| contrastive_loss(&e1, x, 1, 0.5).unwrap().0, &e2);
        assert!(rel_err(&g1, &n1) < 1e-4);
        assert!(rel_err(&g2, &n2) < 1e-4);
    }

    #[test]
    fn contrastive_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..200 {
            let d = 2 + case % 6;
            let e1 = rand_vec(&mut rng, d);
            let e2 = rand_vec(&mut rng, d);
            let label = (case % 2) as u8;
            let (_, g1, g2) = contrastive_loss(&e1, &e2, label, 0.5).unwrap();
            let n1 = numeric_grad(|x| contrastive_loss(x, &e2, label, 0.5).unwrap().0, &e1);
            let n2 = numeric_grad(|x| contrastive_loss(&e1, x, label, 0.5).unwrap().0, &e2);
            assert!(rel_err(&g1, &n1) < 1e-4, "case {case}");
            assert!(rel_err(&g2, &n2) < 1e-4, "case {case}");
        }
    }

    #[test]
    fn triplet_closed_forms() {
        let a = [1.0, 0.0];
        let (l, _) = triplet_loss(&a, &[1.0, 0.0], &[0.0, 1.0], 0.15).unwrap();
        assert_eq!(l, 0.0);
        let (l, _) = triplet_loss(&a, &[0.6, 0.8], &[0.6, -0.8], 0.15).unwrap();
        assert!((l - 0.15).abs() < 1e-12);
    }

    #[test]
    fn triplet_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = 0.15;
        for case in 0..200 {
            let d = 2 + case % 5;
            let (a, p, n) = (rand_vec(&mut rng, d), rand_vec(&mut rng, d), rand_vec(&mut rng, d));
            let (_, g) = triplet_loss(&a, &p, &n, m).unwrap();
            let na = numeric_grad(|x| triplet_loss(x, &p, &n, m).unwrap().0, &a);
            let np = numeric_grad(|x| triplet_loss(&a, x, &n, m).unwrap().0, &p);
            let nn = numeric_grad(|x| triplet_loss(&a, &p, x, m).unwrap().0, &n);
            assert!(rel_err(&g.anchor, &na) < 1e-4, "case {case}");
            assert!(rel_err(&g.positive, &np) < 1e-4, "case {case}");
            assert!(rel_err(&g.negative, &nn) < 1e-4, "case {case}");
        }
    }

    #[test]
    fn zero_norm_inputs_error() {
        assert!(matches!(contrastive_loss(&[0.0, 0.0], &[1.0, 0.0], 1, 0.5), Err(TrainError::ZeroNorm)));
        assert!(matches!(
            triplet_loss(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], 0.1),
            Err(TrainError::ZeroNorm)
        ));
    }

    #[test]
    fn single_class_batch_is_flagged() {
        let e = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = online_triplet_batch(&e, &[1, 1], 0.15, Mining::BatchHard).unwrap();
        assert!(out.no_valid_anchor);
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn separated_clusters_with_zero_margin() {
        let e = vec![vec![1.0, 0.0], vec![0.99, 0.01], vec![0.0, 1.0], vec![0.01, 0.99]];
        let out = online_triplet_batch(&e, &[0, 0, 1, 1], 0.0, Mining::BatchHard).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.terms, 4);
    }

    #[test]
    fn batch_hard_equals_brute_force_over_valid_triplets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels = [0, 0, 1, 1];
        for _ in 0..50 {
            let e: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, 3)).collect();
            let margin = 0.3;
            // Oracle: for each anchor, the worst hinge over every valid (p, n).
            let mut total = 0.0;
            let mut anchors = 0;
            let mut enumerated = 0;
            for a in 0..4 {
                let mut worst: Option<f64> = None;
                for p in 0..4 {
                    for n in 0..4 {
                        if p != a && labels[p] == labels[a] && labels[n] != labels[a] {
                            enumerated += 1;
                            let l = triplet_loss(&e[a], &e[p], &e[n], margin).unwrap().0;
                            worst = Some(worst.map_or(l, |w: f64| w.max(l)));
                        }
                    }
                }
                if let Some(w) = worst {
                    total += w;
                    anchors += 1;
                }
            }
            assert_eq!(enumerated, 8);
            let out = online_triplet_batch(&e, &labels, margin, Mining::BatchHard).unwrap();
            assert!((out.loss - total / anchors as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn online_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels = [0, 0, 1, 1, 2, 0];
        for mining in [Mining::BatchHard, Mining::BatchAll] {
            let e: Vec<Vec<f64>> = (0..6).map(|_| rand_vec(&mut rng, 4)).collect();
            let out = online_triplet_batch(&e, &labels, 0.5, mining).unwrap();
            for i in 0..e.len() {
                let num = numeric_grad(
                    |x| {
                        let mut e2 = e.clone();
                        e2[i] = x.to_vec();
                        online_triplet_batch(&e2, &labels, 0.5, mining).unwrap().loss
                    },
                    &e[i],
                );
                assert!(rel_err(&out.grads[i], &num) < 1e-4, "{mining:?} element {i}");
            }
        }
    }
}
