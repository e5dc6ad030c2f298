//! Supervised updates against expert labels.

use crate::error::{Error, Result};
use crate::exec;
use crate::policy::adam::Adam;
use crate::policy::net::{OutputSquash, PolicyNet, TrackFrame, Workspace, ACTION_DIM, HIST};
use crate::policy::real::Real;

/// One training example, borrowing visual frames from the rollout store.
pub struct ExampleRef<'a, T> {
    pub vis: [&'a TrackFrame<T>; HIST],
    pub imu: &'a [[T; 10]; HIST],
    pub reference: &'a [[T; 10]; HIST],
    pub label: [T; ACTION_DIM],
}

/// Upper bound on gradient chunks: the count depends only on the batch
/// size (never on thread availability), so parallel accumulation is
/// order-stable regardless of scheduling.
const MAX_GRAD_CHUNKS: usize = 8;

/// Mean loss and mean parameter gradients over a batch.
pub fn batch_loss_and_grads<T: Real>(
    net: &PolicyNet<T>,
    examples: &[ExampleRef<'_, T>],
    squash: &OutputSquash,
) -> (f64, PolicyNet<T>) {
    assert!(!examples.is_empty());
    let n = examples.len();
    let chunks = (n.div_ceil(4)).clamp(1, MAX_GRAD_CHUNKS);
    let chunk = n.div_ceil(chunks);
    let ranges: Vec<(usize, usize)> =
        (0..n).step_by(chunk).map(|s| (s, (s + chunk).min(n))).collect();

    let partials = exec::map(ranges, |(start, end)| {
        let mut ws = Workspace::new();
        let mut grads = net.zeros_like();
        let mut loss = 0.0f64;
        for ex in &examples[start..end] {
            let y = net.forward_full(&ex.vis, ex.imu, ex.reference, &mut ws);
            let (l, gy) = squash.loss_and_grad(&y, &ex.label);
            loss += l.to_f64();
            net.backward_full(&ws, &gy, &mut grads);
        }
        (loss, grads)
    });

    let inv = T::from_f64(1.0 / n as f64);
    let mut total = net.zeros_like();
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        total.add_scaled(&g, inv);
    }
    (loss / n as f64, total)
}

/// One optimizer step; errors if the loss went non-finite.
pub fn train_step<T: Real>(
    net: &mut PolicyNet<T>,
    examples: &[ExampleRef<'_, T>],
    squash: &OutputSquash,
    adam: &mut Adam<T>,
    lr: f64,
) -> Result<f64> {
    let (loss, grads) = batch_loss_and_grads(net, examples, squash);
    if !loss.is_finite() {
        return Err(Error::Diverged { context: "training loss", value: loss });
    }
    adam.update(net, &grads, lr);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn make_data(
        rng: &mut ChaCha8Rng,
        n: usize,
    ) -> (Vec<TrackFrame<f32>>, Vec<[[f32; 10]; HIST]>, Vec<[[f32; 10]; HIST]>, Vec<[f32; 4]>) {
        let frames: Vec<TrackFrame<f32>> = (0..n * HIST)
            .map(|_| {
                let mut f = [[0.0f32; 5]; crate::sensing::TRACKS_PER_FRAME];
                for row in f.iter_mut() {
                    for v in row.iter_mut() {
                        *v = rng.gen_range(-1.0..1.0);
                    }
                }
                f
            })
            .collect();
        let hists: Vec<[[f32; 10]; HIST]> = (0..n)
            .map(|_| {
                let mut h = [[0.0f32; 10]; HIST];
                for row in h.iter_mut() {
                    for v in row.iter_mut() {
                        *v = rng.gen_range(-1.0..1.0);
                    }
                }
                h
            })
            .collect();
        let refs = hists.clone();
        let labels: Vec<[f32; 4]> = (0..n)
            .map(|_| {
                [
                    rng.gen_range(2.0..20.0),
                    rng.gen_range(-8.0..8.0),
                    rng.gen_range(-8.0..8.0),
                    rng.gen_range(-2.0..2.0),
                ]
            })
            .collect();
        (frames, hists, refs, labels)
    }

    fn examples<'a>(
        frames: &'a [TrackFrame<f32>],
        hists: &'a [[[f32; 10]; HIST]],
        refs: &'a [[[f32; 10]; HIST]],
        labels: &'a [[f32; 4]],
    ) -> Vec<ExampleRef<'a, f32>> {
        (0..hists.len())
            .map(|i| ExampleRef {
                vis: std::array::from_fn(|f| &frames[i * HIST + f]),
                imu: &hists[i],
                reference: &refs[i],
                label: labels[i],
            })
            .collect()
    }

    #[test]
    fn overfits_identical_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (frames, hists, refs, labels) = make_data(&mut rng, 4);
        let exs = examples(&frames, &hists, &refs, &labels);
        let mut net: PolicyNet<f32> = PolicyNet::init(5);
        let mut adam = Adam::new(&net);
        let squash = OutputSquash::default();
        let mut losses = Vec::new();
        for _ in 0..100 {
            losses.push(train_step(&mut net, &exs, &squash, &mut adam, 3e-4).unwrap());
        }
        assert!(
            losses.last().unwrap() < &(losses[0] * 0.2),
            "loss {} -> {}",
            losses[0],
            losses.last().unwrap()
        );
        // Strict decrease over the run as a trend: compare win averages.
        let early: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let late: f64 = losses[90..].iter().sum::<f64>() / 10.0;
        assert!(late < early);
    }

    #[test]
    fn perfect_predictions_leave_params_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let (frames, hists, refs, seed_labels) = make_data(&mut rng, 2);
        let net: PolicyNet<f32> = PolicyNet::init(6);
        let squash = OutputSquash::default();
        // Set labels to the network's own outputs.
        let labels: Vec<[f32; 4]> = {
            let exs = examples(&frames, &hists, &refs, &seed_labels);
            let mut ws = Workspace::new();
            exs.iter()
                .map(|ex| {
                    let y = net.forward_full(&ex.vis, ex.imu, ex.reference, &mut ws);
                    squash.apply(&y)
                })
                .collect()
        };
        let exs = examples(&frames, &hists, &refs, &labels);
        let mut trained = net.clone();
        let mut adam = Adam::new(&trained);
        let loss = train_step(&mut trained, &exs, &squash, &mut adam, 3e-4).unwrap();
        assert!(loss < 1e-12, "loss {loss}");
        assert_eq!(trained, net);
    }

    #[test]
    fn small_lr_non_increasing_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (frames, hists, refs, labels) = make_data(&mut rng, 8);
        let exs = examples(&frames, &hists, &refs, &labels);
        let mut net: PolicyNet<f32> = PolicyNet::init(7);
        let mut adam = Adam::new(&net);
        let squash = OutputSquash::default();
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let loss = train_step(&mut net, &exs, &squash, &mut adam, 1e-5).unwrap();
            assert!(loss <= prev + 1e-6, "loss rose {prev} -> {loss}");
            prev = loss;
        }
    }

    #[test]
    fn batch_gradients_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let (frames, hists, refs, labels) = make_data(&mut rng, 9);
        let exs = examples(&frames, &hists, &refs, &labels);
        let net: PolicyNet<f32> = PolicyNet::init(8);
        let squash = OutputSquash::default();
        let (l1, g1) = batch_loss_and_grads(&net, &exs, &squash);
        let (l2, g2) = batch_loss_and_grads(&net, &exs, &squash);
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn full_train_path_gradcheck_f64() {
        // Two-example batch through the exact training path in f64.
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let (frames, hists, refs, labels) = make_data(&mut rng, 2);
        let frames64: Vec<TrackFrame<f64>> = frames
            .iter()
            .map(|f| {
                let mut o = [[0.0f64; 5]; crate::sensing::TRACKS_PER_FRAME];
                for (r, s) in o.iter_mut().zip(f.iter()) {
                    for (a, b) in r.iter_mut().zip(s.iter()) {
                        *a = *b as f64;
                    }
                }
                o
            })
            .collect();
        let hists64: Vec<[[f64; 10]; HIST]> = hists
            .iter()
            .map(|h| {
                let mut o = [[0.0f64; 10]; HIST];
                for (r, s) in o.iter_mut().zip(h.iter()) {
                    for (a, b) in r.iter_mut().zip(s.iter()) {
                        *a = *b as f64;
                    }
                }
                o
            })
            .collect();
        let refs64 = hists64.clone();
        let labels64: Vec<[f64; 4]> = labels
            .iter()
            .map(|l| [l[0] as f64, l[1] as f64, l[2] as f64, l[3] as f64])
            .collect();
        let exs: Vec<ExampleRef<'_, f64>> = (0..2)
            .map(|i| ExampleRef {
                vis: std::array::from_fn(|f| &frames64[i * HIST + f]),
                imu: &hists64[i],
                reference: &refs64[i],
                label: labels64[i],
            })
            .collect();
        let net: PolicyNet<f64> = PolicyNet::init(9);
        let squash = OutputSquash::default();
        let (_, grads) = batch_loss_and_grads(&net, &exs, &squash);

        let loss_of = |n: &PolicyNet<f64>| batch_loss_and_grads(n, &exs, &squash).0;
        // Small step keeps finite differences off the rectifier kinks.
        let eps = 1e-6;
        let names: Vec<String> = net.tensors().iter().map(|(n, _)| n.clone()).collect();
        let gt = grads.tensors();
        let mut worst = (0.0f64, String::new(), 0.0, 0.0);
        for (ti, name) in names.iter().enumerate() {
            let len = gt[ti].1.len();
            for pi in [0, len / 2, len - 1] {
                let mut p = net.clone();
                p.tensors_mut()[ti].1[pi] += eps;
                let mut m = net.clone();
                m.tensors_mut()[ti].1[pi] -= eps;
                let fd = (loss_of(&p) - loss_of(&m)) / (2.0 * eps);
                let an = gt[ti].1[pi];
                // Floor the denominator: near-zero gradients are FD noise.
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
                if rel > worst.0 {
                    worst = (rel, format!("{name}[{pi}]"), fd, an);
                }
            }
        }
        assert!(worst.0 < 1e-3, "worst rel err {} at {} (fd {} vs grad {})", worst.0, worst.1, worst.2, worst.3);
    }
}
