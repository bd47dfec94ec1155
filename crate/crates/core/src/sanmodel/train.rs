//! SAN objective, per-batch gradients and the training loop.

use std::sync::Arc;

use rayon::prelude::*;

use super::loss::{cross_entropy, squared_distance, LossBreakdown, LossWeights};
use super::models::{Autoencoder, FaceMatcher, GenderClassifier};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::labels::{AttributeLabels, Gender};
use crate::nn::{permutation, seeded_rng, FeatureMap, Grads, Layer, Optimizer, OptimizerConfig, Sequential, Trace};
use crate::prototype::PrototypeSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct TrainSample<'a, T> {
    pub image: &'a Image<T>,
    pub labels: AttributeLabels,
}

/// Frozen auxiliaries and prototypes the autoencoder is trained against.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a, T> {
    pub classifier: &'a GenderClassifier<T>,
    pub matcher: &'a FaceMatcher<T>,
    pub protos: &'a PrototypeSet<T>,
    pub weights: LossWeights,
}

#[derive(Debug, Clone, Copy, Default)]
struct Terms {
    recon: f64,
    matching: f64,
    gender: f64,
}

/// Probability output and the trace of a sigmoid-terminated network.
fn sigmoid_head<T: Scalar>(net: &Sequential<T>, x: &FeatureMap<T>) -> (T, Trace<T>) {
    debug_assert!(matches!(net.layers.last(), Some(Layer::Sigmoid)));
    let trace = net.forward_trace(x);
    (trace.output().data[0], trace)
}

/// Input gradient of `scale * CE(sigmoid(z), target)` taken in logit space,
/// i.e. `scale * (s - target)`. This equals the clamped loss's derivative
/// wherever the probability clamp is inactive and keeps a signal when it is.
fn logit_input_grad<T: Scalar>(net: &Sequential<T>, trace: &Trace<T>, s: T, target: T, scale: T) -> FeatureMap<T> {
    let n = net.layers.len() - 1;
    let g = FeatureMap::vector(vec![scale * (s - target)]);
    net.backward_prefix(trace, n, g, None, true).expect("input grad requested")
}

/// One sample's loss terms and, when `grad_scale` is given, the gradient of
/// `grad_scale * (weighted sample loss)` with respect to autoencoder tensors.
fn sample_pass<T: Scalar>(
    ae: &Autoencoder<T>,
    obj: &Objective<'_, T>,
    sample: &TrainSample<'_, T>,
    grad_scale: Option<T>,
) -> Result<(Terms, Option<Grads<T>>)> {
    let x = sample.image;
    let proto_same = obj.protos.same_gender(sample.labels);
    let proto_opp = obj.protos.opposite_gender(sample.labels);
    let enc = ae.encode(x, proto_same)?;
    let t_same = ae.fuse_trace(&enc, proto_same)?;
    let t_opp = ae.fuse_trace(&enc, proto_opp)?;
    let y_same = t_same.output();
    let y_opp = t_opp.output();
    let xm = FeatureMap::from_image(x);

    let n_pix = T::of(x.pixels().len() as f64);
    let recon = y_same
        .data
        .iter()
        .zip(x.pixels())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        / n_pix;

    let matcher = obj.matcher.net();
    let e_x = matcher.forward(&xm);
    let tm_same = matcher.forward_trace(y_same);
    let tm_opp = matcher.forward_trace(y_opp);
    let matching = squared_distance(&e_x.data, &tm_same.output().data)
        + squared_distance(&e_x.data, &tm_opp.output().data);

    let classifier = obj.classifier.net();
    let (s_same, tg_same) = sigmoid_head(classifier, y_same);
    let (s_opp, tg_opp) = sigmoid_head(classifier, y_opp);
    let target = T::of(sample.labels.gender.target());
    let flipped = T::one() - target;
    let gender = cross_entropy(s_same, target) + cross_entropy(s_opp, flipped);

    let terms = Terms {
        recon: recon.as_f64(),
        matching: matching.as_f64(),
        gender: gender.as_f64(),
    };
    let Some(k) = grad_scale else {
        return Ok((terms, None));
    };

    let w = obj.weights;
    let two = T::of(2.0);
    let kr = T::of(w.recon) * k;
    let mut g_same = FeatureMap::from_vec(
        1,
        x.height(),
        x.width(),
        y_same
            .data
            .iter()
            .zip(x.pixels())
            .map(|(&a, &b)| kr * two * (a - b) / n_pix)
            .collect(),
    );
    let mut g_opp = FeatureMap::zeros(1, x.height(), x.width());

    if w.matching != 0.0 {
        let km = T::of(w.matching) * k;
        for (trace, g) in [(&tm_same, &mut g_same), (&tm_opp, &mut g_opp)] {
            let ge: Vec<T> = trace
                .output()
                .data
                .iter()
                .zip(&e_x.data)
                .map(|(&a, &b)| km * two * (a - b))
                .collect();
            let gin = matcher
                .backward(trace, FeatureMap::vector(ge), None, true)
                .expect("input grad requested");
            add_into(g, &gin);
        }
    }
    if w.gender != 0.0 {
        let kg = T::of(w.gender) * k;
        let gin = logit_input_grad(classifier, &tg_same, s_same, target, kg);
        add_into(&mut g_same, &gin);
        let gin = logit_input_grad(classifier, &tg_opp, s_opp, flipped, kg);
        add_into(&mut g_opp, &gin);
    }

    let sizes = ae.tensor_sizes();
    let split = ae.body_tensor_count();
    let mut g_fusion = Grads::zeros_like(&sizes[split..]);
    let gc_same = ae
        .fusion
        .backward(&t_same, g_same, Some(&mut g_fusion), true)
        .expect("input grad requested");
    let gc_opp = ae
        .fusion
        .backward(&t_opp, g_opp, Some(&mut g_fusion), true)
        .expect("input grad requested");
    let f = ae.arch.feature_maps;
    let mut g_feat = gc_same.leading_channels(f);
    add_into(&mut g_feat, &gc_opp.leading_channels(f));
    let mut g_body = Grads::zeros_like(&sizes[..split]);
    ae.body.backward(&enc.trace, g_feat, Some(&mut g_body), false);
    g_body.tensors.extend(g_fusion.tensors);
    Ok((terms, Some(g_body)))
}

fn add_into<T: Scalar>(dst: &mut FeatureMap<T>, src: &FeatureMap<T>) {
    for (a, &b) in dst.data.iter_mut().zip(&src.data) {
        *a = *a + b;
    }
}

fn breakdown(terms: &[Terms], weights: LossWeights) -> LossBreakdown {
    let n = terms.len() as f64;
    let sum = terms.iter().fold(Terms::default(), |acc, t| Terms {
        recon: acc.recon + t.recon,
        matching: acc.matching + t.matching,
        gender: acc.gender + t.gender,
    });
    LossBreakdown::new(sum.recon / n, sum.matching / n, sum.gender / n, weights)
}

fn nonempty<T>(batch: &[T]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    Ok(())
}

/// Batch-mean loss without gradients.
pub fn batch_loss<T: Scalar>(
    ae: &Autoencoder<T>,
    obj: &Objective<'_, T>,
    batch: &[TrainSample<'_, T>],
) -> Result<LossBreakdown> {
    nonempty(batch)?;
    let terms = batch
        .par_iter()
        .map(|s| sample_pass(ae, obj, s, None).map(|(t, _)| t))
        .collect::<Result<Vec<_>>>()?;
    Ok(breakdown(&terms, obj.weights))
}

/// Batch-mean loss and its gradient with respect to every autoencoder
/// tensor. Per-sample gradients are reduced in batch order.
pub fn batch_gradients<T: Scalar>(
    ae: &Autoencoder<T>,
    obj: &Objective<'_, T>,
    batch: &[TrainSample<'_, T>],
) -> Result<(LossBreakdown, Grads<T>)> {
    nonempty(batch)?;
    let k = T::of(1.0 / batch.len() as f64);
    let per_sample = batch
        .par_iter()
        .map(|s| sample_pass(ae, obj, s, Some(k)))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = Grads::zeros_like(&ae.tensor_sizes());
    let mut terms = Vec::with_capacity(per_sample.len());
    for (t, g) in per_sample {
        terms.push(t);
        grads.add_assign(&g.expect("gradients requested"));
    }
    Ok((breakdown(&terms, obj.weights), grads))
}

/// Mutable state of one SAN's training run. The matcher is shared and never
/// written to.
#[derive(Debug, Clone)]
pub struct SanTrainer<T> {
    pub autoencoder: Autoencoder<T>,
    pub classifier: GenderClassifier<T>,
    pub matcher: Arc<FaceMatcher<T>>,
    pub weights: LossWeights,
    optimizer: Optimizer<T>,
    /// Present when the classifier is updated in alternation with the
    /// autoencoder instead of staying frozen.
    adversary: Option<Optimizer<T>>,
}

impl<T: Scalar> SanTrainer<T> {
    pub fn new(
        autoencoder: Autoencoder<T>,
        classifier: GenderClassifier<T>,
        matcher: Arc<FaceMatcher<T>>,
        weights: LossWeights,
        optimizer: OptimizerConfig,
        alternate_classifier: Option<OptimizerConfig>,
    ) -> Self {
        let opt = optimizer.build(&autoencoder.tensor_sizes());
        let adversary = alternate_classifier.map(|c| c.build(&classifier.net.tensor_sizes()));
        Self {
            autoencoder,
            classifier,
            matcher,
            weights,
            optimizer: opt,
            adversary,
        }
    }

    pub fn steps(&self) -> u64 {
        self.optimizer.steps()
    }

    /// One descent step on the batch. The returned breakdown is the loss
    /// before the update.
    pub fn train_step(&mut self, batch: &[TrainSample<'_, T>], protos: &PrototypeSet<T>) -> Result<LossBreakdown> {
        let obj = Objective {
            classifier: &self.classifier,
            matcher: &self.matcher,
            protos,
            weights: self.weights,
        };
        let (loss, grads) = batch_gradients(&self.autoencoder, &obj, batch)?;
        loss.check_finite()?;
        self.optimizer.step(self.autoencoder.tensors_mut(), &grads);
        self.autoencoder.check_finite()?;
        if self.adversary.is_some() {
            self.adversary_step(batch, protos)?;
        }
        Ok(loss)
    }

    /// Classifier update toward the true label on originals and on
    /// opposite-prototype outputs.
    fn adversary_step(&mut self, batch: &[TrainSample<'_, T>], protos: &PrototypeSet<T>) -> Result<()> {
        let mut items: Vec<(Image<T>, Gender)> = Vec::with_capacity(2 * batch.len());
        for s in batch {
            let y = self.autoencoder.perturb(
                s.image,
                protos.same_gender(s.labels),
                protos.opposite_gender(s.labels),
            )?;
            items.push((s.image.clone(), s.labels.gender));
            items.push((y, s.labels.gender));
        }
        let refs: Vec<(&Image<T>, Gender)> = items.iter().map(|(i, g)| (i, *g)).collect();
        let (_, grads) = super::pretrain::classifier_batch_grads(&self.classifier, &refs);
        let opt = self.adversary.as_mut().expect("checked by caller");
        opt.step(self.classifier.net.tensors_mut(), &grads);
        self.classifier.net.check_finite("classifier")
    }

    /// Runs `epochs` passes over `data` in seeded shuffled order and returns
    /// the mean pre-update breakdown of each epoch.
    pub fn fit(
        &mut self,
        data: &[TrainSample<'_, T>],
        protos: &PrototypeSet<T>,
        epochs: usize,
        batch_size: usize,
        seed: u64,
        mut on_epoch: impl FnMut(usize, &LossBreakdown),
    ) -> Result<Vec<LossBreakdown>> {
        nonempty(data)?;
        let batch_size = batch_size.max(1);
        let mut rng = seeded_rng(seed);
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let order = permutation(&mut rng, data.len());
            let mut sums = (0.0, 0.0, 0.0);
            let mut steps = 0usize;
            for chunk in order.chunks(batch_size) {
                let batch: Vec<TrainSample<'_, T>> = chunk.iter().map(|&i| data[i]).collect();
                let l = self.train_step(&batch, protos)?;
                sums.0 += l.recon;
                sums.1 += l.matching;
                sums.2 += l.gender;
                steps += 1;
            }
            let n = steps as f64;
            let mean = LossBreakdown::new(sums.0 / n, sums.1 / n, sums.2 / n, self.weights);
            on_epoch(epoch, &mean);
            history.push(mean);
        }
        Ok(history)
    }
}
