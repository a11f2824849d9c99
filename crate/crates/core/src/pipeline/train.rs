use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{panel_tensor, NetworkSet};
use super::report::{EpochRecord, Phase, RuleMetric, RunReport};
use super::{Mode, TrainConfig};
use crate::augment::{make_views, AugmentConfig};
use crate::error::{Error, Result};
use crate::losses::{aux_node, ce_node, contrastive_node, NegativeScope};
use crate::numerics::{Adam, AdamConfig, Graph, ParamStore, Tensor, Var};
use crate::rpmgen::{Dataset, RpmInstance};
use crate::rules::{encode, enumerate_rule_space, Scheme};

const SPLIT_SALT: u64 = 0x5eed_0f_7a11d;
const SHUFFLE_SALT: u64 = 0x5f1e_ba7c;
const VIEW_SALT: u64 = 0xa0_9e47;

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Splits indices into (train, validation) by hashing instance seeds; about
/// 10% land in validation independent of dataset order.
pub fn split_validation(data: &Dataset) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, inst) in data.instances.iter().enumerate() {
        if mix(inst.seed ^ SPLIT_SALT) % 10 == 0 {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    (train, val)
}

fn check_dataset(data: &Dataset, cfg: &TrainConfig) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("dataset is empty".into()));
    }
    if data.layout != cfg.layout {
        return Err(Error::DatasetMismatch(format!(
            "dataset layout {:?}, config layout {:?}",
            data.layout, cfg.layout
        )));
    }
    Ok(())
}

fn check_net(net: &NetworkSet, data: &Dataset) -> Result<()> {
    if net.config.panel_size != data.panel_size {
        return Err(Error::DatasetMismatch(format!(
            "panels are {}px, network expects {}px",
            data.panel_size, net.config.panel_size
        )));
    }
    Ok(())
}

fn targets(instances: &[&RpmInstance], scheme: Scheme) -> Result<Tensor> {
    let rows = instances
        .iter()
        .map(|i| encode(&i.structure, scheme).map(|t| t.to_f64()))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_rows(&rows)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Default)]
struct Totals {
    loss: f64,
    contrastive: f64,
    aux: f64,
    ce: f64,
    views: usize,
    instances: usize,
    correct: usize,
}

impl Totals {
    fn mean(&self, x: f64, per: usize) -> f64 {
        if per == 0 {
            0.0
        } else {
            x / per as f64
        }
    }
}

struct StepOut {
    graph: Graph,
    loss: Var,
    contrastive: f64,
    aux: f64,
    ce: f64,
    correct: usize,
}

/// Builds the pre-training loss over `views` (one entry per anchor).
fn pretrain_graph(net: &NetworkSet, views: &[&RpmInstance], cfg: &TrainConfig) -> Result<StepOut> {
    let m = views.len();
    let mut g = Graph::new();
    let x = g.input(panel_tensor(views, net.config.panel_size)?);
    let h = net.encode(&mut g, x, m, false)?;
    let mut terms = Vec::new();
    let mut contrastive = 0.0;
    let mut aux = 0.0;
    if cfg.gamma > 0.0 {
        let correct: Vec<usize> = views.iter().enumerate().map(|(i, v)| i * 8 + usize::from(v.correct_index) - 1).collect();
        let hc = g.gather_rows(h, correct)?;
        let z = net.project(&mut g, hc)?;
        let zneg = if cfg.negatives == NegativeScope::Off {
            None
        } else {
            let wrong: Vec<usize> = views
                .iter()
                .enumerate()
                .flat_map(|(i, v)| (0..8).filter(move |c| c + 1 != usize::from(v.correct_index)).map(move |c| i * 8 + c))
                .collect();
            let hn = g.gather_rows(h, wrong)?;
            Some(net.project(&mut g, hn)?)
        };
        let labels: Vec<Vec<usize>> = views.iter().map(|v| v.structure.label_set()).collect();
        let lc = contrastive_node(&mut g, z, zneg, &labels, cfg.tau, cfg.contrast_options())?;
        contrastive = g.value(lc).item();
        terms.push(g.scale(lc, cfg.gamma));
    }
    if cfg.beta > 0.0 {
        let logits = net.rule_logits(&mut g, h, m)?;
        let la = aux_node(&mut g, logits, &targets(views, cfg.scheme)?)?;
        aux = g.value(la).item();
        terms.push(g.scale(la, cfg.beta));
    }
    let mut loss = terms.pop().ok_or_else(|| Error::InvalidArgument("γ and β are both zero".into()))?;
    for t in terms {
        loss = g.add(loss, t)?;
    }
    Ok(StepOut {
        graph: g,
        loss,
        contrastive,
        aux,
        ce: 0.0,
        correct: 0,
    })
}

/// Pre-training objective `γ·contrastive + β·aux` over `views`, as a graph
/// whose parameters are those of `net.store`.
pub fn pretrain_loss(net: &NetworkSet, views: &[&RpmInstance], cfg: &TrainConfig) -> Result<(Graph, Var)> {
    let out = pretrain_graph(net, views, cfg)?;
    Ok((out.graph, out.loss))
}

/// CE over the 8 candidates plus `β`·aux when `scheme` is given.
fn supervised_graph(net: &NetworkSet, batch: &[&RpmInstance], beta: f64, scheme: Option<Scheme>) -> Result<StepOut> {
    let n = batch.len();
    let mut g = Graph::new();
    let x = g.input(panel_tensor(batch, net.config.panel_size)?);
    let h = net.encode(&mut g, x, n, false)?;
    let scores = net.scores(&mut g, h, n, false)?;
    let answers: Vec<usize> = batch.iter().map(|i| usize::from(i.correct_index) - 1).collect();
    let correct = {
        let s = g.value(scores);
        answers.iter().enumerate().filter(|(r, k)| argmax(s.row(*r)) == **k).count()
    };
    let lce = ce_node(&mut g, scores, answers)?;
    let ce = g.value(lce).item();
    let mut loss = lce;
    let mut aux = 0.0;
    if let Some(scheme) = scheme {
        if beta > 0.0 {
            let logits = net.rule_logits(&mut g, h, n)?;
            let la = aux_node(&mut g, logits, &targets(batch, scheme)?)?;
            aux = g.value(la).item();
            let la = g.scale(la, beta);
            loss = g.add(loss, la)?;
        }
    }
    Ok(StepOut {
        graph: g,
        loss,
        contrastive: 0.0,
        aux,
        ce,
        correct,
    })
}

fn diverged(epoch: usize, what: &str, value: f64) -> Error {
    Error::Diverged {
        epoch,
        reason: format!("{what} loss is {value}"),
    }
}

struct EarlyStop {
    patience: usize,
    best: f64,
    best_epoch: usize,
    snapshot: Option<ParamStore>,
    waited: usize,
}

impl EarlyStop {
    fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            snapshot: None,
            waited: 0,
        }
    }

    /// Records an epoch; returns true when training should stop.
    fn observe(&mut self, epoch: usize, loss: f64, store: &ParamStore) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.snapshot = Some(store.clone());
            self.waited = 0;
            false
        } else {
            self.waited += 1;
            self.waited >= self.patience
        }
    }
}

fn instances<'a>(data: &'a Dataset, idx: &[usize]) -> Vec<&'a RpmInstance> {
    idx.iter().map(|&i| &data.instances[i]).collect()
}

fn empty_report(mode: Mode, cfg: &TrainConfig, train: usize, val: usize, test: usize) -> RunReport {
    RunReport {
        mode: mode.name().into(),
        config: cfg.clone(),
        seed: cfg.seed,
        train_instances: train,
        val_instances: val,
        test_instances: test,
        epochs: Vec::new(),
        best_epochs: Vec::new(),
        val_accuracy: 0.0,
        test_accuracy: 0.0,
        rule_metrics: Vec::new(),
        encoder_fingerprint: String::new(),
        wall_clock_seconds: 0.0,
    }
}

/// Pre-trains the encoder, projection and rule head with
/// `γ·L_contrastive + β·L_aux`, keeping the weights of the epoch with the
/// lowest validation loss.
pub fn pretrain_contrastive(net: &mut NetworkSet, data: &Dataset, cfg: &TrainConfig) -> Result<RunReport> {
    cfg.validate()?;
    cfg.weights().check_pretraining()?;
    check_dataset(data, cfg)?;
    check_net(net, data)?;
    let start = Instant::now();
    let (mut train_idx, val_idx) = split_validation(data);
    let mode = if cfg.augment { Mode::Mlcl } else { Mode::MlclNoAug };
    let mut report = empty_report(mode, cfg, train_idx.len(), val_idx.len(), 0);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut view_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VIEW_SALT);
    let aug = AugmentConfig {
        free_rotation: cfg.free_rotation,
    };
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &net.store,
    );
    let mut stop = EarlyStop::new(cfg.patience);
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut t = Totals::default();
        for chunk in train_idx.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch = instances(data, chunk);
            let owned: Vec<RpmInstance>;
            let views: Vec<&RpmInstance> = if cfg.augment {
                let pairs: Vec<(RpmInstance, RpmInstance)> =
                    batch.iter().map(|i| make_views(i, &mut view_rng, &aug)).collect();
                let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
                owned = a.into_iter().chain(b).collect();
                owned.iter().collect()
            } else {
                batch
            };
            let out = pretrain_graph(net, &views, cfg)?;
            let loss = out.graph.value(out.loss).item();
            if !loss.is_finite() {
                return Err(diverged(epoch, "training", loss));
            }
            let grads = out.graph.backward(out.loss)?;
            let grads = grads.for_store(&net.store);
            adam.step(&mut net.store, &grads)?;
            t.loss += loss;
            t.contrastive += out.contrastive;
            t.aux += out.aux;
            t.views += views.len();
        }
        let train_loss = t.mean(t.loss, t.views);
        let val_loss = if val_idx.len() >= 2 {
            pretrain_eval_loss(net, data, &val_idx, cfg, epoch)?
        } else {
            train_loss
        };
        report.epochs.push(EpochRecord {
            phase: Phase::Pretrain,
            epoch,
            train_loss,
            contrastive: t.mean(t.contrastive, t.views),
            aux: t.mean(t.aux, t.views),
            ce: 0.0,
            val_loss,
            train_accuracy: None,
        });
        if stop.observe(epoch, val_loss, &net.store) {
            break;
        }
    }
    if let Some(best) = stop.snapshot.take() {
        net.store = best;
    }
    report.best_epochs.push((Phase::Pretrain, stop.best_epoch));
    report.encoder_fingerprint = format!("{:016x}", net.encoder_fingerprint());
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn pretrain_eval_loss(net: &NetworkSet, data: &Dataset, idx: &[usize], cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for chunk in idx.chunks(cfg.batch_size) {
        if chunk.len() < 2 {
            continue;
        }
        let batch = instances(data, chunk);
        let out = pretrain_graph(net, &batch, cfg)?;
        let v = out.graph.value(out.loss).item();
        if !v.is_finite() {
            return Err(diverged(epoch, "validation", v));
        }
        total += v;
        count += chunk.len();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Frozen `h` for every instance in `idx`, `[n·8, D]`.
fn features(net: &NetworkSet, data: &Dataset, idx: &[usize], chunk: usize) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(idx.len() * 8 * net.config.feature_dim);
    for c in idx.chunks(chunk.max(1)) {
        let batch = instances(data, c);
        let mut g = Graph::new();
        let x = g.input(panel_tensor(&batch, net.config.panel_size)?);
        let h = net.encode(&mut g, x, batch.len(), true)?;
        rows.extend_from_slice(g.value(h).data());
    }
    Tensor::new(vec![idx.len() * 8, net.config.feature_dim], rows)
}

fn score_head_graph(head: &ParamStore, h: &Tensor, rows: &[usize], answers: &[usize]) -> Result<(Graph, Var, usize)> {
    let mut g = Graph::new();
    let hv = g.input(h.clone());
    let idx: Vec<usize> = rows.iter().flat_map(|r| (0..8).map(move |c| r * 8 + c)).collect();
    let hb = g.gather_rows(hv, idx)?;
    let w = g.param(head, crate::numerics::ParamId(0));
    let b = g.param(head, crate::numerics::ParamId(1));
    let s = g.matmul(hb, w)?;
    let s = g.add_bias(s, b)?;
    let s = g.reshape(s, &[rows.len(), 8])?;
    let correct = {
        let sv = g.value(s);
        answers.iter().enumerate().filter(|(r, k)| argmax(sv.row(*r)) == **k).count()
    };
    let loss = ce_node(&mut g, s, answers.to_vec())?;
    Ok((g, loss, correct))
}

fn answers(data: &Dataset, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| usize::from(data.instances[i].correct_index) - 1).collect()
}

/// Accuracy and mean CE of the scoring head over precomputed features.
fn score_eval(head: &ParamStore, h: &Tensor, ans: &[usize]) -> Result<(f64, f64)> {
    if ans.is_empty() {
        return Ok((0.0, 0.0));
    }
    let rows: Vec<usize> = (0..ans.len()).collect();
    let (g, loss, correct) = score_head_graph(head, h, &rows, ans)?;
    Ok((correct as f64 / ans.len() as f64, g.value(loss).item() / ans.len() as f64))
}

fn rule_metrics(net: &NetworkSet, h: &Tensor, data: &Dataset, idx: &[usize], scheme: Scheme) -> Result<Vec<RuleMetric>> {
    let d = net.config.rule_dim;
    let mut tp = vec![0usize; d];
    let mut fp = vec![0usize; d];
    let mut support = vec![0usize; d];
    let n = idx.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut g = Graph::new();
    let hv = g.input(h.clone());
    let logits = net.rule_logits(&mut g, hv, n)?;
    let logits = g.value(logits);
    let t = targets(&instances(data, idx), scheme)?;
    for r in 0..n {
        for j in 0..d {
            let truth = t.row(r)[j] > 0.5;
            let pred = logits.row(r)[j] > 0.0;
            support[j] += usize::from(truth);
            tp[j] += usize::from(truth && pred);
            fp[j] += usize::from(!truth && pred);
        }
    }
    let names: Vec<String> = match scheme {
        Scheme::Sparse => enumerate_rule_space(data.grammar()).iter().map(|r| r.to_string()).collect(),
        Scheme::Dense => (0..d).map(|j| format!("bit{j}")).collect(),
    };
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok((0..d)
        .map(|j| RuleMetric {
            index: j,
            name: names[j].clone(),
            support: support[j],
            precision: ratio(tp[j], tp[j] + fp[j]),
            recall: ratio(tp[j], support[j]),
        })
        .collect())
}

/// Trains only the scoring head `s` on frozen encoder features. The encoder
/// weights are never written.
pub fn linear_eval(net: &mut NetworkSet, data: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<RunReport> {
    cfg.validate()?;
    check_dataset(data, cfg)?;
    check_net(net, data)?;
    check_net(net, test)?;
    let start = Instant::now();
    let (train_idx, val_idx) = split_validation(data);
    let test_idx: Vec<usize> = (0..test.len()).collect();
    let chunk = cfg.batch_size;
    let h_train = features(net, data, &train_idx, chunk)?;
    let h_val = features(net, data, &val_idx, chunk)?;
    let h_test = features(net, test, &test_idx, chunk)?;
    let (a_train, a_val, a_test) = (answers(data, &train_idx), answers(data, &val_idx), answers(test, &test_idx));

    let mut head = ParamStore::new();
    for id in net.score_params() {
        head.add(net.store.name(id), net.store.get(id).clone());
    }
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.linear_lr,
            ..AdamConfig::default()
        },
        &head,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT ^ 1);
    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut report = empty_report(Mode::Mlcl, cfg, train_idx.len(), val_idx.len(), test.len());
    let mut stop = EarlyStop::new(cfg.patience);
    for epoch in 1..=cfg.linear_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut correct) = (0.0, 0);
        for c in order.chunks(cfg.batch_size) {
            let ans: Vec<usize> = c.iter().map(|&r| a_train[r]).collect();
            let (g, loss, k) = score_head_graph(&head, &h_train, c, &ans)?;
            let v = g.value(loss).item();
            if !v.is_finite() {
                return Err(diverged(epoch, "linear-eval", v));
            }
            let grads = g.backward(loss)?;
            let grads = grads.for_store(&head);
            adam.step(&mut head, &grads)?;
            total += v;
            correct += k;
        }
        let n = train_idx.len().max(1) as f64;
        let val_loss = if a_val.is_empty() { total / n } else { score_eval(&head, &h_val, &a_val)?.1 };
        report.epochs.push(EpochRecord {
            phase: Phase::Linear,
            epoch,
            train_loss: total / n,
            contrastive: 0.0,
            aux: 0.0,
            ce: total / n,
            val_loss,
            train_accuracy: Some(correct as f64 / n),
        });
        if stop.observe(epoch, val_loss, &head) {
            break;
        }
    }
    if let Some(best) = stop.snapshot.take() {
        head = best;
    }
    for (src, dst) in head.ids().zip(net.score_params()) {
        *net.store.get_mut(dst) = head.get(src).clone();
    }
    report.best_epochs.push((Phase::Linear, stop.best_epoch));
    report.val_accuracy = score_eval(&head, &h_val, &a_val)?.0;
    report.test_accuracy = score_eval(&head, &h_test, &a_test)?.0;
    report.rule_metrics = rule_metrics(net, &h_test, test, &test_idx, cfg.scheme)?;
    report.encoder_fingerprint = format!("{:016x}", net.encoder_fingerprint());
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Answer accuracy of `s ∘ f` on every instance of `data`.
pub fn evaluate_accuracy(net: &NetworkSet, data: &Dataset) -> Result<f64> {
    check_net(net, data)?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for c in data.instances.chunks(64) {
        let batch: Vec<&RpmInstance> = c.iter().collect();
        let mut g = Graph::new();
        let x = g.input(panel_tensor(&batch, net.config.panel_size)?);
        let h = net.encode(&mut g, x, batch.len(), true)?;
        let s = net.scores(&mut g, h, batch.len(), true)?;
        let s = g.value(s);
        correct += batch.iter().enumerate().filter(|(r, i)| argmax(s.row(*r)) + 1 == usize::from(i.correct_index)).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// End-to-end training of `f` and `s` (and `ρ` for the auxiliary modes)
/// under `L_ce + β·L_aux`; plain CE ignores `β`.
pub fn train_supervised(net: &mut NetworkSet, data: &Dataset, test: &Dataset, cfg: &TrainConfig, mode: Mode) -> Result<RunReport> {
    cfg.validate()?;
    check_dataset(data, cfg)?;
    check_net(net, data)?;
    check_net(net, test)?;
    let scheme = match mode {
        Mode::Ce => None,
        Mode::CeAuxDense => Some(Scheme::Dense),
        Mode::CeAuxSparse => Some(Scheme::Sparse),
        _ => return Err(Error::InvalidArgument(format!("`{mode}` is not a supervised mode"))),
    };
    if let Some(s) = scheme {
        let d = cfg.layout.grammar().target_len(s);
        if net.config.rule_dim != d {
            return Err(Error::Shape(format!("rule head has {} outputs, {s} targets need {d}", net.config.rule_dim)));
        }
    }
    let start = Instant::now();
    let (mut train_idx, val_idx) = split_validation(data);
    let mut report = empty_report(mode, cfg, train_idx.len(), val_idx.len(), test.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &net.store,
    );
    let mut stop = EarlyStop::new(cfg.patience);
    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut t = Totals::default();
        for chunk in train_idx.chunks(cfg.batch_size) {
            let batch = instances(data, chunk);
            let out = supervised_graph(net, &batch, cfg.beta, scheme)?;
            let loss = out.graph.value(out.loss).item();
            if !loss.is_finite() {
                return Err(diverged(epoch, "training", loss));
            }
            let grads = out.graph.backward(out.loss)?;
            let grads = grads.for_store(&net.store);
            adam.step(&mut net.store, &grads)?;
            t.loss += loss;
            t.ce += out.ce;
            t.aux += out.aux;
            t.correct += out.correct;
            t.instances += batch.len();
        }
        let train_loss = t.mean(t.loss, t.instances);
        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            let mut total = 0.0;
            for chunk in val_idx.chunks(cfg.batch_size) {
                let out = supervised_graph(net, &instances(data, chunk), cfg.beta, scheme)?;
                total += out.graph.value(out.loss).item();
            }
            total / val_idx.len() as f64
        };
        if !val_loss.is_finite() {
            return Err(diverged(epoch, "validation", val_loss));
        }
        report.epochs.push(EpochRecord {
            phase: Phase::Supervised,
            epoch,
            train_loss,
            contrastive: 0.0,
            aux: t.mean(t.aux, t.instances),
            ce: t.mean(t.ce, t.instances),
            val_loss,
            train_accuracy: Some(t.mean(t.correct as f64, t.instances)),
        });
        if stop.observe(epoch, val_loss, &net.store) {
            break;
        }
    }
    if let Some(best) = stop.snapshot.take() {
        net.store = best;
    }
    report.best_epochs.push((Phase::Supervised, stop.best_epoch));
    let val = Dataset {
        layout: data.layout,
        panel_size: data.panel_size,
        instances: instances(data, &val_idx).into_iter().cloned().collect(),
    };
    report.val_accuracy = evaluate_accuracy(net, &val)?;
    report.test_accuracy = evaluate_accuracy(net, test)?;
    if let Some(s) = scheme {
        let test_idx: Vec<usize> = (0..test.len()).collect();
        let h = features(net, test, &test_idx, cfg.batch_size)?;
        report.rule_metrics = rule_metrics(net, &h, test, &test_idx, s)?;
    }
    report.encoder_fingerprint = format!("{:016x}", net.encoder_fingerprint());
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Runs one protocol from a fresh network seeded by `cfg.seed`. Contrastive
/// modes pre-train and then linearly evaluate; the returned report holds
/// both phases.
pub fn run(mode: Mode, data: &Dataset, test: &Dataset, cfg: &TrainConfig) -> Result<(NetworkSet, RunReport)> {
    let mut cfg = cfg.clone();
    match mode {
        Mode::MlclNoAug => cfg.augment = false,
        Mode::CeAuxDense => cfg.scheme = Scheme::Dense,
        Mode::CeAuxSparse => cfg.scheme = Scheme::Sparse,
        _ => {}
    }
    cfg.validate()?;
    check_dataset(data, &cfg)?;
    let mut net = NetworkSet::new(cfg.net_config(data.panel_size), cfg.seed);
    if !mode.is_contrastive() {
        let report = train_supervised(&mut net, data, test, &cfg, mode)?;
        return Ok((net, report));
    }
    let pre = pretrain_contrastive(&mut net, data, &cfg)?;
    let mut lin = linear_eval(&mut net, data, test, &cfg)?;
    lin.mode = mode.name().into();
    let mut epochs = pre.epochs;
    epochs.append(&mut lin.epochs);
    lin.epochs = epochs;
    let mut best = pre.best_epochs;
    best.append(&mut lin.best_epochs);
    lin.best_epochs = best;
    lin.wall_clock_seconds += pre.wall_clock_seconds;
    Ok((net, lin))
}

/// One cell of an ablation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub name: String,
    pub gamma: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub negatives: bool,
    pub augment: bool,
}

impl AblationCell {
    fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        c.gamma = self.gamma;
        c.beta = self.beta;
        c.batch_size = self.batch_size;
        c.augment = self.augment;
        c.negatives = if self.negatives {
            if base.negatives == NegativeScope::Off {
                NegativeScope::All
            } else {
                base.negatives
            }
        } else {
            NegativeScope::Off
        };
        c
    }
}

/// Full MLCL, β=0, γ=0 and no extra negatives, around `base`.
pub fn standard_variants(base: &TrainConfig) -> Vec<AblationCell> {
    let cell = |name: &str, gamma, beta, negatives| AblationCell {
        name: name.into(),
        gamma,
        beta,
        batch_size: base.batch_size,
        negatives,
        augment: base.augment,
    };
    vec![
        cell("full", base.gamma, base.beta, true),
        cell("beta0", base.gamma, 0.0, true),
        cell("gamma0", 0.0, base.beta, true),
        cell("no-negatives", base.gamma, base.beta, false),
    ]
}

/// Runs the contrastive protocol once per cell, in order.
pub fn ablate(data: &Dataset, test: &Dataset, base: &TrainConfig, cells: &[AblationCell]) -> Result<Vec<(AblationCell, RunReport)>> {
    cells
        .iter()
        .map(|cell| {
            let cfg = cell.apply(base);
            let mode = if cfg.augment { Mode::Mlcl } else { Mode::MlclNoAug };
            run(mode, data, test, &cfg).map(|(_, r)| (cell.clone(), r))
        })
        .collect()
}
