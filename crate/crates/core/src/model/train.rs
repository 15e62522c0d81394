use super::features::{EncodedGraph, GraphBatch, Vocabulary};
use super::network::{
    embed_encoded, encode, head_logits, head_names, init_params, linear_logits, representation_head,
    representation_loss, score, score_embeddings, Bound, Params, CLASSIFIER, ENCODER, REPRESENTATION, RESAMPLED,
};
use super::smote::{downsample_majority, smote_resample};
use super::{Head, ModelConfig, ModelError, TrainedModel};
use crate::autodiff::{adam_step, Adam, AdamState, Gradients, Tape, Tensor};
use crate::cpg::CodeGraph;
use crate::metrics::{f1_score, roc_auc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Encoder and classifier trained end to end.
    Encoder,
    /// Head trained on frozen embeddings.
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Patience,
    MaxBatches,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub phase: Phase,
    pub epoch: usize,
    /// Batches processed in this phase so far.
    pub batches: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub val_auc: Option<f64>,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub best_epoch: usize,
    pub epochs: usize,
    pub batches: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub phases: Vec<PhaseSummary>,
    pub flags: Vec<String>,
}

/// Epoch-level early stopping on (F1, AUC), compared lexicographically.
struct Stopper {
    patience: usize,
    best: Option<(f64, f64)>,
    best_epoch: usize,
    wait: usize,
}

impl Stopper {
    fn new(patience: usize) -> Self {
        Stopper {
            patience,
            best: None,
            best_epoch: 0,
            wait: 0,
        }
    }

    /// Records an epoch; returns whether it improved on the best so far.
    fn observe(&mut self, epoch: usize, f1: f64, auc: Option<f64>) -> bool {
        let score = (f1, auc.unwrap_or(f64::NEG_INFINITY));
        let better = match self.best {
            None => true,
            Some(b) => score.0 > b.0 || (score.0 == b.0 && score.1 > b.1),
        };
        if better {
            self.best = Some(score);
            self.best_epoch = epoch;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        better
    }

    fn exhausted(&self) -> bool {
        self.wait >= self.patience
    }
}

fn validation_scores(scores: &[f64], labels: &[u8], threshold: f64) -> (f64, Option<f64>) {
    let f1 = f1_score(scores, labels, threshold).unwrap_or(0.0);
    (f1, roc_auc(scores, labels).ok())
}

/// Sums gradients over accumulated batches and applies one Adam step.
struct Accumulator {
    names: Vec<&'static str>,
    sum: Option<Vec<Tensor>>,
    count: usize,
    state: AdamState,
    opt: Adam,
}

impl Accumulator {
    fn new(names: &[&'static str], params: &Params, cfg: &ModelConfig) -> Self {
        let tensors: Vec<Tensor> = names.iter().map(|&n| params[n].clone()).collect();
        Accumulator {
            names: names.to_vec(),
            sum: None,
            count: 0,
            state: AdamState::new(&tensors),
            opt: Adam::new(cfg.learning_rate, cfg.weight_decay),
        }
    }

    fn add(&mut self, grads: &mut Gradients, bound: &[&Bound], params: &Params) {
        let vars: BTreeMap<&str, _> = bound.iter().flat_map(|b| b.iter()).collect();
        let batch: Vec<Tensor> = self
            .names
            .iter()
            .map(|&n| {
                grads.take(vars[n]).unwrap_or_else(|| {
                    let p = &params[n];
                    Tensor::zeros(p.rows(), p.cols())
                })
            })
            .collect();
        match &mut self.sum {
            None => self.sum = Some(batch),
            Some(s) => s.iter_mut().zip(&batch).for_each(|(a, b)| a.add_assign(b)),
        }
        self.count += 1;
    }

    fn step(&mut self, params: &mut Params) {
        let Some(mut sum) = self.sum.take() else {
            return;
        };
        let scale = 1.0 / self.count as f64;
        sum.iter_mut().for_each(|g| g.scale_assign(scale));
        let mut tensors: Vec<Tensor> = self.names.iter().map(|&n| params.remove(n).expect("param")).collect();
        adam_step(&mut tensors, &sum, &mut self.state, &self.opt);
        for (&n, t) in self.names.iter().zip(tensors) {
            params.insert(n.to_string(), t);
        }
        self.count = 0;
    }
}

fn snapshot(params: &Params, names: &[&str]) -> Vec<(String, Tensor)> {
    names.iter().map(|&n| (n.to_string(), params[n].clone())).collect()
}

/// Trains the full pipeline; see the module documentation for the schedule.
pub fn train(train: &[CodeGraph], validation: &[CodeGraph], config: &ModelConfig) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let vocabulary = Vocabulary::build(train, config.max_vocabulary);
    let enc = |gs: &[CodeGraph]| {
        gs.iter()
            .map(|g| EncodedGraph::new(g, &vocabulary))
            .collect::<Result<Vec<_>, _>>()
    };
    let train_enc = enc(train)?;
    let labels: Vec<u8> = train_enc.iter().map(|g| g.label).collect();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(ModelError::SingleClass);
    }
    let mut log = TrainingLog::default();
    let mut indices: Vec<usize> = (0..train_enc.len()).collect();
    if config.downsample_majority {
        indices = downsample_majority(&labels, config.seed)?;
    }
    let train_set: Vec<&EncodedGraph> = indices.iter().map(|&i| &train_enc[i]).collect();

    let val_enc = enc(validation)?;
    let monitor: Vec<&EncodedGraph> = if val_enc.is_empty() {
        log.flags.push("no validation data: early stopping monitors the training set".into());
        train_set.clone()
    } else {
        val_enc.iter().collect()
    };
    let monitor_labels: Vec<u8> = monitor.iter().map(|g| g.label).collect();

    let mut params = init_params(config, vocabulary.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0005_eed0_fba7_c4e5);

    // phase one: encoder and classifier
    let names: Vec<&'static str> = ENCODER.iter().chain(CLASSIFIER).copied().collect();
    let mut acc = Accumulator::new(&names, &params, config);
    let mut stopper = Stopper::new(config.patience);
    let mut best = snapshot(&params, &names);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let (mut batches, mut epoch) = (0, 0);
    let stop = loop {
        if batches >= config.max_batches {
            break StopReason::MaxBatches;
        }
        epoch += 1;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(config.batch_size) {
            if batches >= config.max_batches {
                break;
            }
            let graphs: Vec<&EncodedGraph> = chunk.iter().map(|&i| train_set[i]).collect();
            let batch = GraphBatch::new(&graphs, config);
            let mut tape = Tape::new();
            let enc_vars = Bound::new(&mut tape, &params, ENCODER, true);
            let cls_vars = Bound::new(&mut tape, &params, CLASSIFIER, true);
            let emb = encode(&mut tape, &enc_vars, &batch, config)?;
            let logits = linear_logits(&mut tape, &cls_vars, emb, "cls_w", "cls_b")?;
            let targets: Vec<f64> = batch.labels.iter().map(|&l| f64::from(l)).collect();
            let loss = tape.bce_with_logits(logits, &targets)?;
            loss_sum += tape.value(loss).item();
            let mut grads = tape.backward(loss)?;
            acc.add(&mut grads, &[&enc_vars, &cls_vars], &params);
            batches += 1;
            n_batches += 1;
            if acc.count == config.grad_accumulation_steps {
                acc.step(&mut params);
            }
        }
        acc.step(&mut params);
        let scores = score(&params, &monitor, config, Head::Classifier)?;
        let (f1, auc) = validation_scores(&scores, &monitor_labels, config.threshold);
        let improved = stopper.observe(epoch, f1, auc);
        if improved {
            best = snapshot(&params, &names);
        }
        log.epochs.push(EpochLog {
            phase: Phase::Encoder,
            epoch,
            batches,
            train_loss: loss_sum / n_batches.max(1) as f64,
            val_f1: f1,
            val_auc: auc,
            improved,
        });
        if stopper.exhausted() {
            break StopReason::Patience;
        }
    };
    params.extend(best);
    log.phases.push(PhaseSummary {
        phase: Phase::Encoder,
        best_epoch: stopper.best_epoch,
        epochs: epoch,
        batches,
        stop,
    });

    let mut head = Head::Classifier;
    if config.use_smote || config.use_representation_learning {
        head = if config.use_representation_learning {
            Head::Representation
        } else {
            params.insert("res_w".into(), params["cls_w"].clone());
            params.insert("res_b".into(), params["cls_b"].clone());
            Head::Resampled
        };
        let x_train = embed_encoded(&params, &train_set, config)?;
        let y_train: Vec<u8> = train_set.iter().map(|g| g.label).collect();
        let x_monitor = embed_encoded(&params, &monitor, config)?;
        train_head(&mut params, head, &x_train, &y_train, &x_monitor, &monitor_labels, config, &mut rng, &mut log)?;
    }

    Ok(TrainedModel {
        config: config.clone(),
        vocabulary,
        head,
        parameters: params,
        log,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_head(
    params: &mut Params,
    head: Head,
    x: &Tensor,
    y: &[u8],
    x_monitor: &Tensor,
    y_monitor: &[u8],
    config: &ModelConfig,
    rng: &mut ChaCha8Rng,
    log: &mut TrainingLog,
) -> Result<(), ModelError> {
    let names = head_names(head);
    let mut acc = Accumulator::new(names, params, config);
    let mut stopper = Stopper::new(config.patience);
    let mut best = snapshot(params, names);
    let (mut batches, mut epoch) = (0, 0);
    let mut no_triplet = 0;
    let mut reduced_k = false;
    let stop = loop {
        if batches >= config.max_batches {
            break StopReason::MaxBatches;
        }
        epoch += 1;
        let (data, labels) = if config.use_smote {
            let s = smote_resample(x, y, config.smote_neighbors, config.seed.wrapping_add(epoch as u64))?;
            reduced_k |= s.reduced_k;
            (s.embeddings, s.labels)
        } else {
            (x.clone(), y.to_vec())
        };
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(config.batch_size) {
            if batches >= config.max_batches {
                break;
            }
            let rows: Vec<f64> = chunk.iter().flat_map(|&i| data.row(i).iter().copied()).collect();
            let batch_labels: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let vars = Bound::new(&mut tape, params, names, true);
            let xb = tape.constant(Tensor::from_vec(chunk.len(), data.cols(), rows)?);
            let loss = if head == Head::Representation {
                let (proj, logits) = representation_head(&mut tape, &vars, xb)?;
                let (loss, flagged) = representation_loss(
                    &mut tape,
                    proj,
                    logits,
                    &batch_labels,
                    config.triplet_margin,
                    config.triplet_alpha,
                    config.projection_l2,
                )?;
                no_triplet += usize::from(flagged);
                loss
            } else {
                let logits = head_logits(&mut tape, &vars, xb, head)?;
                let targets: Vec<f64> = batch_labels.iter().map(|&l| f64::from(l)).collect();
                tape.bce_with_logits(logits, &targets)?
            };
            loss_sum += tape.value(loss).item();
            let mut grads = tape.backward(loss)?;
            acc.add(&mut grads, &[&vars], params);
            batches += 1;
            n_batches += 1;
            if acc.count == config.grad_accumulation_steps {
                acc.step(params);
            }
        }
        acc.step(params);
        let scores = score_embeddings(params, x_monitor, head)?;
        let (f1, auc) = validation_scores(&scores, y_monitor, config.threshold);
        let improved = stopper.observe(epoch, f1, auc);
        if improved {
            best = snapshot(params, names);
        }
        log.epochs.push(EpochLog {
            phase: Phase::Head,
            epoch,
            batches,
            train_loss: loss_sum / n_batches.max(1) as f64,
            val_f1: f1,
            val_auc: auc,
            improved,
        });
        if stopper.exhausted() {
            break StopReason::Patience;
        }
    };
    params.extend(best);
    if no_triplet > 0 {
        log.flags.push(format!("{no_triplet} head batches had no valid triplet"));
    }
    if reduced_k {
        log.flags.push("SMOTE used fewer neighbours than configured".into());
    }
    log.phases.push(PhaseSummary {
        phase: Phase::Head,
        best_epoch: stopper.best_epoch,
        epochs: epoch,
        batches,
        stop,
    });
    Ok(())
}

/// Loss touching every parameter tensor, with its analytic gradients: BCE
/// of all three heads on the graph embeddings plus the representation
/// terms. Intended for gradient verification.
pub fn full_objective(
    params: &BTreeMap<String, Tensor>,
    graphs: &[CodeGraph],
    vocabulary: &Vocabulary,
    config: &ModelConfig,
) -> Result<(f64, BTreeMap<String, Tensor>), ModelError> {
    let enc = graphs
        .iter()
        .map(|g| EncodedGraph::new(g, vocabulary))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&EncodedGraph> = enc.iter().collect();
    let batch = GraphBatch::new(&refs, config);
    let mut tape = Tape::new();
    let all: Vec<&'static str> = ENCODER
        .iter()
        .chain(CLASSIFIER)
        .chain(RESAMPLED)
        .chain(REPRESENTATION)
        .copied()
        .collect();
    let vars = Bound::new(&mut tape, params, &all, true);
    let emb = encode(&mut tape, &vars, &batch, config)?;
    let targets: Vec<f64> = batch.labels.iter().map(|&l| f64::from(l)).collect();
    let c = linear_logits(&mut tape, &vars, emb, "cls_w", "cls_b")?;
    let c = tape.bce_with_logits(c, &targets)?;
    let r = linear_logits(&mut tape, &vars, emb, "res_w", "res_b")?;
    let r = tape.bce_with_logits(r, &targets)?;
    let (proj, logits) = representation_head(&mut tape, &vars, emb)?;
    let (rep, _) = representation_loss(
        &mut tape,
        proj,
        logits,
        &batch.labels,
        config.triplet_margin,
        config.triplet_alpha,
        config.projection_l2,
    )?;
    let loss = tape.add(c, r)?;
    let loss = tape.add(loss, rep)?;
    let mut grads = tape.backward(loss)?;
    let out = vars
        .iter()
        .map(|(n, v)| {
            let g = grads.take(v).unwrap_or_else(|| {
                let p = &params[n];
                Tensor::zeros(p.rows(), p.cols())
            });
            (n.to_string(), g)
        })
        .collect();
    Ok((tape.value(loss).item(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpg::{build_graph, Edge, EdgeType, GraphOptions};
    use crate::minilang::{parse_source, NodeKind};

    fn graph(src: &str, label: u8) -> CodeGraph {
        let mut g = build_graph(&parse_source(src).unwrap(), GraphOptions::full());
        g.label = label;
        g
    }

    /// Vulnerable reads index unguarded; safe ones check the bound first.
    fn toy_data(n: usize, offset: usize) -> Vec<CodeGraph> {
        (0..n)
            .map(|i| {
                let j = i + offset;
                if i % 2 == 0 {
                    graph(&format!("fn f{j}(a: int[], i: int) {{ let x = a[i]; return x + {j}; }}"), 1)
                } else {
                    graph(
                        &format!("fn f{j}(a: int[], i: int) {{ let x = 0; if (i < len(a)) {{ x = a[i]; }} return x + {j}; }}"),
                        0,
                    )
                }
            })
            .collect()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            graph_embedding_size: 8,
            node_hidden_size: 6,
            token_embedding_size: 4,
            propagation_steps: 2,
            representation_size: 6,
            batch_size: 8,
            grad_accumulation_steps: 1,
            learning_rate: 1e-2,
            max_batches: 60,
            patience: 3,
            seed: 11,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn patience_one_stops_after_first_non_improving_epoch() {
        let mut s = Stopper::new(1);
        assert!(s.observe(1, 0.6, Some(0.7)));
        assert!(!s.observe(2, 0.6, Some(0.7)));
        assert!(s.exhausted());
        assert_eq!(s.best_epoch, 1);
        let mut s = Stopper::new(2);
        s.observe(1, 0.5, Some(0.5));
        assert!(s.observe(2, 0.5, Some(0.6)), "AUC breaks F1 ties");
    }

    #[test]
    fn learns_a_separable_toy_task() {
        let train_set = toy_data(40, 0);
        let val = toy_data(10, 100);
        for (smote, rl) in [(false, false), (true, false), (true, true)] {
            let cfg = ModelConfig {
                use_smote: smote,
                use_representation_learning: rl,
                ..small_config()
            };
            let model = train(&train_set, &val, &cfg).unwrap();
            let scores = model.predict_batch(&val).unwrap();
            let labels: Vec<u8> = val.iter().map(|g| g.label).collect();
            assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
            let auc = roc_auc(&scores, &labels).unwrap();
            assert!(auc > 0.9, "smote={smote} rl={rl}: auc {auc}");
            let expected = match (smote, rl) {
                (false, false) => Head::Classifier,
                (true, false) => Head::Resampled,
                _ => Head::Representation,
            };
            assert_eq!(model.head, expected);
            assert_eq!(model.log.phases.len(), if smote || rl { 2 } else { 1 });
        }
    }

    #[test]
    fn training_is_bit_reproducible_and_checkpoints_round_trip() {
        let train_set = toy_data(16, 0);
        let val = toy_data(6, 50);
        let cfg = ModelConfig { max_batches: 10, ..small_config() };
        let a = train(&train_set, &val, &cfg).unwrap();
        let b = train(&train_set, &val, &cfg).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(bytes, b.to_bytes());
        let back = TrainedModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.predict_batch(&val).unwrap(), a.predict_batch(&val).unwrap());
        assert!(TrainedModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn max_batches_is_a_hard_cap() {
        let cfg = ModelConfig { max_batches: 3, patience: 100, use_smote: false, use_representation_learning: false, ..small_config() };
        let m = train(&toy_data(40, 0), &toy_data(4, 60), &cfg).unwrap();
        assert_eq!(m.log.phases[0].batches, 3);
        assert_eq!(m.log.phases[0].stop, StopReason::MaxBatches);
    }

    #[test]
    fn single_class_training_rejected() {
        let one: Vec<CodeGraph> = toy_data(6, 0).into_iter().filter(|g| g.label == 1).collect();
        assert!(matches!(train(&one, &[], &small_config()), Err(ModelError::SingleClass)));
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let cfg = ModelConfig { triplet_margin: 5.0, ..small_config() };
        // three-node graph Entry -> Call -> Exit with a token-carrying
        // middle node, next to an ordinary graph of the other class
        let mut tiny = graph("fn g() { sink(1); }", 1);
        tiny.nodes.retain(|n| matches!(n.kind, NodeKind::Entry | NodeKind::Call | NodeKind::Exit));
        let ids: Vec<usize> = tiny.nodes.iter().map(|n| n.id).collect();
        tiny.nodes.iter_mut().for_each(|n| n.parent = None);
        tiny.edges = vec![
            Edge { src: ids[0], dst: ids[1], etype: EdgeType::Cfg },
            Edge { src: ids[1], dst: ids[2], etype: EdgeType::Cfg },
            Edge { src: ids[0], dst: ids[1], etype: EdgeType::Ddg },
            Edge { src: ids[1], dst: ids[2], etype: EdgeType::Ast },
        ];
        assert_eq!(tiny.nodes.len(), 3);
        let graphs = vec![tiny, graph("fn f(a: int) { let x = a + 1; return x; }", 0)];
        let vocab = Vocabulary::build(&graphs, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = init_params(&cfg, vocab.len());
        for t in params.values_mut() {
            *t = Tensor::uniform(t.rows(), t.cols(), 0.3, &mut rng);
        }
        let (_, grads) = full_objective(&params, &graphs, &vocab, &cfg).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (name, g) in &grads {
            for i in 0..g.len() {
                let mut p = params.clone();
                p.get_mut(name).unwrap().data_mut()[i] += h;
                let up = full_objective(&p, &graphs, &vocab, &cfg).unwrap().0;
                p.get_mut(name).unwrap().data_mut()[i] -= 2.0 * h;
                let down = full_objective(&p, &graphs, &vocab, &cfg).unwrap().0;
                let numeric = (up - down) / (2.0 * h);
                let analytic = g.data()[i];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                assert!(rel < 1e-4, "{name}[{i}]: analytic {analytic}, numeric {numeric}");
            }
        }
        assert!(worst < 1e-4);
    }
}
