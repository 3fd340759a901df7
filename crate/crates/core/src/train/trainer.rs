//! The end-to-end training loop: shuffled minibatches, Adam with a stepped
//! learning-rate schedule, global-norm clipping, per-epoch checkpoints and
//! a JSON-lines log. Fully deterministic given the seed: shuffle and
//! dropout streams are keyed by (epoch, step), so a resumed run replays
//! exactly the same trajectory as an uninterrupted one.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::answer;
use crate::data::batch::GraphBatch;
use crate::data::questions::QuestionRecord;
use crate::data::scene_graph::{augment_symmetric_edges, SceneGraph};
use crate::data::vocab::Vocabulary;
use crate::lang::embedding::EmbeddingTable;
use crate::model::Model;
use crate::tensor::{Mode, SplitRng};

use super::adam::{adam_step, clip_global_norm, AdamState};
use super::checkpoint::{self, CheckpointMeta};
use super::config::{lr_at_epoch, TrainConfig};
use super::error::TrainError;
use super::evaluate;

const BN_MOMENTUM: f64 = 0.1;

/// A ready-to-train dataset: augmented graphs, resolved questions, vocab.
#[derive(Debug)]
pub struct Dataset {
    pub graphs: BTreeMap<String, SceneGraph>,
    pub train_questions: Vec<QuestionRecord>,
    pub val_questions: Vec<QuestionRecord>,
    pub vocab: Vocabulary,
}

impl Dataset {
    /// Augment raw graphs, build the vocabulary from the training split
    /// (unless one is supplied), and check every question resolves.
    pub fn assemble(
        raw_graphs: BTreeMap<String, SceneGraph>,
        train_questions: Vec<QuestionRecord>,
        val_questions: Vec<QuestionRecord>,
        vocab: Option<Vocabulary>,
    ) -> Result<Self, TrainError> {
        let graphs: BTreeMap<String, SceneGraph> = raw_graphs
            .into_iter()
            .map(|(id, g)| (id, augment_symmetric_edges(&g)))
            .collect();
        for q in train_questions.iter().chain(val_questions.iter()) {
            if !graphs.contains_key(&q.graph_id) {
                return Err(TrainError::Data(crate::data::DataError::UnknownGraphId {
                    question_id: q.question_id.clone(),
                    graph_id: q.graph_id.clone(),
                }));
            }
        }
        let vocab = match vocab {
            Some(v) => v,
            None => Vocabulary::build(graphs.values(), &train_questions)?,
        };
        Ok(Dataset {
            graphs,
            train_questions,
            val_questions,
            vocab,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub lr: f64,
    pub wall_time: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

/// Train from scratch or resume from a checkpoint written by this loop.
/// Writes `ckpt_epoch_NNNN.sgqa` per `checkpoint_every`, `ckpt_final.sgqa`,
/// and appends to `train_log.jsonl` under `out_dir`.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    pretrained: Option<&EmbeddingTable>,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    std::fs::create_dir_all(out_dir)?;
    let model = Model::new(config.model.clone())?;
    let vocab = &dataset.vocab;

    // fail before training on any train answer outside the vocabulary
    for q in &dataset.train_questions {
        if vocab.answer_id(&q.answer).is_none() {
            return Err(TrainError::VocabMismatch(format!(
                "training answer `{}` (question {}) missing from answer vocabulary",
                q.answer, q.question_id
            )));
        }
    }

    let root_rng = SplitRng::new(config.seed);
    let table = match pretrained {
        Some(t) => t.clone(),
        None => EmbeddingTable::random(vocab, config.model.word_dim, &root_rng),
    };
    let mut params = model.init_params(&table, vocab.answer_count(), config.seed)?;
    let mut adam = AdamState::default();
    let mut start_epoch = 0;

    if let Some(ckpt) = resume {
        let loaded = checkpoint::load(ckpt)?;
        if loaded.meta.config.model.family != config.model.family {
            return Err(TrainError::FamilyMismatch {
                found: loaded.meta.config.model.family.name().into(),
                expected: config.model.family.name().into(),
            });
        }
        if loaded.meta.vocab_hash != vocab.hash() {
            return Err(TrainError::VocabMismatch(
                "checkpoint vocabulary hash differs from dataset vocabulary".into(),
            ));
        }
        checkpoint::restore_params(&mut params, &loaded.model)?;
        adam = loaded.adam.unwrap_or_default();
        start_epoch = loaded.meta.epoch + 1;
    }

    let tokens: Vec<Vec<usize>> = dataset
        .train_questions
        .iter()
        .map(|q| vocab.encode_text(&q.text))
        .collect();
    let gold: Vec<usize> = dataset
        .train_questions
        .iter()
        .map(|q| vocab.answer_id(&q.answer).expect("validated above"))
        .collect();

    let log_path = out_dir.join("train_log.jsonl");
    let mut log_file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;

    let mut epochs = Vec::new();
    let n = dataset.train_questions.len();
    for epoch in start_epoch..config.epochs {
        let epoch_start = std::time::Instant::now();
        let lr = lr_at_epoch(epoch, config);
        let mut order: Vec<usize> = (0..n).collect();
        root_rng.split("shuffle").split_index(epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (step, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
            let graph_refs: Vec<&SceneGraph> = chunk
                .iter()
                .map(|&i| &dataset.graphs[&dataset.train_questions[i].graph_id])
                .collect();
            let batch = GraphBatch::build(&graph_refs, vocab);
            let batch_tokens: Vec<Vec<usize>> =
                chunk.iter().map(|&i| tokens[i].clone()).collect();
            let batch_gold: Vec<usize> = chunk.iter().map(|&i| gold[i]).collect();
            let dropout_rng = root_rng
                .split("dropout")
                .split_index(epoch as u64)
                .split_index(step as u64);

            let (grads, bn_stats, loss_value, batch_correct) = {
                let mut out =
                    model.forward(&params, &batch, &batch_tokens, Mode::Train, dropout_rng, false)?;
                let loss = out.fwd.tape.cross_entropy(out.logits, &batch_gold)?;
                let loss_value = out.fwd.tape.data(loss).scalar_value();
                if !loss_value.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch, step });
                }
                out.fwd.tape.backward(loss)?;
                let grads = out.fwd.tape.param_grads();
                let batch_correct = answer::distributions(out.fwd.tape.data(out.logits))
                    .iter()
                    .zip(&batch_gold)
                    .filter(|(d, &g)| d.predicted_id == g)
                    .count();
                (grads, std::mem::take(&mut out.fwd.bn_stats), loss_value, batch_correct)
            };

            let mut grads = grads;
            clip_global_norm(&mut grads, config.grad_clip);
            adam_step(&mut params, &grads, &mut adam, lr)?;
            for stat in &bn_stats {
                for (suffix, batch_value) in
                    [("running_mean", &stat.mean), ("running_var", &stat.var)]
                {
                    let path = format!("{}.{suffix}", stat.prefix);
                    let running = params.get_mut(&path)?.array.data_mut();
                    for (r, &b) in running.iter_mut().zip(batch_value.iter()) {
                        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
                    }
                }
            }

            loss_sum += loss_value * chunk.len() as f64;
            correct += batch_correct;
        }

        let val_acc = if dataset.val_questions.is_empty() {
            None
        } else {
            let (report, _) = evaluate::evaluate(
                &model,
                &params,
                vocab,
                &dataset.graphs,
                &dataset.val_questions,
                config.batch_size,
            )?;
            Some(report.overall_accuracy)
        };

        let entry = EpochLog {
            epoch,
            loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            val_acc,
            lr,
            wall_time: epoch_start.elapsed().as_secs_f64(),
        };
        writeln!(log_file, "{}", serde_json::to_string(&entry)?)?;
        epochs.push(entry);

        let meta = CheckpointMeta {
            epoch,
            vocab_hash: vocab.hash(),
            config: config.clone(),
        };
        let last = epoch + 1 == config.epochs;
        if config.checkpoint_every > 0
            && ((epoch + 1).is_multiple_of(config.checkpoint_every) || last)
        {
            checkpoint::save(
                &out_dir.join(format!("ckpt_epoch_{epoch:04}.sgqa")),
                &params,
                Some(&adam),
                &meta,
            )?;
        }
        if last {
            checkpoint::save(&out_dir.join("ckpt_final.sgqa"), &params, Some(&adam), &meta)?;
        }
    }

    Ok(TrainOutcome {
        epochs,
        final_checkpoint: out_dir.join("ckpt_final.sgqa"),
        log_path,
    })
}
