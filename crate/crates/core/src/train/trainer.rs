//! Incremental training: every iteration simulates a fresh batch of scenes,
//! splits off a validation set and runs a few epochs of Adam over the rest.
//!
//! All randomness is derived from the run seed and the (iteration, epoch,
//! batch, slot) position, so a run gives the same parameters regardless of the
//! worker count and a resumed run matches an uninterrupted one.

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{loss_and_grad, LossConfig};
use crate::dataset::{generate_pairs, split_validation, SamplePair};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::net::{
    backward, forward, init_params, load_weights, normalize_frame, save_weights, Mode, NetConfig, Params, Real,
};
use crate::optics::SceneConfig;
use crate::qsrt::{read_tensor, write_tensor};
use crate::rng::RngState;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

const STREAM_INIT: u64 = 0;
const STREAM_DATA: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_DROPOUT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_per_iteration: usize,
    pub iterations: usize,
    pub samples_per_iteration: usize,
    pub validation_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs_per_iteration: 50,
            iterations: 130,
            samples_per_iteration: 5000,
            validation_fraction: 0.25,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.epochs_per_iteration == 0 || self.iterations == 0 {
            return bad("batch size, epochs and iterations must be positive".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation fraction must be in (0, 1), got {}", self.validation_fraction));
        }
        let n_val = (self.validation_fraction * self.samples_per_iteration as f64).round() as usize;
        if n_val == 0 || n_val >= self.samples_per_iteration {
            return bad(format!(
                "{} samples per iteration leave no training or validation samples",
                self.samples_per_iteration
            ));
        }
        Ok(())
    }
}

/// Where training pairs come from.
#[derive(Debug, Clone)]
pub enum TrainData {
    /// Fresh scenes every iteration.
    Simulate(SceneConfig),
    /// The same pairs every iteration (split once).
    Fixed(Vec<SamplePair>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub iteration: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Wall-clock seconds for the epoch; not part of the reproducible state.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,epoch,train_loss,val_loss,seconds")?;
        for e in &self.epochs {
            writeln!(out, "{},{},{:e},{:e},{:.3}", e.iteration, e.epoch, e.train_loss, e.val_loss, e.seconds)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// Prepared pair: normalized network input and unit-mass target.
struct Prepared {
    input: Grid2D,
    target: Grid2D,
}

fn prepare(pairs: Vec<SamplePair>) -> Vec<Prepared> {
    pairs.into_iter().map(|p| Prepared { input: normalize_frame(&p.input), target: p.target }).collect()
}

/// Loss and flat parameter gradient for one training sample.
pub fn sample_gradient<T: Real>(
    params: &Params<T>,
    input: &Grid2D,
    target: &Grid2D,
    loss: &LossConfig,
    dropout: &mut RngState,
) -> Result<(f64, Vec<T>)> {
    let (pred, cache) = forward(params, input, Mode::Train(dropout))?;
    let (l, g) = loss_and_grad(&pred, target, loss)?;
    let grads = backward(params, &cache.expect("training forward returns a cache"), &g)?;
    Ok((l, grads.params))
}

/// Mean loss of `params` in evaluation mode over `pairs` (normalized inputs).
fn mean_eval_loss<T: Real>(params: &Params<T>, pairs: &[Prepared], loss: &LossConfig) -> Result<f64> {
    let losses: Vec<f64> = pairs
        .par_iter()
        .map(|p| {
            let (pred, _) = forward(params, &p.input, Mode::Eval)?;
            Ok(loss_and_grad(&pred, &p.target, loss)?.0)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Mean evaluation-mode loss of `params` on raw pairs.
pub fn validation_loss<T: Real>(params: &Params<T>, pairs: &[SamplePair], loss: &LossConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("validation needs at least one pair".into()));
    }
    let prepared = prepare(pairs.to_vec());
    mean_eval_loss(params, &prepared, loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointState {
    seed: u64,
    train: TrainConfig,
    loss: LossConfig,
    net: NetConfig,
    scene: Option<SceneConfig>,
    next_iteration: usize,
    adam_t: u64,
    best_val: Option<f64>,
    log: TrainLog,
}

pub struct Trainer<T: Real> {
    seed: u64,
    root: RngState,
    config: TrainConfig,
    loss: LossConfig,
    data: TrainData,
    fixed_split: Option<(Vec<Prepared>, Vec<Prepared>)>,
    params: Params<T>,
    adam: AdamState<T>,
    best: Params<T>,
    best_val: Option<f64>,
    next_iteration: usize,
    log: TrainLog,
}

impl<T: Real> Trainer<T> {
    pub fn new(net: &NetConfig, config: TrainConfig, loss: LossConfig, data: TrainData, seed: u64) -> Result<Self> {
        config.validate()?;
        loss.validate()?;
        let root = RngState::new(seed);
        let params: Params<T> = init_params(&root.child(STREAM_INIT), net)?;
        Self::assemble(
            seed,
            config,
            loss,
            data,
            params.clone(),
            AdamState::new(params.len()),
            params,
            None,
            0,
            TrainLog::default(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        seed: u64,
        config: TrainConfig,
        loss: LossConfig,
        data: TrainData,
        params: Params<T>,
        adam: AdamState<T>,
        best: Params<T>,
        best_val: Option<f64>,
        next_iteration: usize,
        log: TrainLog,
    ) -> Result<Self> {
        let root = RngState::new(seed);
        let fixed_split = match &data {
            TrainData::Simulate(scene) => {
                scene.validate()?;
                None
            }
            TrainData::Fixed(pairs) => {
                let (train, val) =
                    split_validation(pairs.clone(), config.validation_fraction, root.child_seed(STREAM_SPLIT))?;
                if train.is_empty() || val.is_empty() {
                    return Err(Error::InvalidArgument(format!("{} fixed pairs are too few to split", pairs.len())));
                }
                Some((prepare(train), prepare(val)))
            }
        };
        Ok(Self { seed, root, config, loss, data, fixed_split, params, adam, best, best_val, next_iteration, log })
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    /// Parameters with the lowest validation loss seen so far.
    pub fn best(&self) -> &Params<T> {
        &self.best
    }

    pub fn best_val(&self) -> Option<f64> {
        self.best_val
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn next_iteration(&self) -> usize {
        self.next_iteration
    }

    pub fn is_finished(&self) -> bool {
        self.next_iteration >= self.config.iterations
    }

    fn iteration_data(&self, it: usize) -> Result<(Vec<Prepared>, Vec<Prepared>)> {
        match &self.data {
            TrainData::Simulate(scene) => {
                let pairs = generate_pairs(
                    &self.root.derive(&[STREAM_DATA, it as u64]),
                    scene,
                    self.config.samples_per_iteration,
                )?;
                let split_seed = self.root.derive(&[STREAM_SPLIT, it as u64]).seed();
                let (train, val) = split_validation(pairs, self.config.validation_fraction, split_seed)?;
                Ok((prepare(train), prepare(val)))
            }
            TrainData::Fixed(_) => unreachable!("fixed data is split once"),
        }
    }

    /// Runs one iteration (data generation plus all its epochs), calling
    /// `on_epoch` after every epoch.
    pub fn run_iteration(&mut self, on_epoch: &mut dyn FnMut(&EpochRecord)) -> Result<()> {
        let it = self.next_iteration;
        let owned;
        let (train, val) = match &self.fixed_split {
            Some((t, v)) => (t, v),
            None => {
                owned = self.iteration_data(it)?;
                (&owned.0, &owned.1)
            }
        };
        let mut grad = vec![T::zero(); self.params.len()];
        for epoch in 0..self.config.epochs_per_iteration {
            let start = std::time::Instant::now();
            let mut order: Vec<usize> = (0..train.len()).collect();
            self.root.derive(&[STREAM_SHUFFLE, it as u64, epoch as u64]).shuffle(&mut order);
            let mut loss_sum = 0.0;
            for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
                let params = &self.params;
                let loss_cfg = &self.loss;
                let root = &self.root;
                let results: Vec<Result<(f64, Vec<T>)>> = batch
                    .par_iter()
                    .enumerate()
                    .map(|(slot, &idx)| {
                        let mut dropout =
                            root.derive(&[STREAM_DROPOUT, it as u64, epoch as u64, b as u64, slot as u64]);
                        sample_gradient(params, &train[idx].input, &train[idx].target, loss_cfg, &mut dropout)
                    })
                    .collect();
                grad.iter_mut().for_each(|g| *g = T::zero());
                let mut batch_loss = 0.0;
                for r in results {
                    let (l, g) = r?;
                    batch_loss += l;
                    grad.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b);
                }
                if !batch_loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                    return Err(Error::Diverged(format!(
                        "non-finite loss or gradient at iteration {it}, epoch {epoch}, batch {b}; try a lower learning rate"
                    )));
                }
                let inv = T::lit(1.0 / batch.len() as f64);
                grad.iter_mut().for_each(|g| *g = *g * inv);
                loss_sum += batch_loss;
                adam_step(
                    self.params.as_mut_slice(),
                    &grad,
                    &mut self.adam,
                    self.config.learning_rate,
                    &self.config.adam,
                )?;
            }
            let val_loss = mean_eval_loss(&self.params, val, &self.loss)?;
            if !val_loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite validation loss at iteration {it}, epoch {epoch}")));
            }
            if self.best_val.is_none_or(|b| val_loss < b) {
                self.best_val = Some(val_loss);
                self.best = self.params.clone();
            }
            let rec = EpochRecord {
                iteration: it,
                epoch,
                train_loss: loss_sum / train.len() as f64,
                val_loss,
                seconds: start.elapsed().as_secs_f64(),
            };
            on_epoch(&rec);
            self.log.epochs.push(rec);
        }
        self.next_iteration += 1;
        Ok(())
    }

    /// Runs the remaining iterations.
    pub fn run(&mut self, on_epoch: &mut dyn FnMut(&EpochRecord)) -> Result<()> {
        while !self.is_finished() {
            self.run_iteration(on_epoch)?;
        }
        Ok(())
    }

    /// Writes the full training state into `dir` (created if missing).
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        save_weights(dir.join("current.qsrw"), &self.params)?;
        save_weights(dir.join("best.qsrw"), &self.best)?;
        let n = self.params.len() as u64;
        write_tensor(dir.join("adam_m.qsrt"), &T::tensor(vec![n], self.adam.m.clone()))?;
        write_tensor(dir.join("adam_v.qsrt"), &T::tensor(vec![n], self.adam.v.clone()))?;
        let state = CheckpointState {
            seed: self.seed,
            train: self.config.clone(),
            loss: self.loss.clone(),
            net: self.params.config().clone(),
            scene: match &self.data {
                TrainData::Simulate(s) => Some(s.clone()),
                TrainData::Fixed(_) => None,
            },
            next_iteration: self.next_iteration,
            adam_t: self.adam.t,
            best_val: self.best_val,
            log: self.log.clone(),
        };
        // state.json last: its presence marks a complete checkpoint
        let tmp = dir.join("state.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&state)?)?;
        std::fs::rename(tmp, dir.join("state.json"))?;
        Ok(())
    }

    /// Restores a trainer saved with [`Trainer::save_checkpoint`]. Simulated
    /// runs rebuild their data source from the checkpoint; runs on fixed pairs
    /// must pass the same pairs again in `fixed`.
    pub fn resume(dir: impl AsRef<Path>, fixed: Option<Vec<SamplePair>>) -> Result<Self> {
        let dir = dir.as_ref();
        let state: CheckpointState = serde_json::from_slice(&std::fs::read(dir.join("state.json"))?)?;
        let params: Params<T> = load_weights(dir.join("current.qsrw"), Some(&state.net))?;
        let best: Params<T> = load_weights(dir.join("best.qsrw"), Some(&state.net))?;
        let m = T::from_tensor(&read_tensor(dir.join("adam_m.qsrt"))?);
        let v = T::from_tensor(&read_tensor(dir.join("adam_v.qsrt"))?);
        if m.len() != params.len() || v.len() != params.len() {
            return Err(Error::Shape(format!("optimizer state has {} entries, network has {}", m.len(), params.len())));
        }
        let data = match (state.scene, fixed) {
            (Some(scene), None) => TrainData::Simulate(scene),
            (None, Some(pairs)) => TrainData::Fixed(pairs),
            (Some(_), Some(_)) => {
                return Err(Error::InvalidArgument("checkpoint was trained on simulated data, not fixed pairs".into()))
            }
            (None, None) => {
                return Err(Error::InvalidArgument("checkpoint was trained on fixed pairs; pass them to resume".into()))
            }
        };
        Self::assemble(
            state.seed,
            state.train,
            state.loss,
            data,
            params,
            AdamState { m, v, t: state.adam_t },
            best,
            state.best_val,
            state.next_iteration,
            state.log,
        )
    }
}

/// Result of a complete training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub best: Params<T>,
    pub last: Params<T>,
    pub best_val: f64,
    pub log: TrainLog,
}

/// Trains from scratch and returns the best-validation parameters.
pub fn train_incremental<T: Real>(
    net: &NetConfig,
    config: &TrainConfig,
    loss: &LossConfig,
    data: TrainData,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::<T>::new(net, config.clone(), loss.clone(), data, seed)?;
    trainer.run(on_epoch)?;
    Ok(TrainOutcome {
        best_val: trainer.best_val.expect("at least one epoch ran"),
        best: trainer.best,
        last: trainer.params,
        log: trainer.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_pairs;
    use crate::optics::PsfKind;

    fn tiny_net() -> NetConfig {
        NetConfig { depth: 3, filters: 4, upsample_after: vec![1, 2], ..Default::default() }
    }

    fn small_scene() -> SceneConfig {
        SceneConfig {
            hi_size: 48,
            lo_size: 12,
            n_emitters_range: [1, 3],
            fwhm_range: [8.0, 12.0],
            psf_kinds: vec![PsfKind::Gaussian],
            ..Default::default()
        }
    }

    fn quick(samples: usize, epochs: usize, iterations: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 4,
            epochs_per_iteration: epochs,
            iterations,
            samples_per_iteration: samples,
            ..Default::default()
        }
    }

    #[test]
    fn smoke_single_epoch() {
        let out = train_incremental::<f64>(
            &tiny_net(),
            &quick(8, 1, 1),
            &LossConfig::default(),
            TrainData::Simulate(small_scene()),
            1,
            &mut |_| {},
        )
        .unwrap();
        assert_eq!(out.log.epochs.len(), 1);
        assert!(out.log.epochs[0].train_loss.is_finite());
        assert!(out.best_val.is_finite());
    }

    #[test]
    fn paper_totals() {
        let c = TrainConfig::default();
        assert_eq!(c.iterations * c.samples_per_iteration, 650_000);
    }

    #[test]
    fn same_seed_same_params() {
        let run = || {
            train_incremental::<f32>(
                &tiny_net(),
                &quick(12, 2, 2),
                &LossConfig::default(),
                TrainData::Simulate(small_scene()),
                5,
                &mut |_| {},
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.best, b.best);
        assert_eq!(a.last, b.last);
        let losses =
            |o: &TrainOutcome<f32>| o.log.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect::<Vec<_>>();
        assert_eq!(losses(&a), losses(&b));
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                train_incremental::<f32>(
                    &tiny_net(),
                    &quick(12, 1, 1),
                    &LossConfig::default(),
                    TrainData::Simulate(small_scene()),
                    8,
                    &mut |_| {},
                )
                .unwrap()
                .last
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let dir = std::env::temp_dir().join(format!("qdsr-resume-{}", std::process::id()));
        let cfg = quick(12, 2, 3);
        let data = TrainData::Simulate(small_scene());
        let mut full = Trainer::<f32>::new(&tiny_net(), cfg.clone(), LossConfig::default(), data.clone(), 3).unwrap();
        full.run(&mut |_| {}).unwrap();

        let mut part = Trainer::<f32>::new(&tiny_net(), cfg, LossConfig::default(), data, 3).unwrap();
        part.run_iteration(&mut |_| {}).unwrap();
        part.save_checkpoint(&dir).unwrap();
        drop(part);
        let mut resumed = Trainer::<f32>::resume(&dir, None).unwrap();
        assert_eq!(resumed.next_iteration(), 1);
        resumed.run(&mut |_| {}).unwrap();
        std::fs::remove_dir_all(&dir).ok();

        assert_eq!(resumed.params(), full.params());
        assert_eq!(resumed.best(), full.best());
        let strip = |l: &TrainLog| {
            l.epochs.iter().map(|e| (e.iteration, e.epoch, e.train_loss, e.val_loss)).collect::<Vec<_>>()
        };
        assert_eq!(strip(resumed.log()), strip(full.log()));
    }

    #[test]
    fn fixed_set_loss_decreases() {
        let pairs = generate_pairs(&RngState::new(21), &small_scene(), 32).unwrap();
        let out = train_incremental::<f32>(
            &tiny_net(),
            &TrainConfig { batch_size: 8, ..quick(32, 50, 1) },
            &LossConfig::default(),
            TrainData::Fixed(pairs),
            2,
            &mut |_| {},
        )
        .unwrap();
        let first = out.log.epochs.first().unwrap().train_loss;
        let last = out.log.epochs.last().unwrap().train_loss;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn validation_is_pure() {
        let pairs = generate_pairs(&RngState::new(4), &small_scene(), 1).unwrap();
        let p: Params<f64> = init_params(&RngState::new(1), &tiny_net()).unwrap();
        let a = validation_loss(&p, &pairs, &LossConfig::default()).unwrap();
        assert_eq!(a, validation_loss(&p, &pairs, &LossConfig::default()).unwrap());
        assert!(validation_loss(&p, &[], &LossConfig::default()).is_err());
    }

    #[test]
    fn constant_predictor_on_uniform_target() {
        // zero parameters give a uniform softmax
        let cfg = NetConfig { depth: 2, filters: 2, upsample_after: vec![1], ..Default::default() };
        let p = Params::<f64>::zeros(&cfg).unwrap();
        let pair = generate_pairs(&RngState::new(4), &small_scene(), 1).unwrap().remove(0);
        let (r, c) = (pair.input.rows() * 2, pair.input.cols() * 2);
        let uniform = SamplePair { target: Grid2D::filled(r, c, 1.0 / (r * c) as f64), ..pair };
        let v = validation_loss(&p, &[uniform], &LossConfig::default()).unwrap();
        let expected = 1e-5 * -((r * c) as f64).ln();
        assert!((v - expected).abs() < 1e-15, "{v} vs {expected}");
    }

    #[test]
    fn overfits_single_pair() {
        // ε > 0 keeps the optimum away from the target, so the check runs without it
        let net = NetConfig { dropout_rate: 0.0, ..tiny_net() };
        let scene = SceneConfig { n_emitters_range: [1, 1], ..small_scene() };
        let pair = generate_pairs(&RngState::new(11), &scene, 1).unwrap().remove(0);
        let input = normalize_frame(&pair.input);
        let loss = LossConfig { epsilon: 0.0, ..Default::default() };
        let mut p: Params<f64> = init_params(&RngState::new(1), &net).unwrap();
        let mut adam = AdamState::new(p.len());
        let mut rng = RngState::new(0);
        for _ in 0..2000 {
            let (_, g) = sample_gradient(&p, &input, &pair.target, &loss, &mut rng).unwrap();
            adam_step(p.as_mut_slice(), &g, &mut adam, 2e-2, &AdamConfig::default()).unwrap();
        }
        let (pred, _) = forward(&p, &input, Mode::Eval).unwrap();
        let mse = super::super::loss_parts_and_grad(&pred, &pair.target, &loss).unwrap().0.filtered_mse;
        assert!(mse < 1e-9, "{mse}");
    }
}
