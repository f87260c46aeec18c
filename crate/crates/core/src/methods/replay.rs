//! Capacity-bounded replay buffers and the replay-based loss terms.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{invalid_argument, invalid_state, Result};
use crate::linear::{Example, LinearModel};
use crate::methods::MethodConfig;
use crate::rng::RngStream;

/// A buffered training example, optionally with the model output recorded
/// at insertion time (the regression analogue of stored logits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredItem {
    pub x: Vec<f64>,
    pub y: f64,
    pub recorded_output: Option<f64>,
    pub task_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferPolicy {
    /// Streaming reservoir: every seen item ends up stored with equal
    /// probability `capacity / seen_count`.
    Reservoir,
    /// Equal space per task, rebalanced whenever a new task inserts.
    PerTaskQuota,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<StoredItem>,
    seen_count: u64,
    tasks_seen: usize,
    policy: BufferPolicy,
}

impl ReplayBuffer {
    pub fn reservoir(capacity: usize) -> Result<Self> {
        Self::new(capacity, BufferPolicy::Reservoir)
    }

    pub fn per_task_quota(capacity: usize) -> Result<Self> {
        Self::new(capacity, BufferPolicy::PerTaskQuota)
    }

    fn new(capacity: usize, policy: BufferPolicy) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid_argument("buffer capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            seen_count: 0,
            tasks_seen: 0,
            policy,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn seen_count(&self) -> u64 {
        self.seen_count
    }

    pub fn tasks_seen(&self) -> usize {
        self.tasks_seen
    }

    pub fn policy(&self) -> BufferPolicy {
        self.policy
    }

    pub fn items(&self) -> &[StoredItem] {
        &self.items
    }

    /// Algorithm-R insertion: after `n` insertions every streamed item is
    /// present with probability `capacity / n`.
    pub fn reservoir_insert(&mut self, item: StoredItem, rng: &mut RngStream) -> Result<()> {
        if self.policy != BufferPolicy::Reservoir {
            return Err(invalid_state("reservoir_insert needs the reservoir policy"));
        }
        self.seen_count += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            let slot = rng.random_range(0..self.seen_count);
            if (slot as usize) < self.capacity {
                self.items[slot as usize] = item;
            }
        }
        Ok(())
    }

    /// Insert a finished task's examples under the equal-space policy:
    /// per-task quota is `capacity / tasks_seen` (at least one slot),
    /// overfull tasks evict uniformly at random, and any remaining
    /// overflow is evicted uniformly across the buffer. Tasks without
    /// training data claim no space.
    pub fn insert_task_quota(
        &mut self,
        task_id: usize,
        examples: &[Example],
        rng: &mut RngStream,
    ) -> Result<()> {
        if self.policy != BufferPolicy::PerTaskQuota {
            return Err(invalid_state(
                "insert_task_quota needs the per-task-quota policy",
            ));
        }
        if examples.is_empty() {
            return Ok(());
        }
        self.tasks_seen += 1;
        self.seen_count += examples.len() as u64;
        let quota = (self.capacity / self.tasks_seen).max(1);

        // Trim every stored task to the new quota, keeping a uniform
        // random subset. BTreeMap keeps the task iteration order stable.
        let mut by_task: BTreeMap<usize, Vec<StoredItem>> = BTreeMap::new();
        for item in self.items.drain(..) {
            by_task.entry(item.task_id).or_default().push(item);
        }
        for group in by_task.values_mut() {
            if group.len() > quota {
                let mut keep = index::sample(rng, group.len(), quota).into_vec();
                keep.sort_unstable();
                let kept: Vec<StoredItem> = keep.into_iter().map(|i| group[i].clone()).collect();
                *group = kept;
            }
        }
        self.items = by_task.into_values().flatten().collect();

        // Admit up to `quota` examples from the new task.
        if examples.len() <= quota {
            for ex in examples {
                self.items.push(StoredItem {
                    x: ex.x.clone(),
                    y: ex.y,
                    recorded_output: None,
                    task_id,
                });
            }
        } else {
            let mut picks = index::sample(rng, examples.len(), quota).into_vec();
            picks.sort_unstable();
            for i in picks {
                let ex = &examples[i];
                self.items.push(StoredItem {
                    x: ex.x.clone(),
                    y: ex.y,
                    recorded_output: None,
                    task_id,
                });
            }
        }

        // With more tasks than capacity the one-slot minimum can overflow;
        // evict uniformly until the bound holds again.
        while self.items.len() > self.capacity {
            let victim = rng.random_range(0..self.items.len());
            self.items.swap_remove(victim);
        }
        Ok(())
    }

    /// Uniform sample without replacement; an oversized request returns
    /// every stored item plus uniform extra draws. An empty buffer yields
    /// an empty batch (callers skip their replay term).
    pub fn sample(&self, batch_size: usize, rng: &mut RngStream) -> Vec<StoredItem> {
        if self.items.is_empty() || batch_size == 0 {
            return Vec::new();
        }
        if batch_size >= self.items.len() {
            let mut out = self.items.clone();
            for _ in self.items.len()..batch_size {
                let i = rng.random_range(0..self.items.len());
                out.push(self.items[i].clone());
            }
            return out;
        }
        index::sample(rng, self.items.len(), batch_size)
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect()
    }
}

pub(crate) fn items_as_examples(items: &[StoredItem]) -> Vec<Example> {
    items
        .iter()
        .map(|it| Example::new(it.x.clone(), it.y))
        .collect()
}

/// DER++ batch objective: current-task loss, a distillation term pulling
/// predictions toward outputs recorded at insertion time, and a plain
/// replay term on ground-truth targets. Returns the loss and its exact
/// gradient.
pub fn derpp_batch_loss(
    model: &LinearModel,
    current: &[Example],
    replay_a: &[StoredItem],
    replay_b: &[StoredItem],
    cfg: &MethodConfig,
) -> Result<(f64, Vec<f64>)> {
    let refs: Vec<&Example> = current.iter().collect();
    derpp_batch_loss_refs(model, &refs, replay_a, replay_b, cfg)
}

pub(crate) fn derpp_batch_loss_refs(
    model: &LinearModel,
    current: &[&Example],
    replay_a: &[StoredItem],
    replay_b: &[StoredItem],
    cfg: &MethodConfig,
) -> Result<(f64, Vec<f64>)> {
    let (cur_loss, mut grad) = crate::linear::mse_loss_and_grad_refs(model, current)?;
    let clw = cfg.current_loss_weight;
    let mut loss = clw * cur_loss;
    grad.iter_mut().for_each(|g| *g *= clw);

    if !replay_a.is_empty() {
        let inv = cfg.derpp_alpha / replay_a.len() as f64;
        let mut distill = 0.0;
        for item in replay_a {
            let recorded = item.recorded_output.ok_or_else(|| {
                invalid_state("distillation replay item lacks a recorded output")
            })?;
            let r = model.accumulate_example_grad(&item.x, recorded, inv, &mut grad);
            distill += r * r;
        }
        loss += distill * inv;
    }

    if !replay_b.is_empty() {
        let inv = cfg.derpp_beta / replay_b.len() as f64;
        let mut replay_loss = 0.0;
        for item in replay_b {
            let r = model.accumulate_example_grad(&item.x, item.y, inv, &mut grad);
            replay_loss += r * r;
        }
        loss += replay_loss * inv;
    }

    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::mse_loss_and_grad;
    use crate::methods::MethodKind;
    use proptest::prelude::*;

    fn item(v: f64, task_id: usize) -> StoredItem {
        StoredItem {
            x: vec![v],
            y: v,
            recorded_output: None,
            task_id,
        }
    }

    #[test]
    fn fill_phase_stores_everything() {
        let mut rng = RngStream::new(3, 0);
        let mut buf = ReplayBuffer::reservoir(2).unwrap();
        buf.reservoir_insert(item(1.0, 0), &mut rng).unwrap();
        buf.reservoir_insert(item(2.0, 0), &mut rng).unwrap();
        assert_eq!(buf.len(), 2);
        assert_eq!(buf.seen_count(), 2);
    }

    #[test]
    fn third_item_survives_with_probability_two_thirds() {
        let trials = 100_000u64;
        let mut hits = 0u64;
        for trial in 0..trials {
            let mut rng = RngStream::new(42, trial);
            let mut buf = ReplayBuffer::reservoir(2).unwrap();
            for i in 0..3 {
                buf.reservoir_insert(item(i as f64, 0), &mut rng).unwrap();
            }
            if buf.items().iter().any(|it| it.y == 2.0) {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        assert!((rate - 2.0 / 3.0).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn long_stream_inclusion_rates_are_uniform() {
        // 1000-item stream into capacity 2, repeated; every item's
        // empirical inclusion rate must match 2/1000 up to Monte Carlo
        // noise. The bound is a familywise one: with 1000 simultaneous
        // item checks, a 3-sigma per-item band would flag ~3 items of a
        // perfectly uniform sampler by chance, so the threshold is the
        // Bonferroni-style 4.75 sigma.
        let n = 1000usize;
        let trials = 10_000u64;
        let mut counts = vec![0u64; n];
        for trial in 0..trials {
            let mut rng = RngStream::new(7, trial);
            let mut buf = ReplayBuffer::reservoir(2).unwrap();
            for i in 0..n {
                buf.reservoir_insert(item(i as f64, 0), &mut rng).unwrap();
            }
            for it in buf.items() {
                counts[it.y as usize] += 1;
            }
        }
        let p = 2.0 / n as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        let max_dev = counts
            .iter()
            .map(|&c| (c as f64 / trials as f64 - p).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev <= 4.75 * se, "max deviation {max_dev}, se {se}");
        // Totals are conserved: exactly 2 stored per trial.
        assert_eq!(counts.iter().sum::<u64>(), 2 * trials);
    }

    #[test]
    fn sample_returns_the_single_item() {
        let mut rng = RngStream::new(5, 0);
        let mut buf = ReplayBuffer::reservoir(4).unwrap();
        buf.reservoir_insert(item(7.0, 1), &mut rng).unwrap();
        let batch = buf.sample(1, &mut rng);
        assert_eq!(batch.len(), 1);
        assert_eq!(batch[0].y, 7.0);
    }

    #[test]
    fn oversized_sample_covers_every_item() {
        let mut rng = RngStream::new(5, 0);
        let mut buf = ReplayBuffer::reservoir(4).unwrap();
        for i in 0..3 {
            buf.reservoir_insert(item(i as f64, 0), &mut rng).unwrap();
        }
        let batch = buf.sample(7, &mut rng);
        assert_eq!(batch.len(), 7);
        for i in 0..3 {
            assert!(batch.iter().any(|it| it.y == i as f64));
        }
    }

    #[test]
    fn empty_buffer_samples_nothing() {
        let mut rng = RngStream::new(5, 0);
        let buf = ReplayBuffer::reservoir(4).unwrap();
        assert!(buf.sample(3, &mut rng).is_empty());
    }

    #[test]
    fn sampling_is_uniform_over_items() {
        let mut rng = RngStream::new(9, 0);
        let mut buf = ReplayBuffer::reservoir(10).unwrap();
        for i in 0..10 {
            buf.reservoir_insert(item(i as f64, 0), &mut rng).unwrap();
        }
        let draws = 100_000usize;
        let mut counts = vec![0u64; 10];
        for _ in 0..draws {
            let batch = buf.sample(1, &mut rng);
            counts[batch[0].y as usize] += 1;
        }
        for &c in &counts {
            let rate = c as f64 / draws as f64;
            assert!((rate - 0.1).abs() < 0.005, "rate {rate}");
        }
    }

    #[test]
    fn quota_rebalancing_keeps_bounds() {
        let mut rng = RngStream::new(11, 0);
        let mut buf = ReplayBuffer::per_task_quota(10).unwrap();
        for task in 0..5usize {
            let examples: Vec<Example> =
                (0..20).map(|i| Example::new(vec![i as f64], task as f64)).collect();
            buf.insert_task_quota(task, &examples, &mut rng).unwrap();
            assert!(buf.len() <= buf.capacity());
            let quota = (buf.capacity() / buf.tasks_seen()).max(1);
            let mut per_task: BTreeMap<usize, usize> = BTreeMap::new();
            for it in buf.items() {
                *per_task.entry(it.task_id).or_default() += 1;
            }
            for (&t, &count) in &per_task {
                assert!(count <= quota, "task {t} holds {count} > quota {quota}");
            }
        }
        assert_eq!(buf.tasks_seen(), 5);
    }

    #[test]
    fn quota_handles_more_tasks_than_capacity() {
        let mut rng = RngStream::new(13, 0);
        let mut buf = ReplayBuffer::per_task_quota(3).unwrap();
        for task in 0..8usize {
            let examples: Vec<Example> =
                (0..4).map(|i| Example::new(vec![i as f64], 0.0)).collect();
            buf.insert_task_quota(task, &examples, &mut rng).unwrap();
            assert!(buf.len() <= 3);
        }
    }

    #[test]
    fn empty_task_claims_no_space() {
        let mut rng = RngStream::new(13, 0);
        let mut buf = ReplayBuffer::per_task_quota(4).unwrap();
        buf.insert_task_quota(0, &[], &mut rng).unwrap();
        assert_eq!(buf.tasks_seen(), 0);
        assert!(buf.is_empty());
    }

    #[test]
    fn policies_reject_foreign_operations() {
        let mut rng = RngStream::new(1, 0);
        let mut quota = ReplayBuffer::per_task_quota(4).unwrap();
        assert!(quota.reservoir_insert(item(1.0, 0), &mut rng).is_err());
        let mut reservoir = ReplayBuffer::reservoir(4).unwrap();
        assert!(reservoir
            .insert_task_quota(0, &[Example::new(vec![1.0], 1.0)], &mut rng)
            .is_err());
    }

    #[test]
    fn derpp_distillation_term_matches_hand_value() {
        let cfg = MethodConfig::new(MethodKind::Derpp);
        // Model output 0.7 against a recorded 0.5 gives (0.2)^2 = 0.04;
        // the current batch is interpolated so it contributes nothing.
        let model = LinearModel::from_weights(vec![0.7]);
        let current = [Example::new(vec![1.0], 0.7)];
        let replay_a = [StoredItem {
            x: vec![1.0],
            y: 0.0,
            recorded_output: Some(0.5),
            task_id: 0,
        }];
        let (loss, _) = derpp_batch_loss(&model, &current, &replay_a, &[], &cfg).unwrap();
        assert!((loss - 0.04).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn derpp_reduces_to_current_loss_without_replay() {
        let cfg = MethodConfig::new(MethodKind::Derpp);
        let model = LinearModel::from_weights(vec![1.0]);
        let current = [Example::new(vec![2.0], 1.0)];
        let (loss, grad) = derpp_batch_loss(&model, &current, &[], &[], &cfg).unwrap();
        let (plain_loss, plain_grad) = mse_loss_and_grad(&model, &current).unwrap();
        assert_eq!(loss, plain_loss);
        assert_eq!(grad, plain_grad);
    }

    #[test]
    fn derpp_distillation_vanishes_at_recorded_outputs() {
        let cfg = MethodConfig::new(MethodKind::Derpp);
        let model = LinearModel::from_weights(vec![2.0]);
        let current = [Example::new(vec![1.0], 2.0)];
        let replay_a = [StoredItem {
            x: vec![3.0],
            y: 0.0,
            recorded_output: Some(6.0),
            task_id: 0,
        }];
        let (loss, grad) = derpp_batch_loss(&model, &current, &replay_a, &[], &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad, vec![0.0]);
    }

    #[test]
    fn derpp_requires_recorded_outputs() {
        let cfg = MethodConfig::new(MethodKind::Derpp);
        let model = LinearModel::from_weights(vec![1.0]);
        let current = [Example::new(vec![1.0], 1.0)];
        let replay_a = [item(1.0, 0)];
        assert!(derpp_batch_loss(&model, &current, &replay_a, &[], &cfg).is_err());
    }

    proptest! {
        #[test]
        fn buffer_never_exceeds_capacity(
            capacity in 1usize..20,
            inserts in 0usize..200,
            seed in 0u64..100,
        ) {
            let mut rng = RngStream::new(seed, 0);
            let mut buf = ReplayBuffer::reservoir(capacity).unwrap();
            for i in 0..inserts {
                buf.reservoir_insert(item(i as f64, 0), &mut rng).unwrap();
                prop_assert!(buf.len() <= capacity);
            }
            prop_assert_eq!(buf.seen_count(), inserts as u64);
        }

        #[test]
        fn quota_buffer_never_exceeds_capacity(
            capacity in 1usize..12,
            tasks in 1usize..10,
            per_task in 0usize..12,
            seed in 0u64..50,
        ) {
            let mut rng = RngStream::new(seed, 1);
            let mut buf = ReplayBuffer::per_task_quota(capacity).unwrap();
            for task in 0..tasks {
                let examples: Vec<Example> = (0..per_task)
                    .map(|i| Example::new(vec![i as f64], task as f64))
                    .collect();
                buf.insert_task_quota(task, &examples, &mut rng).unwrap();
                prop_assert!(buf.len() <= capacity);
            }
        }
    }
}
