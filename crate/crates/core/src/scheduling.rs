//! Active-user selection per class and per-user delay accounting.
//!
//! Two policies pick the `L_i` users of class `i` that transmit in a frame:
//! uniform random sampling, or a circular queue that re-serves last frame's
//! failures before advancing. Delays are counted in frames.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("cannot activate {count} users from a class of {population}")]
    CountExceedsPopulation { count: usize, population: usize },
    #[error("user {user} decoded but was not activated")]
    DecodedNotActivated { user: usize },
    #[error("user {user} outside a class of {population}")]
    UnknownUser { user: usize, population: usize },
    #[error("queue is not a permutation of 0..{0}")]
    InvalidQueue(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[default]
    Random,
    RoundRobin,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::RoundRobin => "round_robin",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Policy::Random),
            "round_robin" | "round-robin" => Ok(Policy::RoundRobin),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

/// Scheduler state of one class. Users are indexed `0..population`.
#[derive(Debug, Clone)]
pub struct ClassState {
    class_id: usize,
    population: usize,
    policy: Policy,
    queue: Vec<usize>,
    head: usize,
    // user -> frame of the failure that made it pending
    failures: BTreeMap<usize, u64>,
    pending_since: Vec<Option<u64>>,
    scratch: Vec<bool>,
}

impl ClassState {
    pub fn new(class_id: usize, population: usize, policy: Policy) -> Self {
        Self::with_queue(class_id, policy, (0..population).collect())
            .expect("identity is a permutation")
    }

    /// State whose circular queue visits users in the order given.
    pub fn with_queue(
        class_id: usize,
        policy: Policy,
        queue: Vec<usize>,
    ) -> Result<Self, ScheduleError> {
        let population = queue.len();
        let mut seen = vec![false; population];
        for &u in &queue {
            if u >= population || std::mem::replace(&mut seen[u], true) {
                return Err(ScheduleError::InvalidQueue(population));
            }
        }
        // Round-robin clocks start at frame 0; random-policy clocks start at
        // a user's first activation.
        let initial = match policy {
            Policy::RoundRobin => Some(0),
            Policy::Random => None,
        };
        Ok(Self {
            class_id,
            population,
            policy,
            queue,
            head: 0,
            failures: BTreeMap::new(),
            pending_since: vec![initial; population],
            scratch: vec![false; population],
        })
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn queue_head(&self) -> usize {
        self.head
    }

    /// Users that failed and are waiting to be re-served, oldest first.
    pub fn pending_failures(&self) -> Vec<usize> {
        let mut pending: Vec<(u64, usize)> =
            self.failures.iter().map(|(&u, &f)| (f, u)).collect();
        pending.sort_unstable();
        pending.into_iter().map(|(_, u)| u).collect()
    }

    pub fn pending_since(&self, user: usize) -> Option<u64> {
        self.pending_since[user]
    }

    fn check_count(&self, count: usize) -> Result<(), ScheduleError> {
        if count > self.population {
            return Err(ScheduleError::CountExceedsPopulation {
                count,
                population: self.population,
            });
        }
        Ok(())
    }

    /// Uniform sample of `count` distinct users, ascending. Ignores past
    /// failures.
    pub fn select_random<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, ScheduleError> {
        self.check_count(count)?;
        let mut users = rand::seq::index::sample(rng, self.population, count).into_vec();
        users.sort_unstable();
        Ok(users)
    }

    /// Pending failures first (oldest first), then the next users from the
    /// circular queue. Pending users met in the queue are skipped. When more
    /// than `count` users are pending, only the oldest `count` are served and
    /// the queue does not move.
    pub fn select_round_robin(&mut self, count: usize) -> Result<Vec<usize>, ScheduleError> {
        self.check_count(count)?;
        let mut selected = self.pending_failures();
        selected.truncate(count);
        let mut remaining = count - selected.len();
        while remaining > 0 {
            let user = self.queue[self.head];
            self.head = (self.head + 1) % self.population;
            if self.failures.contains_key(&user) {
                continue;
            }
            selected.push(user);
            remaining -= 1;
        }
        Ok(selected)
    }

    pub fn select<R: Rng + ?Sized>(
        &mut self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>, ScheduleError> {
        match self.policy {
            Policy::Random => self.select_random(count, rng),
            Policy::RoundRobin => self.select_round_robin(count),
        }
    }

    /// Books the outcome of frame `frame`: decoded users log a delay of
    /// `frame - pending_since + 1` and start a new packet next frame; failed
    /// users join the pending set under round-robin.
    pub fn record_outcome(
        &mut self,
        activated: &[usize],
        decoded: &[usize],
        frame: u64,
        stats: &mut ClassDelay,
    ) -> Result<(), ScheduleError> {
        for &u in activated {
            if u >= self.population {
                return Err(ScheduleError::UnknownUser { user: u, population: self.population });
            }
            self.scratch[u] = true;
        }
        let check = decoded.iter().find(|&&u| u >= self.population || !self.scratch[u]);
        if let Some(&user) = check {
            for &u in activated {
                self.scratch[u] = false;
            }
            return Err(ScheduleError::DecodedNotActivated { user });
        }
        for &u in activated {
            if self.pending_since[u].is_none() {
                self.pending_since[u] = Some(frame);
            }
        }
        for &u in decoded {
            self.scratch[u] = false;
            let since = self.pending_since[u].unwrap_or(frame);
            stats.record(frame + 1 - since);
            self.pending_since[u] = Some(frame + 1);
            self.failures.remove(&u);
        }
        // Whatever is still marked was activated but not decoded.
        for &u in activated {
            if std::mem::replace(&mut self.scratch[u], false) && self.policy == Policy::RoundRobin {
                self.failures.entry(u).or_insert(frame);
            }
        }
        Ok(())
    }
}

/// Running delay statistics of one class, in frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDelay {
    pub sum: u64,
    pub count: u64,
    pub max: u64,
}

impl ClassDelay {
    pub fn record(&mut self, delay: u64) {
        self.sum += delay;
        self.count += 1;
        self.max = self.max.max(delay);
    }

    /// Average delay D_a,i, or `None` before the first success.
    pub fn average(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum as f64 / self.count as f64)
    }

    pub fn maximum(&self) -> Option<u64> {
        (self.count > 0).then_some(self.max)
    }
}

/// Per-class and network delay measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub classes: Vec<ClassDelay>,
    /// Slots per frame, for reporting delays in slots.
    pub frame_size: usize,
}

impl DelayStats {
    pub fn new(k: usize, frame_size: usize) -> Self {
        Self { classes: vec![ClassDelay::default(); k], frame_size }
    }

    pub fn average_frames(&self, class: usize) -> Option<f64> {
        self.classes[class].average()
    }

    pub fn average_slots(&self, class: usize) -> Option<f64> {
        self.average_frames(class).map(|d| d * self.frame_size as f64)
    }

    pub fn max_frames(&self, class: usize) -> Option<u64> {
        self.classes[class].maximum()
    }

    /// D_a = (1/k) Σ D_a,i over classes that delivered at least one packet.
    pub fn network_average(&self) -> Option<f64> {
        let averages: Vec<f64> = self.classes.iter().filter_map(ClassDelay::average).collect();
        (!averages.is_empty()).then(|| averages.iter().sum::<f64>() / averages.len() as f64)
    }

    /// D_w = max_i D_w,i.
    pub fn network_max(&self) -> Option<u64> {
        self.classes.iter().filter_map(ClassDelay::maximum).max()
    }

    pub fn samples(&self) -> u64 {
        self.classes.iter().map(|c| c.count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort_unstable();
        v
    }

    #[test]
    fn random_selection_edges() {
        let state = ClassState::new(0, 10, Policy::Random);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(state.select_random(0, &mut rng).unwrap().is_empty());
        assert_eq!(state.select_random(10, &mut rng).unwrap(), (0..10).collect::<Vec<_>>());
        assert!(matches!(
            state.select_random(11, &mut rng),
            Err(ScheduleError::CountExceedsPopulation { .. })
        ));
    }

    #[test]
    fn random_selection_is_uniform() {
        let state = ClassState::new(0, 100, Policy::Random);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let frames = 100_000;
        let mut hits = vec![0u32; 100];
        for _ in 0..frames {
            for u in state.select_random(25, &mut rng).unwrap() {
                hits[u] += 1;
            }
        }
        let expected = frames as f64 * 0.25;
        let sigma = (frames as f64 * 0.25 * 0.75).sqrt();
        for (u, &h) in hits.iter().enumerate() {
            assert!((h as f64 - expected).abs() <= 3.0 * sigma, "user {u}: {h}");
        }
    }

    #[test]
    fn round_robin_cycles() {
        let mut state = ClassState::new(0, 4, Policy::RoundRobin);
        let mut stats = ClassDelay::default();
        let mut picks = Vec::new();
        for frame in 0..3 {
            let sel = state.select_round_robin(2).unwrap();
            state.record_outcome(&sel, &sel, frame, &mut stats).unwrap();
            picks.push(sorted(sel));
        }
        assert_eq!(picks, vec![vec![0, 1], vec![2, 3], vec![0, 1]]);
    }

    #[test]
    fn round_robin_reserves_failures_first() {
        let mut state = ClassState::new(0, 4, Policy::RoundRobin);
        let mut stats = ClassDelay::default();
        let first = state.select_round_robin(2).unwrap();
        assert_eq!(first, vec![0, 1]);
        state.record_outcome(&first, &[0], 0, &mut stats).unwrap();
        assert_eq!(state.pending_failures(), vec![1]);
        let second = state.select_round_robin(2).unwrap();
        assert_eq!(sorted(second), vec![1, 2]);
    }

    #[test]
    fn round_robin_zero_count() {
        let mut state = ClassState::new(0, 4, Policy::RoundRobin);
        assert!(state.select_round_robin(0).unwrap().is_empty());
        assert_eq!(state.queue_head(), 0);
    }

    #[test]
    fn round_robin_carries_excess_failures_oldest_first() {
        let mut state = ClassState::new(0, 6, Policy::RoundRobin);
        let mut stats = ClassDelay::default();
        let a = state.select_round_robin(3).unwrap();
        state.record_outcome(&a, &[], 0, &mut stats).unwrap();
        // Frame 1 serves only 2 of the 3 pending users; the queue stays put.
        let b = state.select_round_robin(2).unwrap();
        assert_eq!(b, vec![0, 1]);
        assert_eq!(state.queue_head(), 3);
        state.record_outcome(&b, &[0, 1], 1, &mut stats).unwrap();
        let c = state.select_round_robin(2).unwrap();
        assert_eq!(c, vec![2, 3]);
    }

    #[test]
    fn round_robin_skips_pending_users_on_wraparound() {
        let mut state = ClassState::new(0, 3, Policy::RoundRobin);
        let mut stats = ClassDelay::default();
        let a = state.select_round_robin(2).unwrap();
        state.record_outcome(&a, &[0], 0, &mut stats).unwrap();
        // 1 is pending; the queue yields 2, then wraps to 0.
        let b = state.select_round_robin(3).unwrap();
        assert_eq!(b, vec![1, 2, 0]);
    }

    #[test]
    fn custom_queue_order() {
        let mut state = ClassState::with_queue(0, Policy::RoundRobin, vec![3, 1, 0, 2]).unwrap();
        assert_eq!(state.select_round_robin(2).unwrap(), vec![3, 1]);
        assert!(ClassState::with_queue(0, Policy::RoundRobin, vec![0, 0]).is_err());
        assert!(ClassState::with_queue(0, Policy::RoundRobin, vec![0, 2]).is_err());
    }

    #[test]
    fn immediate_success_has_delay_one() {
        let mut state = ClassState::new(0, 10, Policy::Random);
        let mut stats = ClassDelay::default();
        state.record_outcome(&[4], &[4], 3, &mut stats).unwrap();
        assert_eq!(stats.average(), Some(1.0));
        assert_eq!(state.pending_since(4), Some(4));
    }

    #[test]
    fn renewal_delay_under_random_policy() {
        let mut state = ClassState::new(0, 10, Policy::Random);
        let mut stats = ClassDelay::default();
        state.record_outcome(&[4], &[4], 3, &mut stats).unwrap();
        state.record_outcome(&[4], &[], 5, &mut stats).unwrap();
        state.record_outcome(&[4], &[4], 7, &mut stats).unwrap();
        assert_eq!(stats.max, 4);
        assert!(state.pending_failures().is_empty());
    }

    #[test]
    fn decoded_must_be_activated() {
        let mut state = ClassState::new(0, 10, Policy::RoundRobin);
        let mut stats = ClassDelay::default();
        assert_eq!(
            state.record_outcome(&[1, 2], &[3], 0, &mut stats),
            Err(ScheduleError::DecodedNotActivated { user: 3 })
        );
        // A rejected outcome leaves no trace.
        state.record_outcome(&[3], &[3], 0, &mut stats).unwrap();
        assert_eq!(stats.count, 1);
        assert!(state.pending_failures().is_empty());
    }

    #[test]
    fn all_active_loss_free_has_unit_delay() {
        let mut state = ClassState::new(0, 8, Policy::RoundRobin);
        let mut stats = ClassDelay::default();
        for frame in 0..50 {
            let sel = state.select_round_robin(8).unwrap();
            state.record_outcome(&sel, &sel, frame, &mut stats).unwrap();
        }
        assert_eq!(stats.average(), Some(1.0));
        assert_eq!(stats.maximum(), Some(1));
    }

    #[test]
    fn loss_free_round_robin_max_delay_is_ceiling() {
        for &(n, count) in &[(100usize, 25usize), (10, 3), (7, 7), (12, 5)] {
            let mut state = ClassState::new(0, n, Policy::RoundRobin);
            let mut stats = ClassDelay::default();
            for frame in 0..500 {
                let sel = state.select_round_robin(count).unwrap();
                state.record_outcome(&sel, &sel, frame, &mut stats).unwrap();
            }
            assert_eq!(stats.max as usize, n.div_ceil(count), "n={n} count={count}");
        }
    }

    #[test]
    fn network_delay_aggregates() {
        let mut stats = DelayStats::new(3, 10);
        stats.classes[0].record(2);
        stats.classes[0].record(4);
        stats.classes[1].record(6);
        assert_eq!(stats.average_frames(0), Some(3.0));
        assert_eq!(stats.average_slots(0), Some(30.0));
        assert_eq!(stats.network_average(), Some(4.5));
        assert_eq!(stats.network_max(), Some(6));
        assert_eq!(stats.max_frames(2), None);
        assert_eq!(stats.samples(), 3);
    }

    #[test]
    fn policy_names() {
        assert_eq!("round_robin".parse::<Policy>(), Ok(Policy::RoundRobin));
        assert_eq!(serde_json::to_string(&Policy::RoundRobin).unwrap(), "\"round_robin\"");
        assert!("fifo".parse::<Policy>().is_err());
    }
}
