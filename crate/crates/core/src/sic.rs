//! Per-frame user/slot graph and the ideal successive interference
//! cancellation (peeling) decoder.
//!
//! The channel is collision-type: a slot with exactly one replica decodes,
//! any slot with two or more replicas is lost until cancellation removes all
//! but one of them. Cancellation is perfect.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame has no slots")]
    EmptyFrame,
    #[error("user {user} has degree {degree} but the frame has only {slots} slots")]
    DegreeExceedsFrame { user: usize, degree: usize, slots: usize },
    #[error("user {user} has degree 0")]
    ZeroDegree { user: usize },
    #[error("user {user} lists slot {slot} outside a {slots}-slot frame")]
    SlotOutOfRange { user: usize, slot: usize, slots: usize },
    #[error("user {user} lists slot {slot} twice")]
    DuplicateSlot { user: usize, slot: usize },
    #[error("active user count {users} inconsistent with load {load} over {slots} slots")]
    InconsistentLoad { users: usize, load: f64, slots: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Bipartite incidence of one frame: which slots each user's replicas occupy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameGraph {
    num_slots: usize,
    // CSR layout: user u's slots are placements[offsets[u]..offsets[u + 1]].
    offsets: Vec<usize>,
    placements: Vec<usize>,
    occupancy: Vec<u32>,
}

impl FrameGraph {
    /// Builds a frame from explicit replica placements.
    pub fn from_placements<S: AsRef<[usize]>>(
        num_slots: usize,
        users: &[S],
    ) -> Result<Self, FrameError> {
        if num_slots == 0 {
            return Err(FrameError::EmptyFrame);
        }
        let mut offsets = Vec::with_capacity(users.len() + 1);
        offsets.push(0);
        let mut placements = Vec::new();
        let mut occupancy = vec![0u32; num_slots];
        let mut seen = vec![usize::MAX; num_slots];
        for (user, slots) in users.iter().enumerate() {
            let slots = slots.as_ref();
            if slots.is_empty() {
                return Err(FrameError::ZeroDegree { user });
            }
            for &slot in slots {
                if slot >= num_slots {
                    return Err(FrameError::SlotOutOfRange { user, slot, slots: num_slots });
                }
                if seen[slot] == user {
                    return Err(FrameError::DuplicateSlot { user, slot });
                }
                seen[slot] = user;
                occupancy[slot] += 1;
                placements.push(slot);
            }
            offsets.push(placements.len());
        }
        Ok(Self { num_slots, offsets, placements, occupancy })
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn num_users(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Slots holding user `user`'s replicas.
    pub fn user_slots(&self, user: usize) -> &[usize] {
        &self.placements[self.offsets[user]..self.offsets[user + 1]]
    }

    pub fn degree(&self, user: usize) -> usize {
        self.offsets[user + 1] - self.offsets[user]
    }

    /// Number of replicas in each slot.
    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    pub fn total_replicas(&self) -> usize {
        self.placements.len()
    }

    /// Debug dump: one `user: slot,slot,...` line per user, then a
    /// `decoded:` line when a decode result is given.
    pub fn dump(&self, decoded: Option<&DecodeResult>) -> String {
        let mut out = String::new();
        for user in 0..self.num_users() {
            let slots: Vec<String> = self.user_slots(user).iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{user}: {}", slots.join(","));
        }
        if let Some(result) = decoded {
            let users: Vec<String> = result.decoded.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "decoded: {}", users.join(","));
        }
        out
    }
}

/// Reusable frame builder. Keeps a permutation of `0..M` around so that each
/// user's slot choice is an O(degree) partial Fisher-Yates shuffle.
#[derive(Debug, Clone)]
pub struct FrameBuilder {
    perm: Vec<usize>,
    swaps: Vec<usize>,
}

impl FrameBuilder {
    pub fn new(num_slots: usize) -> Self {
        Self { perm: (0..num_slots).collect(), swaps: Vec::new() }
    }

    pub fn num_slots(&self) -> usize {
        self.perm.len()
    }

    /// Places each user's `degrees[u]` replicas in distinct, uniformly chosen
    /// slots, independently across users.
    pub fn build<R: Rng + ?Sized>(
        &mut self,
        degrees: &[usize],
        rng: &mut R,
    ) -> Result<FrameGraph, FrameError> {
        let m = self.perm.len();
        if m == 0 {
            return Err(FrameError::EmptyFrame);
        }
        for (user, &degree) in degrees.iter().enumerate() {
            if degree == 0 {
                return Err(FrameError::ZeroDegree { user });
            }
            if degree > m {
                return Err(FrameError::DegreeExceedsFrame { user, degree, slots: m });
            }
        }
        let total: usize = degrees.iter().sum();
        let mut offsets = Vec::with_capacity(degrees.len() + 1);
        offsets.push(0);
        let mut placements = Vec::with_capacity(total);
        let mut occupancy = vec![0u32; m];
        for &degree in degrees {
            self.swaps.clear();
            for j in 0..degree {
                let k = rng.gen_range(j..m);
                self.perm.swap(j, k);
                self.swaps.push(k);
                let slot = self.perm[j];
                occupancy[slot] += 1;
                placements.push(slot);
            }
            // Undo in reverse so the next user starts from the identity.
            for (j, &k) in self.swaps.iter().enumerate().rev() {
                self.perm.swap(j, k);
            }
            offsets.push(placements.len());
        }
        Ok(FrameGraph { num_slots: m, offsets, placements, occupancy })
    }
}

/// One-shot form of [`FrameBuilder::build`].
pub fn build_frame<R: Rng + ?Sized>(
    degrees: &[usize],
    num_slots: usize,
    rng: &mut R,
) -> Result<FrameGraph, FrameError> {
    FrameBuilder::new(num_slots).build(degrees, rng)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeResult {
    /// Decoded user indices, ascending.
    pub decoded: Vec<usize>,
    /// Peeling rounds that resolved at least one user.
    pub iterations: usize,
    /// Collision slots left when peeling stopped.
    pub residual_slots: usize,
}

impl DecodeResult {
    pub fn num_decoded(&self) -> usize {
        self.decoded.len()
    }
}

struct PeelState<'a> {
    frame: &'a FrameGraph,
    occupancy: Vec<u32>,
    // XOR of the user ids still present in each slot; equals the lone user
    // once occupancy drops to 1.
    residue: Vec<usize>,
    decoded: Vec<bool>,
}

impl<'a> PeelState<'a> {
    fn new(frame: &'a FrameGraph) -> Self {
        let mut residue = vec![0usize; frame.num_slots];
        for user in 0..frame.num_users() {
            for &slot in frame.user_slots(user) {
                residue[slot] ^= user;
            }
        }
        Self {
            frame,
            occupancy: frame.occupancy.clone(),
            residue,
            decoded: vec![false; frame.num_users()],
        }
    }

    fn singletons(&self) -> Vec<usize> {
        (0..self.frame.num_slots).filter(|&s| self.occupancy[s] == 1).collect()
    }

    /// Resolves the user in `slot` if it is still a singleton, pushing slots
    /// that become singletons onto `fresh`. Returns whether a user decoded.
    fn resolve(&mut self, slot: usize, fresh: &mut Vec<usize>) -> bool {
        if self.occupancy[slot] != 1 {
            return false;
        }
        let user = self.residue[slot];
        debug_assert!(!self.decoded[user]);
        self.decoded[user] = true;
        for &s in self.frame.user_slots(user) {
            self.occupancy[s] -= 1;
            self.residue[s] ^= user;
            if self.occupancy[s] == 1 {
                fresh.push(s);
            }
        }
        true
    }

    fn finish(self, iterations: usize) -> DecodeResult {
        let decoded = self
            .decoded
            .iter()
            .enumerate()
            .filter_map(|(u, &d)| d.then_some(u))
            .collect();
        let residual_slots = self.occupancy.iter().filter(|&&c| c >= 2).count();
        DecodeResult { decoded, iterations, residual_slots }
    }
}

/// Iterative SIC: resolve every singleton slot, cancel the resolved users'
/// other replicas, repeat until no singleton remains.
pub fn peel(frame: &FrameGraph) -> DecodeResult {
    let mut state = PeelState::new(frame);
    let mut current = state.singletons();
    let mut next = Vec::new();
    let mut iterations = 0;
    while !current.is_empty() {
        let mut progressed = false;
        for &slot in &current {
            progressed |= state.resolve(slot, &mut next);
        }
        if progressed {
            iterations += 1;
        }
        std::mem::swap(&mut current, &mut next);
        next.clear();
    }
    state.finish(iterations)
}

/// Peeling with singletons drawn from the pending set in random order, one
/// at a time. `iterations` counts individual resolutions. The decoded set
/// equals that of [`peel`] for any order.
pub fn peel_shuffled<R: Rng + ?Sized>(frame: &FrameGraph, rng: &mut R) -> DecodeResult {
    let mut state = PeelState::new(frame);
    let mut pending = state.singletons();
    let mut fresh = Vec::new();
    let mut steps = 0;
    while !pending.is_empty() {
        let slot = pending.swap_remove(rng.gen_range(0..pending.len()));
        if state.resolve(slot, &mut fresh) {
            steps += 1;
        }
        pending.append(&mut fresh);
    }
    state.finish(steps)
}

/// Slot degree distribution Ψ_m, m = 0, 1, ...
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SlotDegreeHistogram {
    pub probs: Vec<f64>,
    pub total_slots: u64,
}

impl SlotDegreeHistogram {
    /// Ψ_m = (#slots with occupancy m) / M for one frame.
    pub fn of_frame(frame: &FrameGraph) -> Self {
        let mut counts = SlotCounts::default();
        counts.add_frame(frame);
        counts.histogram()
    }

    pub fn psi(&self, m: usize) -> f64 {
        self.probs.get(m).copied().unwrap_or(0.0)
    }

    /// Total-variation distance ½ Σ_m |Ψ_m − Ψ'_m|.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        0.5 * (0..len).map(|m| (self.psi(m) - other.psi(m)).abs()).sum::<f64>()
    }
}

/// Slot occupancy counts accumulated over any number of frames.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotCounts {
    counts: Vec<u64>,
}

impl SlotCounts {
    /// `counts[m]` = number of slots seen with occupancy `m`.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn add_frame(&mut self, frame: &FrameGraph) {
        for &occ in frame.occupancy() {
            let m = occ as usize;
            if m >= self.counts.len() {
                self.counts.resize(m + 1, 0);
            }
            self.counts[m] += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn histogram(&self) -> SlotDegreeHistogram {
        let total = self.total();
        let probs = if total == 0 {
            Vec::new()
        } else {
            self.counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        SlotDegreeHistogram { probs, total_slots: total }
    }
}

pub fn slot_histogram(frame: &FrameGraph) -> SlotDegreeHistogram {
    SlotDegreeHistogram::of_frame(frame)
}

/// Binomial slot-degree law Ψ_m = C(L, m) ρ^m (1 − ρ)^(L − m) with
/// ρ = Λ'(1)/M, for L = round(G_t·M) active users.
pub fn analytic_slot_dist(
    total_load: f64,
    mean_degree: f64,
    num_slots: usize,
    active_users: usize,
) -> Result<SlotDegreeHistogram, FrameError> {
    if num_slots == 0 {
        return Err(FrameError::EmptyFrame);
    }
    if !(mean_degree > 0.0 && mean_degree <= num_slots as f64) {
        return Err(FrameError::InvalidParameter("mean degree must lie in (0, M]"));
    }
    if crate::round_half_up(total_load * num_slots as f64) != active_users {
        return Err(FrameError::InconsistentLoad {
            users: active_users,
            load: total_load,
            slots: num_slots,
        });
    }
    let l = active_users;
    let rho = mean_degree / num_slots as f64;
    let mut probs = vec![0.0; l + 1];
    if rho >= 1.0 {
        probs[l] = 1.0;
    } else {
        let (ln_rho, ln_q) = (rho.ln(), (-rho).ln_1p());
        let mut ln_p = l as f64 * ln_q;
        for (m, p) in probs.iter_mut().enumerate() {
            if m > 0 {
                ln_p += ((l - m + 1) as f64).ln() - (m as f64).ln() + ln_rho - ln_q;
            }
            *p = ln_p.exp();
        }
    }
    Ok(SlotDegreeHistogram { probs, total_slots: num_slots as u64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forced_placements() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frame = build_frame(&[3], 3, &mut rng).unwrap();
        let mut slots = frame.user_slots(0).to_vec();
        slots.sort();
        assert_eq!(slots, vec![0, 1, 2]);

        let frame = build_frame(&[1, 1], 1, &mut rng).unwrap();
        assert_eq!(frame.occupancy(), &[2]);
    }

    #[test]
    fn build_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            build_frame(&[9], 8, &mut rng),
            Err(FrameError::DegreeExceedsFrame { degree: 9, slots: 8, .. })
        ));
        assert_eq!(build_frame(&[1], 0, &mut rng), Err(FrameError::EmptyFrame));
        assert!(matches!(build_frame(&[0], 4, &mut rng), Err(FrameError::ZeroDegree { .. })));
    }

    #[test]
    fn built_frames_have_distinct_slots_and_consistent_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut builder = FrameBuilder::new(20);
        for _ in 0..200 {
            let degrees: Vec<usize> = (0..15).map(|_| rng.gen_range(1..=20)).collect();
            let frame = builder.build(&degrees, &mut rng).unwrap();
            let mut occ = vec![0u32; 20];
            for (u, &d) in degrees.iter().enumerate() {
                let mut s = frame.user_slots(u).to_vec();
                assert_eq!(s.len(), d);
                s.sort();
                s.dedup();
                assert_eq!(s.len(), d);
                for slot in s {
                    occ[slot] += 1;
                }
            }
            assert_eq!(frame.occupancy(), occ.as_slice());
        }
    }

    #[test]
    fn explicit_placement_validation() {
        assert!(matches!(
            FrameGraph::from_placements(2, &[vec![0, 0]]),
            Err(FrameError::DuplicateSlot { .. })
        ));
        assert!(matches!(
            FrameGraph::from_placements(2, &[vec![2]]),
            Err(FrameError::SlotOutOfRange { .. })
        ));
        assert!(matches!(
            FrameGraph::from_placements::<Vec<usize>>(2, &[vec![]]),
            Err(FrameError::ZeroDegree { .. })
        ));
    }

    #[test]
    fn peel_chain() {
        // A in {0}, B in {0, 1}: B decodes from slot 1, then A from slot 0.
        let frame = FrameGraph::from_placements(2, &[vec![0], vec![0, 1]]).unwrap();
        let result = peel(&frame);
        assert_eq!(result.decoded, vec![0, 1]);
        assert_eq!(result.iterations, 2);
        assert_eq!(result.residual_slots, 0);
    }

    #[test]
    fn peel_stopping_set() {
        let frame = FrameGraph::from_placements(2, &[vec![0, 1], vec![0, 1]]).unwrap();
        let result = peel(&frame);
        assert!(result.decoded.is_empty());
        assert_eq!(result.residual_slots, 2);
        assert_eq!(result.iterations, 0);
    }

    #[test]
    fn peel_empty_frame() {
        let frame = FrameGraph::from_placements::<Vec<usize>>(4, &[]).unwrap();
        let result = peel(&frame);
        assert!(result.decoded.is_empty());
        assert_eq!(result.iterations, 0);
        assert_eq!(result.residual_slots, 0);
    }

    #[test]
    fn shuffled_peel_agrees_on_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame =
            FrameGraph::from_placements(5, &[vec![0], vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 4]])
                .unwrap();
        let reference = peel(&frame);
        assert_eq!(reference.decoded.len(), 5);
        for _ in 0..20 {
            assert_eq!(peel_shuffled(&frame, &mut rng).decoded, reference.decoded);
        }
    }

    #[test]
    fn histogram_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frame = build_frame(&[3], 3, &mut rng).unwrap();
        let h = slot_histogram(&frame);
        assert_eq!(h.psi(1), 1.0);
        assert_eq!(h.psi(0), 0.0);

        let frame = FrameGraph::from_placements(2, &[vec![0], vec![0]]).unwrap();
        let h = slot_histogram(&frame);
        assert_eq!(h.probs, vec![0.5, 0.0, 0.5]);
        assert_eq!(h.total_slots, 2);
    }

    #[test]
    fn analytic_examples() {
        let h = analytic_slot_dist(0.1, 1.0, 10, 1).unwrap();
        assert!((h.psi(0) - 0.9).abs() < 1e-12);
        assert!((h.psi(1) - 0.1).abs() < 1e-12);

        for &(g, mean, m, l) in &[(0.5, 3.6, 100, 50), (1.0, 8.0, 300, 300), (0.0, 2.0, 10, 0)] {
            let h = analytic_slot_dist(g, mean, m, l).unwrap();
            let sum: f64 = h.probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        let full = analytic_slot_dist(0.5, 4.0, 4, 2).unwrap();
        assert_eq!(full.probs, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn analytic_errors() {
        assert!(matches!(
            analytic_slot_dist(0.5, 3.6, 100, 40),
            Err(FrameError::InconsistentLoad { .. })
        ));
        assert!(analytic_slot_dist(0.5, 0.0, 100, 50).is_err());
        assert!(analytic_slot_dist(0.5, 101.0, 100, 50).is_err());
    }

    #[test]
    fn total_variation_basics() {
        let a = SlotDegreeHistogram { probs: vec![0.5, 0.5], total_slots: 2 };
        let b = SlotDegreeHistogram { probs: vec![0.5, 0.0, 0.5], total_slots: 2 };
        assert_eq!(a.total_variation(&a), 0.0);
        assert!((a.total_variation(&b) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dump_format() {
        let frame = FrameGraph::from_placements(3, &[vec![0], vec![1, 2]]).unwrap();
        let result = peel(&frame);
        assert_eq!(frame.dump(Some(&result)), "0: 0\n1: 1,2\ndecoded: 0,1\n");
    }
}
