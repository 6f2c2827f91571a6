//! Drop-tail buffer with unslotted carrier-sense access, used by the flat strategies.

use std::collections::VecDeque;

use rand::Rng;

use super::{Frame, SimTime};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsmaParams {
    pub backoff_min: SimTime,
    pub backoff_max: SimTime,
    /// Retries after the first busy sense; one more busy sense drops the frame.
    pub max_retries: u32,
    /// Upper bound of the random wait before a frame's first channel check.
    pub initial_backoff_max: SimTime,
}

impl Default for CsmaParams {
    fn default() -> Self {
        CsmaParams {
            backoff_min: SimTime::from_micros(320),
            backoff_max: SimTime::from_micros(2560),
            max_retries: 4,
            initial_backoff_max: SimTime::from_micros(2560),
        }
    }
}

/// What the node does after a channel check.
#[derive(Debug, Clone, PartialEq)]
pub enum MacAction {
    Transmit(Frame),
    RetryAfter(SimTime),
    /// The head frame hit the retry cap and was dropped.
    Dropped(Frame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Contending { busy_senses: u32 },
    Transmitting,
}

#[derive(Debug, Clone)]
pub struct CsmaMac {
    buffer: VecDeque<Frame>,
    capacity: usize,
    phase: Phase,
    pub drops: u64,
}

impl CsmaMac {
    pub fn new(capacity: usize) -> Self {
        CsmaMac { buffer: VecDeque::new(), capacity, phase: Phase::Idle, drops: 0 }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_idle(&self) -> bool {
        self.phase == Phase::Idle
    }

    /// Appends the frame unless the buffer holds `capacity` frames already.
    pub fn enqueue(&mut self, frame: Frame) -> bool {
        if self.buffer.len() >= self.capacity {
            self.drops += 1;
            return false;
        }
        self.buffer.push_back(frame);
        true
    }

    /// Starts contention for the head frame if the MAC is idle and has work.
    /// Returns the delay before the first channel check.
    pub fn start_service<R: Rng + ?Sized>(&mut self, params: &CsmaParams, rng: &mut R) -> Option<SimTime> {
        if self.phase != Phase::Idle || self.buffer.is_empty() {
            return None;
        }
        self.phase = Phase::Contending { busy_senses: 0 };
        let max = params.initial_backoff_max.as_micros();
        Some(SimTime::from_micros(if max == 0 { 0 } else { rng.random_range(0..=max) }))
    }

    /// One clear-channel assessment for the head frame.
    pub fn attempt<R: Rng + ?Sized>(&mut self, busy: bool, params: &CsmaParams, rng: &mut R) -> MacAction {
        let Phase::Contending { busy_senses } = self.phase else {
            panic!("channel check outside contention");
        };
        if !busy {
            let frame = self.buffer.pop_front().expect("contending with an empty buffer");
            self.phase = Phase::Transmitting;
            return MacAction::Transmit(frame);
        }
        let busy_senses = busy_senses + 1;
        if busy_senses > params.max_retries {
            let frame = self.buffer.pop_front().expect("contending with an empty buffer");
            self.drops += 1;
            self.phase = Phase::Idle;
            return MacAction::Dropped(frame);
        }
        self.phase = Phase::Contending { busy_senses };
        let lo = params.backoff_min.as_micros();
        let hi = params.backoff_max.as_micros().max(lo);
        MacAction::RetryAfter(SimTime::from_micros(rng.random_range(lo..=hi)))
    }

    pub fn transmission_done(&mut self) {
        debug_assert_eq!(self.phase, Phase::Transmitting);
        self.phase = Phase::Idle;
    }
}
