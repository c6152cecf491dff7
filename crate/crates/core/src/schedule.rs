//! Schedules and monotone schedule sets.

use std::collections::BTreeSet;
use std::fmt;

use crate::network::NetError;

/// Largest schedule set we are willing to enumerate.
pub const MAX_SCHEDULES: usize = 1 << 16;

/// Largest number of queues a schedule bitmask can address.
pub const MAX_QUEUES: usize = 64;

/// A set of simultaneously served queues, stored as a bitmask over queue
/// indices (bit `e` set iff queue `e` transmits).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Schedule(pub u64);

impl Schedule {
    pub const EMPTY: Schedule = Schedule(0);

    pub fn from_queues<I: IntoIterator<Item = usize>>(queues: I) -> Self {
        Schedule(queues.into_iter().fold(0u64, |m, e| m | (1u64 << e)))
    }

    /// Builds a schedule from a 0/1 vector; `None` if an entry is not 0 or 1
    /// or the vector is longer than [`MAX_QUEUES`].
    pub fn from_indicator(v: &[u8]) -> Option<Self> {
        if v.len() > MAX_QUEUES {
            return None;
        }
        let mut mask = 0u64;
        for (e, &b) in v.iter().enumerate() {
            match b {
                0 => {}
                1 => mask |= 1 << e,
                _ => return None,
            }
        }
        Some(Schedule(mask))
    }

    #[inline]
    pub fn serves(self, e: usize) -> bool {
        self.0 >> e & 1 == 1
    }

    #[inline]
    pub fn is_subset_of(self, other: Schedule) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn queues(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let e = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(e)
            }
        })
    }

    pub fn indicator(self, num_queues: usize) -> Vec<u8> {
        (0..num_queues).map(|e| self.serves(e) as u8).collect()
    }

    /// Sort key realising lexicographic order of the indicator vector, with
    /// queue 0 as the most significant position.
    fn lex_key(self, num_queues: usize) -> u64 {
        if num_queues == 0 {
            0
        } else {
            self.0.reverse_bits() >> (64 - num_queues)
        }
    }
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.queues()).finish()
    }
}

/// A monotone family of schedules in canonical (lexicographic) order.
///
/// The zero schedule is always element 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleSet {
    num_queues: usize,
    elements: Vec<Schedule>,
    maximal: Vec<usize>,
}

impl ScheduleSet {
    pub fn num_queues(&self) -> usize {
        self.num_queues
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Schedule] {
        &self.elements
    }

    pub fn get(&self, idx: usize) -> Schedule {
        self.elements[idx]
    }

    /// Indices of the inclusion-maximal schedules.
    pub fn maximal(&self) -> &[usize] {
        &self.maximal
    }

    pub fn index_of(&self, s: Schedule) -> Option<usize> {
        let key = s.lex_key(self.num_queues);
        self.elements
            .binary_search_by_key(&key, |x| x.lex_key(self.num_queues))
            .ok()
    }

    pub fn contains(&self, s: Schedule) -> bool {
        self.index_of(s).is_some()
    }

    /// Union of all schedules.
    pub fn coverage(&self) -> Schedule {
        Schedule(self.elements.iter().fold(0, |m, s| m | s.0))
    }

    /// The 0/1 matrix whose columns are the schedules (queues × schedules).
    pub fn matrix(&self) -> Vec<Vec<u8>> {
        (0..self.num_queues)
            .map(|e| self.elements.iter().map(|s| s.serves(e) as u8).collect())
            .collect()
    }
}

/// Smallest monotone set containing `generators` and the zero schedule.
///
/// An empty generator list is rejected: it cannot serve any queue.
pub fn monotone_closure(num_queues: usize, generators: &[Schedule]) -> Result<ScheduleSet, NetError> {
    if generators.is_empty() {
        return Err(NetError::MalformedConfig("schedule generator list is empty".into()));
    }
    if num_queues > MAX_QUEUES {
        return Err(NetError::MalformedConfig(format!(
            "{num_queues} queues exceed the supported maximum of {MAX_QUEUES}"
        )));
    }
    let full = if num_queues == 64 { u64::MAX } else { (1u64 << num_queues) - 1 };
    let mut bound: u128 = 1;
    for g in generators {
        if g.0 & !full != 0 {
            return Err(NetError::MalformedConfig(format!(
                "schedule generator {g:?} references a queue outside 0..{num_queues}"
            )));
        }
        bound += 1u128 << g.len();
    }

    let mut set = BTreeSet::new();
    set.insert(0u64);
    for g in generators {
        // Enumerate every submask of the generator.
        let mut sub = g.0;
        loop {
            set.insert(sub);
            if set.len() > MAX_SCHEDULES {
                return Err(NetError::TooManySchedules {
                    cap: MAX_SCHEDULES,
                    lower_bound: bound.min(usize::MAX as u128) as usize,
                });
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & g.0;
        }
    }

    let mut elements: Vec<Schedule> = set.into_iter().map(Schedule).collect();
    elements.sort_by_key(|s| s.lex_key(num_queues));

    let maximal = (0..elements.len())
        .filter(|&i| {
            let s = elements[i];
            !elements.iter().any(|&t| t != s && s.is_subset_of(t))
        })
        .collect();

    Ok(ScheduleSet { num_queues, elements, maximal })
}
