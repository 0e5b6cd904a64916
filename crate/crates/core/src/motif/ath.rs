use std::ops::Range;

use rayon::prelude::*;

use crate::graph::{series_events, Direction, Event, NodeId, Tain};

/// Window patterns. `B1` is all-in, `B2` all-out; `B3..B6` are mixed windows
/// keyed by the attribute bits `[amount, time]` = [0,0], [0,1], [1,0], [1,1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AthPattern {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
}

impl AthPattern {
    pub const ALL: [AthPattern; 6] = [
        AthPattern::B1,
        AthPattern::B2,
        AthPattern::B3,
        AthPattern::B4,
        AthPattern::B5,
        AthPattern::B6,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The mapped attribute vector of the pattern.
    pub fn bits(self) -> [u8; 2] {
        match self {
            AthPattern::B1 | AthPattern::B3 => [0, 0],
            AthPattern::B2 | AthPattern::B6 => [1, 1],
            AthPattern::B4 => [0, 1],
            AthPattern::B5 => [1, 0],
        }
    }

    fn mixed(bits: [u8; 2]) -> Self {
        match bits {
            [0, 0] => AthPattern::B3,
            [0, 1] => AthPattern::B4,
            [1, 0] => AthPattern::B5,
            _ => AthPattern::B6,
        }
    }
}

/// Tumbling windows over a time-ordered event list: each window opens at the
/// earliest uncovered event and takes every event within `delta` of it.
pub fn ath_windows(events: &[Event], delta: u64) -> Vec<Range<usize>> {
    let mut windows = Vec::new();
    let mut start = 0;
    while start < events.len() {
        let limit = events[start].t.saturating_add(delta);
        let end = start + events[start..].partition_point(|e| e.t <= limit);
        windows.push(start..end);
        start = end;
    }
    windows
}

/// Classifies a non-empty window. Mean comparisons are done by
/// cross-multiplication so equal means compare exactly.
pub fn classify_window(window: &[Event]) -> AthPattern {
    let (mut n_in, mut n_out) = (0u128, 0u128);
    let (mut v_in, mut v_out) = (0u128, 0u128);
    let (mut t_in, mut t_out) = (0u128, 0u128);
    for e in window {
        match e.direction {
            Direction::In => {
                n_in += 1;
                v_in += e.amount as u128;
                t_in += e.t as u128;
            }
            Direction::Out => {
                n_out += 1;
                v_out += e.amount as u128;
                t_out += e.t as u128;
            }
        }
    }
    match (n_in, n_out) {
        (_, 0) => AthPattern::B1,
        (0, _) => AthPattern::B2,
        _ => {
            // mean_in >= mean_out  <=>  sum_in * n_out >= sum_out * n_in
            let amount_bit = u8::from(v_in * n_out < v_out * n_in);
            let time_bit = u8::from(t_in * n_out <= t_out * n_in);
            AthPattern::mixed([amount_bit, time_bit])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AthCensus {
    pub delta: u64,
    /// Indexed by node id of the address book; removed addresses stay zero.
    pub counts: Vec<[u64; 6]>,
}

impl AthCensus {
    pub fn get(&self, node: NodeId) -> &[u64; 6] {
        &self.counts[node as usize]
    }

    pub fn totals(&self) -> [u64; 6] {
        let mut out = [0u64; 6];
        for c in &self.counts {
            for (o, v) in out.iter_mut().zip(c) {
                *o += v;
            }
        }
        out
    }
}

pub(crate) fn count_windows(events: &[Event], delta: u64) -> [u64; 6] {
    let mut counts = [0u64; 6];
    for w in ath_windows(events, delta) {
        counts[classify_window(&events[w]).index()] += 1;
    }
    counts
}

pub fn count_ath_motifs(tain: &Tain, delta: u64) -> AthCensus {
    let book = tain.book();
    let counts = (0..book.len() as NodeId)
        .into_par_iter()
        .map(|id| {
            if book.is_retained(id) {
                count_windows(&series_events(tain, id), delta)
            } else {
                [0; 6]
            }
        })
        .collect();
    AthCensus { delta, counts }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: u64, direction: Direction, amount: u64) -> Event {
        Event {
            t,
            direction,
            amount,
            tx: 0,
            co_input_count: 1,
            co_output_count: 1,
            rank: 0,
        }
    }

    #[test]
    fn tumbling_windows() {
        let events = [
            ev(0, Direction::In, 1),
            ev(100, Direction::In, 1),
            ev(20_000, Direction::Out, 1),
        ];
        assert_eq!(ath_windows(&events, 10_800), vec![0..2, 2..3]);
        assert_eq!(ath_windows(&events[..1], 10_800), vec![0..1]);
        assert!(ath_windows(&[], 10_800).is_empty());
    }

    #[test]
    fn windows_anchor_at_first_uncovered_event() {
        let events: Vec<Event> = [0, 5, 10, 15, 20]
            .iter()
            .map(|&t| ev(t, Direction::In, 1))
            .collect();
        assert_eq!(ath_windows(&events, 10), vec![0..3, 3..5]);
    }

    #[test]
    fn classification_examples() {
        use Direction::{In, Out};
        assert_eq!(classify_window(&[ev(0, In, 2), ev(1, Out, 1)]), AthPattern::B4);
        assert_eq!(classify_window(&[ev(0, Out, 3), ev(1, In, 1)]), AthPattern::B5);
        let all_in = classify_window(&[ev(0, In, 2), ev(1, In, 1)]);
        assert_eq!(all_in, AthPattern::B1);
        assert_eq!(all_in.bits(), [0, 0]);
        let all_out = classify_window(&[ev(0, Out, 2)]);
        assert_eq!(all_out, AthPattern::B2);
        assert_eq!(all_out.bits(), [1, 1]);
        // Equal means: amount bit 0, time bit 1.
        assert_eq!(classify_window(&[ev(5, In, 4), ev(5, Out, 4)]), AthPattern::B4);
        assert_eq!(classify_window(&[ev(9, In, 1), ev(2, Out, 4)]), AthPattern::B5);
        assert_eq!(classify_window(&[ev(9, In, 5), ev(2, Out, 4)]), AthPattern::B3);
        assert_eq!(classify_window(&[ev(0, In, 1), ev(3, Out, 4)]), AthPattern::B6);
    }

    #[test]
    fn intermediary_windows() {
        use Direction::{In, Out};
        let mut events = Vec::new();
        for k in 0..3u64 {
            let base = k * 100_000;
            events.push(ev(base, In, 7));
            events.push(ev(base + 600, Out, 7));
        }
        assert_eq!(count_windows(&events, 10_800), [0, 0, 0, 3, 0, 0]);
        let outs: Vec<Event> = (0..4).map(|k| ev(k * 50_000, Out, 3)).collect();
        assert_eq!(count_windows(&outs, 10_800), [0, 4, 0, 0, 0, 0]);
    }
}
