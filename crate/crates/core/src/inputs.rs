//! Input streams feeding `sample` statements.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lang::{Program, Word};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelSource {
    /// Repeats the listed values forever.
    Sequence(Vec<Word>),
    /// Uniform draws from `lo..=hi`.
    Random { seed: u64, lo: Word, hi: Word },
    /// Exactly these values, then exhaustion.
    Replay(Vec<Word>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputStreams {
    pub channels: BTreeMap<String, ChannelSource>,
}

impl InputStreams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, channel: &str, source: ChannelSource) -> Self {
        self.channels.insert(channel.to_string(), source);
        self
    }

    /// Seeded `0..=255` streams for every channel the program samples that has no source yet.
    pub fn fill_random(mut self, p: &Program, seed: u64) -> Self {
        for (i, ch) in p.channels.iter().enumerate() {
            self.channels.entry(ch.clone()).or_insert(ChannelSource::Random {
                seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64),
                lo: 0,
                hi: 255,
            });
        }
        self
    }

    /// Same streams with every random channel's seed mixed with `seed`.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut out = self.clone();
        for src in out.channels.values_mut() {
            if let ChannelSource::Random { seed: s, .. } = src {
                *s = s.rotate_left(17) ^ seed.wrapping_mul(0xD6E8_FEB8_6659_FD93);
            }
        }
        out
    }

    /// Streams that replay a recorded `(channel, value)` log.
    pub fn replay(log: &[(String, Word)]) -> Self {
        let mut channels: BTreeMap<String, Vec<Word>> = BTreeMap::new();
        for (ch, v) in log {
            channels.entry(ch.clone()).or_default().push(*v);
        }
        InputStreams {
            channels: channels
                .into_iter()
                .map(|(k, v)| (k, ChannelSource::Replay(v)))
                .collect(),
        }
    }

    pub(crate) fn open(&self, p: &Program) -> InputState {
        let channels = p
            .channels
            .iter()
            .map(|name| match self.channels.get(name) {
                Some(ChannelSource::Sequence(v)) => Cursor::Cycle(v.clone(), 0),
                Some(ChannelSource::Replay(v)) => Cursor::Once(v.clone(), 0),
                Some(ChannelSource::Random { seed, lo, hi }) => {
                    Cursor::Random(Box::new(ChaCha8Rng::seed_from_u64(*seed)), *lo, *hi)
                }
                None => Cursor::Once(Vec::new(), 0),
            })
            .collect();
        InputState { channels }
    }
}

#[derive(Debug)]
enum Cursor {
    Cycle(Vec<Word>, usize),
    Once(Vec<Word>, usize),
    Random(Box<ChaCha8Rng>, Word, Word),
}

#[derive(Debug)]
pub(crate) struct InputState {
    channels: Vec<Cursor>,
}

impl InputState {
    /// Next value on channel `ch`, or `None` once a finite stream is exhausted.
    pub fn next(&mut self, ch: usize) -> Option<Word> {
        match &mut self.channels[ch] {
            Cursor::Cycle(v, i) => {
                if v.is_empty() {
                    return None;
                }
                let x = v[*i % v.len()];
                *i += 1;
                Some(x)
            }
            Cursor::Once(v, i) => {
                let x = v.get(*i).copied();
                *i += 1;
                x
            }
            Cursor::Random(rng, lo, hi) => Some(rng.random_range(*lo..=*hi)),
        }
    }
}
