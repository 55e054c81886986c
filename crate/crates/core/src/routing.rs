//! Destination-tag routing: explicit per-stage traces, the closed-form
//! window method for omega networks, and the permutation text format.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::topology::{NetworkSpec, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Message {
    pub source: usize,
    pub destination: usize,
}

impl Message {
    pub fn new(source: usize, destination: usize) -> Self {
        Message {
            source,
            destination,
        }
    }

    /// Routing bit (switch out-port) taken at `stage`: d_{n-stage}.
    pub fn routing_bit(&self, stages: u32, stage: u32) -> u8 {
        ((self.destination >> (stages - stage)) & 1) as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub stage: u32,
    pub switch: usize,
    pub in_port: u8,
    pub out_port: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub hops: Vec<Hop>,
    /// Output line after the last stage.
    pub delivered_to: usize,
}

impl Path {
    pub fn switches(&self) -> impl Iterator<Item = usize> + '_ {
        self.hops.iter().map(|h| h.switch)
    }

    /// Out-ports read MSB-first; equals the destination for a correct trace.
    pub fn tag(&self) -> usize {
        self.hops
            .iter()
            .fold(0, |acc, h| (acc << 1) | h.out_port as usize)
    }
}

fn check_message(net: &NetworkSpec, msg: Message) -> Result<()> {
    net.check_line(msg.source, "source")?;
    net.check_line(msg.destination, "destination")
}

/// Follows `msg` line by line through the network.
pub fn trace_path(net: &NetworkSpec, msg: Message) -> Result<Path> {
    check_message(net, msg)?;
    Ok(trace_unchecked(net, msg))
}

pub(crate) fn trace_unchecked(net: &NetworkSpec, msg: Message) -> Path {
    let n = net.stages();
    let mut line = msg.source;
    let mut hops = Vec::with_capacity(n as usize);
    for stage in 1..=n {
        line = net.connect_unchecked(stage, line);
        let out_port = msg.routing_bit(n, stage);
        hops.push(Hop {
            stage,
            switch: line >> 1,
            in_port: (line & 1) as u8,
            out_port,
        });
        line = (line & !1) | out_port as usize;
    }
    Path {
        hops,
        delivered_to: line,
    }
}

/// Switch occupied at `stage` by the window method (omega only).
pub fn switch_at_stage(net: &NetworkSpec, msg: Message, stage: u32) -> Result<usize> {
    if net.topology() != Topology::Omega {
        return Err(Error::UnsupportedTopology(net.topology().to_string()));
    }
    check_message(net, msg)?;
    net.check_stage(stage)?;
    Ok(window_unchecked(net, msg, stage))
}

pub(crate) fn window_unchecked(net: &NetworkSpec, msg: Message, stage: u32) -> usize {
    net.topology()
        .wiring()
        .window_switch(net.stages(), msg.source, msg.destination, stage)
        .expect("wiring has a closed form")
}

/// Ordered request list over an N-line network. File order is the
/// canonical message order: message index `i` is `pairs[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationMap {
    pairs: Vec<Message>,
    size: usize,
}

impl PermutationMap {
    pub fn new(size: usize, pairs: Vec<Message>) -> Result<Self> {
        let mut sources = HashSet::new();
        let mut destinations = HashSet::new();
        for (i, m) in pairs.iter().enumerate() {
            for (what, value) in [("source", m.source), ("destination", m.destination)] {
                if value >= size {
                    return Err(Error::OutOfRange {
                        what,
                        value,
                        lo: 0,
                        hi: size,
                    });
                }
            }
            if !sources.insert(m.source) {
                return Err(Error::DuplicateSource {
                    source_line: m.source,
                    line: i + 1,
                });
            }
            if !destinations.insert(m.destination) {
                return Err(Error::DuplicateDestination {
                    destination: m.destination,
                    line: i + 1,
                });
            }
        }
        Ok(PermutationMap { pairs, size })
    }

    /// Builds the full map `i -> destinations[i]`.
    pub fn from_destinations(destinations: &[usize]) -> Result<Self> {
        let pairs = destinations
            .iter()
            .enumerate()
            .map(|(s, &d)| Message::new(s, d))
            .collect();
        PermutationMap::new(destinations.len(), pairs)
    }

    pub fn identity(size: usize) -> Self {
        PermutationMap {
            pairs: (0..size).map(|i| Message::new(i, i)).collect(),
            size,
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// A full map covers every input; anything shorter is partial.
    pub fn is_partial(&self) -> bool {
        self.pairs.len() != self.size
    }

    /// Serializes to the text format read by [`parse_permutation`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.pairs {
            let _ = writeln!(out, "{} {}", m.source, m.destination);
        }
        out
    }
}

/// Parses `SOURCE DESTINATION` lines; blank lines and `#` comments are skipped.
pub fn parse_permutation(text: &str, net: &NetworkSpec) -> Result<PermutationMap> {
    let mut pairs = Vec::new();
    let mut sources = HashSet::new();
    let mut destinations = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected `SOURCE DESTINATION`, got `{content}`"),
            });
        }
        let parse = |field: &str| {
            field.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("`{field}` is not a non-negative decimal integer"),
            })
        };
        let msg = Message::new(parse(fields[0])?, parse(fields[1])?);
        check_message(net, msg)?;
        if !sources.insert(msg.source) {
            return Err(Error::DuplicateSource {
                source_line: msg.source,
                line,
            });
        }
        if !destinations.insert(msg.destination) {
            return Err(Error::DuplicateDestination {
                destination: msg.destination,
                line,
            });
        }
        pairs.push(msg);
    }
    Ok(PermutationMap {
        pairs,
        size: net.size(),
    })
}

/// The 8-input example permutation 0..7 -> 7 0 5 2 3 6 1 4.
pub fn example_permutation() -> PermutationMap {
    PermutationMap::from_destinations(&[7, 0, 5, 2, 3, 6, 1, 4]).expect("valid permutation")
}
