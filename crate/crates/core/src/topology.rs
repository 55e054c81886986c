//! Network geometry: sizes, stage counts and the inter-stage wiring of
//! 2x2 switching elements.
//!
//! Stages are numbered from 1, lines/switches/ports from 0. A line's switch
//! is `line >> 1` and its port is `line & 1`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Omega,
    Baseline,
}

impl Topology {
    pub const ALL: [Topology; 2] = [Topology::Omega, Topology::Baseline];

    pub fn name(self) -> &'static str {
        self.wiring().name()
    }

    pub fn wiring(self) -> &'static dyn Wiring {
        match self {
            Topology::Omega => &OmegaWiring,
            Topology::Baseline => &BaselineWiring,
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topology::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownTopology(s.to_string()))
    }
}

/// Inter-stage wiring of a banyan-class network.
pub trait Wiring: Send + Sync {
    fn name(&self) -> &'static str;

    /// Line entering stage `stage` (1-based) that pre-stage line `line`
    /// connects to, for a network with `stages` stages. Arguments are
    /// assumed valid.
    fn connect(&self, stages: u32, stage: u32, line: usize) -> usize;

    /// Closed-form switch occupied by `source -> destination` at `stage`,
    /// when the wiring admits one.
    fn window_switch(
        &self,
        _stages: u32,
        _source: usize,
        _destination: usize,
        _stage: u32,
    ) -> Option<usize> {
        None
    }
}

/// Perfect shuffle (left rotation of the n-bit address) before every stage.
pub struct OmegaWiring;

impl Wiring for OmegaWiring {
    fn name(&self) -> &'static str {
        "omega"
    }

    fn connect(&self, stages: u32, _stage: u32, line: usize) -> usize {
        rotate_left(line, stages)
    }

    fn window_switch(
        &self,
        stages: u32,
        source: usize,
        destination: usize,
        stage: u32,
    ) -> Option<usize> {
        // W = s_{n-2}..s_0 d_{n-1}..d_1, 2n-2 bits; the switch at stage i is
        // the (n-1)-bit window starting i-1 bits from the top of W.
        let width = stages - 1;
        let low_mask = (1usize << width) - 1;
        let combined = ((source & low_mask) << width) | (destination >> 1);
        let shift = (2 * width) - (stage - 1) - width;
        Some((combined >> shift) & low_mask)
    }
}

/// No wiring ahead of stage 1; ahead of stage k >= 2 an inverse shuffle
/// (right rotation) inside contiguous blocks of 2^(n-k+2) lines.
pub struct BaselineWiring;

impl Wiring for BaselineWiring {
    fn name(&self) -> &'static str {
        "baseline"
    }

    fn connect(&self, stages: u32, stage: u32, line: usize) -> usize {
        if stage == 1 {
            return line;
        }
        let block_bits = stages + 2 - stage;
        let mask = (1usize << block_bits) - 1;
        (line & !mask) | rotate_right(line & mask, block_bits)
    }
}

fn rotate_left(value: usize, bits: u32) -> usize {
    let mask = (1usize << bits) - 1;
    ((value << 1) | (value >> (bits - 1))) & mask
}

fn rotate_right(value: usize, bits: u32) -> usize {
    let mask = (1usize << bits) - 1;
    ((value >> 1) | ((value & 1) << (bits - 1))) & mask
}

/// Immutable description of an N-input network of n = log2 N stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    size: usize,
    stages: u32,
    topology: Topology,
}

impl NetworkSpec {
    pub fn new(size: usize, topology: Topology) -> Result<Self> {
        if size < 4 || !size.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(size));
        }
        Ok(NetworkSpec {
            size,
            stages: size.trailing_zeros(),
            topology,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stages(&self) -> u32 {
        self.stages
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn switches_per_stage(&self) -> usize {
        self.size / 2
    }

    pub fn line(&self, value: usize) -> Result<LineAddress> {
        self.check_line(value, "line")?;
        Ok(LineAddress(value))
    }

    pub(crate) fn check_line(&self, value: usize, what: &'static str) -> Result<()> {
        if value >= self.size {
            return Err(Error::OutOfRange {
                what,
                value,
                lo: 0,
                hi: self.size,
            });
        }
        Ok(())
    }

    pub(crate) fn check_stage(&self, stage: u32) -> Result<()> {
        if stage == 0 || stage > self.stages {
            return Err(Error::OutOfRange {
                what: "stage",
                value: stage as usize,
                lo: 1,
                hi: self.stages as usize + 1,
            });
        }
        Ok(())
    }

    /// Line entering `stage` reached from pre-stage line `line`.
    pub fn interconnect(&self, stage: u32, line: LineAddress) -> Result<LineAddress> {
        self.check_stage(stage)?;
        self.check_line(line.0, "line")?;
        Ok(LineAddress(self.connect_unchecked(stage, line.0)))
    }

    pub(crate) fn connect_unchecked(&self, stage: u32, line: usize) -> usize {
        self.topology.wiring().connect(self.stages, stage, line)
    }
}

pub fn build_network(size: usize, topology: Topology) -> Result<NetworkSpec> {
    NetworkSpec::new(size, topology)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LineAddress(usize);

impl LineAddress {
    pub fn value(self) -> usize {
        self.0
    }

    pub fn switch(self) -> usize {
        self.0 >> 1
    }

    pub fn port(self) -> u8 {
        (self.0 & 1) as u8
    }

    pub fn from_parts(switch: usize, port: u8) -> Self {
        LineAddress((switch << 1) | (port as usize & 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn omega8() -> NetworkSpec {
        build_network(8, Topology::Omega).unwrap()
    }

    #[test]
    fn geometry() {
        let net = omega8();
        assert_eq!((net.size(), net.stages(), net.switches_per_stage()), (8, 3, 4));
        let net = build_network(4, Topology::Baseline).unwrap();
        assert_eq!((net.size(), net.stages(), net.switches_per_stage()), (4, 2, 2));
    }

    #[test]
    fn rejects_bad_sizes() {
        for size in [0, 1, 2, 3, 6, 12, 100] {
            assert_eq!(build_network(size, Topology::Omega), Err(Error::NotPowerOfTwo(size)));
        }
    }

    #[test]
    fn parses_topology_names() {
        assert_eq!("omega".parse::<Topology>().unwrap(), Topology::Omega);
        assert_eq!("Baseline".parse::<Topology>().unwrap(), Topology::Baseline);
        assert!(matches!("butterfly".parse::<Topology>(), Err(Error::UnknownTopology(_))));
    }

    #[test]
    fn omega_shuffle() {
        let net = omega8();
        let at = |stage, line| net.interconnect(stage, net.line(line).unwrap()).unwrap().value();
        assert_eq!(at(1, 4), 1);
        assert_eq!(at(2, 5), 3);
        for stage in 1..=3 {
            assert_eq!(at(stage, 0), 0);
        }
    }

    #[test]
    fn interconnect_range_checks() {
        let net = omega8();
        let line = net.line(3).unwrap();
        assert!(net.interconnect(0, line).is_err());
        assert!(net.interconnect(4, line).is_err());
        assert!(net.line(8).is_err());
    }

    #[test]
    fn wiring_is_a_bijection_every_stage() {
        for topology in Topology::ALL {
            for n in 2..=6 {
                let net = build_network(1 << n, topology).unwrap();
                for stage in 1..=net.stages() {
                    let mut seen = vec![false; net.size()];
                    for line in 0..net.size() {
                        let out = net.interconnect(stage, net.line(line).unwrap()).unwrap();
                        assert!(!seen[out.value()], "{topology} N={} stage {stage}", net.size());
                        seen[out.value()] = true;
                    }
                }
            }
        }
    }

    #[test]
    fn omega_rotation_order_is_n() {
        for n in 2..=6 {
            let net = build_network(1 << n, Topology::Omega).unwrap();
            for line in 0..net.size() {
                let mut cur = net.line(line).unwrap();
                for _ in 0..n {
                    cur = net.interconnect(1, cur).unwrap();
                }
                assert_eq!(cur.value(), line);
            }
        }
    }

    #[test]
    fn switch_port_round_trip() {
        for line in 0..64 {
            let addr = LineAddress(line);
            assert_eq!(LineAddress::from_parts(addr.switch(), addr.port()), addr);
        }
    }
}
