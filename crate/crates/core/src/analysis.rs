//! Bandwidth and single-pass passability.
//!
//! The analytic side iterates the independent-uniform-traffic recurrence
//! `p' = 1 - (1 - p/2)^2` across the stages. The simulated side resolves
//! each trial once per crosstalk mode, nesting the modes so that a stricter
//! budget only ever removes messages from a looser budget's survivors.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::routing::{trace_unchecked, Message, Path, PermutationMap};
use crate::scheduler::{schedule, ScheduleConfig};
use crate::topology::{NetworkSpec, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthCurve {
    pub load: f64,
    /// Output activity probability after each stage, p_1..p_n.
    pub per_stage: Vec<f64>,
    pub size: usize,
}

impl BandwidthCurve {
    /// P(n), the last-stage output probability.
    pub fn final_probability(&self) -> f64 {
        self.per_stage.last().copied().unwrap_or(self.load)
    }

    pub fn bandwidth(&self) -> f64 {
        self.final_probability() * self.size as f64
    }
}

pub fn analytic_bandwidth(stages: u32, load: f64) -> Result<BandwidthCurve> {
    check_load(load)?;
    if stages == 0 || stages >= usize::BITS {
        return Err(Error::OutOfRange {
            what: "stages",
            value: stages as usize,
            lo: 1,
            hi: usize::BITS as usize,
        });
    }
    let per_stage = (0..stages)
        .scan(load, |p, _| {
            let half = 1.0 - *p / 2.0;
            *p = 1.0 - half * half;
            Some(*p)
        })
        .collect();
    Ok(BandwidthCurve {
        load,
        per_stage,
        size: 1 << stages,
    })
}

fn check_load(load: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&load) {
        return Err(Error::LoadOutOfRange(load));
    }
    Ok(())
}

/// Crosstalk tolerance applied when resolving a single pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Only link conflicts drop messages.
    Allow,
    /// At most k shared-switch stages per message.
    Budget(u32),
    /// Crosstalk-free; same as `Budget(0)`.
    Free,
}

impl Mode {
    /// Stage budget, or `None` for link-only resolution.
    pub fn budget(self) -> Option<u32> {
        match self {
            Mode::Allow => None,
            Mode::Budget(k) => Some(k),
            Mode::Free => Some(0),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Allow => f.write_str("allow"),
            Mode::Budget(k) => write!(f, "budget={k}"),
            Mode::Free => f.write_str("free"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "allow" => Ok(Mode::Allow),
            "free" => Ok(Mode::Free),
            _ => s
                .strip_prefix("budget=")
                .and_then(|k| k.parse().ok())
                .map(Mode::Budget)
                .ok_or_else(|| Error::Unknown {
                    kind: "crosstalk mode",
                    name: s.to_string(),
                }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DropPolicy {
    #[default]
    LowestSourceWins,
    RandomUniform,
}

impl DropPolicy {
    /// Index into `contenders` (sorted by source) of the message to keep.
    fn keep<R: Rng + ?Sized>(self, contenders: &[usize], rng: &mut R) -> usize {
        match self {
            DropPolicy::LowestSourceWins => 0,
            DropPolicy::RandomUniform => rng.gen_range(0..contenders.len()),
        }
    }

    /// Index into `candidates` (sorted by source) of the message to drop.
    fn drop<R: Rng + ?Sized>(self, candidates: &[usize], rng: &mut R) -> usize {
        match self {
            DropPolicy::LowestSourceWins => candidates.len() - 1,
            DropPolicy::RandomUniform => rng.gen_range(0..candidates.len()),
        }
    }
}

/// Survivors of one resolved pass, per requested mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Survivors {
    /// Request indices, ascending by source, in the caller's mode order.
    pub by_mode: Vec<(Mode, Vec<usize>)>,
}

impl Survivors {
    pub fn get(&self, mode: Mode) -> Option<&[usize]> {
        self.by_mode
            .iter()
            .find(|(m, _)| *m == mode)
            .map(|(_, s)| s.as_slice())
    }
}

/// Resolves `requests` through one pass for every mode in `modes`.
///
/// Link conflicts are settled stage by stage first; the budgeted modes then
/// run from loosest to strictest, each starting from the previous survivors.
pub fn resolve_single_pass<R: Rng + ?Sized>(
    net: &NetworkSpec,
    requests: &[Message],
    modes: &[Mode],
    policy: DropPolicy,
    rng: &mut R,
) -> Result<Survivors> {
    let mut seen = vec![false; net.size()];
    for m in requests {
        net.check_line(m.source, "source")?;
        net.check_line(m.destination, "destination")?;
        if std::mem::replace(&mut seen[m.source], true) {
            return Err(Error::SameSource(m.source));
        }
    }
    let paths: Vec<Path> = requests.iter().map(|&m| trace_unchecked(net, m)).collect();
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by_key(|&i| requests[i].source);

    let allowed = resolve_links(net, &paths, order, policy, rng);

    let mut budgets: Vec<u32> = modes.iter().filter_map(|m| m.budget()).collect();
    budgets.sort_unstable_by(|a, b| b.cmp(a));
    budgets.dedup();
    let mut by_budget = HashMap::new();
    let mut current = allowed.clone();
    for k in budgets {
        current = resolve_budget(net, &paths, current, k, policy, rng);
        by_budget.insert(k, current.clone());
    }

    let by_mode = modes
        .iter()
        .map(|&mode| {
            let set = match mode.budget() {
                None => allowed.clone(),
                Some(k) => by_budget[&k].clone(),
            };
            (mode, set)
        })
        .collect();
    Ok(Survivors { by_mode })
}

fn resolve_links<R: Rng + ?Sized>(
    net: &NetworkSpec,
    paths: &[Path],
    mut alive: Vec<usize>,
    policy: DropPolicy,
    rng: &mut R,
) -> Vec<usize> {
    for s in 0..net.stages() as usize {
        let mut lines: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &alive {
            let hop = &paths[i].hops[s];
            lines
                .entry((hop.switch << 1) | hop.out_port as usize)
                .or_default()
                .push(i);
        }
        let mut dropped = Vec::new();
        for contenders in lines.values().filter(|c| c.len() > 1) {
            let keep = policy.keep(contenders, rng);
            dropped.extend(
                contenders
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != keep)
                    .map(|(_, &i)| i),
            );
        }
        alive.retain(|i| !dropped.contains(i));
    }
    alive
}

/// Shared-switch stage counts over stages `0..=last` for `alive`.
fn shared_counts(paths: &[Path], alive: &[usize], last: usize) -> Vec<u32> {
    let mut counts = vec![0u32; alive.len()];
    let mut occupancy: HashMap<usize, u32> = HashMap::new();
    for s in 0..=last {
        occupancy.clear();
        for &i in alive {
            *occupancy.entry(paths[i].hops[s].switch).or_default() += 1;
        }
        for (c, &i) in counts.iter_mut().zip(alive) {
            if occupancy[&paths[i].hops[s].switch] > 1 {
                *c += 1;
            }
        }
    }
    counts
}

fn resolve_budget<R: Rng + ?Sized>(
    net: &NetworkSpec,
    paths: &[Path],
    mut alive: Vec<usize>,
    budget: u32,
    policy: DropPolicy,
    rng: &mut R,
) -> Vec<usize> {
    for last in 0..net.stages() as usize {
        loop {
            let counts = shared_counts(paths, &alive, last);
            let worst = counts.iter().copied().max().unwrap_or(0);
            if worst <= budget {
                break;
            }
            let candidates: Vec<usize> = (0..alive.len()).filter(|&j| counts[j] == worst).collect();
            let victim = candidates[policy.drop(&candidates, rng)];
            alive.remove(victim);
        }
    }
    alive
}

/// Fraction of `perm`'s messages that mature in one pass under `mode`.
pub fn passability(
    net: &NetworkSpec,
    perm: &PermutationMap,
    mode: Mode,
    policy: DropPolicy,
    seed: u64,
) -> Result<f64> {
    if perm.is_empty() {
        return Ok(1.0);
    }
    let mut rng = trial_rng(seed, 0);
    let survivors = resolve_single_pass(net, perm.messages(), &[mode], policy, &mut rng)?;
    Ok(survivors.by_mode[0].1.len() as f64 / perm.len() as f64)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial`'s substream: `splitmix64(seed ^ splitmix64(trial))`.
pub fn substream_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial))
}

/// ChaCha8 generator for trial `trial`, seeded via [`substream_seed`].
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(seed, trial))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DestinationModel {
    /// Independent uniform destinations; several sources may pick one output.
    Uniform,
    /// A fresh uniform random full permutation each trial.
    RandomPermutation,
    /// The same map every trial; unlisted sources stay idle.
    Fixed(PermutationMap),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficModel {
    pub load: f64,
    pub destinations: DestinationModel,
}

impl TrafficModel {
    pub fn new(load: f64, destinations: DestinationModel) -> Result<Self> {
        check_load(load)?;
        Ok(TrafficModel { load, destinations })
    }

    /// Draws one trial's requests. Destinations are drawn for every source
    /// first, then activity, in source order.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<Message> {
        let targets: Vec<Option<usize>> = match &self.destinations {
            DestinationModel::Uniform => (0..size).map(|_| Some(rng.gen_range(0..size))).collect(),
            DestinationModel::RandomPermutation => {
                let mut d: Vec<usize> = (0..size).collect();
                d.shuffle(rng);
                d.into_iter().map(Some).collect()
            }
            DestinationModel::Fixed(perm) => {
                let mut t = vec![None; size];
                for m in perm.messages() {
                    t[m.source] = Some(m.destination);
                }
                t
            }
        };
        targets
            .into_iter()
            .enumerate()
            .filter_map(|(s, d)| {
                let active = rng.gen_bool(self.load);
                d.filter(|_| active).map(|d| Message::new(s, d))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub modes: Vec<Mode>,
    pub trials: u64,
    pub seed: u64,
    pub policy: DropPolicy,
    pub parallel: bool,
    /// When set, each trial's requests are also scheduled into passes.
    pub schedule: Option<ScheduleConfig>,
}

impl SimConfig {
    pub fn new(modes: Vec<Mode>, trials: u64, seed: u64) -> Self {
        SimConfig {
            modes,
            trials,
            seed,
            policy: DropPolicy::default(),
            parallel: true,
            schedule: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    pub requests: Vec<Message>,
    pub survivors: Survivors,
    pub passes: Option<usize>,
}

pub fn run_trial(
    net: &NetworkSpec,
    traffic: &TrafficModel,
    config: &SimConfig,
    trial: u64,
) -> Result<TrialOutcome> {
    let mut rng = trial_rng(config.seed, trial);
    let requests = traffic.sample(net.size(), &mut rng);
    let survivors = resolve_single_pass(net, &requests, &config.modes, config.policy, &mut rng)?;
    let passes = match (&config.schedule, &traffic.destinations) {
        (Some(sc), DestinationModel::RandomPermutation | DestinationModel::Fixed(_)) => {
            let perm = PermutationMap::new(net.size(), requests.clone())?;
            Some(schedule(net, &perm, sc)?.pass_count())
        }
        _ => None,
    };
    Ok(TrialOutcome {
        requests,
        survivors,
        passes,
    })
}

fn round6<S: Serializer>(x: &f64, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    serializer.serialize_f64(round_to_6(*x))
}

fn round_to_6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Fixed-point text with at most six decimals and no trailing zeros.
pub fn format_float(x: f64) -> String {
    let s = format!("{:.6}", round_to_6(x));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// One mode's aggregate; serializes with the result-row field order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeResult {
    pub size: usize,
    pub topology: Topology,
    #[serde(serialize_with = "round6")]
    pub load: f64,
    pub mode: String,
    pub trials: u64,
    pub seed: u64,
    #[serde(serialize_with = "round6")]
    pub mean_bw: f64,
    #[serde(serialize_with = "round6")]
    pub stderr: f64,
    #[serde(serialize_with = "round6")]
    pub passability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub size: usize,
    pub topology: Topology,
    #[serde(serialize_with = "round6")]
    pub load: f64,
    pub trials: u64,
    pub seed: u64,
    pub results: Vec<ModeResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass_histogram: Option<BTreeMap<usize, u64>>,
}

impl SimReport {
    pub fn result(&self, mode: Mode) -> Option<&ModeResult> {
        let label = mode.to_string();
        self.results.iter().find(|r| r.mode == label)
    }
}

pub fn monte_carlo(net: &NetworkSpec, traffic: &TrafficModel, config: &SimConfig) -> Result<SimReport> {
    if config.trials == 0 {
        return Err(Error::ZeroTrials);
    }
    check_load(traffic.load)?;
    let outcomes: Vec<TrialOutcome> = if config.parallel {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(net, traffic, config, t))
            .collect::<Result<_>>()?
    } else {
        (0..config.trials)
            .map(|t| run_trial(net, traffic, config, t))
            .collect::<Result<_>>()?
    };

    let total_requests: usize = outcomes.iter().map(|o| o.requests.len()).sum();
    let results = config
        .modes
        .iter()
        .enumerate()
        .map(|(slot, &mode)| {
            let matured: Vec<f64> = outcomes
                .iter()
                .map(|o| o.survivors.by_mode[slot].1.len() as f64)
                .collect();
            let (mean, stderr) = mean_and_stderr(&matured);
            let passability = if total_requests == 0 {
                1.0
            } else {
                matured.iter().sum::<f64>() / total_requests as f64
            };
            ModeResult {
                size: net.size(),
                topology: net.topology(),
                load: traffic.load,
                mode: mode.to_string(),
                trials: config.trials,
                seed: config.seed,
                mean_bw: mean,
                stderr,
                passability,
            }
        })
        .collect();

    let pass_histogram = config.schedule.and_then(|_| {
        let mut hist = BTreeMap::new();
        for o in &outcomes {
            *hist.entry(o.passes?).or_insert(0u64) += 1;
        }
        Some(hist)
    });

    Ok(SimReport {
        size: net.size(),
        topology: net.topology(),
        load: traffic.load,
        trials: config.trials,
        seed: config.seed,
        results,
        pass_histogram,
    })
}

/// Sample mean and standard error of the mean (zero for a single sample).
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::example_permutation;

    fn omega(size: usize) -> NetworkSpec {
        NetworkSpec::new(size, Topology::Omega).unwrap()
    }

    fn resolve(net: &NetworkSpec, perm: &PermutationMap, modes: &[Mode]) -> Survivors {
        let mut rng = trial_rng(0, 0);
        resolve_single_pass(net, perm.messages(), modes, DropPolicy::LowestSourceWins, &mut rng).unwrap()
    }

    #[test]
    fn analytic_small_cases() {
        let c = analytic_bandwidth(2, 1.0).unwrap();
        assert_eq!(c.per_stage, vec![0.75, 0.609375]);
        assert_eq!(c.bandwidth(), 2.4375);
        assert!((analytic_bandwidth(3, 1.0).unwrap().bandwidth() - 4.1323).abs() < 1e-3);
        assert_eq!(analytic_bandwidth(5, 0.0).unwrap().bandwidth(), 0.0);
    }

    #[test]
    fn analytic_rejects_bad_load() {
        assert!(matches!(analytic_bandwidth(3, 1.5), Err(Error::LoadOutOfRange(_))));
        assert!(analytic_bandwidth(3, -0.1).is_err());
        assert!(analytic_bandwidth(0, 0.5).is_err());
    }

    #[test]
    fn analytic_monotone() {
        for load in [0.1, 0.5, 1.0] {
            let mut last_bw = 0.0;
            for n in 2..=8 {
                let c = analytic_bandwidth(n, load).unwrap();
                assert!(c.per_stage.windows(2).all(|w| w[1] <= w[0]));
                assert!(c.bandwidth() > last_bw);
                last_bw = c.bandwidth();
            }
        }
    }

    #[test]
    fn example_resolution() {
        let net = omega(8);
        let perm = example_permutation();
        let s = resolve(&net, &perm, &[Mode::Allow, Mode::Free]);
        assert_eq!(s.get(Mode::Allow).unwrap(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(s.get(Mode::Free).unwrap(), &[0, 1]);

        // With an intermediate budget the strict mode starts from its survivors.
        let s = resolve(&net, &perm, &[Mode::Allow, Mode::Budget(1), Mode::Free]);
        assert_eq!(s.get(Mode::Budget(1)).unwrap(), &[2, 3, 4, 5]);
        let free = s.get(Mode::Free).unwrap();
        assert!(free.iter().all(|i| [2, 3, 4, 5].contains(i)));
    }

    #[test]
    fn link_conflicts_drop_in_allow_mode() {
        // 0->1 and 2->0 collide on switch 0 out-port 0 at stage 1, and
        // 1->2 and 3->3 collide on switch 1 out-port 1.
        let net = omega(4);
        let perm = PermutationMap::from_destinations(&[1, 2, 0, 3]).unwrap();
        let s = resolve(&net, &perm, &[Mode::Allow]);
        assert_eq!(s.get(Mode::Allow).unwrap(), &[0, 1]);
    }

    #[test]
    fn passability_examples() {
        let net = omega(8);
        let perm = example_permutation();
        let p = |mode| passability(&net, &perm, mode, DropPolicy::LowestSourceWins, 0).unwrap();
        assert_eq!(p(Mode::Allow), 1.0);
        assert_eq!(p(Mode::Free), 0.25);
        let id = PermutationMap::identity(4);
        assert_eq!(passability(&omega(4), &id, Mode::Allow, DropPolicy::LowestSourceWins, 0).unwrap(), 1.0);
    }

    #[test]
    fn duplicate_sources_rejected() {
        let net = omega(4);
        let mut rng = trial_rng(1, 1);
        let reqs = [Message::new(1, 0), Message::new(1, 2)];
        assert_eq!(
            resolve_single_pass(&net, &reqs, &[Mode::Allow], DropPolicy::LowestSourceWins, &mut rng),
            Err(Error::SameSource(1))
        );
    }

    #[test]
    fn zero_load_and_zero_trials() {
        let net = omega(4);
        let traffic = TrafficModel::new(0.0, DestinationModel::Uniform).unwrap();
        let config = SimConfig::new(vec![Mode::Allow, Mode::Free], 100, 9);
        let report = monte_carlo(&net, &traffic, &config).unwrap();
        assert!(report.results.iter().all(|r| r.mean_bw == 0.0 && r.stderr == 0.0));
        let config = SimConfig::new(vec![Mode::Allow], 0, 9);
        assert_eq!(monte_carlo(&net, &traffic, &config), Err(Error::ZeroTrials));
        assert!(TrafficModel::new(1.1, DestinationModel::Uniform).is_err());
    }

    #[test]
    fn mode_labels_round_trip() {
        for mode in [Mode::Allow, Mode::Free, Mode::Budget(3)] {
            assert_eq!(mode.to_string().parse::<Mode>().unwrap(), mode);
        }
        assert!("budget=x".parse::<Mode>().is_err());
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(2.4375), "2.4375");
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(-1e-9), "0");
        assert_eq!(format_float(4.13232421875), "4.132324");
        assert_eq!(format_float(22.0), "22");
    }

    #[test]
    fn substreams_differ_per_trial() {
        assert_ne!(substream_seed(7, 0), substream_seed(7, 1));
        assert_ne!(substream_seed(7, 0), substream_seed(8, 0));
        assert_eq!(substream_seed(7, 3), substream_seed(7, 3));
    }
}
