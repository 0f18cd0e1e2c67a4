//! Run configuration: defaults, TOML file loading, and the small
//! enums the CLI parses into.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Flexcast,
    Skeen,
    #[serde(alias = "hierarchical")]
    Hier,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Flexcast => "flexcast",
            ProtocolKind::Skeen => "skeen",
            ProtocolKind::Hier => "hier",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flexcast" => Ok(ProtocolKind::Flexcast),
            "skeen" => Ok(ProtocolKind::Skeen),
            "hier" | "hierarchical" => Ok(ProtocolKind::Hier),
            other => Err(format!(
                "unknown protocol '{}' (expected flexcast, skeen, or hierarchical)",
                other
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    /// Warehouse transaction mix with locality cascade.
    #[serde(alias = "full")]
    Tpcc,
    /// Only the multi-warehouse transactions of the mix.
    #[serde(alias = "global-only")]
    TpccGlobal,
    /// Uniform destination sets of size 1..=3.
    Uniform,
}

impl WorkloadKind {
    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Tpcc => "tpcc",
            WorkloadKind::TpccGlobal => "tpcc-global",
            WorkloadKind::Uniform => "uniform",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkloadKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tpcc" | "full" => Ok(WorkloadKind::Tpcc),
            "tpcc-global" | "global-only" => Ok(WorkloadKind::TpccGlobal),
            "uniform" => Ok(WorkloadKind::Uniform),
            other => Err(format!(
                "unknown workload '{}' (expected full, global-only, or uniform)",
                other
            )),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub protocol: ProtocolKind,
    /// Overlay preset (o1, o2, t1, t2, t3) or path to an overlay file.
    pub overlay: String,
    /// Latency matrix file; the built-in 12-region WAN when absent.
    pub matrix: Option<PathBuf>,
    /// Closed-loop clients per group.
    pub clients: u32,
    pub locality: f64,
    /// Probability a payment spans a second warehouse.
    pub payment_remote: f64,
    pub workload: WorkloadKind,
    /// Stop issuing after this much virtual time, in seconds.
    pub duration_s: Option<f64>,
    /// Stop issuing after this many client multicasts.
    pub max_msgs: Option<u64>,
    /// Client pause between completing one transaction and issuing the
    /// next, in milliseconds.
    pub think_ms: f64,
    pub seeds: Vec<u64>,
    /// Fraction of completed transactions trimmed from each end of the
    /// issue timeline for latency and throughput.
    pub trim: f64,
    /// Issue a history flush to all groups every this many multicasts;
    /// 0 disables flushing.
    pub flush_every: u64,
    /// Uniform latency jitter fraction; deterministic per seed.
    pub jitter: Option<f64>,
    pub client_link_ms: f64,
    /// Run the trace checkers after each run.
    pub verify: bool,
    /// CSV output path.
    pub out: Option<PathBuf>,
    /// Trace output path (suffixed with the seed when sweeping).
    pub trace_out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: ProtocolKind::Flexcast,
            overlay: "o1".to_string(),
            matrix: None,
            clients: 4,
            locality: 0.9,
            payment_remote: 0.15,
            workload: WorkloadKind::Tpcc,
            duration_s: None,
            max_msgs: Some(5000),
            think_ms: 0.0,
            seeds: vec![1],
            trim: 0.10,
            flush_every: 1000,
            jitter: None,
            client_link_ms: 1.0,
            verify: true,
            out: None,
            trace_out: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, String> {
        toml::from_str(text).map_err(|e| format!("bad config file: {}", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_sane() {
        let c = RunConfig::default();
        assert_eq!(c.protocol, ProtocolKind::Flexcast);
        assert_eq!(c.flush_every, 1000);
        assert!(c.verify);
        assert_eq!(c.seeds, vec![1]);
    }

    #[test]
    fn partial_toml_fills_in_defaults() {
        let c = RunConfig::from_toml(
            "protocol = \"skeen\"\nlocality = 0.5\nseeds = [3, 4]\n",
        )
        .unwrap();
        assert_eq!(c.protocol, ProtocolKind::Skeen);
        assert_eq!(c.locality, 0.5);
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.clients, 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("protcol = \"skeen\"\n").is_err());
    }

    #[test]
    fn enums_parse_and_print() {
        for p in ["flexcast", "skeen", "hier"] {
            assert_eq!(p.parse::<ProtocolKind>().unwrap().name(), p);
        }
        for w in ["tpcc", "tpcc-global", "uniform"] {
            assert_eq!(w.parse::<WorkloadKind>().unwrap().name(), w);
        }
        assert!("paxos".parse::<ProtocolKind>().is_err());
    }

    #[test]
    fn workload_kebab_case_in_toml() {
        let c = RunConfig::from_toml("workload = \"tpcc-global\"\n").unwrap();
        assert_eq!(c.workload, WorkloadKind::TpccGlobal);
    }
}
