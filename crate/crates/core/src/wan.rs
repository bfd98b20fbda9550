//! Data center sites, inter-site links and cloud prices.
//!
//! Units: sizes in bytes, 1 GB = 1e9 bytes, bandwidth in Mbps (1e6 bit/s),
//! latency in seconds. Storage is priced per GB-month, operations per
//! million requests, transfer per GB.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ids::{DcId, MAX_DCS};

pub const BYTES_PER_GB: f64 = 1e9;
pub const OPS_PER_PRICE_UNIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum WanError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate data center {0}")]
    DuplicateDc(String),
    #[error("unknown data center {0}")]
    UnknownDc(String),
    #[error("no link between {0} and {1}")]
    MissingLink(String, String),
    #[error("profile has no data centers")]
    Empty,
    #[error("too many data centers ({0}, limit {MAX_DCS})")]
    TooManyDcs(usize),
    #[error("no bundled profile named {0}")]
    UnknownBundle(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataCenter {
    pub id: String,
    pub region: String,
    /// $ per GB-month.
    pub store_price: f64,
    /// $ per million reads.
    pub read_price: f64,
    /// $ per million writes.
    pub write_price: f64,
}

impl DataCenter {
    pub fn read_op_cost(&self) -> f64 {
        self.read_price / OPS_PER_PRICE_UNIT
    }

    pub fn write_op_cost(&self) -> f64 {
        self.write_price / OPS_PER_PRICE_UNIT
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkProfile {
    pub rtt_ms: f64,
    pub bandwidth_mbps: f64,
    /// $ per GB transferred.
    pub price_per_gb: f64,
}

impl LinkProfile {
    pub const LOCAL: LinkProfile = LinkProfile { rtt_ms: 0.0, bandwidth_mbps: f64::INFINITY, price_per_gb: 0.0 };

    pub fn rtt_s(&self) -> f64 {
        self.rtt_ms / 1000.0
    }

    pub fn bandwidth_bps(&self) -> f64 {
        self.bandwidth_mbps * 1e6
    }
}

/// Full mesh of sites. `link(a, b)` describes data flowing from `a` to `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct WanProfile {
    dcs: Vec<DataCenter>,
    links: Vec<LinkProfile>,
}

impl WanProfile {
    /// `links` is row-major, `links[a * n + b]`; diagonal entries are ignored.
    pub fn new(dcs: Vec<DataCenter>, mut links: Vec<LinkProfile>) -> Result<WanProfile, WanError> {
        let n = dcs.len();
        if n == 0 {
            return Err(WanError::Empty);
        }
        if n > MAX_DCS {
            return Err(WanError::TooManyDcs(n));
        }
        assert_eq!(links.len(), n * n, "link matrix must be n x n");
        for i in 0..n {
            links[i * n + i] = LinkProfile::LOCAL;
        }
        Ok(WanProfile { dcs, links })
    }

    pub fn dc_count(&self) -> usize {
        self.dcs.len()
    }

    pub fn dcs(&self) -> &[DataCenter] {
        &self.dcs
    }

    pub fn dc(&self, d: DcId) -> &DataCenter {
        &self.dcs[d.index()]
    }

    pub fn dc_ids(&self) -> Vec<String> {
        self.dcs.iter().map(|d| d.id.clone()).collect()
    }

    pub fn find_dc(&self, id: &str) -> Option<DcId> {
        self.dcs.iter().position(|d| d.id == id).map(DcId::from_index)
    }

    pub fn link(&self, from: DcId, to: DcId) -> &LinkProfile {
        &self.links[from.index() * self.dcs.len() + to.index()]
    }

    /// Largest inter-site RTT in seconds.
    pub fn max_rtt_s(&self) -> f64 {
        let n = self.dcs.len();
        let mut m: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    m = m.max(self.links[a * n + b].rtt_s());
                }
            }
        }
        m
    }

    /// Time for `origin` to receive `bytes` from `server`: zero when local,
    /// otherwise one round trip plus serialization over the server's link.
    pub fn request_latency(&self, origin: DcId, server: DcId, bytes: u64) -> f64 {
        if origin == server {
            return 0.0;
        }
        let link = self.link(server, origin);
        link.rtt_s() + bytes as f64 * 8.0 / link.bandwidth_bps()
    }

    /// Completion time of a request split across servers: the straggler.
    pub fn pattern_latency(&self, origin: DcId, parts: &[(DcId, u64)]) -> f64 {
        parts.iter().map(|&(d, b)| self.request_latency(origin, d, b)).fold(0.0, f64::max)
    }

    /// Parses the `[dcs]` / `[links]` text format. A link given in one
    /// direction only is mirrored.
    pub fn parse(text: &str) -> Result<WanProfile, WanError> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Dcs,
            Links,
        }
        let mut section = Section::None;
        let mut dcs: Vec<DataCenter> = Vec::new();
        let mut raw_links: Vec<(usize, String, String, LinkProfile)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "[dcs]" => {
                    section = Section::Dcs;
                    continue;
                }
                "[links]" => {
                    section = Section::Links;
                    continue;
                }
                _ => {}
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| -> Result<f64, WanError> {
                let v: f64 = s.parse().map_err(|_| WanError::Parse { line: line_no, msg: format!("bad number `{s}`") })?;
                if !v.is_finite() || v < 0.0 {
                    return Err(WanError::Parse { line: line_no, msg: format!("value `{s}` must be finite and non-negative") });
                }
                Ok(v)
            };
            match section {
                Section::None => return Err(WanError::Parse { line: line_no, msg: "data before any section header".into() }),
                Section::Dcs => {
                    if fields.len() != 5 {
                        return Err(WanError::Parse { line: line_no, msg: "expected `id region store read write`".into() });
                    }
                    if dcs.iter().any(|d| d.id == fields[0]) {
                        return Err(WanError::DuplicateDc(fields[0].to_string()));
                    }
                    dcs.push(DataCenter {
                        id: fields[0].to_string(),
                        region: fields[1].to_string(),
                        store_price: num(fields[2])?,
                        read_price: num(fields[3])?,
                        write_price: num(fields[4])?,
                    });
                }
                Section::Links => {
                    if fields.len() != 5 {
                        return Err(WanError::Parse { line: line_no, msg: "expected `from to rtt_ms bw_mbps price_per_gb`".into() });
                    }
                    let link = LinkProfile { rtt_ms: num(fields[2])?, bandwidth_mbps: num(fields[3])?, price_per_gb: num(fields[4])? };
                    if link.bandwidth_mbps <= 0.0 {
                        return Err(WanError::Parse { line: line_no, msg: "bandwidth must be positive".into() });
                    }
                    raw_links.push((line_no, fields[0].to_string(), fields[1].to_string(), link));
                }
            }
        }
        let n = dcs.len();
        if n == 0 {
            return Err(WanError::Empty);
        }
        let index: HashMap<&str, usize> = dcs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
        let mut explicit: Vec<Option<LinkProfile>> = vec![None; n * n];
        for (line_no, from, to, link) in &raw_links {
            let a = *index.get(from.as_str()).ok_or_else(|| WanError::UnknownDc(from.clone()))?;
            let b = *index.get(to.as_str()).ok_or_else(|| WanError::UnknownDc(to.clone()))?;
            if a == b {
                return Err(WanError::Parse { line: *line_no, msg: "link from a site to itself".into() });
            }
            if explicit[a * n + b].is_some() {
                return Err(WanError::Parse { line: *line_no, msg: format!("link {from} -> {to} given twice") });
            }
            explicit[a * n + b] = Some(*link);
        }
        let mut links = vec![LinkProfile::LOCAL; n * n];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                links[a * n + b] = match (explicit[a * n + b], explicit[b * n + a]) {
                    (Some(l), _) | (None, Some(l)) => l,
                    (None, None) => return Err(WanError::MissingLink(dcs[a].id.clone(), dcs[b].id.clone())),
                };
            }
        }
        WanProfile::new(dcs, links)
    }

    /// Canonical text form. Symmetric pairs are written once.
    pub fn dump(&self) -> String {
        let n = self.dcs.len();
        let mut out = String::new();
        out.push_str("[dcs]\n");
        for d in &self.dcs {
            let _ = writeln!(out, "{} {} {} {} {}", d.id, d.region, d.store_price, d.read_price, d.write_price);
        }
        out.push_str("[links]\n");
        let line = |out: &mut String, a: usize, b: usize| {
            let l = &self.links[a * n + b];
            let _ = writeln!(out, "{} {} {} {} {}", self.dcs[a].id, self.dcs[b].id, l.rtt_ms, l.bandwidth_mbps, l.price_per_gb);
        };
        for a in 0..n {
            for b in (a + 1)..n {
                line(&mut out, a, b);
                if self.links[a * n + b] != self.links[b * n + a] {
                    line(&mut out, b, a);
                }
            }
        }
        out
    }

    pub fn bundled(name: &str) -> Result<WanProfile, WanError> {
        let text = match name {
            "alibaba-5dc" => include_str!("../profiles/alibaba-5dc.wan"),
            "geo-6dc" => include_str!("../profiles/geo-6dc.wan"),
            other => return Err(WanError::UnknownBundle(other.to_string())),
        };
        WanProfile::parse(text)
    }

    /// Keeps only the listed sites, in the given order.
    pub fn subset(&self, keep: &[DcId]) -> Result<WanProfile, WanError> {
        let n = self.dcs.len();
        let dcs = keep.iter().map(|d| self.dcs[d.index()].clone()).collect();
        let mut links = Vec::with_capacity(keep.len() * keep.len());
        for a in keep {
            for b in keep {
                links.push(self.links[a.index() * n + b.index()]);
            }
        }
        WanProfile::new(dcs, links)
    }
}

pub fn load_wan_profile(path: &Path) -> Result<WanProfile, WanError> {
    let text = fs::read_to_string(path).map_err(|source| WanError::Io { path: path.to_path_buf(), source })?;
    WanProfile::parse(&text)
}

pub fn dump_wan_profile(profile: &WanProfile, path: &Path) -> Result<(), WanError> {
    fs::write(path, profile.dump()).map_err(|source| WanError::Io { path: path.to_path_buf(), source })
}

/// One provider's list prices.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceBook {
    pub provider: String,
    pub store_per_gb_month: f64,
    pub get_per_million: f64,
    pub put_per_million: f64,
    pub transfer_per_gb: f64,
}

impl PriceBook {
    pub fn table() -> Vec<PriceBook> {
        include_str!("../profiles/cloud-prices.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                let f: Vec<&str> = l.split_whitespace().collect();
                let p = |i: usize| f[i].parse::<f64>().expect("bundled price table is well formed");
                PriceBook { provider: f[0].to_string(), store_per_gb_month: p(1), get_per_million: p(2), put_per_million: p(3), transfer_per_gb: p(4) }
            })
            .collect()
    }

    pub fn lookup(provider: &str) -> Option<PriceBook> {
        PriceBook::table().into_iter().find(|p| p.provider == provider)
    }

    /// Applies these prices to every site and link of `profile`.
    pub fn apply(&self, profile: &WanProfile) -> WanProfile {
        let mut out = profile.clone();
        for d in &mut out.dcs {
            d.store_price = self.store_per_gb_month;
            d.read_price = self.get_per_million;
            d.write_price = self.put_per_million;
        }
        let n = out.dcs.len();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    out.links[a * n + b].price_per_gb = self.transfer_per_gb;
                }
            }
        }
        out
    }
}
