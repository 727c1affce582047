//! Allocation dumps. Virtual APs are written as two-element `ap` arrays.

use std::path::Path;

use coopalloc::{Allocation, ExtAp, Link, Network, Pattern};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationFile {
    #[serde(rename = "W")]
    pub bandwidth: f64,
    pub patterns: Vec<PatternEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternEntry {
    pub beta: f64,
    pub entries: Vec<LinkEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEntry {
    pub ap: Vec<usize>,
    pub ue: usize,
    pub p: f64,
}

impl AllocationFile {
    pub fn from_allocation(alloc: &Allocation, net: &Network) -> Self {
        let patterns = alloc
            .patterns
            .iter()
            .zip(&alloc.beta)
            .map(|(pattern, &beta)| PatternEntry {
                beta,
                entries: pattern
                    .links()
                    .iter()
                    .map(|l| LinkEntry {
                        ap: match net.ext.ap(l.ext) {
                            ExtAp::Physical(i) => vec![i],
                            ExtAp::Virtual(a, b) => vec![a, b],
                        },
                        ue: l.ue,
                        p: l.power,
                    })
                    .collect(),
            })
            .collect();
        AllocationFile { bandwidth: net.params.bandwidth_w, patterns }
    }

    /// Parses and checks the file on its own: shares non-negative and summing to `W`.
    pub fn parse(text: &str) -> Result<Self> {
        let file: AllocationFile =
            serde_json::from_str(text).map_err(|e| HarnessError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
        file.check()?;
        Ok(file)
    }

    fn check(&self) -> Result<()> {
        let w = self.bandwidth;
        if !(w.is_finite() && w > 0.0) {
            return Err(HarnessError::Validation(format!("W must be positive, got {w}")));
        }
        for (l, p) in self.patterns.iter().enumerate() {
            if !(p.beta.is_finite() && p.beta >= 0.0) {
                return Err(HarnessError::Validation(format!("pattern {l}: beta {} is negative or not finite", p.beta)));
            }
            for e in &p.entries {
                if !(1..=2).contains(&e.ap.len()) {
                    return Err(HarnessError::Validation(format!("pattern {l}: ap must list one or two APs, got {:?}", e.ap)));
                }
            }
        }
        let total: f64 = self.patterns.iter().map(|p| p.beta).sum();
        if (total - w).abs() > 1e-9 * w {
            return Err(HarnessError::Validation(format!("beta values sum to {total}, expected W = {w}")));
        }
        Ok(())
    }

    /// Resolves AP ids against `net` and validates the result as an allocation there.
    pub fn to_allocation(&self, net: &Network) -> Result<Allocation> {
        let w = net.params.bandwidth_w;
        if (self.bandwidth - w).abs() > 1e-12 * w {
            return Err(HarnessError::Validation(format!("file W = {} but the network has W = {w}", self.bandwidth)));
        }
        let mut patterns = Vec::with_capacity(self.patterns.len());
        for (l, p) in self.patterns.iter().enumerate() {
            let mut links = Vec::with_capacity(p.entries.len());
            for e in &p.entries {
                let ap = match e.ap[..] {
                    [i] => ExtAp::Physical(i),
                    [a, b] => ExtAp::Virtual(a.min(b), a.max(b)),
                    _ => unreachable!("checked on parse"),
                };
                let ext = net
                    .ext
                    .lookup(ap)
                    .ok_or_else(|| HarnessError::Validation(format!("pattern {l}: {:?} is not an AP of this network", e.ap)))?;
                links.push(Link { ext, ue: e.ue, power: e.p });
            }
            patterns.push(Pattern::new(links));
        }
        let alloc = Allocation { patterns, beta: self.patterns.iter().map(|p| p.beta).collect() };
        alloc.validate(net).map_err(|e| HarnessError::Validation(e.to_string()))?;
        Ok(alloc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

pub fn dump_allocation(alloc: &Allocation, net: &Network, path: &Path) -> Result<()> {
    let mut text = AllocationFile::from_allocation(alloc, net).to_json();
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn load_allocation(path: &Path, net: &Network) -> Result<Allocation> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    AllocationFile::parse(&text)?.to_allocation(net)
}
