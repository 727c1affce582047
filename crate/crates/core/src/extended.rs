//! Neighborhoods, virtual APs and effective gains.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, GainMatrix};

/// How the two members of a virtual AP combine at the served UE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoopMode {
    /// Powers add: h = g1 + g2.
    NonCoherent,
    /// Amplitudes add: h = (sqrt(g1) + sqrt(g2))^2.
    Coherent,
}

/// Physical APs that may serve each UE.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhoods {
    sets: Vec<Vec<usize>>,
}

impl Neighborhoods {
    pub fn from_sets(sets: Vec<Vec<usize>>) -> Self {
        let sets = sets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        Neighborhoods { sets }
    }

    /// Physical neighborhood of UE `j`, ascending AP index.
    pub fn get(&self, j: usize) -> &[usize] {
        &self.sets[j]
    }

    pub fn n_ues(&self) -> usize {
        self.sets.len()
    }

    /// UEs no AP can reach above the threshold.
    pub fn unservable(&self) -> Vec<usize> {
        (0..self.sets.len()).filter(|&j| self.sets[j].is_empty()).collect()
    }
}

/// `A_j = {i : g_ij * pmax / n0 >= xi}`, keeping the `b_cap` strongest (lower index wins ties).
pub fn build_neighborhoods(gains: &GainMatrix, params: &ChannelParams) -> Neighborhoods {
    let sets = (0..gains.n_ues())
        .map(|j| {
            let mut passing: Vec<usize> = (0..gains.n_aps()).filter(|&i| params.snr(gains.get(i, j)) >= params.xi).collect();
            if passing.len() > params.b_cap {
                passing.sort_by(|&a, &b| gains.get(b, j).total_cmp(&gains.get(a, j)).then(a.cmp(&b)));
                passing.truncate(params.b_cap);
                passing.sort_unstable();
            }
            passing
        })
        .collect();
    Neighborhoods { sets }
}

/// A transmitter: a physical AP or an ordered cooperating pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtAp {
    Physical(usize),
    Virtual(usize, usize),
}

impl ExtAp {
    pub fn members(self) -> (usize, Option<usize>) {
        match self {
            ExtAp::Physical(i) => (i, None),
            ExtAp::Virtual(a, b) => (a, Some(b)),
        }
    }

    pub fn is_virtual(self) -> bool {
        matches!(self, ExtAp::Virtual(..))
    }

    pub fn contains(self, ap: usize) -> bool {
        match self {
            ExtAp::Physical(i) => i == ap,
            ExtAp::Virtual(a, b) => a == ap || b == ap,
        }
    }
}

/// Physical APs (ids `0..n`) followed by virtual pairs in lexicographic order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedApSet {
    n_aps: usize,
    n_ues: usize,
    aps: Vec<ExtAp>,
    virtual_ids: BTreeMap<(usize, usize), usize>,
    neighborhoods: Vec<Vec<usize>>,
    candidates: Vec<Vec<usize>>,
    involvement: Vec<Vec<usize>>,
    h_noncoherent: Vec<Vec<f64>>,
    h_coherent: Vec<Vec<f64>>,
}

/// Builds the extended AP set. Virtual pairs come from co-membership in a physical
/// neighborhood; extended neighborhoods apply the threshold to the combined gain.
pub fn enumerate_extended(neighborhoods: &Neighborhoods, gains: &GainMatrix, params: &ChannelParams) -> ExtendedApSet {
    let (n, k) = (gains.n_aps(), gains.n_ues());
    let mut pairs = BTreeSet::new();
    for j in 0..k {
        let set = neighborhoods.get(j);
        for (a, &i1) in set.iter().enumerate() {
            for &i2 in &set[a + 1..] {
                pairs.insert((i1, i2));
            }
        }
    }
    let mut aps: Vec<ExtAp> = (0..n).map(ExtAp::Physical).collect();
    let mut virtual_ids = BTreeMap::new();
    for &(i1, i2) in &pairs {
        virtual_ids.insert((i1, i2), aps.len());
        aps.push(ExtAp::Virtual(i1, i2));
    }

    let mut ext_neighborhoods: Vec<Vec<usize>> = (0..k).map(|j| neighborhoods.get(j).to_vec()).collect();
    for (&(i1, i2), &e) in &virtual_ids {
        let (r1, r2) = (gains.row(i1), gains.row(i2));
        for j in 0..k {
            if params.snr(r1[j] + r2[j]) >= params.xi {
                ext_neighborhoods[j].push(e);
            }
        }
    }

    let mut candidates = vec![Vec::new(); aps.len()];
    for (j, set) in ext_neighborhoods.iter().enumerate() {
        for &e in set {
            candidates[e].push(j);
        }
    }
    let effective = |e: usize, j: usize, mode: CoopMode| effective_gain(aps[e], gains, j, mode);
    let h_noncoherent =
        candidates.iter().enumerate().map(|(e, c)| c.iter().map(|&j| effective(e, j, CoopMode::NonCoherent)).collect()).collect();
    let h_coherent = candidates.iter().enumerate().map(|(e, c)| c.iter().map(|&j| effective(e, j, CoopMode::Coherent)).collect()).collect();

    let mut involvement: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for (&(i1, i2), &e) in &virtual_ids {
        involvement[i1].push(e);
        involvement[i2].push(e);
    }

    ExtendedApSet {
        n_aps: n,
        n_ues: k,
        aps,
        virtual_ids,
        neighborhoods: ext_neighborhoods,
        candidates,
        involvement,
        h_noncoherent,
        h_coherent,
    }
}

/// Gain of the serving link under a cooperation mode.
pub fn effective_gain(ap: ExtAp, gains: &GainMatrix, ue: usize, mode: CoopMode) -> f64 {
    match ap {
        ExtAp::Physical(i) => gains.get(i, ue),
        ExtAp::Virtual(a, b) => {
            let (g1, g2) = (gains.get(a, ue), gains.get(b, ue));
            match mode {
                CoopMode::NonCoherent => g1 + g2,
                CoopMode::Coherent => g1 + g2 + 2.0 * (g1 * g2).sqrt(),
            }
        }
    }
}

impl ExtendedApSet {
    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    pub fn n_ues(&self) -> usize {
        self.n_ues
    }

    /// Number of extended APs, physical plus virtual.
    pub fn len(&self) -> usize {
        self.aps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aps.is_empty()
    }

    pub fn ap(&self, e: usize) -> ExtAp {
        self.aps[e]
    }

    pub fn aps(&self) -> &[ExtAp] {
        &self.aps
    }

    pub fn virtual_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.virtual_ids.keys().copied()
    }

    pub fn virtual_id(&self, i1: usize, i2: usize) -> Option<usize> {
        let key = if i1 < i2 { (i1, i2) } else { (i2, i1) };
        self.virtual_ids.get(&key).copied()
    }

    /// Id of an extended AP given as one or two physical indices.
    pub fn lookup(&self, ap: ExtAp) -> Option<usize> {
        match ap {
            ExtAp::Physical(i) if i < self.n_aps => Some(i),
            ExtAp::Physical(_) => None,
            ExtAp::Virtual(a, b) => self.virtual_id(a, b),
        }
    }

    /// Extended neighborhood `A_j`, ascending id.
    pub fn neighborhood(&self, j: usize) -> &[usize] {
        &self.neighborhoods[j]
    }

    /// UEs that extended AP `e` may serve, ascending.
    pub fn candidates(&self, e: usize) -> &[usize] {
        &self.candidates[e]
    }

    /// `N_i`: AP `i` and every virtual AP containing it.
    pub fn involvement(&self, i: usize) -> &[usize] {
        &self.involvement[i]
    }

    /// Effective gain of candidate slot `idx` of `e`.
    #[inline]
    pub fn h_at(&self, mode: CoopMode, e: usize, idx: usize) -> f64 {
        match mode {
            CoopMode::NonCoherent => self.h_noncoherent[e][idx],
            CoopMode::Coherent => self.h_coherent[e][idx],
        }
    }

    /// Effective gain from `e` to `j`, or `None` when `j` is not a candidate.
    pub fn h(&self, mode: CoopMode, e: usize, j: usize) -> Option<f64> {
        self.candidates[e].binary_search(&j).ok().map(|idx| self.h_at(mode, e, idx))
    }

    pub fn is_candidate(&self, e: usize, j: usize) -> bool {
        self.candidates[e].binary_search(&j).is_ok()
    }

    /// Interference gain of `e` toward any UE: the members' gains add.
    #[inline]
    pub fn g(&self, gains: &GainMatrix, e: usize, j: usize) -> f64 {
        match self.aps[e] {
            ExtAp::Physical(i) => gains.get(i, j),
            ExtAp::Virtual(a, b) => gains.get(a, j) + gains.get(b, j),
        }
    }

    /// True when two extended APs share a physical member.
    pub fn conflicts(&self, e1: usize, e2: usize) -> bool {
        let (a1, b1) = self.aps[e1].members();
        let (a2, b2) = self.aps[e2].members();
        a1 == a2 || Some(a1) == b2 || b1 == Some(a2) || (b1.is_some() && b1 == b2)
    }
}
