//! Perfect sampling by backward clan construction and forward coloring.
//!
//! Every site-time draws its spontaneous indicator, its range and its value
//! uniform from the coordinate-keyed source, so the value of a coordinate
//! does not depend on which target's clan asked for it. Samples of
//! overlapping windows therefore agree on the overlap.

pub mod spacetime;

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::SpikeField;
use crate::kalikow::{Exactness, Mode, SiteDecomposition, SiteTimeContext};
use crate::model::ModelSpec;
use crate::rng::{RandomCoordinateSource, Stream};

pub use spacetime::SpacetimeSampler;

/// Default cap on the number of clan members per target.
pub const DEFAULT_BUDGET: usize = 1_000_000;
/// Cap on the backward scan for the last spontaneous spike.
pub const SCAN_CAP: u64 = 10_000_000;

pub type SiteTime = (usize, i64);

/// Spontaneous spike indicator `ξ_t(i)`, Bernoulli(`delta`) per coordinate.
pub fn xi_at(src: &RandomCoordinateSource, delta: f64, i: usize, t: i64) -> bool {
    src.bernoulli(Stream::Spontaneous, i, t, delta)
}

/// Last spontaneous spike `R_t^i < t`.
pub fn last_spontaneous(src: &RandomCoordinateSource, delta: f64, i: usize, t: i64) -> Result<i64> {
    let mut s = t - 1;
    for _ in 0..SCAN_CAP {
        if xi_at(src, delta, i, s) {
            return Ok(s);
        }
        s -= 1;
    }
    Err(Error::ScanCapExceeded {
        neuron: i,
        time: t,
        cap: SCAN_CAP,
    })
}

/// Ancestors of one target, generation by generation.
#[derive(Clone, Debug, PartialEq)]
pub struct Clan {
    pub target: SiteTime,
    /// `generations[n - 1] = C_n`, sorted by time then neuron; the last one is empty.
    pub generations: Vec<Vec<SiteTime>>,
    /// Range drawn at every site-time touched by the construction.
    pub chosen_ranges: BTreeMap<SiteTime, i64>,
    /// First `n` with `C_n` empty.
    pub n_stop: usize,
    /// `t` minus the earliest member time (0 without members).
    pub t_stop: i64,
}

impl Clan {
    pub fn size(&self) -> usize {
        self.generations.iter().map(Vec::len).sum()
    }

    pub fn members(&self) -> impl Iterator<Item = SiteTime> + '_ {
        self.generations.iter().flatten().copied()
    }
}

/// Running totals over the clans built by a sampler.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ClanStats {
    pub clans: u64,
    pub members: u64,
    pub largest: usize,
    pub deepest: usize,
}

impl ClanStats {
    fn record(&mut self, clan: &Clan) {
        self.clans += 1;
        self.members += clan.size() as u64;
        self.largest = self.largest.max(clan.size());
        self.deepest = self.deepest.max(clan.n_stop);
    }
}

/// Generations from a child map: `C_1` = children of the root, then
/// `C_n` = children of `C_{n-1}` minus everything seen before.
pub(crate) fn grow_generations(
    target: SiteTime,
    budget: usize,
    mut children: impl FnMut(SiteTime) -> Result<Vec<SiteTime>>,
) -> Result<Vec<Vec<SiteTime>>> {
    let mut seen: BTreeSet<SiteTime> = BTreeSet::new();
    let mut generations = Vec::new();
    let mut frontier: Vec<SiteTime> = vec![target];
    loop {
        let mut next: BTreeSet<SiteTime> = BTreeSet::new();
        for &node in &frontier {
            for child in children(node)? {
                if !seen.contains(&child) {
                    next.insert(child);
                }
            }
        }
        let mut generation: Vec<SiteTime> = next.into_iter().collect();
        generation.sort_by_key(|&(n, t)| (t, n));
        seen.extend(generation.iter().copied());
        if seen.len() > budget {
            return Err(Error::BudgetExceeded {
                neuron: target.0,
                time: target.1,
                budget,
            });
        }
        let done = generation.is_empty();
        frontier = generation.clone();
        generations.push(generation);
        if done {
            return Ok(generations);
        }
    }
}

/// Sampler for models with a spontaneous floor `δ > 0`, conditional on the
/// spontaneous field.
///
/// Given `ξ_t(i) = 0`, the value of `(i, t)` follows
/// `q(1|x) = (p(1|x) - δ) / (1 - δ)`, which inherits the decomposition with
/// cumulative masses `(α(k) - δ) / (1 - δ)` and, at range -1, spike
/// probability `(r^[-1](1) - δ) / (λ(-1) - δ)`.
pub struct ClanSampler<'a> {
    spec: &'a ModelSpec,
    src: &'a RandomCoordinateSource,
    delta: f64,
    budget: usize,
    mode: Mode,
    sites: RefCell<HashMap<SiteTime, Rc<SiteDecomposition<'a>>>>,
    last_spike: RefCell<HashMap<SiteTime, i64>>,
    values: RefCell<HashMap<SiteTime, bool>>,
    stats: RefCell<ClanStats>,
    dominated: Cell<bool>,
}

impl<'a> ClanSampler<'a> {
    pub fn new(spec: &'a ModelSpec, src: &'a RandomCoordinateSource, budget: usize) -> Result<Self> {
        Self::with_mode(spec, src, budget, Mode::Auto)
    }

    pub fn with_mode(
        spec: &'a ModelSpec,
        src: &'a RandomCoordinateSource,
        budget: usize,
        mode: Mode,
    ) -> Result<Self> {
        if spec.delta() <= 0.0 {
            return Err(Error::RegimeMismatch(
                "the conditional sampler needs a spontaneous floor delta > 0".into(),
            ));
        }
        Ok(Self {
            spec,
            src,
            delta: spec.delta(),
            budget,
            mode,
            sites: RefCell::default(),
            last_spike: RefCell::default(),
            values: RefCell::default(),
            stats: RefCell::default(),
            dominated: Cell::new(false),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn stats(&self) -> ClanStats {
        self.stats.borrow().clone()
    }

    /// Whether any site used dominated range weights.
    pub fn used_dominated(&self) -> bool {
        self.dominated.get()
    }

    pub fn xi(&self, i: usize, t: i64) -> bool {
        xi_at(self.src, self.delta, i, t)
    }

    fn last_spontaneous(&self, i: usize, t: i64) -> Result<i64> {
        if let Some(&r) = self.last_spike.borrow().get(&(i, t)) {
            return Ok(r);
        }
        let r = last_spontaneous(self.src, self.delta, i, t)?;
        self.last_spike.borrow_mut().insert((i, t), r);
        Ok(r)
    }

    /// Decomposition at a site-time with `ξ = 0`.
    pub fn site(&self, i: usize, t: i64) -> Result<Rc<SiteDecomposition<'a>>> {
        if let Some(site) = self.sites.borrow().get(&(i, t)) {
            return Ok(Rc::clone(site));
        }
        let start = self.last_spontaneous(i, t)?;
        let xi = |n: usize, s: i64| xi_at(self.src, self.delta, n, s);
        let ctx = SiteTimeContext::new(self.spec, i, t, start, &xi)?;
        let site = Rc::new(SiteDecomposition::new(self.spec, ctx, self.mode)?);
        if site.weights().exactness() == Exactness::Dominated {
            self.dominated.set(true);
        }
        self.sites.borrow_mut().insert((i, t), Rc::clone(&site));
        Ok(site)
    }

    /// Range of a site-time with `ξ = 0`.
    pub fn range(&self, i: usize, t: i64) -> Result<i64> {
        let u = self.src.uniform(Stream::Range, i, t, 0);
        let shifted = self.delta + u * (1.0 - self.delta);
        Ok(self.site(i, t)?.weights().range_for(shifted))
    }

    /// `C_1` of a site-time with `ξ = 0`, recording every range drawn.
    fn ancestors(&self, node: SiteTime, ranges: &mut BTreeMap<SiteTime, i64>) -> Result<Vec<SiteTime>> {
        let (j, s) = node;
        let k = self.range(j, s)?;
        ranges.insert(node, k);
        if k < 0 {
            return Ok(Vec::new());
        }
        let start = self.last_spontaneous(j, s)?;
        // Own-chain sites (j, s') with R < s' ≤ s and their ranges.
        let mut own = Vec::with_capacity((s - start) as usize);
        for sp in start + 1..=s {
            let kp = if sp == s { k } else { self.range(j, sp)? };
            ranges.insert((j, sp), kp);
            own.push((sp, kp));
        }
        let shells = self.spec.shells(j);
        let mut out = Vec::new();
        for &(l, _) in self.spec.inputs(j) {
            let level = shells.level(l).expect("presynaptic neuron has a shell");
            // Latest own-chain site whose neighborhood contains l.
            let Some(&(reach, _)) = own.iter().rev().find(|&&(_, kp)| kp >= level) else {
                continue;
            };
            for u in start..reach {
                if !self.xi(l, u) {
                    out.push((l, u));
                }
            }
        }
        Ok(out)
    }

    /// Ancestors of `(i, t)`. A target with `ξ = 1` has an empty clan.
    pub fn clan_of_ancestors(&self, i: usize, t: i64) -> Result<Clan> {
        let mut ranges = BTreeMap::new();
        let generations = if self.xi(i, t) {
            vec![Vec::new()]
        } else {
            grow_generations((i, t), self.budget, |node| self.ancestors(node, &mut ranges))?
        };
        let earliest = generations.iter().flatten().map(|&(_, s)| s).min();
        let clan = Clan {
            target: (i, t),
            n_stop: generations.len(),
            t_stop: earliest.map_or(0, |s| t - s),
            generations,
            chosen_ranges: ranges,
        };
        self.stats.borrow_mut().record(&clan);
        Ok(clan)
    }

    /// Value of `(i, t)` given the values of everything its kernel reads.
    fn resolve(&self, i: usize, t: i64) -> Result<bool> {
        if self.xi(i, t) {
            return Ok(true);
        }
        let k = self.range(i, t)?;
        let site = self.site(i, t)?;
        let p1 = if k < 0 {
            let (r1, _) = site.weights().r_minus1();
            let mass = site.weights().lambda(-1) - self.delta;
            ((r1 - self.delta) / mass).clamp(0.0, 1.0)
        } else {
            let missing = Cell::new(None);
            let values = self.values.borrow();
            let lookup = |n: usize, s: i64| {
                if self.xi(n, s) {
                    return true;
                }
                match values.get(&(n, s)) {
                    Some(&v) => v,
                    None => {
                        missing.set(Some((n, s)));
                        false
                    }
                }
            };
            let (p1, _) = site.kernel(k, &lookup)?;
            if let Some((n, s)) = missing.get() {
                return Err(Error::IncompleteClan { neuron: n, time: s });
            }
            p1
        };
        Ok(self.src.uniform(Stream::Value, i, t, 0) < p1)
    }

    /// Value of the clan target, coloring from the oldest coordinates forward.
    pub fn forward_coloring(&self, clan: &Clan) -> Result<bool> {
        let (i, t) = clan.target;
        if self.xi(i, t) {
            return Ok(true);
        }
        let mut needed: BTreeSet<(i64, usize)> = BTreeSet::new();
        for node in std::iter::once(clan.target).chain(clan.members()) {
            let (j, s) = node;
            needed.insert((s, j));
            let k = clan
                .chosen_ranges
                .get(&node)
                .copied()
                .ok_or(Error::IncompleteClan { neuron: j, time: s })?;
            if k >= 0 {
                let start = self.last_spontaneous(j, s)?;
                for sp in start + 1..s {
                    needed.insert((sp, j));
                }
            }
        }
        for (s, j) in needed {
            if self.values.borrow().contains_key(&(j, s)) {
                continue;
            }
            let v = self.resolve(j, s)?;
            self.values.borrow_mut().insert((j, s), v);
        }
        Ok(self.values.borrow()[&(i, t)])
    }

    /// Value of one coordinate under the stationary law.
    pub fn value(&self, i: usize, t: i64) -> Result<bool> {
        if self.xi(i, t) {
            return Ok(true);
        }
        if let Some(&v) = self.values.borrow().get(&(i, t)) {
            return Ok(v);
        }
        let clan = self.clan_of_ancestors(i, t)?;
        self.forward_coloring(&clan)
    }

    /// Stationary sample on `neurons × [start, end]`.
    pub fn sample(&self, neurons: &[usize], start: i64, end: i64) -> Result<SpikeField> {
        let mut field = SpikeField::new(neurons.to_vec(), start, end);
        for t in start..=end {
            for &n in neurons {
                if self.value(n, t)? {
                    field.push(n, t);
                }
            }
        }
        Ok(field)
    }
}

/// Ancestors of `(i, t)` under the conditional construction.
pub fn clan_of_ancestors(
    src: &RandomCoordinateSource,
    spec: &ModelSpec,
    i: usize,
    t: i64,
    budget: usize,
) -> Result<Clan> {
    ClanSampler::new(spec, src, budget)?.clan_of_ancestors(i, t)
}

/// Value of a clan's target.
pub fn forward_coloring(clan: &Clan, src: &RandomCoordinateSource, spec: &ModelSpec) -> Result<bool> {
    ClanSampler::new(spec, src, usize::MAX)?.forward_coloring(clan)
}

/// Stationary sample on `neurons × [start, end]` with the conditional sampler.
pub fn perfect_sample(
    src: &RandomCoordinateSource,
    spec: &ModelSpec,
    neurons: &[usize],
    window: (i64, i64),
    budget: usize,
) -> Result<SpikeField> {
    ClanSampler::new(spec, src, budget)?.sample(neurons, window.0, window.1)
}

/// Stationary sample on `neurons × [start, end]` with the space-time sampler.
pub fn spacetime_sample(
    src: &RandomCoordinateSource,
    spec: &ModelSpec,
    neurons: &[usize],
    window: (i64, i64),
    budget: usize,
) -> Result<SpikeField> {
    SpacetimeSampler::new(spec, src, budget)?.sample(neurons, window.0, window.1)
}
