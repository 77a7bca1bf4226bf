//! Sampler for age-independent rates with summable memory, built on the
//! unconditional space-time decomposition. No spontaneous field is used.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{grow_generations, Clan, ClanStats, SiteTime};
use crate::error::{Error, Result};
use crate::field::SpikeField;
use crate::kalikow::spacetime::SpacetimeDecomposition;
use crate::kalikow::{Exactness, Mode};
use crate::model::ModelSpec;
use crate::rng::{RandomCoordinateSource, Stream};

pub struct SpacetimeSampler<'a> {
    spec: &'a ModelSpec,
    src: &'a RandomCoordinateSource,
    budget: usize,
    sites: Vec<SpacetimeDecomposition<'a>>,
    values: RefCell<HashMap<SiteTime, bool>>,
    stats: RefCell<ClanStats>,
}

impl<'a> SpacetimeSampler<'a> {
    pub fn new(spec: &'a ModelSpec, src: &'a RandomCoordinateSource, budget: usize) -> Result<Self> {
        let sites = (0..spec.neuron_count())
            .map(|i| SpacetimeDecomposition::new(spec, i, Mode::Auto))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            src,
            budget,
            sites,
            values: RefCell::default(),
            stats: RefCell::default(),
        })
    }

    pub fn stats(&self) -> ClanStats {
        self.stats.borrow().clone()
    }

    pub fn used_dominated(&self) -> bool {
        self.sites
            .iter()
            .any(|s| s.weights().exactness() == Exactness::Dominated)
    }

    pub fn decomposition(&self, i: usize) -> &SpacetimeDecomposition<'a> {
        &self.sites[i]
    }

    pub fn range(&self, i: usize, t: i64) -> i64 {
        let u = self.src.uniform(Stream::Range, i, t, 0);
        self.sites[i].weights().range_for(u)
    }

    /// The interaction block `O_(j,s)`.
    fn block(&self, node: SiteTime, ranges: &mut BTreeMap<SiteTime, i64>) -> Vec<SiteTime> {
        let (j, s) = node;
        let k = self.range(j, s);
        ranges.insert(node, k);
        match k {
            k if k < 0 => Vec::new(),
            0 => vec![(j, s - 1)],
            k => {
                let shells = self.spec.shells(j);
                let members: Vec<usize> = std::iter::once(j).chain(shells.others(k).iter().copied()).collect();
                (s - k - 1..s)
                    .flat_map(|u| members.iter().map(move |&l| (l, u)))
                    .collect()
            }
        }
    }

    pub fn clan_of_ancestors(&self, i: usize, t: i64) -> Result<Clan> {
        let mut ranges = BTreeMap::new();
        let generations = grow_generations((i, t), self.budget, |node| Ok(self.block(node, &mut ranges)))?;
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

    fn resolve(&self, i: usize, t: i64) -> Result<bool> {
        let k = self.range(i, t);
        let site = &self.sites[i];
        let missing = Cell::new(None);
        let p1 = {
            let values = self.values.borrow();
            let lookup = |n: usize, s: i64| match values.get(&(n, s)) {
                Some(&v) => v,
                None => {
                    missing.set(Some((n, s)));
                    false
                }
            };
            site.kernel(t, k, &lookup)?.0
        };
        if let Some((n, s)) = missing.get() {
            return Err(Error::IncompleteClan { neuron: n, time: s });
        }
        Ok(self.src.uniform(Stream::Value, i, t, 0) < p1)
    }

    pub fn forward_coloring(&self, clan: &Clan) -> Result<bool> {
        let needed: BTreeSet<(i64, usize)> = std::iter::once(clan.target)
            .chain(clan.members())
            .map(|(n, s)| (s, n))
            .collect();
        for (s, j) in needed {
            if self.values.borrow().contains_key(&(j, s)) {
                continue;
            }
            let v = self.resolve(j, s)?;
            self.values.borrow_mut().insert((j, s), v);
        }
        Ok(self.values.borrow()[&clan.target])
    }

    pub fn value(&self, i: usize, t: i64) -> Result<bool> {
        if let Some(&v) = self.values.borrow().get(&(i, t)) {
            return Ok(v);
        }
        let clan = self.clan_of_ancestors(i, t)?;
        self.forward_coloring(&clan)
    }

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
