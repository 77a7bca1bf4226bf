//! Sparse space-time spike configurations and their CSV form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Read access to a (partial) space-time configuration.
pub trait History {
    fn spike(&self, neuron: usize, time: i64) -> bool;
}

impl<F: Fn(usize, i64) -> bool> History for F {
    fn spike(&self, neuron: usize, time: i64) -> bool {
        self(neuron, time)
    }
}

/// 0/1 configuration on `neurons × [start, end]`, stored as sorted spike times.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeField {
    neurons: Vec<usize>,
    start: i64,
    end: i64,
    spikes: Vec<Vec<i64>>,
}

impl SpikeField {
    /// Empty field. `end < start` gives an empty window.
    pub fn new(neurons: Vec<usize>, start: i64, end: i64) -> Self {
        let spikes = vec![Vec::new(); neurons.len()];
        Self {
            neurons,
            start,
            end,
            spikes,
        }
    }

    pub fn neurons(&self) -> &[usize] {
        &self.neurons
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.end
    }

    /// Number of time steps in the window.
    pub fn len(&self) -> u64 {
        (self.end - self.start + 1).max(0) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn slot(&self, neuron: usize) -> Option<usize> {
        self.neurons.iter().position(|&n| n == neuron)
    }

    pub fn contains(&self, neuron: usize, time: i64) -> bool {
        time >= self.start && time <= self.end && self.slot(neuron).is_some()
    }

    /// Record a spike. Times for one neuron must be pushed in increasing order.
    pub fn push(&mut self, neuron: usize, time: i64) {
        let slot = self
            .slot(neuron)
            .unwrap_or_else(|| panic!("neuron {neuron} not in field"));
        debug_assert!(time >= self.start && time <= self.end);
        let row = &mut self.spikes[slot];
        debug_assert!(row.last().map_or(true, |&last| last < time));
        row.push(time);
    }

    /// Set one coordinate, keeping rows sorted.
    pub fn set(&mut self, neuron: usize, time: i64, value: bool) {
        let slot = self
            .slot(neuron)
            .unwrap_or_else(|| panic!("neuron {neuron} not in field"));
        let row = &mut self.spikes[slot];
        match (row.binary_search(&time), value) {
            (Err(pos), true) => row.insert(pos, time),
            (Ok(pos), false) => {
                row.remove(pos);
            }
            _ => {}
        }
    }

    pub fn get(&self, neuron: usize, time: i64) -> bool {
        match self.slot(neuron) {
            Some(slot) => self.spikes[slot].binary_search(&time).is_ok(),
            None => false,
        }
    }

    /// Sorted spike times of `neuron` (empty if the neuron is not recorded).
    pub fn spike_times(&self, neuron: usize) -> &[i64] {
        match self.slot(neuron) {
            Some(slot) => &self.spikes[slot],
            None => &[],
        }
    }

    pub fn spike_count(&self) -> usize {
        self.spikes.iter().map(Vec::len).sum()
    }

    /// `(neuron, time)` of every spike, sorted by time then neuron.
    pub fn sorted_spikes(&self) -> Vec<(usize, i64)> {
        let mut all: Vec<(usize, i64)> = self
            .neurons
            .iter()
            .zip(&self.spikes)
            .flat_map(|(&n, row)| row.iter().map(move |&t| (n, t)))
            .collect();
        all.sort_by_key(|&(n, t)| (t, n));
        all
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "neuron,time")?;
        for (n, t) in self.sorted_spikes() {
            writeln!(out, "{n},{t}")?;
        }
        Ok(())
    }

    /// Parse a raster written by [`SpikeField::write_csv`] into the given window.
    pub fn read_csv<R: BufRead>(input: R, neurons: Vec<usize>, start: i64, end: i64) -> Result<Self> {
        let mut field = Self::new(neurons, start, end);
        let mut lines = input.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "neuron,time" => {}
            _ => return Err(Error::config("raster", "missing `neuron,time` header")),
        }
        for line in lines {
            let line = line?;
            let (n, t) = line
                .split_once(',')
                .ok_or_else(|| Error::config("raster", format!("bad row `{line}`")))?;
            let n: usize = n.trim().parse().map_err(|_| Error::config("raster", format!("bad neuron `{n}`")))?;
            let t: i64 = t.trim().parse().map_err(|_| Error::config("raster", format!("bad time `{t}`")))?;
            if !field.contains(n, t) {
                return Err(Error::config("raster", format!("spike ({n}, {t}) outside window")));
            }
            field.set(n, t, true);
        }
        Ok(field)
    }
}

impl History for SpikeField {
    fn spike(&self, neuron: usize, time: i64) -> bool {
        self.get(neuron, time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut f = SpikeField::new(vec![0, 3], -2, 5);
        f.push(3, -2);
        f.push(0, 1);
        f.push(3, 1);
        f.set(0, -1, true);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "neuron,time\n3,-2\n0,-1\n0,1\n3,1\n");
        let back = SpikeField::read_csv(buf.as_slice(), vec![0, 3], -2, 5).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn set_and_get() {
        let mut f = SpikeField::new(vec![1], 0, 9);
        f.set(1, 4, true);
        f.set(1, 2, true);
        assert_eq!(f.spike_times(1), &[2, 4]);
        f.set(1, 4, false);
        assert!(!f.get(1, 4));
        assert!(f.get(1, 2));
        assert!(!f.get(7, 2));
        assert_eq!(f.len(), 10);
    }
}
