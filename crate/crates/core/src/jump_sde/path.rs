use std::io::Write;

use serde::Serialize;

use super::TimeGrid;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpRecord {
    pub node: usize,
    pub time: f64,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
    pub mark: Vec<f64>,
}

/// Solution trajectory: right-continuous values at every grid node plus the
/// left limits at jump nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CadlagPath {
    grid: TimeGrid,
    dim: usize,
    states: Vec<f64>,
    jumps: Vec<JumpRecord>,
    /// First node whose state was not finite; the path stops before it.
    pub blow_up: Option<usize>,
    pub warnings: Vec<String>,
}

impl CadlagPath {
    pub(crate) fn new(grid: TimeGrid, dim: usize, initial: &[f64]) -> Self {
        let mut states = Vec::with_capacity(grid.len() * dim);
        states.extend_from_slice(initial);
        Self {
            grid,
            dim,
            states,
            jumps: Vec::new(),
            blow_up: None,
            warnings: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, state: &[f64]) {
        self.states.extend_from_slice(state);
    }

    pub(crate) fn push_jump(&mut self, record: JumpRecord) {
        self.jumps.push(record);
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nodes with a recorded state.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.blow_up.is_none() && self.len() == self.grid.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.grid.nodes()[k]
    }

    /// Right-continuous value at node `k`.
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    pub fn jump_at(&self, k: usize) -> Option<&JumpRecord> {
        self.jumps
            .binary_search_by(|j| j.node.cmp(&k))
            .ok()
            .map(|i| &self.jumps[i])
    }

    /// Left limit `X_{t_k−}`.
    pub fn left_limit(&self, k: usize) -> &[f64] {
        match self.jump_at(k) {
            Some(j) => &j.pre,
            None => self.state(k),
        }
    }

    pub fn initial(&self) -> &[f64] {
        self.state(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Value at time `t`: the right-continuous value at the last node `≤ t`
    /// linearly interpolated towards the next left limit.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let nodes = self.grid.nodes();
        let n = self.len();
        let k = nodes[..n].partition_point(|&x| x <= t).saturating_sub(1);
        if k + 1 >= n || nodes[k] == t {
            return self.state(k).to_vec();
        }
        let a = self.state(k);
        let b = self.left_limit(k + 1);
        let w = (t - nodes[k]) / (nodes[k + 1] - nodes[k]);
        a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect()
    }

    /// `sup |X_s − Y_s|` over nodes and left limits with `s ≤ horizon`.
    ///
    /// Between nodes both paths are affine, so node values bound the sup.
    pub fn sup_distance(&self, other: &CadlagPath, horizon: f64) -> f64 {
        self.sup_distance_where(other, horizon, |_, _| true)
    }

    /// Like [`sup_distance`](Self::sup_distance) restricted to the points
    /// accepted by `keep(time, is_left_limit)`.
    pub fn sup_distance_where(&self, other: &CadlagPath, horizon: f64, keep: impl Fn(f64, bool) -> bool) -> f64 {
        let n = self.len().min(other.len());
        let mut sup: f64 = 0.0;
        for k in 0..n {
            let t = self.time(k);
            if t > horizon {
                break;
            }
            if keep(t, true) {
                sup = sup.max(euclid(self.left_limit(k), other.left_limit(k)));
            }
            if keep(t, false) {
                sup = sup.max(euclid(self.state(k), other.state(k)));
            }
        }
        sup
    }

    /// `sup_{s ≤ horizon} |X_s|` over nodes and left limits.
    pub fn sup_norm(&self, horizon: f64) -> f64 {
        let mut sup: f64 = 0.0;
        for k in 0..self.len() {
            if self.time(k) > horizon {
                break;
            }
            sup = sup.max(norm(self.left_limit(k))).max(norm(self.state(k)));
        }
        sup
    }

    /// CSV with header `time,state_1..state_d,is_jump`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header = String::from("time");
        for i in 1..=self.dim {
            header.push_str(&format!(",state_{i}"));
        }
        header.push_str(",is_jump");
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            write!(w, "{}", self.time(k))?;
            for x in self.state(k) {
                write!(w, ",{x}")?;
            }
            writeln!(w, ",{}", u8::from(self.jump_at(k).is_some()))?;
        }
        Ok(())
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
