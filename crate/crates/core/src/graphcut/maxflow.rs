//! Boykov–Kolmogorov max-flow on `f64` capacities.
//!
//! Two search trees grow from the terminals; when they touch, the path is augmented
//! and the orphans created by saturated edges are re-adopted or freed. Nodes are
//! always scanned in a fixed order, so results are deterministic.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Parent {
    None,
    Terminal,
    Orphan,
    /// Arc from the node to its parent.
    Arc(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    Source,
    Sink,
}

#[derive(Clone, Debug)]
struct Node {
    first: Option<usize>,
    parent: Parent,
    in_sink: bool,
    active: bool,
    ts: u64,
    dist: u32,
    /// Residual terminal capacity: positive from source, negative to sink.
    tr_cap: f64,
}

#[derive(Clone, Debug)]
struct Arc {
    head: usize,
    next: Option<usize>,
    r_cap: f64,
}

pub struct MaxFlow {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    active: VecDeque<usize>,
    orphans: VecDeque<usize>,
    time: u64,
}

const INFINITE_D: u32 = u32::MAX;

impl MaxFlow {
    pub fn new(n: usize) -> Self {
        MaxFlow {
            nodes: vec![
                Node {
                    first: None,
                    parent: Parent::None,
                    in_sink: false,
                    active: false,
                    ts: 0,
                    dist: 0,
                    tr_cap: 0.0,
                };
                n
            ],
            arcs: Vec::new(),
            flow: 0.0,
            active: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
        }
    }

    /// Add terminal capacities `source → i` and `i → sink`. The common part is
    /// pushed as flow immediately.
    pub fn add_tweights(&mut self, i: usize, cap_source: f64, cap_sink: f64) {
        let delta = self.nodes[i].tr_cap;
        let (cs, ct) = if delta > 0.0 {
            (cap_source + delta, cap_sink)
        } else {
            (cap_source, cap_sink - delta)
        };
        self.flow += cs.min(ct);
        self.nodes[i].tr_cap = cs - ct;
    }

    /// Add arcs `i → j` with capacity `cap` and `j → i` with capacity `rev_cap`.
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        assert!(i != j, "self loop");
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: j,
            next: self.nodes[i].first,
            r_cap: cap,
        });
        self.arcs.push(Arc {
            head: i,
            next: self.nodes[j].first,
            r_cap: rev_cap,
        });
        self.nodes[i].first = Some(a);
        self.nodes[j].first = Some(a + 1);
    }

    #[inline]
    fn sister(a: usize) -> usize {
        a ^ 1
    }

    fn arcs_of(&self, i: usize) -> ArcIter<'_> {
        ArcIter {
            arcs: &self.arcs,
            cur: self.nodes[i].first,
        }
    }

    fn set_active(&mut self, i: usize) {
        if !self.nodes[i].active {
            self.nodes[i].active = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            self.nodes[i].active = false;
            if self.nodes[i].parent != Parent::None {
                return Some(i);
            }
        }
        None
    }

    fn set_orphan_front(&mut self, i: usize) {
        self.nodes[i].parent = Parent::Orphan;
        self.orphans.push_front(i);
    }

    fn set_orphan_rear(&mut self, i: usize) {
        self.nodes[i].parent = Parent::Orphan;
        self.orphans.push_back(i);
    }

    /// Run to completion and return the max-flow value (including flow pushed
    /// directly through terminal edges).
    pub fn solve(&mut self) -> f64 {
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            if n.tr_cap != 0.0 {
                n.in_sink = n.tr_cap < 0.0;
                n.parent = Parent::Terminal;
                n.ts = 0;
                n.dist = 1;
                self.set_active(i);
            } else {
                n.parent = Parent::None;
            }
        }

        let mut current: Option<usize> = None;
        loop {
            let i = match current.take() {
                Some(c) if self.nodes[c].parent != Parent::None => c,
                _ => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };

            // grow
            let mut meeting: Option<usize> = None;
            let arcs: Vec<usize> = self.arcs_of(i).collect();
            if !self.nodes[i].in_sink {
                for a in arcs {
                    if self.arcs[a].r_cap <= 0.0 {
                        continue;
                    }
                    let j = self.arcs[a].head;
                    if self.nodes[j].parent == Parent::None {
                        let (ts, dist) = (self.nodes[i].ts, self.nodes[i].dist);
                        let nj = &mut self.nodes[j];
                        nj.in_sink = false;
                        nj.parent = Parent::Arc(Self::sister(a));
                        nj.ts = ts;
                        nj.dist = dist + 1;
                        self.set_active(j);
                    } else if self.nodes[j].in_sink {
                        meeting = Some(a);
                        break;
                    } else if self.nodes[j].ts <= self.nodes[i].ts && self.nodes[j].dist > self.nodes[i].dist {
                        let (ts, dist) = (self.nodes[i].ts, self.nodes[i].dist);
                        let nj = &mut self.nodes[j];
                        nj.parent = Parent::Arc(Self::sister(a));
                        nj.ts = ts;
                        nj.dist = dist + 1;
                    }
                }
            } else {
                for a in arcs {
                    if self.arcs[Self::sister(a)].r_cap <= 0.0 {
                        continue;
                    }
                    let j = self.arcs[a].head;
                    if self.nodes[j].parent == Parent::None {
                        let (ts, dist) = (self.nodes[i].ts, self.nodes[i].dist);
                        let nj = &mut self.nodes[j];
                        nj.in_sink = true;
                        nj.parent = Parent::Arc(Self::sister(a));
                        nj.ts = ts;
                        nj.dist = dist + 1;
                        self.set_active(j);
                    } else if !self.nodes[j].in_sink {
                        meeting = Some(Self::sister(a));
                        break;
                    } else if self.nodes[j].ts <= self.nodes[i].ts && self.nodes[j].dist > self.nodes[i].dist {
                        let (ts, dist) = (self.nodes[i].ts, self.nodes[i].dist);
                        let nj = &mut self.nodes[j];
                        nj.parent = Parent::Arc(Self::sister(a));
                        nj.ts = ts;
                        nj.dist = dist + 1;
                    }
                }
            }

            self.time += 1;
            if let Some(middle) = meeting {
                // keep working on this node after augmentation
                current = Some(i);
                self.augment(middle);
                self.adopt_orphans();
            }
        }
        self.flow
    }

    fn augment(&mut self, middle: usize) {
        // bottleneck
        let mut bottleneck = self.arcs[middle].r_cap;
        let mut i = self.arcs[Self::sister(middle)].head;
        while let Parent::Arc(a) = self.nodes[i].parent {
            bottleneck = bottleneck.min(self.arcs[Self::sister(a)].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(self.nodes[i].tr_cap);
        let mut i = self.arcs[middle].head;
        while let Parent::Arc(a) = self.nodes[i].parent {
            bottleneck = bottleneck.min(self.arcs[a].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i].tr_cap);

        self.arcs[Self::sister(middle)].r_cap += bottleneck;
        self.arcs[middle].r_cap -= bottleneck;

        // source side
        let mut i = self.arcs[Self::sister(middle)].head;
        while let Parent::Arc(a) = self.nodes[i].parent {
            self.arcs[a].r_cap += bottleneck;
            self.arcs[Self::sister(a)].r_cap -= bottleneck;
            let next = self.arcs[a].head;
            if self.arcs[Self::sister(a)].r_cap <= 0.0 {
                self.set_orphan_front(i);
            }
            i = next;
        }
        self.nodes[i].tr_cap -= bottleneck;
        if self.nodes[i].tr_cap <= 0.0 {
            self.nodes[i].tr_cap = 0.0;
            self.set_orphan_front(i);
        }

        // sink side
        let mut i = self.arcs[middle].head;
        while let Parent::Arc(a) = self.nodes[i].parent {
            self.arcs[Self::sister(a)].r_cap += bottleneck;
            self.arcs[a].r_cap -= bottleneck;
            let next = self.arcs[a].head;
            if self.arcs[a].r_cap <= 0.0 {
                self.set_orphan_front(i);
            }
            i = next;
        }
        self.nodes[i].tr_cap += bottleneck;
        if self.nodes[i].tr_cap >= 0.0 {
            self.nodes[i].tr_cap = 0.0;
            self.set_orphan_front(i);
        }

        self.flow += bottleneck;
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.process_orphan(i);
        }
    }

    /// Distance of `j` to its terminal through valid parents, or `None` if the
    /// chain ends in an orphan. Marks the visited chain with the current time.
    fn origin_distance(&mut self, start: usize) -> Option<u32> {
        let mut j = start;
        let mut d: u32 = 0;
        loop {
            if self.nodes[j].ts == self.time {
                d += self.nodes[j].dist;
                break;
            }
            d += 1;
            match self.nodes[j].parent {
                Parent::Terminal => {
                    self.nodes[j].ts = self.time;
                    self.nodes[j].dist = 1;
                    break;
                }
                Parent::Orphan | Parent::None => return None,
                Parent::Arc(a) => j = self.arcs[a].head,
            }
        }
        // stamp the chain with distances for later queries
        let mut j = start;
        let mut dd = d;
        while self.nodes[j].ts != self.time {
            self.nodes[j].ts = self.time;
            self.nodes[j].dist = dd;
            dd -= 1;
            match self.nodes[j].parent {
                Parent::Arc(a) => j = self.arcs[a].head,
                _ => break,
            }
        }
        Some(d)
    }

    fn process_orphan(&mut self, i: usize) {
        let in_sink = self.nodes[i].in_sink;
        let mut best: Option<(usize, u32)> = None;
        let arcs: Vec<usize> = self.arcs_of(i).collect();
        for &a0 in &arcs {
            // residual capacity must point from the candidate parent toward i (source
            // tree) or from i toward the candidate (sink tree)
            let cap = if in_sink {
                self.arcs[a0].r_cap
            } else {
                self.arcs[Self::sister(a0)].r_cap
            };
            if cap <= 0.0 {
                continue;
            }
            let j = self.arcs[a0].head;
            if self.nodes[j].in_sink != in_sink || self.nodes[j].parent == Parent::None {
                continue;
            }
            if let Some(d) = self.origin_distance(j) {
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((a0, d));
                }
            }
        }

        if let Some((a0, d)) = best {
            let n = &mut self.nodes[i];
            n.parent = Parent::Arc(a0);
            n.ts = self.time;
            n.dist = d.saturating_add(1).min(INFINITE_D - 1);
            return;
        }

        self.nodes[i].parent = Parent::None;
        for &a0 in &arcs {
            let j = self.arcs[a0].head;
            if self.nodes[j].in_sink != in_sink || self.nodes[j].parent == Parent::None {
                continue;
            }
            let cap = if in_sink {
                self.arcs[a0].r_cap
            } else {
                self.arcs[Self::sister(a0)].r_cap
            };
            if cap > 0.0 {
                self.set_active(j);
            }
            if let Parent::Arc(pa) = self.nodes[j].parent {
                if self.arcs[pa].head == i {
                    self.set_orphan_rear(j);
                }
            }
        }
    }

    /// Segment of node `i` after [`MaxFlow::solve`]. Free nodes go to the sink side.
    pub fn segment(&self, i: usize) -> Segment {
        match self.nodes[i].parent {
            Parent::None => Segment::Sink,
            _ if self.nodes[i].in_sink => Segment::Sink,
            _ => Segment::Source,
        }
    }
}

struct ArcIter<'a> {
    arcs: &'a [Arc],
    cur: Option<usize>,
}

impl Iterator for ArcIter<'_> {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        let a = self.cur?;
        self.cur = self.arcs[a].next;
        Some(a)
    }
}
