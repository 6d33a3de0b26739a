use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    Direct,
    Influence,
    NonTargeted,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Direct => "direct",
            AttackKind::Influence => "influence",
            AttackKind::NonTargeted => "non-targeted",
        })
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(AttackKind::Direct),
            "influence" => Ok(AttackKind::Influence),
            "non-targeted" | "nontargeted" => Ok(AttackKind::NonTargeted),
            other => Err(Error::Config(format!("unknown attack kind {other:?}"))),
        }
    }
}

/// One greedy decision: the flip taken and the best score among the
/// candidates it was chosen from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipRecord {
    pub u: usize,
    pub v: usize,
    pub insert: bool,
    pub score: f64,
    pub best_in_batch: f64,
}

/// A budgeted set of undirected edge flips. Pairs are stored as `(min, max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub kind: AttackKind,
    pub budget: usize,
    pub seed: u64,
    pub insertions: Vec<(usize, usize)>,
    pub deletions: Vec<(usize, usize)>,
    pub targets: Vec<usize>,
    pub attackers: Vec<usize>,
    pub log: Vec<FlipRecord>,
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

impl Perturbation {
    pub fn new(kind: AttackKind, budget: usize, seed: u64) -> Self {
        Self {
            kind,
            budget,
            seed,
            insertions: Vec::new(),
            deletions: Vec::new(),
            targets: Vec::new(),
            attackers: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.insertions.len() + self.deletions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&mut self, u: usize, v: usize) {
        self.insertions.push(ordered(u, v));
    }

    pub fn delete(&mut self, u: usize, v: usize) {
        self.deletions.push(ordered(u, v));
    }

    pub fn flips(&self) -> impl Iterator<Item = (usize, usize, bool)> + '_ {
        self.insertions
            .iter()
            .map(|&(u, v)| (u, v, true))
            .chain(self.deletions.iter().map(|&(u, v)| (u, v, false)))
    }

    /// Budget, attacker locality and insert/delete disjointness.
    pub fn check_invariants(&self) -> Result<()> {
        if self.len() > self.budget {
            return Err(Error::State(format!(
                "{} modifications exceed budget {}",
                self.len(),
                self.budget
            )));
        }
        let attackers: HashSet<usize> = self.attackers.iter().copied().collect();
        let mut seen = HashSet::new();
        for (u, v, _) in self.flips() {
            if !attackers.is_empty() && !attackers.contains(&u) && !attackers.contains(&v) {
                return Err(Error::State(format!(
                    "flip ({u}, {v}) touches no attacker node"
                )));
            }
            if !seen.insert((u, v)) {
                return Err(Error::State(format!("edge ({u}, {v}) appears twice")));
            }
        }
        Ok(())
    }

    /// Text form: a `#` header with budget, kind, seed, targets and
    /// attackers, then one `+ u v` or `- u v` line per flip.
    pub fn to_text(&self) -> String {
        let join = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = format!(
            "# budget {}\n# kind {}\n# seed {}\n# targets {}\n# attackers {}\n",
            self.budget,
            self.kind,
            self.seed,
            join(&self.targets),
            join(&self.attackers)
        );
        for &(u, v) in &self.insertions {
            out.push_str(&format!("+ {u} {v}\n"));
        }
        for &(u, v) in &self.deletions {
            out.push_str(&format!("- {u} {v}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut pert = Perturbation::new(AttackKind::Direct, 0, 0);
        let mut have_budget = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let mut it = header.trim().splitn(2, ' ');
                let key = it.next().unwrap_or_default();
                let value = it.next().unwrap_or_default().trim();
                let bad = || Error::at_line(format!("bad header value {value:?}"), i + 1);
                let list = |v: &str| -> Result<Vec<usize>> {
                    v.split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| s.trim().parse().map_err(|_| bad()))
                        .collect()
                };
                match key {
                    "budget" => {
                        pert.budget = value.parse().map_err(|_| bad())?;
                        have_budget = true;
                    }
                    "kind" => pert.kind = value.parse()?,
                    "seed" => pert.seed = value.parse().map_err(|_| bad())?,
                    "targets" => pert.targets = list(value)?,
                    "attackers" => pert.attackers = list(value)?,
                    _ => {}
                }
                continue;
            }
            let mut it = line.split_whitespace();
            let sign = it.next().unwrap_or_default();
            let mut node = || -> Result<usize> {
                it.next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::at_line("expected \"+ u v\" or \"- u v\"", i + 1))
            };
            let (u, v) = (node()?, node()?);
            match sign {
                "+" => pert.insert(u, v),
                "-" | "\u{2212}" => pert.delete(u, v),
                _ => return Err(Error::at_line(format!("unknown flip sign {sign:?}"), i + 1)),
            }
        }
        if !have_budget {
            return Err(Error::validation("perturbation file has no budget header"));
        }
        Ok(pert)
    }
}
