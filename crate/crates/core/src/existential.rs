//! Finite model checking for granular operator spaces.
//!
//! A [`FinitePartialSystem`] stores every relation and operation as a
//! table over a small universe of elements. [`check_mash`] evaluates a
//! selected [`AxiomSuite`] by exhaustive quantification and reports the
//! lexicographically first counterexample per axiom. Equations between
//! partial terms use weak equality: they only constrain instances where
//! both sides are defined.
//!
//! The second half of the module deals with granule operators `Γ` on
//! subsets, their fixed points and existential granules.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{mean_of, Dataset};
use crate::metrics::Distance;
use crate::subset::{powerset, Subset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("universe is empty")]
    EmptyUniverse,
    #[error("table `{table}` has the wrong shape")]
    Shape { table: &'static str },
    #[error("table `{table}` refers to element {value} outside the universe")]
    OutOfRange { table: &'static str, value: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("granulation does not cover element {0}")]
    NotCovering(usize),
    #[error("universe of {0} elements is too large for a powerset system")]
    TooLarge(usize),
}

/// Relations and operations tabulated over `0..n`. `None` entries in the
/// join and meet tables mean undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinitePartialSystem {
    pub names: Vec<String>,
    pub parthood: Vec<Vec<bool>>,
    pub order: Vec<Vec<bool>>,
    pub join: Vec<Vec<Option<usize>>>,
    pub meet: Vec<Vec<Option<usize>>>,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    pub bottom: usize,
    pub top: usize,
    pub granule: Vec<bool>,
}

impl FinitePartialSystem {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn granules(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.granule[i]).collect()
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let n = self.len();
        if n == 0 {
            return Err(SystemError::EmptyUniverse);
        }
        if !square(&self.parthood, n) {
            return Err(SystemError::Shape { table: "parthood" });
        }
        if !square(&self.order, n) {
            return Err(SystemError::Shape { table: "order" });
        }
        for (table, ops) in [("join", &self.join), ("meet", &self.meet)] {
            if !square(ops, n) {
                return Err(SystemError::Shape { table });
            }
            if let Some(&value) = ops.iter().flatten().flatten().find(|&&v| v >= n) {
                return Err(SystemError::OutOfRange { table, value });
            }
        }
        for (table, op) in [("lower", &self.lower), ("upper", &self.upper)] {
            if op.len() != n {
                return Err(SystemError::Shape { table });
            }
            if let Some(&value) = op.iter().find(|&&v| v >= n) {
                return Err(SystemError::OutOfRange { table, value });
            }
        }
        if self.granule.len() != n {
            return Err(SystemError::Shape { table: "granules" });
        }
        for (table, value) in [("bottom", self.bottom), ("top", self.top)] {
            if value >= n {
                return Err(SystemError::OutOfRange { table, value });
            }
        }
        Ok(())
    }

    fn p(&self, a: usize, b: usize) -> bool {
        self.parthood[a][b]
    }

    /// Proper parthood.
    fn pp(&self, a: usize, b: usize) -> bool {
        self.parthood[a][b] && !self.parthood[b][a]
    }

    fn j(&self, a: Option<usize>, b: Option<usize>) -> Option<usize> {
        self.join[a?][b?]
    }

    fn m(&self, a: Option<usize>, b: Option<usize>) -> Option<usize> {
        self.meet[a?][b?]
    }

    fn l(&self, a: usize) -> usize {
        self.lower[a]
    }

    fn u(&self, a: usize) -> usize {
        self.upper[a]
    }
}

fn square<T>(rows: &[Vec<T>], n: usize) -> bool {
    rows.len() == n && rows.iter().all(|r| r.len() == n)
}

fn weq(a: Option<usize>, b: Option<usize>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Axiom {
    PT1,
    PT2,
    G1,
    G2,
    G3,
    G4,
    G5,
    /// `P a^l a`
    UL1Lower,
    /// `a^ll = a^l`
    UL1Idempotent,
    /// `P a^u a^uu`
    UL1Upper,
    UL2,
    UL3,
    TB,
    WRA,
    LS,
    FU,
}

impl Axiom {
    pub const ALL: [Axiom; 16] = [
        Axiom::PT1,
        Axiom::PT2,
        Axiom::G1,
        Axiom::G2,
        Axiom::G3,
        Axiom::G4,
        Axiom::G5,
        Axiom::UL1Lower,
        Axiom::UL1Idempotent,
        Axiom::UL1Upper,
        Axiom::UL2,
        Axiom::UL3,
        Axiom::TB,
        Axiom::WRA,
        Axiom::LS,
        Axiom::FU,
    ];

    fn admissibility(self) -> bool {
        matches!(self, Axiom::WRA | Axiom::LS | Axiom::FU)
    }
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axiom::UL1Lower => "UL1(P a^l a)",
            Axiom::UL1Idempotent => "UL1(a^ll = a^l)",
            Axiom::UL1Upper => "UL1(P a^u a^uu)",
            other => return write!(f, "{other:?}"),
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxiomSuite {
    pub name: String,
    pub axioms: BTreeSet<Axiom>,
}

impl AxiomSuite {
    pub fn new(name: &str, axioms: impl IntoIterator<Item = Axiom>) -> Self {
        Self { name: name.to_string(), axioms: axioms.into_iter().collect() }
    }

    pub fn mash() -> Self {
        Self::new("mash", Axiom::ALL.into_iter().filter(|a| !a.admissibility()))
    }

    pub fn ggs() -> Self {
        Self::new("ggs", Axiom::ALL)
    }

    pub fn pre_ggs() -> Self {
        Self::new("pre-ggs", Axiom::ALL.into_iter().filter(|&a| a != Axiom::PT2))
    }

    pub fn pre_star_ggs() -> Self {
        Self::new(
            "pre-star-ggs",
            Axiom::ALL.into_iter().filter(|&a| a != Axiom::PT2 && a != Axiom::UL1Lower),
        )
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "mash" => Some(Self::mash()),
            "ggs" => Some(Self::ggs()),
            "pre-ggs" => Some(Self::pre_ggs()),
            "pre-star-ggs" => Some(Self::pre_star_ggs()),
            _ => None,
        }
    }

    pub fn contains(&self, axiom: Axiom) -> bool {
        self.axioms.contains(&axiom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxiomResult {
    pub axiom: Axiom,
    pub holds: bool,
    /// First failing tuple of element indices.
    pub witness: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxiomReport {
    pub suite: String,
    pub results: Vec<AxiomResult>,
}

impl AxiomReport {
    pub fn all_hold(&self) -> bool {
        self.results.iter().all(|r| r.holds)
    }

    pub fn failures(&self) -> Vec<Axiom> {
        self.results.iter().filter(|r| !r.holds).map(|r| r.axiom).collect()
    }

    pub fn get(&self, axiom: Axiom) -> Option<&AxiomResult> {
        self.results.iter().find(|r| r.axiom == axiom)
    }
}

fn first<I: IntoIterator<Item = Vec<usize>>>(tuples: I, mut fails: impl FnMut(&[usize]) -> bool) -> Option<Vec<usize>> {
    tuples.into_iter().find(|t| fails(t))
}

fn pairs(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).flat_map(move |a| (0..n).map(move |b| vec![a, b]))
}

fn triples(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).flat_map(move |a| (0..n).flat_map(move |b| (0..n).map(move |c| vec![a, b, c])))
}

fn singles(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n).map(|a| vec![a])
}

fn check_one(sys: &FinitePartialSystem, axiom: Axiom) -> Option<Vec<usize>> {
    let n = sys.len();
    let s = Some;
    match axiom {
        Axiom::PT1 => first(singles(n), |t| !sys.p(t[0], t[0])),
        Axiom::PT2 => first(pairs(n), |t| sys.p(t[0], t[1]) && sys.p(t[1], t[0]) && t[0] != t[1]),
        Axiom::G1 => first(pairs(n), |t| {
            let (a, b) = (s(t[0]), s(t[1]));
            !weq(sys.j(a, b), sys.j(b, a)) || !weq(sys.m(a, b), sys.m(b, a))
        }),
        Axiom::G2 => first(pairs(n), |t| {
            let (a, b) = (s(t[0]), s(t[1]));
            !weq(sys.m(sys.j(a, b), a), a) || !weq(sys.j(sys.m(a, b), a), a)
        }),
        Axiom::G3 => first(triples(n), |t| {
            let (a, b, c) = (s(t[0]), s(t[1]), s(t[2]));
            !weq(sys.j(sys.m(a, b), c), sys.m(sys.j(a, c), sys.j(b, c)))
        }),
        Axiom::G4 => first(triples(n), |t| {
            let (a, b, c) = (s(t[0]), s(t[1]), s(t[2]));
            !weq(sys.m(sys.j(a, b), c), sys.j(sys.m(a, c), sys.m(b, c)))
        }),
        Axiom::G5 => first(pairs(n), |t| {
            // undefined joins or meets drop out of the biconditional
            let (a, b) = (t[0], t[1]);
            let le = sys.order[a][b];
            let by_join = sys.join[a][b].is_some_and(|v| le != (v == b));
            let by_meet = sys.meet[a][b].is_some_and(|v| le != (v == a));
            by_join || by_meet
        }),
        Axiom::UL1Lower => first(singles(n), |t| !sys.p(sys.l(t[0]), t[0])),
        Axiom::UL1Idempotent => first(singles(n), |t| sys.l(sys.l(t[0])) != sys.l(t[0])),
        Axiom::UL1Upper => first(singles(n), |t| !sys.p(sys.u(t[0]), sys.u(sys.u(t[0])))),
        Axiom::UL2 => first(pairs(n), |t| {
            let (a, b) = (t[0], t[1]);
            sys.p(a, b) && !(sys.p(sys.l(a), sys.l(b)) && sys.p(sys.u(a), sys.u(b)))
        }),
        Axiom::UL3 => {
            let (bot, top) = (sys.bottom, sys.top);
            let ok = sys.l(bot) == bot && sys.u(bot) == bot && sys.p(sys.l(top), top) && sys.p(sys.u(top), top);
            (!ok).then(|| vec![bot, top])
        }
        Axiom::TB => first(singles(n), |t| !(sys.p(sys.bottom, t[0]) && sys.p(t[0], sys.top))),
        Axiom::WRA | Axiom::LS | Axiom::FU => unreachable!("admissibility is checked as a whole"),
    }
}

/// Evaluates every axiom in `suite` over the whole universe.
pub fn check_mash(sys: &FinitePartialSystem, suite: &AxiomSuite) -> Result<AxiomReport, SystemError> {
    sys.validate()?;
    let mut results: Vec<AxiomResult> = suite
        .axioms
        .iter()
        .filter(|a| !a.admissibility())
        .map(|&axiom| {
            let witness = check_one(sys, axiom);
            AxiomResult { axiom, holds: witness.is_none(), witness }
        })
        .collect();
    if suite.axioms.iter().any(|a| a.admissibility()) {
        let adm = check_admissible(sys, &sys.granules(), &AdmissibleOptions::default());
        let found = [
            (Axiom::WRA, adm.wra_witness.map(|x| vec![x])),
            (Axiom::LS, adm.ls_witness.map(|(a, x)| vec![a, x])),
            (Axiom::FU, adm.fu_witness.map(|(x, a)| vec![x, a])),
        ];
        for (axiom, witness) in found {
            if suite.contains(axiom) {
                results.push(AxiomResult { axiom, holds: witness.is_none(), witness });
            }
        }
    }
    Ok(AxiomReport { suite: suite.name.clone(), results })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdmissibleOptions {
    /// Retry unreachable approximations with terms of depth two over both
    /// lattice operations.
    pub mixed_fallback: bool,
}

impl Default for AdmissibleOptions {
    fn default() -> Self {
        Self { mixed_fallback: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Admissibility {
    pub wra: bool,
    pub ls: bool,
    pub fu: bool,
    /// Element whose lower or upper approximation is not reachable.
    pub wra_witness: Option<usize>,
    /// Elements only reached through the mixed-term fallback.
    pub wra_mixed: Vec<usize>,
    /// `(a, x)` with `P a x` but not `P a x^l`.
    pub ls_witness: Option<(usize, usize)>,
    /// Granule pair with no common definite proper whole.
    pub fu_witness: Option<(usize, usize)>,
}

impl Admissibility {
    pub fn all(&self) -> bool {
        self.wra && self.ls && self.fu
    }
}

/// Elements expressible as iterated joins of granules. The bottom element
/// counts as the empty join.
fn join_closure(sys: &FinitePartialSystem, granules: &[usize]) -> Vec<bool> {
    let mut reach = vec![false; sys.len()];
    reach[sys.bottom] = true;
    let mut frontier: Vec<usize> = Vec::new();
    for &g in granules {
        if !reach[g] {
            reach[g] = true;
        }
        frontier.push(g);
    }
    let mut known: Vec<usize> = (0..sys.len()).filter(|&i| reach[i]).collect();
    while let Some(x) = frontier.pop() {
        for y in known.clone() {
            for v in [sys.join[x][y], sys.join[y][x]].into_iter().flatten() {
                if !reach[v] {
                    reach[v] = true;
                    known.push(v);
                    frontier.push(v);
                }
            }
        }
    }
    reach
}

fn mixed_terms(sys: &FinitePartialSystem, granules: &[usize]) -> Vec<bool> {
    let mut depth1: BTreeSet<usize> = granules.iter().copied().collect();
    depth1.insert(sys.bottom);
    for &a in granules {
        for &b in granules {
            depth1.extend(sys.join[a][b]);
            depth1.extend(sys.meet[a][b]);
        }
    }
    let mut reach = vec![false; sys.len()];
    for &a in &depth1 {
        reach[a] = true;
        for &b in &depth1 {
            for v in [sys.join[a][b], sys.meet[a][b]].into_iter().flatten() {
                reach[v] = true;
            }
        }
    }
    reach
}

/// Checks WRA, LS and FU for the given granules. WRA is checked per
/// element, so different elements may use different terms. FU ranges over
/// distinct granule pairs.
pub fn check_admissible(sys: &FinitePartialSystem, granules: &[usize], opts: &AdmissibleOptions) -> Admissibility {
    let n = sys.len();
    let joins = join_closure(sys, granules);
    let mixed = opts.mixed_fallback.then(|| mixed_terms(sys, granules));
    let mut wra_witness = None;
    let mut wra_mixed = Vec::new();
    for x in 0..n {
        let targets = [sys.l(x), sys.u(x)];
        if targets.iter().all(|&t| joins[t]) {
            continue;
        }
        if let Some(m) = &mixed {
            if targets.iter().all(|&t| joins[t] || m[t]) {
                wra_mixed.push(x);
                continue;
            }
        }
        wra_witness = Some(x);
        break;
    }

    let ls_witness = granules
        .iter()
        .flat_map(|&a| (0..n).map(move |x| (a, x)))
        .find(|&(a, x)| sys.p(a, x) && !sys.p(a, sys.l(x)));

    let definite: Vec<usize> = (0..n).filter(|&z| sys.l(z) == z && sys.u(z) == z).collect();
    let fu_witness = granules
        .iter()
        .flat_map(|&x| granules.iter().map(move |&a| (x, a)))
        .filter(|&(x, a)| x != a)
        .find(|&(x, a)| !definite.iter().any(|&z| sys.pp(x, z) && sys.pp(a, z)));

    Admissibility {
        wra: wra_witness.is_none(),
        ls: ls_witness.is_none(),
        fu: fu_witness.is_none(),
        wra_witness,
        wra_mixed,
        ls_witness,
        fu_witness,
    }
}

/// Set system over the full powerset of `0..n`: union, intersection,
/// inclusion, lower approximation as the union of granules inside `x`,
/// upper approximation as the union of granules meeting `x`. Element `i`
/// of the result is the subset with bitmask `i`.
pub fn build_set_hgos(n: usize, granulation: &[Subset]) -> Result<(FinitePartialSystem, Vec<Subset>), SystemError> {
    if n >= 16 {
        return Err(SystemError::TooLarge(n));
    }
    let covered = granulation.iter().fold(Subset::empty(n), |acc, g| acc.union(g));
    if let Some(missing) = (0..n).find(|&i| !covered.contains(i)) {
        return Err(SystemError::NotCovering(missing));
    }
    let elems: Vec<Subset> = powerset(n).collect();
    let size = elems.len();
    let idx = |s: &Subset| s.to_mask() as usize;
    let lower = elems
        .iter()
        .map(|x| idx(&granulation.iter().filter(|g| g.is_subset(x)).fold(Subset::empty(n), |a, g| a.union(g))))
        .collect();
    let upper = elems
        .iter()
        .map(|x| idx(&granulation.iter().filter(|g| g.intersects(x)).fold(Subset::empty(n), |a, g| a.union(g))))
        .collect();
    let incl: Vec<Vec<bool>> = elems.iter().map(|a| elems.iter().map(|b| a.is_subset(b)).collect()).collect();
    let mut granule = vec![false; size];
    for g in granulation {
        granule[idx(g)] = true;
    }
    let sys = FinitePartialSystem {
        names: elems.iter().map(|s| s.to_string()).collect(),
        parthood: incl.clone(),
        order: incl,
        join: (0..size).map(|a| (0..size).map(|b| Some(a | b)).collect()).collect(),
        meet: (0..size).map(|a| (0..size).map(|b| Some(a & b)).collect()).collect(),
        lower,
        upper,
        bottom: 0,
        top: size - 1,
        granule,
    };
    Ok((sys, elems))
}

// ---------------------------------------------------------------------
// text format

fn parse_err(line: usize, message: impl Into<String>) -> SystemError {
    SystemError::Parse { line, message: message.into() }
}

/// Reads the plain-text system format written by [`write_system`].
pub fn parse_system(text: &str) -> Result<FinitePartialSystem, SystemError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut names: Option<Vec<String>> = None;
    let mut scalars: HashMap<&str, (usize, Vec<String>)> = HashMap::new();
    let mut grids: HashMap<&str, (usize, Vec<Vec<String>>)> = HashMap::new();
    let mut i = 0;
    while i < lines.len() {
        let (ln, line) = lines[i];
        let Some((key, rest)) = line.split_once(':') else {
            return Err(parse_err(ln, format!("expected `key: ...`, found `{line}`")));
        };
        let key = key.trim();
        let tokens: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        i += 1;
        match key {
            "universe" => names = Some(tokens),
            "bottom" | "top" | "granules" | "lower" | "upper" => {
                scalars.insert(key_static(key), (ln, tokens));
            }
            "parthood" | "order" | "join" | "meet" => {
                let n = names.as_ref().ok_or_else(|| parse_err(ln, "`universe` must come first"))?.len();
                if !tokens.is_empty() {
                    return Err(parse_err(ln, format!("`{key}:` takes its rows on the following lines")));
                }
                if i + n > lines.len() {
                    return Err(parse_err(ln, format!("`{key}` needs {n} rows")));
                }
                let rows = lines[i..i + n]
                    .iter()
                    .map(|(_, l)| l.split_whitespace().map(str::to_string).collect())
                    .collect();
                grids.insert(key_static(key), (ln, rows));
                i += n;
            }
            other => return Err(parse_err(ln, format!("unknown key `{other}`"))),
        }
    }
    let names = names.ok_or_else(|| parse_err(0, "missing `universe`"))?;
    let n = names.len();
    if n == 0 {
        return Err(SystemError::EmptyUniverse);
    }
    let lookup = |ln: usize, tok: &str| -> Result<usize, SystemError> {
        names.iter().position(|x| x == tok).ok_or_else(|| parse_err(ln, format!("unknown element `{tok}`")))
    };
    let scalar = |key: &str| -> Result<(usize, &Vec<String>), SystemError> {
        scalars.get(key).map(|(ln, t)| (*ln, t)).ok_or_else(|| parse_err(0, format!("missing `{key}`")))
    };
    let single = |key: &str| -> Result<usize, SystemError> {
        let (ln, toks) = scalar(key)?;
        match toks.as_slice() {
            [t] => lookup(ln, t),
            _ => Err(parse_err(ln, format!("`{key}` takes one element"))),
        }
    };
    let unary = |key: &str| -> Result<Vec<usize>, SystemError> {
        let (ln, toks) = scalar(key)?;
        if toks.len() != n {
            return Err(parse_err(ln, format!("`{key}` needs {n} entries")));
        }
        toks.iter().map(|t| lookup(ln, t)).collect()
    };
    let grid = |key: &str| -> Result<(usize, &Vec<Vec<String>>), SystemError> {
        let (ln, rows) = grids.get(key).ok_or_else(|| parse_err(0, format!("missing `{key}`")))?;
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(parse_err(ln + r + 1, format!("`{key}` row needs {n} entries")));
            }
        }
        Ok((*ln, rows))
    };
    let relation = |key: &str| -> Result<Vec<Vec<bool>>, SystemError> {
        let (ln, rows) = grid(key)?;
        rows.iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .map(|t| match t.as_str() {
                        "0" => Ok(false),
                        "1" => Ok(true),
                        _ => Err(parse_err(ln + r + 1, format!("expected 0 or 1, found `{t}`"))),
                    })
                    .collect()
            })
            .collect()
    };
    let operation = |key: &str| -> Result<Vec<Vec<Option<usize>>>, SystemError> {
        let (ln, rows) = grid(key)?;
        rows.iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter()
                    .map(|t| if t == "-" { Ok(None) } else { lookup(ln + r + 1, t).map(Some) })
                    .collect()
            })
            .collect()
    };
    let mut granule = vec![false; n];
    let (gln, gtoks) = scalar("granules")?;
    for t in gtoks {
        granule[lookup(gln, t)?] = true;
    }
    let sys = FinitePartialSystem {
        parthood: relation("parthood")?,
        order: relation("order")?,
        join: operation("join")?,
        meet: operation("meet")?,
        lower: unary("lower")?,
        upper: unary("upper")?,
        bottom: single("bottom")?,
        top: single("top")?,
        granule,
        names,
    };
    sys.validate()?;
    Ok(sys)
}

fn key_static(key: &str) -> &'static str {
    match key {
        "bottom" => "bottom",
        "top" => "top",
        "granules" => "granules",
        "lower" => "lower",
        "upper" => "upper",
        "parthood" => "parthood",
        "order" => "order",
        "join" => "join",
        _ => "meet",
    }
}

pub fn write_system(sys: &FinitePartialSystem) -> String {
    let name = |i: usize| sys.names[i].as_str();
    let mut out = String::new();
    let list = |xs: &mut dyn Iterator<Item = usize>| xs.map(name).collect::<Vec<_>>().join(" ");
    out += &format!("universe: {}\n", sys.names.join(" "));
    out += &format!("bottom: {}\n", name(sys.bottom));
    out += &format!("top: {}\n", name(sys.top));
    out += &format!("granules: {}\n", list(&mut sys.granules().into_iter()));
    out += &format!("lower: {}\n", list(&mut sys.lower.iter().copied()));
    out += &format!("upper: {}\n", list(&mut sys.upper.iter().copied()));
    for (key, rel) in [("parthood", &sys.parthood), ("order", &sys.order)] {
        out += &format!("{key}:\n");
        for row in rel {
            out += &row.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join(" ");
            out.push('\n');
        }
    }
    for (key, op) in [("join", &sys.join), ("meet", &sys.meet)] {
        out += &format!("{key}:\n");
        for row in op {
            out += &row.iter().map(|v| v.map_or("-", name)).collect::<Vec<_>>().join(" ");
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------
// granule operators

/// A deterministic map on subsets of a fixed universe.
pub trait GranuleOperator {
    fn apply(&self, e: &Subset) -> Subset;

    fn name(&self) -> &str {
        "operator"
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl GranuleOperator for Identity {
    fn apply(&self, e: &Subset) -> Subset {
        e.clone()
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F>(pub F);

impl<F: Fn(&Subset) -> Subset> GranuleOperator for FnOperator<F> {
    fn apply(&self, e: &Subset) -> Subset {
        (self.0)(e)
    }
}

/// Recomputes the ball of a member set (mean centre, largest member
/// distance as radius) and returns every point of the dataset it covers.
pub struct BallRefinement<'a> {
    pub points: &'a Dataset,
    pub distance: &'a dyn Distance,
}

impl<'a> BallRefinement<'a> {
    pub fn new(points: &'a Dataset, distance: &'a dyn Distance) -> Self {
        Self { points, distance }
    }
}

impl GranuleOperator for BallRefinement<'_> {
    fn apply(&self, e: &Subset) -> Subset {
        let n = self.points.len();
        let Some(center) = mean_of(self.points.dim(), e.iter().map(|i| self.points.point(i))) else {
            return Subset::empty(n);
        };
        let radius = e
            .iter()
            .map(|i| self.distance.eval(self.points.point(i), &center))
            .fold(0.0, f64::max);
        Subset::from_indices(n, (0..n).filter(|&i| self.distance.eval(self.points.point(i), &center) <= radius))
    }

    fn name(&self) -> &str {
        "ball-refinement"
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixpointError {
    #[error("max_n must be at least 1")]
    ZeroSteps,
    #[error("trajectory entered a cycle of length {period} after {} steps", .trajectory.len())]
    Cycle { period: usize, trajectory: Vec<Subset> },
    #[error("no fixed point within {} steps", .trajectory.len())]
    Diverged { trajectory: Vec<Subset> },
    #[error("{subsets} candidate seeds exceed the enumeration budget of {budget}")]
    Budget { subsets: u128, budget: u64 },
    #[error("seed {0} is not a subset of the granule")]
    SeedOutside(Subset),
}

/// Least `n ≥ 1` with `Γ^{n+1}(E) = Γ^n(E)`, together with `Γ^n(E)`.
pub fn iterate_to_fixpoint(
    gamma: &dyn GranuleOperator,
    e: &Subset,
    max_n: usize,
) -> Result<(usize, Subset), FixpointError> {
    if max_n == 0 {
        return Err(FixpointError::ZeroSteps);
    }
    let mut trajectory = vec![gamma.apply(e)];
    let mut seen: HashMap<Subset, usize> = HashMap::new();
    seen.insert(trajectory[0].clone(), 0);
    loop {
        let n = trajectory.len();
        let cur = &trajectory[n - 1];
        let next = gamma.apply(cur);
        if &next == cur {
            return Ok((n, next));
        }
        if let Some(&at) = seen.get(&next) {
            return Err(FixpointError::Cycle { period: n - at, trajectory });
        }
        if n >= max_n {
            trajectory.push(next);
            return Err(FixpointError::Diverged { trajectory });
        }
        seen.insert(next.clone(), n);
        trajectory.push(next);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExistentialOptions {
    /// Largest number of seed subsets enumerated.
    pub budget: u64,
    pub max_steps: usize,
    /// Candidate seeds; when set, only these are tried.
    pub seeds: Option<Vec<Subset>>,
}

impl Default for ExistentialOptions {
    fn default() -> Self {
        Self { budget: 1 << 20, max_steps: 4096, seeds: None }
    }
}

/// A seed `E ⊆ G` whose `Γ` trajectory stabilises exactly at `G`.
/// Seeds are tried in increasing bitmask order over the members of `G`.
pub fn existential_seed(
    g: &Subset,
    gamma: &dyn GranuleOperator,
    opts: &ExistentialOptions,
) -> Result<Option<Subset>, FixpointError> {
    let reaches = |e: &Subset| -> Result<bool, FixpointError> {
        match iterate_to_fixpoint(gamma, e, opts.max_steps) {
            Ok((_, fixed)) => Ok(&fixed == g),
            Err(FixpointError::Cycle { .. }) => Ok(false),
            Err(other) => Err(other),
        }
    };
    if let Some(seeds) = &opts.seeds {
        for e in seeds {
            if !e.is_subset(g) {
                return Err(FixpointError::SeedOutside(e.clone()));
            }
            if reaches(e)? {
                return Ok(Some(e.clone()));
            }
        }
        return Ok(None);
    }
    let members = g.to_vec();
    let subsets = 1u128 << members.len().min(127);
    if members.len() >= 64 || subsets > opts.budget as u128 {
        return Err(FixpointError::Budget { subsets, budget: opts.budget });
    }
    for mask in 0..(1u64 << members.len()) {
        let e = Subset::from_indices(
            g.universe(),
            members.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &x)| x),
        );
        if reaches(&e)? {
            return Ok(Some(e));
        }
    }
    Ok(None)
}

pub fn is_existential_granule(
    g: &Subset,
    gamma: &dyn GranuleOperator,
    opts: &ExistentialOptions,
) -> Result<bool, FixpointError> {
    existential_seed(g, gamma, opts).map(|s| s.is_some())
}

/// Tabulates `Γ` over the elements of a set system.
pub fn operator_table(elements: &[Subset], gamma: &dyn GranuleOperator) -> Result<Vec<usize>, Subset> {
    let index: HashMap<&Subset, usize> = elements.iter().enumerate().map(|(i, s)| (s, i)).collect();
    elements
        .iter()
        .map(|e| {
            let out = gamma.apply(e);
            index.get(&out).copied().ok_or(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EggsReport {
    /// Granules are exactly the image of `Γ`.
    pub g1: bool,
    pub g1_witness: Option<usize>,
    /// Every element's trajectory stabilises.
    pub g2: bool,
    pub g2_witness: Option<usize>,
}

impl EggsReport {
    pub fn holds(&self) -> bool {
        self.g1 && self.g2
    }
}

/// Checks the existential granule conditions for a tabulated `Γ`.
pub fn check_eggs(sys: &FinitePartialSystem, gamma: &[usize]) -> Result<EggsReport, SystemError> {
    sys.validate()?;
    let n = sys.len();
    if gamma.len() != n {
        return Err(SystemError::Shape { table: "gamma" });
    }
    if let Some(&value) = gamma.iter().find(|&&v| v >= n) {
        return Err(SystemError::OutOfRange { table: "gamma", value });
    }
    let mut image = vec![false; n];
    for &v in gamma {
        image[v] = true;
    }
    let g1_witness = (0..n).find(|&x| sys.granule[x] != image[x]);
    // a trajectory on n elements either repeats its last state or cycles within n steps
    let g2_witness = (0..n).find(|&x| {
        let mut cur = gamma[x];
        for _ in 0..n {
            let next = gamma[cur];
            if next == cur {
                return false;
            }
            cur = next;
        }
        true
    });
    Ok(EggsReport { g1: g1_witness.is_none(), g1_witness, g2: g2_witness.is_none(), g2_witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Euclidean;
    use crate::subset::set_partitions;

    fn chain2() -> FinitePartialSystem {
        FinitePartialSystem {
            names: vec!["bot".into(), "top".into()],
            parthood: vec![vec![true, true], vec![false, true]],
            order: vec![vec![true, true], vec![false, true]],
            join: vec![vec![Some(0), Some(1)], vec![Some(1), Some(1)]],
            meet: vec![vec![Some(0), Some(0)], vec![Some(0), Some(1)]],
            lower: vec![0, 1],
            upper: vec![0, 1],
            bottom: 0,
            top: 1,
            granule: vec![false, true],
        }
    }

    #[test]
    fn chain_passes_mash() {
        let r = check_mash(&chain2(), &AxiomSuite::mash()).unwrap();
        assert!(r.all_hold(), "{r:?}");
        assert!(check_mash(&chain2(), &AxiomSuite::ggs()).unwrap().all_hold());
    }

    #[test]
    fn antisymmetry_violation() {
        let mut sys = chain2();
        sys.parthood[1][0] = true;
        let r = check_mash(&sys, &AxiomSuite::mash()).unwrap();
        let pt2 = r.get(Axiom::PT2).unwrap();
        assert!(!pt2.holds);
        assert_eq!(pt2.witness, Some(vec![0, 1]));
        let pre = check_mash(&sys, &AxiomSuite::pre_ggs()).unwrap();
        assert!(pre.get(Axiom::PT2).is_none());
    }

    #[test]
    fn malformed_tables_are_rejected() {
        let mut sys = chain2();
        sys.lower = vec![0];
        assert_eq!(check_mash(&sys, &AxiomSuite::mash()), Err(SystemError::Shape { table: "lower" }));
        let mut sys = chain2();
        sys.join[0][0] = Some(7);
        assert!(matches!(sys.validate(), Err(SystemError::OutOfRange { table: "join", .. })));
    }

    #[test]
    fn set_hgos_pawlak_examples() {
        let p = vec![Subset::from_indices(3, [0, 1]), Subset::from_indices(3, [2])];
        let (sys, elems) = build_set_hgos(3, &p).unwrap();
        let x = Subset::from_indices(3, [0, 2]).to_mask() as usize;
        assert_eq!(elems[sys.lower[x]], Subset::from_indices(3, [2]));
        assert_eq!(elems[sys.upper[x]], Subset::full(3));
        assert_eq!(sys.lower[0], 0);
        assert_eq!(sys.upper[7], 7);
        for g in &p {
            let i = g.to_mask() as usize;
            assert_eq!((sys.lower[i], sys.upper[i]), (i, i));
        }
        assert_eq!(build_set_hgos(3, &p[..1]).unwrap_err(), SystemError::NotCovering(2));
    }

    #[test]
    fn set_hgos_admissible_for_partitions() {
        for n in 1..=4 {
            for p in set_partitions(n) {
                let (sys, _) = build_set_hgos(n, &p).unwrap();
                let adm = check_admissible(&sys, &sys.granules(), &AdmissibleOptions::default());
                assert!(adm.all(), "{p:?} {adm:?}");
                assert!(adm.wra_mixed.is_empty());
                assert!(check_mash(&sys, &AxiomSuite::ggs()).unwrap().all_hold());
            }
        }
    }

    #[test]
    fn missing_block_breaks_wra() {
        let p = vec![Subset::from_indices(3, [0, 1]), Subset::from_indices(3, [2])];
        let (sys, _) = build_set_hgos(3, &p).unwrap();
        let adm = check_admissible(&sys, &[p[0].to_mask() as usize], &AdmissibleOptions::default());
        assert!(!adm.wra);
        assert_eq!(adm.wra_witness, Some(Subset::from_indices(3, [2]).to_mask() as usize));
    }

    #[test]
    fn text_round_trip() {
        let p = vec![Subset::from_indices(2, [0]), Subset::from_indices(2, [1])];
        let (sys, _) = build_set_hgos(2, &p).unwrap();
        let text = write_system(&sys);
        assert_eq!(parse_system(&text).unwrap(), sys);
        let mut partial = chain2();
        partial.join[0][1] = None;
        assert_eq!(parse_system(&write_system(&partial)).unwrap(), partial);
        let err = parse_system("universe: a\nbottom: b\n").unwrap_err();
        assert!(matches!(err, SystemError::Parse { .. }));
    }

    #[test]
    fn fixpoint_examples() {
        let e = Subset::from_indices(5, [1, 3]);
        assert_eq!(iterate_to_fixpoint(&Identity, &e, 10).unwrap(), (1, e.clone()));
        // grow by one element per step towards the full set
        let grow = FnOperator(|s: &Subset| {
            let mut t = s.clone();
            if let Some(x) = (0..5).find(|&x| !s.contains(x)) {
                t.insert(x);
            }
            t
        });
        let (n, g) = iterate_to_fixpoint(&grow, &Subset::empty(5), 10).unwrap();
        assert_eq!(g, Subset::full(5));
        assert!(n <= 5);
        assert_eq!(iterate_to_fixpoint(&grow, &g, 10).unwrap(), (1, g));
        let a = Subset::from_indices(3, [0]);
        let b = Subset::from_indices(3, [1]);
        let (a2, b2) = (a.clone(), b.clone());
        let flip = FnOperator(move |s: &Subset| if *s == a2 { b2.clone() } else { a2.clone() });
        assert!(matches!(iterate_to_fixpoint(&flip, &a, 10), Err(FixpointError::Cycle { period: 2, .. })));
    }

    #[test]
    fn existential_examples() {
        let opts = ExistentialOptions::default();
        let g = Subset::from_indices(6, [0, 2, 5]);
        assert!(is_existential_granule(&g, &Identity, &opts).unwrap());

        let ds = Dataset::new(vec![vec![0.0], vec![1.0], vec![2.0], vec![10.0], vec![11.0]]).unwrap();
        let gamma = BallRefinement::new(&ds, &Euclidean);
        let cluster = Subset::from_indices(5, [0, 1, 2]);
        assert!(is_existential_granule(&cluster, &gamma, &opts).unwrap());
        // {0, 2} is not closed: its ball covers 1
        assert!(!is_existential_granule(&Subset::from_indices(5, [0, 2]), &gamma, &opts).unwrap());

        let tight = ExistentialOptions { budget: 4, ..ExistentialOptions::default() };
        assert!(matches!(
            is_existential_granule(&cluster, &gamma, &tight),
            Err(FixpointError::Budget { subsets: 8, budget: 4 })
        ));
        let seeded = ExistentialOptions { seeds: Some(vec![cluster.clone()]), ..tight };
        assert!(is_existential_granule(&cluster, &gamma, &seeded).unwrap());
    }

    #[test]
    fn eggs_examples() {
        let (mut sys, _) = build_set_hgos(2, &[Subset::full(2)]).unwrap();
        sys.granule = vec![true; 4];
        let id: Vec<usize> = (0..4).collect();
        assert!(check_eggs(&sys, &id).unwrap().holds());
        let to_top = vec![3; 4];
        let r = check_eggs(&sys, &to_top).unwrap();
        assert!(!r.g1);
        assert_eq!(r.g1_witness, Some(0));
        assert!(r.g2);
        let mut cyc = id.clone();
        cyc.swap(1, 2);
        let r = check_eggs(&sys, &cyc).unwrap();
        assert!(!r.g2);
        assert_eq!(r.g2_witness, Some(1));
    }

    #[test]
    fn suite_presets() {
        assert!(AxiomSuite::pre_star_ggs().axioms.is_subset(&AxiomSuite::pre_ggs().axioms));
        assert!(AxiomSuite::pre_ggs().axioms.is_subset(&AxiomSuite::ggs().axioms));
        assert!(!AxiomSuite::mash().contains(Axiom::WRA));
        assert_eq!(AxiomSuite::by_name("pre-star-ggs").unwrap().axioms.len(), 14);
        assert!(AxiomSuite::by_name("hgos").is_none());
    }
}
