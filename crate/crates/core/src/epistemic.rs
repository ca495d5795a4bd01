//! A small Kripke-model checker with individual and distributed knowledge.
//!
//! Worlds carry atom valuations; each agent has an arbitrary accessibility
//! relation (no frame conditions are imposed, and a helper builds the
//! equivalence relations of partition-style models). `K{a} f` holds at a
//! world when `f` holds at every world `a` considers possible; `D{a,b} f`
//! quantifies over the intersection of the members' relations, so a group
//! can know more than any member. An empty intersection makes `D` vacuously
//! true; callers who care can inspect [`KripkeModel::distributed_relation`].
//!
//! Formulas use prefix notation: `! f`, `& f g`, `| f g`, `-> f g`,
//! `K{agent} f`, `D{a,b,...} f`, plus parentheses and atom names.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// A named world and the atoms true at it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldSpec {
    pub name: String,
    #[serde(default)]
    pub atoms: BTreeSet<String>,
}

/// A Kripke model: named worlds with valuations and one accessibility
/// relation per agent.
#[derive(Debug, Clone)]
pub struct KripkeModel {
    worlds: Vec<String>,
    world_index: BTreeMap<String, usize>,
    atoms: BTreeSet<String>,
    valuation: Vec<BTreeSet<String>>,
    /// Per agent, per source world, the set of accessible world indices.
    access: BTreeMap<String, Vec<BTreeSet<usize>>>,
    /// Designated evaluation world, when the model declares one.
    pub actual_world: Option<String>,
}

impl KripkeModel {
    /// Build a model from world specs and explicit edges per agent.
    ///
    /// The atom vocabulary is `atom_universe` when given (world valuations
    /// must stay inside it), otherwise the union of all valuations. Edges
    /// must reference declared worlds; world names must be unique.
    pub fn new(
        worlds: Vec<WorldSpec>,
        agents: BTreeMap<String, Vec<(String, String)>>,
        atom_universe: Option<BTreeSet<String>>,
        actual_world: Option<String>,
    ) -> Result<Self> {
        if worlds.is_empty() {
            return Err(Error::validation("a model needs at least one world"));
        }
        let mut names = Vec::with_capacity(worlds.len());
        let mut world_index = BTreeMap::new();
        let mut valuation = Vec::with_capacity(worlds.len());
        for (i, w) in worlds.iter().enumerate() {
            if world_index.insert(w.name.clone(), i).is_some() {
                return Err(Error::validation(format!(
                    "world `{}` declared twice",
                    w.name
                )));
            }
            names.push(w.name.clone());
            valuation.push(w.atoms.clone());
        }
        let atoms = match atom_universe {
            Some(universe) => {
                for w in &worlds {
                    if let Some(stray) = w.atoms.difference(&universe).next() {
                        return Err(Error::validation(format!(
                            "world `{}` uses atom `{stray}` outside the declared vocabulary",
                            w.name
                        )));
                    }
                }
                universe
            }
            None => worlds.iter().flat_map(|w| w.atoms.clone()).collect(),
        };
        let mut access = BTreeMap::new();
        for (agent, edges) in agents {
            let mut per_world = vec![BTreeSet::new(); names.len()];
            for (from, to) in edges {
                let f = *world_index
                    .get(&from)
                    .ok_or_else(|| Error::UnknownWorld(from.clone()))?;
                let t = *world_index
                    .get(&to)
                    .ok_or_else(|| Error::UnknownWorld(to.clone()))?;
                per_world[f].insert(t);
            }
            access.insert(agent, per_world);
        }
        if let Some(actual) = &actual_world {
            if !world_index.contains_key(actual) {
                return Err(Error::UnknownWorld(actual.clone()));
            }
        }
        Ok(KripkeModel {
            worlds: names,
            world_index,
            atoms,
            valuation,
            access,
            actual_world,
        })
    }

    /// Build a model whose agents see equivalence classes: each agent's
    /// relation connects exactly the worlds sharing a partition block.
    /// Blocks must cover every world exactly once.
    pub fn from_partitions(
        worlds: Vec<WorldSpec>,
        partitions: BTreeMap<String, Vec<Vec<String>>>,
        atom_universe: Option<BTreeSet<String>>,
        actual_world: Option<String>,
    ) -> Result<Self> {
        let world_names: BTreeSet<String> = worlds.iter().map(|w| w.name.clone()).collect();
        let mut agents = BTreeMap::new();
        for (agent, blocks) in partitions {
            let mut seen = BTreeSet::new();
            let mut edges = Vec::new();
            for block in &blocks {
                for a in block {
                    if !world_names.contains(a) {
                        return Err(Error::UnknownWorld(a.clone()));
                    }
                    if !seen.insert(a.clone()) {
                        return Err(Error::validation(format!(
                            "agent `{agent}` lists world `{a}` in two partition blocks"
                        )));
                    }
                    for b in block {
                        edges.push((a.clone(), b.clone()));
                    }
                }
            }
            if seen.len() != world_names.len() {
                let missing = world_names.difference(&seen).next().unwrap();
                return Err(Error::validation(format!(
                    "agent `{agent}`'s partition does not cover world `{missing}`"
                )));
            }
            agents.insert(agent, edges);
        }
        KripkeModel::new(worlds, agents, atom_universe, actual_world)
    }

    pub fn worlds(&self) -> &[String] {
        &self.worlds
    }

    pub fn agents(&self) -> impl Iterator<Item = &str> {
        self.access.keys().map(String::as_str)
    }

    pub fn atoms(&self) -> &BTreeSet<String> {
        &self.atoms
    }

    /// Evaluate a formula at a named world.
    pub fn eval(&self, world: &str, formula: &Formula) -> Result<bool> {
        let w = self.world_id(world)?;
        self.eval_at(w, formula)
    }

    /// The intersection of the group members' accessibility relations, as
    /// sorted (from, to) world-name pairs. Errors on an empty group or an
    /// undeclared member. An empty result means distributed knowledge at
    /// some (or every) world is vacuous.
    pub fn distributed_relation(&self, group: &[String]) -> Result<Vec<(String, String)>> {
        if group.is_empty() {
            return Err(Error::validation("agent group must not be empty"));
        }
        let mut pairs = Vec::new();
        for w in 0..self.worlds.len() {
            let succ = self.group_successors(w, group)?;
            for t in succ {
                pairs.push((self.worlds[w].clone(), self.worlds[t].clone()));
            }
        }
        pairs.sort();
        Ok(pairs)
    }

    /// Worlds the whole group considers possible from `world` (intersection
    /// across members), as names.
    pub fn group_accessible(&self, world: &str, group: &[String]) -> Result<Vec<String>> {
        if group.is_empty() {
            return Err(Error::validation("agent group must not be empty"));
        }
        let w = self.world_id(world)?;
        Ok(self
            .group_successors(w, group)?
            .into_iter()
            .map(|t| self.worlds[t].clone())
            .collect())
    }

    fn world_id(&self, world: &str) -> Result<usize> {
        self.world_index
            .get(world)
            .copied()
            .ok_or_else(|| Error::UnknownWorld(world.to_string()))
    }

    fn agent_successors(&self, agent: &str) -> Result<&Vec<BTreeSet<usize>>> {
        self.access
            .get(agent)
            .ok_or_else(|| Error::UndeclaredAgent(agent.to_string()))
    }

    fn group_successors(&self, w: usize, group: &[String]) -> Result<BTreeSet<usize>> {
        let mut iter = group.iter();
        let first = iter.next().expect("group checked non-empty");
        let mut acc = self.agent_successors(first)?[w].clone();
        for agent in iter {
            let next = &self.agent_successors(agent)?[w];
            acc = acc.intersection(next).copied().collect();
        }
        Ok(acc)
    }

    fn eval_at(&self, w: usize, formula: &Formula) -> Result<bool> {
        match formula {
            Formula::Atom(a) => {
                if !self.atoms.contains(a) {
                    return Err(Error::UndeclaredAtom(a.clone()));
                }
                Ok(self.valuation[w].contains(a))
            }
            // Both operands are always evaluated so undeclared names are
            // reported regardless of truth values.
            Formula::Not(f) => Ok(!self.eval_at(w, f)?),
            Formula::And(f, g) => {
                let a = self.eval_at(w, f)?;
                let b = self.eval_at(w, g)?;
                Ok(a && b)
            }
            Formula::Or(f, g) => {
                let a = self.eval_at(w, f)?;
                let b = self.eval_at(w, g)?;
                Ok(a || b)
            }
            Formula::Implies(f, g) => {
                let a = self.eval_at(w, f)?;
                let b = self.eval_at(w, g)?;
                Ok(!a || b)
            }
            Formula::Knows(agent, f) => {
                let succ = &self.agent_successors(agent)?[w];
                for &t in succ {
                    if !self.eval_at(t, f)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Distributed(group, f) => {
                if group.is_empty() {
                    return Err(Error::validation(
                        "distributed knowledge needs a non-empty agent group",
                    ));
                }
                let succ = self.group_successors(w, group)?;
                for t in succ {
                    if !self.eval_at(t, f)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }
}

/// Epistemic formula over atoms, boolean connectives, and knowledge
/// operators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    /// Individual knowledge: the agent's relation.
    Knows(String, Box<Formula>),
    /// Distributed knowledge: the intersection of the group's relations.
    Distributed(Vec<String>, Box<Formula>),
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(x) => write!(f, "! {x}"),
            Formula::And(x, y) => write!(f, "& {x} {y}"),
            Formula::Or(x, y) => write!(f, "| {x} {y}"),
            Formula::Implies(x, y) => write!(f, "-> {x} {y}"),
            Formula::Knows(agent, x) => write!(f, "K{{{agent}}} {x}"),
            Formula::Distributed(group, x) => write!(f, "D{{{}}} {x}", group.join(",")),
        }
    }
}

/// Parse a prefix-notation formula, e.g. `D{alice,bob} -> p3 | p3 p4`.
pub fn parse_formula(src: &str) -> Result<Formula> {
    let tokens = tokenize(src)?;
    let mut pos = 0;
    let formula = parse_expr(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(Error::parse(format!(
            "trailing input after formula: `{}`",
            describe(&tokens[pos])
        )));
    }
    Ok(formula)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Bang,
    Amp,
    Pipe,
    Arrow,
    LParen,
    RParen,
    /// K{agent} or D{a,b,...} with its member list.
    Modal(char, Vec<String>),
    Ident(String),
}

fn describe(t: &Token) -> String {
    match t {
        Token::Bang => "!".into(),
        Token::Amp => "&".into(),
        Token::Pipe => "|".into(),
        Token::Arrow => "->".into(),
        Token::LParen => "(".into(),
        Token::RParen => ")".into(),
        Token::Modal(op, group) => format!("{op}{{{}}}", group.join(",")),
        Token::Ident(s) => s.clone(),
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '!' => {
                tokens.push(Token::Bang);
                i += 1;
            }
            '&' => {
                tokens.push(Token::Amp);
                i += 1;
            }
            '|' => {
                tokens.push(Token::Pipe);
                i += 1;
            }
            '(' => {
                tokens.push(Token::LParen);
                i += 1;
            }
            ')' => {
                tokens.push(Token::RParen);
                i += 1;
            }
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    tokens.push(Token::Arrow);
                    i += 2;
                } else {
                    return Err(Error::parse("`-` must be part of `->`".to_string()));
                }
            }
            _ if is_ident_char(c) => {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                // `K` or `D` immediately followed by a brace is a modal
                // operator; anything else is an atom name.
                if (word == "K" || word == "D") && chars.get(i) == Some(&'{') {
                    i += 1;
                    let mut group = Vec::new();
                    loop {
                        while i < chars.len() && chars[i] == ' ' {
                            i += 1;
                        }
                        let astart = i;
                        while i < chars.len() && is_ident_char(chars[i]) {
                            i += 1;
                        }
                        if i == astart {
                            return Err(Error::parse(format!(
                                "expected agent name in `{word}{{...}}`"
                            )));
                        }
                        group.push(chars[astart..i].iter().collect::<String>());
                        while i < chars.len() && chars[i] == ' ' {
                            i += 1;
                        }
                        match chars.get(i) {
                            Some(',') => i += 1,
                            Some('}') => {
                                i += 1;
                                break;
                            }
                            _ => {
                                return Err(Error::parse(format!(
                                    "unterminated agent list in `{word}{{...}}`"
                                )))
                            }
                        }
                    }
                    tokens.push(Token::Modal(word.chars().next().unwrap(), group));
                } else {
                    tokens.push(Token::Ident(word));
                }
            }
            _ => {
                return Err(Error::parse(format!("unexpected character `{c}`")));
            }
        }
    }
    if tokens.is_empty() {
        return Err(Error::parse("empty formula".to_string()));
    }
    Ok(tokens)
}

fn parse_expr(tokens: &[Token], pos: &mut usize) -> Result<Formula> {
    let token = tokens
        .get(*pos)
        .ok_or_else(|| Error::parse("formula ends where an operand is required".to_string()))?;
    *pos += 1;
    match token {
        Token::Bang => Ok(Formula::Not(Box::new(parse_expr(tokens, pos)?))),
        Token::Amp => {
            let a = parse_expr(tokens, pos)?;
            let b = parse_expr(tokens, pos)?;
            Ok(Formula::And(Box::new(a), Box::new(b)))
        }
        Token::Pipe => {
            let a = parse_expr(tokens, pos)?;
            let b = parse_expr(tokens, pos)?;
            Ok(Formula::Or(Box::new(a), Box::new(b)))
        }
        Token::Arrow => {
            let a = parse_expr(tokens, pos)?;
            let b = parse_expr(tokens, pos)?;
            Ok(Formula::Implies(Box::new(a), Box::new(b)))
        }
        Token::Modal(op, group) => {
            let body = parse_expr(tokens, pos)?;
            if *op == 'K' {
                if group.len() != 1 {
                    return Err(Error::parse(format!(
                        "K takes exactly one agent, got {}",
                        group.len()
                    )));
                }
                Ok(Formula::Knows(group[0].clone(), Box::new(body)))
            } else {
                Ok(Formula::Distributed(group.clone(), Box::new(body)))
            }
        }
        Token::Ident(name) => Ok(Formula::Atom(name.clone())),
        Token::LParen => {
            let inner = parse_expr(tokens, pos)?;
            match tokens.get(*pos) {
                Some(Token::RParen) => {
                    *pos += 1;
                    Ok(inner)
                }
                _ => Err(Error::parse("unclosed parenthesis".to_string())),
            }
        }
        Token::RParen => Err(Error::parse("unexpected `)`".to_string())),
    }
}
