//! Intent language for decision conditioning.
//!
//! ```text
//! intent := clause ("&" clause)* window?
//! clause := atom | "forall" ident "in" set ":" atom
//! atom   := ("schedule" | "notSchedule") "(" arg ")"
//! set    := "G" digit | "{" nat ("," nat)* "}"
//! window := "@" "[" nat "," nat "]"
//! ```
//!
//! `notSchedule(6) @ [1700,2200]` forbids scheduling user 6 during
//! timesteps 1700..=2200; `forall u in G1: notSchedule(u)` forbids every
//! user of group 1.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::model::{MimoAction, SchemaA2};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntentError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown predicate `{name}` at byte {pos}")]
    UnknownPredicate { pos: usize, name: String },
    #[error("unknown group G{0}")]
    UnknownGroup(usize),
    #[error("unknown user {0}")]
    UnknownUser(usize),
    #[error("window start {start} is after end {end}")]
    BadWindow { start: u64, end: u64 },
    #[error("user {user} is both required and forbidden")]
    Conflict { user: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UserSet {
    Group(usize),
    Users(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    User(usize),
    Var(String),
}

/// `schedule(x)` when `scheduled`, else `notSchedule(x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub scheduled: bool,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clause {
    Atom(Atom),
    Forall { var: String, set: UserSet, atom: Atom },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intent {
    pub name: String,
    pub clauses: Vec<Clause>,
    /// Inclusive activity window; always active when absent.
    pub window: Option<(u64, u64)>,
    /// Resolved members per clause, in clause order.
    members: Vec<Vec<usize>>,
}

/// A ground literal: user must (`true`) or must not (`false`) be scheduled.
pub type Literal = (usize, bool);

impl Intent {
    pub fn parse(text: &str, schema: &SchemaA2) -> Result<Self, IntentError> {
        let mut p = Parser { src: text, pos: 0 };
        let (clauses, window) = p.intent()?;
        if let Some((start, end)) = window {
            if start > end {
                return Err(IntentError::BadWindow { start, end });
            }
        }
        let mut members = Vec::with_capacity(clauses.len());
        for clause in &clauses {
            members.push(resolve(clause, schema)?);
        }
        let mut intent = Self { name: String::new(), clauses, window, members };
        intent.name = intent.to_string();
        Ok(intent)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn is_active(&self, t: u64) -> bool {
        self.window.is_none_or(|(s, e)| (s..=e).contains(&t))
    }

    /// Ground literals implied by the body.
    pub fn literals(&self) -> impl Iterator<Item = Literal> + '_ {
        self.clauses.iter().zip(&self.members).flat_map(|(clause, users)| {
            let scheduled = match clause {
                Clause::Atom(a) | Clause::Forall { atom: a, .. } => a.scheduled,
            };
            users.iter().map(move |&u| (u, scheduled))
        })
    }

    /// Whether the body holds for `action`, ignoring the window.
    pub fn holds(&self, action: &MimoAction) -> bool {
        self.literals().all(|(u, scheduled)| action.is_scheduled(u) == scheduled)
    }

    /// True when the intent is inactive at `t` or its body holds.
    pub fn satisfies(&self, action: &MimoAction, t: u64) -> bool {
        !self.is_active(t) || self.holds(action)
    }
}

fn resolve(clause: &Clause, schema: &SchemaA2) -> Result<Vec<usize>, IntentError> {
    let check_user = |u: usize| if u < SchemaA2::USERS { Ok(u) } else { Err(IntentError::UnknownUser(u)) };
    match clause {
        Clause::Atom(Atom { target: Target::User(u), .. }) => Ok(alloc::vec![check_user(*u)?]),
        Clause::Atom(Atom { target: Target::Var(v), .. }) => {
            Err(IntentError::Syntax { pos: 0, msg: alloc::format!("unbound variable `{v}`") })
        }
        Clause::Forall { var, set, atom } => {
            if atom.target != Target::Var(var.clone()) {
                return Err(IntentError::Syntax {
                    pos: 0,
                    msg: alloc::format!("quantified atom must use the bound variable `{var}`"),
                });
            }
            match set {
                UserSet::Group(g) => Ok(schema.members(*g).ok_or(IntentError::UnknownGroup(*g))?.collect()),
                UserSet::Users(users) => users.iter().map(|&u| check_user(u)).collect(),
            }
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = if self.scheduled { "schedule" } else { "notSchedule" };
        match &self.target {
            Target::User(u) => write!(f, "{name}({u})"),
            Target::Var(v) => write!(f, "{name}({v})"),
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clause::Atom(a) => write!(f, "{a}"),
            Clause::Forall { var, set, atom } => {
                write!(f, "forall {var} in ")?;
                match set {
                    UserSet::Group(g) => write!(f, "G{g}")?,
                    UserSet::Users(users) => {
                        f.write_str("{")?;
                        for (i, u) in users.iter().enumerate() {
                            if i > 0 {
                                f.write_str(",")?;
                            }
                            write!(f, "{u}")?;
                        }
                        f.write_str("}")?;
                    }
                }
                write!(f, ": {atom}")
            }
        }
    }
}

/// Canonical text; parsing it yields the same intent.
impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{c}")?;
        }
        if let Some((s, e)) = self.window {
            write!(f, " @ [{s},{e}]")?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, msg: &str) -> Result<T, IntentError> {
        Err(IntentError::Syntax { pos: self.pos, msg: msg.to_string() })
    }

    fn skip_ws(&mut self) {
        while self.src.as_bytes().get(self.pos).is_some_and(u8::is_ascii_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    fn eat(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), IntentError> {
        if self.eat(byte) {
            Ok(())
        } else {
            self.err(&alloc::format!("expected `{}`", byte as char))
        }
    }

    fn ident(&mut self) -> Result<(usize, &str), IntentError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        if !bytes.get(start).is_some_and(u8::is_ascii_alphabetic) {
            return self.err("expected identifier");
        }
        while bytes.get(self.pos).is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_') {
            self.pos += 1;
        }
        Ok((start, &self.src[start..self.pos]))
    }

    fn nat(&mut self) -> Result<u64, IntentError> {
        self.skip_ws();
        let start = self.pos;
        while self.src.as_bytes().get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        match self.src[start..self.pos].parse() {
            Ok(n) => Ok(n),
            Err(_) => {
                self.pos = start;
                self.err("expected natural number")
            }
        }
    }

    fn intent(&mut self) -> Result<(Vec<Clause>, Option<(u64, u64)>), IntentError> {
        let mut clauses = alloc::vec![self.clause()?];
        while self.eat(b'&') {
            clauses.push(self.clause()?);
        }
        let window = if self.eat(b'@') {
            self.expect(b'[')?;
            let start = self.nat()?;
            self.expect(b',')?;
            let end = self.nat()?;
            self.expect(b']')?;
            Some((start, end))
        } else {
            None
        };
        if self.peek().is_some() {
            return self.err("unexpected trailing input");
        }
        Ok((clauses, window))
    }

    fn clause(&mut self) -> Result<Clause, IntentError> {
        let save = self.pos;
        let (_, word) = self.ident()?;
        if word != "forall" {
            self.pos = save;
            return Ok(Clause::Atom(self.atom()?));
        }
        let (_, var) = self.ident()?;
        let var = var.to_string();
        let (_, kw) = self.ident()?;
        if kw != "in" {
            return self.err("expected `in`");
        }
        let set = self.set()?;
        self.expect(b':')?;
        let atom = self.atom()?;
        Ok(Clause::Forall { var, set, atom })
    }

    fn set(&mut self) -> Result<UserSet, IntentError> {
        if self.eat(b'{') {
            let mut users = alloc::vec![self.nat()? as usize];
            while self.eat(b',') {
                users.push(self.nat()? as usize);
            }
            self.expect(b'}')?;
            return Ok(UserSet::Users(users));
        }
        let (_, word) = self.ident()?;
        match word.strip_prefix('G').filter(|d| d.len() == 1).and_then(|d| d.parse().ok()) {
            Some(g) => Ok(UserSet::Group(g)),
            None => self.err("expected group `G<digit>` or `{users}`"),
        }
    }

    fn atom(&mut self) -> Result<Atom, IntentError> {
        let (start, name) = self.ident()?;
        let scheduled = match name {
            "schedule" => true,
            "notSchedule" => false,
            other => return Err(IntentError::UnknownPredicate { pos: start, name: other.to_string() }),
        };
        self.expect(b'(')?;
        let target = if self.peek().is_some_and(|b| b.is_ascii_digit()) {
            Target::User(self.nat()? as usize)
        } else {
            Target::Var(self.ident()?.1.to_string())
        };
        self.expect(b')')?;
        Ok(Atom { scheduled, target })
    }
}

/// Intents parsed from a file: one per line, `#` starts a comment.
pub fn parse_intent_file(text: &str, schema: &SchemaA2) -> Result<Vec<Intent>, (usize, IntentError)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        out.push(Intent::parse(body, schema).map_err(|e| (i + 1, e))?);
    }
    Ok(out)
}

/// Rejects intent sets that require and forbid the same user at a moment
/// when both are active.
pub fn check_consistency(intents: &[Intent]) -> Result<(), IntentError> {
    let overlap = |a: &Intent, b: &Intent| match (a.window, b.window) {
        (Some((s1, e1)), Some((s2, e2))) => s1 <= e2 && s2 <= e1,
        _ => true,
    };
    for (i, a) in intents.iter().enumerate() {
        for b in &intents[i..] {
            if !overlap(a, b) {
                continue;
            }
            let required: BTreeSet<usize> = a.literals().chain(b.literals()).filter(|l| l.1).map(|l| l.0).collect();
            if let Some((user, _)) = a.literals().chain(b.literals()).find(|l| !l.1 && required.contains(&l.0)) {
                return Err(IntentError::Conflict { user });
            }
        }
    }
    Ok(())
}

/// Whether `action` satisfies every intent at `t`.
pub fn satisfies_all(intents: &[Intent], action: &MimoAction, t: u64) -> bool {
    intents.iter().all(|i| i.satisfies(action, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> SchemaA2 {
        SchemaA2::default()
    }

    fn parse(text: &str) -> Intent {
        Intent::parse(text, &schema()).unwrap()
    }

    #[test]
    fn parses_windowed_negation() {
        let i = parse("notSchedule(6) @ [1700,2200]");
        assert_eq!(i.window, Some((1700, 2200)));
        assert_eq!(i.clauses, [Clause::Atom(Atom { scheduled: false, target: Target::User(6) })]);
        assert_eq!(i.to_string(), "notSchedule(6) @ [1700,2200]");
    }

    #[test]
    fn parses_quantifier_over_group() {
        let i = parse("forall u in G1: notSchedule(u)");
        assert_eq!(i.literals().collect::<Vec<_>>(), [(3, false), (4, false)]);
        assert_eq!(parse("forall u in {0, 2}: schedule(u)").to_string(), "forall u in {0,2}: schedule(u)");
    }

    #[test]
    fn parses_conjunction() {
        let i = parse("schedule(3) & notSchedule(5)");
        assert_eq!(i.clauses.len(), 2);
        assert_eq!(i.window, None);
    }

    #[test]
    fn reports_errors() {
        assert!(matches!(
            Intent::parse("notSchedule(6) @ [2200,1700]", &schema()),
            Err(IntentError::BadWindow { .. })
        ));
        assert_eq!(Intent::parse("forall u in G3: notSchedule(u)", &schema()), Err(IntentError::UnknownGroup(3)));
        assert_eq!(Intent::parse("schedule(7)", &schema()), Err(IntentError::UnknownUser(7)));
        assert!(matches!(
            Intent::parse("exceeds(3)", &schema()),
            Err(IntentError::UnknownPredicate { pos: 0, .. })
        ));
        assert!(matches!(Intent::parse("schedule(3", &schema()), Err(IntentError::Syntax { pos: 10, .. })));
        assert!(Intent::parse("forall u in G1: notSchedule(v)", &schema()).is_err());
        assert!(Intent::parse("schedule(u)", &schema()).is_err());
        assert!(Intent::parse("schedule(1) schedule(2)", &schema()).is_err());
    }

    #[test]
    fn evaluates_with_window() {
        let i = parse("notSchedule(6) @ [1700,2200]");
        let mask = MimoAction::from_users(7, [1, 6]);
        assert!(!i.satisfies(&mask, 1800));
        assert!(i.satisfies(&mask, 1699));
        assert!(i.satisfies(&mask, 2201));
        assert!(!i.satisfies(&mask, 2200));
    }

    #[test]
    fn universal_over_unscheduled_group_holds() {
        let i = parse("forall u in G1: notSchedule(u)");
        assert!(i.satisfies(&MimoAction::from_users(7, [0, 5]), 0));
        assert!(!i.satisfies(&MimoAction::from_users(7, [4]), 0));
    }

    #[test]
    fn intent_file_skips_comments() {
        let text = "# constraints\nnotSchedule(6) @ [1,2]  # user six\n\nschedule(0)\n";
        let intents = parse_intent_file(text, &schema()).unwrap();
        assert_eq!(intents.len(), 2);
        assert_eq!(parse_intent_file("schedule(9)", &schema()).unwrap_err().0, 1);
    }

    #[test]
    fn detects_conflicts() {
        assert_eq!(check_consistency(&[parse("schedule(2) & notSchedule(2)")]), Err(IntentError::Conflict { user: 2 }));
        assert!(check_consistency(&[parse("schedule(2) @ [0,5]"), parse("notSchedule(2) @ [6,9]")]).is_ok());
        assert!(check_consistency(&[parse("schedule(2) @ [0,6]"), parse("notSchedule(2) @ [6,9]")]).is_err());
    }
}
