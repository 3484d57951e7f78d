//! Boolean attribute policies: AND, OR and k-of-n threshold gates over
//! attribute leaves.
//!
//! Text syntax (used by scenario files):
//!
//! ```text
//! cardiology AND (researcher OR physician)
//! 2 of (a, b, c)
//! ```
//!
//! `AND` binds tighter than `OR`. Leaves are bare words of
//! `[A-Za-z0-9_.:-]` or double-quoted strings.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AccessPolicy {
    Attr(String),
    And(Vec<AccessPolicy>),
    Or(Vec<AccessPolicy>),
    Threshold {
        k: usize,
        children: Vec<AccessPolicy>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("empty attribute name")]
    EmptyAttribute,
    #[error("gate with no children")]
    EmptyGate,
    #[error("threshold {k} of {n} outside 1 <= k <= n")]
    Threshold { k: usize, n: usize },
    #[error("policy syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
}

pub type AttributeSet = BTreeSet<String>;

impl AccessPolicy {
    pub fn attr(name: impl Into<String>) -> Self {
        AccessPolicy::Attr(name.into())
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            AccessPolicy::Attr(a) if a.is_empty() => Err(PolicyError::EmptyAttribute),
            AccessPolicy::Attr(_) => Ok(()),
            AccessPolicy::And(c) | AccessPolicy::Or(c) => {
                if c.is_empty() {
                    return Err(PolicyError::EmptyGate);
                }
                c.iter().try_for_each(AccessPolicy::validate)
            }
            AccessPolicy::Threshold { k, children } => {
                if *k == 0 || *k > children.len() {
                    return Err(PolicyError::Threshold {
                        k: *k,
                        n: children.len(),
                    });
                }
                children.iter().try_for_each(AccessPolicy::validate)
            }
        }
    }

    /// Recursive evaluation against a held attribute set.
    pub fn is_satisfied_by(&self, attrs: &AttributeSet) -> bool {
        match self {
            AccessPolicy::Attr(a) => attrs.contains(a),
            AccessPolicy::And(c) => c.iter().all(|p| p.is_satisfied_by(attrs)),
            AccessPolicy::Or(c) => c.iter().any(|p| p.is_satisfied_by(attrs)),
            AccessPolicy::Threshold { k, children } => {
                children.iter().filter(|p| p.is_satisfied_by(attrs)).count() >= *k
            }
        }
    }

    /// Every attribute named by a leaf.
    pub fn attributes(&self) -> AttributeSet {
        let mut out = AttributeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut AttributeSet) {
        match self {
            AccessPolicy::Attr(a) => {
                out.insert(a.clone());
            }
            AccessPolicy::And(c)
            | AccessPolicy::Or(c)
            | AccessPolicy::Threshold { children: c, .. } => c.iter().for_each(|p| p.collect(out)),
        }
    }

    pub fn parse(text: &str) -> Result<Self, PolicyError> {
        let mut p = Parser { src: text, pos: 0 };
        let policy = p.expr()?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.error("unexpected trailing input"));
        }
        policy.validate()?;
        Ok(policy)
    }
}

pub fn policy_satisfies(attrs: &AttributeSet, policy: &AccessPolicy) -> bool {
    policy.is_satisfied_by(attrs)
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b':' | b'-')
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || !s.bytes().all(is_word_byte)
        || s.eq_ignore_ascii_case("and")
        || s.eq_ignore_ascii_case("or")
        || s.bytes().all(|b| b.is_ascii_digit())
}

impl fmt::Display for AccessPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, c: &[AccessPolicy], sep: &str| -> fmt::Result {
            f.write_str("(")?;
            for (i, p) in c.iter().enumerate() {
                if i > 0 {
                    f.write_str(sep)?;
                }
                write!(f, "{p}")?;
            }
            f.write_str(")")
        };
        match self {
            AccessPolicy::Attr(a) if needs_quotes(a) => {
                write!(f, "\"{}\"", a.replace('\\', "\\\\").replace('"', "\\\""))
            }
            AccessPolicy::Attr(a) => f.write_str(a),
            AccessPolicy::And(c) => join(f, c, " AND "),
            AccessPolicy::Or(c) => join(f, c, " OR "),
            AccessPolicy::Threshold { k, children } => {
                write!(f, "{k} of ")?;
                join(f, children, ", ")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> PolicyError {
        PolicyError::Syntax {
            pos: self.pos,
            msg: msg.to_owned(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.as_bytes().get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> Option<&str> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && is_word_byte(bytes[end]) {
            end += 1;
        }
        (end > start).then(|| &self.src[start..end])
    }

    fn keyword(&mut self, kw: &str) -> bool {
        let save = self.pos;
        match self.word() {
            Some(w) if w.eq_ignore_ascii_case(kw) => {
                self.pos += w.len();
                true
            }
            _ => {
                self.pos = save;
                false
            }
        }
    }

    fn expr(&mut self) -> Result<AccessPolicy, PolicyError> {
        let mut terms = vec![self.and_expr()?];
        while self.keyword("or") {
            terms.push(self.and_expr()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            AccessPolicy::Or(terms)
        })
    }

    fn and_expr(&mut self) -> Result<AccessPolicy, PolicyError> {
        let mut terms = vec![self.primary()?];
        while self.keyword("and") {
            terms.push(self.primary()?);
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            AccessPolicy::And(terms)
        })
    }

    fn primary(&mut self) -> Result<AccessPolicy, PolicyError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(b'"') => self.quoted(),
            Some(_) => {
                let Some(w) = self.word().map(str::to_owned) else {
                    return Err(self.error("expected attribute"));
                };
                self.pos += w.len();
                if w.bytes().all(|b| b.is_ascii_digit()) && self.keyword("of") {
                    let k: usize = w.parse().map_err(|_| self.error("threshold too large"))?;
                    return self.threshold(k);
                }
                if w.eq_ignore_ascii_case("and") || w.eq_ignore_ascii_case("or") {
                    return Err(self.error("operator where attribute expected"));
                }
                Ok(AccessPolicy::Attr(w))
            }
            None => Err(self.error("unexpected end of policy")),
        }
    }

    fn threshold(&mut self, k: usize) -> Result<AccessPolicy, PolicyError> {
        if !self.eat(b'(') {
            return Err(self.error("expected `(` after `of`"));
        }
        let mut children = vec![self.expr()?];
        while self.eat(b',') {
            children.push(self.expr()?);
        }
        if !self.eat(b')') {
            return Err(self.error("expected `)` closing threshold"));
        }
        Ok(AccessPolicy::Threshold { k, children })
    }

    fn quoted(&mut self) -> Result<AccessPolicy, PolicyError> {
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.src[self.pos..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(AccessPolicy::Attr(out));
                }
                '\\' => match chars.next() {
                    Some((_, e)) => out.push(e),
                    None => break,
                },
                c => out.push(c),
            }
        }
        Err(self.error("unterminated quoted attribute"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> AttributeSet {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn and_gate() {
        let p = AccessPolicy::parse("cardiology AND researcher").unwrap();
        assert!(policy_satisfies(&set(&["cardiology", "researcher"]), &p));
        assert!(!policy_satisfies(&set(&["cardiology"]), &p));
    }

    #[test]
    fn threshold_gate() {
        let p = AccessPolicy::parse("2 of (a, b, c)").unwrap();
        assert!(p.is_satisfied_by(&set(&["a", "c"])));
        assert!(!p.is_satisfied_by(&set(&["b"])));
    }

    #[test]
    fn single_leaf_and_disjoint() {
        let p = AccessPolicy::parse("nurse").unwrap();
        assert!(p.is_satisfied_by(&set(&["nurse", "x"])));
        assert!(!p.is_satisfied_by(&set(&["x", "y"])));
    }

    #[test]
    fn precedence() {
        let p = AccessPolicy::parse("a OR b AND c").unwrap();
        assert_eq!(
            p,
            AccessPolicy::Or(vec![
                AccessPolicy::attr("a"),
                AccessPolicy::And(vec![AccessPolicy::attr("b"), AccessPolicy::attr("c")])
            ])
        );
    }

    #[test]
    fn invalid_policies() {
        assert!(matches!(
            AccessPolicy::parse("3 of (a, b)"),
            Err(PolicyError::Threshold { k: 3, n: 2 })
        ));
        assert!(matches!(
            AccessPolicy::parse("0 of (a)"),
            Err(PolicyError::Threshold { .. })
        ));
        assert_eq!(
            AccessPolicy::parse("\"\""),
            Err(PolicyError::EmptyAttribute)
        );
        assert!(AccessPolicy::parse("a AND").is_err());
        assert!(AccessPolicy::parse("(a").is_err());
        assert!(AccessPolicy::parse("a b").is_err());
        assert_eq!(
            AccessPolicy::And(vec![]).validate(),
            Err(PolicyError::EmptyGate)
        );
    }

    fn arb_policy() -> impl Strategy<Value = AccessPolicy> {
        let leaf = prop_oneof![
            "[a-z]{1,6}".prop_map(AccessPolicy::Attr),
            Just(AccessPolicy::attr("and")),
            Just(AccessPolicy::attr("has space")),
            Just(AccessPolicy::attr("12")),
        ];
        leaf.prop_recursive(4, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(AccessPolicy::And),
                prop::collection::vec(inner.clone(), 1..4).prop_map(AccessPolicy::Or),
                prop::collection::vec(inner, 1..4).prop_flat_map(|c| {
                    let n = c.len();
                    (1..=n).prop_map(move |k| AccessPolicy::Threshold {
                        k,
                        children: c.clone(),
                    })
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_parses_back(p in arb_policy()) {
            let text = p.to_string();
            let back = AccessPolicy::parse(&text).unwrap();
            // Single-child gates print as a parenthesised child; compare by
            // semantics over the policy's own attributes.
            let attrs: Vec<_> = p.attributes().into_iter().collect();
            prop_assume!(attrs.len() <= 10);
            for mask in 0u32..(1 << attrs.len()) {
                let held: AttributeSet = attrs.iter().enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, a)| a.clone())
                    .collect();
                prop_assert_eq!(p.is_satisfied_by(&held), back.is_satisfied_by(&held));
            }
            prop_assert_eq!(back.to_string(), AccessPolicy::parse(&back.to_string()).unwrap().to_string());
        }
    }
}
