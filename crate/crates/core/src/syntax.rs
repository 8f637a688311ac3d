//! Textual schema syntax: `action,c1,c2,…,tail` where `tail` is `#` or a
//! terminal name, and the bare `#` for the root schema.

use std::fmt;

use thiserror::Error;

use crate::model::{valid_terminal_name, ActionLabel, ClassId, Schema, Tail};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema syntax error at token {index} ({token:?}): {message}")]
pub struct SyntaxError {
    /// 0-based index of the offending comma-separated token.
    pub index: usize,
    pub token: String,
    pub message: String,
}

fn err(index: usize, token: &str, message: &str) -> SyntaxError {
    SyntaxError {
        index,
        token: token.to_string(),
        message: message.to_string(),
    }
}

pub fn parse_schema(text: &str) -> Result<Schema, SyntaxError> {
    let tokens: Vec<&str> = text.split(',').map(str::trim).collect();
    if tokens == ["#"] {
        return Ok(Schema::Root);
    }
    if tokens.len() < 2 {
        return Err(err(
            tokens.len().saturating_sub(1),
            tokens[0],
            "expected an action followed by a tail",
        ));
    }
    let action =
        ActionLabel::new(tokens[0]).map_err(|_| err(0, tokens[0], "invalid action label"))?;
    let last = tokens.len() - 1;
    let mut classes = Vec::with_capacity(last - 1);
    for (index, tok) in tokens.iter().enumerate().take(last).skip(1) {
        let id: u32 = tok
            .parse()
            .map_err(|_| err(index, tok, "expected a positive class id"))?;
        classes.push(ClassId::new(id).map_err(|_| err(index, tok, "class ids start at 1"))?);
    }
    let tail_tok = tokens[last];
    let tail = if tail_tok == "#" {
        Tail::Wildcard
    } else if tail_tok.parse::<u64>().is_ok() {
        return Err(err(last, tail_tok, "missing tail: expected # or a terminal name"));
    } else if valid_terminal_name(tail_tok) {
        Tail::Terminal(tail_tok.to_string())
    } else {
        return Err(err(last, tail_tok, "invalid terminal name"));
    };
    Ok(Schema::Pattern {
        action,
        classes,
        tail,
    })
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schema::Root => f.write_str("#"),
            Schema::Pattern {
                action,
                classes,
                tail,
            } => {
                write!(f, "{action}")?;
                for c in classes {
                    write!(f, ",{c}")?;
                }
                match tail {
                    Tail::Wildcard => f.write_str(",#"),
                    Tail::Terminal(t) => write!(f, ",{t}"),
                }
            }
        }
    }
}

impl std::str::FromStr for Schema {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_schema(s)
    }
}

/// One schema per non-blank line.
pub fn parse_schema_list(text: &str) -> Result<Vec<Schema>, (usize, SyntaxError)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_schema(l).map_err(|e| (n + 1, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grammar() {
        let h = parse_schema("alpha,1,2,#").unwrap();
        assert_eq!(
            h,
            Schema::wildcard(
                ActionLabel::new("alpha").unwrap(),
                vec![ClassId::new(1).unwrap(), ClassId::new(2).unwrap()]
            )
        );
        assert_eq!(parse_schema("#").unwrap(), Schema::Root);
        assert_eq!(parse_schema(" # ").unwrap(), Schema::Root);
        assert_eq!(parse_schema("alpha, 1 ,f1").unwrap().to_string(), "alpha,1,f1");
        assert_eq!(parse_schema("alpha,#").unwrap().height(), 0);
    }

    #[test]
    fn errors_point_at_token() {
        let e = parse_schema("alpha,1,2").unwrap_err();
        assert_eq!((e.index, e.token.as_str()), (2, "2"));
        let e = parse_schema("alpha,x,#").unwrap_err();
        assert_eq!(e.index, 1);
        let e = parse_schema("alpha,0,#").unwrap_err();
        assert_eq!(e.index, 1);
        let e = parse_schema("alpha").unwrap_err();
        assert_eq!(e.index, 0);
        assert!(parse_schema("").is_err());
        assert!(parse_schema("#,1,#").is_err());
        assert!(parse_schema("alpha,1,f:2").is_err());
    }

    #[test]
    fn list_reports_line() {
        let l = parse_schema_list("#\n\nalpha,1,#\nbeta,2\n").unwrap_err();
        assert_eq!(l.0, 4);
        assert_eq!(parse_schema_list("#\nalpha,1,#\n").unwrap().len(), 2);
    }

    fn schema_strategy() -> impl Strategy<Value = Schema> {
        let pattern = (
            "[a-z][a-z0-9_]{0,5}",
            prop::collection::vec(1u32..50, 0..5),
            prop::option::of("[a-z][a-z0-9]{0,4}"),
        )
            .prop_map(|(a, cs, t)| Schema::Pattern {
                action: ActionLabel::new(a).unwrap(),
                classes: cs.into_iter().map(|c| ClassId::new(c).unwrap()).collect(),
                tail: t.map_or(Tail::Wildcard, Tail::Terminal),
            });
        prop_oneof![1 => Just(Schema::Root), 9 => pattern]
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(h in schema_strategy()) {
            prop_assert_eq!(parse_schema(&h.to_string()).unwrap(), h);
        }
    }
}
