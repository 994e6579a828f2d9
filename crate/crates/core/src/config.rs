//! Plain-text configuration: `[section]` headers followed by `key = value`
//! lines. `#` starts a comment. Every entry remembers its line and the
//! column of its value so errors can point at the offending text.

use std::str::FromStr;

use crate::error::{Result, RwreError};

#[derive(Clone, Debug)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
    pub column: usize,
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T> {
        self.value.trim().parse().map_err(|_| {
            self.error(format!(
                "cannot parse `{}` for key `{}`",
                self.value, self.key
            ))
        })
    }

    /// Parses a comma-separated list.
    pub fn parse_list<T: FromStr>(&self) -> Result<Vec<T>> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| {
                    self.error(format!(
                        "cannot parse list item `{s}` for key `{}`",
                        self.key
                    ))
                })
            })
            .collect()
    }

    pub fn error(&self, message: String) -> RwreError {
        RwreError::Config {
            line: self.line,
            column: self.column,
            message,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn new(name: &str) -> Self {
        Section {
            name: name.to_string(),
            line: 0,
            entries: Vec::new(),
        }
    }

    /// Appends an entry; used when building sections programmatically.
    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line: 0,
            column: 0,
        });
        self
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| RwreError::Config {
            line: self.line,
            column: 1,
            message: format!("missing key `{key}` in section [{}]", self.name),
        })
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            Some(e) => e.parse(),
            None => Ok(default),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Config {
    pub sections: Vec<Section>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            let trimmed = content.trim();
            if trimmed.is_empty() {
                continue;
            }
            let indent = content.len() - content.trim_start().len();
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| RwreError::Config {
                    line,
                    column: indent + 1,
                    message: "unterminated section header".into(),
                })?;
                sections.push(Section {
                    name: name.trim().to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let eq = content.find('=').ok_or_else(|| RwreError::Config {
                line,
                column: indent + 1,
                message: format!("expected `key = value`, found `{trimmed}`"),
            })?;
            let key = content[..eq].trim();
            if key.is_empty() {
                return Err(RwreError::Config {
                    line,
                    column: indent + 1,
                    message: "empty key".into(),
                });
            }
            let after = &content[eq + 1..];
            let value_col = eq + 2 + (after.len() - after.trim_start().len());
            let section = sections.last_mut().ok_or_else(|| RwreError::Config {
                line,
                column: indent + 1,
                message: "entry outside of any [section]".into(),
            })?;
            section.entries.push(Entry {
                key: key.to_string(),
                value: after.trim().to_string(),
                line,
                column: value_col,
            });
        }
        Ok(Config { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require_section(&self, name: &str) -> Result<&Section> {
        self.section(name).ok_or_else(|| RwreError::Config {
            line: self.sections.last().map_or(1, |s| s.line),
            column: 1,
            message: format!("missing section [{name}]"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_positions() {
        let text = "# header\n[environment]\nkind = finite_support\n  support = 0.8:0.5, 0.3:0.5\n\n[run]\nseed=7\n";
        let cfg = Config::parse(text).unwrap();
        let env = cfg.section("environment").unwrap();
        assert_eq!(env.line, 2);
        let sup = env.require("support").unwrap();
        assert_eq!(sup.line, 4);
        assert_eq!(sup.column, 13);
        assert_eq!(
            cfg.section("run")
                .unwrap()
                .require("seed")
                .unwrap()
                .parse::<u64>()
                .unwrap(),
            7
        );
    }

    #[test]
    fn missing_key_reports_section_position() {
        let cfg = Config::parse("\n[environment]\nkind = constant\n").unwrap();
        let err = cfg
            .section("environment")
            .unwrap()
            .require("value")
            .unwrap_err();
        match err {
            RwreError::Config { line, column, .. } => assert_eq!((line, column), (2, 1)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_garbage_lines() {
        let err = Config::parse("[a]\nnot a pair\n").unwrap_err();
        assert!(matches!(
            err,
            RwreError::Config {
                line: 2,
                column: 1,
                ..
            }
        ));
        assert!(Config::parse("x = 1\n").is_err());
        assert!(Config::parse("[open\n").is_err());
    }

    #[test]
    fn bad_value_points_at_value_column() {
        let cfg = Config::parse("[run]\nseed = abc\n").unwrap();
        let err = cfg.sections[0]
            .require("seed")
            .unwrap()
            .parse::<u64>()
            .unwrap_err();
        assert!(matches!(
            err,
            RwreError::Config {
                line: 2,
                column: 8,
                ..
            }
        ));
    }
}
