//! Channel-name patterns.
//!
//! Names are `:`-separated segments. In a pattern, `*` matches any run of
//! characters inside one segment and a segment that is exactly `**` matches
//! zero or more whole segments.

use super::ChannelDbError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    /// `**`
    Any,
    /// A literal segment, possibly containing `*` wildcards.
    Glob(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    raw: String,
    segments: Vec<Segment>,
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Self, ChannelDbError> {
        let malformed = || ChannelDbError::MalformedPattern(raw.to_string());
        if raw.is_empty() {
            return Err(malformed());
        }
        let mut segments = Vec::new();
        for part in raw.split(':') {
            if part.is_empty() {
                return Err(malformed());
            }
            if part == "**" {
                segments.push(Segment::Any);
                continue;
            }
            if part.contains("**") {
                return Err(malformed());
            }
            if !part
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '*')
            {
                return Err(malformed());
            }
            segments.push(Segment::Glob(part.to_string()));
        }
        Ok(Pattern {
            raw: raw.to_string(),
            segments,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn matches(&self, name: &str) -> bool {
        let parts: Vec<&str> = name.split(':').collect();
        match_segments(&self.segments, &parts)
    }
}

fn match_segments(pattern: &[Segment], parts: &[&str]) -> bool {
    match pattern.split_first() {
        None => parts.is_empty(),
        Some((Segment::Any, rest)) => {
            (0..=parts.len()).any(|skip| match_segments(rest, &parts[skip..]))
        }
        Some((Segment::Glob(g), rest)) => match parts.split_first() {
            Some((head, tail)) => wildcard(g.as_bytes(), head.as_bytes()) && match_segments(rest, tail),
            None => false,
        },
    }
}

/// Single-segment match where `*` is the only metacharacter.
fn wildcard(pat: &[u8], text: &[u8]) -> bool {
    let (mut p, mut t) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while t < text.len() {
        if p < pat.len() && pat[p] == b'*' {
            star = Some((p, t));
            p += 1;
        } else if p < pat.len() && pat[p] == text[t] {
            p += 1;
            t += 1;
        } else if let Some((sp, st)) = star {
            p = sp + 1;
            t = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    pat[p..].iter().all(|&c| c == b'*')
}
