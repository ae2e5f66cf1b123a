//! SRT and WebVTT transcript parsing.
//!
//! Cue times are held in whole milliseconds, which is the resolution of both
//! timestamp grammars, so parsing and serializing are exact inverses.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranscriptFormat {
    Srt,
    Vtt,
}

impl FromStr for TranscriptFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srt" => Ok(TranscriptFormat::Srt),
            "vtt" | "webvtt" => Ok(TranscriptFormat::Vtt),
            other => Err(Error::InvalidParameter(format!("unknown transcript format {other:?}"))),
        }
    }
}

/// One timed utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptCue {
    pub start_ms: u64,
    pub end_ms: u64,
    pub text: String,
}

impl TranscriptCue {
    pub fn new(start_ms: u64, end_ms: u64, text: impl Into<String>) -> Self {
        TranscriptCue { start_ms, end_ms, text: text.into() }
    }

    pub fn start_s(&self) -> f64 {
        self.start_ms as f64 / 1000.0
    }

    pub fn end_s(&self) -> f64 {
        self.end_ms as f64 / 1000.0
    }
}

/// Parse transcript bytes. Empty (or whitespace-only) input yields no cues.
///
/// Text lines of a cue are joined with a single space. The result is stably
/// sorted by start time.
pub fn parse_transcript(bytes: &[u8], format: TranscriptFormat) -> Result<Vec<TranscriptCue>> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::Parse { line, message: "content is not valid UTF-8".into() }
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();

    let mut cues = match format {
        TranscriptFormat::Srt => parse_blocks(&lines, 0, ',', false)?,
        TranscriptFormat::Vtt => {
            let first = lines.iter().position(|l| !l.trim().is_empty());
            match first {
                None => Vec::new(),
                Some(i) => {
                    let header = lines[i].trim();
                    if header != "WEBVTT" && !header.starts_with("WEBVTT ") && !header.starts_with("WEBVTT\t") {
                        return Err(Error::Parse { line: i + 1, message: "missing WEBVTT header".into() });
                    }
                    // Header block runs to the first blank line.
                    let mut j = i + 1;
                    while j < lines.len() && !lines[j].trim().is_empty() {
                        j += 1;
                    }
                    parse_blocks(&lines, j, '.', true)?
                }
            }
        }
    };
    cues.sort_by_key(|c| c.start_ms);
    Ok(cues)
}

fn parse_blocks(lines: &[&str], mut i: usize, sep: char, vtt: bool) -> Result<Vec<TranscriptCue>> {
    let mut cues = Vec::new();
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let block_start = i;
        let mut end = i;
        while end < lines.len() && !lines[end].trim().is_empty() {
            end += 1;
        }
        let block = &lines[block_start..end];
        i = end;

        if vtt {
            let head = block[0].trim_start();
            if head.starts_with("NOTE") || head == "STYLE" || head == "REGION" {
                continue;
            }
        }

        // Timing is on the first line, or on the second after an index/identifier.
        let timing_at = if block[0].contains("-->") {
            0
        } else if block.len() > 1 && block[1].contains("-->") {
            if !vtt && block[0].trim().parse::<u64>().is_err() {
                return Err(Error::Parse {
                    line: block_start + 1,
                    message: format!("expected cue index, found {:?}", block[0]),
                });
            }
            1
        } else {
            return Err(Error::Parse { line: block_start + 1, message: "cue block has no timing line".into() });
        };
        let line_no = block_start + timing_at + 1;
        let (start_ms, end_ms) = parse_timing(block[timing_at], sep, vtt, line_no)?;

        let text_lines = block[timing_at + 1..].iter().map(|l| if vtt { strip_vtt_tags(l) } else { l.to_string() });
        let text = text_lines.map(|l| l.trim().to_owned()).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
        cues.push(TranscriptCue { start_ms, end_ms, text });
    }
    Ok(cues)
}

fn parse_timing(line: &str, sep: char, vtt: bool, line_no: usize) -> Result<(u64, u64)> {
    let err = |message: String| Error::Parse { line: line_no, message };
    let (left, right) = line.split_once("-->").ok_or_else(|| err("missing -->".into()))?;
    let start_tok = left.trim();
    // VTT cue settings follow the end timestamp.
    let end_tok = right.split_whitespace().next().unwrap_or("");
    if !vtt && right.split_whitespace().nth(1).is_some() {
        return Err(err(format!("unexpected text after end timestamp in {line:?}")));
    }
    let start =
        parse_timestamp(start_tok, sep, vtt).ok_or_else(|| err(format!("malformed timestamp {start_tok:?}")))?;
    let end = parse_timestamp(end_tok, sep, vtt).ok_or_else(|| err(format!("malformed timestamp {end_tok:?}")))?;
    if end < start {
        return Err(err(format!("cue ends before it starts ({start_tok} --> {end_tok})")));
    }
    Ok((start, end))
}

/// `HH:MM:SS<sep>mmm` in milliseconds. WebVTT also allows `MM:SS.mmm`.
fn parse_timestamp(tok: &str, sep: char, allow_short: bool) -> Option<u64> {
    let (clock, millis) = tok.split_once(sep)?;
    if millis.len() != 3 || !millis.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let parts: Vec<&str> = clock.split(':').collect();
    let (h, m, s) = match parts.as_slice() {
        [h, m, s] => (*h, *m, *s),
        [m, s] if allow_short => ("0", *m, *s),
        _ => return None,
    };
    let num = |t: &str, min_len: usize| -> Option<u64> {
        if t.len() < min_len || !t.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        t.parse().ok()
    };
    let h = num(h, 1)?;
    let m = num(m, 2)?;
    let s = num(s, 2)?;
    if m > 59 || s > 59 || (parts.len() == 3 && parts[0].len() < 2) {
        return None;
    }
    let ms: u64 = millis.parse().ok()?;
    Some(((h * 60 + m) * 60 + s) * 1000 + ms)
}

/// Remove WebVTT inline markup: `<c>`, `<v Name>`, `<i>`, karaoke timestamps and friends.
fn strip_vtt_tags(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        match rest[open..].find('>') {
            Some(close) => rest = &rest[open + close + 1..],
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn format_timestamp(ms: u64, sep: char) -> String {
    let (h, rem) = (ms / 3_600_000, ms % 3_600_000);
    let (m, rem) = (rem / 60_000, rem % 60_000);
    let (s, millis) = (rem / 1000, rem % 1000);
    format!("{h:02}:{m:02}:{s:02}{sep}{millis:03}")
}

/// Write cues in the given format. Inverse of [`parse_transcript`] for cues whose
/// text is a single trimmed line.
pub fn serialize_transcript(cues: &[TranscriptCue], format: TranscriptFormat) -> String {
    let mut out = String::new();
    match format {
        TranscriptFormat::Srt => {
            for (n, cue) in cues.iter().enumerate() {
                let _ = write!(
                    out,
                    "{}\n{} --> {}\n{}\n\n",
                    n + 1,
                    format_timestamp(cue.start_ms, ','),
                    format_timestamp(cue.end_ms, ','),
                    cue.text
                );
            }
        }
        TranscriptFormat::Vtt => {
            out.push_str("WEBVTT\n\n");
            for cue in cues {
                let _ = write!(
                    out,
                    "{} --> {}\n{}\n\n",
                    format_timestamp(cue.start_ms, '.'),
                    format_timestamp(cue.end_ms, '.'),
                    cue.text
                );
            }
        }
    }
    out
}
