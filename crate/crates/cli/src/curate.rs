//! Interactive lexicon curation on a terminal.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, Write};
use std::path::PathBuf;

use anyhow::{Context as _, Result};
use densitylens::ontology::{curate_session, Candidate, CurationAction, CurationOperator};
use densitylens::textprep::tokenize;

use crate::artifact;
use crate::stages::{read_flagged, read_reviews, Context};

pub const LEXICON_OUT: &str = "lexicon.txt";
pub const CURATION_LOG: &str = "curation_log.txt";

/// Reads one decision per line: `a` accept, `r` reject, `+ phrase` add,
/// `q` stop.
pub struct LineOperator<R, W> {
    pub input: R,
    pub output: W,
}

impl<R: BufRead, W: Write> CurationOperator for LineOperator<R, W> {
    fn show_page(&mut self, page: usize, candidates: &[Candidate]) {
        let _ = writeln!(self.output, "\n-- page {page} --");
        for c in candidates {
            let _ = writeln!(self.output, "{:>4}. {:<30} {}", c.rank, c.phrase, c.count);
        }
    }

    fn decide(&mut self, candidate: &Candidate) -> CurationAction {
        loop {
            let _ = write!(
                self.output,
                "{} ({}) [a]ccept [r]eject [+ phrase] [q]uit: ",
                candidate.phrase, candidate.count
            );
            let _ = self.output.flush();
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => return CurationAction::Stop,
                Ok(_) => {}
            }
            let line = line.trim();
            match line {
                "a" | "accept" => return CurationAction::Accept,
                "r" | "reject" | "" => return CurationAction::Reject,
                "q" | "quit" => return CurationAction::Stop,
                _ => {
                    if let Some(phrase) = line.strip_prefix('+') {
                        return CurationAction::Add(phrase.trim().to_string());
                    }
                }
            }
        }
    }
}

/// Run a curation session over the flagged reviews (all reviews when the
/// filter stage has not run). The revised lexicon goes to `lexicon_out`
/// (default `<out>/lexicon.txt`); the transcript is appended to
/// `<out>/curation_log.txt`.
pub fn curate<O: CurationOperator>(
    ctx: &Context,
    operator: &mut O,
    page_size: usize,
    limit: usize,
    lexicon_out: Option<PathBuf>,
) -> Result<(PathBuf, usize)> {
    let reviews = read_reviews(&ctx.out)?;
    let docs: Vec<Vec<String>> = if artifact::FLAGGED.path(&ctx.out).is_file() {
        let flagged: std::collections::BTreeSet<String> = read_flagged(&ctx.out)?
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        reviews
            .iter()
            .filter(|r| flagged.contains(&r.review_id))
            .map(|r| tokenize(&r.text))
            .collect()
    } else {
        reviews.iter().map(|r| tokenize(&r.text)).collect()
    };
    let mut rec = crate::manifest::StageRecord::new("curate", "reviews");
    let lexicon = ctx.lexicon(&mut rec)?;
    let stoplist = ctx.stoplist()?;
    let outcome = curate_session(&docs, &lexicon, &stoplist, page_size, limit, operator);
    let path = lexicon_out.unwrap_or_else(|| ctx.out.join(LEXICON_OUT));
    fs::write(&path, outcome.lexicon.to_file_string())
        .with_context(|| format!("writing {}", path.display()))?;
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(ctx.out.join(CURATION_LOG))
        .context("opening curation log")?;
    writeln!(log, "# session: {} entries added", outcome.accepted.len())?;
    for line in &outcome.transcript {
        writeln!(log, "{line}")?;
    }
    Ok((path, outcome.accepted.len()))
}
