//! Interactive recommendation session.
//!
//! Each input line is either context words (appended to the running
//! context), the number of a listed recommendation (which appends that word),
//! a blank line (which clears the context), or `:q` to quit.

use std::io::{BufRead, Write};

use anyhow::Result;
use nextword::corpus::{preprocess, Vocabulary};
use nextword::{next_distribution, LanguageModel, Prediction, WordId, UNK};

pub const UNK_MARKER: &str = "<unk>";

struct Session {
    ids: Vec<WordId>,
    shown: Vec<String>,
    last: Vec<WordId>,
}

impl Session {
    fn prompt(&self) -> String {
        format!("[{}] > ", self.shown.join(" "))
    }

    fn push(&mut self, id: WordId, surface: String) {
        self.ids.push(id);
        self.shown.push(surface);
    }
}

pub fn run_session<R: BufRead, W: Write>(
    model: &dyn LanguageModel,
    vocab: &Vocabulary,
    k: usize,
    input: R,
    mut out: W,
) -> Result<()> {
    let mut s = Session {
        ids: Vec::new(),
        shown: Vec::new(),
        last: Vec::new(),
    };
    write!(out, "{}", s.prompt())?;
    out.flush()?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line == ":q" || line == ":quit" {
            break;
        }
        if line.is_empty() {
            s.ids.clear();
            s.shown.clear();
            s.last.clear();
            writeln!(out, "(context cleared)")?;
        } else {
            let choice = line.parse::<usize>().ok().filter(|&n| (1..=s.last.len()).contains(&n));
            match choice {
                Some(n) => {
                    let id = s.last[n - 1];
                    s.push(id, vocab.word(id).to_string());
                }
                None => {
                    let tokens: Vec<&str> = line.split_whitespace().collect();
                    for w in preprocess(&tokens) {
                        let id = vocab.id(&w);
                        if id == UNK {
                            writeln!(out, "{w} is not in the vocabulary, read as {UNK_MARKER}")?;
                            s.push(id, format!("{w}{UNK_MARKER}"));
                        } else {
                            s.push(id, w);
                        }
                    }
                }
            }
            s.last.clear();
            if !s.ids.is_empty() {
                match next_distribution(model, &s.ids)? {
                    Prediction::Distribution(d) => {
                        for (i, (w, p)) in d.top_k(k)?.items.iter().enumerate() {
                            writeln!(out, "{:>3}. {}\t{p:.4}", i + 1, vocab.word(*w))?;
                            s.last.push(*w);
                        }
                    }
                    Prediction::NoRecommendation => writeln!(out, "(no recommendation)")?,
                }
            }
        }
        write!(out, "{}", s.prompt())?;
        out.flush()?;
    }
    writeln!(out)?;
    Ok(())
}
