//! Line-oriented corpus files.
//!
//! A corpus directory holds `train.txt`, `valid.txt` and `test.txt`, each
//! starting with a `#vocab=<V> candidates=<n>` header. Train and valid files
//! store every triple as a `POS` line followed by a `NEG` line for the same
//! context:
//!
//! ```text
//! POS<TAB>utt_1<TAB>...<TAB>utt_k<TAB>response
//! NEG<TAB>utt_1<TAB>...<TAB>utt_k<TAB>response
//! ```
//!
//! Test lines are `label<TAB>utt_1<TAB>...<TAB>utt_k<TAB>response`, grouped
//! in consecutive blocks of `candidates` lines per context. Tokens are space
//! separated decimal IDs. Synthetic corpora additionally write
//! `train.noise`/`valid.noise` (one `0`/`1` per triple) and `meta.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Corpus, CorpusError, GenerationMeta, PairwiseTriple, TestGroup, TokenId, Utterance};

pub const CORPUS_FILES: [&str; 3] = ["train.txt", "valid.txt", "test.txt"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_tokens(out: &mut String, tokens: &[TokenId]) {
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{t}");
    }
}

fn write_line(out: &mut String, tag: &str, context: &[Utterance], response: &[TokenId]) {
    out.push_str(tag);
    for u in context {
        out.push('\t');
        write_tokens(out, u);
    }
    out.push('\t');
    write_tokens(out, response);
    out.push('\n');
}

fn header(corpus: &Corpus) -> String {
    format!("#vocab={} candidates={}\n", corpus.vocab_size, corpus.n_candidates)
}

fn render_triples(corpus: &Corpus, triples: &[PairwiseTriple]) -> String {
    let mut out = header(corpus);
    for t in triples {
        write_line(&mut out, "POS", &t.context, &t.pos_response);
        write_line(&mut out, "NEG", &t.context, &t.neg_response);
    }
    out
}

fn render_noise(triples: &[PairwiseTriple]) -> Option<String> {
    let mut out = String::new();
    for t in triples {
        out.push(if t.noise_flag? { '1' } else { '0' });
        out.push('\n');
    }
    Some(out)
}

/// Writes `corpus` into `dir`, creating the directory if needed.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let put = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))
    };

    put("train.txt", render_triples(corpus, &corpus.train))?;
    put("valid.txt", render_triples(corpus, &corpus.valid))?;
    let mut test = header(corpus);
    for g in &corpus.test {
        for (r, y) in &g.candidates {
            write_line(&mut test, &y.to_string(), &g.context, r);
        }
    }
    put("test.txt", test)?;

    if let Some(meta) = corpus.meta {
        put(
            "meta.txt",
            format!(
                "seed = {}\nfalse_negative_rate = {}\n",
                meta.seed, meta.false_negative_rate
            ),
        )?;
        for (name, triples) in [("train.noise", &corpus.train), ("valid.noise", &corpus.valid)] {
            if let Some(body) = render_noise(triples) {
                put(name, body)?;
            }
        }
    }
    Ok(())
}

struct Header {
    vocab_size: usize,
    n_candidates: usize,
}

/// One data line: tag, context utterances, response.
struct Record {
    line: usize,
    tag: String,
    context: Vec<Utterance>,
    response: Utterance,
}

struct ParsedFile {
    header: Option<Header>,
    records: Vec<Record>,
}

struct Parser<'a> {
    file: &'a str,
}

impl Parser<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> CorpusError {
        CorpusError::Parse {
            file: self.file.to_string(),
            line,
            msg: msg.into(),
        }
    }

    fn header(&self, line: usize, text: &str) -> Result<Header, CorpusError> {
        let mut vocab = None;
        let mut cands = None;
        for field in text.trim_start_matches('#').split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| self.err(line, format!("malformed header field {field:?}")))?;
            let n: usize = v
                .parse()
                .map_err(|_| self.err(line, format!("header value {v:?} is not an integer")))?;
            match k {
                "vocab" => vocab = Some(n),
                "candidates" => cands = Some(n),
                _ => return Err(self.err(line, format!("unknown header key {k:?}"))),
            }
        }
        match (vocab, cands) {
            (Some(vocab_size), Some(n_candidates)) => Ok(Header {
                vocab_size,
                n_candidates,
            }),
            _ => Err(self.err(line, "header must declare vocab and candidates")),
        }
    }

    fn tokens(&self, line: usize, field: &str) -> Result<Utterance, CorpusError> {
        let tokens = field
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<TokenId>()
                    .map_err(|_| self.err(line, format!("invalid token id {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if tokens.is_empty() {
            return Err(self.err(line, "empty utterance"));
        }
        Ok(tokens)
    }

    fn parse(&self, text: &str) -> Result<ParsedFile, CorpusError> {
        let mut header = None;
        let mut records = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            if raw.starts_with('#') {
                if header.is_some() || !records.is_empty() {
                    return Err(self.err(line, "header must be the first line"));
                }
                header = Some(self.header(line, raw)?);
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() < 3 {
                return Err(self.err(
                    line,
                    format!(
                        "expected tag, at least one utterance and a response; found {} field(s)",
                        fields.len()
                    ),
                ));
            }
            let context = fields[1..fields.len() - 1]
                .iter()
                .map(|f| self.tokens(line, f))
                .collect::<Result<Vec<_>, _>>()?;
            let response = self.tokens(line, fields[fields.len() - 1])?;
            records.push(Record {
                line,
                tag: fields[0].to_string(),
                context,
                response,
            });
        }
        Ok(ParsedFile { header, records })
    }

    fn check_vocab(&self, records: &[Record], vocab_size: usize) -> Result<(), CorpusError> {
        for r in records {
            if let Some(&token) = r
                .context
                .iter()
                .flatten()
                .chain(&r.response)
                .find(|&&t| t as usize >= vocab_size)
            {
                return Err(CorpusError::TokenOutOfRange {
                    file: self.file.to_string(),
                    line: r.line,
                    token,
                    vocab_size,
                });
            }
        }
        Ok(())
    }

    fn triples(&self, records: Vec<Record>) -> Result<Vec<PairwiseTriple>, CorpusError> {
        let mut out = Vec::with_capacity(records.len() / 2);
        let mut it = records.into_iter();
        while let Some(pos) = it.next() {
            if pos.tag != "POS" {
                return Err(self.err(pos.line, format!("expected POS line, found tag {:?}", pos.tag)));
            }
            let neg = it
                .next()
                .ok_or_else(|| self.err(pos.line, "POS line without a following NEG line"))?;
            if neg.tag != "NEG" {
                return Err(self.err(neg.line, format!("expected NEG line, found tag {:?}", neg.tag)));
            }
            if neg.context != pos.context {
                return Err(self.err(neg.line, "NEG context differs from the preceding POS context"));
            }
            out.push(PairwiseTriple {
                context: pos.context,
                pos_response: pos.response,
                neg_response: neg.response,
                noise_flag: None,
            });
        }
        Ok(out)
    }

    fn groups(&self, records: Vec<Record>, n_candidates: usize) -> Result<Vec<TestGroup>, CorpusError> {
        if n_candidates == 0 {
            if let Some(r) = records.first() {
                return Err(self.err(r.line, "candidates=0 with non-empty test data"));
            }
            return Ok(Vec::new());
        }
        if records.len() % n_candidates != 0 {
            let last = records.last().map_or(0, |r| r.line);
            return Err(self.err(
                last,
                format!("{} test lines is not a multiple of {n_candidates} candidates", records.len()),
            ));
        }
        let mut out = Vec::with_capacity(records.len() / n_candidates);
        let mut it = records.into_iter().peekable();
        while it.peek().is_some() {
            let block: Vec<Record> = it.by_ref().take(n_candidates).collect();
            let context = block[0].context.clone();
            let mut candidates = Vec::with_capacity(n_candidates);
            for r in block {
                if r.context != context {
                    return Err(self.err(r.line, "context differs within a candidate block"));
                }
                let label = match r.tag.as_str() {
                    "0" => 0,
                    "1" => 1,
                    other => return Err(self.err(r.line, format!("label must be 0 or 1, found {other:?}"))),
                };
                candidates.push((r.response, label));
            }
            out.push(TestGroup { context, candidates });
        }
        Ok(out)
    }
}

fn read_optional(path: &Path) -> Result<Option<String>, CorpusError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn attach_noise(dir: &Path, name: &str, triples: &mut [PairwiseTriple]) -> Result<(), CorpusError> {
    let path = dir.join(name);
    let Some(text) = read_optional(&path)? else {
        return Ok(());
    };
    let flags: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let p = Parser { file: name };
    if flags.len() != triples.len() {
        return Err(p.err(
            flags.len(),
            format!("{} noise flags for {} triples", flags.len(), triples.len()),
        ));
    }
    for (i, (flag, t)) in flags.iter().zip(triples.iter_mut()).enumerate() {
        t.noise_flag = Some(match flag.trim() {
            "0" => false,
            "1" => true,
            other => return Err(p.err(i + 1, format!("noise flag must be 0 or 1, found {other:?}"))),
        });
    }
    Ok(())
}

fn read_meta(dir: &Path) -> Result<Option<GenerationMeta>, CorpusError> {
    let path = dir.join("meta.txt");
    let Some(text) = read_optional(&path)? else {
        return Ok(None);
    };
    let p = Parser { file: "meta.txt" };
    let (mut seed, mut rate) = (None, None);
    for (idx, line) in text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        match k.trim() {
            "seed" => seed = Some(v.trim().parse().map_err(|_| p.err(idx + 1, "invalid seed"))?),
            "false_negative_rate" => {
                rate = Some(v.trim().parse().map_err(|_| p.err(idx + 1, "invalid rate"))?)
            }
            _ => {}
        }
    }
    Ok(seed.zip(rate).map(|(seed, false_negative_rate)| GenerationMeta {
        seed,
        false_negative_rate,
    }))
}

/// Reads a corpus directory written by [`save_corpus`].
pub fn load_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    let mut parsed = Vec::with_capacity(3);
    for name in CORPUS_FILES {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        parsed.push((name, Parser { file: name }.parse(&text)?));
    }

    let mut header: Option<(&str, Header)> = None;
    for (name, file) in parsed.iter_mut() {
        if let Some(h) = file.header.take() {
            match &header {
                Some((_, first)) if first.vocab_size != h.vocab_size || first.n_candidates != h.n_candidates => {
                    return Err(Parser { file: name }.err(1, "header disagrees with the other corpus files"));
                }
                Some(_) => {}
                None => header = Some((name, h)),
            }
        } else if !file.records.is_empty() {
            return Err(Parser { file: name }.err(1, "missing #vocab=<V> candidates=<n> header"));
        }
    }
    let Some((_, header)) = header else {
        return Err(Parser { file: "train.txt" }.err(1, "no corpus file declares a header"));
    };

    let mut files = parsed.into_iter();
    let mut next = || files.next().expect("three corpus files");
    let (tn, train) = next();
    let (vn, valid) = next();
    let (sn, test) = next();

    let tp = Parser { file: tn };
    tp.check_vocab(&train.records, header.vocab_size)?;
    let mut train = tp.triples(train.records)?;
    let vp = Parser { file: vn };
    vp.check_vocab(&valid.records, header.vocab_size)?;
    let mut valid = vp.triples(valid.records)?;
    let sp = Parser { file: sn };
    sp.check_vocab(&test.records, header.vocab_size)?;
    let test = sp.groups(test.records, header.n_candidates)?;

    attach_noise(dir, "train.noise", &mut train)?;
    attach_noise(dir, "valid.noise", &mut valid)?;

    Ok(Corpus {
        train,
        valid,
        test,
        vocab_size: header.vocab_size,
        n_candidates: header.n_candidates,
        meta: read_meta(dir)?,
    })
}
