//! Tab-separated file formats: predictions, constraints, truth labels, and
//! the estimate outputs. Parsers stream line by line, reject anything they
//! cannot fully interpret (only `#` comment lines are skipped), and report
//! line numbers with every error.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use lee_core::eval::TruthSet;
use lee_core::model::{
    ClassifierId, DomainId, GroundPredicate, InstanceId, ModelError, ObservationSet, Ontology,
    Vocabulary,
};

#[derive(Error, Debug)]
pub enum FormatError {
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn malformed(path: &str, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn io_error(path: &str) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_string(),
        source,
    }
}

/// Lines of `reader` with 1-based numbers, skipping `#` comments and
/// rejecting blank lines.
fn records<'a, R: BufRead + 'a>(
    reader: R,
    path: &'a str,
) -> impl Iterator<Item = Result<(usize, String), FormatError>> + 'a {
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let number = i + 1;
        match line {
            Err(e) => Some(Err(io_error(path)(e))),
            Ok(mut text) => {
                if text.ends_with('\r') {
                    text.pop();
                }
                if text.trim_start().starts_with('#') {
                    return None;
                }
                if text.trim().is_empty() {
                    return Some(Err(malformed(path, number, "blank line")));
                }
                Some(Ok((number, text)))
            }
        }
    })
}

fn parse_unit_value(path: &str, line: usize, field: &str) -> Result<f64, FormatError> {
    let value: f64 = field
        .parse()
        .map_err(|_| malformed(path, line, format!("cannot parse value `{field}`")))?;
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(malformed(
            path,
            line,
            format!("value {field} out of range [0, 1]"),
        ));
    }
    Ok(value)
}

/// Parses prediction records `instance<TAB>domain<TAB>classifier<TAB>value`
/// with values in [0, 1]. Duplicate keys are rejected with both line
/// numbers.
pub fn parse_predictions<R: BufRead>(
    reader: R,
    path: &str,
    vocab: &mut Vocabulary,
) -> Result<ObservationSet, FormatError> {
    let mut obs = ObservationSet::new();
    let mut first_seen: HashMap<GroundPredicate, usize> = HashMap::new();
    for record in records(reader, path) {
        let (number, text) = record?;
        let fields: Vec<&str> = text.split('\t').collect();
        let [instance, domain, classifier, value] = fields.as_slice() else {
            return Err(malformed(
                path,
                number,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        };
        let value = parse_unit_value(path, number, value)?;
        let pred = GroundPredicate::approx(
            vocab.domain(domain),
            vocab.classifier(classifier),
            vocab.instance(instance),
        );
        if let Some(previous) = first_seen.insert(pred, number) {
            return Err(malformed(
                path,
                number,
                format!(
                    "duplicate prediction for ({instance}, {domain}, {classifier}), \
                     first seen at line {previous}"
                ),
            ));
        }
        obs.insert(pred, value);
    }
    Ok(obs)
}

/// Raw constraint directives; the ontology is built once the full domain
/// vocabulary (constraints plus predictions) is known.
#[derive(Clone, Debug, Default)]
pub struct ConstraintSpec {
    pub me_sets: Vec<Vec<DomainId>>,
    pub sub_pairs: Vec<(DomainId, DomainId)>,
}

impl ConstraintSpec {
    pub fn build(&self, domain_count: u32) -> Result<Ontology, ModelError> {
        Ontology::build(domain_count, &self.me_sets, &self.sub_pairs)
    }
}

/// Parses constraint directives: `ME<TAB>d1,d2,…,dk` (k ≥ 2) or
/// `SUB<TAB>parent<TAB>child`. Domain names register in `vocab`.
pub fn parse_constraints<R: BufRead>(
    reader: R,
    path: &str,
    vocab: &mut Vocabulary,
) -> Result<ConstraintSpec, FormatError> {
    let mut spec = ConstraintSpec::default();
    for record in records(reader, path) {
        let (number, text) = record?;
        let fields: Vec<&str> = text.split('\t').collect();
        match fields.as_slice() {
            ["ME", members] => {
                let names: Vec<&str> = members.split(',').map(str::trim).collect();
                if names.iter().any(|n| n.is_empty()) {
                    return Err(malformed(path, number, "empty domain name in ME set"));
                }
                if names.len() < 2 {
                    return Err(malformed(
                        path,
                        number,
                        "ME set needs at least 2 domains",
                    ));
                }
                spec.me_sets
                    .push(names.into_iter().map(|n| vocab.domain(n)).collect());
            }
            ["SUB", parent, child] => {
                if parent == child {
                    return Err(malformed(
                        path,
                        number,
                        format!("domain `{parent}` cannot subsume itself"),
                    ));
                }
                spec.sub_pairs.push((vocab.domain(parent), vocab.domain(child)));
            }
            [directive, ..] => {
                return Err(malformed(
                    path,
                    number,
                    format!("unknown directive `{directive}` (expected ME or SUB)"),
                ));
            }
            [] => unreachable!("blank lines are rejected upstream"),
        }
    }
    Ok(spec)
}

/// Parses truth labels `instance<TAB>domain<TAB>{0|1}`. Values must be the
/// literal `0` or `1`; duplicates are rejected.
pub fn parse_labels<R: BufRead>(
    reader: R,
    path: &str,
    vocab: &mut Vocabulary,
) -> Result<TruthSet, FormatError> {
    let mut truth = TruthSet::new();
    let mut first_seen: HashMap<(DomainId, InstanceId), usize> = HashMap::new();
    for record in records(reader, path) {
        let (number, text) = record?;
        let fields: Vec<&str> = text.split('\t').collect();
        let [instance, domain, value] = fields.as_slice() else {
            return Err(malformed(
                path,
                number,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        };
        let label = match *value {
            "0" => false,
            "1" => true,
            other => {
                return Err(malformed(
                    path,
                    number,
                    format!("label must be 0 or 1, got `{other}`"),
                ));
            }
        };
        let key = (vocab.domain(domain), vocab.instance(instance));
        if let Some(previous) = first_seen.insert(key, number) {
            return Err(malformed(
                path,
                number,
                format!(
                    "duplicate label for ({instance}, {domain}), first seen at line {previous}"
                ),
            ));
        }
        truth.insert(key.0, key.1, label);
    }
    Ok(truth)
}

/// Parses `error_rates.tsv` written by the estimate command.
pub fn parse_error_rates<R: BufRead>(
    reader: R,
    path: &str,
    vocab: &mut Vocabulary,
) -> Result<BTreeMap<(DomainId, ClassifierId), f64>, FormatError> {
    let mut rates = BTreeMap::new();
    for record in records(reader, path) {
        let (number, text) = record?;
        let fields: Vec<&str> = text.split('\t').collect();
        let [domain, classifier, value] = fields.as_slice() else {
            return Err(malformed(
                path,
                number,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        };
        let value = parse_unit_value(path, number, value)?;
        rates.insert((vocab.domain(domain), vocab.classifier(classifier)), value);
    }
    Ok(rates)
}

/// Parses the soft column of `targets.tsv` written by the estimate command.
pub fn parse_targets<R: BufRead>(
    reader: R,
    path: &str,
    vocab: &mut Vocabulary,
) -> Result<BTreeMap<(DomainId, InstanceId), f64>, FormatError> {
    let mut targets = BTreeMap::new();
    for record in records(reader, path) {
        let (number, text) = record?;
        let fields: Vec<&str> = text.split('\t').collect();
        let [instance, domain, soft, hard] = fields.as_slice() else {
            return Err(malformed(
                path,
                number,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        };
        if !matches!(*hard, "0" | "1") {
            return Err(malformed(path, number, "hard label must be 0 or 1"));
        }
        let soft = parse_unit_value(path, number, soft)?;
        targets.insert((vocab.domain(domain), vocab.instance(instance)), soft);
    }
    Ok(targets)
}

pub fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(io_error(&path.display().to_string()))
}

/// Writes predictions with full-precision values so that parsing the file
/// back reproduces the observation set exactly.
pub fn write_predictions<W: Write>(
    w: &mut W,
    obs: &ObservationSet,
    vocab: &Vocabulary,
) -> io::Result<()> {
    let mut rows: Vec<(String, String, String, f64)> = obs
        .iter()
        .filter_map(|(&pred, value)| match pred {
            GroundPredicate::ApproxOutput {
                domain,
                classifier,
                instance,
            } => Some((
                vocab.instances.name(instance.0).to_string(),
                vocab.domains.name(domain.0).to_string(),
                vocab.classifiers.name(classifier.0).to_string(),
                value,
            )),
            _ => None,
        })
        .collect();
    rows.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));
    for (instance, domain, classifier, value) in rows {
        writeln!(w, "{instance}\t{domain}\t{classifier}\t{value}")?;
    }
    Ok(())
}

pub fn write_labels<W: Write>(w: &mut W, truth: &TruthSet, vocab: &Vocabulary) -> io::Result<()> {
    let mut rows: Vec<(String, String, bool)> = truth
        .iter()
        .map(|((domain, instance), label)| {
            (
                vocab.instances.name(instance.0).to_string(),
                vocab.domains.name(domain.0).to_string(),
                label,
            )
        })
        .collect();
    rows.sort();
    for (instance, domain, label) in rows {
        writeln!(w, "{instance}\t{domain}\t{}", label as u8)?;
    }
    Ok(())
}

/// Writes one `ME` line per pair and one `SUB` line per pair; parsing the
/// result back yields the same constraint sets.
pub fn write_constraints<W: Write>(
    w: &mut W,
    ontology: &Ontology,
    vocab: &Vocabulary,
) -> io::Result<()> {
    for (a, b) in ontology.me_pairs() {
        writeln!(
            w,
            "ME\t{},{}",
            vocab.domains.name(a.0),
            vocab.domains.name(b.0)
        )?;
    }
    for (parent, child) in ontology.sub_pairs() {
        writeln!(
            w,
            "SUB\t{}\t{}",
            vocab.domains.name(parent.0),
            vocab.domains.name(child.0)
        )?;
    }
    Ok(())
}

pub fn write_error_rates<W: Write>(
    w: &mut W,
    rates: &BTreeMap<(DomainId, ClassifierId), f64>,
    vocab: &Vocabulary,
) -> io::Result<()> {
    let mut rows: Vec<(String, String, f64)> = rates
        .iter()
        .map(|(&(domain, classifier), &value)| {
            (
                vocab.domains.name(domain.0).to_string(),
                vocab.classifiers.name(classifier.0).to_string(),
                value,
            )
        })
        .collect();
    rows.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    for (domain, classifier, value) in rows {
        writeln!(w, "{domain}\t{classifier}\t{value:.6}")?;
    }
    Ok(())
}

pub fn write_targets<W: Write>(
    w: &mut W,
    soft: &BTreeMap<(DomainId, InstanceId), f64>,
    hard: &BTreeMap<(DomainId, InstanceId), bool>,
    vocab: &Vocabulary,
) -> io::Result<()> {
    let mut rows: Vec<(String, String, f64, bool)> = soft
        .iter()
        .map(|(&(domain, instance), &value)| {
            (
                vocab.instances.name(instance.0).to_string(),
                vocab.domains.name(domain.0).to_string(),
                value,
                hard[&(domain, instance)],
            )
        })
        .collect();
    rows.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    for (instance, domain, value, hard) in rows {
        writeln!(w, "{instance}\t{domain}\t{value:.6}\t{}", hard as u8)?;
    }
    Ok(())
}
