//! Domain vocabulary shared by all other modules: domains, classifiers,
//! instances, ontology constraints, ground predicates, and observation sets.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("mutual-exclusion pair references the same domain twice: {0}")]
    SelfPair(DomainId),
    #[error("subsumption pair references the same domain twice: {0}")]
    SelfSubsumption(DomainId),
    #[error("unknown domain id {id} (domain count is {count})")]
    UnknownDomain { id: DomainId, count: u32 },
    #[error("mutual-exclusion set needs at least 2 distinct domains, got {0}")]
    SmallMeSet(usize),
    #[error("invalid observations:\n{}", .0.join("\n"))]
    InvalidObservations(Vec<String>),
}

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
        )]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl From<u32> for $name {
            fn from(v: u32) -> Self {
                Self(v)
            }
        }
    };
}

id_type!(
    /// Opaque handle for a domain (one binary classification problem).
    DomainId
);
id_type!(
    /// Opaque handle for a classifier (one function approximation).
    ClassifierId
);
id_type!(
    /// Opaque handle for a data instance.
    InstanceId
);

/// Interns user-facing string names to dense integer ids.
///
/// Interning is a bijection: distinct names get distinct ids and
/// `name(intern(s)) == s`.
#[derive(Clone, Debug, Default)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, inserting it if unseen.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// Name tables for the three id spaces.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    pub domains: Interner,
    pub classifiers: Interner,
    pub instances: Interner,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn domain(&mut self, name: &str) -> DomainId {
        DomainId(self.domains.intern(name))
    }

    pub fn classifier(&mut self, name: &str) -> ClassifierId {
        ClassifierId(self.classifiers.intern(name))
    }

    pub fn instance(&mut self, name: &str) -> InstanceId {
        InstanceId(self.instances.intern(name))
    }
}

/// Identity of one soft-truth variable.
///
/// `ErrorRate` deliberately carries no instance: there is one error-rate
/// variable per (domain, classifier) pair, shared across all instances.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum GroundPredicate {
    /// Output of classifier `classifier` for domain `domain` on `instance`.
    ApproxOutput {
        domain: DomainId,
        classifier: ClassifierId,
        instance: InstanceId,
    },
    /// The (usually latent) true label of `instance` in `domain`.
    TargetOutput {
        domain: DomainId,
        instance: InstanceId,
    },
    /// The (always latent) error rate of `classifier` in `domain`.
    ErrorRate {
        domain: DomainId,
        classifier: ClassifierId,
    },
}

impl GroundPredicate {
    pub fn approx(domain: DomainId, classifier: ClassifierId, instance: InstanceId) -> Self {
        GroundPredicate::ApproxOutput {
            domain,
            classifier,
            instance,
        }
    }

    pub fn target(domain: DomainId, instance: InstanceId) -> Self {
        GroundPredicate::TargetOutput { domain, instance }
    }

    pub fn error_rate(domain: DomainId, classifier: ClassifierId) -> Self {
        GroundPredicate::ErrorRate { domain, classifier }
    }

    /// Sort key: instance-major for the per-instance kinds, so that sorted
    /// iteration visits observations grouped by instance, then error rates.
    fn sort_key(&self) -> (u8, u32, u32, u32) {
        match *self {
            GroundPredicate::ApproxOutput {
                domain,
                classifier,
                instance,
            } => (0, instance.0, domain.0, classifier.0),
            GroundPredicate::TargetOutput { domain, instance } => (1, instance.0, domain.0, 0),
            GroundPredicate::ErrorRate { domain, classifier } => (2, domain.0, classifier.0, 0),
        }
    }
}

impl Ord for GroundPredicate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for GroundPredicate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Domain ontology: pairwise mutual-exclusion and subsumption constraints.
///
/// Mutual-exclusion sets are expanded to pairwise constraints at build time,
/// so the rest of the engine only ever sees binary constraints. ME pairs are
/// stored canonically with the smaller id first; membership queries are
/// symmetric. SUB pairs are ordered: `(d1, d2)` means `d1` subsumes `d2`.
#[derive(Clone, Debug, Default)]
pub struct Ontology {
    domain_count: u32,
    me_pairs: BTreeSet<(DomainId, DomainId)>,
    sub_pairs: BTreeSet<(DomainId, DomainId)>,
    me_partners: Vec<Vec<DomainId>>,
    sub_children: Vec<Vec<DomainId>>,
    warnings: Vec<String>,
}

impl Ontology {
    /// An ontology with `domain_count` domains and no constraints.
    pub fn unconstrained(domain_count: u32) -> Self {
        Ontology {
            domain_count,
            me_partners: vec![Vec::new(); domain_count as usize],
            sub_children: vec![Vec::new(); domain_count as usize],
            ..Default::default()
        }
    }

    /// Builds an ontology from mutual-exclusion sets and subsumption pairs.
    ///
    /// Each ME set of size k expands to k(k-1)/2 unordered pairs; duplicates
    /// collapse. SUB cycles and pairs that are both ME and SUB are allowed
    /// but recorded as warnings, since they usually indicate user error.
    pub fn build(
        domain_count: u32,
        me_sets: &[Vec<DomainId>],
        sub_pairs: &[(DomainId, DomainId)],
    ) -> Result<Ontology, ModelError> {
        let check = |d: DomainId| {
            if d.0 >= domain_count {
                Err(ModelError::UnknownDomain {
                    id: d,
                    count: domain_count,
                })
            } else {
                Ok(())
            }
        };

        let mut me = BTreeSet::new();
        for set in me_sets {
            // A repeated domain inside a set is a self-pair in disguise.
            let mut distinct = BTreeSet::new();
            for &d in set {
                if !distinct.insert(d) {
                    return Err(ModelError::SelfPair(d));
                }
            }
            if distinct.len() < 2 {
                return Err(ModelError::SmallMeSet(distinct.len()));
            }
            let members: Vec<DomainId> = distinct.into_iter().collect();
            for &d in &members {
                check(d)?;
            }
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    me.insert((a.min(b), a.max(b)));
                }
            }
        }

        let mut sub = BTreeSet::new();
        for &(parent, child) in sub_pairs {
            if parent == child {
                return Err(ModelError::SelfSubsumption(parent));
            }
            check(parent)?;
            check(child)?;
            sub.insert((parent, child));
        }

        let mut warnings = Vec::new();
        for &(parent, child) in &sub {
            if me.contains(&(parent.min(child), parent.max(child))) {
                warnings.push(format!(
                    "domains {parent} and {child} are both mutually exclusive and in a \
                     subsumption relation"
                ));
            }
            if sub.contains(&(child, parent)) && parent < child {
                warnings.push(format!(
                    "subsumption cycle between domains {parent} and {child}"
                ));
            }
        }

        let mut me_partners = vec![Vec::new(); domain_count as usize];
        for &(a, b) in &me {
            me_partners[a.0 as usize].push(b);
            me_partners[b.0 as usize].push(a);
        }
        for list in &mut me_partners {
            list.sort_unstable();
        }
        let mut sub_children = vec![Vec::new(); domain_count as usize];
        for &(parent, child) in &sub {
            sub_children[parent.0 as usize].push(child);
        }

        Ok(Ontology {
            domain_count,
            me_pairs: me,
            sub_pairs: sub,
            me_partners,
            sub_children,
            warnings,
        })
    }

    pub fn domain_count(&self) -> u32 {
        self.domain_count
    }

    pub fn me_pairs(&self) -> impl Iterator<Item = (DomainId, DomainId)> + '_ {
        self.me_pairs.iter().copied()
    }

    pub fn sub_pairs(&self) -> impl Iterator<Item = (DomainId, DomainId)> + '_ {
        self.sub_pairs.iter().copied()
    }

    pub fn me_pair_count(&self) -> usize {
        self.me_pairs.len()
    }

    pub fn sub_pair_count(&self) -> usize {
        self.sub_pairs.len()
    }

    /// Symmetric mutual-exclusion query.
    pub fn is_me(&self, a: DomainId, b: DomainId) -> bool {
        self.me_pairs.contains(&(a.min(b), a.max(b)))
    }

    /// Ordered subsumption query: does `parent` subsume `child`?
    pub fn is_sub(&self, parent: DomainId, child: DomainId) -> bool {
        self.sub_pairs.contains(&(parent, child))
    }

    /// Domains mutually exclusive with `d`, sorted.
    pub fn me_partners(&self, d: DomainId) -> &[DomainId] {
        &self.me_partners[d.0 as usize]
    }

    /// Domains subsumed by `d`, sorted.
    pub fn sub_children(&self, d: DomainId) -> &[DomainId] {
        &self.sub_children[d.0 as usize]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Observed ground predicate values, each in [0, 1].
///
/// Holds the observed classifier outputs, plus any known target labels in
/// the semi-supervised setting. Error rates are never observed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationSet {
    values: BTreeMap<GroundPredicate, f64>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_approx(
        &mut self,
        domain: DomainId,
        classifier: ClassifierId,
        instance: InstanceId,
        value: f64,
    ) {
        self.values
            .insert(GroundPredicate::approx(domain, classifier, instance), value);
    }

    pub fn insert_target(&mut self, domain: DomainId, instance: InstanceId, value: f64) {
        self.values
            .insert(GroundPredicate::target(domain, instance), value);
    }

    /// Raw insert, usable from tests to construct invalid sets for
    /// `validate` to reject.
    pub fn insert(&mut self, pred: GroundPredicate, value: f64) {
        self.values.insert(pred, value);
    }

    pub fn get(&self, pred: &GroundPredicate) -> Option<f64> {
        self.values.get(pred).copied()
    }

    pub fn contains(&self, pred: &GroundPredicate) -> bool {
        self.values.contains_key(pred)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted, deterministic iteration.
    pub fn iter(&self) -> impl Iterator<Item = (&GroundPredicate, f64)> {
        self.values.iter().map(|(p, &v)| (p, v))
    }

    /// Checks every invariant, reporting all violations at once: values must
    /// lie in [0, 1] and error rates must not appear as keys.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        for (pred, &value) in &self.values {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                problems.push(format!("value {value} out of [0, 1] for {pred:?}"));
            }
            if matches!(pred, GroundPredicate::ErrorRate { .. }) {
                problems.push(format!("error rate {pred:?} cannot be observed"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidObservations(problems))
        }
    }
}

impl FromIterator<(GroundPredicate, f64)> for ObservationSet {
    fn from_iter<T: IntoIterator<Item = (GroundPredicate, f64)>>(iter: T) -> Self {
        ObservationSet {
            values: iter.into_iter().collect(),
        }
    }
}
