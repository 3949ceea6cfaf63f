//! Email logs, HRIS roster metadata and the seeded synthetic organization.
//!
//! Every downstream structure indexes employees by their position in the
//! [`OrgRoster`], so the roster order is the node order of both graphs, the
//! feature matrix and the model outputs.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEADER_ROLE: &str = "leader";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailRecord {
    pub sender: String,
    pub recipient: String,
    pub timestamp: i64,
    pub subject_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Employee {
    pub id: String,
    pub job_family: String,
    pub role: String,
    pub level: String,
}

impl Employee {
    pub fn is_leader(&self) -> bool {
        self.role == LEADER_ROLE
    }
}

/// HRIS metadata for every employee, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrgRoster {
    employees: Vec<Employee>,
    index: HashMap<String, usize>,
}

impl OrgRoster {
    pub fn new(employees: Vec<Employee>) -> Result<Self> {
        let mut index = HashMap::with_capacity(employees.len());
        for (i, e) in employees.iter().enumerate() {
            if e.id.is_empty() {
                return Err(Error::Data(format!("roster row {i} has an empty id")));
            }
            if index.insert(e.id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate employee id `{}`", e.id)));
            }
        }
        Ok(Self { employees, index })
    }

    pub fn len(&self) -> usize {
        self.employees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.employees.is_empty()
    }

    pub fn employees(&self) -> &[Employee] {
        &self.employees
    }

    pub fn get(&self, i: usize) -> &Employee {
        &self.employees[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> Vec<String> {
        self.employees.iter().map(|e| e.id.clone()).collect()
    }

    /// Sorted distinct job families.
    pub fn families(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.employees.iter().map(|e| e.job_family.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Sorted distinct roles.
    pub fn roles(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.employees.iter().map(|e| e.role.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Integer family label per employee, indexing into [`OrgRoster::families`].
    pub fn family_labels(&self) -> Vec<usize> {
        let fams = self.families();
        self.employees
            .iter()
            .map(|e| fams.binary_search(&e.job_family).unwrap())
            .collect()
    }

    pub fn role_labels(&self) -> Vec<usize> {
        let roles = self.roles();
        self.employees
            .iter()
            .map(|e| roles.binary_search(&e.role).unwrap())
            .collect()
    }

    pub fn same_cell(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.employees[i], &self.employees[j]);
        a.job_family == b.job_family && a.role == b.role
    }

    /// Returns a copy with the family and role labels of `nodes` permuted
    /// among themselves by `perm` (used to probe for label leakage).
    pub fn with_permuted_labels(&self, nodes: &[usize], perm: &[usize]) -> Self {
        let mut employees = self.employees.clone();
        for (slot, &src) in nodes.iter().zip(perm) {
            let from = &self.employees[nodes[src]];
            employees[*slot].job_family = from.job_family.clone();
            employees[*slot].role = from.role.clone();
        }
        Self {
            employees,
            index: self.index.clone(),
        }
    }
}

/// Result of reading an email log.
#[derive(Debug, Clone)]
pub struct EmailLog {
    pub records: Vec<EmailRecord>,
    /// Rows dropped for being self-addressed or having an empty subject.
    pub dropped: usize,
}

#[derive(Debug, Deserialize)]
struct EmailRow {
    sender: String,
    recipient: String,
    timestamp: i64,
    subject: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RosterRow {
    employee_id: String,
    job_family: String,
    role: String,
    level: String,
}

pub fn tokenize_subject(subject: &str) -> Vec<String> {
    subject.split_whitespace().map(str::to_lowercase).collect()
}

/// Reads `emails.csv`, validating every id against the roster.
pub fn load_email_log(path: &Path, roster: &OrgRoster) -> Result<EmailLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_email_log(file, &path.display().to_string(), roster)
}

pub fn read_email_log<R: Read>(reader: R, source: &str, roster: &OrgRoster) -> Result<EmailLog> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Fields).from_reader(reader);
    check_header(&mut rdr, source, &["sender", "recipient", "timestamp", "subject"])?;
    let headers = rdr.headers().map_err(|e| csv_parse_error(source, e))?.clone();
    let mut records = Vec::new();
    let mut dropped = 0;
    let mut raw = csv::StringRecord::new();
    while rdr.read_record(&mut raw).map_err(|e| csv_parse_error(source, e))? {
        let line = raw.position().map(|p| p.line()).unwrap_or(0);
        let row: EmailRow = raw.deserialize(Some(&headers)).map_err(|e| Error::Parse {
            path: source.to_owned(),
            line,
            message: e.to_string(),
        })?;
        for id in [&row.sender, &row.recipient] {
            if roster.index_of(id).is_none() {
                return Err(Error::UnknownEmployee { id: id.clone(), line });
            }
        }
        let tokens = tokenize_subject(&row.subject);
        if row.sender == row.recipient || tokens.is_empty() {
            dropped += 1;
            continue;
        }
        records.push(EmailRecord {
            sender: row.sender,
            recipient: row.recipient,
            timestamp: row.timestamp,
            subject_tokens: tokens,
        });
    }
    if dropped > 0 {
        log::info!("{source}: dropped {dropped} self-addressed or empty-subject rows");
    }
    Ok(EmailLog { records, dropped })
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, source: &str, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| csv_parse_error(source, e))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            path: source.to_owned(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn csv_parse_error(source: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: source.to_owned(),
        line,
        message: e.to_string(),
    }
}

pub fn load_roster(path: &Path) -> Result<OrgRoster> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_roster(file, &path.display().to_string())
}

pub fn read_roster<R: Read>(reader: R, source: &str) -> Result<OrgRoster> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Fields).from_reader(reader);
    check_header(&mut rdr, source, &["employee_id", "job_family", "role", "level"])?;
    let mut employees = Vec::new();
    for row in rdr.deserialize::<RosterRow>() {
        let row = row.map_err(|e| csv_parse_error(source, e))?;
        employees.push(Employee {
            id: row.employee_id,
            job_family: row.job_family,
            role: row.role,
            level: row.level,
        });
    }
    OrgRoster::new(employees)
}

pub fn write_email_log<W: Write>(writer: W, records: &[EmailRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sender", "recipient", "timestamp", "subject"])?;
    for r in records {
        w.write_record([
            r.sender.as_str(),
            r.recipient.as_str(),
            &r.timestamp.to_string(),
            &r.subject_tokens.join(" "),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<email log>", e))?;
    Ok(())
}

pub fn write_roster<W: Write>(writer: W, roster: &OrgRoster) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in roster.employees() {
        w.serialize(RosterRow {
            employee_id: e.id.clone(),
            job_family: e.job_family.clone(),
            role: e.role.clone(),
            level: e.level.clone(),
        })?;
    }
    w.flush().map_err(|e| Error::io("<roster>", e))?;
    Ok(())
}

/// Weak-label positive pairs: same job family and same role.
///
/// Pairs are roster indices `(i, j)` with `i < j`.
pub fn positive_pairs(roster: &OrgRoster) -> BTreeSet<(usize, usize)> {
    let mut cells: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for (i, e) in roster.employees().iter().enumerate() {
        cells
            .entry((e.job_family.as_str(), e.role.as_str()))
            .or_default()
            .push(i);
    }
    let mut out = BTreeSet::new();
    for members in cells.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                out.insert((i.min(j), i.max(j)));
            }
        }
    }
    out
}

/// Knobs of the synthetic organization. Family-indexed vectors must have
/// `n_families` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticOrgConfig {
    pub n_employees: usize,
    pub n_families: usize,
    pub n_roles_per_family: usize,
    /// Relative size of each role inside a family; the first role is `leader`.
    pub role_weights: Vec<f64>,
    pub vocab_per_family: usize,
    pub background_vocab: usize,
    /// Probability that a family-topic token comes from the next family's vocabulary.
    pub topic_overlap: f64,
    /// Probability that a family-topic token comes from the sender's role
    /// block of the family vocabulary rather than the whole vocabulary.
    pub role_topic_focus: f64,
    /// Expected emails between two members of the same (family, role) cell.
    pub intra_role_email_rate: f64,
    /// Expected emails between members of one family holding different roles.
    pub intra_family_email_rate: f64,
    /// Expected emails between members of different families.
    pub cross_family_email_rate: f64,
    /// Rate multiplier applied once per leader endpoint of a pair.
    pub leader_activity: f64,
    pub text_informativeness: Vec<f64>,
    pub structure_informativeness: Vec<f64>,
    pub subject_len: (usize, usize),
    pub rng_seed: u64,
}

impl Default for SyntheticOrgConfig {
    fn default() -> Self {
        Self {
            n_employees: 300,
            n_families: 5,
            n_roles_per_family: 3,
            role_weights: vec![0.2, 0.4, 0.4],
            vocab_per_family: 30,
            background_vocab: 40,
            topic_overlap: 0.1,
            role_topic_focus: 1.0,
            intra_role_email_rate: 0.6,
            intra_family_email_rate: 0.1,
            cross_family_email_rate: 0.02,
            leader_activity: 2.0,
            // res, biz, dev, sal, mnq. res writes role-specific subjects but mails
            // loosely; sal subjects carry no topic while its mail follows cells.
            text_informativeness: vec![1.0, 0.7, 0.7, 0.0, 0.7],
            structure_informativeness: vec![0.2, 0.8, 0.8, 1.0, 0.8],
            subject_len: (4, 7),
            rng_seed: 7,
        }
    }
}

const FAMILY_NAMES: [&str; 5] = ["res", "biz", "dev", "sal", "mnq"];
const ROLE_NAMES: [&str; 3] = [LEADER_ROLE, "senior", "member"];
const EPOCH_START: i64 = 1_700_000_000;
const WINDOW_SECS: i64 = 182 * 24 * 3600;

impl SyntheticOrgConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic org: {m}")));
        if self.n_employees == 0
            || self.n_families == 0
            || self.n_roles_per_family == 0
            || self.vocab_per_family == 0
            || self.background_vocab == 0
        {
            return bad("all counts must be >= 1");
        }
        if self.n_employees < self.n_families * self.n_roles_per_family {
            return bad("need at least one employee per (family, role) cell");
        }
        if self.role_weights.len() != self.n_roles_per_family
            || self.role_weights.iter().any(|w| !(*w > 0.0 && w.is_finite()))
        {
            return bad("role_weights must have n_roles_per_family positive entries");
        }
        for r in [
            self.intra_role_email_rate,
            self.intra_family_email_rate,
            self.cross_family_email_rate,
        ] {
            if !(r >= 0.0 && r.is_finite()) {
                return bad("email rates must be finite and >= 0");
            }
        }
        if !(self.leader_activity > 0.0 && self.leader_activity.is_finite()) {
            return bad("leader_activity must be positive");
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.topic_overlap) || !unit(self.role_topic_focus) {
            return bad("topic_overlap and role_topic_focus must lie in [0,1]");
        }
        for v in [&self.text_informativeness, &self.structure_informativeness] {
            if v.len() != self.n_families || !v.iter().copied().all(unit) {
                return bad("informativeness vectors need n_families entries in [0,1]");
            }
        }
        if self.subject_len.0 == 0 || self.subject_len.0 > self.subject_len.1 {
            return bad("subject_len must be a non-empty range of positive lengths");
        }
        Ok(())
    }

    pub fn family_name(&self, f: usize) -> String {
        if self.n_families <= FAMILY_NAMES.len() {
            FAMILY_NAMES[f].to_owned()
        } else {
            format!("fam{f}")
        }
    }

    pub fn role_name(&self, r: usize) -> String {
        if self.n_roles_per_family <= ROLE_NAMES.len() {
            ROLE_NAMES[r].to_owned()
        } else if r == 0 {
            LEADER_ROLE.to_owned()
        } else {
            format!("role{r}")
        }
    }

    /// Topic tokens owned by family `f`.
    pub fn family_vocab(&self, f: usize) -> Vec<String> {
        let name = self.family_name(f);
        (0..self.vocab_per_family).map(|w| format!("{name}{w:03}")).collect()
    }

    pub fn background_words(&self) -> Vec<String> {
        (0..self.background_vocab).map(|w| format!("bg{w:03}")).collect()
    }

    /// Planted Poisson mean of the email count between two employees, given
    /// their (family, role) cells and the org-wide mean planted rate.
    pub fn pair_rate(&self, a: (usize, usize), b: (usize, usize), mean_planted: f64) -> f64 {
        let planted = self.planted_rate(a, b);
        let s = self.structure_informativeness[a.0].min(self.structure_informativeness[b.0]);
        let mut rate = s * planted + (1.0 - s) * mean_planted;
        for (_, role) in [a, b] {
            if role == 0 {
                rate *= self.leader_activity;
            }
        }
        rate
    }

    fn planted_rate(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        if a == b {
            self.intra_role_email_rate
        } else if a.0 == b.0 {
            self.intra_family_email_rate
        } else {
            self.cross_family_email_rate
        }
    }
}

/// Cell assignment `(family, role)` of each generated employee, in roster order.
fn assign_cells(cfg: &SyntheticOrgConfig, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let total_w: f64 = cfg.role_weights.iter().sum();
    let mut cells = Vec::with_capacity(cfg.n_employees);
    for f in 0..cfg.n_families {
        let size = cfg.n_employees / cfg.n_families + usize::from(f < cfg.n_employees % cfg.n_families);
        // Largest-remainder apportionment with at least one member per role.
        let quotas: Vec<f64> = cfg.role_weights.iter().map(|w| w / total_w * size as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| (q.floor() as usize).max(1)).collect();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&x, &y| {
            let rx = quotas[x] - quotas[x].floor();
            let ry = quotas[y] - quotas[y].floor();
            ry.total_cmp(&rx).then(x.cmp(&y))
        });
        let mut k = 0;
        while counts.iter().sum::<usize>() < size {
            counts[order[k % order.len()]] += 1;
            k += 1;
        }
        while counts.iter().sum::<usize>() > size {
            let r = (0..counts.len()).rev().max_by_key(|&r| counts[r]).unwrap();
            counts[r] -= 1;
        }
        for (r, &c) in counts.iter().enumerate() {
            cells.extend(std::iter::repeat_n((f, r), c));
        }
    }
    cells.shuffle(rng);
    cells
}

/// Generates a roster and email log with planted family/role structure.
///
/// Deterministic for a fixed `rng_seed`.
pub fn generate_synthetic_org(cfg: &SyntheticOrgConfig) -> Result<(OrgRoster, Vec<EmailRecord>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let cells = assign_cells(cfg, &mut rng);
    let n = cells.len();
    let width = (n.max(2) - 1).to_string().len().max(4);
    let employees: Vec<Employee> = cells
        .iter()
        .enumerate()
        .map(|(i, &(f, r))| Employee {
            id: format!("e{i:0width$}"),
            job_family: cfg.family_name(f),
            role: cfg.role_name(r),
            level: format!("L{}", cfg.n_roles_per_family - r),
        })
        .collect();
    let roster = OrgRoster::new(employees)?;

    let vocabs: Vec<Vec<String>> = (0..cfg.n_families).map(|f| cfg.family_vocab(f)).collect();
    let background = cfg.background_words();
    let mean_planted = mean_planted_rate(cfg, &cells);

    let mut records = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let rate = cfg.pair_rate(cells[i], cells[j], mean_planted);
            if rate <= 0.0 {
                continue;
            }
            let count = Poisson::new(rate)
                .map_err(|e| Error::Config(format!("poisson rate {rate}: {e}")))?
                .sample(&mut rng) as usize;
            for _ in 0..count {
                let (s, r) = if rng.random_bool(0.5) { (i, j) } else { (j, i) };
                let fam = cells[s].0;
                let len = rng.random_range(cfg.subject_len.0..=cfg.subject_len.1);
                let tokens = (0..len)
                    .map(|_| {
                        if rng.random_bool(cfg.text_informativeness[fam]) {
                            let src = if rng.random_bool(cfg.topic_overlap) {
                                (fam + 1) % cfg.n_families
                            } else {
                                fam
                            };
                            let vocab = &vocabs[src];
                            if src == fam && rng.random_bool(cfg.role_topic_focus) {
                                role_block(vocab, cells[s].1, cfg.n_roles_per_family).choose(&mut rng).unwrap().clone()
                            } else {
                                vocab.choose(&mut rng).unwrap().clone()
                            }
                        } else {
                            background.choose(&mut rng).unwrap().clone()
                        }
                    })
                    .collect();
                records.push(EmailRecord {
                    sender: roster.get(s).id.clone(),
                    recipient: roster.get(r).id.clone(),
                    timestamp: EPOCH_START + rng.random_range(0..WINDOW_SECS),
                    subject_tokens: tokens,
                });
            }
        }
    }
    records.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.sender.cmp(&b.sender))
            .then_with(|| a.recipient.cmp(&b.recipient))
    });
    Ok((roster, records))
}

/// Slice of a family vocabulary owned by role `r`; the whole vocabulary when
/// it is too small to split.
fn role_block(vocab: &[String], r: usize, n_roles: usize) -> &[String] {
    let size = vocab.len() / n_roles;
    if size == 0 {
        return vocab;
    }
    &vocab[r * size..(r + 1) * size]
}

fn mean_planted_rate(cfg: &SyntheticOrgConfig, cells: &[(usize, usize)]) -> f64 {
    let n = cells.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += cfg.planted_rate(cells[i], cells[j]);
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// `(family, role)` cell indices of a generated roster, recovered from names.
pub fn synthetic_cells(cfg: &SyntheticOrgConfig, roster: &OrgRoster) -> Vec<(usize, usize)> {
    let fams: Vec<String> = (0..cfg.n_families).map(|f| cfg.family_name(f)).collect();
    let roles: Vec<String> = (0..cfg.n_roles_per_family).map(|r| cfg.role_name(r)).collect();
    roster
        .employees()
        .iter()
        .map(|e| {
            (
                fams.iter().position(|f| *f == e.job_family).unwrap(),
                roles.iter().position(|r| *r == e.role).unwrap(),
            )
        })
        .collect()
}

/// Org-wide mean planted rate, exposed for expectation checks.
pub fn synthetic_mean_planted_rate(cfg: &SyntheticOrgConfig, roster: &OrgRoster) -> f64 {
    mean_planted_rate(cfg, &synthetic_cells(cfg, roster))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster(rows: &[(&str, &str, &str)]) -> OrgRoster {
        OrgRoster::new(
            rows.iter()
                .map(|(id, f, r)| Employee {
                    id: id.to_string(),
                    job_family: f.to_string(),
                    role: r.to_string(),
                    level: "L1".into(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn three() -> OrgRoster {
        roster(&[("e1", "res", "member"), ("e2", "res", "member"), ("e3", "res", "member")])
    }

    #[test]
    fn parses_a_row() {
        let csv = "sender,recipient,timestamp,subject\ne1,e2,1700000000,Payroll adjustment request\n";
        let log = read_email_log(csv.as_bytes(), "t", &three()).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].subject_tokens, vec!["payroll", "adjustment", "request"]);
        assert_eq!(log.dropped, 0);
    }

    #[test]
    fn drops_self_loops_and_empty_subjects() {
        let csv = "sender,recipient,timestamp,subject\ne1,e1,1700000000,hello\ne1,e2,1,  \ne2,e3,2,ok\n";
        let log = read_email_log(csv.as_bytes(), "t", &three()).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.dropped, 2);
    }

    #[test]
    fn malformed_row_fails_with_line() {
        let csv = "sender,recipient,timestamp,subject\ne1,e2,1,a\ne2,e3,notanumber,b\ne3,e1,3,c\n";
        match read_email_log(csv.as_bytes(), "t", &three()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_id_is_an_integrity_error() {
        let csv = "sender,recipient,timestamp,subject\ne1,e9,1,a\n";
        assert!(matches!(
            read_email_log(csv.as_bytes(), "t", &three()),
            Err(Error::UnknownEmployee { .. })
        ));
    }

    #[test]
    fn bad_header_is_rejected() {
        let csv = "from,to,timestamp,subject\ne1,e2,1,a\n";
        assert!(matches!(
            read_email_log(csv.as_bytes(), "t", &three()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn roster_round_trip_and_duplicates() {
        let r = three();
        let mut buf = Vec::new();
        write_roster(&mut buf, &r).unwrap();
        assert_eq!(read_roster(buf.as_slice(), "t").unwrap(), r);
        let dup = "employee_id,job_family,role,level\na,x,y,z\na,x,y,z\n";
        assert!(read_roster(dup.as_bytes(), "t").is_err());
    }

    #[test]
    fn complete_triangle() {
        assert_eq!(positive_pairs(&three()).len(), 3);
    }

    #[test]
    fn different_roles_are_not_positive() {
        let r = roster(&[("a", "res", "member"), ("b", "res", "leader"), ("c", "biz", "member")]);
        assert!(positive_pairs(&r).is_empty());
    }

    #[test]
    fn positive_pairs_match_double_loop() {
        let (r, _) = generate_synthetic_org(&SyntheticOrgConfig::default()).unwrap();
        let mut brute = BTreeSet::new();
        for i in 0..r.len() {
            for j in 0..r.len() {
                let (a, b) = (r.get(i), r.get(j));
                if i < j && a.job_family == b.job_family && a.role == b.role {
                    brute.insert((i, j));
                }
            }
        }
        let pairs = positive_pairs(&r);
        assert_eq!(pairs, brute);
        // Sum of C(cell size, 2).
        let mut sizes: HashMap<(String, String), usize> = HashMap::new();
        for e in r.employees() {
            *sizes.entry((e.job_family.clone(), e.role.clone())).or_default() += 1;
        }
        let expect: usize = sizes.values().map(|s| s * (s - 1) / 2).sum();
        assert_eq!(pairs.len(), expect);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticOrgConfig::default();
        let (r1, e1) = generate_synthetic_org(&cfg).unwrap();
        let (r2, e2) = generate_synthetic_org(&cfg).unwrap();
        let (mut b1, mut b2) = (Vec::new(), Vec::new());
        write_email_log(&mut b1, &e1).unwrap();
        write_email_log(&mut b2, &e2).unwrap();
        write_roster(&mut b1, &r1).unwrap();
        write_roster(&mut b2, &r2).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn fully_informative_text_stays_in_family_vocab() {
        let cfg = SyntheticOrgConfig {
            text_informativeness: vec![1.0; 5],
            topic_overlap: 0.0,
            ..Default::default()
        };
        let (r, emails) = generate_synthetic_org(&cfg).unwrap();
        for e in &emails {
            let fam = &r.get(r.index_of(&e.sender).unwrap()).job_family;
            for t in &e.subject_tokens {
                assert!(t.starts_with(fam.as_str()), "{t} not in {fam}");
            }
        }
    }

    #[test]
    fn cells_cover_every_family_and_role() {
        let cfg = SyntheticOrgConfig::default();
        let (r, _) = generate_synthetic_org(&cfg).unwrap();
        assert_eq!(r.len(), 300);
        assert_eq!(r.families().len(), 5);
        assert_eq!(r.roles().len(), 3);
        let cells = synthetic_cells(&cfg, &r);
        for f in 0..5 {
            assert_eq!(cells.iter().filter(|c| c.0 == f).count(), 60);
            for role in 0..3 {
                assert!(cells.contains(&(f, role)));
            }
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SyntheticOrgConfig {
            topic_overlap: 1.5,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic_org(&cfg), Err(Error::Config(_))));
        let cfg = SyntheticOrgConfig {
            text_informativeness: vec![0.5; 2],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
