//! Candidate filtering: blocklists, aliased-prefix detection, and
//! DNS-injection screening.
//!
//! Scan targets pass through up to three screens before probing results are
//! trusted. A [`Blocklist`] drops addresses inside opted-out prefixes.
//! [`detect_aliased`] identifies prefixes that answer on every address (one
//! host answering for a whole prefix would otherwise inflate response
//! counts). [`apply_gfw_filter`] strips DNS responses that were injected by
//! on-path middleboxes rather than sent by the probed host: injected
//! answers are recognizable because they fall into address space that real
//! resolvers do not return, by default the Teredo prefix `2001::/32`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::net::Ipv4Addr;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::addr::{Address, Prefix, PrefixSet, Protocol};
use crate::seed;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected header {expected:?}, found {found:?}")]
    MalformedHeader {
        path: String,
        expected: &'static str,
        found: String,
    },
    #[error("{path}:{line}: {reason}")]
    MalformedRow {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("prefix {prefix} is not probeable: length must be nibble-aligned and at most 124")]
    UnprobeablePrefix { prefix: Prefix },
    #[error("{address} is not a Teredo address")]
    NotTeredo { address: Address },
}

fn io_err(path: &Path, source: std::io::Error) -> FilterError {
    FilterError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A probe failure distinct from "no answer": the measurement itself could
/// not be carried out.
#[derive(Debug, Error)]
#[error("probe failed: {0}")]
pub struct ProbeFailure(pub String);

/// Anything that can answer ICMP liveness probes — the scan simulator in
/// this crate, or a shim over a real prober.
pub trait ProbeOracle {
    fn probe_icmp(&self, a: &Address) -> Result<bool, ProbeFailure>;
}

/// A set of opted-out prefixes, normalized so no retained prefix is covered
/// by another.
#[derive(Clone, Debug, Default)]
pub struct Blocklist {
    set: PrefixSet,
}

impl Blocklist {
    /// Build from arbitrary prefixes, dropping any that a shorter retained
    /// prefix already covers.
    pub fn new(prefixes: impl IntoIterator<Item = Prefix>) -> Self {
        let mut sorted: Vec<Prefix> = prefixes.into_iter().collect();
        sorted.sort_by_key(|p| (p.length(), p.base()));
        let mut set = PrefixSet::default();
        for p in sorted {
            if !set.covers(p.base()) {
                set.insert(p);
            }
        }
        Blocklist { set }
    }

    pub fn from_file(path: &Path) -> Result<Self, FilterError> {
        let prefixes = crate::addr::read_prefix_list(path).map_err(|e| FilterError::MalformedRow {
            path: path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })?;
        Ok(Blocklist::new(prefixes))
    }

    pub fn blocks(&self, a: Address) -> bool {
        self.set.covers(a)
    }

    /// Number of retained prefixes after normalization.
    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

/// Drop blocklisted addresses, preserving input order.
pub fn apply_blocklist(addrs: &[Address], blocklist: &Blocklist) -> Vec<Address> {
    addrs.iter().copied().filter(|&a| !blocklist.blocks(a)).collect()
}

/// Outcome of probing one candidate prefix for aliasing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AliasVerdict {
    pub prefix: Prefix,
    pub aliased: bool,
    pub probes_sent: u32,
    pub probes_answered: u32,
}

/// Probe candidate prefixes for aliasing.
///
/// For each prefix, one probe address is built per distinct value of the
/// first nibble past the prefix boundary (up to `probes_per_level`, capped
/// at 16), with all remaining nibbles random. A prefix is aliased iff every
/// probe answers: real hosts cluster in a few subnets, so uniform answers
/// across the whole nibble range mean a single machine is answering for the
/// prefix. A probe failure marks the prefix non-aliased rather than
/// guessing — dropping live space costs more than re-probing later.
///
/// Prefix lengths must be nibble-aligned and at most 124 so a probe nibble
/// exists. Duplicate candidates are probed once; verdicts come back sorted
/// by prefix.
pub fn detect_aliased(
    prober: &dyn ProbeOracle,
    candidates: &[Prefix],
    probes_per_level: u32,
    rng_seed: u64,
) -> Result<Vec<AliasVerdict>, FilterError> {
    for &p in candidates {
        if p.length() % 4 != 0 || p.length() > 124 {
            return Err(FilterError::UnprobeablePrefix { prefix: p });
        }
    }
    let distinct: BTreeSet<Prefix> = candidates.iter().copied().collect();
    let probes = probes_per_level.clamp(1, 16) as usize;

    let mut verdicts = Vec::with_capacity(distinct.len());
    for prefix in distinct {
        let mut rng = seed::rng_from(
            rng_seed,
            &[
                seed::salt_str("apd"),
                (prefix.base().bits() >> 64) as u64,
                prefix.base().bits() as u64,
                u64::from(prefix.length()),
            ],
        );
        let mut values: Vec<u8> = (0..16).collect();
        values.shuffle(&mut rng);
        values.truncate(probes);

        let probe_nibble = usize::from(prefix.length()) / 4;
        let mut sent = 0u32;
        let mut answered = 0u32;
        let mut failed = false;
        for value in values {
            let mut target = Address::from_bits(
                prefix.base().bits() | (rng.random::<u128>() & suffix_mask(prefix.length())),
            );
            target = target.with_nibble(probe_nibble, value);
            sent += 1;
            match prober.probe_icmp(&target) {
                Ok(true) => answered += 1,
                Ok(false) => {}
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        verdicts.push(AliasVerdict {
            prefix,
            aliased: !failed && answered == sent,
            probes_sent: sent,
            probes_answered: answered,
        });
    }
    Ok(verdicts)
}

// Bits strictly below the first nibble past a prefix of `length` bits.
fn suffix_mask(length: u8) -> u128 {
    let used = u32::from(length) + 4;
    if used >= 128 {
        0
    } else {
        u128::MAX >> used
    }
}

/// Drop addresses covered by a detected-aliased prefix or a known-aliased
/// prefix, preserving input order.
pub fn filter_aliased(
    addrs: &[Address],
    verdicts: &[AliasVerdict],
    known_aliased: &PrefixSet,
) -> Vec<Address> {
    let detected: PrefixSet = verdicts
        .iter()
        .filter(|v| v.aliased)
        .map(|v| v.prefix)
        .collect();
    addrs
        .iter()
        .copied()
        .filter(|&a| !detected.covers(a) && !known_aliased.covers(a))
        .collect()
}

/// One DNS answer set observed from a responder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DnsResponse {
    pub responder: Address,
    pub query_name: String,
    pub answers: Vec<Address>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DnsVerdict {
    Legit,
    Injected,
}

/// The prefixes whose appearance in a DNS answer marks the response as
/// injected: Teredo space, which no real resolver hands out.
pub fn default_injection_prefixes() -> PrefixSet {
    PrefixSet::new(["2001::/32".parse::<Prefix>().expect("valid prefix")])
}

/// Classify one response: injected iff any answer falls into an injection
/// prefix. An empty answer set carries no injection marker, so it is legit.
pub fn gfw_classify(response: &DnsResponse, injection_prefixes: &PrefixSet) -> DnsVerdict {
    if response.answers.iter().any(|&a| injection_prefixes.covers(a)) {
        DnsVerdict::Injected
    } else {
        DnsVerdict::Legit
    }
}

/// Extract the IPv4 address a Teredo address embeds in its low 32 bits.
pub fn teredo_decode(a: Address) -> Result<Ipv4Addr, FilterError> {
    let teredo: Prefix = "2001::/32".parse().expect("valid prefix");
    if !teredo.contains(a) {
        return Err(FilterError::NotTeredo { address: a });
    }
    Ok(Ipv4Addr::from(a.bits() as u32))
}

/// Addresses whose responses include at least one protocol other than DNS,
/// sorted. Hosts answering only UDP/53 are indistinguishable from
/// middlebox artifacts, so they are excluded.
pub fn dns_only_filter(responses: &HashMap<Address, BTreeSet<Protocol>>) -> Vec<Address> {
    let mut kept: Vec<Address> = responses
        .iter()
        .filter(|(_, protocols)| {
            !protocols.is_empty() && **protocols != BTreeSet::from([Protocol::Udp53])
        })
        .map(|(&a, _)| a)
        .collect();
    kept.sort();
    kept
}

/// Strip UDP/53 from responders whose recorded DNS responses were all
/// injected (at least one response, none legit). Responders left with no
/// protocols are removed entirely. Returns how many responders lost their
/// DNS response.
pub fn apply_gfw_filter(
    responses: &mut HashMap<Address, BTreeSet<Protocol>>,
    dns: &[DnsResponse],
    injection_prefixes: &PrefixSet,
) -> usize {
    let mut verdicts: BTreeMap<Address, (u32, u32)> = BTreeMap::new();
    for r in dns {
        let counts = verdicts.entry(r.responder).or_insert((0, 0));
        match gfw_classify(r, injection_prefixes) {
            DnsVerdict::Injected => counts.0 += 1,
            DnsVerdict::Legit => counts.1 += 1,
        }
    }
    let mut stripped = 0;
    for (responder, (injected, legit)) in verdicts {
        if injected == 0 || legit > 0 {
            continue;
        }
        if let Some(protocols) = responses.get_mut(&responder) {
            if protocols.remove(&Protocol::Udp53) {
                stripped += 1;
                if protocols.is_empty() {
                    responses.remove(&responder);
                }
            }
        }
    }
    stripped
}

/// Load recorded DNS responses from CSV with header
/// `responder,query_name,answers`, answers `;`-separated (possibly empty).
pub fn load_dns_responses(path: &Path) -> Result<Vec<DnsResponse>, FilterError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| io_err(path, e))?
        .unwrap_or_default();
    if header.trim() != "responder,query_name,answers" {
        return Err(FilterError::MalformedHeader {
            path: path.display().to_string(),
            expected: "responder,query_name,answers",
            found: header,
        });
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let row = idx + 2;
        let mut fields = line.splitn(3, ',');
        let (responder, query_name, answers) =
            match (fields.next(), fields.next(), fields.next()) {
                (Some(r), Some(q), Some(a)) => (r, q, a),
                _ => {
                    return Err(FilterError::MalformedRow {
                        path: path.display().to_string(),
                        line: row,
                        reason: "expected 3 fields".to_string(),
                    })
                }
            };
        let responder: Address =
            responder
                .trim()
                .parse()
                .map_err(|e: crate::addr::AddrError| FilterError::MalformedRow {
                    path: path.display().to_string(),
                    line: row,
                    reason: e.to_string(),
                })?;
        let answers: Vec<Address> = answers
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<Address>())
            .collect::<Result<_, _>>()
            .map_err(|e| FilterError::MalformedRow {
                path: path.display().to_string(),
                line: row,
                reason: e.to_string(),
            })?;
        out.push(DnsResponse {
            responder,
            query_name: query_name.trim().to_string(),
            answers,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn addr(s: &str) -> Address {
        s.parse().unwrap()
    }

    fn pfx(s: &str) -> Prefix {
        s.parse().unwrap()
    }

    #[test]
    fn blocklist_normalizes_away_covered_prefixes() {
        let b = Blocklist::new([
            pfx("2001:db8:a::/48"),
            pfx("2001:db8::/32"),
            pfx("2001:db8:b::/48"),
            pfx("2001:dead::/32"),
        ]);
        assert_eq!(b.len(), 2);
        assert!(b.blocks(addr("2001:db8:a::1")));
        assert!(b.blocks(addr("2001:dead::1")));
        assert!(!b.blocks(addr("2001:beef::1")));
    }

    #[test]
    fn apply_blocklist_preserves_order() {
        let b = Blocklist::new([pfx("2001:db8::/32")]);
        let input = vec![addr("::3"), addr("2001:db8::1"), addr("::1"), addr("::2")];
        assert_eq!(
            apply_blocklist(&input, &b),
            vec![addr("::3"), addr("::1"), addr("::2")]
        );
    }

    struct FnOracle<F: Fn(Address) -> Result<bool, ProbeFailure>>(F);

    impl<F: Fn(Address) -> Result<bool, ProbeFailure>> ProbeOracle for FnOracle<F> {
        fn probe_icmp(&self, a: &Address) -> Result<bool, ProbeFailure> {
            (self.0)(*a)
        }
    }

    #[test]
    fn aliased_prefix_answers_every_probe() {
        let aliased = pfx("2001:db8:dead::/48");
        let oracle = FnOracle(move |a| Ok(aliased.contains(a)));
        let verdicts =
            detect_aliased(&oracle, &[aliased, pfx("2001:db8:beef::/48")], 16, 7).unwrap();
        assert_eq!(verdicts.len(), 2);
        let by_prefix: HashMap<Prefix, AliasVerdict> =
            verdicts.into_iter().map(|v| (v.prefix, v)).collect();
        let hit = by_prefix[&aliased];
        assert!(hit.aliased);
        assert_eq!(hit.probes_sent, 16);
        assert_eq!(hit.probes_answered, 16);
        let miss = by_prefix[&pfx("2001:db8:beef::/48")];
        assert!(!miss.aliased);
        assert_eq!(miss.probes_answered, 0);
    }

    #[test]
    fn single_responder_is_not_aliased() {
        // only one concrete host answers, so some probe value must miss
        let host = addr("2001:db8::1");
        let oracle = FnOracle(move |a| Ok(a == host));
        let verdicts = detect_aliased(&oracle, &[pfx("2001:db8::/64")], 16, 7).unwrap();
        assert!(!verdicts[0].aliased);
        assert!(verdicts[0].probes_answered <= 1);
    }

    #[test]
    fn probes_cover_requested_nibble_values() {
        // record which values of the probe nibble actually get probed
        let seen = std::sync::Mutex::new(BTreeSet::new());
        let oracle = FnOracle(|a: Address| {
            seen.lock().unwrap().insert(a.nibble(16));
            Ok(true)
        });
        detect_aliased(&oracle, &[pfx("2001:db8:0:1::/64")], 16, 99).unwrap();
        assert_eq!(seen.lock().unwrap().len(), 16);

        seen.lock().unwrap().clear();
        detect_aliased(&oracle, &[pfx("2001:db8:0:1::/64")], 4, 99).unwrap();
        assert_eq!(seen.lock().unwrap().len(), 4);
    }

    #[test]
    fn probe_failure_marks_prefix_unaliased() {
        let oracle = FnOracle(|_| Err(ProbeFailure("link down".to_string())));
        let verdicts = detect_aliased(&oracle, &[pfx("2001:db8::/64")], 16, 7).unwrap();
        assert!(!verdicts[0].aliased);
        assert_eq!(verdicts[0].probes_sent, 1);
        assert_eq!(verdicts[0].probes_answered, 0);
    }

    #[test]
    fn unprobeable_prefixes_are_rejected() {
        let oracle = FnOracle(|_| Ok(true));
        assert!(matches!(
            detect_aliased(&oracle, &[pfx("2001:db8::/63")], 16, 7),
            Err(FilterError::UnprobeablePrefix { .. })
        ));
        assert!(matches!(
            detect_aliased(&oracle, &[pfx("2001:db8::/128")], 16, 7),
            Err(FilterError::UnprobeablePrefix { .. })
        ));
        // /124 still leaves one probe nibble
        assert!(detect_aliased(&oracle, &[pfx("2001:db8::/124")], 16, 7).is_ok());
    }

    #[test]
    fn detect_aliased_is_deterministic_and_dedups() {
        let aliased = pfx("2001:db8:dead::/48");
        let oracle = FnOracle(move |a| Ok(aliased.contains(a)));
        let candidates = [aliased, aliased, pfx("2001:db8:beef::/48")];
        let a = detect_aliased(&oracle, &candidates, 16, 7).unwrap();
        let b = detect_aliased(&oracle, &candidates, 16, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a.windows(2).all(|w| w[0].prefix < w[1].prefix));
    }

    #[test]
    fn filter_aliased_removes_covered_addresses() {
        let verdicts = vec![
            AliasVerdict {
                prefix: pfx("2001:db8:dead::/48"),
                aliased: true,
                probes_sent: 16,
                probes_answered: 16,
            },
            AliasVerdict {
                prefix: pfx("2001:db8:beef::/48"),
                aliased: false,
                probes_sent: 16,
                probes_answered: 3,
            },
        ];
        let known = PrefixSet::new([pfx("2001:db8:aaaa::/48")]);
        let input = vec![
            addr("2001:db8:dead::1"),
            addr("2001:db8:beef::1"),
            addr("2001:db8:aaaa::1"),
            addr("2001:db8:cafe::1"),
        ];
        assert_eq!(
            filter_aliased(&input, &verdicts, &known),
            vec![addr("2001:db8:beef::1"), addr("2001:db8:cafe::1")]
        );
    }

    #[test]
    fn classify_flags_teredo_answers() {
        let prefixes = default_injection_prefixes();
        let injected = DnsResponse {
            responder: addr("2001:db8::53"),
            query_name: "example.com".to_string(),
            answers: vec![addr("2400:cb00::1"), addr("2001::c0a8:101")],
        };
        assert_eq!(gfw_classify(&injected, &prefixes), DnsVerdict::Injected);

        let legit = DnsResponse {
            answers: vec![addr("2400:cb00::1")],
            ..injected.clone()
        };
        assert_eq!(gfw_classify(&legit, &prefixes), DnsVerdict::Legit);

        let empty = DnsResponse {
            answers: vec![],
            ..injected
        };
        assert_eq!(gfw_classify(&empty, &prefixes), DnsVerdict::Legit);
    }

    #[test]
    fn teredo_decode_extracts_low_bits() {
        assert_eq!(
            teredo_decode(addr("2001::c0a8:101")).unwrap(),
            Ipv4Addr::new(192, 168, 1, 1)
        );
        assert!(matches!(
            teredo_decode(addr("2002::c0a8:101")),
            Err(FilterError::NotTeredo { .. })
        ));
    }

    #[test]
    fn dns_only_filter_drops_pure_dns_responders() {
        let mut responses = HashMap::new();
        responses.insert(addr("::3"), BTreeSet::from([Protocol::Udp53]));
        responses.insert(addr("::1"), BTreeSet::from([Protocol::Udp53, Protocol::Icmp]));
        responses.insert(addr("::2"), BTreeSet::from([Protocol::Tcp443]));
        assert_eq!(dns_only_filter(&responses), vec![addr("::1"), addr("::2")]);
    }

    #[test]
    fn gfw_filter_strips_udp53_from_injected_only_responders() {
        let prefixes = default_injection_prefixes();
        let r1 = addr("2001:db8::1"); // all injected -> loses udp53
        let r2 = addr("2001:db8::2"); // mixed -> keeps
        let r3 = addr("2001:db8::3"); // all injected, udp53 only -> removed
        let mut responses = HashMap::new();
        responses.insert(r1, BTreeSet::from([Protocol::Udp53, Protocol::Icmp]));
        responses.insert(r2, BTreeSet::from([Protocol::Udp53]));
        responses.insert(r3, BTreeSet::from([Protocol::Udp53]));

        let dns = vec![
            DnsResponse {
                responder: r1,
                query_name: "a.test".to_string(),
                answers: vec![addr("2001::1")],
            },
            DnsResponse {
                responder: r2,
                query_name: "a.test".to_string(),
                answers: vec![addr("2001::1")],
            },
            DnsResponse {
                responder: r2,
                query_name: "b.test".to_string(),
                answers: vec![addr("2400:cb00::1")],
            },
            DnsResponse {
                responder: r3,
                query_name: "a.test".to_string(),
                answers: vec![addr("2001::2")],
            },
        ];
        let stripped = apply_gfw_filter(&mut responses, &dns, &prefixes);
        assert_eq!(stripped, 2);
        assert_eq!(responses[&r1], BTreeSet::from([Protocol::Icmp]));
        assert_eq!(responses[&r2], BTreeSet::from([Protocol::Udp53]));
        assert!(!responses.contains_key(&r3));
    }

    #[test]
    fn dns_response_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dns.csv");
        std::fs::write(
            &path,
            "responder,query_name,answers\n2001:db8::53,example.com,2001::1;2400:cb00::1\n2001:db8::54,empty.test,\n",
        )
        .unwrap();
        let rows = load_dns_responses(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].responder, addr("2001:db8::53"));
        assert_eq!(rows[0].answers, vec![addr("2001::1"), addr("2400:cb00::1")]);
        assert_eq!(rows[1].answers, Vec::<Address>::new());
        assert_eq!(rows[1].query_name, "empty.test");
    }

    #[test]
    fn dns_response_csv_rejects_short_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dns.csv");
        std::fs::write(&path, "responder,query_name,answers\n2001:db8::53,oops\n").unwrap();
        assert!(matches!(
            load_dns_responses(&path),
            Err(FilterError::MalformedRow { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn blocklist_filter_is_idempotent(
            raw_prefixes in proptest::collection::vec((any::<u128>(), 16u8..=64), 0..10),
            raw_addrs in proptest::collection::vec(any::<u128>(), 0..50),
        ) {
            let b = Blocklist::new(
                raw_prefixes
                    .iter()
                    .map(|&(bits, len)| Prefix::new(Address::from_bits(bits), len).unwrap()),
            );
            let addrs: Vec<Address> = raw_addrs.into_iter().map(Address::from_bits).collect();
            let once = apply_blocklist(&addrs, &b);
            let twice = apply_blocklist(&once, &b);
            prop_assert_eq!(&once, &twice);
            // normalization never changes behavior
            for &a in &addrs {
                let raw_hit = raw_prefixes
                    .iter()
                    .any(|&(bits, len)| Prefix::new(Address::from_bits(bits), len).unwrap().contains(a));
                prop_assert_eq!(b.blocks(a), raw_hit);
            }
        }

        #[test]
        fn dns_only_filter_returns_sorted_subset(
            raw in proptest::collection::vec((any::<u128>(), 0u8..32), 0..40),
        ) {
            let mut responses = HashMap::new();
            for (bits, mask) in raw {
                let set: BTreeSet<Protocol> = Protocol::ALL
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, p)| p)
                    .collect();
                responses.insert(Address::from_bits(bits), set);
            }
            let kept = dns_only_filter(&responses);
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            for a in &kept {
                let set = &responses[a];
                prop_assert!(!set.is_empty());
                prop_assert!(set.iter().any(|&p| p != Protocol::Udp53));
            }
        }
    }
}
