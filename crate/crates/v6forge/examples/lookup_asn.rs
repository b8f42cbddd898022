//! Longest-prefix-match lookups against a routing table.
//!
//! Builds a small table with nested announcements and shows that lookups
//! pick the most specific covering prefix, fall back to shorter ones, and
//! miss entirely outside announced space.
//!
//! Run with: cargo run --example lookup_asn

use v6forge::{Address, Prefix, PrefixTable};

fn main() -> anyhow::Result<()> {
    let mut table = PrefixTable::default();
    let routes: [(&str, u32); 4] = [
        ("2001:db8::/32", 64496),
        ("2001:db8:100::/40", 64500),
        ("2001:db8:100::/48", 64501),
        ("2400:cb00::/32", 13335),
    ];
    for (prefix, asn) in routes {
        table.insert(prefix.parse::<Prefix>()?, asn);
    }

    let probes: [&str; 4] = [
        "2001:db8:100::1",   // covered by /32, /40, and /48
        "2001:db8:1ff::1",   // covered by /32 and /40
        "2001:db8:ffff::1",  // only the /32
        "2606:4700::1",      // unannounced
    ];
    for s in probes {
        let a: Address = s.parse()?;
        match table.lookup(a) {
            Some(asn) => println!("{a:<18} -> AS{asn}"),
            None => println!("{a:<18} -> no covering announcement"),
        }
    }
    Ok(())
}
