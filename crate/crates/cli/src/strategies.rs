//! Strategy tokens and labels shared by flags, CSV columns and plot legends.

use fragsim_core::protocol::Strategy;

use crate::CliError;

/// Parses a strategy token: `aloha`, `buffered_aloha`, `frag:<n>`,
/// `frag_retx:<n>[:<sessions>]`.
pub fn parse_token(token: &str) -> Result<Strategy, CliError> {
    let mut parts = token.split(':');
    let kind = parts.next().unwrap_or_default();
    let frag: Option<u8> = match parts.next() {
        Some(v) => Some(
            v.parse()
                .map_err(|_| CliError::usage(format!("bad fragment count in {token:?}")))?,
        ),
        None => None,
    };
    let sessions: Option<u8> = match parts.next() {
        Some(v) => Some(
            v.parse()
                .map_err(|_| CliError::usage(format!("bad session count in {token:?}")))?,
        ),
        None => None,
    };
    if parts.next().is_some() {
        return Err(CliError::usage(format!("too many fields in {token:?}")));
    }
    let strategy = match kind {
        "aloha" => Strategy::Aloha,
        "buffered_aloha" => Strategy::BufferedAloha,
        "frag" => Strategy::Frag {
            fragments: frag.unwrap_or(2),
        },
        "frag_retx" => Strategy::FragRetx {
            fragments: frag.unwrap_or(2),
            sessions: sessions.unwrap_or(1),
        },
        _ => return Err(CliError::usage(format!("unknown strategy {kind:?}"))),
    };
    strategy
        .validate()
        .map_err(|e| CliError::usage(format!("{token:?}: {e}")))?;
    Ok(strategy)
}

/// Canonical token for a strategy (round-trips through [`parse_token`]).
pub fn token(strategy: &Strategy) -> String {
    match *strategy {
        Strategy::Aloha => "aloha".into(),
        Strategy::BufferedAloha => "buffered_aloha".into(),
        Strategy::Frag { fragments } => format!("frag:{fragments}"),
        Strategy::FragRetx {
            fragments,
            sessions,
        } => format!("frag_retx:{fragments}:{sessions}"),
    }
}

/// Kind name alone, for the CSV `strategy` column.
pub fn kind_name(strategy: &Strategy) -> &'static str {
    match strategy {
        Strategy::Aloha => "aloha",
        Strategy::BufferedAloha => "buffered_aloha",
        Strategy::Frag { .. } => "frag",
        Strategy::FragRetx { .. } => "frag_retx",
    }
}

/// Human label for plot legends.
pub fn label(strategy: &Strategy) -> String {
    match *strategy {
        Strategy::Aloha => "Aloha".into(),
        Strategy::BufferedAloha => "Buffered Aloha".into(),
        Strategy::Frag { fragments } => format!("{fragments} frag, no retx"),
        Strategy::FragRetx {
            fragments,
            sessions,
        } => {
            if sessions == 1 {
                format!("{fragments} frag, 1 session")
            } else {
                format!("{fragments} frag, {sessions} sessions")
            }
        }
    }
}

/// The six headline strategies: Aloha, Buffered Aloha, and fragmentation
/// with one retransmission session for 2..=5 fragments.
pub fn headline_strategies() -> Vec<Strategy> {
    let mut v = vec![Strategy::Aloha, Strategy::BufferedAloha];
    for fragments in 2..=5 {
        v.push(Strategy::FragRetx {
            fragments,
            sessions: 1,
        });
    }
    v
}

/// Extra variants used by the gains analysis: fragmentation without
/// retransmissions and with a two-session budget.
pub fn gains_extras() -> Vec<Strategy> {
    let mut v = Vec::new();
    for fragments in 2..=5 {
        v.push(Strategy::Frag { fragments });
    }
    for fragments in 2..=5 {
        v.push(Strategy::FragRetx {
            fragments,
            sessions: 2,
        });
    }
    v
}

/// Default sweep set: headline strategies plus the gains extras.
pub fn default_sweep_strategies() -> Vec<Strategy> {
    let mut v = headline_strategies();
    v.extend(gains_extras());
    v
}
