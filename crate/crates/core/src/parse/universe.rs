//! Investable universe with the ticker alias table used to recognise firms
//! in free text.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::types::Ticker;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniverseMember {
    pub ticker: Ticker,
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

/// Ordered constituent list plus a compiled alias matcher.
#[derive(Debug, Clone)]
pub struct Universe {
    members: Vec<UniverseMember>,
    matcher: Regex,
    exact: BTreeMap<String, Ticker>,
    folded: BTreeMap<String, Ticker>,
}

#[derive(Serialize, Deserialize)]
struct UniverseFile {
    #[serde(rename = "member")]
    members: Vec<UniverseMember>,
}

/// An occurrence of a firm in text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmMention {
    pub ticker: Ticker,
    pub start: usize,
    pub end: usize,
}

impl Universe {
    pub fn new(members: Vec<UniverseMember>) -> Result<Self, String> {
        if members.is_empty() {
            return Err("universe is empty".into());
        }
        let mut exact = BTreeMap::new();
        let mut folded = BTreeMap::new();
        let mut patterns: Vec<(String, String)> = Vec::new();
        for m in &members {
            if exact.insert(m.ticker.to_string(), m.ticker.clone()).is_some() {
                return Err(format!("duplicate ticker {}", m.ticker));
            }
            patterns.push((m.ticker.to_string(), format!("(?-i:{})", regex::escape(m.ticker.as_str()))));
            for name in std::iter::once(&m.name).chain(&m.aliases) {
                let key = name.to_lowercase();
                if let Some(prev) = folded.insert(key.clone(), m.ticker.clone()) {
                    if prev != m.ticker {
                        return Err(format!("alias {name} maps to both {prev} and {}", m.ticker));
                    }
                }
                patterns.push((name.clone(), format!("(?i:{})", regex::escape(name))));
            }
        }
        // longest first so "Acciona Energia" wins over "Acciona"
        patterns.sort_by(|a, b| b.0.chars().count().cmp(&a.0.chars().count()).then(a.0.cmp(&b.0)));
        patterns.dedup_by(|a, b| a.1 == b.1);
        let alternation = patterns.into_iter().map(|(_, p)| p).collect::<Vec<_>>().join("|");
        let matcher = Regex::new(&format!(r"\b(?:{alternation})\b")).map_err(|e| e.to_string())?;
        Ok(Self { members, matcher, exact, folded })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let file: UniverseFile = toml::from_str(text).map_err(|e| e.to_string())?;
        Self::new(file.members)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&UniverseFile { members: self.members.clone() }).expect("universe serialises")
    }

    pub fn members(&self) -> &[UniverseMember] {
        &self.members
    }

    pub fn tickers(&self) -> impl Iterator<Item = &Ticker> {
        self.members.iter().map(|m| &m.ticker)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, ticker: &str) -> bool {
        self.exact.contains_key(ticker)
    }

    pub fn member(&self, ticker: &str) -> Option<&UniverseMember> {
        self.members.iter().find(|m| m.ticker.as_str() == ticker)
    }

    /// Restrict to a subset of tickers, keeping order.
    pub fn subset(&self, tickers: &[Ticker]) -> Result<Self, String> {
        Self::new(self.members.iter().filter(|m| tickers.contains(&m.ticker)).cloned().collect())
    }

    /// Firm mentions in `text`, left to right, non-overlapping.
    pub fn mentions(&self, text: &str) -> Vec<FirmMention> {
        self.matcher
            .find_iter(text)
            .filter_map(|m| {
                let s = m.as_str();
                let ticker = self.exact.get(s).or_else(|| self.folded.get(&s.to_lowercase()))?;
                Some(FirmMention { ticker: ticker.clone(), start: m.start(), end: m.end() })
            })
            .collect()
    }

    /// IBEX-35 constituents with common legal and short names.
    pub fn ibex35() -> Self {
        let rows: &[(&str, &str, &[&str])] = &[
            ("ACS", "ACS Actividades de Construccion y Servicios", &["Grupo ACS"]),
            ("ACX", "Acerinox", &[]),
            ("AENA", "Aena", &[]),
            ("AMS", "Amadeus IT Group", &["Amadeus"]),
            ("ANA", "Acciona", &[]),
            ("ANE", "Acciona Energia", &["Acciona Energía", "Acciona Energias Renovables"]),
            ("BBVA", "Banco Bilbao Vizcaya Argentaria", &["BBVA"]),
            ("BKT", "Bankinter", &[]),
            ("CABK", "CaixaBank", &["Caixa Bank"]),
            ("CLNX", "Cellnex Telecom", &["Cellnex"]),
            ("COL", "Inmobiliaria Colonial", &["Colonial"]),
            ("ELE", "Endesa", &[]),
            ("ENG", "Enagas", &["Enagás"]),
            ("FDR", "Fluidra", &[]),
            ("FER", "Ferrovial", &[]),
            ("GRF", "Grifols", &[]),
            ("IAG", "International Airlines Group", &["IAG"]),
            ("IBE", "Iberdrola", &[]),
            ("IDR", "Indra Sistemas", &["Indra"]),
            ("ITX", "Inditex", &["Industria de Diseno Textil", "Industria de Diseño Textil"]),
            ("LOG", "Logista", &["Compania de Distribucion Integral Logista"]),
            ("MAP", "Mapfre", &[]),
            ("MRL", "Merlin Properties", &["Merlin"]),
            ("MTS", "ArcelorMittal", &["Arcelor Mittal"]),
            ("NTGY", "Naturgy", &["Naturgy Energy"]),
            ("PUIG", "Puig Brands", &["Puig"]),
            ("RED", "Redeia", &["Red Electrica", "Red Eléctrica", "Redeia Corporacion"]),
            ("REP", "Repsol", &[]),
            ("ROVI", "Laboratorios Farmaceuticos Rovi", &["Rovi", "Laboratorios Rovi"]),
            ("SAB", "Banco Sabadell", &["Sabadell"]),
            ("SAN", "Banco Santander", &["Santander"]),
            ("SCYR", "Sacyr", &[]),
            ("SLR", "Solaria", &["Solaria Energia"]),
            ("TEF", "Telefonica", &["Telefónica"]),
            ("UNI", "Unicaja", &["Unicaja Banco"]),
        ];
        let members = rows
            .iter()
            .map(|(t, n, a)| UniverseMember {
                ticker: Ticker::from(*t),
                name: n.to_string(),
                aliases: a.iter().map(|s| s.to_string()).collect(),
            })
            .collect();
        Self::new(members).expect("built-in universe is valid")
    }
}
