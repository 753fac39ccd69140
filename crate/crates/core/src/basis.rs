//! Fixed-excitation configuration bases of an open chain and the initial
//! product states used by the probe protocols.
//!
//! A configuration is an occupation word: bit `i` set means site `i + 1` is
//! occupied. Site indices are 1-based in every public function.
//!
//! Enumerated sectors store `u64` words and stop at 63 sites. A lone
//! configuration uses a `u128` word so single-particle chains of up to 127
//! sites can still name their initial site.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest chain an enumerated sector (`u64` words) can describe.
pub const MAX_SITES: usize = 63;

/// Largest chain a single [`Configuration`] (`u128` word) can describe.
pub const MAX_CONFIGURATION_SITES: usize = 127;

/// Largest sector `enumerate_sector` will materialise.
pub const MAX_SECTOR_DIM: u128 = 1 << 32;

/// Physical parameters of a Stark chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Number of sites `L`.
    pub sites: usize,
    /// Hopping energy `J`.
    pub hopping: f64,
    /// Gradient field `h` (energy per lattice site).
    pub field: f64,
    /// Ising anisotropy `Delta`.
    pub anisotropy: f64,
}

impl LatticeSpec {
    pub fn new(sites: usize, hopping: f64, field: f64, anisotropy: f64) -> Result<Self> {
        let spec = Self {
            sites,
            hopping,
            field,
            anisotropy,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::domain(format!("site count must be at least 2, got {}", self.sites)));
        }
        if !(self.hopping > 0.0) || !self.hopping.is_finite() {
            return Err(Error::domain(format!("hopping must be positive, got {}", self.hopping)));
        }
        if !self.field.is_finite() || !self.anisotropy.is_finite() {
            return Err(Error::domain("field and anisotropy must be finite"));
        }
        Ok(())
    }

    pub fn with_field(mut self, field: f64) -> Self {
        self.field = field;
        self
    }
}

/// Binomial coefficient without overflow for every `n <= 63`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// A single occupation pattern on an `L`-site chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    word: u128,
    sites: usize,
}

impl Configuration {
    pub fn new(word: u128, sites: usize) -> Result<Self> {
        if sites == 0 || sites > MAX_CONFIGURATION_SITES {
            return Err(Error::domain(format!(
                "site count must lie in 1..={MAX_CONFIGURATION_SITES}, got {sites}"
            )));
        }
        if word >> sites != 0 {
            return Err(Error::domain(format!(
                "occupation word {word:#b} has bits beyond site {sites}"
            )));
        }
        Ok(Self { word, sites })
    }

    /// Builds a configuration from 1-based occupied site indices.
    pub fn from_sites(sites: usize, occupied: &[usize]) -> Result<Self> {
        let mut word = 0u128;
        for &l in occupied {
            if l == 0 || l > sites {
                return Err(Error::domain(format!("site {l} outside 1..={sites}")));
            }
            word |= 1 << (l - 1);
        }
        Self::new(word, sites)
    }

    pub fn word(&self) -> u128 {
        self.word
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn excitations(&self) -> usize {
        self.word.count_ones() as usize
    }

    pub fn is_occupied(&self, site: usize) -> bool {
        site >= 1 && site <= self.sites && self.word >> (site - 1) & 1 == 1
    }

    /// Occupied sites, 1-based and ascending.
    pub fn occupied_sites(&self) -> Vec<usize> {
        (1..=self.sites).filter(|&l| self.is_occupied(l)).collect()
    }

    /// Mirror image under `l -> L + 1 - l`.
    pub fn reflect(&self) -> Self {
        let word = (0..self.sites)
            .filter(|i| self.word >> i & 1 == 1)
            .fold(0u128, |acc, i| acc | 1 << (self.sites - 1 - i));
        Self {
            word,
            sites: self.sites,
        }
    }

    /// Parses the comma-separated rendering produced by `Display`.
    pub fn parse(text: &str) -> Result<Self> {
        let bits: Vec<&str> = text.split(',').map(str::trim).collect();
        let mut word = 0u128;
        for (i, b) in bits.iter().enumerate() {
            match *b {
                "1" => word |= 1 << i,
                "0" => {}
                other => return Err(Error::domain(format!("invalid occupation '{other}'"))),
            }
        }
        Self::new(word, bits.len())
    }
}

impl fmt::Display for Configuration {
    /// Comma-separated bits, site 1 first, e.g. `1,0,1,0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.sites {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", self.word >> i & 1)?;
        }
        Ok(())
    }
}

/// All `N`-excitation configurations of an `L`-site chain, ascending by
/// integer value of the occupation word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectorBasis {
    sites: usize,
    excitations: usize,
    configs: Vec<u64>,
}

impl SectorBasis {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn excitations(&self) -> usize {
        self.excitations
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[u64] {
        &self.configs
    }

    pub fn config(&self, k: usize) -> Configuration {
        Configuration {
            word: self.configs[k] as u128,
            sites: self.sites,
        }
    }

    /// Ordinal of an occupation word, the exact inverse of `configs`.
    pub fn index_of(&self, word: u64) -> Option<usize> {
        self.configs.binary_search(&word).ok()
    }

    pub fn index_of_config(&self, config: &Configuration) -> Result<usize> {
        if config.sites != self.sites {
            return Err(Error::domain(format!(
                "configuration has {} sites, basis has {}",
                config.sites, self.sites
            )));
        }
        let word = u64::try_from(config.word).ok();
        word.and_then(|w| self.index_of(w)).ok_or_else(|| {
            Error::domain(format!(
                "configuration {config} is not in the {}-excitation sector",
                self.excitations
            ))
        })
    }
}

/// Enumerates the `N`-excitation sector of an `L`-site chain.
pub fn enumerate_sector(sites: usize, excitations: usize) -> Result<SectorBasis> {
    if sites == 0 || sites > MAX_SITES {
        return Err(Error::domain(format!("site count must lie in 1..={MAX_SITES}, got {sites}")));
    }
    if excitations > sites {
        return Err(Error::domain(format!(
            "excitation count {excitations} exceeds site count {sites}"
        )));
    }
    let count = binomial(sites, excitations);
    if count > MAX_SECTOR_DIM {
        return Err(Error::Resource {
            what: format!("sector (L={sites}, N={excitations})"),
            required: count.min(u64::MAX as u128) as u64,
            available: MAX_SECTOR_DIM as u64,
        });
    }
    let mut configs = Vec::with_capacity(count as usize);
    if excitations == 0 {
        configs.push(0);
    } else {
        // Gosper's hack walks the fixed-popcount words in ascending order.
        let limit = 1u64 << sites;
        let mut w: u64 = (1u64 << excitations) - 1;
        while w < limit {
            configs.push(w);
            let c = w & w.wrapping_neg();
            let r = w + c;
            w = (((r ^ w) >> 2) / c) | r;
        }
    }
    debug_assert_eq!(configs.len() as u128, count);
    Ok(SectorBasis {
        sites,
        excitations,
        configs,
    })
}

/// Alternating product state: odd sites occupied. For odd `L` both ends are
/// occupied.
pub fn neel_initial(sites: usize) -> Result<Configuration> {
    if sites < 2 {
        return Err(Error::domain("a Neel state needs at least two sites"));
    }
    let occupied: Vec<usize> = (1..=sites).step_by(2).collect();
    Configuration::from_sites(sites, &occupied)
}

/// `N` excitations at spacing 2, symmetric about the central site of an odd
/// chain.
pub fn centered_initial(sites: usize, excitations: usize) -> Result<Configuration> {
    if sites < 2 || sites % 2 == 0 {
        return Err(Error::domain(format!("centered states need an odd chain, got L={sites}")));
    }
    let center = sites.div_ceil(2);
    if excitations == 0 || excitations > center {
        return Err(Error::domain(format!(
            "centered pattern with N={excitations} does not fit in L={sites}"
        )));
    }
    let first = center as isize - (excitations as isize - 1);
    let occupied: Vec<usize> = (0..excitations)
        .map(|j| (first + 2 * j as isize) as usize)
        .collect();
    Configuration::from_sites(sites, &occupied)
}

/// One excitation on site `site`.
pub fn single_site_initial(sites: usize, site: usize) -> Result<Configuration> {
    if sites < 2 {
        return Err(Error::domain("a chain needs at least two sites"));
    }
    if site == 0 || site > sites {
        return Err(Error::domain(format!("site {site} outside 1..={sites}")));
    }
    Configuration::from_sites(sites, &[site])
}

/// Named initial-state recipes, resolved against a chain length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialState {
    /// One excitation on the given 1-based site.
    Site { site: usize },
    /// One excitation on site `ceil(L / 2)`.
    CentralSite,
    Neel,
    Centered { excitations: usize },
    /// Explicit occupation pattern in the comma-separated rendering.
    Pattern { bits: String },
}

impl InitialState {
    pub fn resolve(&self, sites: usize) -> Result<Configuration> {
        match self {
            InitialState::Site { site } => single_site_initial(sites, *site),
            InitialState::CentralSite => single_site_initial(sites, sites.div_ceil(2)),
            InitialState::Neel => neel_initial(sites),
            InitialState::Centered { excitations } => centered_initial(sites, *excitations),
            InitialState::Pattern { bits } => {
                let c = Configuration::parse(bits)?;
                if c.sites() != sites {
                    return Err(Error::domain(format!(
                        "pattern has {} sites, chain has {sites}",
                        c.sites()
                    )));
                }
                Ok(c)
            }
        }
    }
}
