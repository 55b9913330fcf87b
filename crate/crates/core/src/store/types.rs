use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GeoPoint, StoreError};

macro_rules! closed_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = StoreError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(StoreError::UnknownValue {
                        kind: stringify!($name),
                        value: other.to_string(),
                    }),
                }
            }
        }
    };
}

closed_enum!(
    /// Kind of essential service.
    Category {
        Hospital => "hospital",
        Supermarket => "supermarket",
        Pharmacy => "pharmacy",
    }
);

closed_enum!(
    /// Travel mode. Declaration order is the documented tie-break precedence.
    TravelMode {
        Walk => "walk",
        Bike => "bike",
        Drive => "drive",
    }
);

closed_enum!(
    /// Which travel quantity a query is about.
    Metric {
        Distance => "distance",
        Time => "time",
    }
);

/// Travel distance and time from one origin to the nearest service of a
/// category, by one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub origin: GeoPoint,
    pub category: Category,
    pub mode: TravelMode,
    pub distance_km: f64,
    pub time_min: f64,
}

impl AccessRecord {
    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Distance => self.distance_km,
            Metric::Time => self.time_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub name: String,
    pub point: GeoPoint,
    pub population: Option<u64>,
}

impl GazetteerEntry {
    pub fn canonical_name(&self) -> String {
        canonicalize_name(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosestResult {
    pub distance: f64,
    pub time: f64,
    pub matched_origin: GeoPoint,
}

impl ClosestResult {
    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Distance => self.distance,
            Metric::Time => self.time,
        }
    }
}

/// Case-folds, trims and collapses internal whitespace. Diacritics are kept.
pub fn canonicalize_name(name: &str) -> String {
    name.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalization() {
        assert_eq!(canonicalize_name("  duRANGO "), "durango");
        assert_eq!(canonicalize_name("Abadiño,\t  Durango"), "abadiño, durango");
        assert_eq!(canonicalize_name("MAÑARIA"), "mañaria");
    }

    #[test]
    fn closed_sets() {
        assert_eq!("hospital".parse::<Category>().unwrap(), Category::Hospital);
        assert!("clinic".parse::<Category>().is_err());
        assert!("fly".parse::<TravelMode>().is_err());
        assert!("Hospital".parse::<Category>().is_err());
        assert_eq!(TravelMode::ALL, &[TravelMode::Walk, TravelMode::Bike, TravelMode::Drive]);
    }
}
