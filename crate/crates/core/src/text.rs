//! Name normalization and the built-in admin-region and country tables.

use std::collections::HashMap;
use std::sync::OnceLock;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Case-fold, strip diacritics, collapse internal whitespace.
pub fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.nfd().filter(|c| !is_combining_mark(*c)) {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.extend(c.to_lowercase());
    }
    out
}

const US_STATES: &[(&str, &str)] = &[
    ("AL", "Alabama"),
    ("AK", "Alaska"),
    ("AZ", "Arizona"),
    ("AR", "Arkansas"),
    ("CA", "California"),
    ("CO", "Colorado"),
    ("CT", "Connecticut"),
    ("DE", "Delaware"),
    ("DC", "District of Columbia"),
    ("FL", "Florida"),
    ("GA", "Georgia"),
    ("HI", "Hawaii"),
    ("ID", "Idaho"),
    ("IL", "Illinois"),
    ("IN", "Indiana"),
    ("IA", "Iowa"),
    ("KS", "Kansas"),
    ("KY", "Kentucky"),
    ("LA", "Louisiana"),
    ("ME", "Maine"),
    ("MD", "Maryland"),
    ("MA", "Massachusetts"),
    ("MI", "Michigan"),
    ("MN", "Minnesota"),
    ("MS", "Mississippi"),
    ("MO", "Missouri"),
    ("MT", "Montana"),
    ("NE", "Nebraska"),
    ("NV", "Nevada"),
    ("NH", "New Hampshire"),
    ("NJ", "New Jersey"),
    ("NM", "New Mexico"),
    ("NY", "New York"),
    ("NC", "North Carolina"),
    ("ND", "North Dakota"),
    ("OH", "Ohio"),
    ("OK", "Oklahoma"),
    ("OR", "Oregon"),
    ("PA", "Pennsylvania"),
    ("PR", "Puerto Rico"),
    ("RI", "Rhode Island"),
    ("SC", "South Carolina"),
    ("SD", "South Dakota"),
    ("TN", "Tennessee"),
    ("TX", "Texas"),
    ("UT", "Utah"),
    ("VT", "Vermont"),
    ("VA", "Virginia"),
    ("WA", "Washington"),
    ("WV", "West Virginia"),
    ("WI", "Wisconsin"),
    ("WY", "Wyoming"),
];

const CA_PROVINCES: &[(&str, &str)] = &[
    ("AB", "Alberta"),
    ("BC", "British Columbia"),
    ("MB", "Manitoba"),
    ("NB", "New Brunswick"),
    ("NL", "Newfoundland and Labrador"),
    ("NS", "Nova Scotia"),
    ("NT", "Northwest Territories"),
    ("NU", "Nunavut"),
    ("ON", "Ontario"),
    ("PE", "Prince Edward Island"),
    ("QC", "Quebec"),
    ("SK", "Saskatchewan"),
    ("YT", "Yukon"),
];

const AU_STATES: &[(&str, &str)] = &[
    ("ACT", "Australian Capital Territory"),
    ("NSW", "New South Wales"),
    ("NT", "Northern Territory"),
    ("QLD", "Queensland"),
    ("SA", "South Australia"),
    ("TAS", "Tasmania"),
    ("VIC", "Victoria"),
    ("WA", "Western Australia"),
];

const COUNTRY_ALIASES: &[(&str, &str)] = &[
    ("usa", "united states"),
    ("us", "united states"),
    ("u.s.a.", "united states"),
    ("u.s.", "united states"),
    ("united states of america", "united states"),
    ("uk", "united kingdom"),
    ("u.k.", "united kingdom"),
    ("great britain", "united kingdom"),
    ("peoples r china", "china"),
    ("people's republic of china", "china"),
    ("pr china", "china"),
    ("swiss confederation", "switzerland"),
];

/// Canonical normalized country name.
pub fn canonical_country(country: &str) -> String {
    let n = normalize(country);
    match COUNTRY_ALIASES.iter().find(|(alias, _)| *alias == n) {
        Some((_, canon)) => (*canon).to_string(),
        None => n,
    }
}

fn admin_index() -> &'static HashMap<&'static str, HashMap<String, &'static str>> {
    static INDEX: OnceLock<HashMap<&'static str, HashMap<String, &'static str>>> = OnceLock::new();
    INDEX.get_or_init(|| {
        let tables: [(&str, &[(&str, &str)]); 3] = [
            ("united states", US_STATES),
            ("canada", CA_PROVINCES),
            ("australia", AU_STATES),
        ];
        tables
            .into_iter()
            .map(|(country, table)| {
                let mut names = HashMap::new();
                for (code, name) in table {
                    names.insert(normalize(code), *code);
                    names.insert(normalize(name), *code);
                }
                (country, names)
            })
            .collect()
    })
}

/// If `segment` names a known admin region of `country`, returns the region code.
pub fn known_admin(segment: &str, country: &str) -> Option<&'static str> {
    let names = admin_index().get(canonical_country(country).as_str())?;
    names.get(&normalize(segment)).copied()
}

/// Canonical normalized admin name: the region code when the region is known.
pub fn canonical_admin(admin: &str, country: &str) -> String {
    match known_admin(admin, country) {
        Some(code) => normalize(code),
        None => normalize(admin),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_case_diacritics_and_space() {
        assert_eq!(normalize("  Zürich   Oerlikon "), "zurich oerlikon");
        assert_eq!(normalize("DEBRECEN"), "debrecen");
        assert_eq!(normalize("Genève"), "geneve");
    }

    #[test]
    fn admin_codes_and_names_coincide() {
        assert_eq!(known_admin("CA", "USA"), Some("CA"));
        assert_eq!(known_admin("california", "United States"), Some("CA"));
        assert_eq!(known_admin("Victoria", "Australia"), Some("VIC"));
        assert_eq!(known_admin("Victoria", "Hungary"), None);
        assert_eq!(canonical_admin("New York", "USA"), canonical_admin("NY", "usa"));
    }

    #[test]
    fn country_aliases() {
        assert_eq!(canonical_country("USA"), "united states");
        assert_eq!(canonical_country("Hungary"), "hungary");
    }
}
