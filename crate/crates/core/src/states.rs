//! The 50 US state codes and the national marker.

/// Location code used for the national (US weighted average) series.
pub const NATIONAL: &str = "US";

/// Two-letter codes paired with full names, sorted by code.
pub const STATES: [(&str, &str); 50] = [
    ("AK", "Alaska"),
    ("AL", "Alabama"),
    ("AR", "Arkansas"),
    ("AZ", "Arizona"),
    ("CA", "California"),
    ("CO", "Colorado"),
    ("CT", "Connecticut"),
    ("DE", "Delaware"),
    ("FL", "Florida"),
    ("GA", "Georgia"),
    ("HI", "Hawaii"),
    ("IA", "Iowa"),
    ("ID", "Idaho"),
    ("IL", "Illinois"),
    ("IN", "Indiana"),
    ("KS", "Kansas"),
    ("KY", "Kentucky"),
    ("LA", "Louisiana"),
    ("MA", "Massachusetts"),
    ("MD", "Maryland"),
    ("ME", "Maine"),
    ("MI", "Michigan"),
    ("MN", "Minnesota"),
    ("MO", "Missouri"),
    ("MS", "Mississippi"),
    ("MT", "Montana"),
    ("NC", "North Carolina"),
    ("ND", "North Dakota"),
    ("NE", "Nebraska"),
    ("NH", "New Hampshire"),
    ("NJ", "New Jersey"),
    ("NM", "New Mexico"),
    ("NV", "Nevada"),
    ("NY", "New York"),
    ("OH", "Ohio"),
    ("OK", "Oklahoma"),
    ("OR", "Oregon"),
    ("PA", "Pennsylvania"),
    ("RI", "Rhode Island"),
    ("SC", "South Carolina"),
    ("SD", "South Dakota"),
    ("TN", "Tennessee"),
    ("TX", "Texas"),
    ("UT", "Utah"),
    ("VA", "Virginia"),
    ("VT", "Vermont"),
    ("WA", "Washington"),
    ("WI", "Wisconsin"),
    ("WV", "West Virginia"),
    ("WY", "Wyoming"),
];

pub fn is_state(code: &str) -> bool {
    STATES.binary_search_by(|(c, _)| c.cmp(&code)).is_ok()
}

pub fn state_codes() -> impl Iterator<Item = &'static str> {
    STATES.iter().map(|(c, _)| *c)
}

/// Normalize a location label from a surveillance file.
///
/// Two-letter codes and full state names map to the upper-case code; the
/// national series may be labelled `US`, `nat`, `National` or
/// `US National`. Anything else (territories, DC, NYC) is kept upper-cased.
pub fn normalize_location(raw: &str) -> String {
    let t = raw.trim();
    let upper = t.to_ascii_uppercase();
    match upper.as_str() {
        "US" | "NAT" | "NATIONAL" | "US NATIONAL" | "USA" => return NATIONAL.to_string(),
        _ => {}
    }
    if upper.len() == 2 && is_state(&upper) {
        return upper;
    }
    STATES
        .iter()
        .find(|(_, name)| name.eq_ignore_ascii_case(t))
        .map(|(c, _)| c.to_string())
        .unwrap_or(upper)
}
