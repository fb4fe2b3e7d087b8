//! Deterministic leaf predicates over structured case fields.
//!
//! Each predicate receives the leaf's parameter list, the case, and an
//! explicit evaluation date (never the wall clock).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use chrono::{Days, Months, NaiveDate};

use super::{CaseRecord, FieldValue, LeafFailureKind};

pub trait SymbolicPredicate: Send + Sync {
    /// Returns the truth value and a human-readable explanation.
    fn evaluate(
        &self,
        params: &[String],
        case: &CaseRecord,
        evaluation_date: NaiveDate,
    ) -> Result<(bool, String), LeafFailureKind>;
}

impl<F> SymbolicPredicate for F
where
    F: Fn(&[String], &CaseRecord, NaiveDate) -> Result<(bool, String), LeafFailureKind>
        + Send
        + Sync,
{
    fn evaluate(
        &self,
        params: &[String],
        case: &CaseRecord,
        evaluation_date: NaiveDate,
    ) -> Result<(bool, String), LeafFailureKind> {
        self(params, case, evaluation_date)
    }
}

#[derive(Clone)]
pub struct PredicateRegistry {
    predicates: BTreeMap<String, Arc<dyn SymbolicPredicate>>,
}

impl fmt::Debug for PredicateRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.predicates.keys()).finish()
    }
}

impl Default for PredicateRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl PredicateRegistry {
    pub fn empty() -> Self {
        PredicateRegistry {
            predicates: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("deadline_elapsed", deadline_elapsed);
        r.register("field_equals", field_equals);
        r
    }

    pub fn register(&mut self, id: impl Into<String>, p: impl SymbolicPredicate + 'static) {
        self.predicates.insert(id.into(), Arc::new(p));
    }

    pub fn get(&self, id: &str) -> Option<&dyn SymbolicPredicate> {
        self.predicates.get(id).map(|p| p.as_ref())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.predicates.contains_key(id)
    }
}

/// Calendar period in ISO-8601 form, e.g. `P5Y`, `P1Y6M`, `P30D`, `P2W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Period {
    pub months: u32,
    pub days: u64,
}

impl Period {
    pub fn parse(s: &str) -> Option<Period> {
        let rest = s.strip_prefix('P').or_else(|| s.strip_prefix('p'))?;
        if rest.is_empty() {
            return None;
        }
        let (mut months, mut days) = (0u32, 0u64);
        let mut num = String::new();
        for c in rest.chars() {
            if c.is_ascii_digit() {
                num.push(c);
                continue;
            }
            let n: u64 = num.parse().ok()?;
            num.clear();
            match c.to_ascii_uppercase() {
                'Y' => months = months.checked_add(u32::try_from(n).ok()?.checked_mul(12)?)?,
                'M' => months = months.checked_add(u32::try_from(n).ok()?)?,
                'W' => days = days.checked_add(n.checked_mul(7)?)?,
                'D' => days = days.checked_add(n)?,
                _ => return None,
            }
        }
        if !num.is_empty() {
            return None;
        }
        Some(Period { months, days })
    }

    pub fn add_to(self, date: NaiveDate) -> Option<NaiveDate> {
        date.checked_add_months(Months::new(self.months))?
            .checked_add_days(Days::new(self.days))
    }
}

fn field<'a>(case: &'a CaseRecord, name: &str) -> Result<&'a FieldValue, LeafFailureKind> {
    case.fields
        .get(name)
        .ok_or_else(|| LeafFailureKind::MissingField(name.to_owned()))
}

/// `deadline_elapsed(field, period)`: true once `field + period` is on or
/// before the evaluation date.
pub fn deadline_elapsed(
    params: &[String],
    case: &CaseRecord,
    evaluation_date: NaiveDate,
) -> Result<(bool, String), LeafFailureKind> {
    let [name, period] = params else {
        return Err(LeafFailureKind::BadParams(
            "deadline_elapsed expects (field, period)".into(),
        ));
    };
    let period = Period::parse(period)
        .ok_or_else(|| LeafFailureKind::BadParams(format!("invalid ISO-8601 period '{period}'")))?;
    let start = match field(case, name)? {
        FieldValue::Date(d) => *d,
        other => {
            return Err(LeafFailureKind::BadField {
                field: name.clone(),
                expected: "date".into(),
                found: other.type_name().into(),
            })
        }
    };
    let deadline = period
        .add_to(start)
        .ok_or_else(|| LeafFailureKind::BadParams("deadline out of calendar range".into()))?;
    let elapsed = evaluation_date >= deadline;
    Ok((
        elapsed,
        format!(
            "{name}={start}, deadline {deadline}, evaluated on {evaluation_date}: {}",
            if elapsed { "elapsed" } else { "not elapsed" }
        ),
    ))
}

/// `field_equals(field, value)`: typed comparison of a field with a literal.
pub fn field_equals(
    params: &[String],
    case: &CaseRecord,
    _evaluation_date: NaiveDate,
) -> Result<(bool, String), LeafFailureKind> {
    let [name, expected] = params else {
        return Err(LeafFailureKind::BadParams(
            "field_equals expects (field, value)".into(),
        ));
    };
    let value = field(case, name)?;
    let bad =
        |what: &str| LeafFailureKind::BadParams(format!("'{expected}' is not a valid {what}"));
    let equal = match value {
        FieldValue::Text(s) => s == expected,
        FieldValue::Number(n) => *n == expected.parse::<f64>().map_err(|_| bad("number"))?,
        FieldValue::Bool(b) => *b == expected.parse::<bool>().map_err(|_| bad("bool"))?,
        FieldValue::Date(d) => *d == expected.parse::<NaiveDate>().map_err(|_| bad("date"))?,
    };
    Ok((
        equal,
        format!(
            "{name}={value} {} {expected}",
            if equal { "==" } else { "!=" }
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn case() -> CaseRecord {
        CaseRecord::new("c1", "").with_field("act_date", FieldValue::Date(date("2019-01-01")))
    }

    fn params(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn five_year_period() {
        let p = params(&["act_date", "P5Y"]);
        assert!(deadline_elapsed(&p, &case(), date("2025-01-02")).unwrap().0);
        assert!(!deadline_elapsed(&p, &case(), date("2020-01-01")).unwrap().0);
        // boundary: the deadline day itself counts as elapsed
        assert!(deadline_elapsed(&p, &case(), date("2024-01-01")).unwrap().0);
        assert!(!deadline_elapsed(&p, &case(), date("2023-12-31")).unwrap().0);
    }

    #[test]
    fn missing_and_mistyped_fields() {
        let p = params(&["act_date", "P5Y"]);
        let empty = CaseRecord::new("c", "");
        assert_eq!(
            deadline_elapsed(&p, &empty, date("2025-01-01")).unwrap_err(),
            LeafFailureKind::MissingField("act_date".into())
        );
        let wrong =
            CaseRecord::new("c", "").with_field("act_date", FieldValue::Text("2019".into()));
        assert!(matches!(
            deadline_elapsed(&p, &wrong, date("2025-01-01")),
            Err(LeafFailureKind::BadField { .. })
        ));
    }

    #[test]
    fn period_parsing() {
        assert_eq!(
            Period::parse("P5Y"),
            Some(Period {
                months: 60,
                days: 0
            })
        );
        assert_eq!(
            Period::parse("P1Y6M2W3D"),
            Some(Period {
                months: 18,
                days: 17
            })
        );
        assert_eq!(Period::parse("P"), None);
        assert_eq!(Period::parse("5Y"), None);
        assert_eq!(Period::parse("P5"), None);
        assert_eq!(Period::parse("P1H"), None);
        // end-of-month clamping
        assert_eq!(
            Period::parse("P1M").unwrap().add_to(date("2024-01-31")),
            Some(date("2024-02-29"))
        );
    }

    #[test]
    fn field_equals_is_typed() {
        let c = CaseRecord::new("c", "")
            .with_field("platform", FieldValue::Text("x".into()))
            .with_field("reach", FieldValue::Number(1000.0))
            .with_field("public", FieldValue::Bool(true));
        let now = date("2025-01-01");
        assert!(
            field_equals(&params(&["platform", "x"]), &c, now)
                .unwrap()
                .0
        );
        assert!(field_equals(&params(&["reach", "1e3"]), &c, now).unwrap().0);
        assert!(
            !field_equals(&params(&["public", "false"]), &c, now)
                .unwrap()
                .0
        );
        assert!(matches!(
            field_equals(&params(&["public", "maybe"]), &c, now),
            Err(LeafFailureKind::BadParams(_))
        ));
    }

    #[test]
    fn registry_has_builtins() {
        let r = PredicateRegistry::default();
        assert!(r.contains("deadline_elapsed") && r.contains("field_equals"));
        assert!(!r.contains("nope"));
    }
}
