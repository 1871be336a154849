//! Calendar math over Unix timestamps, with no OS time dependency.
//!
//! Used by the virtual filesystem's long listings and by the log layer's
//! RFC 3339 timestamps. The day/civil conversion is the standard
//! proleptic-Gregorian algorithm on integer arithmetic.

/// Civil date in the proleptic Gregorian calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Civil {
    pub year: i64,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

const SECS_PER_DAY: i64 = 86_400;

/// Split a Unix timestamp (seconds) into a UTC civil date and time.
pub fn civil_from_epoch(secs: i64) -> Civil {
    let days = secs.div_euclid(SECS_PER_DAY);
    let mut rem = secs.rem_euclid(SECS_PER_DAY);
    let hour = (rem / 3600) as u8;
    rem %= 3600;
    let minute = (rem / 60) as u8;
    let second = (rem % 60) as u8;

    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u8;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
    let year = if month <= 2 { y + 1 } else { y };

    Civil {
        year,
        month,
        day,
        hour,
        minute,
        second,
    }
}

pub const MONTH_ABBREV: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_origin() {
        let c = civil_from_epoch(0);
        assert_eq!((c.year, c.month, c.day), (1970, 1, 1));
        assert_eq!((c.hour, c.minute, c.second), (0, 0, 0));
    }

    #[test]
    fn known_timestamps() {
        // 2004-02-29T23:59:59Z, a leap day.
        let c = civil_from_epoch(1_078_099_199);
        assert_eq!((c.year, c.month, c.day), (2004, 2, 29));
        assert_eq!((c.hour, c.minute, c.second), (23, 59, 59));

        // 2026-08-08T00:00:00Z.
        let c = civil_from_epoch(1_786_147_200);
        assert_eq!((c.year, c.month, c.day), (2026, 8, 8));
    }

    #[test]
    fn pre_epoch() {
        // 1969-12-31T23:59:59Z.
        let c = civil_from_epoch(-1);
        assert_eq!((c.year, c.month, c.day), (1969, 12, 31));
        assert_eq!((c.hour, c.minute, c.second), (23, 59, 59));
    }
}
