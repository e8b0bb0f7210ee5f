//! Synthetic stand-in for the Metro Interstate traffic file: same columns and
//! quirks (duplicate timestamps, gaps, holidays only on midnight rows, rain
//! and temperature outliers, zero-volume hours), deterministic per seed.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HEADER: &str = "holiday,temp,rain_1h,snow_1h,clouds_all,weather_main,weather_description,date_time,traffic_volume";

#[derive(Clone, Debug)]
pub struct MetroSpec {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    /// Inclusive hour ranges with no rows at all.
    pub gaps: Vec<(NaiveDateTime, NaiveDateTime)>,
    /// Probability that an hour is missing.
    pub drop_rate: f64,
    /// Probability that an hour appears twice with different weather.
    pub dup_rate: f64,
    /// Probability of a zero-volume hour.
    pub zero_rate: f64,
    /// Hours whose volume is always zero (sensor outages).
    pub outages: Vec<NaiveDateTime>,
    pub noise: f64,
    pub seed: u64,
}

pub fn ts(y: i32, m: u32, d: u32, h: u32) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(h, 0, 0).unwrap()
}

impl MetroSpec {
    /// Roughly the real file's span and size (about 48k raw rows).
    pub fn full() -> Self {
        MetroSpec {
            start: ts(2012, 10, 2, 9),
            end: ts(2018, 9, 30, 23),
            gaps: vec![
                (ts(2013, 5, 20, 0), ts(2013, 11, 6, 23)),
                (ts(2014, 8, 8, 2), ts(2015, 6, 11, 19)),
            ],
            drop_rate: 0.005,
            dup_rate: 0.18,
            zero_rate: 0.0005,
            outages: vec![ts(2018, 9, 22, 3), ts(2018, 9, 22, 4)],
            noise: 150.0,
            seed: 2012,
        }
    }

    /// A few weeks either side of the 2017/2018 boundary.
    pub fn small() -> Self {
        MetroSpec {
            start: ts(2017, 11, 1, 0),
            end: ts(2018, 1, 20, 23),
            gaps: vec![(ts(2017, 12, 10, 5), ts(2017, 12, 10, 9))],
            drop_rate: 0.01,
            dup_rate: 0.05,
            zero_rate: 0.003,
            outages: vec![ts(2018, 1, 14, 2)],
            noise: 100.0,
            seed: 7,
        }
    }
}

fn holiday_name(t: NaiveDateTime) -> &'static str {
    if t.hour() != 0 {
        return "None";
    }
    match (t.month(), t.day()) {
        (1, 1) => "New Years Day",
        (7, 4) => "Independence Day",
        (12, 25) => "Christmas Day",
        (11, 11) => "Veterans Day",
        _ => "None",
    }
}

fn is_holiday_date(t: NaiveDateTime) -> bool {
    matches!((t.month(), t.day()), (1, 1) | (7, 4) | (12, 25) | (11, 11))
}

/// Clean expected volume for an hour, vehicles per hour.
pub fn base_volume(t: NaiveDateTime) -> f64 {
    let h = t.hour() as f64;
    let bump = |centre: f64, width: f64| (-((h - centre) / width).powi(2)).exp();
    let weekday = t.weekday().num_days_from_monday() < 5 && !is_holiday_date(t);
    let night = 0.5 + 0.5 * (std::f64::consts::TAU * (h - 15.0) / 24.0).cos();
    if weekday {
        400.0 + 2600.0 * night + 2800.0 * bump(7.0, 1.3) + 2300.0 * bump(16.5, 1.8)
    } else {
        350.0 + 3100.0 * bump(13.5, 4.0) * (0.6 + 0.4 * night)
    }
}

struct Weather {
    main: &'static str,
    description: &'static str,
    rain: f64,
    snow: f64,
    clouds: f64,
}

/// (main, description, probability of being drawn when the weather changes)
const WEATHER: [(&str, &str, f64); 10] = [
    ("Clear", "sky is clear", 0.33),
    ("Clouds", "broken clouds", 0.36),
    ("Mist", "mist", 0.10),
    ("Rain", "light rain", 0.06),
    ("Snow", "light snow", 0.04),
    ("Drizzle", "light intensity drizzle", 0.015),
    ("Haze", "haze", 0.04),
    ("Thunderstorm", "thunderstorm with light rain", 0.01),
    ("Fog", "fog", 0.03),
    ("Smoke", "smoke", 0.005),
];

/// Weather persists for hours at a time, like the real file.
fn weather(rng: &mut ChaCha8Rng, t: NaiveDateTime, state: &mut usize) -> Weather {
    if rng.gen::<f64>() < 0.12 {
        let mut u: f64 = rng.gen();
        *state = WEATHER
            .iter()
            .position(|w| {
                u -= w.2;
                u < 0.0
            })
            .unwrap_or(0);
    }
    let winter = matches!(t.month(), 11 | 12 | 1 | 2 | 3);
    let (main, description, _) = match WEATHER[*state] {
        ("Snow", ..) if !winter => WEATHER[2],
        w => w,
    };
    let rain = match main {
        "Rain" | "Thunderstorm" | "Drizzle" => ((0.05 + rng.gen::<f64>() * 3.0) * 100.0).round() / 100.0,
        _ => 0.0,
    };
    let snow = if main == "Snow" { (rng.gen::<f64>() * 0.4 * 100.0).round() / 100.0 } else { 0.0 };
    let clouds = match main {
        "Clear" => 1.0,
        "Clouds" => 20.0 + (rng.gen::<f64>() * 80.0).round(),
        _ => 40.0 + (rng.gen::<f64>() * 60.0).round(),
    };
    Weather {
        main,
        description,
        rain,
        snow,
        clouds,
    }
}

fn row(out: &mut String, t: NaiveDateTime, temp: f64, w: &Weather, volume: f64) {
    writeln!(
        out,
        "{},{:.2},{},{},{},{},{},{},{}",
        holiday_name(t),
        temp,
        w.rain,
        w.snow,
        w.clouds,
        w.main,
        w.description,
        t.format("%Y-%m-%d %H:%M:%S"),
        volume
    )
    .unwrap();
}

pub fn metro_like_csv(spec: &MetroSpec) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = format!("{HEADER}\n");
    let mut t = spec.start;
    let mut rain_outlier_done = false;
    let mut state = 0;
    while t <= spec.end {
        let in_gap = spec.gaps.iter().any(|(a, b)| *a <= t && t <= *b);
        let dropped = rng.gen::<f64>() < spec.drop_rate;
        if !in_gap && !dropped {
            let day_of_year = t.ordinal() as f64;
            let mut temp = 281.0 - 15.0 * (std::f64::consts::TAU * (day_of_year + 10.0) / 365.0).cos()
                + 4.0 * (std::f64::consts::TAU * (t.hour() as f64 - 9.0) / 24.0).sin()
                + rng.gen_range(-2.0..2.0);
            if rng.gen::<f64>() < 0.0003 {
                temp = 0.0;
            }
            let mut w = weather(&mut rng, t, &mut state);
            if !rain_outlier_done && t.year() == 2016 && t.month() == 7 {
                w.rain = 9831.3;
                rain_outlier_done = true;
            }
            let weather_factor = match w.main {
                "Snow" => 0.85,
                "Thunderstorm" | "Fog" => 0.92,
                _ => 1.0,
            };
            let mut volume = (base_volume(t) * weather_factor + rng.gen_range(-spec.noise..spec.noise))
                .round()
                .max(0.0);
            if rng.gen::<f64>() < spec.zero_rate || spec.outages.contains(&t) {
                volume = 0.0;
            }
            row(&mut out, t, temp, &w, volume);
            if rng.gen::<f64>() < spec.dup_rate {
                let w2 = Weather {
                    main: "Mist",
                    description: "mist",
                    ..w
                };
                row(&mut out, t, temp, &w2, volume);
            }
        }
        t += Duration::hours(1);
    }
    out
}

pub fn write_metro_like(dir: &Path, name: &str, spec: &MetroSpec) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, metro_like_csv(spec)).unwrap();
    path
}

/// Path of the real Metro file when `TRAFFICAST_METRO_CSV` points at one.
pub fn real_metro_csv() -> Option<PathBuf> {
    std::env::var_os("TRAFFICAST_METRO_CSV")
        .map(PathBuf::from)
        .filter(|p| p.is_file())
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trafficast"));
    cmd.env_remove("TRAFFICAST_SEED").env("RUST_LOG", "warn");
    cmd
}

pub fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed ({:?}):\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa.sqrt() * sbb.sqrt())
}
