//! CSV learning-curve files, their JSON sidecars, and SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::{moving_average, EpisodeStats};
use super::RunRecord;
use crate::baselines::MethodTag;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 7] = [
    "method",
    "seed",
    "episode",
    "env_steps",
    "episode_reward",
    "smoothed_reward",
    "truncated",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: MethodTag,
    pub seed: u64,
    pub episode: usize,
    pub env_steps: usize,
    pub episode_reward: f64,
    pub smoothed_reward: f64,
    pub truncated: bool,
}

/// Everything about a CSV that the rows themselves do not say.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvMeta {
    pub smoothing: String,
    pub window: usize,
    pub methods: Vec<MethodTag>,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: MethodTag,
    pub seed: u64,
    pub env: String,
    pub algorithm: String,
    pub budget_steps: usize,
    pub total_steps: usize,
    pub failed: Option<String>,
}

/// Sidecar path for a CSV: `x.csv` becomes `x.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

pub fn csv_rows(records: &[RunRecord], window: usize) -> Result<Vec<CsvRow>> {
    let mut rows = Vec::new();
    for rec in records {
        let rewards: Vec<f64> = rec.episodes.iter().map(|e| e.reward).collect();
        let smoothed = moving_average(&rewards, window)?;
        for (e, s) in rec.episodes.iter().zip(smoothed) {
            rows.push(CsvRow {
                method: rec.method,
                seed: rec.seed,
                episode: e.episode,
                env_steps: e.env_steps,
                episode_reward: e.reward,
                smoothed_reward: s,
                truncated: e.truncated,
            });
        }
    }
    Ok(rows)
}

/// CSV text for `records`. Reals are printed in shortest round-trip form.
pub fn csv_string(records: &[RunRecord], window: usize) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in csv_rows(records, window)? {
        w.write_record([
            r.method.as_str().to_string(),
            r.seed.to_string(),
            r.episode.to_string(),
            r.env_steps.to_string(),
            r.episode_reward.to_string(),
            r.smoothed_reward.to_string(),
            r.truncated.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes the CSV and its sidecar.
pub fn emit_csv(records: &[RunRecord], window: usize, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Contract("no runs to write".into()));
    }
    std::fs::write(path, csv_string(records, window)?).map_err(|e| Error::io(path, e))?;
    let mut methods: Vec<MethodTag> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort();
    seeds.dedup();
    let meta = CsvMeta {
        smoothing: "trailing moving average, partial window at the head".into(),
        window,
        methods,
        seeds,
        runs: records
            .iter()
            .map(|r| RunSummary {
                method: r.method,
                seed: r.seed,
                env: r.config.env.to_string(),
                algorithm: r.config.algorithm.to_string(),
                budget_steps: r.config.budget_steps(),
                total_steps: r.episodes.last().map_or(0, |e| e.env_steps),
                failed: r.failed.clone(),
            })
            .collect(),
    };
    let mp = meta_path(path);
    std::fs::write(&mp, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&mp, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("{}: unexpected CSV header {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Regroups CSV rows into per-(method, seed) series, ordered by episode.
pub fn group_rows(rows: &[CsvRow]) -> Vec<(MethodTag, u64, Vec<CsvRow>)> {
    let mut groups: Vec<(MethodTag, u64, Vec<CsvRow>)> = Vec::new();
    for row in rows {
        match groups.iter_mut().find(|(m, s, _)| *m == row.method && *s == row.seed) {
            Some(g) => g.2.push(row.clone()),
            None => groups.push((row.method, row.seed, vec![row.clone()])),
        }
    }
    for g in &mut groups {
        g.2.sort_by_key(|r| r.episode);
    }
    groups.sort_by_key(|g| (g.0, g.1));
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alignment {
    #[default]
    Episode,
    EnvSteps,
}

/// One method's curve: x positions and per-position statistics.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub method: MethodTag,
    pub x: Vec<f64>,
    pub stats: Vec<EpisodeStats>,
}

pub fn color(method: MethodTag) -> &'static str {
    match method {
        MethodTag::Scratch => "#1f4fd8",
        MethodTag::DirectTransfer => "#1a9641",
        MethodTag::Shaped => "#d7191c",
    }
}

const W: f64 = 860.0;
const H: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

pub fn svg_string(series: &[PlotSeries], title: &str, alignment: Alignment) -> Result<String> {
    if series.iter().all(|s| s.stats.is_empty()) {
        return Err(Error::Contract("nothing to plot".into()));
    }
    for s in series {
        if s.x.len() != s.stats.len() {
            return Err(Error::shape(s.stats.len(), s.x.len()));
        }
    }
    let points = || series.iter().flat_map(|s| s.x.iter().zip(&s.stats));
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, st) in points() {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(st.mean - st.std);
        y1 = y1.max(st.mean + st.std);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        "<metadata>mean over seeds; band is mean +/- 1 population standard deviation; x = {}</metadata>",
        match alignment {
            Alignment::Episode => "episode index",
            Alignment::EnvSteps => "mean cumulative environment steps",
        }
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    // axes and ticks
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black" fill="none"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></g>"#
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            H - BOTTOM + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 16.0,
        match alignment {
            Alignment::Episode => "episode",
            Alignment::EnvSteps => "environment steps",
        }
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(20 {:.1}) rotate(-90)" text-anchor="middle">smoothed episode reward</text>"#,
        TOP + ph / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let c = color(s.method);
        let _ = writeln!(out, r#"<g class="series" data-method="{}">"#, s.method);
        let upper = s.x.iter().zip(&s.stats).map(|(x, st)| (sx(*x), sy(st.mean + st.std)));
        let lower = s.x.iter().zip(&s.stats).rev().map(|(x, st)| (sx(*x), sy(st.mean - st.std)));
        let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            out,
            r#"<polygon class="band" points="{}" fill="{c}" fill-opacity="0.18" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = s
            .x
            .iter()
            .zip(&s.stats)
            .map(|(x, st)| format!("{:.2},{:.2}", sx(*x), sy(st.mean)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{c}" stroke-width="1.6"/>"#,
            line.join(" ")
        );
        let ly = TOP + 16.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 14.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            legend(s.method)
        );
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_plot(series: &[PlotSeries], title: &str, alignment: Alignment, path: &Path) -> Result<()> {
    std::fs::write(path, svg_string(series, title, alignment)?).map_err(|e| Error::io(path, e))
}

fn legend(method: MethodTag) -> &'static str {
    match method {
        MethodTag::Scratch => "no transfer",
        MethodTag::DirectTransfer => "direct transfer",
        MethodTag::Shaped => "reward shaping",
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.0}", v)
    } else if v.abs() >= 10.0 {
        format!("{:.1}", v)
    } else {
        format!("{:.2}", v)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
