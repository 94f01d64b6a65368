//! CSV writers and plot-script emission.

use std::io::Write;

use super::experiment::{LearningCurve, Measurement, ResultRow, HISTOGRAM_CELLS};
use super::HarnessError;

/// Column names of the results CSV.
pub const RESULT_HEADER: [&str; 20] = [
    "topology",
    "policy",
    "x",
    "seed",
    "arrivals",
    "blocked",
    "blocking_probability",
    "ci95_half_width",
    "avg_extra_hops",
    "eh0",
    "eh1",
    "eh2",
    "eh3",
    "eh4",
    "eh5",
    "eh6",
    "eh7",
    "eh8",
    "eh9",
    "eh10plus",
];

pub const CURVE_HEADER: [&str; 9] = [
    "topology",
    "x",
    "seed",
    "round",
    "window",
    "cumulative_arrivals",
    "arrivals",
    "blocked",
    "blocking_probability",
];

pub const TIMING_HEADER: [&str; 5] = ["topology", "x", "threads", "round", "wall_seconds"];

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

/// Fields of `row` in [`RESULT_HEADER`] order. A failed run leaves every
/// measured field empty.
pub fn result_record(row: &ResultRow) -> Vec<String> {
    let mut out = vec![
        row.topology.clone(),
        row.policy.to_string(),
        row.x.to_string(),
        row.seed.to_string(),
    ];
    match &row.measurement {
        Some(Measurement {
            arrivals,
            blocked,
            blocking_probability,
            ci95_half_width,
            avg_extra_hops,
            histogram,
        }) => {
            out.push(arrivals.to_string());
            out.push(blocked.to_string());
            out.push(blocking_probability.to_string());
            out.push(ci95_half_width.map_or_else(String::new, |c| c.to_string()));
            out.push(avg_extra_hops.to_string());
            out.extend(histogram.iter().map(u64::to_string));
        }
        None => out.extend(std::iter::repeat_n(String::new(), 5 + HISTOGRAM_CELLS)),
    }
    out
}

/// Streams result rows, flushing after each so partial sweeps survive.
pub struct RowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RowWriter<W> {
    pub fn new(out: W) -> Result<Self, HarnessError> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(RESULT_HEADER).map_err(csv_err)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &ResultRow) -> Result<(), HarnessError> {
        self.inner
            .write_record(result_record(row))
            .map_err(csv_err)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, HarnessError> {
        self.inner
            .into_inner()
            .map_err(|e| HarnessError::Io(e.error().to_string()))
    }
}

/// Writes `rows` as a complete results CSV.
pub fn write_results<W: Write>(rows: &[ResultRow], out: W) -> Result<(), HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::Spec("no rows to write".into()));
    }
    let mut w = RowWriter::new(out)?;
    for row in rows {
        w.write(row)?;
    }
    Ok(())
}

pub fn write_learning_curves<W: Write>(
    curves: &[LearningCurve],
    out: W,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for c in curves {
        for s in &c.samples {
            w.write_record([
                c.topology.clone(),
                c.x.to_string(),
                c.seed.to_string(),
                s.round.to_string(),
                s.window.to_string(),
                s.cumulative_arrivals.to_string(),
                s.arrivals.to_string(),
                s.blocked.to_string(),
                s.blocking_probability().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock time per round. Unlike the other outputs this varies between runs.
pub fn write_timings<W: Write>(curves: &[LearningCurve], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMING_HEADER).map_err(csv_err)?;
    for c in curves {
        for t in &c.timings {
            w.write_record([
                c.topology.clone(),
                c.x.to_string(),
                t.threads.to_string(),
                t.round.to_string(),
                format!("{:.6}", t.wall.as_secs_f64()),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Which figure a plot script draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Blocking against X per policy, with CI bars on pooled rows.
    Blocking,
    /// Extra-hop histograms per policy.
    ExtraHops,
    /// Blocking against the hop limit, one line per X.
    HopLimit,
    /// Windowed blocking against cumulative arrivals.
    LearningCurve,
}

/// A standalone matplotlib script that reads `csv_path` and writes `<csv_path>.png`.
pub fn plot_script(kind: PlotKind, csv_path: &str) -> String {
    let body = match kind {
        PlotKind::Blocking => BLOCKING_PLOT,
        PlotKind::ExtraHops => EXTRA_HOPS_PLOT,
        PlotKind::HopLimit => HOPLIMIT_PLOT,
        PlotKind::LearningCurve => CURVE_PLOT,
    };
    format!(
        "#!/usr/bin/env python3\nimport csv\nimport sys\n\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\npath = sys.argv[1] if len(sys.argv) > 1 else {csv_path:?}\nwith open(path, newline=\"\") as f:\n    rows = [r for r in csv.DictReader(f)]\n\n{body}\nplt.tight_layout()\nplt.savefig(path + \".png\", dpi=150)\n"
    )
}

const BLOCKING_PLOT: &str = r#"rows = [r for r in rows if r["arrivals"]]
pooled = {r["policy"] for r in rows if r["seed"] == "all"}
series = {}
for r in rows:
    if r["policy"] in pooled and r["seed"] != "all":
        continue
    series.setdefault(r["policy"], []).append(r)
fig, ax = plt.subplots()
for policy, rs in series.items():
    xs = [float(r["x"]) for r in rs]
    ys = [float(r["blocking_probability"]) for r in rs]
    err = [float(r["ci95_half_width"]) if r["ci95_half_width"] else 0.0 for r in rs]
    ax.errorbar(xs, ys, yerr=err, marker="o", capsize=3, label=policy)
ax.set_xlabel("X (erlang)")
ax.set_ylabel("blocking probability")
ax.set_yscale("log")
ax.legend()
"#;

const EXTRA_HOPS_PLOT: &str = r#"rows = [r for r in rows if r["arrivals"]]
cells = ["eh%d" % d for d in range(10)] + ["eh10plus"]
totals = {}
for r in rows:
    if r["seed"] == "all":
        continue
    acc = totals.setdefault(r["policy"], [0] * len(cells))
    for i, c in enumerate(cells):
        acc[i] += int(r[c])
fig, ax = plt.subplots()
width = 0.8 / max(len(totals), 1)
for k, (policy, counts) in enumerate(totals.items()):
    n = sum(counts) or 1
    ax.bar([i + k * width for i in range(len(cells))], [c / n for c in counts], width, label=policy)
ax.set_xticks(range(len(cells)))
ax.set_xticklabels([str(d) for d in range(10)] + ["10+"])
ax.set_xlabel("extra hops")
ax.set_ylabel("fraction of connections")
ax.legend()
"#;

const HOPLIMIT_PLOT: &str = r#"rows = [r for r in rows if r["arrivals"] and r["policy"].startswith("ll-hoplimit:")]
curves = {}
for r in rows:
    if r["seed"] == "all" or r["x"] + "/all" not in {q["x"] + "/" + q["seed"] for q in rows}:
        curves.setdefault(r["x"], {})[r["policy"].split(":")[1]] = float(r["blocking_probability"])
fig, ax = plt.subplots()
for x, points in curves.items():
    limits = sorted(points, key=lambda d: float("inf") if d == "inf" else int(d))
    ax.plot(range(len(limits)), [points[d] for d in limits], marker="o", label="X=" + x)
    ax.set_xticks(range(len(limits)))
    ax.set_xticklabels(limits)
ax.set_xlabel("extra hop limit")
ax.set_ylabel("blocking probability")
ax.legend()
"#;

const CURVE_PLOT: &str = r#"fig, ax = plt.subplots()
for x in sorted({r["x"] for r in rows}, key=float):
    rs = [r for r in rows if r["x"] == x]
    ax.plot([int(r["cumulative_arrivals"]) for r in rs],
            [float(r["blocking_probability"]) for r in rs], label="X=" + x)
ax.set_xscale("log")
ax.set_xlabel("arrivals learned")
ax.set_ylabel("windowed blocking probability")
ax.legend()
"#;
