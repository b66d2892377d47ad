use std::path::PathBuf;
use std::str::FromStr;
use std::sync::LazyLock;

use clap::{Args, Parser, Subcommand};

use crate::config::CONFIG_KEYS;

static CONFIG_HELP: LazyLock<String> = LazyLock::new(|| {
    let mut s = String::from("Configuration keys (TOML file or --set key=value):\n");
    for (key, what) in CONFIG_KEYS {
        s.push_str(&format!("  {key:<22} {what}\n"));
    }
    s.push_str("\nPrecedence: dedicated flag > --set > config file > default.");
    s
});

#[derive(Debug, Parser)]
#[command(
    name = "detprompt",
    version,
    about = "Detect-and-prompt instance segmentation harness and evaluator",
    after_help = "Exit status: 0 success, 1 runtime or partial failure, 2 usage or input error.\n\
                  Log verbosity: DETPROMPT_LOG=error|warn|info|debug|trace."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of rectangular ships.
    Synth(SynthArgs),
    /// Run detector and segmenter backends, then evaluate and report.
    #[command(after_long_help = CONFIG_HELP.as_str(), after_help = CONFIG_HELP.as_str())]
    Run(RunArgs),
    /// Evaluate stored predictions against ground truth.
    #[command(after_long_help = CONFIG_HELP.as_str(), after_help = CONFIG_HELP.as_str())]
    Eval(EvalArgs),
    /// Recompute threshold-curve and relaxed-IoU CSVs for an existing run.
    Sweep(SweepArgs),
    /// Print (and optionally re-emit) the table of an existing run.
    Report(ReportArgs),
    /// Compare two runs over the same ground truth.
    Compare(CompareArgs),
}

/// `N` or `A-B` (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Range<T>(pub T, pub T);

impl<T: FromStr + PartialOrd + Copy> FromStr for Range<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |p: &str| {
            p.trim()
                .parse::<T>()
                .map_err(|_| format!("bad number {p:?}"))
        };
        let r = match s.split_once('-') {
            Some((a, b)) => Range(num(a)?, num(b)?),
            None => {
                let n = num(s)?;
                Range(n, n)
            }
        };
        if r.0 > r.1 {
            return Err(format!("empty range {s:?}"));
        }
        Ok(r)
    }
}

/// `N` (square) or `WxH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size(pub u32, pub u32);

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |p: &str| {
            p.trim()
                .parse::<u32>()
                .map_err(|_| format!("bad size {s:?}"))
        };
        Ok(match s.split_once(['x', 'X']) {
            Some((w, h)) => Size(num(w)?, num(h)?),
            None => {
                let n = num(s)?;
                Size(n, n)
            }
        })
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of images.
    #[arg(long, default_value_t = 20)]
    pub images: usize,
    /// Ships per image, `N` or `A-B`.
    #[arg(long, default_value = "1-4")]
    pub ships: Range<usize>,
    /// Image size, `N` or `WxH`.
    #[arg(long, default_value = "64")]
    pub size: Size,
    /// Ship width in pixels, `N` or `A-B`.
    #[arg(long, default_value = "8")]
    pub ship_width: Range<u32>,
    /// Ship height in pixels, `N` or `A-B`.
    #[arg(long, default_value = "4")]
    pub ship_height: Range<u32>,
    /// Minimum background gap between ships, in pixels.
    #[arg(long, default_value_t = 4)]
    pub min_sep: u32,
    /// Probability that an image is tagged inshore.
    #[arg(long, default_value_t = 0.25)]
    pub inshore_fraction: f64,
    /// Seed for every random draw.
    #[arg(long)]
    pub seed: u64,
    /// Also write PGM renderings under <out>/images.
    #[arg(long)]
    pub pgm: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Ground-truth annotations (overrides `gt`).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Scene-tag sidecar (overrides `scenes`).
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run identifier (overrides `run_id`).
    #[arg(long)]
    pub run_id: Option<String>,
    /// Worker threads; 0 = all cores (overrides `jobs`).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory holding the images (overrides `images_dir`).
    #[arg(long)]
    pub images_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Stored predictions (overrides `predictions`).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Run directory (or its run.json).
    #[arg(long)]
    pub run: PathBuf,
    /// Comma-separated ascending dilation radii [default: those of the run].
    #[arg(long, value_delimiter = ',')]
    pub radii: Vec<u32>,
    /// Threshold-curve grid step on [0, 1] [default: that of the run].
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Output directory [default: the run directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 = all cores.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory (or its run.json).
    #[arg(long)]
    pub run: PathBuf,
    /// Re-aggregate with unmatched instances counted as IoU 0.
    #[arg(long)]
    pub include_unmatched: bool,
    /// Re-emit all artifacts into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First run (deltas are first minus second).
    #[arg(long)]
    pub a: PathBuf,
    /// Second run.
    #[arg(long)]
    pub b: PathBuf,
    /// Write the comparison CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_sizes() {
        assert_eq!("3".parse::<Range<usize>>().unwrap(), Range(3, 3));
        assert_eq!("1-4".parse::<Range<usize>>().unwrap(), Range(1, 4));
        assert!("4-1".parse::<Range<usize>>().is_err());
        assert_eq!("64".parse::<Size>().unwrap(), Size(64, 64));
        assert_eq!("32x16".parse::<Size>().unwrap(), Size(32, 16));
    }

    #[test]
    fn definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
