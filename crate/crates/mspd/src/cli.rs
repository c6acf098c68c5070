//! `mspd` subcommands. [`run`] takes its streams as arguments so tests can
//! drive it in-process; the binary only wires up stdout and stderr.

use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use mspd_core::eval::{apply_reasonable_filter, group_by_image, miss_rate_fppi_curve, ReasonableFilter};
use mspd_core::fusion::{default_reduction, fusion_backward, fusion_trace, FusionParams};
use mspd_core::gradcheck::{check_fusion_gradients, Target, DEFAULT_STEP, DEFAULT_TOLERANCE};
use mspd_core::init::{random_tensor, rng};
use mspd_core::tensor::Shape;
use mspd_core::Tensor;

use crate::io::{export_curve, load_params, parse_annotations, parse_detections, save_params};
use crate::selftest::{run_selftest, Fixtures};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "mspd", version, about = "Multispectral feature fusion and pedestrian detection evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score detections against annotations and report the log-average miss rate.
    Eval(EvalArgs),
    /// Run the fusion network on seeded inputs and summarize every stage.
    Demo(DemoArgs),
    /// Verify the fusion backward pass against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the bundled self-verification suites.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    /// Write the Miss Rate-FPPI curve as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5, value_parser = parse_iou_threshold)]
    pub iou_threshold: f64,
    /// Ground truth shorter than this is ignored.
    #[arg(long, default_value_t = ReasonableFilter::DEFAULT_MIN_HEIGHT, value_parser = parse_positive)]
    pub min_height: f64,
}

#[derive(Debug, Args)]
pub struct FusionArgs {
    /// Load parameters instead of drawing them from the seed.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Input feature map size as WxHxC.
    #[arg(long, default_value = "5x5x4", value_parser = parse_shape)]
    pub shape: Shape,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// Save the parameters used by the run.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// Perturb the analytic gradient of this group before checking.
    #[arg(long, hide = true, value_parser = parse_target)]
    pub corrupt_gradient: Option<Target>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Directory overriding the bundled evaluation fixture.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

fn parse_iou_threshold(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} is not positive"))
    }
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    let dims: Vec<usize> =
        s.split('x').map(|d| d.parse().map_err(|_| format!("`{s}` is not WxHxC"))).collect::<Result<_, _>>()?;
    let &[w, h, c] = dims.as_slice() else {
        return Err(format!("`{s}` is not WxHxC"));
    };
    Shape::new(w, h, c).map_err(|e| e.to_string())
}

fn parse_target(s: &str) -> Result<Target, String> {
    Target::all().find(|t| t.name() == s).ok_or_else(|| format!("unknown gradient group `{s}`"))
}

/// Whether PASS/FAIL tags are colored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Style {
    pub color: bool,
}

impl Style {
    pub const PLAIN: Style = Style { color: false };

    /// Color only on a terminal, and never when `NO_COLOR` is set.
    pub fn detect() -> Self {
        let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
        Style { color: !no_color && std::io::stdout().is_terminal() }
    }

    fn verdict(self, ok: bool) -> String {
        let (text, code) = if ok { ("PASS", 32) } else { ("FAIL", 31) };
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.into()
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write, style: Style) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Eval(a) => cmd_eval(a, out),
        Command::Demo(a) => cmd_demo(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out, style),
        Command::Selftest(a) => cmd_selftest(a, out, style),
    };
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_FAILURE
        }
    }
}

type Outcome = anyhow::Result<bool>;

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Outcome {
    let ann = parse_annotations(&a.annotations)?;
    let dets = parse_detections(&a.detections)?;
    let filter = ReasonableFilter::with_min_height(a.min_height)?;
    let gts = apply_reasonable_filter(&ann.boxes().cloned().collect::<Vec<_>>(), &filter);
    let evaluated = gts.iter().filter(|g| !g.ignore).count();
    let images = group_by_image(dets.boxes().cloned().collect(), gts);
    let curve = miss_rate_fppi_curve(&images, a.iou_threshold).context("evaluation failed")?;
    if let Some(path) = &a.out {
        export_curve(&curve, path)?;
    }
    writeln!(
        out,
        "images={} ground_truth={} evaluated={} detections={} curve_points={}",
        images.len(),
        ann.len(),
        evaluated,
        dets.len(),
        curve.points().len()
    )?;
    writeln!(out, "MR={:.2}", 100.0 * curve.log_average_mr())?;
    Ok(true)
}

struct Inputs {
    params: FusionParams,
    f_c: Tensor,
    f_t: Tensor,
    grad_out: Tensor,
    source: String,
}

/// Draws, in order, parameters, `f_c`, `f_t` and the upstream gradient from
/// one seeded stream. Loaded parameters replace the drawn ones, so the
/// inputs depend only on the seed and shape.
fn fusion_inputs(a: &FusionArgs) -> anyhow::Result<Inputs> {
    let c = a.shape.channels;
    let red = default_reduction(c);
    let mut r = rng(a.seed);
    let seeded = FusionParams::random(&mut r, c, red)?;
    let (params, source) = match &a.params {
        Some(path) => (load_params(path)?, path.display().to_string()),
        None => (seeded, format!("seeded, reduction {red}")),
    };
    if params.channels() != c {
        bail!("parameters have {} channels but --shape {} has {c}", params.channels(), a.shape);
    }
    let f_c = random_tensor(&mut r, a.shape, 1.0);
    let f_t = random_tensor(&mut r, a.shape, 1.0);
    let grad_out = random_tensor(&mut r, a.shape, 1.0);
    Ok(Inputs { params, f_c, f_t, grad_out, source })
}

fn stage(out: &mut dyn Write, name: &str, t: &Tensor) -> std::io::Result<()> {
    writeln!(
        out,
        "{name:<6} {:>9}  min {:>10.6}  max {:>10.6}  mean {:>10.6}",
        t.shape().to_string(),
        t.min(),
        t.max(),
        t.mean()
    )
}

pub fn cmd_demo(a: &DemoArgs, out: &mut dyn Write) -> Outcome {
    let inp = fusion_inputs(&a.fusion)?;
    let t = fusion_trace(&inp.f_c, &inp.f_t, &inp.params)?;
    writeln!(out, "seed {} shape {} params {}", a.fusion.seed, a.fusion.shape, inp.source)?;
    stage(out, "F_c", &inp.f_c)?;
    stage(out, "F_t", &inp.f_t)?;
    stage(out, "F_ct", t.ciem.fused())?;
    stage(out, "w_ca", &t.ciem.channel_weights().to_tensor())?;
    stage(out, "w_pa", &t.ciem.spatial_weights().to_tensor())?;
    stage(out, "F'_c", t.ciem.enhanced_color())?;
    stage(out, "F'_t", t.ciem.enhanced_thermal())?;
    stage(out, "w_t", &t.caffm.thermal_weights().to_tensor())?;
    stage(out, "w_c", &t.caffm.color_weights().to_tensor())?;
    stage(out, "w_ct", &t.caffm.global_weights().to_tensor())?;
    stage(out, "F", t.output())?;
    if t.output().shape() != a.fusion.shape {
        bail!("output shape {} differs from input shape {}", t.output().shape(), a.fusion.shape);
    }
    if let Some(path) = &a.out {
        save_params(&inp.params, path)?;
        writeln!(out, "params written to {}", path.display())?;
    }
    Ok(true)
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write, style: Style) -> Outcome {
    let inp = fusion_inputs(&a.fusion)?;
    let mut analytic = fusion_backward(&inp.f_c, &inp.f_t, &inp.params, &inp.grad_out)?;
    if let Some(target) = a.corrupt_gradient {
        for v in target.of_mut(&mut analytic) {
            *v += 1.0;
        }
    }
    let report = check_fusion_gradients(
        &inp.f_c,
        &inp.f_t,
        &inp.params,
        &inp.grad_out,
        &analytic,
        DEFAULT_STEP,
        DEFAULT_TOLERANCE,
    )?;
    writeln!(
        out,
        "seed {} shape {} params {} step {:e} tolerance {:e}",
        a.fusion.seed, a.fusion.shape, inp.source, report.step, report.tolerance
    )?;
    for g in &report.groups {
        writeln!(
            out,
            "{:<22} probes {:>4}  skipped {:>3}  max_rel_err {:.3e}  {}",
            g.target.name(),
            g.probes,
            g.straddled,
            g.max_rel_error,
            style.verdict(g.max_rel_error < report.tolerance)
        )?;
    }
    let worst = report.worst().context("empty gradient report")?;
    if report.passed() {
        writeln!(
            out,
            "all {} groups within tolerance (worst {} at {:.3e})",
            report.groups.len(),
            worst.target.name(),
            worst.max_rel_error
        )?;
        Ok(true)
    } else {
        writeln!(out, "tolerance exceeded: worst group {} at {:.3e}", worst.target.name(), worst.max_rel_error)?;
        Ok(false)
    }
}

pub fn cmd_selftest(a: &SelftestArgs, out: &mut dyn Write, style: Style) -> Outcome {
    let fixtures = match &a.fixtures {
        Some(dir) => Fixtures::load(dir)?,
        None => Fixtures::bundled(),
    };
    let results = run_selftest(&fixtures, a.seed);
    for r in &results {
        write!(out, "{} {}: {}", style.verdict(r.passed()), r.suite, r.name)?;
        match &r.outcome {
            Ok(()) => writeln!(out)?,
            Err(msg) => writeln!(out, " ({msg})")?,
        }
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    writeln!(out, "selftest: {} passed, {failed} failed", results.len() - failed)?;
    Ok(failed == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str], style: Style) -> (u8, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("mspd").chain(args.iter().copied()), &mut out, &mut err, style);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn shape_argument() {
        assert_eq!(parse_shape("5x6x7").unwrap(), Shape::new(5, 6, 7).unwrap());
        assert!(parse_shape("5x6").is_err());
        assert!(parse_shape("0x6x7").is_err());
        assert!(parse_shape("axbxc").is_err());
    }

    #[test]
    fn threshold_arguments() {
        assert_eq!(parse_iou_threshold("1").unwrap(), 1.0);
        assert!(parse_iou_threshold("0").is_err());
        assert!(parse_positive("-3").is_err());
        assert!(parse_positive("inf").is_err());
    }

    #[test]
    fn verdicts_are_colored_only_on_request() {
        assert_eq!(Style::PLAIN.verdict(true), "PASS");
        assert_eq!(Style { color: true }.verdict(false), "\x1b[31mFAIL\x1b[0m");
    }

    #[test]
    fn in_process_runs() {
        let (code, out, _) = run_capture(&["demo", "--shape", "3x2x2"], Style::PLAIN);
        assert_eq!(code, EXIT_OK);
        assert!(out.lines().any(|l| l.starts_with("F ") && l.contains("3x2x2")));
        let (code, _, err) = run_capture(&["demo", "--seed", "x"], Style::PLAIN);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--seed"));
        let (code, out, _) = run_capture(&["--version"], Style::PLAIN);
        assert_eq!(code, EXIT_OK);
        assert!(out.starts_with("mspd "));
    }
}
