//! ```text
//! mspd-params 1
//! ciem.bn.epsilon 1 = 0.00001
//! ciem.conv1.weight 1x1x8x4 = 0.12 -0.3 ...
//! ```
//!
//! Values use the shortest decimal form that reads back to the same `f64`,
//! so a save/load round trip is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use mspd_core::fusion::{CaffmParams, CiemParams, FusionParams, ParamGroup};
use mspd_core::tensor::Matrix;
use mspd_core::{BatchNormParams, ConvKernel};

use super::{content_lines, parse_f64, read, write, DataError, Result};

pub const PARAMS_MAGIC: &str = "mspd-params";
pub const PARAMS_VERSION: u32 = 1;
pub const BN_EPSILON_FIELD: &str = "ciem.bn.epsilon";

struct Array {
    line: usize,
    dims: Vec<usize>,
    values: Vec<f64>,
}

fn write_array(out: &mut String, name: &str, dims: &[usize], values: &[f64]) {
    let dims: Vec<String> = dims.iter().map(usize::to_string).collect();
    let _ = write!(out, "{name} {} =", dims.join("x"));
    for v in values {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

pub fn format_params(p: &FusionParams) -> String {
    let mut out = format!("{PARAMS_MAGIC} {PARAMS_VERSION}\n");
    write_array(&mut out, BN_EPSILON_FIELD, &[1], &[p.ciem().bn().epsilon()]);
    for g in ParamGroup::ALL {
        write_array(&mut out, g.name(), &p.group_dims(g), p.group(g));
    }
    out
}

pub fn save_params(p: &FusionParams, path: &Path) -> Result<()> {
    write(path, &format_params(p))
}

pub fn load_params(path: &Path) -> Result<FusionParams> {
    parse_params_str(&read(path)?, &path.display().to_string())
}

fn syntax(origin: &str, line: usize, message: impl Into<String>) -> DataError {
    DataError::Syntax { origin: origin.into(), line, message: message.into() }
}

fn parse_array(origin: &str, line: usize, text: &str) -> Result<(String, Array)> {
    let (head, body) = text.split_once('=').ok_or_else(|| syntax(origin, line, "expected `name dims = values`"))?;
    let mut head = head.split_whitespace();
    let (Some(name), Some(dims_text), None) = (head.next(), head.next(), head.next()) else {
        return Err(syntax(origin, line, "expected `name dims = values`"));
    };
    let dims = dims_text
        .split('x')
        .map(|d| d.parse::<usize>().ok().filter(|&d| d > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| syntax(origin, line, format!("bad shape `{dims_text}` for `{name}`")))?;
    let values = body.split_whitespace().map(|v| parse_f64(origin, line, name, v)).collect::<Result<Vec<_>>>()?;
    let declared: usize = dims.iter().product();
    if declared != values.len() {
        return Err(DataError::ShapeMismatch {
            origin: origin.into(),
            line,
            name: name.into(),
            dims: dims_text.into(),
            declared,
            found: values.len(),
        });
    }
    Ok((name.to_string(), Array { line, dims, values }))
}

struct Arrays<'a> {
    origin: &'a str,
    last_line: usize,
    map: BTreeMap<String, Array>,
}

impl Arrays<'_> {
    fn take(&mut self, name: &str) -> Result<Array> {
        self.map.remove(name).ok_or_else(|| DataError::MissingField {
            origin: self.origin.into(),
            line: self.last_line,
            name: name.into(),
        })
    }

    fn invalid(&self, line: usize, cause: mspd_core::Error) -> DataError {
        DataError::Invalid { origin: self.origin.into(), line, cause }
    }

    fn kernel(&mut self, weight: ParamGroup, bias: ParamGroup) -> Result<ConvKernel> {
        let w = self.take(weight.name())?;
        let b = self.take(bias.name())?;
        let &[kx, ky, ci, co] = w.dims.as_slice() else {
            return Err(syntax(self.origin, w.line, format!("`{weight}` must have 4 dimensions")));
        };
        if kx != ky {
            return Err(syntax(self.origin, w.line, format!("`{weight}` kernel {kx}x{ky} is not square")));
        }
        ConvKernel::new(kx, ci, co, w.values, b.values).map_err(|e| self.invalid(w.line, e))
    }

    fn matrix(&mut self, g: ParamGroup) -> Result<Matrix> {
        let m = self.take(g.name())?;
        let &[rows, cols] = m.dims.as_slice() else {
            return Err(syntax(self.origin, m.line, format!("`{g}` must have 2 dimensions")));
        };
        Matrix::new(rows, cols, m.values).map_err(|e| self.invalid(m.line, e))
    }

    fn vector(&mut self, name: &str) -> Result<Vec<f64>> {
        Ok(self.take(name)?.values)
    }
}

/// Parses a parameter document; `origin` names it in diagnostics.
pub fn parse_params_str(text: &str, origin: &str) -> Result<FusionParams> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or_else(|| syntax(origin, 1, format!("missing `{PARAMS_MAGIC}` header")))?;
    match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        [magic, v] if *magic == PARAMS_MAGIC => {
            if v.parse::<u32>().ok() != Some(PARAMS_VERSION) {
                return Err(DataError::UnknownVersion { origin: origin.into(), line, found: v.to_string() });
            }
        }
        _ => return Err(syntax(origin, line, format!("expected `{PARAMS_MAGIC} {PARAMS_VERSION}` header"))),
    }

    let mut arrays = Arrays { origin, last_line: line, map: BTreeMap::new() };
    for (line, content) in lines {
        let (name, array) = parse_array(origin, line, content)?;
        if name != BN_EPSILON_FIELD && ParamGroup::from_name(&name).is_none() {
            return Err(syntax(origin, line, format!("unknown array `{name}`")));
        }
        if let Some(prev) = arrays.map.get(&name) {
            return Err(syntax(origin, line, format!("`{name}` already defined on line {}", prev.line)));
        }
        arrays.last_line = line;
        arrays.map.insert(name, array);
    }

    use ParamGroup::*;
    let eps = arrays.take(BN_EPSILON_FIELD)?;
    let eps_line = eps.line;
    if eps.values.len() != 1 {
        return Err(syntax(origin, eps_line, format!("`{BN_EPSILON_FIELD}` must hold one value")));
    }
    let conv1 = arrays.kernel(Conv1Weight, Conv1Bias)?;
    let conv3 = arrays.kernel(Conv3Weight, Conv3Bias)?;
    let bn = BatchNormParams::new(
        arrays.vector(BnGamma.name())?,
        arrays.vector(BnBeta.name())?,
        arrays.vector(BnMean.name())?,
        arrays.vector(BnVar.name())?,
        eps.values[0],
    )
    .map_err(|e| arrays.invalid(eps_line, e))?;
    let cam_w1 = arrays.matrix(CamW1)?;
    let cam_w2 = arrays.matrix(CamW2)?;
    let pam = arrays.kernel(PamWeight, PamBias)?;
    let conv_t = arrays.kernel(ConvTWeight, ConvTBias)?;
    let conv_c = arrays.kernel(ConvCWeight, ConvCBias)?;
    let conv_g = arrays.kernel(ConvGWeight, ConvGBias)?;

    let whole = |e| DataError::Invalid { origin: origin.into(), line: arrays.last_line, cause: e };
    let ciem = CiemParams::new(conv1, conv3, bn, cam_w1, cam_w2, pam).map_err(whole)?;
    let caffm = CaffmParams::new(conv_t, conv_c, conv_g).map_err(whole)?;
    FusionParams::new(ciem, caffm).map_err(whole)
}
