//! `--policy` argument syntax.
//!
//!   taper:delta=0.4,eps=1,r=0,c=-2,d=2
//!   shift:delta=0.4,c=-2,d=2
//!   identity

use pmtp_core::{Error, Policy, Result, TaperedShiftPolicy};

fn parse_fields(body: &str) -> Result<Vec<(String, f64)>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidPolicy(format!("expected key=value, got `{kv}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidPolicy(format!("`{}` is not a number", v.trim())))?;
            Ok((k.trim().to_ascii_lowercase(), v))
        })
        .collect()
}

fn take(fields: &[(String, f64)], key: &str) -> Option<f64> {
    fields.iter().rev().find(|(k, _)| k == key).map(|(_, v)| *v)
}

fn require(fields: &[(String, f64)], key: &str, kind: &str) -> Result<f64> {
    take(fields, key).ok_or_else(|| Error::InvalidPolicy(format!("{kind} policy needs `{key}`")))
}

fn check_keys(fields: &[(String, f64)], allowed: &[&str], kind: &str) -> Result<()> {
    match fields.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(Error::InvalidPolicy(format!("unknown key `{k}` for {kind} policy"))),
        None => Ok(()),
    }
}

pub fn parse_policy(spec: &str) -> Result<Policy> {
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("identity") {
        return Ok(Policy::Identity);
    }
    let (kind, body) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidPolicy(format!("`{spec}`: expected taper:..., shift:... or identity")))?;
    let fields = parse_fields(body)?;
    match kind.trim().to_ascii_lowercase().as_str() {
        "taper" => {
            check_keys(&fields, &["delta", "eps", "r", "c", "d"], "taper")?;
            let r = require(&fields, "r", "taper")?;
            if r != 0.0 && r != 1.0 {
                return Err(Error::InvalidPolicy(format!("r must be 0 or 1, got {r}")));
            }
            Ok(TaperedShiftPolicy::new(
                require(&fields, "delta", "taper")?,
                require(&fields, "eps", "taper")?,
                r as u8,
                require(&fields, "c", "taper")?,
                require(&fields, "d", "taper")?,
            )?
            .into())
        }
        "shift" => {
            check_keys(&fields, &["delta", "c", "d"], "shift")?;
            Ok(TaperedShiftPolicy::shift(
                require(&fields, "delta", "shift")?,
                require(&fields, "c", "shift")?,
                require(&fields, "d", "shift")?,
            )?
            .into())
        }
        other => Err(Error::InvalidPolicy(format!("unknown policy kind `{other}`"))),
    }
}

/// Canonical text form, parseable by [`parse_policy`].
pub fn describe(p: &Policy) -> String {
    match p {
        Policy::Identity => "identity".into(),
        Policy::TaperedShift(t) => {
            let (c, d) = t.support();
            if t.r() == 1 && t.epsilon() == 0.0 {
                format!("shift:delta={},c={c},d={d}", t.delta())
            } else {
                format!("taper:delta={},eps={},r={},c={c},d={d}", t.delta(), t.epsilon(), t.r())
            }
        }
    }
}
