use std::io::Write;

use leakqkd_core::{CrossoverOutcome, CrossoverPoint, SweepRow, SweptParameter};
use serde_json::{json, Value};

use crate::args::Format;

pub const SWEEP_HEADER: &str = "loss_db,eta,method,e_z,e_x,rate_raw,rate";

/// Rounds to 10 significant digits.
pub fn round10(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.9e}").parse().unwrap_or(x)
}

pub fn fmt_num(x: f64) -> String {
    let r = round10(x);
    let a = r.abs();
    if r == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&a) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn num_value(x: f64) -> Value {
    let r = round10(x);
    if r.is_finite() {
        json!(r)
    } else {
        Value::Null
    }
}

pub fn write_rows(out: &mut impl Write, rows: &[SweepRow], format: Format) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "{SWEEP_HEADER}")?;
            for r in rows {
                match &r.result {
                    Ok(p) => writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        fmt_num(r.loss_db),
                        fmt_num(r.eta),
                        r.method,
                        fmt_num(p.e_z),
                        fmt_num(p.e_x),
                        fmt_num(p.rate_raw),
                        fmt_num(p.rate)
                    )?,
                    Err(_) => writeln!(out, "{},{},{},,,,", fmt_num(r.loss_db), fmt_num(r.eta), r.method)?,
                }
            }
        }
        Format::Json => {
            let items: Vec<Value> = rows
                .iter()
                .map(|r| match &r.result {
                    Ok(p) => json!({
                        "loss_db": num_value(r.loss_db),
                        "eta": num_value(r.eta),
                        "method": r.method,
                        "e_z": num_value(p.e_z),
                        "e_x": num_value(p.e_x),
                        "rate_raw": num_value(p.rate_raw),
                        "rate": num_value(p.rate),
                    }),
                    Err(e) => json!({
                        "loss_db": num_value(r.loss_db),
                        "eta": num_value(r.eta),
                        "method": r.method,
                        "e_z": null,
                        "e_x": null,
                        "rate_raw": null,
                        "rate": null,
                        "error": e.to_string(),
                    }),
                })
                .collect();
            serde_json::to_writer_pretty(&mut *out, &items)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn write_crossover(
    out: &mut impl Write,
    points: &[CrossoverPoint],
    swept: SweptParameter,
    compare_loss_db: f64,
    format: Format,
) -> std::io::Result<()> {
    let status = |o: &CrossoverOutcome| match o {
        CrossoverOutcome::Found { .. } => "crossover".to_string(),
        CrossoverOutcome::NoCrossover { dominant: Some(m) } => format!("no-crossover:{m}"),
        CrossoverOutcome::NoCrossover { dominant: None } => "no-crossover:none".to_string(),
        CrossoverOutcome::Failed(_) => "error".to_string(),
    };
    match format {
        Format::Csv => {
            writeln!(out, "# compare_loss_db={}", fmt_num(compare_loss_db))?;
            writeln!(out, "{swept},delta_star,rate_lt,rate_lp,status")?;
            for p in points {
                match &p.outcome {
                    CrossoverOutcome::Found { delta_star, rate_lt, rate_lp } => writeln!(
                        out,
                        "{},{},{},{},{}",
                        fmt_num(p.swept_value),
                        fmt_num(*delta_star),
                        fmt_num(*rate_lt),
                        fmt_num(*rate_lp),
                        status(&p.outcome)
                    )?,
                    other => writeln!(out, "{},,,,{}", fmt_num(p.swept_value), status(other))?,
                }
            }
        }
        Format::Json => {
            let items: Vec<Value> = points
                .iter()
                .map(|p| {
                    let mut v = json!({ "value": num_value(p.swept_value), "status": status(&p.outcome) });
                    match &p.outcome {
                        CrossoverOutcome::Found { delta_star, rate_lt, rate_lp } => {
                            v["delta_star"] = num_value(*delta_star);
                            v["rate_lt"] = num_value(*rate_lt);
                            v["rate_lp"] = num_value(*rate_lp);
                        }
                        CrossoverOutcome::Failed(e) => v["error"] = json!(e.to_string()),
                        CrossoverOutcome::NoCrossover { .. } => {}
                    }
                    v
                })
                .collect();
            let doc = json!({
                "compare_loss_db": num_value(compare_loss_db),
                "swept": swept,
                "points": items,
            });
            serde_json::to_writer_pretty(&mut *out, &doc)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub struct AzumaReport {
    pub n: u64,
    pub eps: f64,
    pub eps_hat: f64,
    pub f_eps: f64,
    pub f_eps_hat: f64,
    pub interval: Option<(f64, f64, f64)>,
}

pub fn write_azuma(out: &mut impl Write, r: &AzumaReport, format: Format) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            writeln!(out, "n_trials,epsilon,epsilon_hat,f_epsilon,f_epsilon_hat,observed,low,high")?;
            let tail = match r.interval {
                Some((obs, lo, hi)) => format!("{},{},{}", fmt_num(obs), fmt_num(lo), fmt_num(hi)),
                None => ",,".to_string(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                fmt_num(r.eps),
                fmt_num(r.eps_hat),
                fmt_num(r.f_eps),
                fmt_num(r.f_eps_hat),
                tail
            )?;
        }
        Format::Json => {
            let mut v = json!({
                "n_trials": r.n,
                "epsilon": num_value(r.eps),
                "epsilon_hat": num_value(r.eps_hat),
                "f_epsilon": num_value(r.f_eps),
                "f_epsilon_hat": num_value(r.f_eps_hat),
            });
            if let Some((obs, lo, hi)) = r.interval {
                v["observed"] = num_value(obs);
                v["low"] = num_value(lo);
                v["high"] = num_value(hi);
            }
            serde_json::to_writer_pretty(&mut *out, &v)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
