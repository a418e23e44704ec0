//! CSV persistence of recorded chains.
//!
//! Floats are written with Rust's shortest round-trip formatting so that
//! reading a chain back reproduces it bit for bit.

use std::fs;
use std::path::Path;

use crate::data::ResponseKind;
use crate::error::{Error, Result};
use crate::gp::GpHyper;
use crate::sampler::{ClusterResponse, ClusterSample, McmcOutput, StepSummary};

pub const INFO_FILE: &str = "chain.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const ALLOCATIONS_FILE: &str = "allocations.csv";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const SELECTION_FILE: &str = "selection.csv";
pub const PHI0_FILE: &str = "phi0.csv";
pub const ACCEPTANCE_FILE: &str = "acceptance.csv";

fn f(v: f64) -> String {
    format!("{v}")
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad {what} `{s}`")))
}

/// Write every recorded quantity of `out` into `dir`; `ids` label allocation columns.
pub fn write_output(out: &McmcOutput, ids: &[String], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let kind = out.response_kind.map_or("none".to_string(), |k| k.to_string());
    fs::write(
        dir.join(INFO_FILE),
        format!("response_kind={kind}\nlog_mpp_plug_in={}\nn_recorded={}\n", out.log_mpp_plug_in, out.n_recorded()),
    )?;

    let r = out.beta.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_path(dir.join(TRACE_FILE))?;
    let mut header = vec!["iteration", "alpha", "n_clusters", "n_nonempty", "log_mpp"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend((1..=r).map(|k| format!("beta_{k}")));
    w.write_record(&header)?;
    for h in 0..out.n_recorded() {
        let mut row = vec![
            out.iterations[h].to_string(),
            f(out.alpha[h]),
            out.n_clusters[h].to_string(),
            out.n_nonempty[h].to_string(),
            f(out.log_mpp[h]),
        ];
        row.extend(out.beta[h].iter().map(|&b| f(b)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(ALLOCATIONS_FILE))?;
    w.write_record(std::iter::once("iteration").chain(ids.iter().map(String::as_str)))?;
    for h in 0..out.n_recorded() {
        let row = std::iter::once(out.iterations[h].to_string()).chain(out.allocations[h].iter().map(|z| (z + 1).to_string()));
        w.write_record(row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(CLUSTERS_FILE))?;
    w.write_record(["iteration", "cluster", "parameter", "value"])?;
    for h in 0..out.n_recorded() {
        let it = out.iterations[h].to_string();
        for s in &out.clusters[h] {
            let c = (s.label + 1).to_string();
            let mut put = |name: String, v: String| w.write_record([it.as_str(), c.as_str(), name.as_str(), v.as_str()]);
            put("size".into(), s.size.to_string())?;
            put("log_weight".into(), f(s.log_weight))?;
            for (q, p) in s.phi.iter().enumerate() {
                for (e, &v) in p.iter().enumerate() {
                    put(format!("phi_{}_{}", q + 1, e + 1), f(v))?;
                }
            }
            for (q, &g) in s.gamma.iter().enumerate() {
                put(format!("gamma_{}", q + 1), u8::from(g).to_string())?;
            }
            match &s.response {
                ClusterResponse::None => {}
                ClusterResponse::Mvn { mu, sigma } => {
                    let m = mu.len();
                    for (j, &v) in mu.iter().enumerate() {
                        put(format!("mu_{}", j + 1), f(v))?;
                    }
                    for (k, &v) in sigma.iter().enumerate() {
                        put(format!("sigma_{}_{}", k / m + 1, k % m + 1), f(v))?;
                    }
                }
                ClusterResponse::Gp(hyp) => {
                    put("log_a".into(), f(hyp.log_a))?;
                    put("log_l".into(), f(hyp.log_l))?;
                    put("log_s2".into(), f(hyp.log_s2))?;
                    if let Some(r) = hyp.ratio_r {
                        put("ratio_r".into(), f(r))?;
                    }
                }
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(PHI0_FILE))?;
    w.write_record(["covariate", "category", "value"])?;
    for (q, p) in out.phi0.iter().enumerate() {
        for (e, &v) in p.iter().enumerate() {
            w.write_record([(q + 1).to_string(), (e + 1).to_string(), f(v)])?;
        }
    }
    w.flush()?;

    let sel = dir.join(SELECTION_FILE);
    if out.rho.is_empty() {
        if sel.exists() {
            fs::remove_file(sel)?;
        }
    } else {
        let q = out.rho[0].len();
        let mut w = csv::Writer::from_path(sel)?;
        let mut header = vec!["iteration".to_string()];
        header.extend((1..=q).map(|k| format!("rho_{k}")));
        header.extend((1..=q).map(|k| format!("omega_{k}")));
        w.write_record(&header)?;
        for h in 0..out.rho.len() {
            let mut row = vec![out.iterations[h].to_string()];
            row.extend(out.rho[h].iter().map(|&v| f(v)));
            row.extend(out.omega[h].iter().map(|&o| u8::from(o).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
    }

    let mut w = csv::Writer::from_path(dir.join(ACCEPTANCE_FILE))?;
    w.write_record(["parameter", "step", "attempts", "accepted", "rate"])?;
    for s in &out.steps {
        w.write_record([
            s.name.clone(),
            f(s.step),
            s.attempts.to_string(),
            s.accepted.to_string(),
            s.rate().map_or(String::new(), f),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn split_indices(name: &str, prefix: &str) -> Option<Vec<usize>> {
    let rest = name.strip_prefix(prefix)?;
    rest.split('_').map(|s| s.parse::<usize>().ok().map(|v| v - 1)).collect()
}

fn set_grow<T: Clone + Default>(v: &mut Vec<T>, k: usize, value: T) {
    if v.len() <= k {
        v.resize(k + 1, T::default());
    }
    v[k] = value;
}

/// Read a chain written by [`write_output`]; returns the output and allocation ids.
pub fn read_output(dir: &Path) -> Result<(McmcOutput, Vec<String>)> {
    let info = fs::read_to_string(dir.join(INFO_FILE))?;
    let mut out = McmcOutput::default();
    for line in info.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        match k.trim() {
            "response_kind" => {
                out.response_kind = match v.trim() {
                    "none" => None,
                    s => Some(s.parse::<ResponseKind>()?),
                }
            }
            "log_mpp_plug_in" => out.log_mpp_plug_in = parse(v, "flag")?,
            _ => {}
        }
    }

    let (header, rows) = read_rows(&dir.join(TRACE_FILE))?;
    let r = header.len().saturating_sub(5);
    for row in &rows {
        out.iterations.push(parse(&row[0], "iteration")?);
        out.alpha.push(parse(&row[1], "alpha")?);
        out.n_clusters.push(parse(&row[2], "n_clusters")?);
        out.n_nonempty.push(parse(&row[3], "n_nonempty")?);
        out.log_mpp.push(parse(&row[4], "log_mpp")?);
        out.beta.push((0..r).map(|k| parse(&row[5 + k], "beta")).collect::<Result<_>>()?);
    }

    let (header, rows) = read_rows(&dir.join(ALLOCATIONS_FILE))?;
    let ids: Vec<String> = header.iter().skip(1).map(String::from).collect();
    for row in &rows {
        let z: Vec<usize> = row.iter().skip(1).map(|v| parse::<usize>(v, "label").map(|l| l - 1)).collect::<Result<_>>()?;
        out.allocations.push(z);
    }

    let h_total = out.iterations.len();
    let index: std::collections::HashMap<usize, usize> = out.iterations.iter().enumerate().map(|(h, &it)| (it, h)).collect();
    let mut clusters: Vec<Vec<ClusterSample>> = vec![Vec::new(); h_total];
    let mut hyper_parts: Vec<Vec<[Option<f64>; 4]>> = vec![Vec::new(); h_total];
    let mut mvn_dim: Vec<Vec<usize>> = vec![Vec::new(); h_total];
    let (_, rows) = read_rows(&dir.join(CLUSTERS_FILE))?;
    for row in &rows {
        let it: usize = parse(&row[0], "iteration")?;
        let h = *index.get(&it).ok_or_else(|| Error::Parse(format!("cluster row for unknown iteration {it}")))?;
        let label = parse::<usize>(&row[1], "cluster")? - 1;
        let name = &row[2];
        let value = &row[3];
        let pos = match clusters[h].iter().position(|c| c.label == label) {
            Some(p) => p,
            None => {
                clusters[h].push(ClusterSample {
                    label,
                    size: 0,
                    log_weight: 0.0,
                    phi: Vec::new(),
                    gamma: Vec::new(),
                    response: ClusterResponse::None,
                });
                hyper_parts[h].push([None; 4]);
                mvn_dim[h].push(0);
                clusters[h].len() - 1
            }
        };
        let s = &mut clusters[h][pos];
        match name {
            "size" => s.size = parse(value, "size")?,
            "log_weight" => s.log_weight = parse(value, "log_weight")?,
            "log_a" => hyper_parts[h][pos][0] = Some(parse(value, "log_a")?),
            "log_l" => hyper_parts[h][pos][1] = Some(parse(value, "log_l")?),
            "log_s2" => hyper_parts[h][pos][2] = Some(parse(value, "log_s2")?),
            "ratio_r" => hyper_parts[h][pos][3] = Some(parse(value, "ratio_r")?),
            n => {
                if let Some(ix) = split_indices(n, "phi_") {
                    let (q, e) = (ix[0], ix[1]);
                    if s.phi.len() <= q {
                        s.phi.resize(q + 1, Vec::new());
                    }
                    set_grow(&mut s.phi[q], e, parse(value, "phi")?);
                } else if let Some(ix) = split_indices(n, "gamma_") {
                    set_grow(&mut s.gamma, ix[0], parse::<u8>(value, "gamma")? == 1);
                } else if let Some(ix) = split_indices(n, "mu_") {
                    let v: f64 = parse(value, "mu")?;
                    if let ClusterResponse::None = s.response {
                        s.response = ClusterResponse::Mvn { mu: Vec::new(), sigma: Vec::new() };
                    }
                    if let ClusterResponse::Mvn { mu, .. } = &mut s.response {
                        set_grow(mu, ix[0], v);
                    }
                    mvn_dim[h][pos] = mvn_dim[h][pos].max(ix[0] + 1);
                } else if let Some(ix) = split_indices(n, "sigma_") {
                    let v: f64 = parse(value, "sigma")?;
                    let m = mvn_dim[h][pos];
                    if let ClusterResponse::Mvn { sigma, .. } = &mut s.response {
                        set_grow(sigma, ix[0] * m + ix[1], v);
                    }
                } else {
                    return Err(Error::Parse(format!("unknown cluster parameter `{n}`")));
                }
            }
        }
    }
    for h in 0..h_total {
        for (pos, s) in clusters[h].iter_mut().enumerate() {
            if let [Some(a), Some(l), Some(s2), r] = hyper_parts[h][pos] {
                s.response = ClusterResponse::Gp(GpHyper {
                    log_a: a,
                    log_l: l,
                    log_s2: s2,
                    ratio_r: r,
                });
            }
        }
    }
    out.clusters = clusters;

    let (_, rows) = read_rows(&dir.join(PHI0_FILE))?;
    for row in &rows {
        let q = parse::<usize>(&row[0], "covariate")? - 1;
        let e = parse::<usize>(&row[1], "category")? - 1;
        if out.phi0.len() <= q {
            out.phi0.resize(q + 1, Vec::new());
        }
        set_grow(&mut out.phi0[q], e, parse(&row[2], "phi0")?);
    }

    let sel = dir.join(SELECTION_FILE);
    if sel.exists() {
        let (header, rows) = read_rows(&sel)?;
        let q = (header.len() - 1) / 2;
        for row in &rows {
            out.rho.push((0..q).map(|k| parse(&row[1 + k], "rho")).collect::<Result<_>>()?);
            out.omega.push((0..q).map(|k| parse::<u8>(&row[1 + q + k], "omega").map(|v| v == 1)).collect::<Result<_>>()?);
        }
    }

    let (_, rows) = read_rows(&dir.join(ACCEPTANCE_FILE))?;
    for row in &rows {
        out.steps.push(StepSummary {
            name: row[0].to_string(),
            step: parse(&row[1], "step")?,
            attempts: parse(&row[2], "attempts")?,
            accepted: parse(&row[3], "accepted")?,
        });
    }
    Ok((out, ids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_output() -> McmcOutput {
        let s = |label, response| ClusterSample {
            label,
            size: 2,
            log_weight: -0.1 * label as f64 - 1e-17,
            phi: vec![vec![0.25, 0.75], vec![0.1, 0.2, 0.7]],
            gamma: vec![true, false],
            response,
        };
        McmcOutput {
            response_kind: Some(ResponseKind::Gp),
            log_mpp_plug_in: true,
            iterations: vec![10, 20],
            alpha: vec![0.1 + 0.2, 1.0 / 3.0],
            n_clusters: vec![3, 2],
            n_nonempty: vec![2, 2],
            log_mpp: vec![-12.5, f64::MIN_POSITIVE],
            beta: vec![vec![0.5], vec![-0.25]],
            allocations: vec![vec![0, 2, 2, 0], vec![1, 1, 0, 0]],
            clusters: vec![
                vec![
                    s(0, ClusterResponse::Gp(GpHyper::new(0.1, 0.2, 0.3))),
                    s(2, ClusterResponse::Gp(GpHyper::with_ratio(4.0, 0.2, 0.3))),
                ],
                vec![
                    s(0, ClusterResponse::Gp(GpHyper::new(-1.0, 0.0, 1e-300))),
                    s(1, ClusterResponse::Gp(GpHyper::new(2.0, 3.0, 4.0))),
                ],
            ],
            phi0: vec![vec![0.5, 0.5], vec![0.2, 0.3, 0.5]],
            rho: vec![vec![0.4, 0.0], vec![0.9, 0.1]],
            omega: vec![vec![true, false], vec![true, true]],
            steps: vec![StepSummary {
                name: "alpha".into(),
                step: 0.7,
                attempts: 10,
                accepted: 4,
            }],
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let out = sample_output();
        let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        write_output(&out, &ids, dir.path()).unwrap();
        let (back, back_ids) = read_output(dir.path()).unwrap();
        assert_eq!(back_ids, ids);
        assert_eq!(back, out);
    }

    #[test]
    fn mvn_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = sample_output();
        out.response_kind = Some(ResponseKind::Mvn);
        out.log_mpp_plug_in = false;
        out.rho.clear();
        out.omega.clear();
        for h in &mut out.clusters {
            for s in h.iter_mut() {
                s.response = ClusterResponse::Mvn {
                    mu: vec![1.0, 2.0],
                    sigma: vec![1.0, 0.3, 0.3, 2.0],
                };
            }
        }
        let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        write_output(&out, &ids, dir.path()).unwrap();
        assert_eq!(read_output(dir.path()).unwrap().0, out);
    }
}
