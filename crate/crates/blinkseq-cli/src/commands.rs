use std::fs;
use std::path::Path;

use blinkseq::channel::{bit_error_probability, transmit, ChannelParams, ClockModel, PhysicalParams, Trace};
use blinkseq::classifier::{default_threshold, Classifier};
use blinkseq::codebook::{
    estimate_cardinality, estimate_cardinality_hm3, exact_profile, generate, hamming_filter_random, Coding,
    Dictionary, GenerationParams, DEFAULT_SEARCH_ITERATIONS, DEFAULT_SEED,
};
use blinkseq::sim::{capacity_curve, run_id_experiment_with, CapacityConfig, ExperimentConfig, GridPoint, EXPERIMENT_THRESHOLD};

use crate::config::RunConfig;

pub const SEED_ENV: &str = "BLINKSEQ_SEED";

/// Text for stdout (or `--out`) plus an optional note for stderr.
pub struct Output {
    pub body: String,
    pub note: Option<String>,
}

pub type CmdResult = Result<Output, String>;

fn lib<T>(r: blinkseq::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

pub fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn default_seed() -> Result<u64, String> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|e| format!("{SEED_ENV}={v:?}: {e}")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn csv_body(header: &[&str], rows: &[Vec<String>]) -> Result<String, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| e.to_string())?;
    for r in rows {
        w.write_record(r).map_err(|e| e.to_string())?;
    }
    String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub struct GenArgs {
    pub coding: Coding,
    pub length: usize,
    pub bbar: f64,
    pub n1: Option<usize>,
    pub n0: Option<usize>,
    pub hm: usize,
    pub iterations: usize,
    pub seed: u64,
}

pub fn gen(a: &GenArgs) -> CmdResult {
    let params = match a.coding {
        Coding::Nrz => GenerationParams::nrz(a.length, a.bbar, a.n1.unwrap_or(a.length), a.n0.unwrap_or(a.length), a.hm),
        Coding::Manchester => GenerationParams::manchester(a.length, a.hm),
    }
    .with_search(a.iterations, a.seed);
    let g = lib(generate(&params))?;
    let s = g.stages;
    let note = format!(
        "sequences={}\npower={} circularity={} ones={} zeros={}\n",
        g.dictionary.len(),
        s.power,
        s.circularity,
        s.ones,
        s.zeros
    );
    Ok(Output { body: g.dictionary.to_text(), note: Some(note) })
}

pub fn table(grid_path: &Path, hm: usize, iterations: usize, seed: Option<u64>) -> CmdResult {
    let seed = match seed {
        Some(s) => s,
        None => default_seed()?,
    };
    let mut cfg = RunConfig::new("table");
    cfg.set("grid", grid_path.display());
    cfg.set("hm", hm);
    cfg.set("iterations", iterations);
    cfg.set("seed", seed);
    let text = read(grid_path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| format!("grid: {e}"))?.clone();
    if !header.is_empty() && header.iter().collect::<Vec<_>>() != ["L", "bbar", "n1", "n0"] {
        return Err(format!("grid header must be L,bbar,n1,n0, got {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format!("grid: {e}"))?;
        let field = |j: usize| rec.get(j).ok_or_else(|| format!("grid row {}: expected 4 fields", i + 1));
        let num = |j: usize| field(j)?.parse::<usize>().map_err(|e| format!("grid row {}: {e}", i + 1));
        let (l, n1, n0) = (num(0)?, num(2)?, num(3)?);
        let bbar: f64 = field(1)?.parse().map_err(|e| format!("grid row {}: {e}", i + 1))?;
        let p = GenerationParams::nrz(l, bbar, n1, n0, 1);
        let stage_d = lib(generate(&p))?.dictionary;
        let d_exact: u64 = lib(exact_profile(&p))?.iter().map(|c| c.zeros).sum();
        let d_est = lib(estimate_cardinality(&p))?.estimated_total().zeros;
        let x = if hm == 1 { stage_d.len() } else { hamming_filter_random(&stage_d, hm, iterations, seed).len() };
        rows.push(vec![
            l.to_string(),
            field(1)?.to_string(),
            n1.to_string(),
            n0.to_string(),
            d_exact.to_string(),
            d_est.to_string(),
            x.to_string(),
            estimate_cardinality_hm3(d_exact, l).to_string(),
        ]);
    }
    let body = csv_body(&["L", "bbar", "n1", "n0", "D_exact", "D_est", "X_hm3", "X_est"], &rows)?;
    Ok(Output { body: cfg.to_header() + &body, note: None })
}

fn dictionary_from(cfg: &mut RunConfig) -> Result<Dictionary, String> {
    if cfg.has("dict") {
        let path: String = cfg.required("dict")?;
        let d = lib(Dictionary::from_text(&read(Path::new(&path))?))?;
        let rows = cfg.get("rows", 0usize)?;
        return Ok(if rows > 0 { d.truncated(rows) } else { d });
    }
    let coding: Coding = cfg.get("coding", Coding::Nrz)?;
    let l = cfg.get("L", 8usize)?;
    let hm = cfg.get("hm", 1usize)?;
    let iterations = cfg.get("iterations", DEFAULT_SEARCH_ITERATIONS)?;
    let seed = cfg.get("dict_seed", DEFAULT_SEED)?;
    let params = match coding {
        Coding::Nrz => {
            let bbar = cfg.get("bbar", 0.4f64)?;
            let n1 = cfg.get("n1", l)?;
            let n0 = cfg.get("n0", l)?;
            GenerationParams::nrz(l, bbar, n1, n0, hm)
        }
        Coding::Manchester => GenerationParams::manchester(l, hm),
    }
    .with_search(iterations, seed);
    let d = lib(generate(&params))?.dictionary;
    let rows = cfg.get("rows", 0usize)?;
    Ok(if rows > 0 { d.truncated(rows) } else { d })
}

const DICT_KEYS: [&str; 10] = ["dict", "rows", "coding", "L", "hm", "iterations", "dict_seed", "bbar", "n1", "n0"];
const PHYSICAL_KEYS: [&str; 9] =
    ["power", "gain", "exposure", "period", "background", "sigma2_th1", "sigma2_th2", "alpha", "pixel_threshold"];

fn physical_from(cfg: &RunConfig) -> Result<PhysicalParams, String> {
    let req = |k: &str| cfg.required::<f64>(k);
    Ok(PhysicalParams {
        power: req("power")?,
        gain: req("gain")?,
        exposure: req("exposure")?,
        period: req("period")?,
        background: req("background")?,
        sigma2_th1: req("sigma2_th1")?,
        sigma2_th2: req("sigma2_th2")?,
        alpha: req("alpha")?,
        threshold: req("pixel_threshold")?,
    })
}

pub fn simulate(mut cfg: RunConfig) -> CmdResult {
    cfg.check_command("simulate")?;
    cfg.command = "simulate".into();
    let mut known: Vec<&str> = DICT_KEYS.to_vec();
    known.extend(PHYSICAL_KEYS);
    known.extend(["channel", "p_b", "delta", "trials", "seed", "eta", "max_samples"]);
    cfg.reject_unknown(&known)?;
    let dict = dictionary_from(&mut cfg)?;
    let channel: String = cfg.get("channel", "bsc".to_string())?;
    let channels: Vec<ChannelParams> = match channel.as_str() {
        "bsc" => cfg.list::<f64>("p_b", "0.01")?.into_iter().map(|p_b| ChannelParams::Bsc { p_b }).collect(),
        "physical" => vec![ChannelParams::Physical(physical_from(&cfg)?)],
        other => return Err(format!("channel must be bsc or physical, got {other:?}")),
    };
    let deltas = cfg.list::<f64>("delta", "0")?;
    let trials = cfg.get("trials", 100_000u64)?;
    let seed = cfg.get("seed", default_seed()?)?;
    let eta = cfg.get("eta", EXPERIMENT_THRESHOLD)?;
    let max_samples = cfg.get("max_samples", 10_000usize)?;
    if channels.is_empty() || deltas.is_empty() {
        return Err("p_b and delta lists must be nonempty".into());
    }
    let mut rows = Vec::new();
    let mut idx = 0u64;
    for ch in &channels {
        let p_b = match ch {
            ChannelParams::Bsc { p_b } => *p_b,
            ChannelParams::Physical(p) => lib(bit_error_probability(p, &dict))?,
        };
        for &delta in &deltas {
            let run_seed = seed.wrapping_add(idx);
            idx += 1;
            let ec = ExperimentConfig { trials, delta, threshold: eta, seed: run_seed, max_samples };
            let r = lib(run_id_experiment_with(&dict, ch, &ec))?;
            rows.push(vec![
                r.len.to_string(),
                r.hm.to_string(),
                p_b.to_string(),
                delta.to_string(),
                trials.to_string(),
                format!("{:.6}", r.mean_id_time),
                format!("{:.6}", r.se_id_time),
                format!("{:.6}", r.p_ce),
                format!("{:.6}", r.se_p_ce),
                run_seed.to_string(),
            ]);
        }
    }
    let body = csv_body(&["L", "Hm", "p_b", "delta", "trials", "E_Td", "se_Td", "p_ce", "se_pce", "seed"], &rows)?;
    Ok(Output { body: cfg.to_header() + &body, note: None })
}

// `bbar:n1:n0` entries separated by `;`, with `-` for an uncapped run.
fn parse_grid(s: &str) -> Result<Vec<GridPoint>, String> {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let parts: Vec<&str> = t.split(':').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(format!("grid entry {t:?}: expected bbar:n1:n0"));
            }
            let cap = |p: &str| -> Result<Option<usize>, String> {
                if p == "-" {
                    Ok(None)
                } else {
                    p.parse().map(Some).map_err(|e| format!("grid entry {t:?}: {e}"))
                }
            };
            let min_power = parts[0].parse().map_err(|e| format!("grid entry {t:?}: {e}"))?;
            Ok(GridPoint { min_power, max_ones_run: cap(parts[1])?, max_zeros_run: cap(parts[2])? })
        })
        .collect()
}

pub fn capacity(mut cfg: RunConfig) -> CmdResult {
    cfg.check_command("capacity")?;
    cfg.command = "capacity".into();
    cfg.reject_unknown(&[
        "j_min",
        "j_max",
        "p_g",
        "clock_quality",
        "seqs_per_uav",
        "grid",
        "iterations",
        "seed",
        "max_len",
    ])?;
    let d = CapacityConfig::default();
    let grid_text: String = cfg.get("grid", "0:-:-".to_string())?;
    let cc = CapacityConfig {
        j_min: cfg.get("j_min", d.j_min)?,
        j_max: cfg.get("j_max", d.j_max)?,
        p_g: cfg.get("p_g", d.p_g)?,
        clock_quality: cfg.get("clock_quality", d.clock_quality)?,
        seqs_per_uav: cfg.get("seqs_per_uav", d.seqs_per_uav)?,
        grid: parse_grid(&grid_text)?,
        iterations: cfg.get("iterations", d.iterations)?,
        seed: cfg.get("seed", default_seed()?)?,
        max_len: cfg.get("max_len", d.max_len)?,
    };
    let c = lib(capacity_curve(&cc))?;
    let rows: Vec<Vec<String>> = (0..c.j.len())
        .map(|i| vec![c.j[i].to_string(), format!("{:.6}", c.l_max[i]), opt(c.l_min_h1[i]), opt(c.l_min_h3[i])])
        .collect();
    let body = csv_body(&["J", "L_max", "L_min_h1", "L_min_h3"], &rows)?;
    let note = format!("crossing_h1={} crossing_h3={}\n", opt(c.crossing_h1), opt(c.crossing_h3));
    Ok(Output { body: cfg.to_header() + &body, note: Some(note) })
}

pub fn classify(dict_path: &Path, trace_path: &Path, threshold: Option<f64>) -> CmdResult {
    let dict = lib(Dictionary::from_text(&read(dict_path)?))?;
    let trace = lib(Trace::from_text(&read(trace_path)?))?;
    if let Some(l) = trace.header.get("L") {
        if l.parse::<usize>().ok() != Some(dict.seq_len()) {
            return Err(format!("trace is for L={l}, dictionary has L={}", dict.seq_len()));
        }
    }
    let eta = threshold.unwrap_or_else(|| default_threshold(dict.seq_len(), dict.params.min_distance));
    let mut cfg = RunConfig::new("classify");
    cfg.set("dict", dict_path.display());
    cfg.set("trace", trace_path.display());
    cfg.set("threshold", eta);
    let classifier = lib(Classifier::new(&dict, eta))?;
    let mut state = classifier.state();
    let rows: Vec<Vec<String>> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let out = state.classify(b);
            vec![(k + 1).to_string(), out.decision.code().to_string(), format!("{:.6}", out.score)]
        })
        .collect();
    let body = csv_body(&["k", "decision", "score"], &rows)?;
    Ok(Output { body: cfg.to_header() + &body, note: None })
}

pub struct TraceArgs<'a> {
    pub dict: &'a Path,
    pub row: usize,
    pub samples: usize,
    pub p_b: f64,
    pub delta: f64,
    pub phase: usize,
    pub seed: Option<u64>,
}

pub fn trace(a: &TraceArgs) -> CmdResult {
    let dict = lib(Dictionary::from_text(&read(a.dict)?))?;
    let row = *dict.rows.get(a.row).ok_or_else(|| format!("row {} out of range ({} rows)", a.row, dict.len()))?;
    let seed = match a.seed {
        Some(s) => s,
        None => default_seed()?,
    };
    let ch = ChannelParams::Bsc { p_b: a.p_b };
    let samples = lib(transmit(&row, a.samples, &ch, &ClockModel::ideal(1.0), &ClockModel::ideal(1.0 + a.delta), a.phase, seed))?;
    let mut t = Trace { samples, ..Trace::default() };
    for (k, v) in [
        ("command", "trace".to_string()),
        ("dict", a.dict.display().to_string()),
        ("row", a.row.to_string()),
        ("sequence", row.to_string()),
        ("L", row.len().to_string()),
        ("samples", a.samples.to_string()),
        ("p_b", a.p_b.to_string()),
        ("delta", a.delta.to_string()),
        ("phase", a.phase.to_string()),
        ("seed", seed.to_string()),
    ] {
        t.header.insert(k.to_string(), v);
    }
    Ok(Output { body: t.to_text(), note: None })
}
