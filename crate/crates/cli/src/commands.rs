use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use neuroaudio::audio::{
    load_triple, read_manifest, read_wav, synth_dataset, write_manifest, write_wav, AudioBuffer, ManifestEntry,
    NoisyTriple, SnrRange, SynthConfig,
};
use neuroaudio::coding::{self, decode_phase, decode_rank_order, encode_phase, encode_rank_order, Scheme};
use neuroaudio::dsp::{read_spectrogram, write_spectrogram, StftEngine};
use neuroaudio::expressivity::{grid_table, TriLinearFn};
use neuroaudio::metrics::{si_snr, summarize, SiSnrValue};
use neuroaudio::model::{
    load_checkpoint, save_checkpoint, train as train_model, MacCounter, Model, PreparedSample, TrainError,
};
use neuroaudio::perf::{
    characteristics_report, device_table, fpga_efficiency_check, instrumented_macs, mac_embedding, mac_snn, mac_total,
    mac_transformer_terms, DeviceProfile, PerfConfig,
};
use neuroaudio::Real;
use serde::{Deserialize, Serialize};

use crate::args::{
    Baseline, DenoiseArgs, EncodeArgs, EvalArgs, ExpressivityArgs, PerfArgs, SchemeArg, StftArgs, SynthArgs, TrainArgs,
};
use crate::error::{CliError, CliResult};
use crate::settings::{
    echo, load, required, set, DenoiseSettings, EncodeSettings, EvalSettings, ExpressivitySettings, PerfSettings,
    StftSettings, SynthSettings, TrainSettings,
};

/// Directory holding `file`, for settings echoes next to single-file outputs.
fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_parent(file: &Path) -> CliResult<PathBuf> {
    let dir = parent_dir(file);
    fs::create_dir_all(&dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn base_dir(manifest: &Path) -> PathBuf {
    parent_dir(manifest)
}

fn load_model(path: &Path) -> CliResult<Model<Real>> {
    let file = File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    load_checkpoint(BufReader::new(file)).map_err(|e| CliError::from(e).context(path.display()))
}

fn store_model(model: &Model<Real>, path: &Path) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

fn load_dataset(manifest: &Path) -> CliResult<(Vec<ManifestEntry>, Vec<NoisyTriple<Real>>)> {
    let entries = read_manifest(manifest).map_err(|e| CliError::from(e).context(manifest.display()))?;
    if entries.is_empty() {
        return Err(CliError::data(format!("{}: manifest is empty", manifest.display())));
    }
    let base = base_dir(manifest);
    let triples = entries
        .iter()
        .map(|e| load_triple(&base, e).map_err(|err| CliError::from(err).context(&e.id)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok((entries, triples))
}

pub fn synth(a: SynthArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s: SynthSettings = load(config)?;
    if a.out.is_some() {
        s.out = a.out;
    }
    set!(s.count, a.count);
    set!(s.seconds, a.seconds);
    set!(s.seed, a.seed);
    set!(s.snr_low, a.snr_low);
    set!(s.snr_high, a.snr_high);
    set!(s.sample_rate, a.sample_rate);
    let out = required(&s.out, "--out")?.clone();
    let range = SnrRange::new(s.snr_low, s.snr_high).map_err(|e| CliError::usage(e.to_string()))?;
    if s.count == 0 || !(s.seconds > 0.0) {
        return Err(CliError::usage("--count and --seconds must be positive"));
    }
    let cfg = SynthConfig {
        count: s.count,
        duration_s: s.seconds,
        snr_range: range,
        seed: s.seed,
        sample_rate_hz: s.sample_rate,
    };
    let data = synth_dataset::<Real>(&cfg)?;
    fs::create_dir_all(&out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    let mut entries = Vec::with_capacity(data.len());
    for (i, t) in data.iter().enumerate() {
        let id = format!("{i:04}");
        let name = |kind: &str| PathBuf::from(format!("{id}_{kind}.wav"));
        write_wav(&t.clean, out.join(name("clean")))?;
        write_wav(&t.noise, out.join(name("noise")))?;
        write_wav(&t.noisy, out.join(name("noisy")))?;
        entries.push(ManifestEntry {
            id: id.clone(),
            clean: name("clean"),
            noise: Some(name("noise")),
            noisy: name("noisy"),
            snr_db: Some(t.snr_db),
            seed: s.seed,
        });
    }
    let manifest = out.join("manifest.jsonl");
    write_manifest(&manifest, &entries)?;
    echo(&out, "synth", &s)?;
    println!("wrote {} triples to {}", entries.len(), manifest.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    steps: usize,
    samples: usize,
    initial_loss: f64,
    final_loss: f64,
}

fn mean_loss(model: &Model<Real>, samples: &[PreparedSample<Real>], engine: &StftEngine<Real>) -> CliResult<f64> {
    let mut total = 0.0;
    for s in samples {
        total += model.loss(s, engine)?;
    }
    Ok(total / samples.len() as f64)
}

pub fn train(a: TrainArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s: TrainSettings = load(config)?;
    if a.manifest.is_some() {
        s.manifest = a.manifest;
    }
    if a.out.is_some() {
        s.out = a.out;
    }
    set!(s.train.steps, a.steps);
    set!(s.train.batch_size, a.batch_size);
    set!(s.train.learning_rate, a.lr);
    set!(s.train.momentum, a.momentum);
    if let Some(c) = a.grad_clip {
        s.train.grad_clip = (c > 0.0).then_some(c);
    }
    set!(s.train.seed, a.seed);
    set!(s.model.seed, a.model_seed);
    if let Some(e) = a.embed_dim {
        s.model.embed_dim = e;
        s.model.snn_neurons = e;
    }
    set!(s.model.num_heads, a.heads);
    set!(s.model.num_layers, a.layers);
    set!(s.model.snn_steps, a.t_sim);
    s.overfit_one |= a.overfit_one;
    if a.mask_logit.is_some() {
        s.mask_logit = a.mask_logit;
    }
    let manifest = required(&s.manifest, "--manifest")?.clone();
    let out = required(&s.out, "--out")?.clone();

    let (_, mut data) = load_dataset(&manifest)?;
    if s.overfit_one {
        data.truncate(1);
        s.train.batch_size = 1;
    }
    let rate = data[0].clean.sample_rate_hz();
    if let Some(t) = data.iter().find(|t| t.clean.sample_rate_hz() != rate) {
        return Err(CliError::data(format!(
            "mixed sample rates in manifest: {rate} and {} Hz",
            t.clean.sample_rate_hz()
        )));
    }
    if s.model.stft.sample_rate_hz != rate {
        info!("using the data's sample rate of {rate} Hz");
        s.model.stft.sample_rate_hz = rate;
    }
    let mut model = Model::<Real>::new(s.model.clone())?;
    if let Some(logit) = s.mask_logit {
        model.set_constant_mask_logit(logit);
    }
    echo(&out, "train", &s)?;

    let engine = StftEngine::new(model.config.stft)?;
    let probe = data
        .iter()
        .take(8)
        .map(|t| PreparedSample::new(t, &engine))
        .collect::<Result<Vec<_>, _>>()?;
    let initial_loss = mean_loss(&model, &probe, &engine)?;

    let log_path = out.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path)?);
    let mut log_err = None;
    let result = train_model(&mut model, &data, &s.train, |l| {
        info!(
            "step {} loss {:.4} si-snr {:.3} dB grad {:.3e}",
            l.step, l.loss, l.si_snr_db, l.grad_norm
        );
        let line = serde_json::to_string(l).expect("step log serializes");
        if let Err(e) = writeln!(log, "{line}") {
            log_err.get_or_insert(e);
        }
    });
    log.flush()?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    let ckpt = out.join("model.ckpt");
    match result {
        Ok(_) => {}
        Err(TrainError::Diverged {
            step,
            reason,
            last_good,
        }) => {
            let good = Model::from_parts(model.config.clone(), last_good.params)?;
            store_model(&good, &ckpt)?;
            return Err(CliError::numeric(format!(
                "training diverged at step {step} ({reason}); last good parameters saved to {}",
                ckpt.display()
            )));
        }
        Err(e) => return Err(e.into()),
    }
    store_model(&model, &ckpt)?;
    let final_loss = mean_loss(&model, &probe, &engine)?;
    let summary = TrainSummary {
        steps: s.train.steps,
        samples: data.len(),
        initial_loss,
        final_loss,
    };
    fs::write(out.join("train_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "trained {} steps on {} samples: loss {initial_loss:.4} -> {final_loss:.4}; checkpoint {}",
        summary.steps,
        summary.samples,
        ckpt.display()
    );
    Ok(())
}

pub fn denoise(a: DenoiseArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s: DenoiseSettings = load(config)?;
    for (dst, src) in [
        (&mut s.checkpoint, a.checkpoint),
        (&mut s.input, a.input),
        (&mut s.output, a.output),
    ] {
        if src.is_some() {
            *dst = src;
        }
    }
    let model = load_model(required(&s.checkpoint, "--checkpoint")?)?;
    let input = required(&s.input, "--input")?;
    let output = required(&s.output, "--output")?;
    let audio: AudioBuffer<Real> = read_wav(input).map_err(|e| CliError::from(e).context(input.display()))?;
    let expected = model.config.stft.sample_rate_hz;
    if audio.sample_rate_hz() != expected {
        return Err(CliError::data(format!(
            "{} is {} Hz but the checkpoint expects {expected} Hz",
            input.display(),
            audio.sample_rate_hz()
        )));
    }
    let clean = model.denoise(&audio)?;
    let dir = ensure_parent(output)?;
    write_wav(&clean, output)?;
    echo(&dir, "denoise", &s)?;
    println!("wrote {} ({} samples)", output.display(), clean.len());
    Ok(())
}

fn fmt_db(v: SiSnrValue) -> String {
    match v {
        SiSnrValue::Db(d) => format!("{d:.4}"),
        SiSnrValue::Perfect => "perfect".to_string(),
    }
}

#[derive(Debug, Serialize)]
struct EvalRow {
    id: String,
    snr_db: f64,
    noisy_db: String,
    estimate_db: String,
    delta_db: String,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    files: usize,
    noisy_mean_db: Option<f64>,
    estimate_mean_db: Option<f64>,
    estimate_median_db: Option<f64>,
    perfect: usize,
    mean_delta_db: Option<f64>,
}

pub fn eval(a: EvalArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s: EvalSettings = load(config)?;
    for (dst, src) in [
        (&mut s.manifest, a.manifest),
        (&mut s.checkpoint, a.checkpoint),
        (&mut s.estimates, a.estimates),
        (&mut s.out, a.out),
    ] {
        if src.is_some() {
            *dst = src;
        }
    }
    set!(s.baseline, a.baseline);
    if s.checkpoint.is_some() && s.estimates.is_some() {
        return Err(CliError::usage(
            "give either a checkpoint or an estimates directory, not both",
        ));
    }
    let manifest = required(&s.manifest, "--manifest")?.clone();
    let (entries, triples) = load_dataset(&manifest)?;
    let model = s.checkpoint.as_deref().map(load_model).transpose()?;

    let mut rows = Vec::with_capacity(entries.len());
    let mut noisy_scores = Vec::new();
    let mut est_scores = Vec::new();
    let mut deltas = Vec::new();
    for (entry, t) in entries.iter().zip(&triples) {
        let estimate: AudioBuffer<Real> = match (&model, &s.estimates) {
            (Some(m), _) => m.denoise(&t.noisy).map_err(|e| CliError::from(e).context(&entry.id))?,
            (None, Some(dir)) => {
                let path = dir.join(format!("{}.wav", entry.id));
                if !path.exists() {
                    return Err(CliError::data(format!(
                        "no estimate {} for {}",
                        path.display(),
                        entry.id
                    )));
                }
                read_wav(&path).map_err(|e| CliError::from(e).context(path.display()))?
            }
            (None, None) => match s.baseline {
                Baseline::Noisy => t.noisy.clone(),
                Baseline::Clean => t.clean.clone(),
            },
        };
        if estimate.len() != t.clean.len() {
            return Err(CliError::data(format!(
                "{}: estimate has {} samples, reference {}",
                entry.id,
                estimate.len(),
                t.clean.len()
            )));
        }
        let noisy = si_snr(t.noisy.samples(), t.clean.samples())
            .map_err(|e| CliError::from(e).context(&entry.id))?
            .value;
        let est = si_snr(estimate.samples(), t.clean.samples())
            .map_err(|e| CliError::from(e).context(&entry.id))?
            .value;
        let delta = match (noisy.db(), est.db()) {
            (Some(n), Some(e)) => {
                deltas.push(e - n);
                format!("{:.4}", e - n)
            }
            _ => String::new(),
        };
        rows.push(EvalRow {
            id: entry.id.clone(),
            snr_db: t.snr_db,
            noisy_db: fmt_db(noisy),
            estimate_db: fmt_db(est),
            delta_db: delta,
        });
        noisy_scores.push(noisy);
        est_scores.push(est);
    }
    let ns = summarize(&noisy_scores);
    let es = summarize(&est_scores);
    let report = EvalReport {
        files: rows.len(),
        noisy_mean_db: ns.mean_db,
        estimate_mean_db: es.mean_db,
        estimate_median_db: es.median_db,
        perfect: es.perfect,
        mean_delta_db: (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64),
    };

    println!("id,snr_db,noisy_db,estimate_db,delta_db");
    for r in &rows {
        println!(
            "{},{:.2},{},{},{}",
            r.id, r.snr_db, r.noisy_db, r.estimate_db, r.delta_db
        );
    }
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |d| format!("{d:.3} dB"));
    println!(
        "files {}  noisy mean {}  estimate mean {}  perfect {}  mean delta {}",
        report.files,
        opt(report.noisy_mean_db),
        opt(report.estimate_mean_db),
        report.perfect,
        opt(report.mean_delta_db)
    );
    if let Some(out) = &s.out {
        echo(out, "eval", &s)?;
        let mut w = csv::Writer::from_path(out.join("eval.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        fs::write(out.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ProfileRecord {
    name: String,
    nm: u32,
    mhz: f64,
    w: f64,
    latency_ms: f64,
}

fn read_profiles(path: &Path) -> CliResult<Vec<DeviceProfile>> {
    let malformed = |msg: String| CliError::data(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| malformed(e.to_string()))?;
    let mut out = Vec::new();
    for rec in reader.deserialize::<ProfileRecord>() {
        let r = rec.map_err(|e| malformed(e.to_string()))?;
        let p = DeviceProfile {
            name: r.name,
            technology_nm: r.nm,
            frequency_mhz: r.mhz,
            power_w: r.w,
            latency_ms: r.latency_ms,
        };
        p.validate().map_err(|e| malformed(e.to_string()))?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(malformed("no profiles".into()));
    }
    Ok(out)
}

pub fn perf(a: PerfArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s: PerfSettings = load(config)?;
    if a.profile.is_some() {
        s.profile = a.profile;
    }
    if a.out.is_some() {
        s.out = a.out;
    }
    set!(s.macs, a.macs);
    s.model.validate()?;
    let extra = s.profile.as_deref().map(read_profiles).transpose()?.unwrap_or_default();
    let rows = device_table(s.macs, &extra)?;
    let report = characteristics_report(&s.model.stft, &s.model);
    let flag = fpga_efficiency_check();

    println!("front end");
    println!("  bands            {}", report.bands);
    println!(
        "  frequency range  {:.0}-{:.0} Hz",
        report.freq_range_hz.0, report.freq_range_hz.1
    );
    println!("  dynamic range    {:.2} dB", report.dynamic_range_db);
    println!("  max event rate   {:.2} Mevents/s", report.max_event_rate_mevents);
    println!("  core clock       {:.0} MHz", report.clock_mhz);
    println!();
    println!("device table at {:.3e} operations per inference", s.macs);
    println!(
        "  {:<28} {:>5} {:>8} {:>8} {:>11} {:>10} {:>10}",
        "device", "nm", "MHz", "W", "latency ms", "GOP/s", "GOP/s/W"
    );
    for r in &rows {
        let mark = |m: Option<bool>| match m {
            Some(true) => " ok",
            Some(false) => " MISMATCH",
            None => "",
        };
        println!(
            "  {:<28} {:>5} {:>8.0} {:>8.2} {:>11.2} {:>10.2} {:>10.2}{}{}",
            r.profile.name,
            r.profile.technology_nm,
            r.profile.frequency_mhz,
            r.profile.power_w,
            r.profile.latency_ms,
            r.throughput_gops,
            r.efficiency_gops_per_w,
            mark(r.throughput_matches()),
            mark(r.efficiency_matches()),
        );
    }
    if flag.flagged {
        println!(
            "  FLAG: FPGA efficiency {:.2} GOP/s/W from {:.2} GOP/s / {:.2} W disagrees with the printed {:.2}; \
             {:.2} GOP/s gives {:.2}",
            flag.from_device_table,
            flag.device_table_throughput,
            flag.power_w,
            flag.printed_efficiency,
            flag.comparison_throughput,
            flag.from_comparison
        );
    }
    println!();
    let pc = PerfConfig::from(&s.model);
    let (proj, scores) = mac_transformer_terms(&pc);
    println!(
        "analytic MACs (D={} S={} T={} N={} t_sim={})",
        pc.d, pc.s, pc.t, pc.n, pc.t_sim
    );
    println!("  embedding D*S            {}", mac_embedding(&pc));
    println!("  transformer 2D^2S        {proj}");
    println!("  transformer D*S^2*T      {scores}");
    println!("  snn N*t_sim              {}", mac_snn(&pc));
    println!("  total                    {}", mac_total(&pc));
    let model = Model::<Real>::new(s.model.clone())?;
    let counter = MacCounter::new();
    let inst = instrumented_macs(&model, Some(&counter))?;
    println!("counted MACs, one frame");
    for t in &inst.terms {
        println!(
            "  {:<24} analytic {:>12} counted {:>12}{}",
            t.term,
            t.analytic,
            t.instrumented,
            if t.exact { "  exact" } else { "" }
        );
    }
    println!(
        "  feed-forward {}  head {}  all terms {}",
        inst.counts.feed_forward,
        inst.counts.head,
        inst.counts.total()
    );
    if let Some(out) = &s.out {
        echo(out, "perf", &s)?;
        let json = serde_json::json!({
            "characteristics": report,
            "devices": rows.iter().map(|r| serde_json::json!({
                "name": r.profile.name,
                "technology_nm": r.profile.technology_nm,
                "frequency_mhz": r.profile.frequency_mhz,
                "power_w": r.profile.power_w,
                "latency_ms": r.profile.latency_ms,
                "throughput_gops": r.throughput_gops,
                "efficiency_gops_per_w": r.efficiency_gops_per_w,
                "throughput_matches": r.throughput_matches(),
                "efficiency_matches": r.efficiency_matches(),
            })).collect::<Vec<_>>(),
            "fpga_efficiency": flag,
            "instrumented": inst,
        });
        fs::write(out.join("perf.json"), serde_json::to_string_pretty(&json)?)?;
    }
    Ok(())
}

pub fn expressivity(a: ExpressivityArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s: ExpressivitySettings = load(config)?;
    set!(s.theta, a.theta);
    set!(s.dt, a.dt);
    set!(s.points, a.points);
    if a.out.is_some() {
        s.out = a.out;
    }
    let f = TriLinearFn::<Real>::new(s.theta)?;
    let rows = grid_table(&f, s.dt, s.points)?;
    let relu_err = rows.iter().map(|r| (r.relu - r.exact).abs()).fold(0.0, f64::max);
    let snn_err = rows.iter().map(|r| (r.snn - r.exact).abs()).fold(0.0, f64::max);
    println!("x,exact,relu,snn");
    for r in &rows {
        println!("{:.6},{:.6},{:.6},{:.6}", r.x, r.exact, r.relu, r.snn);
    }
    println!(
        "max |relu - exact| {relu_err:.3e}  max |snn - exact| {snn_err:.3e} (bound dt/2 = {:.3e})",
        s.dt / 2.0
    );
    if let Some(out) = &s.out {
        echo(out, "expressivity", &s)?;
        let mut w = csv::Writer::from_path(out.join("expressivity.csv"))?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn stft(a: StftArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s: StftSettings = load(config)?;
    if a.input.is_some() {
        s.input = a.input;
    }
    if a.output.is_some() {
        s.output = a.output;
    }
    s.inverse |= a.inverse;
    set!(s.stft.window_len, a.window);
    set!(s.stft.hop_len, a.hop);
    let input = required(&s.input, "--input")?.clone();
    let output = required(&s.output, "--output")?.clone();
    let dir = ensure_parent(&output)?;
    if s.inverse {
        let file = File::open(&input).map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
        let spec = read_spectrogram::<Real, _>(BufReader::new(file))?;
        let engine = StftEngine::new(*spec.config())?;
        let audio = engine.istft(&spec)?;
        write_wav(&audio, &output)?;
        println!("wrote {} ({} samples)", output.display(), audio.len());
    } else {
        let audio: AudioBuffer<Real> = read_wav(&input).map_err(|e| CliError::from(e).context(input.display()))?;
        s.stft.sample_rate_hz = audio.sample_rate_hz();
        let engine = StftEngine::new(s.stft)?;
        let spec = engine.stft(&audio)?;
        let mut w = BufWriter::new(File::create(&output)?);
        write_spectrogram(&spec, &mut w)?;
        w.flush()?;
        println!(
            "wrote {} ({} frames x {} bins)",
            output.display(),
            spec.num_frames(),
            spec.num_bins()
        );
    }
    echo(&dir, "stft", &s)?;
    Ok(())
}

fn to_scheme(s: SchemeArg) -> Scheme {
    match s {
        SchemeArg::Rate => Scheme::Rate,
        SchemeArg::Ttfs => Scheme::Ttfs,
        SchemeArg::Phase => Scheme::Phase,
        SchemeArg::Burst => Scheme::Burst,
        SchemeArg::RankOrder => Scheme::RankOrder,
    }
}

pub fn encode(a: EncodeArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s: EncodeSettings = load(config)?;
    if let Some(scheme) = a.scheme {
        s.codec.scheme = to_scheme(scheme);
    }
    if !a.values.is_empty() {
        s.values = a.values;
    }
    set!(s.codec.num_steps, a.steps);
    set!(s.codec.seed, a.seed);
    if a.output.is_some() {
        s.output = a.output;
    }
    if s.values.is_empty() {
        return Err(CliError::usage("no --values given"));
    }
    let (train, decoded) = match s.codec.scheme {
        Scheme::Phase => {
            let ints = s
                .values
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as u64)
                    } else {
                        Err(CliError::usage(format!(
                            "phase coding takes non-negative integers, got {v}"
                        )))
                    }
                })
                .collect::<CliResult<Vec<_>>>()?;
            let t = encode_phase(&ints, &s.codec)?;
            let d = decode_phase(&t, &s.codec)?;
            (t, d.iter().map(|v| v.to_string()).collect::<Vec<_>>())
        }
        Scheme::RankOrder => {
            let t = encode_rank_order(&s.values, &s.codec)?;
            let order = decode_rank_order(&t)?;
            (t, order.iter().map(|v| format!("#{v}")).collect())
        }
        _ => {
            let t = coding::encode(&s.values, &s.codec)?;
            let d: Vec<Real> = coding::decode(&t, &s.codec)?;
            (t, d.iter().map(|v| format!("{v:.6}")).collect())
        }
    };
    match &s.output {
        Some(path) => {
            let dir = ensure_parent(path)?;
            fs::write(path, train.to_json())?;
            echo(&dir, "encode", &s)?;
            println!("wrote {} ({} spikes)", path.display(), train.len());
        }
        None => println!("{}", train.to_json()),
    }
    println!("decoded: {}", decoded.join(","));
    Ok(())
}
