use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;
use watson_core::knn::{self, FeatureSchema, KnnError, RecommendParams, SchemaFile};
use watson_core::library::{library_specs, questions_view, render_view, view};
use watson_core::plots::{PlotError, PlotKind, PlotSpec};
use watson_core::questions::QuestionError;
use watson_core::synth::{self, SynthKind};
use watson_core::{FreqTable, LoadError, QuestionConfig, TableError};

#[derive(Parser)]
#[command(name = "watson", version, about = "Explore categorical survey data through seriated plots and leading questions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tally a CSV into a frequency table and write it as JSON.
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the plot library (or one plot) as SVG files.
    Plots {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// One to three comma-separated variables; the full library when omitted.
        #[arg(long, value_delimiter = ',')]
        vars: Option<Vec<String>>,
    },
    /// Print leading questions about a pair of variables as JSON.
    Questions {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        vars: Vec<String>,
        #[arg(long)]
        bar_var: Option<String>,
        #[arg(long, default_value_t = 5)]
        max_q: usize,
    },
    /// Predict each therapy's outcome for one patient and pick the best.
    Recommend {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        patient: PathBuf,
        #[arg(long, default_value_t = knn::DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = knn::DEFAULT_K_MIN)]
        k_min: usize,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Snapshot directory.
        #[arg(long, env = "WATSON_DATA_DIR")]
        data_dir: Option<PathBuf>,
    },
    /// Generate a seeded synthetic dataset with planted structure.
    Synth {
        #[arg(long)]
        kind: SynthKind,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        writeln!(std::io::stdout().lock(), $($arg)*).context("writing to standard output")?
    }};
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        let broken_pipe = e.chain().any(|c| {
            c.downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
        });
        if broken_pipe {
            std::process::exit(1);
        }
        eprintln!("error[{}]: {e:#}", code_of(&e));
        std::process::exit(1);
    }
}

/// Machine-readable name of the underlying failure.
fn code_of(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(x) = cause.downcast_ref::<LoadError>() {
            return x.code();
        }
        if let Some(x) = cause.downcast_ref::<TableError>() {
            return x.code();
        }
        if let Some(x) = cause.downcast_ref::<PlotError>() {
            return x.code();
        }
        if let Some(x) = cause.downcast_ref::<QuestionError>() {
            return x.code();
        }
        if let Some(x) = cause.downcast_ref::<KnnError>() {
            return x.code();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "Io";
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return "InvalidJson";
        }
    }
    "Error"
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Build { data, codebook, out } => {
            let t = load(&data, codebook.as_deref())?;
            let json = t.to_json();
            match out {
                Some(path) => write_atomic(&path, json.as_bytes()),
                None => {
                    emit!("{json}");
                    Ok(())
                }
            }
        }
        Command::Plots {
            data,
            codebook,
            out,
            vars,
        } => plots(&data, codebook.as_deref(), &out, vars),
        Command::Questions {
            data,
            codebook,
            vars,
            bar_var,
            max_q,
        } => {
            let t = load(&data, codebook.as_deref())?;
            let config = QuestionConfig {
                max_q,
                ..QuestionConfig::default()
            };
            let qs = questions_view(&t, &vars, bar_var.as_deref(), &config)?;
            emit!("{}", serde_json::to_string_pretty(&qs)?);
            Ok(())
        }
        Command::Recommend {
            cohort,
            schema,
            patient,
            k,
            k_min,
        } => {
            let schema_file: SchemaFile<f64> = serde_json::from_str(&read_text(&schema)?)
                .with_context(|| format!("parsing {}", schema.display()))?;
            let direction = schema_file.direction;
            let c = knn::load_cohort_csv(
                &read_bytes(&cohort)?,
                FeatureSchema {
                    features: schema_file.features,
                },
            )?;
            let p = knn::patient_from_json(&read_text(&patient)?, &c.schema)?;
            let params = RecommendParams {
                k,
                k_min,
                direction,
                ..RecommendParams::default()
            };
            let r = knn::recommend(&c, &p, &params)?;
            emit!("{}", serde_json::to_string_pretty(&r)?);
            Ok(())
        }
        Command::Serve { host, port, data_dir } => serve(&host, port, data_dir),
        Command::Synth { kind, size, seed, out } => {
            let size = size.unwrap_or(match kind {
                SynthKind::Survey => synth::DEFAULT_SURVEY_SIZE,
                SynthKind::Cohort => synth::DEFAULT_COHORT_SIZE,
            });
            if size == 0 {
                bail!("--size must be at least 1");
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for f in synth::generate(kind, size, seed) {
                let path = out.join(&f.name);
                write_atomic(&path, f.contents.as_bytes())?;
                emit!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load(data: &Path, codebook: Option<&Path>) -> Result<FreqTable> {
    let csv = read_bytes(data)?;
    let codebook = codebook.map(read_text).transpose()?;
    let start = Instant::now();
    let t = watson_core::load_table(&csv, codebook.as_deref())
        .with_context(|| format!("loading {}", data.display()))?;
    eprintln!(
        "built table: {} records, {} cells in {:.3} s",
        t.total(),
        t.n_cells(),
        start.elapsed().as_secs_f64()
    );
    Ok(t)
}

/// Write to a sibling temporary file, then rename over `path`.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn plots(data: &Path, codebook: Option<&Path>, out: &Path, vars: Option<Vec<String>>) -> Result<()> {
    let t = load(data, codebook)?;
    let dataset = data
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let specs = match vars {
        None => library_specs(&t, &dataset),
        Some(vars) => {
            let kind = PlotKind::for_arity(vars.len())
                .with_context(|| format!("--vars takes 1 to 3 variables, got {}", vars.len()))?;
            vec![PlotSpec {
                dataset: dataset.clone(),
                ..PlotSpec::new(kind, vars)
            }]
        }
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for spec in &specs {
        let start = Instant::now();
        // Marginalize once here so the timing covers the whole panel pipeline.
        let sub = view(&t, &spec.vars)?;
        let doc = render_view(&sub, spec)?;
        let elapsed = start.elapsed().as_secs_f64();
        let path = out.join(spec.file_name());
        write_atomic(&path, doc.xml.as_bytes())?;
        emit!("{}\t{}\t{}", spec.file_name(), spec.kind.as_str(), spec.vars.join(","));
        eprintln!("{}: {elapsed:.3} s", spec.file_name());
    }
    Ok(())
}

fn serve(host: &str, port: u16, data_dir: Option<PathBuf>) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    runtime.block_on(async move {
        let state = Arc::new(watson_server::AppState::load(data_dir)?);
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        watson_server::serve(listener, state, shutdown).await?;
        Ok(())
    })
}
