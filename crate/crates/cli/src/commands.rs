// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chipnet_core::cnn::{fixed_forward, network_forward};
use chipnet_core::container::{decode_cnw, encode_cnw};
use chipnet_core::hw::{cycle_model, layer_shapes, quantized_layer_shapes, simulate_frame, trace_csv};
use chipnet_core::metrics::{confusion_maps, metrics, Metrics};
use chipnet_core::pgm::read_pgm;
use chipnet_core::pointcloud::{parse_csv_points_named, parse_kitti_bin_named, scan_rates};
use chipnet_core::postprocess::{postprocess, render_pgm};
use chipnet_core::spherical::{rotate_roi_grid, usage_stats, INPUT_CHANNELS};
use chipnet_core::train::{
    evaluate, history_csv, synth_dataset, toy_grid, train_toy, QuantSpec, SceneConfig,
};
use chipnet_core::{
    Cten, Error, GridMap, LidarSpec, Mode, Network, PipelineConfig, PointCloud, QFormat, QuantizedNetwork, SimConfig,
    WeightFile,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    SimMismatch(String),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::SimMismatch(m) => write!(f, "simulator mismatch: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "chipnet", version, about = "Spherical-view LiDAR drivable-region pipeline")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bin a LiDAR frame into the spherical input tensor.
    Preprocess(PreprocessArgs),
    /// Run the network on an input tensor.
    Infer(InferArgs),
    /// Convert weights to fixed point.
    Quantize(QuantizeArgs),
    /// Run the datapath model and check it against the fixed-point reference.
    Simulate(SimulateArgs),
    /// Turn a probability map into a top-view grid map and polygon.
    Postprocess(PostprocessArgs),
    /// Score a predicted grid map against ground truth.
    Eval(EvalArgs),
    /// Train a small network on synthetic road scenes.
    Train(TrainArgs),
    /// Scanner rates and, for a frame, binning statistics.
    Stats(StatsArgs),
    /// Write randomly initialized float weights.
    Init(InitArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Shift the azimuth window by this many degrees.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rotate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InferMode {
    Float,
    Fixed,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, value_enum, default_value_t = InferMode::Float)]
    mode: InferMode,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct QuantizeArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 18)]
    bits: u8,
    #[arg(long, default_value_t = 14)]
    frac: u8,
    #[arg(long, default_value_t = 18)]
    act_bits: u8,
    #[arg(long, default_value_t = 10)]
    act_frac: u8,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, required_unless_present = "model_only")]
    tensor: Option<PathBuf>,
    #[arg(long, required_unless_present = "model_only")]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 350.0)]
    clock_mhz: f64,
    #[arg(long, default_value_t = 0)]
    swap_overhead: u64,
    /// Write (cycle, layer, pass, pixel_index) checkpoints as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the cycle report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the cycle model only, without streaming any data. Without
    /// `--weights` the full 64-channel, 10-block network is assumed; without
    /// `--tensor` the stock grid.
    #[arg(long)]
    model_only: bool,
}

#[derive(Debug, Args)]
struct PostprocessArgs {
    #[arg(long)]
    prob: PathBuf,
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    thr: Option<f32>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    polygon: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Nonzero pixels are excluded from scoring.
    #[arg(long)]
    dontcare: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    quant_epochs: usize,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 18)]
    bits: u8,
    #[arg(long, default_value_t = 14)]
    frac: u8,
    #[arg(long, default_value_t = 18)]
    act_bits: u8,
    #[arg(long, default_value_t = 10)]
    act_frac: u8,
    /// Random RoI rotations (degrees) to draw from per frame.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    rotations: Vec<f64>,
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Float master weights.
    #[arg(long)]
    output: PathBuf,
    /// Quantized weights after fine-tuning.
    #[arg(long)]
    quantized_output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InitArgs {
    #[arg(long, default_value_t = 64)]
    channels: usize,
    #[arg(long, default_value_t = 10)]
    blocks: usize,
    #[arg(long, default_value_t = 14)]
    in_channels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Infer(a) => infer(a),
        Command::Quantize(a) => quantize(a),
        Command::Simulate(a) => simulate(a),
        Command::Postprocess(a) => postprocess_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Train(a) => train(a),
        Command::Stats(a) => stats(a),
        Command::Init(a) => init(a),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Core(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Core(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => {
            let text = String::from_utf8(read(p)?).map_err(|_| CliError::Usage(format!("{} is not UTF-8", p.display())))?;
            Ok(PipelineConfig::from_toml(&text)?)
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn qformat(bits: u8, frac: u8) -> Result<QFormat> {
    QFormat::new(bits, frac).map_err(|e| CliError::Usage(e.to_string()))
}

fn load_frame(path: &Path) -> Result<PointCloud> {
    let bytes = read(path)?;
    let id = path.display().to_string();
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let cloud = if is_csv {
        let text = String::from_utf8(bytes).map_err(|_| Error::MalformedFrame("CSV frame is not UTF-8".into()))?;
        parse_csv_points_named(&text, &id)?
    } else {
        parse_kitti_bin_named(&bytes, &id)?
    };
    Ok(cloud)
}

fn load_weights(path: &Path) -> Result<WeightFile> {
    Ok(decode_cnw(&read(path)?)?)
}

fn load_cten(path: &Path) -> Result<Cten> {
    Ok(Cten::from_bytes(&read(path)?)?)
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let cloud = load_frame(&a.input)?;
    let (grid, tensor) = rotate_roi_grid(&cloud, &cfg.grid, a.rotate)?;
    write(&a.output, Cten::from_tensor(&tensor).to_bytes())?;
    println!("points        {}", cloud.len());
    println!("binned        {}", grid.counts.binned);
    println!("outside RoI   {}", grid.counts.outside_roi);
    println!("invalid       {}", grid.counts.invalid);
    println!("tensor        {} x {} x {}", tensor.rows(), tensor.cols(), tensor.channels());
    match usage_stats(&grid, &tensor, grid.counts.binned) {
        Ok(u) => {
            println!("point usage   {:.4}", u.point_usage_fraction);
            println!("occupancy     {:.4}", u.cell_occupancy_fraction);
        }
        Err(_) => println!("point usage   undef (no points inside the RoI)"),
    }
    Ok(())
}

fn infer(a: InferArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let tensor = load_cten(&a.tensor)?.to_tensor()?;
    let weights = load_weights(&a.weights)?;
    let start = Instant::now();
    let prob = match (a.mode, &weights) {
        (InferMode::Fixed, WeightFile::Fixed(q)) => fixed_forward(&tensor, q)?.prob,
        (InferMode::Fixed, WeightFile::Float(n)) => {
            let q = QuantizedNetwork::from_network_with(n, cfg.weights, cfg.activations, cfg.rounding)?;
            fixed_forward(&tensor, &q)?.prob
        }
        (InferMode::Float, w) => network_forward(&tensor, &w.float_network(), Mode::Float)?,
    };
    let elapsed = start.elapsed();
    write(&a.output, Cten::from_prob(&prob).to_bytes())?;
    println!("inference     {:.3} ms ({:?} mode)", elapsed.as_secs_f64() * 1e3, a.mode);
    Ok(())
}

fn quantize(a: QuantizeArgs) -> Result<()> {
    let wq = qformat(a.bits, a.frac)?;
    let aq = qformat(a.act_bits, a.act_frac)?;
    let net = load_weights(&a.weights)?.float_network();
    let q = QuantizedNetwork::from_network(&net, wq, aq)?;
    let back = q.dequantize();
    let layers = |n: &Network<f32>| {
        let mut v = vec![("encoder".to_string(), n.encoder.clone())];
        for (i, b) in n.blocks.iter().enumerate() {
            v.push((format!("block{i}.dense"), b.dense3.clone()));
            v.push((format!("block{i}.dilated"), b.dilated3.clone()));
        }
        v.push(("output".to_string(), n.output.clone()));
        v
    };
    println!("weights {wq}, activations {aq}");
    for ((name, orig), (_, deq)) in layers(&net).iter().zip(layers(&back)) {
        let err = orig
            .kernel
            .iter()
            .chain(&orig.bias)
            .zip(deq.kernel.iter().chain(&deq.bias))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        println!("{name:<18} max |error| {err:.3e}");
    }
    write(&a.output, encode_cnw(&WeightFile::Fixed(q)))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if !(a.clock_mhz > 0.0) {
        return Err(CliError::Usage("--clock-mhz must be positive".into()));
    }
    let cfg = SimConfig { clock_hz: a.clock_mhz * 1e6, swap_overhead_cycles: a.swap_overhead, ..SimConfig::default() };
    if a.model_only {
        let (rows, cols) = match &a.tensor {
            Some(p) => {
                let t = load_cten(p)?.to_tensor()?;
                (t.rows(), t.cols())
            }
            None => {
                let grid = PipelineConfig::default().grid;
                (grid.rows, grid.cols())
            }
        };
        let shapes = match &a.weights {
            Some(p) => match load_weights(p)? {
                WeightFile::Fixed(net) => quantized_layer_shapes(&net),
                WeightFile::Float(net) => layer_shapes(&net),
            },
            None => layer_shapes(&Network::<f32>::zeros(INPUT_CHANNELS, 64, 10)),
        };
        let report = cycle_model(rows, cols, &shapes, &cfg);
        println!("{report}");
        if let Some(p) = &a.json {
            write(p, report.to_json())?;
        }
        return Ok(());
    }
    let (Some(tensor_path), Some(weights_path)) = (&a.tensor, &a.weights) else {
        return Err(CliError::Usage("simulate needs --tensor and --weights".into()));
    };
    let WeightFile::Fixed(net) = load_weights(weights_path)? else {
        return Err(CliError::Usage("simulate needs fixed-point weights; run `chipnet quantize` first".into()));
    };
    let tensor = load_cten(tensor_path)?.to_tensor()?;
    let sim = simulate_frame(&tensor, &net, &cfg)?;
    let reference = fixed_forward(&tensor, &net)?;
    let mismatches = sim.logits.data().iter().zip(reference.logits.data()).filter(|(a, b)| a != b).count();
    println!("{}", sim.report);
    if let Some(p) = &a.trace {
        write(p, trace_csv(&sim.trace))?;
    }
    if let Some(p) = &a.json {
        write(p, sim.report.to_json())?;
    }
    if let Some(p) = &a.output {
        write(p, Cten::from_prob(&sim.prob).to_bytes())?;
    }
    if mismatches > 0 || sim.prob != reference.prob {
        return Err(CliError::SimMismatch(format!("{mismatches} of {} cells differ from the reference", sim.logits.data().len())));
    }
    println!("bit-exact     {} cells match the fixed-point reference", sim.logits.data().len());
    Ok(())
}

fn postprocess_cmd(a: PostprocessArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let thr = a.thr.unwrap_or(cfg.threshold);
    if !(thr > 0.0 && thr < 1.0) {
        return Err(CliError::Usage(format!("--thr must lie strictly between 0 and 1, got {thr}")));
    }
    let prob = load_cten(&a.prob)?.to_prob()?;
    let tensor = load_cten(&a.tensor)?.to_tensor()?;
    let out = postprocess(&prob, &tensor, thr, &cfg.grid, &cfg.gridmap)?;
    write(&a.map, render_pgm(&out.map))?;
    if let Some(p) = &a.polygon {
        let csv = out.polygon.as_ref().map_or_else(|| "x_m,y_m\n".to_string(), |poly| poly.to_csv());
        write(p, csv)?;
    }
    println!("drivable cells {}", out.mask.count());
    match &out.polygon {
        Some(p) => println!("polygon        {} vertices, {:.2} m^2", p.vertices.len(), p.area()),
        None => println!("polygon        none"),
    }
    Ok(())
}

fn load_map(path: &Path, cfg: &PipelineConfig) -> Result<GridMap> {
    let img = read_pgm(&read(path)?)?;
    Ok(GridMap::from_image(cfg.gridmap, img.width, img.height, img.maxval, &img.pixels)?)
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let pred = load_map(&a.pred, &cfg)?;
    let gt = load_map(&a.gt, &cfg)?;
    let dont_care = match &a.dontcare {
        Some(p) => {
            let img = read_pgm(&read(p)?)?;
            let mask = GridMap::from_image(cfg.gridmap, img.width, img.height, img.maxval, &img.pixels.iter().map(|&v| if v > 0 { img.maxval } else { 0 }).collect::<Vec<_>>())?;
            Some(mask.cells().iter().map(|&c| c == chipnet_core::postprocess::CellState::Drivable).collect::<Vec<_>>())
        }
        None => None,
    };
    let counts = confusion_maps(&pred, &gt, dont_care.as_deref())?;
    let m = metrics(&counts);
    println!("tp {} fp {} tn {} fn {}", counts.tp, counts.fp, counts.tn, counts.fn_);
    println!("{m}");
    print_metric_lines(&m);
    Ok(())
}

fn print_metric_lines(m: &Metrics) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "undef".to_string(), |v| format!("{v:.6}"));
    println!("f1={} ap={} precision={} recall={}", fmt(m.f1), fmt(m.ap), fmt(m.precision), fmt(m.recall));
}

fn train(a: TrainArgs) -> Result<()> {
    let wq = qformat(a.bits, a.frac)?;
    let aq = qformat(a.act_bits, a.act_frac)?;
    if a.frames == 0 {
        return Err(CliError::Usage("--frames must be positive".into()));
    }
    let mut scene = SceneConfig::default();
    if !a.rotations.is_empty() {
        scene.rotations = a.rotations.clone();
    }
    let data = synth_dataset(&scene, a.frames, a.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(1));
    let init = Network::<f64>::glorot(INPUT_CHANNELS, a.channels, a.blocks, &mut rng);
    let float = train_toy(&data, &init, a.epochs, None, a.seed)?;
    let mut history = float.history.clone();
    let float_f1 = evaluate(&float.network, &data, Mode::Float)?.f1;
    println!("grid {} x {}, {} frames", toy_grid().rows, toy_grid().cols(), data.len());
    println!("float         f1 {}", fmt_opt(float_f1));
    write(&a.output, encode_cnw(&WeightFile::Float(float.network.cast())))?;

    if a.quant_epochs > 0 || a.quantized_output.is_some() {
        let spec = QuantSpec { weights: wq, activations: aq };
        let tuned = train_toy(&data, &float.network, a.quant_epochs, Some(spec), a.seed.wrapping_add(2))?;
        history.extend(tuned.history.iter().map(|h| chipnet_core::train::EpochStats { epoch: h.epoch + a.epochs, ..*h }));
        let fixed_f1 = evaluate(&tuned.network, &data, spec.mode())?.f1;
        println!("fixed {wq}/{aq} f1 {}", fmt_opt(fixed_f1));
        if let Some(p) = &a.quantized_output {
            let q = QuantizedNetwork::from_network(&tuned.network, wq, aq)?;
            write(p, encode_cnw(&WeightFile::Fixed(q)))?;
        }
    }
    if let Some(p) = &a.loss_csv {
        write(p, history_csv(&history))?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undef".to_string(), |v| format!("{v:.4}"))
}

fn stats(a: StatsArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let rates = scan_rates(&LidarSpec::HDL_64E)?;
    println!("HDL-64E       {:.1} frames/s, {:.0} points/frame", rates.frames_per_second, rates.points_per_frame);
    println!("resolution    {:.4} deg azimuth, {:.4} deg polar", rates.azimuthal_resolution, rates.polar_resolution);
    println!("grid          {} x {} cells", cfg.grid.rows, cfg.grid.cols());
    if let Some(input) = &a.input {
        let cloud = load_frame(input)?;
        let (grid, tensor) = rotate_roi_grid(&cloud, &cfg.grid, 0.0)?;
        println!("points        {}", cloud.len());
        println!("binned        {}", grid.counts.binned);
        match usage_stats(&grid, &tensor, grid.counts.binned) {
            Ok(u) => println!("usage         {:.4} of RoI points, {:.4} of cells occupied", u.point_usage_fraction, u.cell_occupancy_fraction),
            Err(_) => println!("usage         undef (no points inside the RoI)"),
        }
    }
    Ok(())
}

fn init(a: InitArgs) -> Result<()> {
    if a.channels == 0 || a.in_channels == 0 {
        return Err(CliError::Usage("channel counts must be positive".into()));
    }
    let net = Network::<f32>::glorot(a.in_channels, a.channels, a.blocks, &mut ChaCha8Rng::seed_from_u64(a.seed));
    write(&a.output, encode_cnw(&WeightFile::Float(net)))?;
    println!("{} -> {} channels, {} blocks", a.in_channels, a.channels, a.blocks);
    Ok(())
}
