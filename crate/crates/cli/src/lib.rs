//! Command line front end: game generation, seeded experiment runs, gap
//! evaluation, KL checks, and covering-net emission.
//!
//! Every run is driven by one master seed; all randomness is derived from
//! named streams of it, so identical configs produce byte-identical outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use equilab::game::{
    best_response_value, exact_value, ne_gap, random_cooperative_game, random_game, GameJson,
    MarkovGame, MarkovProductPolicy,
};
use equilab::learners::{run_v_learning, LearnerConfig, LearnerKind, RunHistory};
use equilab::mpg::{nash_ca, ucbvi_uplow, NashCaConfig, SamplingMdpView, UcbviParams};
use equilab::{
    block_one_net, build_hard_game, certified_exact_value, certified_omniscient_deviation,
    embed_one_step_game, hamming_one_net, kl_decomposition_check, verify_one_net, DeviationMode,
    Error, GapMethod, GapReport, PlayerGaps, StreamSeed,
};

#[derive(Parser)]
#[command(name = "equilab", about = "tabular Markov game laboratory", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a game file from a generator spec
    Gen(GenArgs),
    /// Execute a configured experiment
    Run(RunArgs),
    /// Recompute a gap report from a stored history
    Eval(EvalArgs),
    /// Check the KL divergence decomposition on a bandit instance
    KlCheck(KlArgs),
    /// Emit or verify a covering 1-net
    Net(NetArgs),
}

#[derive(Args)]
struct GenArgs {
    /// random | hard-one-step | hard-mdp
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 2)]
    players: usize,
    #[arg(long, default_value_t = 1)]
    states: usize,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// per-player action counts, comma separated (random games)
    #[arg(long, default_value = "2,2")]
    actions: String,
    /// identical rewards for every player (random games)
    #[arg(long, default_value_t = false)]
    cooperative: bool,
    /// block parameter; actions per player = 2k (hard games)
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// experiment config in TOML
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KlArgs {
    /// comma separated true means
    #[arg(long)]
    p: String,
    /// comma separated alternative means
    #[arg(long)]
    q: String,
    #[arg(long, default_value_t = 2)]
    rounds: usize,
    #[arg(long, default_value_t = 4)]
    seeds: usize,
    /// salt of the built-in deterministic adaptive rule
    #[arg(long, default_value_t = 0)]
    salt: u64,
}

#[derive(Args)]
struct NetArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// brute-force check the covering property
    #[arg(long, default_value_t = false)]
    verify: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Config {
    game: GameSpec,
    algorithm: AlgorithmSpec,
    run: RunSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GameSpec {
    /// file | random | random-cooperative
    source: String,
    path: Option<PathBuf>,
    #[serde(default = "two")]
    players: usize,
    #[serde(default = "one")]
    states: usize,
    #[serde(default = "one")]
    horizon: usize,
    #[serde(default)]
    actions: Vec<usize>,
    #[serde(default)]
    seed: u64,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AlgorithmSpec {
    /// cce | ce | nash-ca | ucbvi
    kind: String,
    #[serde(default = "default_episodes")]
    episodes: usize,
    /// nash-ca target gap
    #[serde(default = "default_eps")]
    eps: f64,
    #[serde(default = "default_c")]
    c: f64,
    #[serde(default = "default_p")]
    p: f64,
    iota: Option<f64>,
}

fn default_episodes() -> usize {
    1000
}

fn default_eps() -> f64 {
    0.15
}

fn default_c() -> f64 {
    0.5
}

fn default_p() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunSpec {
    seeds: Vec<u64>,
    out_dir: PathBuf,
    /// evaluate exact certified gaps every this many episodes; 0 = final only
    #[serde(default)]
    cadence: usize,
    #[serde(default)]
    save_history: bool,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(&a),
        Cmd::Run(a) => cmd_run(&a),
        Cmd::Eval(a) => cmd_eval(&a),
        Cmd::KlCheck(a) => cmd_kl(&a),
        Cmd::Net(a) => cmd_net(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(Error::NumericalFailure(_)) => 3,
        _ => 2,
    }
}

/// Game file payload: the tensors plus, for hard instances, the good set.
#[derive(Serialize, Deserialize)]
struct GameFile {
    #[serde(flatten)]
    game: GameJson,
    #[serde(rename = "D", default, skip_serializing_if = "Vec::is_empty")]
    good_set: Vec<usize>,
}

fn load_game(path: &Path) -> anyhow::Result<MarkovGame> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    let file: GameFile = serde_json::from_str(&text)?;
    Ok(MarkovGame::try_from(file.game)?)
}

fn cmd_gen(a: &GenArgs) -> anyhow::Result<()> {
    let file = match a.kind.as_str() {
        "random" | "random-cooperative" => {
            let actions: Vec<usize> = a
                .actions
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| anyhow::anyhow!("bad --actions: {e}"))?;
            if actions.len() != a.players {
                anyhow::bail!("--actions must list one count per player");
            }
            let mut rng = StreamSeed::new(a.seed).labeled("gen").rng();
            let game = if a.kind == "random-cooperative" || a.cooperative {
                random_cooperative_game(a.players, a.horizon, a.states, &actions, &mut rng)
            } else {
                random_game(a.players, a.horizon, a.states, &actions, &mut rng)
            };
            GameFile { game: GameJson::from(&game), good_set: Vec::new() }
        }
        "hard-one-step" | "hard-mdp" => {
            let net = if a.k == 1 {
                hamming_one_net(a.players)
            } else {
                block_one_net(a.players, a.k)?
            };
            let hard = build_hard_game(a.players, 2 * a.k.max(1), &net, a.eps)?;
            if hard.small_m_warning() {
                eprintln!(
                    "warning: {} players is below the scale the hard family is designed for",
                    a.players
                );
            }
            let good_set: Vec<usize> = hard.good_set.iter().copied().collect();
            let game = if a.kind == "hard-mdp" {
                embed_one_step_game(&hard, a.horizon, hard.eps)?
            } else {
                hard.to_markov_game()
            };
            GameFile { game: GameJson::from(&game), good_set }
        }
        other => anyhow::bail!("unknown generator kind {other}"),
    };
    let json = serde_json::to_string_pretty(&file)?;
    write_atomic(&a.out, json.as_bytes())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn build_game(spec: &GameSpec) -> anyhow::Result<(MarkovGame, String)> {
    match spec.source.as_str() {
        "file" => {
            let path = spec
                .path
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("game.source = \"file\" needs game.path"))?;
            let bytes = std::fs::read(path)?;
            let hash = hex_digest(&bytes);
            let file: GameFile = serde_json::from_slice(&bytes)?;
            Ok((MarkovGame::try_from(file.game)?, hash))
        }
        "random" | "random-cooperative" => {
            if spec.actions.len() != spec.players {
                anyhow::bail!("game.actions must list one count per player");
            }
            let mut rng = StreamSeed::new(spec.seed).labeled("gen").rng();
            let game = if spec.source == "random-cooperative" {
                random_cooperative_game(
                    spec.players,
                    spec.horizon,
                    spec.states,
                    &spec.actions,
                    &mut rng,
                )
            } else {
                random_game(spec.players, spec.horizon, spec.states, &spec.actions, &mut rng)
            };
            let hash = hex_digest(game.to_json_string().as_bytes());
            Ok((game, hash))
        }
        other => anyhow::bail!("unknown game source {other}"),
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn float(x: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{x}")
}

fn cmd_run(a: &RunArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", a.config.display()))?;
    let config: Config = toml::from_str(&text)?;
    if config.run.seeds.is_empty() {
        anyhow::bail!("run.seeds must not be empty");
    }
    if config.run.cadence != 0 && config.algorithm.episodes % config.run.cadence != 0 {
        anyhow::bail!("run.cadence must divide algorithm.episodes");
    }
    let (game, game_hash) = build_game(&config.game)?;
    std::fs::create_dir_all(&config.run.out_dir)?;
    let manifest = serde_json::json!({
        "version": 1,
        "config": config,
        "game_hash": game_hash,
    });
    write_atomic(
        &config.run.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    for &seed in &config.run.seeds {
        let dir = config.run.out_dir.join(format!("seed-{seed}"));
        std::fs::create_dir_all(&dir)?;
        match config.algorithm.kind.as_str() {
            "cce" | "ce" => run_v_learning_seed(&config, &game, seed, &dir)?,
            "nash-ca" => run_nash_ca_seed(&config, &game, seed, &dir)?,
            "ucbvi" => run_ucbvi_seed(&config, &game, seed, &dir)?,
            other => anyhow::bail!("unknown algorithm kind {other}"),
        }
    }
    write_atomic(&config.run.out_dir.join("plot.gp"), gnuplot_script(&config).as_bytes())?;
    println!("run complete: {}", config.run.out_dir.display());
    Ok(())
}

fn learner_cfg(config: &Config) -> LearnerConfig {
    LearnerConfig {
        episodes: config.algorithm.episodes,
        c: config.algorithm.c,
        p: config.algorithm.p,
        eps: 0.05,
        iota_override: config.algorithm.iota,
    }
}

/// History truncated to its first `episodes` episodes; used for cadence
/// evaluations.
fn history_prefix(history: &RunHistory, episodes: usize) -> RunHistory {
    let mut out = history.clone();
    out.episodes = episodes;
    out.value_snapshots.truncate(episodes);
    for per_s in &mut out.visits {
        for recs in per_s {
            recs.retain(|r| r.episode < episodes);
        }
    }
    out
}

fn certified_gaps(
    game: &MarkovGame,
    history: &RunHistory,
    with_modification: bool,
) -> anyhow::Result<Vec<PlayerGaps>> {
    let value = certified_exact_value(game, history)?;
    let mut players = Vec::with_capacity(game.num_players());
    for i in 0..game.num_players() {
        let br = certified_omniscient_deviation(game, history, i, DeviationMode::BestResponse)?;
        let bm = if with_modification {
            Some(certified_omniscient_deviation(
                game,
                history,
                i,
                DeviationMode::BestModification,
            )?)
        } else {
            None
        };
        players.push(PlayerGaps {
            player: i,
            value: value[i],
            best_response: br,
            best_modification: bm,
            cce_gap: br - value[i],
            ce_gap: bm.map(|b| b - value[i]),
        });
    }
    Ok(players)
}

fn run_v_learning_seed(
    config: &Config,
    game: &MarkovGame,
    seed: u64,
    dir: &Path,
) -> anyhow::Result<()> {
    let kind = if config.algorithm.kind == "cce" { LearnerKind::Cce } else { LearnerKind::Ce };
    let cfg = learner_cfg(config);
    let history = run_v_learning(kind, game, &cfg, StreamSeed::new(seed))?;
    let m = game.num_players();
    let cadence = config.run.cadence;
    let mut cadence_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    if cadence != 0 {
        for k in (cadence..=cfg.episodes).step_by(cadence) {
            let prefix = history_prefix(&history, k);
            let gaps = certified_gaps(game, &prefix, kind == LearnerKind::Ce)?;
            cadence_rows.push((k, gaps.iter().map(|g| g.cce_gap).collect()));
        }
    }
    let mut csv = String::new();
    csv.push_str("episode");
    for i in 0..m {
        let _ = write!(csv, ",confidence_gap_{i}");
    }
    if cadence != 0 {
        for i in 0..m {
            let _ = write!(csv, ",certified_gap_{i}");
        }
    }
    csv.push('\n');
    let mut running = vec![0.0f64; m];
    let mut cadence_iter = cadence_rows.iter().peekable();
    for (k, snap) in history.value_snapshots.iter().enumerate() {
        let episode = k + 1;
        let _ = write!(csv, "{episode}");
        for (i, &(up, low)) in snap.iter().enumerate() {
            running[i] += up - low;
            let _ = write!(csv, ",{}", float(running[i] / episode as f64));
        }
        if cadence != 0 {
            if let Some((ck, gaps)) = cadence_iter.peek() {
                if *ck == episode {
                    for g in gaps {
                        let _ = write!(csv, ",{}", float(*g));
                    }
                    cadence_iter.next();
                } else {
                    for _ in 0..m {
                        csv.push(',');
                    }
                }
            } else {
                for _ in 0..m {
                    csv.push(',');
                }
            }
        }
        csv.push('\n');
    }
    write_atomic(&dir.join("curves.csv"), csv.as_bytes())?;
    let report = GapReport {
        method: GapMethod::Omniscient,
        players: certified_gaps(game, &history, kind == LearnerKind::Ce)?,
    };
    write_atomic(&dir.join("report.json"), report.to_json_string().as_bytes())?;
    if config.run.save_history {
        write_atomic(&dir.join("history.json"), history.to_json_string().as_bytes())?;
    }
    Ok(())
}

fn run_nash_ca_seed(
    config: &Config,
    game: &MarkovGame,
    seed: u64,
    dir: &Path,
) -> anyhow::Result<()> {
    let mut cfg = NashCaConfig::new(config.algorithm.eps);
    cfg.c = config.algorithm.c;
    cfg.p = config.algorithm.p;
    cfg.iota_override = config.algorithm.iota;
    let out = nash_ca(game, &cfg, StreamSeed::new(seed))?;
    let mut csv =
        String::from("iteration,player,delta,value_before,value_after,accepted,episodes\n");
    for it in &out.audit {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            it.iteration,
            it.player,
            float(it.delta),
            float(it.value_before),
            float(it.value_after),
            it.accepted,
            it.episodes_consumed
        );
    }
    write_atomic(&dir.join("curves.csv"), csv.as_bytes())?;
    let base = exact_value(game, &out.policy)?;
    let mut players = Vec::new();
    for i in 0..game.num_players() {
        let (br, _) = best_response_value(game, &out.policy, i)?;
        players.push(PlayerGaps {
            player: i,
            value: base[i],
            best_response: br,
            best_modification: None,
            cce_gap: br - base[i],
            ce_gap: None,
        });
    }
    let report = GapReport { method: GapMethod::ExactDp, players };
    write_atomic(&dir.join("report.json"), report.to_json_string().as_bytes())?;
    let summary = serde_json::json!({
        "certified": out.certified,
        "iterations": out.audit.len(),
        "episodes_consumed": out.episodes_consumed,
        "ne_gap": ne_gap(game, &out.policy)?,
        "policy_table": out.table,
    });
    write_atomic(
        &dir.join("policy.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok(())
}

fn run_ucbvi_seed(
    config: &Config,
    game: &MarkovGame,
    seed: u64,
    dir: &Path,
) -> anyhow::Result<()> {
    if game.num_players() != 1 {
        anyhow::bail!("ucbvi needs a single-player game");
    }
    let uniform = MarkovProductPolicy::uniform(game);
    let view = SamplingMdpView::new(game, &uniform, 0)?;
    let episodes = config.algorithm.episodes;
    let mut params = UcbviParams::new(
        game.horizon(),
        game.num_states(),
        game.action_counts()[0],
        episodes,
        config.algorithm.p,
    );
    params.c = config.algorithm.c;
    if let Some(iota) = config.algorithm.iota {
        params.iota = iota;
    }
    let mut rng = StreamSeed::new(seed).labeled("ucbvi").rng();
    let run = ucbvi_uplow(&view, episodes, &params, &mut rng)?;
    let mut csv = String::from("episode,upper,lower\n");
    for (k, &(up, low)) in run.snapshots.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{}", k + 1, float(up), float(low));
    }
    write_atomic(&dir.join("curves.csv"), csv.as_bytes())?;
    let table: Vec<Vec<Vec<usize>>> =
        run.policy.iter().map(|per_s| vec![per_s.clone()]).collect();
    let learned = MarkovProductPolicy::pure(game, &table)?;
    let value = exact_value(game, &learned)?[0];
    let (optimum, _) = best_response_value(game, &uniform, 0)?;
    let report = GapReport {
        method: GapMethod::ExactDp,
        players: vec![PlayerGaps {
            player: 0,
            value,
            best_response: optimum,
            best_modification: None,
            cce_gap: optimum - value,
            ce_gap: None,
        }],
    };
    write_atomic(&dir.join("report.json"), report.to_json_string().as_bytes())?;
    Ok(())
}

fn gnuplot_script(config: &Config) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'episode'\n",
    );
    match config.algorithm.kind.as_str() {
        "ucbvi" => {
            s.push_str("set ylabel 'value bracket'\n");
        }
        "nash-ca" => {
            s.push_str("set xlabel 'iteration'\nset ylabel 'improvement'\n");
        }
        _ => {
            s.push_str("set ylabel 'mean confidence gap'\nset logscale xy\n");
        }
    }
    let seed = config.run.seeds.first().copied().unwrap_or(0);
    let _ = writeln!(s, "plot 'seed-{seed}/curves.csv' using 1:2 with lines");
    s
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let game = load_game(&a.game)?;
    let text = std::fs::read_to_string(&a.history)?;
    let history = RunHistory::from_json_str(&text)?;
    let report =
        GapReport { method: GapMethod::Omniscient, players: certified_gaps(&game, &history, true)? };
    write_atomic(&a.out, report.to_json_string().as_bytes())?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn parse_means(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad mean: {e}")))
        .collect()
}

fn cmd_kl(a: &KlArgs) -> anyhow::Result<()> {
    let p = parse_means(&a.p)?;
    let q = parse_means(&a.q)?;
    if p.len() != q.len() || p.is_empty() {
        anyhow::bail!("--p and --q need the same nonzero number of means");
    }
    let arms = p.len();
    let salt = a.salt;
    let rule = move |seed: u64, hist: &[(usize, u8)]| -> usize {
        let mut x = seed ^ salt;
        for &(arm, r) in hist {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(((arm as u64) << 8) | r as u64);
        }
        (x >> 33) as usize % arms
    };
    let (lhs, rhs) = kl_decomposition_check(&p, &q, a.rounds, a.seeds, rule)?;
    let out = serde_json::json!({
        "trajectory_kl": lhs,
        "per_arm_decomposition": rhs,
        "difference": lhs - rhs,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_net(a: &NetArgs) -> anyhow::Result<()> {
    let net = if a.k == 1 { hamming_one_net(a.m) } else { block_one_net(a.m, a.k)? };
    let radix = 2 * a.k;
    if a.verify && !verify_one_net(a.m, radix, &net) {
        return Err(Error::NumericalFailure("net does not cover the cube".into()).into());
    }
    let out = serde_json::json!({
        "m": a.m,
        "radix": radix,
        "size": net.len(),
        "verified": a.verify,
        "points": net,
    });
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}
