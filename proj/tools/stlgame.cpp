// stlgame: train, evaluate, and inspect robust STL game policies.
//
// Subcommands: train, monitor, evaluate, exploitability, rollout.
// Exit codes: 0 success/satisfied, 1 negative verdict, 2 usage/config
// error, 3 internal error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "stlgame/fsp.hpp"
#include "stlgame/io.hpp"
#include "stlgame/parser.hpp"
#include "stlgame/rollout.hpp"
#include "stlgame/scenarios.hpp"
#include "stlgame/semantics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stlgame;

namespace {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string build_hash() {
  try {
    return sha256_hex(io::read_file("/proc/self/exe"));
  } catch (...) {
    return "unknown";
  }
}

std::string iso_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

// Written before any computation; sufficient to reproduce the run.
void write_manifest(const fs::path& out_dir, const std::string& command,
                    const json& config_snapshot, std::uint64_t seed, int workers) {
  fs::create_directories(out_dir);
  json m{{"command", command},
         {"config", config_snapshot},
         {"seed", seed},
         {"workers", workers},
         {"build_hash", build_hash()},
         {"timestamp", iso_now()},
         {"output_dir", out_dir.string()}};
  io::write_file_atomic(out_dir / "manifest.json", m.dump(2) + "\n");
}

scenario::GameConfig config_from_snapshot(const json& j) {
  scenario::GameConfig g = scenario::make_game(j.at("scenario").get<std::string>());
  g.T = j.at("T").get<int>();
  g.dt = j.at("dt").get<double>();
  g.d_min = j.at("d_min").get<double>();
  g.formula_text = j.at("formula").get<std::string>();
  for (const auto& [name, rj] : j.at("regions").items()) {
    scenario::Region r;
    r.kind = static_cast<scenario::Region::Kind>(rj.at("kind").get<int>());
    r.radius = rj.at("radius").get<double>();
    r.center = rj.at("center").get<std::vector<double>>();
    r.lo = rj.at("lo").get<std::vector<double>>();
    r.hi = rj.at("hi").get<std::vector<double>>();
    r.axis = rj.at("axis").get<int>();
    r.offset = rj.at("offset").get<double>();
    r.sign = rj.at("sign").get<double>();
    g.regions[name] = r;
  }
  const json& o = j.at("optim");
  g.optim.epochs = o.at("epochs").get<int>();
  g.optim.opp_samples = o.at("opponent_samples").get<int>();
  g.optim.learning_rate = o.at("learning_rate").get<double>();
  g.optim.tau = o.at("tau").get<double>();
  g.optim.tau_anneal = o.at("tau_anneal").get<double>();
  g.optim.hidden = o.at("hidden").get<int>();
  g.optim.eval_episodes = o.at("eval_episodes").get<int>();
  g.optim.exploit_epochs = o.at("exploit_epochs").get<int>();
  scenario::rebuild_game(g);
  return g;
}

// A checkpoint path points at an iter_k directory; the run root holds the
// config snapshot.
scenario::GameConfig config_for_checkpoint(const fs::path& iter_dir) {
  fs::path cfg = iter_dir.parent_path() / "config.json";
  return config_from_snapshot(json::parse(io::read_file(cfg)));
}

void append_jsonl(const fs::path& path, const json& record) {
  std::ofstream out(path, std::ios::app);
  out << record.dump() << "\n";
}

std::string fmt_cell(const fsp::CellStats& c) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%+.3f +- %.3f @ %5.1f%%", c.mean, c.stddev,
                100.0 * c.sat_rate);
  return buf;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              int iterations, std::uint64_t seed, int workers,
              const std::string& resume, const std::string& out,
              int exploit_every, int exploit_episodes) {
  fs::path out_dir = out.empty() ? fs::path("out/train") : fs::path(out);

  scenario::GameConfig game;
  std::optional<fsp::FspState> resume_state;
  if (!resume.empty()) {
    resume_state = fsp::load_checkpoint(resume);
    game = config_for_checkpoint(resume);
    out_dir = fs::path(resume).parent_path();
    seed = resume_state->master_seed;
  } else {
    game = io::load_config(config_path, overrides);
  }
  game.optim.workers = workers;
  json snapshot = io::config_snapshot(game);
  write_manifest(out_dir, "train", snapshot, seed, workers);
  io::write_file_atomic(out_dir / "config.json", snapshot.dump(2) + "\n");

  fsp::Budget budget{game.optim.epochs, game.optim.opp_samples};
  std::vector<double> exploit_x, exploit_y;

  auto on_iter = [&](const fsp::FspState& st) {
    const fsp::IterationRecord& rec = st.log.back();
    json metric{{"iteration", rec.iteration},
                {"br_return_ego", rec.br_return_ego},
                {"br_return_opp", rec.br_return_opp},
                {"ego_components", st.ego.components.size()},
                {"opp_components", st.opp.components.size()}};
    if (exploit_every > 0 && rec.iteration % exploit_every == 0) {
      fsp::Budget eb{game.optim.exploit_epochs, game.optim.opp_samples};
      fsp::ExploitabilityResult ex = fsp::exploitability(
          game, st.ego, st.opp, eb, exploit_episodes,
          derive_seed(st.master_seed, 0xE8, rec.iteration));
      metric["exploitability"] = ex.clamped;
      metric["exploitability_raw"] = ex.raw;
      exploit_x.push_back(rec.iteration);
      exploit_y.push_back(ex.clamped);
      io::write_file_atomic(out_dir / "exploitability.svg",
                            io::curve_svg(exploit_x, exploit_y, "iteration",
                                          "exploitability"));
    }
    append_jsonl(out_dir / "metrics.jsonl", metric);
    append_jsonl(out_dir / "timing.jsonl",
                 json{{"iteration", rec.iteration}, {"wall_seconds", rec.wall_seconds}});
    std::fprintf(stderr, "[iter %d] br_ego=%.4f br_opp=%.4f (%.1fs)\n", rec.iteration,
                 rec.br_return_ego, rec.br_return_opp, rec.wall_seconds);
  };

  fsp::run_fsp(game, iterations, budget, seed, out_dir, resume_state, on_iter);
  std::printf("checkpoints: %s\n", (out_dir / ("iter_" + std::to_string(iterations))).string().c_str());
  return 0;
}

int cmd_monitor(const std::string& formula_arg, const std::string& trace_path,
                const std::string& scenario_name, double tau, std::uint64_t seed,
                int workers, const std::string& out) {
  scenario::GameConfig game = scenario::make_game(scenario_name);
  std::string text = formula_arg;
  if (!formula_arg.empty() && formula_arg[0] == '@')
    text = io::read_file(formula_arg.substr(1));
  stl::FormulaPtr phi = stl::parse_formula(text, game.predicates);

  if (!out.empty())
    write_manifest(out, "monitor", json{{"formula", text}, {"trace", trace_path}},
                   seed, workers);

  stl::Trace trace = io::read_trace_csv(trace_path, game);
  bool sat = stl::eval_boolean(*phi, trace, game.predicates, 0);
  double rho = stl::robustness(*phi, trace, game.predicates, 0);
  std::printf("verdict: %s\n", sat ? "satisfied" : "violated");
  std::printf("robustness: %s\n", format_double(rho).c_str());
  if (tau > 0.0) {
    ad::Tape tape;
    stl::TapeTrace tt;
    for (const auto& s : trace.states) {
      std::vector<ad::Value> row;
      for (double v : s) row.push_back(tape.constant(v));
      tt.push_back(std::move(row));
    }
    stl::FormulaPtr simplified = stl::simplify(phi);
    double smooth =
        stl::smooth_robustness(*simplified, tape, tt, game.predicates, 0, tau).value();
    std::printf("smooth_robustness(tau=%g): %s\n", tau, format_double(smooth).c_str());
    std::printf("soft_error_bound: %s\n",
                format_double(stl::soft_error_bound(*simplified, tau)).c_str());
  }
  return sat ? 0 : 1;
}

policy::MixturePolicy load_opponent(const std::string& spec, const fsp::FspState& ck) {
  if (spec == "nash") return ck.opp;
  fs::path p(spec);
  if (fs::is_directory(p)) {
    policy::MixturePolicy mix;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw io::IoError("empty opponent set directory: " + spec);
    for (const auto& f : files)
      mix.components.push_back(std::make_shared<policy::PolicyParams>(io::load_policy(f)));
    mix.weights.assign(mix.components.size(), 1.0 / mix.components.size());
    return mix;
  }
  return policy::single_policy_mixture(io::load_policy(p));
}

int cmd_evaluate(const std::string& checkpoint, const std::string& opponent,
                 int episodes, const std::string& heldout_seen,
                 const std::string& heldout_unseen, int br_epochs,
                 std::uint64_t seed, int workers, const std::string& out) {
  fsp::FspState ck = fsp::load_checkpoint(checkpoint);
  scenario::GameConfig game = config_for_checkpoint(checkpoint);
  game.optim.workers = workers;
  fs::path out_dir = out.empty() ? fs::path(checkpoint) / "evaluate" : fs::path(out);
  write_manifest(out_dir, "evaluate", io::config_snapshot(game), seed, workers);

  if (!heldout_seen.empty() || !heldout_unseen.empty()) {
    auto load_set = [](const std::string& dir) {
      std::vector<std::shared_ptr<const policy::PolicyParams>> set;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json" &&
            e.path().filename().string().find("mixture") == std::string::npos)
          files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files)
        set.push_back(std::make_shared<policy::PolicyParams>(io::load_policy(f)));
      return set;
    };
    auto seen = load_set(heldout_seen);
    auto unseen = load_set(heldout_unseen);
    if (unseen.empty()) throw io::IoError("unseen set directory is empty");
    fsp::Budget budget{br_epochs, game.optim.opp_samples};
    fsp::HeldoutResult r =
        fsp::heldout_experiment(game, ck.ego, seen, unseen, budget, episodes, seed);
    json rec{{"nash_vs_seen", {{"mean", r.nash_vs_seen.mean}, {"std", r.nash_vs_seen.stddev}, {"sat", r.nash_vs_seen.sat_rate}}},
             {"br_vs_seen", {{"mean", r.br_vs_seen.mean}, {"std", r.br_vs_seen.stddev}, {"sat", r.br_vs_seen.sat_rate}}},
             {"nash_vs_unseen", {{"mean", r.nash_vs_unseen.mean}, {"std", r.nash_vs_unseen.stddev}, {"sat", r.nash_vs_unseen.sat_rate}}},
             {"br_vs_unseen", {{"mean", r.br_vs_unseen.mean}, {"std", r.br_vs_unseen.stddev}, {"sat", r.br_vs_unseen.sat_rate}}}};
    append_jsonl(out_dir / "heldout.jsonl", rec);
    std::printf("policy        vs seen                   vs unseen\n");
    std::printf("Nash   %s    %s\n", fmt_cell(r.nash_vs_seen).c_str(),
                fmt_cell(r.nash_vs_unseen).c_str());
    std::printf("BR     %s    %s\n", fmt_cell(r.br_vs_seen).c_str(),
                fmt_cell(r.br_vs_unseen).c_str());
    return 0;
  }

  policy::MixturePolicy opp = load_opponent(opponent, ck);
  fsp::ReturnEstimate est = fsp::expected_return(game, ck.ego, opp, episodes, seed);
  json rec{{"mean", est.mean},   {"std", est.stddev},       {"sat_rate", est.sat_rate},
           {"episodes", est.count}, {"failures", est.failures}};
  append_jsonl(out_dir / "evaluate.jsonl", rec);
  std::printf("robustness: %s +- %s\n", format_double(est.mean).c_str(),
              format_double(est.stddev).c_str());
  std::printf("satisfaction_rate: %s\n", format_double(est.sat_rate).c_str());
  return 0;
}

int cmd_exploitability(const std::string& checkpoint, int br_epochs, int episodes,
                       std::uint64_t seed, int workers, const std::string& out) {
  if (br_epochs <= 0 || episodes <= 0)
    throw scenario::ScenarioError("exploitability: budget and episodes must be positive");
  fsp::FspState ck = fsp::load_checkpoint(checkpoint);
  scenario::GameConfig game = config_for_checkpoint(checkpoint);
  game.optim.workers = workers;
  fs::path run_dir = fs::path(checkpoint).parent_path();
  if (!out.empty()) run_dir = out;
  write_manifest(run_dir / "exploitability_runs", "exploitability",
                 io::config_snapshot(game), seed, workers);

  fsp::Budget budget{br_epochs, game.optim.opp_samples};
  fsp::ExploitabilityResult ex =
      fsp::exploitability(game, ck.ego, ck.opp, budget, episodes, seed);
  json rec{{"iteration", ck.iteration},
           {"exploitability", ex.clamped},
           {"raw", ex.raw},
           {"gain_ego", ex.gain_ego},
           {"gain_opp", ex.gain_opp},
           {"per_init", ex.per_init},
           {"per_init_mean", ex.per_init_mean},
           {"per_init_std", ex.per_init_std}};
  append_jsonl(run_dir / "exploitability.jsonl", rec);
  std::printf("%s\n", rec.dump().c_str());

  // regenerate the curve from all recorded points
  std::ifstream in(run_dir / "exploitability.jsonl");
  std::vector<double> xs, ys;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    xs.push_back(j.at("iteration").get<double>());
    ys.push_back(j.at("exploitability").get<double>());
  }
  if (xs.size() > 1)
    io::write_file_atomic(run_dir / "exploitability.svg",
                          io::curve_svg(xs, ys, "iteration", "exploitability"));
  return 0;
}

int cmd_rollout(const std::string& checkpoint, int init_index, const std::string& out_csv,
                bool svg, std::uint64_t seed, int workers, const std::string& out) {
  fsp::FspState ck = fsp::load_checkpoint(checkpoint);
  scenario::GameConfig game = config_for_checkpoint(checkpoint);
  game.optim.workers = workers;
  if (init_index < 0 || init_index >= static_cast<int>(game.initial_conditions.size()))
    throw scenario::ScenarioError("invalid initial-condition index " +
                                  std::to_string(init_index));
  fs::path out_dir = out.empty() ? fs::path(checkpoint) / "rollouts" : fs::path(out);
  write_manifest(out_dir, "rollout", io::config_snapshot(game), seed, workers);

  Rng rng(derive_seed(seed, 0x501));
  std::size_t ce = policy::mixture_sample(ck.ego, rng);
  std::size_t co = policy::mixture_sample(ck.opp, rng);
  sim::RolloutResult r = sim::rollout_plain(game, *ck.ego.components[ce],
                                            *ck.opp.components[co],
                                            game.joint_initial(init_index), game.T);
  fs::path csv = out_csv.empty() ? out_dir / "trace.csv" : fs::path(out_csv);
  io::write_trace_csv(r, game, csv);
  std::printf("trace: %s\n", csv.string().c_str());
  if (svg) {
    fs::path svg_path = csv;
    svg_path.replace_extension(".svg");
    io::write_file_atomic(svg_path, io::trajectory_svg(r, game));
    std::printf("svg: %s\n", svg_path.string().c_str());
  }
  double rho = stl::robustness(*game.formula, r.trace, game.predicates, 0);
  std::printf("robustness: %s\n", format_double(rho).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STL zero-sum game policy synthesis via fictitious self-play"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int workers = static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  std::string out;
  app.add_option("--seed", seed, "master RNG seed")->envname("STLGAME_SEED");
  app.add_option("--workers", workers, "worker threads")->envname("STLGAME_WORKERS");
  app.add_option("--out", out, "output directory")->envname("STLGAME_OUT");

  // train
  auto* train = app.add_subcommand("train", "run fictitious self-play");
  std::string config_path, resume;
  std::vector<std::string> overrides;
  int iterations = 10, exploit_every = 0, exploit_episodes = 30;
  train->add_option("config", config_path, "scenario config file");
  train->add_option("--iterations", iterations, "FSP iterations");
  train->add_option("--resume", resume, "resume from an iter_k checkpoint directory");
  train->add_option("--override", overrides, "section.key=value config override");
  train->add_option("--exploit-every", exploit_every,
                    "compute exploitability every N iterations (0 = off)");
  train->add_option("--exploit-episodes", exploit_episodes,
                    "episodes per exploitability estimate");

  // monitor
  auto* monitor = app.add_subcommand("monitor", "evaluate a formula on a trace");
  std::string formula_arg, trace_path, scenario_name = "vehicles";
  double tau = 0.0;
  monitor->add_option("formula", formula_arg, "formula text, or @file")->required();
  monitor->add_option("trace", trace_path, "trace CSV")->required();
  monitor->add_option("--scenario", scenario_name, "predicate table to use");
  monitor->add_option("--tau", tau, "also report smooth robustness at this temperature");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "expected return / held-out table");
  std::string checkpoint, opponent = "nash", heldout_seen, heldout_unseen;
  int episodes = 150, br_epochs = 200;
  evaluate->add_option("checkpoint", checkpoint, "iter_k checkpoint directory")->required();
  evaluate->add_option("--opponent", opponent, "nash | policy file | set directory");
  evaluate->add_option("--episodes", episodes, "evaluation episodes");
  evaluate->add_option("--heldout-seen", heldout_seen, "seen opponent policy directory");
  evaluate->add_option("--heldout-unseen", heldout_unseen, "unseen opponent policy directory");
  evaluate->add_option("--br-epochs", br_epochs, "BR training epochs for held-out");

  // exploitability
  auto* exploit = app.add_subcommand("exploitability", "exploitability of a checkpoint");
  std::string ck_exp;
  int exp_epochs = 200, exp_episodes = 30;
  exploit->add_option("checkpoint", ck_exp, "iter_k checkpoint directory")->required();
  exploit->add_option("--budget", exp_epochs, "BR training epochs");
  exploit->add_option("--episodes", exp_episodes, "episodes per return estimate");

  // rollout
  auto* roll = app.add_subcommand("rollout", "roll one episode and export trace");
  std::string ck_roll, out_csv;
  int init_index = 0;
  bool svg = false;
  roll->add_option("checkpoint", ck_roll, "iter_k checkpoint directory")->required();
  roll->add_option("--init", init_index, "initial-condition index");
  roll->add_option("--out-csv", out_csv, "trace CSV path");
  roll->add_flag("--svg", svg, "also write an SVG rendering");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      if (config_path.empty() && resume.empty())
        throw scenario::ScenarioError("train: need a config file or --resume");
      return cmd_train(config_path, overrides, iterations, seed, workers, resume, out,
                       exploit_every, exploit_episodes);
    }
    if (*monitor)
      return cmd_monitor(formula_arg, trace_path, scenario_name, tau, seed, workers, out);
    if (*evaluate)
      return cmd_evaluate(checkpoint, opponent, episodes, heldout_seen, heldout_unseen,
                          br_epochs, seed, workers, out);
    if (*exploit)
      return cmd_exploitability(ck_exp, exp_epochs, exp_episodes, seed, workers, out);
    if (*roll)
      return cmd_rollout(ck_roll, init_index, out_csv, svg, seed, workers, out);
    return 2;
  } catch (const stl::FormulaError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const scenario::ScenarioError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const io::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const fsp::FspError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
}
