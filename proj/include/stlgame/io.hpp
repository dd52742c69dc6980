#pragma once

// File formats: policy/mixture JSON containers, trace CSV, INI-style
// scenario configs with key overrides, SVG trajectory plots, and run
// manifests.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stlgame/policy.hpp"
#include "stlgame/rollout.hpp"
#include "stlgame/scenarios.hpp"
#include "stlgame/util.hpp"

namespace stlgame::io {

namespace fs = std::filesystem;
using nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kPolicyFileVersion = 1;

// --- policy / mixture files -------------------------------------------------

inline json policy_to_json(const policy::PolicyParams& p) {
  return json{{"version", kPolicyFileVersion},
              {"obs_dim", p.obs_dim},
              {"hidden", p.hidden},
              {"act_dim", p.act_dim},
              {"action_bound", p.action_bound},
              {"weights", p.weights}};
}

inline policy::PolicyParams policy_from_json(const json& j) {
  if (j.at("version").get<int>() != kPolicyFileVersion)
    throw IoError("unsupported policy file version");
  policy::PolicyParams p;
  p.obs_dim = j.at("obs_dim").get<int>();
  p.hidden = j.at("hidden").get<int>();
  p.act_dim = j.at("act_dim").get<int>();
  p.action_bound = j.at("action_bound").get<std::vector<double>>();
  p.weights = j.at("weights").get<std::vector<double>>();
  if (p.weights.size() != policy::PolicyParams::param_count(p.obs_dim, p.hidden, p.act_dim))
    throw IoError("policy file: weight count inconsistent with layer sizes");
  return p;
}

// Atomic write: temp file in the same directory, then rename.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_policy(const policy::PolicyParams& p, const fs::path& path) {
  write_file_atomic(path, policy_to_json(p).dump(2) + "\n");
}

inline policy::PolicyParams load_policy(const fs::path& path) {
  return policy_from_json(json::parse(read_file(path)));
}

// Mixture file references component policy files relative to its own
// directory.
inline void save_mixture(const policy::MixturePolicy& mix, const fs::path& path,
                         const std::string& stem) {
  mix.validate();
  fs::path dir = path.parent_path();
  std::vector<std::string> refs;
  for (std::size_t i = 0; i < mix.components.size(); ++i) {
    std::string name = stem + "_" + std::to_string(i) + ".json";
    save_policy(*mix.components[i], dir / name);
    refs.push_back(name);
  }
  json j{{"version", kPolicyFileVersion}, {"components", refs}, {"weights", mix.weights}};
  write_file_atomic(path, j.dump(2) + "\n");
}

inline policy::MixturePolicy load_mixture(const fs::path& path) {
  json j = json::parse(read_file(path));
  if (j.at("version").get<int>() != kPolicyFileVersion)
    throw IoError("unsupported mixture file version");
  policy::MixturePolicy mix;
  for (const auto& ref : j.at("components"))
    mix.components.push_back(std::make_shared<policy::PolicyParams>(
        load_policy(path.parent_path() / ref.get<std::string>())));
  mix.weights = j.at("weights").get<std::vector<double>>();
  mix.validate();
  return mix;
}

// --- trace CSV ----------------------------------------------------------------

// Header: t, agent, state components..., action components...; one row per
// (timestep, agent). Action fields are empty on the final row.
inline void write_trace_csv(const sim::RolloutResult& r, const scenario::GameConfig& g,
                            const fs::path& path) {
  std::ostringstream out;
  int sd = g.agent_dim();
  int ad = g.action_dim();
  out << "t,agent";
  for (int i = 0; i < sd; ++i) out << ",s" << i;
  for (int i = 0; i < ad; ++i) out << ",a" << i;
  out << "\n";
  int T = r.trace.max_time();
  for (int t = 0; t <= T; ++t) {
    for (int agent = 0; agent < 2; ++agent) {
      out << t << "," << agent;
      int off = agent == 0 ? g.slices.ego_offset : g.slices.opp_offset;
      for (int i = 0; i < sd; ++i)
        out << "," << format_double(r.trace.states[t][off + i]);
      for (int i = 0; i < ad; ++i) {
        out << ",";
        if (t < T) out << format_double(r.actions[agent][t][i]);
      }
      out << "\n";
    }
  }
  write_file_atomic(path, out.str());
}

// Reads joint states back from a trace CSV (actions ignored).
inline stl::Trace read_trace_csv(const fs::path& path, const scenario::GameConfig& g) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trace file");
  int sd = g.agent_dim();
  std::map<int, std::vector<double>> rows;  // t -> joint state
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < static_cast<std::size_t>(2 + sd))
      throw IoError("trace row too short: " + line);
    int t = std::stoi(cells[0]);
    int agent = std::stoi(cells[1]);
    auto& joint = rows[t];
    joint.resize(2 * sd, 0.0);
    int off = agent == 0 ? g.slices.ego_offset : g.slices.opp_offset;
    for (int i = 0; i < sd; ++i) joint[off + i] = std::stod(cells[2 + i]);
  }
  stl::Trace trace;
  trace.dt = g.dt;
  for (auto& [t, joint] : rows) trace.states.push_back(std::move(joint));
  return trace;
}

// --- INI config ----------------------------------------------------------------

using IniSections = std::map<std::string, std::map<std::string, std::string>>;

inline IniSections parse_ini(const std::string& text) {
  IniSections out;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      out[section];
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw IoError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (section == "initial_conditions" && key == "pair") {
      // repeated key: collect with running index
      key = "pair" + std::to_string(out[section].size());
    }
    out[section][key] = val;
  }
  return out;
}

inline std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

inline scenario::Region parse_region(const std::string& spec) {
  std::istringstream in(spec);
  std::string kind;
  in >> kind;
  scenario::Region r;
  if (kind == "disc" || kind == "column") {
    r.kind = kind == "disc" ? scenario::Region::Kind::Disc
                            : scenario::Region::Kind::Column;
    double cx, cy;
    if (!(in >> cx >> cy >> r.radius)) throw IoError("region: expected disc CX CY R");
    r.center = {cx, cy};
  } else if (kind == "box") {
    std::vector<double> v;
    double x;
    while (in >> x) v.push_back(x);
    if (v.empty() || v.size() % 2 != 0) throw IoError("region: box needs lo.. hi.. pairs");
    std::size_t n = v.size() / 2;
    r.kind = scenario::Region::Kind::Box;
    r.lo.assign(v.begin(), v.begin() + n);
    r.hi.assign(v.begin() + n, v.end());
  } else if (kind == "halfspace") {
    r.kind = scenario::Region::Kind::HalfSpace;
    if (!(in >> r.axis >> r.offset >> r.sign))
      throw IoError("region: expected halfspace AXIS OFFSET SIGN");
  } else {
    throw IoError("unknown region kind: " + kind);
  }
  r.validate();
  return r;
}

inline void apply_config_sections(scenario::GameConfig& g, const IniSections& ini) {
  auto get = [&](const std::string& sec, const std::string& key) -> const std::string* {
    auto s = ini.find(sec);
    if (s == ini.end()) return nullptr;
    auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  };

  if (auto* v = get("scenario", "T")) g.T = std::stoi(*v);
  if (auto* v = get("scenario", "dt")) g.dt = std::stod(*v);
  if (auto* v = get("scenario", "d_min")) g.d_min = std::stod(*v);
  if (auto* v = get("scenario", "formula")) g.formula_text = *v;

  if (auto s = ini.find("regions"); s != ini.end())
    for (const auto& [name, spec] : s->second) g.regions[name] = parse_region(spec);

  if (auto* v = get("dynamics", "wheelbase")) g.vehicle.wheelbase = std::stod(*v);
  if (auto* v = get("dynamics", "steer_min")) g.vehicle.steer_min = std::stod(*v);
  if (auto* v = get("dynamics", "steer_max")) g.vehicle.steer_max = std::stod(*v);
  if (auto* v = get("dynamics", "v_min")) g.vehicle.v_min = std::stod(*v);
  if (auto* v = get("dynamics", "v_max")) g.vehicle.v_max = std::stod(*v);
  if (auto* v = get("dynamics", "steer_rate_max")) g.vehicle.steer_rate_max = std::stod(*v);
  if (auto* v = get("dynamics", "accel_max")) g.vehicle.accel_max = std::stod(*v);
  if (auto* v = get("dynamics", "roll_max")) g.drone.roll_max = std::stod(*v);
  if (auto* v = get("dynamics", "pitch_max")) g.drone.pitch_max = std::stod(*v);
  if (auto* v = get("dynamics", "thrust_min")) g.drone.thrust_min = std::stod(*v);
  if (auto* v = get("dynamics", "thrust_max")) g.drone.thrust_max = std::stod(*v);

  if (auto* v = get("optimization", "epochs")) g.optim.epochs = std::stoi(*v);
  if (auto* v = get("optimization", "opponent_samples")) g.optim.opp_samples = std::stoi(*v);
  if (auto* v = get("optimization", "learning_rate")) g.optim.learning_rate = std::stod(*v);
  if (auto* v = get("optimization", "tau")) g.optim.tau = std::stod(*v);
  if (auto* v = get("optimization", "tau_anneal")) g.optim.tau_anneal = std::stod(*v);
  if (auto* v = get("optimization", "tau_min")) g.optim.tau_min = std::stod(*v);
  if (auto* v = get("optimization", "hidden")) g.optim.hidden = std::stoi(*v);
  if (auto* v = get("optimization", "eval_episodes")) g.optim.eval_episodes = std::stoi(*v);
  if (auto* v = get("optimization", "exploit_epochs")) g.optim.exploit_epochs = std::stoi(*v);
  if (auto* v = get("optimization", "workers")) g.optim.workers = std::stoi(*v);

  if (auto s = ini.find("initial_conditions"); s != ini.end() && !s->second.empty()) {
    g.initial_conditions.clear();
    int pos = g.scenario == "drones" ? 3 : 0;
    int dim = g.scenario == "drones" ? 3 : 2;
    int sub = g.scenario == "drones" ? 6 : 5;
    for (const auto& [key, val] : s->second) {
      std::vector<double> v = parse_doubles(val);
      if (v.size() != static_cast<std::size_t>(2 * dim))
        throw IoError("initial_conditions pair: expected " + std::to_string(2 * dim) +
                      " numbers (ego position, opponent position)");
      std::vector<double> ego(sub, 0.0), opp(sub, 0.0);
      for (int i = 0; i < dim; ++i) {
        ego[pos + i] = v[i];
        opp[pos + i] = v[dim + i];
      }
      g.initial_conditions.emplace_back(std::move(ego), std::move(opp));
    }
  }
}

// `key=value` overrides use dotted section.key paths.
inline scenario::GameConfig load_config(const fs::path& path,
                                        const std::vector<std::string>& overrides = {}) {
  IniSections ini = parse_ini(read_file(path));
  auto s = ini.find("scenario");
  if (s == ini.end() || !s->second.count("name"))
    throw IoError("config: missing [scenario] name");
  scenario::GameConfig g = scenario::make_game(s->second.at("name"));
  g.formula_text.clear();
  apply_config_sections(g, ini);
  for (const auto& ov : overrides) {
    std::size_t eq = ov.find('=');
    std::size_t dot = ov.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw IoError("override must be section.key=value: " + ov);
    IniSections one;
    one[ov.substr(0, dot)][ov.substr(dot + 1, eq - dot - 1)] = ov.substr(eq + 1);
    apply_config_sections(g, one);
  }
  scenario::rebuild_game(g);
  return g;
}

inline json config_snapshot(const scenario::GameConfig& g) {
  json regions = json::object();
  for (const auto& [name, r] : g.regions) {
    json rj{{"kind", static_cast<int>(r.kind)}, {"radius", r.radius},
            {"center", r.center}, {"lo", r.lo}, {"hi", r.hi},
            {"axis", r.axis}, {"offset", r.offset}, {"sign", r.sign}};
    regions[name] = rj;
  }
  return json{{"scenario", g.scenario},
              {"formula", g.formula_text},
              {"T", g.T},
              {"dt", g.dt},
              {"d_min", g.d_min},
              {"regions", regions},
              {"optim",
               {{"epochs", g.optim.epochs},
                {"opponent_samples", g.optim.opp_samples},
                {"learning_rate", g.optim.learning_rate},
                {"tau", g.optim.tau},
                {"tau_anneal", g.optim.tau_anneal},
                {"hidden", g.optim.hidden},
                {"eval_episodes", g.optim.eval_episodes},
                {"exploit_epochs", g.optim.exploit_epochs}}}};
}

// --- SVG plots -------------------------------------------------------------------

// Top-down rendering of both agents' paths with region overlays.
inline std::string trajectory_svg(const sim::RolloutResult& r,
                                  const scenario::GameConfig& g) {
  const double size = 480.0, margin = 40.0;
  double lo = -1.6, hi = 1.6;
  auto sx = [&](double x) { return margin + (x - lo) / (hi - lo) * (size - 2 * margin); };
  auto sy = [&](double y) { return size - margin - (y - lo) / (hi - lo) * (size - 2 * margin); };

  int pos = g.scenario == "drones" ? 3 : 0;
  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size << "' height='"
      << size << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  for (const auto& [name, reg] : g.regions) {
    const char* color = name.find("goal") != std::string::npos ? "#7fbf7f"
                        : name.find("zone") != std::string::npos ? "#dddddd"
                                                                 : "#e07070";
    if (reg.kind == scenario::Region::Kind::Disc ||
        reg.kind == scenario::Region::Kind::Column) {
      out << "<circle class='region' cx='" << sx(reg.center[0]) << "' cy='"
          << sy(reg.center[1]) << "' r='" << reg.radius / (hi - lo) * (size - 2 * margin)
          << "' fill='" << color << "' fill-opacity='0.5'/>\n";
    } else if (reg.kind == scenario::Region::Kind::Box) {
      out << "<rect class='region' x='" << sx(reg.lo[0]) << "' y='" << sy(reg.hi[1])
          << "' width='" << (reg.hi[0] - reg.lo[0]) / (hi - lo) * (size - 2 * margin)
          << "' height='" << (reg.hi[1] - reg.lo[1]) / (hi - lo) * (size - 2 * margin)
          << "' fill='" << color << "' fill-opacity='0.5'/>\n";
    } else {
      double y = sy(reg.offset);
      out << "<line class='region' x1='" << margin << "' y1='" << y << "' x2='"
          << size - margin << "' y2='" << y
          << "' stroke='#999999' stroke-dasharray='6,4'/>\n";
    }
  }
  const char* path_colors[2] = {"#1f5fbf", "#bf4f1f"};
  for (int agent = 0; agent < 2; ++agent) {
    int off = agent == 0 ? g.slices.ego_offset : g.slices.opp_offset;
    out << "<path class='agent' fill='none' stroke='" << path_colors[agent]
        << "' stroke-width='2' d='";
    for (std::size_t t = 0; t < r.trace.states.size(); ++t) {
      out << (t == 0 ? "M" : "L") << sx(r.trace.states[t][off + pos]) << " "
          << sy(r.trace.states[t][off + pos + 1]) << " ";
    }
    out << "'/>\n";
  }
  // altitude-vs-time panel for drones
  if (g.scenario == "drones") {
    out << "<g transform='translate(0," << size << ")'>";
    out << "<svg width='" << size << "' height='160'>";
    out << "<rect width='100%' height='100%' fill='#fafafa'/>";
    for (int agent = 0; agent < 2; ++agent) {
      int off = agent == 0 ? g.slices.ego_offset : g.slices.opp_offset;
      out << "<path class='altitude' fill='none' stroke='" << path_colors[agent]
          << "' d='";
      for (std::size_t t = 0; t < r.trace.states.size(); ++t) {
        double x = margin + static_cast<double>(t) /
                                std::max<std::size_t>(1, r.trace.states.size() - 1) *
                                (size - 2 * margin);
        double z = r.trace.states[t][off + 5];
        out << (t == 0 ? "M" : "L") << x << " " << 150.0 - z * 40.0 << " ";
      }
      out << "'/>";
    }
    out << "</svg></g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

// Exploitability-vs-iteration curve (one line, optional per-point spread).
inline std::string curve_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                             const std::string& x_label, const std::string& y_label) {
  const double w = 520.0, h = 340.0, m = 50.0;
  double xmin = xs.front(), xmax = xs.back();
  double ymin = 0.0, ymax = 1e-9;
  for (double y : ys) ymax = std::max(ymax, y);
  ymax *= 1.1;
  auto px = [&](double x) {
    return m + (x - xmin) / std::max(1e-12, xmax - xmin) * (w - 2 * m);
  };
  auto py = [&](double y) { return h - m - (y - ymin) / (ymax - ymin) * (h - 2 * m); };
  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
  out << "<line x1='" << m << "' y1='" << h - m << "' x2='" << w - m << "' y2='"
      << h - m << "' stroke='black'/>\n";
  out << "<line x1='" << m << "' y1='" << m << "' x2='" << m << "' y2='" << h - m
      << "' stroke='black'/>\n";
  out << "<text x='" << w / 2 << "' y='" << h - 10 << "' text-anchor='middle'>"
      << x_label << "</text>\n";
  out << "<text x='14' y='" << h / 2 << "' text-anchor='middle' transform='rotate(-90 14 "
      << h / 2 << ")'>" << y_label << "</text>\n";
  out << "<path fill='none' stroke='#1f5fbf' stroke-width='2' d='";
  for (std::size_t i = 0; i < xs.size(); ++i)
    out << (i == 0 ? "M" : "L") << px(xs[i]) << " " << py(ys[i]) << " ";
  out << "'/>\n";
  for (std::size_t i = 0; i < xs.size(); ++i)
    out << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i])
        << "' r='3' fill='#1f5fbf'/>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace stlgame::io
