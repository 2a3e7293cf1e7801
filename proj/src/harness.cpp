#include "rsdrl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "rsdrl/random.hpp"

namespace rsdrl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name(key) + ": wrong type");
    }
  }

  // Reads a string and maps it through one of the enum parsers.
  template <typename E, typename Parse>
  void read_enum(const char* key, E& out, Parse parse) {
    std::string text;
    if (!j_.contains(key)) return;
    read(key, text);
    try {
      out = parse(text);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(name(key) + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + name(item.key().c_str()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config " : "'" + path_ + "' "; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void rethrow_as_config(F&& check) {
  try {
    check();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

template <typename T>
std::optional<T> parse_optional(const std::string& field, const std::string& what) {
  if (field.empty()) return std::nullopt;
  T v{};
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw std::runtime_error("metrics csv: bad " + what + " '" + field + "'");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::ofstream open_for_writing(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

ordered_json risk_to_json(const RiskParams& p) {
  return {{"measure", std::string(to_string(p.measure))}, {"rho", p.rho}, {"alpha", p.alpha}};
}

void read_risk(ObjectReader& r, RiskParams& p) {
  r.read_enum("measure", p.measure, parse_risk_measure);
  r.read("rho", p.rho);
  r.read("alpha", p.alpha);
  r.finish();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ConfigError("seeds: duplicates are not allowed");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every: must be non-negative");
  if (final_eval_episodes < 1) throw ConfigError("final_eval_episodes: must be at least 1");
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
  rethrow_as_config([&] { agent.validate(); });
  rethrow_as_config([&] { constraint.validate(); });
}

ordered_json to_json(const ExperimentConfig& c) {
  const AgentConfig& a = c.agent;
  ordered_json agent = {
      {"kind", std::string(to_string(a.kind))},
      {"criterion", std::string(to_string(a.criterion))},
      {"hidden", a.hidden},
      {"activation", std::string(to_string(a.activation))},
      {"learning_rate", a.learning_rate},
      {"adam_epsilon", a.adam_epsilon},
      {"clip_mode", std::string(to_string(a.clip_mode))},
      {"clip_bound", a.clip_bound},
      {"replay_capacity", a.replay_capacity},
      {"batch_size", a.batch_size},
      {"target_update", a.target_update},
      {"warmup", a.warmup},
      {"grid", {{"z_min", a.grid.z_min}, {"z_max", a.grid.z_max}, {"n_z", a.grid.n_z}}},
      {"z_sampling", std::string(to_string(a.z_sampling))},
      {"cramer_form", std::string(to_string(a.cramer_form))},
      {"epsilon_initial", a.epsilon_initial},
      {"epsilon_final", a.epsilon_final},
      {"epsilon_decay", a.epsilon_decay},
      {"epsilon_schedule", std::string(to_string(a.epsilon_schedule))},
      {"episode_cap", a.episode_cap},
      {"total_steps", a.total_steps},
      {"eval_every", a.eval_every},
      {"eval_episodes", a.eval_episodes},
  };
  return {
      {"env", std::string(to_string(c.env))},
      {"seeds", c.seeds},
      {"risk", risk_to_json(a.risk)},
      {"agent", agent},
      {"checkpoint_every", c.checkpoint_every},
      {"final_eval_episodes", c.final_eval_episodes},
      {"constraint", {{"r_min", c.constraint.r_min}, {"eps_threshold", c.constraint.eps_threshold}}},
      {"output_dir", c.output_dir.generic_string()},
  };
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  ObjectReader top(j, "");
  top.read_enum("env", c.env, parse_env_kind);
  top.read("seeds", c.seeds);
  top.read("checkpoint_every", c.checkpoint_every);
  top.read("final_eval_episodes", c.final_eval_episodes);
  std::string out_dir = c.output_dir.string();
  top.read("output_dir", out_dir);
  c.output_dir = out_dir;

  if (const json* risk = top.child("risk")) {
    ObjectReader r(*risk, "risk");
    read_risk(r, c.agent.risk);
  }
  if (const json* cons = top.child("constraint")) {
    ObjectReader r(*cons, "constraint");
    r.read("r_min", c.constraint.r_min);
    r.read("eps_threshold", c.constraint.eps_threshold);
    r.finish();
  }
  if (const json* agent = top.child("agent")) {
    AgentConfig& a = c.agent;
    ObjectReader r(*agent, "agent");
    r.read_enum("kind", a.kind, parse_agent_kind);
    r.read_enum("criterion", a.criterion, parse_action_criterion);
    r.read("hidden", a.hidden);
    r.read_enum("activation", a.activation, parse_activation);
    r.read("learning_rate", a.learning_rate);
    r.read("adam_epsilon", a.adam_epsilon);
    r.read_enum("clip_mode", a.clip_mode, parse_clip_mode);
    r.read("clip_bound", a.clip_bound);
    r.read("replay_capacity", a.replay_capacity);
    r.read("batch_size", a.batch_size);
    r.read("target_update", a.target_update);
    r.read("warmup", a.warmup);
    if (const json* grid = r.child("grid")) {
      ObjectReader g(*grid, "agent.grid");
      g.read("z_min", a.grid.z_min);
      g.read("z_max", a.grid.z_max);
      g.read("n_z", a.grid.n_z);
      g.finish();
    }
    r.read_enum("z_sampling", a.z_sampling, parse_z_sampling);
    r.read_enum("cramer_form", a.cramer_form, parse_cramer_form);
    r.read("epsilon_initial", a.epsilon_initial);
    r.read("epsilon_final", a.epsilon_final);
    r.read("epsilon_decay", a.epsilon_decay);
    r.read_enum("epsilon_schedule", a.epsilon_schedule, parse_epsilon_schedule);
    r.read("episode_cap", a.episode_cap);
    r.read("total_steps", a.total_steps);
    r.read("eval_every", a.eval_every);
    r.read("eval_episodes", a.eval_episodes);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

fs::path run_directory(const ExperimentConfig& c, std::uint64_t seed) {
  return c.output_dir / std::string(to_string(c.env)) / std::string(to_string(c.agent.kind)) /
         ("seed-" + std::to_string(seed));
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_row(const StepMetrics& m) {
  std::string row = std::to_string(m.step);
  row += ',';
  row += to_string(m.action);
  row += ',';
  if (m.loss) row += format_double(*m.loss);
  row += ',';
  row += format_double(m.epsilon);
  row += ',';
  if (m.episode_return) row += format_double(*m.episode_return);
  row += ',';
  if (m.episode_length) row += std::to_string(*m.episode_length);
  row += ',';
  if (m.rs) row += format_double(*m.rs);
  return row;
}

std::vector<MetricsRecord> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != split_csv(kMetricsHeader)) {
    throw std::runtime_error(path.string() + ": missing metrics header");
  }
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw std::runtime_error(path.string() + ": expected 7 fields: " + line);
    MetricsRecord r;
    r.step = parse_optional<long>(f[0], "step").value_or(0);
    r.loss = parse_optional<double>(f[2], "loss");
    r.epsilon = parse_optional<double>(f[3], "epsilon").value_or(0.0);
    r.episode_return = parse_optional<double>(f[4], "episode_return");
    r.episode_length = parse_optional<int>(f[5], "episode_length");
    r.rs = parse_optional<double>(f[6], "rs");
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training runs

ordered_json to_json(const EvalReport& r) {
  return {
      {"episodes", r.episodes},
      {"mean", r.mean},
      {"mean_half_width", r.mean_half_width},
      {"risk", r.risk},
      {"utility", r.utility},
      {"mean_rs", r.mean_rs},
      {"rs_half_width", r.rs_half_width},
      {"constraint_probability", r.constraint_probability},
      {"constraint_satisfied", r.constraint_satisfied},
      {"clipped", r.clipped},
      {"risk_params", risk_to_json(r.risk_params)},
      {"constraint", {{"r_min", r.constraint.r_min}, {"eps_threshold", r.constraint.eps_threshold}}},
  };
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    r.episodes = j.at("episodes").get<long>();
    r.mean = j.at("mean").get<double>();
    r.mean_half_width = j.at("mean_half_width").get<double>();
    r.risk = j.at("risk").get<double>();
    r.utility = j.at("utility").get<double>();
    r.mean_rs = j.at("mean_rs").get<double>();
    r.rs_half_width = j.at("rs_half_width").get<double>();
    r.constraint_probability = j.at("constraint_probability").get<double>();
    r.constraint_satisfied = j.at("constraint_satisfied").get<bool>();
    r.clipped = j.at("clipped").get<std::size_t>();
    const json& p = j.at("risk_params");
    r.risk_params.measure = parse_risk_measure(p.at("measure").get<std::string>());
    r.risk_params.rho = p.at("rho").get<double>();
    r.risk_params.alpha = p.at("alpha").get<double>();
    const json& c = j.at("constraint");
    r.constraint.r_min = c.at("r_min").get<double>();
    r.constraint.eps_threshold = c.at("eps_threshold").get<double>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("eval report: ") + e.what());
  }
  return r;
}

RunArtifact run_seed(const ExperimentConfig& c, std::uint64_t seed, std::ostream* progress) {
  c.validate();
  AgentConfig cfg = c.agent;
  cfg.seed = seed;

  RunArtifact art;
  art.seed = seed;
  art.directory = run_directory(c, seed);
  std::error_code ec;
  fs::create_directories(art.directory, ec);
  if (ec) {
    throw std::runtime_error("cannot create output directory " + art.directory.string() + ": " +
                             ec.message());
  }

  ExperimentConfig echo = c;
  echo.seeds = {seed};
  art.config_echo = art.directory / "config.json";
  {
    auto out = open_for_writing(art.config_echo);
    out << to_json(echo).dump(2) << '\n';
  }

  const EnvLayout& layout = layout_for(c.env);
  auto trainer = make_trainer(cfg, layout);

  art.metrics_csv = art.directory / "metrics.csv";
  auto csv = open_for_writing(art.metrics_csv);
  csv << kMetricsHeader << '\n';

  auto save = [&](const std::string& name) {
    const fs::path p = art.directory / name;
    save_checkpoint(p, make_checkpoint(*trainer));
    art.checkpoints.push_back(p);
  };

  for (long i = 0; i < cfg.total_steps; ++i) {
    const StepMetrics m = trainer->train_step();
    csv << metrics_row(m) << '\n';
    if (c.checkpoint_every > 0 && m.step % c.checkpoint_every == 0) {
      save("checkpoint-" + std::to_string(m.step) + ".txt");
    }
    if (progress && m.rs) {
      *progress << to_string(c.env) << ' ' << to_string(cfg.kind) << " seed " << seed << " step "
                << m.step << " rs " << *m.rs << '\n';
    }
  }
  csv.close();
  if (!csv) throw std::runtime_error("failed writing " + art.metrics_csv.string());
  if (art.checkpoints.empty() || c.checkpoint_every == 0 ||
      cfg.total_steps % c.checkpoint_every != 0) {
    save("checkpoint-" + std::to_string(trainer->step()) + ".txt");
  }

  const PolicySnapshot snap = trainer->snapshot();
  art.policy = snap.table();
  art.report = mc_evaluate(art.policy, layout, c.final_eval_episodes, cfg.risk, c.constraint,
                           derive_seed(seed, StreamId::Evaluation, 0), cfg.grid);

  ordered_json policy = ordered_json::array();
  for (MoveAction a : art.policy) policy.push_back(std::string(to_string(a)));
  ordered_json rep = {
      {"env", std::string(to_string(c.env))},
      {"agent", std::string(to_string(cfg.kind))},
      {"seed", seed},
      {"steps", trainer->step()},
      {"policy", policy},
      {"report", to_json(art.report)},
  };
  art.report_json = art.directory / "report.json";
  auto out = open_for_writing(art.report_json);
  out << rep.dump(2) << '\n';
  return art;
}

std::vector<RunArtifact> cmd_train(const ExperimentConfig& c, std::ostream* progress) {
  c.validate();
  std::vector<RunArtifact> out;
  for (std::uint64_t seed : c.seeds) out.push_back(run_seed(c, seed, progress));
  return out;
}

// ---------------------------------------------------------------------------
// Oracle

void write_oracle_csv(std::ostream& out, const OracleResult& r, const RiskParams& p) {
  if (!r.converged) {
    out << "# warning: not converged after " << r.iterations << " iterations (last change "
        << format_double(r.final_change) << ")\n";
  }
  out << kOracleHeader << '\n';
  for (int i = 0; i < kNumStates; ++i) {
    const GridState s = GridState::from_index(i);
    for (MoveAction a : kAllActions) {
      const ReturnDistribution& d = r.table.at(s, a);
      out << s.x << ',' << s.y << ',' << to_string(a) << ',' << format_double(expectation(d))
          << ',' << format_double(value_at_risk(d, p.rho)) << ','
          << format_double(conditional_value_at_risk(d, p.rho).value) << ','
          << format_double(utility(d, p)) << ','
          << (r.policy[static_cast<std::size_t>(i)] == a ? 1 : 0) << '\n';
    }
  }
}

std::string policy_map(const EnvLayout& layout, const PolicyTable& policy) {
  std::string out;
  for (int y = kGridSize - 1; y >= 0; --y) {
    for (int x = 0; x < kGridSize; ++x) {
      const GridState s{x, y};
      std::string cell;
      if (continue_probability(layout, s) <= 0.0) {
        cell = s == layout.green_cell ? "G" : "O";
      } else {
        switch (policy[static_cast<std::size_t>(s.index())]) {
          case MoveAction::Right: cell = ">"; break;
          case MoveAction::Down: cell = "v"; break;
          case MoveAction::Left: cell = "<"; break;
          case MoveAction::Up: cell = "^"; break;
        }
        if (s == layout.start) cell += "*";
      }
      out += cell;
      if (x + 1 < kGridSize) out += std::string(3 - cell.size(), ' ');
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

namespace {

AgentSummary collect_agent(const fs::path& dir, const RiskParams& fallback) {
  AgentSummary s;
  std::vector<std::pair<std::uint64_t, fs::path>> runs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("seed-", 0) != 0) continue;
    runs.emplace_back(std::stoull(name.substr(5)), entry.path());
  }
  std::sort(runs.begin(), runs.end());
  for (const auto& [seed, path] : runs) {
    const fs::path report = path / "report.json";
    if (!fs::exists(report)) throw std::runtime_error("missing run: " + report.string());
    s.seeds.push_back(seed);
    s.per_seed.push_back(eval_report_from_json(read_json_file(report).at("report")));
  }
  if (s.per_seed.empty()) throw std::runtime_error("missing runs: no seed-* directory in " + dir.string());
  const double n = static_cast<double>(s.per_seed.size());
  for (const auto& r : s.per_seed) {
    s.expectation += r.mean / n;
    s.risk += r.risk / n;
    s.mean_rs += r.mean_rs / n;
  }
  const RiskParams& p = s.per_seed.empty() ? fallback : s.per_seed.front().risk_params;
  s.utility = p.alpha * s.expectation + (1.0 - p.alpha) * s.risk;
  return s;
}

}  // namespace

std::vector<ReportRow> collect_report(const fs::path& root, long oracle_episodes) {
  std::vector<ReportRow> rows;
  std::vector<std::string> missing;
  for (EnvKind env : kAllEnvKinds) {
    const fs::path env_dir = root / std::string(to_string(env));
    if (!fs::exists(env_dir)) continue;
    const fs::path dqn_dir = env_dir / "dqn";
    const fs::path rs_dir = env_dir / "rs";
    if (!fs::exists(dqn_dir)) missing.push_back(dqn_dir.string());
    if (!fs::exists(rs_dir)) missing.push_back(rs_dir.string());
    if (!fs::exists(dqn_dir) || !fs::exists(rs_dir)) continue;

    ReportRow row;
    row.env = env;
    row.rs = collect_agent(rs_dir, RiskParams{});
    row.risk = row.rs.per_seed.front().risk_params;
    row.dqn = collect_agent(dqn_dir, row.risk);
    const auto oracle = distributional_value_iteration(env, row.risk);
    row.oracle = mc_evaluate(oracle.policy, layout_for(env), oracle_episodes, row.risk,
                             row.rs.per_seed.front().constraint, 0);
    rows.push_back(std::move(row));
  }
  if (!missing.empty()) {
    std::string msg = "missing runs:";
    for (const auto& m : missing) msg += " " + m;
    throw std::runtime_error(msg);
  }
  if (rows.empty()) throw std::runtime_error("missing runs: no environment directory under " + root.string());
  return rows;
}

void print_report(std::ostream& out, const std::vector<ReportRow>& rows) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.3f", v);
    return std::string(buf);
  };
  out << "                   |           DQN            |            RS            |"
         "          oracle\n";
  out << "environment        |     E        R        U  |     E        R        U  |"
         "     E        R        U\n";
  for (const auto& r : rows) {
    std::string env(to_string(r.env));
    env.resize(18, ' ');
    out << env << " |" << num(r.dqn.expectation) << ' ' << num(r.dqn.risk) << ' '
        << num(r.dqn.utility) << " |" << num(r.rs.expectation) << ' ' << num(r.rs.risk) << ' '
        << num(r.rs.utility) << " |" << num(r.oracle.mean) << ' ' << num(r.oracle.risk) << ' '
        << num(r.oracle.utility) << '\n';
  }
  out << "\nper seed (E, R, U, R_s):\n";
  for (const auto& r : rows) {
    for (const auto* agent : {&r.dqn, &r.rs}) {
      const char* name = agent == &r.dqn ? "dqn" : "rs";
      for (std::size_t i = 0; i < agent->per_seed.size(); ++i) {
        const auto& e = agent->per_seed[i];
        out << "  " << to_string(r.env) << ' ' << name << " seed " << agent->seeds[i] << ':'
            << num(e.mean) << num(e.risk) << num(e.utility) << num(e.mean_rs) << '\n';
      }
      out << "  " << to_string(r.env) << ' ' << name << " pooled R_s:" << num(agent->mean_rs)
          << '\n';
    }
  }
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "env,alpha,rho,measure,dqn_e,dqn_r,dqn_u,dqn_rs,rs_e,rs_r,rs_u,rs_rs,oracle_e,oracle_r,"
         "oracle_u\n";
  for (const auto& r : rows) {
    out << to_string(r.env) << ',' << format_double(r.risk.alpha) << ','
        << format_double(r.risk.rho) << ',' << to_string(r.risk.measure);
    for (double v : {r.dqn.expectation, r.dqn.risk, r.dqn.utility, r.dqn.mean_rs,
                     r.rs.expectation, r.rs.risk, r.rs.utility, r.rs.mean_rs, r.oracle.mean,
                     r.oracle.risk, r.oracle.utility}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Plots

namespace {

// Minimal SVG canvas with data-to-pixel mapping per panel.
class Svg {
 public:
  Svg(double width, double height) : width_(width), height_(height) {}

  struct Panel {
    double left, top, width, height;
    double x0, x1, y0, y1;
    double px(double x) const { return left + (x - x0) / (x1 - x0) * width; }
    double py(double y) const { return top + height - (y - y0) / (y1 - y0) * height; }
  };

  void axes(const Panel& p, const std::string& title, const std::string& xlabel, int xticks,
            int yticks) {
    body_ << "<rect x='" << p.left << "' y='" << p.top << "' width='" << p.width
          << "' height='" << p.height << "' fill='none' stroke='#444'/>\n";
    for (int i = 0; i <= xticks; ++i) {
      const double x = p.x0 + (p.x1 - p.x0) * i / xticks;
      text(p.px(x), p.top + p.height + 14, label(x), "middle", 10);
    }
    for (int i = 0; i <= yticks; ++i) {
      const double y = p.y0 + (p.y1 - p.y0) * i / yticks;
      line(p.left, p.py(y), p.left + p.width, p.py(y), "#ddd", 0.5);
      text(p.left - 4, p.py(y) + 3, label(y), "end", 10);
    }
    text(p.left + p.width / 2, p.top - 6, title, "middle", 12);
    text(p.left + p.width / 2, p.top + p.height + 28, xlabel, "middle", 10);
  }

  void polyline(const Panel& p, const std::vector<std::pair<double, double>>& pts,
                const std::string& color, double width, double opacity = 1.0) {
    if (pts.empty()) return;
    body_ << "<polyline fill='none' stroke='" << color << "' stroke-width='" << width
          << "' stroke-opacity='" << opacity << "' points='";
    for (const auto& [x, y] : pts) body_ << p.px(x) << ',' << p.py(y) << ' ';
    body_ << "'/>\n";
  }

  void marker(const Panel& p, double x, const std::string& color, const std::string& name) {
    if (x < p.x0 || x > p.x1) return;
    body_ << "<line x1='" << p.px(x) << "' y1='" << p.top << "' x2='" << p.px(x) << "' y2='"
          << p.top + p.height << "' stroke='" << color << "' stroke-dasharray='4,3'/>\n";
    text(p.px(x) + 2, p.top + 10, name, "start", 9, color);
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color, double w) {
    body_ << "<line x1='" << x1 << "' y1='" << y1 << "' x2='" << x2 << "' y2='" << y2
          << "' stroke='" << color << "' stroke-width='" << w << "'/>\n";
  }

  void text(double x, double y, const std::string& s, const char* anchor, int size,
            const std::string& color = "#000") {
    body_ << "<text x='" << x << "' y='" << y << "' font-size='" << size
          << "' font-family='sans-serif' text-anchor='" << anchor << "' fill='" << color << "'>"
          << s << "</text>\n";
  }

  void save(const fs::path& path) const {
    auto out = open_for_writing(path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width_ << "' height='" << height_
        << "' viewBox='0 0 " << width_ << ' ' << height_ << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n"
        << body_.str() << "</svg>\n";
  }

 private:
  static std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", std::abs(v) < 1e-12 ? 0.0 : v);
    return buf;
  }

  double width_, height_;
  std::ostringstream body_;
};

}  // namespace

std::vector<CurvePoint> risk_sensitivity_curve(std::span<const std::pair<long, PolicyTable>> policies,
                                               const EnvLayout& layout, long n_eval,
                                               std::uint64_t seed) {
  std::vector<CurvePoint> out;
  out.reserve(policies.size());
  for (const auto& [step, table] : policies) {
    out.push_back({step, mean_risk_sensitivity(table, layout, n_eval, seed)});
  }
  return out;
}

std::vector<CurvePoint> risk_sensitivity_curve(const fs::path& run_dir, long n_eval,
                                               std::uint64_t seed) {
  std::vector<std::pair<long, PolicyTable>> policies;
  std::optional<EnvKind> env;
  if (fs::is_directory(run_dir)) {
    for (const auto& entry : fs::directory_iterator(run_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("checkpoint-", 0) != 0 || entry.path().extension() != ".txt") continue;
      const Checkpoint ckpt = load_checkpoint(entry.path());
      if (env && *env != ckpt.env) {
        throw std::runtime_error("checkpoints in " + run_dir.string() + " mix environments");
      }
      env = ckpt.env;
      policies.emplace_back(ckpt.step, ckpt.policy().table());
    }
  }
  if (!env) throw std::runtime_error("no checkpoints in " + run_dir.string());
  std::sort(policies.begin(), policies.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return risk_sensitivity_curve(policies, layout_for(*env), n_eval, seed);
}

std::vector<fs::path> plot_rs_curve(const fs::path& root, EnvKind env, const fs::path& out_dir) {
  const fs::path env_dir = root / std::string(to_string(env));
  struct Series {
    std::string agent;
    std::string seed;
    std::vector<std::pair<double, double>> points;
  };
  std::vector<Series> series;
  for (const char* agent : {"dqn", "rs"}) {
    const fs::path dir = env_dir / agent;
    if (!fs::exists(dir)) continue;
    std::vector<fs::path> runs;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory() && e.path().filename().string().rfind("seed-", 0) == 0) {
        runs.push_back(e.path());
      }
    }
    std::sort(runs.begin(), runs.end());
    std::map<long, std::pair<double, int>> pooled;
    for (const auto& run : runs) {
      Series s{agent, run.filename().string().substr(5), {}};
      for (const auto& r : read_metrics_csv(run / "metrics.csv")) {
        if (!r.rs) continue;
        s.points.emplace_back(static_cast<double>(r.step), *r.rs);
        auto& acc = pooled[r.step];
        acc.first += *r.rs;
        acc.second += 1;
      }
      series.push_back(std::move(s));
    }
    if (runs.size() > 1) {
      Series mean{agent, "mean", {}};
      for (const auto& [step, acc] : pooled) {
        mean.points.emplace_back(static_cast<double>(step), acc.first / acc.second);
      }
      series.push_back(std::move(mean));
    }
  }
  if (series.empty()) throw std::runtime_error("no runs with metrics under " + env_dir.string());

  fs::create_directories(out_dir);
  const std::string stem = "rs_curve-" + std::string(to_string(env));
  const fs::path csv_path = out_dir / (stem + ".csv");
  {
    auto csv = open_for_writing(csv_path);
    csv << "agent,seed,step,rs\n";
    for (const auto& s : series) {
      for (const auto& [x, y] : s.points) {
        csv << s.agent << ',' << s.seed << ',' << static_cast<long>(x) << ',' << format_double(y)
            << '\n';
      }
    }
  }

  double x_max = 1.0;
  for (const auto& s : series) {
    if (!s.points.empty()) x_max = std::max(x_max, s.points.back().first);
  }
  Svg svg(720, 420);
  const Svg::Panel panel{70, 40, 600, 320, 0.0, x_max, -1.0, 1.0};
  svg.axes(panel, "R_s during training, " + std::string(to_string(env)), "training step", 5, 4);
  for (const auto& s : series) {
    const std::string color = s.agent == "rs" ? "#d62728" : "#1f77b4";
    const bool mean = s.seed == "mean";
    svg.polyline(panel, s.points, color, mean ? 2.5 : 1.0, mean ? 1.0 : 0.35);
  }
  svg.text(panel.left + 10, panel.top + 18, "RS", "start", 12, "#d62728");
  svg.text(panel.left + 40, panel.top + 18, "DQN", "start", 12, "#1f77b4");
  const fs::path svg_path = out_dir / (stem + ".svg");
  svg.save(svg_path);
  return {svg_path, csv_path};
}

std::vector<fs::path> plot_distributions(const Checkpoint& ckpt, GridState state,
                                         const fs::path& out_dir) {
  if (ckpt.agent != AgentKind::RiskSensitive) {
    throw std::invalid_argument("distribution plots need a distributional (rs) checkpoint");
  }
  if (state.x < 0 || state.x >= kGridSize || state.y < 0 || state.y >= kGridSize) {
    throw std::invalid_argument("unknown state coordinates");
  }
  const CdfNetwork net = ckpt.cdf_network();
  const auto oracle = distributional_value_iteration(ckpt.env, ckpt.risk, ckpt.grid);
  const SupportGrid& grid = ckpt.grid;
  const RiskParams& p = ckpt.risk;

  fs::create_directories(out_dir);
  const std::string stem =
      "distributions-" + std::to_string(state.x) + "-" + std::to_string(state.y);
  const fs::path csv_path = out_dir / (stem + ".csv");
  const fs::path marker_path = out_dir / (stem + "-markers.csv");
  auto csv = open_for_writing(csv_path);
  auto markers = open_for_writing(marker_path);
  csv << "action,z,cdf,pdf,oracle_cdf\n";
  markers << "action,q,risk,utility,oracle_q,oracle_risk,oracle_utility\n";

  Svg svg(4 * 260 + 40, 520);
  const double dz = grid.spacing();
  for (MoveAction a : kAllActions) {
    const int col = to_index(a);
    const ReturnDistribution d = net.predict_distribution(state, a, grid);
    const ReturnDistribution& o = oracle.table.at(state, a);
    const auto masses = d.masses();

    std::vector<std::pair<double, double>> cdf_pts, oracle_pts, pdf_pts;
    double pdf_max = 0.0;
    for (int k = 0; k < grid.n_z; ++k) {
      const double z = grid.point(k);
      const double pdf = masses[static_cast<std::size_t>(k)] / dz;
      cdf_pts.emplace_back(z, d[k]);
      oracle_pts.emplace_back(z, o[k]);
      pdf_pts.emplace_back(grid.mass_location(k), pdf);
      pdf_max = std::max(pdf_max, pdf);
      csv << to_string(a) << ',' << format_double(z) << ',' << format_double(d[k]) << ','
          << format_double(pdf) << ',' << format_double(o[k]) << '\n';
    }
    const double q = expectation(d), r = risk(d, p), u = utility(d, p);
    markers << to_string(a) << ',' << format_double(q) << ',' << format_double(r) << ','
            << format_double(u) << ',' << format_double(expectation(o)) << ','
            << format_double(risk(o, p)) << ',' << format_double(utility(o, p)) << '\n';

    const double left = 50 + col * 260;
    const Svg::Panel top{left, 40, 210, 190, grid.z_min, grid.z_max, 0.0, 1.0};
    const Svg::Panel bottom{left, 290, 210, 190, grid.z_min, grid.z_max, 0.0,
                            pdf_max > 0 ? pdf_max * 1.1 : 1.0};
    const std::string name(to_string(a));
    svg.axes(top, name + " CDF", "return z", 4, 4);
    svg.axes(bottom, name + " PDF", "return z", 4, 2);
    svg.polyline(top, oracle_pts, "#999", 1.5);
    svg.polyline(top, cdf_pts, "#1f77b4", 1.5);
    svg.polyline(bottom, pdf_pts, "#1f77b4", 1.2);
    for (const auto* panel : {&top, &bottom}) {
      svg.marker(*panel, q, "#2ca02c", "Q");
      svg.marker(*panel, r, "#d62728", "R");
      svg.marker(*panel, u, "#9467bd", "U");
    }
  }
  svg.text(50, 16,
           "state (" + std::to_string(state.x) + "," + std::to_string(state.y) +
               "), blue: learnt, grey: oracle",
           "start", 12);
  const fs::path svg_path = out_dir / (stem + ".svg");
  svg.save(svg_path);
  return {svg_path, csv_path, marker_path};
}

GridState parse_state(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("state must be 'x,y': " + text);
  std::optional<int> x, y;
  try {
    x = parse_optional<int>(text.substr(0, comma), "x");
    y = parse_optional<int>(text.substr(comma + 1), "y");
  } catch (const std::runtime_error&) {
    throw std::invalid_argument("state must be 'x,y': " + text);
  }
  if (!x || !y || *x < 0 || *x >= kGridSize || *y < 0 || *y >= kGridSize) {
    throw std::invalid_argument("unknown state coordinates: " + text);
  }
  return {*x, *y};
}

}  // namespace rsdrl
