#include "rsdrl/checkpoint.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <ios>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace rsdrl {

namespace {

constexpr const char* kMagic = "rsdrl-checkpoint";

// Reads one `key ...` line and returns the rest of it as a stream.
std::istringstream expect_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("checkpoint: missing '" + key + "' line");
  std::istringstream fields(line);
  std::string found;
  fields >> found;
  if (found != key) {
    throw CheckpointError("checkpoint: expected '" + key + "', found '" + found + "'");
  }
  return fields;
}

template <typename T>
T read_field(std::istringstream& fields, const std::string& key) {
  T value{};
  if (!(fields >> value)) throw CheckpointError("checkpoint: bad value for '" + key + "'");
  return value;
}

std::string read_word(std::istringstream& fields, const std::string& key) {
  return read_field<std::string>(fields, key);
}

double parse_double(const std::string& token) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE) {
    throw CheckpointError("checkpoint: bad number '" + token + "'");
  }
  return v;
}

// Wraps parse errors from the enum helpers.
template <typename F>
auto parse_enum(F&& parse, const std::string& word) {
  try {
    return parse(word);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace

namespace {

template <typename Net>
Net load_into(Net net, const std::vector<double>& params) {
  if (net.params().size() != params.size()) {
    throw CheckpointError("checkpoint: parameter count does not match the architecture");
  }
  std::copy(params.begin(), params.end(), net.params().begin());
  return net;
}

}  // namespace

CdfNetwork Checkpoint::cdf_network() const {
  if (agent != AgentKind::RiskSensitive) throw CheckpointError("checkpoint: not a distributional agent");
  return load_into(CdfNetwork(grid, hidden, activation), params);
}

QNetwork Checkpoint::q_network() const {
  if (agent != AgentKind::Dqn) throw CheckpointError("checkpoint: not a dqn agent");
  return load_into(QNetwork(hidden, activation), params);
}

PolicySnapshot Checkpoint::policy() const {
  if (agent == AgentKind::Dqn) return snapshot_policy(q_network());
  return snapshot_policy(cdf_network(), risk, criterion);
}

Checkpoint make_checkpoint(const Trainer& trainer) {
  const AgentConfig& cfg = trainer.config();
  Checkpoint c;
  c.agent = cfg.kind;
  c.env = trainer.layout().kind;
  c.hidden = cfg.hidden;
  c.activation = cfg.activation;
  c.grid = cfg.grid;
  c.risk = cfg.risk;
  c.criterion = cfg.criterion;
  c.seed = cfg.seed;
  c.step = trainer.step();
  c.params.assign(trainer.params().begin(), trainer.params().end());
  return c;
}

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  out << kMagic << ' ' << Checkpoint::kVersion << '\n';
  out << "agent " << to_string(c.agent) << '\n';
  out << "env " << to_string(c.env) << '\n';
  out << "hidden";
  for (int h : c.hidden) out << ' ' << h;
  out << '\n';
  out << "activation " << to_string(c.activation) << '\n';
  out << std::hexfloat;
  out << "grid " << c.grid.z_min << ' ' << c.grid.z_max << ' ' << c.grid.n_z << '\n';
  out << "risk " << to_string(c.risk.measure) << ' ' << c.risk.rho << ' '
      << c.risk.alpha << '\n';
  out << std::defaultfloat;
  out << "criterion " << to_string(c.criterion) << '\n';
  out << "seed " << c.seed << '\n';
  out << "step " << c.step << '\n';
  out << "params " << c.params.size() << '\n';
  out << std::hexfloat;
  for (double p : c.params) out << p << '\n';
  out << std::defaultfloat;
  if (!out) throw CheckpointError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint c;
  {
    auto f = expect_line(in, kMagic);
    const int version = read_field<int>(f, "version");
    if (version != Checkpoint::kVersion) {
      throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    }
  }
  {
    auto f = expect_line(in, "agent");
    c.agent = parse_enum(parse_agent_kind, read_word(f, "agent"));
  }
  {
    auto f = expect_line(in, "env");
    c.env = parse_enum(parse_env_kind, read_word(f, "env"));
  }
  {
    auto f = expect_line(in, "hidden");
    c.hidden.clear();
    int h = 0;
    while (f >> h) {
      if (h <= 0) throw CheckpointError("checkpoint: hidden sizes must be positive");
      c.hidden.push_back(h);
    }
    if (c.hidden.empty()) throw CheckpointError("checkpoint: no hidden layers");
  }
  {
    auto f = expect_line(in, "activation");
    c.activation = parse_enum(parse_activation, read_word(f, "activation"));
  }
  {
    auto f = expect_line(in, "grid");
    c.grid.z_min = parse_double(read_word(f, "grid"));
    c.grid.z_max = parse_double(read_word(f, "grid"));
    c.grid.n_z = read_field<int>(f, "grid");
    try {
      c.grid.validate();
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
  }
  {
    auto f = expect_line(in, "risk");
    c.risk.measure = parse_enum(parse_risk_measure, read_word(f, "risk"));
    c.risk.rho = parse_double(read_word(f, "risk"));
    c.risk.alpha = parse_double(read_word(f, "risk"));
    try {
      c.risk.validate();
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
  }
  {
    auto f = expect_line(in, "criterion");
    c.criterion = parse_enum(parse_action_criterion, read_word(f, "criterion"));
  }
  {
    auto f = expect_line(in, "seed");
    c.seed = read_field<std::uint64_t>(f, "seed");
  }
  {
    auto f = expect_line(in, "step");
    c.step = read_field<long>(f, "step");
  }
  std::size_t n = 0;
  {
    auto f = expect_line(in, "params");
    n = read_field<std::size_t>(f, "params");
  }
  c.params.reserve(n);
  std::string token;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> token)) throw CheckpointError("checkpoint: truncated parameter list");
    c.params.push_back(parse_double(token));
  }
  if (in >> token) throw CheckpointError("checkpoint: trailing data after parameters");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace rsdrl
